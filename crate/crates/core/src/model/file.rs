//! Model specification files.
//!
//! A model file is TOML with the keys below; see the README for the grammar.
//!
//! ```toml
//! d = 4
//! mu = "unit*1.0"        # or [1.0, 0.0, 0.0, 0.0], "ones*0.5", "e1*2.0", "zero"
//! sigma = "identity"     # or "identity*2.0", { diag = [..] }, [[..], [..]]
//! standardize = false
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use std::path::Path;

use super::MixtureParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MuSpec {
    Vector(Vec<f64>),
    Shorthand(String),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum SigmaSpec {
    Dense(Vec<Vec<f64>>),
    Diag { diag: Vec<f64> },
    Keyword(String),
}

/// A possibly dimension-generic model description.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelTemplate {
    pub d: Option<usize>,
    pub mu: MuSpec,
    #[serde(default = "default_sigma")]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub standardize: bool,
}

fn default_sigma() -> SigmaSpec {
    SigmaSpec::Keyword("identity".into())
}

fn parse_scaled(text: &str, keyword: &str) -> Option<Result<f64>> {
    let text = text.trim();
    let rest = text.strip_prefix(keyword)?;
    let rest = rest.trim();
    if rest.is_empty() {
        return Some(Ok(1.0));
    }
    let rest = rest.strip_prefix('*')?;
    Some(
        rest.trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("bad scale in '{text}': {e}"))),
    )
}

impl ModelTemplate {
    /// Dimension fixed by the file itself, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        if let Some(d) = self.d {
            return Some(d);
        }
        match (&self.mu, &self.sigma) {
            (MuSpec::Vector(v), _) => Some(v.len()),
            (_, SigmaSpec::Dense(rows)) => Some(rows.len()),
            (_, SigmaSpec::Diag { diag }) => Some(diag.len()),
            _ => None,
        }
    }

    /// Builds the model in dimension `d` (or the file's own dimension).
    pub fn instantiate(&self, d: Option<usize>) -> Result<MixtureParams> {
        let d = match (d, self.fixed_dim()) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::DimensionMismatch { expected: b, got: a });
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => {
                return Err(Error::Parse("model dimension `d` is not determined".into()));
            }
        };
        if d == 0 {
            return Err(Error::Parse("d must be positive".into()));
        }
        let mu = self.build_mu(d)?;
        let sigma = self.build_sigma(d)?;
        let model = MixtureParams::new(mu, sigma)?;
        if self.standardize {
            Ok(model.standardized()?.params)
        } else {
            Ok(model)
        }
    }

    fn build_mu(&self, d: usize) -> Result<DVector<f64>> {
        match &self.mu {
            MuSpec::Vector(v) => {
                if v.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: v.len() });
                }
                Ok(DVector::from_column_slice(v))
            }
            MuSpec::Shorthand(s) => {
                if s.trim() == "zero" {
                    return Ok(DVector::zeros(d));
                }
                if let Some(scale) = parse_scaled(s, "ones") {
                    return Ok(DVector::from_element(d, scale?));
                }
                if let Some(scale) = parse_scaled(s, "unit") {
                    return Ok(DVector::from_element(d, scale? / (d as f64).sqrt()));
                }
                if let Some(scale) = parse_scaled(s, "e1") {
                    let scale = scale?;
                    return Ok(DVector::from_fn(d, |i, _| if i == 0 { scale } else { 0.0 }));
                }
                Err(Error::Parse(format!("unrecognized mu shorthand '{s}'")))
            }
        }
    }

    fn build_sigma(&self, d: usize) -> Result<DMatrix<f64>> {
        match &self.sigma {
            SigmaSpec::Keyword(s) => {
                let scale = parse_scaled(s, "identity")
                    .ok_or_else(|| Error::Parse(format!("unrecognized sigma keyword '{s}'")))??;
                Ok(DMatrix::identity(d, d) * scale)
            }
            SigmaSpec::Diag { diag } => {
                if diag.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: diag.len() });
                }
                Ok(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
            }
            SigmaSpec::Dense(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Parse(format!("sigma must be a {d}x{d} matrix")));
                }
                Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
            }
        }
    }
}

pub fn parse_model_str(text: &str) -> Result<ModelTemplate> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn parse_model_file(path: &Path) -> Result<ModelTemplate> {
    parse_model_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_model() {
        let t = parse_model_str("mu = [1.0, 0.0]\nsigma = [[2.0, 0.5], [0.5, 1.0]]\n").unwrap();
        let m = t.instantiate(None).unwrap();
        assert_eq!(m.d(), 2);
        assert_eq!(m.sigma()[(0, 1)], 0.5);
        assert!(t.instantiate(Some(3)).is_err());
    }

    #[test]
    fn shorthands() {
        let t = parse_model_str("mu = \"unit*2\"\nsigma = \"identity*0.5\"\n").unwrap();
        assert_eq!(t.fixed_dim(), None);
        let m = t.instantiate(Some(4)).unwrap();
        assert!((m.mu_norm() - 2.0).abs() < 1e-15);
        assert_eq!(m.sigma()[(3, 3)], 0.5);

        let t = parse_model_str("d = 3\nmu = \"ones*0.5\"\nsigma = { diag = [1.0, 2.0, 3.0] }\n").unwrap();
        let m = t.instantiate(None).unwrap();
        assert_eq!(m.mu()[2], 0.5);
        assert_eq!(m.sigma()[(2, 2)], 3.0);

        let t = parse_model_str("mu = \"e1*0.6\"\nsigma = \"identity*0.64\"\n").unwrap();
        let m = t.instantiate(Some(1)).unwrap();
        assert_eq!(m.mu()[0], 0.6);

        let t = parse_model_str("mu = \"zero\"\n").unwrap();
        assert!(t.instantiate(Some(5)).unwrap().is_pure_gaussian());
    }

    #[test]
    fn standardize_flag() {
        let t = parse_model_str("mu = \"e1*1.0\"\nstandardize = true\n").unwrap();
        let m = t.instantiate(Some(2)).unwrap();
        assert!(m.is_standardized(1e-12));
    }

    #[test]
    fn errors() {
        assert!(parse_model_str("mu = \"bogus\"\n").unwrap().instantiate(Some(2)).is_err());
        assert!(parse_model_str("mu = \"ones*x\"\n").unwrap().instantiate(Some(2)).is_err());
        assert!(parse_model_str("mu = \"ones\"\n").unwrap().instantiate(None).is_err());
        assert!(parse_model_str("mu = [1.0]\nextra = 1\n").is_err());
        assert!(parse_model_str("mu = [1.0]\nsigma = [[-1.0]]\n").unwrap().instantiate(None).is_err());
    }
}
