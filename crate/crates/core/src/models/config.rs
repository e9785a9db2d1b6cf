//! DGP descriptors from a TOML key-value file.
//!
//! Either name a built-in design:
//!
//! ```toml
//! builtin = "dgp4m-tail"
//! ```
//!
//! or describe one from coefficient lists:
//!
//! ```toml
//! family = "tail-index"          # tail-index | extremal-quantile | rectangle
//! name = "steep"
//! covariate = [0.0, 1.0]         # uniform support
//!
//! [alpha]                        # tail-index only
//! kind = "affine"                # affine [a, b] | cosine [a, b, f] | exp-linear [a, b]
//! coefficients = [1.5, 10.0]
//! ```
//!
//! Extremal-quantile designs take `[location]` and `[scale]` tables plus
//! `noise = "abs-t" | "pareto"` and `noise_alpha`; rectangle designs take
//! `x1 = [lo, hi]`, `x2 = [lo, hi]` and the same noise keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    CovariateLaw, Dgp, ExtremalQuantileDgp, IndexFunction, Noise, Rectangle, RectangleDgp,
    TailIndexDgp,
};
use crate::error::{Error, Result};

pub const BUILTIN_DGPS: &[&str] = &[
    "dgp1m-tail",
    "dgp1m-extremal",
    "dgp4m-tail",
    "dgp4m-extremal",
    "rect-pareto",
    "exp-linear",
    "uniform-index",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DgpSpec {
    TailIndex(TailIndexDgp),
    ExtremalQuantile(ExtremalQuantileDgp),
    Rectangle(RectangleDgp),
}

impl DgpSpec {
    pub fn builtin(name: &str) -> Result<Self> {
        Ok(match name {
            "dgp1m-tail" => DgpSpec::TailIndex(TailIndexDgp::dgp1m()),
            "dgp4m-tail" => DgpSpec::TailIndex(TailIndexDgp::dgp4m()),
            "dgp1m-extremal" => DgpSpec::ExtremalQuantile(ExtremalQuantileDgp::dgp1m()),
            "dgp4m-extremal" => DgpSpec::ExtremalQuantile(ExtremalQuantileDgp::dgp4m()),
            "rect-pareto" => DgpSpec::Rectangle(RectangleDgp::reference()),
            "exp-linear" => DgpSpec::TailIndex(TailIndexDgp::exp_linear(0.5, 1.0)?),
            "uniform-index" => DgpSpec::TailIndex(TailIndexDgp::uniform_index(1.0, 2.0)?),
            other => {
                return Err(Error::Config(format!(
                    "unknown DGP '{other}'; valid names: {}",
                    BUILTIN_DGPS.join(", ")
                )))
            }
        })
    }

    pub fn as_dgp(&self) -> &dyn Dgp {
        match self {
            DgpSpec::TailIndex(d) => d,
            DgpSpec::ExtremalQuantile(d) => d,
            DgpSpec::Rectangle(d) => d,
        }
    }

    pub fn name(&self) -> &str {
        self.as_dgp().label()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: DgpConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("DGP config: {e}")))?;
        cfg.build()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionConfig {
    pub kind: String,
    pub coefficients: Vec<f64>,
}

impl FunctionConfig {
    fn build(&self, what: &str) -> Result<IndexFunction> {
        let c = &self.coefficients;
        let want = |n: usize| -> Result<()> {
            if c.len() != n {
                return Err(Error::Config(format!(
                    "{what}: kind '{}' takes {n} coefficients, got {}",
                    self.kind,
                    c.len()
                )));
            }
            Ok(())
        };
        match self.kind.as_str() {
            "affine" => {
                want(2)?;
                Ok(IndexFunction::Affine {
                    intercept: c[0],
                    slope: c[1],
                })
            }
            "cosine" => {
                want(3)?;
                Ok(IndexFunction::Cosine {
                    offset: c[0],
                    amplitude: c[1],
                    frequency: c[2],
                })
            }
            "exp-linear" => {
                want(2)?;
                Ok(IndexFunction::ExpLinear {
                    intercept: c[0],
                    slope: c[1],
                })
            }
            other => Err(Error::Config(format!(
                "{what}: unknown function kind '{other}' (affine, cosine, exp-linear)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub builtin: Option<String>,
    pub family: Option<String>,
    pub name: Option<String>,
    pub covariate: Option<[f64; 2]>,
    pub alpha: Option<FunctionConfig>,
    pub location: Option<FunctionConfig>,
    pub scale: Option<FunctionConfig>,
    pub noise: Option<String>,
    pub noise_alpha: Option<f64>,
    pub x1: Option<[f64; 2]>,
    pub x2: Option<[f64; 2]>,
}

impl DgpConfig {
    fn noise(&self) -> Result<Noise> {
        let a = self
            .noise_alpha
            .ok_or_else(|| Error::Config("noise_alpha is required".into()))?;
        match self.noise.as_deref().unwrap_or("abs-t") {
            "abs-t" => Ok(Noise::AbsStudentT { dof: a }),
            "pareto" => Ok(Noise::Pareto { alpha: a }),
            other => Err(Error::Config(format!(
                "unknown noise '{other}' (abs-t, pareto)"
            ))),
        }
    }

    pub fn build(&self) -> Result<DgpSpec> {
        if let Some(name) = &self.builtin {
            if self.family.is_some() {
                return Err(Error::Config(
                    "give either 'builtin' or 'family', not both".into(),
                ));
            }
            return DgpSpec::builtin(name);
        }
        let family = self
            .family
            .as_deref()
            .ok_or_else(|| Error::Config("DGP config needs 'builtin' or 'family'".into()))?;
        let name = self
            .name
            .clone()
            .unwrap_or_else(|| format!("custom-{family}"));
        let [lo, hi] = self.covariate.unwrap_or([0.0, 1.0]);
        let covariate = CovariateLaw::Uniform { lo, hi };
        let required = |f: &Option<FunctionConfig>, key: &str| -> Result<IndexFunction> {
            f.as_ref()
                .ok_or_else(|| Error::Config(format!("family '{family}' needs a [{key}] table")))?
                .build(key)
        };
        match family {
            "tail-index" => Ok(DgpSpec::TailIndex(TailIndexDgp::new(
                name,
                required(&self.alpha, "alpha")?,
                covariate,
            )?)),
            "extremal-quantile" => Ok(DgpSpec::ExtremalQuantile(ExtremalQuantileDgp::new(
                name,
                required(&self.location, "location")?,
                required(&self.scale, "scale")?,
                self.noise()?,
                covariate,
            )?)),
            "rectangle" => {
                let [a1, b1] = self
                    .x1
                    .ok_or_else(|| Error::Config("rectangle needs x1".into()))?;
                let [a2, b2] = self
                    .x2
                    .ok_or_else(|| Error::Config("rectangle needs x2".into()))?;
                Ok(DgpSpec::Rectangle(RectangleDgp::new(
                    name,
                    Rectangle::new(a1, b1, a2, b2),
                    self.noise()?,
                )?))
            }
            other => Err(Error::Config(format!(
                "unknown family '{other}' (tail-index, extremal-quantile, rectangle)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_resolves() {
        for name in BUILTIN_DGPS {
            let d = DgpSpec::builtin(name).unwrap();
            assert_eq!(d.name(), *name);
            d.as_dgp().validate().unwrap();
        }
    }

    #[test]
    fn unknown_builtin_lists_names() {
        let err = DgpSpec::builtin("unknown").unwrap_err().to_string();
        assert!(err.contains("dgp1m-tail") && err.contains("dgp4m-extremal"));
    }

    #[test]
    fn custom_tail_index_matches_builtin() {
        let text = r#"
            family = "tail-index"
            name = "dgp1m-tail"
            covariate = [0.0, 1.0]
            [alpha]
            kind = "affine"
            coefficients = [1.5, 10.0]
        "#;
        assert_eq!(
            DgpSpec::from_toml_str(text).unwrap(),
            DgpSpec::builtin("dgp1m-tail").unwrap()
        );
    }

    #[test]
    fn custom_extremal_cosine() {
        let text = r#"
            family = "extremal-quantile"
            name = "dgp4m-extremal"
            noise = "abs-t"
            noise_alpha = 4.0
            [location]
            kind = "affine"
            coefficients = [0.0, 1.0]
            [scale]
            kind = "cosine"
            coefficients = [6.5, 5.0, 20.0]
        "#;
        assert_eq!(
            DgpSpec::from_toml_str(text).unwrap(),
            DgpSpec::builtin("dgp4m-extremal").unwrap()
        );
    }

    #[test]
    fn builtin_key_and_errors() {
        assert!(DgpSpec::from_toml_str("builtin = \"rect-pareto\"").is_ok());
        assert!(DgpSpec::from_toml_str("family = \"tail-index\"").is_err());
        assert!(DgpSpec::from_toml_str("bogus = 1").is_err());
        let wrong_arity =
            "family = \"tail-index\"\n[alpha]\nkind = \"cosine\"\ncoefficients = [1.0]";
        assert!(DgpSpec::from_toml_str(wrong_arity).is_err());
        let invalid =
            "family = \"tail-index\"\n[alpha]\nkind = \"affine\"\ncoefficients = [0.5, 0.0]";
        assert!(matches!(
            DgpSpec::from_toml_str(invalid),
            Err(Error::InvalidDgp(_))
        ));
    }
}
