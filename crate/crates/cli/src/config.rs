//! Experiment configuration files.
//!
//! A config is a JSON object with `schema_version` and any subset of the
//! keys below. Unknown keys are rejected. Command-line flags override the
//! corresponding config values.

use anyhow::{bail, Context, Result};
use nodal_chaos::chaos::ChaosForm;
use nodal_chaos::field::{make_anisotropic, make_arw, make_band, make_rsh, Normalization, SpectralFieldSpec};
use nodal_chaos::geometry::Manifold;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub field: Option<FieldConfig>,
    /// Bands for `berry`.
    #[serde(default)]
    pub bands: Vec<BandConfig>,
    /// Chaos orders.
    #[serde(default)]
    pub q: Vec<u32>,
    /// Chaos forms for `simulate` and `nodal` (`general`, `lambda_form`, `inverse_form`, `tilde`, `closed2`, `closed4`).
    #[serde(default)]
    pub forms: Vec<String>,
    pub resolution: Option<usize>,
    pub fiber: Option<usize>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub level: Option<f64>,
    pub out: Option<PathBuf>,
    /// Quadrature resolution for the chaos statistics of `nodal`; the
    /// `resolution` key sets its extraction grid.
    pub chaos_resolution: Option<usize>,
    /// Fail instead of skipping when a closed variance form does not apply.
    #[serde(default)]
    pub require_closed: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Rsh {
        ell: u32,
    },
    Arw {
        m: u64,
    },
    Band {
        manifold: Manifold,
        eigen: Vec<u32>,
        #[serde(default = "unit")]
        normalization: Normalization,
    },
    Anisotropic {
        modes: Vec<AnisotropicMode>,
    },
    /// Path to a serialized field spec, relative to the config file.
    File {
        path: PathBuf,
    },
    Inline {
        spec: SpectralFieldSpec,
    },
}

fn unit() -> Normalization {
    Normalization::UnitVariance
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AnisotropicMode {
    pub k: [i32; 2],
    pub std: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub manifold: Manifold,
    pub eigen: Vec<u32>,
}

impl ExperimentConfig {
    pub fn empty() -> Self {
        Self { schema_version: SCHEMA_VERSION, ..Self::default() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!("config schema_version {} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version);
        }
        if let Some(FieldConfig::File { path: p }) = &mut cfg.field {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn field_spec(&self) -> Result<SpectralFieldSpec> {
        let Some(field) = &self.field else {
            bail!("this command needs a field: add a \"field\" entry to the config");
        };
        field.build()
    }

    pub fn forms(&self) -> Result<Vec<ChaosForm>> {
        if self.forms.is_empty() {
            return Ok(vec![ChaosForm::General]);
        }
        self.forms.iter().map(|f| f.parse::<ChaosForm>().map_err(|e| anyhow::anyhow!("{e}"))).collect()
    }
}

impl FieldConfig {
    pub fn build(&self) -> Result<SpectralFieldSpec> {
        let spec = match self {
            FieldConfig::Rsh { ell } => make_rsh(*ell)?,
            FieldConfig::Arw { m } => make_arw(*m)?,
            FieldConfig::Band { manifold, eigen, normalization } => make_band(*manifold, eigen, *normalization)?,
            FieldConfig::Anisotropic { modes } => {
                let m: Vec<([i32; 2], f64)> = modes.iter().map(|m| (m.k, m.std)).collect();
                make_anisotropic(&m)?
            }
            FieldConfig::File { path } => {
                let text =
                    std::fs::read_to_string(path).with_context(|| format!("reading field spec {}", path.display()))?;
                SpectralFieldSpec::from_json(&text)?
            }
            FieldConfig::Inline { spec } => {
                spec.validate()?;
                spec.clone()
            }
        };
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Result<ExperimentConfig> {
        serde_json::from_str(s)
    }

    #[test]
    fn presets_parse() {
        let c = parse(r#"{"schema_version":1,"field":{"preset":"arw","m":5},"q":[2,4],"samples":10}"#).unwrap();
        assert_eq!(c.field_spec().unwrap().len(), 8);
        let c = parse(r#"{"schema_version":1,"field":{"preset":"band","manifold":"torus2","eigen":[1,5]}}"#).unwrap();
        assert_eq!(c.field_spec().unwrap().len(), 12);
        let c = parse(
            r#"{"schema_version":1,"field":{"preset":"anisotropic","modes":[{"k":[1,0],"std":1.0},{"k":[0,1],"std":1.2}]}}"#,
        )
        .unwrap();
        assert_eq!(c.field_spec().unwrap().len(), 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(r#"{"schema_version":1,"sampels":10}"#).is_err());
        assert!(parse(r#"{"schema_version":1,"field":{"preset":"rsh","ell":3,"m":2}}"#).is_err());
        assert!(parse(r#"{"schema_version":1,"field":{"preset":"torus"}}"#).is_err());
    }

    #[test]
    fn inline_spec_round_trips() {
        let spec = make_rsh(2).unwrap();
        let cfg =
            ExperimentConfig { field: Some(FieldConfig::Inline { spec: spec.clone() }), ..ExperimentConfig::empty() };
        let text = serde_json::to_string(&cfg).unwrap();
        let back = parse(&text).unwrap();
        assert_eq!(back.field_spec().unwrap().hash_hex(), spec.hash_hex());
    }
}
