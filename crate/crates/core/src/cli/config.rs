//! Run configuration file (TOML). Every physical key carries its unit.
//!
//! ```toml
//! materials = "my_materials.toml"   # optional, replaces the built-in table
//!
//! [stack]
//! n_cavities = 10
//! d_v_nm = 4.9
//! d_w_nm = 3.5
//!
//! [probe]
//! energy_kev = 14.413
//! angle_mrad = 2.4067
//! polarization = "s"
//! z_src_nm = -0.1
//!
//! [sweep]
//! dv_min_nm = 1.75
//! dv_max_nm = 7.0
//! dv_points = 100
//! ```
//!
//! Missing sections and keys take the defaults shown by `StackConfig::default`
//! and the `Default` impls below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::greens::{Polarization, Probe, DEFAULT_Z_SRC_NM};
use crate::stack::StackConfig;
use crate::topology::{BulkRange, DEFAULT_NK};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub energy_kev: f64,
    pub angle_mrad: f64,
    pub polarization: Polarization,
    pub z_src_nm: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            energy_kev: 14.413,
            angle_mrad: 2.4067,
            polarization: Polarization::S,
            z_src_nm: DEFAULT_Z_SRC_NM,
        }
    }
}

impl ProbeConfig {
    pub fn probe(&self) -> Probe {
        Probe { energy_kev: self.energy_kev, angle_mrad: self.angle_mrad, polarization: self.polarization }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub dv_min_nm: f64,
    pub dv_max_nm: f64,
    pub dv_points: usize,
    pub dw_min_nm: f64,
    pub dw_max_nm: f64,
    pub dw_points: usize,
    pub detuning_min_gamma0: f64,
    pub detuning_max_gamma0: f64,
    pub detuning_points: usize,
    pub n_k: usize,
    pub bulk_range: BulkRange,
    /// Sampling step of the cavity-field dump.
    pub field_step_nm: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            dv_min_nm: 2.0,
            dv_max_nm: 7.0,
            dv_points: 20,
            dw_min_nm: 2.0,
            dw_max_nm: 7.0,
            dw_points: 20,
            detuning_min_gamma0: -200.0,
            detuning_max_gamma0: 200.0,
            detuning_points: 4001,
            n_k: DEFAULT_NK,
            bulk_range: BulkRange::NearestNeighbour,
            field_step_nm: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub materials: Option<PathBuf>,
    pub stack: StackConfig,
    pub probe: ProbeConfig,
    pub sweep: SweepConfig,
}

impl FileConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "run configuration".into(),
            reason: e.message().to_string() + &span_hint(text, e.span()),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::from_toml_str(&text)?;
        // a relative materials path is relative to the config file
        if let (Some(m), Some(dir)) = (&cfg.materials, path.parent()) {
            if m.is_relative() {
                cfg.materials = Some(dir.join(m));
            }
        }
        Ok(cfg)
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) if r.start < text.len() => {
            let line = text[..r.start].matches('\n').count() + 1;
            format!(" (line {line}: `{}`)", text[r.start..r.end.min(text.len())].trim())
        }
        _ => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = FileConfig::from_toml_str("").unwrap();
        assert_eq!(c, FileConfig::default());
        assert_eq!(c.stack.n_cavities, 10);
        assert_eq!(c.probe.angle_mrad, 2.4067);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = FileConfig::from_toml_str("[stack]\nd_v = 3.0\n").unwrap_err();
        assert!(err.to_string().contains("d_v"), "{err}");
    }

    #[test]
    fn bulk_range_spelling() {
        let c = FileConfig::from_toml_str("[sweep]\nbulk_range = { kind = \"cells\", range = 1 }\n").unwrap();
        assert_eq!(c.sweep.bulk_range, BulkRange::Cells(1));
        let c = FileConfig::from_toml_str("[sweep]\nbulk_range = { kind = \"nearest-neighbour\" }\n").unwrap();
        assert_eq!(c.sweep.bulk_range, BulkRange::NearestNeighbour);
    }

    #[test]
    fn round_trip() {
        let c = FileConfig::default();
        let back = FileConfig::from_toml_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
