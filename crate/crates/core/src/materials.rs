//! Optical and nuclear constants of the materials used in a stack.
//!
//! The database is a TOML file with one `[[material]]` record per material
//! and working energy. A record without `energy_kev` (vacuum) is valid at any
//! energy. Resonant materials carry a `[material.nuclear]` block.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::consts::{C_M_S, HBAR_EV_S, HBAR_J_S, MU0};
use crate::{Error, Result, C64};

const BUILTIN: &str = include_str!("../data/materials.toml");

/// Energies closer than this (keV) are treated as the same working energy.
const ENERGY_MATCH_KEV: f64 = 1e-3;

/// Upper bound on the refractive-index decrement of any registered material.
const MAX_DELTA: f64 = 1e-3;

/// Hard x-ray sanity bound on |n - 1|; larger values only trigger a warning.
const HARD_XRAY_BOUND: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuclearRecord {
    pub transition_energy_kev: f64,
    pub lifetime_ns: f64,
    #[serde(default)]
    pub internal_conversion: f64,
    /// Overrides `1 / (1 + internal_conversion)` when present.
    #[serde(default)]
    pub radiative_fraction: Option<f64>,
    pub number_density_per_m3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialRecord {
    pub name: String,
    #[serde(default)]
    pub energy_kev: Option<f64>,
    #[serde(default)]
    pub density_g_cm3: Option<f64>,
    pub delta: f64,
    pub beta: f64,
    #[serde(default)]
    pub nuclear: Option<NuclearRecord>,
}

#[derive(Debug, Deserialize)]
struct DbFile {
    #[serde(default)]
    material: Vec<MaterialRecord>,
}

/// Resolved nuclear resonance parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuclearParams {
    pub transition_energy_kev: f64,
    /// Total natural linewidth Γ₀ in eV (ħ/τ).
    pub gamma0_ev: f64,
    /// Γ₀ as a rate in 1/s.
    pub gamma0_per_s: f64,
    pub radiative_fraction: f64,
    /// |m| in A·m², calibrated so the free-space M1 decay rate equals the
    /// radiative part of Γ₀.
    pub dipole_strength: f64,
    pub number_density_per_m3: f64,
}

impl NuclearParams {
    fn from_record(name: &str, r: &NuclearRecord) -> Result<Self> {
        let field = |f: &str| format!("{name}.nuclear.{f}");
        if !(r.transition_energy_kev > 0.0) {
            return Err(Error::validation(field("transition_energy_kev"), "must be > 0"));
        }
        if !(r.lifetime_ns > 0.0) {
            return Err(Error::validation(field("lifetime_ns"), "must be > 0"));
        }
        if !(r.internal_conversion >= 0.0) {
            return Err(Error::validation(field("internal_conversion"), "must be >= 0"));
        }
        if !(r.number_density_per_m3 >= 0.0) {
            return Err(Error::validation(field("number_density_per_m3"), "must be >= 0"));
        }
        let radiative_fraction = r.radiative_fraction.unwrap_or(1.0 / (1.0 + r.internal_conversion));
        if !(radiative_fraction > 0.0 && radiative_fraction <= 1.0) {
            return Err(Error::validation(field("radiative_fraction"), "must lie in (0, 1]"));
        }
        let gamma0_per_s = 1.0 / (r.lifetime_ns * 1e-9);
        let omega = r.transition_energy_kev * 1e3 / HBAR_EV_S;
        // free-space magnetic-dipole rate: Γ = μ0 ω³ |m|² / (3π ħ c³)
        let gamma_rad = radiative_fraction * gamma0_per_s;
        let m2 = 3.0 * std::f64::consts::PI * HBAR_J_S * C_M_S.powi(3) * gamma_rad / (MU0 * omega.powi(3));
        Ok(NuclearParams {
            transition_energy_kev: r.transition_energy_kev,
            gamma0_ev: HBAR_EV_S * gamma0_per_s,
            gamma0_per_s,
            radiative_fraction,
            dipole_strength: m2.sqrt(),
            number_density_per_m3: r.number_density_per_m3,
        })
    }

    /// Nuclei per nm² in a layer of the given thickness.
    pub fn areal_density_per_nm2(&self, thickness_nm: f64) -> f64 {
        self.number_density_per_m3 * thickness_nm * 1e-27
    }

    /// Coupling constant κ (1/nm) of a layer: the Green's function (nm) times
    /// κ is the layer-layer coupling in units of Γ₀.
    ///
    /// κ = (N/A) μ₀ k² |m|² / (ħ Γ₀), with k the probe wavenumber.
    pub fn coupling_per_nm(&self, thickness_nm: f64, k_per_nm: f64) -> f64 {
        let areal_m2 = self.number_density_per_m3 * thickness_nm * 1e-9;
        let k_m = k_per_nm * 1e9;
        let kappa_m = areal_m2 * MU0 * k_m * k_m * self.dipole_strength.powi(2) / (HBAR_J_S * self.gamma0_per_s);
        kappa_m * 1e-9
    }

    /// Free-space radiative decay rate (1/s) implied by `dipole_strength`.
    pub fn free_space_m1_rate(&self) -> f64 {
        let omega = self.transition_energy_kev * 1e3 / HBAR_EV_S;
        MU0 * omega.powi(3) * self.dipole_strength.powi(2) / (3.0 * std::f64::consts::PI * HBAR_J_S * C_M_S.powi(3))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Material {
    pub name: String,
    pub delta: f64,
    pub beta: f64,
    pub nuclear: Option<NuclearParams>,
}

impl Material {
    pub fn vacuum() -> Self {
        Material { name: "vacuum".into(), delta: 0.0, beta: 0.0, nuclear: None }
    }

    pub fn is_resonant(&self) -> bool {
        self.nuclear.is_some()
    }

    pub fn refractive_index(&self) -> C64 {
        C64::new(1.0 - self.delta, self.beta)
    }

    pub fn nuclear_constants(&self) -> Result<&NuclearParams> {
        self.nuclear.as_ref().ok_or_else(|| Error::NotResonant(self.name.clone()))
    }
}

pub fn refractive_index(material: &Material) -> C64 {
    material.refractive_index()
}

pub fn nuclear_constants(material: &Material) -> Result<&NuclearParams> {
    material.nuclear_constants()
}

/// Immutable collection of material records.
#[derive(Debug, Clone)]
pub struct MaterialDb {
    records: BTreeMap<String, Vec<MaterialRecord>>,
}

impl MaterialDb {
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN).expect("built-in materials database is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: DbFile = toml::from_str(text)
            .map_err(|e| Error::Parse { what: "materials database".into(), reason: e.to_string() })?;
        let mut records: BTreeMap<String, Vec<MaterialRecord>> = BTreeMap::new();
        for rec in file.material {
            validate_record(&rec)?;
            records.entry(rec.name.clone()).or_default().push(rec);
        }
        Ok(MaterialDb { records })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn records(&self) -> impl Iterator<Item = &MaterialRecord> {
        self.records.values().flatten()
    }

    /// Resolves `name` at the working energy. `"air"` is an alias of vacuum.
    pub fn get(&self, name: &str, energy_kev: f64) -> Result<Material> {
        let key = if name == "air" && !self.records.contains_key("air") { "vacuum" } else { name };
        if key == "vacuum" && !self.records.contains_key("vacuum") {
            return Ok(Material::vacuum());
        }
        let recs = self.records.get(key).ok_or_else(|| Error::UnknownMaterial(name.to_string()))?;
        let rec = recs
            .iter()
            .find(|r| match r.energy_kev {
                Some(e) => (e - energy_kev).abs() < ENERGY_MATCH_KEV,
                None => true,
            })
            .ok_or_else(|| Error::UnknownMaterial(format!("{name} at {energy_kev} keV")))?;
        let nuclear = rec.nuclear.as_ref().map(|n| NuclearParams::from_record(&rec.name, n)).transpose()?;
        let m = Material { name: rec.name.clone(), delta: rec.delta, beta: rec.beta, nuclear };
        let dn = (m.refractive_index() - 1.0).norm();
        if dn >= HARD_XRAY_BOUND {
            log::warn!("material {}: |n - 1| = {dn:.3e} exceeds the hard x-ray range", m.name);
        }
        Ok(m)
    }
}

fn validate_record(rec: &MaterialRecord) -> Result<()> {
    let field = |f: &str| format!("{}.{f}", rec.name);
    if rec.name.is_empty() {
        return Err(Error::validation("material.name", "must not be empty"));
    }
    if !(rec.beta >= 0.0) {
        return Err(Error::validation(field("beta"), "must be >= 0 (passive media only)"));
    }
    if !(rec.delta >= 0.0 && rec.delta < MAX_DELTA) {
        return Err(Error::validation(field("delta"), "must lie in [0, 1e-3)"));
    }
    if let Some(e) = rec.energy_kev {
        if !(e > 0.0) {
            return Err(Error::validation(field("energy_kev"), "must be > 0"));
        }
    }
    if let Some(n) = &rec.nuclear {
        NuclearParams::from_record(&rec.name, n)?;
    }
    Ok(())
}
