//! Layer geometry of N stacked single-layer cavities.
//!
//! Layout, top to bottom: cap, then for each cavity the core layers, with a
//! spacer between consecutive cavities, then a bottom cap. Spacer widths
//! alternate d_v, d_w, d_v, … starting with d_v after the first cavity, so
//! cavities (1,2), (3,4), … form the SSH unit cells. z grows downward and
//! z = 0 is the top surface.

use serde::{Deserialize, Serialize};

use crate::materials::{Material, MaterialDb};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub material: String,
    pub thickness_nm: f64,
}

impl LayerSpec {
    pub fn new(material: &str, thickness_nm: f64) -> Self {
        LayerSpec { material: material.to_string(), thickness_nm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StackConfig {
    pub n_cavities: usize,
    /// Layers of one cavity, top to bottom.
    pub core: Vec<LayerSpec>,
    pub cap_material: String,
    pub cap_thickness_nm: f64,
    pub spacer_material: String,
    pub d_v_nm: f64,
    pub d_w_nm: f64,
    pub superstrate: String,
    pub substrate: String,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            n_cavities: 10,
            core: vec![LayerSpec::new("C", 19.5), LayerSpec::new("Fe57", 1.0), LayerSpec::new("C", 19.5)],
            cap_material: "Pt".into(),
            cap_thickness_nm: 2.5,
            spacer_material: "Pt".into(),
            d_v_nm: 4.9,
            d_w_nm: 3.5,
            superstrate: "vacuum".into(),
            substrate: "vacuum".into(),
        }
    }
}

impl StackConfig {
    pub fn with_spacers(mut self, d_v_nm: f64, d_w_nm: f64) -> Self {
        self.d_v_nm = d_v_nm;
        self.d_w_nm = d_w_nm;
        self
    }

    pub fn with_cavities(mut self, n: usize) -> Self {
        self.n_cavities = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cavities == 0 {
            return Err(Error::validation("n_cavities", "must be >= 1"));
        }
        if self.core.is_empty() {
            return Err(Error::validation("core", "must contain at least one layer"));
        }
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(field, format!("thickness must be > 0 (got {v})")))
            }
        };
        for (i, l) in self.core.iter().enumerate() {
            positive(&format!("core[{i}].thickness_nm"), l.thickness_nm)?;
        }
        positive("cap_thickness_nm", self.cap_thickness_nm)?;
        if self.n_cavities > 1 {
            positive("d_v_nm", self.d_v_nm)?;
            if self.n_cavities > 2 {
                positive("d_w_nm", self.d_w_nm)?;
            }
        }
        Ok(())
    }

    /// Spacer widths between consecutive cavities.
    pub fn spacers(&self) -> Vec<f64> {
        (0..self.n_cavities.saturating_sub(1)).map(|i| if i % 2 == 0 { self.d_v_nm } else { self.d_w_nm }).collect()
    }

    /// Closed-form total thickness.
    pub fn total_thickness_nm(&self) -> f64 {
        let core: f64 = self.core.iter().map(|l| l.thickness_nm).sum();
        2.0 * self.cap_thickness_nm + self.n_cavities as f64 * core + self.spacers().iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layer {
    pub material: Material,
    pub thickness: f64,
    pub z_top: f64,
    pub z_bottom: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerStack {
    pub superstrate: Material,
    pub layers: Vec<Layer>,
    pub substrate: Material,
    /// Indices into `layers` of the resonant layers, top to bottom.
    pub resonant_layers: Vec<usize>,
    /// Midplanes z_j of the resonant layers.
    pub resonant_layer_centers: Vec<f64>,
}

impl LayerStack {
    /// Assembles a stack from explicit (material, thickness) slabs.
    pub fn from_layers(superstrate: Material, slabs: Vec<(Material, f64)>, substrate: Material) -> Result<Self> {
        let mut z = 0.0;
        let mut layers = Vec::with_capacity(slabs.len());
        let mut resonant_layers = Vec::new();
        let mut centers = Vec::new();
        for (i, (material, t)) in slabs.into_iter().enumerate() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::validation(format!("layers[{i}].thickness"), "must be > 0"));
            }
            if material.is_resonant() {
                resonant_layers.push(i);
                centers.push(z + 0.5 * t);
            }
            layers.push(Layer { material, thickness: t, z_top: z, z_bottom: z + t });
            z += t;
        }
        Ok(LayerStack { superstrate, layers, substrate, resonant_layers, resonant_layer_centers: centers })
    }

    pub fn resonant_count(&self) -> usize {
        self.resonant_layers.len()
    }

    pub fn total_thickness(&self) -> f64 {
        self.layers.last().map_or(0.0, |l| l.z_bottom)
    }

    /// Interface positions: 0, then the bottom of every layer.
    pub fn interfaces(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.layers.iter().map(|l| l.z_bottom)).collect()
    }

    /// Bounding media and layers as one sequence: superstrate, layers…, substrate.
    pub fn media(&self) -> impl Iterator<Item = &Material> {
        std::iter::once(&self.superstrate)
            .chain(self.layers.iter().map(|l| &l.material))
            .chain(std::iter::once(&self.substrate))
    }

    pub fn resonant_thicknesses(&self) -> Vec<f64> {
        self.resonant_layers.iter().map(|&i| self.layers[i].thickness).collect()
    }
}

pub fn build_stack(config: &StackConfig, db: &MaterialDb, energy_kev: f64) -> Result<LayerStack> {
    config.validate()?;
    let get = |name: &str| db.get(name, energy_kev);
    let cap = get(&config.cap_material)?;
    let spacer = get(&config.spacer_material)?;
    let core: Vec<(Material, f64)> =
        config.core.iter().map(|l| Ok((get(&l.material)?, l.thickness_nm))).collect::<Result<_>>()?;
    let spacers = config.spacers();

    let mut slabs = vec![(cap.clone(), config.cap_thickness_nm)];
    for c in 0..config.n_cavities {
        slabs.extend(core.iter().cloned());
        if let Some(&d) = spacers.get(c) {
            slabs.push((spacer.clone(), d));
        }
    }
    slabs.push((cap, config.cap_thickness_nm));
    LayerStack::from_layers(get(&config.superstrate)?, slabs, get(&config.substrate)?)
}

/// True iff the full medium sequence, including the bounding media, reads the
/// same from both ends.
pub fn mirror_check(stack: &LayerStack) -> bool {
    if stack.superstrate.name != stack.substrate.name {
        return false;
    }
    let n = stack.layers.len();
    (0..n / 2).all(|i| {
        let (a, b) = (&stack.layers[i], &stack.layers[n - 1 - i]);
        a.material.name == b.material.name && (a.thickness - b.thickness).abs() <= 1e-12 * a.thickness.max(1.0)
    })
}
