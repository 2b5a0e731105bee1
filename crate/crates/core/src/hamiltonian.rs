//! Nucleus–nucleus coupling matrix and layer drive vector.
//!
//! Everything is in units of Γ₀. Layer j couples with strength
//! κ_j = (N/A)_j μ₀ k² |m|² / (ħΓ₀) (1/nm), so that
//!
//!   K_jl = sqrt(κ_j κ_l) G(z_j, z_l) + (i/2) δ_jl,
//!
//! whose eigenvalues are J + iΓ/2-type quantities with positive imaginary
//! part. K is −H_I in the single-excitation sector at zero detuning; the
//! detuning Δ is kept as a separate scalar shift.
//!
//! The drive is normalized so the input–output relation reads
//! r(Δ) = r_el − i Ωᵀ (K + Δ)⁻¹ Ω, i.e. Ω_j = sqrt(κ_j / (2 a₀ q₀)) u(z_j)
//! with u the cavity field for unit incident amplitude.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::greens::{GreensFunction, Probe, ScatterContext};
use crate::materials::MaterialDb;
use crate::parratt::ParrattSolution;
use crate::stack::{build_stack, LayerStack, StackConfig};
use crate::{Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct NuclearHamiltonian {
    /// K at Δ = 0.
    pub matrix: DMatrix<C64>,
    /// Detuning in Γ₀, applied as K + Δ·I.
    pub delta: f64,
    pub kappa: Vec<f64>,
    pub positions: Vec<f64>,
    /// Γ₀ (eV) of the resonant species.
    pub gamma0_ev: f64,
}

impl NuclearHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// K + Δ·I.
    pub fn shifted(&self) -> DMatrix<C64> {
        &self.matrix + DMatrix::identity(self.dim(), self.dim()) * C64::new(self.delta, 0.0)
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        NuclearHamiltonian { delta, ..self.clone() }
    }

    pub fn magnitudes(&self) -> DMatrix<f64> {
        self.matrix.map(|c| c.norm())
    }

    /// max |K_jl − K_lj| / max |K_jl|.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.matrix.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let diff = (&self.matrix - self.matrix.transpose()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        diff / scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriveVector {
    pub omega: Vec<C64>,
}

impl DriveVector {
    pub fn as_vector(&self) -> DVector<C64> {
        DVector::from_column_slice(&self.omega)
    }

    /// |Ω_j| non-increasing with depth, allowing a relative slack for
    /// interference wiggles.
    pub fn is_attenuating(&self, slack: f64) -> bool {
        self.omega.windows(2).all(|w| w[1].norm() <= w[0].norm() * (1.0 + slack))
    }
}

fn layer_couplings(stack: &LayerStack, ctx: &ScatterContext) -> Result<(Vec<f64>, f64)> {
    if stack.resonant_count() == 0 {
        return Err(Error::validation("stack", "contains no resonant layer"));
    }
    let mut kappa = Vec::with_capacity(stack.resonant_count());
    let mut gamma0 = None;
    for (&i, t) in stack.resonant_layers.iter().zip(stack.resonant_thicknesses()) {
        let nuc = stack.layers[i].material.nuclear_constants()?;
        gamma0.get_or_insert(nuc.gamma0_ev);
        kappa.push(nuc.coupling_per_nm(t, ctx.k));
    }
    Ok((kappa, gamma0.unwrap_or_default()))
}

pub fn build_hamiltonian(stack: &LayerStack, ctx: &ScatterContext, delta: f64) -> Result<NuclearHamiltonian> {
    let (kappa, gamma0_ev) = layer_couplings(stack, ctx)?;
    let g = GreensFunction::new(stack, ctx)?;
    let z = &stack.resonant_layer_centers;
    let m = z.len();
    let mut matrix = DMatrix::zeros(m, m);
    for j in 0..m {
        for l in j..m {
            let v = (kappa[j] * kappa[l]).sqrt() * g.greens(z[j], z[l])?;
            matrix[(j, l)] = v;
            matrix[(l, j)] = v;
        }
        matrix[(j, j)] += 0.5 * I;
    }
    Ok(NuclearHamiltonian { matrix, delta, kappa, positions: z.clone(), gamma0_ev })
}

fn drive_prefactors(kappa: &[f64], ctx: &ScatterContext) -> Vec<C64> {
    kappa.iter().map(|&k| (k / (2.0 * ctx.admittance(0))).sqrt()).collect()
}

/// Drive from the source Green's function: Ω_j ∝ −2i a₀q₀ e^{iq₀z_src} G(z_j, z_src).
pub fn rabi_vector(stack: &LayerStack, ctx: &ScatterContext, z_src: f64) -> Result<DriveVector> {
    let (kappa, _) = layer_couplings(stack, ctx)?;
    let g = GreensFunction::new(stack, ctx)?;
    let omega = drive_prefactors(&kappa, ctx)
        .into_iter()
        .zip(&stack.resonant_layer_centers)
        .map(|(c, &z)| Ok(c * g.cavity_field_at(z, z_src)?))
        .collect::<Result<_>>()?;
    Ok(DriveVector { omega })
}

/// Drive from the plane-wave field at each layer (independent route).
pub fn rabi_from_field(stack: &LayerStack, ctx: &ScatterContext) -> Result<DriveVector> {
    let (kappa, _) = layer_couplings(stack, ctx)?;
    let p = ParrattSolution::solve(stack, ctx.probe.energy_kev, ctx.probe.angle_mrad, ctx.probe.polarization)?;
    let omega = drive_prefactors(&kappa, ctx)
        .into_iter()
        .zip(&stack.resonant_layer_centers)
        .map(|(c, &z)| c * p.field(z))
        .collect();
    Ok(DriveVector { omega })
}

/// Off-diagonal element of the two-cavity matrix with spacer width d.
pub fn coupling_curve(template: &StackConfig, db: &MaterialDb, probe: Probe, d_nm: f64) -> Result<C64> {
    if !(d_nm > 0.0) {
        return Err(Error::validation("d_nm", "spacer width must be > 0"));
    }
    let cfg = template.clone().with_cavities(2).with_spacers(d_nm, d_nm);
    let stack = build_stack(&cfg, db, probe.energy_kev)?;
    let ctx = ScatterContext::new(&stack, probe)?;
    Ok(build_hamiltonian(&stack, &ctx, 0.0)?.matrix[(0, 1)])
}
