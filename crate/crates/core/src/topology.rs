//! Bulk Bloch Hamiltonian and biorthogonal winding number.
//!
//! The outer two layers on each side are dropped, the remaining ones are
//! paired into (A, B) cells and equivalent couplings are averaged. With
//! h_m[a][b] the coupling of site a in cell n to site b in cell n + m,
//!
//!   H(k) = h_0 + Σ_{m>0} (h_m e^{ikm} + h_mᵀ e^{−ikm}),
//!
//! which for an SSH chain gives H_AB = v + w e^{−ik}.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::greens::{Probe, ScatterContext};
use crate::hamiltonian::{build_hamiltonian, NuclearHamiltonian};
use crate::materials::MaterialDb;
use crate::stack::{build_stack, StackConfig};
use crate::{Error, Result, C64};

pub const DEFAULT_NK: usize = 2048;

/// Gap (relative to ‖h‖) below which the winding number is ill-defined.
pub const ILL_DEFINED_GAP: f64 = 1e-6;
/// Gap below which phase-diagram points are masked as transition points.
pub const TRANSITION_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "range")]
pub enum BulkRange {
    /// Intracell v and intercell w only.
    #[default]
    NearestNeighbour,
    /// Full 2×2 blocks between cells up to the given cell offset.
    Cells(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BulkModel {
    /// h_0 … h_R.
    pub harmonics: Vec<Matrix2<C64>>,
    pub range: BulkRange,
    /// Mean self-coupling removed from h_0.
    pub onsite_mean: C64,
    /// Standard deviation of each averaged entry, same layout as `harmonics`.
    pub spread: Vec<Matrix2<f64>>,
}

fn z() -> C64 {
    C64::new(0.0, 0.0)
}

impl BulkModel {
    /// Ideal SSH chain with intracell v and intercell w.
    pub fn ssh(v: C64, w: C64) -> Self {
        BulkModel {
            harmonics: vec![Matrix2::new(z(), v, v, z()), Matrix2::new(z(), z(), w, z())],
            range: BulkRange::NearestNeighbour,
            onsite_mean: z(),
            spread: vec![Matrix2::zeros(); 2],
        }
    }

    pub fn intracell(&self) -> C64 {
        self.harmonics[0][(0, 1)]
    }

    pub fn intercell(&self) -> C64 {
        self.harmonics.get(1).map_or(z(), |h| h[(1, 0)])
    }

    /// Σ_m ‖h_m‖_F.
    pub fn norm(&self) -> f64 {
        self.harmonics.iter().map(|h| h.norm()).sum()
    }

    pub fn with_onsite_shift(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.harmonics[0] += Matrix2::identity() * c;
        out
    }
}

fn mean_std(xs: &[C64]) -> (C64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<C64>() / n;
    let var = xs.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn extract_bulk(h: &NuclearHamiltonian, range: BulkRange) -> Result<BulkModel> {
    extract_bulk_matrix(&h.matrix, range)
}

pub fn extract_bulk_matrix(k: &nalgebra::DMatrix<C64>, range: BulkRange) -> Result<BulkModel> {
    let m = k.nrows();
    if m < 8 {
        return Err(Error::validation("M", format!("bulk extraction needs at least 8 layers (got {m})")));
    }
    let ncell = (m - 4) / 2;
    let site = |c: usize, s: usize| 2 + 2 * c + s;
    let mut onsite = Vec::new();
    for c in 0..ncell {
        onsite.push(k[(site(c, 0), site(c, 0))]);
        onsite.push(k[(site(c, 1), site(c, 1))]);
    }
    let (onsite_mean, _) = mean_std(&onsite);

    let (mut harmonics, spread) = match range {
        BulkRange::NearestNeighbour => {
            let collect = |f: &dyn Fn(usize) -> C64, n: usize| mean_std(&(0..n).map(f).collect::<Vec<_>>());
            let (a, sa) = collect(&|c| k[(site(c, 0), site(c, 0))], ncell);
            let (b, sb) = collect(&|c| k[(site(c, 1), site(c, 1))], ncell);
            let (v, sv) = collect(&|c| k[(site(c, 0), site(c, 1))], ncell);
            let (w, sw) = collect(&|c| k[(site(c, 1), site(c + 1, 0))], ncell - 1);
            (
                vec![Matrix2::new(a, v, v, b), Matrix2::new(z(), z(), w, z())],
                vec![Matrix2::new(sa, sv, sv, sb), Matrix2::new(0.0, 0.0, sw, 0.0)],
            )
        }
        BulkRange::Cells(r) => {
            if r == 0 || r >= ncell {
                return Err(Error::validation("range", format!("cell range must lie in 1..{ncell}")));
            }
            let mut hs = Vec::new();
            let mut ss = Vec::new();
            for off in 0..=r {
                let mut h = Matrix2::zeros();
                let mut s = Matrix2::zeros();
                for a in 0..2 {
                    for b in 0..2 {
                        let xs: Vec<C64> = (0..ncell - off).map(|c| k[(site(c, a), site(c + off, b))]).collect();
                        let (mu, sd) = mean_std(&xs);
                        h[(a, b)] = mu;
                        s[(a, b)] = sd;
                    }
                }
                hs.push(h);
                ss.push(s);
            }
            (hs, ss)
        }
    };
    harmonics[0] -= Matrix2::identity() * onsite_mean;
    Ok(BulkModel { harmonics, range, onsite_mean, spread })
}

pub fn bloch_hamiltonian(bm: &BulkModel, k: f64) -> Matrix2<C64> {
    let mut h = bm.harmonics[0];
    for (m, hm) in bm.harmonics.iter().enumerate().skip(1) {
        let e = C64::from_polar(1.0, k * m as f64);
        h += hm * e + hm.transpose() * e.conj();
    }
    h
}

/// Eigenvalues and right/left eigenvectors of a 2×2 matrix, lᵀr = 1.
fn eig2(h: &Matrix2<C64>) -> [(C64, [C64; 2], [C64; 2]); 2] {
    let (a, b, c, d) = (h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]);
    let half = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * c).sqrt();
    [half - disc, half + disc].map(|lam| {
        let pick = |p: [C64; 2], q: [C64; 2]| {
            if p[0].norm_sqr() + p[1].norm_sqr() >= q[0].norm_sqr() + q[1].norm_sqr() {
                p
            } else {
                q
            }
        };
        let r = pick([b, lam - a], [lam - d, c]);
        let l = pick([c, lam - a], [lam - d, b]);
        let s = l[0] * r[0] + l[1] * r[1];
        (lam, r, [l[0] / s, l[1] / s])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindingResult {
    /// (i/π) ln Π links with Re mapped into [−0.5, 1.5).
    pub raw: C64,
    pub integer: i32,
    /// Band used for `raw`: 0 = lower real part at k = −π.
    pub band: usize,
    pub per_band: [C64; 2],
    /// min_k |λ₁(k) − λ₂(k)| / ‖h‖.
    pub min_gap: f64,
    pub ill_defined: bool,
    pub transition: bool,
}

impl WindingResult {
    pub fn flag(&self) -> &'static str {
        if self.ill_defined {
            "ill-defined"
        } else if self.transition {
            "transition"
        } else {
            "ok"
        }
    }
}

pub fn winding_number(bm: &BulkModel, n_k: usize) -> Result<WindingResult> {
    winding_number_with_gauge(bm, n_k, &|_| C64::new(1.0, 0.0))
}

/// Winding number with the right eigenvector at grid point i multiplied by
/// `gauge(i)` (and the left one divided by it). The result must not depend on
/// the gauge; exposed so this can be checked.
pub fn winding_number_with_gauge(bm: &BulkModel, n_k: usize, gauge: &dyn Fn(usize) -> C64) -> Result<WindingResult> {
    if n_k < 4 {
        return Err(Error::validation("n_k", "need at least 4 k-points"));
    }
    let norm = bm.norm();
    if norm == 0.0 {
        return Err(Error::Numeric("bulk model vanishes identically".into()));
    }
    let ks: Vec<f64> =
        (0..n_k).map(|i| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / n_k as f64).collect();
    let spectra: Vec<_> = ks.iter().map(|&k| eig2(&bloch_hamiltonian(bm, k))).collect();
    let min_gap = spectra.iter().map(|s| (s[0].0 - s[1].0).norm()).fold(f64::MAX, f64::min) / norm;

    let mut per_band = [z(); 2];
    for (band, slot) in per_band.iter_mut().enumerate() {
        let first = &spectra[0];
        let lower = if first[0].0.re <= first[1].0.re { 0 } else { 1 };
        let mut idx = if band == 0 { lower } else { 1 - lower };
        let mut rs = Vec::with_capacity(n_k);
        let mut ls = Vec::with_capacity(n_k);
        let mut prev = first[idx].0;
        for (i, s) in spectra.iter().enumerate() {
            if i > 0 {
                idx = if (s[0].0 - prev).norm() <= (s[1].0 - prev).norm() { 0 } else { 1 };
            }
            prev = s[idx].0;
            let g = gauge(i);
            let (_, r, l) = s[idx];
            rs.push([r[0] * g, r[1] * g]);
            ls.push([l[0] / g, l[1] / g]);
        }
        let dot = |l: &[C64; 2], r: &[C64; 2]| l[0] * r[0] + l[1] * r[1];
        let mut prod = C64::new(1.0, 0.0);
        for i in 0..n_k {
            let j = (i + 1) % n_k;
            let f = dot(&ls[i], &rs[j]);
            let b = dot(&ls[j], &rs[i]);
            prod *= f / (f * b).sqrt();
            // keep the running product near unit modulus
            let m = prod.norm();
            if m > 0.0 && m.is_finite() {
                prod /= m;
            }
        }
        let mut w = C64::new(0.0, 1.0 / std::f64::consts::PI) * prod.ln();
        w.re = (w.re + 0.5).rem_euclid(2.0) - 0.5;
        *slot = w;
    }
    let raw = per_band[0];
    Ok(WindingResult {
        raw,
        integer: raw.re.round() as i32,
        band: 0,
        per_band,
        min_gap,
        ill_defined: min_gap < ILL_DEFINED_GAP,
        transition: min_gap < TRANSITION_GAP,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub d_v: f64,
    pub d_w: f64,
    pub result: WindingResult,
}

/// Settings shared by every point of a geometry sweep.
#[derive(Debug, Clone)]
pub struct SweepSetup<'a> {
    pub template: &'a StackConfig,
    pub db: &'a MaterialDb,
    pub probe: Probe,
    pub range: BulkRange,
    pub n_k: usize,
}

impl SweepSetup<'_> {
    pub fn hamiltonian(&self, d_v: f64, d_w: f64) -> Result<NuclearHamiltonian> {
        let cfg = self.template.clone().with_spacers(d_v, d_w);
        let stack = build_stack(&cfg, self.db, self.probe.energy_kev)?;
        let ctx = ScatterContext::new(&stack, self.probe)?;
        build_hamiltonian(&stack, &ctx, 0.0)
    }

    pub fn winding_at(&self, d_v: f64, d_w: f64) -> Result<WindingResult> {
        winding_number(&extract_bulk(&self.hamiltonian(d_v, d_w)?, self.range)?, self.n_k)
    }
}

/// Winding number on the product grid, rows ordered by d_w then d_v.
pub fn phase_diagram(setup: &SweepSetup, dv_grid: &[f64], dw_grid: &[f64]) -> Result<Vec<PhasePoint>> {
    let pts: Vec<(f64, f64)> = dw_grid.iter().flat_map(|&w| dv_grid.iter().map(move |&v| (v, w))).collect();
    pts.par_iter().map(|&(d_v, d_w)| Ok(PhasePoint { d_v, d_w, result: setup.winding_at(d_v, d_w)? })).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn ssh_matrix(m: usize, v: C64, w: C64, diag: C64) -> DMatrix<C64> {
        let mut a = DMatrix::from_diagonal_element(m, m, diag);
        for j in 0..m - 1 {
            let t = if j % 2 == 0 { v } else { w };
            a[(j, j + 1)] = t;
            a[(j + 1, j)] = t;
        }
        a
    }

    #[test]
    fn ideal_chain_extraction_is_exact() {
        let (v, w) = (C64::new(1.3, 0.2), C64::new(0.7, -0.1));
        let bm = extract_bulk_matrix(&ssh_matrix(10, v, w, C64::new(5.0, 0.5)), BulkRange::NearestNeighbour).unwrap();
        // equal to rounding of the arithmetic mean
        assert!((bm.intracell() - v).norm() < 1e-15);
        assert!((bm.intercell() - w).norm() < 1e-15);
        assert!(bm.harmonics[0][(0, 0)].norm() < 1e-15);
        assert!(bm.spread.iter().all(|s| s.iter().all(|&x| x < 1e-15)));
        let full = extract_bulk_matrix(&ssh_matrix(12, v, w, c(1.0)), BulkRange::Cells(2)).unwrap();
        assert!((full.harmonics[1][(1, 0)] - w).norm() < 1e-15);
        assert_eq!(full.harmonics[1][(0, 1)], z());
        assert_eq!(full.harmonics[2], Matrix2::zeros());
    }

    #[test]
    fn too_few_layers_rejected() {
        let a = ssh_matrix(7, c(1.0), c(2.0), c(0.0));
        assert!(matches!(extract_bulk_matrix(&a, BulkRange::NearestNeighbour), Err(Error::Validation { .. })));
    }

    #[test]
    fn bloch_special_points() {
        let (v, w) = (c(2.0), c(0.5));
        let bm = BulkModel::ssh(v, w);
        let h0 = bloch_hamiltonian(&bm, 0.0);
        let hpi = bloch_hamiltonian(&bm, std::f64::consts::PI);
        assert!((h0[(0, 1)] - (v + w)).norm() < 1e-15);
        assert!((hpi[(0, 1)] - (v - w)).norm() < 1e-15);
    }

    #[test]
    fn textbook_phases() {
        let triv = winding_number(&BulkModel::ssh(c(2.0), c(1.0)), DEFAULT_NK).unwrap();
        let topo = winding_number(&BulkModel::ssh(c(1.0), c(2.0)), DEFAULT_NK).unwrap();
        assert_eq!(triv.integer, 0);
        assert_eq!(topo.integer, 1);
        assert!(triv.raw.norm() < 1e-9);
        assert!((topo.raw - 1.0).norm() < 1e-9);
        for r in [&triv, &topo] {
            assert!((r.per_band[0] - r.per_band[1]).norm() < 1e-9);
            assert_eq!(r.flag(), "ok");
        }
    }

    #[test]
    fn non_hermitian_couplings_still_quantized() {
        let r = winding_number(&BulkModel::ssh(C64::new(0.8, 0.3), C64::new(1.5, -0.4)), 512).unwrap();
        assert!((r.raw - 1.0).norm() < 1e-9);
    }

    #[test]
    fn gap_closure_is_ill_defined() {
        let r = winding_number(&BulkModel::ssh(c(1.0), c(1.0)), 512).unwrap();
        assert!(r.ill_defined);
        assert_eq!(r.flag(), "ill-defined");
    }
}
