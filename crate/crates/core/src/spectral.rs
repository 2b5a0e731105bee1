//! Eigenanalysis of the complex symmetric coupling matrix.
//!
//! For K = Kᵀ the left eigenvectors are the unconjugated right ones, so the
//! biorthogonal pairing uses the bilinear form φᵀψ.

use nalgebra::{DMatrix, DVector, Schur};
use serde::Serialize;

use crate::hamiltonian::{DriveVector, NuclearHamiltonian};
use crate::{Error, Result, C64};

/// Below this |φᵀφ|/‖φ‖² a state is treated as near an exceptional point.
pub const EXCEPTIONAL_THRESHOLD: f64 = 1e-6;

/// Edge weight above which a state counts as edge-localized.
pub const EDGE_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Sorted by descending real part.
    pub eigenvalues: Vec<C64>,
    /// Columns φ_j with unit 2-norm.
    pub right_vectors: DMatrix<C64>,
    /// φ_jᵀφ_j.
    pub biortho_norms: Vec<C64>,
    /// Row j, column l: c_j^(l) = φ_j(l)/sqrt(φ_jᵀφ_j).
    pub coefficients: DMatrix<C64>,
    pub exceptional: Vec<bool>,
    /// Diagonal of the decomposed matrix.
    pub diagonal: Vec<C64>,
}

pub fn eigensystem(h: &NuclearHamiltonian) -> Result<EigenSystem> {
    if h.delta != 0.0 {
        log::debug!("eigensystem: ignoring Δ = {} (eigen work runs at Δ = 0)", h.delta);
    }
    decompose(&h.matrix)
}

/// Eigendecomposition of any square complex symmetric matrix.
pub fn decompose(a: &DMatrix<C64>) -> Result<EigenSystem> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension { expected: n, got: a.ncols() });
    }
    if n == 0 {
        return Err(Error::Numeric("empty matrix".into()));
    }
    let scale = a.iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100 * n * n)
        .ok_or_else(|| Error::Numeric(format!("Schur iteration did not converge (n = {n}, ‖A‖max = {scale:e})")))?;
    let (q, t) = schur.unpack();

    let mut pairs: Vec<(C64, DVector<C64>)> = (0..n)
        .map(|k| {
            let y = triangular_eigenvector(&t, k, scale);
            let mut x = &q * y;
            let norm = x.norm();
            x /= C64::new(norm, 0.0);
            (t[(k, k)], x)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(b.0.im.total_cmp(&a.0.im)));

    let mut right = DMatrix::zeros(n, n);
    let mut coefficients = DMatrix::zeros(n, n);
    let mut norms = Vec::with_capacity(n);
    let mut exceptional = Vec::with_capacity(n);
    for (j, (_, x)) in pairs.iter().enumerate() {
        let b = x.transpose() * x;
        let b = b[(0, 0)];
        let ep = b.norm() < EXCEPTIONAL_THRESHOLD;
        if ep {
            log::warn!("eigenstate {j}: |φᵀφ| = {:.3e}, close to an exceptional point", b.norm());
        }
        let s = b.sqrt();
        for l in 0..n {
            right[(l, j)] = x[l];
            coefficients[(j, l)] = x[l] / s;
        }
        norms.push(b);
        exceptional.push(ep);
    }
    Ok(EigenSystem {
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        right_vectors: right,
        biortho_norms: norms,
        coefficients,
        exceptional,
        diagonal: a.diagonal().iter().copied().collect(),
    })
}

/// Solves (T − t_kk)y = 0 with y_k = 1 by back substitution.
fn triangular_eigenvector(t: &DMatrix<C64>, k: usize, scale: f64) -> DVector<C64> {
    let n = t.nrows();
    let lam = t[(k, k)];
    let tiny = f64::EPSILON * scale;
    let mut y = DVector::zeros(n);
    y[k] = C64::new(1.0, 0.0);
    for i in (0..k).rev() {
        let mut s = C64::new(0.0, 0.0);
        for j in i + 1..=k {
            s += t[(i, j)] * y[j];
        }
        let mut d = t[(i, i)] - lam;
        if d.norm() < tiny {
            d = C64::new(tiny, 0.0);
        }
        y[i] = -s / d;
    }
    y
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_exceptional(&self) -> bool {
        self.exceptional.iter().any(|&e| e)
    }

    /// max_j ‖Aφ_j − λ_jφ_j‖ / ‖A‖_F.
    pub fn max_residual(&self, a: &DMatrix<C64>) -> f64 {
        let an = a.norm();
        (0..self.dim())
            .map(|j| {
                let phi = self.right_vectors.column(j);
                (a * phi - phi * self.eigenvalues[j]).norm() / an
            })
            .fold(0.0, f64::max)
    }

    /// max |C Cᵀ − I|: biorthonormality of the normalized vectors.
    pub fn biorthogonality_defect(&self) -> f64 {
        let c = &self.coefficients;
        let n = self.dim();
        (c * c.transpose() - DMatrix::<C64>::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// max |Cᵀ C − I|: Σ_j c_j^(l) c_j^(l') = δ_ll'.
    pub fn completeness_defect(&self) -> f64 {
        let c = &self.coefficients;
        let n = self.dim();
        (c.transpose() * c - DMatrix::<C64>::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        self.eigenvalues.iter().sum()
    }
}

/// Ω^(eig)_j = Σ_l c_j^(l) Ω_l.
pub fn quasi_eigen_rabi(es: &EigenSystem, drive: &DriveVector) -> Result<Vec<C64>> {
    if drive.omega.len() != es.dim() {
        return Err(Error::Dimension { expected: es.dim(), got: drive.omega.len() });
    }
    Ok((&es.coefficients * drive.as_vector()).iter().copied().collect())
}

/// Σ|Ω^(eig)|² / Σ|Ω|² − 1; zero for a unitary eigenbasis.
pub fn non_normality(omega_eig: &[C64], drive: &DriveVector) -> f64 {
    let a: f64 = omega_eig.iter().map(|z| z.norm_sqr()).sum();
    let b: f64 = drive.omega.iter().map(|z| z.norm_sqr()).sum();
    a / b - 1.0
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeReport {
    /// weights[j][l] = |φ_j(l)|² / Σ_l |φ_j(l)|².
    pub weights: Vec<Vec<f64>>,
    /// Weight on the first and last layer per state.
    pub edge_weight: Vec<f64>,
    /// The two states closest in Re to the mean interior self-coupling.
    pub midgap: Vec<usize>,
    pub midgap_reference: f64,
    pub edge_localized: Vec<usize>,
}

pub fn edge_report(es: &EigenSystem) -> EdgeReport {
    let n = es.dim();
    let weights: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let col = es.right_vectors.column(j);
            let tot: f64 = col.iter().map(|z| z.norm_sqr()).sum();
            col.iter().map(|z| z.norm_sqr() / tot).collect()
        })
        .collect();
    let edge_weight: Vec<f64> = weights.iter().map(|w| if n == 1 { w[0] } else { w[0] + w[n - 1] }).collect();
    let interior: Vec<f64> = if n >= 3 {
        es.diagonal[1..n - 1].iter().map(|z| z.re).collect()
    } else {
        es.diagonal.iter().map(|z| z.re).collect()
    };
    let reference = interior.iter().sum::<f64>() / interior.len() as f64;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        (es.eigenvalues[a].re - reference).abs().total_cmp(&(es.eigenvalues[b].re - reference).abs())
    });
    order.truncate(2.min(n));
    order.sort_unstable();
    let edge_localized = (0..n).filter(|&j| edge_weight[j] > EDGE_THRESHOLD).collect();
    EdgeReport { weights, edge_weight, midgap: order, midgap_reference: reference, edge_localized }
}

/// True when the real parts of `states` lie strictly inside the largest gap
/// separating the remaining eigenvalues into a lower and an upper band.
pub fn inside_bulk_gap(es: &EigenSystem, states: &[usize]) -> bool {
    let mut bulk: Vec<f64> = (0..es.dim()).filter(|j| !states.contains(j)).map(|j| es.eigenvalues[j].re).collect();
    if bulk.len() < 2 {
        return false;
    }
    bulk.sort_by(f64::total_cmp);
    let (i, _) = bulk.windows(2).enumerate().map(|(i, w)| (i, w[1] - w[0])).fold((0, f64::MIN), |acc, x| {
        if x.1 > acc.1 {
            x
        } else {
            acc
        }
    });
    let (lo, hi) = (bulk[i], bulk[i + 1]);
    states.iter().all(|&j| {
        let x = es.eigenvalues[j].re;
        x > lo && x < hi
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<C64> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let z = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                a[(i, j)] = z;
                a[(j, i)] = z;
            }
        }
        a
    }

    #[test]
    fn dimer_closed_form() {
        let (a, b) = (c(3.0, 0.7), c(1.5, -0.2));
        let m = DMatrix::from_row_slice(2, 2, &[a, b, b, a]);
        let es = decompose(&m).unwrap();
        assert!((es.eigenvalues[0] - (a + b)).norm() < 1e-13);
        assert!((es.eigenvalues[1] - (a - b)).norm() < 1e-13);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = es.right_vectors.column(0);
        let v1 = es.right_vectors.column(1);
        // up to a global phase
        assert!((v0[0] / v0[1] - 1.0).norm() < 1e-12 && (v0[0].norm() - h).abs() < 1e-12);
        assert!((v1[0] / v1[1] + 1.0).norm() < 1e-12);
        let r = edge_report(&es);
        for w in &r.weights {
            assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
        }
    }

    /// Aberth–Ehrlich roots of det(zI − A) using p'/p = tr((zI − A)⁻¹).
    fn aberth_roots(a: &DMatrix<C64>) -> Vec<C64> {
        let n = a.nrows();
        let r = a.iter().map(|z| z.norm()).sum::<f64>();
        let mut z: Vec<C64> =
            (0..n).map(|k| C64::from_polar(r, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64)).collect();
        for _ in 0..500 {
            let mut moved = 0.0f64;
            for k in 0..n {
                let m = DMatrix::<C64>::identity(n, n) * z[k] - a;
                let Some(inv) = m.lu().try_inverse() else { continue };
                let ratio = inv.trace();
                let repulsion: C64 = (0..n).filter(|&j| j != k).map(|j| 1.0 / (z[k] - z[j])).sum();
                let w = 1.0 / (ratio - repulsion);
                z[k] -= w;
                moved = moved.max(w.norm());
            }
            if moved < 1e-15 * r {
                break;
            }
        }
        z
    }

    #[test]
    fn random_matrix_matches_polynomial_roots() {
        let a = random_symmetric(8, 7);
        let es = decompose(&a).unwrap();
        let roots = aberth_roots(&a);
        for lam in &es.eigenvalues {
            let d = roots.iter().map(|r| (r - lam).norm()).fold(f64::MAX, f64::min);
            assert!(d < 1e-8, "{lam} unmatched ({d:e})");
        }
    }

    #[test]
    fn contracts_on_random_matrices() {
        for seed in 0..20 {
            let a = random_symmetric(10, seed);
            let es = decompose(&a).unwrap();
            assert!(es.max_residual(&a) < 1e-10);
            assert!(es.biorthogonality_defect() < 1e-8);
            assert!(es.completeness_defect() < 1e-8);
            assert!((es.trace() - a.trace()).norm() < 1e-10 * a.trace().norm().max(1.0));
            assert!(es.eigenvalues.windows(2).all(|w| w[0].re >= w[1].re));
        }
    }

    #[test]
    fn diagonal_matrix_leaves_drive_unchanged() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![c(3.0, 0.5), c(1.0, 0.2), c(-2.0, 0.9)]));
        let es = decompose(&d).unwrap();
        let drive = DriveVector { omega: vec![c(0.3, 0.1), c(-0.2, 0.4), c(1.0, 0.0)] };
        let w = quasi_eigen_rabi(&es, &drive).unwrap();
        // states are sorted by Re λ, so Ω^(eig) is Ω in that order up to sign
        for (j, &l) in [0usize, 1, 2].iter().enumerate() {
            assert!((w[j] * w[j] - drive.omega[l] * drive.omega[l]).norm() < 1e-14);
        }
        assert!(non_normality(&w, &drive).abs() < 1e-14);
    }

    #[test]
    fn drive_dimension_mismatch() {
        let es = decompose(&random_symmetric(3, 1)).unwrap();
        let drive = DriveVector { omega: vec![c(1.0, 0.0); 4] };
        assert!(matches!(quasi_eigen_rabi(&es, &drive), Err(Error::Dimension { .. })));
    }

    #[test]
    fn exceptional_point_is_flagged() {
        // [[1, i], [i, -1]] is defective: eigenvector (1, i) has φᵀφ = 0
        let i = c(0.0, 1.0);
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), i, i, c(-1.0, 0.0)]);
        assert!(decompose(&m).unwrap().is_exceptional());
    }
}
