//! Steady-state reflectivity from the input–output relation
//!
//!   r(Δ) = r_el − i Σ_j (Ω^(eig)_j)² / (λ_j + Δ)  =  r_el − i Ωᵀ (K + Δ)⁻¹ Ω,
//!
//! evaluated either in the quasi-eigenbasis or by one linear solve per Δ.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::greens::{GreensFunction, ScatterContext};
use crate::hamiltonian::{build_hamiltonian, rabi_vector, DriveVector, NuclearHamiltonian};
use crate::spectral::{eigensystem, quasi_eigen_rabi, EigenSystem};
use crate::stack::LayerStack;
use crate::{Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// 4001 points over ±200 Γ₀.
pub fn default_grid() -> Vec<f64> {
    uniform_grid(-200.0, 200.0, 4001)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Eigen,
    LinearSolve,
}

/// One eigenstate's contribution −i w / (Δ − center + i width).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LorentzianTerm {
    pub center: f64,
    pub width: f64,
    pub weight: C64,
}

impl LorentzianTerm {
    pub fn amplitude(&self, delta: f64) -> C64 {
        -I * self.weight / C64::new(delta - self.center, self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflectivitySpectrum {
    pub delta: Vec<f64>,
    pub amplitude: Vec<C64>,
    pub reflectivity: Vec<f64>,
    pub baseline: C64,
    pub route: Route,
    /// Grid indices where the shifted matrix was singular (amplitude NaN).
    pub skipped: Vec<usize>,
    pub terms: Vec<LorentzianTerm>,
}

impl ReflectivitySpectrum {
    fn from_amplitudes(
        delta: &[f64],
        amplitude: Vec<C64>,
        baseline: C64,
        route: Route,
        terms: Vec<LorentzianTerm>,
    ) -> Self {
        let skipped = amplitude.iter().enumerate().filter(|(_, a)| !a.is_finite()).map(|(i, _)| i).collect();
        let reflectivity = amplitude.iter().map(|a| a.norm_sqr()).collect();
        ReflectivitySpectrum { delta: delta.to_vec(), amplitude, reflectivity, baseline, route, skipped, terms }
    }
}

/// Quasi-eigenbasis evaluation; falls back to [`linear_solve_spectrum`] near
/// an exceptional point.
pub fn spectrum(
    h: &NuclearHamiltonian,
    es: &EigenSystem,
    drive: &DriveVector,
    baseline: C64,
    grid: &[f64],
) -> Result<ReflectivitySpectrum> {
    if es.is_exceptional() {
        log::warn!("eigenbasis near an exceptional point; using the direct solve");
        return linear_solve_spectrum(h, drive, baseline, grid);
    }
    let w = quasi_eigen_rabi(es, drive)?;
    let terms: Vec<LorentzianTerm> = es
        .eigenvalues
        .iter()
        .zip(&w)
        .map(|(lam, om)| LorentzianTerm { center: -lam.re - h.delta, width: lam.im, weight: om * om })
        .collect();
    let amplitude = grid.iter().map(|&d| baseline + terms.iter().map(|t| t.amplitude(d)).sum::<C64>()).collect();
    Ok(ReflectivitySpectrum::from_amplitudes(grid, amplitude, baseline, Route::Eigen, terms))
}

/// Direct evaluation: solve (K + Δ_H + Δ) x = Ω at each grid point.
pub fn linear_solve_spectrum(
    h: &NuclearHamiltonian,
    drive: &DriveVector,
    baseline: C64,
    grid: &[f64],
) -> Result<ReflectivitySpectrum> {
    let n = h.dim();
    if drive.omega.len() != n {
        return Err(Error::Dimension { expected: n, got: drive.omega.len() });
    }
    let k = h.shifted();
    let om = drive.as_vector();
    let amplitude: Vec<C64> = grid
        .par_iter()
        .map(|&d| {
            let m: DMatrix<C64> = &k + DMatrix::identity(n, n) * C64::new(d, 0.0);
            match m.lu().solve(&om) {
                Some(x) if x.iter().all(|z| z.is_finite()) => baseline - I * om.dot(&x),
                _ => C64::new(f64::NAN, f64::NAN),
            }
        })
        .collect();
    Ok(ReflectivitySpectrum::from_amplitudes(grid, amplitude, baseline, Route::LinearSolve, vec![]))
}

/// Everything needed for a spectrum of one stack at one probe.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub hamiltonian: NuclearHamiltonian,
    pub eigen: EigenSystem,
    pub drive: DriveVector,
    pub baseline: C64,
}

impl Pipeline {
    pub fn new(stack: &LayerStack, ctx: &ScatterContext, z_src: f64) -> Result<Self> {
        let hamiltonian = build_hamiltonian(stack, ctx, 0.0)?;
        let eigen = eigensystem(&hamiltonian)?;
        let drive = rabi_vector(stack, ctx, z_src)?;
        let baseline = GreensFunction::new(stack, ctx)?.electronic_reflectance_at(z_src)?;
        Ok(Pipeline { hamiltonian, eigen, drive, baseline })
    }

    pub fn spectrum(&self, grid: &[f64]) -> Result<ReflectivitySpectrum> {
        spectrum(&self.hamiltonian, &self.eigen, &self.drive, self.baseline, grid)
    }

    pub fn linear_solve(&self, grid: &[f64]) -> Result<ReflectivitySpectrum> {
        linear_solve_spectrum(&self.hamiltonian, &self.drive, self.baseline, grid)
    }
}

/// max_i |R_a − R_b| / max_i R_a over points valid in both.
pub fn max_relative_difference(a: &ReflectivitySpectrum, b: &ReflectivitySpectrum) -> f64 {
    let scale = a.reflectivity.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max);
    a.reflectivity
        .iter()
        .zip(&b.reflectivity)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

// ---------------------------------------------------------------- features

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremum {
    pub index: usize,
    pub delta: f64,
    pub value: f64,
    /// Height above the higher of the two surrounding minima (maxima only).
    pub prominence: f64,
}

/// R(Δ) = |b + a/(Δ − x0 + iγ)|².
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LorentzianFit {
    pub baseline: C64,
    pub amplitude: C64,
    pub center: f64,
    pub width: f64,
    pub r_squared: f64,
}

impl LorentzianFit {
    pub fn eval(&self, d: f64) -> f64 {
        (self.baseline + self.amplitude / C64::new(d - self.center, self.width)).norm_sqr()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureReport {
    pub maxima: Vec<Extremum>,
    /// Local minima lying between the first and last maximum.
    pub interior_minima: Vec<Extremum>,
    /// Maxima whose prominence exceeds 5 % of the spectrum's range.
    pub dominant_peaks: usize,
    pub lorentzian: Option<LorentzianFit>,
    /// R² of an intensity-level Lorentzian plus constant, for comparison.
    pub intensity_lorentzian_r_squared: Option<f64>,
}

pub fn feature_extract(rs: &ReflectivitySpectrum) -> FeatureReport {
    let (d, r): (Vec<f64>, Vec<f64>) =
        rs.delta.iter().zip(&rs.reflectivity).filter(|(_, y)| y.is_finite()).map(|(&x, &y)| (x, y)).unzip();
    let n = r.len();
    let (lo, hi) = r.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    let range = if n > 0 { hi - lo } else { 0.0 };

    let minima_idx: Vec<usize> = (1..n.saturating_sub(1)).filter(|&i| r[i] < r[i - 1] && r[i] < r[i + 1]).collect();
    let maxima: Vec<Extremum> = (1..n.saturating_sub(1))
        .filter(|&i| r[i] > r[i - 1] && r[i] > r[i + 1])
        .map(|i| {
            // prominence against the nearest higher terrain on each side
            let lmin = side_min(&r, i, true);
            let rmin = side_min(&r, i, false);
            Extremum { index: i, delta: d[i], value: r[i], prominence: r[i] - lmin.max(rmin) }
        })
        .collect();
    let interior_minima = match (maxima.first(), maxima.last()) {
        (Some(a), Some(b)) if a.index < b.index => minima_idx
            .iter()
            .filter(|&&i| i > a.index && i < b.index)
            .map(|&i| Extremum { index: i, delta: d[i], value: r[i], prominence: 0.0 })
            .collect(),
        _ => vec![],
    };
    let dominant_peaks = maxima.iter().filter(|m| range > 0.0 && m.prominence > 0.05 * range).count();
    let (lorentzian, intensity) = if maxima.is_empty() {
        (None, None)
    } else {
        (fit_amplitude_lorentzian(&d, &r), fit_intensity_lorentzian(&d, &r))
    };
    FeatureReport { maxima, interior_minima, dominant_peaks, lorentzian, intensity_lorentzian_r_squared: intensity }
}

/// Lowest value between peak i and the first point higher than it (or the end).
fn side_min(r: &[f64], i: usize, leftward: bool) -> f64 {
    let mut m = r[i];
    let mut j = i;
    loop {
        if leftward {
            if j == 0 {
                break;
            }
            j -= 1;
        } else {
            j += 1;
            if j >= r.len() {
                break;
            }
        }
        if r[j] > r[i] {
            break;
        }
        m = m.min(r[j]);
    }
    m
}

fn r_squared(y: &[f64], fit: impl Fn(usize) -> f64) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let res: f64 = y.iter().enumerate().map(|(i, v)| (v - fit(i)).powi(2)).sum();
    1.0 - res / tot
}

fn fit_amplitude_lorentzian(d: &[f64], r: &[f64]) -> Option<LorentzianFit> {
    let imax = (0..r.len()).max_by(|&a, &b| r[a].total_cmp(&r[b]))?;
    let model = |p: &[f64], x: f64| {
        let f = C64::new(p[0], p[1]) + C64::new(p[2], p[3]) / C64::new(x - p[4], p[5]);
        f.norm_sqr()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for g0 in [10.0, 30.0, 60.0, 120.0] {
        let p0 = vec![r[0].sqrt(), 0.0, 0.0, g0 * r[imax].sqrt(), d[imax], g0];
        let (p, cost) = levenberg_marquardt(p0, d, r, &model);
        if p[5] > 0.0 && best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, p));
        }
    }
    let (_, p) = best?;
    let fit = LorentzianFit {
        baseline: C64::new(p[0], p[1]),
        amplitude: C64::new(p[2], p[3]),
        center: p[4],
        width: p[5],
        r_squared: 0.0,
    };
    let r2 = r_squared(r, |i| fit.eval(d[i]));
    Some(LorentzianFit { r_squared: r2, ..fit })
}

fn fit_intensity_lorentzian(d: &[f64], r: &[f64]) -> Option<f64> {
    let imax = (0..r.len()).max_by(|&a, &b| r[a].total_cmp(&r[b]))?;
    let model = |p: &[f64], x: f64| p[0] + p[1] * p[3] * p[3] / ((x - p[2]).powi(2) + p[3] * p[3]);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for g0 in [10.0, 30.0, 60.0, 120.0] {
        let p0 = vec![r[0], r[imax] - r[0], d[imax], g0];
        let (p, cost) = levenberg_marquardt(p0, d, r, &model);
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, p));
        }
    }
    let (_, p) = best?;
    Some(r_squared(r, |i| model(&p, d[i])))
}

/// Minimizes Σ (model(p, x_i) − y_i)² with a forward-difference Jacobian.
fn levenberg_marquardt(mut p: Vec<f64>, x: &[f64], y: &[f64], model: &dyn Fn(&[f64], f64) -> f64) -> (Vec<f64>, f64) {
    let np = p.len();
    let cost = |p: &[f64]| x.iter().zip(y).map(|(&xi, &yi)| (model(p, xi) - yi).powi(2)).sum::<f64>();
    let mut c = cost(&p);
    let mut mu = 1e-3;
    for _ in 0..300 {
        let res: Vec<f64> = x.iter().zip(y).map(|(&xi, &yi)| model(&p, xi) - yi).collect();
        let mut jac = DMatrix::<f64>::zeros(x.len(), np);
        for k in 0..np {
            let h = 1e-7 * p[k].abs().max(1e-6);
            let mut q = p.clone();
            q[k] += h;
            for (i, &xi) in x.iter().enumerate() {
                jac[(i, k)] = (model(&q, xi) - model(&p, xi)) / h;
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * DVector::from_vec(res);
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += mu * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let ct = cost(&trial);
            if ct.is_finite() && ct < c {
                let rel = (c - ct) / c.max(f64::MIN_POSITIVE);
                p = trial;
                c = ct;
                mu = (mu * 0.3).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p, c)
}
