//! Scalar Green's function of a planar multilayer.
//!
//! Solves ∂z(a ∂z G) + a q² G = −δ(z − z') with a = 1 (s) or 1/n² (p) and
//! q = sqrt(n²k² − p²), Im q ≥ 0. G is built from two homogeneous solutions:
//! ψ< outgoing into the superstrate and ψ> outgoing into the substrate,
//! G(z, z') = ψ<(z<) ψ>(z>) / W. Both are propagated interface by interface
//! with their exponential scale kept separately as a logarithm, so thick or
//! evanescent layers cannot overflow.

use serde::{Deserialize, Serialize};

use crate::consts::wavenumber_per_nm;
use crate::stack::LayerStack;
use crate::{Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Default source position, 0.1 nm above the top surface.
pub const DEFAULT_Z_SRC_NM: f64 = -0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    #[default]
    S,
    P,
}

/// Probe parameters independent of the stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub energy_kev: f64,
    pub angle_mrad: f64,
    pub polarization: Polarization,
}

impl Probe {
    pub fn new(energy_kev: f64, angle_mrad: f64) -> Self {
        Probe { energy_kev, angle_mrad, polarization: Polarization::S }
    }
}

/// Probe resolved against a stack: wavenumbers of every medium.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterContext {
    pub probe: Probe,
    /// Vacuum wavenumber (1/nm).
    pub k: f64,
    /// In-plane wavenumber n_top k cos φ (1/nm).
    pub p_rho: C64,
    /// q per medium: superstrate, layers…, substrate.
    pub kz: Vec<C64>,
    /// Operator weight a per medium (1 or 1/n²).
    pub weight: Vec<C64>,
}

/// Principal square root with the branch Im ≥ 0.
pub fn kz_branch(n: C64, k: f64, p: C64) -> C64 {
    branch((n * n * k * k - p * p).sqrt())
}

fn branch(q: C64) -> C64 {
    if q.im < 0.0 || (q.im == 0.0 && q.re < 0.0) {
        -q
    } else {
        q
    }
}

impl ScatterContext {
    pub fn new(stack: &LayerStack, probe: Probe) -> Result<Self> {
        if !(probe.energy_kev > 0.0) {
            return Err(Error::validation("energy_kev", "must be > 0"));
        }
        if !(probe.angle_mrad > 0.0 && probe.angle_mrad < 1e3 * std::f64::consts::FRAC_PI_2) {
            return Err(Error::validation("angle_mrad", "must lie in (0, π/2) rad"));
        }
        let k = wavenumber_per_nm(probe.energy_kev);
        let n_top = stack.superstrate.refractive_index();
        let p_rho = n_top * k * (probe.angle_mrad * 1e-3).cos();
        let sin2 = (probe.angle_mrad * 1e-3).sin().powi(2);
        let mut kz = Vec::new();
        let mut weight = Vec::new();
        for m in stack.media() {
            let n = m.refractive_index();
            // n²k² − p² regrouped to avoid cancelling two O(k²) terms
            let q2 = (n - n_top) * (n + n_top) + n_top * n_top * sin2;
            kz.push(branch(k * q2.sqrt()));
            weight.push(match probe.polarization {
                Polarization::S => C64::new(1.0, 0.0),
                Polarization::P => 1.0 / (n * n),
            });
        }
        Ok(ScatterContext { probe, k, p_rho, kz, weight })
    }

    /// Admittance a·q of a medium.
    pub fn admittance(&self, medium: usize) -> C64 {
        self.weight[medium] * self.kz[medium]
    }
}

/// Amplitudes of e^{+iq(z−z_ref)} and e^{−iq(z−z_ref)} times e^{ln_scale}.
#[derive(Debug, Clone, Copy)]
struct Wave {
    a: C64,
    b: C64,
    ln_scale: f64,
}

impl Wave {
    fn renormalized(a: C64, b: C64, ln_scale: f64) -> Wave {
        let m = a.norm().max(b.norm());
        if m == 0.0 || !m.is_finite() {
            return Wave { a, b, ln_scale };
        }
        Wave { a: a / m, b: b / m, ln_scale: ln_scale + m.ln() }
    }
}

/// e^{±iqx} split into a unimodular-or-smaller mantissa and a common log scale.
fn split_exp(q: C64, x: f64) -> (C64, C64, f64) {
    let phase = q * x;
    let s = phase.im.abs();
    ((I * phase - s).exp(), (-I * phase - s).exp(), s)
}

/// Mantissa·e^{scale} without forming the full exponential until the end.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    m: C64,
    ln: f64,
}

impl Scaled {
    fn value(self) -> C64 {
        if self.m == C64::new(0.0, 0.0) {
            return self.m;
        }
        self.m * self.ln.exp()
    }
}

#[derive(Debug, Clone)]
pub struct GreensFunction {
    ctx: ScatterContext,
    /// Interface positions (len = layers + 1).
    bounds: Vec<f64>,
    /// Reference plane of each medium.
    z_ref: Vec<f64>,
    lower: Vec<Wave>,
    upper: Vec<Wave>,
    /// −2i a0 q0 · A>(superstrate) as a scaled value.
    wronskian: Scaled,
}

impl GreensFunction {
    pub fn new(stack: &LayerStack, ctx: &ScatterContext) -> Result<Self> {
        let nm = stack.layers.len() + 2;
        if ctx.kz.len() != nm {
            return Err(Error::Dimension { expected: nm, got: ctx.kz.len() });
        }
        let bounds = stack.interfaces();
        let mut z_ref = vec![0.0];
        z_ref.extend(stack.layers.iter().map(|l| l.z_top));
        z_ref.push(*bounds.last().unwrap());
        let thickness = |m: usize| if m == 0 || m == nm - 1 { 0.0 } else { stack.layers[m - 1].thickness };

        // ψ<: e^{−iq0 z} in the superstrate, carried downward.
        let mut lower = vec![Wave { a: C64::new(0.0, 0.0), b: C64::new(1.0, 0.0), ln_scale: 0.0 }];
        for m in 0..nm - 1 {
            let w = lower[m];
            let (ep, em, s) = split_exp(ctx.kz[m], thickness(m));
            let (ta, tb) = (mul_nz(w.a, ep), mul_nz(w.b, em));
            lower.push(cross(ta, tb, w.ln_scale + s, ctx.admittance(m), ctx.admittance(m + 1)));
        }

        // ψ>: e^{iq(z − z_bottom)} in the substrate, carried upward.
        let mut upper = vec![Wave { a: C64::new(0.0, 0.0), b: C64::new(0.0, 0.0), ln_scale: 0.0 }; nm];
        upper[nm - 1] = Wave { a: C64::new(1.0, 0.0), b: C64::new(0.0, 0.0), ln_scale: 0.0 };
        for m in (0..nm - 1).rev() {
            let w = upper[m + 1];
            // values at the top of medium m+1 = bottom of medium m
            let at_bottom = cross(w.a, w.b, w.ln_scale, ctx.admittance(m + 1), ctx.admittance(m));
            let (ep, em, s) = split_exp(ctx.kz[m], thickness(m));
            // A e^{iqt} = α → A = α e^{−iqt}; B = β e^{iqt}
            upper[m] = Wave::renormalized(mul_nz(at_bottom.a, em), mul_nz(at_bottom.b, ep), at_bottom.ln_scale + s);
        }

        let top = upper[0];
        let wronskian = Scaled { m: -2.0 * I * ctx.admittance(0) * top.a, ln: top.ln_scale };
        if wronskian.m.norm() == 0.0 || !wronskian.m.is_finite() {
            return Err(Error::Numeric("vanishing Wronskian (guided-mode pole on the real axis)".into()));
        }
        Ok(GreensFunction { ctx: ctx.clone(), bounds, z_ref, lower, upper, wronskian })
    }

    pub fn context(&self) -> &ScatterContext {
        &self.ctx
    }

    fn medium(&self, z: f64) -> Result<usize> {
        if !z.is_finite() {
            return Err(Error::Domain(z));
        }
        if z < 0.0 {
            return Ok(0);
        }
        // partition_point: number of bounds ≤ z
        Ok(self.bounds.partition_point(|&b| b <= z).min(self.bounds.len()))
    }

    fn eval(&self, waves: &[Wave], z: f64) -> Result<(Scaled, Scaled)> {
        let m = self.medium(z)?;
        let w = waves[m];
        let q = self.ctx.kz[m];
        let (ep, em, s) = split_exp(q, z - self.z_ref[m]);
        let (ta, tb) = (mul_nz(w.a, ep), mul_nz(w.b, em));
        let aq = self.ctx.admittance(m);
        let ln = w.ln_scale + s;
        Ok((Scaled { m: ta + tb, ln }, Scaled { m: I * aq * (ta - tb), ln }))
    }

    /// G(z, z') in nm.
    pub fn greens(&self, z: f64, zp: f64) -> Result<C64> {
        let (lo, hi) = if z <= zp { (z, zp) } else { (zp, z) };
        let (l, _) = self.eval(&self.lower, lo)?;
        let (u, _) = self.eval(&self.upper, hi)?;
        Ok(Scaled { m: l.m * u.m / self.wronskian.m, ln: l.ln + u.ln - self.wronskian.ln }.value())
    }

    /// a ∂G/∂z at (z, z'), one-sided: z = z' is taken from below the source.
    pub fn flux(&self, z: f64, zp: f64) -> Result<C64> {
        let s = if z < zp {
            let (_, dl) = self.eval(&self.lower, z)?;
            let (u, _) = self.eval(&self.upper, zp)?;
            Scaled { m: dl.m * u.m, ln: dl.ln + u.ln }
        } else {
            let (l, _) = self.eval(&self.lower, zp)?;
            let (_, du) = self.eval(&self.upper, z)?;
            Scaled { m: l.m * du.m, ln: l.ln + du.ln }
        };
        Ok(Scaled { m: s.m / self.wronskian.m, ln: s.ln - self.wronskian.ln }.value())
    }

    /// Total field u(z) for a unit plane wave e^{iq0 z} incident from above.
    pub fn field(&self, z: f64) -> Result<C64> {
        let (u, _) = self.eval(&self.upper, z)?;
        let top = self.upper[0];
        Ok(Scaled { m: u.m / top.a, ln: u.ln - top.ln_scale }.value())
    }

    /// Reflection amplitude referenced to z = 0 (ratio of the up- to the
    /// down-going superstrate amplitude).
    pub fn reflection(&self) -> C64 {
        let top = self.upper[0];
        top.b / top.a
    }

    /// Transmission amplitude: substrate wave at the bottom interface over the
    /// incident wave at z = 0.
    pub fn transmission(&self) -> C64 {
        let top = self.upper[0];
        Scaled { m: 1.0 / top.a, ln: -top.ln_scale }.value()
    }
}

/// Carries (A, B) across an interface from admittance y to y'.
fn cross(a: C64, b: C64, ln_scale: f64, y: C64, y2: C64) -> Wave {
    let v = a + b;
    let ratio = y / y2;
    let d = ratio * (a - b);
    Wave::renormalized(0.5 * (v + d), 0.5 * (v - d), ln_scale)
}

/// Product that stays zero when one factor is zero, avoiding 0·∞.
fn mul_nz(x: C64, y: C64) -> C64 {
    if x == C64::new(0.0, 0.0) {
        x
    } else {
        x * y
    }
}

fn check_source(z_src: f64) -> Result<()> {
    if z_src < 0.0 && z_src.is_finite() {
        Ok(())
    } else {
        Err(Error::SourcePlacement(z_src))
    }
}

pub fn greens(stack: &LayerStack, ctx: &ScatterContext, z: f64, zp: f64) -> Result<C64> {
    GreensFunction::new(stack, ctx)?.greens(z, zp)
}

/// Sampled cavity field B_1D(z)/B_in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldProfile {
    pub z_src: f64,
    pub z: Vec<f64>,
    pub b: Vec<C64>,
}

impl GreensFunction {
    /// B_1D(z)/B_in from a source at z_src in the superstrate:
    /// −2i a0 q0 e^{iq0 z_src} G(z, z_src), valid for z ≥ z_src.
    pub fn cavity_field_at(&self, z: f64, z_src: f64) -> Result<C64> {
        check_source(z_src)?;
        if z < z_src {
            return Err(Error::Domain(z));
        }
        let y0 = self.ctx.admittance(0);
        let q0 = self.ctx.kz[0];
        Ok(-2.0 * I * y0 * (I * q0 * z_src).exp() * self.greens(z, z_src)?)
    }

    /// B_cav(z_src)/B_in with the incident phase at z_src divided out, so the
    /// result does not depend on z_src.
    pub fn electronic_reflectance_at(&self, z_src: f64) -> Result<C64> {
        let q0 = self.ctx.kz[0];
        let phase = (I * q0 * z_src).exp();
        Ok((self.cavity_field_at(z_src, z_src)? - phase) * phase)
    }
}

pub fn cavity_field(stack: &LayerStack, ctx: &ScatterContext, z_src: f64, z: &[f64]) -> Result<FieldProfile> {
    let g = GreensFunction::new(stack, ctx)?;
    let b = z.iter().map(|&zz| g.cavity_field_at(zz, z_src)).collect::<Result<_>>()?;
    Ok(FieldProfile { z_src, z: z.to_vec(), b })
}

pub fn electronic_reflectance(stack: &LayerStack, ctx: &ScatterContext, z_src: f64) -> Result<C64> {
    GreensFunction::new(stack, ctx)?.electronic_reflectance_at(z_src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{Material, MaterialDb};
    use crate::stack::{build_stack, StackConfig};
    use approx::assert_relative_eq;

    const E: f64 = 14.413;

    fn medium(name: &str, delta: f64, beta: f64) -> Material {
        Material { name: name.into(), delta, beta, nuclear: None }
    }

    fn vacuum_stack() -> LayerStack {
        LayerStack::from_layers(Material::vacuum(), vec![(Material::vacuum(), 10.0)], Material::vacuum()).unwrap()
    }

    fn canonical_stack(dv: f64) -> LayerStack {
        build_stack(&StackConfig::default().with_spacers(dv, 3.5), &MaterialDb::builtin(), E).unwrap()
    }

    #[test]
    fn free_space_closed_form() {
        let s = vacuum_stack();
        let ctx = ScatterContext::new(&s, Probe::new(E, 2.4)).unwrap();
        let g = GreensFunction::new(&s, &ctx).unwrap();
        let q = ctx.kz[0];
        for &(z, zp) in &[(-3.0, 4.0), (1.0, 1.0), (12.0, -7.5), (5.5, 20.0)] {
            let expected = I * (I * q * f64::abs(z - zp)).exp() / (2.0 * q);
            let got = g.greens(z, zp).unwrap();
            assert!((got - expected).norm() <= 1e-14 * expected.norm(), "{got} vs {expected}");
        }
    }

    #[test]
    fn vacuum_field_has_unit_modulus_and_no_reflection() {
        let s = vacuum_stack();
        let ctx = ScatterContext::new(&s, Probe::new(E, 3.0)).unwrap();
        let prof = cavity_field(&s, &ctx, -0.1, &[-0.05, 0.0, 3.0, 9.9, 25.0]).unwrap();
        for b in prof.b {
            assert_relative_eq!(b.norm(), 1.0, epsilon = 1e-12);
        }
        assert!(electronic_reflectance(&s, &ctx, -0.1).unwrap().norm() < 1e-14);
    }

    #[test]
    fn half_space_matches_fresnel_two_term_formula() {
        let pt = MaterialDb::builtin().get("Pt", E).unwrap();
        let s = LayerStack::from_layers(Material::vacuum(), vec![], pt).unwrap();
        for pol in [Polarization::S, Polarization::P] {
            let ctx = ScatterContext::new(&s, Probe { polarization: pol, ..Probe::new(E, 2.0) }).unwrap();
            let g = GreensFunction::new(&s, &ctx).unwrap();
            let (y0, y1) = (ctx.admittance(0), ctx.admittance(1));
            let r = (y0 - y1) / (y0 + y1);
            let q = ctx.kz[0];
            let a0 = ctx.weight[0];
            for &(z, zp) in &[(-1.0, -2.0), (-10.0, -0.3), (-5.0, -5.0)] {
                let expected = I / (2.0 * a0 * q) * ((I * q * f64::abs(z - zp)).exp() + r * (-I * q * (z + zp)).exp());
                let got = g.greens(z, zp).unwrap();
                assert!((got - expected).norm() < 1e-12 * expected.norm());
            }
        }
    }

    #[test]
    fn total_external_reflection_below_critical_angle() {
        let pt = MaterialDb::builtin().get("Pt", E).unwrap();
        let s = LayerStack::from_layers(Material::vacuum(), vec![], pt.clone()).unwrap();
        let crit = (2.0 * pt.delta).sqrt() * 1e3;
        let ctx = ScatterContext::new(&s, Probe::new(E, 0.3 * crit)).unwrap();
        let r = electronic_reflectance(&s, &ctx, -0.1).unwrap();
        // oracle: Fresnel coefficient at the same p_rho
        let q0 = ctx.kz[0];
        let q1 = kz_branch(pt.refractive_index(), ctx.k, ctx.p_rho);
        let fresnel = (q0 - q1) / (q0 + q1);
        assert!((r - fresnel).norm() < 1e-12);
        assert!(r.norm() > 0.9);
    }

    #[test]
    fn reciprocity_and_continuity_in_canonical_stack() {
        let s = canonical_stack(4.9);
        let ctx = ScatterContext::new(&s, Probe::new(E, 2.4067)).unwrap();
        let g = GreensFunction::new(&s, &ctx).unwrap();
        let zs = s.resonant_layer_centers.clone();
        for &a in &zs {
            for &b in &zs {
                let (x, y) = (g.greens(a, b).unwrap(), g.greens(b, a).unwrap());
                assert!((x - y).norm() <= 1e-10 * x.norm());
            }
        }
        let eps = 1e-6;
        for &zi in &s.interfaces() {
            let (up, dn) = (g.greens(zi - eps, zs[3]).unwrap(), g.greens(zi + eps, zs[3]).unwrap());
            assert!((up - dn).norm() < 1e-4 * up.norm().max(1e-3), "discontinuity at {zi}");
        }
    }

    #[test]
    fn flux_jump_at_source() {
        let s = canonical_stack(2.8);
        let ctx = ScatterContext::new(&s, Probe::new(E, 2.4067)).unwrap();
        let g = GreensFunction::new(&s, &ctx).unwrap();
        let zp = s.resonant_layer_centers[2];
        let jump = g.flux(zp + 1e-9, zp).unwrap() - g.flux(zp - 1e-9, zp).unwrap();
        assert!((jump + 1.0).norm() < 1e-6, "jump {jump}");
        // finite-difference slope agrees with the analytic flux
        let h = 1e-5;
        let fd = (g.greens(zp + 2.0 * h, zp).unwrap() - g.greens(zp + h, zp).unwrap()) / h;
        let an = g.flux(zp + 1.5 * h, zp).unwrap();
        assert!((fd - an).norm() < 1e-4 * an.norm());
    }

    #[test]
    fn lossless_flux_conservation() {
        let db = MaterialDb::builtin();
        let lossless = |n: &str| {
            let m = db.get(n, E).unwrap();
            medium(n, m.delta, 0.0)
        };
        let sub = medium("sub", 1e-6, 0.0);
        let slabs = vec![(lossless("Pt"), 2.5), (lossless("C"), 20.0), (lossless("Pt"), 3.0), (lossless("C"), 7.0)];
        let s = LayerStack::from_layers(Material::vacuum(), slabs, sub).unwrap();
        for angle in [1.0, 2.4067, 4.0, 9.0] {
            for pol in [Polarization::S, Polarization::P] {
                let ctx = ScatterContext::new(&s, Probe { polarization: pol, ..Probe::new(E, angle) }).unwrap();
                let g = GreensFunction::new(&s, &ctx).unwrap();
                let (r, t) = (g.reflection(), g.transmission());
                let n = ctx.kz.len() - 1;
                let ratio = ctx.admittance(n).re / ctx.admittance(0).re;
                assert!((r.norm_sqr() + t.norm_sqr() * ratio - 1.0).abs() < 1e-8, "angle {angle}");
            }
        }
    }

    #[test]
    fn reflectance_is_source_position_independent() {
        let s = canonical_stack(2.8);
        let ctx = ScatterContext::new(&s, Probe::new(E, 2.4157)).unwrap();
        let g = GreensFunction::new(&s, &ctx).unwrap();
        let r0 = g.electronic_reflectance_at(-0.1).unwrap();
        for zs in [-0.01, -3.0, -50.0] {
            assert!((g.electronic_reflectance_at(zs).unwrap() - r0).norm() < 1e-10);
        }
        assert!((g.reflection() - r0).norm() < 1e-10);
    }

    #[test]
    fn deep_absorbing_stack_does_not_overflow() {
        let pt = MaterialDb::builtin().get("Pt", E).unwrap();
        let s = LayerStack::from_layers(Material::vacuum(), vec![(pt.clone(), 5000.0)], Material::vacuum()).unwrap();
        let ctx = ScatterContext::new(&s, Probe::new(E, 1.0)).unwrap();
        let g = GreensFunction::new(&s, &ctx).unwrap();
        let v = g.greens(10.0, 4990.0).unwrap();
        assert!(v.is_finite());
        assert!(g.greens(20.0, 20.0).unwrap().norm() > 0.0);
    }

    #[test]
    fn source_inside_stack_is_rejected() {
        let s = canonical_stack(4.9);
        let ctx = ScatterContext::new(&s, Probe::new(E, 2.4)).unwrap();
        assert!(matches!(cavity_field(&s, &ctx, 5.0, &[6.0]), Err(Error::SourcePlacement(_))));
    }
}
