//! Plane-wave field recursion (Parratt) for a unit wave incident from above.
//!
//! Independent of the Green's-function code: it derives its own wavenumbers
//! and uses Fresnel ratios propagated from the substrate upward, then
//! transmission amplitudes propagated downward.

use crate::greens::Polarization;
use crate::stack::LayerStack;
use crate::{Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone)]
pub struct ParrattSolution {
    bounds: Vec<f64>,
    kz: Vec<C64>,
    /// Down-going amplitude at the top of each medium (z = 0 for the superstrate).
    t: Vec<C64>,
    /// Ratio up/down at the bottom of each medium (for the substrate: 0).
    y: Vec<C64>,
    thick: Vec<f64>,
}

impl ParrattSolution {
    pub fn solve(stack: &LayerStack, energy_kev: f64, angle_mrad: f64, pol: Polarization) -> Result<Self> {
        let k = 2.0 * std::f64::consts::PI * energy_kev / 1.239_841_984;
        let n_top = stack.superstrate.refractive_index();
        let sin = (angle_mrad * 1e-3).sin();
        let ns: Vec<C64> = stack.media().map(|m| m.refractive_index()).collect();
        let kz: Vec<C64> = ns
            .iter()
            .map(|&n| {
                // n² − n_top² cos²φ = (n − n_top)(n + n_top) + n_top² sin²φ
                let q = k * ((n - n_top) * (n + n_top) + n_top * n_top * sin * sin).sqrt();
                if q.im < 0.0 {
                    -q
                } else {
                    q
                }
            })
            .collect();
        let adm: Vec<C64> = ns
            .iter()
            .zip(&kz)
            .map(|(&n, &q)| match pol {
                Polarization::S => q,
                Polarization::P => q / (n * n),
            })
            .collect();
        let nm = ns.len();
        let mut thick = vec![0.0; nm];
        for (i, l) in stack.layers.iter().enumerate() {
            thick[i + 1] = l.thickness;
        }

        // x[j]: up/down ratio at the top of medium j; y[j]: at its bottom.
        let mut x = vec![C64::new(0.0, 0.0); nm];
        let mut y = vec![C64::new(0.0, 0.0); nm];
        for j in (0..nm - 1).rev() {
            let r = (adm[j] - adm[j + 1]) / (adm[j] + adm[j + 1]);
            y[j] = (r + x[j + 1]) / (1.0 + r * x[j + 1]);
            x[j] = y[j] * (2.0 * I * kz[j] * thick[j]).exp();
        }
        let mut t = vec![C64::new(1.0, 0.0); nm];
        for j in 0..nm - 1 {
            t[j + 1] = t[j] * (I * kz[j] * thick[j]).exp() * (1.0 + y[j]) / (1.0 + x[j + 1]);
        }
        Ok(ParrattSolution { bounds: stack.interfaces(), kz, t, y, thick })
    }

    pub fn reflection(&self) -> C64 {
        self.y[0]
    }

    /// Total field at z.
    pub fn field(&self, z: f64) -> C64 {
        let j = if z < 0.0 { 0 } else { self.bounds.partition_point(|&b| b <= z) };
        let top = if j == 0 { 0.0 } else { self.bounds[j - 1] };
        let (q, d) = (self.kz[j], z - top);
        // reflected part written relative to the bottom of the layer to stay bounded
        let up = if j == self.kz.len() - 1 {
            C64::new(0.0, 0.0)
        } else {
            self.y[j] * (I * q * (2.0 * self.thick[j] - d)).exp()
        };
        self.t[j] * ((I * q * d).exp() + up)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::{GreensFunction, Probe, ScatterContext};
    use crate::materials::MaterialDb;
    use crate::stack::{build_stack, StackConfig};

    const E: f64 = 14.413;

    #[test]
    fn agrees_with_greens_field() {
        let s = build_stack(&StackConfig::default().with_spacers(2.8, 3.5), &MaterialDb::builtin(), E).unwrap();
        for pol in [Polarization::S, Polarization::P] {
            let p = ParrattSolution::solve(&s, E, 2.4157, pol).unwrap();
            let ctx = ScatterContext::new(&s, Probe { polarization: pol, ..Probe::new(E, 2.4157) }).unwrap();
            let g = GreensFunction::new(&s, &ctx).unwrap();
            assert!((p.reflection() - g.reflection()).norm() < 1e-10);
            let mut z = -5.0;
            while z < s.total_thickness() + 5.0 {
                let (a, b) = (p.field(z), g.field(z).unwrap());
                assert!((a - b).norm() < 1e-9 * a.norm().max(1e-6), "z = {z}: {a} vs {b}");
                z += 0.37;
            }
        }
    }
}
