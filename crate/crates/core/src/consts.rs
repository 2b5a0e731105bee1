//! Physical constants (CODATA 2018, SI) and unit helpers.

pub const HBAR_EV_S: f64 = 6.582_119_569e-16;
pub const HBAR_J_S: f64 = 1.054_571_817e-34;
pub const HC_EV_NM: f64 = 1_239.841_984;
pub const C_M_S: f64 = 299_792_458.0;
pub const MU0: f64 = 1.256_637_062_12e-6;
pub const EV_J: f64 = 1.602_176_634e-19;

/// Vacuum wavenumber in 1/nm for a photon energy in keV.
pub fn wavenumber_per_nm(energy_kev: f64) -> f64 {
    2.0 * std::f64::consts::PI * energy_kev * 1e3 / HC_EV_NM
}

/// Angular frequency in rad/s for a photon energy in keV.
pub fn angular_frequency(energy_kev: f64) -> f64 {
    energy_kev * 1e3 / HBAR_EV_S
}
