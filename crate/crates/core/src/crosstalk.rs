//! Scattered-photon crosstalk scaling laws: fluorescence from one ion
//! resonantly (or far off resonance) exciting its neighbor.
//!
//! Chain: scattered-photon rate → intensity at the neighbor → induced
//! Rabi frequency via the saturation intensity → steady-state excitation
//! probability → error accumulated over the exposure time.

use crate::error::{domain, Result};

pub const HBAR: f64 = 1.0546e-34;
pub const LIGHT_SPEED: f64 = 2.998e8;

/// One crosstalk exposure: a source ion scattering `scatter_rate`
/// photons/s of wavelength `lambda` for a duration `tau`, seen by a
/// target ion at distance `d` whose transition (linewidth `gamma`) sits
/// `delta` away from the light frequency (0 = resonant).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterScenario {
    pub lambda: f64,
    pub gamma: f64,
    pub scatter_rate: f64,
    pub d: f64,
    pub tau: f64,
    pub delta: f64,
}

impl ScatterScenario {
    pub fn new(
        lambda: f64,
        gamma: f64,
        scatter_rate: f64,
        d: f64,
        tau: f64,
        delta: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0 && gamma > 0.0 && d > 0.0) {
            return Err(domain("wavelength, linewidth and distance must be > 0"));
        }
        if !(scatter_rate >= 0.0 && tau >= 0.0 && delta >= 0.0) {
            return Err(domain("rate, duration and detuning must be >= 0"));
        }
        Ok(ScatterScenario { lambda, gamma, scatter_rate, d, tau, delta })
    }
}

fn angular_frequency(lambda: f64) -> f64 {
    2.0 * std::f64::consts::PI * LIGHT_SPEED / lambda
}

/// Isotropically radiated intensity at distance d: I = ħω₀·rate/(4πd²).
pub fn fluorescence_intensity(s: &ScatterScenario) -> Result<f64> {
    if s.d <= 0.0 {
        return Err(domain("ion separation must be > 0"));
    }
    let w0 = angular_frequency(s.lambda);
    Ok(HBAR * w0 * s.scatter_rate / (4.0 * std::f64::consts::PI * s.d * s.d))
}

/// Two-level saturation intensity I_sat = ħω₀³Γ/(12πc²).
pub fn saturation_intensity(lambda: f64, gamma: f64) -> f64 {
    let w0 = angular_frequency(lambda);
    HBAR * w0.powi(3) * gamma / (12.0 * std::f64::consts::PI * LIGHT_SPEED * LIGHT_SPEED)
}

/// Rabi frequency squared induced on the target: Ω² = 3λ²·rate·Γ/(8π²d²).
/// Equals (Γ²/2)·I/I_sat.
pub fn induced_rabi_sq(s: &ScatterScenario) -> Result<f64> {
    if s.d <= 0.0 {
        return Err(domain("ion separation must be > 0"));
    }
    let pi_sq = std::f64::consts::PI * std::f64::consts::PI;
    Ok(3.0 * s.lambda * s.lambda * s.scatter_rate * s.gamma / (8.0 * pi_sq * s.d * s.d))
}

/// Steady-state excitation probability of the target:
/// resonant Ω²/(2Ω²+Γ²), far-detuned Ω²/(4Δ²).
pub fn excitation_prob(omega_sq: f64, gamma: f64, delta: f64) -> f64 {
    if delta > 0.0 {
        omega_sq / (4.0 * delta * delta)
    } else {
        omega_sq / (2.0 * omega_sq + gamma * gamma)
    }
}

/// Weak-drive suppression of a detuned transition relative to a resonant
/// one: Γ²/(4Δ²).
pub fn detuned_suppression(gamma: f64, delta: f64) -> f64 {
    let r = gamma / (2.0 * delta);
    r * r
}

/// Crosstalk exposure ε = ρ′·Γ·τ. `raw` is the rate×time product (may
/// exceed 1); `clamped` = 1−e^{−raw} is the excited-at-least-once
/// probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterError {
    pub raw: f64,
    pub clamped: f64,
}

pub fn scattering_error(s: &ScatterScenario) -> Result<ScatterError> {
    let omega_sq = induced_rabi_sq(s)?;
    let rho = excitation_prob(omega_sq, s.gamma, s.delta);
    let raw = rho * s.gamma * s.tau;
    // exp_m1 keeps clamped ≤ raw exact when raw is far below 1 ulp of 1
    Ok(ScatterError { raw, clamped: -(-raw).exp_m1() })
}

/// Probability that one scattered photon excites a resonant neighbor at
/// distance d: 3λ²/(8π²d²), i.e. the per-photon factor in the exposure
/// error ε = 3λ²/(8π²d²)·rate·τ.
pub fn per_photon_error(lambda: f64, d: f64) -> Result<f64> {
    if d <= 0.0 {
        return Err(domain("ion separation must be > 0"));
    }
    let pi_sq = std::f64::consts::PI * std::f64::consts::PI;
    Ok(3.0 * lambda * lambda / (8.0 * pi_sq * d * d))
}

/// Error after the k pumping photons plus the entangling photon of one
/// attempt: 1−(1−ε)^{k+1}.
pub fn compound_error(eps: f64, k: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(domain("per-event error must lie in [0, 1]"));
    }
    Ok(1.0 - (1.0 - eps).powi(k as i32 + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    const GAMMA_YB: f64 = 1.25e8; // 1/(8 ns)

    fn resonant(rate: f64, d: f64, tau: f64) -> ScatterScenario {
        ScatterScenario::new(369.5e-9, GAMMA_YB, rate, d, tau, 0.0).unwrap()
    }

    #[test]
    fn intensity_inverse_square_and_value() {
        let near = resonant(1.6e4, 12e-6, 0.1);
        let far = resonant(1.6e4, 24e-6, 0.1);
        let i_near = fluorescence_intensity(&near).unwrap();
        let i_far = fluorescence_intensity(&far).unwrap();
        assert!((i_near / i_far - 4.0).abs() < 1e-12);

        // photon energy ~3.36 eV at 369.5 nm spread over a 12 μm sphere:
        // 5.376e−19 J × 1.6e4 /s ÷ 1.810e−9 m² ≈ 4.75e−6 W/m²
        assert!((i_near - 4.7535e-6).abs() / 4.7535e-6 < 1e-3, "{i_near}");

        let silent = resonant(0.0, 12e-6, 0.1);
        assert_eq!(fluorescence_intensity(&silent).unwrap(), 0.0);
    }

    #[test]
    fn saturation_intensity_value_and_identity() {
        let i_sat = saturation_intensity(369.5e-9, GAMMA_YB);
        // ~51 mW/cm² for the 369.5 nm cycling transition
        assert!((i_sat - 515.5).abs() < 2.0, "{i_sat}");
        assert!((saturation_intensity(369.5e-9, 2.0 * GAMMA_YB) / i_sat - 2.0).abs() < 1e-12);

        // same formula through h instead of ħ: I_sat = πhcΓ/(3λ³)
        let h = 2.0 * std::f64::consts::PI * HBAR;
        let alt = std::f64::consts::PI * h * LIGHT_SPEED * GAMMA_YB / (3.0 * 369.5e-9_f64.powi(3));
        assert!((i_sat - alt).abs() / alt < 1e-12);
    }

    #[test]
    fn rabi_sq_consistent_with_intensity_ratio() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let s = ScatterScenario::new(
                200e-9 + rng.gen::<f64>() * 600e-9,
                1e7 + rng.gen::<f64>() * 2e8,
                rng.gen::<f64>() * 1e8,
                1e-6 + rng.gen::<f64>() * 1e-3,
                rng.gen::<f64>(),
                0.0,
            )
            .unwrap();
            let omega_sq = induced_rabi_sq(&s).unwrap();
            let via_intensity = 0.5 * s.gamma * s.gamma * fluorescence_intensity(&s).unwrap()
                / saturation_intensity(s.lambda, s.gamma);
            if omega_sq > 0.0 {
                assert!((omega_sq - via_intensity).abs() / omega_sq < 1e-12);
            }
        }
    }

    #[test]
    fn excitation_prob_limits() {
        assert_eq!(excitation_prob(0.0, GAMMA_YB, 0.0), 0.0);
        // strong drive saturates at 1/2
        assert!((excitation_prob(1e40, GAMMA_YB, 0.0) - 0.5).abs() < 1e-10);
        for exp in 0..20 {
            let w = 10f64.powi(exp);
            assert!(excitation_prob(w * w, GAMMA_YB, 0.0) <= 0.5);
        }
        // far-detuned suppression at Γ = 2π·10 MHz, Δ = 2π·10 THz
        let g = 2.0 * std::f64::consts::PI * 1e7;
        let d = 2.0 * std::f64::consts::PI * 1e13;
        assert!((detuned_suppression(g, d) - 2.5e-13).abs() < 1e-18);
        let weak = 1e6;
        let ratio = excitation_prob(weak, g, d) / excitation_prob(weak, g, 0.0);
        assert!((ratio - 2.5e-13).abs() / 2.5e-13 < 1e-6);
    }

    #[test]
    fn scattering_error_worked_examples() {
        // S-qubit neighbor at 12 μm during 100 ms of 1.6e4 /s scattering
        let e = scattering_error(&resonant(1.6e4, 12e-6, 0.1)).unwrap();
        assert!((e.raw - 0.05764).abs() < 1e-4, "{}", e.raw);

        // Doppler cooling at 400 μm for 500 ms, excitation fraction 1/6
        let e = scattering_error(&resonant(GAMMA_YB / 6.0, 400e-6, 0.5)).unwrap();
        assert!((e.raw - 0.3377).abs() < 1e-3, "{}", e.raw);
        assert!((e.clamped - (1.0 - (-e.raw).exp())).abs() < 1e-15);

        let zero = scattering_error(&resonant(1.6e4, 12e-6, 0.0)).unwrap();
        assert_eq!(zero.raw, 0.0);
    }

    #[test]
    fn scattering_error_scaling_laws() {
        let base = resonant(1.6e4, 12e-6, 0.1);
        let e0 = scattering_error(&base).unwrap().raw;

        let mut s = base;
        s.lambda *= 2.0;
        assert!((scattering_error(&s).unwrap().raw / e0 - 4.0).abs() < 1e-6);

        let mut s = base;
        s.d *= 3.0;
        assert!((scattering_error(&s).unwrap().raw / e0 - 1.0 / 9.0).abs() < 1e-6);

        let mut s = base;
        s.tau *= 5.0;
        assert!((scattering_error(&s).unwrap().raw / e0 - 5.0).abs() < 1e-9);
    }

    #[test]
    fn per_photon_error_matches_event_rate_form() {
        let p = per_photon_error(369.5e-9, 12e-6).unwrap();
        assert!((p - 3.602e-5).abs() < 1e-8, "{p}");
        // ε(rate, τ) = p · rate · τ in the weak-drive regime
        let e = scattering_error(&resonant(1.6e4, 12e-6, 0.1)).unwrap();
        assert!((e.raw - p * 1.6e4 * 0.1).abs() / e.raw < 1e-6);
    }

    #[test]
    fn compound_error_examples_and_monotonicity() {
        assert!((compound_error(0.06, 11).unwrap() - 0.52406).abs() < 1e-4);
        assert_eq!(compound_error(0.0, 11).unwrap(), 0.0);
        assert!((compound_error(0.3, 0).unwrap() - 0.3).abs() < 1e-15);
        assert!(compound_error(1.2, 1).is_err());
        assert!(compound_error(-0.1, 1).is_err());

        let mut prev = 0.0;
        for k in 0..50 {
            let e = compound_error(0.03, k).unwrap();
            assert!(e >= prev);
            prev = e;
        }
        let mut prev = 0.0;
        for i in 0..=20 {
            let e = compound_error(i as f64 * 0.05, 7).unwrap();
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn scenario_validation() {
        assert!(ScatterScenario::new(0.0, 1.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(ScatterScenario::new(1e-7, 1e8, 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(ScatterScenario::new(1e-7, 1e8, -1.0, 1e-5, 1.0, 0.0).is_err());
        assert!(per_photon_error(369.5e-9, 0.0).is_err());
    }
}
