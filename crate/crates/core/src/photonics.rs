//! Spontaneous emission, collection-geometry projection, Zeeman phase
//! evolution, and the waveplate/PBS measurement chain.
//!
//! Photon amplitudes live either in the angular-momentum basis
//! {σ⁺, π, σ⁻} right after emission, or in the lab polarization basis
//! {H, V} after the perpendicular-collection projection.

use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::atom::{IonState, DIM, P_EXCITED, UP, ZEEMAN_MINUS, ZEEMAN_PLUS};
use crate::error::{domain, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhotonOutcome {
    H,
    V,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AngularMode {
    SigmaPlus,
    Pi,
    SigmaMinus,
}

/// Perpendicular collection maps π → V with unit amplitude and σ± → H
/// with amplitude 1/√2 each (no relative sign between the σ branches).
pub const COLLECT_PI_AMP: f64 = 1.0;
pub const COLLECT_SIGMA_AMP: f64 = FRAC_1_SQRT_2;

/// Ion ⊗ photon amplitudes right after spontaneous decay of P₁/₂ |0,0⟩,
/// still in the {σ⁺, π, σ⁻} photon basis.
#[derive(Clone, Debug)]
pub struct EmittedState {
    pub branches: [(usize, AngularMode, Complex64); 3],
}

/// Heralded ion ⊗ photon state in the {H, V} basis: one ten-level ion
/// amplitude column per photon polarization.
#[derive(Clone, Debug)]
pub struct JointState {
    pub h: [Complex64; DIM],
    pub v: [Complex64; DIM],
}

/// Decay of the prepared P₁/₂ |0,0⟩ population: equal 1/√3 branches onto
/// (|1,−1⟩ σ⁺, |1,0⟩ π, |1,+1⟩ σ⁻).
pub fn emit_entangled(excited: &IonState) -> Result<EmittedState> {
    if (excited.population(P_EXCITED) - 1.0).abs() > 1e-12 {
        return Err(domain(
            "emission requires all population in P12 |0,0>".to_string(),
        ));
    }
    let c = excited.amp(P_EXCITED) / 3.0_f64.sqrt();
    Ok(EmittedState {
        branches: [
            (ZEEMAN_MINUS, AngularMode::SigmaPlus, c),
            (UP, AngularMode::Pi, c),
            (ZEEMAN_PLUS, AngularMode::SigmaMinus, c),
        ],
    })
}

impl EmittedState {
    pub fn branch_probability(&self, mode: AngularMode) -> f64 {
        self.branches
            .iter()
            .filter(|(_, m, _)| *m == mode)
            .map(|(_, _, a)| a.norm_sqr())
            .sum()
    }

    /// Ion populations after tracing out the photon.
    pub fn ion_populations(&self) -> [f64; DIM] {
        let mut p = [0.0; DIM];
        for (i, _, a) in &self.branches {
            p[*i] += a.norm_sqr();
        }
        p
    }

    pub fn apply_ion_two_level(
        &mut self,
        i: usize,
        j: usize,
        u: &[[Complex64; 2]; 2],
    ) -> Result<()> {
        if crate::atom::unitarity_defect(u) > crate::atom::UNITARY_TOL {
            return Err(domain("2x2 block is not unitary".to_string()));
        }
        // The three branch photon modes are orthogonal, so an ion-local
        // unitary acts per mode column; here each branch holds a single
        // ion level, so expand into columns first.
        let mut cols: [[Complex64; DIM]; 3] = [[Complex64::new(0.0, 0.0); DIM]; 3];
        for (b, (lvl, _, a)) in self.branches.iter().enumerate() {
            cols[b][*lvl] = *a;
        }
        for col in &mut cols {
            let (a, b) = (col[i], col[j]);
            col[i] = u[0][0] * a + u[0][1] * b;
            col[j] = u[1][0] * a + u[1][1] * b;
        }
        // Collapse back only if each column is still a single level;
        // otherwise the 3-branch form cannot represent it.
        for (b, col) in cols.iter().enumerate() {
            let nz: Vec<usize> = (0..DIM).filter(|k| col[*k].norm_sqr() > 0.0).collect();
            if nz.len() != 1 {
                return Err(domain(
                    "ion unitary spread a branch over several levels".to_string(),
                ));
            }
            self.branches[b].0 = nz[0];
            self.branches[b].2 = col[nz[0]];
        }
        Ok(())
    }
}

impl JointState {
    pub fn from_columns(h: [Complex64; DIM], v: [Complex64; DIM]) -> Self {
        JointState { h, v }
    }

    pub fn zero() -> Self {
        JointState {
            h: [Complex64::new(0.0, 0.0); DIM],
            v: [Complex64::new(0.0, 0.0); DIM],
        }
    }

    /// Ion in `ion` with a definite photon polarization.
    pub fn product(ion: &IonState, pol: PhotonOutcome) -> Self {
        let mut j = JointState::zero();
        match pol {
            PhotonOutcome::H => j.h = *ion.amps(),
            PhotonOutcome::V => j.v = *ion.amps(),
        }
        j
    }

    pub fn norm_sq(&self) -> f64 {
        self.h.iter().chain(self.v.iter()).map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            for a in self.h.iter_mut().chain(self.v.iter_mut()) {
                *a /= n;
            }
        }
    }

    pub fn inner(&self, other: &JointState) -> Complex64 {
        self.h
            .iter()
            .zip(other.h.iter())
            .chain(self.v.iter().zip(other.v.iter()))
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn overlap_sq(&self, other: &JointState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Reduced ion density matrix ρ = h h† + v v†.
    pub fn ion_density(&self) -> [[Complex64; DIM]; DIM] {
        let mut rho = [[Complex64::new(0.0, 0.0); DIM]; DIM];
        for col in [&self.h, &self.v] {
            for r in 0..DIM {
                for c in 0..DIM {
                    rho[r][c] += col[r] * col[c].conj();
                }
            }
        }
        rho
    }

    pub fn apply_ion_two_level(
        &mut self,
        i: usize,
        j: usize,
        u: &[[Complex64; 2]; 2],
    ) -> Result<()> {
        if crate::atom::unitarity_defect(u) > crate::atom::UNITARY_TOL {
            return Err(domain("2x2 block is not unitary".to_string()));
        }
        for col in [&mut self.h, &mut self.v] {
            let (a, b) = (col[i], col[j]);
            col[i] = u[0][0] * a + u[0][1] * b;
            col[j] = u[1][0] * a + u[1][1] * b;
        }
        Ok(())
    }

    /// Free Zeeman evolution for time `t`: symmetric ±Δf/2 phases on the
    /// |1,∓1⟩ pair, |1,0⟩ and |0,0⟩ untouched.
    pub fn zeeman_evolve(&mut self, delta_f: f64, t: f64) {
        let phase = PI * delta_f * t;
        let plus = Complex64::from_polar(1.0, -phase);
        let minus = Complex64::from_polar(1.0, phase);
        for col in [&mut self.h, &mut self.v] {
            col[ZEEMAN_PLUS] *= plus;
            col[ZEEMAN_MINUS] *= minus;
        }
    }

    /// Jones map on the photon polarization.
    pub fn apply_jones(&mut self, j: &Jones) {
        for k in 0..DIM {
            let (h, v) = (self.h[k], self.v[k]);
            self.h[k] = j[0][0] * h + j[0][1] * v;
            self.v[k] = j[1][0] * h + j[1][1] * v;
        }
    }

    /// PBS measurement: Born-samples H/V and collapses the ion.
    pub fn measure_pbs<R: Rng>(&self, rng: &mut R) -> (PhotonOutcome, IonState) {
        let total = self.norm_sq();
        let ph: f64 = self.h.iter().map(|a| a.norm_sqr()).sum::<f64>() / total;
        // zero-norm branches always resolve to the probability-1 outcome
        let outcome = if rng.gen::<f64>() < ph {
            PhotonOutcome::H
        } else {
            PhotonOutcome::V
        };
        let col = match outcome {
            PhotonOutcome::H => &self.h,
            PhotonOutcome::V => &self.v,
        };
        let mut ion = IonState::from_amps(*col);
        ion.normalize();
        (outcome, ion)
    }
}

/// Projection onto the perpendicular collection modes: π → V, σ± → H/√2.
/// Returns the renormalized ion-photon state and the collection weight
/// (the branching probability into the collected modes; 2/3 for the
/// emission pattern of P₁/₂ |0,0⟩).
pub fn collect_perpendicular(emitted: &EmittedState) -> (JointState, f64) {
    let mut joint = JointState::zero();
    let mut total = 0.0;
    for (lvl, mode, a) in &emitted.branches {
        total += a.norm_sqr();
        match mode {
            AngularMode::Pi => joint.v[*lvl] += a * COLLECT_PI_AMP,
            AngularMode::SigmaPlus | AngularMode::SigmaMinus => {
                joint.h[*lvl] += a * COLLECT_SIGMA_AMP
            }
        }
    }
    let weight = if total > 0.0 { joint.norm_sq() / total } else { 0.0 };
    joint.normalize();
    (joint, weight)
}

pub type Jones = [[Complex64; 2]; 2];

pub fn jones_identity() -> Jones {
    [
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
    ]
}

pub fn jones_mul(a: &Jones, b: &Jones) -> Jones {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            for k in 0..2 {
                out[r][c] += a[r][k] * b[k][c];
            }
        }
    }
    out
}

/// Geometric rotation of the polarization plane by `theta`.
pub fn rotation(theta: f64) -> Jones {
    let (c, s) = (theta.cos(), theta.sin());
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

/// Half-wave plate with fast axis at `theta`: R(θ)·diag(1,−1)·R(−θ).
pub fn hwp(theta: f64) -> Jones {
    let (c2, s2) = ((2.0 * theta).cos(), (2.0 * theta).sin());
    [
        [Complex64::new(c2, 0.0), Complex64::new(s2, 0.0)],
        [Complex64::new(s2, 0.0), Complex64::new(-c2, 0.0)],
    ]
}

/// Quarter-wave plate with fast axis at `theta`: R(θ)·diag(1,i)·R(−θ).
pub fn qwp(theta: f64) -> Jones {
    let (c, s) = (theta.cos(), theta.sin());
    let i = Complex64::new(0.0, 1.0);
    let one = Complex64::new(1.0, 0.0);
    [
        [one * c * c + i * s * s, (one - i) * s * c],
        [(one - i) * s * c, one * s * s + i * c * c],
    ]
}

/// Measurement-basis map of the detection path: HWP first, then QWP.
pub fn waveplate_rotation(hwp_angle: f64, qwp_angle: f64) -> Jones {
    jones_mul(&qwp(qwp_angle), &hwp(hwp_angle))
}
