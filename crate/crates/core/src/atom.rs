//! Level structure of the ¹⁷¹Yb⁺ node ion and elementary state algebra.
//!
//! The protocol touches exactly ten levels: the S₁/₂ ground manifold
//! (clock pair plus the F=1 Zeeman pair), the P₁/₂ excited manifold used
//! by the ultrafast pulse, and the two F₇/₂ clock levels that hold the
//! memory qubit. Everything else (D states crossed during type
//! conversion) is modeled as effective error channels, not amplitudes.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{domain, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Manifold {
    S12,
    P12,
    F72,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LevelLabel {
    pub manifold: Manifold,
    pub f: u8,
    pub m: i8,
}

pub const DIM: usize = 10;

/// Fixed enumeration: S₁/₂ |0,0⟩; S₁/₂ F=1 m=−1,0,+1; P₁/₂ |0,0⟩;
/// P₁/₂ F=1 m=−1,0,+1; F₇/₂ |3,0⟩; F₇/₂ |4,0⟩.
pub const LEVELS: [LevelLabel; DIM] = [
    LevelLabel { manifold: Manifold::S12, f: 0, m: 0 },
    LevelLabel { manifold: Manifold::S12, f: 1, m: -1 },
    LevelLabel { manifold: Manifold::S12, f: 1, m: 0 },
    LevelLabel { manifold: Manifold::S12, f: 1, m: 1 },
    LevelLabel { manifold: Manifold::P12, f: 0, m: 0 },
    LevelLabel { manifold: Manifold::P12, f: 1, m: -1 },
    LevelLabel { manifold: Manifold::P12, f: 1, m: 0 },
    LevelLabel { manifold: Manifold::P12, f: 1, m: 1 },
    LevelLabel { manifold: Manifold::F72, f: 3, m: 0 },
    LevelLabel { manifold: Manifold::F72, f: 4, m: 0 },
];

// Frequently used indices.
pub const DOWN: usize = 0; // |↓⟩ = S₁/₂ |0,0⟩
pub const ZEEMAN_MINUS: usize = 1; // S₁/₂ |1,−1⟩
pub const UP: usize = 2; // |↑⟩ = S₁/₂ |1,0⟩
pub const ZEEMAN_PLUS: usize = 3; // S₁/₂ |1,+1⟩
pub const P_EXCITED: usize = 4; // P₁/₂ |0,0⟩
pub const P_LEAK_MINUS: usize = 5;
pub const P_LEAK_PLUS: usize = 7;
pub const F_DOWN: usize = 8; // |0′⟩ = F₇/₂ |3,0⟩
pub const F_UP: usize = 9; // |1′⟩ = F₇/₂ |4,0⟩

pub fn basis_index(label: LevelLabel) -> Result<usize> {
    LEVELS
        .iter()
        .position(|l| *l == label)
        .ok_or_else(|| domain(format!("level {label:?} is not part of the protocol enumeration")))
}

pub fn level(index: usize) -> LevelLabel {
    LEVELS[index]
}

/// Which two levels carry the logical qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QubitEncoding {
    /// Ground-state clock pair |0,0⟩ / |1,0⟩.
    SQubit,
    /// F₇/₂ clock pair |3,0⟩ / |4,0⟩.
    FQubit,
    /// The |1,∓1⟩ Zeeman pair addressed by the two-tone transfer pulse.
    ZeemanPair,
}

impl QubitEncoding {
    /// (logical 0, logical 1) level indices.
    pub fn levels(self) -> (usize, usize) {
        match self {
            QubitEncoding::SQubit => (DOWN, UP),
            QubitEncoding::FQubit => (F_DOWN, F_UP),
            QubitEncoding::ZeemanPair => (ZEEMAN_MINUS, ZEEMAN_PLUS),
        }
    }
}

pub const UNITARY_TOL: f64 = 1e-12;

/// max|U†U − I| over the 2×2 block.
pub fn unitarity_defect(u: &[[Complex64; 2]; 2]) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..2 {
        for c in 0..2 {
            // (U†U)[r][c] = Σ_k conj(U[k][r])·U[k][c]
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..2 {
                s += u[k][r].conj() * u[k][c];
            }
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((s - target).norm());
        }
    }
    worst
}

/// Resonant Rabi rotation by `area` about the equatorial axis at `phase`.
pub fn rotation_2level(area: f64, phase: f64) -> [[Complex64; 2]; 2] {
    let (c, s) = ((area / 2.0).cos(), (area / 2.0).sin());
    let mi = Complex64::new(0.0, -1.0);
    [
        [
            Complex64::new(c, 0.0),
            mi * Complex64::from_polar(s, -phase),
        ],
        [
            mi * Complex64::from_polar(s, phase),
            Complex64::new(c, 0.0),
        ],
    ]
}

#[derive(Clone, Debug)]
pub struct IonState {
    amps: [Complex64; DIM],
}

impl IonState {
    /// Basis state on the given level.
    pub fn basis(index: usize) -> Self {
        let mut amps = [Complex64::new(0.0, 0.0); DIM];
        amps[index] = Complex64::new(1.0, 0.0);
        IonState { amps }
    }

    pub fn from_amps(amps: [Complex64; DIM]) -> Self {
        IonState { amps }
    }

    pub fn amp(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn amps(&self) -> &[Complex64; DIM] {
        &self.amps
    }

    pub fn set_amp(&mut self, index: usize, value: Complex64) {
        self.amps[index] = value;
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn population(&self, index: usize) -> f64 {
        self.amps[index].norm_sqr()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            for a in &mut self.amps {
                *a /= n;
            }
        }
    }

    /// ⟨self|other⟩, conjugate-linear in `self`.
    pub fn inner(&self, other: &IonState) -> Complex64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// |⟨self|other⟩|² - the global-phase-free comparison used everywhere.
    pub fn overlap_sq(&self, other: &IonState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Apply a 2×2 unitary on levels (i, j), identity elsewhere.
    pub fn apply_two_level(
        &mut self,
        i: usize,
        j: usize,
        u: &[[Complex64; 2]; 2],
    ) -> Result<()> {
        let defect = unitarity_defect(u);
        if defect > UNITARY_TOL {
            return Err(domain(format!(
                "2x2 block is not unitary (defect {defect:.2e})"
            )));
        }
        let (a, b) = (self.amps[i], self.amps[j]);
        self.amps[i] = u[0][0] * a + u[0][1] * b;
        self.amps[j] = u[1][0] * a + u[1][1] * b;
        Ok(())
    }

    /// Born-rule sample of a level index; does not collapse the state.
    pub fn sample_level<R: Rng>(&self, rng: &mut R) -> usize {
        let total = self.norm_sq();
        let mut u = rng.gen::<f64>() * total;
        for (i, a) in self.amps.iter().enumerate() {
            u -= a.norm_sqr();
            if u <= 0.0 {
                return i;
            }
        }
        DIM - 1
    }
}
