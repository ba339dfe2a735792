//! Experiment sequences: the heralded ion-photon entanglement attempt
//! cycle, coherence storage in the F₇/₂ qubit, and the combined protocol
//! that keeps attempting entanglement while a memory qubit stores.
//!
//! Everything stochastic draws from deterministic per-chunk / per-trial
//! RNG streams, so a (seed, config) pair fixes every record bit-for-bit
//! regardless of worker count.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;

use crate::analysis::{fit_phase_scan, mub_average, BasisTable, FitResult, MubSummary, ProbTable};
use crate::atom::{
    rotation_2level, IonState, QubitEncoding, DOWN, F_DOWN, F_UP, P_EXCITED, P_LEAK_MINUS,
    P_LEAK_PLUS, UP, ZEEMAN_MINUS, ZEEMAN_PLUS,
};
use crate::crosstalk::per_photon_error;
use crate::decoherence::EchoModel;
use crate::error::{domain, Result};
use crate::photonics::{
    collect_perpendicular, emit_entangled, hwp, jones_identity, jones_mul, rotation, JointState,
    PhotonOutcome,
};
use crate::rng::{stream_rng, StreamPurpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectorKind {
    Pmt,
    Emccd,
}

/// Every knob of the simulated node. `calibrated()` reproduces the
/// hardware this model is matched to; `noiseless()` keeps the optics
/// chain but turns every error channel off.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Detector dark-count rate, Hz.
    pub dark_count_rate: f64,
    /// Photon acceptance window after the excitation pulse, s.
    pub detect_window: f64,
    /// Attempt repetition rate, Hz.
    pub rep_rate: f64,
    /// 1σ timing jitter of the herald timestamp, s.
    pub jitter_sigma: f64,
    /// Zeeman splitting 2·|m|=2 pair frequency difference, Hz.
    pub delta_f_zeeman: f64,
    /// Dephasing time of the Zeeman pair coherence, s.
    pub t2_zeeman: f64,
    /// Excitation leakage probability into P₁/₂ F=1, m=±1.
    pub pol_impurity_eps: f64,
    /// Polarization analyzer misalignment, rad.
    pub misalign_angle: f64,
    /// P(bright state read as dark).
    pub err_bright: f64,
    /// P(dark state read as bright).
    pub err_dark: f64,
    /// Scattered photons k during optical pumping.
    pub pump_photon_count: u32,
    /// Duration of the Zeeman-pair transfer pulse, s.
    pub mw2_duration: f64,
    /// Ultrafast excitation pulse area θ, rad.
    pub pulse_area: f64,
    /// Mean phonon number after Doppler cooling.
    pub nbar: f64,
    /// Lamb-Dicke parameter of the conversion beams.
    pub eta_lambdicke: f64,
    /// Depolarization probability per S↔F round trip.
    pub conv_roundtrip_eps: f64,
    /// Collective-dephasing model for storage (noise amplitude,
    /// frequency, white-noise T₂, readout offset).
    pub echo: EchoModel,
    /// Collection solid-angle fraction ΔΩ/4π.
    pub solid_fraction: f64,
    /// Fiber coupling efficiency.
    pub fiber_eff: f64,
    /// Photon detector efficiency.
    pub detector_eff: f64,
    /// Remaining optical path transmission.
    pub optics_eff: f64,
    /// Spontaneous-emission time constant, s.
    pub emission_mean: f64,
    /// Photons scattered per attempt during Doppler cooling.
    pub doppler_photons: u32,
    /// Distance to the neighboring memory ion, m.
    pub ion_distance: f64,
    /// Fluorescence wavelength, m.
    pub fluor_wavelength: f64,
    /// Detuning of the fluorescence from any memory-qubit transition
    /// when the memory is parked in the F₇/₂ manifold, rad/s.
    pub memory_detuning: f64,
}

impl NoiseConfig {
    /// Parameter set matched to the physical node.
    pub fn calibrated() -> Self {
        NoiseConfig {
            dark_count_rate: 100.0,
            detect_window: 60e-9,
            rep_rate: 1.6e4,
            jitter_sigma: 2e-9,
            delta_f_zeeman: 16e6,
            t2_zeeman: 530e-6,
            pol_impurity_eps: 0.016,
            misalign_angle: 0.1,
            err_bright: 0.015,
            err_dark: 0.005,
            pump_photon_count: 11,
            mw2_duration: 13e-6,
            pulse_area: PI,
            nbar: 16.0,
            eta_lambdicke: 0.054,
            conv_roundtrip_eps: 0.031,
            echo: EchoModel { a: 383.8, omega: 2.0 * PI * 57.3, t2: 2.8, c: 0.068 },
            solid_fraction: 0.013,
            fiber_eff: 0.15,
            detector_eff: 0.30,
            optics_eff: 0.85,
            emission_mean: 8e-9,
            doppler_photons: 300,
            ion_distance: 12e-6,
            fluor_wavelength: 369.5e-9,
            memory_detuning: 2.0 * PI * 1e13,
        }
    }

    /// Same optics chain, every error channel off.
    pub fn noiseless() -> Self {
        NoiseConfig {
            dark_count_rate: 0.0,
            jitter_sigma: 0.0,
            t2_zeeman: f64::INFINITY,
            pol_impurity_eps: 0.0,
            misalign_angle: 0.0,
            err_bright: 0.0,
            err_dark: 0.0,
            nbar: 0.0,
            conv_roundtrip_eps: 0.0,
            echo: EchoModel { a: 0.0, omega: 2.0 * PI * 57.3, t2: f64::INFINITY, c: 0.0 },
            ..NoiseConfig::calibrated()
        }
    }

    /// Swap in the detection errors of the chosen ion-state detector.
    pub fn with_detector(mut self, d: DetectorKind) -> Self {
        let (eb, ed) = match d {
            DetectorKind::Pmt => (0.015, 0.005),
            DetectorKind::Emccd => (0.03, 0.02),
        };
        self.err_bright = eb;
        self.err_dark = ed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("pol_impurity_eps", self.pol_impurity_eps),
            ("err_bright", self.err_bright),
            ("err_dark", self.err_dark),
            ("conv_roundtrip_eps", self.conv_roundtrip_eps),
            ("solid_fraction", self.solid_fraction),
            ("fiber_eff", self.fiber_eff),
            ("detector_eff", self.detector_eff),
            ("optics_eff", self.optics_eff),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(domain(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        let nonneg = [
            ("dark_count_rate", self.dark_count_rate),
            ("detect_window", self.detect_window),
            ("rep_rate", self.rep_rate),
            ("jitter_sigma", self.jitter_sigma),
            ("delta_f_zeeman", self.delta_f_zeeman),
            ("mw2_duration", self.mw2_duration),
            ("nbar", self.nbar),
            ("eta_lambdicke", self.eta_lambdicke),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) {
                return Err(domain(format!("{name} must be >= 0, got {v}")));
            }
        }
        let pos = [
            ("t2_zeeman", self.t2_zeeman),
            ("emission_mean", self.emission_mean),
            ("ion_distance", self.ion_distance),
            ("fluor_wavelength", self.fluor_wavelength),
            ("memory_detuning", self.memory_detuning),
        ];
        for (name, v) in pos {
            if !(v > 0.0) {
                return Err(domain(format!("{name} must be > 0, got {v}")));
            }
        }
        if !self.pulse_area.is_finite() || !self.misalign_angle.is_finite() {
            return Err(domain("pulse_area and misalign_angle must be finite"));
        }
        EchoModel::new(self.echo.a, self.echo.omega, self.echo.t2, self.echo.c)?;
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig::calibrated()
    }
}

/// Which correlation basis an attempt is measured in. Off-diagonal
/// carries the analysis-pulse phase φ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Basis {
    Diagonal,
    OffDiagonal(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IonReadout {
    Bright,
    Dark,
}

/// Everything one trial produced. Entanglement attempts fill the photon
/// fields; storage trials fill `memory_outcome` and `mub`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    /// Attempt cycles consumed by this record (for heralds inside an
    /// experiment: cycles since the previous herald, inclusive).
    pub attempts: u64,
    pub heralded: bool,
    pub t_emit: Option<f64>,
    pub t_detect: Option<f64>,
    /// The herald was a detector dark count, not a photon.
    pub dark_count: bool,
    pub photon_outcome: Option<PhotonOutcome>,
    pub ion_outcome: Option<IonReadout>,
    pub memory_outcome: Option<bool>,
    pub basis: Basis,
    pub mub: Option<u8>,
    /// Overlap of the delivered (pre-measurement) state with the ideal
    /// entangled state; `None` when nothing was heralded.
    pub true_fidelity: Option<f64>,
}

impl TrialRecord {
    fn idle(basis: Basis) -> Self {
        TrialRecord {
            attempts: 1,
            heralded: false,
            t_emit: None,
            t_detect: None,
            dark_count: false,
            photon_outcome: None,
            ion_outcome: None,
            memory_outcome: None,
            basis,
            mub: None,
            true_fidelity: None,
        }
    }
}

/// Heralded-event counts, (ion ↑/↓) × (photon H/V).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CorrelationTable {
    /// counts[ion][photon] with ion 0 = ↑ (bright), 1 = ↓ (dark) and
    /// photon 0 = H, 1 = V.
    pub counts: [[u64; 2]; 2],
}

impl CorrelationTable {
    pub fn add(&mut self, ion: IonReadout, photon: PhotonOutcome) {
        let i = match ion {
            IonReadout::Bright => 0,
            IonReadout::Dark => 1,
        };
        let p = match photon {
            PhotonOutcome::H => 0,
            PhotonOutcome::V => 1,
        };
        self.counts[i][p] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn basis_table(&self) -> Result<BasisTable> {
        BasisTable::from_counts(self.counts)
    }
}

/// Optical pumping into |↓⟩; k scattering events each leave a 1/3 chance
/// of having already parked the ion in the dark state, so preparation
/// fails with probability (2/3)^k into a random F=1 level.
pub fn optical_pump<R: Rng>(cfg: &NoiseConfig, rng: &mut R) -> IonState {
    let p_fail = (2.0f64 / 3.0).powi(cfg.pump_photon_count as i32);
    if rng.gen::<f64>() < p_fail {
        let lvl = [ZEEMAN_MINUS, UP, ZEEMAN_PLUS][rng.gen_range(0..3)];
        IonState::basis(lvl)
    } else {
        IonState::basis(DOWN)
    }
}

/// Resonant Rabi rotation R(area, phase) on the encoded qubit pair.
pub fn microwave_pulse(
    state: &IonState,
    encoding: QubitEncoding,
    area: f64,
    phase: f64,
) -> Result<IonState> {
    if !area.is_finite() || !phase.is_finite() {
        return Err(domain("pulse area and phase must be finite"));
    }
    let (lo, hi) = encoding.levels();
    let mut out = state.clone();
    out.apply_two_level(lo, hi, &rotation_2level(area, phase))?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExcitationOutcome {
    /// No excitation; state unchanged.
    None,
    /// Population promoted to P₁/₂ |0,0⟩.
    Excited,
    /// Polarization-impure excitation into P₁/₂ F=1, m=±1.
    Leaked,
}

/// Ultrafast π-pulse excitation from |↑⟩: succeeds with probability
/// sin²(θ/2), and a fraction ε of the excited population leaks into the
/// F=1 excited levels instead of |P,0,0⟩. θ is normalized modulo 2π.
pub fn ultrafast_pi<R: Rng>(
    state: &IonState,
    area: f64,
    pol_impurity: f64,
    rng: &mut R,
) -> Result<(IonState, ExcitationOutcome)> {
    if !(0.0..=1.0).contains(&pol_impurity) {
        return Err(domain("pol impurity must lie in [0, 1]"));
    }
    let theta = area.rem_euclid(2.0 * PI);
    let p_exc = state.population(UP) * (theta / 2.0).sin().powi(2);
    let u = rng.gen::<f64>();
    if u < p_exc * (1.0 - pol_impurity) {
        Ok((IonState::basis(P_EXCITED), ExcitationOutcome::Excited))
    } else if u < p_exc {
        let lvl = if rng.gen::<bool>() { P_LEAK_PLUS } else { P_LEAK_MINUS };
        Ok((IonState::basis(lvl), ExcitationOutcome::Leaked))
    } else {
        Ok((state.clone(), ExcitationOutcome::None))
    }
}

/// State-dependent fluorescence readout: Born-sample a level, then the
/// F=1 manifold reads bright with probability 1−err_bright and
/// everything else reads dark with probability 1−err_dark.
pub fn detect_ion<R: Rng>(
    state: &IonState,
    err_bright: f64,
    err_dark: f64,
    rng: &mut R,
) -> IonReadout {
    let lvl = state.sample_level(rng);
    let fluoresces = matches!(lvl, ZEEMAN_MINUS | UP | ZEEMAN_PLUS);
    let misread = rng.gen::<f64>() < if fluoresces { err_bright } else { err_dark };
    match (fluoresces, misread) {
        (true, false) | (false, true) => IonReadout::Bright,
        _ => IonReadout::Dark,
    }
}

/// 3×3 transfer pulse on (|0,0⟩, |1,−1⟩, |1,+1⟩): swaps |0,0⟩ with the
/// bright pair superposition whose Zeeman phase β = πΔf·t matches the
/// herald timestamp, and leaves the dark superposition alone.
fn mw2_block(beta: f64) -> [[Complex64; 3]; 3] {
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    let ep = Complex64::from_polar(r2, beta);
    let em = Complex64::from_polar(r2, -beta);
    let half = Complex64::new(0.5, 0.0);
    let e2p = Complex64::from_polar(0.5, 2.0 * beta);
    let e2m = Complex64::from_polar(0.5, -2.0 * beta);
    [
        [Complex64::new(0.0, 0.0), em, ep],
        [ep, half, -e2p],
        [em, -e2m, half],
    ]
}

fn apply_mw2_amps(amps: &mut [Complex64], beta: f64) {
    let m = mw2_block(beta);
    let (d, lo, hi) = (amps[DOWN], amps[ZEEMAN_MINUS], amps[ZEEMAN_PLUS]);
    amps[DOWN] = m[0][0] * d + m[0][1] * lo + m[0][2] * hi;
    amps[ZEEMAN_MINUS] = m[1][0] * d + m[1][1] * lo + m[1][2] * hi;
    amps[ZEEMAN_PLUS] = m[2][0] * d + m[2][1] * lo + m[2][2] * hi;
}

fn mw2_joint(joint: &mut JointState, beta: f64) {
    apply_mw2_amps(&mut joint.h, beta);
    apply_mw2_amps(&mut joint.v, beta);
}

fn mw2_ion(ion: &mut IonState, beta: f64) {
    let mut amps = *ion.amps();
    apply_mw2_amps(&mut amps, beta);
    *ion = IonState::from_amps(amps);
}

fn zeeman_flip_joint(joint: &mut JointState) {
    joint.h[ZEEMAN_PLUS] = -joint.h[ZEEMAN_PLUS];
    joint.v[ZEEMAN_PLUS] = -joint.v[ZEEMAN_PLUS];
}

fn zeeman_flip_ion(ion: &mut IonState) {
    ion.set_amp(ZEEMAN_PLUS, -ion.amp(ZEEMAN_PLUS));
}

fn zeeman_evolve_ion(ion: &mut IonState, delta_f: f64, t: f64) {
    let phase = PI * delta_f * t;
    ion.set_amp(ZEEMAN_PLUS, ion.amp(ZEEMAN_PLUS) * Complex64::from_polar(1.0, -phase));
    ion.set_amp(ZEEMAN_MINUS, ion.amp(ZEEMAN_MINUS) * Complex64::from_polar(1.0, phase));
}

/// The entangled ion-photon state after emission at `t_emit`, free
/// Zeeman evolution, and the transfer pulse timed at `t_detect`. With
/// t_detect = t_emit this is exactly (|↓⟩|H⟩ + |↑⟩|V⟩)/√2.
pub fn feedforward_state(t_emit: f64, t_detect: f64, delta_f: f64) -> JointState {
    let excited = IonState::basis(P_EXCITED);
    let emitted = emit_entangled(&excited).expect("full excited population");
    let (mut joint, _) = collect_perpendicular(&emitted);
    joint.zeeman_evolve(delta_f, t_emit);
    mw2_joint(&mut joint, PI * delta_f * t_detect);
    joint
}

/// The state the protocol aims to deliver: (|↓⟩|H⟩ + |↑⟩|V⟩)/√2.
pub fn target_state() -> JointState {
    let mut t = JointState::zero();
    let r2 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    t.h[DOWN] = r2;
    t.v[UP] = r2;
    t
}

/// Analytic heralding probability per attempt for a configuration:
/// excitation × collected-mode branching (2/3) × optics chain ×
/// in-window fraction, plus dark counts.
pub fn herald_probability(cfg: &NoiseConfig) -> f64 {
    let pump_ok = 1.0 - (2.0f64 / 3.0).powi(cfg.pump_photon_count as i32);
    let theta = cfg.pulse_area.rem_euclid(2.0 * PI);
    let p_excite = pump_ok * (theta / 2.0).sin().powi(2);
    let p_det =
        cfg.solid_fraction * cfg.fiber_eff * cfg.detector_eff * cfg.optics_eff;
    let in_window = 1.0 - (-cfg.detect_window / cfg.emission_mean).exp();
    let p_photon = p_excite * (2.0 / 3.0) * p_det * in_window;
    let p_dark = (cfg.dark_count_rate * cfg.detect_window).clamp(0.0, 1.0);
    p_photon + (1.0 - p_photon) * p_dark
}

/// Decay branches of the polarization-impure excitation. Weights are the
/// perpendicular-collection amplitudes squared; the mix reproduces the
/// leak's conditional error accounting P(↓|V) = P(↑|H) = ε.
#[derive(Clone, Copy, Debug)]
enum LeakBranch {
    /// σ decay to |0,0⟩, collected as H.
    DownSigma,
    /// π decay landing in the bright Zeeman superposition, collected as V.
    PairPi,
    /// σ decay to |1,0⟩, collected as H.
    UpSigma,
}

impl LeakBranch {
    fn draw<R: Rng>(rng: &mut R) -> Self {
        match rng.gen_range(0..3) {
            0 => LeakBranch::DownSigma,
            1 => LeakBranch::PairPi,
            _ => LeakBranch::UpSigma,
        }
    }

    fn collection_weight(self) -> f64 {
        match self {
            LeakBranch::PairPi => 1.0,
            _ => 0.5,
        }
    }

    fn collected_state(self) -> JointState {
        let mut j = JointState::zero();
        let one = Complex64::new(1.0, 0.0);
        match self {
            LeakBranch::DownSigma => j.h[DOWN] = one,
            LeakBranch::PairPi => {
                let r2 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                j.v[ZEEMAN_MINUS] = r2;
                j.v[ZEEMAN_PLUS] = r2;
            }
            LeakBranch::UpSigma => j.h[UP] = one,
        }
        j
    }

    fn uncollected_ion(self) -> IonState {
        match self {
            LeakBranch::DownSigma => IonState::basis(DOWN),
            LeakBranch::PairPi => {
                let mut s = IonState::basis(ZEEMAN_MINUS);
                let r2 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                s.set_amp(ZEEMAN_MINUS, r2);
                s.set_amp(ZEEMAN_PLUS, r2);
                s
            }
            LeakBranch::UpSigma => IonState::basis(UP),
        }
    }
}

/// Where the ion ended up when no photon was collected; materialized
/// lazily because it only matters for dark-count heralds.
#[derive(Clone, Copy, Debug)]
enum IonPath {
    /// Preparation failed into this F=1 level (before MW1).
    PumpFail(usize),
    /// Pumped and MW1-transferred to |↑⟩, not excited.
    Ready,
    /// Main-channel decay with the photon lost.
    MainUncollected,
    /// Leak-channel decay with the photon lost.
    LeakUncollected(LeakBranch),
}

fn materialize_ion<R: Rng>(path: IonPath, rng: &mut R) -> IonState {
    match path {
        // MW1 swaps the clock pair, so a pump failure into |1,0⟩ ends in
        // |0,0⟩ and the |1,±1⟩ failures stay put
        IonPath::PumpFail(lvl) => {
            if lvl == UP {
                IonState::basis(DOWN)
            } else {
                IonState::basis(lvl)
            }
        }
        IonPath::Ready => IonState::basis(UP),
        IonPath::MainUncollected => {
            IonState::basis([ZEEMAN_MINUS, UP, ZEEMAN_PLUS][rng.gen_range(0..3)])
        }
        IonPath::LeakUncollected(b) => b.uncollected_ion(),
    }
}

fn measurement_jones(basis: Basis, misalign: f64) -> crate::photonics::Jones {
    let wp = match basis {
        Basis::Diagonal => jones_identity(),
        Basis::OffDiagonal(_) => hwp(PI / 8.0),
    };
    jones_mul(&wp, &rotation(misalign))
}

/// One full attempt cycle: pump → MW1 → ultrafast excitation → emission,
/// collection and heralding → timestamp feedforward (MW2) → optional
/// analysis pulse → polarization and ion readout. Failures are recorded
/// outcomes, not errors.
pub fn run_attempt<R: Rng>(cfg: &NoiseConfig, basis: Basis, rng: &mut R) -> TrialRecord {
    let mut rec = TrialRecord::idle(basis);

    // pump + MW1, tracked symbolically on the fast path
    let p_fail = (2.0f64 / 3.0).powi(cfg.pump_photon_count as i32);
    let mut path = if rng.gen::<f64>() < p_fail {
        IonPath::PumpFail([ZEEMAN_MINUS, UP, ZEEMAN_PLUS][rng.gen_range(0..3)])
    } else {
        IonPath::Ready
    };

    // excitation and collection
    let theta = cfg.pulse_area.rem_euclid(2.0 * PI);
    let s2 = (theta / 2.0).sin().powi(2);
    let p_det = cfg.solid_fraction * cfg.fiber_eff * cfg.detector_eff * cfg.optics_eff;
    let mut collected: Option<JointState> = None;
    if matches!(path, IonPath::Ready) && s2 > 0.0 {
        let u = rng.gen::<f64>();
        let channel = if u < s2 * (1.0 - cfg.pol_impurity_eps) {
            Some(None)
        } else if u < s2 {
            Some(Some(LeakBranch::draw(rng)))
        } else {
            None
        };
        if let Some(leak) = channel {
            let t_emit = Exp::new(1.0 / cfg.emission_mean)
                .expect("positive emission mean")
                .sample(rng);
            rec.t_emit = Some(t_emit);
            let weight = match leak {
                None => 2.0 / 3.0,
                Some(b) => b.collection_weight(),
            };
            let in_window = t_emit < cfg.detect_window;
            if rng.gen::<f64>() < weight * p_det && in_window {
                let joint = match leak {
                    None => {
                        let emitted = emit_entangled(&IonState::basis(P_EXCITED))
                            .expect("excited population is 1");
                        collect_perpendicular(&emitted).0
                    }
                    Some(b) => b.collected_state(),
                };
                collected = Some(joint);
            } else {
                path = match leak {
                    None => IonPath::MainUncollected,
                    Some(b) => IonPath::LeakUncollected(b),
                };
            }
        }
    }

    let p_dark = (cfg.dark_count_rate * cfg.detect_window).clamp(0.0, 1.0);
    let dark_fired = rng.gen::<f64>() < p_dark;
    rec.heralded = collected.is_some() || dark_fired;
    rec.dark_count = dark_fired && collected.is_none();
    if !rec.heralded {
        return rec;
    }

    let p_flip = 0.5 * (1.0 - (-cfg.mw2_duration / cfg.t2_zeeman).exp());
    let phi3 = match basis {
        Basis::Diagonal => None,
        Basis::OffDiagonal(phi) => Some(phi),
    };

    let (photon, ion) = match collected {
        Some(mut joint) => {
            let t_emit = rec.t_emit.expect("collected implies emitted");
            joint.zeeman_evolve(cfg.delta_f_zeeman, t_emit);
            let t_detect = t_emit
                + Normal::new(0.0, cfg.jitter_sigma)
                    .expect("nonnegative jitter")
                    .sample(rng);
            rec.t_detect = Some(t_detect);
            if rng.gen::<f64>() < p_flip {
                zeeman_flip_joint(&mut joint);
            }
            mw2_joint(&mut joint, PI * cfg.delta_f_zeeman * t_detect);
            rec.true_fidelity = Some(joint.overlap_sq(&target_state()));
            if let Some(phi) = phi3 {
                joint
                    .apply_ion_two_level(DOWN, UP, &rotation_2level(PI / 2.0, phi))
                    .expect("rotation is unitary");
            }
            joint.apply_jones(&measurement_jones(basis, cfg.misalign_angle));
            joint.measure_pbs(rng)
        }
        None => {
            // dark-count herald: the feedforward chain still runs on the
            // leftover ion state, and the click outcome is uniform
            let mut ion = materialize_ion(path, rng);
            if let Some(t_emit) = rec.t_emit {
                zeeman_evolve_ion(&mut ion, cfg.delta_f_zeeman, t_emit);
            }
            let t_click = rng.gen::<f64>() * cfg.detect_window;
            rec.t_detect = Some(t_click);
            if rng.gen::<f64>() < p_flip {
                zeeman_flip_ion(&mut ion);
            }
            mw2_ion(&mut ion, PI * cfg.delta_f_zeeman * t_click);
            rec.true_fidelity =
                Some(0.25 * (ion.population(DOWN) + ion.population(UP)));
            if let Some(phi) = phi3 {
                ion.apply_two_level(DOWN, UP, &rotation_2level(PI / 2.0, phi))
                    .expect("rotation is unitary");
            }
            let photon = if rng.gen::<f64>() < 0.5 {
                PhotonOutcome::H
            } else {
                PhotonOutcome::V
            };
            (photon, ion)
        }
    };

    rec.photon_outcome = Some(photon);
    rec.ion_outcome = Some(detect_ion(&ion, cfg.err_bright, cfg.err_dark, rng));
    rec
}

const CHUNK: u64 = 4096;
// bail out if a configuration stays silent this long
const MAX_SILENT_ATTEMPTS: u64 = 100_000_000;

/// Repeat attempts until `n` heralds, processing fixed-size chunks in
/// parallel. Each chunk owns one RNG stream, and heralds are committed
/// in attempt order, so the result is independent of scheduling.
fn collect_heralds(
    cfg: &NoiseConfig,
    basis: Basis,
    n: u64,
    seed: u64,
    purpose: StreamPurpose,
    slot: u64,
) -> Result<(CorrelationTable, Vec<TrialRecord>, u64, u64, f64)> {
    let wave = (rayon::current_num_threads().max(1) as u64) * 4;
    let mut heralds: Vec<(u64, TrialRecord)> = Vec::new();
    let mut next_chunk = 0u64;
    while (heralds.len() as u64) < n {
        if heralds.is_empty() && next_chunk * CHUNK > MAX_SILENT_ATTEMPTS {
            return Err(domain(
                "configuration produced no heralds in 10^8 attempts",
            ));
        }
        let outs: Vec<Vec<(u64, TrialRecord)>> = (next_chunk..next_chunk + wave)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = stream_rng(seed, purpose, (slot << 40) | chunk);
                let mut found = Vec::new();
                for off in 0..CHUNK {
                    let rec = run_attempt(cfg, basis, &mut rng);
                    if rec.heralded {
                        found.push((chunk * CHUNK + off, rec));
                    }
                }
                found
            })
            .collect();
        for out in outs {
            heralds.extend(out);
        }
        next_chunk += wave;
    }
    heralds.truncate(n as usize);

    let mut table = CorrelationTable::default();
    let mut records = Vec::with_capacity(heralds.len());
    let mut dark = 0u64;
    let mut fid_sum = 0.0;
    let mut prev = 0u64;
    let mut attempts = 0u64;
    for (idx, mut rec) in heralds {
        rec.attempts = idx + 1 - prev;
        prev = idx + 1;
        attempts = idx + 1;
        if rec.dark_count {
            dark += 1;
        }
        fid_sum += rec.true_fidelity.unwrap_or(0.0);
        table.add(
            rec.ion_outcome.expect("heralded records carry a readout"),
            rec.photon_outcome.expect("heralded records carry a photon"),
        );
        records.push(rec);
    }
    Ok((table, records, attempts, dark, fid_sum))
}

#[derive(Clone, Debug)]
pub struct EntanglementResult {
    pub diagonal: CorrelationTable,
    pub offdiagonal: CorrelationTable,
    pub table: ProbTable,
    /// (analysis phase φ, measured P(↑|V) − P(↑|H)) per scan point.
    pub scan: Vec<(f64, f64)>,
    pub scan_fit: FitResult,
    /// Analysis phase that maximizes the fitted correlation difference.
    pub phi_star: f64,
    /// Heralded records of the two tabulated bases, in attempt order.
    pub records: Vec<TrialRecord>,
    /// Total attempt cycles simulated, including the phase scan.
    pub attempts: u64,
    /// Total heralds simulated, including the phase scan.
    pub heralds: u64,
    pub dark_heralds: u64,
    /// Trajectory-averaged overlap with the ideal state over the
    /// tabulated heralds.
    pub true_fidelity_mean: f64,
}

fn install<T, F>(workers: usize, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> Result<T> + Send,
{
    if workers == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| domain(format!("could not build worker pool: {e}")))?;
        pool.install(f)
    }
}

/// Full entanglement characterization: diagonal-basis heralds, a
/// 12-point analysis-phase scan fitted for the optimal φ, and
/// off-diagonal heralds at that optimum.
pub fn run_entanglement_experiment(
    cfg: &NoiseConfig,
    n_per_basis: u64,
    seed: u64,
    workers: usize,
) -> Result<EntanglementResult> {
    cfg.validate()?;
    if n_per_basis == 0 {
        return Err(domain("need at least one herald per basis"));
    }
    let cfg = cfg.clone();
    install(workers, move || {
        let (diag_table, mut records, mut attempts, mut dark, mut fid_sum) =
            collect_heralds(&cfg, Basis::Diagonal, n_per_basis, seed, StreamPurpose::Attempt, 0)?;

        let n_scan = (n_per_basis / 12).max(50);
        let mut scan = Vec::with_capacity(12);
        for i in 0..12u64 {
            let phi = 2.0 * PI * i as f64 / 12.0;
            let (t, _, a, d, _) = collect_heralds(
                &cfg,
                Basis::OffDiagonal(phi),
                n_scan,
                seed,
                StreamPurpose::Scan,
                i,
            )?;
            attempts += a;
            dark += d;
            let bt = t.basis_table()?;
            scan.push((phi, bt.p_up_given_v - bt.p_up_given_h));
        }
        let scan_fit = fit_phase_scan(&scan)?;
        let phi_star = if scan_fit.degenerate[2] {
            0.0
        } else {
            scan_fit.params[2].rem_euclid(2.0 * PI)
        };

        let (off_table, off_records, a2, d2, f2) = collect_heralds(
            &cfg,
            Basis::OffDiagonal(phi_star),
            n_per_basis,
            seed,
            StreamPurpose::Attempt,
            1,
        )?;
        records.extend(off_records);
        attempts += a2;
        dark += d2;
        fid_sum += f2;

        let heralds = 2 * n_per_basis + 12 * n_scan;
        let table = ProbTable {
            diagonal: Some(diag_table.basis_table()?),
            offdiagonal: Some(off_table.basis_table()?),
        };
        Ok(EntanglementResult {
            diagonal: diag_table,
            offdiagonal: off_table,
            table,
            scan,
            scan_fit,
            phi_star,
            records,
            attempts,
            heralds,
            dark_heralds: dark,
            true_fidelity_mean: fid_sum / (2 * n_per_basis) as f64,
        })
    })
}

/// MUB preparation pulses on the clock qubit, indexed 0..6:
/// |↓⟩, |↑⟩, |+⟩, |−⟩, |+i⟩, |−i⟩.
const MUB_PREP: [Option<(f64, f64)>; 6] = [
    None,
    Some((PI, 0.0)),
    Some((PI / 2.0, PI / 2.0)),
    Some((PI / 2.0, -PI / 2.0)),
    Some((PI / 2.0, PI)),
    Some((PI / 2.0, 0.0)),
];

fn mub_analysis(mub: u8) -> Option<(f64, f64)> {
    match mub {
        0 | 1 => None,
        // each superposition pair shares the pulse that undoes the
        // even member's preparation (phase + π, mod 2π)
        2 | 3 => Some((PI / 2.0, 3.0 * PI / 2.0)),
        _ => Some((PI / 2.0, 0.0)),
    }
}

fn mub_expected(mub: u8) -> IonReadout {
    if mub % 2 == 0 {
        IonReadout::Dark
    } else {
        IonReadout::Bright
    }
}

/// One storage trial: prepare the MUB state on the clock qubit, shuttle
/// it through three F-manifold storage segments (τ, 2τ, τ) separated by
/// echo π pulses, apply the shared analysis pulse and read out.
/// `replace_before_readout` injects a crosstalk hit: the qubit is
/// swapped for the given basis state before the analysis pulse.
fn storage_trial<R: Rng>(
    cfg: &NoiseConfig,
    t_total: f64,
    mub: u8,
    rng: &mut R,
    replace_before_readout: Option<usize>,
) -> bool {
    let mut ion = IonState::basis(DOWN);
    if let Some((area, phase)) = MUB_PREP[mub as usize] {
        ion.apply_two_level(DOWN, UP, &rotation_2level(area, phase))
            .expect("rotation is unitary");
    }

    let phi_n = rng.gen::<f64>() * 2.0 * PI;
    let tau = t_total / 4.0;
    let (a, w) = (cfg.echo.a, cfg.echo.omega);
    // integral of the sinusoidal detuning over each segment
    let s = |t: f64| (w * t + phi_n).sin();
    let thetas = [
        a / w * (s(tau) - s(0.0)),
        a / w * (s(3.0 * tau) - s(tau)),
        a / w * (s(4.0 * tau) - s(3.0 * tau)),
    ];

    let swap = [
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
    ];
    for (seg, theta) in thetas.iter().enumerate() {
        // S → F
        ion.apply_two_level(DOWN, F_DOWN, &swap).expect("swap is unitary");
        ion.apply_two_level(UP, F_UP, &swap).expect("swap is unitary");
        // phase accrued in the F manifold during this segment
        ion.set_amp(F_UP, ion.amp(F_UP) * Complex64::from_polar(1.0, *theta));
        // F → S, with the round-trip depolarization
        ion.apply_two_level(DOWN, F_DOWN, &swap).expect("swap is unitary");
        ion.apply_two_level(UP, F_UP, &swap).expect("swap is unitary");
        if rng.gen::<f64>() < cfg.conv_roundtrip_eps {
            ion = IonState::basis(if rng.gen::<bool>() { DOWN } else { UP });
        }
        if seg < 2 {
            ion.apply_two_level(DOWN, UP, &rotation_2level(PI, 0.0))
                .expect("rotation is unitary");
        }
    }

    // white-noise dephasing over the whole line commutes through the
    // echo pulses up to a sign, so one end-of-line flip is exact
    let p_flip = 0.5 * (1.0 - (-t_total / cfg.echo.t2).exp());
    if rng.gen::<f64>() < p_flip {
        ion.set_amp(UP, -ion.amp(UP));
    }

    if let Some(lvl) = replace_before_readout {
        ion = IonState::basis(lvl);
    }

    if let Some((area, phase)) = mub_analysis(mub) {
        ion.apply_two_level(DOWN, UP, &rotation_2level(area, phase))
            .expect("rotation is unitary");
    }
    detect_ion(&ion, cfg.err_bright, cfg.err_dark, rng) == mub_expected(mub)
}

#[derive(Clone, Debug)]
pub struct StorageResult {
    /// (measured fidelity, trials) per MUB state.
    pub per_mub: [(f64, u64); 6],
    pub summary: MubSummary,
    pub trials: u64,
}

fn aggregate_mub(outcomes: &[(u8, bool)]) -> Result<StorageResult> {
    let mut pass = [0u64; 6];
    let mut count = [0u64; 6];
    for (mub, ok) in outcomes {
        count[*mub as usize] += 1;
        pass[*mub as usize] += *ok as u64;
    }
    let mut per_mub = [(0.0, 0u64); 6];
    for k in 0..6 {
        if count[k] == 0 {
            return Err(domain("every MUB state needs at least one trial"));
        }
        per_mub[k] = (pass[k] as f64 / count[k] as f64, count[k]);
    }
    let summary = mub_average(&per_mub)?;
    Ok(StorageResult { per_mub, summary, trials: outcomes.len() as u64 })
}

/// Storage fidelity at hold time `t_total`, averaged over the six MUB
/// states (trial i prepares state i mod 6).
pub fn run_storage_experiment(
    cfg: &NoiseConfig,
    t_total: f64,
    n_trials: u64,
    seed: u64,
    workers: usize,
) -> Result<StorageResult> {
    cfg.validate()?;
    if !(t_total > 0.0) {
        return Err(domain("storage time must be > 0"));
    }
    if n_trials < 6 {
        return Err(domain("need at least one trial per MUB state"));
    }
    let cfg = cfg.clone();
    install(workers, move || {
        let outcomes: Vec<(u8, bool)> = (0..n_trials)
            .into_par_iter()
            .map(|i| {
                let mub = (i % 6) as u8;
                let mut rng = stream_rng(seed, StreamPurpose::Storage, i);
                (mub, storage_trial(&cfg, t_total, mub, &mut rng, None))
            })
            .collect();
        aggregate_mub(&outcomes)
    })
}

/// Measured storage fidelity of the superposition pair (|+⟩, |−⟩) as a
/// function of hold time; returns (t, fidelity, 1σ) per point.
pub fn run_storage_sweep(
    cfg: &NoiseConfig,
    times: &[f64],
    n_per_point: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    cfg.validate()?;
    if times.iter().any(|t| !(*t > 0.0)) {
        return Err(domain("storage times must be > 0"));
    }
    if n_per_point < 2 {
        return Err(domain("need at least two trials per point"));
    }
    let cfg = cfg.clone();
    let times = times.to_vec();
    install(workers, move || {
        times
            .iter()
            .enumerate()
            .map(|(p, t)| {
                let passes: u64 = (0..n_per_point)
                    .into_par_iter()
                    .map(|i| {
                        let mub = 2 + (i % 2) as u8;
                        let idx = ((p as u64 + 1) << 40) | i;
                        let mut rng = stream_rng(seed, StreamPurpose::Storage, idx);
                        storage_trial(&cfg, *t, mub, &mut rng, None) as u64
                    })
                    .sum();
                let f = passes as f64 / n_per_point as f64;
                let sigma = crate::analysis::binomial_error(passes, n_per_point)?;
                Ok((*t, f, sigma))
            })
            .collect()
    })
}

#[derive(Clone, Debug)]
pub struct CombinedResult {
    pub memory_per_mub: [(f64, u64); 6],
    pub memory: MubSummary,
    /// Fraction of trials with at least one herald inside the window.
    pub success_fraction: f64,
    /// Analytic per-attempt heralding probability used for the window.
    pub herald_prob: f64,
    /// Per-trial probability that fluorescence scattered by the
    /// communication ion disturbed the memory qubit.
    pub crosstalk_prob: f64,
    pub attempts_per_trial: u64,
    pub trials: u64,
}

/// Storage run with an entanglement-attempt window of the given duration
/// centered in the hold time. The memory trials reuse the storage-stream
/// draws, so with the attempt window closed (or the crosstalk channel
/// suppressed) the per-trial outcomes match a storage-only run exactly.
pub fn run_combined_experiment(
    cfg: &NoiseConfig,
    t_total: f64,
    window: f64,
    n_trials: u64,
    protection: bool,
    seed: u64,
    workers: usize,
) -> Result<CombinedResult> {
    cfg.validate()?;
    if !(t_total > 0.0) {
        return Err(domain("storage time must be > 0"));
    }
    if !(0.0..=t_total).contains(&window) {
        return Err(domain("attempt window must lie within the hold time"));
    }
    if n_trials < 6 {
        return Err(domain("need at least one trial per MUB state"));
    }

    let n_att = (cfg.rep_rate * window).round() as u64;
    let p_herald = herald_probability(cfg);
    let p_success = 1.0 - (1.0 - p_herald).powf(n_att as f64);
    let photons = (cfg.pump_photon_count as u64 + 1 + cfg.doppler_photons as u64) * n_att;
    let mut q = per_photon_error(cfg.fluor_wavelength, cfg.ion_distance)?;
    if protection {
        // memory parked in F₇/₂: the fluorescence is far off-resonant
        let gamma = 1.0 / cfg.emission_mean;
        let sup = gamma / (2.0 * cfg.memory_detuning);
        q *= sup * sup;
    }
    let p_hit = if q >= 1.0 {
        1.0
    } else {
        1.0 - (photons as f64 * (1.0 - q).ln()).exp()
    };

    let cfg = cfg.clone();
    install(workers, move || {
        let rows: Vec<(u8, bool, bool)> = (0..n_trials)
            .into_par_iter()
            .map(|i| {
                let mub = (i % 6) as u8;
                let mut s_rng = stream_rng(seed, StreamPurpose::Storage, i);
                let mut c_rng = stream_rng(seed, StreamPurpose::Combined, i);
                let (heralded, replace) = if n_att == 0 {
                    (false, None)
                } else {
                    let h = c_rng.gen::<f64>() < p_success;
                    let hit = c_rng.gen::<f64>() < p_hit;
                    let r = hit.then(|| if c_rng.gen::<bool>() { DOWN } else { UP });
                    (h, r)
                };
                let ok = storage_trial(&cfg, t_total, mub, &mut s_rng, replace);
                (mub, ok, heralded)
            })
            .collect();
        let outcomes: Vec<(u8, bool)> = rows.iter().map(|(m, o, _)| (*m, *o)).collect();
        let storage = aggregate_mub(&outcomes)?;
        let successes = rows.iter().filter(|(_, _, h)| *h).count();
        Ok(CombinedResult {
            memory_per_mub: storage.per_mub,
            memory: storage.summary,
            success_fraction: successes as f64 / n_trials as f64,
            herald_prob: p_herald,
            crosstalk_prob: p_hit,
            attempts_per_trial: n_att,
            trials: n_trials,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn rng(i: u64) -> rand_chacha::ChaCha8Rng {
        stream_rng(9, StreamPurpose::Synthetic, i)
    }

    #[test]
    fn pump_failure_statistics() {
        let mut cfg = NoiseConfig::calibrated();
        let mut r = rng(0);
        let n = 100_000;
        let fails = (0..n)
            .filter(|_| optical_pump(&cfg, &mut r).population(DOWN) < 0.5)
            .count() as f64;
        let p = (2.0f64 / 3.0).powi(11);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((fails / n as f64 - p).abs() < 3.0 * sigma, "freq={}", fails / n as f64);

        cfg.pump_photon_count = 1;
        let fails = (0..n)
            .filter(|_| optical_pump(&cfg, &mut r).population(DOWN) < 0.5)
            .count() as f64;
        let sigma = (2.0 / 3.0f64 * (1.0 / 3.0) / n as f64).sqrt();
        assert!((fails / n as f64 - 2.0 / 3.0).abs() < 3.0 * sigma);

        cfg.pump_photon_count = 0;
        let s = optical_pump(&cfg, &mut r);
        assert!(s.population(DOWN) < 0.5);
        assert!(
            (s.population(ZEEMAN_MINUS) + s.population(UP) + s.population(ZEEMAN_PLUS) - 1.0)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn microwave_pulse_examples() {
        let down = IonState::basis(DOWN);
        let up = microwave_pulse(&down, QubitEncoding::SQubit, PI, 0.0).unwrap();
        assert!((up.population(UP) - 1.0).abs() < 1e-12);

        let a = microwave_pulse(&down, QubitEncoding::SQubit, PI / 2.0, 0.0).unwrap();
        let b = microwave_pulse(&a, QubitEncoding::SQubit, PI / 2.0, PI).unwrap();
        assert!((b.overlap_sq(&down) - 1.0).abs() < 1e-12);

        // phase scan on (|↓⟩ + e^{iα}|↑⟩)/√2 is a unit-visibility sinusoid
        let alpha = 0.7;
        let mut sup = IonState::basis(DOWN);
        let r2 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        sup.set_amp(DOWN, r2);
        sup.set_amp(UP, r2 * Complex64::from_polar(1.0, alpha));
        for i in 0..8 {
            let phi = 2.0 * PI * i as f64 / 8.0;
            let out = microwave_pulse(&sup, QubitEncoding::SQubit, PI / 2.0, phi).unwrap();
            let expect = 0.5 * (1.0 + (phi - alpha).sin());
            assert!((out.population(UP) - expect).abs() < 1e-12);
        }

        assert!(microwave_pulse(&down, QubitEncoding::SQubit, f64::NAN, 0.0).is_err());
        assert!(microwave_pulse(&down, QubitEncoding::SQubit, PI, f64::INFINITY).is_err());
    }

    #[test]
    fn ultrafast_excitation_probabilities() {
        let up = IonState::basis(UP);
        let mut r = rng(1);
        for _ in 0..1000 {
            let (s, o) = ultrafast_pi(&up, PI, 0.0, &mut r).unwrap();
            assert_eq!(o, ExcitationOutcome::Excited);
            assert!((s.population(P_EXCITED) - 1.0).abs() < 1e-12);
        }
        for _ in 0..1000 {
            let (_, o) = ultrafast_pi(&up, 0.0, 0.5, &mut r).unwrap();
            assert_eq!(o, ExcitationOutcome::None);
        }
        // leak frequency at full area
        let n = 200_000;
        let leaks = (0..n)
            .filter(|_| {
                matches!(
                    ultrafast_pi(&up, PI, 0.016, &mut r).unwrap().1,
                    ExcitationOutcome::Leaked
                )
            })
            .count() as f64;
        let sigma = (0.016f64 * 0.984 / n as f64).sqrt();
        assert!((leaks / n as f64 - 0.016).abs() < 3.0 * sigma);
        assert!(ultrafast_pi(&up, PI, 1.5, &mut r).is_err());
    }

    #[test]
    fn collected_mode_probability_matches_branching() {
        // P(photon in the perpendicular collection modes) =
        // (2/3)·sin²(θ/2): 1/3 at θ = π/2
        let up = IonState::basis(UP);
        let mut r = rng(2);
        let n = 100_000;
        let mut hits = 0u64;
        for _ in 0..n {
            let (s, o) = ultrafast_pi(&up, PI / 2.0, 0.0, &mut r).unwrap();
            if o == ExcitationOutcome::Excited {
                let (_, w) = collect_perpendicular(&emit_entangled(&s).unwrap());
                if r.gen::<f64>() < w {
                    hits += 1;
                }
            }
        }
        let freq = hits as f64 / n as f64;
        let sigma = (1.0 / 3.0f64 * (2.0 / 3.0) / n as f64).sqrt();
        assert!((freq - 1.0 / 3.0).abs() < 3.0 * sigma, "freq={freq}");
    }

    #[test]
    fn ion_detection_statistics() {
        let mut r = rng(3);
        let up = IonState::basis(UP);
        for _ in 0..200 {
            assert_eq!(detect_ion(&up, 0.0, 0.0, &mut r), IonReadout::Bright);
        }
        let down = IonState::basis(DOWN);
        let n = 100_000;
        let bright = (0..n)
            .filter(|_| detect_ion(&down, 0.0, 0.005, &mut r) == IonReadout::Bright)
            .count() as f64;
        let sigma = (0.005f64 * 0.995 / n as f64).sqrt();
        assert!((bright / n as f64 - 0.005).abs() < 3.0 * sigma);

        let mut sup = IonState::basis(DOWN);
        let r2 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        sup.set_amp(DOWN, r2);
        sup.set_amp(UP, r2);
        let bright = (0..n)
            .filter(|_| detect_ion(&sup, 0.0, 0.0, &mut r) == IonReadout::Bright)
            .count() as f64;
        let sigma = (0.25f64 / n as f64).sqrt();
        assert!((bright / n as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn mw2_block_is_unitary_and_swaps_the_bright_pair() {
        for &beta in &[0.0, 0.3, 1.7, -2.2] {
            let m = mw2_block(beta);
            for r in 0..3 {
                for c in 0..3 {
                    let mut s = Complex64::new(0.0, 0.0);
                    for k in 0..3 {
                        s += m[k][r].conj() * m[k][c];
                    }
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert!((s - want).norm() < 1e-12);
                }
            }
            // bright pair at matching phase → |0,0⟩
            let mut ion = IonState::basis(DOWN);
            ion.set_amp(DOWN, Complex64::new(0.0, 0.0));
            let r2 = std::f64::consts::FRAC_1_SQRT_2;
            ion.set_amp(ZEEMAN_MINUS, Complex64::from_polar(r2, beta));
            ion.set_amp(ZEEMAN_PLUS, Complex64::from_polar(r2, -beta));
            mw2_ion(&mut ion, beta);
            assert!((ion.population(DOWN) - 1.0).abs() < 1e-12);
            // dark pair stays in the Zeeman levels
            let mut ion = IonState::basis(DOWN);
            ion.set_amp(DOWN, Complex64::new(0.0, 0.0));
            ion.set_amp(ZEEMAN_MINUS, Complex64::from_polar(r2, beta));
            ion.set_amp(ZEEMAN_PLUS, -Complex64::from_polar(r2, -beta));
            mw2_ion(&mut ion, beta);
            assert!(ion.population(DOWN) < 1e-12);
        }
    }

    #[test]
    fn feedforward_is_exact_at_zero_jitter() {
        let target = target_state();
        let mut r = rng(4);
        for _ in 0..1000 {
            let t = r.gen::<f64>() * 60e-9;
            let state = feedforward_state(t, t, 16e6);
            assert!((state.overlap_sq(&target) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_attempts_correlate_perfectly() {
        let cfg = NoiseConfig::noiseless();
        let mut r = rng(5);
        let mut heralds = 0;
        while heralds < 300 {
            let rec = run_attempt(&cfg, Basis::Diagonal, &mut r);
            if !rec.heralded {
                continue;
            }
            heralds += 1;
            assert!(!rec.dark_count);
            match rec.photon_outcome.unwrap() {
                PhotonOutcome::V => assert_eq!(rec.ion_outcome.unwrap(), IonReadout::Bright),
                PhotonOutcome::H => assert_eq!(rec.ion_outcome.unwrap(), IonReadout::Dark),
            }
            assert!((rec.true_fidelity.unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_offdiagonal_has_an_exact_optimum() {
        // at φ = 3π/2 the analysis pulse maps the rotated state onto
        // perfect correlations
        let cfg = NoiseConfig::noiseless();
        let mut r = rng(6);
        let mut heralds = 0;
        while heralds < 300 {
            let rec = run_attempt(&cfg, Basis::OffDiagonal(3.0 * PI / 2.0), &mut r);
            if !rec.heralded {
                continue;
            }
            heralds += 1;
            match rec.photon_outcome.unwrap() {
                PhotonOutcome::V => assert_eq!(rec.ion_outcome.unwrap(), IonReadout::Bright),
                PhotonOutcome::H => assert_eq!(rec.ion_outcome.unwrap(), IonReadout::Dark),
            }
        }
    }

    #[test]
    fn herald_rate_matches_the_efficiency_product() {
        let cfg = NoiseConfig::calibrated();
        let p = herald_probability(&cfg);
        // the closed-form product: excitation, branching, optics, window
        assert!((p - 3.335e-4).abs() < 5e-6, "p={p}");
        // about 3000 attempts per herald, within 10% of 3200
        assert!(((1.0 / p) - 3200.0).abs() / 3200.0 < 0.10);

        let mut r = rng(7);
        let n = 2_000_000u64;
        let mut heralds = 0u64;
        let mut dark = 0u64;
        for _ in 0..n {
            let rec = run_attempt(&cfg, Basis::Diagonal, &mut r);
            if rec.heralded {
                heralds += 1;
                dark += rec.dark_count as u64;
            }
            assert!(rec.heralded || rec.photon_outcome.is_none());
            assert!(!rec.dark_count || rec.heralded);
        }
        let freq = heralds as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * sigma, "freq={freq} p={p}");
        // dark-count share of heralds ≈ 1.8%
        let share = dark as f64 / heralds as f64;
        assert!((0.003..0.06).contains(&share), "share={share}");
    }

    #[test]
    fn experiment_is_deterministic_across_worker_counts() {
        let cfg = NoiseConfig::calibrated();
        let a = run_entanglement_experiment(&cfg, 40, 11, 1).unwrap();
        let b = run_entanglement_experiment(&cfg, 40, 11, 4).unwrap();
        assert_eq!(a.diagonal, b.diagonal);
        assert_eq!(a.offdiagonal, b.offdiagonal);
        assert_eq!(a.records, b.records);
        assert_eq!(a.attempts, b.attempts);
        assert!((a.phi_star - b.phi_star).abs() < 1e-15);
    }

    #[test]
    fn noiseless_storage_is_perfect() {
        let cfg = NoiseConfig::noiseless();
        let out = run_storage_experiment(&cfg, 0.2, 600, 3, 0).unwrap();
        for (f, n) in out.per_mub {
            assert_eq!(f, 1.0);
            assert_eq!(n, 100);
        }
        assert!((out.summary.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn storage_fidelity_ranks_bases_and_matches_calibration() {
        let cfg = NoiseConfig::calibrated().with_detector(DetectorKind::Emccd);
        let out = run_storage_experiment(&cfg, 0.2, 6000, 5, 0).unwrap();
        let z = (out.per_mub[0].0 + out.per_mub[1].0) / 2.0;
        let xy = (out.per_mub[2].0
            + out.per_mub[3].0
            + out.per_mub[4].0
            + out.per_mub[5].0)
            / 4.0;
        assert!(z > xy + 0.05, "z={z} xy={xy}");
        assert!((out.summary.mean - 0.839).abs() < 0.02, "mean={}", out.summary.mean);
    }

    #[test]
    fn combined_with_closed_window_is_storage_only() {
        let cfg = NoiseConfig::calibrated().with_detector(DetectorKind::Emccd);
        let storage = run_storage_experiment(&cfg, 0.2, 600, 17, 0).unwrap();
        let combined = run_combined_experiment(&cfg, 0.2, 0.0, 600, false, 17, 0).unwrap();
        assert_eq!(combined.memory_per_mub, storage.per_mub);
        assert_eq!(combined.success_fraction, 0.0);
    }

    #[test]
    fn protection_preserves_the_memory_and_exposure_destroys_it() {
        let cfg = NoiseConfig::calibrated().with_detector(DetectorKind::Emccd);
        let storage = run_storage_experiment(&cfg, 0.2, 2400, 23, 0).unwrap();
        let protected =
            run_combined_experiment(&cfg, 0.2, 0.1, 2400, true, 23, 0).unwrap();
        let exposed =
            run_combined_experiment(&cfg, 0.2, 0.1, 2400, false, 23, 0).unwrap();

        assert_eq!(protected.memory_per_mub, storage.per_mub);
        assert!((protected.success_fraction - 0.41).abs() < 0.05,
            "success={}", protected.success_fraction);
        assert!(
            storage.summary.mean - exposed.memory.mean >= 0.05,
            "storage={} exposed={}",
            storage.summary.mean,
            exposed.memory.mean
        );
        assert!(exposed.crosstalk_prob > 0.999);
    }

    #[test]
    fn sweep_follows_the_storage_curve_shape() {
        let cfg = NoiseConfig::calibrated().with_detector(DetectorKind::Emccd);
        // first echo revival (ωτ = 2π) versus a hold time where the
        // white-noise envelope has collapsed the coherence
        let times = [4.0 * 2.0 * PI / (2.0 * PI * 57.3), 0.2, 2.0];
        let out = run_storage_sweep(&cfg, &times, 2000, 29, 0).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out[0].1 > out[2].1 + 0.2, "revival={} late={}", out[0].1, out[2].1);
        for (_, f, s) in &out {
            assert!((0.0..=1.0).contains(f));
            assert!(*s > 0.0);
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = NoiseConfig::calibrated();
        cfg.pol_impurity_eps = 1.2;
        assert!(cfg.validate().is_err());
        let mut cfg = NoiseConfig::calibrated();
        cfg.emission_mean = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = NoiseConfig::calibrated();
        cfg.echo.c = 0.9;
        assert!(cfg.validate().is_err());
        assert!(NoiseConfig::calibrated().validate().is_ok());
        assert!(NoiseConfig::noiseless().validate().is_ok());
    }
}
