//! Command-line front end: assemble a configuration from defaults, an
//! optional key=value file, IONNODE_* environment variables and flag
//! overrides (in that order), run one of the simulated experiments, and
//! emit CSV tables plus a text summary. Every output file carries a
//! `# seed=…, workers=…` header so results are reproducible.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ionnode::analysis::{
    error_budget, fidelity_bound, fit_conversion, fit_phase_scan, fit_storage, rate_budget,
    FitResult,
};
use ionnode::crosstalk::{
    compound_error, detuned_suppression, per_photon_error, scattering_error, ScatterScenario,
};
use ionnode::sequence::{
    herald_probability, run_combined_experiment, run_entanglement_experiment,
    run_storage_experiment, run_storage_sweep, DetectorKind, NoiseConfig,
};

/// (key, description, is_integer) for every flat configuration key.
const CONFIG_KEYS: &[(&str, &str)] = &[
    ("dark_count_rate", "detector dark-count rate, Hz"),
    ("detect_window", "photon acceptance window, s"),
    ("rep_rate", "attempt repetition rate, Hz"),
    ("jitter_sigma", "herald timestamp jitter (1 sigma), s"),
    ("delta_f_zeeman", "Zeeman pair splitting, Hz"),
    ("t2_zeeman", "Zeeman-pair coherence time, s"),
    ("pol_impurity_eps", "excitation polarization leakage probability"),
    ("misalign_angle", "polarization analyzer misalignment, rad"),
    ("err_bright", "probability a bright ion reads dark"),
    ("err_dark", "probability a dark ion reads bright"),
    ("pump_photon_count", "photons scattered during state preparation"),
    ("mw2_duration", "Zeeman-pair transfer pulse duration, s"),
    ("pulse_area", "ultrafast excitation pulse area, rad"),
    ("nbar", "mean phonon number after Doppler cooling"),
    ("eta_lambdicke", "Lamb-Dicke parameter of the conversion beams"),
    ("conv_roundtrip_eps", "depolarization per S<->F round trip"),
    ("echo_a", "storage dephasing noise amplitude, rad/s"),
    ("echo_omega", "storage dephasing noise angular frequency, rad/s"),
    ("echo_t2", "storage white-noise coherence time, s"),
    ("echo_c", "storage readout offset"),
    ("solid_fraction", "collection solid-angle fraction"),
    ("fiber_eff", "fiber coupling efficiency"),
    ("detector_eff", "photon detector efficiency"),
    ("optics_eff", "remaining optical path transmission"),
    ("emission_mean", "spontaneous emission time constant, s"),
    ("doppler_photons", "photons scattered per attempt during cooling"),
    ("ion_distance", "distance to the neighboring memory ion, m"),
    ("fluor_wavelength", "fluorescence wavelength, m"),
    ("memory_detuning", "fluorescence detuning from the shelved memory, rad/s"),
];

enum Fail {
    /// Bad input (config, flags, data files): exit code 2.
    Input(String),
    /// Runtime, convergence or I/O failure: exit code 1.
    Runtime(String),
}

type CliResult<T> = Result<T, Fail>;

fn input(msg: impl Into<String>) -> Fail {
    Fail::Input(msg.into())
}

fn runtime(msg: impl Into<String>) -> Fail {
    Fail::Runtime(msg.into())
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DetectorArg {
    Pmt,
    Emccd,
}

#[derive(Args)]
struct Common {
    /// Key=value configuration file applied over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; fixes every stochastic result.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (0 = all cores). Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output directory for CSV tables and summaries.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// `off` starts from the noise-free parameter set instead of the
    /// calibrated one.
    #[arg(long, global = true)]
    noise: Option<Switch>,
    /// Ion-readout detector preset (bright/dark error pair).
    #[arg(long, global = true)]
    detector: Option<DetectorArg>,

    #[command(flatten)]
    overrides: Overrides,
}

macro_rules! override_args {
    ($($field:ident: $ty:ty),* $(,)?) => {
        #[derive(Args)]
        struct Overrides {
            $(
                #[arg(long, global = true, hide = true)]
                $field: Option<$ty>,
            )*
        }

        impl Overrides {
            fn entries(&self) -> Vec<(&'static str, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field), v.to_string()));
                    }
                )*
                out
            }
        }
    };
}

override_args! {
    dark_count_rate: f64,
    detect_window: f64,
    rep_rate: f64,
    jitter_sigma: f64,
    delta_f_zeeman: f64,
    t2_zeeman: f64,
    pol_impurity_eps: f64,
    misalign_angle: f64,
    err_bright: f64,
    err_dark: f64,
    pump_photon_count: u32,
    mw2_duration: f64,
    pulse_area: f64,
    nbar: f64,
    eta_lambdicke: f64,
    conv_roundtrip_eps: f64,
    echo_a: f64,
    echo_omega: f64,
    echo_t2: f64,
    echo_c: f64,
    solid_fraction: f64,
    fiber_eff: f64,
    detector_eff: f64,
    optics_eff: f64,
    emission_mean: f64,
    doppler_photons: u32,
    ion_distance: f64,
    fluor_wavelength: f64,
    memory_detuning: f64,
}

#[derive(Parser)]
#[command(
    name = "ionnode",
    about = "Monte Carlo model of a trapped-ion network node: heralded \
             ion-photon entanglement, long-lived qubit storage, and the \
             combined crosstalk-protected protocol",
    subcommand_negates_reqs = true
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    /// Print the effective configuration (key, value, meaning) and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Heralded ion-photon entanglement: correlation tables, analysis
    /// phase scan, and the entanglement-fidelity bound.
    Entangle {
        /// Heralded events per measurement basis.
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
    },
    /// Qubit storage in the F-manifold: MUB fidelity table at one hold
    /// time plus a fidelity-versus-time sweep with a model fit.
    Storage {
        /// Hold time for the MUB table, s.
        #[arg(long, default_value_t = 0.2)]
        time: f64,
        /// Trials per MUB state (table) and per sweep point.
        #[arg(long, default_value_t = 6_000)]
        trials: u64,
    },
    /// Storage while entanglement attempts run in a window: memory
    /// fidelity, attempt success fraction, and the entanglement bound.
    Combined {
        /// Total hold time, s.
        #[arg(long, default_value_t = 0.2)]
        time: f64,
        /// Entanglement-attempt window centered in the hold time, s
        /// (default: half the hold time).
        #[arg(long)]
        window: Option<f64>,
        /// Shelve the memory in the F manifold during attempts.
        #[arg(long, default_value = "on")]
        protection: Switch,
        /// Memory trials (also heralds per basis for the bound).
        #[arg(long, default_value_t = 2_400)]
        trials: u64,
    },
    /// Scattered-light crosstalk scaling laws: worked examples and an
    /// error-versus-distance sweep.
    Crosstalk,
    /// Heralding-rate and entanglement error budgets.
    Budget,
    /// Fit a model to tabulated data from a CSV file.
    Fit {
        /// Model: conversion (n,fidelity), storage (time_s,fidelity[,sigma]),
        /// or phase (phi,contrast).
        #[arg(long)]
        model: FitModel,
        /// Input CSV path.
        file: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FitModel {
    Conversion,
    Storage,
    Phase,
}

fn apply_key(cfg: &mut NoiseConfig, key: &str, raw: &str) -> Result<(), String> {
    fn num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        raw.trim().parse().map_err(|e| format!("bad value for {key}: {e}"))
    }
    match key {
        "dark_count_rate" => cfg.dark_count_rate = num(key, raw)?,
        "detect_window" => cfg.detect_window = num(key, raw)?,
        "rep_rate" => cfg.rep_rate = num(key, raw)?,
        "jitter_sigma" => cfg.jitter_sigma = num(key, raw)?,
        "delta_f_zeeman" => cfg.delta_f_zeeman = num(key, raw)?,
        "t2_zeeman" => cfg.t2_zeeman = num(key, raw)?,
        "pol_impurity_eps" => cfg.pol_impurity_eps = num(key, raw)?,
        "misalign_angle" => cfg.misalign_angle = num(key, raw)?,
        "err_bright" => cfg.err_bright = num(key, raw)?,
        "err_dark" => cfg.err_dark = num(key, raw)?,
        "pump_photon_count" => cfg.pump_photon_count = num(key, raw)?,
        "mw2_duration" => cfg.mw2_duration = num(key, raw)?,
        "pulse_area" => cfg.pulse_area = num(key, raw)?,
        "nbar" => cfg.nbar = num(key, raw)?,
        "eta_lambdicke" => cfg.eta_lambdicke = num(key, raw)?,
        "conv_roundtrip_eps" => cfg.conv_roundtrip_eps = num(key, raw)?,
        "echo_a" => cfg.echo.a = num(key, raw)?,
        "echo_omega" => cfg.echo.omega = num(key, raw)?,
        "echo_t2" => cfg.echo.t2 = num(key, raw)?,
        "echo_c" => cfg.echo.c = num(key, raw)?,
        "solid_fraction" => cfg.solid_fraction = num(key, raw)?,
        "fiber_eff" => cfg.fiber_eff = num(key, raw)?,
        "detector_eff" => cfg.detector_eff = num(key, raw)?,
        "optics_eff" => cfg.optics_eff = num(key, raw)?,
        "emission_mean" => cfg.emission_mean = num(key, raw)?,
        "doppler_photons" => cfg.doppler_photons = num(key, raw)?,
        "ion_distance" => cfg.ion_distance = num(key, raw)?,
        "fluor_wavelength" => cfg.fluor_wavelength = num(key, raw)?,
        "memory_detuning" => cfg.memory_detuning = num(key, raw)?,
        other => return Err(format!("unknown config key '{other}'")),
    }
    Ok(())
}

fn read_key(cfg: &NoiseConfig, key: &str) -> String {
    match key {
        "dark_count_rate" => cfg.dark_count_rate.to_string(),
        "detect_window" => cfg.detect_window.to_string(),
        "rep_rate" => cfg.rep_rate.to_string(),
        "jitter_sigma" => cfg.jitter_sigma.to_string(),
        "delta_f_zeeman" => cfg.delta_f_zeeman.to_string(),
        "t2_zeeman" => cfg.t2_zeeman.to_string(),
        "pol_impurity_eps" => cfg.pol_impurity_eps.to_string(),
        "misalign_angle" => cfg.misalign_angle.to_string(),
        "err_bright" => cfg.err_bright.to_string(),
        "err_dark" => cfg.err_dark.to_string(),
        "pump_photon_count" => cfg.pump_photon_count.to_string(),
        "mw2_duration" => cfg.mw2_duration.to_string(),
        "pulse_area" => cfg.pulse_area.to_string(),
        "nbar" => cfg.nbar.to_string(),
        "eta_lambdicke" => cfg.eta_lambdicke.to_string(),
        "conv_roundtrip_eps" => cfg.conv_roundtrip_eps.to_string(),
        "echo_a" => cfg.echo.a.to_string(),
        "echo_omega" => cfg.echo.omega.to_string(),
        "echo_t2" => cfg.echo.t2.to_string(),
        "echo_c" => cfg.echo.c.to_string(),
        "solid_fraction" => cfg.solid_fraction.to_string(),
        "fiber_eff" => cfg.fiber_eff.to_string(),
        "detector_eff" => cfg.detector_eff.to_string(),
        "optics_eff" => cfg.optics_eff.to_string(),
        "emission_mean" => cfg.emission_mean.to_string(),
        "doppler_photons" => cfg.doppler_photons.to_string(),
        "ion_distance" => cfg.ion_distance.to_string(),
        "fluor_wavelength" => cfg.fluor_wavelength.to_string(),
        "memory_detuning" => cfg.memory_detuning.to_string(),
        _ => unreachable!("key list is fixed"),
    }
}

/// Build the effective configuration: defaults, then config file, then
/// IONNODE_* environment variables, then the detector preset, then
/// individual flag overrides.
fn assemble_config(common: &Common) -> CliResult<NoiseConfig> {
    let mut cfg = match common.noise {
        Some(Switch::Off) => NoiseConfig::noiseless(),
        _ => NoiseConfig::calibrated(),
    };

    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| input(format!("cannot read config {}: {e}", path.display())))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| input(format!("{}:{}: expected key = value", path.display(), lineno + 1)))?;
            apply_key(&mut cfg, key.trim(), value)
                .map_err(|e| input(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        }
    }

    for (key, _) in CONFIG_KEYS {
        if let Ok(value) = std::env::var(format!("IONNODE_{}", key.to_uppercase())) {
            apply_key(&mut cfg, key, &value).map_err(|e| input(format!("IONNODE_*: {e}")))?;
        }
    }

    if let Some(d) = common.detector {
        cfg = cfg.with_detector(match d {
            DetectorArg::Pmt => DetectorKind::Pmt,
            DetectorArg::Emccd => DetectorKind::Emccd,
        });
    }

    for (key, value) in common.overrides.entries() {
        apply_key(&mut cfg, key, &value).map_err(input)?;
    }

    cfg.validate().map_err(|e| input(e.to_string()))?;
    Ok(cfg)
}

/// Create an output file that starts with the reproducibility header.
fn create_output(common: &Common, name: &str) -> CliResult<File> {
    fs::create_dir_all(&common.out)
        .map_err(|e| runtime(format!("cannot create {}: {e}", common.out.display())))?;
    let path = common.out.join(name);
    let mut f = File::create(&path)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    writeln!(f, "# seed={}, workers={}", common.seed, common.workers)
        .map_err(|e| runtime(format!("write {name}: {e}")))?;
    Ok(f)
}

fn write_csv(
    common: &Common,
    name: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> CliResult<()> {
    let file = create_output(common, name)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(|e| runtime(format!("write {name}: {e}")))?;
    for row in rows {
        w.write_record(row).map_err(|e| runtime(format!("write {name}: {e}")))?;
    }
    w.flush().map_err(|e| runtime(format!("write {name}: {e}")))
}

/// Console output; a consumer closing the pipe (e.g. `| head`) is not an
/// error, unlike a failed file write.
fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

/// Print the summary and mirror it into <prefix>_summary.txt.
fn emit_summary(common: &Common, prefix: &str, lines: &[String]) -> CliResult<()> {
    let mut f = create_output(common, &format!("{prefix}_summary.txt"))?;
    for line in lines {
        say(line);
        writeln!(f, "{line}").map_err(|e| runtime(format!("write summary: {e}")))?;
    }
    Ok(())
}

fn print_config(cfg: &NoiseConfig) {
    say("# effective configuration (key = value  # meaning)");
    for (key, desc) in CONFIG_KEYS {
        say(&format!("{key} = {}  # {desc}", read_key(cfg, key)));
    }
}

fn fit_rows(fit: &FitResult) -> Vec<Vec<String>> {
    fit.names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            vec![
                name.to_string(),
                format!("{:.9}", fit.params[i]),
                format!("{:.9}", fit.sigmas[i]),
                fit.degenerate[i].to_string(),
            ]
        })
        .collect()
}

fn cmd_entangle(common: &Common, cfg: &NoiseConfig, trials: u64) -> CliResult<()> {
    let out = run_entanglement_experiment(cfg, trials, common.seed, common.workers)
        .map_err(|e| runtime(e.to_string()))?;
    let (bound, sigma) = fidelity_bound(&out.table).map_err(|e| runtime(e.to_string()))?;

    let mut rows = Vec::new();
    for (basis, table) in [("diagonal", &out.diagonal), ("offdiagonal", &out.offdiagonal)] {
        for (i, ion) in ["up", "down"].iter().enumerate() {
            for (p, photon) in ["H", "V"].iter().enumerate() {
                rows.push(vec![
                    basis.to_string(),
                    ion.to_string(),
                    photon.to_string(),
                    table.counts[i][p].to_string(),
                ]);
            }
        }
    }
    write_csv(common, "entangle_correlations.csv", &["basis", "ion", "photon", "count"], &rows)?;

    let scan_rows: Vec<Vec<String>> = out
        .scan
        .iter()
        .map(|(phi, d)| vec![format!("{phi:.6}"), format!("{d:.6}")])
        .collect();
    write_csv(common, "entangle_scan.csv", &["phi", "contrast"], &scan_rows)?;

    let d = out.table.diagonal.as_ref().expect("diagonal basis present");
    let o = out.table.offdiagonal.as_ref().expect("offdiagonal basis present");
    emit_summary(
        common,
        "entangle",
        &[
            format!("heralds per basis: {trials}"),
            format!("attempts: {}", out.attempts),
            format!("attempts per herald: {:.1}", out.attempts as f64 / out.heralds as f64),
            format!(
                "dark-count share of heralds: {:.4}",
                out.dark_heralds as f64 / out.heralds as f64
            ),
            format!("analysis phase optimum, rad: {:.4}", out.phi_star),
            format!("P(up|V) diagonal: {:.4}", d.p_up_given_v),
            format!("P(down|H) diagonal: {:.4}", 1.0 - d.p_up_given_h),
            format!("P(up|V) off-diagonal: {:.4}", o.p_up_given_v),
            format!("P(up|H) off-diagonal: {:.4}", o.p_up_given_h),
            format!("fidelity bound: {bound:.4}"),
            format!("bound standard error: {sigma:.4}"),
        ],
    )
}

const MUB_LABELS: [&str; 6] = ["down", "up", "plus", "minus", "plus_i", "minus_i"];

fn mub_rows(per_mub: &[(f64, u64); 6]) -> Vec<Vec<String>> {
    per_mub
        .iter()
        .zip(MUB_LABELS)
        .map(|((f, n), label)| {
            let sigma = ionnode::analysis::binomial_error((f * *n as f64).round() as u64, *n)
                .unwrap_or(0.0);
            vec![
                label.to_string(),
                format!("{f:.6}"),
                format!("{sigma:.6}"),
                n.to_string(),
            ]
        })
        .collect()
}

fn cmd_storage(common: &Common, cfg: &NoiseConfig, time: f64, trials: u64) -> CliResult<()> {
    let mub = run_storage_experiment(cfg, time, trials, common.seed, common.workers)
        .map_err(|e| runtime(e.to_string()))?;
    write_csv(
        common,
        "storage_mub.csv",
        &["state", "fidelity", "sigma", "trials"],
        &mub_rows(&mub.per_mub),
    )?;

    let times: Vec<f64> = (0..41).map(|i| 0.01 + i as f64 * (1.0 - 0.01) / 40.0).collect();
    let sweep = run_storage_sweep(cfg, &times, trials, common.seed, common.workers)
        .map_err(|e| runtime(e.to_string()))?;
    let sweep_rows: Vec<Vec<String>> = sweep
        .iter()
        .map(|(t, f, s)| vec![format!("{t:.6}"), format!("{f:.6}"), format!("{s:.6}")])
        .collect();
    write_csv(common, "storage_sweep.csv", &["time_s", "fidelity", "sigma"], &sweep_rows)?;

    let data: Vec<(f64, f64)> = sweep.iter().map(|(t, f, _)| (*t, *f)).collect();
    // binomial error bars can hit zero on perfect points; floor them
    let floor = 0.5 / trials as f64;
    let errs: Vec<f64> = sweep.iter().map(|(_, _, s)| s.max(floor)).collect();
    let fit = fit_storage(&data, Some(&errs)).map_err(|e| runtime(e.to_string()))?;
    write_csv(
        common,
        "storage_fit.csv",
        &["param", "value", "sigma", "degenerate"],
        &fit_rows(&fit),
    )?;

    let f_hz = fit.params[1] / (2.0 * std::f64::consts::PI);
    let f_hz_sigma = fit.sigmas[1] / (2.0 * std::f64::consts::PI);
    emit_summary(
        common,
        "storage",
        &[
            format!("hold time, s: {time}"),
            format!("trials per MUB state: {}", mub.per_mub[0].1),
            format!("MUB average fidelity: {:.4}", mub.summary.mean),
            format!("MUB standard error: {:.4}", mub.summary.sem),
            format!("sweep points: {}", sweep.len()),
            format!("fit converged: {}", fit.converged),
            format!("fitted noise frequency, Hz: {f_hz:.3} +- {f_hz_sigma:.3}"),
            format!("fitted coherence time, s: {:.3} +- {:.3}", fit.params[2], fit.sigmas[2]),
        ],
    )
}

fn cmd_combined(
    common: &Common,
    cfg: &NoiseConfig,
    time: f64,
    window: Option<f64>,
    protection: Switch,
    trials: u64,
) -> CliResult<()> {
    let window = window.unwrap_or(time / 2.0);
    let protect = protection == Switch::On;
    let comb = run_combined_experiment(cfg, time, window, trials, protect, common.seed, common.workers)
        .map_err(|e| runtime(e.to_string()))?;
    let ent = run_entanglement_experiment(cfg, trials, common.seed, common.workers)
        .map_err(|e| runtime(e.to_string()))?;
    let (bound, sigma) = fidelity_bound(&ent.table).map_err(|e| runtime(e.to_string()))?;

    write_csv(
        common,
        "combined_mub.csv",
        &["state", "fidelity", "sigma", "trials"],
        &mub_rows(&comb.memory_per_mub),
    )?;
    emit_summary(
        common,
        "combined",
        &[
            format!("hold time, s: {time}"),
            format!("attempt window, s: {window}"),
            format!("protection: {}", if protect { "on" } else { "off" }),
            format!("memory fidelity (MUB average): {:.4}", comb.memory.mean),
            format!("memory standard error: {:.4}", comb.memory.sem),
            format!("attempt success fraction: {:.4}", comb.success_fraction),
            format!("attempts per window: {}", comb.attempts_per_trial),
            format!("herald probability per attempt: {:.3e}", comb.herald_prob),
            format!("memory hit probability per window: {:.3e}", comb.crosstalk_prob),
            format!("entanglement bound: {bound:.4}"),
            format!("bound standard error: {sigma:.4}"),
        ],
    )
}

fn cmd_crosstalk(common: &Common, cfg: &NoiseConfig) -> CliResult<()> {
    let gamma = 1.0 / cfg.emission_mean;
    let scenarios = [
        ("s_qubit_neighbor", cfg.rep_rate, cfg.ion_distance, 0.1, 0.0),
        ("doppler_cooling", gamma / 6.0, 400e-6, 0.5, 0.0),
        ("shelved_memory", cfg.rep_rate, cfg.ion_distance, 0.1, cfg.memory_detuning),
    ];
    let mut rows = Vec::new();
    for (name, rate, d, tau, delta) in scenarios {
        let s = ScatterScenario::new(cfg.fluor_wavelength, gamma, rate, d, tau, delta)
            .map_err(|e| runtime(e.to_string()))?;
        let e = scattering_error(&s).map_err(|e| runtime(e.to_string()))?;
        rows.push(vec![
            name.to_string(),
            format!("{rate:.4e}"),
            format!("{d:.2e}"),
            format!("{tau}"),
            format!("{delta:.3e}"),
            format!("{:.6e}", e.raw),
            format!("{:.6e}", e.clamped),
        ]);
    }
    write_csv(
        common,
        "crosstalk_examples.csv",
        &["scenario", "rate_per_s", "distance_m", "duration_s", "detuning_rad_s", "raw", "clamped"],
        &rows,
    )?;

    let sweep: Vec<Vec<String>> = (2..=200)
        .map(|um| {
            let d = um as f64 * 1e-6;
            let s = ScatterScenario::new(cfg.fluor_wavelength, gamma, cfg.rep_rate, d, 0.1, 0.0)
                .expect("positive scenario parameters");
            let e = scattering_error(&s).expect("valid scenario");
            vec![format!("{d:.6e}"), format!("{:.6e}", e.raw)]
        })
        .collect();
    write_csv(common, "crosstalk_distance_sweep.csv", &["distance_m", "raw_error"], &sweep)?;

    let per_photon = per_photon_error(cfg.fluor_wavelength, cfg.ion_distance)
        .map_err(|e| runtime(e.to_string()))?;
    let compound = compound_error(0.06, cfg.pump_photon_count).map_err(|e| runtime(e.to_string()))?;
    emit_summary(
        common,
        "crosstalk",
        &[
            format!("per-photon excitation error at the qubit spacing: {per_photon:.3e}"),
            format!(
                "compound error over one attempt (eps=0.06, k={}): {compound:.3}",
                cfg.pump_photon_count
            ),
            format!(
                "far-detuned suppression (linewidth/detuning): {:.3e}",
                detuned_suppression(gamma, cfg.memory_detuning)
            ),
        ],
    )
}

fn cmd_budget(common: &Common, cfg: &NoiseConfig) -> CliResult<()> {
    let table = error_budget(cfg);
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![r.name.to_string(), format!("{:.6}", r.contribution), r.formula.to_string()]
        })
        .collect();
    write_csv(common, "budget_terms.csv", &["term", "contribution", "formula"], &rows)?;

    let rate = rate_budget(
        cfg.rep_rate,
        cfg.solid_fraction,
        2.0 / 3.0,
        cfg.fiber_eff,
        cfg.detector_eff,
        cfg.optics_eff,
    )
    .map_err(|e| runtime(e.to_string()))?;
    let p = herald_probability(cfg);
    emit_summary(
        common,
        "budget",
        &[
            format!("expected herald rate, 1/s: {rate:.3}"),
            format!("herald probability per attempt: {p:.4e}"),
            format!("attempts per herald: {:.1}", 1.0 / p),
        ],
    )
}

fn read_fit_csv(path: &Path, columns: &[&str], optional_third: bool) -> CliResult<Vec<Vec<f64>>> {
    let file = File::open(path)
        .map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| input(format!("{}: {e}", path.display())))?
        .clone();
    let got: Vec<String> = headers.iter().map(|h| h.to_lowercase()).collect();
    let want_min = columns.len() - usize::from(optional_third);
    let matches = got.len() >= want_min
        && got.len() <= columns.len()
        && got.iter().zip(columns).all(|(g, w)| g == w);
    if !matches {
        return Err(input(format!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            &columns[..columns.len().min(got.len().max(want_min))],
            got
        )));
    }
    let ncols = got.len();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| input(format!("{}: {e}", path.display())))?;
        if record.len() != ncols {
            return Err(input(format!(
                "{}: row {} has {} fields, expected {ncols}",
                path.display(),
                i + 2,
                record.len()
            )));
        }
        let row: Result<Vec<f64>, _> = record.iter().map(|v| v.parse::<f64>()).collect();
        rows.push(row.map_err(|e| input(format!("{}: row {}: {e}", path.display(), i + 2)))?);
    }
    if rows.is_empty() {
        return Err(input(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn cmd_fit(common: &Common, model: FitModel, file: &Path) -> CliResult<()> {
    let fit = match model {
        FitModel::Conversion => {
            let rows = read_fit_csv(file, &["n", "fidelity"], false)?;
            let data: Result<Vec<(u32, f64)>, Fail> = rows
                .iter()
                .map(|r| {
                    if r[0] < 0.0 || r[0].fract() != 0.0 {
                        Err(input(format!("pulse count must be a nonnegative integer, got {}", r[0])))
                    } else {
                        Ok((r[0] as u32, r[1]))
                    }
                })
                .collect();
            fit_conversion(&data?).map_err(|e| runtime(e.to_string()))?
        }
        FitModel::Storage => {
            let rows = read_fit_csv(file, &["time_s", "fidelity", "sigma"], true)?;
            let data: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
            let errs: Option<Vec<f64>> = if rows[0].len() == 3 {
                Some(rows.iter().map(|r| r[2]).collect())
            } else {
                None
            };
            fit_storage(&data, errs.as_deref()).map_err(|e| runtime(e.to_string()))?
        }
        FitModel::Phase => {
            let rows = read_fit_csv(file, &["phi", "contrast"], false)?;
            let data: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
            fit_phase_scan(&data).map_err(|e| runtime(e.to_string()))?
        }
    };

    write_csv(
        common,
        "fit_params.csv",
        &["param", "value", "sigma", "degenerate"],
        &fit_rows(&fit),
    )?;
    let mut lines = vec![
        format!("input: {}", file.display()),
        format!("converged: {}", fit.converged),
        format!("residual sum of squares: {:.6e}", fit.rss),
    ];
    for (i, name) in fit.names.iter().enumerate() {
        lines.push(format!(
            "{name}: {:.6} +- {:.6}{}",
            fit.params[i],
            fit.sigmas[i],
            if fit.degenerate[i] { " (unidentifiable)" } else { "" }
        ));
    }
    emit_summary(common, "fit", &lines)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = assemble_config(&cli.common)?;
    if cli.print_config {
        print_config(&cfg);
        return Ok(());
    }
    match cli.cmd {
        None => Err(input("missing subcommand; see --help".to_string())),
        Some(Cmd::Entangle { trials }) => cmd_entangle(&cli.common, &cfg, trials),
        Some(Cmd::Storage { time, trials }) => cmd_storage(&cli.common, &cfg, time, trials),
        Some(Cmd::Combined { time, window, protection, trials }) => {
            cmd_combined(&cli.common, &cfg, time, window, protection, trials)
        }
        Some(Cmd::Crosstalk) => cmd_crosstalk(&cli.common, &cfg),
        Some(Cmd::Budget) => cmd_budget(&cli.common, &cfg),
        Some(Cmd::Fit { model, file }) => cmd_fit(&cli.common, model, &file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Fail::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
