//! Scenario registry, run orchestration, exports and sweeps.

pub mod checks;
pub mod export;
pub mod scenario;
pub mod sweep;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use checks::CheckResult;
pub use export::{report, Format, OutputFile, ReportSummary};
pub use scenario::{parse_config, preset, CheckKind, CheckSpec, InitialWave, Scenario, PRESETS};
pub use sweep::{sweep, SweepAxis, SweepReport};

use crate::deviation::{measure_deviation_histogram, quantum_potential_fraction, DeviationMeasurement};
use crate::error::{Error, Result};
use crate::evolve::{evolve, mean_energy, EvolutionDiagnostics, FrameSeries};
use crate::trajectories::{accumulate_action_recorded, sample_initial, EnsembleSnapshot, TrajectoryDiagnostics, TrajectoryEnsemble};
use checks::TrajectoryRun;
use export::{exported_frames, frame_table, trajectory_table, OutputWriter, Table};

pub const CODE_VERSION: &str = concat!("qhd ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pass,
    Fail,
    ConfigError,
    RuntimeError,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Pass => 0,
            RunStatus::Fail => 1,
            RunStatus::ConfigError => 2,
            RunStatus::RuntimeError => 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub elapsed_s: f64,
    pub stages: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub segments: usize,
    pub measured: usize,
    pub skipped_segments: usize,
    /// Fitted exponential rate of `|dS - dS_c|`, reported next to `2/hbar`.
    pub rate: Option<f64>,
    pub reference_rate: f64,
    pub mean: Option<f64>,
    pub ks: Option<f64>,
    pub sign_plus_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub evolution: Option<EvolutionDiagnostics>,
    pub frames: usize,
    pub trajectories: Option<TrajectoryDiagnostics>,
    pub deviation: Option<DeviationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: Scenario,
    /// The scenario in config form with every default written out.
    pub config: String,
    pub code_version: String,
    pub seed: Option<u64>,
    pub timing: Timing,
    pub diagnostics: RunDiagnostics,
    /// Scalar summaries of the run (energies, quantum-potential weight).
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<CheckResult>,
    pub outputs: Vec<OutputFile>,
    pub status: RunStatus,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// The manifest with timing zeroed, for comparisons between runs.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: Timing::default(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Exports and the manifest go here; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    pub format: Format,
}

/// In-memory products of a run.
pub struct RunProducts {
    pub frames: FrameSeries,
    pub initial: Option<TrajectoryEnsemble>,
    pub last: Option<TrajectoryEnsemble>,
    pub snapshots: Vec<EnsembleSnapshot>,
    pub deviation: Option<DeviationMeasurement>,
}

struct Stopwatch {
    t0: Instant,
    last: Instant,
    stages: BTreeMap<String, f64>,
}

impl Stopwatch {
    fn new() -> Self {
        let now = Instant::now();
        Self {
            t0: now,
            last: now,
            stages: BTreeMap::new(),
        }
    }
    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.stages.insert(name.into(), (now - self.last).as_secs_f64());
        self.last = now;
    }
}

fn not_evaluated(s: &Scenario, why: &Error) -> Vec<CheckResult> {
    s.checks.iter().map(|c| CheckResult::failed(c, why)).collect()
}

/// Evolves, transports and measures; no checks, no files.
pub fn execute(s: &Scenario) -> Result<RunProducts> {
    s.validate()?;
    let w0 = s.initial_wave()?;
    let frames = evolve(&w0, &s.potential, &s.constants, &s.evolution)?;
    let mut out = RunProducts {
        frames,
        initial: None,
        last: None,
        snapshots: Vec::new(),
        deviation: None,
    };
    if let Some(ts) = &s.trajectories {
        let f0 = &out.frames.fields[0];
        let mut e = sample_initial(&f0.rho, &f0.grid, ts.n, ts.seed)?;
        e.seed_actions(f0);
        let (last, snaps) = accumulate_action_recorded(&e, &out.frames, s.evolution.dt, s.evolution.n_steps, ts.export_every)?;
        if let Some(d) = &s.deviation {
            out.deviation = Some(measure_deviation_histogram(
                &e,
                &out.frames,
                &s.potential,
                &s.constants,
                d.segment_dt,
                d.n_segments,
                d.binning,
            )?);
        }
        out.initial = Some(e);
        out.last = Some(last);
        out.snapshots = snaps;
    }
    Ok(out)
}

fn metrics_of(s: &Scenario, p: &RunProducts) -> BTreeMap<String, f64> {
    let f = &p.frames;
    let mut m = BTreeMap::new();
    m.insert("t_final".into(), f.t_end());
    m.insert("initial_energy".into(), mean_energy(&f.waves[0], &s.potential, &s.constants));
    m.insert(
        "final_energy".into(),
        mean_energy(f.waves.last().expect("frames"), &s.potential, &s.constants),
    );
    m.insert("final_norm".into(), f.diagnostics.final_norm);
    m.insert(
        "quantum_potential_fraction".into(),
        quantum_potential_fraction(f.fields.last().expect("frames"), &s.potential, &s.constants),
    );
    if let Some(e) = &p.last {
        m.insert("alive_fraction".into(), e.alive_count() as f64 / e.len().max(1) as f64);
    }
    m
}

fn deviation_summary(s: &Scenario, d: &DeviationMeasurement) -> DeviationSummary {
    let h = d.histogram.as_ref();
    DeviationSummary {
        segments: d.segments,
        measured: d.deviations.len(),
        skipped_segments: d.skipped_segments,
        rate: h.map(|h| h.rate),
        reference_rate: 2.0 / s.constants.hbar(),
        mean: h.map(|h| h.mean),
        ks: h.map(|h| h.ks),
        sign_plus_fraction: h.and_then(|h| h.sign_plus_fraction),
    }
}

fn write_exports(w: &mut OutputWriter, s: &Scenario, p: &RunProducts, checks: &[CheckResult], format: Format) -> Result<()> {
    let f = &p.frames;
    for k in exported_frames(f.len(), s.export_every) {
        w.table(&format!("frames/frame_{k:05}"), &frame_table(f, k), format)?;
    }
    if !p.snapshots.is_empty() {
        w.table("trajectories", &trajectory_table(&p.snapshots), format)?;
    }
    if let Some(h) = p.deviation.as_ref().and_then(|d| d.histogram.as_ref()) {
        let mut t = Table::new(&["bin_lo", "bin_hi", "count"]);
        for (e, c) in h.edges.windows(2).zip(&h.counts) {
            t.push(vec![e[0], e[1], *c as f64]);
        }
        w.table("deviation_histogram", &t, format)?;
        w.write("deviation_fit.json", &(serde_json::to_string_pretty(&deviation_summary(s, p.deviation.as_ref().expect("measured")))? + "\n"))?;
    }
    let wants_fringes = s
        .checks
        .iter()
        .any(|c| matches!(c.kind, CheckKind::FringeAlignment | CheckKind::FringeCorrelation));
    if let (true, Some(last), Some(ts)) = (wants_fringes, &p.last, &s.trajectories) {
        if let Ok(fr) = checks::fringes(last, f, ts.bins) {
            let mut t = Table::new(&["bin_lo", "bin_hi", "count", "density", "smoothed", "rho"]);
            for b in 0..fr.histogram.counts.len() {
                t.push(vec![
                    fr.histogram.edges[b],
                    fr.histogram.edges[b + 1],
                    fr.histogram.counts[b] as f64,
                    fr.histogram.density[b],
                    fr.smoothed[b],
                    fr.rho_binned[b],
                ]);
            }
            w.table("fringes", &t, format)?;
        }
    }
    #[derive(Serialize)]
    struct ResidualReport<'a> {
        grid: &'a crate::fields::Grid1D,
        dt: f64,
        frame_dt: f64,
        checks: &'a [CheckResult],
    }
    let rr = ResidualReport {
        grid: &s.grid,
        dt: s.evolution.dt,
        frame_dt: f.frame_dt,
        checks,
    };
    w.write("residuals.json", &(serde_json::to_string_pretty(&rr)? + "\n"))?;
    Ok(())
}

/// Full run: evolve, transport, check, export and write `manifest.json`.
/// Module errors are recorded in the manifest rather than returned; only
/// failures to write the output directory surface as `Err`.
pub fn run(s: &Scenario, opts: &RunOptions) -> Result<RunManifest> {
    let started_unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    let mut clock = Stopwatch::new();
    let mut manifest = RunManifest {
        scenario: s.clone(),
        config: s.to_config(),
        code_version: CODE_VERSION.into(),
        seed: s.trajectories.map(|t| t.seed),
        timing: Timing::default(),
        diagnostics: RunDiagnostics::default(),
        metrics: BTreeMap::new(),
        checks: Vec::new(),
        outputs: Vec::new(),
        status: RunStatus::Pass,
        error: None,
    };

    let products = match s.validate() {
        Err(e) => {
            manifest.status = RunStatus::ConfigError;
            manifest.checks = not_evaluated(s, &e);
            manifest.error = Some(e.to_string());
            None
        }
        Ok(()) => match execute(s) {
            Err(e) => {
                manifest.status = RunStatus::RuntimeError;
                manifest.checks = not_evaluated(s, &e);
                manifest.error = Some(e.to_string());
                None
            }
            Ok(p) => Some(p),
        },
    };
    clock.lap("simulate");

    if let Some(p) = &products {
        let traj = match (&p.initial, &p.last) {
            (Some(initial), Some(last)) => Some(TrajectoryRun { initial, last }),
            _ => None,
        };
        manifest.checks = checks::evaluate(s, &p.frames, traj.as_ref());
        clock.lap("checks");
        manifest.metrics = metrics_of(s, p);
        manifest.diagnostics = RunDiagnostics {
            evolution: Some(p.frames.diagnostics.clone()),
            frames: p.frames.len(),
            trajectories: p.last.as_ref().map(|e| e.diagnostics.clone()),
            deviation: p.deviation.as_ref().map(|d| deviation_summary(s, d)),
        };
        if manifest.checks.iter().any(|c| !c.passed) {
            manifest.status = RunStatus::Fail;
        }
    }

    if let Some(dir) = &opts.out_dir {
        let mut w = OutputWriter::new(dir)?;
        if let Some(p) = &products {
            write_exports(&mut w, s, p, &manifest.checks, opts.format)?;
        }
        w.write("scenario.ini", &manifest.config)?;
        manifest.outputs = w.files.clone();
        clock.lap("exports");
        manifest.timing = Timing {
            started_unix_ms,
            elapsed_s: clock.t0.elapsed().as_secs_f64(),
            stages: clock.stages.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(w.root().join("manifest.json"), text)?;
    } else {
        manifest.timing = Timing {
            started_unix_ms,
            elapsed_s: clock.t0.elapsed().as_secs_f64(),
            stages: clock.stages,
        };
    }
    Ok(manifest)
}

/// Runs `f` on a pool of `workers` threads (0: rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Loads a preset by name, or else a config file from disk.
pub fn load_scenario(arg: &str) -> Result<Scenario> {
    if scenario::preset_config(arg).is_some() {
        return preset(arg);
    }
    let text = std::fs::read_to_string(arg)
        .map_err(|e| Error::Config(format!("cannot read config `{arg}`: {e}")))?;
    parse_config(&text)
}

/// A config failure before any scenario exists still gets a manifest-like
/// exit status.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => RunStatus::RuntimeError.exit_code(),
        _ => RunStatus::ConfigError.exit_code(),
    }
}
