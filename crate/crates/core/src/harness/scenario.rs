//! Scenario description, INI parsing and the shipped presets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use ini::Ini;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::deviation::Binning;
use crate::error::{Error, Result};
use crate::evolve::{EvolutionConfig, Potential};
use crate::fields::{normalize, Grid1D, PhysicalConstants, WaveField, DEFAULT_RHO_FLOOR_RELATIVE};

/// Largest allowed initial density at the end nodes relative to its max.
pub const BOUNDARY_GUARD: f64 = 1e-10;
/// Frame spacing limit for trajectory runs, in time steps.
pub const MAX_TRAJECTORY_STRIDE: usize = 10;

pub const DEFAULT_N: usize = 2048;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_FINAL: f64 = 1.0;
pub const DEFAULT_FRINGE_BINS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialWave {
    Gaussian { x0: f64, sigma: f64, k0: f64 },
    /// Ground-state-width packet displaced to `x0` in a harmonic trap.
    Coherent { x0: f64 },
    /// Equal-weight pair of Gaussians of width `slit_width` at `±separation/2`.
    DoubleSlit { separation: f64, slit_width: f64, k0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub n: usize,
    pub seed: u64,
    /// Stride, in time steps, of the trajectory export.
    pub export_every: usize,
    /// Histogram bins for the fringe checks.
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationSpec {
    pub segment_dt: f64,
    pub n_segments: usize,
    pub binning: Binning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    NormDrift,
    EnergyDrift,
    BranchCancellation,
    Continuity,
    Madelung,
    ClassicalHj,
    Identity,
    Equivariance,
    ActionPhase,
    WidthLaw,
    Centroid,
    FringeAlignment,
    FringeCorrelation,
}

impl CheckKind {
    pub const ALL: [CheckKind; 13] = [
        CheckKind::NormDrift,
        CheckKind::EnergyDrift,
        CheckKind::BranchCancellation,
        CheckKind::Continuity,
        CheckKind::Madelung,
        CheckKind::ClassicalHj,
        CheckKind::Identity,
        CheckKind::Equivariance,
        CheckKind::ActionPhase,
        CheckKind::WidthLaw,
        CheckKind::Centroid,
        CheckKind::FringeAlignment,
        CheckKind::FringeCorrelation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::NormDrift => "norm_drift",
            CheckKind::EnergyDrift => "energy_drift",
            CheckKind::BranchCancellation => "branch_cancellation",
            CheckKind::Continuity => "continuity",
            CheckKind::Madelung => "madelung",
            CheckKind::ClassicalHj => "classical_hj",
            CheckKind::Identity => "identity",
            CheckKind::Equivariance => "equivariance",
            CheckKind::ActionPhase => "action_phase",
            CheckKind::WidthLaw => "width_law",
            CheckKind::Centroid => "centroid",
            CheckKind::FringeAlignment => "fringe_alignment",
            CheckKind::FringeCorrelation => "fringe_correlation",
        }
    }

    /// Passing means `value >= threshold` instead of `<=`.
    pub fn higher_is_better(self) -> bool {
        matches!(self, CheckKind::FringeCorrelation)
    }

    pub fn needs_trajectories(self) -> bool {
        matches!(
            self,
            CheckKind::Equivariance | CheckKind::ActionPhase | CheckKind::FringeAlignment | CheckKind::FringeCorrelation
        )
    }
}

impl FromStr for CheckKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CheckKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown key `checks.{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    pub kind: CheckKind,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub grid: Grid1D,
    pub constants: PhysicalConstants,
    pub potential: Potential,
    pub initial: InitialWave,
    pub evolution: EvolutionConfig,
    /// Stride, in stored frames, of the frame export.
    pub export_every: usize,
    pub trajectories: Option<TrajectorySpec>,
    pub deviation: Option<DeviationSpec>,
    pub checks: Vec<CheckSpec>,
}

fn gaussian(x: f64, x0: f64, sigma: f64) -> f64 {
    (-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp()
}

impl InitialWave {
    fn amplitude(&self, x: f64, p: &Potential, c: &PhysicalConstants) -> Result<Complex64> {
        Ok(match *self {
            InitialWave::Gaussian { x0, sigma, k0 } => Complex64::from_polar(gaussian(x, x0, sigma), k0 * x),
            InitialWave::Coherent { x0 } => {
                let Potential::Harmonic { omega } = *p else {
                    return Err(Error::Config("initial.kind = coherent requires potential.kind = harmonic".into()));
                };
                let sigma = (c.hbar() / (2.0 * c.mass() * omega)).sqrt();
                Complex64::new(gaussian(x, x0, sigma), 0.0)
            }
            InitialWave::DoubleSlit { separation, slit_width, k0 } => {
                let a = gaussian(x, -0.5 * separation, slit_width) + gaussian(x, 0.5 * separation, slit_width);
                Complex64::from_polar(a, k0 * x)
            }
        })
    }

    /// Packet width parameter (sigma of the density); the coherent width
    /// follows from hbar, m and omega.
    pub fn sigma(&self, p: &Potential, c: &PhysicalConstants) -> Option<f64> {
        match (*self, *p) {
            (InitialWave::Gaussian { sigma, .. }, _) => Some(sigma),
            (InitialWave::Coherent { .. }, Potential::Harmonic { omega }) => Some((c.hbar() / (2.0 * c.mass() * omega)).sqrt()),
            (InitialWave::DoubleSlit { slit_width, .. }, _) => Some(slit_width),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid initial wave: {what}")));
        match *self {
            InitialWave::Gaussian { x0, sigma, k0 } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return bad("sigma must be positive");
                }
                if !(x0.is_finite() && k0.is_finite()) {
                    return bad("x0 and k0 must be finite");
                }
            }
            InitialWave::Coherent { x0 } => {
                if !x0.is_finite() {
                    return bad("x0 must be finite");
                }
            }
            InitialWave::DoubleSlit { separation, slit_width, k0 } => {
                if !(separation > 0.0 && separation.is_finite()) {
                    return bad("separation must be positive");
                }
                if !(slit_width > 0.0 && slit_width.is_finite()) {
                    return bad("slit_width must be positive");
                }
                if !k0.is_finite() {
                    return bad("k0 must be finite");
                }
            }
        }
        Ok(())
    }
}

impl Scenario {
    /// Normalized initial wave with the end nodes pinned to zero.
    pub fn initial_wave(&self) -> Result<WaveField> {
        let psi = (0..self.grid.n())
            .map(|i| self.initial.amplitude(self.grid.x(i), &self.potential, &self.constants))
            .collect::<Result<Vec<_>>>()?;
        let w = WaveField::new(self.grid, 0.0, psi)?;
        normalize(&w.with_dirichlet_ends()?)
    }

    pub fn t_final(&self) -> f64 {
        self.evolution.dt * self.evolution.n_steps as f64
    }

    pub fn check(&self, kind: CheckKind) -> Option<f64> {
        self.checks.iter().find(|c| c.kind == kind).map(|c| c.threshold)
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        self.initial.validate()?;
        self.evolution.validate()?;
        // domain-size guard on the unpinned profile
        let raw = |x: f64| self.initial.amplitude(x, &self.potential, &self.constants).map(|z| z.norm_sqr());
        let peak = (0..self.grid.n()).map(|i| raw(self.grid.x(i))).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
        if !(peak > 0.0) {
            return Err(Error::Config("initial wave vanishes on the grid".into()));
        }
        let edge = raw(self.grid.x_min())?.max(raw(self.grid.x_max())?);
        if edge > BOUNDARY_GUARD * peak {
            return Err(Error::Config(format!(
                "domain guard: boundary density {:.3e} of max exceeds {BOUNDARY_GUARD:e}; widen the grid",
                edge / peak
            )));
        }
        if self.export_every == 0 {
            return Err(Error::Config("evolution.export_every must be at least 1".into()));
        }
        if let Some(t) = &self.trajectories {
            if t.n == 0 {
                return Err(Error::Config("trajectories.n must be at least 1".into()));
            }
            if t.export_every == 0 {
                return Err(Error::Config("trajectories.export_every must be at least 1".into()));
            }
            if t.bins < 4 {
                return Err(Error::Config("trajectories.bins must be at least 4".into()));
            }
            if self.evolution.n_steps % self.evolution.store_every != 0 {
                return Err(Error::Config(format!(
                    "n_steps = {} is not a multiple of store_every = {}; trajectories need a frame at the final time",
                    self.evolution.n_steps, self.evolution.store_every
                )));
            }
            if self.evolution.store_every > MAX_TRAJECTORY_STRIDE {
                return Err(Error::Config(format!(
                    "store_every = {} exceeds {MAX_TRAJECTORY_STRIDE} steps, too coarse for trajectory transport",
                    self.evolution.store_every
                )));
            }
        }
        if let Some(d) = &self.deviation {
            if self.trajectories.is_none() {
                return Err(Error::Config("[deviation] requires a [trajectories] section".into()));
            }
            if d.n_segments == 0 || !(d.segment_dt > 0.0) {
                return Err(Error::Config("deviation.segment_dt and n_segments must be positive".into()));
            }
            let dt = self.evolution.dt;
            let per = (d.segment_dt / dt).round() as usize;
            if per == 0 || (per as f64 * dt - d.segment_dt).abs() > 1e-9 * d.segment_dt {
                return Err(Error::Config(format!("deviation.segment_dt = {} is not a multiple of dt = {dt}", d.segment_dt)));
            }
            if per < 5 * self.evolution.store_every {
                return Err(Error::Config("deviation.segment_dt must span at least 5 stored frames".into()));
            }
            if per * d.n_segments > self.evolution.n_steps {
                return Err(Error::Config("deviation segments run past the final time".into()));
            }
        }
        for c in &self.checks {
            if !c.threshold.is_finite() {
                return Err(Error::Config(format!("checks.{} threshold must be finite", c.kind.name())));
            }
            if c.kind.needs_trajectories() && self.trajectories.is_none() {
                return Err(Error::Config(format!("checks.{} requires a [trajectories] section", c.kind.name())));
            }
            if c.kind == CheckKind::Centroid && !matches!(self.potential, Potential::Harmonic { .. }) {
                return Err(Error::Config("checks.centroid requires a harmonic potential".into()));
            }
            if c.kind == CheckKind::WidthLaw && !matches!((self.potential, self.initial), (Potential::Free, InitialWave::Gaussian { .. })) {
                return Err(Error::Config("checks.width_law requires a free Gaussian packet".into()));
            }
        }
        Ok(())
    }

    /// Writes the scenario back in the INI format, defaults materialized.
    pub fn to_config(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[scenario]\nname = {}\n", self.name);
        let _ = writeln!(s, "[grid]\nx_min = {}\nx_max = {}\nn = {}\n", self.grid.x_min(), self.grid.x_max(), self.grid.n());
        let _ = writeln!(s, "[constants]\nhbar = {}\nmass = {}\n", self.constants.hbar(), self.constants.mass());
        let _ = writeln!(s, "[potential]");
        match self.potential {
            Potential::Free => {
                let _ = writeln!(s, "kind = free");
            }
            Potential::Harmonic { omega } => {
                let _ = writeln!(s, "kind = harmonic\nomega = {omega}");
            }
            Potential::Barrier { height, center, width } => {
                let _ = writeln!(s, "kind = barrier\nheight = {height}\ncenter = {center}\nwidth = {width}");
            }
        }
        let _ = writeln!(s, "\n[initial]");
        match self.initial {
            InitialWave::Gaussian { x0, sigma, k0 } => {
                let _ = writeln!(s, "kind = gaussian\nx0 = {x0}\nsigma = {sigma}\nk0 = {k0}");
            }
            InitialWave::Coherent { x0 } => {
                let _ = writeln!(s, "kind = coherent\nx0 = {x0}");
            }
            InitialWave::DoubleSlit { separation, slit_width, k0 } => {
                let _ = writeln!(s, "kind = double_slit\nseparation = {separation}\nslit_width = {slit_width}\nk0 = {k0}");
            }
        }
        let e = &self.evolution;
        let _ = writeln!(
            s,
            "\n[evolution]\ndt = {}\nn_steps = {}\nstore_every = {}\nrho_floor = {}\nexport_every = {}",
            e.dt, e.n_steps, e.store_every, e.rho_floor_rel, self.export_every
        );
        if let Some(t) = &self.trajectories {
            let _ = writeln!(s, "\n[trajectories]\nn = {}\nseed = {}\nexport_every = {}\nbins = {}", t.n, t.seed, t.export_every, t.bins);
        }
        if let Some(d) = &self.deviation {
            let bins = match d.binning {
                Binning::FreedmanDiaconis => "fd".to_string(),
                Binning::Fixed(b) => b.to_string(),
            };
            let _ = writeln!(s, "\n[deviation]\nsegment_dt = {}\nn_segments = {}\nbins = {bins}", d.segment_dt, d.n_segments);
        }
        if !self.checks.is_empty() {
            let _ = writeln!(s, "\n[checks]");
            for c in &self.checks {
                let _ = writeln!(s, "{} = {}", c.kind.name(), c.threshold);
            }
        }
        s
    }
}

/// Key lookup that records which keys were consumed.
struct Section<'a> {
    name: &'a str,
    values: BTreeMap<String, String>,
}

impl<'a> Section<'a> {
    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn num<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{}.{key}`: cannot parse `{v}`", self.name))),
        }
    }

    fn num_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.num(key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.num(key)?
            .ok_or_else(|| Error::Config(format!("missing key `{}.{key}`", self.name)))
    }

    fn finish(self) -> Result<()> {
        match self.values.keys().next() {
            Some(k) => Err(Error::Config(format!("unknown key `{}.{k}`", self.name))),
            None => Ok(()),
        }
    }
}

const SECTIONS: [&str; 9] = [
    "scenario",
    "grid",
    "constants",
    "potential",
    "initial",
    "evolution",
    "trajectories",
    "deviation",
    "checks",
];

pub fn parse_config(text: &str) -> Result<Scenario> {
    let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
    let mut sections: BTreeMap<&str, BTreeMap<String, String>> = BTreeMap::new();
    for (name, props) in ini.iter() {
        let Some(name) = name else {
            if let Some((k, _)) = props.iter().next() {
                return Err(Error::Config(format!("unknown key `{k}` outside any section")));
            }
            continue;
        };
        let Some(&known) = SECTIONS.iter().find(|s| **s == name) else {
            return Err(Error::Config(format!("unknown section `[{name}]`")));
        };
        let entry = sections.entry(known).or_default();
        for (k, v) in props.iter() {
            if entry.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key `{name}.{k}`")));
            }
        }
    }
    let mut sec = |name: &'static str| Section {
        name,
        values: sections.remove(name).unwrap_or_default(),
    };
    let has = |s: &Section| !s.values.is_empty();

    let mut s = sec("scenario");
    let name = s.take("name").unwrap_or_else(|| "unnamed".into());
    s.finish()?;

    let mut g = sec("grid");
    let grid = Grid1D::new(g.required("x_min")?, g.required("x_max")?, g.num_or("n", DEFAULT_N)?)?;
    g.finish()?;

    let mut c = sec("constants");
    let constants = PhysicalConstants::new(c.num_or("hbar", 1.0)?, c.num_or("mass", 1.0)?)?;
    c.finish()?;

    let mut p = sec("potential");
    let potential = match p.take("kind").as_deref().unwrap_or("free") {
        "free" => Potential::Free,
        "harmonic" => Potential::Harmonic { omega: p.required("omega")? },
        "barrier" => Potential::Barrier {
            height: p.required("height")?,
            center: p.num_or("center", 0.0)?,
            width: p.required("width")?,
        },
        other => return Err(Error::Config(format!("`potential.kind`: unknown kind `{other}`"))),
    };
    p.finish()?;

    let mut i = sec("initial");
    let initial = match i.take("kind").as_deref().unwrap_or("gaussian") {
        "gaussian" => InitialWave::Gaussian {
            x0: i.num_or("x0", 0.0)?,
            sigma: i.num_or("sigma", 1.0)?,
            k0: i.num_or("k0", 0.0)?,
        },
        "coherent" => InitialWave::Coherent { x0: i.num_or("x0", 0.0)? },
        "double_slit" => InitialWave::DoubleSlit {
            separation: i.required("separation")?,
            slit_width: i.required("slit_width")?,
            k0: i.num_or("k0", 0.0)?,
        },
        other => return Err(Error::Config(format!("`initial.kind`: unknown kind `{other}`"))),
    };
    i.finish()?;

    let mut t = sec("trajectories");
    let trajectories_present = has(&t);
    let mut e = sec("evolution");
    let dt: f64 = e.num_or("dt", DEFAULT_DT)?;
    let n_steps: Option<usize> = e.num("n_steps")?;
    let t_final: Option<f64> = e.num("t_final")?;
    let n_steps = match (n_steps, t_final) {
        (Some(_), Some(_)) => return Err(Error::Config("give either `evolution.n_steps` or `evolution.t_final`, not both".into())),
        (Some(n), None) => n,
        (None, tf) => {
            let tf = tf.unwrap_or(DEFAULT_T_FINAL);
            if !(dt > 0.0) {
                return Err(Error::Config(format!("`evolution.dt` must be positive, got {dt}")));
            }
            (tf / dt).round() as usize
        }
    };
    let mut evolution = EvolutionConfig::new(dt, n_steps);
    if trajectories_present {
        evolution.store_every = evolution.store_every.min(MAX_TRAJECTORY_STRIDE);
    }
    if let Some(k) = e.num("store_every")? {
        evolution.store_every = k;
    }
    evolution.rho_floor_rel = e.num_or("rho_floor", DEFAULT_RHO_FLOOR_RELATIVE)?;
    let stored = n_steps / evolution.store_every.max(1) + 1;
    let export_every = e.num_or("export_every", stored.div_ceil(10).max(1))?;
    e.finish()?;

    let trajectories = if trajectories_present {
        let spec = TrajectorySpec {
            n: t.required("n")?,
            seed: t.num_or("seed", 0)?,
            export_every: t.num_or("export_every", (n_steps / 10).max(1))?,
            bins: t.num_or("bins", DEFAULT_FRINGE_BINS)?,
        };
        Some(spec)
    } else {
        None
    };
    t.finish()?;

    let mut d = sec("deviation");
    let deviation = if has(&d) {
        let binning = match d.take("bins").as_deref().map(str::trim) {
            None | Some("fd") => Binning::FreedmanDiaconis,
            Some(b) => Binning::Fixed(
                b.parse()
                    .map_err(|_| Error::Config(format!("`deviation.bins`: expected `fd` or a count, got `{b}`")))?,
            ),
        };
        Some(DeviationSpec {
            segment_dt: d.required("segment_dt")?,
            n_segments: d.required("n_segments")?,
            binning,
        })
    } else {
        None
    };
    d.finish()?;

    let k = sec("checks");
    let mut checks = Vec::new();
    for (key, v) in k.values {
        let kind: CheckKind = key.parse()?;
        let threshold = v
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("`checks.{key}`: cannot parse `{v}`")))?;
        checks.push(CheckSpec { kind, threshold });
    }
    checks.sort_by_key(|c| c.kind);

    let scenario = Scenario {
        name,
        grid,
        constants,
        potential,
        initial,
        evolution,
        export_every,
        trajectories,
        deviation,
        checks,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub const PRESETS: [&str; 5] = ["free_gaussian", "harmonic_coherent", "barrier_scatter", "double_slit", "harmonic_ground"];

const FREE_GAUSSIAN: &str = "
[scenario]
name = free_gaussian
[grid]
x_min = -30
x_max = 30
n = 4096
[potential]
kind = free
[initial]
kind = gaussian
x0 = -4
sigma = 2
k0 = 0.5
[evolution]
dt = 1e-3
t_final = 2
store_every = 10
[trajectories]
n = 10000
seed = 1
[deviation]
segment_dt = 0.1
n_segments = 19
[checks]
norm_drift = 1e-10
energy_drift = 1e-6
branch_cancellation = 1e-12
continuity = 1e-3
madelung = 1e-3
classical_hj = 1e-3
identity = 1e-3
equivariance = 0.03
action_phase = 0.01
width_law = 0.005
";

const HARMONIC_COHERENT: &str = "
[scenario]
name = harmonic_coherent
[grid]
x_min = -10
x_max = 10
n = 2048
[potential]
kind = harmonic
omega = 1
[initial]
kind = coherent
x0 = 2
[evolution]
dt = 0.0010005072145190392
n_steps = 6280
store_every = 10
[trajectories]
n = 10000
seed = 2
[deviation]
segment_dt = 0.10005072145190392
n_segments = 30
[checks]
norm_drift = 1e-10
energy_drift = 1e-6
branch_cancellation = 1e-12
continuity = 1e-3
madelung = 1e-3
classical_hj = 1e-3
identity = 1e-3
equivariance = 0.03
action_phase = 0.01
centroid = 1e-3
";

const BARRIER_SCATTER: &str = "
[scenario]
name = barrier_scatter
[grid]
x_min = -40
x_max = 40
n = 4096
[potential]
kind = barrier
height = 1
center = 0
width = 2
[initial]
kind = gaussian
x0 = -5
sigma = 1
k0 = 2
[evolution]
dt = 1e-3
t_final = 6
store_every = 10
[trajectories]
n = 10000
seed = 3
[checks]
norm_drift = 1e-10
energy_drift = 1e-6
branch_cancellation = 1e-12
equivariance = 0.03
";

const DOUBLE_SLIT: &str = "
[scenario]
name = double_slit
[grid]
x_min = -30
x_max = 30
n = 4096
[potential]
kind = free
[initial]
kind = double_slit
separation = 6
slit_width = 0.5
k0 = 0
[evolution]
dt = 1e-3
t_final = 3
store_every = 10
[trajectories]
n = 20000
seed = 4
bins = 300
[checks]
norm_drift = 1e-10
energy_drift = 1e-6
branch_cancellation = 1e-12
equivariance = 0.03
fringe_alignment = 1
fringe_correlation = 0.99
";

const HARMONIC_GROUND: &str = "
[scenario]
name = harmonic_ground
[grid]
x_min = -8
x_max = 8
n = 16384
[potential]
kind = harmonic
omega = 1
[initial]
kind = coherent
x0 = 0
[evolution]
dt = 1e-3
n_steps = 40
store_every = 1
[checks]
norm_drift = 1e-10
energy_drift = 1e-6
branch_cancellation = 1e-12
continuity = 1e-6
madelung = 1e-6
classical_hj = 1e-5
identity = 1e-5
";

pub fn preset_config(name: &str) -> Option<&'static str> {
    Some(match name {
        "free_gaussian" => FREE_GAUSSIAN,
        "harmonic_coherent" => HARMONIC_COHERENT,
        "barrier_scatter" => BARRIER_SCATTER,
        "double_slit" => DOUBLE_SLIT,
        "harmonic_ground" => HARMONIC_GROUND,
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<Scenario> {
    let text = preset_config(name).ok_or_else(|| {
        Error::Config(format!("unknown preset `{name}` (known: {})", PRESETS.join(", ")))
    })?;
    parse_config(text)
}
