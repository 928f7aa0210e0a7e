//! Named verification passes evaluated on a finished run.

use serde::{Deserialize, Serialize};

use super::scenario::{CheckKind, CheckSpec, InitialWave, Scenario};
use crate::deviation::{
    branch_average_residual, classical_hj_residual, continuity_residual, identity_residual, implied_classical_fields,
    madelung_residual, Residual, Sign,
};
use crate::error::{Error, Result};
use crate::evolve::{mean_energy, FrameSeries, Potential};
use crate::fields::{interp_cubic, trapezoid, Grid1D, MadelungFields};
use crate::stats::{moving_average, pearson, GridCdf};
use crate::trajectories::{equivariance_distance, histogram, Histogram, TrajectoryEnsemble};

/// Interior frames sampled by the residual checks.
pub const RESIDUAL_FRAMES: usize = 16;
/// Fringe maxima below this fraction of the peak are ignored.
pub const FRINGE_PEAK_FRACTION: f64 = 0.1;
/// Bins below this fraction of the peak density are left out of the correlation.
pub const FRINGE_SUPPORT_FRACTION: f64 = 0.01;
/// Half-width, in bins, of the histogram smoothing.
pub const FRINGE_SMOOTHING: usize = 1;
/// Half-width, in bins, of the search window around each density maximum.
pub const FRINGE_WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
    /// Frame of the worst value, where one applies.
    pub frame: Option<usize>,
    /// Normalization of a residual value.
    pub normalization: Option<f64>,
    pub error: Option<String>,
}

impl CheckResult {
    fn new(spec: &CheckSpec, m: Measured) -> Self {
        let passed = m.value.is_finite()
            && if spec.kind.higher_is_better() {
                m.value >= spec.threshold
            } else {
                m.value <= spec.threshold
            };
        Self {
            name: spec.kind.name().into(),
            value: Some(m.value),
            threshold: spec.threshold,
            passed,
            frame: m.frame,
            normalization: m.normalization,
            error: None,
        }
    }

    pub fn failed(spec: &CheckSpec, err: &Error) -> Self {
        Self {
            name: spec.kind.name().into(),
            value: None,
            threshold: spec.threshold,
            passed: false,
            frame: None,
            normalization: None,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Measured {
    value: f64,
    frame: Option<usize>,
    normalization: Option<f64>,
}

impl Measured {
    fn plain(value: f64) -> Self {
        Self {
            value,
            frame: None,
            normalization: None,
        }
    }

    fn at(value: f64, frame: usize) -> Self {
        Self {
            value,
            frame: Some(frame),
            normalization: None,
        }
    }

    fn residual(r: Residual, frame: usize) -> Self {
        Self {
            value: r.value,
            frame: Some(frame),
            normalization: Some(r.scale),
        }
    }

    fn worst(self, other: Measured) -> Measured {
        if other.value > self.value || self.value.is_nan() {
            other
        } else {
            self
        }
    }
}

/// Trajectory state handed to the checks: the ensemble at `t = 0` with
/// seeded actions, and the same ensemble transported to the final time.
pub struct TrajectoryRun<'a> {
    pub initial: &'a TrajectoryEnsemble,
    pub last: &'a TrajectoryEnsemble,
}

pub fn evaluate(s: &Scenario, frames: &FrameSeries, traj: Option<&TrajectoryRun>) -> Vec<CheckResult> {
    s.checks
        .iter()
        .map(|spec| match measure(spec.kind, s, frames, traj) {
            Ok(m) => CheckResult::new(spec, m),
            Err(e) => CheckResult::failed(spec, &e),
        })
        .collect()
}

fn measure(kind: CheckKind, s: &Scenario, frames: &FrameSeries, traj: Option<&TrajectoryRun>) -> Result<Measured> {
    let c = &s.constants;
    let p = &s.potential;
    let need_traj = || traj.ok_or_else(|| Error::Config(format!("check {} needs trajectories", kind.name())));
    Ok(match kind {
        CheckKind::NormDrift => Measured::plain(frames.diagnostics.max_norm_drift / frames.diagnostics.initial_norm),
        CheckKind::EnergyDrift => energy_drift(frames),
        CheckKind::BranchCancellation => all_frames(frames)
            .map(|k| Measured::residual(branch_average_residual(&frames.fields[k], c), k))
            .fold(Measured::plain(0.0), Measured::worst),
        CheckKind::Identity => all_frames(frames)
            .map(|k| Measured::residual(identity_residual(&frames.fields[k], c), k))
            .fold(Measured::plain(0.0), Measured::worst),
        CheckKind::Continuity => worst_interior(frames, |k| continuity_residual(frames, k, c))?,
        CheckKind::Madelung => worst_interior(frames, |k| madelung_residual(frames, k, p, c))?,
        CheckKind::ClassicalHj => worst_interior(frames, |k| {
            let mut worst: Option<Residual> = None;
            for sign in [Sign::Plus, Sign::Minus] {
                let b = implied_classical_fields(frames, k, c, sign)?;
                let r = classical_hj_residual(&b, &frames.fields[k], p, c)?;
                if worst.is_none_or(|w| r.value > w.value) {
                    worst = Some(r);
                }
            }
            Ok(worst.expect("two signs"))
        })?,
        CheckKind::Equivariance => {
            let t = need_traj()?;
            let last = frames.fields.last().expect("frames");
            Measured::at(equivariance_distance(t.last, &last.rho, &last.grid)?, frames.len() - 1)
        }
        CheckKind::ActionPhase => {
            let t = need_traj()?;
            Measured::plain(action_phase_mismatch(t.initial, t.last, frames)?)
        }
        CheckKind::WidthLaw => width_law(s, frames)?,
        CheckKind::Centroid => centroid(s, frames)?,
        CheckKind::FringeAlignment => {
            let t = need_traj()?;
            Measured::plain(fringes(t.last, frames, bins(s))?.max_offset_bins as f64)
        }
        CheckKind::FringeCorrelation => {
            let t = need_traj()?;
            Measured::plain(fringes(t.last, frames, bins(s))?.correlation)
        }
    })
}

fn bins(s: &Scenario) -> usize {
    s.trajectories.map(|t| t.bins).unwrap_or(super::scenario::DEFAULT_FRINGE_BINS)
}

fn all_frames(frames: &FrameSeries) -> impl Iterator<Item = usize> {
    0..frames.len()
}

/// Up to `RESIDUAL_FRAMES` evenly spread interior frames.
pub fn interior_sample(len: usize) -> Vec<usize> {
    if len < 3 {
        return Vec::new();
    }
    let interior = len - 2;
    let take = interior.min(RESIDUAL_FRAMES);
    let mut out: Vec<usize> = (0..take)
        .map(|j| 1 + if take == 1 { 0 } else { j * (interior - 1) / (take - 1) })
        .collect();
    out.dedup();
    out
}

fn worst_interior(frames: &FrameSeries, f: impl Fn(usize) -> Result<Residual>) -> Result<Measured> {
    let ks = interior_sample(frames.len());
    if ks.is_empty() {
        return Err(Error::Config(format!(
            "residual checks need at least 3 stored frames, got {}",
            frames.len()
        )));
    }
    let mut worst = Measured::plain(0.0);
    for k in ks {
        worst = worst.worst(Measured::residual(f(k)?, k));
    }
    Ok(worst)
}

fn energy_drift(frames: &FrameSeries) -> Measured {
    let e: Vec<f64> = frames
        .waves
        .iter()
        .map(|w| mean_energy(w, &frames.potential, &frames.constants))
        .collect();
    let e0 = e[0];
    let mut m = Measured {
        value: 0.0,
        frame: Some(0),
        normalization: Some(e0.abs()),
    };
    for (k, ek) in e.iter().enumerate() {
        let d = (ek - e0).abs() / e0.abs();
        if d > m.value || d.is_nan() {
            m.value = d;
            m.frame = Some(k);
        }
    }
    m
}

fn moments(m: &MadelungFields) -> (f64, f64) {
    let g = &m.grid;
    let mass = trapezoid(&m.rho, g.dx());
    let x1: Vec<f64> = (0..g.n()).map(|i| g.x(i) * m.rho[i]).collect();
    let mean = trapezoid(&x1, g.dx()) / mass;
    let x2: Vec<f64> = (0..g.n()).map(|i| (g.x(i) - mean).powi(2) * m.rho[i]).collect();
    (mean, trapezoid(&x2, g.dx()) / mass)
}

/// Largest relative deviation of the packet width from the free-spreading law.
fn width_law(s: &Scenario, frames: &FrameSeries) -> Result<Measured> {
    let InitialWave::Gaussian { sigma, .. } = s.initial else {
        return Err(Error::Config("width_law needs a Gaussian packet".into()));
    };
    if s.potential != Potential::Free {
        return Err(Error::Config("width_law needs a free potential".into()));
    }
    let c = &s.constants;
    let mut worst = Measured::plain(0.0);
    for (k, f) in frames.fields.iter().enumerate() {
        let expect = sigma * (1.0 + (c.hbar() * f.t / (2.0 * c.mass() * sigma * sigma)).powi(2)).sqrt();
        let width = moments(f).1.sqrt();
        worst = worst.worst(Measured::at((width - expect).abs() / expect, k));
    }
    Ok(worst)
}

/// Largest centroid offset from `x0 cos(omega t)`, relative to `|x0|`.
fn centroid(s: &Scenario, frames: &FrameSeries) -> Result<Measured> {
    let Potential::Harmonic { omega } = s.potential else {
        return Err(Error::Config("centroid needs a harmonic potential".into()));
    };
    let x0 = match s.initial {
        InitialWave::Gaussian { x0, k0, .. } if k0 == 0.0 => x0,
        InitialWave::Coherent { x0 } => x0,
        _ => return Err(Error::Config("centroid needs a packet at rest".into())),
    };
    if x0 == 0.0 {
        return Err(Error::Config("centroid needs x0 != 0".into()));
    }
    let mut worst = Measured::plain(0.0);
    for (k, f) in frames.fields.iter().enumerate() {
        let d = (moments(f).0 - x0 * (omega * f.t).cos()).abs() / x0.abs();
        worst = worst.worst(Measured::at(d, k));
    }
    Ok(worst)
}

/// `max |dS_acc - dS_phase| / max |dS_phase|` over alive trajectories, where
/// `dS_phase = S(x(T), T) - S(x(0), 0)` is read off the aligned phase fields.
pub fn action_phase_mismatch(initial: &TrajectoryEnsemble, last: &TrajectoryEnsemble, frames: &FrameSeries) -> Result<f64> {
    let f0 = &frames.fields[0];
    let ft = frames.fields.last().expect("frames");
    let (mut worst, mut scale, mut used) = (0.0f64, 0.0f64, 0usize);
    for i in 0..initial.len() {
        if !(initial.alive[i] && last.alive[i]) {
            continue;
        }
        let (Some((s0, _)), Some((s1, _))) = (
            interp_cubic(&f0.action, &f0.grid, initial.positions[i]),
            interp_cubic(&ft.action, &ft.grid, last.positions[i]),
        ) else {
            continue;
        };
        let j = ft.grid.nearest(last.positions[i]);
        if ft.is_masked(j) {
            continue;
        }
        let phase = s1 - s0;
        let acc = last.actions[i] - initial.actions[i];
        worst = worst.max((acc - phase).abs());
        scale = scale.max(phase.abs());
        used += 1;
    }
    if used == 0 {
        return Err(Error::InsufficientSamples { got: 0, need: 1 });
    }
    if !(scale > 0.0) {
        return Err(Error::DegenerateField("phase difference vanishes along every trajectory".into()));
    }
    Ok(worst / scale)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeComparison {
    pub histogram: Histogram,
    pub smoothed: Vec<f64>,
    /// Density of the final frame averaged over each bin.
    pub rho_binned: Vec<f64>,
    pub correlation: f64,
    /// Bin indices of the density maxima and the matched histogram maxima.
    pub peaks: Vec<(usize, usize)>,
    pub max_offset_bins: usize,
}

/// Compares the final trajectory histogram with the final density.
pub fn fringes(last: &TrajectoryEnsemble, frames: &FrameSeries, bins: usize) -> Result<FringeComparison> {
    let ft = frames.fields.last().expect("frames");
    let grid: Grid1D = ft.grid;
    let h = histogram(last, &grid, bins)?;
    let cdf = GridCdf::new(&ft.rho, &grid)?;
    let w = h.edges[1] - h.edges[0];
    let rho_binned: Vec<f64> = h.edges.windows(2).map(|e| (cdf.eval(e[1]) - cdf.eval(e[0])) / w).collect();
    let smoothed = moving_average(&h.density, FRINGE_SMOOTHING);
    let peak = rho_binned.iter().cloned().fold(0.0, f64::max);
    let (a, b): (Vec<f64>, Vec<f64>) = smoothed
        .iter()
        .zip(&rho_binned)
        .filter(|(_, r)| **r >= FRINGE_SUPPORT_FRACTION * peak)
        .map(|(s, r)| (*s, *r))
        .unzip();
    let n = rho_binned.len();
    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        let r = rho_binned[i];
        if r >= FRINGE_PEAK_FRACTION * peak && r > rho_binned[i - 1] && r >= rho_binned[i + 1] {
            let lo = i.saturating_sub(FRINGE_WINDOW);
            let hi = (i + FRINGE_WINDOW).min(n - 1);
            let j = (lo..=hi)
                .max_by(|&p, &q| smoothed[p].total_cmp(&smoothed[q]))
                .expect("non-empty window");
            peaks.push((i, j));
        }
    }
    if peaks.is_empty() {
        return Err(Error::DegenerateField("final density has no resolved maxima".into()));
    }
    let max_offset_bins = peaks.iter().map(|&(i, j)| i.abs_diff(j)).max().unwrap_or(0);
    Ok(FringeComparison {
        correlation: pearson(&a, &b),
        histogram: h,
        smoothed,
        rho_binned,
        peaks,
        max_offset_bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_sampling() {
        assert!(interior_sample(2).is_empty());
        assert_eq!(interior_sample(3), vec![1]);
        assert_eq!(interior_sample(6), vec![1, 2, 3, 4]);
        let s = interior_sample(2001);
        assert_eq!(s.len(), RESIDUAL_FRAMES);
        assert_eq!((s[0], *s.last().unwrap()), (1, 1999));
    }

    #[test]
    fn pass_direction() {
        let spec = CheckSpec {
            kind: CheckKind::FringeCorrelation,
            threshold: 0.99,
        };
        assert!(CheckResult::new(&spec, Measured::plain(0.995)).passed);
        assert!(!CheckResult::new(&spec, Measured::plain(0.98)).passed);
        let spec = CheckSpec {
            kind: CheckKind::Continuity,
            threshold: 1e-3,
        };
        assert!(CheckResult::new(&spec, Measured::plain(1e-4)).passed);
        assert!(!CheckResult::new(&spec, Measured::plain(f64::NAN)).passed);
    }
}
