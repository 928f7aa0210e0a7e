//! Exponential action-deviation law, the two density branches, the
//! implied classical fields and the residual checks built on them.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{hamilton_step, stationary_action, ClassicalState};
use crate::error::{Error, Result};
use crate::evolve::{potential_values, Evolver, FrameSeries, Potential};
use crate::fields::{d1, d2, decompose, normalize, trapezoid, Grid1D, MadelungFields, PhysicalConstants, WaveField};
use crate::stats::{iqr, ks_statistic_sorted};
use crate::trajectories::{accumulate_action_recorded, TrajectoryEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
    /// `+` when `dS >= dS_c`.
    pub fn of_deviation(d: f64) -> Self {
        if d >= 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationSample {
    pub magnitude: f64,
    pub sign: Sign,
}

/// `-(hbar/2) ln u`, the inverse CDF of Exp(2/hbar).
pub fn magnitude_from_uniform(u: f64, c: &PhysicalConstants) -> f64 {
    -0.5 * c.hbar() * u.ln()
}

pub fn sample_deviation<R: Rng + ?Sized>(rng: &mut R, c: &PhysicalConstants) -> DeviationSample {
    // gen() is in [0, 1); 1 - gen() is in (0, 1]
    let u = 1.0 - rng.gen::<f64>();
    DeviationSample {
        magnitude: magnitude_from_uniform(u, c),
        sign: if rng.gen::<bool>() { Sign::Plus } else { Sign::Minus },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    FreedmanDiaconis,
    Fixed(usize),
}

pub const MIN_FIT_SAMPLES: usize = 100;
const MAX_BINS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: usize,
    pub rate: f64,
    pub mean: f64,
    /// KS distance of the magnitudes against Exp(rate).
    pub ks: f64,
    pub sign_plus_fraction: Option<f64>,
}

/// MLE exponential fit plus histogram of the magnitudes.
pub fn fit_exponential(magnitudes: &[f64], signs: Option<&[Sign]>, binning: Binning) -> Result<DeviationHistogram> {
    let n = magnitudes.len();
    if n < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples { got: n, need: MIN_FIT_SAMPLES });
    }
    if magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::DegenerateFit("magnitudes must be finite and non-negative".into()));
    }
    let sum: f64 = magnitudes.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::DegenerateFit("all magnitudes are zero".into()));
    }
    let mean = sum / n as f64;
    let rate = 1.0 / mean;
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ks = ks_statistic_sorted(&sorted, |x| 1.0 - (-rate * x).exp());

    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let bins = match binning {
        Binning::Fixed(b) => b.max(1),
        Binning::FreedmanDiaconis => {
            let w = 2.0 * iqr(&sorted) / (n as f64).cbrt();
            if w > 0.0 && hi > lo {
                (((hi - lo) / w).ceil() as usize).clamp(1, MAX_BINS)
            } else {
                1
            }
        }
    };
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) * 1e-9 };
    let w = span / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * w).collect();
    let mut counts = vec![0u64; bins];
    for &x in &sorted {
        counts[(((x - lo) / w) as usize).min(bins - 1)] += 1;
    }
    let sign_plus_fraction = signs.map(|s| s.iter().filter(|s| **s == Sign::Plus).count() as f64 / s.len().max(1) as f64);
    Ok(DeviationHistogram {
        edges,
        counts,
        total: n,
        rate,
        mean,
        ks,
        sign_plus_fraction,
    })
}

/// A normalized max-norm residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    /// `max_abs / scale` (zero when both vanish).
    pub value: f64,
    pub max_abs: f64,
    pub scale: f64,
    /// Node of the largest residual.
    pub node: usize,
    pub nodes: usize,
}

impl Residual {
    fn from_parts(res: &[f64], scale_terms: &[f64], mask: &[bool]) -> Self {
        let mut max_abs: f64 = 0.0;
        let mut node = 0;
        let mut scale: f64 = 0.0;
        let mut nodes = 0;
        for i in 0..res.len() {
            if !mask[i] {
                continue;
            }
            nodes += 1;
            if res[i].abs() > max_abs {
                max_abs = res[i].abs();
                node = i;
            }
            scale = scale.max(scale_terms[i]);
        }
        let value = if max_abs == 0.0 { 0.0 } else { max_abs / scale };
        Self {
            value,
            max_abs,
            scale,
            node,
            nodes,
        }
    }
}

fn flux(m: &MadelungFields) -> Vec<f64> {
    let rv: Vec<f64> = m.rho.iter().zip(&m.velocity).map(|(r, v)| r * v).collect();
    d1(&rv, m.grid.dx())
}

/// `-/+ (hbar/2m) rho'' - (rho v)'` for the `+` and `-` branch.
pub fn branch_rhs(m: &MadelungFields, c: &PhysicalConstants, sign: Sign) -> Vec<f64> {
    let k = c.hbar() / (2.0 * c.mass());
    let lap = d2(&m.rho, m.grid.dx());
    flux(m)
        .iter()
        .zip(&lap)
        .map(|(f, l)| -sign.factor() * k * l - f)
        .collect()
}

/// `-(rho v)'`.
pub fn continuity_rhs(m: &MadelungFields) -> Vec<f64> {
    flux(m).into_iter().map(|f| -f).collect()
}

/// Max-norm of `(b+ + b-)/2 + (rho v)'` on all nodes, relative to the
/// larger of the diffusion and advection terms.
pub fn branch_average_residual(m: &MadelungFields, c: &PhysicalConstants) -> Residual {
    let k = c.hbar() / (2.0 * c.mass());
    let plus = branch_rhs(m, c, Sign::Plus);
    let minus = branch_rhs(m, c, Sign::Minus);
    let cont = continuity_rhs(m);
    let lap = d2(&m.rho, m.grid.dx());
    let res: Vec<f64> = (0..plus.len()).map(|i| 0.5 * (plus[i] + minus[i]) - cont[i]).collect();
    let scale: Vec<f64> = (0..plus.len()).map(|i| (k * lap[i].abs()).max(cont[i].abs())).collect();
    Residual::from_parts(&res, &scale, &vec![true; res.len()])
}

fn check_interior_frame(frames: &FrameSeries, k: usize) -> Result<()> {
    if frames.len() < 3 || k == 0 || k + 1 >= frames.len() {
        return Err(Error::Config(format!(
            "frame index {k} needs neighbours on both sides (have {} frames)",
            frames.len()
        )));
    }
    let (a, b, cc) = (frames.waves[k - 1].t(), frames.waves[k].t(), frames.waves[k + 1].t());
    if ((cc - b) - (b - a)).abs() > 1e-9 * (cc - a).abs().max(1e-300) {
        return Err(Error::Config(format!("frames {} and {} are not evenly spaced around {k}", k - 1, k + 1)));
    }
    Ok(())
}

/// Bulk nodes of frame `k` that are also unmasked in both neighbours.
fn frame_bulk(frames: &FrameSeries, k: usize) -> Vec<bool> {
    let mut bulk = frames.fields[k].bulk_mask();
    for (i, b) in bulk.iter_mut().enumerate() {
        *b = *b && !frames.fields[k - 1].node_mask[i] && !frames.fields[k + 1].node_mask[i];
    }
    bulk
}

fn central_time_difference(frames: &FrameSeries, k: usize, pick: fn(&MadelungFields) -> &[f64]) -> Vec<f64> {
    let h = frames.waves[k + 1].t() - frames.waves[k - 1].t();
    let (a, b) = (pick(&frames.fields[k - 1]), pick(&frames.fields[k + 1]));
    a.iter().zip(b).map(|(x, y)| (y - x) / h).collect()
}

/// Verifies that the action fields around frame `k` were aligned without a
/// branch ambiguity at the density maximum.
fn check_time_unwrap(frames: &FrameSeries, k: usize, c: &PhysicalConstants) -> Result<()> {
    let p = &frames.potential;
    for (a, b) in [(k - 1, k), (k, k + 1)] {
        let (fa, fb) = (&frames.fields[a], &frames.fields[b]);
        let j = fb.argmax_rho();
        let x = fb.grid.x(j);
        let e = |f: &MadelungFields| 0.5 * c.mass() * f.velocity[j].powi(2) + p.value(x, f.t, c.mass()) + f.quantum_potential[j];
        let predicted = fa.action[j] - 0.5 * (e(fa) + e(fb)) * (fb.t - fa.t);
        let jump = fb.action[j] - predicted;
        if jump.abs() > 0.5 * std::f64::consts::PI * c.hbar() {
            return Err(Error::Unwrap { from: a, to: b, jump });
        }
    }
    Ok(())
}

fn rho_of(f: &MadelungFields) -> &[f64] {
    &f.rho
}
fn action_of(f: &MadelungFields) -> &[f64] {
    &f.action
}

/// `d_t rho + (rho v)'` on bulk nodes, with `d_t` a central difference over
/// frames `k - 1, k + 1`. Normalized by the largest of `|d_t rho|`,
/// `|(rho v)'|` and `(hbar/2m)|rho''|` on the bulk.
pub fn continuity_residual(frames: &FrameSeries, k: usize, c: &PhysicalConstants) -> Result<Residual> {
    check_interior_frame(frames, k)?;
    let m = &frames.fields[k];
    let dt_rho = central_time_difference(frames, k, rho_of);
    let fl = flux(m);
    let lap = d2(&m.rho, m.grid.dx());
    let kd = c.hbar() / (2.0 * c.mass());
    let res: Vec<f64> = dt_rho.iter().zip(&fl).map(|(a, b)| a + b).collect();
    let scale: Vec<f64> = (0..res.len())
        .map(|i| dt_rho[i].abs().max(fl[i].abs()).max(kd * lap[i].abs()))
        .collect();
    Ok(Residual::from_parts(&res, &scale, &frame_bulk(frames, k)))
}

/// `(hbar^2/8m)(rho'/rho)^2 - [-(hbar^2/2m) R''/R + (hbar^2/4m) rho''/rho]`
/// on bulk nodes, relative to the sum of the three term magnitudes.
pub fn identity_residual(m: &MadelungFields, c: &PhysicalConstants) -> Residual {
    let dx = m.grid.dx();
    let h2m = c.hbar() * c.hbar() / c.mass();
    let g = d1(&m.rho, dx);
    let lap = d2(&m.rho, dx);
    let r2 = d2(&m.amplitude, dx);
    let n = m.rho.len();
    let mut res = vec![0.0; n];
    let mut scale = vec![0.0; n];
    let bulk = m.bulk_mask();
    for i in 0..n {
        if !bulk[i] {
            continue;
        }
        let lhs = h2m / 8.0 * (g[i] / m.rho[i]).powi(2);
        let a = -h2m / 2.0 * r2[i] / m.amplitude[i];
        let b = h2m / 4.0 * lap[i] / m.rho[i];
        res[i] = lhs - (a + b);
        scale[i] = lhs.abs() + a.abs() + b.abs();
    }
    Residual::from_parts(&res, &scale, &bulk)
}

/// `d_t S + (S')^2/2m + V + Q` on bulk nodes, normalized by `max |d_t S|`.
pub fn madelung_residual(frames: &FrameSeries, k: usize, p: &Potential, c: &PhysicalConstants) -> Result<Residual> {
    check_interior_frame(frames, k)?;
    check_time_unwrap(frames, k, c)?;
    let m = &frames.fields[k];
    let dt_s = central_time_difference(frames, k, action_of);
    let ds = d1(&m.action, m.grid.dx());
    let v = potential_values(p, &m.grid, m.t, c);
    let res: Vec<f64> = (0..ds.len())
        .map(|i| dt_s[i] + ds[i] * ds[i] / (2.0 * c.mass()) + v[i] + m.quantum_potential[i])
        .collect();
    let scale: Vec<f64> = dt_s.iter().map(|x| x.abs()).collect();
    Ok(Residual::from_parts(&res, &scale, &frame_bulk(frames, k)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchFields {
    pub dx_sc: Vec<f64>,
    pub dt_sc: Vec<f64>,
    pub sign: Sign,
    /// Nodes on which the fields are meaningful.
    pub bulk: Vec<bool>,
}

fn branch_fields_from(
    m: &MadelungFields,
    dt_s: &[f64],
    bulk: Vec<bool>,
    c: &PhysicalConstants,
    sign: Sign,
) -> BranchFields {
    let dx = m.grid.dx();
    let s = sign.factor();
    let hb = c.hbar();
    let ds = d1(&m.action, dx);
    let dds = d2(&m.action, dx);
    let g = d1(&m.rho, dx);
    let rhs = branch_rhs(m, c, sign);
    let n = m.rho.len();
    let mut dx_sc = vec![0.0; n];
    let mut dt_sc = vec![0.0; n];
    for i in 0..n {
        if !bulk[i] {
            continue;
        }
        dx_sc[i] = ds[i] + s * 0.5 * hb * g[i] / m.rho[i];
        dt_sc[i] = dt_s[i] + s * (0.5 * hb * rhs[i] / m.rho[i] + hb / (2.0 * c.mass()) * dds[i]);
    }
    BranchFields { dx_sc, dt_sc, sign, bulk }
}

/// Implied classical gradient and time-rate fields of one branch. The time
/// derivative of the density inside is the branch equation itself.
pub fn implied_classical_fields(frames: &FrameSeries, k: usize, c: &PhysicalConstants, sign: Sign) -> Result<BranchFields> {
    check_interior_frame(frames, k)?;
    check_time_unwrap(frames, k, c)?;
    let dt_s = central_time_difference(frames, k, action_of);
    Ok(branch_fields_from(&frames.fields[k], &dt_s, frame_bulk(frames, k), c, sign))
}

/// Variant for a single field with a supplied `d_t S` (useful for
/// manufactured fields).
pub fn implied_classical_fields_with(m: &MadelungFields, dt_s: &[f64], c: &PhysicalConstants, sign: Sign) -> Result<BranchFields> {
    m.grid.check_len(dt_s.len())?;
    Ok(branch_fields_from(m, dt_s, m.bulk_mask(), c, sign))
}

/// `dt_sc + dx_sc^2/2m + V` on bulk nodes, normalized by the largest
/// `|dt_sc| + dx_sc^2/2m + |V|`.
pub fn classical_hj_residual(b: &BranchFields, m: &MadelungFields, p: &Potential, c: &PhysicalConstants) -> Result<Residual> {
    m.grid.check_len(b.dx_sc.len())?;
    let v = potential_values(p, &m.grid, m.t, c);
    let n = v.len();
    let kin: Vec<f64> = b.dx_sc.iter().map(|g| g * g / (2.0 * c.mass())).collect();
    let res: Vec<f64> = (0..n).map(|i| b.dt_sc[i] + kin[i] + v[i]).collect();
    let scale: Vec<f64> = (0..n).map(|i| b.dt_sc[i].abs() + kin[i] + v[i].abs()).collect();
    if !(0..n).any(|i| b.bulk[i]) {
        return Err(Error::DegenerateField("no bulk nodes".into()));
    }
    Ok(Residual::from_parts(&res, &scale, &b.bulk))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationMeasurement {
    pub histogram: Option<DeviationHistogram>,
    /// Signed `dS - dS_c` per measured segment.
    pub deviations: Vec<f64>,
    pub skipped_segments: usize,
    pub segments: usize,
}

/// Segment-wise deviation of the transported action from the classical
/// stationary action between the same endpoints.
pub fn measure_deviation_histogram(
    ens: &TrajectoryEnsemble,
    frames: &FrameSeries,
    p: &Potential,
    c: &PhysicalConstants,
    segment_dt: f64,
    n_segments: usize,
    binning: Binning,
) -> Result<DeviationMeasurement> {
    if n_segments == 0 {
        return Err(Error::Config("at least one segment is required".into()));
    }
    if segment_dt < 5.0 * frames.frame_dt * (1.0 - 1e-12) {
        return Err(Error::Config(format!(
            "segment_dt = {segment_dt} must be at least 5 frame spacings ({})",
            5.0 * frames.frame_dt
        )));
    }
    let dt = frames.config.dt;
    let per = (segment_dt / dt).round() as usize;
    if per == 0 || ((per as f64 * dt) - segment_dt).abs() > 1e-9 * segment_dt {
        return Err(Error::Config(format!("segment_dt = {segment_dt} is not a multiple of dt = {dt}")));
    }
    let (_, snaps) = accumulate_action_recorded(ens, frames, dt, per * n_segments, per)?;
    let per_traj: Vec<(Vec<f64>, usize)> = (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let mut devs = Vec::new();
            let mut skipped = 0;
            for w in snaps.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                if !(a.alive[i] && b.alive[i]) {
                    continue;
                }
                match stationary_action(a.positions[i], a.t, b.positions[i], b.t, p, c, 1e-10) {
                    Ok(r) => devs.push(b.actions[i] - a.actions[i] - r.action),
                    Err(_) => skipped += 1,
                }
            }
            (devs, skipped)
        })
        .collect();
    let mut deviations = Vec::new();
    let mut skipped_segments = 0;
    for (d, s) in per_traj {
        deviations.extend(d);
        skipped_segments += s;
    }
    let mags: Vec<f64> = deviations.iter().map(|d| d.abs()).collect();
    let signs: Vec<Sign> = deviations.iter().map(|&d| Sign::of_deviation(d)).collect();
    let histogram = match fit_exponential(&mags, Some(&signs), binning) {
        Ok(h) => Some(h),
        Err(Error::DegenerateFit(_)) | Err(Error::InsufficientSamples { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(DeviationMeasurement {
        histogram,
        segments: deviations.len() + skipped_segments,
        deviations,
        skipped_segments,
    })
}

/// Gaussian packet used by the classical-limit study. The momentum `p0`
/// and width `sigma` are held fixed while hbar is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSetup {
    pub grid: Grid1D,
    pub potential: Potential,
    pub x0: f64,
    pub sigma: f64,
    pub p0: f64,
    pub t_final: f64,
    pub dt: f64,
    /// Offset of the probe trajectory from the packet centre in units of sigma.
    pub probe_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitRow {
    pub scale: f64,
    pub hbar: f64,
    /// `int |Q| rho / int |(S')^2/2m + |V|| rho` at the final time.
    pub quantum_potential_fraction: f64,
    /// `|x_bohm(T) - x_classical(T)|` for the offset probe.
    pub probe_deviation: f64,
    /// Same for the probe started exactly at the packet centre.
    pub center_deviation: f64,
    pub dx: f64,
    pub resolution_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub setup: LimitSetup,
    pub rows: Vec<LimitRow>,
    pub fraction_decreasing: bool,
    pub deviation_decreasing: bool,
}

pub fn gaussian_packet(grid: Grid1D, x0: f64, sigma: f64, p0: f64, c: &PhysicalConstants) -> Result<WaveField> {
    let k0 = p0 / c.hbar();
    let w = WaveField::from_fn(grid, 0.0, |x| {
        Complex64::from_polar((-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), k0 * x)
    })?;
    normalize(&w.with_dirichlet_ends()?)
}

/// Velocity `(1/m) dS/dx` at `x` from the wavefunction. The phase is
/// unwrapped over a local stencil and differenced centrally, the same
/// discrete operator `decompose` applies globally.
fn local_velocity(psi: &[Complex64], grid: &Grid1D, c: &PhysicalConstants, x: f64) -> Option<f64> {
    let (i, _) = grid.locate(x)?;
    let n = psi.len();
    if i < 2 || i + 3 >= n {
        return None;
    }
    let j = i - 1;
    // nodes j-1 .. j+4 -> central derivatives at j .. j+3
    let mut phase = [0.0; 6];
    phase[0] = psi[j - 1].arg();
    for k in 1..6 {
        let d = (psi[j - 1 + k] / psi[j - 2 + k]).arg();
        phase[k] = phase[k - 1] + d;
    }
    let mut v = [0.0; 4];
    for k in 0..4 {
        v[k] = c.hbar() * (phase[k + 2] - phase[k]) / (2.0 * grid.dx() * c.mass());
    }
    let s = (x - grid.x(j)) / grid.dx();
    let (s0, s1, s2, s3) = (s, s - 1.0, s - 2.0, s - 3.0);
    Some(-s1 * s2 * s3 / 6.0 * v[0] + s0 * s2 * s3 / 2.0 * v[1] - s0 * s1 * s3 / 2.0 * v[2] + s0 * s1 * s2 / 6.0 * v[3])
}

fn run_limit_point(setup: &LimitSetup, c: &PhysicalConstants, scale: f64) -> Result<LimitRow> {
    let grid = setup.grid;
    let w0 = gaussian_packet(grid, setup.x0, setup.sigma, setup.p0, c)?;
    let f0 = decompose(&w0, c, 1e-12 * w0.density().iter().cloned().fold(0.0, f64::max))?;
    let bulk = f0.bulk_mask();
    let max_grad = d1(&f0.action, grid.dx())
        .iter()
        .zip(&bulk)
        .filter(|(_, b)| **b)
        .map(|(g, _)| g.abs())
        .fold(0.0, f64::max);
    let bound = c.hbar() / (10.0 * max_grad.max(1e-300));
    if grid.dx() > bound {
        return Err(Error::Resolution(format!(
            "dx = {:.3e} exceeds hbar/(10 max|S'|) = {bound:.3e} at hbar = {}",
            grid.dx(),
            c.hbar()
        )));
    }
    let n_steps = (setup.t_final / setup.dt).round() as usize;
    if n_steps == 0 {
        return Err(Error::Config("t_final must cover at least one step".into()));
    }
    let mut ev = Evolver::new(&w0, &setup.potential, c, setup.dt)?;
    let starts = [setup.x0 + setup.probe_offset * setup.sigma, setup.x0];
    let mut bohm = starts;
    let mut classical = starts.map(|x| {
        let p = local_velocity(w0.psi(), &grid, c, x).unwrap_or(setup.p0 / c.mass()) * c.mass();
        ClassicalState::new(x, p, 0.0)
    });
    let mut prev = w0.psi().to_vec();
    for step in 0..n_steps {
        ev.step()?;
        let next = ev.psi();
        let t = step as f64 * setup.dt;
        for x in bohm.iter_mut() {
            let v = |xq: f64, tq: f64| {
                let w = ((tq - t) / setup.dt).clamp(0.0, 1.0);
                let a = local_velocity(&prev, &grid, c, xq)?;
                let b = local_velocity(next, &grid, c, xq)?;
                Some((1.0 - w) * a + w * b)
            };
            *x = crate::classical::rk4(*x, t, setup.dt, v).ok_or_else(|| {
                Error::Config(format!("probe trajectory left the grid at t = {t}"))
            })?;
        }
        for s in classical.iter_mut() {
            *s = hamilton_step(*s, &setup.potential, c, setup.dt);
        }
        prev.copy_from_slice(next);
    }
    let wt = ev.wave()?;
    let ft = decompose(&wt, c, 1e-12 * wt.density().iter().cloned().fold(0.0, f64::max))?;
    Ok(LimitRow {
        scale,
        hbar: c.hbar(),
        quantum_potential_fraction: quantum_potential_fraction(&ft, &setup.potential, c),
        probe_deviation: (bohm[0] - classical[0].x).abs(),
        center_deviation: (bohm[1] - classical[1].x).abs(),
        dx: grid.dx(),
        resolution_bound: bound,
    })
}

/// `int |Q| rho / int ((S')^2/2m + |V|) rho`: weight of the quantum
/// potential against the classical energy terms.
pub fn quantum_potential_fraction(m: &MadelungFields, p: &Potential, c: &PhysicalConstants) -> f64 {
    let grid = m.grid;
    let v = potential_values(p, &grid, m.t, c);
    let ds = d1(&m.action, grid.dx());
    let num: Vec<f64> = (0..grid.n()).map(|i| m.quantum_potential[i].abs() * m.rho[i]).collect();
    let den: Vec<f64> = (0..grid.n())
        .map(|i| (ds[i] * ds[i] / (2.0 * c.mass()) + v[i].abs()) * m.rho[i])
        .collect();
    trapezoid(&num, grid.dx()) / trapezoid(&den, grid.dx())
}

/// Repeats one packet run for `hbar = scale * c_base.hbar` and reports the
/// quantum-potential fraction and probe deviations per scale.
pub fn hbar_limit_study(setup: &LimitSetup, c_base: &PhysicalConstants, scales: &[f64]) -> Result<LimitReport> {
    if scales.len() < 3 {
        return Err(Error::Config(format!("need at least 3 scales, got {}", scales.len())));
    }
    if scales.windows(2).any(|w| !(w[1] < w[0])) || scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Config("scales must be positive and strictly decreasing".into()));
    }
    setup.potential.validate()?;
    let rows: Vec<LimitRow> = scales
        .par_iter()
        .map(|&s| {
            let c = PhysicalConstants::new(c_base.hbar() * s, c_base.mass())?;
            run_limit_point(setup, &c, s)
        })
        .collect::<Result<_>>()?;
    let fraction_decreasing = rows.windows(2).all(|w| w[1].quantum_potential_fraction < w[0].quantum_potential_fraction);
    let deviation_decreasing = rows.windows(2).all(|w| w[1].probe_deviation < w[0].probe_deviation);
    Ok(LimitReport {
        setup: *setup,
        rows,
        fraction_decreasing,
        deviation_decreasing,
    })
}
