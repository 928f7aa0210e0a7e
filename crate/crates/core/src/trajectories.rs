//! Deterministic trajectory ensembles carried by the velocity field
//! `v = dS/dx / m` of an evolved wavefunction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::rk4;
use crate::error::{Error, Result};
use crate::evolve::FrameSeries;
use crate::fields::{interp_cubic, trapezoid, Grid1D, MadelungFields};
use crate::stats::{ks_statistic_sorted, GridCdf};

/// Minimum alive trajectories for an equivariance statistic.
pub const MIN_EQUIVARIANCE_SAMPLES: usize = 100;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryDiagnostics {
    /// Interpolation stencils that touched a masked (near-node) grid point.
    pub masked_touches: u64,
    pub left_domain: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryEnsemble {
    pub positions: Vec<f64>,
    pub actions: Vec<f64>,
    pub alive: Vec<bool>,
    pub seed: u64,
    pub t: f64,
    pub diagnostics: TrajectoryDiagnostics,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }
    pub fn alive_positions(&self) -> Vec<f64> {
        self.positions
            .iter()
            .zip(&self.alive)
            .filter(|(_, a)| **a)
            .map(|(x, _)| *x)
            .collect()
    }

    /// Sets every action to `S(x)` of `fields` (cubic interpolation).
    pub fn seed_actions(&mut self, fields: &MadelungFields) {
        for (s, &x) in self.actions.iter_mut().zip(&self.positions) {
            if let Some((v, _)) = interp_cubic(&fields.action, &fields.grid, x) {
                *s = v;
            }
        }
    }
}

/// Inverse-CDF draws from the piecewise-linear CDF of `rho0`. Trajectory
/// `i` uses ChaCha stream `i` of `seed`, so the result does not depend on
/// thread scheduling.
pub fn sample_initial(rho0: &[f64], grid: &Grid1D, n: usize, seed: u64) -> Result<TrajectoryEnsemble> {
    if n == 0 {
        return Err(Error::Config("trajectory count must be at least 1".into()));
    }
    let cdf = GridCdf::new(rho0, grid)?;
    let mass = trapezoid(rho0, grid.dx());
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidDensity(format!("density integrates to {mass}, expected 1")));
    }
    let positions: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            cdf.inverse(rng.gen::<f64>())
        })
        .collect();
    Ok(TrajectoryEnsemble {
        actions: vec![0.0; n],
        alive: vec![true; n],
        positions,
        seed,
        t: 0.0,
        diagnostics: TrajectoryDiagnostics::default(),
    })
}

/// Field value at `(x, t)`: cubic in x per frame, linear in t.
/// The flag reports whether the stencil touched a masked node.
fn field_at(frames: &FrameSeries, pick: fn(&MadelungFields) -> &[f64], x: f64, t: f64) -> Option<(f64, bool)> {
    let (k, w) = frames.bracket(t);
    let f0 = &frames.fields[k];
    let (a, j) = interp_cubic(pick(f0), &f0.grid, x)?;
    let touched = |f: &MadelungFields| f.node_mask[j..j + 4].iter().any(|m| *m);
    if w == 0.0 || frames.len() == 1 {
        return Some((a, touched(f0)));
    }
    let f1 = &frames.fields[k + 1];
    let (b, _) = interp_cubic(pick(f1), &f1.grid, x)?;
    Some(((1.0 - w) * a + w * b, touched(f0) || touched(f1)))
}

fn velocity_of(f: &MadelungFields) -> &[f64] {
    &f.velocity
}
fn quantum_potential_of(f: &MadelungFields) -> &[f64] {
    &f.quantum_potential
}

/// Hydrodynamic Lagrangian `m v^2/2 - V - Q` at `(x, t)`.
fn lagrangian(frames: &FrameSeries, x: f64, t: f64) -> Option<(f64, bool)> {
    let m = frames.constants.mass();
    let (v, a) = field_at(frames, velocity_of, x, t)?;
    let (q, b) = field_at(frames, quantum_potential_of, x, t)?;
    Some((0.5 * m * v * v - frames.potential.value(x, t, m) - q, a || b))
}

struct Track {
    x: f64,
    s: f64,
    alive: bool,
    touches: u64,
}

fn step_one(frames: &FrameSeries, tr: &mut Track, t: f64, dt: f64, with_action: bool) {
    // rk4 takes `Fn`, so the masked flag is collected through a Cell
    let touched = std::cell::Cell::new(false);
    let vf = |x: f64, t: f64| {
        field_at(frames, velocity_of, x, t).map(|(v, m)| {
            touched.set(touched.get() | m);
            v
        })
    };
    match rk4(tr.x, t, dt, vf) {
        Some(nx) if frames.grid().contains(nx) => {
            if with_action {
                match lagrangian(frames, 0.5 * (tr.x + nx), t + 0.5 * dt) {
                    Some((l, m)) => {
                        tr.s += l * dt;
                        touched.set(touched.get() | m);
                    }
                    None => tr.alive = false,
                }
            }
            tr.x = nx;
        }
        _ => tr.alive = false,
    }
    if touched.get() {
        tr.touches += 1;
    }
}

/// Snapshot of an ensemble recorded during transport.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSnapshot {
    pub t: f64,
    pub positions: Vec<f64>,
    pub actions: Vec<f64>,
    pub alive: Vec<bool>,
}

fn transport(
    e: &TrajectoryEnsemble,
    frames: &FrameSeries,
    dt: f64,
    n_steps: usize,
    with_action: bool,
    record_every: usize,
) -> Result<(TrajectoryEnsemble, Vec<EnsembleSnapshot>)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be at least 1".into()));
    }
    let t0 = e.t;
    frames.require_span(t0, t0 + dt * n_steps as f64)?;
    let n_rec = if record_every == 0 { 0 } else { n_steps / record_every + 1 };
    let results: Vec<(Track, Vec<(f64, f64, bool)>)> = (0..e.len())
        .into_par_iter()
        .map(|i| {
            let mut tr = Track {
                x: e.positions[i],
                s: e.actions[i],
                alive: e.alive[i],
                touches: 0,
            };
            let mut rec = Vec::with_capacity(n_rec);
            if record_every > 0 {
                rec.push((tr.x, tr.s, tr.alive));
            }
            for k in 0..n_steps {
                if tr.alive {
                    step_one(frames, &mut tr, t0 + k as f64 * dt, dt, with_action);
                }
                if record_every > 0 && (k + 1) % record_every == 0 {
                    rec.push((tr.x, tr.s, tr.alive));
                }
            }
            (tr, rec)
        })
        .collect();

    let mut out = e.clone();
    out.t = t0 + dt * n_steps as f64;
    let mut snaps: Vec<EnsembleSnapshot> = (0..n_rec)
        .map(|r| EnsembleSnapshot {
            t: t0 + (r * record_every) as f64 * dt,
            positions: Vec::with_capacity(e.len()),
            actions: Vec::with_capacity(e.len()),
            alive: Vec::with_capacity(e.len()),
        })
        .collect();
    for (i, (tr, rec)) in results.into_iter().enumerate() {
        if e.alive[i] && !tr.alive {
            out.diagnostics.left_domain += 1;
        }
        out.positions[i] = tr.x;
        out.actions[i] = tr.s;
        out.alive[i] = tr.alive;
        out.diagnostics.masked_touches += tr.touches;
        for (snap, (x, s, a)) in snaps.iter_mut().zip(rec) {
            snap.positions.push(x);
            snap.actions.push(s);
            snap.alive.push(a);
        }
    }
    Ok((out, snaps))
}

/// RK4 transport through the frame velocities. Trajectories that leave
/// the grid are frozen and marked not alive.
pub fn advect(e: &TrajectoryEnsemble, frames: &FrameSeries, dt: f64, n_steps: usize) -> Result<TrajectoryEnsemble> {
    Ok(transport(e, frames, dt, n_steps, false, 0)?.0)
}

/// Transport plus midpoint-rule accumulation of `m v^2/2 - V - Q`.
pub fn accumulate_action(e: &TrajectoryEnsemble, frames: &FrameSeries, dt: f64, n_steps: usize) -> Result<TrajectoryEnsemble> {
    Ok(transport(e, frames, dt, n_steps, true, 0)?.0)
}

/// As [`accumulate_action`], also returning snapshots every
/// `record_every` steps (the initial state included).
pub fn accumulate_action_recorded(
    e: &TrajectoryEnsemble,
    frames: &FrameSeries,
    dt: f64,
    n_steps: usize,
    record_every: usize,
) -> Result<(TrajectoryEnsemble, Vec<EnsembleSnapshot>)> {
    if record_every == 0 {
        return Err(Error::Config("record stride must be at least 1".into()));
    }
    transport(e, frames, dt, n_steps, true, record_every)
}

/// KS distance between the alive positions and the piecewise-linear CDF
/// of `rho`.
pub fn equivariance_distance(e: &TrajectoryEnsemble, rho: &[f64], grid: &Grid1D) -> Result<f64> {
    let mut xs = e.alive_positions();
    if xs.len() < MIN_EQUIVARIANCE_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: xs.len(),
            need: MIN_EQUIVARIANCE_SAMPLES,
        });
    }
    let cdf = GridCdf::new(rho, grid)?;
    xs.sort_by(f64::total_cmp);
    Ok(ks_statistic_sorted(&xs, |x| cdf.eval(x)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub centers: Vec<f64>,
    pub counts: Vec<u64>,
    /// Counts normalized so the histogram integrates to one.
    pub density: Vec<f64>,
}

/// Uniform-bin histogram of alive positions over the grid extent.
pub fn histogram(e: &TrajectoryEnsemble, grid: &Grid1D, bins: usize) -> Result<Histogram> {
    if bins < 4 {
        return Err(Error::Config(format!("histogram needs at least 4 bins, got {bins}")));
    }
    let (lo, hi) = (grid.x_min(), grid.x_max());
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    let xs = e.alive_positions();
    for &x in &xs {
        let b = (((x - lo) / w).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = xs.len().max(1) as f64;
    Ok(Histogram {
        edges: (0..=bins).map(|i| lo + i as f64 * w).collect(),
        centers: (0..bins).map(|i| lo + (i as f64 + 0.5) * w).collect(),
        density: counts.iter().map(|&c| c as f64 / (total * w)).collect(),
        counts,
    })
}
