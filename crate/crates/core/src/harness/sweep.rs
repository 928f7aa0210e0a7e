//! Parameter sweeps over independent runs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::export::{fmt_f64, Format, OutputWriter};
use super::scenario::{InitialWave, Scenario};
use super::{run, RunOptions, RunStatus};
use crate::error::{Error, Result};
use crate::fields::{Grid1D, PhysicalConstants};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Hbar,
    Dx,
    Dt,
    NTrajectories,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Hbar => "hbar",
            SweepAxis::Dx => "dx",
            SweepAxis::Dt => "dt",
            SweepAxis::NTrajectories => "n_trajectories",
        }
    }

    fn is_resolution(self) -> bool {
        matches!(self, SweepAxis::Dx | SweepAxis::Dt)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hbar" => SweepAxis::Hbar,
            "dx" => SweepAxis::Dx,
            "dt" => SweepAxis::Dt,
            "n_trajectories" => SweepAxis::NTrajectories,
            _ => return Err(Error::Config(format!("unknown sweep axis `{s}` (hbar, dx, dt, n_trajectories)"))),
        })
    }
}

/// The scenario at one sweep value.
///
/// * `hbar`: the packet momentum `hbar k0` is held fixed, so `k0` scales
///   as `1/hbar`.
/// * `dx`: node count chosen so the spacing is as close to `value` as the
///   domain allows.
/// * `dt`: the final time and the frame count are kept.
pub fn apply(base: &Scenario, axis: SweepAxis, value: f64) -> Result<Scenario> {
    let mut s = base.clone();
    match axis {
        SweepAxis::Hbar => {
            let ratio = base.constants.hbar() / value;
            s.constants = PhysicalConstants::new(value, base.constants.mass())?;
            match &mut s.initial {
                InitialWave::Gaussian { k0, .. } | InitialWave::DoubleSlit { k0, .. } => *k0 *= ratio,
                InitialWave::Coherent { .. } => {}
            }
        }
        SweepAxis::Dx => {
            if !(value > 0.0) {
                return Err(Error::Config(format!("dx must be positive, got {value}")));
            }
            let g = base.grid;
            let n = ((g.x_max() - g.x_min()) / value).round() as usize + 1;
            s.grid = Grid1D::new(g.x_min(), g.x_max(), n)?;
        }
        SweepAxis::Dt => {
            if !(value > 0.0) {
                return Err(Error::Config(format!("dt must be positive, got {value}")));
            }
            let t_final = base.t_final();
            s.evolution.dt = value;
            s.evolution.n_steps = (t_final / value).round() as usize;
            if let Some(t) = &mut s.trajectories {
                let per = base.evolution.dt / value;
                t.export_every = ((t.export_every as f64 * per).round() as usize).max(1);
            }
        }
        SweepAxis::NTrajectories => {
            let Some(t) = &mut s.trajectories else {
                return Err(Error::Config("n_trajectories sweep needs a [trajectories] section".into()));
            };
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::Config(format!("n_trajectories must be a positive integer, got {value}")));
            }
            t.n = value as usize;
        }
    }
    s.validate()?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Grid spacing and step actually used at this point.
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOrder {
    pub metric: String,
    pub from: f64,
    pub to: f64,
    /// `metric(from) / metric(to)`.
    pub ratio: f64,
    /// `ln(ratio) / ln(h_from / h_to)`.
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub base: String,
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub orders: Vec<ConvergenceOrder>,
}

impl SweepReport {
    pub fn metric(&self, name: &str) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.metrics.get(name).copied()).collect()
    }

    pub fn to_csv(&self) -> String {
        let names: BTreeSet<&String> = self.rows.iter().flat_map(|r| r.metrics.keys()).collect();
        let mut s = format!("{},status", self.axis.name());
        for n in &names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&fmt_f64(r.value));
            s.push(',');
            s.push_str(&serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
            for n in &names {
                s.push(',');
                if let Some(v) = r.metrics.get(*n) {
                    s.push_str(&fmt_f64(*v));
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn orders_csv(&self) -> String {
        let mut s = String::from("metric,from,to,ratio,order\n");
        for o in &self.orders {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                o.metric,
                fmt_f64(o.from),
                fmt_f64(o.to),
                fmt_f64(o.ratio),
                fmt_f64(o.order)
            ));
        }
        s
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Each point writes its run into `point_NNN/`, the aggregate at the top.
    pub out_dir: Option<PathBuf>,
    pub format: Format,
    /// Concurrent points; 0 uses the rayon default.
    pub workers: usize,
}

fn point(base: &Scenario, axis: SweepAxis, value: f64, i: usize, opts: &SweepOptions) -> Result<SweepRow> {
    let s = match apply(base, axis, value) {
        Ok(s) => s,
        Err(e) => {
            return Ok(SweepRow {
                value,
                status: RunStatus::ConfigError,
                error: Some(e.to_string()),
                dx: None,
                dt: None,
                metrics: BTreeMap::new(),
            })
        }
    };
    let ro = RunOptions {
        out_dir: opts.out_dir.as_ref().map(|d| d.join(format!("point_{i:03}"))),
        format: opts.format,
    };
    let m = run(&s, &ro)?;
    let mut metrics = m.metrics.clone();
    for c in &m.checks {
        if let Some(v) = c.value {
            metrics.insert(c.name.clone(), v);
        }
    }
    if let Some(e) = &m.diagnostics.evolution {
        metrics.insert("norm_drift_abs".into(), e.max_norm_drift);
    }
    Ok(SweepRow {
        value,
        status: m.status,
        error: m.error,
        dx: Some(s.grid.dx()),
        dt: Some(s.evolution.dt),
        metrics,
    })
}

fn orders(axis: SweepAxis, rows: &[SweepRow]) -> Vec<ConvergenceOrder> {
    if !axis.is_resolution() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for w in rows.windows(2) {
        let h = |r: &SweepRow| match axis {
            SweepAxis::Dx => r.dx,
            _ => r.dt,
        };
        let (Some(h0), Some(h1)) = (h(&w[0]), h(&w[1])) else {
            continue;
        };
        for (name, &a) in &w[0].metrics {
            let Some(&b) = w[1].metrics.get(name) else { continue };
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) || h0 == h1 {
                continue;
            }
            out.push(ConvergenceOrder {
                metric: name.clone(),
                from: w[0].value,
                to: w[1].value,
                ratio: a / b,
                order: (a / b).ln() / (h0 / h1).ln(),
            });
        }
    }
    out
}

/// Runs `base` at each value of `axis`. A point that fails validation or
/// errors is recorded in its row; the other points still run.
pub fn sweep(base: &Scenario, axis: SweepAxis, values: &[f64], opts: &SweepOptions) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        values
            .par_iter()
            .enumerate()
            .map(|(i, &v)| point(base, axis, v, i, opts))
            .collect::<Result<_>>()
    })?;
    let report = SweepReport {
        base: base.name.clone(),
        axis,
        orders: orders(axis, &rows),
        rows,
    };
    if let Some(dir) = &opts.out_dir {
        let mut w = OutputWriter::new(dir)?;
        w.write("sweep.csv", &report.to_csv())?;
        w.write("orders.csv", &report.orders_csv())?;
        w.write("sweep.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::parse_config;

    fn base() -> Scenario {
        parse_config("[grid]\nx_min = -10\nx_max = 10\nn = 201\n[initial]\nsigma = 1\nk0 = 2\n[evolution]\nn_steps = 10\n").unwrap()
    }

    #[test]
    fn axis_application() {
        let b = base();
        let s = apply(&b, SweepAxis::Hbar, 0.5).unwrap();
        assert_eq!(s.constants.hbar(), 0.5);
        assert!(matches!(s.initial, InitialWave::Gaussian { k0, .. } if k0 == 4.0));
        let s = apply(&b, SweepAxis::Dx, 0.05).unwrap();
        assert_eq!(s.grid.n(), 401);
        let s = apply(&b, SweepAxis::Dt, 5e-4).unwrap();
        assert_eq!(s.evolution.n_steps, 20);
        assert!(apply(&b, SweepAxis::NTrajectories, 10.0).is_err());
        assert!("bogus".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn one_value_one_row() {
        let r = sweep(&base(), SweepAxis::Dx, &[0.1], &SweepOptions::default()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.orders.is_empty());
        assert_eq!(r.to_csv().lines().count(), 2);
    }
}
