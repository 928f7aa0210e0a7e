//! Small statistics toolkit: grid CDFs, Kolmogorov–Smirnov distances,
//! correlation and smoothing.

use crate::error::{Error, Result};
use crate::fields::Grid1D;

/// One-sample KS critical value at 95% confidence.
pub fn ks_critical_95(n: usize) -> f64 {
    1.36 / (n as f64).sqrt()
}

/// One-sample KS critical value at 99% confidence.
pub fn ks_critical_99(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// `sup |F_n - F|` for sorted samples.
pub fn ks_statistic_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    ks_statistic_sorted(&s, cdf)
}

/// Piecewise-linear CDF through the cumulative trapezoid of node densities.
#[derive(Debug, Clone)]
pub struct GridCdf {
    grid: Grid1D,
    cum: Vec<f64>,
}

impl GridCdf {
    pub fn new(rho: &[f64], grid: &Grid1D) -> Result<Self> {
        grid.check_len(rho.len())?;
        if let Some(i) = rho.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidDensity(format!("rho[{i}] = {} is negative or non-finite", rho[i])));
        }
        let mut cum = Vec::with_capacity(rho.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in rho.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * grid.dx();
            cum.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::DegenerateField("density integrates to zero".into()));
        }
        for c in cum.iter_mut() {
            *c /= acc;
        }
        Ok(Self { grid: *grid, cum })
    }

    /// Total mass before normalization is not kept; callers check it.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.grid.x_min() {
            return 0.0;
        }
        if x >= self.grid.x_max() {
            return 1.0;
        }
        let (i, f) = self.grid.locate(x).expect("inside grid");
        self.cum[i] + f * (self.cum[i + 1] - self.cum[i])
    }

    pub fn inverse(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        // first node with cum >= u
        let j = self.cum.partition_point(|&c| c < u).clamp(1, self.cum.len() - 1);
        let (a, b) = (self.cum[j - 1], self.cum[j]);
        let f = if b > a { (u - a) / (b - a) } else { 0.0 };
        self.grid.x(j - 1) + f * self.grid.dx()
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Centered moving average over `2 * half + 1` entries, truncated at ends.
pub fn moving_average(v: &[f64], half: usize) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Interquartile range by linear interpolation of order statistics.
pub fn iqr(sorted: &[f64]) -> f64 {
    let q = |p: f64| {
        let h = p * (sorted.len() - 1) as f64;
        let i = h.floor() as usize;
        let j = (i + 1).min(sorted.len() - 1);
        sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
    };
    q(0.75) - q(0.25)
}
