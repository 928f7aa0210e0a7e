//! Crank–Nicolson propagation of the 1D Schrödinger equation on a Dirichlet
//! box, potentials, frame storage and energy functionals.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    decompose, stencil, trapezoid, trapezoid_norm, DerivativeOrder, Grid1D, MadelungFields,
    PhysicalConstants, WaveField, DEFAULT_RHO_FLOOR_RELATIVE,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Free,
    Harmonic { omega: f64 },
    /// Square barrier of `height` on `|x - center| <= width / 2`.
    Barrier { height: f64, center: f64, width: f64 },
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Potential::Free => Ok(()),
            Potential::Harmonic { omega } => {
                if omega.is_finite() && omega > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidPotential(format!("omega must be positive, got {omega}")))
                }
            }
            Potential::Barrier { height, center, width } => {
                if !(width.is_finite() && width > 0.0) {
                    return Err(Error::InvalidPotential(format!("width must be positive, got {width}")));
                }
                if !(height.is_finite() && center.is_finite()) {
                    return Err(Error::InvalidPotential("height and center must be finite".into()));
                }
                Ok(())
            }
        }
    }

    /// `V(x, t)`; every shipped variant ignores `t`.
    #[inline]
    pub fn value(&self, x: f64, _t: f64, mass: f64) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => 0.5 * mass * omega * omega * x * x,
            Potential::Barrier { height, center, width } => {
                if (x - center).abs() <= 0.5 * width {
                    height
                } else {
                    0.0
                }
            }
        }
    }

    pub fn values(&self, grid: &Grid1D, t: f64, mass: f64) -> Vec<f64> {
        (0..grid.n()).map(|i| self.value(grid.x(i), t, mass)).collect()
    }

    /// `-dV/dx` for the smooth part. The barrier's force is a pair of
    /// impulses at its edges and is handled by the drift in `classical`.
    #[inline]
    pub fn force(&self, x: f64, mass: f64) -> f64 {
        match *self {
            Potential::Harmonic { omega } => -mass * omega * omega * x,
            _ => 0.0,
        }
    }

    /// `-d²V/dx²`, available when the potential is smooth.
    pub fn force_gradient(&self, mass: f64) -> Option<f64> {
        match *self {
            Potential::Free => Some(0.0),
            Potential::Harmonic { omega } => Some(-mass * omega * omega),
            Potential::Barrier { .. } => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Potential::Free => "free",
            Potential::Harmonic { .. } => "harmonic",
            Potential::Barrier { .. } => "barrier",
        }
    }
}

pub fn potential_values(p: &Potential, grid: &Grid1D, t: f64, c: &PhysicalConstants) -> Vec<f64> {
    p.values(grid, t, c.mass())
}

/// Prefactored `(I + i a H) x = (I - i a H) y` on the interior nodes.
#[derive(Debug, Clone)]
struct CnPropagator {
    rhs_diag: Vec<Complex64>,
    rhs_off: Complex64,
    lhs_off: Complex64,
    cprime: Vec<Complex64>,
    inv_den: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl CnPropagator {
    fn new(grid: &Grid1D, v: &[f64], c: &PhysicalConstants, dt: f64) -> Result<Self> {
        let m = grid.n() - 2;
        let kin = c.hbar() * c.hbar() / (c.mass() * grid.dx() * grid.dx());
        let alpha = dt / (2.0 * c.hbar());
        let h_off = -0.5 * kin;
        let lhs_off = I * alpha * h_off;
        let rhs_off = -lhs_off;
        let mut rhs_diag = Vec::with_capacity(m);
        let mut cprime = Vec::with_capacity(m);
        let mut inv_den = Vec::with_capacity(m);
        for k in 0..m {
            let h = kin + v[k + 1];
            let a = 1.0 + I * alpha * h;
            rhs_diag.push(1.0 - I * alpha * h);
            let den = if k == 0 { a } else { a - lhs_off * cprime[k - 1] };
            if den.norm() < 1e-300 || !den.re.is_finite() || !den.im.is_finite() {
                return Err(Error::SingularSystem { row: k + 1 });
            }
            let inv = 1.0 / den;
            inv_den.push(inv);
            cprime.push(lhs_off * inv);
        }
        Ok(Self {
            rhs_diag,
            rhs_off,
            lhs_off,
            cprime,
            inv_den,
            scratch: vec![Complex64::new(0.0, 0.0); m],
        })
    }

    /// Advances `psi` in place. End nodes are forced to zero.
    fn apply(&mut self, psi: &mut [Complex64]) {
        let n = psi.len();
        let m = n - 2;
        psi[0] = Complex64::new(0.0, 0.0);
        psi[n - 1] = Complex64::new(0.0, 0.0);
        let d = &mut self.scratch;
        for k in 0..m {
            let i = k + 1;
            let rhs = self.rhs_diag[k] * psi[i] + self.rhs_off * (psi[i - 1] + psi[i + 1]);
            d[k] = if k == 0 {
                rhs * self.inv_den[0]
            } else {
                (rhs - self.lhs_off * d[k - 1]) * self.inv_den[k]
            };
        }
        psi[m] = d[m - 1];
        for k in (0..m - 1).rev() {
            psi[k + 1] = d[k] - self.cprime[k] * psi[k + 2];
        }
    }
}

/// One Crank–Nicolson step. Nonzero end amplitudes are dropped.
pub fn cn_step(w: &WaveField, p: &Potential, c: &PhysicalConstants, dt: f64) -> Result<WaveField> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    p.validate()?;
    let v = potential_values(p, w.grid(), w.t(), c);
    let mut prop = CnPropagator::new(w.grid(), &v, c, dt)?;
    let mut psi = w.psi().to_vec();
    prop.apply(&mut psi);
    if psi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Divergence { step: 1 });
    }
    WaveField::new(*w.grid(), w.t() + dt, psi)
}

/// Streaming propagator for long runs that should not keep every frame.
#[derive(Debug, Clone)]
pub struct Evolver {
    grid: Grid1D,
    t0: f64,
    dt: f64,
    steps: usize,
    psi: Vec<Complex64>,
    prop: CnPropagator,
}

impl Evolver {
    pub fn new(w0: &WaveField, p: &Potential, c: &PhysicalConstants, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        p.validate()?;
        let v = potential_values(p, w0.grid(), w0.t(), c);
        Ok(Self {
            grid: *w0.grid(),
            t0: w0.t(),
            dt,
            steps: 0,
            psi: w0.psi().to_vec(),
            prop: CnPropagator::new(w0.grid(), &v, c, dt)?,
        })
    }

    pub fn step(&mut self) -> Result<()> {
        self.prop.apply(&mut self.psi);
        self.steps += 1;
        let s: f64 = self.psi.iter().map(|z| z.norm_sqr()).sum();
        if !s.is_finite() {
            return Err(Error::Divergence { step: self.steps });
        }
        Ok(())
    }

    pub fn t(&self) -> f64 {
        self.t0 + self.steps as f64 * self.dt
    }
    pub fn steps_taken(&self) -> usize {
        self.steps
    }
    pub fn psi(&self) -> &[Complex64] {
        &self.psi
    }
    pub fn wave(&self) -> Result<WaveField> {
        WaveField::new(self.grid, self.t(), self.psi.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub store_every: usize,
    /// Density floor for the stored Madelung fields, relative to `max(rho)`
    /// of each frame.
    pub rho_floor_rel: f64,
}

impl EvolutionConfig {
    pub const MAX_FRAMES: usize = 2000;

    /// Default stride keeps at most `MAX_FRAMES` frames.
    pub fn new(dt: f64, n_steps: usize) -> Self {
        Self {
            dt,
            n_steps,
            store_every: n_steps.div_ceil(Self::MAX_FRAMES - 1).max(1),
            rho_floor_rel: DEFAULT_RHO_FLOOR_RELATIVE,
        }
    }

    pub fn with_store_every(mut self, k: usize) -> Self {
        self.store_every = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        if self.store_every == 0 {
            return Err(Error::Config("store_every must be at least 1".into()));
        }
        if !(self.dt * self.n_steps as f64).is_finite() {
            return Err(Error::Config("dt * n_steps overflows".into()));
        }
        if !(self.rho_floor_rel > 0.0 && self.rho_floor_rel < 1.0) {
            return Err(Error::Config(format!("rho_floor must lie in (0, 1), got {}", self.rho_floor_rel)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionDiagnostics {
    pub steps: usize,
    /// `dt * hbar / (m dx^2)`; above 1 the explicit-scheme bound is exceeded.
    /// Crank–Nicolson is unconditionally stable, so this is advisory only.
    pub stability_ratio: f64,
    pub stability_advisory_exceeded: bool,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub max_norm_drift: f64,
    /// Largest anchor mismatch of the cross-frame phase alignment, in
    /// units of `pi * hbar`.
    pub max_unwrap_mismatch: f64,
}

/// Stored frames of one evolution with their Madelung fields. The action
/// fields are aligned in time so that `S` is continuous across frames.
#[derive(Debug, Clone, Serialize)]
pub struct FrameSeries {
    pub waves: Vec<WaveField>,
    pub fields: Vec<MadelungFields>,
    pub frame_dt: f64,
    pub potential: Potential,
    pub constants: PhysicalConstants,
    pub config: EvolutionConfig,
    pub diagnostics: EvolutionDiagnostics,
}

impl FrameSeries {
    pub fn len(&self) -> usize {
        self.waves.len()
    }
    pub fn is_empty(&self) -> bool {
        self.waves.is_empty()
    }
    pub fn grid(&self) -> &Grid1D {
        self.waves[0].grid()
    }
    pub fn t_start(&self) -> f64 {
        self.waves[0].t()
    }
    pub fn t_end(&self) -> f64 {
        self.waves[self.len() - 1].t()
    }
    pub fn times(&self) -> Vec<f64> {
        self.waves.iter().map(|w| w.t()).collect()
    }

    /// Frame index `k` and weight in `[0, 1]` with
    /// `t = (1 - w) t_k + w t_{k+1}`, clamped at the ends.
    pub fn bracket(&self, t: f64) -> (usize, f64) {
        let s = (t - self.t_start()) / self.frame_dt;
        if self.len() < 2 || s <= 0.0 {
            return (0, 0.0);
        }
        let last = self.len() - 2;
        let k = (s.floor() as usize).min(last);
        (k, (s - k as f64).clamp(0.0, 1.0))
    }

    pub fn require_span(&self, t0: f64, t1: f64) -> Result<()> {
        let tol = 1e-9 * self.frame_dt.max(1.0);
        if t0 < self.t_start() - tol || t1 > self.t_end() + tol {
            return Err(Error::Coverage {
                have_start: self.t_start(),
                have_end: self.t_end(),
                need_start: t0,
                need_end: t1,
            });
        }
        Ok(())
    }
}

/// Shifts `next.action` by the multiple of `2 pi hbar` closest to the
/// hydrodynamic prediction `S_prev - (m v^2/2 + V + Q) dt` at the density
/// maximum of `next`. Returns the residual mismatch in units of `pi hbar`.
pub fn align_action(
    prev: &MadelungFields,
    next: &mut MadelungFields,
    p: &Potential,
    c: &PhysicalConstants,
    frame_dt: f64,
    from: usize,
    to: usize,
) -> Result<f64> {
    let j = next.argmax_rho();
    let x = next.grid.x(j);
    let energy = |f: &MadelungFields| {
        0.5 * c.mass() * f.velocity[j] * f.velocity[j] + p.value(x, f.t, c.mass()) + f.quantum_potential[j]
    };
    let predicted = prev.action[j] - 0.5 * (energy(prev) + energy(next)) * frame_dt;
    let period = 2.0 * std::f64::consts::PI * c.hbar();
    let shift = period * ((predicted - next.action[j]) / period).round();
    for s in next.action.iter_mut() {
        *s += shift;
    }
    let mismatch = (next.action[j] - predicted).abs() / (std::f64::consts::PI * c.hbar());
    if mismatch > 0.5 {
        return Err(Error::Unwrap {
            from,
            to,
            jump: next.action[j] - predicted,
        });
    }
    Ok(mismatch)
}

pub fn evolve(w0: &WaveField, p: &Potential, c: &PhysicalConstants, cfg: &EvolutionConfig) -> Result<FrameSeries> {
    cfg.validate()?;
    let grid = *w0.grid();
    let mut ev = Evolver::new(w0, p, c, cfg.dt)?;
    let initial_norm = trapezoid_norm(w0.psi(), grid.dx())?;
    let stability_ratio = cfg.dt * c.hbar() / (c.mass() * grid.dx() * grid.dx());
    let mut diagnostics = EvolutionDiagnostics {
        stability_ratio,
        stability_advisory_exceeded: stability_ratio > 1.0,
        initial_norm,
        ..Default::default()
    };

    let floor_of = |w: &WaveField| {
        let max = w.psi().iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        cfg.rho_floor_rel * max
    };
    let frame_dt = cfg.dt * cfg.store_every as f64;
    let mut waves = vec![w0.clone()];
    let mut fields = vec![decompose(w0, c, floor_of(w0))?];
    for step in 1..=cfg.n_steps {
        ev.step()?;
        if step % cfg.store_every == 0 {
            let w = ev.wave().map_err(|_| Error::Divergence { step })?;
            let norm = trapezoid_norm(w.psi(), grid.dx()).map_err(|_| Error::Divergence { step })?;
            diagnostics.max_norm_drift = diagnostics.max_norm_drift.max((norm - initial_norm).abs());
            let mut f = decompose(&w, c, floor_of(&w))?;
            let k = fields.len();
            let mis = align_action(&fields[k - 1], &mut f, p, c, frame_dt, k - 1, k)?;
            diagnostics.max_unwrap_mismatch = diagnostics.max_unwrap_mismatch.max(mis);
            waves.push(w);
            fields.push(f);
        }
    }
    diagnostics.steps = cfg.n_steps;
    diagnostics.final_norm = trapezoid_norm(ev.psi(), grid.dx())?;
    Ok(FrameSeries {
        waves,
        fields,
        frame_dt,
        potential: *p,
        constants: *c,
        config: *cfg,
        diagnostics,
    })
}

/// Real and imaginary parts of `integral psi^* H psi dx`.
pub fn mean_energy_parts(w: &WaveField, p: &Potential, c: &PhysicalConstants) -> (f64, f64) {
    let g = w.grid();
    let psi = w.psi();
    let lap = stencil(psi, g.dx(), DerivativeOrder::Second).expect("grid has at least 16 nodes");
    let v = potential_values(p, g, w.t(), c);
    let k = -c.hbar() * c.hbar() / (2.0 * c.mass());
    let (re, im): (Vec<f64>, Vec<f64>) = psi
        .iter()
        .zip(&lap)
        .zip(&v)
        .map(|((z, l), vi)| {
            let e = z.conj() * (l * k + z * vi);
            (e.re, e.im)
        })
        .unzip();
    (trapezoid(&re, g.dx()), trapezoid(&im, g.dx()))
}

pub fn mean_energy(w: &WaveField, p: &Potential, c: &PhysicalConstants) -> f64 {
    mean_energy_parts(w, p, c).0
}

/// `integral (m v^2/2 + V + Q) rho dx`.
pub fn hydrodynamic_energy(m: &MadelungFields, p: &Potential, c: &PhysicalConstants) -> f64 {
    let v = potential_values(p, &m.grid, m.t, c);
    let integrand: Vec<f64> = (0..m.rho.len())
        .map(|i| (0.5 * c.mass() * m.velocity[i].powi(2) + v[i] + m.quantum_potential[i]) * m.rho[i])
        .collect();
    trapezoid(&integrand, m.grid.dx())
}
