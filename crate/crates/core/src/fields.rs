//! Uniform 1D grid, wavefunction container, finite-difference calculus and
//! the Madelung decomposition `psi -> (rho, R, S, v, Q)`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest grid accepted by [`Grid1D::new`].
pub const MIN_GRID_NODES: usize = 16;
/// Smallest array the derivative stencils can act on.
pub const MIN_STENCIL_NODES: usize = 5;
/// Default density floor as a fraction of `max(rho)`.
pub const DEFAULT_RHO_FLOOR_RELATIVE: f64 = 1e-12;
/// Residual checks only look at nodes with `rho > BULK_FACTOR * rho_floor`.
pub const BULK_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n: usize,
    dx: f64,
}

#[derive(Serialize, Deserialize)]
struct GridSpec {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl TryFrom<GridSpec> for Grid1D {
    type Error = Error;
    fn try_from(s: GridSpec) -> Result<Self> {
        Grid1D::new(s.x_min, s.x_max, s.n)
    }
}

impl From<Grid1D> for GridSpec {
    fn from(g: Grid1D) -> Self {
        GridSpec {
            x_min: g.x_min,
            x_max: g.x_max,
            n: g.n,
        }
    }
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "x_max ({x_max}) must exceed x_min ({x_min})"
            )));
        }
        if n < MIN_GRID_NODES {
            return Err(Error::InvalidGrid(format!(
                "n = {n} is below the minimum of {MIN_GRID_NODES} nodes"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n,
            dx: (x_max - x_min) / (n - 1) as f64,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn len(&self) -> f64 {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Cell index `i` and fractional offset in `[0, 1]` such that
    /// `x = x_i + frac * dx`, or `None` outside the grid.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !self.contains(x) {
            return None;
        }
        let s = (x - self.x_min) / self.dx;
        let i = (s.floor() as usize).min(self.n - 2);
        Some((i, s - i as f64))
    }

    /// Nearest node index, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let s = ((x - self.x_min) / self.dx).round();
        s.clamp(0.0, (self.n - 1) as f64) as usize
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConstantsSpec", into = "ConstantsSpec")]
pub struct PhysicalConstants {
    hbar: f64,
    mass: f64,
}

#[derive(Serialize, Deserialize)]
struct ConstantsSpec {
    hbar: f64,
    mass: f64,
}

impl TryFrom<ConstantsSpec> for PhysicalConstants {
    type Error = Error;
    fn try_from(s: ConstantsSpec) -> Result<Self> {
        PhysicalConstants::new(s.hbar, s.mass)
    }
}

impl From<PhysicalConstants> for ConstantsSpec {
    fn from(c: PhysicalConstants) -> Self {
        ConstantsSpec {
            hbar: c.hbar,
            mass: c.mass,
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
        }
    }
}

impl PhysicalConstants {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidConstants(format!(
                "hbar must be positive and finite, got {hbar}"
            )));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidConstants(format!(
                "mass must be positive and finite, got {mass}"
            )));
        }
        Ok(Self { hbar, mass })
    }
    pub fn hbar(&self) -> f64 {
        self.hbar
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
}

/// Trapezoidal quadrature of node samples with spacing `dx`.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dx * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// Trapezoidal `integral |psi|^2 dx`, validating every amplitude.
pub fn trapezoid_norm(psi: &[Complex64], dx: f64) -> Result<f64> {
    if let Some(i) = psi.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::InvalidField(format!("non-finite amplitude at node {i}")));
    }
    let dens: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
    let norm = trapezoid(&dens, dx);
    if !(norm > 0.0) {
        return Err(Error::InvalidField("L2 norm is zero".into()));
    }
    Ok(norm)
}

/// Complex amplitude on a grid at one time instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveField {
    grid: Grid1D,
    t: f64,
    psi: Vec<Complex64>,
}

impl WaveField {
    pub fn new(grid: Grid1D, t: f64, psi: Vec<Complex64>) -> Result<Self> {
        grid.check_len(psi.len())?;
        if !t.is_finite() {
            return Err(Error::InvalidField(format!("time must be finite, got {t}")));
        }
        trapezoid_norm(&psi, grid.dx())?;
        Ok(Self { grid, t, psi })
    }

    pub fn from_fn(grid: Grid1D, t: f64, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let psi = (0..grid.n()).map(|i| f(grid.x(i))).collect();
        Self::new(grid, t, psi)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn psi(&self) -> &[Complex64] {
        &self.psi
    }
    pub fn into_psi(self) -> Vec<Complex64> {
        self.psi
    }

    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Same field with endpoint amplitudes pinned to zero.
    pub fn with_dirichlet_ends(mut self) -> Result<Self> {
        let n = self.psi.len();
        self.psi[0] = Complex64::new(0.0, 0.0);
        self.psi[n - 1] = Complex64::new(0.0, 0.0);
        trapezoid_norm(&self.psi, self.grid.dx())?;
        Ok(self)
    }
}

pub fn norm(w: &WaveField) -> f64 {
    // Construction already rejected non-finite and zero fields.
    trapezoid_norm(&w.psi, w.grid.dx()).expect("validated field")
}

pub fn normalize(w: &WaveField) -> Result<WaveField> {
    let s = 1.0 / trapezoid_norm(&w.psi, w.grid.dx())?.sqrt();
    let psi = w.psi.iter().map(|z| z * s).collect();
    WaveField::new(w.grid, w.t, psi)
}

/// Values a stencil can act on.
pub trait NodeValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
}
impl NodeValue for f64 {}
impl NodeValue for Complex64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    First,
    Second,
}

/// Second-order finite differences: central in the interior, one-sided at
/// the two end nodes.
pub fn derivative<T: NodeValue>(values: &[T], grid: &Grid1D, order: DerivativeOrder) -> Result<Vec<T>> {
    grid.check_len(values.len())?;
    stencil(values, grid.dx(), order)
}

pub fn stencil<T: NodeValue>(f: &[T], dx: f64, order: DerivativeOrder) -> Result<Vec<T>> {
    let n = f.len();
    if n < MIN_STENCIL_NODES {
        return Err(Error::GridTooSmall {
            got: n,
            need: MIN_STENCIL_NODES,
        });
    }
    let mut out = Vec::with_capacity(n);
    match order {
        DerivativeOrder::First => {
            let h = 0.5 / dx;
            out.push((f[1] * 4.0 - f[0] * 3.0 - f[2]) * h);
            out.extend(f.windows(3).map(|w| (w[2] - w[0]) * h));
            out.push((f[n - 1] * 3.0 - f[n - 2] * 4.0 + f[n - 3]) * h);
        }
        DerivativeOrder::Second => {
            let h = 1.0 / (dx * dx);
            out.push((f[0] * 2.0 - f[1] * 5.0 + f[2] * 4.0 - f[3]) * h);
            out.extend(f.windows(3).map(|w| (w[2] - w[1] + (w[0] - w[1])) * h));
            out.push((f[n - 1] * 2.0 - f[n - 2] * 5.0 + f[n - 3] * 4.0 - f[n - 4]) * h);
        }
    }
    Ok(out)
}

pub(crate) fn d1(f: &[f64], dx: f64) -> Vec<f64> {
    stencil(f, dx, DerivativeOrder::First).expect("grid has at least 16 nodes")
}

pub(crate) fn d2(f: &[f64], dx: f64) -> Vec<f64> {
    stencil(f, dx, DerivativeOrder::Second).expect("grid has at least 16 nodes")
}

/// Hydrodynamic fields of a wavefunction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MadelungFields {
    pub grid: Grid1D,
    pub t: f64,
    pub rho: Vec<f64>,
    /// `R = sqrt(rho)`.
    pub amplitude: Vec<f64>,
    /// `S`, phase times hbar, unwrapped along the grid.
    pub action: Vec<f64>,
    /// `v = dS/dx / m`.
    pub velocity: Vec<f64>,
    /// `Q = -(hbar^2 / 2m) R'' / R`.
    pub quantum_potential: Vec<f64>,
    /// True where `rho < rho_floor`; S, v and Q there are interpolated.
    pub node_mask: Vec<bool>,
    pub rho_floor: f64,
}

impl MadelungFields {
    /// Builds the derived fields from a density and an action field.
    /// Nodes below `rho_floor` are masked and get interpolated v and Q.
    pub fn from_density_action(
        grid: Grid1D,
        t: f64,
        rho: Vec<f64>,
        action: Vec<f64>,
        c: &PhysicalConstants,
        rho_floor: f64,
    ) -> Result<Self> {
        grid.check_len(rho.len())?;
        grid.check_len(action.len())?;
        if let Some(i) = rho.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidDensity(format!(
                "rho[{i}] = {} is negative or non-finite",
                rho[i]
            )));
        }
        if !(rho_floor > 0.0 && rho_floor.is_finite()) {
            return Err(Error::InvalidDensity(format!("rho_floor must be positive, got {rho_floor}")));
        }
        let node_mask: Vec<bool> = rho.iter().map(|&r| r < rho_floor).collect();
        if node_mask.iter().all(|&m| m) {
            return Err(Error::DegenerateField("every node is below the density floor".into()));
        }
        Ok(derive_fields(grid, t, rho, action, node_mask, c, rho_floor))
    }

    pub fn is_masked(&self, i: usize) -> bool {
        self.node_mask[i]
    }

    /// Nodes well inside the packet: `rho > BULK_FACTOR * rho_floor`,
    /// end nodes excluded.
    pub fn bulk_mask(&self) -> Vec<bool> {
        let n = self.rho.len();
        let thr = BULK_FACTOR * self.rho_floor;
        (0..n)
            .map(|i| i > 0 && i + 1 < n && self.rho[i] > thr)
            .collect()
    }

    pub fn max_rho(&self) -> f64 {
        self.rho.iter().cloned().fold(0.0, f64::max)
    }

    pub fn argmax_rho(&self) -> usize {
        let mut best = 0;
        for (i, &r) in self.rho.iter().enumerate() {
            if r > self.rho[best] {
                best = i;
            }
        }
        best
    }
}

fn derive_fields(
    grid: Grid1D,
    t: f64,
    rho: Vec<f64>,
    action: Vec<f64>,
    node_mask: Vec<bool>,
    c: &PhysicalConstants,
    rho_floor: f64,
) -> MadelungFields {
    let dx = grid.dx();
    let amplitude: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let mut velocity: Vec<f64> = d1(&action, dx).into_iter().map(|g| g / c.mass()).collect();
    let r_floor = rho_floor.sqrt();
    let k = -c.hbar() * c.hbar() / (2.0 * c.mass());
    let mut quantum_potential: Vec<f64> = d2(&amplitude, dx)
        .into_iter()
        .zip(&amplitude)
        .map(|(r2, &r)| k * r2 / r.max(r_floor))
        .collect();
    fill_masked(&mut velocity, &node_mask, &grid);
    fill_masked(&mut quantum_potential, &node_mask, &grid);
    MadelungFields {
        grid,
        t,
        rho,
        amplitude,
        action,
        velocity,
        quantum_potential,
        node_mask,
        rho_floor,
    }
}

/// Replaces masked entries by linear interpolation between the nearest
/// unmasked neighbours (constant extension past the outermost ones).
fn fill_masked(values: &mut [f64], mask: &[bool], grid: &Grid1D) {
    let n = values.len();
    let mut prev: Option<usize> = None;
    let mut i = 0;
    while i < n {
        if !mask[i] {
            prev = Some(i);
            i += 1;
            continue;
        }
        let start = i;
        while i < n && mask[i] {
            i += 1;
        }
        let next = (i < n).then_some(i);
        for j in start..i {
            values[j] = match (prev, next) {
                (Some(a), Some(b)) => {
                    let w = (grid.x(j) - grid.x(a)) / (grid.x(b) - grid.x(a));
                    values[a] + w * (values[b] - values[a])
                }
                (Some(a), None) => values[a],
                (None, Some(b)) => values[b],
                (None, None) => values[j],
            };
        }
    }
}

/// Unwraps `hbar * arg(psi)` left to right over unmasked nodes, choosing at
/// each node the branch closest to the previous unmasked value.
pub(crate) fn unwrap_action(psi: &[Complex64], mask: &[bool], hbar: f64) -> Vec<f64> {
    let period = 2.0 * PI * hbar;
    let mut s = vec![0.0; psi.len()];
    let mut prev: Option<f64> = None;
    for (i, z) in psi.iter().enumerate() {
        if mask[i] {
            continue;
        }
        let raw = hbar * z.arg();
        s[i] = match prev {
            None => raw,
            Some(p) => raw + period * ((p - raw) / period).round(),
        };
        prev = Some(s[i]);
    }
    s
}

pub fn default_rho_floor(w: &WaveField) -> f64 {
    let max = w.psi.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    DEFAULT_RHO_FLOOR_RELATIVE * max
}

pub fn decompose(w: &WaveField, c: &PhysicalConstants, rho_floor: f64) -> Result<MadelungFields> {
    if !(rho_floor > 0.0 && rho_floor.is_finite()) {
        return Err(Error::InvalidDensity(format!("rho_floor must be positive, got {rho_floor}")));
    }
    let rho = w.density();
    let mask: Vec<bool> = rho.iter().map(|&r| r < rho_floor).collect();
    if mask.iter().all(|&m| m) {
        return Err(Error::DegenerateField("every node is below the density floor".into()));
    }
    let mut action = unwrap_action(&w.psi, &mask, c.hbar());
    fill_masked(&mut action, &mask, &w.grid);
    Ok(derive_fields(w.grid, w.t, rho, action, mask, c, rho_floor))
}

pub fn compose(m: &MadelungFields, c: &PhysicalConstants) -> Result<WaveField> {
    if let Some(i) = m.rho.iter().position(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidDensity(format!("rho[{i}] = {} is negative", m.rho[i])));
    }
    let psi = m
        .rho
        .iter()
        .zip(&m.action)
        .map(|(&r, &s)| Complex64::from_polar(r.sqrt(), s / c.hbar()))
        .collect();
    WaveField::new(m.grid, m.t, psi)
}

/// Linear interpolation of node values at `x`.
pub fn interp_linear(values: &[f64], grid: &Grid1D, x: f64) -> Option<f64> {
    let (i, f) = grid.locate(x)?;
    Some(values[i] + f * (values[i + 1] - values[i]))
}

/// Four-point Lagrange interpolation, exact for cubics. Returns the value
/// and the first node index of the stencil.
pub fn interp_cubic(values: &[f64], grid: &Grid1D, x: f64) -> Option<(f64, usize)> {
    let (i, _) = grid.locate(x)?;
    let n = values.len();
    let j = i.saturating_sub(1).min(n - 4);
    let s = (x - grid.x(j)) / grid.dx();
    let (s0, s1, s2, s3) = (s, s - 1.0, s - 2.0, s - 3.0);
    let w0 = -s1 * s2 * s3 / 6.0;
    let w1 = s0 * s2 * s3 / 2.0;
    let w2 = -s0 * s1 * s3 / 2.0;
    let w3 = s0 * s1 * s2 / 6.0;
    Some((
        w0 * values[j] + w1 * values[j + 1] + w2 * values[j + 2] + w3 * values[j + 3],
        j,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c1() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn gaussian(grid: Grid1D, x0: f64, sigma: f64, k0: f64) -> WaveField {
        let a = (2.0 * PI * sigma * sigma).powf(-0.25);
        WaveField::from_fn(grid, 0.0, |x| {
            Complex64::from_polar(a * (-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), k0 * x)
        })
        .unwrap()
    }

    #[test]
    fn grid_invariants() {
        let g = Grid1D::new(-1.0, 1.0, 21).unwrap();
        assert_eq!(g.dx(), 0.1);
        assert!((g.x(20) - 1.0).abs() < 1e-15);
        assert!(Grid1D::new(1.0, 0.0, 32).is_err());
        assert!(Grid1D::new(0.0, 1.0, 15).is_err());
        assert!(PhysicalConstants::new(0.0, 1.0).is_err());
        assert!(PhysicalConstants::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn norm_of_constant_and_zero() {
        let g = Grid1D::new(0.0, 1.0, 101).unwrap();
        let w = WaveField::from_fn(g, 0.0, |_| Complex64::new(1.0, 0.0)).unwrap();
        assert!((norm(&w) - 1.0).abs() < 1e-14);
        let zero = WaveField::from_fn(g, 0.0, |_| Complex64::new(0.0, 0.0));
        assert!(matches!(zero, Err(Error::InvalidField(_))));
        let mut psi = vec![Complex64::new(1.0, 0.0); 101];
        psi[7] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(WaveField::new(g, 0.0, psi), Err(Error::InvalidField(_))));
    }

    #[test]
    fn gaussian_norm() {
        let g = Grid1D::new(-10.0, 10.0, 1024).unwrap();
        let w = gaussian(g, 0.0, 1.0, 0.0);
        assert!((norm(&w) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn normalize_scales_and_is_idempotent() {
        let g = Grid1D::new(0.0, 1.0, 101).unwrap();
        let w = WaveField::from_fn(g, 0.0, |_| Complex64::new(2.0, 0.0)).unwrap();
        assert!((norm(&w) - 4.0).abs() < 1e-12);
        let u = normalize(&w).unwrap();
        assert!(u.psi().iter().all(|z| (z.re - 1.0).abs() < 1e-15 && z.im == 0.0));
        let again = normalize(&u).unwrap();
        for (a, b) in u.psi().iter().zip(again.psi()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn stencils_exact_on_low_order_polynomials() {
        let g = Grid1D::new(0.0, 1.0, 33).unwrap();
        let lin: Vec<f64> = g.coordinates();
        let quad: Vec<f64> = lin.iter().map(|x| x * x).collect();
        let dl = derivative(&lin, &g, DerivativeOrder::First).unwrap();
        let dq = derivative(&quad, &g, DerivativeOrder::Second).unwrap();
        for i in 1..32 {
            assert!((dl[i] - 1.0).abs() < 1e-12);
            assert!((dq[i] - 2.0).abs() < 1e-9);
        }
        // One-sided ends are second order, hence also exact here.
        assert!((dl[0] - 1.0).abs() < 1e-12 && (dl[32] - 1.0).abs() < 1e-12);
        assert!((dq[0] - 2.0).abs() < 1e-8 && (dq[32] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn stencil_rejects_tiny_arrays() {
        let r = stencil(&[1.0, 2.0, 3.0, 4.0], 0.1, DerivativeOrder::First);
        assert!(matches!(r, Err(Error::GridTooSmall { got: 4, need: 5 })));
        let g = Grid1D::new(0.0, 1.0, 16).unwrap();
        assert!(matches!(
            derivative(&[0.0; 10], &g, DerivativeOrder::First),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn stencil_second_order_convergence() {
        let err = |n: usize| {
            let g = Grid1D::new(0.0, 2.0 * PI, n).unwrap();
            let f: Vec<f64> = g.coordinates().iter().map(|x| x.sin()).collect();
            let d = derivative(&f, &g, DerivativeOrder::First).unwrap();
            (1..n - 1).map(|i| (d[i] - g.x(i).cos()).abs()).fold(0.0, f64::max)
        };
        let ratio = err(512) / err(1024);
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
        let err2 = |n: usize| {
            let g = Grid1D::new(0.0, 2.0 * PI, n).unwrap();
            let f: Vec<f64> = g.coordinates().iter().map(|x| x.sin()).collect();
            let d = derivative(&f, &g, DerivativeOrder::Second).unwrap();
            (0..n).map(|i| (d[i] + g.x(i).sin()).abs()).fold(0.0, f64::max)
        };
        let ratio2 = err2(512) / err2(1024);
        assert!((ratio2 - 4.0).abs() < 0.4, "ratio {ratio2}");
    }

    #[test]
    fn plane_wave_decomposition() {
        let g = Grid1D::new(0.0, 10.0, 2001).unwrap();
        let k = 5.0;
        let w = WaveField::from_fn(g, 0.0, |x| Complex64::from_polar(1.0, k * x)).unwrap();
        let m = decompose(&w, &c1(), default_rho_floor(&w)).unwrap();
        let dx = g.dx();
        for i in 1..g.n() - 1 {
            assert!((m.rho[i] - 1.0).abs() < 1e-12);
            // central difference of the unwrapped linear phase is exact
            // up to rounding of S ~ 50
            assert!((m.velocity[i] - k).abs() < 1e-9);
            assert!(m.quantum_potential[i].abs() < 1e-6);
            let s_expected = m.action[0] + k * (g.x(i) - g.x(0));
            assert!((m.action[i] - s_expected).abs() < 1e-9);
        }
        assert!(m.action[0].abs() <= PI);
        assert!(dx > 0.0);
    }

    fn gaussian_q(x: f64, x0: f64, sigma: f64, c: &PhysicalConstants) -> f64 {
        // R''/R for R ~ exp(-(x-x0)^2 / (4 sigma^2))
        let u = x - x0;
        let r2_over_r = u * u / (4.0 * sigma.powi(4)) - 1.0 / (2.0 * sigma * sigma);
        -c.hbar() * c.hbar() / (2.0 * c.mass()) * r2_over_r
    }

    #[test]
    fn gaussian_quantum_potential_matches_symbolic() {
        let c = PhysicalConstants::new(1.0, 1.0).unwrap();
        let err = |n: usize| {
            let g = Grid1D::new(-8.0, 8.0, n).unwrap();
            let w = gaussian(g, 0.3, 1.0, 0.0);
            let m = decompose(&w, &c, default_rho_floor(&w)).unwrap();
            let mut e: f64 = 0.0;
            for i in 1..n - 1 {
                if (g.x(i) - 0.3).abs() < 4.0 {
                    e = e.max((m.quantum_potential[i] - gaussian_q(g.x(i), 0.3, 1.0, &c)).abs());
                    assert!(m.velocity[i].abs() < 1e-9);
                }
            }
            e
        };
        let (e1, e2) = (err(401), err(801));
        assert!(e1 < 1e-3, "{e1}");
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn compose_examples() {
        let g = Grid1D::new(0.0, 1.0, 32).unwrap();
        let c = c1();
        let m = MadelungFields::from_density_action(g, 0.0, vec![1.0; 32], vec![0.0; 32], &c, 1e-12).unwrap();
        let w = compose(&m, &c).unwrap();
        assert!(w.psi().iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let m = MadelungFields::from_density_action(g, 0.0, vec![1.0; 32], vec![PI / 2.0; 32], &c, 1e-12).unwrap();
        let w = compose(&m, &c).unwrap();
        assert!(w.psi().iter().all(|z| (z - Complex64::new(0.0, 1.0)).norm() < 1e-15));
        let mut bad = m.clone();
        bad.rho[3] = -1.0;
        assert!(matches!(compose(&bad, &c), Err(Error::InvalidDensity(_))));
        assert!(MadelungFields::from_density_action(g, 0.0, bad.rho.clone(), vec![0.0; 32], &c, 1e-12).is_err());
    }

    #[test]
    fn masked_nodes_are_filled() {
        let g = Grid1D::new(-5.0, 5.0, 201).unwrap();
        // node at x = 0 exactly
        let w = WaveField::from_fn(g, 0.0, |x| Complex64::new(x * (-x * x).exp(), 0.0)).unwrap();
        let m = decompose(&w, &c1(), default_rho_floor(&w)).unwrap();
        assert!(m.node_mask[100]);
        assert!(m.quantum_potential.iter().all(|q| q.is_finite()));
        assert!(m.velocity.iter().all(|v| v.is_finite()));
        let all_zero_but_tiny = WaveField::from_fn(g, 0.0, |x| {
            Complex64::new(if x.abs() < 1e-9 { 1e-3 } else { 0.0 }, 0.0)
        })
        .unwrap();
        assert!(decompose(&all_zero_but_tiny, &c1(), 1.0).is_err());
    }

    #[test]
    fn cubic_interpolation_exact_on_cubics() {
        let g = Grid1D::new(-1.0, 2.0, 40).unwrap();
        let f: Vec<f64> = g.coordinates().iter().map(|x| x * x * x - 2.0 * x + 1.0).collect();
        for &x in &[-1.0, -0.97, 0.123, 1.5, 1.999, 2.0] {
            let (v, _) = interp_cubic(&f, &g, x).unwrap();
            assert!((v - (x * x * x - 2.0 * x + 1.0)).abs() < 1e-12, "{x}");
        }
        assert!(interp_cubic(&f, &g, 2.1).is_none());
        assert_eq!(interp_linear(&f, &g, -1.0), Some(f[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn compose_decompose_roundtrip(
            amps in proptest::collection::vec(0.2f64..1.5, 4),
            phases in proptest::collection::vec(-3.0f64..3.0, 4),
            offset in -10.0f64..10.0,
            hbar in 0.3f64..2.0,
        ) {
            let c = PhysicalConstants::new(hbar, 1.3).unwrap();
            let g = Grid1D::new(-3.0, 3.0, 301).unwrap();
            let xs = g.coordinates();
            let rho: Vec<f64> = xs.iter().map(|&x| {
                1.0 + amps[0] * 0.5 * (amps[1] * x).sin().powi(2) + 0.1 * amps[2] * (x + amps[3]).cos()
            }).collect();
            let s: Vec<f64> = xs.iter().map(|&x| {
                offset + phases[0] * x + phases[1] * x * x + phases[2] * (phases[3] * x).sin()
            }).collect();
            let fields = MadelungFields::from_density_action(g, 0.0, rho.clone(), s.clone(), &c, 1e-12).unwrap();
            let w = compose(&fields, &c).unwrap();
            let back = decompose(&w, &c, default_rho_floor(&w)).unwrap();
            let shift = back.action[0] - s[0];
            for i in 0..xs.len() {
                prop_assert!((back.rho[i] - rho[i]).abs() < 1e-8);
                prop_assert!((back.action[i] - shift - s[i]).abs() < 1e-8);
            }
            // the unwrapped steps never jump by pi*hbar or more
            for i in 1..xs.len() {
                prop_assert!((back.action[i] - back.action[i - 1]).abs() < PI * hbar);
            }
            // global shift is a multiple of 2 pi hbar
            let turns = shift / (2.0 * PI * hbar);
            prop_assert!((turns - turns.round()).abs() < 1e-9);
            let again = compose(&back, &c).unwrap();
            for (a, b) in again.psi().iter().zip(w.psi()) {
                prop_assert!((a - b).norm() < 1e-8);
            }
        }
    }
}
