//! Grid realisation of the weighted oscillation spaces: the damping
//! `R_α f = x^α(1−x)^α f`, oscillations over ε-balls, the seminorm
//! `|f|_{α,β}`, the norm `‖f‖_{α,β,γ} = ‖f‖_γ + |f|_{α,β}` and the checkers
//! for the hypotheses of the limit theorems.

mod conditions;
mod rbar;

pub use conditions::*;
pub use rbar::{hoelder_report, rbar, HoelderReport};

use std::collections::VecDeque;
use std::ops::{Add, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observable::Observable;

pub const MIN_GRID: usize = 16;
pub const DEFAULT_GRID: usize = 4096;
pub const DEFAULT_EPSILON0: f64 = 0.1;
pub const DEFAULT_EPSILON_POINTS: usize = 40;
/// Growth factor per grid doubling that flags a divergent norm.
pub const DIVERGENCE_RATIO: f64 = 2.0;

/// Complex values at the midpoints `x_i = (i+½)/N` of `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.len() < MIN_GRID {
            return Err(Error::Precondition(format!(
                "grid of {} points, need at least {MIN_GRID}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Precondition(format!("non-finite grid value at index {i}")));
        }
        Ok(GridFunction { values })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new((0..n).map(|i| f(midpoint(i, n))).collect())
    }

    pub fn from_real_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(n, |x| Complex64::new(f(x), 0.0))
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::from_real_fn(n, |_| c)
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::constant(n, 0.0)
    }

    /// Samples `obs` at the midpoints (never at `0` or `1`).
    pub fn from_observable(obs: &Observable, n: usize) -> Result<Self> {
        let values = (0..n)
            .map(|i| obs.observe(midpoint(i, n)).map(|v| Complex64::new(v, 0.0)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }

    /// Samples `R_α obs`, combining the powers analytically when possible.
    pub fn from_damped_observable(obs: &Observable, alpha: f64, n: usize) -> Result<Self> {
        let values = (0..n)
            .map(|i| obs.damped(alpha, midpoint(i, n)).map(|v| Complex64::new(v, 0.0)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        midpoint(i, self.len())
    }

    /// Midpoint-rule integral over `[0,1]`.
    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.len() as f64
    }

    /// `(∫|f|^γ)^{1/γ}` by the midpoint rule; `γ = ∞` gives the max.
    pub fn lp_norm(&self, gamma: f64) -> f64 {
        if gamma.is_infinite() {
            return self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        }
        let s: f64 = self.values.iter().map(|v| v.norm().powf(gamma)).sum();
        (s / self.len() as f64).powf(1.0 / gamma)
    }

    pub fn scale(&self, c: Complex64) -> GridFunction {
        GridFunction {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64, Complex64) -> Complex64) -> GridFunction {
        let n = self.len();
        GridFunction {
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| f(midpoint(i, n), v))
                .collect(),
        }
    }

    /// Half-resolution grid by averaging neighbouring pairs.
    pub fn coarsen(&self) -> Result<GridFunction> {
        GridFunction::new(
            self.values
                .chunks_exact(2)
                .map(|p| (p[0] + p[1]) * 0.5)
                .collect(),
        )
    }

    fn check_same_grid(&self, other: &GridFunction) {
        assert_eq!(self.len(), other.len(), "grid sizes differ");
    }
}

impl Add for &GridFunction {
    type Output = GridFunction;
    fn add(self, rhs: &GridFunction) -> GridFunction {
        self.check_same_grid(rhs);
        GridFunction {
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Mul for &GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: &GridFunction) -> GridFunction {
        self.check_same_grid(rhs);
        GridFunction {
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a * b).collect(),
        }
    }
}

#[inline]
pub fn midpoint(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// `R_α f` on the grid; non-finite inputs are mapped to `0`.
pub fn damp(f: &GridFunction, alpha: f64) -> GridFunction {
    let n = f.len();
    GridFunction {
        values: f
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Complex64::new(0.0, 0.0);
                }
                let x = midpoint(i, n);
                v * (x * (1.0 - x)).powf(alpha)
            })
            .collect(),
    }
}

/// `osc(ℜf, S) + osc(ℑf, S)` over the grid points in `window = [lo, hi]`;
/// zero when no grid point falls inside.
pub fn osc(f: &GridFunction, window: (f64, f64)) -> f64 {
    let (lo, hi) = window;
    let n = f.len();
    let mut re = (f64::INFINITY, f64::NEG_INFINITY);
    let mut im = (f64::INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for (i, v) in f.values.iter().enumerate() {
        let x = midpoint(i, n);
        if x >= lo && x <= hi {
            any = true;
            re = (re.0.min(v.re), re.1.max(v.re));
            im = (im.0.min(v.im), im.1.max(v.im));
        }
    }
    if !any {
        return 0.0;
    }
    (re.1 - re.0) + (im.1 - im.0)
}

/// Result of a seminorm evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormEstimate {
    pub value: f64,
    pub argmax_epsilon: f64,
    pub epsilon_grid: Vec<f64>,
    pub grid_n: usize,
    /// Relative change below 1% against the half-resolution grid.
    pub converged: bool,
}

/// Radii `r/N` for log-spaced integers `r` between 2 and `⌊ε₀N⌋`.
pub fn epsilon_grid(n: usize, epsilon0: f64, points: usize) -> Vec<usize> {
    let r_max = (epsilon0 * n as f64 + 1e-9).floor() as usize;
    let r_min = 2usize;
    if r_max < r_min {
        return Vec::new();
    }
    let mut radii: Vec<usize> = (0..points)
        .map(|k| {
            let f = if points == 1 { 1.0 } else { k as f64 / (points - 1) as f64 };
            ((r_min as f64).ln() + f * ((r_max as f64).ln() - (r_min as f64).ln()))
                .exp()
                .round() as usize
        })
        .collect();
    radii.push(r_max);
    radii.sort_unstable();
    radii.dedup();
    radii
}

/// `∫ osc(g, B_{r/N}(x)) dx` for the already damped grid `g`, via monotone
/// deques for the sliding max/min of both components.
pub fn integrated_oscillation(g: &[Complex64], radius: usize) -> f64 {
    let n = g.len();
    let mut total = 0.0;
    let mut deques: [VecDeque<usize>; 4] = Default::default();
    let key = |k: usize, v: &Complex64| -> f64 {
        match k {
            0 => v.re,
            1 => -v.re,
            2 => v.im,
            _ => -v.im,
        }
    };
    let mut next = 0usize;
    for i in 0..n {
        let right = (i + radius).min(n - 1);
        while next <= right {
            for (k, dq) in deques.iter_mut().enumerate() {
                let kv = key(k, &g[next]);
                while let Some(&back) = dq.back() {
                    if key(k, &g[back]) <= kv {
                        dq.pop_back();
                    } else {
                        break;
                    }
                }
                dq.push_back(next);
            }
            next += 1;
        }
        let left = i.saturating_sub(radius);
        for dq in deques.iter_mut() {
            while let Some(&front) = dq.front() {
                if front < left {
                    dq.pop_front();
                } else {
                    break;
                }
            }
        }
        let max_re = g[deques[0][0]].re;
        let min_re = g[deques[1][0]].re;
        let max_im = g[deques[2][0]].im;
        let min_im = g[deques[3][0]].im;
        total += (max_re - min_re) + (max_im - min_im);
    }
    total / n as f64
}

/// `sup_r (r/N)^{−β} ∫ osc(g, B_{r/N})` for a damped grid; returns (value, argmax ε, ε grid).
fn damped_seminorm(g: &[Complex64], beta: f64, epsilon0: f64) -> Result<(f64, f64, Vec<f64>)> {
    let n = g.len();
    let radii = epsilon_grid(n, epsilon0, DEFAULT_EPSILON_POINTS);
    if radii.is_empty() {
        return Err(Error::Resolution(format!(
            "ε₀ = {epsilon0} is finer than two cells of the N = {n} grid"
        )));
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut eps_grid = Vec::with_capacity(radii.len());
    for &r in &radii {
        let eps = r as f64 / n as f64;
        eps_grid.push(eps);
        let v = eps.powf(-beta) * integrated_oscillation(g, r);
        if v > best.0 {
            best = (v, eps);
        }
    }
    Ok((best.0.max(0.0), best.1, eps_grid))
}

fn check_seminorm_indices(alpha: f64, beta: f64, epsilon0: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Precondition(format!("α = {alpha} outside [0,1)")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Precondition(format!("β = {beta} outside (0,1]")));
    }
    if !(epsilon0 > 0.0 && epsilon0 < 0.25) {
        return Err(Error::Precondition(format!("ε₀ = {epsilon0} outside (0,1/4)")));
    }
    Ok(())
}

/// `|f|_{α,β}` over the default log-spaced ε grid in `[2/N, ε₀]`.
pub fn seminorm(f: &GridFunction, alpha: f64, beta: f64, epsilon0: f64) -> Result<SeminormEstimate> {
    check_seminorm_indices(alpha, beta, epsilon0)?;
    seminorm_any_alpha(f, alpha, beta, epsilon0)
}

fn seminorm_any_alpha(f: &GridFunction, alpha: f64, beta: f64, epsilon0: f64) -> Result<SeminormEstimate> {
    let g = damp(f, alpha);
    let (value, argmax, epsilon_grid) = damped_seminorm(g.values(), beta, epsilon0)?;
    let converged = match f.coarsen().map(|c| damp(&c, alpha)) {
        Ok(coarse) => match damped_seminorm(coarse.values(), beta, epsilon0) {
            Ok((coarse_value, _, _)) => (value - coarse_value).abs() <= 0.01 * value.abs().max(1e-300),
            Err(_) => false,
        },
        Err(_) => false,
    };
    Ok(SeminormEstimate {
        value,
        argmax_epsilon: argmax,
        epsilon_grid,
        grid_n: f.len(),
        converged,
    })
}

/// Seminorm of an observable, damped analytically before gridding.
pub fn observable_seminorm(
    obs: &Observable,
    alpha: f64,
    beta: f64,
    epsilon0: f64,
    n: usize,
) -> Result<f64> {
    check_seminorm_indices(alpha, beta, epsilon0)?;
    let g = GridFunction::from_damped_observable(obs, alpha, n)?;
    Ok(damped_seminorm(g.values(), beta, epsilon0)?.0)
}

/// `‖obs‖_{α,β,γ}` on an `n`-point grid.
pub fn observable_norm(
    obs: &Observable,
    alpha: f64,
    beta: f64,
    gamma: f64,
    epsilon0: f64,
    n: usize,
) -> Result<f64> {
    let lp = GridFunction::from_observable(obs, n)?.lp_norm(gamma);
    Ok(lp + observable_seminorm(obs, alpha, beta, epsilon0, n)?)
}

/// Norm values of `obs` over successive grid doublings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub grids: Vec<usize>,
    pub values: Vec<f64>,
    /// Largest ratio between consecutive values.
    pub max_growth: f64,
    /// All consecutive values within ±10%.
    pub stable: bool,
    /// Every consecutive ratio at least `threshold`.
    pub diverges: bool,
}

pub fn norm_under_doubling(
    obs: &Observable,
    indices: (f64, f64, f64),
    epsilon0: f64,
    n0: usize,
    doublings: usize,
    threshold: f64,
) -> Result<DoublingReport> {
    let (alpha, beta, gamma) = indices;
    let grids: Vec<usize> = (0..=doublings).map(|k| n0 << k).collect();
    let values = grids
        .iter()
        .map(|&n| observable_norm(obs, alpha, beta, gamma, epsilon0, n))
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = values.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(DoublingReport {
        max_growth: ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        stable: ratios.iter().all(|r| (r - 1.0).abs() <= 0.1),
        diverges: ratios.iter().all(|&r| r >= threshold),
        grids,
        values,
    })
}

/// `‖f‖_{α,β,γ}`.
pub fn norm(f: &GridFunction, alpha: f64, beta: f64, gamma: f64, epsilon0: f64) -> Result<f64> {
    if !(gamma >= 1.0) {
        return Err(Error::Precondition(format!("γ = {gamma} < 1")));
    }
    Ok(f.lp_norm(gamma) + seminorm(f, alpha, beta, epsilon0)?.value)
}

fn norm_any_alpha(f: &GridFunction, alpha: f64, beta: f64, gamma: f64, epsilon0: f64) -> Result<f64> {
    if !(gamma >= 1.0) {
        return Err(Error::Precondition(format!("γ = {gamma} < 1")));
    }
    Ok(f.lp_norm(gamma) + seminorm_any_alpha(f, alpha, beta, epsilon0)?.value)
}

/// Index triple `(α, β, γ)` of a space `V_{α,β,γ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Indices {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Indices {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Indices { alpha, beta, gamma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductReport {
    pub product_norm: f64,
    pub norm_g: f64,
    pub norm_h: f64,
    /// `‖gh‖₃ / (‖g‖₁‖h‖₂)`, reported as `0` when the denominator vanishes.
    pub ratio: f64,
}

/// Ratio of the product norm to the product of norms.
pub fn product_norm_check(
    g: &GridFunction,
    h: &GridFunction,
    first: Indices,
    second: Indices,
    product: Indices,
    epsilon0: f64,
) -> Result<ProductReport> {
    if (product.alpha - (first.alpha + second.alpha)).abs() > 1e-12 {
        return Err(Error::Precondition("α₃ must equal α₁ + α₂".into()));
    }
    if product.beta > first.beta.min(second.beta) + 1e-12 {
        return Err(Error::Precondition("β₃ must not exceed min(β₁, β₂)".into()));
    }
    if 1.0 / product.gamma < 1.0 / first.gamma + 1.0 / second.gamma - 1e-12 {
        return Err(Error::Precondition("1/γ₃ must be at least 1/γ₁ + 1/γ₂".into()));
    }
    let norm_g = norm(g, first.alpha, first.beta, first.gamma, epsilon0)?;
    let norm_h = norm(h, second.alpha, second.beta, second.gamma, epsilon0)?;
    let gh = g * h;
    let product_norm = norm_any_alpha(&gh, product.alpha, product.beta, product.gamma, epsilon0)?;
    let denom = norm_g * norm_h;
    let ratio = if denom == 0.0 { 0.0 } else { product_norm / denom };
    Ok(ProductReport {
        product_norm,
        norm_g,
        norm_h,
        ratio,
    })
}
