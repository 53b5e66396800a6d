use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ulam_matrix, TwistedOperatorMatrix};
use crate::banach::{self, GridFunction};
use crate::dynamics::PartitionedMap;
use crate::error::{Error, Result};
use crate::observable::{Envelope, Observable};

/// Linear interpolation of a midpoint grid, held constant past the outer
/// midpoints.
pub fn interpolate(f: &GridFunction, x: f64) -> Complex64 {
    let n = f.len();
    let t = x * n as f64 - 0.5;
    if t <= 0.0 {
        return f.values()[0];
    }
    let i = t.floor() as usize;
    if i >= n - 1 {
        return f.values()[n - 1];
    }
    let w = t - i as f64;
    f.values()[i] * (1.0 - w) + f.values()[i + 1] * w
}

/// `|∫(ψ̂f)·f* − ∫f·(f*∘ψ)|` with the `s = 0` Ulam matrix on `f`'s grid.
pub fn duality_check(map: &PartitionedMap, f: &GridFunction, f_star: &GridFunction) -> Result<f64> {
    let n = f.len();
    let m = ulam_matrix(map, &Observable::constant(0.0), 0.0, n)?;
    let mf = m.apply(f.values());
    let fs: Vec<Complex64> = (0..n).map(|i| interpolate(f_star, f.midpoint(i))).collect();
    let lhs: Complex64 = mf.iter().zip(&fs).map(|(a, b)| a * b).sum::<Complex64>() / n as f64;
    let rhs: Complex64 = (0..n)
        .map(|i| f.values()[i] * interpolate(f_star, map.apply_unchecked(f.midpoint(i))))
        .sum::<Complex64>()
        / n as f64;
    Ok((lhs - rhs).norm())
}

/// Draws from a piecewise-constant density given on a midpoint grid.
#[derive(Debug, Clone)]
pub struct GridSampler {
    cumulative: Vec<f64>,
}

impl GridSampler {
    pub fn new(density: &GridFunction) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(density.len());
        let mut acc = 0.0;
        for v in density.values() {
            if v.re < 0.0 || v.im.abs() > 1e-12 {
                return Err(Error::Precondition("density must be real and nonnegative".into()));
            }
            acc += v.re;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::Precondition("density has zero mass".into()));
        }
        cumulative.iter_mut().for_each(|c| *c /= acc);
        Ok(GridSampler { cumulative })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let n = self.cumulative.len();
        let u: f64 = rng.random();
        let cell = self.cumulative.partition_point(|&c| c <= u).min(n - 1);
        let w: f64 = rng.random();
        // open unit interval: never exactly 0 or 1
        let w = w.max(f64::EPSILON);
        (cell as f64 + w) / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharFnReport {
    pub monte_carlo: Complex64,
    pub standard_error: f64,
    pub operator: Complex64,
    pub residual: f64,
}

pub const CHAR_FN_MAX_N: usize = 20;

/// Monte Carlo `E_m[e^{isS_nχ}]` against `∫ M_{is}ⁿ ρ_m` on `ρ_m`'s grid.
#[allow(clippy::too_many_arguments)]
pub fn char_fn_check(
    map: &PartitionedMap,
    obs: &Observable,
    density: &GridFunction,
    s: f64,
    n: usize,
    orbits: usize,
    tolerance: f64,
    seed: u64,
) -> Result<CharFnReport> {
    if n == 0 || n > CHAR_FN_MAX_N {
        return Err(Error::Precondition(format!("n = {n} outside [1, {CHAR_FN_MAX_N}]")));
    }
    if orbits < 2 {
        return Err(Error::Precondition("need at least two orbits".into()));
    }
    let obs = obs.pulled_back()?;
    let m = ulam_matrix(map, &obs, s, density.len())?;
    let mass = density.integral();
    let iterate = m.apply_power(density, n)?;
    let operator = iterate.integral() / mass;

    let sampler = GridSampler::new(density)?;
    let chunk = 4096usize;
    let chunks = orbits.div_ceil(chunk);
    let sums = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Complex64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = chunk.min(orbits - c * chunk);
            let mut acc = Complex64::new(0.0, 0.0);
            for _ in 0..count {
                let mut x = sampler.sample(&mut rng);
                let mut total = 0.0;
                for _ in 0..n {
                    total += obs.observe(x)?;
                    x = map.apply_unchecked(x);
                }
                acc += Complex64::from_polar(1.0, s * total);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let monte_carlo = sums.iter().sum::<Complex64>() / orbits as f64;
    let variance = (1.0 - monte_carlo.norm_sqr()).max(0.0) * orbits as f64 / (orbits - 1) as f64;
    let standard_error = (variance / orbits as f64).sqrt();
    if standard_error > tolerance {
        return Err(Error::Sampling {
            achieved: standard_error,
            tolerance,
        });
    }
    Ok(CharFnReport {
        monte_carlo,
        standard_error,
        operator,
        residual: (monte_carlo - operator).norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpBoundReport {
    pub max_ratio: f64,
    /// `C_γ = k·η₋^{γ−1}`.
    pub bound: f64,
}

/// Largest `‖M_{is}h‖_γ / ‖h‖_γ` over the sample.
pub fn lp_bound_check(
    map: &PartitionedMap,
    obs: &Observable,
    s: f64,
    gamma: f64,
    samples: &[GridFunction],
) -> Result<LpBoundReport> {
    if !(gamma >= 1.0) {
        return Err(Error::Precondition(format!("γ = {gamma} < 1")));
    }
    let first = samples
        .first()
        .ok_or_else(|| Error::Precondition("no sample functions".into()))?;
    let m = ulam_matrix(map, obs, s, first.len())?;
    let mut max_ratio: f64 = 0.0;
    for h in samples {
        let norm = h.lp_norm(gamma);
        if norm == 0.0 {
            continue;
        }
        let mh = m.apply_power(h, 1)?;
        max_ratio = max_ratio.max(mh.lp_norm(gamma) / norm);
    }
    Ok(LpBoundReport {
        max_ratio,
        bound: map.branch_count() as f64 * map.eta_minus().powf(gamma - 1.0),
    })
}

/// A bounded piecewise-smooth test function: a few random Fourier modes
/// plus one jump, complex valued.
pub fn random_test_function(rng: &mut impl Rng, n: usize) -> Result<GridFunction> {
    let modes: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..12.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let jump_at: f64 = rng.random_range(0.1..0.9);
    let jump: f64 = rng.random_range(-1.0..1.0);
    let offset: f64 = rng.random_range(-1.0..1.0);
    let imag: f64 = rng.random_range(-0.5..0.5);
    GridFunction::from_fn(n, |x| {
        let smooth: f64 = modes.iter().map(|&(a, k, p)| a * (k * x + p).sin()).sum();
        let step = if x < jump_at { 0.0 } else { jump };
        Complex64::new(offset + smooth + step, imag * (3.0 * x).cos())
    })
}

pub fn random_test_functions(seed: u64, count: usize, n: usize) -> Result<Vec<GridFunction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_test_function(&mut rng, n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DflyConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Weak index `γ̄ ∈ (γ, 1/α)`; defaults to the midpoint.
    pub gamma_bar: Option<f64>,
    pub n_max: usize,
    pub epsilon0: f64,
}

impl DflyConfig {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        DflyConfig {
            alpha,
            beta,
            gamma,
            gamma_bar: None,
            n_max: 10,
            epsilon0: banach::DEFAULT_EPSILON0,
        }
    }

    fn resolved_gamma_bar(&self) -> f64 {
        self.gamma_bar.unwrap_or(if self.alpha > 0.0 {
            0.5 * (self.gamma + 1.0 / self.alpha)
        } else {
            2.0 * self.gamma
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DflyRow {
    pub s: f64,
    pub sample: usize,
    pub n: usize,
    /// `‖ψ̂ⁿ_{is}h‖_{α,β,γ}`.
    pub iterate_norm: f64,
    /// `‖h‖_{α,β,γ}`.
    pub strong: f64,
    /// `‖h‖_{γ̄}`.
    pub weak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DflyFit {
    pub c: f64,
    /// Smallest `C̃` with `‖ψ̂ⁿh‖ ≤ C̃(κⁿ‖h‖ + Cⁿ‖h‖_{γ̄})` over all rows.
    pub c_tilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DflyReport {
    pub kappa: f64,
    pub gamma_bar: f64,
    pub grid_n: usize,
    pub rows: Vec<DflyRow>,
    pub fits: Vec<DflyFit>,
    /// Some fit produced a finite constant.
    pub holds: bool,
}

impl DflyReport {
    pub fn c_tilde(&self, c: f64) -> Option<f64> {
        self.fits.iter().find(|f| f.c == c).map(|f| f.c_tilde)
    }
}

pub const DEFAULT_C_SWEEP: [f64; 4] = [1.0, 1.25, 1.5, 2.0];

fn check_dfly_hypotheses(map: &PartitionedMap, obs: &Observable, cfg: &DflyConfig) -> Result<f64> {
    let kappa = map.eta_plus().powf(cfg.alpha) / map.eta_minus().powf(cfg.beta);
    if kappa >= 1.0 {
        return Err(Error::Hypothesis(format!("κ = η₊^α/η₋^β = {kappa} ≥ 1")));
    }
    let mut beta_cap = 0.5f64.min(map.theta());
    if let Ok(Envelope::Interval { b, .. }) = obs.envelope_exponents() {
        beta_cap = beta_cap.min(1.0 / b);
    }
    if !(cfg.alpha >= 0.0 && cfg.alpha < cfg.beta && cfg.beta < beta_cap) {
        return Err(Error::Hypothesis(format!(
            "need 0 ≤ α < β < {beta_cap}, got α = {}, β = {}",
            cfg.alpha, cfg.beta
        )));
    }
    if cfg.alpha > 0.0 && cfg.gamma >= 1.0 / cfg.alpha || cfg.gamma < 1.0 {
        return Err(Error::Hypothesis(format!("γ = {} outside [1, 1/α)", cfg.gamma)));
    }
    let gb = cfg.resolved_gamma_bar();
    if !(gb > cfg.gamma) || (cfg.alpha > 0.0 && gb >= 1.0 / cfg.alpha) {
        return Err(Error::Hypothesis(format!("γ̄ = {gb} outside (γ, 1/α)")));
    }
    Ok(kappa)
}

/// Numerical DFLY sweep: norms of `ψ̂ⁿ_{is}h` for every sample, `s` and
/// `n ≤ n_max`, with the best `C̃` for each `C` in `c_sweep`.
pub fn dfly_check(
    map: &PartitionedMap,
    obs: &Observable,
    cfg: &DflyConfig,
    s_values: &[f64],
    samples: &[GridFunction],
    c_sweep: &[f64],
) -> Result<DflyReport> {
    let kappa = check_dfly_hypotheses(map, obs, cfg)?;
    let gamma_bar = cfg.resolved_gamma_bar();
    let grid_n = samples
        .first()
        .ok_or_else(|| Error::Precondition("no sample functions".into()))?
        .len();
    let (alpha, beta, gamma, eps0) = (cfg.alpha, cfg.beta, cfg.gamma, cfg.epsilon0);
    let matrices = s_values
        .iter()
        .map(|&s| ulam_matrix(map, obs, s, grid_n))
        .collect::<Result<Vec<TwistedOperatorMatrix>>>()?;
    let jobs: Vec<(usize, usize)> = (0..matrices.len())
        .flat_map(|a| (0..samples.len()).map(move |b| (a, b)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(si, hi)| -> Result<Vec<DflyRow>> {
            let h = &samples[hi];
            let strong = banach::norm(h, alpha, beta, gamma, eps0)?;
            let weak = h.lp_norm(gamma_bar);
            let mut rows = Vec::with_capacity(cfg.n_max);
            let mut v = h.clone();
            for n in 1..=cfg.n_max {
                v = matrices[si].apply_power(&v, 1)?;
                rows.push(DflyRow {
                    s: matrices[si].s,
                    sample: hi,
                    n,
                    iterate_norm: banach::norm(&v, alpha, beta, gamma, eps0)?,
                    strong,
                    weak,
                });
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let fits: Vec<DflyFit> = c_sweep
        .iter()
        .map(|&c| DflyFit {
            c,
            c_tilde: rows
                .iter()
                .map(|r| {
                    let denom = kappa.powi(r.n as i32) * r.strong + c.powi(r.n as i32) * r.weak;
                    if denom > 0.0 {
                        r.iterate_norm / denom
                    } else if r.iterate_norm == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max),
        })
        .collect();
    Ok(DflyReport {
        kappa,
        gamma_bar,
        grid_n,
        holds: fits.iter().any(|f| f.c_tilde.is_finite()),
        rows,
        fits,
    })
}
