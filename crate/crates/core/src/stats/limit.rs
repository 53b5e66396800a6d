use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{PI, SQRT_2};

use super::{sample_birkhoff_checkpoints, BirkhoffSampleSet, SamplingParams};
use crate::banach::GridFunction;
use crate::dynamics::System;
use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::transfer::interpolate;

pub const MIN_CLT_ORBITS: usize = 1000;
pub const MIN_WINDOW_SAMPLES: usize = 100;

/// Standard normal distribution function `𝔑`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density `𝔫`.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `sup_x |F_m(x) − F(x)|` for the empirical distribution of `samples`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m)
    })
}

/// `(S_n − nA)/(σ√n)`.
pub fn normalized(set: &BirkhoffSampleSet, a: f64, sigma2: f64) -> Vec<f64> {
    let scale = (sigma2 * set.n as f64).sqrt();
    let shift = a * set.n as f64;
    set.samples.iter().map(|s| (s - shift) / scale).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsPoint {
    pub n: usize,
    pub m: usize,
    pub ks: f64,
    /// Monte Carlo noise scale `1/√m`.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub trajectory: Vec<KsPoint>,
    /// KS distance at the largest `n`.
    pub ks: f64,
    /// Non-increasing along `n` within twice the noise.
    pub monotone: bool,
    /// Set when the distance fails to decrease, as for coboundaries.
    pub flagged: bool,
}

/// KS distances of normalized sums to `𝒩(0,1)` along the sample sets.
pub fn clt_test(sets: &[BirkhoffSampleSet], a: f64, sigma2: f64) -> Result<CltReport> {
    if !(sigma2 > 0.0) {
        return Err(Error::Degenerate { sigma2 });
    }
    if sets.is_empty() {
        return Err(Error::Precondition("no sample sets".into()));
    }
    let mut sets: Vec<&BirkhoffSampleSet> = sets.iter().collect();
    sets.sort_by_key(|s| s.n);
    let trajectory = sets
        .iter()
        .map(|s| {
            if s.m < MIN_CLT_ORBITS {
                return Err(Error::Precondition(format!("m = {} below {MIN_CLT_ORBITS}", s.m)));
            }
            Ok(KsPoint {
                n: s.n,
                m: s.m,
                ks: ks_distance(&normalized(s, a, sigma2), normal_cdf),
                noise: 1.0 / (s.m as f64).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = trajectory
        .windows(2)
        .all(|w| w[1].ks <= w[0].ks + 2.0 * w[0].noise.max(w[1].noise));
    Ok(CltReport {
        ks: trajectory.last().expect("non-empty").ks,
        monotone,
        flagged: !monotone,
        trajectory,
    })
}

/// KS distance of `m` exact standard normal draws.
pub fn normal_self_test(m: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    ks_distance(&draws, normal_cdf)
}

/// First-order Edgeworth model `𝔑(x) + P(x)𝔫(x)/√n` with
/// `P(x) = −κ₃/(6σ³)(x² − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeworthModel {
    pub sigma: f64,
    pub kappa3: f64,
    /// Coefficients `[p0, p1, p2]` of `P`.
    pub p: [f64; 3],
}

impl EdgeworthModel {
    pub fn new(sigma: f64, kappa3: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !kappa3.is_finite() {
            return Err(Error::Precondition(format!("invalid Edgeworth model σ = {sigma}, κ₃ = {kappa3}")));
        }
        let q = kappa3 / (6.0 * sigma.powi(3));
        Ok(EdgeworthModel {
            sigma,
            kappa3,
            p: [q, 0.0, -q],
        })
    }

    pub fn polynomial(&self, x: f64) -> f64 {
        self.p[0] + x * (self.p[1] + x * self.p[2])
    }
}

pub fn edgeworth_eval(model: &EdgeworthModel, x: f64, n: usize) -> f64 {
    normal_cdf(x) + model.polynomial(x) * normal_pdf(x) / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeworthReport {
    pub n: usize,
    pub m: usize,
    pub gaussian_sup: f64,
    pub edgeworth_sup: f64,
    pub improvement: f64,
    /// `1/√m`.
    pub noise_floor: f64,
}

/// Sup-errors of the Gaussian and Edgeworth distribution functions against
/// the empirical law of `(S_n − nA)/(σ√n)`.
pub fn edgeworth_test(set: &BirkhoffSampleSet, a: f64, model: &EdgeworthModel) -> Result<EdgeworthReport> {
    if set.n < 100 {
        return Err(Error::Precondition(format!("n = {} below 100", set.n)));
    }
    let z = normalized(set, a, model.sigma * model.sigma);
    let gaussian_sup = ks_distance(&z, normal_cdf);
    let edgeworth_sup = ks_distance(&z, |x| edgeworth_eval(model, x, set.n));
    Ok(EdgeworthReport {
        n: set.n,
        m: set.m,
        gaussian_sup,
        edgeworth_sup,
        improvement: gaussian_sup - edgeworth_sup,
        noise_floor: 1.0 / (set.m as f64).sqrt(),
    })
}

/// Compactly supported test function `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Bump {
    /// `height·max(0, 1 − |y|/half_width)`.
    Triangular { half_width: f64, height: f64 },
}

impl Bump {
    pub fn triangular(half_width: f64, height: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite() && height.is_finite() && height != 0.0) {
            return Err(Error::Precondition(format!(
                "bad triangular bump: half width {half_width}, height {height}"
            )));
        }
        Ok(Bump::Triangular { half_width, height })
    }

    pub fn value(&self, y: f64) -> f64 {
        match *self {
            Bump::Triangular { half_width, height } => height * (1.0 - y.abs() / half_width).max(0.0),
        }
    }

    pub fn integral(&self) -> f64 {
        match *self {
            Bump::Triangular { half_width, height } => height * half_width,
        }
    }

    pub fn half_width(&self) -> f64 {
        match *self {
            Bump::Triangular { half_width, .. } => half_width,
        }
    }
}

/// Default levels `ℓ = ρσ√n`.
pub const DEFAULT_RHO_GRID: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];

/// Optional test functions `U` (at `Tⁿx`) and `W` (at `x`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MlcltWeights {
    pub u: Option<GridFunction>,
    pub w: Option<GridFunction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlcltRow {
    pub n: usize,
    pub rho: f64,
    pub ell: f64,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
    pub deviation: f64,
    pub window_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlcltReport {
    pub rows: Vec<MlcltRow>,
    /// `(n, sup_ℓ |estimate − target|)`.
    pub sup_deviation: Vec<(usize, f64)>,
    pub integral: f64,
}

impl MlcltReport {
    pub fn decreasing(&self) -> bool {
        self.sup_deviation.windows(2).all(|w| w[1].1 < w[0].1)
    }
}

/// MLCLT estimates `σ√(2πn)·Ê[U(Tⁿx) V(S_n − nA − ℓ) W(x)]` from existing
/// sample sets, against `e^{−ℓ²/(2nσ²)}·Ê[U(Tⁿx)]·Ê[W(x)]·∫V`.
pub fn mlclt_from_sets(
    sets: &[BirkhoffSampleSet],
    a: f64,
    sigma2: f64,
    rho_grid: &[f64],
    bump: &Bump,
    weights: &MlcltWeights,
) -> Result<MlcltReport> {
    if !(sigma2 > 0.0) {
        return Err(Error::Degenerate { sigma2 });
    }
    let sigma = sigma2.sqrt();
    let weight = |g: &Option<GridFunction>, x: f64| g.as_ref().map_or(1.0, |g| interpolate(g, x).re);
    let mut rows = Vec::new();
    let mut sup_deviation = Vec::new();
    for set in sets {
        let n = set.n as f64;
        let u: Vec<f64> = set.ends.iter().map(|&x| weight(&weights.u, x)).collect();
        let w: Vec<f64> = set.starts.iter().map(|&x| weight(&weights.w, x)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let factor = mean(&u) * mean(&w);
        let scale = sigma * (2.0 * PI * n).sqrt();
        let mut sup = 0.0f64;
        for &rho in rho_grid {
            let ell = rho * sigma * n.sqrt();
            let mut inside = 0usize;
            let terms: Vec<f64> = set
                .samples
                .iter()
                .zip(u.iter().zip(&w))
                .map(|(s, (uu, ww))| {
                    let v = bump.value(s - n * a - ell);
                    if v != 0.0 {
                        inside += 1;
                    }
                    scale * v * uu * ww
                })
                .collect();
            if inside < MIN_WINDOW_SAMPLES {
                return Err(Error::Variance { effective: inside });
            }
            let est = mean(&terms);
            let var = terms.iter().map(|t| (t - est).powi(2)).sum::<f64>() / (terms.len() - 1) as f64;
            let target = (-ell * ell / (2.0 * n * sigma2)).exp() * factor * bump.integral();
            let deviation = (est - target).abs();
            sup = sup.max(deviation);
            rows.push(MlcltRow {
                n: set.n,
                rho,
                ell,
                estimate: est,
                se: (var / terms.len() as f64).sqrt(),
                target,
                deviation,
                window_samples: inside,
            });
        }
        sup_deviation.push((set.n, sup));
    }
    Ok(MlcltReport {
        rows,
        sup_deviation,
        integral: bump.integral(),
    })
}

/// Samples the orbits and runs [`mlclt_from_sets`].
#[allow(clippy::too_many_arguments)]
pub fn mlclt_test(
    system: &System,
    obs: &Observable,
    n_grid: &[usize],
    rho_grid: &[f64],
    bump: &Bump,
    m: usize,
    params: &SamplingParams,
    a: f64,
    sigma2: f64,
) -> Result<MlcltReport> {
    let sets = sample_birkhoff_checkpoints(system, obs, n_grid, m, params)?;
    mlclt_from_sets(&sets, a, sigma2, rho_grid, bump, &MlcltWeights::default())
}
