use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{neumaier_sum, sample_checkpoints_from, tail_check, BirkhoffSampleSet, OrbitRunner, SamplingParams};
use crate::dynamics::System;
use crate::error::{Error, Result};
use crate::observable::{Envelope, Observable};

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Estimate { value, se }
    }

    /// Inverse-variance weighted combination.
    pub fn combine(&self, other: &Estimate) -> Estimate {
        if !(self.se > 0.0) {
            return *self;
        }
        if !(other.se > 0.0) {
            return *other;
        }
        let (w1, w2) = (self.se.powi(-2), other.se.powi(-2));
        Estimate {
            value: (w1 * self.value + w2 * other.value) / (w1 + w2),
            se: (w1 + w2).powf(-0.5),
        }
    }
}

pub const DEFAULT_K_MAX: usize = 200;
pub const PLATEAU_LAGS: usize = 3;
/// `σ²/ĉ_0` below which the variance counts as degenerate.
pub const DEGENERATE_RATIO: f64 = 0.01;

/// The geometric n-grid `2^7, …, 2^14` for the third-cumulant fit.
pub fn default_kappa3_grid() -> Vec<usize> {
    (7..=14).map(|p| 1usize << p).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentParams {
    /// Orbits used for the mean and the correlations.
    pub orbits: usize,
    pub orbit_len: usize,
    pub k_max: usize,
    /// Orbits used for the third cumulant; `0` skips it.
    pub kappa3_orbits: usize,
    pub kappa3_grid: Vec<usize>,
    pub sampling: SamplingParams,
}

impl MomentParams {
    pub fn new(sampling: SamplingParams) -> Self {
        MomentParams {
            orbits: 64,
            orbit_len: 1 << 15,
            k_max: DEFAULT_K_MAX,
            kappa3_orbits: 10_000,
            kappa3_grid: default_kappa3_grid(),
            sampling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    #[serde(rename = "A")]
    pub a: Estimate,
    pub sigma2: Estimate,
    pub kappa3: Option<Estimate>,
    /// First lag of the plateau: `σ² = ĉ_0 + 2Σ_{0<k<K} ĉ_k`.
    pub gk_truncation_k: usize,
    /// The geometric tail cross-estimate agrees with the plateau sum.
    pub gk_plateau_ok: bool,
    pub sigma2_geometric: Estimate,
    pub correlations: Vec<Estimate>,
    /// `σ²` is indistinguishable from zero.
    pub degenerate: bool,
    pub rejected_draws: u64,
    pub warnings: Vec<String>,
}

fn mean_se(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = neumaier_sum(values.iter().copied()) / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate::new(mean, (var / n).sqrt())
}

fn square_integrable(obs: &Observable) -> Result<()> {
    match obs.envelope_exponents() {
        Ok(Envelope::Interval { a, .. }) if a >= 0.5 => Err(Error::Precondition(format!(
            "{} is not square integrable (a = {a} ≥ 1/2)",
            obs.id()
        ))),
        Ok(Envelope::Real { u, .. }) if 2.0 * u >= 1.0 => Err(Error::Precondition(format!(
            "{} is not square integrable under the Cauchy law (2u = {} ≥ 1)",
            obs.id(),
            2.0 * u
        ))),
        _ => Ok(()),
    }
}

/// Asymptotic mean, Green–Kubo variance and third cumulant of `obs`.
pub fn estimate_moments(system: &System, obs: &Observable, params: &MomentParams) -> Result<MomentEstimates> {
    square_integrable(obs)?;
    let (r, l) = (params.orbits, params.orbit_len);
    if r < 2 || l <= params.k_max + PLATEAU_LAGS {
        return Err(Error::Precondition(format!(
            "need ≥ 2 orbits longer than k_max + {PLATEAU_LAGS} (got {r} × {l})"
        )));
    }
    let requested = (r as u64).saturating_mul(l as u64);
    if requested > params.sampling.budget {
        return Err(Error::Budget { requested, budget: params.sampling.budget });
    }
    let runner = OrbitRunner::new(system, obs, params.sampling.init, params.sampling.seed, l)?;
    let runs = (0..r)
        .into_par_iter()
        .map(|i| {
            let mut values = Vec::with_capacity(l);
            let ends = runner.run(i, l, |_, _, v| values.push(v))?;
            Ok((values, ends.rejected))
        })
        .collect::<Result<Vec<_>>>()?;
    let rejected: u64 = runs.iter().map(|(_, rej)| rej).sum();
    let mut warnings = Vec::new();
    tail_check(rejected, requested, &mut warnings)?;
    let orbits: Vec<Vec<f64>> = runs.into_iter().map(|(v, _)| v).collect();

    let orbit_means: Vec<f64> = orbits
        .iter()
        .map(|o| neumaier_sum(o.iter().copied()) / l as f64)
        .collect();
    let a = mean_se(&orbit_means);
    let centred: Vec<Vec<f64>> = orbits
        .into_par_iter()
        .map(|o| o.into_iter().map(|v| v - a.value).collect())
        .collect();

    let lag = |k: usize| -> Vec<f64> {
        centred
            .par_iter()
            .map(|o| {
                let s: f64 = o[..l - k].iter().zip(&o[k..]).map(|(x, y)| x * y).sum();
                s / (l - k) as f64
            })
            .collect()
    };

    // per-orbit correlations, computed lag by lag until the plateau
    let mut per_orbit: Vec<Vec<f64>> = Vec::new();
    let mut correlations: Vec<Estimate> = Vec::new();
    let mut plateau = None;
    let mut quiet = 0usize;
    for k in 0..=params.k_max + PLATEAU_LAGS - 1 {
        let c = lag(k);
        let est = mean_se(&c);
        per_orbit.push(c);
        correlations.push(est);
        if k == 0 {
            continue;
        }
        if est.value.abs() < 2.0 * est.se {
            quiet += 1;
            if quiet == PLATEAU_LAGS {
                plateau = Some(k + 1 - PLATEAU_LAGS);
                break;
            }
        } else {
            quiet = 0;
        }
    }
    let partial_sum = |kk: usize| correlations[0].value + 2.0 * correlations[1..kk].iter().map(|c| c.value).sum::<f64>();
    let Some(big_k) = plateau.filter(|&kk| kk <= params.k_max) else {
        let kk = correlations.len().min(params.k_max + 1);
        return Err(Error::Truncation {
            k_max: params.k_max,
            partial: partial_sum(kk),
        });
    };

    let per_orbit_sigma2: Vec<f64> = (0..r)
        .map(|i| per_orbit[0][i] + 2.0 * (1..big_k).map(|k| per_orbit[k][i]).sum::<f64>())
        .collect();
    let spread = mean_se(&per_orbit_sigma2);
    let raw = partial_sum(big_k);
    let se = spread.se.max(f64::MIN_POSITIVE);
    let sigma2 = Estimate::new(raw.max(0.0), se);
    let sigma2_geometric = geometric_cross_estimate(&correlations[..big_k], sigma2);
    let gk_plateau_ok = (sigma2_geometric.value - sigma2.value).abs() <= 2.0 * sigma2.se;
    if !gk_plateau_ok {
        warnings.push(format!(
            "geometric tail estimate {} disagrees with the plateau sum {}",
            sigma2_geometric.value, sigma2.value
        ));
    }
    // the quiet lags bound the truncation bias of the plateau sum
    let quiet_tail: f64 = 2.0 * correlations[big_k..].iter().map(|c| c.value.abs()).sum::<f64>();
    let degenerate = raw <= 3.0 * se + quiet_tail || raw <= DEGENERATE_RATIO * correlations[0].value.abs();

    let kappa3 = if params.kappa3_orbits == 0 {
        None
    } else {
        let sets = sample_checkpoints_from(
            system,
            obs,
            &params.kappa3_grid,
            params.kappa3_orbits,
            &params.sampling,
            r,
        )?;
        Some(kappa3_fit(&sets)?)
    };
    let se_a = a.se.max(f64::MIN_POSITIVE);
    Ok(MomentEstimates {
        a: Estimate::new(a.value, se_a),
        sigma2,
        kappa3,
        gk_truncation_k: big_k,
        gk_plateau_ok,
        sigma2_geometric,
        correlations,
        degenerate,
        rejected_draws: rejected,
        warnings,
    })
}

/// Adds a geometric tail `Σ_{k≥K} ĉ_{K−1} r^{k−K+1}` fitted by least squares
/// on `ĉ_{k+1} ≈ r ĉ_k`.
fn geometric_cross_estimate(head: &[Estimate], plateau: Estimate) -> Estimate {
    if head.len() < 3 {
        return plateau;
    }
    let (num, den) = head[1..].windows(2).fold((0.0, 0.0), |(n, d), w| {
        (n + w[0].value * w[1].value, d + w[0].value * w[0].value)
    });
    let ratio = if den > 0.0 { num / den } else { 0.0 };
    if !(ratio.abs() < 1.0) {
        return Estimate::new(f64::INFINITY, plateau.se);
    }
    let last = head[head.len() - 1].value;
    Estimate::new(plateau.value + 2.0 * last * ratio / (1.0 - ratio), plateau.se)
}

/// Unbiased third k-statistic with its approximate standard error.
pub fn third_cumulant(samples: &[f64]) -> Estimate {
    let m = samples.len() as f64;
    let mean = neumaier_sum(samples.iter().copied()) / m;
    let mut mu = [0.0f64; 7];
    for &s in samples {
        let d = s - mean;
        let mut p = 1.0;
        for slot in mu.iter_mut().skip(1) {
            p *= d;
            *slot += p;
        }
    }
    for slot in mu.iter_mut() {
        *slot /= m;
    }
    let k3 = m * m / ((m - 1.0) * (m - 2.0)) * mu[3];
    let var = (mu[6] - mu[3] * mu[3] - 6.0 * mu[4] * mu[2] + 9.0 * mu[2].powi(3)) / m;
    Estimate::new(k3, var.max(0.0).sqrt())
}

/// Weighted least-squares slope of `κ₃(S_n)` against `n`, with intercept.
pub fn kappa3_fit(sets: &[BirkhoffSampleSet]) -> Result<Estimate> {
    if sets.len() < 3 {
        return Err(Error::Precondition("κ₃ fit needs at least three n values".into()));
    }
    let points: Vec<(f64, Estimate)> = sets.iter().map(|s| (s.n as f64, third_cumulant(&s.samples))).collect();
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, e) in &points {
        let w = 1.0 / e.se.max(1e-300).powi(2);
        sw += w;
        sx += w * x;
        sy += w * e.value;
        sxx += w * x * x;
        sxy += w * x * e.value;
    }
    let det = sw * sxx - sx * sx;
    if !(det > 0.0) {
        return Err(Error::Precondition("degenerate κ₃ design".into()));
    }
    let slope = (sw * sxy - sx * sy) / det;
    Ok(Estimate::new(slope, (sw / det).sqrt().max(f64::MIN_POSITIVE)))
}

/// Pooled `Σ S_n/(n m)` with the standard error of the orbit average.
pub fn pooled_mean(set: &BirkhoffSampleSet) -> Estimate {
    let per: Vec<f64> = set.samples.iter().map(|s| s / set.n as f64).collect();
    let e = mean_se(&per);
    Estimate::new(e.value, e.se.max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PartitionedMap;
    use crate::stats::InitMeasure;

    fn quick(seed: u64) -> MomentParams {
        let mut p = MomentParams::new(SamplingParams::new(InitMeasure::LebesgueOnI, seed));
        p.orbits = 32;
        p.orbit_len = 1 << 14;
        p.kappa3_orbits = 0;
        p
    }

    #[test]
    fn identity_mean_is_half() {
        let sys = PartitionedMap::doubling().system();
        let m = estimate_moments(&sys, &Observable::affine(1.0, 0.0), &quick(1)).unwrap();
        assert!((m.a.value - 0.5).abs() < 4.0 * m.a.se, "{:?}", m.a);
        assert!(m.a.se < 0.002);
    }

    #[test]
    fn green_kubo_on_doubling() {
        let sys = PartitionedMap::doubling().system();
        let m = estimate_moments(&sys, &Observable::affine(1.0, -0.5), &quick(2)).unwrap();
        // Cov(x, 2^k x mod 1) = 2^{-k}/12
        for k in 0..6 {
            let exact = 0.5f64.powi(k as i32) / 12.0;
            assert!((m.correlations[k].value - exact).abs() < 5.0 * m.correlations[k].se + 1e-4);
        }
        assert!((m.sigma2.value - 0.25).abs() < 0.01, "{:?}", m.sigma2);
        assert!(m.gk_plateau_ok && !m.degenerate);
    }

    #[test]
    fn coboundary_is_degenerate() {
        let map = PartitionedMap::doubling();
        let m = estimate_moments(&map.system(), &Observable::coboundary(map.clone()), &quick(3)).unwrap();
        assert!(m.degenerate, "{:?}", m.sigma2);
    }

    #[test]
    fn third_cumulant_of_known_laws() {
        // exponential(1): κ₃ = 2
        let m = 200_000;
        let samples: Vec<f64> = (0..m).map(|i| -(1.0 - (i as f64 + 0.5) / m as f64).ln()).collect();
        let k = third_cumulant(&samples);
        assert!((k.value - 2.0).abs() < 0.02, "{k:?}");
        let sym: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64 - 0.5).collect();
        assert!(third_cumulant(&sym).value.abs() < 1e-12);
    }

    #[test]
    fn rejects_non_square_integrable() {
        let sys = PartitionedMap::doubling().system();
        assert!(matches!(
            estimate_moments(&sys, &Observable::osc(0.6), &quick(1)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn combine_weights_by_precision() {
        let c = Estimate::new(1.0, 1.0).combine(&Estimate::new(2.0, 1.0));
        assert!((c.value - 1.5).abs() < 1e-15 && (c.se - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
