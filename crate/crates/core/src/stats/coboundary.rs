use serde::{Deserialize, Serialize};

use crate::dynamics::{periodic_points, Cycle, MapKind, PartitionedMap, MAX_PERIOD};
use crate::error::{Error, Result};
use crate::observable::{CustomObservable, Observable, ObservableKind};

/// Cycles examined per period.
pub const CYCLE_LIMIT: usize = 4096;
pub const ARITHMETIC_TOLERANCE: f64 = 1e-6;
pub const MIN_DIFFERENCES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSum {
    pub period: u32,
    /// Smallest point of the cycle as `num/den`.
    pub first: (u64, u64),
    pub sum: f64,
    /// `sum/period − c`.
    pub deviation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cohomology {
    NotCohomologousToConstant,
    CohomologousToConstant,
    /// Cohomologous to `0`.
    CoboundaryConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "verdict")]
pub enum Arithmeticity {
    /// Same-period differences share an approximate common divisor.
    Arithmetic { divisor: f64 },
    NonArithmeticHeuristic,
    /// Fewer than [`MIN_DIFFERENCES`] non-zero differences.
    Inconclusive { differences: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoboundaryReport {
    pub observable: String,
    pub max_period: u32,
    pub candidate: f64,
    pub cycles: Vec<CycleSum>,
    /// Cycles skipped because they hit a singularity of the observable.
    pub skipped: usize,
    /// Sums were computed in exact rational arithmetic.
    pub exact: bool,
    pub tolerance: f64,
    pub cohomology: Cohomology,
    pub arithmeticity: Arithmeticity,
}

/// `Σ x` over a cycle as `num/(2^p − 1)`.
fn exact_point_sum(cycle: &Cycle) -> u128 {
    let den = (1u64 << cycle.period) - 1;
    cycle
        .points
        .iter()
        .map(|r| r.num as u128 * (den / r.den) as u128)
        .sum()
}

enum ExactKind {
    Affine { slope: f64, intercept: f64 },
    Zero,
}

fn exact_kind(obs: &Observable) -> Option<ExactKind> {
    match &obs.kind {
        ObservableKind::Custom(CustomObservable::Constant(c)) => Some(ExactKind::Affine { slope: 0.0, intercept: *c }),
        ObservableKind::Custom(CustomObservable::Affine { slope, intercept }) => Some(ExactKind::Affine {
            slope: *slope,
            intercept: *intercept,
        }),
        ObservableKind::Custom(CustomObservable::MapCoboundary(m)) if m.kind() == MapKind::Doubling => Some(ExactKind::Zero),
        _ => None,
    }
}

/// Real approximate gcd by the Euclidean algorithm with tolerance.
fn approx_gcd(mut a: f64, mut b: f64, tol: f64) -> f64 {
    if a < b {
        std::mem::swap(&mut a, &mut b);
    }
    while b > tol {
        let r = a % b;
        a = b;
        b = r.min(b - r);
    }
    a
}

fn arithmeticity(cycles: &[CycleSum], tol: f64) -> Arithmeticity {
    let mut diffs = Vec::new();
    for (i, c) in cycles.iter().enumerate() {
        for d in cycles[i + 1..].iter().filter(|d| d.period == c.period) {
            let delta = (d.sum - c.sum).abs();
            if delta > tol {
                diffs.push(delta);
            }
        }
    }
    if diffs.len() < MIN_DIFFERENCES {
        return Arithmeticity::Inconclusive { differences: diffs.len() };
    }
    let g = diffs.iter().fold(diffs[0], |g, &d| approx_gcd(g, d, tol));
    let fits = g > 100.0 * tol
        && diffs.iter().all(|&d| {
            let q = d / g;
            (q - q.round()).abs() * g <= tol * q.round().max(1.0)
        });
    if fits {
        Arithmeticity::Arithmetic { divisor: g }
    } else {
        Arithmeticity::NonArithmeticHeuristic
    }
}

/// Birkhoff sums of `obs` over the doubling-map cycles of period
/// `1..=max_period`, with cohomology and arithmeticity verdicts.
pub fn coboundary_heuristic(map: &PartitionedMap, obs: &Observable, max_period: u32) -> Result<CoboundaryReport> {
    map.require_doubling("the periodic-orbit heuristic").map_err(|_| {
        Error::Capability("the periodic-orbit heuristic needs exact cycles of the doubling map".into())
    })?;
    obs.check_compatible(&map.system())?;
    if max_period == 0 || max_period > MAX_PERIOD {
        return Err(Error::Precondition(format!("max period {max_period} outside 1..={MAX_PERIOD}")));
    }
    let exact = exact_kind(obs);
    let mut cycles = Vec::new();
    let mut skipped = 0usize;
    let mut sum_scale = 1.0f64;
    for p in 1..=max_period {
        for cycle in periodic_points(map, p, CYCLE_LIMIT)? {
            let sum = match &exact {
                Some(ExactKind::Zero) => 0.0,
                Some(ExactKind::Affine { slope, intercept }) => {
                    let den = ((1u64 << p) - 1) as f64;
                    slope * (exact_point_sum(&cycle) as f64 / den) + p as f64 * intercept
                }
                None => {
                    let values: Result<Vec<f64>> = cycle.points.iter().map(|r| obs.observe(r.to_f64())).collect();
                    match values {
                        Ok(v) if v.iter().all(|x| x.is_finite()) => v.iter().sum(),
                        Ok(_) | Err(Error::Singularity { .. }) | Err(Error::TailRejected { .. }) => {
                            skipped += 1;
                            continue;
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            sum_scale = sum_scale.max(sum.abs() / p as f64);
            let first = cycle.points[0];
            cycles.push(CycleSum {
                period: p,
                first: (first.num, first.den),
                sum,
                deviation: 0.0,
            });
        }
    }
    if cycles.is_empty() {
        return Err(Error::Precondition(format!("every cycle up to period {max_period} is singular")));
    }
    let tolerance = if exact.is_some() { 1e-12 } else { 1e-9 } * sum_scale;
    let candidate = cycles.iter().map(|c| c.sum / c.period as f64).sum::<f64>() / cycles.len() as f64;
    for c in cycles.iter_mut() {
        c.deviation = c.sum / c.period as f64 - candidate;
    }
    let spread = cycles.iter().map(|c| c.deviation.abs()).fold(0.0, f64::max);
    let cohomology = if spread > tolerance {
        Cohomology::NotCohomologousToConstant
    } else if candidate.abs() <= tolerance {
        Cohomology::CoboundaryConsistent
    } else {
        Cohomology::CohomologousToConstant
    };
    Ok(CoboundaryReport {
        observable: obs.id(),
        max_period,
        candidate,
        arithmeticity: arithmeticity(&cycles, ARITHMETIC_TOLERANCE),
        cycles,
        skipped,
        exact: exact.is_some(),
        tolerance,
        cohomology,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_cycles() {
        let map = PartitionedMap::doubling();
        let r = coboundary_heuristic(&map, &Observable::affine(1.0, 0.0), 12).unwrap();
        assert!(r.exact);
        assert_eq!(r.cycles[0].sum, 0.0);
        let two = r.cycles.iter().find(|c| c.period == 2).unwrap();
        assert_eq!(two.sum, 1.0);
        assert_eq!(r.cohomology, Cohomology::NotCohomologousToConstant);
        // cycle sums of x count the ones in the binary word
        assert!(matches!(r.arithmeticity, Arithmeticity::Arithmetic { divisor } if (divisor - 1.0).abs() < 1e-9));
    }

    #[test]
    fn coboundary_and_constant() {
        let map = PartitionedMap::doubling();
        let r = coboundary_heuristic(&map, &Observable::coboundary(map.clone()), 10).unwrap();
        assert!(r.cycles.iter().all(|c| c.sum == 0.0));
        assert_eq!(r.cohomology, Cohomology::CoboundaryConsistent);
        let r = coboundary_heuristic(&map, &Observable::constant(0.7), 8).unwrap();
        assert_eq!(r.cohomology, Cohomology::CohomologousToConstant);
        assert!((r.candidate - 0.7).abs() < 1e-12);
    }

    #[test]
    fn osc_is_non_arithmetic() {
        let map = PartitionedMap::doubling();
        let r = coboundary_heuristic(&map, &Observable::osc(0.2), 10).unwrap();
        assert!(!r.exact);
        assert_eq!(r.skipped, 1);
        assert_eq!(r.cohomology, Cohomology::NotCohomologousToConstant);
        assert_eq!(r.arithmeticity, Arithmeticity::NonArithmeticHeuristic);
    }

    #[test]
    fn grid_observable_uses_float_sums() {
        let map = PartitionedMap::doubling();
        let g: Vec<f64> = (0..4096).map(|i| ((i as f64 + 0.5) / 4096.0).powi(2)).collect();
        let obs = Observable::grid(g);
        let r = coboundary_heuristic(&map, &obs, 6).unwrap();
        assert!(!r.exact);
        assert_eq!(r.cohomology, Cohomology::NotCohomologousToConstant);
    }

    #[test]
    fn non_doubling_is_a_capability_error() {
        let pl = PartitionedMap::piecewise_linear(&[0.0, 0.5, 1.0], &[2.0, -2.0]).unwrap();
        assert!(matches!(
            coboundary_heuristic(&pl, &Observable::affine(1.0, 0.0), 4),
            Err(Error::Capability(_))
        ));
    }
}
