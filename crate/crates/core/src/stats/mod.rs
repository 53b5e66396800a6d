//! Monte Carlo Birkhoff sums `S_n(f,T) = Σ_{k<n} f∘T^k`, their asymptotic
//! moments, and empirical checks of the CLT, the first-order Edgeworth
//! expansion and the mixing local limit theorem.

mod coboundary;
mod limit;
mod moments;

pub use coboundary::*;
pub use limit::*;
pub use moments::*;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{boolean_apply, BitTapeState, MapKind, PartitionedMap, System, MAX_FLOAT_ORBIT_DYADIC};
use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::transfer::{invariant_density, GridSampler};

/// Default ceiling on `n·m` observable evaluations per sampling call.
pub const DEFAULT_BUDGET: u64 = 20_000_000_000;
pub const MIN_ORBITS: usize = 100;
pub const DEFAULT_ULAM_CELLS: usize = 1024;
/// Rejected share above which a tail-bias warning is attached.
pub const TAIL_WARN_SHARE: f64 = 0.01;
/// Rejected share above which sampling fails.
pub const TAIL_FAIL_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum InitMeasure {
    #[serde(rename = "lebesgue-on-I")]
    LebesgueOnI,
    /// Starts drawn from the Ulam invariant density on `cells` cells.
    #[serde(rename = "invariant-ulam")]
    InvariantUlam { cells: usize },
    #[serde(rename = "cauchy-on-R")]
    CauchyOnR,
    #[serde(rename = "point-mass")]
    PointMass { x: f64 },
}

impl InitMeasure {
    pub fn tag(&self) -> &'static str {
        match self {
            InitMeasure::LebesgueOnI => "lebesgue-on-I",
            InitMeasure::InvariantUlam { .. } => "invariant-ulam",
            InitMeasure::CauchyOnR => "cauchy-on-R",
            InitMeasure::PointMass { .. } => "point-mass",
        }
    }

    /// The stationary law of `system`.
    pub fn stationary(system: &System) -> Self {
        match system {
            System::Boolean(_) => InitMeasure::CauchyOnR,
            System::Interval(map) if map.kind() == MapKind::Doubling => InitMeasure::LebesgueOnI,
            System::Interval(_) => InitMeasure::InvariantUlam { cells: DEFAULT_ULAM_CELLS },
        }
    }
}

/// `m` independent Birkhoff sums of length `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffSampleSet {
    pub n: usize,
    pub m: usize,
    pub samples: Vec<f64>,
    /// Orbit start `x` and end point `Tⁿx` for each sample.
    pub starts: Vec<f64>,
    pub ends: Vec<f64>,
    pub init_measure: InitMeasure,
    pub seed: u64,
    pub rejected_draws: u64,
    pub warnings: Vec<String>,
}

impl BirkhoffSampleSet {
    pub fn mean(&self) -> f64 {
        neumaier_sum(self.samples.iter().copied()) / self.m as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        neumaier_sum(self.samples.iter().map(|s| (s - mean).powi(2))) / (self.m - 1) as f64
    }
}

/// Compensated summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sampling parameters shared by every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub init: InitMeasure,
    pub seed: u64,
    pub budget: u64,
}

impl SamplingParams {
    pub fn new(init: InitMeasure, seed: u64) -> Self {
        SamplingParams {
            init,
            seed,
            budget: DEFAULT_BUDGET,
        }
    }
}

enum Starter {
    Uniform,
    Grid(GridSampler),
    Cauchy(Cauchy<f64>),
    Point(f64),
}

impl Starter {
    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self {
            Starter::Uniform => {
                let u: f64 = rng.random();
                u.max(f64::EPSILON)
            }
            Starter::Grid(g) => g.sample(rng),
            Starter::Cauchy(c) => c.sample(rng),
            Starter::Point(x) => *x,
        }
    }
}

/// Endpoints and rejection count of one orbit.
pub(crate) struct OrbitEnds {
    pub start: f64,
    pub end: f64,
    pub rejected: u64,
}

/// Runs seeded orbits of a system and streams observable values.
pub(crate) struct OrbitRunner<'a> {
    system: &'a System,
    obs: &'a Observable,
    starter: Starter,
    bit_tape: bool,
    boolean: bool,
    seed: u64,
}

impl<'a> OrbitRunner<'a> {
    pub fn new(system: &'a System, obs: &'a Observable, init: InitMeasure, seed: u64, n: usize) -> Result<Self> {
        obs.check_compatible(system)?;
        let starter = match (system, init) {
            (System::Interval(_), InitMeasure::LebesgueOnI) => Starter::Uniform,
            (System::Interval(map), InitMeasure::InvariantUlam { cells }) => {
                if map.kind() == MapKind::Doubling {
                    // the doubling Ulam matrix fixes the constant vector exactly
                    Starter::Uniform
                } else {
                    Starter::Grid(GridSampler::new(&invariant_density(map, cells)?)?)
                }
            }
            (System::Boolean(_), InitMeasure::CauchyOnR) => {
                Starter::Cauchy(Cauchy::new(0.0, 1.0).expect("unit Cauchy law"))
            }
            (System::Interval(_), InitMeasure::PointMass { x }) => {
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::Domain(format!("start {x} outside [0,1]")));
                }
                Starter::Point(x)
            }
            (System::Boolean(_), InitMeasure::PointMass { x }) => {
                if !x.is_finite() {
                    return Err(Error::Domain(format!("non-finite start {x}")));
                }
                Starter::Point(x)
            }
            (s, i) => {
                return Err(Error::Precondition(format!(
                    "initial measure {} does not live on the {} system",
                    i.tag(),
                    match s {
                        System::Interval(_) => "interval",
                        System::Boolean(_) => "Boolean",
                    }
                )))
            }
        };
        let bit_tape = matches!(system, System::Interval(m) if m.kind() == MapKind::Doubling)
            && matches!(starter, Starter::Uniform);
        if let System::Interval(map) = system {
            if !bit_tape && map.collapses_dyadics() && n > MAX_FLOAT_ORBIT_DYADIC {
                return Err(Error::Precision(format!(
                    "float orbits of length {n} collapse for this map"
                )));
            }
        }
        Ok(OrbitRunner {
            system,
            obs,
            starter,
            bit_tape,
            boolean: matches!(system, System::Boolean(_)),
            seed,
        })
    }

    fn rng(&self, orbit: usize, lane: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2 * orbit as u64 + lane);
        rng
    }

    /// Observable value at `x`, `None` when `x` has to be redrawn.
    #[inline]
    fn value(&self, x: f64) -> Result<Option<f64>> {
        // 0 is a fixed point of the Boolean map of Cauchy measure zero
        if !x.is_finite() || (self.boolean && x == 0.0) {
            return Ok(None);
        }
        match self.obs.observe(x) {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            Ok(_) | Err(Error::TailRejected { .. }) | Err(Error::Singularity { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Visits `(k, T^k x, f(T^k x))` for `k < n`.
    pub fn run(&self, orbit: usize, n: usize, mut visit: impl FnMut(usize, f64, f64)) -> Result<OrbitEnds> {
        let mut aux = self.rng(orbit, 1);
        let mut rejected = 0u64;
        let max_rejections = n as u64 + 1000;
        if self.bit_tape {
            let mut tape = BitTapeState::from_rng(self.rng(orbit, 0));
            let start = tape.point();
            for k in 0..n {
                loop {
                    let x = tape.point();
                    match self.value(x)? {
                        Some(v) => {
                            visit(k, x, v);
                            break;
                        }
                        None => {
                            rejected += 1;
                            if rejected > max_rejections {
                                return Err(Error::TailBias { rejected, draws: k as u64 + 1 });
                            }
                            tape = BitTapeState::from_seed(aux.next_u64());
                        }
                    }
                }
                tape.shift();
            }
            return Ok(OrbitEnds {
                start,
                end: tape.point(),
                rejected,
            });
        }
        let mut x = self.starter.draw(&mut aux);
        let start = x;
        for k in 0..n {
            loop {
                match self.value(x)? {
                    Some(v) => {
                        visit(k, x, v);
                        break;
                    }
                    None => {
                        rejected += 1;
                        if rejected > max_rejections || matches!(self.starter, Starter::Point(_)) {
                            return Err(Error::TailBias { rejected, draws: k as u64 + 1 });
                        }
                        x = self.starter.draw(&mut aux);
                    }
                }
            }
            x = match self.system {
                System::Interval(map) => map.apply_unchecked(x),
                System::Boolean(_) => boolean_apply(x),
            };
        }
        Ok(OrbitEnds { start, end: x, rejected })
    }
}

fn check_budget(n: usize, m: usize, budget: u64) -> Result<()> {
    let requested = (n as u64).saturating_mul(m as u64);
    if requested > budget {
        return Err(Error::Budget { requested, budget });
    }
    Ok(())
}

pub(crate) fn tail_check(rejected: u64, draws: u64, warnings: &mut Vec<String>) -> Result<()> {
    let share = rejected as f64 / draws.max(1) as f64;
    if share > TAIL_FAIL_SHARE {
        return Err(Error::TailBias { rejected, draws });
    }
    if share > TAIL_WARN_SHARE {
        warnings.push(format!(
            "tail bias: {rejected} of {draws} evaluations redrawn ({:.2}%)",
            100.0 * share
        ));
    }
    Ok(())
}

/// Birkhoff sums of `m` orbits recorded at every length in `checkpoints`,
/// sharing the same orbits.
pub fn sample_birkhoff_checkpoints(
    system: &System,
    obs: &Observable,
    checkpoints: &[usize],
    m: usize,
    params: &SamplingParams,
) -> Result<Vec<BirkhoffSampleSet>> {
    sample_checkpoints_from(system, obs, checkpoints, m, params, 0)
}

/// As [`sample_birkhoff_checkpoints`], using orbit streams from
/// `first_orbit` on.
pub(crate) fn sample_checkpoints_from(
    system: &System,
    obs: &Observable,
    checkpoints: &[usize],
    m: usize,
    params: &SamplingParams,
    first_orbit: usize,
) -> Result<Vec<BirkhoffSampleSet>> {
    let mut cps = checkpoints.to_vec();
    cps.sort_unstable();
    cps.dedup();
    let n_max = *cps
        .last()
        .ok_or_else(|| Error::Precondition("no checkpoint lengths".into()))?;
    if cps[0] == 0 {
        return Err(Error::Precondition("Birkhoff sums need n ≥ 1".into()));
    }
    if m < MIN_ORBITS {
        return Err(Error::Precondition(format!("m = {m} below {MIN_ORBITS}")));
    }
    check_budget(n_max, m, params.budget)?;
    let runner = OrbitRunner::new(system, obs, params.init, params.seed, n_max)?;

    struct Orbit {
        sums: Vec<f64>,
        ends: Vec<f64>,
        start: f64,
        rejected: u64,
    }
    let orbits = (0..m)
        .into_par_iter()
        .map(|i| -> Result<Orbit> {
            let mut sums = Vec::with_capacity(cps.len());
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            let mut next = 0usize;
            let mut ends = Vec::with_capacity(cps.len());
            let e = runner.run(first_orbit + i, n_max, |k, x, v| {
                // T^n x for an earlier checkpoint n is the point visited at k = n
                if ends.len() < next && k == cps[ends.len()] {
                    ends.push(x);
                }
                let t = sum + v;
                if sum.abs() >= v.abs() {
                    comp += (sum - t) + v;
                } else {
                    comp += (v - t) + sum;
                }
                sum = t;
                if next < cps.len() && k + 1 == cps[next] {
                    sums.push(sum + comp);
                    next += 1;
                }
            })?;
            ends.push(e.end);
            Ok(Orbit {
                sums,
                ends,
                start: e.start,
                rejected: e.rejected,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rejected: u64 = orbits.iter().map(|o| o.rejected).sum();
    let mut warnings = Vec::new();
    tail_check(rejected, n_max as u64 * m as u64, &mut warnings)?;
    let starts: Vec<f64> = orbits.iter().map(|o| o.start).collect();
    let sets = cps
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            let samples: Vec<f64> = orbits.iter().map(|o| o.sums[c]).collect();
            if let Some(bad) = samples.iter().find(|s| !s.is_finite()) {
                return Err(Error::Precondition(format!("non-finite Birkhoff sum {bad}")));
            }
            Ok(BirkhoffSampleSet {
                n,
                m,
                samples,
                starts: starts.clone(),
                ends: orbits.iter().map(|o| o.ends[c]).collect(),
                init_measure: params.init,
                seed: params.seed,
                rejected_draws: rejected,
                warnings: warnings.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sets)
}

/// `m` Birkhoff sums of length `n`.
pub fn sample_birkhoff(
    system: &System,
    obs: &Observable,
    n: usize,
    m: usize,
    params: &SamplingParams,
) -> Result<BirkhoffSampleSet> {
    Ok(sample_birkhoff_checkpoints(system, obs, &[n], m, params)?
        .pop()
        .expect("one checkpoint"))
}

/// `Var(S_n)/n` with its standard error.
pub fn direct_variance(set: &BirkhoffSampleSet) -> Estimate {
    let mean = set.mean();
    let m = set.m as f64;
    let m2 = set.samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / m;
    let m4 = set.samples.iter().map(|s| (s - mean).powi(4)).sum::<f64>() / m;
    let var = m2 * m / (m - 1.0);
    Estimate {
        value: var / set.n as f64,
        se: ((m4 - m2 * m2).max(0.0) / m).sqrt() / set.n as f64,
    }
}

impl PartitionedMap {
    /// Convenience wrapper for interval systems.
    pub fn system(&self) -> System {
        System::Interval(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::BooleanMap;
    use crate::observable::{Domain, ZetaPart};

    fn doubling() -> System {
        PartitionedMap::doubling().system()
    }

    #[test]
    fn constant_sums() {
        let params = SamplingParams::new(InitMeasure::LebesgueOnI, 1);
        let set = sample_birkhoff(&doubling(), &Observable::constant(1.0), 10, 100, &params).unwrap();
        assert!(set.samples.iter().all(|&s| s == 10.0));
        let map = PartitionedMap::quadratic_branch(&[0.0, 0.5, 1.0], 0.3).unwrap();
        let p = SamplingParams::new(InitMeasure::InvariantUlam { cells: 256 }, 2);
        let set = sample_birkhoff(&map.system(), &Observable::constant(1.0), 10, 100, &p).unwrap();
        assert!(set.samples.iter().all(|&s| s == 10.0));
    }

    #[test]
    fn coboundary_telescopes() {
        let map = PartitionedMap::doubling();
        let params = SamplingParams::new(InitMeasure::LebesgueOnI, 3);
        let set = sample_birkhoff(&map.system(), &Observable::coboundary(map.clone()), 500, 200, &params).unwrap();
        for i in 0..set.m {
            assert!((set.samples[i] - (set.ends[i] - set.starts[i])).abs() < 1e-9);
            assert!(set.samples[i].abs() <= 1.0 + 1e-9);
        }
        assert!(direct_variance(&set).value < 1e-3);
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let params = SamplingParams::new(InitMeasure::LebesgueOnI, 42);
        let obs = Observable::osc(0.2);
        let a = sample_birkhoff(&doubling(), &obs, 300, 128, &params).unwrap();
        let b = sample_birkhoff(&doubling(), &obs, 300, 128, &params).unwrap();
        assert_eq!(a, b);
        let c = sample_birkhoff(&doubling(), &obs, 300, 128, &SamplingParams::new(InitMeasure::LebesgueOnI, 43)).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn checkpoints_share_orbits() {
        let params = SamplingParams::new(InitMeasure::LebesgueOnI, 5);
        let obs = Observable::affine(1.0, -0.5);
        let sets = sample_birkhoff_checkpoints(&doubling(), &obs, &[10, 100], 100, &params).unwrap();
        let single = sample_birkhoff(&doubling(), &obs, 10, 100, &params).unwrap();
        assert_eq!(sets[0].samples, single.samples);
        assert_eq!(sets[1].n, 100);
    }

    #[test]
    fn rejects_bad_requests() {
        let obs = Observable::osc(0.2);
        let mut params = SamplingParams::new(InitMeasure::LebesgueOnI, 1);
        params.budget = 1000;
        assert!(matches!(
            sample_birkhoff(&doubling(), &obs, 100, 100, &params),
            Err(Error::Budget { .. })
        ));
        let params = SamplingParams::new(InitMeasure::CauchyOnR, 1);
        assert!(sample_birkhoff(&doubling(), &obs, 10, 100, &params).is_err());
        let params = SamplingParams::new(InitMeasure::LebesgueOnI, 1);
        assert!(sample_birkhoff(&doubling(), &obs, 10, 10, &params).is_err());
        let zeta = Observable::zeta_part(ZetaPart::Re, 0.5, Domain::Real);
        assert!(sample_birkhoff(&doubling(), &zeta, 10, 100, &params).is_err());
        let pl = PartitionedMap::piecewise_linear(&[0.0, 0.5, 1.0], &[2.0, -2.0]).unwrap();
        assert!(matches!(
            sample_birkhoff(&pl.system(), &obs, 100, 100, &params),
            Err(Error::Precision(_))
        ));
    }

    #[test]
    fn boolean_tail_rejection_is_counted() {
        let system = System::Boolean(BooleanMap);
        let obs = Observable::zeta_part(ZetaPart::Re, 0.5, Domain::Real).with_t_max(3.0);
        let params = SamplingParams::new(InitMeasure::CauchyOnR, 9);
        // P(|X| > 3) ≈ 20% under the Cauchy law: rejection must fail loudly
        assert!(matches!(
            sample_birkhoff(&system, &obs, 20, 100, &params),
            Err(Error::TailBias { .. })
        ));
        let obs = Observable::zeta_part(ZetaPart::Re, 0.5, Domain::Real).with_t_max(200.0);
        let set = sample_birkhoff(&system, &obs, 20, 200, &params).unwrap();
        assert!(set.rejected_draws > 0);
        assert!(set.samples.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn neumaier_is_compensated() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_sum(v), 2.0);
    }
}
