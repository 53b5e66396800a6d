//! Full-branch expanding interval maps, the Boolean-type transformation
//! `x ↦ (x − 1/x)/2` on the real line and the cotangent conjugacy between
//! the latter and the doubling map.
//!
//! Orbits of the doubling map are produced on a lazily generated bit tape:
//! in binary floating point `2x mod 1` shifts one mantissa bit out per step
//! and every float orbit reaches `0` after at most 53 iterations.

use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the onto-at-breakpoints check.
const ONTO_TOL: f64 = 1e-12;
/// Tolerance for `ψ(ψ⁻¹(y)) = y`.
const INVERSE_TOL: f64 = 1e-10;
/// Longest float orbit accepted for maps that collapse dyadic rationals.
pub const MAX_FLOAT_ORBIT_DYADIC: usize = 40;
/// Upper bound on the period accepted by [`periodic_points`].
pub const MAX_PERIOD: u32 = 24;

/// Shape of one branch in its local coordinate `u ∈ [0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BranchShape {
    /// `g(u) = u`.
    Linear,
    /// `g(u) = (u + a u²)/(1 + a)` with `a > −½`.
    Quadratic { a: f64 },
}

impl BranchShape {
    fn g(&self, u: f64) -> f64 {
        match *self {
            BranchShape::Linear => u,
            BranchShape::Quadratic { a } => (u + a * u * u) / (1.0 + a),
        }
    }

    fn dg(&self, u: f64) -> f64 {
        match *self {
            BranchShape::Linear => 1.0,
            BranchShape::Quadratic { a } => (1.0 + 2.0 * a * u) / (1.0 + a),
        }
    }

    fn g_inv(&self, y: f64) -> f64 {
        match *self {
            BranchShape::Linear => y,
            BranchShape::Quadratic { a } => {
                // root of a u² + u − (1+a) y = 0 written without cancellation
                let rhs = (1.0 + a) * y;
                2.0 * rhs / (1.0 + (1.0 + 4.0 * a * rhs).sqrt())
            }
        }
    }

    fn dg_range(&self) -> (f64, f64) {
        let (d0, d1) = (self.dg(0.0), self.dg(1.0));
        (d0.min(d1), d0.max(d1))
    }
}

/// One full branch `ψ_{j+1}: [c_j, c_{j+1}] → [0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub lo: f64,
    pub hi: f64,
    pub increasing: bool,
    pub shape: BranchShape,
}

impl Branch {
    fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn apply(&self, x: f64) -> f64 {
        let u = (x - self.lo) / self.width();
        let v = self.shape.g(u);
        if self.increasing {
            v
        } else {
            1.0 - v
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let u = (x - self.lo) / self.width();
        let d = self.shape.dg(u) / self.width();
        if self.increasing {
            d
        } else {
            -d
        }
    }

    /// `ψ⁻¹_{j+1}: [0,1] → [c_j, c_{j+1}]`.
    pub fn inverse(&self, y: f64) -> f64 {
        let y = if self.increasing { y } else { 1.0 - y };
        let u = self.shape.g_inv(y.clamp(0.0, 1.0));
        (self.lo + self.width() * u).clamp(self.lo, self.hi)
    }

    /// Derivative of the inverse branch.
    pub fn inverse_derivative(&self, y: f64) -> f64 {
        1.0 / self.derivative(self.inverse(y))
    }
}

/// Which family a [`PartitionedMap`] was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapKind {
    Doubling,
    PiecewiseLinear,
    QuadraticBranch,
}

/// A full-branch piecewise-C² expanding map of `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedMap {
    kind: MapKind,
    breakpoints: Vec<f64>,
    branches: Vec<Branch>,
    eta_minus: f64,
    eta_plus: f64,
    theta: f64,
}

impl PartitionedMap {
    /// `ψ(x) = 2x mod 1`.
    pub fn doubling() -> Self {
        Self::piecewise_linear(&[0.0, 0.5, 1.0], &[2.0, 2.0])
            .map(|mut m| {
                m.kind = MapKind::Doubling;
                m
            })
            .expect("doubling map is valid")
    }

    /// Full-branch piecewise-linear map. Each slope must equal `±1/(c_{j+1} − c_j)`.
    pub fn piecewise_linear(breakpoints: &[f64], slopes: &[f64]) -> Result<Self> {
        check_breakpoints(breakpoints)?;
        if slopes.len() + 1 != breakpoints.len() {
            return Err(Error::Precondition(format!(
                "{} slopes for {} branches",
                slopes.len(),
                breakpoints.len() - 1
            )));
        }
        let mut branches = Vec::with_capacity(slopes.len());
        for (w, &slope) in breakpoints.windows(2).zip(slopes) {
            let width = w[1] - w[0];
            if ((slope.abs() * width) - 1.0).abs() > 1e-9 {
                return Err(Error::Precondition(format!(
                    "slope {slope} on [{}, {}] is not full-branch (expected ±{})",
                    w[0],
                    w[1],
                    1.0 / width
                )));
            }
            branches.push(Branch {
                lo: w[0],
                hi: w[1],
                increasing: slope > 0.0,
                shape: BranchShape::Linear,
            });
        }
        Self::from_branches(MapKind::PiecewiseLinear, breakpoints.to_vec(), branches)
    }

    /// Increasing full branches of shape `(u + a u²)/(1 + a)`; the invariant
    /// density is no longer uniform when `a ≠ 0`.
    pub fn quadratic_branch(breakpoints: &[f64], curvature: f64) -> Result<Self> {
        check_breakpoints(breakpoints)?;
        if curvature <= -0.5 || !curvature.is_finite() {
            return Err(Error::Precondition(format!(
                "curvature {curvature} must exceed -1/2"
            )));
        }
        let branches = breakpoints
            .windows(2)
            .map(|w| Branch {
                lo: w[0],
                hi: w[1],
                increasing: true,
                shape: BranchShape::Quadratic { a: curvature },
            })
            .collect();
        Self::from_branches(MapKind::QuadraticBranch, breakpoints.to_vec(), branches)
    }

    fn from_branches(kind: MapKind, breakpoints: Vec<f64>, branches: Vec<Branch>) -> Result<Self> {
        let mut eta_minus = f64::INFINITY;
        let mut eta_plus = 0.0f64;
        for b in &branches {
            let (lo, hi) = b.shape.dg_range();
            eta_minus = eta_minus.min(lo / b.width());
            eta_plus = eta_plus.max(hi / b.width());
        }
        let map = PartitionedMap {
            kind,
            breakpoints,
            branches,
            eta_minus,
            eta_plus,
            // C² branches have Lipschitz inverse derivatives
            theta: 1.0,
        };
        map.validate()?;
        Ok(map)
    }

    /// Checks the full-branch, expansion and inverse invariants on a grid.
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_minus > 1.0) {
            return Err(Error::Precondition(format!(
                "minimal expansion {} is not > 1",
                self.eta_minus
            )));
        }
        for (j, b) in self.branches.iter().enumerate() {
            let left = b.apply(b.lo);
            let right = b.apply(b.hi);
            let onto = |v: f64| v.abs() < ONTO_TOL || (v - 1.0).abs() < ONTO_TOL;
            if !onto(left) || !onto(right) || (left - right).abs() < 0.5 {
                return Err(Error::Precondition(format!("branch {j} is not onto [0,1]")));
            }
            for i in 0..=200 {
                let x = b.lo + b.width() * i as f64 / 200.0;
                let d = b.derivative(x).abs();
                if d < self.eta_minus - 1e-12 || d > self.eta_plus + 1e-12 {
                    return Err(Error::Precondition(format!(
                        "|ψ'| = {d} at {x} outside [{}, {}]",
                        self.eta_minus, self.eta_plus
                    )));
                }
                let y = i as f64 / 200.0;
                if (b.apply(b.inverse(y)) - y).abs() > INVERSE_TOL {
                    return Err(Error::Precondition(format!(
                        "inverse of branch {j} fails at y = {y}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Number of branches `k`.
    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn eta_minus(&self) -> f64 {
        self.eta_minus
    }

    pub fn eta_plus(&self) -> f64 {
        self.eta_plus
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// True when float orbits lose one bit per step and collapse onto `0`.
    pub fn collapses_dyadics(&self) -> bool {
        self.branches.iter().all(|b| {
            let slope = 1.0 / b.width();
            b.shape == BranchShape::Linear && slope.log2().fract() == 0.0
        })
    }

    /// Index of the branch used at `x`: right branch at interior breakpoints,
    /// left branch at `1`.
    pub fn branch_index(&self, x: f64) -> usize {
        let k = self.branches.len();
        // partition_point counts breakpoints c_1..c_{k-1} that are <= x
        let interior = &self.breakpoints[1..k];
        interior.partition_point(|&c| c <= x).min(k - 1)
    }

    /// `ψ(x)`, clamped to `[0,1]`.
    pub fn apply(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("non-finite point {x}")));
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("{x} outside [0,1]")));
        }
        Ok(self.apply_unchecked(x))
    }

    #[inline]
    pub(crate) fn apply_unchecked(&self, x: f64) -> f64 {
        self.branches[self.branch_index(x)].apply(x).clamp(0.0, 1.0)
    }

    /// `ψ'(x)` with the same breakpoint convention as [`apply`](Self::apply).
    pub fn derivative(&self, x: f64) -> f64 {
        self.branches[self.branch_index(x)].derivative(x)
    }

    /// Trajectory `(x0, ψx0, …, ψ^{n−1}x0)`.
    pub fn orbit(&self, start: OrbitStart, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Precondition("orbit length must be >= 1".into()));
        }
        match start {
            OrbitStart::Point(x0) => {
                if self.collapses_dyadics() && n > MAX_FLOAT_ORBIT_DYADIC {
                    return Err(Error::Precision(format!(
                        "float orbit of length {n} collapses for this map; use a bit tape"
                    )));
                }
                let mut x = self.apply(x0).map(|_| x0)?;
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    out.push(x);
                    x = self.apply_unchecked(x);
                }
                Ok(out)
            }
            OrbitStart::Rational(r) => {
                self.require_doubling("rational orbits")?;
                let mut out = Vec::with_capacity(n);
                let mut r = r;
                for _ in 0..n {
                    out.push(r.to_f64());
                    r = r.doubled_mod_one();
                }
                Ok(out)
            }
            OrbitStart::Tape(mut tape) => {
                self.require_doubling("bit-tape orbits")?;
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    out.push(tape.point());
                    tape.shift();
                }
                Ok(out)
            }
        }
    }

    pub(crate) fn require_doubling(&self, what: &str) -> Result<()> {
        if self.kind == MapKind::Doubling {
            Ok(())
        } else {
            Err(Error::Capability(format!(
                "{what} are only available for the doubling map"
            )))
        }
    }
}

fn check_breakpoints(c: &[f64]) -> Result<()> {
    if c.len() < 3 {
        return Err(Error::Precondition("need at least two branches".into()));
    }
    if c[0] != 0.0 || *c.last().unwrap() != 1.0 {
        return Err(Error::Precondition("breakpoints must start at 0 and end at 1".into()));
    }
    if c.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("breakpoints must be strictly increasing".into()));
    }
    Ok(())
}

/// Starting datum of an orbit.
#[derive(Debug, Clone)]
pub enum OrbitStart {
    Point(f64),
    Rational(Rational),
    Tape(BitTapeState),
}

/// Non-negative rational `num/den` in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rational {
    pub num: u64,
    pub den: u64,
}

impl Rational {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        let g = gcd(num, den);
        Rational {
            num: num / g,
            den: den / g,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `2r mod 1` with the left-branch convention at `1`.
    pub fn doubled_mod_one(self) -> Self {
        if self.num == self.den {
            return self;
        }
        let twice = 2 * self.num;
        let num = if twice >= self.den { twice - self.den } else { twice };
        Rational::new(num, self.den)
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

enum BitSource {
    Random(ChaCha8Rng),
    Cyclic { words: Vec<u64>, next: usize },
}

impl BitSource {
    fn next_word(&mut self) -> u64 {
        match self {
            BitSource::Random(rng) => rng.next_u64(),
            BitSource::Cyclic { words, next } => {
                let w = words[*next];
                *next = (*next + 1) % words.len();
                w
            }
        }
    }
}

impl Clone for BitSource {
    fn clone(&self) -> Self {
        match self {
            BitSource::Random(rng) => BitSource::Random(rng.clone()),
            BitSource::Cyclic { words, next } => BitSource::Cyclic {
                words: words.clone(),
                next: *next,
            },
        }
    }
}

impl std::fmt::Debug for BitSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BitSource::Random(_) => f.write_str("Random"),
            BitSource::Cyclic { words, .. } => write!(f, "Cyclic({} words)", words.len()),
        }
    }
}

/// Lazily generated stream of i.i.d. bits with a forward-only cursor.
///
/// The current orbit point is the number whose binary expansion is the tape
/// read from the cursor, truncated to 64 bits. Shifting the cursor by one is
/// exactly one step of the doubling map.
#[derive(Debug, Clone)]
pub struct BitTapeState {
    source: BitSource,
    window: u64,
    reserve: u64,
    reserve_bits: u32,
    cursor: u64,
}

impl BitTapeState {
    pub fn from_seed(seed: u64) -> Self {
        Self::from_rng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Tape drawn from an existing generator (used for per-orbit streams).
    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        Self::with_source(BitSource::Random(rng))
    }

    /// Deterministic tape repeating `words` (most significant bit first).
    pub fn from_words(words: Vec<u64>) -> Self {
        assert!(!words.is_empty(), "empty tape pattern");
        Self::with_source(BitSource::Cyclic { words, next: 0 })
    }

    fn with_source(mut source: BitSource) -> Self {
        let window = source.next_word();
        let reserve = source.next_word();
        BitTapeState {
            source,
            window,
            reserve,
            reserve_bits: 64,
            cursor: 0,
        }
    }

    /// Current point. The 53 leading bits are kept and the point is placed at
    /// the centre of its 2⁻⁵³ cell so that `0` and `1` never occur.
    #[inline]
    pub fn point(&self) -> f64 {
        ((self.window >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Advance the cursor by one bit (one doubling step).
    #[inline]
    pub fn shift(&mut self) {
        self.window = (self.window << 1) | (self.reserve >> 63);
        self.reserve <<= 1;
        self.reserve_bits -= 1;
        if self.reserve_bits == 0 {
            self.reserve = self.source.next_word();
            self.reserve_bits = 64;
        }
        self.cursor += 1;
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }
}

/// A cycle of the doubling map given by exact rationals, starting at its
/// smallest element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub period: u32,
    pub points: Vec<Rational>,
}

/// Up to `limit` distinct cycles of minimal period `period`.
pub fn periodic_points(map: &PartitionedMap, period: u32, limit: usize) -> Result<Vec<Cycle>> {
    map.require_doubling("exact periodic orbits")?;
    if period == 0 || period > MAX_PERIOD {
        return Err(Error::Precondition(format!(
            "period {period} outside 1..={MAX_PERIOD}"
        )));
    }
    let den = (1u64 << period) - 1;
    let mut seen = vec![false; den as usize];
    let mut cycles = Vec::new();
    for p in 0..den {
        if cycles.len() >= limit {
            break;
        }
        if seen[p as usize] {
            continue;
        }
        let mut numerators = Vec::with_capacity(period as usize);
        let mut q = p;
        loop {
            seen[q as usize] = true;
            numerators.push(q);
            q = (2 * q) % den;
            if q == p {
                break;
            }
        }
        if numerators.len() == period as usize {
            cycles.push(Cycle {
                period,
                points: numerators.into_iter().map(|q| Rational::new(q, den)).collect(),
            });
        }
    }
    Ok(cycles)
}

/// `φ(x) = (x − 1/x)/2`, with `φ(0) = 0`.
#[inline]
pub fn boolean_apply(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        0.5 * (x - 1.0 / x)
    }
}

/// The Boolean-type transformation together with its invariant Cauchy law.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BooleanMap;

impl BooleanMap {
    pub fn apply(&self, x: f64) -> f64 {
        boolean_apply(x)
    }

    /// Density `1/(π(1+x²))` of the invariant measure.
    pub fn density(&self, x: f64) -> f64 {
        1.0 / (PI * (1.0 + x * x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        cauchy_cdf(x)
    }
}

pub fn cauchy_cdf(x: f64) -> f64 {
    0.5 + x.atan() / PI
}

/// `ξ(x) = cot(πx)` on `(0,1)`.
pub fn conjugacy_xi(x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Pole(format!("cot(πx) at x = {x}")));
    }
    Ok(xi_unchecked(x))
}

#[inline]
pub(crate) fn xi_unchecked(x: f64) -> f64 {
    // reflect into (0, 1/2] so the tangent argument stays accurate
    if x <= 0.5 {
        1.0 / (PI * x).tan()
    } else {
        -1.0 / (PI * (1.0 - x)).tan()
    }
}

/// `ξ⁻¹(y) = arccot(y)/π` with `arccot` valued in `(0, π)`.
pub fn conjugacy_xi_inv(y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::Domain(format!("non-finite y = {y}")));
    }
    Ok(1.0f64.atan2(y) / PI)
}

/// A dynamical system the samplers can iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum System {
    Interval(PartitionedMap),
    Boolean(BooleanMap),
}

/// Map descriptor as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapSpec {
    Doubling,
    PiecewiseLinear {
        breakpoints: Vec<f64>,
        slopes: Vec<f64>,
    },
    QuadraticBranch {
        breakpoints: Vec<f64>,
        curvature: f64,
    },
    Boolean,
}

impl MapSpec {
    /// Builds and validates the described system.
    pub fn build(&self) -> Result<System> {
        Ok(match self {
            MapSpec::Doubling => System::Interval(PartitionedMap::doubling()),
            MapSpec::PiecewiseLinear { breakpoints, slopes } => {
                System::Interval(PartitionedMap::piecewise_linear(breakpoints, slopes)?)
            }
            MapSpec::QuadraticBranch {
                breakpoints,
                curvature,
            } => System::Interval(PartitionedMap::quadratic_branch(breakpoints, *curvature)?),
            MapSpec::Boolean => System::Boolean(BooleanMap),
        })
    }
}
