//! Ulam discretisation of the twisted transfer operators
//! `ψ̂_{is} f = Σ_j e^{isχ∘ψ⁻¹_{j+1}} f∘ψ⁻¹_{j+1} / |ψ'∘ψ⁻¹_{j+1}|`,
//! their leading spectral data and a set of empirical operator checks.

mod checks;

pub use checks::*;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banach::GridFunction;
use crate::dynamics::PartitionedMap;
use crate::error::{Error, Result};
use crate::observable::Observable;

pub const DEFAULT_QUADRATURE_POINTS: usize = 8;
pub const MAX_CELLS: usize = 4096;
pub const EIGEN_TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 100_000;
/// Share of quadrature nodes that may be nudged off a singularity.
pub const MAX_NUDGED_SHARE: f64 = 0.01;
const DEFLATION_STEPS: usize = 400;

/// Ulam matrix of `ψ̂_{is}` on `N` uniform cells: entry `(i, j)` is
/// `N ∫_{C_j ∩ ψ⁻¹C_i} e^{isχ}`, so at `s = 0` every column sums to one.
/// Columns are stored as their nonzero entries, at most `⌈η₊⌉ + 2` per
/// branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwistedOperatorMatrix {
    pub s: f64,
    pub map_id: String,
    pub observable_id: String,
    pub n: usize,
    pub quadrature_points_per_cell: usize,
    /// Quadrature nodes moved off a singular point of the observable.
    pub nudged: usize,
    pub total_nodes: usize,
    columns: Vec<Vec<(usize, Complex64)>>,
}

fn map_id(map: &PartitionedMap) -> String {
    format!("{:?}(k={})", map.kind(), map.branch_count()).to_lowercase()
}

struct ColumnResult {
    entries: Vec<(usize, Complex64)>,
    nudged: usize,
    total: usize,
}

fn twist(obs: &Observable, s: f64, x: f64, lo: f64, hi: f64, sub: f64, nudged: &mut usize) -> Result<Complex64> {
    let value = match obs.observe(x) {
        Ok(v) if v.is_finite() => v,
        Ok(_) | Err(Error::Singularity { .. }) | Err(Error::TailRejected { .. }) => {
            *nudged += 1;
            let centre = 0.5 * (lo + hi);
            let y = if x < centre { x + 0.5 * sub } else { x - 0.5 * sub };
            let v = obs.observe(y)?;
            if !v.is_finite() {
                return Err(Error::Singularity { x: y });
            }
            v
        }
        Err(e) => return Err(e),
    };
    Ok(Complex64::from_polar(1.0, s * value))
}

fn assemble_column(map: &PartitionedMap, obs: &Observable, s: f64, n: usize, q: usize, j: usize) -> Result<ColumnResult> {
    let nf = n as f64;
    let (cell_lo, cell_hi) = (j as f64 / nf, (j + 1) as f64 / nf);
    let mut acc: Vec<(usize, Complex64)> = Vec::new();
    let (mut nudged, mut total) = (0usize, 0usize);
    for branch in map.branches() {
        let xa = cell_lo.max(branch.lo);
        let xb = cell_hi.min(branch.hi);
        if xb <= xa {
            continue;
        }
        let (ya, yb) = {
            let (u, v) = (branch.apply(xa).clamp(0.0, 1.0), branch.apply(xb).clamp(0.0, 1.0));
            (u.min(v), u.max(v))
        };
        // y-breakpoints of the image split along target cells
        let first = ((ya * nf).floor() as usize).min(n - 1);
        let last = (((yb * nf).ceil() as usize).max(first + 1)).min(n);
        let mut ys = Vec::with_capacity(last - first + 1);
        ys.push(ya);
        for i in first + 1..last {
            ys.push(i as f64 / nf);
        }
        ys.push(yb);
        // preimages, pinned to the exact source endpoints for mass conservation
        let mut xs: Vec<f64> = ys.iter().map(|&y| branch.inverse(y)).collect();
        let m = xs.len();
        if branch.increasing {
            xs[0] = xa;
            xs[m - 1] = xb;
        } else {
            xs[0] = xb;
            xs[m - 1] = xa;
        }
        for k in 0..m - 1 {
            let target = first + k;
            let (lo, hi) = (xs[k].min(xs[k + 1]), xs[k].max(xs[k + 1]));
            let len = hi - lo;
            if len <= 0.0 {
                continue;
            }
            let weight = if s == 0.0 {
                Complex64::new(len, 0.0)
            } else {
                let sub = len / q as f64;
                let mut sum = Complex64::new(0.0, 0.0);
                for r in 0..q {
                    let x = lo + (r as f64 + 0.5) * sub;
                    sum += twist(obs, s, x, lo, hi, sub, &mut nudged)?;
                }
                total += q;
                sum * sub
            };
            acc.push((target, weight * nf));
        }
    }
    acc.sort_by_key(|e| e.0);
    let mut entries: Vec<(usize, Complex64)> = Vec::with_capacity(acc.len());
    for (i, v) in acc {
        match entries.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => entries.push((i, v)),
        }
    }
    Ok(ColumnResult { entries, nudged, total })
}

/// Ulam matrix of `ψ̂_{is}` with `q` midpoint nodes on every piece of
/// `C_j ∩ ψ⁻¹C_i`.
pub fn ulam_matrix_with(map: &PartitionedMap, obs: &Observable, s: f64, n: usize, q: usize) -> Result<TwistedOperatorMatrix> {
    map.validate()?;
    if !(2..=MAX_CELLS).contains(&n) {
        return Err(Error::Precondition(format!("N = {n} outside [2, {MAX_CELLS}]")));
    }
    if q == 0 {
        return Err(Error::Precondition("need at least one quadrature node".into()));
    }
    if !s.is_finite() {
        return Err(Error::Precondition(format!("non-finite s = {s}")));
    }
    let obs = obs.pulled_back()?;
    let cols = (0..n)
        .into_par_iter()
        .map(|j| assemble_column(map, &obs, s, n, q, j))
        .collect::<Result<Vec<_>>>()?;
    let nudged: usize = cols.iter().map(|c| c.nudged).sum();
    let total: usize = cols.iter().map(|c| c.total).sum();
    if total > 0 && nudged as f64 > MAX_NUDGED_SHARE * total as f64 {
        return Err(Error::Quadrature { nudged, total });
    }
    Ok(TwistedOperatorMatrix {
        s,
        map_id: map_id(map),
        observable_id: obs.id(),
        n,
        quadrature_points_per_cell: q,
        nudged,
        total_nodes: total,
        columns: cols.into_iter().map(|c| c.entries).collect(),
    })
}

pub fn ulam_matrix(map: &PartitionedMap, obs: &Observable, s: f64, n: usize) -> Result<TwistedOperatorMatrix> {
    ulam_matrix_with(map, obs, s, n, DEFAULT_QUADRATURE_POINTS)
}

impl TwistedOperatorMatrix {
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.columns[j]
            .iter()
            .find(|e| e.0 == i)
            .map(|e| e.1)
            .unwrap_or_default()
    }

    /// Row-major dense copy.
    pub fn dense(&self) -> Vec<Complex64> {
        let n = self.n;
        let mut d = vec![Complex64::new(0.0, 0.0); n * n];
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, v) in col {
                d[i * n + j] = v;
            }
        }
        d
    }

    pub fn column(&self, j: usize) -> &[(usize, Complex64)] {
        &self.columns[j]
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n, "vector length differs from N");
        let mut y = vec![Complex64::new(0.0, 0.0); self.n];
        for (col, &vj) in self.columns.iter().zip(v) {
            if vj == Complex64::new(0.0, 0.0) {
                continue;
            }
            for &(i, m) in col {
                y[i] += m * vj;
            }
        }
        y
    }

    pub fn apply_adjoint(&self, w: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(w.len(), self.n, "vector length differs from N");
        self.columns
            .iter()
            .map(|col| col.iter().map(|&(i, m)| m.conj() * w[i]).sum())
            .collect()
    }

    /// `Mⁿ` applied to a grid function of matching size.
    pub fn apply_power(&self, f: &GridFunction, n: usize) -> Result<GridFunction> {
        if f.len() != self.n {
            return Err(Error::Precondition(format!(
                "grid of {} points against an N = {} matrix",
                f.len(),
                self.n
            )));
        }
        let mut v = f.values().to_vec();
        for _ in 0..n {
            v = self.apply(&v);
        }
        GridFunction::new(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub lambda: Complex64,
    /// Modulus of the second eigenvalue, from the deflated iteration.
    pub lambda2_abs: f64,
    /// `1 − |λ₂|/|λ₁|`.
    pub gap: f64,
    /// Normalised to integral one when the integral does not vanish.
    pub eigenfunction: GridFunction,
    pub iterations: usize,
    pub residual: f64,
}

fn l2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn normalise(v: &mut [Complex64]) -> f64 {
    let norm = l2(v);
    if norm > 0.0 {
        v.iter_mut().for_each(|z| *z /= norm);
    }
    norm
}

/// Power iteration for the dominant eigenpair of `op`.
fn power_iteration(
    op: impl Fn(&[Complex64]) -> Vec<Complex64>,
    start: Vec<Complex64>,
    tol: f64,
) -> Result<(Complex64, Vec<Complex64>, usize, f64)> {
    let mut v = start;
    normalise(&mut v);
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let w = op(&v);
        let lambda = dot(&v, &w);
        residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if residual < tol {
            return Ok((lambda, v, it, residual));
        }
        v = w;
        if normalise(&mut v) == 0.0 {
            return Err(Error::Iteration { iterations: it, residual });
        }
    }
    Err(Error::Iteration {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

fn deflated_radius(m: &TwistedOperatorMatrix, right: &[Complex64], left: &[Complex64]) -> f64 {
    let denom = dot(left, right);
    let project = |w: &mut Vec<Complex64>| {
        let c = dot(left, w) / denom;
        w.iter_mut().zip(right).for_each(|(z, r)| *z -= c * r);
    };
    // deterministic, generic start vector
    let mut w: Vec<Complex64> = (0..m.n)
        .map(|i| {
            let t = (i as f64 + 1.0) * 0.618_033_988_749_895;
            Complex64::new((t * 12.9898).sin(), (t * 78.233).cos())
        })
        .collect();
    project(&mut w);
    if normalise(&mut w) == 0.0 {
        return 0.0;
    }
    let mut logs = Vec::with_capacity(DEFLATION_STEPS);
    for _ in 0..DEFLATION_STEPS {
        let mut next = m.apply(&w);
        project(&mut next);
        let r = normalise(&mut next);
        // nilpotent remainder: the iterate is pure rounding noise
        if r < 1e-13 {
            return 0.0;
        }
        logs.push(r.ln());
        w = next;
    }
    let tail = &logs[DEFLATION_STEPS / 2..];
    (tail.iter().sum::<f64>() / tail.len() as f64).exp()
}

fn spectral_data(m: &TwistedOperatorMatrix, tol: f64) -> Result<SpectralData> {
    if m.n < crate::banach::MIN_GRID {
        return Err(Error::Precondition(format!(
            "N = {} below the {} cells needed for an eigenfunction grid",
            m.n,
            crate::banach::MIN_GRID
        )));
    }
    let ones = vec![Complex64::new(1.0, 0.0); m.n];
    let (lambda, mut v, iterations, residual) = power_iteration(|x| m.apply(x), ones.clone(), tol)?;
    let (_, u, _, _) = power_iteration(|x| m.apply_adjoint(x), ones, tol)?;
    let lambda2_abs = deflated_radius(m, &v, &u);
    let mass: Complex64 = v.iter().sum::<Complex64>() / m.n as f64;
    if mass.norm() > 1e-12 {
        v.iter_mut().for_each(|z| *z /= mass);
    }
    if m.s == 0.0 {
        // the invariant density is real and nonnegative; drop rounding residue
        v.iter_mut().for_each(|z| *z = Complex64::new(z.re.max(0.0), 0.0));
    }
    Ok(SpectralData {
        lambda,
        lambda2_abs,
        gap: 1.0 - lambda2_abs / lambda.norm(),
        eigenfunction: GridFunction::new(v)?,
        iterations,
        residual,
    })
}

/// Leading eigenvalue, spectral gap and eigenfunction by (deflated) power
/// iteration.
pub fn leading_eigen(m: &TwistedOperatorMatrix) -> Result<SpectralData> {
    spectral_data(m, EIGEN_TOLERANCE)
}

/// Ulam approximation of the invariant density on `n` cells.
pub fn invariant_density(map: &PartitionedMap, n: usize) -> Result<GridFunction> {
    let m = ulam_matrix(map, &Observable::constant(0.0), 0.0, n)?;
    Ok(leading_eigen(&m)?.eigenfunction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueSample {
    pub s: f64,
    pub lambda: Complex64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueCurve {
    pub samples: Vec<EigenvalueSample>,
    /// `Im (log λ)'(0)`.
    pub mean: f64,
    pub mean_error: f64,
    /// `−Re (log λ)''(0)`.
    pub variance: f64,
    pub variance_error: f64,
}

pub const STENCIL_STEPS: [f64; 3] = [0.02, 0.01, 0.005];
const CURVE_TOLERANCE: f64 = 1e-12;

pub fn default_s_grid() -> Vec<f64> {
    (-10..=10).map(|k| k as f64 * 0.01).collect()
}

fn eigen_at(map: &PartitionedMap, obs: &Observable, s: f64, n: usize) -> Result<SpectralData> {
    let m = ulam_matrix(map, obs, s, n)?;
    let d = spectral_data(&m, CURVE_TOLERANCE)?;
    if d.lambda2_abs >= d.lambda.norm() {
        return Err(Error::PerturbationRange(format!(
            "at s = {s}, |λ₂| = {} reaches |λ| = {}",
            d.lambda2_abs,
            d.lambda.norm()
        )));
    }
    Ok(d)
}

/// `λ(s)` on `s_grid` and the mean and variance read off `log λ` at `0`
/// by central differences with one Richardson step.
pub fn eigenvalue_curve(map: &PartitionedMap, obs: &Observable, s_grid: &[f64], n: usize) -> Result<EigenvalueCurve> {
    let mut sorted = s_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let symmetric = sorted
        .iter()
        .zip(sorted.iter().rev())
        .all(|(a, b)| (a + b).abs() <= 1e-12);
    if sorted.is_empty() || !symmetric {
        return Err(Error::Precondition("s grid must be symmetric around 0".into()));
    }
    let samples = s_grid
        .par_iter()
        .map(|&s| {
            eigen_at(map, obs, s, n).map(|d| EigenvalueSample {
                s,
                lambda: d.lambda,
                gap: d.gap,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut stencil = vec![0.0];
    for h in STENCIL_STEPS {
        stencil.push(h);
        stencil.push(-h);
    }
    let logs = stencil
        .par_iter()
        .map(|&s| eigen_at(map, obs, s, n).map(|d| d.lambda.ln()))
        .collect::<Result<Vec<_>>>()?;
    let l0 = logs[0];
    let first: Vec<f64> = (0..3)
        .map(|k| ((logs[1 + 2 * k] - logs[2 + 2 * k]) / (2.0 * STENCIL_STEPS[k])).im)
        .collect();
    let second: Vec<f64> = (0..3)
        .map(|k| -((logs[1 + 2 * k] - 2.0 * l0 + logs[2 + 2 * k]) / STENCIL_STEPS[k].powi(2)).re)
        .collect();
    let richardson = |d: &[f64]| -> (f64, f64) {
        let coarse = (4.0 * d[1] - d[0]) / 3.0;
        let fine = (4.0 * d[2] - d[1]) / 3.0;
        (fine, (fine - coarse).abs())
    };
    let h_min = STENCIL_STEPS[2];
    let (mean, mean_err) = richardson(&first);
    let (variance, var_err) = richardson(&second);
    Ok(EigenvalueCurve {
        samples,
        mean,
        mean_error: mean_err + CURVE_TOLERANCE / h_min,
        variance,
        variance_error: var_err + 4.0 * CURVE_TOLERANCE / (h_min * h_min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn maps() -> Vec<PartitionedMap> {
        vec![
            PartitionedMap::doubling(),
            PartitionedMap::piecewise_linear(&[0.0, 0.25, 1.0], &[4.0, -4.0 / 3.0]).unwrap(),
            PartitionedMap::quadratic_branch(&[0.0, 0.4, 1.0], 0.5).unwrap(),
        ]
    }

    #[test]
    fn doubling_two_cells() {
        let m = ulam_matrix(&PartitionedMap::doubling(), &Observable::constant(0.0), 0.0, 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((m.entry(i, j) - c(0.5)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_conservation_and_positivity() {
        for map in maps() {
            let m = ulam_matrix(&map, &Observable::osc(0.2), 0.0, 97).unwrap();
            for j in 0..97 {
                let col: Complex64 = m.column(j).iter().map(|e| e.1).sum();
                assert!((col - c(1.0)).norm() < 1e-10);
                assert!(m.column(j).iter().all(|e| e.1.im == 0.0 && e.1.re >= 0.0));
            }
            let v: Vec<Complex64> = (0..97).map(|i| c(((i * 37) % 11) as f64 - 3.0)).collect();
            let mv = m.apply(&v);
            let total: Complex64 = v.iter().sum();
            let abs: f64 = v.iter().map(|z| z.norm()).sum();
            assert!((mv.iter().sum::<Complex64>() - total).norm() < 1e-10 * abs);
        }
        let m = ulam_matrix(&PartitionedMap::doubling(), &Observable::constant(0.0), 0.0, 64).unwrap();
        let ones = vec![c(1.0); 64];
        assert!(m.apply(&ones).iter().all(|z| (z - c(1.0)).norm() < 1e-14));
    }

    #[test]
    fn constant_twist_is_a_phase() {
        let m = ulam_matrix(&PartitionedMap::doubling(), &Observable::constant(0.7), 0.5, 64).unwrap();
        let phase = Complex64::from_polar(1.0, 0.35);
        let ones = vec![c(1.0); 64];
        assert!(m.apply(&ones).iter().all(|z| (z - phase).norm() < 1e-13));
    }

    #[test]
    fn leading_eigen_at_zero() {
        for map in maps() {
            let m = ulam_matrix(&map, &Observable::constant(0.0), 0.0, 256).unwrap();
            let d = leading_eigen(&m).unwrap();
            assert!((d.lambda - c(1.0)).norm() < 1e-8);
            assert!(d.residual < 1e-9);
            assert!((d.eigenfunction.integral() - c(1.0)).norm() < 1e-10);
            assert!(d.eigenfunction.values().iter().all(|z| z.re >= 0.0));
        }
        let m = ulam_matrix(&PartitionedMap::doubling(), &Observable::constant(0.0), 0.0, 64).unwrap();
        let d = leading_eigen(&m).unwrap();
        assert!(d.gap >= 0.4);
        assert!(d
            .eigenfunction
            .values()
            .iter()
            .all(|z| (z - c(1.0)).norm() < 1.0 / 64.0));
    }

    #[test]
    fn spectral_radius_at_most_one() {
        for map in maps() {
            for &s in &[0.3, 1.0, 2.5] {
                let m = ulam_matrix(&map, &Observable::affine(1.0, -0.5), s, 128).unwrap();
                let d = leading_eigen(&m).unwrap();
                assert!(d.lambda.norm() <= 1.0 + 1e-8, "{s} {:?}", d.lambda);
            }
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let map = PartitionedMap::doubling();
        let obs = Observable::osc(0.2);
        let a = leading_eigen(&ulam_matrix(&map, &obs, 0.4, 128).unwrap()).unwrap().lambda;
        let b = leading_eigen(&ulam_matrix(&map, &obs, -0.4, 128).unwrap()).unwrap().lambda;
        assert!((a - b.conj()).norm() < 1e-8);
    }

    #[test]
    fn curve_for_centered_identity() {
        let map = PartitionedMap::doubling();
        let curve = eigenvalue_curve(&map, &Observable::affine(1.0, -0.5), &[-0.05, 0.0, 0.05], 512).unwrap();
        assert!(curve.mean.abs() < 2.0 * curve.mean_error.max(1e-6), "{curve:?}");
        assert!((curve.variance - 0.25).abs() < 0.01, "{curve:?}");
        assert!(eigenvalue_curve(&map, &Observable::constant(0.0), &[0.0, 0.1], 64).is_err());
    }

    #[test]
    fn rejects_bad_sizes() {
        let map = PartitionedMap::doubling();
        assert!(ulam_matrix(&map, &Observable::constant(0.0), 0.0, 1).is_err());
        assert!(ulam_matrix(&map, &Observable::constant(0.0), 0.0, MAX_CELLS + 1).is_err());
        let tiny = ulam_matrix(&map, &Observable::constant(0.0), 0.0, 8).unwrap();
        assert!(leading_eigen(&tiny).is_err());
    }
}
