use serde::{Deserialize, Serialize};

use crate::dynamics::PartitionedMap;
use crate::error::{Error, Result};

fn damped_one(x: f64, alpha: f64) -> f64 {
    (x * (1.0 - x)).powf(alpha)
}

/// `R̄_{j+1}(x) = (R_α1)(ψ_{j+1}x) / (R_α1)(x)` for `x` inside branch `j`
/// (zero-based, so branch `j` covers `(c_j, c_{j+1})`).
pub fn rbar(map: &PartitionedMap, j: usize, alpha: f64, x: f64) -> Result<f64> {
    let branch = map
        .branches()
        .get(j)
        .ok_or_else(|| Error::Domain(format!("branch {j} of {}", map.branch_count())))?;
    if !(x > branch.lo && x < branch.hi) {
        return Err(Error::Domain(format!(
            "{x} outside branch ({}, {})",
            branch.lo, branch.hi
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!("α = {alpha} outside (0,1)")));
    }
    let y = branch.apply(x).clamp(0.0, 1.0);
    Ok(damped_one(y, alpha) / damped_one(x, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoelderReport {
    /// Empirical sup of `R̄_{j+1}` over the grid.
    pub bound: f64,
    /// `sup |R̄(x) − R̄(y)| / |x − y|^α` over grid pairs.
    pub hoelder_c: f64,
    /// The analytic ceiling `η₊^α`.
    pub ceiling: f64,
}

/// Sup and α-Hölder constant of `R̄_{j+1}` on `points` interior grid points.
pub fn hoelder_report(map: &PartitionedMap, j: usize, alpha: f64, points: usize) -> Result<HoelderReport> {
    let branch = map
        .branches()
        .get(j)
        .ok_or_else(|| Error::Domain(format!("branch {j} of {}", map.branch_count())))?;
    if points < 2 {
        return Err(Error::Precondition("need at least two grid points".into()));
    }
    let width = branch.hi - branch.lo;
    let xs: Vec<f64> = (0..points)
        .map(|i| branch.lo + width * (i as f64 + 0.5) / points as f64)
        .collect();
    let vals = xs
        .iter()
        .map(|&x| rbar(map, j, alpha, x))
        .collect::<Result<Vec<_>>>()?;
    let bound = vals.iter().cloned().fold(0.0, f64::max);
    let mut hoelder_c: f64 = 0.0;
    for i in 0..points {
        for k in i + 1..points {
            let q = (vals[i] - vals[k]).abs() / (xs[k] - xs[i]).powf(alpha);
            hoelder_c = hoelder_c.max(q);
        }
    }
    Ok(HoelderReport {
        bound,
        hoelder_c,
        ceiling: map.eta_plus().powf(alpha),
    })
}
