use serde::{Deserialize, Serialize};

use crate::dynamics::PartitionedMap;
use crate::error::{Error, Result};
use crate::observable::{Envelope, Observable, SUBCONVEXITY_EXPONENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    #[serde(rename = "CLT")]
    Clt,
    #[serde(rename = "MLCLT")]
    Mlclt,
    Edgeworth,
    #[serde(rename = "BooleCLT")]
    BooleClt,
    BooleEdgeworth,
    #[serde(rename = "ZetaLine")]
    ZetaLine,
    #[serde(rename = "ZetaPower")]
    ZetaPower,
}

impl Theorem {
    pub fn tag(self) -> &'static str {
        match self {
            Theorem::Clt => "CLT",
            Theorem::Mlclt => "MLCLT",
            Theorem::Edgeworth => "Edgeworth",
            Theorem::BooleClt => "BooleCLT",
            Theorem::BooleEdgeworth => "BooleEdgeworth",
            Theorem::ZetaLine => "ZetaLine",
            Theorem::ZetaPower => "ZetaPower",
        }
    }
}

impl std::fmt::Display for Theorem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BooleKind {
    Clt,
    Edgeworth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConditionInputs {
    Interval {
        a: f64,
        b: f64,
        theta: f64,
        eta_minus: f64,
        eta_plus: f64,
    },
    Boole {
        u: f64,
        v: f64,
    },
    ZetaLine {
        s: f64,
        delta: f64,
    },
    ZetaPower {
        a: f64,
        delta: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub theorem: Theorem,
    pub inputs: ConditionInputs,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub margin: f64,
}

impl ConditionReport {
    fn new(theorem: Theorem, inputs: ConditionInputs, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        ConditionReport {
            theorem,
            inputs,
            lhs,
            rhs,
            satisfied: margin > 0.0,
            margin,
        }
    }
}

fn interval_rhs(b: f64, theta: f64, log_ratio: f64) -> f64 {
    theta.min(1.0 / b).min(0.5) * log_ratio.min(1.0)
}

fn check_interval_inputs(a: f64, b: f64, theta: f64, eta_minus: f64, eta_plus: f64) -> Result<()> {
    if !(a >= 0.0) || !(b > 0.0) {
        return Err(Error::Precondition(format!("need a ≥ 0 and b > 0, got a = {a}, b = {b}")));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Precondition(format!("ϑ = {theta} outside (0,1]")));
    }
    if !(eta_minus > 1.0 && eta_plus >= eta_minus) {
        return Err(Error::Precondition(format!(
            "need η₊ ≥ η₋ > 1, got η₋ = {eta_minus}, η₊ = {eta_plus}"
        )));
    }
    Ok(())
}

/// `a < min{ϑ, 1/b, ½}·min{1, log η₋/log η₊}`.
pub fn clt_condition(a: f64, b: f64, theta: f64, eta_minus: f64, eta_plus: f64) -> Result<ConditionReport> {
    check_interval_inputs(a, b, theta, eta_minus, eta_plus)?;
    let rhs = interval_rhs(b, theta, eta_minus.ln() / eta_plus.ln());
    Ok(ConditionReport::new(
        Theorem::Clt,
        ConditionInputs::Interval { a, b, theta, eta_minus, eta_plus },
        a,
        rhs,
    ))
}

/// The MLCLT shares the CLT inequality.
pub fn mlclt_condition(a: f64, b: f64, theta: f64, eta_minus: f64, eta_plus: f64) -> Result<ConditionReport> {
    let mut r = clt_condition(a, b, theta, eta_minus, eta_plus)?;
    r.theorem = Theorem::Mlclt;
    Ok(r)
}

/// `3·min{2a, max{a, a+b−2}} < min{ϑ, 1/b, ½}·min{1, log η₊/log η₋}`.
pub fn edgeworth_condition(a: f64, b: f64, theta: f64, eta_minus: f64, eta_plus: f64) -> Result<ConditionReport> {
    check_interval_inputs(a, b, theta, eta_minus, eta_plus)?;
    let lhs = 3.0 * (2.0 * a).min(a.max(a + b - 2.0));
    let rhs = interval_rhs(b, theta, eta_plus.ln() / eta_minus.ln());
    Ok(ConditionReport::new(
        Theorem::Edgeworth,
        ConditionInputs::Interval { a, b, theta, eta_minus, eta_plus },
        lhs,
        rhs,
    ))
}

/// `u(2+v) < 1` for the CLT, `min{2u(2+v), (u+v)(2+v)} < 1/3` for Edgeworth.
pub fn boole_condition(kind: BooleKind, u: f64, v: f64) -> Result<ConditionReport> {
    if !(u >= 0.0 && v >= 0.0) {
        return Err(Error::Precondition(format!("need u, v ≥ 0, got u = {u}, v = {v}")));
    }
    let inputs = ConditionInputs::Boole { u, v };
    Ok(match kind {
        BooleKind::Clt => ConditionReport::new(Theorem::BooleClt, inputs, u * (2.0 + v), 1.0),
        BooleKind::Edgeworth => ConditionReport::new(
            Theorem::BooleEdgeworth,
            inputs,
            (2.0 * u * (2.0 + v)).min((u + v) * (2.0 + v)),
            1.0 / 3.0,
        ),
    })
}

/// Boole CLT for `ℜζ, ℑζ, |ζ|` on the line `s + it`, `s ∈ (0,1)`, with
/// `u = v = (1−s)/2 + δ`.
pub fn zeta_line_condition(s: f64, delta: f64) -> Result<ConditionReport> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Precondition(format!("line s = {s} outside (0,1)")));
    }
    if !(delta >= 0.0) {
        return Err(Error::Precondition(format!("δ = {delta} < 0")));
    }
    let u = (1.0 - s) / 2.0 + delta;
    let mut r = boole_condition(BooleKind::Clt, u, u)?;
    r.theorem = Theorem::ZetaLine;
    r.inputs = ConditionInputs::ZetaLine { s, delta };
    Ok(r)
}

/// Boole CLT for `|ζ_{1/2}|^a` type observables, `a ≥ 1`, with
/// `u = v = 13a/84 + δ`.
pub fn zeta_power_condition(a: f64, delta: f64) -> Result<ConditionReport> {
    if !(a >= 1.0) {
        return Err(Error::Precondition(format!("power a = {a} < 1")));
    }
    if !(delta >= 0.0) {
        return Err(Error::Precondition(format!("δ = {delta} < 0")));
    }
    let u = SUBCONVEXITY_EXPONENT * a + delta;
    let mut r = boole_condition(BooleKind::Clt, u, u)?;
    r.theorem = Theorem::ZetaPower;
    r.inputs = ConditionInputs::ZetaPower { a, delta };
    Ok(r)
}

/// Bisection for the parameter in `[lo, hi]` where `condition` flips.
/// The two endpoints must give different verdicts.
pub fn threshold(
    condition: impl Fn(f64) -> Result<ConditionReport>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let s_lo = condition(lo)?.satisfied;
    if s_lo == condition(hi)?.satisfied {
        return Err(Error::Precondition(format!(
            "condition does not flip on [{lo}, {hi}]"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if condition(mid)?.satisfied == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Which clause of the β requirement made the indices admissible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaBranch {
    /// `β < (1+α−a)/(b−a)`.
    BetaBound,
    /// `b < a + 1`, any `β`.
    MildDerivative,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub alpha_ok: bool,
    pub beta_branch: BetaBranch,
    pub gamma_ok: bool,
    pub admissible: bool,
    /// `(1+α−a)/(b−a)`, infinite when `b ≤ a`.
    pub beta_bound: f64,
}

/// Sufficient conditions on `(α, β, γ)` for `‖χ‖_{α,β,γ} < ∞` when
/// `|χ| ≲ (x(1−x))^{−a}` and `|χ'| ≲ (x(1−x))^{−b}`.
pub fn admissibility(a: f64, b: f64, alpha: f64, beta: f64, gamma: f64) -> Admissibility {
    let alpha_ok = alpha > a;
    let beta_bound = if b > a { (1.0 + alpha - a) / (b - a) } else { f64::INFINITY };
    let beta_branch = if beta < beta_bound {
        BetaBranch::BetaBound
    } else if b < a + 1.0 {
        BetaBranch::MildDerivative
    } else {
        BetaBranch::None
    };
    let gamma_ok = gamma >= 1.0 && (a == 0.0 || gamma < 1.0 / a);
    Admissibility {
        alpha_ok,
        beta_branch,
        gamma_ok,
        admissible: alpha_ok && gamma_ok && beta_branch != BetaBranch::None,
        beta_bound,
    }
}

/// Every applicable report for an observable over an interval map, or on
/// the real line for observables of the Boolean system.
pub fn conditions_for(obs: &Observable, map: &PartitionedMap) -> Result<Vec<ConditionReport>> {
    match obs.envelope_exponents()? {
        Envelope::Interval { a, b } => {
            let (t, em, ep) = (map.theta(), map.eta_minus(), map.eta_plus());
            Ok(vec![
                clt_condition(a, b, t, em, ep)?,
                mlclt_condition(a, b, t, em, ep)?,
                edgeworth_condition(a, b, t, em, ep)?,
            ])
        }
        Envelope::Real { u, v } => Ok(vec![
            boole_condition(BooleKind::Clt, u, v)?,
            boole_condition(BooleKind::Edgeworth, u, v)?,
        ]),
    }
}
