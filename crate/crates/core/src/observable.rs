//! Observables: the oscillating family `x^{−c} sin(1/x)`, the zeta function
//! on vertical lines (on `ℝ`, or pulled back to `(0,1)` through `cot(πx)`),
//! powers of `|ζ(1/2 + it)|`, and a few closed-form test functions.

use serde::{Deserialize, Serialize};

use crate::dynamics::{xi_unchecked, PartitionedMap, System};
use crate::error::{Error, Result};
use crate::zeta::ZetaEvaluator;

/// Bourgain's subconvexity exponent for `ζ(1/2 + it)`.
pub const SUBCONVEXITY_EXPONENT: f64 = 13.0 / 84.0;
pub const DEFAULT_DELTA: f64 = 0.01;
pub const DEFAULT_T_MAX: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZetaPart {
    Re,
    Im,
    Abs,
}

/// Closed-form observables without a declared singularity envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CustomObservable {
    Constant(f64),
    /// `slope·x + intercept`.
    Affine { slope: f64, intercept: f64 },
    /// `ψ(x) − x`, a coboundary of the identity.
    MapCoboundary(PartitionedMap),
    /// Values at the midpoints `(i+½)/N`, linearly interpolated and held
    /// constant beyond the outer midpoints.
    Grid(Vec<f64>),
    /// `e^{−rate·x}`, smooth and bounded, so `a = 0` and any `b > 0` apply.
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObservableKind {
    /// `x^{−c} sin(1/x)`.
    Osc { c: f64 },
    /// A component of `ζ(σ + it)`.
    Zeta { part: ZetaPart, sigma: f64 },
    /// `|ζ(1/2 + it)|^power`.
    ZetaAbsPower { power: f64 },
    Custom(CustomObservable),
}

/// Where the observable's argument lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// The unit interval; zeta kinds are composed with `ξ(x) = cot(πx)`.
    Interval,
    Real,
}

/// Singularity envelope exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Envelope {
    /// `|χ| ≲ (x(1−x))^{−a}`, `|χ'| ≲ (x(1−x))^{−b}`.
    Interval { a: f64, b: f64 },
    /// `|h| ≲ |x|^u`, `|h'| ≲ |x|^v`.
    Real { u: f64, v: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub kind: ObservableKind,
    pub domain: Domain,
    /// Slack added to envelope exponents that hold "for every δ > 0".
    pub delta: f64,
    /// Largest `|t|` at which zeta is evaluated.
    pub t_max: f64,
    pub zeta: ZetaEvaluator,
}

impl Observable {
    fn with_kind(kind: ObservableKind, domain: Domain) -> Self {
        Observable {
            kind,
            domain,
            delta: DEFAULT_DELTA,
            t_max: DEFAULT_T_MAX,
            zeta: ZetaEvaluator::default(),
        }
    }

    pub fn osc(c: f64) -> Self {
        Self::with_kind(ObservableKind::Osc { c }, Domain::Interval)
    }

    pub fn zeta_part(part: ZetaPart, sigma: f64, domain: Domain) -> Self {
        Self::with_kind(ObservableKind::Zeta { part, sigma }, domain)
    }

    pub fn zeta_abs_power(power: f64, domain: Domain) -> Self {
        Self::with_kind(ObservableKind::ZetaAbsPower { power }, domain)
    }

    pub fn constant(c: f64) -> Self {
        Self::with_kind(ObservableKind::Custom(CustomObservable::Constant(c)), Domain::Interval)
    }

    pub fn affine(slope: f64, intercept: f64) -> Self {
        Self::with_kind(
            ObservableKind::Custom(CustomObservable::Affine { slope, intercept }),
            Domain::Interval,
        )
    }

    pub fn coboundary(map: PartitionedMap) -> Self {
        Self::with_kind(
            ObservableKind::Custom(CustomObservable::MapCoboundary(map)),
            Domain::Interval,
        )
    }

    pub fn exponential(rate: f64) -> Self {
        Self::with_kind(ObservableKind::Custom(CustomObservable::Exponential { rate }), Domain::Interval)
    }

    pub fn grid(values: Vec<f64>) -> Self {
        Self::with_kind(ObservableKind::Custom(CustomObservable::Grid(values)), Domain::Interval)
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_evaluator(mut self, zeta: ZetaEvaluator) -> Self {
        self.zeta = zeta;
        self
    }

    /// The same observable as a function on `(0,1)`: zeta observables on
    /// `ℝ` are composed with `ξ`, interval observables are returned as is.
    pub fn pulled_back(&self) -> Result<Observable> {
        match self.domain {
            Domain::Interval => Ok(self.clone()),
            Domain::Real if self.is_zeta() => {
                let mut o = self.clone();
                o.domain = Domain::Interval;
                Ok(o)
            }
            Domain::Real => Err(Error::Capability(format!(
                "{} has no interval counterpart",
                self.id()
            ))),
        }
    }

    /// True if `x = 0` and `x = 1` are singular points on the interval.
    fn singular_at_endpoints(&self) -> bool {
        !matches!(self.kind, ObservableKind::Custom(_))
    }

    pub fn is_zeta(&self) -> bool {
        matches!(
            self.kind,
            ObservableKind::Zeta { .. } | ObservableKind::ZetaAbsPower { .. }
        )
    }

    /// Short identifier used in reports.
    pub fn id(&self) -> String {
        let dom = match self.domain {
            Domain::Interval => "I",
            Domain::Real => "R",
        };
        match &self.kind {
            ObservableKind::Osc { c } => format!("osc(c={c})"),
            ObservableKind::Zeta { part, sigma } => format!("zeta_{part:?}(sigma={sigma})@{dom}").to_lowercase(),
            ObservableKind::ZetaAbsPower { power } => format!("zeta_abs_power(a={power})@{dom}"),
            ObservableKind::Custom(CustomObservable::Constant(c)) => format!("constant({c})"),
            ObservableKind::Custom(CustomObservable::Affine { slope, intercept }) => {
                format!("affine({slope},{intercept})")
            }
            ObservableKind::Custom(CustomObservable::MapCoboundary(_)) => "coboundary(psi(x)-x)".into(),
            ObservableKind::Custom(CustomObservable::Grid(v)) => format!("grid(N={})", v.len()),
            ObservableKind::Custom(CustomObservable::Exponential { rate }) => format!("exp(-{rate}x)"),
        }
    }

    /// Checks that the descriptor is usable on `system` before any compute.
    pub fn check_compatible(&self, system: &System) -> Result<()> {
        match (system, self.domain) {
            (System::Boolean(_), Domain::Real) | (System::Interval(_), Domain::Interval) => {}
            (System::Boolean(_), Domain::Interval) => {
                return Err(Error::Precondition(format!(
                    "{} lives on the interval but the system is the Boolean map",
                    self.id()
                )))
            }
            (System::Interval(_), Domain::Real) => {
                return Err(Error::Precondition(format!(
                    "{} lives on the real line but the system is an interval map",
                    self.id()
                )))
            }
        }
        match &self.kind {
            ObservableKind::Zeta { sigma, .. } if !(*sigma > 0.0 && *sigma <= 2.0) => {
                Err(Error::Precondition(format!("σ = {sigma} outside (0, 2]")))
            }
            ObservableKind::Zeta { sigma, .. } if *sigma == 1.0 => {
                Err(Error::Precondition("σ = 1 hits the pole at t = 0".into()))
            }
            ObservableKind::Custom(CustomObservable::Exponential { rate }) if !rate.is_finite() => {
                Err(Error::Precondition(format!("non-finite rate {rate}")))
            }
            ObservableKind::Custom(CustomObservable::Grid(v)) if v.len() < 2 => {
                Err(Error::Precondition("grid observable needs at least two values".into()))
            }
            _ if self.is_zeta() => self.zeta.validate(),
            _ => Ok(()),
        }
    }

    /// Value of the observable at `x`.
    pub fn observe(&self, x: f64) -> Result<f64> {
        match self.domain {
            Domain::Interval => {
                if !x.is_finite() || x < 0.0 || x > 1.0 {
                    return Err(Error::Domain(format!("{x} outside [0,1]")));
                }
                if self.singular_at_endpoints() && (x == 0.0 || x == 1.0) {
                    return Err(Error::Singularity { x });
                }
                match &self.kind {
                    ObservableKind::Osc { c } => Ok(osc_value(*c, x)),
                    ObservableKind::Custom(custom) => Ok(custom_value(custom, x)),
                    _ => self.zeta_value(xi_unchecked(x)),
                }
            }
            Domain::Real => {
                if !x.is_finite() {
                    return Err(Error::Domain(format!("non-finite point {x}")));
                }
                match &self.kind {
                    ObservableKind::Osc { .. } | ObservableKind::Custom(_) => Err(Error::Capability(
                        format!("{} is only defined on the interval", self.id()),
                    )),
                    _ => self.zeta_value(x),
                }
            }
        }
    }

    fn zeta_value(&self, t: f64) -> Result<f64> {
        if t.abs() > self.t_max {
            return Err(Error::TailRejected { t });
        }
        match self.kind {
            ObservableKind::Zeta { part, sigma } => {
                let z = self.zeta.zeta(sigma, t)?;
                Ok(match part {
                    ZetaPart::Re => z.re,
                    ZetaPart::Im => z.im,
                    ZetaPart::Abs => z.norm(),
                })
            }
            ObservableKind::ZetaAbsPower { power } => Ok(self.zeta.zeta(0.5, t)?.norm().powf(power)),
            _ => unreachable!("zeta_value called on a non-zeta observable"),
        }
    }

    /// `R_α χ(x) = x^α (1−x)^α χ(x)`, with non-finite values mapped to `0`.
    /// For the oscillating family the powers are combined before evaluation.
    pub fn damped(&self, alpha: f64, x: f64) -> Result<f64> {
        if let (ObservableKind::Osc { c }, Domain::Interval) = (&self.kind, self.domain) {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::Singularity { x });
            }
            return Ok(x.powf(alpha - c) * (1.0 - x).powf(alpha) * (1.0 / x).sin());
        }
        let v = self.observe(x)?;
        let w = (x * (1.0 - x)).powf(alpha) * v;
        Ok(if w.is_finite() { w } else { 0.0 })
    }

    /// Envelope exponents with `δ` resolved from the descriptor.
    pub fn envelope_exponents(&self) -> Result<Envelope> {
        match self.kind {
            ObservableKind::Osc { c } => Ok(Envelope::Interval { a: c, b: c + 2.0 }),
            ObservableKind::Zeta { sigma, .. } => {
                let u = (1.0 - sigma) / 2.0 + self.delta;
                Ok(Envelope::Real { u, v: u })
            }
            ObservableKind::ZetaAbsPower { power } => {
                let u = SUBCONVEXITY_EXPONENT * power + self.delta;
                Ok(Envelope::Real { u, v: u })
            }
            ObservableKind::Custom(CustomObservable::Exponential { .. }) => Ok(Envelope::Interval {
                a: 0.0,
                b: self.delta,
            }),
            ObservableKind::Custom(_) => Err(Error::Unavailable(format!(
                "no declared envelope for {}",
                self.id()
            ))),
        }
    }
}

#[inline]
pub(crate) fn osc_value(c: f64, x: f64) -> f64 {
    let amp = if c == 0.0 { 1.0 } else { x.powf(-c) };
    amp * (1.0 / x).sin()
}

fn custom_value(custom: &CustomObservable, x: f64) -> f64 {
    match custom {
        CustomObservable::Constant(c) => *c,
        CustomObservable::Affine { slope, intercept } => slope * x + intercept,
        CustomObservable::MapCoboundary(map) => map.apply_unchecked(x) - x,
        CustomObservable::Exponential { rate } => (-rate * x).exp(),
        CustomObservable::Grid(values) => {
            let n = values.len();
            let pos = x * n as f64 - 0.5;
            if pos <= 0.0 {
                values[0]
            } else if pos >= (n - 1) as f64 {
                values[n - 1]
            } else {
                let i = pos.floor() as usize;
                let f = pos - i as f64;
                values[i] * (1.0 - f) + values[i + 1] * f
            }
        }
    }
}

/// Observable descriptor as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    /// `osc | zeta_re | zeta_im | zeta_abs | zeta_abs_power | constant |
    /// affine | coboundary | grid | exponential`.
    pub kind: String,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub power: Option<f64>,
    #[serde(default)]
    pub slope: Option<f64>,
    #[serde(default)]
    pub intercept: Option<f64>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub domain: Option<Domain>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub zeta: Option<ZetaEvaluator>,
}

impl ObservableSpec {
    /// Builds the observable for `system`. Zeta kinds default to the real
    /// line on the Boolean map and to the interval (through `ξ`) otherwise.
    pub fn build(&self, system: &System) -> Result<Observable> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Precondition(format!("observable '{}' needs '{name}'", self.kind)))
        };
        let zeta_domain = self.domain.unwrap_or(match system {
            System::Boolean(_) => Domain::Real,
            System::Interval(_) => Domain::Interval,
        });
        let obs = match self.kind.as_str() {
            "osc" => Observable::osc(need(self.c, "c")?),
            "zeta_re" => Observable::zeta_part(ZetaPart::Re, self.sigma.unwrap_or(0.5), zeta_domain),
            "zeta_im" => Observable::zeta_part(ZetaPart::Im, self.sigma.unwrap_or(0.5), zeta_domain),
            "zeta_abs" => Observable::zeta_part(ZetaPart::Abs, self.sigma.unwrap_or(0.5), zeta_domain),
            "zeta_abs_power" => Observable::zeta_abs_power(need(self.power, "power")?, zeta_domain),
            "constant" => Observable::constant(need(self.c, "c")?),
            "affine" => Observable::affine(self.slope.unwrap_or(1.0), self.intercept.unwrap_or(0.0)),
            "coboundary" => match system {
                System::Interval(map) => Observable::coboundary(map.clone()),
                System::Boolean(_) => {
                    return Err(Error::Precondition(
                        "the coboundary observable needs an interval map".into(),
                    ))
                }
            },
            "exponential" => Observable::exponential(need(self.rate, "rate")?),
            "grid" => Observable::grid(
                self.values
                    .clone()
                    .ok_or_else(|| Error::Precondition("grid observable needs 'values'".into()))?,
            ),
            other => return Err(Error::Precondition(format!("unknown observable kind '{other}'"))),
        };
        let mut obs = obs;
        if let Some(d) = self.delta {
            obs.delta = d;
        }
        if let Some(t) = self.t_max {
            obs.t_max = t;
        }
        if let Some(z) = self.zeta {
            obs.zeta = z;
        }
        obs.check_compatible(system)?;
        Ok(obs)
    }
}
