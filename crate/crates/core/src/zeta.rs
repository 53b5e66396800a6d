//! Riemann zeta function on vertical lines.
//!
//! Two evaluators are provided. Euler–Maclaurin summation covers any
//! `σ ∈ (0, 2]` with an a priori remainder bound; the Riemann–Siegel formula
//! covers the critical line for large `|t|` at a cost of `O(√|t|)` terms.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `B_2, B_4, …, B_30`.
const BERNOULLI: [f64; 15] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
    -23749461029.0 / 870.0,
    8615841276005.0 / 14322.0,
];

/// Number of nodes on the circle used for Taylor coefficients of Ψ.
const PSI_NODES: usize = 48;
const PSI_RADIUS: f64 = 0.5;

/// Configuration of the zeta evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZetaEvaluator {
    /// Minimal Euler–Maclaurin truncation `N`.
    pub em_terms: usize,
    /// Number of Bernoulli corrections in the Euler–Maclaurin tail.
    pub em_bernoulli_order: usize,
    /// `|t|` from which the Riemann–Siegel formula is used on `σ = 1/2`.
    pub rs_switch_t: f64,
    pub target_abs_error: f64,
    /// Number of Riemann–Siegel correction terms `C_0, …` (1..=5).
    pub rs_corrections: usize,
}

impl Default for ZetaEvaluator {
    fn default() -> Self {
        ZetaEvaluator {
            em_terms: 10,
            em_bernoulli_order: 4,
            rs_switch_t: 30.0,
            target_abs_error: 1e-10,
            rs_corrections: 5,
        }
    }
}

impl ZetaEvaluator {
    pub fn validate(&self) -> Result<()> {
        if self.em_terms < 10 {
            return Err(Error::Precondition(format!("em_terms = {} < 10", self.em_terms)));
        }
        if self.em_bernoulli_order == 0 || self.em_bernoulli_order >= BERNOULLI.len() {
            return Err(Error::Precondition(format!(
                "em_bernoulli_order must be in 1..{}", BERNOULLI.len()
            )));
        }
        if !(self.rs_switch_t >= 30.0) {
            return Err(Error::Precondition(format!("rs_switch_t = {} < 30", self.rs_switch_t)));
        }
        if !(1e-12..=1e-4).contains(&self.target_abs_error) {
            return Err(Error::Precondition(format!(
                "target_abs_error = {:e} outside [1e-12, 1e-4]",
                self.target_abs_error
            )));
        }
        if !(1..=5).contains(&self.rs_corrections) {
            return Err(Error::Precondition("rs_corrections must be in 1..=5".into()));
        }
        Ok(())
    }

    /// `ζ(σ + it)`, routed to Riemann–Siegel on the critical line for large `|t|`.
    pub fn zeta(&self, sigma: f64, t: f64) -> Result<Complex64> {
        if sigma == 0.5 && t.abs() >= self.rs_switch_t {
            self.zeta_rs(t)
        } else {
            self.zeta_em(sigma, t)
        }
    }

    /// Euler–Maclaurin evaluation with `N ≥ max(em_terms, ⌈|t|⌉)`, enlarged
    /// until the remainder bound meets `target_abs_error`.
    pub fn zeta_em(&self, sigma: f64, t: f64) -> Result<Complex64> {
        if !(sigma > 0.0 && sigma <= 2.0) || !t.is_finite() {
            return Err(Error::Domain(format!("σ = {sigma}, t = {t} outside (0,2] × ℝ")));
        }
        if sigma == 1.0 && t == 0.0 {
            return Err(Error::Pole("s = 1".into()));
        }
        let s = Complex64::new(sigma, t);
        let m = self.em_bernoulli_order;
        let n0 = self.em_terms.max(t.abs().ceil() as usize);
        let cap = 8 * n0 + 100;
        let mut n = n0;
        let mut bound = em_remainder_bound(s, n, m);
        while bound > self.target_abs_error && n < cap {
            n = (n + n / 4 + 1).min(cap);
            bound = em_remainder_bound(s, n, m);
        }
        if bound > self.target_abs_error {
            return Err(Error::Accuracy { achieved: bound });
        }
        Ok(em_sum(s, n, m))
    }

    /// Riemann–Siegel evaluation of `ζ(1/2 + it)` for `|t| ≥ rs_switch_t`.
    pub fn zeta_rs(&self, t: f64) -> Result<Complex64> {
        if !(t.abs() >= self.rs_switch_t) || !t.is_finite() {
            return Err(Error::Routing(format!(
                "|t| = {} below Riemann–Siegel threshold {}",
                t.abs(),
                self.rs_switch_t
            )));
        }
        let tau = t.abs();
        let theta = rs_theta(tau);
        let z = hardy_z(tau, theta, self.rs_corrections);
        let value = Complex64::from_polar(z, -theta);
        Ok(if t < 0.0 { value.conj() } else { value })
    }
}

/// Remainder bound `|(s)_{2m+1} B_{2m+2} N^{−σ−2m−1} / ((2m+2)! (σ+2m+1))|`.
fn em_remainder_bound(s: Complex64, n: usize, m: usize) -> f64 {
    let mut poch = 1.0;
    for j in 0..=2 * m {
        poch *= (s + j as f64).norm();
    }
    let k = 2 * m + 2;
    let b = BERNOULLI[m].abs() / factorial(k);
    let sigma = s.re;
    poch * b * (n as f64).powf(-sigma - (2 * m + 1) as f64) / (sigma + (2 * m + 1) as f64)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn em_sum(s: Complex64, n: usize, m: usize) -> Complex64 {
    let mut head = Complex64::new(0.0, 0.0);
    for j in 1..n {
        head += n_pow_minus_s(j as f64, s);
    }
    let nf = n as f64;
    let n_s = n_pow_minus_s(nf, s);
    let mut tail = n_s * nf / (s - 1.0) + 0.5 * n_s;
    // (s)_{2k−1} N^{−s−2k+1} B_{2k}/(2k)!
    let mut poch = s;
    let mut power = n_s / nf;
    let mut fact = 2.0;
    for k in 1..=m {
        tail += poch * power * (BERNOULLI[k - 1] / fact);
        let a = s + (2 * k - 1) as f64;
        let b = s + (2 * k) as f64;
        poch = poch * a * b;
        power /= nf * nf;
        fact *= ((2 * k + 1) * (2 * k + 2)) as f64;
    }
    head + tail
}

#[inline]
fn n_pow_minus_s(n: f64, s: Complex64) -> Complex64 {
    let ln = n.ln();
    Complex64::from_polar((-s.re * ln).exp(), -s.im * ln)
}

/// Riemann–Siegel theta function by its Stirling series (valid for `t ≳ 10`).
pub fn rs_theta(t: f64) -> f64 {
    let inv = 1.0 / t;
    let inv2 = inv * inv;
    0.5 * t * (t / (2.0 * PI)).ln() - 0.5 * t - PI / 8.0
        + inv
            * (1.0 / 48.0
                + inv2
                    * (7.0 / 5760.0
                        + inv2 * (31.0 / 80640.0 + inv2 * (127.0 / 430080.0 + inv2 * 511.0 / 1216512.0))))
}

/// Hardy's `Z(t) = e^{iθ(t)} ζ(1/2 + it)` for `t > 0` by Riemann–Siegel.
fn hardy_z(t: f64, theta: f64, corrections: usize) -> f64 {
    let a = (t / (2.0 * PI)).sqrt();
    let n = a.floor() as usize;
    let p = a - n as f64;
    let mut main = 0.0;
    for k in 1..=n {
        let kf = k as f64;
        let ln = kf.ln();
        main += (theta - t * ln).cos() / kf.sqrt();
    }
    main *= 2.0;

    let d = psi_derivatives(p, 12);
    let pi2 = PI * PI;
    let pi4 = pi2 * pi2;
    let pi6 = pi4 * pi2;
    let pi8 = pi4 * pi4;
    let c = [
        d[0],
        -d[3] / (96.0 * pi2),
        (corrections > 2)
            .then(|| d[2] / (64.0 * pi2) + d[6] / (18432.0 * pi4))
            .unwrap_or(0.0),
        (corrections > 3)
            .then(|| -d[1] / (64.0 * pi2) - d[5] / (3840.0 * pi4) - d[9] / (5_308_416.0 * pi6))
            .unwrap_or(0.0),
        (corrections > 4)
            .then(|| {
                d[0] / (128.0 * pi2)
                    + 19.0 * d[4] / (24576.0 * pi4)
                    + 11.0 * d[8] / (5_898_240.0 * pi6)
                    + d[12] / (2_038_431_744.0 * pi8)
            })
            .unwrap_or(0.0),
    ];
    let mut series = 0.0;
    let mut scale = 1.0;
    for ck in c.iter().take(corrections) {
        series += ck * scale;
        scale /= a;
    }
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    main + sign * series / a.sqrt()
}

/// `Ψ(z) = cos(2π(z² − z − 1/16)) / cos(2πz)`, an entire function.
fn psi(z: Complex64) -> Complex64 {
    let arg = (z * z - z - 1.0 / 16.0) * (2.0 * PI);
    arg.cos() / (z * (2.0 * PI)).cos()
}

/// `Ψ^{(k)}(p)` for `k = 0..=max_order` from the Cauchy integral on a circle.
/// Nodes are rotated by half a step so none lies on the real axis, where the
/// quotient defining Ψ has removable zeros.
fn psi_derivatives(p: f64, max_order: usize) -> Vec<f64> {
    let mut values = [Complex64::new(0.0, 0.0); PSI_NODES];
    let mut nodes = [Complex64::new(0.0, 0.0); PSI_NODES];
    for (j, (v, w)) in values.iter_mut().zip(nodes.iter_mut()).enumerate() {
        let angle = 2.0 * PI * (j as f64 + 0.5) / PSI_NODES as f64;
        *w = Complex64::from_polar(1.0, angle);
        *v = psi(Complex64::new(p, 0.0) + *w * PSI_RADIUS);
    }
    let mut out = Vec::with_capacity(max_order + 1);
    let mut fact = 1.0;
    for k in 0..=max_order {
        if k > 0 {
            fact *= k as f64;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (v, w) in values.iter().zip(&nodes) {
            acc += v * w.powi(-(k as i32));
        }
        let coeff = acc / (PSI_NODES as f64) / PSI_RADIUS.powi(k as i32);
        out.push(coeff.re * fact);
    }
    out
}
