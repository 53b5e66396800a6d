//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use birkhoff_lab::banach::{
    clt_condition, conditions_for, ConditionReport, edgeworth_condition, mlclt_condition, seminorm, threshold, zeta_line_condition,
    zeta_power_condition, GridFunction, Theorem, DEFAULT_GRID,
};
use birkhoff_lab::dynamics::{PartitionedMap, System};
use birkhoff_lab::observable::Observable;
use birkhoff_lab::stats::{
    clt_test, coboundary_heuristic, direct_variance, edgeworth_test, estimate_moments, mlclt_from_sets, pooled_mean,
    sample_birkhoff, sample_birkhoff_checkpoints, BirkhoffSampleSet, Bump, Cohomology, EdgeworthModel, InitMeasure,
    MlcltWeights, MomentEstimates, MomentParams, SamplingParams,
};
use birkhoff_lab::transfer::{
    default_s_grid, dfly_check, eigenvalue_curve, invariant_density, leading_eigen, lp_bound_check,
    random_test_functions, ulam_matrix, DflyConfig, DEFAULT_C_SWEEP,
};
use birkhoff_lab::zeta::ZetaEvaluator;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

type Verdict = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn doubling() -> System {
    PartitionedMap::doubling().system()
}

fn lebesgue(seed: u64) -> SamplingParams {
    SamplingParams::new(InitMeasure::LebesgueOnI, seed)
}

fn moments(obs: &Observable, seed: u64, kappa3_orbits: usize) -> MomentEstimates {
    let mut p = MomentParams::new(lebesgue(seed));
    p.kappa3_orbits = kappa3_orbits;
    estimate_moments(&doubling(), obs, &p).expect("moments")
}

/// `ζ(3/2)` from partial sums with an Euler–Maclaurin tail.
fn zeta_three_halves() -> f64 {
    let n = 100_000usize;
    let head: f64 = (1..n).rev().map(|k| (k as f64).powf(-1.5)).sum();
    let x = n as f64;
    head + 2.0 / x.sqrt() + 0.5 * x.powf(-1.5) + 1.5 / 12.0 * x.powf(-2.5) - 1.5 * 2.5 * 3.5 / 720.0 * x.powf(-4.5)
}

/// `Im ln Γ(1/4 + it/2) − (t/2) ln π` by a shifted Stirling series.
fn theta(t: f64) -> f64 {
    let mut z = Complex64::new(0.25, 0.5 * t);
    let mut shift = Complex64::new(0.0, 0.0);
    while z.re < 20.0 {
        shift += z.ln();
        z += 1.0;
    }
    let z2 = z * z;
    let stirling = (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2)
        + 1.0 / (1260.0 * z * z2 * z2);
    (stirling - shift).im - 0.5 * t * PI.ln()
}

fn lindelof_mean() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = birkhoff_lab_cli::run_from([
        "birkhoff-lab",
        "lindelof",
        "--set",
        "system.kind=boolean",
        "--set",
        "observable={kind = \"zeta_re\", sigma = 0.5}",
        "--set",
        "stats.n=10000",
        "--set",
        "stats.m=500",
        "--seed",
        "20240",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    if out.exit_code != 0 {
        return Err(format!("exit {} ({:?})", out.exit_code, out.error));
    }
    let text = std::fs::read_to_string(dir.path().join("lindelof.json")).map_err(|e| e.to_string())?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mean = doc["mean"].as_f64().ok_or("no mean in lindelof.json")?;
    let target = zeta_three_halves() - 8.0 / 3.0;
    ensure(
        (mean - target).abs() < 0.01 && (target + 0.054).abs() < 5e-4,
        format!("mean {mean:.5} vs ζ(3/2)−8/3 = {target:.5}"),
    )
}

fn zeta_checks() -> Verdict {
    let ev = ZetaEvaluator::default();
    let z2 = ev.zeta(2.0, 0.0).map_err(|e| e.to_string())?.re;
    let z32 = ev.zeta(1.5, 0.0).map_err(|e| e.to_string())?.re;
    let e2 = (z2 - PI * PI / 6.0).abs();
    let e32 = (z32 - zeta_three_halves()).abs();
    let wide = ZetaEvaluator { em_terms: 400, ..ev };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let (mut rs_em, mut z_imag) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let t: f64 = rng.random_range(30.0..200.0);
        let rs = ev.zeta_rs(t).map_err(|e| e.to_string())?;
        let em = wide.zeta_em(0.5, t).map_err(|e| e.to_string())?;
        rs_em = rs_em.max((rs - em).norm());
        z_imag = z_imag.max((em * Complex64::from_polar(1.0, theta(t))).im.abs());
    }
    ensure(
        e2 < 1e-10 && e32 < 1e-8 && rs_em < 1e-5 && z_imag < 1e-6,
        format!("|ζ(2)−π²/6| {e2:.1e}, |ζ(3/2) err| {e32:.1e}, max |RS−EM| {rs_em:.1e}, max |Im Z| {z_imag:.1e}"),
    )
}

fn osc_verdicts(c: f64) -> Vec<(Theorem, bool)> {
    conditions_for(&Observable::osc(c), &PartitionedMap::doubling())
        .expect("conditions")
        .iter()
        .map(|r| (r.theorem, r.satisfied))
        .collect()
}

fn interval_thresholds() -> Verdict {
    let clt = 2f64.sqrt() - 1.0;
    let edge = (7.0f64 / 6.0).sqrt() - 1.0;
    let sat = |c: f64, t: Theorem| osc_verdicts(c).iter().any(|&(th, s)| th == t && s);
    let ok = sat(clt - 1e-6, Theorem::Clt)
        && !sat(clt + 1e-6, Theorem::Clt)
        && sat(clt - 1e-6, Theorem::Mlclt)
        && !sat(clt + 1e-6, Theorem::Mlclt)
        && sat(edge - 1e-6, Theorem::Edgeworth)
        && !sat(edge + 1e-6, Theorem::Edgeworth);
    let direct = |f: fn(f64, f64, f64, f64, f64) -> birkhoff_lab::Result<ConditionReport>, c: f64| {
        f(c, c + 2.0, 1.0, 2.0, 2.0).map(|r| r.satisfied)
    };
    let ok = ok
        && direct(clt_condition, clt - 1e-6) == Ok(true)
        && direct(mlclt_condition, clt + 1e-6) == Ok(false)
        && direct(edgeworth_condition, edge + 1e-6) == Ok(false);
    ensure(ok, format!("flips at √2−1 = {clt:.6} and √(7/6)−1 = {edge:.6}"))
}

fn corollary_thresholds() -> Verdict {
    let line = threshold(|s| zeta_line_condition(s, 0.0), 0.01, 0.99, 1e-13).map_err(|e| e.to_string())?;
    let power = threshold(|a| zeta_power_condition(a, 0.0), 1.0, 4.0, 1e-13).map_err(|e| e.to_string())?;
    let (l0, p0) = (3.0 - 2.0 * 2f64.sqrt(), 84.0 / 13.0 * (2f64.sqrt() - 1.0));
    ensure(
        (line - l0).abs() < 1e-9 && (power - p0).abs() < 1e-9 && (p0 - 2.677).abs() < 1e-3,
        format!("line boundary {line:.12}, power boundary {power:.12}"),
    )
}

fn green_kubo() -> Verdict {
    let obs = Observable::affine(1.0, -0.5);
    let m = moments(&obs, 101, 0);
    // Cov(x, T^k x) = 2^{−k}/12 for the doubling map
    let oracle = 1.0 / 12.0 + 2.0 * (1..60).map(|k| 2f64.powi(-k) / 12.0).sum::<f64>();
    let set = sample_birkhoff(&doubling(), &obs, 10_000, 20_000, &lebesgue(102)).map_err(|e| e.to_string())?;
    let direct = direct_variance(&set);
    let lag_ok = m.correlations.iter().take(8).enumerate().all(|(k, c)| {
        let exact = 2f64.powi(-(k as i32)) / 12.0;
        (c.value - exact).abs() < 4.0 * c.se + 1e-5
    });
    ensure(
        (m.sigma2.value - oracle).abs() < 0.01 && (direct.value / m.sigma2.value - 1.0).abs() < 0.05 && lag_ok,
        format!(
            "σ² = {:.4} ± {:.4} (oracle {oracle}), Var(S_n)/n = {:.4} at n = 10⁴",
            m.sigma2.value, m.sigma2.se, direct.value
        ),
    )
}

fn spectral() -> Verdict {
    let maps = [
        PartitionedMap::doubling(),
        PartitionedMap::piecewise_linear(&[0.0, 0.3, 1.0], &[1.0 / 0.3, -1.0 / 0.7]).unwrap(),
        PartitionedMap::piecewise_linear(&[0.0, 0.2, 0.6, 1.0], &[5.0, 2.5, 2.5]).unwrap(),
        PartitionedMap::quadratic_branch(&[0.0, 0.5, 1.0], 0.8).unwrap(),
    ];
    let zero = Observable::constant(0.0);
    let mut worst = 0.0f64;
    for map in &maps {
        let d = leading_eigen(&ulam_matrix(map, &zero, 0.0, 1024).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        worst = worst.max((d.lambda - 1.0).norm());
    }
    let rho = invariant_density(&maps[0], 1024).map_err(|e| e.to_string())?;
    let l1 = rho.values().iter().map(|z| (z - 1.0).norm()).sum::<f64>() / 1024.0;

    let m64 = ulam_matrix(&maps[0], &zero, 0.0, 64).map_err(|e| e.to_string())?;
    let dense = m64.dense();
    let a = DMatrix::from_fn(64, 64, |i, j| dense[i * 64 + j].re);
    let mut moduli: Vec<f64> = a.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    moduli.sort_by(|x, y| y.total_cmp(x));
    let oracle_gap = 1.0 - moduli[1] / moduli[0];
    let gap = leading_eigen(&m64).map_err(|e| e.to_string())?.gap;

    let obs = Observable::affine(1.0, -0.5);
    let curve = eigenvalue_curve(&maps[0], &obs, &default_s_grid(), 1024).map_err(|e| e.to_string())?;
    let mc = moments(&obs, 103, 0).a;
    let tol = 3.0 * (curve.mean_error + mc.se);
    ensure(
        worst < 1e-8 && l1 < 2.0 / 1024.0 && oracle_gap >= 0.4 && gap >= 0.4 && (curve.mean - mc.value).abs() < tol,
        format!(
            "max |λ(0)−1| {worst:.1e} over {} maps, density L¹ {l1:.1e}, gap {gap:.3} (dense {oracle_gap:.3}), mean {:.2e} vs MC {:.2e} ± {:.1e}",
            maps.len(),
            curve.mean,
            mc.value,
            mc.se
        ),
    )
}

fn dfly() -> Verdict {
    let map = PartitionedMap::doubling();
    let obs = Observable::osc(0.2);
    let cfg = DflyConfig::new(0.2, 0.3, 2.0);
    let fit = |n: usize| -> Result<(bool, f64, f64), String> {
        let hs = random_test_functions(17, 20, n).map_err(|e| e.to_string())?;
        let r = dfly_check(&map, &obs, &cfg, &[0.0, 0.3, 1.0], &hs, &DEFAULT_C_SWEEP).map_err(|e| e.to_string())?;
        Ok((r.holds && r.rows.iter().all(|row| row.n <= 10), r.kappa, r.c_tilde(1.0).unwrap_or(f64::INFINITY)))
    };
    let (h1, kappa, a) = fit(512)?;
    let (h2, _, b) = fit(1024)?;
    ensure(
        h1 && h2 && (kappa - 2f64.powf(-0.1)).abs() < 1e-12 && a.is_finite() && (b / a - 1.0).abs() <= 0.2,
        format!("κ = {kappa:.6}, C̃ = {a:.4} at N=512 and {b:.4} at N=1024"),
    )
}

fn lp_bound() -> Verdict {
    let map = PartitionedMap::doubling();
    let hs = random_test_functions(23, 50, 1024).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut bound = 0.0;
    for s in [0.0, 0.5, 2.0] {
        let r = lp_bound_check(&map, &Observable::osc(0.2), s, 2.0, &hs).map_err(|e| e.to_string())?;
        worst = worst.max(r.max_ratio);
        bound = r.bound;
    }
    ensure(
        bound == 4.0 && worst <= bound + 0.01,
        format!("max ratio {worst:.4} ≤ k·η₋^(γ−1) = {bound}"),
    )
}

fn seminorm_bound() -> Verdict {
    let one = GridFunction::constant(DEFAULT_GRID, 1.0).map_err(|e| e.to_string())?;
    let eps0 = 0.1;
    let mut detail = Vec::new();
    let mut ok = true;
    for alpha in [0.2, 0.4] {
        for beta in [0.3, 0.6] {
            let v = seminorm(&one, alpha, beta, eps0).map_err(|e| e.to_string())?.value;
            let bound = 2f64.powf(3.0 - 2.0 * alpha) * eps0.powf(1.0 - beta);
            ok &= v <= bound;
            detail.push(format!("({alpha},{beta}): {v:.3} ≤ {bound:.3}"));
        }
    }
    ensure(ok, detail.join(", "))
}

struct CltData {
    sets: Vec<BirkhoffSampleSet>,
    a: f64,
    sigma2: f64,
}

fn clt_data() -> &'static Result<CltData, String> {
    static DATA: OnceLock<Result<CltData, String>> = OnceLock::new();
    DATA.get_or_init(|| {
        let obs = Observable::osc(0.2);
        let m = moments(&obs, 104, 0);
        let sets = sample_birkhoff_checkpoints(&doubling(), &obs, &[100, 1000, 10_000], 100_000, &lebesgue(105))
            .map_err(|e| e.to_string())?;
        let a = pooled_mean(&sets[2]).combine(&m.a).value;
        Ok(CltData { sets, a, sigma2: m.sigma2.value })
    })
}

fn clt() -> Verdict {
    let d = clt_data().as_ref().map_err(Clone::clone)?;
    let r = clt_test(&d.sets, d.a, d.sigma2).map_err(|e| e.to_string())?;
    let ks: Vec<String> = r.trajectory.iter().map(|p| format!("{:.4}", p.ks)).collect();
    ensure(
        r.ks < 0.02 && r.monotone,
        format!("KS at n = 10², 10³, 10⁴: {} (monotone: {})", ks.join(", "), r.monotone),
    )
}

fn mlclt() -> Verdict {
    let d = clt_data().as_ref().map_err(Clone::clone)?;
    let bump = Bump::triangular(10.0, 1.0).map_err(|e| e.to_string())?;
    let sets = &d.sets[1..];
    let r = mlclt_from_sets(sets, d.a, d.sigma2, &[-2.0, -1.0, 0.0, 1.0, 2.0], &bump, &MlcltWeights::default())
        .map_err(|e| e.to_string())?;
    let (s3, s4) = (r.sup_deviation[0].1, r.sup_deviation[1].1);
    ensure(
        s4 < s3 && s4 < 0.05 * r.integral,
        format!("sup deviation {s3:.4} at n = 10³, {s4:.4} at n = 10⁴ (∫V = {})", r.integral),
    )
}

fn edgeworth() -> Verdict {
    let obs = Observable::exponential(20.0);
    let admissible = conditions_for(&obs, &PartitionedMap::doubling())
        .map_err(|e| e.to_string())?
        .iter()
        .any(|r| r.theorem == Theorem::Edgeworth && r.satisfied);
    let m = moments(&obs, 106, 10_000);
    let k3 = m.kappa3.ok_or("no κ₃")?;
    let set = sample_birkhoff(&doubling(), &obs, 1000, 100_000, &lebesgue(107)).map_err(|e| e.to_string())?;
    let a = pooled_mean(&set).combine(&m.a).value;
    let model = EdgeworthModel::new(m.sigma2.value.sqrt(), k3.value).map_err(|e| e.to_string())?;
    let r = edgeworth_test(&set, a, &model).map_err(|e| e.to_string())?;
    ensure(
        admissible && r.edgeworth_sup <= r.gaussian_sup && r.improvement > r.noise_floor,
        format!(
            "{}: Gaussian sup {:.4}, Edgeworth sup {:.4}, improvement {:.4} > noise {:.4}",
            obs.id(),
            r.gaussian_sup,
            r.edgeworth_sup,
            r.improvement,
            r.noise_floor
        ),
    )
}

fn coboundary() -> Verdict {
    let map = PartitionedMap::doubling();
    let cob = Observable::coboundary(map.clone());
    let m = moments(&cob, 108, 0);
    let r = coboundary_heuristic(&map, &cob, 12).map_err(|e| e.to_string())?;
    let zero_sums = r.exact && r.cycles.iter().all(|c| c.sum == 0.0);
    let x = coboundary_heuristic(&map, &Observable::affine(1.0, 0.0), 12).map_err(|e| e.to_string())?;
    ensure(
        m.degenerate && zero_sums && x.exact && x.cohomology == Cohomology::NotCohomologousToConstant,
        format!(
            "ψ(x)−x: degenerate {}, {} exact cycle sums all 0: {zero_sums}; x: {:?}",
            m.degenerate,
            r.cycles.len(),
            x.cohomology
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 13] = [
        ("lindelof-mean", lindelof_mean),
        ("zeta-evaluator", zeta_checks),
        ("interval-thresholds", interval_thresholds),
        ("zeta-thresholds", corollary_thresholds),
        ("green-kubo", green_kubo),
        ("spectral", spectral),
        ("dfly", dfly),
        ("lp-bound", lp_bound),
        ("seminorm-bound", seminorm_bound),
        ("clt", clt),
        ("mlclt", mlclt),
        ("edgeworth", edgeworth),
        ("coboundary", coboundary),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
