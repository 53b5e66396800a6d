//! One function per subcommand, each turning a configuration into a
//! [`Report`].

use birkhoff_lab::banach::{conditions_for, zeta_line_condition, zeta_power_condition, ConditionInputs, ConditionReport, Theorem};
use birkhoff_lab::dynamics::{MapKind, PartitionedMap, System};
use birkhoff_lab::observable::{Observable, ObservableKind, ZetaPart};
use birkhoff_lab::stats::{
    clt_test, coboundary_heuristic, direct_variance, edgeworth_eval, edgeworth_test, estimate_moments, mlclt_from_sets,
    normal_cdf, normal_pdf, normalized, pooled_mean, sample_birkhoff, sample_birkhoff_checkpoints, Arithmeticity,
    BirkhoffSampleSet, Bump, CltReport, EdgeworthModel, Estimate, MlcltReport, MlcltWeights, MomentEstimates,
    MomentParams,
};
use birkhoff_lab::transfer::{
    dfly_check, eigenvalue_curve, invariant_density, lp_bound_check, random_test_functions, DflyConfig, DflyReport,
};
use birkhoff_lab::Error;

use crate::config::ExperimentConfig;
use crate::output::{Cell, Diagnostic, Report, Table};
use crate::CliError;

const HIST_RANGE: f64 = 4.0;
const HIST_BINS: usize = 64;
const CDF_POINTS: usize = 161;

fn moment_params(cfg: &ExperimentConfig, system: &System) -> MomentParams {
    let s = &cfg.stats;
    let mut p = MomentParams::new(cfg.sampling(system));
    p.orbits = s.orbits;
    p.orbit_len = s.orbit_len;
    p.k_max = s.k_max;
    p.kappa3_orbits = s.kappa3_orbits;
    p.kappa3_grid = s.kappa3_grid.clone();
    p
}

fn system_and_observable(cfg: &ExperimentConfig) -> Result<(System, Observable), CliError> {
    let system = cfg.system()?;
    let obs = cfg.observable(&system)?;
    Ok((system, obs))
}

/// Interval map and observable for operator-level commands; the Boolean
/// system is replaced by the doubling map and the pulled-back observable.
fn interval_view(system: &System, obs: &Observable, report: &mut Report) -> Result<(PartitionedMap, Observable), CliError> {
    match system {
        System::Interval(map) => Ok((map.clone(), obs.clone())),
        System::Boolean(_) => {
            report
                .warnings
                .push("Boolean system: working with the conjugate doubling map and the pulled-back observable".into());
            Ok((PartitionedMap::doubling(), obs.pulled_back()?))
        }
    }
}

fn nan_or(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Fails with a hypothesis error when the sufficient condition of
/// `theorem` is violated. Observables without an envelope pass with a
/// warning.
fn gate(system: &System, obs: &Observable, theorem: Theorem, report: &mut Report) -> Result<(), CliError> {
    let map = match system {
        System::Interval(m) => m.clone(),
        System::Boolean(_) => PartitionedMap::doubling(),
    };
    let reports = match conditions_for(obs, &map) {
        Ok(r) => r,
        Err(Error::Unavailable(msg)) => {
            report.warnings.push(format!("{msg}; admissibility not checked"));
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    let boole = reports.iter().any(|r| matches!(r.inputs, ConditionInputs::Boole { .. }));
    let wanted = match (theorem, boole) {
        (Theorem::Edgeworth, true) => Theorem::BooleEdgeworth,
        (_, true) => Theorem::BooleClt,
        (t, false) => t,
    };
    if let Some(r) = reports.iter().find(|r| r.theorem == wanted) {
        if !r.satisfied {
            return Err(Error::Hypothesis(format!(
                "{} condition fails for {}: {} ≥ {}",
                r.theorem,
                obs.id(),
                r.lhs,
                r.rhs
            ))
            .into());
        }
        report
            .diagnostics
            .push(Diagnostic::ok("conditions", format!("{} margin {}", r.theorem, r.margin)));
    }
    Ok(())
}

fn moments_for(cfg: &ExperimentConfig, system: &System, obs: &Observable, with_kappa3: bool, report: &mut Report) -> Result<MomentEstimates, CliError> {
    let mut p = moment_params(cfg, system);
    if !with_kappa3 {
        p.kappa3_orbits = 0;
    }
    let m = estimate_moments(system, obs, &p)?;
    report.warnings.extend(m.warnings.iter().cloned());
    if m.degenerate {
        report.warnings.push("variance is degenerate (coboundary suspected)".into());
    }
    if !m.gk_plateau_ok {
        report
            .warnings
            .push("Green–Kubo and geometric variance estimates disagree".into());
    }
    report.diagnostics.push(Diagnostic::ok(
        "moments",
        format!("A = {} ± {}, σ² = {} ± {}", m.a.value, m.a.se, m.sigma2.value, m.sigma2.se),
    ));
    report.put("moments", &m);
    Ok(m)
}

/// Centring and scale: configured targets win over estimates.
fn centring(cfg: &ExperimentConfig, set: &BirkhoffSampleSet, m: &MomentEstimates) -> (f64, f64) {
    let a = cfg
        .stats
        .target_mean
        .unwrap_or_else(|| pooled_mean(set).combine(&m.a).value);
    let sigma2 = cfg.stats.target_sigma2.unwrap_or(m.sigma2.value);
    (a, sigma2)
}

fn histogram(values: &[f64], name: &str, edgeworth: Option<(&EdgeworthModel, usize)>) -> Table {
    let header: &[&'static str] = if edgeworth.is_some() {
        &["x", "density", "gaussian", "edgeworth"]
    } else {
        &["x", "density", "gaussian"]
    };
    let mut t = Table::new(name, header);
    let width = 2.0 * HIST_RANGE / HIST_BINS as f64;
    let mut counts = vec![0usize; HIST_BINS];
    for &v in values {
        let b = ((v + HIST_RANGE) / width).floor();
        if b >= 0.0 && (b as usize) < HIST_BINS {
            counts[b as usize] += 1;
        }
    }
    for (i, c) in counts.iter().enumerate() {
        let x = -HIST_RANGE + (i as f64 + 0.5) * width;
        let mut row: Vec<Cell> = vec![x.into(), (*c as f64 / (values.len() as f64 * width)).into(), normal_pdf(x).into()];
        if let Some((model, n)) = edgeworth {
            // derivative of Φ + Pφ/√n with P = q(1 − x²)
            let q = model.p[0];
            row.push((normal_pdf(x) * (1.0 + q * (x.powi(3) - 3.0 * x) / (n as f64).sqrt())).into());
        }
        t.push(row);
    }
    t
}

fn clt_tables(r: &CltReport) -> Table {
    let mut t = Table::new("clt", &["n", "m", "ks", "noise"]);
    for p in &r.trajectory {
        t.push(vec![p.n.into(), p.m.into(), p.ks.into(), p.noise.into()]);
    }
    t
}

fn mlclt_tables(r: &MlcltReport) -> [Table; 2] {
    let mut rows = Table::new(
        "mlclt",
        &["n", "rho", "ell", "estimate", "se", "target", "deviation", "window_samples"],
    );
    for row in &r.rows {
        rows.push(vec![
            row.n.into(),
            row.rho.into(),
            row.ell.into(),
            row.estimate.into(),
            row.se.into(),
            row.target.into(),
            row.deviation.into(),
            row.window_samples.into(),
        ]);
    }
    let mut sup = Table::new("mlclt_sup", &["n", "sup_deviation", "relative", "integral"]);
    for &(n, d) in &r.sup_deviation {
        sup.push(vec![n.into(), d.into(), (d / r.integral).into(), r.integral.into()]);
    }
    [rows, sup]
}

fn arithmetic_warning(cfg: &ExperimentConfig, system: &System, obs: &Observable, report: &mut Report) {
    let view = match system {
        System::Interval(m) if m.kind() == MapKind::Doubling => Ok((m.clone(), obs.clone())),
        System::Boolean(_) => obs.pulled_back().map(|o| (PartitionedMap::doubling(), o)),
        System::Interval(_) => {
            report
                .warnings
                .push("arithmeticity not checked: no exact cycles for this map".into());
            return;
        }
    };
    match view.and_then(|(map, o)| coboundary_heuristic(&map, &o, cfg.coboundary.max_period)) {
        Ok(r) => {
            if let Arithmeticity::Arithmetic { divisor } = r.arithmeticity {
                report.warnings.push(format!(
                    "cycle sums look arithmetic (divisor {divisor}); the non-lattice local limit may not apply"
                ));
            }
        }
        Err(e) => report.warnings.push(format!("arithmeticity not checked: {e}")),
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (system, obs) = system_and_observable(cfg)?;
    let mut report = Report::default();
    let set = sample_birkhoff(&system, &obs, cfg.stats.n, cfg.stats.m, &cfg.sampling(&system))?;
    let mut t = Table::new("simulate", &["index", "n", "start", "end", "sum"]);
    for i in 0..set.m {
        t.push(vec![i.into(), set.n.into(), set.starts[i].into(), set.ends[i].into(), set.samples[i].into()]);
    }
    report.tables.push(t);
    report.warnings.extend(set.warnings.iter().cloned());
    report.put("observable", obs.id());
    report.put("n", set.n);
    report.put("m", set.m);
    report.put("init_measure", set.init_measure.tag());
    report.put("mean", set.mean());
    report.put("variance", set.variance());
    report.put("rejected_draws", set.rejected_draws);
    report.diagnostics.push(Diagnostic::ok("sampling", format!("{} orbits", set.m)));
    Ok(report)
}

pub fn variance(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (system, obs) = system_and_observable(cfg)?;
    let mut report = Report::default();
    let m = moments_for(cfg, &system, &obs, true, &mut report)?;
    let mut direct_params = cfg.sampling(&system);
    direct_params.seed = cfg.seed.wrapping_add(1);
    report.seeds.push(direct_params.seed);
    let set = sample_birkhoff(&system, &obs, cfg.stats.n, cfg.stats.m, &direct_params)?;
    report.warnings.extend(set.warnings.iter().cloned());
    let direct = direct_variance(&set);

    let mut t = Table::new("variance", &["quantity", "n", "estimate", "se", "target", "deviation"]);
    let mut push = |q: &str, n: usize, e: &Estimate, target: Option<f64>| {
        let target = nan_or(target);
        t.push(vec![q.into(), n.into(), e.value.into(), e.se.into(), target.into(), (e.value - target).into()]);
    };
    let len = cfg.stats.orbit_len;
    push("A", len, &m.a, cfg.stats.target_mean);
    push("sigma2", len, &m.sigma2, cfg.stats.target_sigma2);
    push("sigma2_geometric", len, &m.sigma2_geometric, cfg.stats.target_sigma2);
    push("sigma2_direct", set.n, &direct, cfg.stats.target_sigma2);
    if let Some(k3) = &m.kappa3 {
        let n_max = cfg.stats.kappa3_grid.iter().copied().max().unwrap_or(0);
        push("kappa3", n_max, k3, None);
    }
    report.tables.push(t);

    let mut c = Table::new("correlations", &["lag", "estimate", "se"]);
    for (k, e) in m.correlations.iter().enumerate() {
        c.push(vec![k.into(), e.value.into(), e.se.into()]);
    }
    report.tables.push(c);
    report.put("sigma2_direct", direct);
    Ok(report)
}

pub fn clt(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (system, obs) = system_and_observable(cfg)?;
    let mut report = Report::default();
    gate(&system, &obs, Theorem::Clt, &mut report)?;
    let m = moments_for(cfg, &system, &obs, false, &mut report)?;
    let sets = sample_birkhoff_checkpoints(&system, &obs, &cfg.stats.n_grid, cfg.stats.m, &cfg.sampling(&system))?;
    let last = sets.last().expect("at least one checkpoint");
    report.warnings.extend(last.warnings.iter().cloned());
    let (a, sigma2) = centring(cfg, last, &m);
    let r = clt_test(&sets, a, sigma2)?;
    if r.flagged {
        report
            .warnings
            .push("normalized sums do not approach the normal law (CLT flagged)".into());
    }
    report.tables.push(clt_tables(&r));
    report.tables.push(histogram(&normalized(last, a, sigma2), "clt_hist", None));
    report.put("centring_mean", a);
    report.put("sigma2", sigma2);
    report.put("clt", &r);
    Ok(report)
}

pub fn edgeworth(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (system, obs) = system_and_observable(cfg)?;
    let mut report = Report::default();
    gate(&system, &obs, Theorem::Edgeworth, &mut report)?;
    let m = moments_for(cfg, &system, &obs, true, &mut report)?;
    let k3 = m
        .kappa3
        .ok_or_else(|| CliError::Config("the Edgeworth test needs stats.kappa3_orbits > 0".into()))?;
    let set = sample_birkhoff(&system, &obs, cfg.stats.n, cfg.stats.m, &cfg.sampling(&system))?;
    report.warnings.extend(set.warnings.iter().cloned());
    let (a, sigma2) = centring(cfg, &set, &m);
    let model = EdgeworthModel::new(sigma2.sqrt(), k3.value)?;
    let r = edgeworth_test(&set, a, &model)?;
    if r.improvement <= r.noise_floor {
        report
            .warnings
            .push("Edgeworth improvement does not exceed the Monte Carlo noise floor".into());
    }

    let mut t = Table::new("edgeworth", &["n", "m", "gaussian_sup", "edgeworth_sup", "improvement", "noise_floor"]);
    t.push(vec![
        r.n.into(),
        r.m.into(),
        r.gaussian_sup.into(),
        r.edgeworth_sup.into(),
        r.improvement.into(),
        r.noise_floor.into(),
    ]);
    report.tables.push(t);

    let mut z = normalized(&set, a, sigma2);
    z.sort_by(f64::total_cmp);
    let mut cdf = Table::new("edgeworth_cdf", &["x", "empirical", "gaussian", "edgeworth"]);
    for i in 0..CDF_POINTS {
        let x = -HIST_RANGE + 2.0 * HIST_RANGE * i as f64 / (CDF_POINTS - 1) as f64;
        let emp = z.partition_point(|&v| v <= x) as f64 / z.len() as f64;
        cdf.push(vec![x.into(), emp.into(), normal_cdf(x).into(), edgeworth_eval(&model, x, set.n).into()]);
    }
    report.tables.push(cdf);
    report.tables.push(histogram(&z, "edgeworth_hist", Some((&model, set.n))));
    report.put("centring_mean", a);
    report.put("sigma2", sigma2);
    report.put("kappa3", k3);
    report.put("model", model);
    report.put("edgeworth", r);
    Ok(report)
}

fn bump(cfg: &ExperimentConfig) -> Result<Bump, CliError> {
    Ok(Bump::triangular(cfg.stats.bump_half_width, cfg.stats.bump_height)?)
}

pub fn mlclt(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (system, obs) = system_and_observable(cfg)?;
    let mut report = Report::default();
    gate(&system, &obs, Theorem::Mlclt, &mut report)?;
    let bump = bump(cfg)?;
    arithmetic_warning(cfg, &system, &obs, &mut report);
    let m = moments_for(cfg, &system, &obs, false, &mut report)?;
    let sets = sample_birkhoff_checkpoints(&system, &obs, &cfg.stats.n_grid, cfg.stats.m, &cfg.sampling(&system))?;
    let last = sets.last().expect("at least one checkpoint");
    report.warnings.extend(last.warnings.iter().cloned());
    let (a, sigma2) = centring(cfg, last, &m);
    let r = mlclt_from_sets(&sets, a, sigma2, &cfg.stats.rho_grid, &bump, &MlcltWeights::default())?;
    if !r.decreasing() {
        report.warnings.push("MLCLT sup deviation does not decrease in n".into());
    }
    report.tables.extend(mlclt_tables(&r));
    report.put("centring_mean", a);
    report.put("sigma2", sigma2);
    report.put("sup_deviation", &r.sup_deviation);
    report.put("integral", r.integral);
    report.put("decreasing", r.decreasing());
    Ok(report)
}

pub fn spectrum(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (system, obs) = system_and_observable(cfg)?;
    let mut report = Report::default();
    let (map, obs) = interval_view(&system, &obs, &mut report)?;
    let cells = cfg.spectrum.cells;
    let mut t = Table::new("spectrum", &["s", "lambda_re", "lambda_im", "lambda_abs", "gap"]);
    if cfg.spectrum.s_grid.is_empty() {
        report.warnings.push("empty s grid: no eigenvalue curve".into());
    } else {
        let curve = eigenvalue_curve(&map, &obs, &cfg.spectrum.s_grid, cells)?;
        for p in &curve.samples {
            t.push(vec![p.s.into(), p.lambda.re.into(), p.lambda.im.into(), p.lambda.norm().into(), p.gap.into()]);
        }
        if let Some(p) = curve.samples.iter().find(|p| p.s == 0.0) {
            report.put("lambda0", p.lambda.re);
            report.put("gap0", p.gap);
        }
        report.put("spectral_mean", curve.mean);
        report.put("spectral_mean_error", curve.mean_error);
        report.put("spectral_variance", curve.variance);
        report.put("spectral_variance_error", curve.variance_error);
    }
    report.tables.push(t);
    let density = invariant_density(&map, cells)?;
    let mut d = Table::new("density", &["x", "density"]);
    for (i, v) in density.values().iter().enumerate() {
        d.push(vec![density.midpoint(i).into(), v.re.into()]);
    }
    report.tables.push(d);
    report.put("observable", obs.id());
    report.put("cells", cells);
    report.diagnostics.push(Diagnostic::ok("spectrum", format!("N = {cells}")));
    Ok(report)
}

fn dfly_config(cfg: &ExperimentConfig) -> DflyConfig {
    let b = &cfg.banach;
    let mut d = DflyConfig::new(b.alpha, b.beta, b.gamma);
    d.gamma_bar = cfg.dfly.gamma_bar;
    d.n_max = cfg.dfly.n_max;
    d.epsilon0 = b.epsilon0;
    d
}

pub fn dfly(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (system, obs) = system_and_observable(cfg)?;
    let mut report = Report::default();
    let (map, obs) = interval_view(&system, &obs, &mut report)?;
    let d = &cfg.dfly;
    let dcfg = dfly_config(cfg);
    let run = |n: usize| -> Result<(DflyReport, Vec<birkhoff_lab::banach::GridFunction>), CliError> {
        let samples = random_test_functions(cfg.seed, d.test_functions, n)?;
        Ok((dfly_check(&map, &obs, &dcfg, &d.s_values, &samples, &d.c_sweep)?, samples))
    };
    let (base, samples) = run(d.grid_n)?;
    let mut reports = vec![base];
    if d.grid_doubling {
        reports.push(run(2 * d.grid_n)?.0);
    }

    let mut rows = Table::new("dfly", &["grid_n", "s", "sample", "n", "iterate_norm", "strong", "weak"]);
    let mut fits = Table::new("dfly_fit", &["grid_n", "c", "c_tilde"]);
    for r in &reports {
        for row in &r.rows {
            rows.push(vec![
                r.grid_n.into(),
                row.s.into(),
                row.sample.into(),
                row.n.into(),
                row.iterate_norm.into(),
                row.strong.into(),
                row.weak.into(),
            ]);
        }
        for f in &r.fits {
            fits.push(vec![r.grid_n.into(), f.c.into(), f.c_tilde.into()]);
        }
    }
    report.tables.push(rows);
    report.tables.push(fits);

    let base = &reports[0];
    if let Some(fine) = reports.get(1) {
        let ratios: Vec<(f64, f64)> = base
            .fits
            .iter()
            .filter_map(|f| fine.c_tilde(f.c).map(|g| (f.c, g / f.c_tilde)))
            .collect();
        report.put("stable", ratios.iter().all(|(_, r)| (r - 1.0).abs() <= 0.2));
        report.put("grid_ratios", ratios);
    }

    let mut lp = Table::new("lp_bound", &["s", "max_ratio", "bound"]);
    for &s in &d.s_values {
        let r = lp_bound_check(&map, &obs, s, cfg.banach.gamma, &samples)?;
        lp.push(vec![s.into(), r.max_ratio.into(), r.bound.into()]);
    }
    report.tables.push(lp);
    report.put("kappa", base.kappa);
    report.put("gamma_bar", base.gamma_bar);
    report.put("holds", reports.iter().all(|r| r.holds));
    report.seeds.push(cfg.seed);
    Ok(report)
}

fn interval_row(t: &mut Table, r: &ConditionReport) {
    if let ConditionInputs::Interval { a, b, theta, eta_minus, eta_plus } = r.inputs {
        t.push(vec![
            r.theorem.tag().into(),
            a.into(),
            b.into(),
            theta.into(),
            eta_minus.into(),
            eta_plus.into(),
            r.lhs.into(),
            r.rhs.into(),
            r.satisfied.into(),
        ]);
    }
}

/// Condition checks for zeta observables.
fn zeta_conditions(obs: &Observable) -> Result<Option<ConditionReport>, CliError> {
    Ok(match obs.kind {
        ObservableKind::Zeta { sigma, .. } => Some(zeta_line_condition(sigma, obs.delta)?),
        ObservableKind::ZetaAbsPower { power } => Some(zeta_power_condition(power, obs.delta)?),
        _ => None,
    })
}

fn zeta_table(r: &ConditionReport) -> Table {
    let mut t = Table::new("conditions_zeta", &["theorem", "parameter", "delta", "lhs", "rhs", "satisfied"]);
    let (p, delta) = match r.inputs {
        ConditionInputs::ZetaLine { s, delta } => (s, delta),
        ConditionInputs::ZetaPower { a, delta } => (a, delta),
        _ => (f64::NAN, f64::NAN),
    };
    t.push(vec![r.theorem.tag().into(), p.into(), delta.into(), r.lhs.into(), r.rhs.into(), r.satisfied.into()]);
    t
}

pub fn conditions(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (system, obs) = system_and_observable(cfg)?;
    let mut report = Report::default();
    let map = match &system {
        System::Interval(m) => m.clone(),
        System::Boolean(_) => PartitionedMap::doubling(),
    };
    let reports = conditions_for(&obs, &map)?;
    let mut interval = Table::new(
        "conditions",
        &["theorem", "a", "b", "theta", "eta_minus", "eta_plus", "lhs", "rhs", "satisfied"],
    );
    let mut boole = Table::new("conditions_boole", &["theorem", "u", "v", "lhs", "rhs", "satisfied"]);
    for r in &reports {
        match r.inputs {
            ConditionInputs::Interval { .. } => interval_row(&mut interval, r),
            ConditionInputs::Boole { u, v } => boole.push(vec![
                r.theorem.tag().into(),
                u.into(),
                v.into(),
                r.lhs.into(),
                r.rhs.into(),
                r.satisfied.into(),
            ]),
            _ => {}
        }
    }
    if !interval.rows.is_empty() {
        report.tables.push(interval);
    }
    if !boole.rows.is_empty() {
        report.tables.push(boole);
    }
    let mut all = reports;
    if let Some(z) = zeta_conditions(&obs)? {
        report.tables.push(zeta_table(&z));
        all.push(z);
    }
    report.put("observable", obs.id());
    report.put("reports", &all);
    report.put("all_satisfied", all.iter().all(|r| r.satisfied));
    Ok(report)
}

fn coboundary_table(r: &birkhoff_lab::stats::CoboundaryReport) -> Table {
    let mut t = Table::new("coboundary", &["period", "first_num", "first_den", "sum", "deviation"]);
    for c in &r.cycles {
        t.push(vec![c.period.into(), c.first.0.into(), c.first.1.into(), c.sum.into(), c.deviation.into()]);
    }
    t
}

pub fn coboundary(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (system, obs) = system_and_observable(cfg)?;
    let mut report = Report::default();
    let (map, obs) = interval_view(&system, &obs, &mut report)?;
    let r = coboundary_heuristic(&map, &obs, cfg.coboundary.max_period)?;
    report.tables.push(coboundary_table(&r));
    report.put("observable", &r.observable);
    report.put("cohomology", r.cohomology);
    report.put("arithmeticity", r.arithmeticity);
    report.put("candidate", r.candidate);
    report.put("exact", r.exact);
    report.put("skipped", r.skipped);
    report.put("tolerance", r.tolerance);
    Ok(report)
}

/// Mean of `ℜζ(σ + iX)` for Cauchy `X`, from the Poisson integral of
/// `ζ(s) − 1/(s−1)` and the pole term.
pub fn lindelof_target(obs: &Observable) -> Result<Option<f64>, CliError> {
    Ok(match obs.kind {
        ObservableKind::Zeta { part: ZetaPart::Re, sigma } => {
            let z = obs.zeta.zeta(sigma + 1.0, 0.0)?.re;
            Some(z - 1.0 / sigma - 1.0 / (2.0 - sigma))
        }
        ObservableKind::Zeta { part: ZetaPart::Im, .. } => Some(0.0),
        _ => None,
    })
}

fn stage<T>(report: &mut Report, name: &str, r: Result<T, CliError>) -> Option<T> {
    match r {
        Ok(v) => {
            report.diagnostics.push(Diagnostic::ok(name, "done"));
            Some(v)
        }
        Err(e) => {
            report.warnings.push(format!("stage {name} skipped: {e}"));
            report.diagnostics.push(Diagnostic::failed(name, &e));
            None
        }
    }
}

pub fn lindelof(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (system, obs) = system_and_observable(cfg)?;
    if !obs.is_zeta() {
        return Err(Error::Precondition(format!("lindelof needs a zeta observable, got {}", obs.id())).into());
    }
    let mut report = Report::default();
    let mut summary = serde_json::Map::new();

    let z = zeta_conditions(&obs)?.expect("zeta observable");
    report.tables.push(zeta_table(&z));
    if !z.satisfied {
        return Err(Error::Hypothesis(format!("{} condition fails: {} ≥ {}", z.theorem, z.lhs, z.rhs)).into());
    }
    report
        .diagnostics
        .push(Diagnostic::ok("conditions", format!("{} margin {}", z.theorem, z.margin)));
    summary.insert("condition".into(), serde_json::to_value(z).unwrap_or_default());

    let cob = interval_view(&system, &obs, &mut report)
        .and_then(|(map, o)| Ok(coboundary_heuristic(&map, &o, cfg.coboundary.max_period)?));
    if let Some(r) = stage(&mut report, "coboundary", cob) {
        report.tables.push(coboundary_table(&r));
        summary.insert("cohomology".into(), serde_json::to_value(r.cohomology).unwrap_or_default());
        summary.insert("arithmeticity".into(), serde_json::to_value(r.arithmeticity).unwrap_or_default());
    }

    let moments = {
        let mut p = moment_params(cfg, &system);
        p.kappa3_orbits = 0;
        estimate_moments(&system, &obs, &p).map_err(CliError::from)
    };
    let moments = stage(&mut report, "moments", moments);

    let n = cfg.stats.n;
    let mut grid: Vec<usize> = cfg.stats.n_grid.iter().copied().filter(|&k| k <= n).collect();
    grid.push(n);
    let sets = sample_birkhoff_checkpoints(&system, &obs, &grid, cfg.stats.m, &cfg.sampling(&system))?;
    let last = sets.last().expect("n is a checkpoint");
    report.warnings.extend(last.warnings.iter().cloned());
    let mean = pooled_mean(last);
    let target = cfg.stats.target_mean.or(lindelof_target(&obs)?);
    let mut t = Table::new("lindelof", &["quantity", "n", "estimate", "se", "target", "deviation"]);
    let tv = nan_or(target);
    t.push(vec!["mean".into(), n.into(), mean.value.into(), mean.se.into(), tv.into(), (mean.value - tv).into()]);
    if let Some(m) = &moments {
        let s2 = nan_or(cfg.stats.target_sigma2);
        t.push(vec![
            "sigma2".into(),
            cfg.stats.orbit_len.into(),
            m.sigma2.value.into(),
            m.sigma2.se.into(),
            s2.into(),
            (m.sigma2.value - s2).into(),
        ]);
        summary.insert("moments".into(), serde_json::to_value(m).unwrap_or_default());
    }
    report.tables.push(t);
    summary.insert("mean".into(), mean.value.into());
    summary.insert("mean_se".into(), mean.se.into());
    summary.insert("target_mean".into(), target.into());
    summary.insert("rejected_draws".into(), last.rejected_draws.into());
    report
        .diagnostics
        .push(Diagnostic::ok("mean", format!("{} ± {} over {} orbits", mean.value, mean.se, last.m)));

    if let Some(m) = &moments {
        let a = mean.combine(&m.a).value;
        let sigma2 = cfg.stats.target_sigma2.unwrap_or(m.sigma2.value);
        if let Some(r) = stage(&mut report, "clt", clt_test(&sets, a, sigma2).map_err(CliError::from)) {
            report.tables.push(clt_tables(&r));
            report.tables.push(histogram(&normalized(last, a, sigma2), "clt_hist", None));
            summary.insert("clt".into(), serde_json::to_value(&r).unwrap_or_default());
        }
        let ml = bump(cfg).and_then(|b| {
            Ok(mlclt_from_sets(&sets, a, sigma2, &cfg.stats.rho_grid, &b, &MlcltWeights::default())?)
        });
        if let Some(r) = stage(&mut report, "mlclt", ml) {
            summary.insert("mlclt_sup_deviation".into(), serde_json::to_value(&r.sup_deviation).unwrap_or_default());
            report.tables.extend(mlclt_tables(&r));
        }
    }

    for (k, v) in &summary {
        report.summary.insert(k.clone(), v.clone());
    }
    report.put("observable", obs.id());
    report.put("n", n);
    report.put("m", cfg.stats.m);
    let mut doc = report.summary.clone();
    doc.insert("diagnostics".into(), serde_json::to_value(&report.diagnostics).unwrap_or_default());
    doc.insert("warnings".into(), serde_json::to_value(&report.warnings).unwrap_or_default());
    report.documents.push(("lindelof.json".into(), serde_json::Value::Object(doc)));
    Ok(report)
}
