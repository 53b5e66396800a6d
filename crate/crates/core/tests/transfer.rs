use birkhoff_lab::banach::GridFunction;
use birkhoff_lab::dynamics::PartitionedMap;
use birkhoff_lab::observable::Observable;
use birkhoff_lab::transfer::{
    char_fn_check, dfly_check, invariant_density, leading_eigen, random_test_functions, ulam_matrix,
    DflyConfig, DEFAULT_C_SWEEP,
};
use nalgebra::DMatrix;
use num_complex::Complex64;

fn oracle_moduli(map: &PartitionedMap, n: usize) -> Vec<f64> {
    let m = ulam_matrix(map, &Observable::constant(0.0), 0.0, n).unwrap();
    let dense = m.dense();
    let a = DMatrix::from_fn(n, n, |i, j| dense[i * n + j].re);
    let mut moduli: Vec<f64> = a.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    moduli.sort_by(|x, y| y.total_cmp(x));
    moduli
}

#[test]
fn doubling_gap_against_dense_eigensolver() {
    let map = PartitionedMap::doubling();
    let moduli = oracle_moduli(&map, 64);
    assert!((moduli[0] - 1.0).abs() < 1e-10);
    let oracle_gap = 1.0 - moduli[1] / moduli[0];
    assert!(oracle_gap >= 0.4);
    let d = leading_eigen(&ulam_matrix(&map, &Observable::constant(0.0), 0.0, 64).unwrap()).unwrap();
    assert!(d.gap >= 0.4);
}

#[test]
fn second_eigenvalue_against_dense_eigensolver() {
    let maps = [
        PartitionedMap::piecewise_linear(&[0.0, 0.3, 1.0], &[1.0 / 0.3, -1.0 / 0.7]).unwrap(),
        PartitionedMap::quadratic_branch(&[0.0, 0.5, 1.0], 0.8).unwrap(),
    ];
    for map in &maps {
        let moduli = oracle_moduli(map, 128);
        let d = leading_eigen(&ulam_matrix(map, &Observable::constant(0.0), 0.0, 128).unwrap()).unwrap();
        assert!((d.lambda.norm() - moduli[0]).abs() < 1e-8);
        assert!(
            (d.lambda2_abs - moduli[1]).abs() < 0.05 * moduli[1] + 1e-3,
            "{map:?}: deflated {} vs oracle {}",
            d.lambda2_abs,
            moduli[1]
        );
    }
}

#[test]
fn ulam_consistency_under_refinement() {
    let map = PartitionedMap::quadratic_branch(&[0.0, 0.5, 1.0], 0.8).unwrap();
    let zero = Observable::constant(0.0);
    let coarse = leading_eigen(&ulam_matrix(&map, &zero, 0.0, 512).unwrap()).unwrap();
    let fine = leading_eigen(&ulam_matrix(&map, &zero, 0.0, 1024).unwrap()).unwrap();
    assert!(
        (fine.lambda2_abs - coarse.lambda2_abs).abs() < 0.02 * coarse.lambda2_abs,
        "{} vs {}",
        coarse.lambda2_abs,
        fine.lambda2_abs
    );
    let fine_on_coarse = fine.eigenfunction.coarsen().unwrap();
    let l1: f64 = fine_on_coarse
        .values()
        .iter()
        .zip(coarse.eigenfunction.values())
        .map(|(a, b)| (a - b).norm())
        .sum::<f64>()
        / 512.0;
    assert!(l1 < 0.02, "density L1 change {l1}");
}

#[test]
fn invariant_density_matches_orbit_histogram() {
    let map = PartitionedMap::quadratic_branch(&[0.0, 0.4, 1.0], 0.6).unwrap();
    let bins = 64;
    let rho = invariant_density(&map, 1024).unwrap();
    let mut coarse = rho;
    while coarse.len() > bins {
        coarse = coarse.coarsen().unwrap();
    }
    let mut hist = vec![0u64; bins];
    let points = 10_000_000usize;
    let mut x = 0.123_456_789_f64;
    for _ in 0..1000 {
        x = map.apply(x).unwrap();
    }
    for _ in 0..points {
        hist[((x * bins as f64) as usize).min(bins - 1)] += 1;
        x = map.apply(x).unwrap();
    }
    let tv: f64 = 0.5
        * hist
            .iter()
            .zip(coarse.values())
            .map(|(&h, r)| (h as f64 / points as f64 - r.re / bins as f64).abs())
            .sum::<f64>();
    assert!(tv < 0.02, "total variation {tv}");
}

#[test]
fn doubling_density_is_lebesgue() {
    let rho = invariant_density(&PartitionedMap::doubling(), 1024).unwrap();
    let l1: f64 = rho.values().iter().map(|z| (z - 1.0).norm()).sum::<f64>() / 1024.0;
    assert!(l1 < 2.0 / 1024.0);
}

#[test]
fn non_arithmetic_twist_leaves_the_unit_circle() {
    let map = PartitionedMap::doubling();
    let obs = Observable::osc(0.2);
    for k in 1..=6 {
        let s = 0.5 * k as f64;
        let d = leading_eigen(&ulam_matrix(&map, &obs, s, 256).unwrap()).unwrap();
        assert!(d.lambda.norm() < 1.0, "s = {s}: |λ| = {}", d.lambda.norm());
    }
}

#[test]
fn char_fn_mutual_oracle() {
    let map = PartitionedMap::doubling();
    let rho = GridFunction::constant(1024, 1.0).unwrap();
    let r = char_fn_check(&map, &Observable::affine(1.0, -0.5), &rho, 0.5, 5, 100_000, 0.01, 99).unwrap();
    assert!(r.residual < 3.0 * (r.standard_error + 5.0 / 1024.0));
}

#[test]
fn dfly_constants_stable_under_grid_doubling() {
    let map = PartitionedMap::doubling();
    let obs = Observable::osc(0.2);
    let cfg = DflyConfig::new(0.2, 0.3, 2.0);
    let fit = |n: usize| {
        let hs = random_test_functions(11, 20, n).unwrap();
        let r = dfly_check(&map, &obs, &cfg, &[0.0, 0.3, 1.0], &hs, &DEFAULT_C_SWEEP).unwrap();
        assert!(r.holds);
        r.c_tilde(1.0).unwrap()
    };
    let (a, b) = (fit(512), fit(1024));
    assert!(a.is_finite() && b.is_finite());
    assert!((b / a - 1.0).abs() < 0.2, "C̃ = {a} at N=512, {b} at N=1024");
}

#[test]
fn eigenfunction_is_normalised() {
    let map = PartitionedMap::piecewise_linear(&[0.0, 0.5, 1.0], &[2.0, -2.0]).unwrap();
    let d = leading_eigen(&ulam_matrix(&map, &Observable::constant(0.0), 0.0, 256).unwrap()).unwrap();
    assert!((d.eigenfunction.integral() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
}
