mod common;

use common::*;
use cpirt::estimation::{numerical_hessian_se, STANDARD_ERROR_FLAG_LIMIT};
use cpirt::simulation::simulate_dataset;
use cpirt::{fit, Error, FitConfig, ResponseMatrix, StructuralParameters};
use rand::Rng;

#[test]
fn baseline_fit_matches_independent_em() {
    let d = [-0.8, -0.3, 0.0, 0.4, 0.9, 1.3];
    let a = [0.7, 1.2, 0.9, 1.5, 0.6, 1.0];
    let data = simulate_2pl(&mut rng(21), &d, &a, 1500);
    let config = FitConfig::default();
    let ours = fit(&data, 6, &config).unwrap();
    assert!(ours.converged);
    let quad = config.quadrature().unwrap();
    let em = em_2pl(&data, &quad.nodes, &quad.weights, 1e-11, 20_000);
    for j in 0..6 {
        assert!((ours.items.d[j] - em.d[j]).abs() < 1e-4, "d[{j}]: {} vs {}", ours.items.d[j], em.d[j]);
        assert!((ours.items.a[j] - em.a[j]).abs() < 1e-4, "a[{j}]: {} vs {}", ours.items.a[j], em.a[j]);
    }
    assert!((ours.loglik - em.loglik).abs() < 1e-6, "{} vs {}", ours.loglik, em.loglik);
}

#[test]
fn coin_flips_give_zero_easiness() {
    let mut r = rng(22);
    let entries = (0..2000 * 6).map(|_| r.random_range(0..2u8)).collect();
    let data = ResponseMatrix::new(2000, 6, entries).unwrap();
    let result = fit(&data, 6, &FitConfig::default()).unwrap();
    for &dj in &result.items.d {
        assert!(dj.abs() < 0.15, "{dj}");
    }
}

#[test]
fn result_invariants_and_row_order() {
    let s = StructuralParameters::new(0.2, -0.1).unwrap();
    let sim = simulate_dataset(400, 8, 5, &s, 3).unwrap();
    let config = FitConfig::default();
    let a = fit(&sim.responses, 5, &config).unwrap();
    assert!(a.converged);
    assert_eq!(a.n_free_parameters, 2 * 8 + 3 + 2);
    let bic = -2.0 * a.loglik + a.n_free_parameters as f64 * 400f64.ln();
    assert!((a.bic - bic).abs() < 1e-8);
    assert!(a.items.gamma[5..].iter().all(|&g| g < 0.0));
    assert!(a.items.gamma[..5].iter().all(|&g| g == 0.0));

    let order: Vec<usize> = (0..400).map(|i| (i * 7) % 400).collect();
    let permuted = sim.responses.permute_rows(&order).unwrap();
    let b = fit(&permuted, 5, &config).unwrap();
    assert!((a.loglik - b.loglik).abs() < 1e-8);
    for (x, y) in a.items.d.iter().zip(&b.items.d) {
        assert!((x - y).abs() < 1e-5);
    }
}

#[test]
fn identical_inputs_give_identical_fits() {
    let s = StructuralParameters::new(0.2, -0.1).unwrap();
    let sim = simulate_dataset(300, 6, 4, &s, 9).unwrap();
    let config = FitConfig {
        seed: Some(5),
        ..FitConfig::default()
    };
    let a = fit(&sim.responses, 4, &config).unwrap();
    let b = fit(&sim.responses, 4, &config).unwrap();
    assert_eq!(a, b);
}

#[test]
fn iteration_budget_is_reported() {
    let s = StructuralParameters::new(0.2, -0.1).unwrap();
    let sim = simulate_dataset(300, 6, 4, &s, 10).unwrap();
    let config = FitConfig {
        max_iterations: 2,
        ..FitConfig::default()
    };
    let result = fit(&sim.responses, 4, &config).unwrap();
    assert!(!result.converged);
    assert_eq!(result.iterations, 2);
    assert!(result.gradient_norm >= config.gradient_tolerance);
}

#[test]
fn constant_column_is_warned_and_flagged() {
    let d = [-0.5, 0.0, 0.5, 0.2, -0.2];
    let a = [1.0, 1.2, 0.8, 1.1, 0.9];
    let base = simulate_2pl(&mut rng(23), &d, &a, 600);
    let mut entries = base.entries().to_vec();
    for i in 0..600 {
        entries[i * 5 + 2] = 1;
    }
    let data = ResponseMatrix::new(600, 5, entries).unwrap();
    let config = FitConfig::default();
    let result = fit(&data, 5, &config).unwrap();
    assert!(result.warnings.iter().any(|w| w.contains("item 3")));
    if !result.converged {
        return;
    }
    match numerical_hessian_se(&data, &result, &config) {
        Ok(se) => assert!(se.flagged.contains(&2), "{:?}", se.values),
        Err(Error::DegenerateInformation { coordinates }) => assert!(coordinates.contains(&2)),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn standard_errors_shrink_with_sample_size() {
    let d = [-0.6, -0.2, 0.1, 0.5, 0.8];
    let a = [0.9, 1.3, 1.0, 0.7, 1.2];
    let config = FitConfig::default();
    let se_at = |n: usize, seed: u64| {
        let data = simulate_2pl(&mut rng(seed), &d, &a, n);
        let result = fit(&data, 5, &config).unwrap();
        numerical_hessian_se(&data, &result, &config).unwrap()
    };
    let small = se_at(500, 24);
    let large = se_at(2000, 25);
    assert!(small.positive_definite && large.positive_definite);
    // Each ratio also carries the sampling noise of the two estimates, so
    // the band applies to their geometric mean.
    let ratios: Vec<f64> = (0..10).map(|i| large.values[i] / small.values[i]).collect();
    let mean = (ratios.iter().map(|r| r.ln()).sum::<f64>() / 10.0).exp();
    assert!(mean > 0.4 && mean < 0.6, "{ratios:?}");
    for (i, r) in ratios.iter().enumerate() {
        assert!(*r > 0.3 && *r < 0.7, "coordinate {i}: {ratios:?}");
        assert!(small.values[i] < STANDARD_ERROR_FLAG_LIMIT);
    }
    assert!(small.values[10].is_nan() && small.values[11].is_nan());
}

#[test]
fn duplicate_items_share_standard_errors() {
    // Every respondent answers items 2 and 3 identically in both orders, so
    // swapping the two items maps the data onto itself.
    let d = [-0.4, 0.3, 0.3, 0.6];
    let a = [1.0, 1.1, 1.1, 0.8];
    let half = simulate_2pl(&mut rng(26), &d, &a, 400);
    let mut rows = Vec::new();
    for y in half.rows() {
        rows.push(y.to_vec());
        rows.push(vec![y[0], y[2], y[1], y[3]]);
    }
    let data = ResponseMatrix::from_rows(&rows).unwrap();
    let config = FitConfig {
        gradient_tolerance: 1e-9,
        ..FitConfig::default()
    };
    let result = fit(&data, 4, &config).unwrap();
    let se = numerical_hessian_se(&data, &result, &config).unwrap();
    assert!((se.values[1] - se.values[2]).abs() < 1e-3);
    assert!((se.values[5] - se.values[6]).abs() < 1e-3);
}

#[test]
fn standard_errors_need_convergence() {
    let s = StructuralParameters::new(0.2, -0.1).unwrap();
    let sim = simulate_dataset(100, 5, 3, &s, 1).unwrap();
    let config = FitConfig {
        max_iterations: 1,
        ..FitConfig::default()
    };
    let result = fit(&sim.responses, 3, &config).unwrap();
    assert!(numerical_hessian_se(&sim.responses, &result, &config).is_err());
}
