mod common;

use common::*;
use cpirt::simulation::{generate_item_parameters, rng_from_seed, simulate_with_items};
use cpirt::{
    gauss_hermite_standard_normal, tau_pmf, ChangePointSupport, ItemParameters, ModelSpec,
    Scorer, StructuralParameters,
};

fn five_item_instance() -> (ItemParameters, StructuralParameters, Scorer) {
    let items = ItemParameters::new(
        vec![0.5, 0.2, 0.4, 0.1, 0.3],
        vec![1.0, 0.8, 1.2, 0.9, 1.1],
        vec![0.0, 0.0, -4.0, -4.0, -4.0],
    )
    .unwrap();
    let s = StructuralParameters::new(0.1, -0.2).unwrap();
    let spec = ModelSpec::new(
        items.clone(),
        s,
        ChangePointSupport::new(2, 5).unwrap(),
        gauss_hermite_standard_normal(49).unwrap(),
    )
    .unwrap();
    (items, s, Scorer::new(spec))
}

/// Exhaustive sum over change-points on the library's quadrature nodes.
fn posterior_on_nodes(y: &[u8], items: &ItemParameters, s: &StructuralParameters, c: usize) -> Vec<f64> {
    let quad = gauss_hermite_standard_normal(49).unwrap();
    let prior = tau_pmf_direct(s.alpha, s.beta, c, y.len());
    let joint: Vec<f64> = prior
        .iter()
        .enumerate()
        .map(|(t, p)| {
            p * quad
                .nodes
                .iter()
                .zip(&quad.weights)
                .map(|(&x, &w)| w * conditional_prob(y, x, c + t, items))
                .sum::<f64>()
        })
        .collect();
    let total: f64 = joint.iter().sum();
    joint.iter().map(|v| v / total).collect()
}

#[test]
fn brute_force_posteriors() {
    let (items, s, scorer) = five_item_instance();
    for bits in 0u8..32 {
        let y: Vec<u8> = (0..5).map(|j| (bits >> j) & 1).collect();
        let got = scorer.posterior_tau(&y).unwrap();
        let exact = posterior_on_nodes(&y, &items, &s, 2);
        for (g, e) in got.iter().zip(&exact) {
            assert!((g - e).abs() < 1e-10);
        }
        let change: f64 = exact[..3].iter().sum();
        assert!((scorer.prob_change(&y).unwrap() - change).abs() < 1e-10);
        let grid = posterior_tau_oracle(&y, &items, &s, 2);
        for (g, e) in got.iter().zip(&grid) {
            assert!((g - e).abs() < 1e-6);
        }
    }
}

#[test]
fn mode_follows_the_response_pattern() {
    let (_, _, scorer) = five_item_instance();
    assert_eq!(scorer.score(&[1, 1, 1, 1, 1]).unwrap().tau_mode, 5);
    assert_eq!(scorer.score(&[1, 1, 0, 0, 0]).unwrap().tau_mode, 2);
}

#[test]
fn eap_matches_grid_oracle() {
    let items = ItemParameters::new(vec![0.4, -0.3, 0.2], vec![1.3, 0.7, 1.0], vec![0.0, -1.5, -2.0]).unwrap();
    let s = StructuralParameters::new(-0.3, 0.4).unwrap();
    let spec = ModelSpec::new(
        items.clone(),
        s,
        ChangePointSupport::new(1, 3).unwrap(),
        gauss_hermite_standard_normal(49).unwrap(),
    )
    .unwrap();
    let scorer = Scorer::new(spec);
    for bits in 0u8..8 {
        let y: Vec<u8> = (0..3).map(|j| (bits >> j) & 1).collect();
        let full = scorer.eap_theta(&y, None).unwrap();
        assert!((full - eap_oracle(&y, &items, &s, 1, None)).abs() < 1e-6);
        for m in 1..=3 {
            let sub = scorer.eap_theta(&y, Some(m)).unwrap();
            assert!((sub - eap_oracle(&y, &items, &s, 1, Some(m))).abs() < 1e-6);
        }
    }
}

#[test]
fn average_posterior_recovers_prior() {
    let s = StructuralParameters::new(0.2, -0.85).unwrap();
    let support = ChangePointSupport::new(10, 16).unwrap();
    let items = generate_item_parameters(16, 10, &mut rng_from_seed(31)).unwrap();
    let data = simulate_with_items(&items, 5000, &s, &support, 32).unwrap();
    let spec = ModelSpec::new(items, s, support, gauss_hermite_standard_normal(49).unwrap()).unwrap();
    let posts = Scorer::new(spec).score_all(&data.responses).unwrap();
    let prior = tau_pmf(&s, &support);
    let mut avg = vec![0.0; support.len()];
    for p in &posts {
        for (a, v) in avg.iter_mut().zip(&p.tau_pmf) {
            *a += v / posts.len() as f64;
        }
    }
    let tv: f64 = 0.5 * avg.iter().zip(prior.pmf()).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv < 0.05, "total variation {tv}");
}

#[test]
fn cleansing_reduces_bias_for_speeded_respondents() {
    let s = StructuralParameters::new(0.2, -0.1).unwrap();
    let support = ChangePointSupport::new(20, 30).unwrap();
    let items = generate_item_parameters(30, 20, &mut rng_from_seed(41)).unwrap();
    let data = simulate_with_items(&items, 2000, &s, &support, 42).unwrap();
    let spec = ModelSpec::new(items, s, support, gauss_hermite_standard_normal(49).unwrap()).unwrap();
    let scorer = Scorer::new(spec);
    let posts = scorer.score_all(&data.responses).unwrap();
    let (mut before, mut after, mut n) = (0.0, 0.0, 0.0);
    for (i, p) in posts.iter().enumerate() {
        if data.tau_true[i] < 30 {
            let naive = scorer.eap_theta(data.responses.row(i), Some(30)).unwrap();
            before += naive - data.theta_true[i];
            after += p.theta_cleansed - data.theta_true[i];
            n += 1.0;
        }
        if p.tau_mode == 30 {
            let all = scorer.eap_theta(data.responses.row(i), Some(30)).unwrap();
            assert_eq!(all, p.theta_cleansed);
        }
    }
    assert!((after / n).abs() < (before / n).abs(), "before {} after {}", before / n, after / n);
}

#[test]
fn scoring_is_deterministic() {
    let s = StructuralParameters::new(0.2, -0.1).unwrap();
    let support = ChangePointSupport::new(6, 10).unwrap();
    let items = generate_item_parameters(10, 6, &mut rng_from_seed(51)).unwrap();
    let data = simulate_with_items(&items, 300, &s, &support, 52).unwrap();
    let spec = ModelSpec::new(items, s, support, gauss_hermite_standard_normal(49).unwrap()).unwrap();
    let scorer = Scorer::new(spec);
    assert_eq!(scorer.score_all(&data.responses).unwrap(), scorer.score_all(&data.responses).unwrap());
}
