//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the likelihood or estimation code under test.

#![allow(dead_code)]

use cpirt::{ChangePointSupport, ItemParameters, ResponseMatrix, StructuralParameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRID_POINTS: usize = 20_001;
pub const GRID_LIMIT: f64 = 8.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Change-point pmf on `c..=J` written out from its definition.
pub fn tau_pmf_direct(alpha: f64, beta: f64, c: usize, n_items: usize) -> Vec<f64> {
    if c == n_items {
        return vec![1.0];
    }
    let no_change = sigmoid(beta);
    let q = alpha.exp();
    let raw: Vec<f64> = (c..n_items).map(|j| q.powi((j - c) as i32)).collect();
    let total: f64 = raw.iter().sum();
    let mut pmf: Vec<f64> = raw.iter().map(|r| (1.0 - no_change) * r / total).collect();
    pmf.push(no_change);
    pmf
}

/// Probability of the response vector given ability and change-point.
pub fn conditional_prob(y: &[u8], theta: f64, tau: usize, items: &ItemParameters) -> f64 {
    let mut p = 1.0;
    for (j, &yj) in y.iter().enumerate() {
        let shift = if j + 1 > tau { items.gamma[j] } else { 0.0 };
        let pj = sigmoid(items.d[j] + items.a[j] * theta + shift);
        p *= if yj == 1 { pj } else { 1.0 - pj };
    }
    p
}

fn grid() -> impl Iterator<Item = (f64, f64)> {
    let h = 2.0 * GRID_LIMIT / (GRID_POINTS - 1) as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    (0..GRID_POINTS).map(move |i| {
        let x = -GRID_LIMIT + i as f64 * h;
        let end = if i == 0 || i == GRID_POINTS - 1 { 0.5 } else { 1.0 };
        (x, end * h * norm * (-0.5 * x * x).exp())
    })
}

/// Marginal likelihood of one person: exhaustive sum over the change-point
/// and a 20,001-point grid over `[-8, 8]` for the ability.
pub fn person_marginal(
    y: &[u8],
    items: &ItemParameters,
    structural: &StructuralParameters,
    c: usize,
) -> f64 {
    let n_items = y.len();
    let pmf = tau_pmf_direct(structural.alpha, structural.beta, c, n_items);
    let mut total = 0.0;
    for (t, &p_tau) in pmf.iter().enumerate() {
        let tau = c + t;
        let integral: f64 = grid().map(|(x, w)| w * conditional_prob(y, x, tau, items)).sum();
        total += p_tau * integral;
    }
    total
}

pub fn marginal_loglik_oracle(
    data: &ResponseMatrix,
    items: &ItemParameters,
    structural: &StructuralParameters,
    c: usize,
) -> f64 {
    data.rows()
        .map(|y| person_marginal(y, items, structural, c).ln())
        .sum()
}

/// Joint posterior over change-points by brute force.
pub fn posterior_tau_oracle(
    y: &[u8],
    items: &ItemParameters,
    structural: &StructuralParameters,
    c: usize,
) -> Vec<f64> {
    let pmf = tau_pmf_direct(structural.alpha, structural.beta, c, y.len());
    let joint: Vec<f64> = pmf
        .iter()
        .enumerate()
        .map(|(t, p)| p * grid().map(|(x, w)| w * conditional_prob(y, x, c + t, items)).sum::<f64>())
        .collect();
    let total: f64 = joint.iter().sum();
    joint.iter().map(|v| v / total).collect()
}

/// Posterior mean ability. With `prefix = Some(m)` only items `1..=m` are
/// used and change effects are ignored.
pub fn eap_oracle(
    y: &[u8],
    items: &ItemParameters,
    structural: &StructuralParameters,
    c: usize,
    prefix: Option<usize>,
) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    match prefix {
        Some(m) => {
            let flat = ItemParameters::baseline(items.d[..m].to_vec(), items.a[..m].to_vec()).unwrap();
            for (x, w) in grid() {
                let l = w * conditional_prob(&y[..m], x, m, &flat);
                num += x * l;
                den += l;
            }
        }
        None => {
            let pmf = tau_pmf_direct(structural.alpha, structural.beta, c, y.len());
            for (x, w) in grid() {
                let l: f64 = pmf
                    .iter()
                    .enumerate()
                    .map(|(t, p)| p * conditional_prob(y, x, c + t, items))
                    .sum();
                num += x * w * l;
                den += w * l;
            }
        }
    }
    num / den
}

pub struct Instance {
    pub data: ResponseMatrix,
    pub items: ItemParameters,
    pub structural: StructuralParameters,
    pub support: ChangePointSupport,
}

/// Random parameters and random responses.
pub fn random_instance<R: Rng>(rng: &mut R, n_persons: usize, n_items: usize) -> Instance {
    let c = rng.random_range(1..=n_items);
    let d = (0..n_items).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a = (0..n_items).map(|_| rng.random_range(0.2..2.0)).collect();
    let gamma = (1..=n_items)
        .map(|j| if j > c { rng.random_range(-3.0..-0.05) } else { 0.0 })
        .collect();
    let entries = (0..n_persons * n_items).map(|_| rng.random_range(0..2u8)).collect();
    Instance {
        data: ResponseMatrix::new(n_persons, n_items, entries).unwrap(),
        items: ItemParameters::new(d, a, gamma).unwrap(),
        structural: StructuralParameters::new(rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0))
            .unwrap(),
        support: ChangePointSupport::new(c, n_items).unwrap(),
    }
}

/// Responses from the no-change two-parameter model.
pub fn simulate_2pl<R: Rng>(rng: &mut R, d: &[f64], a: &[f64], n_persons: usize) -> ResponseMatrix {
    let mut entries = Vec::with_capacity(n_persons * d.len());
    for _ in 0..n_persons {
        let theta: f64 = rng.sample(rand_distr::StandardNormal);
        for j in 0..d.len() {
            entries.push(u8::from(rng.random::<f64>() < sigmoid(d[j] + a[j] * theta)));
        }
    }
    ResponseMatrix::new(n_persons, d.len(), entries).unwrap()
}

pub struct EmFit {
    pub d: Vec<f64>,
    pub a: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
}

/// Bock-Aitkin EM for the two-parameter model on a fixed set of nodes and
/// prior weights, with Newton steps in the M-step.
pub fn em_2pl(data: &ResponseMatrix, nodes: &[f64], weights: &[f64], tol: f64, max_iter: usize) -> EmFit {
    let n_items = data.n_items();
    let k = nodes.len();
    let mut d = vec![0.0; n_items];
    let mut a = vec![1.0; n_items];
    let mut loglik = f64::NEG_INFINITY;
    let mut iterations = 0;
    for iter in 0..max_iter {
        iterations = iter + 1;
        // E-step: expected counts at each node.
        let mut n_k = vec![0.0; k];
        let mut r_jk = vec![vec![0.0; k]; n_items];
        let mut ll = 0.0;
        for y in data.rows() {
            let mut post: Vec<f64> = (0..k)
                .map(|q| {
                    let mut l = weights[q];
                    for j in 0..n_items {
                        let p = sigmoid(d[j] + a[j] * nodes[q]);
                        l *= if y[j] == 1 { p } else { 1.0 - p };
                    }
                    l
                })
                .collect();
            let total: f64 = post.iter().sum();
            ll += total.ln();
            for v in &mut post {
                *v /= total;
            }
            for q in 0..k {
                n_k[q] += post[q];
                for j in 0..n_items {
                    if y[j] == 1 {
                        r_jk[j][q] += post[q];
                    }
                }
            }
        }
        loglik = ll;
        // M-step: weighted logistic regression per item.
        let mut change = 0.0f64;
        for j in 0..n_items {
            let (mut dj, mut aj) = (d[j], a[j]);
            for _ in 0..50 {
                let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for q in 0..k {
                    let p = sigmoid(dj + aj * nodes[q]);
                    let resid = r_jk[j][q] - n_k[q] * p;
                    let w = n_k[q] * p * (1.0 - p);
                    g0 += resid;
                    g1 += resid * nodes[q];
                    h00 += w;
                    h01 += w * nodes[q];
                    h11 += w * nodes[q] * nodes[q];
                }
                let det = h00 * h11 - h01 * h01;
                let s0 = (h11 * g0 - h01 * g1) / det;
                let s1 = (h00 * g1 - h01 * g0) / det;
                dj += s0;
                aj += s1;
                if s0.abs().max(s1.abs()) < 1e-14 {
                    break;
                }
            }
            change = change.max((dj - d[j]).abs()).max((aj - a[j]).abs());
            d[j] = dj;
            a[j] = aj;
        }
        if change < tol {
            break;
        }
    }
    EmFit {
        d,
        a,
        loglik,
        iterations,
    }
}
