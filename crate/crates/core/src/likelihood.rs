//! Conditional and marginal log-likelihood and the analytic gradient.
//!
//! For each respondent the marginal likelihood is a sum over the joint grid
//! of change-points and quadrature nodes. For a fixed node, the conditional
//! log-likelihood at change-point `tau - 1` differs from the one at `tau` only
//! in item `tau`, so the whole column over the support is obtained from the
//! no-change value by one update per support point. The gradient uses
//! posterior-weighted complete-data scores.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::ParameterLayout;
use crate::model::{
    irf, log_logistic, logistic, response_logmass, ChangePointSupport, ItemParameters,
    ResponseMatrix, StructuralParameters,
};
use crate::structural::{tau_pmf, QuadratureRule, TauDistribution};

/// Rows per unit of parallel work. Partial sums are combined in chunk order,
/// so results do not depend on the thread count.
const CHUNK_ROWS: usize = 64;

/// Everything needed to evaluate the likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub items: ItemParameters,
    pub structural: StructuralParameters,
    pub support: ChangePointSupport,
    pub quadrature: QuadratureRule,
}

impl ModelSpec {
    pub fn new(
        items: ItemParameters,
        structural: StructuralParameters,
        support: ChangePointSupport,
        quadrature: QuadratureRule,
    ) -> Result<Self> {
        items.validate_for(&support)?;
        Ok(Self {
            items,
            structural,
            support,
            quadrature,
        })
    }

    /// Builds a spec without checking invariants (trial points of the
    /// optimizer may carry a positive change effect when it is unconstrained).
    pub(crate) fn new_unchecked(
        items: ItemParameters,
        structural: StructuralParameters,
        support: ChangePointSupport,
        quadrature: QuadratureRule,
    ) -> Self {
        Self {
            items,
            structural,
            support,
            quadrature,
        }
    }
}

/// Total log-likelihood and the per-respondent terms it sums.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodValue {
    pub loglik: f64,
    pub per_person: Vec<f64>,
}

/// Log-likelihood of one response vector given ability and change-point.
pub fn conditional_loglik_person(
    responses: &[u8],
    theta: f64,
    tau: usize,
    spec: &ModelSpec,
) -> Result<f64> {
    if responses.len() != spec.support.n_items() {
        return Err(Error::invalid(format!(
            "{} responses for a {}-item model",
            responses.len(),
            spec.support.n_items()
        )));
    }
    if !spec.support.contains(tau) {
        return Err(Error::invalid(format!(
            "change-point {tau} outside {}..={}",
            spec.support.c(),
            spec.support.n_items()
        )));
    }
    let items = &spec.items;
    let mut total = 0.0;
    for (j, &y) in responses.iter().enumerate() {
        let p = irf(items.d[j], items.a[j], items.gamma[j], theta, j + 1 > tau)?;
        total += response_logmass(p, y)?;
    }
    Ok(total)
}

/// Per-item, per-node log-masses and success probabilities, shared by all
/// respondents.
pub(crate) struct Tables {
    n_nodes: usize,
    /// `[log P(y=0), log P(y=1)]` before the change, index `j * K + k`.
    pre: Vec<[f64; 2]>,
    /// Same after the change.
    post: Vec<[f64; 2]>,
    p_pre: Vec<f64>,
    p_post: Vec<f64>,
}

impl Tables {
    pub(crate) fn new(items: &ItemParameters, quadrature: &QuadratureRule) -> Self {
        let n_items = items.n_items();
        let n_nodes = quadrature.len();
        let size = n_items * n_nodes;
        let mut pre = Vec::with_capacity(size);
        let mut post = Vec::with_capacity(size);
        let mut p_pre = Vec::with_capacity(size);
        let mut p_post = Vec::with_capacity(size);
        for j in 0..n_items {
            for &x in &quadrature.nodes {
                let eta = items.predictor(j, x, false);
                pre.push([log_logistic(-eta), log_logistic(eta)]);
                p_pre.push(logistic(eta));
                let eta = items.predictor(j, x, true);
                post.push([log_logistic(-eta), log_logistic(eta)]);
                p_post.push(logistic(eta));
            }
        }
        Self {
            n_nodes,
            pre,
            post,
            p_pre,
            p_post,
        }
    }

    /// Log-likelihood of items `0..m` (0-based prefix) under the no-change
    /// model at node `k`.
    pub(crate) fn prefix_loglik(&self, y: &[u8], m: usize, k: usize) -> f64 {
        y[..m]
            .iter()
            .enumerate()
            .map(|(j, &yj)| self.pre[j * self.n_nodes + k][yj as usize])
            .sum()
    }
}

/// Evaluates the joint log-density over the (node, change-point) grid for one
/// respondent. Fills `grid` (row-major, node-major) with posterior weights and
/// returns the log marginal likelihood.
pub(crate) fn person_posterior_grid(
    y: &[u8],
    tables: &Tables,
    tau: &TauDistribution,
    quadrature: &QuadratureRule,
    grid: &mut Vec<f64>,
) -> f64 {
    let support = tau.support();
    let c = support.c();
    let n_tau = support.len();
    let n_nodes = tables.n_nodes;
    let log_pmf = tau.log_pmf();
    let log_w = quadrature.log_weights();
    grid.clear();
    grid.resize(n_nodes * n_tau, 0.0);

    let mut max = f64::NEG_INFINITY;
    for k in 0..n_nodes {
        let mut level = 0.0;
        for (j, &yj) in y.iter().enumerate() {
            level += tables.pre[j * n_nodes + k][yj as usize];
        }
        let row = &mut grid[k * n_tau..(k + 1) * n_tau];
        // row[t] belongs to tau = c + t; walk down from tau = J.
        row[n_tau - 1] = level;
        for t in (1..n_tau).rev() {
            let item = c + t - 1; // 0-based index of item tau = c + t
            let idx = item * n_nodes + k;
            let yj = y[item] as usize;
            level += tables.post[idx][yj] - tables.pre[idx][yj];
            row[t - 1] = level;
        }
        for (t, v) in row.iter_mut().enumerate() {
            *v += log_w[k] + log_pmf[t];
            if *v > max {
                max = *v;
            }
        }
    }
    let mut total = 0.0;
    for v in grid.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    let inv = 1.0 / total;
    for v in grid.iter_mut() {
        *v *= inv;
    }
    max + total.ln()
}

/// Sufficient statistics for the gradient, accumulated over respondents.
#[derive(Clone)]
struct ScoreAccumulator {
    /// Posterior weight of the pre-change state, per (item, node).
    w_pre: Vec<f64>,
    /// Posterior weight of the pre-change state among correct responses.
    w_pre_correct: Vec<f64>,
    w_post: Vec<f64>,
    w_post_correct: Vec<f64>,
    /// Posterior mass per support point.
    tau_mass: Vec<f64>,
}

impl ScoreAccumulator {
    fn new(n_items: usize, n_nodes: usize, n_tau: usize) -> Self {
        let size = n_items * n_nodes;
        Self {
            w_pre: vec![0.0; size],
            w_pre_correct: vec![0.0; size],
            w_post: vec![0.0; size],
            w_post_correct: vec![0.0; size],
            tau_mass: vec![0.0; n_tau],
        }
    }

    fn add_person(&mut self, y: &[u8], grid: &[f64], c: usize, n_nodes: usize, n_tau: usize) {
        for k in 0..n_nodes {
            let row = &grid[k * n_tau..(k + 1) * n_tau];
            let node_total: f64 = row.iter().sum();
            for (t, &w) in row.iter().enumerate() {
                self.tau_mass[t] += w;
            }
            // Items 1..=c are never post-change.
            for (j, &yj) in y[..c].iter().enumerate() {
                let idx = j * n_nodes + k;
                self.w_pre[idx] += node_total;
                if yj == 1 {
                    self.w_pre_correct[idx] += node_total;
                }
            }
            // Item j (1-based) is post-change when tau < j.
            let mut before = 0.0;
            for (t, &w) in row[..n_tau - 1].iter().enumerate() {
                before += w;
                let item = c + t; // 0-based index of 1-based item c + t + 1
                let idx = item * n_nodes + k;
                let post = before;
                let pre = node_total - before;
                self.w_pre[idx] += pre;
                self.w_post[idx] += post;
                if y[item] == 1 {
                    self.w_pre_correct[idx] += pre;
                    self.w_post_correct[idx] += post;
                }
            }
        }
    }

    fn merge(&mut self, other: &Self) {
        let add = |dst: &mut Vec<f64>, src: &Vec<f64>| {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        };
        add(&mut self.w_pre, &other.w_pre);
        add(&mut self.w_pre_correct, &other.w_pre_correct);
        add(&mut self.w_post, &other.w_post);
        add(&mut self.w_post_correct, &other.w_post_correct);
        add(&mut self.tau_mass, &other.tau_mass);
    }
}

fn check_dimensions(data: &ResponseMatrix, spec: &ModelSpec) -> Result<()> {
    if data.n_items() != spec.support.n_items() || spec.items.n_items() != spec.support.n_items() {
        return Err(Error::invalid(format!(
            "data has {} items, model has {}",
            data.n_items(),
            spec.support.n_items()
        )));
    }
    Ok(())
}

struct Evaluation {
    per_person: Vec<f64>,
    scores: Option<ScoreAccumulator>,
}

fn evaluate(data: &ResponseMatrix, spec: &ModelSpec, with_scores: bool) -> Evaluation {
    let tables = Tables::new(&spec.items, &spec.quadrature);
    let tau = tau_pmf(&spec.structural, &spec.support);
    let n_items = data.n_items();
    let n_nodes = spec.quadrature.len();
    let n_tau = spec.support.len();
    let c = spec.support.c();

    let partials: Vec<(Vec<f64>, Option<ScoreAccumulator>)> = data
        .entries()
        .par_chunks(CHUNK_ROWS * n_items)
        .map(|block| {
            let mut grid = Vec::with_capacity(n_nodes * n_tau);
            let mut acc = with_scores.then(|| ScoreAccumulator::new(n_items, n_nodes, n_tau));
            let values = block
                .chunks_exact(n_items)
                .map(|y| {
                    let ll = person_posterior_grid(y, &tables, &tau, &spec.quadrature, &mut grid);
                    if let Some(acc) = acc.as_mut() {
                        acc.add_person(y, &grid, c, n_nodes, n_tau);
                    }
                    ll
                })
                .collect();
            (values, acc)
        })
        .collect();

    let mut per_person = Vec::with_capacity(data.n_persons());
    let mut scores: Option<ScoreAccumulator> = None;
    for (values, acc) in partials {
        per_person.extend(values);
        if let Some(acc) = acc {
            match scores.as_mut() {
                Some(total) => total.merge(&acc),
                None => scores = Some(acc),
            }
        }
    }
    Evaluation { per_person, scores }
}

/// Marginal log-likelihood of the data with ability integrated out by
/// quadrature and the change-point summed over its support.
pub fn marginal_loglik(data: &ResponseMatrix, spec: &ModelSpec) -> Result<LikelihoodValue> {
    check_dimensions(data, spec)?;
    let eval = evaluate(data, spec, false);
    Ok(LikelihoodValue {
        loglik: eval.per_person.iter().sum(),
        per_person: eval.per_person,
    })
}

/// Gradient of the marginal log-likelihood with respect to the packed
/// parameter vector described by `layout`.
pub fn marginal_loglik_gradient(
    data: &ResponseMatrix,
    spec: &ModelSpec,
    constrain_gamma: bool,
) -> Result<Vec<f64>> {
    let layout = ParameterLayout::new(spec.support, constrain_gamma);
    Ok(loglik_and_gradient(data, spec, &layout)?.1)
}

/// Log-likelihood and its gradient in one pass.
pub(crate) fn loglik_and_gradient(
    data: &ResponseMatrix,
    spec: &ModelSpec,
    layout: &ParameterLayout,
) -> Result<(f64, Vec<f64>)> {
    check_dimensions(data, spec)?;
    let eval = evaluate(data, spec, true);
    let acc = eval.scores.expect("scores requested");
    let loglik = eval.per_person.iter().sum();

    let tables = Tables::new(&spec.items, &spec.quadrature);
    let nodes = &spec.quadrature.nodes;
    let n_nodes = nodes.len();
    let c = spec.support.c();
    let mut grad = vec![0.0; layout.len()];
    for j in 0..spec.support.n_items() {
        let (mut gd, mut ga, mut gg) = (0.0, 0.0, 0.0);
        for (k, &x) in nodes.iter().enumerate() {
            let idx = j * n_nodes + k;
            let pre = acc.w_pre_correct[idx] - acc.w_pre[idx] * tables.p_pre[idx];
            let post = acc.w_post_correct[idx] - acc.w_post[idx] * tables.p_post[idx];
            gd += pre + post;
            ga += x * (pre + post);
            gg += post;
        }
        grad[layout.d(j)] = gd;
        grad[layout.a(j)] = ga;
        if j >= c {
            // d gamma / d g = gamma under the log-negated parameterization.
            let jacobian = if layout.constrain_gamma() {
                spec.items.gamma[j]
            } else {
                1.0
            };
            grad[layout.g(j)] = gg * jacobian;
        }
    }
    if !layout.structural_inert() {
        let tau = tau_pmf(&spec.structural, &spec.support);
        let (mut g_alpha, mut g_beta) = (0.0, 0.0);
        for (t, &mass) in acc.tau_mass.iter().enumerate() {
            let (sa, sb) = tau.log_pmf_score(t);
            g_alpha += mass * sa;
            g_beta += mass * sb;
        }
        grad[layout.alpha()] = g_alpha;
        grad[layout.beta()] = g_beta;
    }
    Ok((loglik, grad))
}
