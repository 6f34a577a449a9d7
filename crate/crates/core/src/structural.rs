//! Distribution of the change-point and the quadrature rule for the ability
//! prior.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{log_logistic, logistic, ChangePointSupport, StructuralParameters};

pub const DEFAULT_QUADRATURE_NODES: usize = 49;

/// Probability mass function of the change-point over `{c, ..., J}`.
///
/// The no-change point carries `logistic(beta)` exactly and the remaining
/// mass is geometric with ratio `q = exp(alpha)` over `{c, ..., J - 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TauDistribution {
    support: ChangePointSupport,
    pmf: Vec<f64>,
    log_pmf: Vec<f64>,
    /// `exp(alpha)`.
    pub q: f64,
    /// `logistic(beta)`.
    pub p_no_change: f64,
    /// Mass at the earliest change-point.
    pub p_c: f64,
    /// `(1 - q^(J-c)) / (1 - q)`, the unnormalized geometric total.
    pub geometric_sum: f64,
    /// Normalizer of the unnormalized masses; 1 by construction here.
    pub normalizer: f64,
    mean_offset: f64,
}

impl TauDistribution {
    pub fn support(&self) -> &ChangePointSupport {
        &self.support
    }

    /// Masses in support order, `pmf()[0]` belonging to `c`.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn log_pmf(&self) -> &[f64] {
        &self.log_pmf
    }

    /// `P(tau = t)`, zero outside the support.
    pub fn prob(&self, tau: usize) -> f64 {
        self.support.index_of(tau).map_or(0.0, |k| self.pmf[k])
    }

    /// Derivatives of `log P(tau)` with respect to `(alpha, beta)` at the
    /// support position `k`. Both vanish on the degenerate support.
    pub fn log_pmf_score(&self, k: usize) -> (f64, f64) {
        if self.support.is_degenerate() {
            return (0.0, 0.0);
        }
        if k + 1 == self.pmf.len() {
            (0.0, 1.0 - self.p_no_change)
        } else {
            (k as f64 - self.mean_offset, -self.p_no_change)
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Change-point distribution implied by `(alpha, beta)` on `support`.
pub fn tau_pmf(params: &StructuralParameters, support: &ChangePointSupport) -> TauDistribution {
    let q = params.alpha.exp();
    if support.is_degenerate() {
        return TauDistribution {
            support: *support,
            pmf: vec![1.0],
            log_pmf: vec![0.0],
            q,
            p_no_change: 1.0,
            p_c: 1.0,
            geometric_sum: 0.0,
            normalizer: 1.0,
            mean_offset: 0.0,
        };
    }
    let n = support.n_post_items();
    let alpha = params.alpha;
    let log_total = log_sum_exp((0..n).map(|m| m as f64 * alpha));
    let log_rest = log_logistic(-params.beta);
    let p_no_change = logistic(params.beta);

    let mut log_pmf: Vec<f64> = (0..n)
        .map(|m| log_rest + m as f64 * alpha - log_total)
        .collect();
    log_pmf.push(log_logistic(params.beta));
    let mut pmf: Vec<f64> = log_pmf.iter().map(|l| l.exp()).collect();
    pmf[n] = p_no_change;

    let mean_offset = (0..n)
        .map(|m| m as f64 * (m as f64 * alpha - log_total).exp())
        .sum();
    let geometric_sum = if (q - 1.0).abs() < 1e-12 {
        n as f64
    } else {
        (1.0 - q.powi(n as i32)) / (1.0 - q)
    };

    TauDistribution {
        support: *support,
        p_c: pmf[0],
        pmf,
        log_pmf,
        q,
        p_no_change,
        geometric_sum,
        normalizer: 1.0,
        mean_offset,
    }
}

/// The ability prior. Fixed at the standard normal for identifiability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPrior {
    mean: f64,
    variance: f64,
}

impl ThetaPrior {
    pub const STANDARD: ThetaPrior = ThetaPrior {
        mean: 0.0,
        variance: 1.0,
    };

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

impl Default for ThetaPrior {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Quadrature nodes and probability weights for the standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// `sum_k w_k * f(x_k)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss-Hermite rule for the standard normal weight, built from the
/// eigen-decomposition of the Jacobi matrix of the probabilists' Hermite
/// polynomials (Golub-Welsch). Nodes are `sqrt(2)` times the physicists'
/// nodes and weights are the physicists' weights divided by `sqrt(pi)`.
pub fn gauss_hermite_standard_normal(n_nodes: usize) -> Result<QuadratureRule> {
    if n_nodes == 0 {
        return Err(Error::invalid("quadrature needs at least one node"));
    }
    let jacobi = DMatrix::from_fn(n_nodes, n_nodes, |r, c| {
        if r + 1 == c {
            (c as f64).sqrt()
        } else if c + 1 == r {
            (r as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n_nodes)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|l, r| l.0.total_cmp(&r.0));

    // Enforce exact symmetry about zero.
    let mut nodes = vec![0.0; n_nodes];
    let mut weights = vec![0.0; n_nodes];
    for k in 0..n_nodes {
        let mirror = n_nodes - 1 - k;
        nodes[k] = 0.5 * (pairs[k].0 - pairs[mirror].0);
        weights[k] = 0.5 * (pairs[k].1 + pairs[mirror].1);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let log_weights = weights.iter().map(|w| w.ln()).collect();
    Ok(QuadratureRule {
        nodes,
        weights,
        log_weights,
    })
}
