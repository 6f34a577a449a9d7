//! Per-respondent change-point posteriors and ability scores.
//!
//! The point estimate of the change-point is the posterior mode, ties going
//! to the earliest item. Cleansed abilities re-score the respondent under the
//! no-change model using only items up to that mode.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{FitConfig, FitResult};
use crate::likelihood::{person_posterior_grid, ModelSpec, Tables};
use crate::model::{ChangePointSupport, ResponseMatrix};
use crate::structural::{tau_pmf, TauDistribution};

#[derive(Debug, Clone, PartialEq)]
pub struct PersonPosterior {
    pub support: ChangePointSupport,
    /// Posterior over `{c, ..., J}` in support order.
    pub tau_pmf: Vec<f64>,
    pub tau_mode: usize,
    /// `P(tau < J | responses)`.
    pub prob_change: f64,
    /// Posterior mean ability marginalizing the change-point.
    pub theta_eap: f64,
    /// Ability from items `1..=tau_mode` under the no-change model.
    pub theta_cleansed: f64,
}

/// Precomputed model quantities for scoring many respondents.
pub struct Scorer {
    spec: ModelSpec,
    tables: Tables,
    tau: TauDistribution,
}

impl Scorer {
    pub fn new(spec: ModelSpec) -> Self {
        let tables = Tables::new(&spec.items, &spec.quadrature);
        let tau = tau_pmf(&spec.structural, &spec.support);
        Self { spec, tables, tau }
    }

    pub fn from_fit(fit: &FitResult, config: &FitConfig) -> Result<Self> {
        Ok(Self::new(fit.model_spec(config.quadrature()?)?))
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn check(&self, responses: &[u8]) -> Result<()> {
        if responses.len() != self.spec.support.n_items() {
            return Err(Error::invalid(format!(
                "{} responses for a {}-item model",
                responses.len(),
                self.spec.support.n_items()
            )));
        }
        if responses.iter().any(|&y| y > 1) {
            return Err(Error::invalid("responses must be 0 or 1"));
        }
        Ok(())
    }

    fn grid(&self, responses: &[u8]) -> Vec<f64> {
        let mut grid = Vec::new();
        person_posterior_grid(responses, &self.tables, &self.tau, &self.spec.quadrature, &mut grid);
        grid
    }

    fn tau_marginal(&self, grid: &[f64]) -> Vec<f64> {
        let n_tau = self.spec.support.len();
        let mut pmf = vec![0.0; n_tau];
        for row in grid.chunks_exact(n_tau) {
            for (p, w) in pmf.iter_mut().zip(row) {
                *p += w;
            }
        }
        pmf
    }

    pub fn posterior_tau(&self, responses: &[u8]) -> Result<Vec<f64>> {
        self.check(responses)?;
        Ok(self.tau_marginal(&self.grid(responses)))
    }

    pub fn prob_change(&self, responses: &[u8]) -> Result<f64> {
        let pmf = self.posterior_tau(responses)?;
        Ok(pmf[..pmf.len() - 1].iter().sum())
    }

    /// Posterior mean ability. With `Some(m)`, only items `1..=m` are used
    /// under the no-change model; otherwise all items under the full model.
    pub fn eap_theta(&self, responses: &[u8], prefix: Option<usize>) -> Result<f64> {
        self.check(responses)?;
        match prefix {
            None => Ok(self.joint_eap(&self.grid(responses))),
            Some(m) => {
                if m == 0 || m > responses.len() {
                    return Err(Error::invalid(format!(
                        "prefix length {m} outside 1..={}",
                        responses.len()
                    )));
                }
                Ok(self.prefix_eap(responses, m))
            }
        }
    }

    fn joint_eap(&self, grid: &[f64]) -> f64 {
        let n_tau = self.spec.support.len();
        grid.chunks_exact(n_tau)
            .zip(&self.spec.quadrature.nodes)
            .map(|(row, &x)| x * row.iter().sum::<f64>())
            .sum()
    }

    fn prefix_eap(&self, responses: &[u8], m: usize) -> f64 {
        let quad = &self.spec.quadrature;
        let logs: Vec<f64> = quad
            .log_weights()
            .iter()
            .enumerate()
            .map(|(k, lw)| lw + self.tables.prefix_loglik(responses, m, k))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (l, &x) in logs.iter().zip(&quad.nodes) {
            let w = (l - max).exp();
            num += w * x;
            den += w;
        }
        num / den
    }

    pub fn score(&self, responses: &[u8]) -> Result<PersonPosterior> {
        self.check(responses)?;
        let grid = self.grid(responses);
        let pmf = self.tau_marginal(&grid);
        let support = self.spec.support;
        let mut best = 0;
        for (t, &p) in pmf.iter().enumerate() {
            if p > pmf[best] {
                best = t;
            }
        }
        let tau_mode = support.c() + best;
        Ok(PersonPosterior {
            support,
            prob_change: pmf[..pmf.len() - 1].iter().sum(),
            theta_eap: self.joint_eap(&grid),
            theta_cleansed: self.prefix_eap(responses, tau_mode),
            tau_mode,
            tau_pmf: pmf,
        })
    }

    pub fn score_all(&self, data: &ResponseMatrix) -> Result<Vec<PersonPosterior>> {
        if data.n_items() != self.spec.support.n_items() {
            return Err(Error::invalid(format!(
                "data has {} items, model has {}",
                data.n_items(),
                self.spec.support.n_items()
            )));
        }
        let rows: Vec<&[u8]> = data.rows().collect();
        rows.par_iter().map(|y| self.score(y)).collect()
    }
}

pub fn posterior_tau(responses: &[u8], fit: &FitResult, config: &FitConfig) -> Result<Vec<f64>> {
    Scorer::from_fit(fit, config)?.posterior_tau(responses)
}

pub fn prob_change(responses: &[u8], fit: &FitResult, config: &FitConfig) -> Result<f64> {
    Scorer::from_fit(fit, config)?.prob_change(responses)
}

pub fn eap_theta(
    responses: &[u8],
    fit: &FitResult,
    config: &FitConfig,
    item_subset: Option<usize>,
) -> Result<f64> {
    Scorer::from_fit(fit, config)?.eap_theta(responses, item_subset)
}

pub fn score_persons(
    data: &ResponseMatrix,
    fit: &FitResult,
    config: &FitConfig,
) -> Result<Vec<PersonPosterior>> {
    Scorer::from_fit(fit, config)?.score_all(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ItemParameters, StructuralParameters};
    use crate::structural::gauss_hermite_standard_normal;
    use approx::assert_abs_diff_eq;

    fn scorer(gamma: Vec<f64>, c: usize, a: f64) -> Scorer {
        let n = gamma.len();
        let d: Vec<f64> = (0..n).map(|j| 0.3 - 0.15 * j as f64).collect();
        Scorer::new(
            ModelSpec::new(
                ItemParameters::new(d, vec![a; n], gamma).unwrap(),
                StructuralParameters::new(0.2, -0.1).unwrap(),
                ChangePointSupport::new(c, n).unwrap(),
                gauss_hermite_standard_normal(49).unwrap(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn no_change_effect_returns_prior() {
        let s = scorer(vec![0.0; 6], 3, 1.0);
        let prior = tau_pmf(&s.spec.structural, &s.spec.support);
        let post = s.posterior_tau(&[1, 0, 1, 1, 0, 0]).unwrap();
        for (p, q) in post.iter().zip(prior.pmf()) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(
            s.prob_change(&[1, 0, 1, 1, 0, 0]).unwrap(),
            1.0 - crate::model::logistic(-0.1),
            epsilon = 1e-14
        );
    }

    #[test]
    fn degenerate_support_never_changes() {
        let s = scorer(vec![0.0; 4], 4, 1.0);
        assert_eq!(s.prob_change(&[1, 0, 1, 1]).unwrap(), 0.0);
        let p = s.score(&[1, 0, 1, 1]).unwrap();
        assert_eq!(p.tau_mode, 4);
        assert_abs_diff_eq!(p.theta_cleansed, s.eap_theta(&[1, 0, 1, 1], Some(4)).unwrap(), epsilon = 0.0);
    }

    #[test]
    fn flat_items_give_prior_mean() {
        let s = scorer(vec![0.0, 0.0, -1.0, -1.0], 2, 0.0);
        assert_abs_diff_eq!(s.eap_theta(&[1, 1, 0, 1], Some(3)).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn full_prefix_matches_joint_eap_without_change() {
        let s = scorer(vec![0.0; 5], 2, 1.2);
        let y = [1, 1, 0, 1, 0];
        assert_abs_diff_eq!(
            s.eap_theta(&y, Some(5)).unwrap(),
            s.eap_theta(&y, None).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn prefix_bounds() {
        let s = scorer(vec![0.0; 3], 2, 1.0);
        assert!(s.eap_theta(&[1, 0, 1], Some(0)).is_err());
        assert!(s.eap_theta(&[1, 0, 1], Some(4)).is_err());
        assert!(s.posterior_tau(&[1, 0]).is_err());
    }

    #[test]
    fn posterior_invariants() {
        let s = scorer(vec![0.0, 0.0, -1.5, -2.0, -1.0], 2, 1.0);
        for bits in 0u8..32 {
            let y: Vec<u8> = (0..5).map(|j| (bits >> j) & 1).collect();
            let p = s.score(&y).unwrap();
            assert_abs_diff_eq!(p.tau_pmf.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(p.prob_change, p.tau_pmf[..3].iter().sum::<f64>(), epsilon = 1e-12);
            let max = p.tau_pmf.iter().cloned().fold(0.0, f64::max);
            let first = p.tau_pmf.iter().position(|&v| v == max).unwrap();
            assert_eq!(p.tau_mode, 2 + first);
        }
    }
}
