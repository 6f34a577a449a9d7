//! Choice of the earliest change-point `c` by information criterion.
//!
//! Candidates are fitted from the largest `c` downwards. The no-change fit
//! seeds the largest grid value, and each fit seeds the next smaller one:
//! easiness, discrimination, shared change effects and `(alpha, beta)` carry
//! over, and the newly freed change effect starts at -1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, fit_from, FitConfig, FitResult};
use crate::model::ResponseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Bic,
    Aic,
}

impl Criterion {
    pub fn evaluate(&self, loglik: f64, n_free_parameters: usize, n_persons: usize) -> f64 {
        let penalty = match self {
            Criterion::Bic => (n_persons as f64).ln(),
            Criterion::Aic => 2.0,
        };
        -2.0 * loglik + penalty * n_free_parameters as f64
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(Criterion::Bic),
            "aic" => Ok(Criterion::Aic),
            other => Err(Error::invalid(format!("unknown criterion {other:?}"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Bic => "bic",
            Criterion::Aic => "aic",
        })
    }
}

/// One fitted candidate. `c == J` is the no-change baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub c: usize,
    pub baseline: bool,
    pub loglik: Option<f64>,
    pub n_free_parameters: usize,
    pub bic: Option<f64>,
    pub aic: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
    #[serde(skip)]
    pub fit: Option<FitResult>,
}

impl Candidate {
    pub fn label(&self) -> String {
        if self.baseline {
            "baseline".to_string()
        } else {
            format!("c={}", self.c)
        }
    }

    pub fn criterion_value(&self, criterion: Criterion) -> Option<f64> {
        match criterion {
            Criterion::Bic => self.bic,
            Criterion::Aic => self.aic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub criterion: Criterion,
    pub n_persons: usize,
    pub n_items: usize,
    /// Baseline first, then grid values in decreasing order.
    pub candidates: Vec<Candidate>,
    /// Index into `candidates`.
    pub chosen: usize,
}

impl SelectionReport {
    pub fn chosen(&self) -> &Candidate {
        &self.candidates[self.chosen]
    }

    pub fn chosen_fit(&self) -> &FitResult {
        self.chosen()
            .fit
            .as_ref()
            .expect("chosen candidate always has a fit")
    }

    pub fn baseline(&self) -> &Candidate {
        self.candidates
            .iter()
            .find(|c| c.baseline)
            .expect("baseline is always fitted")
    }
}

/// `{ceil(J/2), ..., J-1}`.
pub fn default_grid(n_items: usize) -> Vec<usize> {
    (n_items.div_ceil(2)..n_items).collect()
}

/// Number of free parameters of the model with earliest change-point `c`.
pub fn n_free_parameters(n_items: usize, c: usize) -> usize {
    if c >= n_items {
        2 * n_items
    } else {
        2 * n_items + (n_items - c) + 2
    }
}

fn candidate(c: usize, n_items: usize, n_persons: usize, outcome: Result<FitResult>) -> Candidate {
    let baseline = c == n_items;
    match outcome {
        Ok(f) => Candidate {
            c,
            baseline,
            loglik: Some(f.loglik),
            n_free_parameters: f.n_free_parameters,
            bic: Some(Criterion::Bic.evaluate(f.loglik, f.n_free_parameters, n_persons)),
            aic: Some(Criterion::Aic.evaluate(f.loglik, f.n_free_parameters, n_persons)),
            converged: f.converged,
            error: None,
            fit: Some(f),
        },
        Err(e) => Candidate {
            c,
            baseline,
            loglik: None,
            n_free_parameters: n_free_parameters(n_items, c),
            bic: None,
            aic: None,
            converged: false,
            error: Some(e.to_string()),
            fit: None,
        },
    }
}

/// The baseline is the `gamma = 0` edge of every change model. When a change
/// fit stops short of it, the edge point is the better estimate: baseline
/// easiness and discrimination, no change effects, and the fitted
/// `(alpha, beta)`, which no longer affect the likelihood.
fn boundary_fit(change: &FitResult, baseline: &FitResult, n_persons: usize) -> FitResult {
    let mut f = change.clone();
    f.items.d.clone_from(&baseline.items.d);
    f.items.a.clone_from(&baseline.items.a);
    f.items.gamma.iter_mut().for_each(|g| *g = 0.0);
    f.loglik = baseline.loglik;
    f.bic = Criterion::Bic.evaluate(f.loglik, f.n_free_parameters, n_persons);
    f.converged = baseline.converged;
    f.gradient_norm = baseline.gradient_norm;
    f.warnings.push(format!(
        "change fit stayed below the baseline likelihood; reporting the gamma = 0 boundary (loglik {} -> {})",
        change.loglik, baseline.loglik
    ));
    f
}

/// Fits the baseline and every grid value, then picks the converged
/// candidate minimizing `criterion` (ties go to the larger `c`).
pub fn select_c(
    data: &ResponseMatrix,
    c_grid: Option<&[usize]>,
    config: &FitConfig,
    criterion: Criterion,
) -> Result<SelectionReport> {
    let n_items = data.n_items();
    let n_persons = data.n_persons();
    let mut grid = match c_grid {
        Some(g) => g.to_vec(),
        None => default_grid(n_items),
    };
    if let Some(&bad) = grid.iter().find(|&&c| c < 1 || c >= n_items) {
        return Err(Error::invalid(format!(
            "grid value {bad} outside 1..={}",
            n_items - 1
        )));
    }
    grid.sort_unstable_by(|a, b| b.cmp(a));
    grid.dedup();

    let mut candidates = Vec::with_capacity(grid.len() + 1);
    let base = candidate(n_items, n_items, n_persons, fit(data, n_items, config));
    let mut seed = base.fit.clone();
    candidates.push(base);
    for &c in &grid {
        let outcome = match &seed {
            Some(prev) => fit_from(data, c, config, &prev.items, &prev.structural),
            None => fit(data, c, config),
        };
        if let Ok(f) = &outcome {
            seed = Some(f.clone());
        }
        let outcome = match (outcome, &candidates[0].fit) {
            (Ok(f), Some(b)) if f.loglik < b.loglik => Ok(boundary_fit(&f, b, n_persons)),
            (other, _) => other,
        };
        candidates.push(candidate(c, n_items, n_persons, outcome));
    }

    let mut chosen: Option<usize> = None;
    for (i, cand) in candidates.iter().enumerate() {
        if !cand.converged {
            continue;
        }
        let Some(value) = cand.criterion_value(criterion) else {
            continue;
        };
        let better = match chosen {
            None => true,
            Some(b) => {
                let best = &candidates[b];
                let best_value = best.criterion_value(criterion).unwrap_or(f64::INFINITY);
                value < best_value || (value == best_value && cand.c > best.c)
            }
        };
        if better {
            chosen = Some(i);
        }
    }
    let chosen = chosen.ok_or_else(|| {
        Error::Selection("no candidate fit converged; nothing to select".into())
    })?;
    Ok(SelectionReport {
        criterion,
        n_persons,
        n_items,
        candidates,
        chosen,
    })
}
