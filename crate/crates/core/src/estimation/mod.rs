//! Marginal maximum likelihood fitting by quasi-Newton optimization.
//!
//! The optimizer works on the packed vector of [`ParameterLayout`] and
//! minimizes the mean negative log-likelihood per respondent (plus an
//! optional ridge on the item coordinates). Convergence is declared when the
//! max-norm of that objective's gradient falls below
//! [`FitConfig::gradient_tolerance`].

mod layout;
pub mod lbfgs;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use layout::{Packed, ParameterLayout, LOG_GAMMA_FLOOR};

use crate::error::{Error, Result};
use crate::likelihood::{loglik_and_gradient, ModelSpec};
use crate::model::{ChangePointSupport, ItemParameters, ResponseMatrix, StructuralParameters};
use crate::structural::{gauss_hermite_standard_normal, QuadratureRule, DEFAULT_QUADRATURE_NODES};
use lbfgs::{minimize, LbfgsOptions};

/// Standard errors above this are reported as uninformative.
pub const STANDARD_ERROR_FLAG_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub quadrature_nodes: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Keep change effects negative through `gamma = -exp(g)`.
    pub constrain_gamma: bool,
    pub ridge_penalty: f64,
    /// Jitters the starting values when set.
    pub seed: Option<u64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            constrain_gamma: true,
            ridge_penalty: 0.0,
            seed: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quadrature_nodes < 1 {
            return Err(Error::invalid("quadrature_nodes must be at least 1"));
        }
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::invalid("gradient_tolerance must be positive"));
        }
        if !(self.ridge_penalty >= 0.0) || !self.ridge_penalty.is_finite() {
            return Err(Error::invalid("ridge_penalty must be a nonnegative number"));
        }
        Ok(())
    }

    pub fn quadrature(&self) -> Result<QuadratureRule> {
        gauss_hermite_standard_normal(self.quadrature_nodes)
    }
}

/// Estimates and diagnostics of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub items: ItemParameters,
    pub structural: StructuralParameters,
    pub support: ChangePointSupport,
    pub n_persons: usize,
    pub loglik: f64,
    pub bic: f64,
    pub n_free_parameters: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the objective gradient at the estimate.
    pub gradient_norm: f64,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn aic(&self) -> f64 {
        -2.0 * self.loglik + 2.0 * self.n_free_parameters as f64
    }

    pub fn model_spec(&self, quadrature: QuadratureRule) -> Result<ModelSpec> {
        ModelSpec::new(self.items.clone(), self.structural, self.support, quadrature)
    }
}

/// `-2 loglik + k log N`.
pub fn bic(loglik: f64, n_free_parameters: usize, n_persons: usize) -> f64 {
    -2.0 * loglik + n_free_parameters as f64 * (n_persons as f64).ln()
}

pub fn pack_parameters(
    items: &ItemParameters,
    structural: &StructuralParameters,
    support: &ChangePointSupport,
    config: &FitConfig,
) -> Result<Packed> {
    ParameterLayout::new(*support, config.constrain_gamma).pack(items, structural)
}

pub fn unpack_parameters(
    values: &[f64],
    support: &ChangePointSupport,
    config: &FitConfig,
) -> Result<(ItemParameters, StructuralParameters)> {
    ParameterLayout::new(*support, config.constrain_gamma).unpack(values)
}

/// Starting values: column logits clamped to `[-3, 3]`, unit discriminations,
/// change effects of -1, `alpha = 0` and `beta = 1`.
pub fn default_start(
    data: &ResponseMatrix,
    support: &ChangePointSupport,
) -> (ItemParameters, StructuralParameters) {
    let d = data
        .column_means()
        .into_iter()
        .map(|p| {
            let logit = (p / (1.0 - p)).ln();
            if logit.is_nan() {
                0.0
            } else {
                logit.clamp(-3.0, 3.0)
            }
        })
        .collect::<Vec<_>>();
    let n = d.len();
    let gamma = (0..n)
        .map(|j| if j < support.c() { 0.0 } else { -1.0 })
        .collect();
    (
        ItemParameters {
            d,
            a: vec![1.0; n],
            gamma,
        },
        StructuralParameters {
            alpha: 0.0,
            beta: 1.0,
        },
    )
}

fn data_warnings(data: &ResponseMatrix) -> Vec<String> {
    data.column_means()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p == 0.0 || p == 1.0)
        .map(|(j, &p)| {
            format!(
                "item {} has a constant column (all {}); its easiness may diverge, consider a ridge penalty",
                j + 1,
                p as u8
            )
        })
        .collect()
}

/// Fits the model with earliest change-point `c` from the default start.
pub fn fit(data: &ResponseMatrix, c: usize, config: &FitConfig) -> Result<FitResult> {
    let support = ChangePointSupport::new(c, data.n_items())?;
    let (items, structural) = default_start(data, &support);
    fit_from(data, c, config, &items, &structural)
}

/// Fits the model starting from the given parameters. Entries of `gamma` at
/// items `1..=c` are ignored; other items with no change effect start at -1.
pub fn fit_from(
    data: &ResponseMatrix,
    c: usize,
    config: &FitConfig,
    start_items: &ItemParameters,
    start_structural: &StructuralParameters,
) -> Result<FitResult> {
    config.validate()?;
    let support = ChangePointSupport::new(c, data.n_items())?;
    if start_items.n_items() != data.n_items() {
        return Err(Error::invalid("starting values do not match the item count"));
    }
    let quadrature = config.quadrature()?;
    let layout = ParameterLayout::new(support, config.constrain_gamma);

    let mut start = start_items.clone();
    for (j, g) in start.gamma.iter_mut().enumerate() {
        if j < c {
            *g = 0.0;
        } else if *g == 0.0 {
            *g = -1.0;
        }
    }
    let mut warnings = data_warnings(data);
    let packed = layout.pack(&start, start_structural)?;
    warnings.extend(packed.warnings);
    let mut x0 = packed.values;
    if let Some(seed) = config.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut x0 {
            *v += rng.random_range(-0.1..0.1);
        }
    }

    let n = data.n_persons() as f64;
    let ridge = config.ridge_penalty;
    let objective = |x: &[f64]| -> (f64, Vec<f64>) {
        let Ok((items, structural)) = layout.unpack_unchecked(x) else {
            return (f64::NAN, Vec::new());
        };
        let spec = ModelSpec::new_unchecked(items, structural, support, quadrature.clone());
        match loglik_and_gradient(data, &spec, &layout) {
            Ok((ll, grad)) => {
                let mut value = -ll;
                let mut g: Vec<f64> = grad.iter().map(|v| -v / n).collect();
                if ridge > 0.0 {
                    for i in layout.item_slots() {
                        value += 0.5 * ridge * x[i] * x[i];
                        g[i] += ridge * x[i] / n;
                    }
                }
                (value / n, g)
            }
            Err(_) => (f64::NAN, Vec::new()),
        }
    };

    let (v0, g0) = objective(&x0);
    if !v0.is_finite() || g0.iter().any(|g| !g.is_finite()) {
        return Err(Error::Initialization(
            "log-likelihood is not finite at the starting values".into(),
        ));
    }

    let opts = LbfgsOptions {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        ..LbfgsOptions::default()
    };
    let result = minimize(objective, x0, &opts);

    let (mut items, structural) = layout.unpack_unchecked(&result.x)?;
    let mut refit_loglik = false;
    for j in c..items.n_items() {
        if items.gamma[j] > 0.0 {
            warnings.push(format!(
                "item {}: estimated change effect {} is positive, reported as 0",
                j + 1,
                items.gamma[j]
            ));
            items.gamma[j] = 0.0;
            refit_loglik = true;
        }
    }
    for (j, &a) in items.a.iter().enumerate() {
        if a < 0.0 {
            warnings.push(format!("item {}: negative discrimination {a}", j + 1));
        }
    }
    let items = ItemParameters::new(items.d, items.a, items.gamma)?;
    let structural = StructuralParameters::new(structural.alpha, structural.beta)?;
    let spec = ModelSpec::new(items, structural, support, quadrature)?;
    let loglik = if refit_loglik || ridge > 0.0 {
        crate::likelihood::marginal_loglik(data, &spec)?.loglik
    } else {
        -result.value * n
    };
    let n_free_parameters = layout.n_free_parameters();

    Ok(FitResult {
        items: spec.items,
        structural: spec.structural,
        support,
        n_persons: data.n_persons(),
        loglik,
        bic: bic(loglik, n_free_parameters, data.n_persons()),
        n_free_parameters,
        converged: result.converged(),
        iterations: result.iterations,
        gradient_norm: result.gradient_norm(),
        warnings,
    })
}

/// Standard errors from a finite-difference Hessian of the marginal
/// log-likelihood, in the packed parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardErrors {
    /// One entry per packed coordinate; `NaN` for inert or non-estimable ones.
    pub values: Vec<f64>,
    /// Coordinates whose variance is non-positive, non-finite or whose
    /// standard error exceeds [`STANDARD_ERROR_FLAG_LIMIT`].
    pub flagged: Vec<usize>,
    pub positive_definite: bool,
}

pub fn numerical_hessian_se(
    data: &ResponseMatrix,
    fit: &FitResult,
    config: &FitConfig,
) -> Result<StandardErrors> {
    if !fit.converged {
        return Err(Error::invalid("standard errors need a converged fit"));
    }
    let quadrature = config.quadrature()?;
    let layout = ParameterLayout::new(fit.support, config.constrain_gamma);
    let center = layout.pack(&fit.items, &fit.structural)?.values;
    let active: Vec<usize> = (0..layout.len())
        .filter(|&i| !(layout.structural_inert() && (i == layout.alpha() || i == layout.beta())))
        .collect();

    let gradient_at = |x: &[f64]| -> Result<Vec<f64>> {
        let (items, structural) = layout.unpack_unchecked(x)?;
        let spec = ModelSpec::new_unchecked(items, structural, fit.support, quadrature.clone());
        Ok(loglik_and_gradient(data, &spec, &layout)?.1)
    };

    let m = active.len();
    let mut hessian = DMatrix::<f64>::zeros(m, m);
    for (col, &i) in active.iter().enumerate() {
        let h = 1e-4 * (1.0 + center[i].abs());
        let mut plus = center.clone();
        plus[i] += h;
        let mut minus = center.clone();
        minus[i] -= h;
        let (gp, gm) = (gradient_at(&plus)?, gradient_at(&minus)?);
        for (row, &r) in active.iter().enumerate() {
            hessian[(row, col)] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }
    let information = -(&hessian + hessian.transpose()) * 0.5;
    let eig = SymmetricEigen::new(information);
    let largest = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tiny = 1e-10 * largest.max(f64::MIN_POSITIVE);

    let mut degenerate = Vec::new();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() <= tiny {
            for (row, &i) in active.iter().enumerate() {
                if eig.eigenvectors[(row, k)].abs() > 0.1 && !degenerate.contains(&i) {
                    degenerate.push(i);
                }
            }
        }
    }
    if !degenerate.is_empty() {
        degenerate.sort_unstable();
        return Err(Error::DegenerateInformation {
            coordinates: degenerate,
        });
    }
    let positive_definite = eig.eigenvalues.iter().all(|&l| l > 0.0);

    let mut values = vec![f64::NAN; layout.len()];
    let mut flagged = Vec::new();
    for (row, &i) in active.iter().enumerate() {
        let variance: f64 = (0..m)
            .map(|k| eig.eigenvectors[(row, k)].powi(2) / eig.eigenvalues[k])
            .sum();
        let se = variance.sqrt();
        values[i] = se;
        if !(variance > 0.0) || !se.is_finite() || se > STANDARD_ERROR_FLAG_LIMIT {
            flagged.push(i);
        }
    }
    Ok(StandardErrors {
        values,
        flagged,
        positive_definite,
    })
}
