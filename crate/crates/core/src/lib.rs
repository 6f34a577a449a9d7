//! Change-point item response models for binary response data.
//!
//! Each respondent answers `J` items under a two-parameter logistic model
//! until a latent change-point `tau`; items after it carry an additional
//! negative shift `gamma_j` in their intercept. The change-point follows a
//! discrete hazard distribution on `{c, ..., J}` with no-change mass
//! `logistic(beta)` and a geometric ratio `exp(alpha)` between consecutive
//! earlier positions.
//!
//! The crate covers the whole workflow:
//!
//! - [`likelihood`]: marginal log-likelihood and analytic gradient,
//! - [`estimation`]: quasi-Newton marginal maximum likelihood,
//! - [`inference`]: change-point posteriors, EAP and cleansed abilities,
//! - [`selection`]: choice of the earliest change-point by BIC or AIC,
//! - [`simulation`]: data generation and recovery metrics,
//! - [`io`] and [`cli`]: file formats and the `cpirt` command line.

pub mod cli;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod selection;
pub mod simulation;
pub mod structural;

pub use error::{Error, Result};
pub use estimation::{fit, fit_from, FitConfig, FitResult};
pub use inference::{score_persons, PersonPosterior, Scorer};
pub use likelihood::{marginal_loglik, marginal_loglik_gradient, ModelSpec};
pub use model::{
    irf, response_logmass, ChangePointSupport, ItemParameters, ResponseMatrix,
    StructuralParameters,
};
pub use selection::{select_c, Criterion, SelectionReport};
pub use simulation::{run_scenario, MetricsTable, Scenario, ScenarioConfig, SimulatedDataset};
pub use structural::{gauss_hermite_standard_normal, tau_pmf, QuadratureRule, TauDistribution};
