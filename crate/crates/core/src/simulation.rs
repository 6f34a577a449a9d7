//! Synthetic data, scenario runners and recovery metrics.
//!
//! Item parameters are drawn once per study from the master seed; every
//! replication then draws abilities, change-points and responses from its
//! own child seed, so a single replication can be re-run on its own.
//!
//! `rmse_theta` averages per-replication RMSEs, while every other theta RMSE
//! pools squared errors over all persons and replications.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, FitConfig};
use crate::inference::Scorer;
use crate::likelihood::ModelSpec;
use crate::model::{irf, ChangePointSupport, ItemParameters, ResponseMatrix, StructuralParameters};
use crate::structural::tau_pmf;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the item-parameter stream.
pub fn item_seed(master: u64) -> u64 {
    splitmix64(master)
}

/// Seed of replication `rep` (0-based).
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    splitmix64(master.wrapping_add(GOLDEN_GAMMA.wrapping_mul(rep as u64 + 1)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Every parameter fixed at its true value; only persons are scored.
    KnownBaseline,
    /// Every parameter estimated with `c` known.
    AllUnknown,
}

impl Scenario {
    pub fn number(&self) -> u8 {
        match self {
            Scenario::KnownBaseline => 1,
            Scenario::AllUnknown => 2,
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "known-baseline" => Ok(Scenario::KnownBaseline),
            "2" | "all-unknown" => Ok(Scenario::AllUnknown),
            other => Err(Error::invalid(format!("unknown scenario {other:?}"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_persons: usize,
    pub n_items: usize,
    pub c: usize,
    pub alpha: f64,
    pub beta: f64,
    pub replications: usize,
    pub seed: u64,
    pub scenario: Scenario,
    pub fit: FitConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_persons: 1000,
            n_items: 30,
            c: 20,
            alpha: 0.2,
            beta: -0.1,
            replications: 25,
            seed: 1,
            scenario: Scenario::AllUnknown,
            fit: FitConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_persons < 1 {
            return Err(Error::invalid("n_persons must be at least 1"));
        }
        if self.replications < 1 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        ChangePointSupport::new(self.c, self.n_items)?;
        StructuralParameters::new(self.alpha, self.beta)?;
        self.fit.validate()
    }

    pub fn support(&self) -> Result<ChangePointSupport> {
        ChangePointSupport::new(self.c, self.n_items)
    }

    pub fn structural(&self) -> Result<StructuralParameters> {
        StructuralParameters::new(self.alpha, self.beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub responses: ResponseMatrix,
    pub theta_true: Vec<f64>,
    pub tau_true: Vec<usize>,
    pub items_true: ItemParameters,
    pub structural_true: StructuralParameters,
    pub support: ChangePointSupport,
    /// Seed of the person and response stream.
    pub seed: u64,
}

impl SimulatedDataset {
    pub fn n_speeded(&self) -> usize {
        let j = self.support.n_items();
        self.tau_true.iter().filter(|&&t| t < j).count()
    }
}

/// `d ~ U(-1, 1)`, `a ~ U(0.5, 1.5)`, `gamma = 0` up to `c` and
/// `gamma ~ U(-2, -1)` after it.
pub fn generate_item_parameters<R: Rng + ?Sized>(
    n_items: usize,
    c: usize,
    rng: &mut R,
) -> Result<ItemParameters> {
    let support = ChangePointSupport::new(c, n_items)?;
    let d = (0..n_items).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = (0..n_items).map(|_| rng.random_range(0.5..1.5)).collect();
    let gamma = (1..=n_items)
        .map(|j| {
            if j > support.c() {
                rng.random_range(-2.0..-1.0)
            } else {
                0.0
            }
        })
        .collect();
    ItemParameters::new(d, a, gamma)
}

/// Abilities from the standard normal and change-points from the hazard model.
pub fn generate_persons<R: Rng + ?Sized>(
    n_persons: usize,
    structural: &StructuralParameters,
    support: &ChangePointSupport,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if n_persons < 1 {
        return Err(Error::invalid("n_persons must be at least 1"));
    }
    let theta = (0..n_persons).map(|_| rng.sample(StandardNormal)).collect();
    let dist = tau_pmf(structural, support);
    let index = WeightedIndex::new(dist.pmf())
        .map_err(|e| Error::invalid(format!("change-point distribution: {e}")))?;
    let tau = (0..n_persons)
        .map(|_| support.c() + index.sample(rng))
        .collect();
    Ok((theta, tau))
}

pub fn generate_responses<R: Rng + ?Sized>(
    items: &ItemParameters,
    theta: &[f64],
    tau: &[usize],
    support: &ChangePointSupport,
    rng: &mut R,
) -> Result<ResponseMatrix> {
    items.validate_for(support)?;
    if theta.len() != tau.len() {
        return Err(Error::invalid(format!(
            "{} abilities but {} change-points",
            theta.len(),
            tau.len()
        )));
    }
    if let Some(t) = tau.iter().find(|&&t| !support.contains(t)) {
        return Err(Error::invalid(format!("change-point {t} outside the support")));
    }
    let n_items = items.n_items();
    let mut entries = Vec::with_capacity(theta.len() * n_items);
    for (&th, &t) in theta.iter().zip(tau) {
        for j in 0..n_items {
            let p = irf(items.d[j], items.a[j], items.gamma[j], th, j + 1 > t)?;
            entries.push(u8::from(rng.random::<f64>() < p));
        }
    }
    ResponseMatrix::new(theta.len(), n_items, entries)
}

/// Persons and responses for given items, drawn from `seed`.
pub fn simulate_with_items(
    items: &ItemParameters,
    n_persons: usize,
    structural: &StructuralParameters,
    support: &ChangePointSupport,
    seed: u64,
) -> Result<SimulatedDataset> {
    let mut rng = rng_from_seed(seed);
    let (theta, tau) = generate_persons(n_persons, structural, support, &mut rng)?;
    let responses = generate_responses(items, &theta, &tau, support, &mut rng)?;
    Ok(SimulatedDataset {
        responses,
        theta_true: theta,
        tau_true: tau,
        items_true: items.clone(),
        structural_true: *structural,
        support: *support,
        seed,
    })
}

/// One complete dataset: items from [`item_seed`] and persons from the
/// first replication seed of `seed`.
pub fn simulate_dataset(
    n_persons: usize,
    n_items: usize,
    c: usize,
    structural: &StructuralParameters,
    seed: u64,
) -> Result<SimulatedDataset> {
    let support = ChangePointSupport::new(c, n_items)?;
    let items = generate_item_parameters(n_items, c, &mut rng_from_seed(item_seed(seed)))?;
    simulate_with_items(&items, n_persons, structural, &support, replication_seed(seed, 0))
}

/// Estimates from one replication. Item and structural estimates are absent
/// when the parameters were held at their true values.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationEstimate {
    /// No-change EAP from all items.
    pub theta_before: Vec<f64>,
    /// No-change EAP from items up to the estimated change-point.
    pub theta_after: Vec<f64>,
    pub tau_hat: Vec<usize>,
    pub items: Option<ItemParameters>,
    pub structural: Option<StructuralParameters>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMetrics {
    /// 1-based item index.
    pub item: usize,
    pub bias_d: f64,
    pub rmse_d: f64,
    pub bias_a: f64,
    pub rmse_a: f64,
    /// Absent for items that cannot change.
    pub bias_gamma: Option<f64>,
    pub rmse_gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub scenario: Option<Scenario>,
    pub n_persons: usize,
    pub n_items: usize,
    pub c: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: Option<u64>,
    /// Replications contributing to the metrics.
    pub replications: usize,
    pub failures: usize,
    pub non_converged: usize,
    /// Persons with a true change-point before the last item, over all replications.
    pub n_speeded: usize,
    pub mae_tau: Option<f64>,
    pub bias_theta: Option<f64>,
    pub rmse_theta: Option<f64>,
    pub bias_theta_subset: Option<f64>,
    pub rmse_theta_subset: Option<f64>,
    pub bias_theta_cp: Option<f64>,
    pub rmse_theta_cp: Option<f64>,
    pub bias_theta_subset_cp: Option<f64>,
    pub rmse_theta_subset_cp: Option<f64>,
    pub bias_alpha: Option<f64>,
    pub rmse_alpha: Option<f64>,
    pub bias_beta: Option<f64>,
    pub rmse_beta: Option<f64>,
    pub items: Vec<ItemMetrics>,
}

impl MetricsTable {
    /// Scalar metrics in a fixed order.
    pub fn scalars(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("mae_tau", self.mae_tau),
            ("bias_theta", self.bias_theta),
            ("rmse_theta", self.rmse_theta),
            ("bias_theta_subset", self.bias_theta_subset),
            ("rmse_theta_subset", self.rmse_theta_subset),
            ("bias_theta_cp", self.bias_theta_cp),
            ("rmse_theta_cp", self.rmse_theta_cp),
            ("bias_theta_subset_cp", self.bias_theta_subset_cp),
            ("rmse_theta_subset_cp", self.rmse_theta_subset_cp),
            ("bias_alpha", self.bias_alpha),
            ("rmse_alpha", self.rmse_alpha),
            ("bias_beta", self.bias_beta),
            ("rmse_beta", self.rmse_beta),
        ]
    }

    pub fn fraction_items_within(&self, limit: f64) -> Option<f64> {
        if self.items.is_empty() {
            return None;
        }
        let ok = self
            .items
            .iter()
            .filter(|m| m.bias_d.abs() < limit && m.bias_a.abs() < limit)
            .count();
        Some(ok as f64 / self.items.len() as f64)
    }
}

#[derive(Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn add(&mut self, e: f64) {
        self.n += 1;
        self.sum += e;
        self.sum_sq += e * e;
    }

    fn bias(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }

    fn rmse(&self) -> Option<f64> {
        (self.n > 0).then(|| (self.sum_sq / self.n as f64).sqrt())
    }
}

/// Bias, RMSE and MAE of the estimates against the truth.
pub fn compute_metrics(
    truth: &[SimulatedDataset],
    estimates: &[ReplicationEstimate],
) -> Result<MetricsTable> {
    if truth.len() != estimates.len() {
        return Err(Error::invalid(format!(
            "{} truth sets but {} estimate sets",
            truth.len(),
            estimates.len()
        )));
    }
    let Some(first) = truth.first() else {
        return Err(Error::invalid("no replications to summarize"));
    };
    let (n_items, support) = (first.support.n_items(), first.support);
    for (t, e) in truth.iter().zip(estimates) {
        let n = t.theta_true.len();
        if t.support != support
            || t.tau_true.len() != n
            || e.theta_before.len() != n
            || e.theta_after.len() != n
            || e.tau_hat.len() != n
        {
            return Err(Error::invalid("replication dimensions do not match"));
        }
        if let Some(items) = &e.items {
            if items.n_items() != n_items {
                return Err(Error::invalid("item estimates do not match the design"));
            }
        }
    }

    let replications = truth.len();
    let mut mae = 0.0;
    let mut rmse_theta_sum = 0.0;
    let mut before = Moments::default();
    let mut after = Moments::default();
    let mut before_cp = Moments::default();
    let mut after_cp = Moments::default();
    for (t, e) in truth.iter().zip(estimates) {
        let n = t.theta_true.len() as f64;
        let mut abs_tau = 0.0;
        let mut sq = 0.0;
        for i in 0..t.theta_true.len() {
            abs_tau += (e.tau_hat[i] as f64 - t.tau_true[i] as f64).abs();
            let eb = e.theta_before[i] - t.theta_true[i];
            let ea = e.theta_after[i] - t.theta_true[i];
            sq += eb * eb;
            before.add(eb);
            after.add(ea);
            if t.tau_true[i] < n_items {
                before_cp.add(eb);
                after_cp.add(ea);
            }
        }
        mae += abs_tau / n;
        rmse_theta_sum += (sq / n).sqrt();
    }
    let r = replications as f64;

    let mut items = Vec::new();
    let with_items: Vec<_> = truth
        .iter()
        .zip(estimates)
        .filter_map(|(t, e)| e.items.as_ref().map(|i| (&t.items_true, i)))
        .collect();
    if with_items.len() == replications {
        for j in 0..n_items {
            let (mut d, mut a, mut g) = (Moments::default(), Moments::default(), Moments::default());
            for (true_items, est) in &with_items {
                d.add(est.d[j] - true_items.d[j]);
                a.add(est.a[j] - true_items.a[j]);
                g.add(est.gamma[j] - true_items.gamma[j]);
            }
            let changeable = j + 1 > support.c();
            items.push(ItemMetrics {
                item: j + 1,
                bias_d: d.bias().unwrap_or(f64::NAN),
                rmse_d: d.rmse().unwrap_or(f64::NAN),
                bias_a: a.bias().unwrap_or(f64::NAN),
                rmse_a: a.rmse().unwrap_or(f64::NAN),
                bias_gamma: if changeable { g.bias() } else { None },
                rmse_gamma: if changeable { g.rmse() } else { None },
            });
        }
    }

    let (mut alpha, mut beta) = (Moments::default(), Moments::default());
    let structural_complete = estimates.iter().all(|e| e.structural.is_some());
    if structural_complete && !support.is_degenerate() {
        for (t, e) in truth.iter().zip(estimates) {
            let s = e.structural.expect("checked above");
            alpha.add(s.alpha - t.structural_true.alpha);
            beta.add(s.beta - t.structural_true.beta);
        }
    }

    Ok(MetricsTable {
        scenario: None,
        n_persons: first.theta_true.len(),
        n_items,
        c: support.c(),
        alpha: first.structural_true.alpha,
        beta: first.structural_true.beta,
        seed: None,
        replications,
        failures: 0,
        non_converged: estimates.iter().filter(|e| !e.converged).count(),
        n_speeded: before_cp.n,
        mae_tau: Some(mae / r),
        bias_theta: before.bias(),
        rmse_theta: Some(rmse_theta_sum / r),
        bias_theta_subset: after.bias(),
        rmse_theta_subset: after.rmse(),
        bias_theta_cp: before_cp.bias(),
        rmse_theta_cp: before_cp.rmse(),
        bias_theta_subset_cp: after_cp.bias(),
        rmse_theta_subset_cp: after_cp.rmse(),
        bias_alpha: alpha.bias(),
        rmse_alpha: alpha.rmse(),
        bias_beta: beta.bias(),
        rmse_beta: beta.rmse(),
        items,
    })
}

fn score_replication(
    data: &SimulatedDataset,
    spec: ModelSpec,
) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
    let scorer = Scorer::new(spec);
    let posteriors = scorer.score_all(&data.responses)?;
    let n_items = data.support.n_items();
    let before = data
        .responses
        .rows()
        .map(|y| scorer.eap_theta(y, Some(n_items)))
        .collect::<Result<Vec<_>>>()?;
    let after = posteriors.iter().map(|p| p.theta_cleansed).collect();
    let tau = posteriors.iter().map(|p| p.tau_mode).collect();
    Ok((before, after, tau))
}

/// Estimates for one simulated dataset under `scenario`.
pub fn estimate_replication(
    data: &SimulatedDataset,
    scenario: Scenario,
    config: &FitConfig,
) -> Result<ReplicationEstimate> {
    let quadrature = config.quadrature()?;
    match scenario {
        Scenario::KnownBaseline => {
            let spec = ModelSpec::new(
                data.items_true.clone(),
                data.structural_true,
                data.support,
                quadrature,
            )?;
            let (theta_before, theta_after, tau_hat) = score_replication(data, spec)?;
            Ok(ReplicationEstimate {
                theta_before,
                theta_after,
                tau_hat,
                items: None,
                structural: None,
                converged: true,
            })
        }
        Scenario::AllUnknown => {
            let fitted = fit(&data.responses, data.support.c(), config)?;
            let (theta_before, theta_after, tau_hat) =
                score_replication(data, fitted.model_spec(quadrature)?)?;
            Ok(ReplicationEstimate {
                theta_before,
                theta_after,
                tau_hat,
                items: Some(fitted.items),
                structural: Some(fitted.structural),
                converged: fitted.converged,
            })
        }
    }
}

/// Runs every replication of a scenario and summarizes them. Replications
/// whose estimation fails are counted and left out.
pub fn run_scenario(config: &ScenarioConfig) -> Result<MetricsTable> {
    config.validate()?;
    let support = config.support()?;
    let structural = config.structural()?;
    let items = generate_item_parameters(
        config.n_items,
        config.c,
        &mut rng_from_seed(item_seed(config.seed)),
    )?;
    let mut truth = Vec::with_capacity(config.replications);
    let mut estimates = Vec::with_capacity(config.replications);
    let mut failures = 0;
    for rep in 0..config.replications {
        let data = simulate_with_items(
            &items,
            config.n_persons,
            &structural,
            &support,
            replication_seed(config.seed, rep),
        )?;
        match estimate_replication(&data, config.scenario, &config.fit) {
            Ok(est) => {
                truth.push(data);
                estimates.push(est);
            }
            Err(_) => failures += 1,
        }
    }
    if truth.is_empty() {
        return Err(Error::Simulation(format!(
            "all {} replications failed",
            config.replications
        )));
    }
    let mut table = compute_metrics(&truth, &estimates)?;
    table.scenario = Some(config.scenario);
    table.seed = Some(config.seed);
    table.failures = failures;
    Ok(table)
}
