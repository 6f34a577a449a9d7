//! Command-line surface.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 when the data or
//! the estimation fail. A fit that stops before converging is still written
//! and reported with status 2.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::estimation::{fit, FitConfig, FitResult};
use crate::inference::Scorer;
use crate::io;
use crate::model::{ResponseMatrix, StructuralParameters};
use crate::selection::{select_c, Criterion};
use crate::simulation::{run_scenario, simulate_dataset, Scenario, ScenarioConfig};
use crate::structural::DEFAULT_QUADRATURE_NODES;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cpirt", version, about = "Change-point item response models for binary data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate responses and write them with the true parameters.
    Simulate(SimulateArgs),
    /// Fit the model with a given earliest change-point.
    Fit(FitArgs),
    /// Choose the earliest change-point by information criterion.
    Select(SelectArgs),
    /// Score respondents with a fitted model.
    Score(ScoreArgs),
    /// Run a simulation study and write recovery metrics.
    Study(StudyArgs),
    /// Run everything described by a JSON configuration file.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 30)]
    j: usize,
    #[arg(long, default_value_t = 20)]
    c: usize,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, default_value_t = -0.1, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct Estimation {
    /// Quadrature nodes for the ability integral.
    #[arg(long, default_value_t = DEFAULT_QUADRATURE_NODES)]
    nodes: usize,
    /// Gradient tolerance on the per-respondent objective.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Estimate change effects without the sign constraint.
    #[arg(long)]
    unconstrained: bool,
    /// Jitter the starting values with this seed.
    #[arg(long)]
    start_seed: Option<u64>,
}

impl Estimation {
    fn config(&self) -> FitConfig {
        FitConfig {
            quadrature_nodes: self.nodes,
            max_iterations: self.max_iter,
            gradient_tolerance: self.tol,
            constrain_gamma: !self.unconstrained,
            ridge_penalty: self.ridge,
            seed: self.start_seed,
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    responses: PathBuf,
    /// Earliest change-point; the number of items gives the no-change model.
    #[arg(long)]
    c: usize,
    #[command(flatten)]
    estimation: Estimation,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[arg(long)]
    responses: PathBuf,
    /// Comma-separated candidates; defaults to ceil(J/2)..J-1.
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<usize>>,
    #[arg(long, default_value = "bic", value_parser = parse_criterion)]
    criterion: Criterion,
    #[command(flatten)]
    estimation: Estimation,
    /// Directory receiving selection.json and fit.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    fit: PathBuf,
    /// Overrides the node count stored with the fit.
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[arg(long, value_parser = parse_scenario)]
    scenario: Scenario,
    #[arg(long, default_value_t = 20)]
    c: usize,
    #[arg(long, default_value_t = -0.1, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, default_value_t = 25)]
    replications: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 30)]
    j: usize,
    #[command(flatten)]
    estimation: Estimation,
    /// Directory receiving metrics.csv and metrics.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

fn parse_criterion(s: &str) -> Result<Criterion, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Data(String),
    /// Results were written but the estimation did not converge.
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit_command(a),
        Command::Select(a) => select(a),
        Command::Score(a) => score(a),
        Command::Study(a) => study(a),
        Command::Run(a) => run_config(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            EXIT_FAILURE
        }
        Err(Failure::NotConverged(m)) => {
            eprintln!("warning: {m}");
            EXIT_FAILURE
        }
    }
}

fn ensure_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(Error::io(dir, e).to_string()))
}

fn simulate(a: SimulateArgs) -> Outcome {
    let structural = StructuralParameters::new(a.alpha, a.beta).map_err(usage)?;
    let data = simulate_dataset(a.n, a.j, a.c, &structural, a.seed).map_err(usage)?;
    io::write_dataset(&data, a.seed, &a.out_dir)?;
    println!(
        "wrote {} respondents x {} items to {}",
        a.n,
        a.j,
        a.out_dir.display()
    );
    Ok(())
}

fn load(path: &Path) -> Result<ResponseMatrix, Failure> {
    Ok(io::read_responses(path)?)
}

fn report_fit(fit: &FitResult) {
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "c={} loglik={} bic={} k={} iterations={} converged={}",
        fit.support.c(),
        io::format_number(fit.loglik),
        io::format_number(fit.bic),
        fit.n_free_parameters,
        fit.iterations,
        fit.converged
    );
}

fn not_converged(fit: &FitResult) -> Outcome {
    if fit.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "estimation stopped after {} iterations with gradient norm {}",
            fit.iterations,
            io::format_number(fit.gradient_norm)
        )))
    }
}

fn fit_command(a: FitArgs) -> Outcome {
    let config = a.estimation.config();
    config.validate().map_err(usage)?;
    let data = load(&a.responses)?;
    if a.c < 1 || a.c > data.n_items() {
        return Err(Failure::Usage(format!(
            "--c {} outside 1..={}",
            a.c,
            data.n_items()
        )));
    }
    let result = fit(&data, a.c, &config)?;
    io::write_fit_with_config(&result, Some(&config), &a.out)?;
    report_fit(&result);
    not_converged(&result)
}

fn select_into(
    data: &ResponseMatrix,
    grid: Option<&[usize]>,
    criterion: Criterion,
    config: &FitConfig,
    out: &Path,
) -> Result<FitResult, Failure> {
    ensure_dir(out)?;
    let report = select_c(data, grid, config, criterion)?;
    for cand in &report.candidates {
        if let Some(e) = &cand.error {
            eprintln!("warning: {} failed: {e}", cand.label());
        } else if !cand.converged {
            eprintln!("warning: {} did not converge and was excluded", cand.label());
        }
    }
    io::write_selection(&report, out.join("selection.json"))?;
    let chosen = report.chosen_fit().clone();
    io::write_fit_with_config(&chosen, Some(config), out.join("fit.json"))?;
    println!("chosen {} ({criterion})", report.chosen().label());
    report_fit(&chosen);
    Ok(chosen)
}

fn select(a: SelectArgs) -> Outcome {
    let config = a.estimation.config();
    config.validate().map_err(usage)?;
    let data = load(&a.responses)?;
    select_into(&data, a.c_grid.as_deref(), a.criterion, &config, &a.out)?;
    Ok(())
}

fn score_into(data: &ResponseMatrix, fit: &FitResult, nodes: usize, out: &Path) -> Outcome {
    let config = FitConfig {
        quadrature_nodes: nodes,
        ..FitConfig::default()
    };
    let scorer = Scorer::from_fit(fit, &config)?;
    let posteriors = scorer.score_all(data)?;
    io::write_scores(&posteriors, out)?;
    let flagged = posteriors.iter().filter(|p| p.prob_change > 0.5).count();
    println!(
        "scored {} respondents; {} with change probability above 0.5",
        posteriors.len(),
        flagged
    );
    Ok(())
}

fn score(a: ScoreArgs) -> Outcome {
    if a.nodes == Some(0) {
        return Err(Failure::Usage("--nodes must be at least 1".into()));
    }
    let (fitted, stored) = io::read_fit_with_config(&a.fit)?;
    let data = load(&a.responses)?;
    let nodes = a
        .nodes
        .or(stored.map(|c| c.quadrature_nodes))
        .unwrap_or(DEFAULT_QUADRATURE_NODES);
    score_into(&data, &fitted, nodes, &a.out)
}

fn run_study(config: &ScenarioConfig, out: &Path) -> Outcome {
    let table = run_scenario(config)?;
    let (csv, json) = io::write_metrics(&table, out)?;
    if table.failures > 0 {
        eprintln!("warning: {} replications failed", table.failures);
    }
    if table.non_converged > 0 {
        eprintln!("warning: {} replications did not converge", table.non_converged);
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn study(a: StudyArgs) -> Outcome {
    let config = ScenarioConfig {
        n_persons: a.n,
        n_items: a.j,
        c: a.c,
        alpha: a.alpha,
        beta: a.beta,
        replications: a.replications,
        seed: a.seed,
        scenario: a.scenario,
        fit: a.estimation.config(),
    };
    config.validate().map_err(usage)?;
    run_study(&config, &a.out)
}

fn run_config(a: RunArgs) -> Outcome {
    let config = io::read_run_config(&a.config).map_err(usage)?;
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    ensure_dir(&out)?;
    if let Some(study) = &config.study {
        return run_study(study, &out);
    }
    let path = config.responses.as_ref().expect("validated");
    let data = load(path)?;
    let fitted = match config.c {
        Some(c) => {
            let result = fit(&data, c, &config.fit)?;
            io::write_fit_with_config(&result, Some(&config.fit), out.join("fit.json"))?;
            report_fit(&result);
            result
        }
        None => select_into(
            &data,
            config.c_grid.as_deref(),
            config.criterion,
            &config.fit,
            &out,
        )?,
    };
    if config.score {
        score_into(
            &data,
            &fitted,
            config.fit.quadrature_nodes,
            &out.join("scores.csv"),
        )?;
    }
    not_converged(&fitted)
}
