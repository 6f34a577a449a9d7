//! File formats.
//!
//! Rectangular tables (responses, scores, truth, metrics) are CSV. Fit,
//! selection, item and metric documents are JSON objects carrying a
//! `schema_version` key; their floats are written with 17 significant
//! digits so they read back bit for bit.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{FitConfig, FitResult};
use crate::inference::PersonPosterior;
use crate::model::{ChangePointSupport, ItemParameters, ResponseMatrix, StructuralParameters};
use crate::selection::{Candidate, Criterion, SelectionReport};
use crate::simulation::{ItemMetrics, MetricsTable, Scenario, ScenarioConfig, SimulatedDataset};

pub const SCHEMA_VERSION: u32 = 1;

/// Plain decimal for moderate magnitudes, exponent form otherwise, `NA`
/// for non-finite values.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        "NA".to_string()
    } else if x == 0.0 || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn format_option(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), format_number)
}

// ---------------------------------------------------------------- responses

fn parse_records<R: Read>(reader: R) -> Result<ResponseMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut entries = Vec::new();
    let mut width: Option<usize> = None;
    let mut n_rows = 0;
    for (index, record) in rdr.records().enumerate() {
        let row = index + 1;
        let record = record.map_err(|e| Error::Format(format!("row {row}: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if index == 0 && record.iter().any(|t| t.parse::<f64>().is_err()) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    row,
                    column: w.min(record.len()) + 1,
                    message: format!("expected {w} entries, found {}", record.len()),
                });
            }
            Some(_) => {}
        }
        for (j, token) in record.iter().enumerate() {
            let value = match token {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Parse {
                        row,
                        column: j + 1,
                        message: format!("expected 0 or 1, found {other:?}"),
                    })
                }
            };
            entries.push(value);
        }
        n_rows += 1;
    }
    let Some(width) = width else {
        return Err(Error::Format("no response rows".into()));
    };
    ResponseMatrix::new(n_rows, width, entries)
}

/// Parses comma-separated 0/1 responses, one respondent per row. A first
/// row holding any non-numeric token is taken as a header and skipped.
pub fn parse_responses(text: &str) -> Result<ResponseMatrix> {
    parse_records(text.as_bytes())
}

pub fn read_responses(path: impl AsRef<Path>) -> Result<ResponseMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_records(io::BufReader::new(file))
}

pub fn write_responses(data: &ResponseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (1..=data.n_items()).map(|j| format!("item{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in data.rows() {
        let cells: Vec<&str> = row.iter().map(|&y| if y == 1 { "1" } else { "0" }).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

// ---------------------------------------------------------------- JSON

/// Pretty printer that writes floats with 17 significant digits.
struct ExactFloats<'a>(serde_json::ser::PrettyFormatter<'a>);

impl serde_json::ser::Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{value:.8e}")
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let formatter = ExactFloats(serde_json::ser::PrettyFormatter::with_indent(b"  "));
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, formatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn check_schema(version: u32, kind: &str, expected: &str) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema_version {version} (expected {SCHEMA_VERSION})"
        )));
    }
    if kind != expected {
        return Err(Error::Format(format!("expected a {expected} document, found {kind:?}")));
    }
    Ok(())
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDocument {
    pub schema_version: u32,
    pub kind: String,
    #[serde(rename = "J")]
    pub n_items: usize,
    pub c: usize,
    pub n_persons: usize,
    pub d: Vec<f64>,
    pub a: Vec<f64>,
    pub gamma: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub loglik: f64,
    pub bic: f64,
    pub n_free_parameters: usize,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<FitConfig>,
}

impl FitDocument {
    pub fn new(fit: &FitResult, config: Option<&FitConfig>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "fit".into(),
            n_items: fit.support.n_items(),
            c: fit.support.c(),
            n_persons: fit.n_persons,
            d: fit.items.d.clone(),
            a: fit.items.a.clone(),
            gamma: fit.items.gamma.clone(),
            alpha: fit.structural.alpha,
            beta: fit.structural.beta,
            loglik: fit.loglik,
            bic: fit.bic,
            n_free_parameters: fit.n_free_parameters,
            converged: fit.converged,
            iterations: fit.iterations,
            gradient_norm: fit.gradient_norm,
            warnings: fit.warnings.clone(),
            config: config.cloned(),
        }
    }

    pub fn into_fit(self) -> Result<(FitResult, Option<FitConfig>)> {
        check_schema(self.schema_version, &self.kind, "fit")?;
        let support = ChangePointSupport::new(self.c, self.n_items)?;
        let items = ItemParameters::new(self.d, self.a, self.gamma)?;
        items.validate_for(&support)?;
        let fit = FitResult {
            items,
            structural: StructuralParameters::new(self.alpha, self.beta)?,
            support,
            n_persons: self.n_persons,
            loglik: self.loglik,
            bic: self.bic,
            n_free_parameters: self.n_free_parameters,
            converged: self.converged,
            iterations: self.iterations,
            gradient_norm: self.gradient_norm,
            warnings: self.warnings,
        };
        Ok((fit, self.config))
    }
}

/// Writes the fit together with the settings that produced it.
pub fn write_fit_with_config(
    fit: &FitResult,
    config: Option<&FitConfig>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_text(path, &to_json(&FitDocument::new(fit, config))?)
}

pub fn write_fit(fit: &FitResult, path: impl AsRef<Path>) -> Result<()> {
    write_fit_with_config(fit, None, path)
}

pub fn parse_fit(text: &str) -> Result<(FitResult, Option<FitConfig>)> {
    serde_json::from_str::<FitDocument>(text)?.into_fit()
}

pub fn read_fit_with_config(path: impl AsRef<Path>) -> Result<(FitResult, Option<FitConfig>)> {
    parse_fit(&read_text(path)?)
}

pub fn read_fit(path: impl AsRef<Path>) -> Result<FitResult> {
    Ok(read_fit_with_config(path)?.0)
}

// ---------------------------------------------------------------- scores

pub fn scores_csv(posteriors: &[PersonPosterior]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let support = posteriors.first().map(|p| p.support);
    let mut header = vec![
        "person_index".to_string(),
        "theta_eap".into(),
        "theta_cleansed".into(),
        "tau_mode".into(),
        "prob_change".into(),
    ];
    if let Some(s) = support {
        header.extend(s.points().map(|t| format!("pmf_{t}")));
    }
    csv_write(&mut wtr, &header)?;
    for (i, p) in posteriors.iter().enumerate() {
        if Some(p.support) != support {
            return Err(Error::invalid("posteriors come from different supports"));
        }
        let mut row = vec![
            (i + 1).to_string(),
            format_number(p.theta_eap),
            format_number(p.theta_cleansed),
            p.tau_mode.to_string(),
            format_number(p.prob_change),
        ];
        row.extend(p.tau_pmf.iter().map(|&v| format_number(v)));
        csv_write(&mut wtr, &row)?;
    }
    csv_finish(wtr)
}

pub fn write_scores(posteriors: &[PersonPosterior], path: impl AsRef<Path>) -> Result<()> {
    write_text(path, &scores_csv(posteriors)?)
}

fn csv_write(wtr: &mut csv::Writer<Vec<u8>>, row: &[String]) -> Result<()> {
    wtr.write_record(row)
        .map_err(|e| Error::Format(format!("csv: {e}")))
}

fn csv_finish(wtr: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::Format(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

// ---------------------------------------------------------------- selection

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionDocument {
    pub schema_version: u32,
    pub kind: String,
    pub criterion: Criterion,
    pub n_persons: usize,
    #[serde(rename = "J")]
    pub n_items: usize,
    pub chosen_c: usize,
    pub chosen_label: String,
    pub candidates: Vec<CandidateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub label: String,
    #[serde(flatten)]
    pub candidate: Candidate,
}

impl SelectionDocument {
    pub fn new(report: &SelectionReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "selection".into(),
            criterion: report.criterion,
            n_persons: report.n_persons,
            n_items: report.n_items,
            chosen_c: report.chosen().c,
            chosen_label: report.chosen().label(),
            candidates: report
                .candidates
                .iter()
                .map(|c| CandidateRecord {
                    label: c.label(),
                    candidate: c.clone(),
                })
                .collect(),
        }
    }
}

pub fn write_selection(report: &SelectionReport, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, &to_json(&SelectionDocument::new(report))?)
}

pub fn read_selection(path: impl AsRef<Path>) -> Result<SelectionDocument> {
    let doc: SelectionDocument = serde_json::from_str(&read_text(path)?)?;
    check_schema(doc.schema_version, &doc.kind, "selection")?;
    Ok(doc)
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub schema_version: u32,
    pub kind: String,
    #[serde(flatten)]
    pub metrics: MetricsTable,
}

/// Long format: `metric,item,value`, with an empty item for scalars and
/// `NA` for undefined values.
pub fn metrics_csv(table: &MetricsTable) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    csv_write(&mut wtr, &["metric".into(), "item".into(), "value".into()])?;
    let counts = [
        ("replications", table.replications),
        ("failures", table.failures),
        ("non_converged", table.non_converged),
        ("n_speeded", table.n_speeded),
    ];
    for (name, v) in counts {
        csv_write(&mut wtr, &[name.into(), String::new(), v.to_string()])?;
    }
    for (name, v) in table.scalars() {
        csv_write(&mut wtr, &[name.into(), String::new(), format_option(v)])?;
    }
    for m in &table.items {
        let ItemMetrics {
            item,
            bias_d,
            rmse_d,
            bias_a,
            rmse_a,
            bias_gamma,
            rmse_gamma,
        } = m;
        let rows = [
            ("bias_d", Some(*bias_d)),
            ("rmse_d", Some(*rmse_d)),
            ("bias_a", Some(*bias_a)),
            ("rmse_a", Some(*rmse_a)),
            ("bias_gamma", *bias_gamma),
            ("rmse_gamma", *rmse_gamma),
        ];
        for (name, v) in rows {
            csv_write(&mut wtr, &[name.into(), item.to_string(), format_option(v)])?;
        }
    }
    csv_finish(wtr)
}

pub fn metrics_json(table: &MetricsTable) -> Result<String> {
    to_json(&MetricsDocument {
        schema_version: SCHEMA_VERSION,
        kind: "metrics".into(),
        metrics: table.clone(),
    })
}

/// Writes `metrics.csv` and `metrics.json` into `dir`.
pub fn write_metrics(table: &MetricsTable, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("metrics.csv");
    let json_path = dir.join("metrics.json");
    write_text(&csv_path, &metrics_csv(table)?)?;
    write_text(&json_path, &metrics_json(table)?)?;
    Ok((csv_path, json_path))
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<MetricsTable> {
    let doc: MetricsDocument = serde_json::from_str(&read_text(path)?)?;
    check_schema(doc.schema_version, &doc.kind, "metrics")?;
    Ok(doc.metrics)
}

// ---------------------------------------------------------------- truth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemsDocument {
    pub schema_version: u32,
    pub kind: String,
    #[serde(rename = "J")]
    pub n_items: usize,
    pub c: usize,
    pub d: Vec<f64>,
    pub a: Vec<f64>,
    pub gamma: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

/// Writes `responses.csv`, `persons_true.csv` and `items_true.json` into `dir`.
pub fn write_dataset(data: &SimulatedDataset, master_seed: u64, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_responses(&data.responses, dir.join("responses.csv"))?;

    let mut wtr = csv::Writer::from_writer(Vec::new());
    csv_write(&mut wtr, &["person_index".into(), "theta_true".into(), "tau_true".into()])?;
    for (i, (theta, tau)) in data.theta_true.iter().zip(&data.tau_true).enumerate() {
        csv_write(
            &mut wtr,
            &[(i + 1).to_string(), format!("{theta:.16e}"), tau.to_string()],
        )?;
    }
    write_text(dir.join("persons_true.csv"), &csv_finish(wtr)?)?;

    let doc = ItemsDocument {
        schema_version: SCHEMA_VERSION,
        kind: "items".into(),
        n_items: data.support.n_items(),
        c: data.support.c(),
        d: data.items_true.d.clone(),
        a: data.items_true.a.clone(),
        gamma: data.items_true.gamma.clone(),
        alpha: data.structural_true.alpha,
        beta: data.structural_true.beta,
        seed: master_seed,
    };
    write_text(dir.join("items_true.json"), &to_json(&doc)?)
}

pub fn read_items(path: impl AsRef<Path>) -> Result<(ItemParameters, StructuralParameters, ChangePointSupport)> {
    let doc: ItemsDocument = serde_json::from_str(&read_text(path)?)?;
    check_schema(doc.schema_version, &doc.kind, "items")?;
    let support = ChangePointSupport::new(doc.c, doc.n_items)?;
    let items = ItemParameters::new(doc.d, doc.a, doc.gamma)?;
    items.validate_for(&support)?;
    Ok((items, StructuralParameters::new(doc.alpha, doc.beta)?, support))
}

// ---------------------------------------------------------------- run config

/// Settings for a whole run read from one JSON file. Unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub responses: Option<PathBuf>,
    /// Output directory.
    pub out: Option<PathBuf>,
    /// Fit this `c` directly instead of selecting it.
    pub c: Option<usize>,
    pub c_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub criterion: Criterion,
    #[serde(default)]
    pub fit: FitConfig,
    /// Run a simulation study instead of analyzing data.
    pub study: Option<ScenarioConfig>,
    /// Also score respondents with the final model.
    #[serde(default)]
    pub score: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if let Some(study) = &self.study {
            study.validate()?;
            if self.responses.is_some() {
                return Err(Error::invalid("give either responses or study, not both"));
            }
        } else if self.responses.is_none() {
            return Err(Error::invalid("one of responses or study is required"));
        }
        if self.c.is_some() && self.c_grid.is_some() {
            return Err(Error::invalid("give either c or c_grid, not both"));
        }
        Ok(())
    }
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let config: RunConfig = parse_json(&read_text(path)?)?;
    config.validate()?;
    Ok(config)
}

/// Scenario label used in file and log names.
pub fn scenario_label(s: Scenario) -> &'static str {
    match s {
        Scenario::KnownBaseline => "known-baseline",
        Scenario::AllUnknown => "all-unknown",
    }
}
