//! File workflow: read a response CSV, fit, save the fit document, reload
//! it and write per-person scores.
//!
//! cargo run --release --example csv_pipeline -- [responses.csv] [c]

use cpirt::io::{read_fit, read_responses, write_fit, write_responses, write_scores};
use cpirt::simulation::simulate_dataset;
use cpirt::{fit, FitConfig, Scorer, StructuralParameters};

fn main() -> cpirt::Result<()> {
    let dir = std::env::temp_dir().join("cpirt_csv_pipeline");
    std::fs::create_dir_all(&dir).map_err(|source| cpirt::Error::Io { path: dir.clone(), source })?;
    let mut args = std::env::args().skip(1);
    let path = match args.next() {
        Some(p) => p.into(),
        None => {
            let s = StructuralParameters::new(0.2, -0.85)?;
            let data = simulate_dataset(600, 16, 10, &s, 2)?;
            let p = dir.join("responses.csv");
            write_responses(&data.responses, &p)?;
            p
        }
    };
    let c = args.next().and_then(|c| c.parse().ok()).unwrap_or(10);

    let responses = read_responses(&path)?;
    let config = FitConfig::default();
    let result = fit(&responses, c, &config)?;
    let fit_path = dir.join("fit.json");
    write_fit(&result, &fit_path)?;
    let reloaded = read_fit(&fit_path)?;
    assert_eq!(reloaded, result);

    let posteriors = Scorer::from_fit(&reloaded, &config)?.score_all(&responses)?;
    let scores_path = dir.join("scores.csv");
    write_scores(&posteriors, &scores_path)?;
    println!("read {} x {} from {}", responses.n_persons(), responses.n_items(), path.display());
    println!("wrote {} and {}", fit_path.display(), scores_path.display());
    Ok(())
}
