//! A small Monte Carlo study under both scenarios, written as CSV and JSON.
//!
//! cargo run --release --example simulation_study -- [replications] [out_dir]

use cpirt::io::write_metrics;
use cpirt::{run_scenario, Scenario, ScenarioConfig};

fn main() -> cpirt::Result<()> {
    let mut args = std::env::args().skip(1);
    let replications = args.next().and_then(|r| r.parse().ok()).unwrap_or(3);
    let out = args.next().unwrap_or_else(|| "study_out".into());

    for scenario in [Scenario::KnownBaseline, Scenario::AllUnknown] {
        let config = ScenarioConfig {
            replications,
            scenario,
            ..ScenarioConfig::default()
        };
        let table = run_scenario(&config)?;
        let dir = format!("{out}/scenario{scenario}");
        write_metrics(&table, &dir)?;
        println!("scenario {scenario}: {} replications -> {dir}", table.replications);
        for (name, value) in table.scalars() {
            if let Some(v) = value {
                println!("  {name:<22} {v:>8.4}");
            }
        }
    }
    Ok(())
}
