//! Marginal maximum likelihood for a known earliest change-point, compared
//! with the generating values.
//!
//! cargo run --release --example fit_model

use cpirt::simulation::simulate_dataset;
use cpirt::{fit, FitConfig, StructuralParameters};

fn main() -> cpirt::Result<()> {
    let truth = StructuralParameters::new(0.2, -0.1)?;
    let data = simulate_dataset(1000, 30, 20, &truth, 3)?;
    let result = fit(&data.responses, 20, &FitConfig::default())?;

    println!(
        "converged={} after {} iterations, loglik {:.3}, BIC {:.3}, k={}",
        result.converged, result.iterations, result.loglik, result.bic, result.n_free_parameters
    );
    println!("alpha {:.3} (true 0.2)  beta {:.3} (true -0.1)", result.structural.alpha, result.structural.beta);
    println!("item      d    d_true       a    a_true   gamma  g_true");
    let (est, tru) = (&result.items, &data.items_true);
    for j in [0, 9, 19, 20, 25, 29] {
        println!(
            "{:>4} {:>7.3} {:>9.3} {:>7.3} {:>9.3} {:>7.3} {:>7.3}",
            j + 1,
            est.d[j],
            tru.d[j],
            est.a[j],
            tru.a[j],
            est.gamma[j],
            tru.gamma[j]
        );
    }
    for w in &result.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
