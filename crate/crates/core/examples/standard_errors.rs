//! Standard errors from a finite-difference Hessian of the log-likelihood.
//!
//! cargo run --release --example standard_errors

use cpirt::estimation::numerical_hessian_se;
use cpirt::simulation::simulate_dataset;
use cpirt::{fit, FitConfig, StructuralParameters};

fn main() -> cpirt::Result<()> {
    let s = StructuralParameters::new(0.2, -0.1)?;
    let data = simulate_dataset(1500, 12, 8, &s, 21)?;
    let config = FitConfig::default();
    let result = fit(&data.responses, 8, &config)?;
    let se = numerical_hessian_se(&data.responses, &result, &config)?;

    let n = result.items.n_items();
    println!("information positive definite: {}", se.positive_definite);
    println!("item      d     se(d)       a     se(a)");
    for j in 0..n {
        println!(
            "{:>4} {:>7.3} {:>9.3} {:>7.3} {:>9.3}",
            j + 1,
            result.items.d[j],
            se.values[j],
            result.items.a[j],
            se.values[n + j]
        );
    }
    if !se.flagged.is_empty() {
        println!("weakly identified coordinates: {:?}", se.flagged);
    }
    Ok(())
}
