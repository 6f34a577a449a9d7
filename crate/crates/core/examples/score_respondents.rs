//! Change-point posteriors and cleansed abilities for respondents, scored
//! with the generating parameters.
//!
//! cargo run --release --example score_respondents

use cpirt::simulation::simulate_dataset;
use cpirt::{gauss_hermite_standard_normal, ModelSpec, Scorer, StructuralParameters};

fn main() -> cpirt::Result<()> {
    let s = StructuralParameters::new(0.2, -0.1)?;
    let data = simulate_dataset(500, 30, 20, &s, 11)?;
    let spec = ModelSpec::new(data.items_true.clone(), s, data.support, gauss_hermite_standard_normal(49)?)?;
    let scorer = Scorer::new(spec);
    let posteriors = scorer.score_all(&data.responses)?;

    println!("person  tau  tau_hat  P(change)  theta  naive  cleansed");
    for (i, p) in posteriors.iter().enumerate().take(12) {
        let naive = scorer.eap_theta(data.responses.row(i), Some(30))?;
        println!(
            "{:>6} {:>4} {:>8} {:>10.3} {:>6.2} {:>6.2} {:>9.2}",
            i + 1,
            data.tau_true[i],
            p.tau_mode,
            p.prob_change,
            data.theta_true[i],
            naive,
            p.theta_cleansed
        );
    }

    let (mut before, mut after, mut n) = (0.0, 0.0, 0.0);
    for (i, p) in posteriors.iter().enumerate() {
        if data.tau_true[i] < 30 {
            before += scorer.eap_theta(data.responses.row(i), Some(30))? - data.theta_true[i];
            after += p.theta_cleansed - data.theta_true[i];
            n += 1.0;
        }
    }
    println!("speeded respondents: mean error {:+.3} naive, {:+.3} cleansed", before / n, after / n);
    Ok(())
}
