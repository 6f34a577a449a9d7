//! Gauss-Hermite rule for the ability prior and the change-point
//! distribution for a few `(alpha, beta)` settings.
//!
//! cargo run --example quadrature_and_tau

use cpirt::{gauss_hermite_standard_normal, tau_pmf, ChangePointSupport, StructuralParameters};

fn main() -> cpirt::Result<()> {
    let rule = gauss_hermite_standard_normal(49)?;
    println!("49-node rule for N(0, 1):");
    for k in [2, 4] {
        println!("  E[theta^{k}] = {:.12}", rule.expect(|x| x.powi(k)));
    }
    println!("  largest node {:.4}", rule.nodes.iter().fold(f64::MIN, |m, &x| m.max(x)));

    let support = ChangePointSupport::new(20, 30)?;
    for (alpha, beta) in [(0.2, -0.1), (0.2, -0.85), (0.2, -1.73), (0.0, 0.0), (-0.5, 1.0)] {
        let s = StructuralParameters::new(alpha, beta)?;
        let pmf = tau_pmf(&s, &support);
        let cells: Vec<String> = support
            .points()
            .map(|t| format!("{t}:{:.3}", pmf.prob(t)))
            .collect();
        println!("alpha={alpha:+.2} beta={beta:+.2}  {}", cells.join(" "));
    }
    Ok(())
}
