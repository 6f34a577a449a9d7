//! Draw a dataset from the change-point model and write the responses
//! together with the true abilities, change-points and item parameters.
//!
//! cargo run --example simulate_data -- [out_dir]

use cpirt::io::write_dataset;
use cpirt::simulation::simulate_dataset;
use cpirt::StructuralParameters;

fn main() -> cpirt::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sim_out".into());
    let seed = 7;
    let s = StructuralParameters::new(0.2, -0.1)?;
    let data = simulate_dataset(1000, 30, 20, &s, seed)?;
    write_dataset(&data, seed, &out)?;

    let means = data.responses.column_means();
    println!("wrote {out}/responses.csv, persons_true.csv, items_true.json");
    println!("{} of 1000 respondents change before the last item", data.n_speeded());
    println!("proportion correct, items 1, 20, 21, 30: {:.3} {:.3} {:.3} {:.3}", means[0], means[19], means[20], means[29]);
    Ok(())
}
