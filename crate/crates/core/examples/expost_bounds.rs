// The `ln(k mu) + 1` revenue cap for per-round ex-post IR mechanisms,
// against the full surplus `mu`.

use robust_auction::analysis::{expost_bound_table, write_bounds_csv};

pub fn run_example() -> anyhow::Result<()> {
    for mu in [0.5, 2.0, std::f64::consts::E, 10.0] {
        let rows = expost_bound_table(&[1, 2, 5, 10, 100], mu)?;
        println!("mu = {mu}");
        write_bounds_csv(&rows, std::io::stdout().lock())?;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
