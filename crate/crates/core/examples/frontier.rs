// Sweeps epsilon and prints the achieved (alpha, beta) points next to the
// theoretical curves and the impossibility line.

use num_rational::Ratio;
use robust_auction::analysis::{frontier_sweep, write_frontier_csv, FrontierBase};
use robust_auction::valuation::DistributionSpec;
use robust_auction::Money;

pub fn run_example() -> anyhow::Result<()> {
    let base = FrontierBase {
        distribution: DistributionSpec::Uniform { max_value: Money::from_integer(1), tick: Money::new(1, 100) },
        horizon: 500,
        reps: 10,
        seed: 17,
    };
    let eps: Vec<_> = [1, 3, 5, 7, 9].into_iter().map(|i| Ratio::new(i, 10)).collect();
    let points = frontier_sweep(&eps, &base)?;
    write_frontier_csv(&points, std::io::stdout().lock())?;
    anyhow::ensure!(points.iter().all(|p| p.respects_impossibility()));
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
