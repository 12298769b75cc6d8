// A myopic buyer against the threshold mechanism: simulated revenue next to
// the exact Markov-chain value.

use num_rational::Ratio;
use robust_auction::agents::MyopicAgent;
use robust_auction::mechanism::{Mechanism, MechanismParams};
use robust_auction::oracle::myopic_markov_revenue;
use robust_auction::simulator::run_trajectory;
use robust_auction::valuation::{MoneyGrid, ValuationDistribution};
use robust_auction::Money;

pub fn run_example() -> anyhow::Result<()> {
    // values 0, 0.01, ..., 0.99
    let dist = ValuationDistribution::uniform(MoneyGrid::new(Money::new(1, 100), Money::new(99, 100))?)?;
    let params = MechanismParams::for_distribution(&dist, Ratio::new(1, 2), Ratio::new(1, 3), 2000)?;
    let mech = Mechanism::threshold_price(params);

    let exact = myopic_markov_revenue(&dist, &mech)?;
    let reps = 20;
    let mut total = 0.0;
    for rep in 0..reps {
        let traj = run_trajectory(&mech, &mut MyopicAgent, &dist, 11, rep)?;
        anyhow::ensure!(traj.matches_myopic_pattern(), "rep {rep} broke the good-bad pattern");
        total += traj.revenue().to_f64() / 2000.0;
    }
    let simulated = total / reps as f64;
    println!("stationary revenue per round  {}", exact.stationary);
    println!("finite-horizon revenue        {:.5}", exact.finite_horizon);
    println!("simulated ({reps} reps)          {simulated:.5}");
    anyhow::ensure!((simulated - exact.finite_horizon).abs() < 0.01);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
