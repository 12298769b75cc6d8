// An explore-then-commit buyer learns the stay-good bid and is compared
// against constant-bid counterfactuals replayed on the same randomness.

use num_rational::Ratio;
use robust_auction::agents::{EtcAgent, EtcSchedule};
use robust_auction::mechanism::{Mechanism, MechanismParams};
use robust_auction::simulator::{measured_policy_regret, run_trajectory};
use robust_auction::valuation::{MoneyGrid, ValuationDistribution};

pub fn run_example() -> anyhow::Result<()> {
    let grid = MoneyGrid::unit(11)?;
    let dist = ValuationDistribution::uniform(grid)?;
    let horizon = 100_000;
    let params = MechanismParams::for_distribution(&dist, Ratio::new(1, 5), Ratio::new(1, 10), horizon)?;
    let mech = Mechanism::threshold_price(params);

    let schedule = EtcSchedule::for_grid(&grid, horizon);
    println!("block length {}, exploration rounds {}", schedule.block_length, schedule.scheduled_rounds());
    let mut agent = EtcAgent::new(schedule)?;
    let traj = run_trajectory(&mech, &mut agent, &dist, 4, 0)?;
    let committed = agent.state().committed_bid();
    let bids: Vec<_> = grid.points().collect();
    let pr = measured_policy_regret(&mech, &dist, 4, 0, traj.buyer_utility(), &bids)?;
    println!("committed bid            {committed:?}");
    println!("revenue per round        {:.4}", traj.revenue().to_f64() / horizon as f64);
    println!("best constant bid        {}", pr.best_bid);
    println!("policy regret per round  {:.4}", pr.regret.to_f64() / horizon as f64);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
