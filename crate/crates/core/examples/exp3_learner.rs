// An EXP3 buyer over state-dependent bidding experts, with its hindsight
// regret measured against the best single expert.

use num_rational::Ratio;
use robust_auction::agents::{Exp3Agent, Expert};
use robust_auction::mechanism::{Mechanism, MechanismParams};
use robust_auction::simulator::{measured_regret, run_trajectory};
use robust_auction::valuation::{MoneyGrid, ValuationDistribution};

pub fn run_example() -> anyhow::Result<()> {
    let grid = MoneyGrid::unit(11)?;
    let dist = ValuationDistribution::uniform(grid)?;
    let horizon = 50_000;
    let params = MechanismParams::for_distribution(&dist, Ratio::new(1, 2), Ratio::new(1, 3), horizon)?;
    let mech = Mechanism::threshold_price(params);

    let experts = Expert::grid_class(&grid);
    let mut agent = Exp3Agent::new(experts.clone(), horizon, dist.support_max())?;
    let traj = run_trajectory(&mech, &mut agent, &dist, 2, 0)?;
    let regret = measured_regret(&traj, &experts, &mech, grid)?;
    let best = regret.best_expert;
    println!("experts              {}", experts.len());
    println!("revenue per round    {:.4}", traj.revenue().to_f64() / horizon as f64);
    println!("best expert          good bid {}, bad threshold {}", best.good_bid, best.bad_threshold);
    println!("regret per round     {:.4}", regret.regret / horizon as f64);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
