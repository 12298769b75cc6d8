// Without a bad-state price, a myopic buyer bids zero forever and the
// warm-up mechanism earns nothing.

use num_rational::Ratio;
use robust_auction::agents::MyopicAgent;
use robust_auction::mechanism::{Mechanism, MechanismParams};
use robust_auction::simulator::run_trajectory;
use robust_auction::valuation::{MoneyGrid, ValuationDistribution};

pub fn run_example() -> anyhow::Result<()> {
    let dist = ValuationDistribution::uniform(MoneyGrid::unit(11)?)?;
    let params = MechanismParams::for_distribution(&dist, Ratio::new(1, 2), Ratio::new(1, 3), 500)?;
    let mech = Mechanism::warmup(params);
    for rep in 0..5 {
        let traj = run_trajectory(&mech, &mut MyopicAgent, &dist, 1, rep)?;
        println!("rep {rep}: revenue {}, states {}...", traj.revenue(), &traj.flags()[..12]);
        anyhow::ensure!(traj.revenue().is_zero());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
