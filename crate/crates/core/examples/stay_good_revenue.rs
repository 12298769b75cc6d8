// A forward-looking buyer keeps the threshold mechanism in its good state
// and pays `(1 - epsilon) mu` per round except in the last one.

use num_rational::Ratio;
use robust_auction::agents::StayGoodAgent;
use robust_auction::mechanism::{Mechanism, MechanismParams};
use robust_auction::simulator::{ex_post_ir_audit, run_trajectory};
use robust_auction::valuation::{MoneyGrid, ValuationDistribution};
use robust_auction::Money;

pub fn run_example() -> anyhow::Result<()> {
    let dist = ValuationDistribution::uniform(MoneyGrid::unit(101)?)?;
    let params = MechanismParams::for_distribution(&dist, Ratio::new(1, 2), Ratio::new(1, 3), 1000)?;
    let mech = Mechanism::threshold_price(params);

    let traj = run_trajectory(&mech, &mut StayGoodAgent, &dist, 5, 0)?;
    let audit = ex_post_ir_audit(&traj);
    println!("revenue     {}", traj.revenue());
    println!("bad rounds  {}", traj.bad_rounds());
    println!("rounds with negative utility {}, final utility {}", audit.neg_rounds, audit.total);
    anyhow::ensure!(traj.revenue() == Money::new(999, 4));
    anyhow::ensure!(traj.bad_rounds() == 0);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
