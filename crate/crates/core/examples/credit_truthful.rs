// A truthful buyer against the credit-ledger mechanism: it stays in the good
// state and never has a round with negative utility.

use num_rational::Ratio;
use robust_auction::agents::TruthfulAgent;
use robust_auction::mechanism::{Mechanism, MechanismParams};
use robust_auction::simulator::{ex_post_ir_audit, run_trajectory};
use robust_auction::valuation::{MoneyGrid, ValuationDistribution};

pub fn run_example() -> anyhow::Result<()> {
    let dist = ValuationDistribution::uniform(MoneyGrid::unit(101)?)?;
    let horizon = 10_000;
    let params = MechanismParams::for_distribution(&dist, Ratio::new(1, 10), Ratio::new(1, 10), horizon)?;
    let mech = Mechanism::credit(params);
    let terms = mech.credit_terms().expect("credit mechanism");
    // the ledger starts with an initial credit, so once it reaches the target
    // the buyer has paid exactly the target minus that credit
    let cap = terms.r_target - terms.initial_credit;
    println!("revenue target {:.2}, initial credit {:.2}", terms.r_target, terms.initial_credit);

    let mut ever_bad = 0;
    for rep in 0..10 {
        let traj = run_trajectory(&mech, &mut TruthfulAgent, &dist, 9, rep)?;
        let audit = ex_post_ir_audit(&traj);
        anyhow::ensure!(audit.neg_rounds == 0);
        ever_bad += usize::from(traj.bad_rounds() > 0);
        let revenue = traj.revenue().to_f64();
        println!("rep {rep}: revenue {revenue:.2}");
        anyhow::ensure!((revenue - cap).abs() < 1e-6);
    }
    println!("trajectories that ever went bad: {ever_bad} of 10");
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
