// Exhaustive check, by exact dynamic programming, that k-lookahead buyers
// never leave the good state on a small instance, and that myopic ones do.

use num_rational::Ratio;
use robust_auction::cli::verify_instance;
use robust_auction::mechanism::{Mechanism, MechanismParams};
use robust_auction::valuation::{MoneyGrid, ValuationDistribution};

pub fn run_example() -> anyhow::Result<()> {
    let dist = ValuationDistribution::uniform(MoneyGrid::unit(5)?)?;
    let eps = Ratio::new(1, 2);
    let params = MechanismParams::for_distribution(&dist, eps, MechanismParams::boundary_rho(eps), 8)?;
    let mech = Mechanism::threshold_price(params);

    let report = verify_instance(&mech, &dist, &[1, 2, 3])?;
    for c in &report.checks {
        println!("{:<18} cases {:>5}  violations {}", c.check, c.cases, c.violations);
    }
    println!("geometric identity max gap {:e}", report.geometric.max_gap);
    anyhow::ensure!(report.passed);

    let myopic = verify_instance(&mech, &dist, &[0])?;
    let w = &myopic.checks[0].witnesses[0];
    println!("k = 0 counterexample: round {} state {} value {} bid {:?}", w.round, w.state, w.value, w.bid);
    anyhow::ensure!(!myopic.passed);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
