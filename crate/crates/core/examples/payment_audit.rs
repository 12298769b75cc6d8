// Random (state, bid) fuzzing that no mechanism ever charges more than the
// bid, charges a negative amount, or charges a zero bid.

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_auction::mechanism::{audit_non_payment_forceful, Mechanism, MechanismKind, MechanismParams};
use robust_auction::valuation::{MoneyGrid, ValuationDistribution};

pub fn run_example() -> anyhow::Result<()> {
    let dist = ValuationDistribution::uniform(MoneyGrid::unit(101)?)?;
    let params = MechanismParams::for_distribution(&dist, Ratio::new(1, 2), Ratio::new(1, 3), 1000)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for kind in [MechanismKind::Warmup, MechanismKind::Threshold, MechanismKind::Credit] {
        let audit = audit_non_payment_forceful(&Mechanism::new(kind, params.clone()), 10_000, &mut rng);
        println!("{:<10} {} cases, {} violations", audit.mechanism, audit.cases, audit.violations.len());
        anyhow::ensure!(audit.passed());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
