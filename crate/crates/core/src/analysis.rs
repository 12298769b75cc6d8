//! Revenue-tradeoff frontier sweeps and the ex-post IR revenue bound.

use std::io::Write;

use serde::Serialize;

use crate::agents::AgentSpec;
use crate::config::{ExperimentConfig, MechanismSpec, MetricsSpec};
use crate::error::{Error, Result};
use crate::mechanism::{MechanismKind, MechanismParams, Regime};
use crate::money::{fraction_to_f64, ExactNumber, Fraction};
use crate::simulator::run_experiment;
use crate::valuation::DistributionSpec;

/// Shared settings of a frontier sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontierBase {
    pub distribution: DistributionSpec,
    pub horizon: u64,
    pub reps: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub epsilon: f64,
    pub rho: f64,
    /// Myopic revenue over the Myerson revenue.
    pub alpha_hat: f64,
    pub alpha_ci: f64,
    /// Stay-good revenue over the mean value.
    pub beta_hat: f64,
    pub beta_ci: f64,
    pub alpha_theory: f64,
    pub beta_theory: f64,
    /// `1 - alpha_hat / 2`: no mechanism can beat this against lookahead buyers.
    pub impossibility_beta: f64,
    #[serde(skip)]
    pub regime: Regime,
}

impl FrontierPoint {
    /// `beta <= 1 - alpha / 2`, giving both estimates their full CI.
    pub fn respects_impossibility(&self) -> bool {
        self.beta_hat - self.beta_ci <= 1.0 - (self.alpha_hat - self.alpha_ci) / 2.0
    }
}

fn config_for(base: &FrontierBase, epsilon: Fraction, rho: Fraction, agent: AgentSpec) -> ExperimentConfig {
    ExperimentConfig {
        mechanism: MechanismSpec {
            kind: MechanismKind::Threshold,
            epsilon: ExactNumber(epsilon),
            rho: ExactNumber(rho),
            price: None,
        },
        agent,
        distribution: base.distribution.clone(),
        horizon: base.horizon,
        reps: base.reps,
        seed: Some(base.seed),
        out: None,
        trace: None,
        threads: None,
        metrics: MetricsSpec::default(),
    }
}

/// For each `epsilon`, sets `rho = epsilon / (2 - epsilon)` and measures the
/// myopic and stay-good revenues of the threshold mechanism.
pub fn frontier_sweep(eps_list: &[Fraction], base: &FrontierBase) -> Result<Vec<FrontierPoint>> {
    eps_list
        .iter()
        .map(|&epsilon| {
            let rho = MechanismParams::boundary_rho(epsilon);
            let myopic = config_for(base, epsilon, rho, AgentSpec::Myopic {}).build()?;
            let informed = config_for(base, epsilon, rho, AgentSpec::StayGood {}).build()?;
            let rev_mye = myopic.distribution.myerson().revenue.to_f64();
            let mu = myopic.distribution.mean().to_f64();
            if rev_mye <= 0.0 {
                return Err(Error::Distribution("Myerson revenue is zero".into()));
            }
            let low = run_experiment(&myopic, base.seed)?;
            let high = run_experiment(&informed, base.seed)?;
            let alpha_hat = low.mean_revenue / rev_mye;
            Ok(FrontierPoint {
                epsilon: fraction_to_f64(epsilon),
                rho: fraction_to_f64(rho),
                alpha_hat,
                alpha_ci: 3.0 * low.stderr / rev_mye,
                beta_hat: high.mean_revenue / mu,
                beta_ci: 3.0 * high.stderr / mu,
                alpha_theory: fraction_to_f64(epsilon) / 2.0,
                beta_theory: 1.0 - fraction_to_f64(epsilon),
                impossibility_beta: 1.0 - alpha_hat / 2.0,
                regime: myopic.regime,
            })
        })
        .collect()
}

pub fn write_frontier_csv<W: Write>(points: &[FrontierPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExPostBoundRow {
    pub k: u64,
    pub mu: f64,
    /// `ln(k mu) + 1`.
    pub bound: f64,
    pub full_surplus: f64,
    /// `k mu < 1`: the bound is reported but says nothing useful.
    pub vacuous: bool,
}

pub fn expost_bound(k: u64, mu: f64) -> Result<ExPostBoundRow> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::param("mu", format!("must be positive, got {mu}")));
    }
    let km = k as f64 * mu;
    Ok(ExPostBoundRow { k, mu, bound: km.ln() + 1.0, full_surplus: mu, vacuous: km < 1.0 })
}

/// Revenue cap `ln(k mu) + 1` of per-round ex-post IR mechanisms against
/// k-lookahead buyers, next to the full surplus `mu`.
pub fn expost_bound_table(k_list: &[u64], mu: f64) -> Result<Vec<ExPostBoundRow>> {
    k_list.iter().map(|&k| expost_bound(k, mu)).collect()
}

pub fn write_bounds_csv<W: Write>(rows: &[ExPostBoundRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Money;
    use num_rational::Ratio;

    #[test]
    fn bound_hand_values() {
        assert_eq!(expost_bound(1, 1.0).unwrap().bound, 1.0);
        assert!((expost_bound(2, 2.0).unwrap().bound - 2.386_294_361_119_891).abs() < 1e-12);
        let e = std::f64::consts::E;
        assert!((expost_bound(2, e).unwrap().bound - ((2.0 * e).ln() + 1.0)).abs() < 1e-15);
        assert!((expost_bound(2, e).unwrap().bound - 2.693_147_180_559_945).abs() < 1e-9);
        assert!(expost_bound(1, 0.5).unwrap().vacuous);
        assert!(expost_bound(0, 1.0).is_err());
        assert!(expost_bound(1, 0.0).is_err());
    }

    #[test]
    fn theoretical_curves_are_monotone() {
        let eps: Vec<Fraction> = (1..10).map(|i| Ratio::new(i, 10)).collect();
        let rho: Vec<Fraction> = eps.iter().map(|&e| MechanismParams::boundary_rho(e)).collect();
        assert!(rho.windows(2).all(|w| w[0] < w[1]));
        let beta: Vec<Fraction> = eps.iter().map(|&e| Fraction::from_integer(1) - e).collect();
        assert!(beta.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn frontier_point_at_half() {
        let base = FrontierBase {
            distribution: DistributionSpec::Uniform { max_value: Money::from_integer(1), tick: Money::new(1, 100) },
            horizon: 1000,
            reps: 40,
            seed: 3,
        };
        let points = frontier_sweep(&[Ratio::new(1, 2)], &base).unwrap();
        let p = &points[0];
        assert!((p.beta_hat - 0.4995).abs() < 1e-12);
        assert_eq!(p.beta_ci, 0.0);
        assert!((p.alpha_hat - 0.286).abs() < 0.05);
        assert!(p.respects_impossibility());
        let mut buf = Vec::new();
        write_frontier_csv(&points, &mut buf).unwrap();
        let header = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
        assert_eq!(
            header,
            "epsilon,rho,alpha_hat,alpha_ci,beta_hat,beta_ci,alpha_theory,beta_theory,impossibility_beta"
        );
    }
}
