//! Trajectory execution, replication and aggregation.
//!
//! Every replication draws from three independent ChaCha8 streams derived
//! from the master seed: `stream = 4 * rep + purpose` with purposes
//! [`STREAM_VALUES`], [`STREAM_MECHANISM`] and [`STREAM_AGENT`]. Counterfactual
//! runs reuse the value and mechanism streams of the replication they
//! shadow, so both face the same values and the same allocation coins.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::agents::{Agent, AgentSpec, BidContext, ConstantAgent, Expert, Feedback, Observation, StateFlag};
use crate::config::Experiment;
use crate::error::{Error, Result};
use crate::mechanism::{AvgBidLedger, LedgerState, Mechanism, MechanismKind, Regime};
use crate::money::Money;
use crate::valuation::{MoneyGrid, ValuationDistribution};

pub const STREAM_VALUES: u64 = 0;
pub const STREAM_MECHANISM: u64 = 1;
pub const STREAM_AGENT: u64 = 2;
const STREAMS_PER_REP: u64 = 4;

pub const SEED_LAYOUT: &str =
    "ChaCha8Rng::seed_from_u64(seed), stream 4*rep + purpose (0 values, 1 mechanism, 2 agent)";

pub fn stream_rng(master_seed: u64, rep: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(rep * STREAMS_PER_REP + purpose);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub state_flag: StateFlag,
    /// Ledger at the start of the round.
    pub ledger: LedgerState,
    pub value: Money,
    pub bid: Money,
    pub allocated: bool,
    pub payment: Money,
    pub utility: Money,
    pub exploring: bool,
}

pub trait RoundObserver {
    fn observe(&mut self, record: &RoundRecord) -> Result<()>;
}

impl RoundObserver for Vec<RoundRecord> {
    fn observe(&mut self, record: &RoundRecord) -> Result<()> {
        self.push(*record);
        Ok(())
    }
}

/// Forwards every record to several observers.
pub struct Tee<'a>(pub Vec<&'a mut dyn RoundObserver>);

impl RoundObserver for Tee<'_> {
    fn observe(&mut self, record: &RoundRecord) -> Result<()> {
        self.0.iter_mut().try_for_each(|o| o.observe(record))
    }
}

/// Plays `T` rounds of sample, bid, allocate, charge, transition, feedback.
pub fn simulate(
    mech: &Mechanism,
    agent: &mut dyn Agent,
    dist: &ValuationDistribution,
    master_seed: u64,
    rep: u64,
    observer: &mut dyn RoundObserver,
) -> Result<()> {
    let horizon = mech.params().horizon;
    let mut value_rng = stream_rng(master_seed, rep, STREAM_VALUES);
    let mut coin_rng = stream_rng(master_seed, rep, STREAM_MECHANISM);
    let mut agent_rng = stream_rng(master_seed, rep, STREAM_AGENT);
    let mut state = mech.init_state();
    for round in 1..=horizon {
        let value = dist.sample(&mut value_rng);
        let obs =
            Observation { state_flag: StateFlag::from_good(mech.is_good(&state)), value, round, rounds_total: horizon };
        let exploring = agent.is_exploring();
        let bid = agent.bid(&BidContext { obs, ledger: &state, mechanism: mech }, &mut agent_rng)?;
        if bid.is_negative() {
            return Err(Error::param("bid", format!("agent {} bid {bid} in round {round}", agent.name())));
        }
        let outcome = mech.play_round(&state, bid, &mut coin_rng);
        let utility = if outcome.allocated { value - outcome.payment } else { -outcome.payment };
        debug_assert!(outcome.payment <= bid);
        observer.observe(&RoundRecord {
            round,
            state_flag: obs.state_flag,
            ledger: state,
            value,
            bid,
            allocated: outcome.allocated,
            payment: outcome.payment,
            utility,
            exploring,
        })?;
        agent.feedback(&obs, &Feedback { allocated: outcome.allocated, payment: outcome.payment, utility })?;
        state = outcome.next_state;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub master_seed: u64,
    pub rep: u64,
    pub records: Vec<RoundRecord>,
}

impl Trajectory {
    pub fn revenue(&self) -> Money {
        self.records.iter().map(|r| r.payment).sum()
    }

    pub fn buyer_utility(&self) -> Money {
        self.records.iter().map(|r| r.utility).sum()
    }

    pub fn allocated_value(&self) -> Money {
        self.records.iter().filter(|r| r.allocated).map(|r| r.value).sum()
    }

    pub fn bad_rounds(&self) -> usize {
        self.records.iter().filter(|r| !r.state_flag.is_good()).count()
    }

    pub fn flags(&self) -> String {
        self.records.iter().map(|r| r.state_flag.letter()).collect()
    }

    /// `G B+ G B+ ...`: starts good and never has two good rounds in a row.
    pub fn matches_myopic_pattern(&self) -> bool {
        let flags = self.flags();
        flags.starts_with('G') && !flags.contains("GG")
    }
}

pub fn run_trajectory(
    mech: &Mechanism,
    agent: &mut dyn Agent,
    dist: &ValuationDistribution,
    master_seed: u64,
    rep: u64,
) -> Result<Trajectory> {
    let mut records = Vec::with_capacity(mech.params().horizon as usize);
    simulate(mech, agent, dist, master_seed, rep, &mut records)?;
    Ok(Trajectory { master_seed, rep, records })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExPostAudit {
    pub neg_rounds: u64,
    pub min_prefix: Money,
    pub total: Money,
    pub per_round_ir: bool,
    pub aggregate_ir: bool,
}

pub fn ex_post_ir_audit(traj: &Trajectory) -> ExPostAudit {
    let mut audit = IrTracker::default();
    for r in &traj.records {
        audit.push(r.utility);
    }
    audit.finish()
}

#[derive(Clone, Copy, Debug, Default)]
struct IrTracker {
    neg_rounds: u64,
    prefix: Money,
    min_prefix: Option<Money>,
}

impl IrTracker {
    fn push(&mut self, utility: Money) {
        if utility.is_negative() {
            self.neg_rounds += 1;
        }
        self.prefix += utility;
        self.min_prefix = Some(self.min_prefix.map_or(self.prefix, |m| m.min(self.prefix)));
    }

    fn finish(&self) -> ExPostAudit {
        ExPostAudit {
            neg_rounds: self.neg_rounds,
            min_prefix: self.min_prefix.unwrap_or(Money::ZERO),
            total: self.prefix,
            per_round_ir: self.neg_rounds == 0,
            aggregate_ir: !self.prefix.is_negative(),
        }
    }
}

/// Hindsight comparison against a fixed expert class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegretResult {
    pub best_expert: Expert,
    pub best_total: f64,
    pub realized_total: f64,
    pub regret: f64,
}

/// Counts of realized `(state flag, value)` pairs; enough to evaluate any
/// `(g, beta)` expert on the realized state sequence, since expert utilities
/// depend on nothing else under the average-bid mechanisms.
#[derive(Clone, Debug)]
pub struct RegretTracker {
    grid: MoneyGrid,
    good_counts: Vec<u64>,
    bad_counts: Vec<u64>,
    realized_expected: f64,
}

impl RegretTracker {
    pub fn new(mech: &Mechanism, grid: MoneyGrid) -> Result<Self> {
        if mech.kind() == MechanismKind::Credit {
            return Err(Error::Unsupported("hindsight regret needs an average-bid mechanism".into()));
        }
        Ok(Self { grid, good_counts: vec![0; grid.len()], bad_counts: vec![0; grid.len()], realized_expected: 0.0 })
    }

    /// Records one round; the realized side uses the coin-averaged utility of
    /// the bid actually placed, like the expert side.
    pub fn push(&mut self, mech: &Mechanism, record: &RoundRecord) -> Result<()> {
        let i = self.grid.index_of(record.value)?;
        match record.state_flag {
            StateFlag::Good => self.good_counts[i] += 1,
            StateFlag::Bad => self.bad_counts[i] += 1,
        }
        self.realized_expected += mech.expected_utility(&record.ledger, record.value, record.bid);
        Ok(())
    }

    pub fn finish(&self, mech: &Mechanism, experts: &[Expert]) -> Result<RegretResult> {
        let good_state = LedgerState::AvgBid(AvgBidLedger::BORDERLINE);
        let bad_state = LedgerState::AvgBid(AvgBidLedger::new(Money::ZERO, 1));
        let n = self.grid.len();
        let values: Vec<Money> = self.grid.points().collect();
        // totals per distinct good bid and per distinct bad threshold
        let mut good_totals = vec![None; n];
        let mut bad_totals = vec![None; n];
        let mut best: Option<(Expert, f64)> = None;
        for e in experts {
            let gi = self.grid.index_of(e.good_bid)?;
            let bi = self.grid.index_of(e.bad_threshold)?;
            let g = *good_totals[gi].get_or_insert_with(|| {
                (0..n)
                    .filter(|&v| self.good_counts[v] > 0)
                    .map(|v| self.good_counts[v] as f64 * mech.expected_utility(&good_state, values[v], e.good_bid))
                    .sum::<f64>()
            });
            let b = *bad_totals[bi].get_or_insert_with(|| {
                (0..n)
                    .filter(|&v| self.bad_counts[v] > 0)
                    .map(|v| {
                        let bid = e.bid(StateFlag::Bad, values[v]);
                        self.bad_counts[v] as f64 * mech.expected_utility(&bad_state, values[v], bid)
                    })
                    .sum::<f64>()
            });
            if best.is_none_or(|(_, t)| g + b > t) {
                best = Some((*e, g + b));
            }
        }
        let (best_expert, best_total) = best.ok_or_else(|| Error::param("experts", "empty expert class"))?;
        Ok(RegretResult {
            best_expert,
            best_total,
            realized_total: self.realized_expected,
            regret: best_total - self.realized_expected,
        })
    }
}

/// `max_f sum_t u_t(f(s_t, v_t)) - sum_t u_t(b_t)` on the realized states,
/// with the allocation coin averaged out on both sides.
pub fn measured_regret(
    traj: &Trajectory,
    experts: &[Expert],
    mech: &Mechanism,
    grid: MoneyGrid,
) -> Result<RegretResult> {
    let mut tracker = RegretTracker::new(mech, grid)?;
    for r in &traj.records {
        tracker.push(mech, r)?;
    }
    tracker.finish(mech, experts)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyRegret {
    pub best_bid: Money,
    pub best_total: Money,
    pub realized_total: Money,
    pub regret: Money,
}

struct UtilitySum(Money);

impl RoundObserver for UtilitySum {
    fn observe(&mut self, record: &RoundRecord) -> Result<()> {
        self.0 += record.utility;
        Ok(())
    }
}

/// Replays replication `rep` once per constant benchmark bid, on the same
/// value and coin streams, and compares the best counterfactual total with
/// the realized one.
pub fn measured_policy_regret(
    mech: &Mechanism,
    dist: &ValuationDistribution,
    master_seed: u64,
    rep: u64,
    realized_total: Money,
    benchmark_bids: &[Money],
) -> Result<PolicyRegret> {
    let mut best: Option<(Money, Money)> = None;
    for &bid in benchmark_bids {
        let mut sum = UtilitySum(Money::ZERO);
        simulate(mech, &mut ConstantAgent { bid }, dist, master_seed, rep, &mut sum)?;
        if best.is_none_or(|(_, t)| sum.0 > t) {
            best = Some((bid, sum.0));
        }
    }
    let (best_bid, best_total) = best.ok_or_else(|| Error::param("benchmark_bids", "need at least one bid"))?;
    Ok(PolicyRegret { best_bid, best_total, realized_total, regret: best_total - realized_total })
}

/// Streaming per-replication statistics, so long horizons keep no records.
#[derive(Clone, Debug)]
pub struct RunStats {
    pub rounds: u64,
    pub revenue: Money,
    pub utility: Money,
    pub allocated_value: Money,
    pub bad_rounds: u64,
    pub explore_rounds: u64,
    pub bad_rounds_after_commit: u64,
    ir: IrTracker,
    regret: Option<RegretTracker>,
    mech: Mechanism,
}

impl RunStats {
    pub fn new(mech: &Mechanism, regret_grid: Option<MoneyGrid>) -> Result<Self> {
        Ok(Self {
            rounds: 0,
            revenue: Money::ZERO,
            utility: Money::ZERO,
            allocated_value: Money::ZERO,
            bad_rounds: 0,
            explore_rounds: 0,
            bad_rounds_after_commit: 0,
            ir: IrTracker::default(),
            regret: regret_grid.map(|g| RegretTracker::new(mech, g)).transpose()?,
            mech: mech.clone(),
        })
    }

    pub fn ir(&self) -> ExPostAudit {
        self.ir.finish()
    }

    pub fn regret(&self, experts: &[Expert]) -> Option<Result<RegretResult>> {
        self.regret.as_ref().map(|t| t.finish(&self.mech, experts))
    }
}

impl RoundObserver for RunStats {
    fn observe(&mut self, r: &RoundRecord) -> Result<()> {
        self.rounds += 1;
        self.revenue += r.payment;
        self.utility += r.utility;
        if r.allocated {
            self.allocated_value += r.value;
        }
        let bad = !r.state_flag.is_good();
        if bad {
            self.bad_rounds += 1;
        }
        if r.exploring {
            self.explore_rounds += 1;
        } else if bad {
            self.bad_rounds_after_commit += 1;
        }
        self.ir.push(r.utility);
        if let Some(t) = &mut self.regret {
            t.push(&self.mech, r)?;
        }
        Ok(())
    }
}

/// Per-round CSV trace.
pub struct TraceWriter<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub const HEADER: [&'static str; 8] = ["round", "state", "avg_bid", "value", "bid", "alloc", "payment", "utility"];

    pub fn new(inner: W) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(Self::HEADER)?;
        Ok(Self { writer })
    }

    pub fn finish(mut self) -> Result<W> {
        self.writer.flush()?;
        self.writer.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// The ledger summary written to traces: the bid average for average
/// ledgers (`-` for the borderline state), `TP - EP` for credit ledgers.
fn ledger_column(ledger: &LedgerState) -> String {
    match ledger {
        LedgerState::AvgBid(l) if l.is_borderline() => "-".to_string(),
        LedgerState::AvgBid(l) => (l.bid_sum / l.count as i128).to_string(),
        LedgerState::Credit(c) => format!("{}", c.total_paid - c.expected_paid),
    }
}

impl<W: Write> RoundObserver for TraceWriter<W> {
    fn observe(&mut self, r: &RoundRecord) -> Result<()> {
        self.writer.write_record([
            r.round.to_string(),
            r.state_flag.letter().to_string(),
            ledger_column(&r.ledger),
            r.value.to_string(),
            r.bid.to_string(),
            u8::from(r.allocated).to_string(),
            r.payment.to_string(),
            r.utility.to_string(),
        ])?;
        Ok(())
    }
}

/// Outcome of one replication in per-round units.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepSummary {
    pub rep: u64,
    pub revenue_per_round: f64,
    pub utility_per_round: f64,
    pub bad_fraction: f64,
    pub ever_bad: bool,
    pub ir: ExPostAudit,
    pub regret_per_round: Option<f64>,
    pub policy_regret_per_round: Option<f64>,
    pub explore_fraction: f64,
    pub bad_fraction_after_commit: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportParams {
    pub epsilon: String,
    pub rho: String,
    pub price: Money,
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(rename = "B")]
    pub support_bound: Money,
    pub mean: Money,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IrSummary {
    /// Negative-utility rounds over all replications.
    pub neg_rounds: u64,
    /// Lowest running utility total seen in any replication.
    pub min_prefix: f64,
    /// Mean final utility total.
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RevenueReport {
    pub mechanism: String,
    pub agent: String,
    pub params: ReportParams,
    pub regime: Regime,
    pub reps: u64,
    pub seed: u64,
    pub seed_layout: String,
    pub mean_revenue: f64,
    pub stderr: f64,
    pub bad_state_fraction: f64,
    pub ever_bad_fraction: f64,
    pub mean_buyer_utility: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret_per_round: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_regret_per_round: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explore_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bad_fraction_after_commit: Option<f64>,
    pub ir: IrSummary,
}

/// Neumaier-compensated sum of the values in ascending order, so the result
/// does not depend on the order replications finished in.
pub fn stable_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut carry = 0.0;
    for x in sorted {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = stable_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let squares: Vec<f64> = values.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = stable_sum(&squares) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs replication `rep` of an experiment with an optional extra observer.
pub fn run_replication(
    exp: &Experiment,
    master_seed: u64,
    rep: u64,
    extra: Option<&mut dyn RoundObserver>,
) -> Result<RepSummary> {
    let mech = &exp.mechanism;
    let grid = exp.distribution.grid();
    let horizon = exp.horizon() as f64;
    let mut agent = exp.config.agent.build(mech, &exp.distribution)?;
    let mut stats = RunStats::new(mech, exp.config.metrics.regret.then_some(grid))?;
    match extra {
        Some(obs) => {
            simulate(mech, agent.as_mut(), &exp.distribution, master_seed, rep, &mut Tee(vec![&mut stats, obs]))?
        }
        None => simulate(mech, agent.as_mut(), &exp.distribution, master_seed, rep, &mut stats)?,
    }
    let regret_per_round = stats.regret(&Expert::grid_class(&grid)).transpose()?.map(|r| r.regret / horizon);
    let policy_regret_per_round = match &exp.config.metrics.policy_regret {
        Some(spec) if spec.reps.is_none_or(|n| rep < n) => {
            let bids = spec.benchmark_bids.clone().unwrap_or_else(|| grid.points().collect());
            let pr = measured_policy_regret(mech, &exp.distribution, master_seed, rep, stats.utility, &bids)?;
            Some(pr.regret.to_f64() / horizon)
        }
        _ => None,
    };
    let committed = stats.rounds - stats.explore_rounds;
    Ok(RepSummary {
        rep,
        revenue_per_round: stats.revenue.to_f64() / horizon,
        utility_per_round: stats.utility.to_f64() / horizon,
        bad_fraction: stats.bad_rounds as f64 / horizon,
        ever_bad: stats.bad_rounds > 0,
        ir: stats.ir(),
        regret_per_round,
        policy_regret_per_round,
        explore_fraction: stats.explore_rounds as f64 / horizon,
        bad_fraction_after_commit: (committed > 0).then(|| stats.bad_rounds_after_commit as f64 / committed as f64),
    })
}

/// Aggregates replication summaries; the result does not depend on their order.
pub fn aggregate(exp: &Experiment, seed: u64, reps: &[RepSummary]) -> RevenueReport {
    let col = |f: &dyn Fn(&RepSummary) -> f64| reps.iter().map(f).collect::<Vec<f64>>();
    let opt_mean = |f: &dyn Fn(&RepSummary) -> Option<f64>| {
        let v: Vec<f64> = reps.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| mean_and_stderr(&v).0)
    };
    let (mean_revenue, stderr) = mean_and_stderr(&col(&|r| r.revenue_per_round));
    let params = exp.mechanism.params();
    let explores = matches!(exp.config.agent, AgentSpec::Etc { .. });
    RevenueReport {
        mechanism: exp.mechanism.kind().name().to_string(),
        agent: exp.config.agent.name().to_string(),
        params: ReportParams {
            epsilon: params.epsilon.to_string(),
            rho: params.rho.to_string(),
            price: params.price,
            horizon: params.horizon,
            support_bound: params.support_bound,
            mean: params.mean,
        },
        regime: exp.regime.clone(),
        reps: reps.len() as u64,
        seed,
        seed_layout: SEED_LAYOUT.to_string(),
        mean_revenue,
        stderr,
        bad_state_fraction: mean_and_stderr(&col(&|r| r.bad_fraction)).0,
        ever_bad_fraction: mean_and_stderr(&col(&|r| f64::from(u8::from(r.ever_bad)))).0,
        mean_buyer_utility: mean_and_stderr(&col(&|r| r.utility_per_round)).0,
        regret_per_round: opt_mean(&|r| r.regret_per_round),
        policy_regret_per_round: opt_mean(&|r| r.policy_regret_per_round),
        explore_fraction: explores.then(|| mean_and_stderr(&col(&|r| r.explore_fraction)).0),
        bad_fraction_after_commit: if explores { opt_mean(&|r| r.bad_fraction_after_commit) } else { None },
        ir: IrSummary {
            neg_rounds: reps.iter().map(|r| r.ir.neg_rounds).sum(),
            min_prefix: reps.iter().map(|r| r.ir.min_prefix.to_f64()).fold(f64::INFINITY, f64::min),
            total: mean_and_stderr(&col(&|r| r.ir.total.to_f64())).0,
        },
    }
}

/// All replications of an experiment, run in parallel; the trace (if
/// configured) records replication 0.
pub fn run_experiment_reps(exp: &Experiment, seed: u64) -> Result<Vec<RepSummary>> {
    let reps = exp.config.reps;
    if reps == 0 {
        return Err(Error::param("reps", "must be at least 1"));
    }
    let first = match &exp.config.trace {
        Some(path) => {
            let file = std::io::BufWriter::new(std::fs::File::create(path)?);
            let mut trace = TraceWriter::new(file)?;
            let summary = run_replication(exp, seed, 0, Some(&mut trace))?;
            trace.finish()?.flush()?;
            summary
        }
        None => run_replication(exp, seed, 0, None)?,
    };
    let rest: Result<Vec<RepSummary>> =
        (1..reps).into_par_iter().map(|rep| run_replication(exp, seed, rep, None)).collect();
    let mut all = vec![first];
    all.extend(rest?);
    Ok(all)
}

pub fn run_experiment(exp: &Experiment, seed: u64) -> Result<RevenueReport> {
    Ok(aggregate(exp, seed, &run_experiment_reps(exp, seed)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{MyopicAgent, StayGoodAgent, TruthfulAgent};
    use crate::config::parse_config;
    use crate::mechanism::MechanismParams;
    use num_rational::Ratio;

    fn uniform(points: usize) -> ValuationDistribution {
        ValuationDistribution::uniform(MoneyGrid::unit(points).unwrap()).unwrap()
    }

    fn threshold(dist: &ValuationDistribution, eps: (i128, i128), rho: (i128, i128), horizon: u64) -> Mechanism {
        let p = MechanismParams::for_distribution(dist, Ratio::new(eps.0, eps.1), Ratio::new(rho.0, rho.1), horizon)
            .unwrap();
        Mechanism::threshold_price(p)
    }

    #[test]
    fn stay_good_trace_is_deterministic() {
        let d = uniform(101);
        let m = threshold(&d, (1, 2), (1, 3), 1000);
        let t = run_trajectory(&m, &mut StayGoodAgent, &d, 9, 0).unwrap();
        assert_eq!(t.revenue(), Money::new(999, 4));
        assert_eq!(t.bad_rounds(), 0);
        let again = run_trajectory(&m, &mut StayGoodAgent, &d, 9, 0).unwrap();
        assert_eq!(t.records, again.records);
    }

    #[test]
    fn warmup_myopic_revenue_is_zero() {
        let d = uniform(101);
        let p = MechanismParams::for_distribution(&d, Ratio::new(1, 2), Ratio::new(1, 3), 2000).unwrap();
        let m = Mechanism::warmup(p);
        let t = run_trajectory(&m, &mut MyopicAgent, &d, 1, 3).unwrap();
        assert_eq!(t.revenue(), Money::ZERO);
    }

    #[test]
    fn myopic_trace_pattern_and_ir() {
        let d = uniform(101);
        let m = threshold(&d, (1, 2), (1, 3), 3000);
        let t = run_trajectory(&m, &mut MyopicAgent, &d, 2, 0).unwrap();
        assert!(t.matches_myopic_pattern());
        let audit = ex_post_ir_audit(&t);
        assert_eq!(audit.neg_rounds, 0);
        assert!(audit.per_round_ir);
    }

    #[test]
    fn accounting_identity() {
        let d = uniform(11);
        let m = threshold(&d, (1, 2), (1, 3), 500);
        for agent in [&mut MyopicAgent as &mut dyn Agent, &mut StayGoodAgent, &mut TruthfulAgent] {
            let t = run_trajectory(&m, agent, &d, 5, 1).unwrap();
            assert_eq!(t.revenue() + t.buyer_utility(), t.allocated_value());
            assert!(t.records.iter().all(|r| r.payment <= r.bid));
        }
    }

    #[test]
    fn stay_good_audit_has_negative_rounds_but_positive_total() {
        let d = uniform(101);
        let m = threshold(&d, (1, 2), (1, 3), 1000);
        let audit = ex_post_ir_audit(&run_trajectory(&m, &mut StayGoodAgent, &d, 4, 0).unwrap());
        assert!(audit.neg_rounds > 0);
        assert!(audit.aggregate_ir);
    }

    #[test]
    fn regret_hand_trace() {
        let d = uniform(11);
        let m = threshold(&d, (1, 2), (1, 3), 1);
        let record = RoundRecord {
            round: 1,
            state_flag: StateFlag::Good,
            ledger: m.init_state(),
            value: Money::new(4, 5),
            bid: Money::new(1, 2),
            allocated: true,
            payment: Money::new(1, 2),
            utility: Money::new(3, 10),
            exploring: false,
        };
        let t = Trajectory { master_seed: 0, rep: 0, records: vec![record] };
        let grid = d.grid();
        let r = measured_regret(&t, &Expert::grid_class(&grid), &m, grid).unwrap();
        assert_eq!(r.best_expert.good_bid, Money::ZERO);
        // best expert earns 0.8, the realized bid earned 0.3
        assert!((r.regret - 0.5).abs() < 1e-12);
        let mut same = t.clone();
        same.records[0].bid = Money::ZERO;
        assert!(measured_regret(&same, &Expert::grid_class(&grid), &m, grid).unwrap().regret.abs() < 1e-12);
    }

    #[test]
    fn constant_bidder_has_no_policy_regret_against_itself() {
        let d = uniform(11);
        let m = threshold(&d, (1, 5), (1, 10), 2000);
        let bid = Money::new(2, 5);
        let t = run_trajectory(&m, &mut ConstantAgent { bid }, &d, 8, 2).unwrap();
        let pr = measured_policy_regret(&m, &d, 8, 2, t.buyer_utility(), &[bid]).unwrap();
        assert_eq!(pr.regret, Money::ZERO);
        // eps mu per round from always staying good
        assert!((pr.best_total.to_f64() / 2000.0 - 0.1).abs() < 0.02);
    }

    #[test]
    fn truthful_stays_good_on_credit_mechanism() {
        let d = uniform(101);
        let p = MechanismParams::for_distribution(&d, Ratio::new(1, 10), Ratio::new(1, 3), 10_000).unwrap();
        let m = Mechanism::credit(p);
        let t = run_trajectory(&m, &mut TruthfulAgent, &d, 11, 0).unwrap();
        assert_eq!(ex_post_ir_audit(&t).neg_rounds, 0);
        assert_eq!(t.bad_rounds(), 0);
    }

    #[test]
    fn trace_csv_header_and_rows() {
        let d = uniform(5);
        let m = threshold(&d, (1, 2), (1, 3), 4);
        let mut w = TraceWriter::new(Vec::new()).unwrap();
        simulate(&m, &mut MyopicAgent, &d, 1, 0, &mut w).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "round,state,avg_bid,value,bid,alloc,payment,utility");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("1,G,-,"));
        assert!(lines[2].starts_with("2,B,0,"));
    }

    #[test]
    fn stable_sum_ignores_order() {
        let mut xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 * 1e-3 + 1e10 * ((i % 3) as f64)).collect();
        let a = stable_sum(&xs);
        xs.reverse();
        assert_eq!(a.to_bits(), stable_sum(&xs).to_bits());
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn experiment_replay_is_identical_and_order_free() {
        let cfg = parse_config(
            r#"{"mechanism":{"kind":"threshold","epsilon":0.5,"rho":"1/3"},
                "agent":{"kind":"myopic"},
                "distribution":{"kind":"uniform","B":1,"tick":0.1},
                "T":500,"reps":12,"metrics":{"regret":true}}"#,
        )
        .unwrap();
        let exp = cfg.build().unwrap();
        let reps = run_experiment_reps(&exp, 42).unwrap();
        let a = aggregate(&exp, 42, &reps);
        let mut shuffled = reps.clone();
        shuffled.reverse();
        shuffled.swap(0, 5);
        let b = aggregate(&exp, 42, &shuffled);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = run_experiment(&exp, 42).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
        assert!(a.regret_per_round.unwrap() >= -1e-12);
    }
}
