//! Buyer bidding policies.
//!
//! Informed agents (myopic, stay-good, lookahead) see the mechanism ledger.
//! Learners (EXP3, explore-then-commit) see only the good/bad flag and their
//! own value and payoff.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{AvgBidLedger, LedgerState, Mechanism, MechanismKind, MechanismParams};
use crate::money::Money;
use crate::oracle::LookaheadOracle;
use crate::valuation::{MoneyGrid, ValuationDistribution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateFlag {
    Good,
    Bad,
}

impl StateFlag {
    pub fn from_good(good: bool) -> Self {
        if good {
            StateFlag::Good
        } else {
            StateFlag::Bad
        }
    }

    pub fn is_good(self) -> bool {
        self == StateFlag::Good
    }

    pub fn letter(self) -> char {
        match self {
            StateFlag::Good => 'G',
            StateFlag::Bad => 'B',
        }
    }
}

/// What a learner may see before bidding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub state_flag: StateFlag,
    pub value: Money,
    /// 1-based.
    pub round: u64,
    pub rounds_total: u64,
}

impl Observation {
    pub fn is_last_round(&self) -> bool {
        self.round >= self.rounds_total
    }
}

/// Everything an informed agent may see before bidding.
pub struct BidContext<'a> {
    pub obs: Observation,
    pub ledger: &'a LedgerState,
    pub mechanism: &'a Mechanism,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Feedback {
    pub allocated: bool,
    pub payment: Money,
    pub utility: Money,
}

pub trait Agent: Send {
    fn name(&self) -> &'static str;

    fn bid(&mut self, ctx: &BidContext<'_>, rng: &mut dyn RngCore) -> Result<Money>;

    fn feedback(&mut self, _obs: &Observation, _feedback: &Feedback) -> Result<()> {
        Ok(())
    }

    /// Whether the agent is still in an exploration phase.
    fn is_exploring(&self) -> bool {
        false
    }
}

/// Good: 0. Bad: the posted price when the value reaches it, else 0. A
/// mechanism without a bad-state price (`None`) gets 0 everywhere.
pub fn myopic_bid(obs: &Observation, price: Option<Money>) -> Money {
    match (obs.state_flag, price) {
        (StateFlag::Bad, Some(p)) if obs.value >= p => p,
        _ => Money::ZERO,
    }
}

/// Minimum bid that keeps an average ledger good; myopic in the last round
/// and in bad states.
pub fn stay_good_bid(ledger: &AvgBidLedger, obs: &Observation, params: &MechanismParams) -> Money {
    if obs.is_last_round() || !obs.state_flag.is_good() {
        return myopic_bid(obs, Some(params.price));
    }
    ledger.min_good_bid(params.threshold())
}

pub fn truthful_bid(obs: &Observation) -> Money {
    obs.value
}

/// Price the myopic buyer faces in a bad state.
fn bad_state_price(mech: &Mechanism) -> Option<Money> {
    match mech.kind() {
        MechanismKind::Warmup => None,
        MechanismKind::Threshold | MechanismKind::Credit => Some(mech.params().price),
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MyopicAgent;

impl Agent for MyopicAgent {
    fn name(&self) -> &'static str {
        "myopic"
    }

    fn bid(&mut self, ctx: &BidContext<'_>, _rng: &mut dyn RngCore) -> Result<Money> {
        Ok(myopic_bid(&ctx.obs, bad_state_price(ctx.mechanism)))
    }
}

/// The informed forward-looking buyer: always bids just enough to stay good.
#[derive(Clone, Copy, Debug, Default)]
pub struct StayGoodAgent;

impl Agent for StayGoodAgent {
    fn name(&self) -> &'static str {
        "stay_good"
    }

    fn bid(&mut self, ctx: &BidContext<'_>, _rng: &mut dyn RngCore) -> Result<Money> {
        let obs = &ctx.obs;
        if obs.is_last_round() || !obs.state_flag.is_good() {
            return Ok(myopic_bid(obs, bad_state_price(ctx.mechanism)));
        }
        Ok(ctx.mechanism.stay_good_bid(ctx.ledger))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TruthfulAgent;

impl Agent for TruthfulAgent {
    fn name(&self) -> &'static str {
        "truthful"
    }

    fn bid(&mut self, ctx: &BidContext<'_>, _rng: &mut dyn RngCore) -> Result<Money> {
        Ok(truthful_bid(&ctx.obs))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantAgent {
    pub bid: Money,
}

impl Agent for ConstantAgent {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn bid(&mut self, _ctx: &BidContext<'_>, _rng: &mut dyn RngCore) -> Result<Money> {
        Ok(self.bid)
    }
}

/// Per-round lookahead of a forward-looking buyer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KSchedule {
    Constant(u64),
    /// Uniform on `[1, T - t]`, drawn from the agent's stream.
    Random,
}

/// Exact k-lookahead buyer backed by the DP oracle.
pub struct LookaheadAgent {
    oracle: LookaheadOracle,
    schedule: KSchedule,
}

impl LookaheadAgent {
    pub fn new(mech: &Mechanism, dist: &ValuationDistribution, schedule: KSchedule) -> Result<Self> {
        Ok(Self { oracle: LookaheadOracle::new(mech, dist)?, schedule })
    }
}

impl Agent for LookaheadAgent {
    fn name(&self) -> &'static str {
        match self.schedule {
            KSchedule::Constant(_) => "lookahead",
            KSchedule::Random => "forward_looking",
        }
    }

    fn bid(&mut self, ctx: &BidContext<'_>, rng: &mut dyn RngCore) -> Result<Money> {
        let remaining = ctx.obs.rounds_total.saturating_sub(ctx.obs.round);
        let k = match self.schedule {
            KSchedule::Constant(k) => k,
            KSchedule::Random if remaining == 0 => 0,
            KSchedule::Random => rng.gen_range(1..=remaining),
        };
        Ok(self.oracle.optimal_bid(ctx.ledger, ctx.obs.value, k, ctx.obs.round)?.bid)
    }
}

/// A `(g, beta)` expert: bid `g` in good states; in bad states bid `beta` when
/// the value reaches it and 0 otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Expert {
    pub good_bid: Money,
    pub bad_threshold: Money,
}

impl Expert {
    pub fn bid(&self, flag: StateFlag, value: Money) -> Money {
        match flag {
            StateFlag::Good => self.good_bid,
            StateFlag::Bad if value >= self.bad_threshold => self.bad_threshold,
            StateFlag::Bad => Money::ZERO,
        }
    }

    /// All `|grid|^2` experts, good bid major.
    pub fn grid_class(grid: &MoneyGrid) -> Vec<Expert> {
        let points: Vec<Money> = grid.points().collect();
        points.iter().flat_map(|&g| points.iter().map(move |&b| Expert { good_bid: g, bad_threshold: b })).collect()
    }
}

/// How the chosen expert's importance-weighted feedback enters its weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exp3Estimator {
    /// Weight times `exp(-eta (1 - r) / p)`. Stable without an exploration mix.
    #[default]
    Loss,
    /// Weight times `exp(eta r / p)`. Without an exploration mix a lucky draw
    /// on a rarely chosen expert can swamp every other weight.
    Gain,
}

/// Multiplicative weights over experts with importance-weighted rewards.
/// Weights are kept as logarithms.
#[derive(Clone, Debug)]
pub struct Exp3State {
    log_weights: Vec<f64>,
    eta: f64,
    estimator: Exp3Estimator,
    last_probabilities: Vec<f64>,
}

impl Exp3State {
    /// Uniform weights and `eta = sqrt(ln N / (N T))`.
    pub fn new(experts: usize, horizon: u64) -> Result<Self> {
        if experts == 0 {
            return Err(Error::param("experts", "need at least one expert"));
        }
        let n = experts as f64;
        let eta = if experts == 1 { 0.0 } else { (n.ln() / (n * horizon as f64)).sqrt() };
        Self::with_eta(experts, eta)
    }

    pub fn with_eta(experts: usize, eta: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::param("eta", format!("must be finite and non-negative, got {eta}")));
        }
        Ok(Self {
            log_weights: vec![0.0; experts],
            eta,
            estimator: Exp3Estimator::default(),
            last_probabilities: vec![1.0 / experts as f64; experts],
        })
    }

    pub fn with_estimator(mut self, estimator: Exp3Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn estimator(&self) -> Exp3Estimator {
        self.estimator
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.last_probabilities
    }

    fn refresh_probabilities(&mut self) {
        let max = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (p, lw) in self.last_probabilities.iter_mut().zip(&self.log_weights) {
            *p = (lw - max).exp();
            total += *p;
        }
        for p in &mut self.last_probabilities {
            *p /= total;
        }
    }

    /// Samples an expert and returns its bid for `obs`.
    pub fn step(&mut self, experts: &[Expert], obs: &Observation, rng: &mut dyn RngCore) -> (Money, usize) {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = experts.len() - 1;
        for (i, p) in self.last_probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = i;
                break;
            }
        }
        (experts[chosen].bid(obs.state_flag, obs.value), chosen)
    }

    /// Rescales `utility` from `[-B, B]` to a reward `r` in `[0, 1]`, divides
    /// by the chosen expert's probability `p` and applies the estimator.
    pub fn update(&mut self, chosen: usize, utility: f64, support_bound: f64) -> Result<()> {
        if utility.is_nan() || utility.abs() > support_bound + 1e-12 {
            return Err(Error::UtilityOutOfRange { utility, bound: support_bound });
        }
        let reward = ((utility + support_bound) / (2.0 * support_bound)).clamp(0.0, 1.0);
        let step = match self.estimator {
            Exp3Estimator::Loss => -(1.0 - reward),
            Exp3Estimator::Gain => reward,
        };
        if step != 0.0 {
            self.log_weights[chosen] += self.eta * step / self.last_probabilities[chosen];
            self.refresh_probabilities();
        }
        Ok(())
    }
}

pub struct Exp3Agent {
    experts: Vec<Expert>,
    state: Exp3State,
    support_bound: f64,
    last_choice: Option<usize>,
}

impl Exp3Agent {
    pub fn new(experts: Vec<Expert>, horizon: u64, support_bound: Money) -> Result<Self> {
        let state = Exp3State::new(experts.len(), horizon)?;
        Ok(Self { experts, state, support_bound: support_bound.to_f64(), last_choice: None })
    }

    pub fn with_eta(experts: Vec<Expert>, eta: f64, support_bound: Money) -> Result<Self> {
        let state = Exp3State::with_eta(experts.len(), eta)?;
        Ok(Self { experts, state, support_bound: support_bound.to_f64(), last_choice: None })
    }

    pub fn with_estimator(mut self, estimator: Exp3Estimator) -> Self {
        self.state = self.state.with_estimator(estimator);
        self
    }

    pub fn state(&self) -> &Exp3State {
        &self.state
    }

    pub fn experts(&self) -> &[Expert] {
        &self.experts
    }
}

impl Agent for Exp3Agent {
    fn name(&self) -> &'static str {
        "exp3"
    }

    fn bid(&mut self, ctx: &BidContext<'_>, rng: &mut dyn RngCore) -> Result<Money> {
        let (bid, chosen) = self.state.step(&self.experts, &ctx.obs, rng);
        self.last_choice = Some(chosen);
        Ok(bid)
    }

    fn feedback(&mut self, _obs: &Observation, feedback: &Feedback) -> Result<()> {
        let chosen = self.last_choice.take().ok_or_else(|| Error::param("exp3", "feedback without a bid"))?;
        self.state.update(chosen, feedback.utility.to_f64(), self.support_bound)
    }
}

/// Explore-then-commit schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtcSchedule {
    pub candidates: Vec<Money>,
    pub block_length: u64,
    pub burn_in: u64,
    /// Bid used to leave a bad state during a reset.
    pub reset_bid: Money,
}

impl EtcSchedule {
    pub const MIN_BLOCK: u64 = 100;
    pub const BURN_IN: u64 = 10;

    /// All grid bids, `max(ceil(T^(2/3) / |grid|), 100)` rounds per block.
    pub fn for_grid(grid: &MoneyGrid, horizon: u64) -> Self {
        let candidates: Vec<Money> = grid.points().collect();
        let per_block = ((horizon as f64).powf(2.0 / 3.0) / candidates.len() as f64).ceil() as u64;
        Self {
            block_length: per_block.max(Self::MIN_BLOCK),
            burn_in: Self::BURN_IN,
            reset_bid: grid.max_value(),
            candidates,
        }
    }

    /// Rounds spent inside exploration blocks, excluding resets.
    pub fn scheduled_rounds(&self) -> u64 {
        self.block_length * self.candidates.len() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum EtcPhase {
    Block {
        index: usize,
        position: u64,
    },
    /// Drive the state to borderline: bid 0 while good, `reset_bid` while bad,
    /// and finish at the first good state seen after a bad one.
    Reset {
        seen_bad: bool,
        next_block: Option<usize>,
    },
    Commit,
}

/// Tries each candidate bid for a contiguous block starting from the
/// borderline state, then commits to the bid with the best mean utility
/// (burn-in rounds excluded, ties toward the lower bid).
#[derive(Clone, Debug)]
pub struct EtcState {
    schedule: EtcSchedule,
    phase: EtcPhase,
    sums: Vec<f64>,
    counts: Vec<u64>,
    committed_bid: Option<Money>,
    explore_rounds: u64,
}

impl EtcState {
    pub fn new(schedule: EtcSchedule) -> Result<Self> {
        if schedule.candidates.is_empty() {
            return Err(Error::param("candidates", "need at least one bid"));
        }
        if schedule.burn_in >= schedule.block_length {
            return Err(Error::param("burn_in", "must be shorter than a block"));
        }
        let n = schedule.candidates.len();
        Ok(Self {
            schedule,
            phase: EtcPhase::Block { index: 0, position: 0 },
            sums: vec![0.0; n],
            counts: vec![0; n],
            committed_bid: None,
            explore_rounds: 0,
        })
    }

    pub fn schedule(&self) -> &EtcSchedule {
        &self.schedule
    }

    pub fn committed_bid(&self) -> Option<Money> {
        self.committed_bid
    }

    /// Rounds played before the commit phase, resets included.
    pub fn explore_rounds(&self) -> u64 {
        self.explore_rounds
    }

    pub fn is_committed(&self) -> bool {
        self.phase == EtcPhase::Commit
    }

    /// Mean tallied utility per candidate.
    pub fn mean_utilities(&self) -> Vec<Option<f64>> {
        self.sums.iter().zip(&self.counts).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect()
    }

    fn best_candidate(&self) -> Money {
        let mut best: Option<(usize, f64)> = None;
        for (i, mean) in self.mean_utilities().into_iter().enumerate() {
            if let Some(m) = mean {
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((i, m));
                }
            }
        }
        self.schedule.candidates[best.map_or(0, |(i, _)| i)]
    }

    pub fn step(&mut self, obs: &Observation) -> Money {
        loop {
            match self.phase {
                EtcPhase::Block { index, .. } => {
                    self.explore_rounds += 1;
                    return self.schedule.candidates[index];
                }
                EtcPhase::Commit => {
                    return self.committed_bid.expect("committed before the commit phase");
                }
                EtcPhase::Reset { seen_bad, next_block } => {
                    if obs.state_flag.is_good() && seen_bad {
                        self.phase = match next_block {
                            Some(index) => EtcPhase::Block { index, position: 0 },
                            None => EtcPhase::Commit,
                        };
                        continue;
                    }
                    self.explore_rounds += 1;
                    if obs.state_flag.is_good() {
                        return Money::ZERO;
                    }
                    self.phase = EtcPhase::Reset { seen_bad: true, next_block };
                    return self.schedule.reset_bid;
                }
            }
        }
    }

    pub fn update(&mut self, utility: f64) {
        if let EtcPhase::Block { index, position } = self.phase {
            if position >= self.schedule.burn_in {
                self.sums[index] += utility;
                self.counts[index] += 1;
            }
            let position = position + 1;
            self.phase = if position < self.schedule.block_length {
                EtcPhase::Block { index, position }
            } else {
                let next = index + 1;
                let next_block = (next < self.schedule.candidates.len()).then_some(next);
                if next_block.is_none() {
                    self.committed_bid = Some(self.best_candidate());
                }
                EtcPhase::Reset { seen_bad: false, next_block }
            };
        }
    }
}

pub struct EtcAgent {
    state: EtcState,
}

impl EtcAgent {
    pub fn new(schedule: EtcSchedule) -> Result<Self> {
        Ok(Self { state: EtcState::new(schedule)? })
    }

    pub fn state(&self) -> &EtcState {
        &self.state
    }
}

impl Agent for EtcAgent {
    fn name(&self) -> &'static str {
        "etc"
    }

    fn bid(&mut self, ctx: &BidContext<'_>, _rng: &mut dyn RngCore) -> Result<Money> {
        Ok(self.state.step(&ctx.obs))
    }

    fn feedback(&mut self, _obs: &Observation, feedback: &Feedback) -> Result<()> {
        self.state.update(feedback.utility.to_f64());
        Ok(())
    }

    fn is_exploring(&self) -> bool {
        !self.state.is_committed()
    }
}

/// Agent description in an experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentSpec {
    // struct-style so that unknown keys are rejected
    Myopic {},
    StayGood {},
    Lookahead {
        k: u64,
    },
    ForwardLooking {
        #[serde(default = "default_k_schedule")]
        k_schedule: KSchedule,
    },
    Exp3 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
        /// `loss` when omitted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        estimator: Option<Exp3Estimator>,
    },
    Etc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        block_length: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        burn_in: Option<u64>,
    },
    Truthful {},
    Constant {
        bid: Money,
    },
}

fn default_k_schedule() -> KSchedule {
    KSchedule::Random
}

impl AgentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AgentSpec::Myopic {} => "myopic",
            AgentSpec::StayGood {} => "stay_good",
            AgentSpec::Lookahead { .. } => "lookahead",
            AgentSpec::ForwardLooking { .. } => "forward_looking",
            AgentSpec::Exp3 { .. } => "exp3",
            AgentSpec::Etc { .. } => "etc",
            AgentSpec::Truthful {} => "truthful",
            AgentSpec::Constant { .. } => "constant",
        }
    }

    /// Checks that do not need the mechanism, as `(field, message)` pairs.
    pub fn validate(&self) -> Vec<(&'static str, String)> {
        let mut errors = Vec::new();
        match self {
            AgentSpec::Exp3 { eta: Some(eta), .. } if !(*eta >= 0.0 && eta.is_finite()) => {
                errors.push(("eta", format!("must be finite and non-negative, got {eta}")));
            }
            AgentSpec::Etc { block_length: Some(0), .. } => {
                errors.push(("block_length", "must be positive".to_string()))
            }
            AgentSpec::ForwardLooking { k_schedule: KSchedule::Constant(0) } => {
                errors.push(("k_schedule", "a forward-looking buyer needs k >= 1".to_string()));
            }
            AgentSpec::Constant { bid } if bid.is_negative() => {
                errors.push(("bid", "must be non-negative".to_string()))
            }
            _ => {}
        }
        errors
    }

    pub fn build(&self, mech: &Mechanism, dist: &ValuationDistribution) -> Result<Box<dyn Agent>> {
        let horizon = mech.params().horizon;
        Ok(match self {
            AgentSpec::Myopic {} => Box::new(MyopicAgent),
            AgentSpec::StayGood {} => Box::new(StayGoodAgent),
            AgentSpec::Lookahead { k } => Box::new(LookaheadAgent::new(mech, dist, KSchedule::Constant(*k))?),
            AgentSpec::ForwardLooking { k_schedule } => Box::new(LookaheadAgent::new(mech, dist, *k_schedule)?),
            AgentSpec::Exp3 { eta, estimator } => {
                let experts = Expert::grid_class(&dist.grid());
                let bound = mech.params().support_bound;
                let agent = match eta {
                    Some(eta) => Exp3Agent::with_eta(experts, *eta, bound)?,
                    None => Exp3Agent::new(experts, horizon, bound)?,
                };
                Box::new(agent.with_estimator(estimator.unwrap_or_default()))
            }
            AgentSpec::Etc { block_length, burn_in } => {
                let mut schedule = EtcSchedule::for_grid(&dist.grid(), horizon);
                if let Some(b) = block_length {
                    schedule.block_length = *b;
                }
                if let Some(b) = burn_in {
                    schedule.burn_in = *b;
                }
                Box::new(EtcAgent::new(schedule)?)
            }
            AgentSpec::Truthful {} => Box::new(TruthfulAgent),
            AgentSpec::Constant { bid } => Box::new(ConstantAgent { bid: *bid }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(flag: StateFlag, value: Money, round: u64) -> Observation {
        Observation { state_flag: flag, value, round, rounds_total: 100 }
    }

    fn params() -> MechanismParams {
        MechanismParams::new(
            Ratio::new(1, 2),
            Ratio::new(1, 3),
            Money::new(1, 2),
            100,
            Money::from_integer(1),
            Money::new(1, 2),
        )
        .unwrap()
    }

    #[test]
    fn myopic_bids() {
        let p = Some(Money::new(1, 2));
        assert_eq!(myopic_bid(&obs(StateFlag::Good, Money::new(9, 10), 1), p), Money::ZERO);
        assert_eq!(myopic_bid(&obs(StateFlag::Bad, Money::new(4, 5), 1), p), Money::new(1, 2));
        assert_eq!(myopic_bid(&obs(StateFlag::Bad, Money::new(3, 10), 1), p), Money::ZERO);
        assert_eq!(myopic_bid(&obs(StateFlag::Bad, Money::new(4, 5), 1), None), Money::ZERO);
    }

    #[test]
    fn stay_good_bids() {
        let p = params();
        let o = obs(StateFlag::Good, Money::new(1, 10), 3);
        assert_eq!(stay_good_bid(&AvgBidLedger::BORDERLINE, &o, &p), Money::new(1, 4));
        assert_eq!(stay_good_bid(&AvgBidLedger::new(Money::new(3, 5), 2), &o, &p), Money::new(3, 20));
        let last = obs(StateFlag::Good, Money::new(1, 10), 100);
        assert_eq!(stay_good_bid(&AvgBidLedger::BORDERLINE, &last, &p), Money::ZERO);
    }

    #[test]
    fn truthful_bid_is_value() {
        assert_eq!(truthful_bid(&obs(StateFlag::Good, Money::new(7, 10), 1)), Money::new(7, 10));
        assert_eq!(truthful_bid(&obs(StateFlag::Bad, Money::ZERO, 1)), Money::ZERO);
    }

    #[test]
    fn expert_induced_bids() {
        let e = Expert { good_bid: Money::new(1, 4), bad_threshold: Money::new(1, 2) };
        assert_eq!(e.bid(StateFlag::Good, Money::ZERO), Money::new(1, 4));
        assert_eq!(e.bid(StateFlag::Bad, Money::new(3, 5)), Money::new(1, 2));
        assert_eq!(e.bid(StateFlag::Bad, Money::new(2, 5)), Money::ZERO);
        assert_eq!(Expert::grid_class(&MoneyGrid::unit(11).unwrap()).len(), 121);
    }

    #[test]
    fn exp3_starts_uniform() {
        let s = Exp3State::new(121, 1000).unwrap();
        assert!(s.probabilities().iter().all(|&p| (p - 1.0 / 121.0).abs() < 1e-15));
    }

    #[test]
    fn exp3_update_hand_trace() {
        let mut s = Exp3State::with_eta(2, 0.1).unwrap();
        // utility 0 is reward 1/2, loss 1/2, estimate (1/2) / (1/2) = 1
        s.update(0, 0.0, 1.0).unwrap();
        assert!((s.log_weights()[0] + 0.1).abs() < 1e-15);
        assert_eq!(s.log_weights()[1], 0.0);
        assert!(s.probabilities()[0] < 0.5);
        let before = s.log_weights().to_vec();
        s.update(1, 1.0, 1.0).unwrap();
        assert_eq!(s.log_weights(), &before[..]);
        assert!(matches!(s.update(0, 1.5, 1.0), Err(Error::UtilityOutOfRange { .. })));
    }

    #[test]
    fn exp3_gain_form_hand_trace() {
        // probability 1/2 and utility B: reward 1, estimate 2, multiplier exp(2 eta)
        let mut s = Exp3State::with_eta(2, 0.1).unwrap().with_estimator(Exp3Estimator::Gain);
        s.update(0, 1.0, 1.0).unwrap();
        assert!((s.log_weights()[0] - 0.2).abs() < 1e-15);
        assert_eq!(s.log_weights()[1], 0.0);
        let before = s.log_weights().to_vec();
        s.update(1, -1.0, 1.0).unwrap();
        assert_eq!(s.log_weights(), &before[..]);
    }

    #[test]
    fn exp3_full_rewards_keep_weights() {
        let mut s = Exp3State::new(9, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let experts = Expert::grid_class(&MoneyGrid::unit(3).unwrap());
        for t in 1..=50 {
            let (_, i) = s.step(&experts, &obs(StateFlag::Good, Money::ZERO, t), &mut rng);
            s.update(i, 1.0, 1.0).unwrap();
        }
        assert!(s.log_weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn etc_schedule_shape() {
        let grid = MoneyGrid::unit(11).unwrap();
        let s = EtcSchedule::for_grid(&grid, 1_000_000);
        assert_eq!(s.block_length, 910);
        assert_eq!(s.scheduled_rounds(), 10_010);
        assert_eq!(EtcSchedule::for_grid(&grid, 1000).block_length, 100);
    }

    #[test]
    fn etc_first_round_bids_first_candidate_and_commit_is_stable() {
        let grid = MoneyGrid::unit(3).unwrap();
        let mut schedule = EtcSchedule::for_grid(&grid, 1000);
        schedule.block_length = 20;
        schedule.burn_in = 2;
        let mut s = EtcState::new(schedule).unwrap();
        let mut flag = StateFlag::Good;
        let mut t = 1;
        assert_eq!(s.step(&obs(flag, Money::ZERO, t)), Money::ZERO);
        s.update(0.0);
        // candidate 1/2 earns most; alternate flags so resets terminate
        while !s.is_committed() {
            t += 1;
            let bid = s.step(&obs(flag, Money::ZERO, t));
            let utility = if bid == Money::new(1, 2) { 0.3 } else { 0.1 };
            s.update(utility);
            flag = if flag.is_good() { StateFlag::Bad } else { StateFlag::Good };
        }
        assert_eq!(s.committed_bid(), Some(Money::new(1, 2)));
        for _ in 0..100 {
            t += 1;
            assert_eq!(s.step(&obs(flag, Money::ZERO, t)), Money::new(1, 2));
            s.update(-0.5);
        }
        assert!(s.explore_rounds() >= 60);
    }

    #[test]
    fn etc_ties_prefer_lower_bid() {
        let grid = MoneyGrid::unit(3).unwrap();
        let mut schedule = EtcSchedule::for_grid(&grid, 1000);
        schedule.block_length = 5;
        schedule.burn_in = 0;
        let mut s = EtcState::new(schedule).unwrap();
        let mut flag = StateFlag::Good;
        let mut t = 0;
        while !s.is_committed() {
            t += 1;
            s.step(&obs(flag, Money::ZERO, t));
            s.update(0.2);
            flag = if flag.is_good() { StateFlag::Bad } else { StateFlag::Good };
        }
        assert_eq!(s.committed_bid(), Some(Money::ZERO));
    }

    #[test]
    fn agent_spec_json() {
        let spec: AgentSpec = serde_json::from_str(r#"{"kind":"lookahead","k":2}"#).unwrap();
        assert_eq!(spec, AgentSpec::Lookahead { k: 2 });
        let spec: AgentSpec = serde_json::from_str(r#"{"kind":"forward_looking"}"#).unwrap();
        assert_eq!(spec, AgentSpec::ForwardLooking { k_schedule: KSchedule::Random });
        let spec: AgentSpec =
            serde_json::from_str(r#"{"kind":"forward_looking","k_schedule":{"constant":3}}"#).unwrap();
        assert_eq!(spec, AgentSpec::ForwardLooking { k_schedule: KSchedule::Constant(3) });
        assert!(serde_json::from_str::<AgentSpec>(r#"{"kind":"myopic","k":1}"#).is_err());
    }
}
