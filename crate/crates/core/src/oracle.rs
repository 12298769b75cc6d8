//! Exact backward induction of the lookahead utility recursion.
//!
//! `U_l(s, v, b) = E_x[v x - p + V_{l-1}(s')]` with `V_l(s) = E_v max_b U_l(s, v, b)`
//! and `U_0` the one-round utility. Both average-ledger mechanisms are
//! time-homogeneous, so values depend on `(state, l)` only; the round `t`
//! matters only through `l = min(k, T - t)`.
//!
//! All bad ledgers behave the same (allocation depends on `bid >= p` alone and
//! an allocation resets to the borderline state), so the DP collapses them
//! into a single [`DpState::Bad`].

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::agents::{self, Observation, StateFlag};
use crate::error::{Error, Result};
use crate::mechanism::{AvgBidLedger, LedgerState, Mechanism, MechanismKind};
use crate::money::{fraction_to_big, fraction_to_f64, Money};
use crate::valuation::ValuationDistribution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DpState {
    Good(AvgBidLedger),
    Bad,
}

impl DpState {
    pub const BORDERLINE: DpState = DpState::Good(AvgBidLedger::BORDERLINE);

    pub fn describe(&self) -> String {
        match self {
            DpState::Good(l) => format!("good(sum={}, count={})", l.bid_sum, l.count),
            DpState::Bad => "bad".to_string(),
        }
    }
}

/// Optimal bid and its utility.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Choice {
    pub bid: Money,
    pub utility: BigRational,
}

/// Per-bid pieces of `U_l(s, v, b) = q_b (v - b) + c_b`, independent of `v`.
struct BidTerm {
    bid: Money,
    q: BigRational,
    continuation: BigRational,
}

/// Exact lookahead DP for one mechanism, value distribution and horizon.
pub struct LookaheadOracle {
    mech: Mechanism,
    horizon: u64,
    threshold: Money,
    price: Money,
    rho: BigRational,
    values: Vec<(Money, BigRational)>,
    base_bids: Vec<Money>,
    memo: HashMap<(DpState, u64), BigRational>,
}

impl LookaheadOracle {
    pub fn new(mech: &Mechanism, dist: &ValuationDistribution) -> Result<Self> {
        if mech.kind() == MechanismKind::Credit {
            return Err(Error::Unsupported("the lookahead oracle covers the average-bid mechanisms only".into()));
        }
        let params = mech.params();
        let threshold = mech.good_threshold();
        let mut bids: BTreeSet<Money> = dist.grid().points().collect();
        bids.insert(threshold);
        Ok(Self {
            mech: mech.clone(),
            horizon: params.horizon,
            threshold,
            price: params.price,
            rho: fraction_to_big(params.rho),
            values: dist.support().map(|(v, p)| (v, fraction_to_big(p))).collect(),
            base_bids: bids.into_iter().collect(),
            memo: HashMap::new(),
        })
    }

    pub fn mechanism(&self) -> &Mechanism {
        &self.mech
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn values(&self) -> impl Iterator<Item = Money> + '_ {
        self.values.iter().map(|(v, _)| *v)
    }

    /// Number of memoized `(state, l)` values.
    pub fn table_size(&self) -> usize {
        self.memo.len()
    }

    pub fn dp_state(&self, state: &LedgerState) -> Result<DpState> {
        match state {
            LedgerState::AvgBid(l) if l.is_good(self.threshold) => Ok(DpState::Good(*l)),
            LedgerState::AvgBid(_) => Ok(DpState::Bad),
            LedgerState::Credit(_) => Err(Error::Unsupported("credit ledgers have no DP encoding".into())),
        }
    }

    /// Bid grid: the value grid, `(1 - eps) mu`, and the state's minimum
    /// stay-good bid. Sorted ascending.
    pub fn candidate_bids(&self, state: DpState) -> Vec<Money> {
        let mut bids = self.base_bids.clone();
        if let DpState::Good(l) = state {
            let min_bid = l.min_good_bid(self.threshold);
            if let Err(pos) = bids.binary_search(&min_bid) {
                bids.insert(pos, min_bid);
            }
        }
        bids
    }

    fn allocation_probability(&self, state: DpState, bid: Money) -> BigRational {
        match state {
            DpState::Good(_) => BigRational::one(),
            DpState::Bad => {
                let eligible = self.mech.kind() == MechanismKind::Warmup || bid >= self.price;
                if eligible {
                    self.rho.clone()
                } else {
                    BigRational::zero()
                }
            }
        }
    }

    /// State after an allocation at `bid`.
    pub fn next_on_allocation(&self, state: DpState, bid: Money) -> DpState {
        match state {
            DpState::Good(l) => {
                let next = l.with_bid(bid);
                if next.is_good(self.threshold) {
                    DpState::Good(next)
                } else {
                    DpState::Bad
                }
            }
            DpState::Bad => DpState::BORDERLINE,
        }
    }

    fn bid_terms(&mut self, state: DpState, ell: u64, bids: &[Money]) -> Vec<BidTerm> {
        let stay = if ell > 0 { Some(self.value(state, ell - 1)) } else { None };
        bids.iter()
            .map(|&bid| {
                let q = self.allocation_probability(state, bid);
                let continuation = match &stay {
                    None => BigRational::zero(),
                    Some(stay) => {
                        let mut c = BigRational::zero();
                        if !q.is_zero() {
                            let next = self.next_on_allocation(state, bid);
                            c += &q * self.value(next, ell - 1);
                        }
                        let miss = BigRational::one() - &q;
                        if !miss.is_zero() {
                            c += miss * stay;
                        }
                        c
                    }
                };
                BidTerm { bid, q, continuation }
            })
            .collect()
    }

    fn best_of(terms: &[BidTerm], v: Money) -> Choice {
        let vb = v.to_big();
        let mut best: Option<Choice> = None;
        for term in terms {
            let u = &term.q * (&vb - term.bid.to_big()) + &term.continuation;
            // strict improvement keeps the lowest bid on ties
            if best.as_ref().is_none_or(|b| u > b.utility) {
                best = Some(Choice { bid: term.bid, utility: u });
            }
        }
        best.expect("candidate bid set is never empty")
    }

    /// `V_l(s) = E_v max_b U_l(s, v, b)`, memoized.
    pub fn value(&mut self, state: DpState, ell: u64) -> BigRational {
        if let Some(v) = self.memo.get(&(state, ell)) {
            return v.clone();
        }
        let bids = self.candidate_bids(state);
        let terms = self.bid_terms(state, ell, &bids);
        let mut total = BigRational::zero();
        for (v, p) in &self.values {
            total += p * Self::best_of(&terms, *v).utility;
        }
        self.memo.insert((state, ell), total.clone());
        total
    }

    fn check_ell(&self, ell: u64, t: u64) -> Result<()> {
        if t == 0 || t > self.horizon {
            return Err(Error::param("t", format!("round {t} outside 1..={}", self.horizon)));
        }
        let remaining = self.horizon - t;
        if ell > remaining {
            return Err(Error::LookaheadTooLong { ell, remaining, round: t });
        }
        Ok(())
    }

    /// `U_l(s, v, b)` in round `t` (1-based).
    pub fn lookahead_utility(
        &mut self,
        state: &LedgerState,
        v: Money,
        bid: Money,
        ell: u64,
        t: u64,
    ) -> Result<BigRational> {
        self.check_ell(ell, t)?;
        if bid.is_negative() {
            return Err(Error::param("bid", "must be non-negative"));
        }
        let s = self.dp_state(state)?;
        Ok(self.utility_at(s, v, bid, ell))
    }

    pub fn utility_at(&mut self, state: DpState, v: Money, bid: Money, ell: u64) -> BigRational {
        let term = self.bid_terms(state, ell, &[bid]).pop().expect("one bid");
        term.q * (v.to_big() - bid.to_big()) + term.continuation
    }

    /// Best bid for a k-lookahead buyer in round `t`, with `l = min(k, T - t)`.
    /// Ties go to the lowest bid.
    pub fn optimal_bid(&mut self, state: &LedgerState, v: Money, k: u64, t: u64) -> Result<Choice> {
        let ell = k.min(self.horizon.saturating_sub(t));
        self.check_ell(ell, t)?;
        let s = self.dp_state(state)?;
        Ok(self.best_at(s, v, ell))
    }

    pub fn best_at(&mut self, state: DpState, v: Money, ell: u64) -> Choice {
        let bids = self.candidate_bids(state);
        let terms = self.bid_terms(state, ell, &bids);
        Self::best_of(&terms, v)
    }

    /// States reachable within `depth` transitions of `root`, any candidate bid.
    pub fn reachable_within(&self, root: DpState, depth: u64) -> BTreeSet<DpState> {
        let mut seen = BTreeSet::from([root]);
        let mut frontier = vec![root];
        for _ in 0..depth {
            let mut next = Vec::new();
            for s in frontier {
                let mut succ: Vec<DpState> = self
                    .candidate_bids(s)
                    .into_iter()
                    .filter(|&b| !self.allocation_probability(s, b).is_zero())
                    .map(|b| self.next_on_allocation(s, b))
                    .collect();
                if s == DpState::Bad {
                    succ.push(DpState::Bad);
                }
                for n in succ {
                    if seen.insert(n) {
                        next.push(n);
                    }
                }
            }
            frontier = next;
        }
        seen
    }

    /// Good states the mechanism can be in at the start of round `t`.
    pub fn reachable_good_states(&self, t: u64) -> Vec<AvgBidLedger> {
        self.reachable_within(DpState::BORDERLINE, t.saturating_sub(1))
            .into_iter()
            .filter_map(|s| match s {
                DpState::Good(l) => Some(l),
                DpState::Bad => None,
            })
            .collect()
    }

    /// Second evaluation route: layered closure over every state reachable
    /// from `root`, walking states in descending order. Independent of the
    /// memo table.
    pub fn bottom_up_value(&self, root: DpState, ell: u64) -> BigRational {
        let mut table: BTreeMap<(DpState, u64), BigRational> = BTreeMap::new();
        for layer in 0..=ell {
            let states = self.reachable_within(root, ell - layer);
            for &s in states.iter().rev() {
                let lookup = |st: DpState| table.get(&(st, layer - 1)).cloned().expect("previous layer computed");
                let mut terms = Vec::new();
                for bid in self.candidate_bids(s).into_iter().rev() {
                    let q = self.allocation_probability(s, bid);
                    let mut c = BigRational::zero();
                    if layer > 0 {
                        if !q.is_zero() {
                            c += &q * lookup(self.next_on_allocation(s, bid));
                        }
                        let miss = BigRational::one() - &q;
                        if !miss.is_zero() {
                            c += miss * lookup(s);
                        }
                    }
                    terms.push((bid, q, c));
                }
                let mut total = BigRational::zero();
                for (v, p) in self.values.iter().rev() {
                    let vb = v.to_big();
                    let best = terms.iter().map(|(b, q, c)| q * (&vb - b.to_big()) + c).max().expect("non-empty");
                    total += p * best;
                }
                table.insert((s, layer), total);
            }
        }
        table.remove(&(root, ell)).expect("root computed")
    }
}

/// Parameters echoed in every verification report.
#[derive(Clone, Debug, Serialize)]
pub struct InstanceSummary {
    pub mechanism: String,
    pub epsilon: String,
    pub rho: String,
    pub price: Money,
    pub horizon: u64,
    pub grid_points: usize,
    pub mean: Money,
}

#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub round: u64,
    pub k: u64,
    pub state: String,
    pub value: Money,
    pub bid: Option<Money>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub instance: InstanceSummary,
    pub cases: u64,
    pub violations: Vec<Witness>,
}

impl VerificationReport {
    fn new(check: &str, oracle: &LookaheadOracle, grid_points: usize) -> Self {
        let p = oracle.mech.params();
        Self {
            check: check.to_string(),
            instance: InstanceSummary {
                mechanism: oracle.mech.kind().name().to_string(),
                epsilon: p.epsilon.to_string(),
                rho: p.rho.to_string(),
                price: p.price,
                horizon: p.horizon,
                grid_points,
                mean: p.mean,
            },
            cases: 0,
            violations: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn grid_points(oracle: &LookaheadOracle) -> usize {
    oracle.values.len()
}

/// Every reachable good state, grid value, `k` in `ks` and round `t < T`:
/// the optimal bid must keep the next state good.
pub fn verify_good_persistence(oracle: &mut LookaheadOracle, ks: &[u64]) -> VerificationReport {
    let mut report = VerificationReport::new("good_persistence", oracle, grid_points(oracle));
    let horizon = oracle.horizon;
    let values: Vec<Money> = oracle.values().collect();
    for t in 1..horizon {
        for ledger in oracle.reachable_good_states(t) {
            let state = DpState::Good(ledger);
            for &k in ks {
                let ell = k.min(horizon - t);
                for &v in &values {
                    let choice = oracle.best_at(state, v, ell);
                    report.cases += 1;
                    if oracle.next_on_allocation(state, choice.bid) == DpState::Bad {
                        report.violations.push(Witness {
                            round: t,
                            k,
                            state: state.describe(),
                            value: v,
                            bid: Some(choice.bid),
                            detail: format!("optimal bid leads to a bad state (utility {})", choice.utility),
                        });
                    }
                }
            }
        }
    }
    report
}

/// Optimal utility from any reachable good state is at least that from the
/// borderline state, for the same value, `k` and round.
pub fn verify_border_dominance(oracle: &mut LookaheadOracle, k: u64, t: u64) -> VerificationReport {
    let mut report = VerificationReport::new("border_dominance", oracle, grid_points(oracle));
    let ell = k.min(oracle.horizon.saturating_sub(t));
    let values: Vec<Money> = oracle.values().collect();
    for ledger in oracle.reachable_good_states(t) {
        let state = DpState::Good(ledger);
        for &v in &values {
            let here = oracle.best_at(state, v, ell).utility;
            let border = oracle.best_at(DpState::BORDERLINE, v, ell).utility;
            report.cases += 1;
            if here < border {
                report.violations.push(Witness {
                    round: t,
                    k,
                    state: state.describe(),
                    value: v,
                    bid: None,
                    detail: format!("utility {here} below borderline utility {border}"),
                });
            }
        }
    }
    report
}

/// The minimum stay-good bid strictly beats every candidate bid that sends a
/// good state bad.
pub fn verify_delta_positive(oracle: &mut LookaheadOracle, k: u64, t: u64) -> VerificationReport {
    let mut report = VerificationReport::new("delta_positive", oracle, grid_points(oracle));
    let ell = k.min(oracle.horizon.saturating_sub(t));
    let values: Vec<Money> = oracle.values().collect();
    let threshold = oracle.threshold;
    for ledger in oracle.reachable_good_states(t) {
        let state = DpState::Good(ledger);
        let stay_bid = ledger.min_good_bid(threshold);
        let bad_bids: Vec<Money> = oracle
            .candidate_bids(state)
            .into_iter()
            .filter(|&b| oracle.next_on_allocation(state, b) == DpState::Bad)
            .collect();
        for &v in &values {
            let stay = oracle.utility_at(state, v, stay_bid, ell);
            for &b in &bad_bids {
                let other = oracle.utility_at(state, v, b, ell);
                report.cases += 1;
                if stay <= other {
                    report.violations.push(Witness {
                        round: t,
                        k,
                        state: state.describe(),
                        value: v,
                        bid: Some(b),
                        detail: format!("stay-good bid {stay_bid} gives {stay}, bad-transition bid gives {other}"),
                    });
                }
            }
        }
    }
    report
}

/// The DP's optimal bid equals the closed-form stay-good bid on every
/// reachable good state, grid value, `k` in `ks` and round.
pub fn verify_closed_form_bids(oracle: &mut LookaheadOracle, ks: &[u64]) -> VerificationReport {
    let mut report = VerificationReport::new("closed_form_bids", oracle, grid_points(oracle));
    let horizon = oracle.horizon;
    let params = oracle.mech.params().clone();
    let values: Vec<Money> = oracle.values().collect();
    for t in 1..=horizon {
        for ledger in oracle.reachable_good_states(t) {
            let state = DpState::Good(ledger);
            for &k in ks {
                let ell = k.min(horizon - t);
                for &v in &values {
                    let obs = Observation { state_flag: StateFlag::Good, value: v, round: t, rounds_total: horizon };
                    let formula = agents::stay_good_bid(&ledger, &obs, &params);
                    let choice = oracle.best_at(state, v, ell);
                    report.cases += 1;
                    if choice.bid != formula {
                        report.violations.push(Witness {
                            round: t,
                            k,
                            state: state.describe(),
                            value: v,
                            bid: Some(choice.bid),
                            detail: format!("closed form bids {formula}"),
                        });
                    }
                }
            }
        }
    }
    report
}

/// `(1/rho) Pr(X < k) + Pr(X >= k)` for `X ~ Geometric(rho)` on `{1, 2, ...}`,
/// next to `E[min(X, k)]` by direct summation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeometricCheck {
    pub rho: f64,
    pub k: u32,
    pub closed_form: f64,
    pub enumeration: f64,
}

impl GeometricCheck {
    pub fn gap(&self) -> f64 {
        (self.closed_form - self.enumeration).abs()
    }
}

pub fn geometric_truncated_mean(rho: f64, k: u32) -> Result<GeometricCheck> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::param("rho", format!("must lie in (0, 1], got {rho}")));
    }
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let miss = 1.0 - rho;
    let tail = miss.powi(k as i32 - 1);
    let closed_form = (1.0 - tail) / rho + tail;
    let mut enumeration = 0.0;
    let mut survive = 1.0;
    for j in 1..k {
        enumeration += j as f64 * rho * survive;
        survive *= miss;
    }
    enumeration += k as f64 * survive;
    Ok(GeometricCheck { rho, k, closed_form, enumeration })
}

/// Revenue of the myopic buyer against the threshold mechanism, which
/// alternates one good round (bid 0) with a run of bad rounds left with
/// probability `q = rho Pr(v >= p)` per round at payment `p`.
#[derive(Clone, Debug, Serialize)]
pub struct MyopicRevenue {
    pub escape_probability: Money,
    /// Long-run per-round revenue `p q / (1 + q)`.
    pub stationary: Money,
    /// Exact expected per-round revenue over `T` rounds from the borderline state.
    pub finite_horizon: f64,
    /// `rho / (rho + 1) Rev_Mye - 1/T`.
    pub lower_bound: f64,
}

pub fn myopic_markov_revenue(dist: &ValuationDistribution, mech: &Mechanism) -> Result<MyopicRevenue> {
    let params = mech.params();
    let horizon = params.horizon;
    let rho = params.rho;
    let myerson = dist.myerson();
    let lower_bound = fraction_to_f64(rho / (rho + 1)) * myerson.revenue.to_f64() - 1.0 / horizon as f64;
    if mech.kind() == MechanismKind::Warmup {
        return Ok(MyopicRevenue {
            escape_probability: Money::from_ratio(rho),
            stationary: Money::ZERO,
            finite_horizon: 0.0,
            lower_bound,
        });
    }
    if mech.kind() == MechanismKind::Credit {
        return Err(Error::Unsupported("myopic revenue chain is defined for the average-bid mechanisms".into()));
    }
    let price = params.price;
    let q = Money::from_ratio(rho * dist.tail(price)?);
    let stationary = price * (q.ratio() / (q.ratio() + 1));
    let qf = q.to_f64();
    let pf = price.to_f64();
    let mut good = 1.0;
    let mut total = 0.0;
    for _ in 0..horizon {
        let bad = 1.0 - good;
        total += bad * qf * pf;
        good = bad * qf;
    }
    Ok(MyopicRevenue { escape_probability: q, stationary, finite_horizon: total / horizon as f64, lower_bound })
}

/// Exact rational as `f64`, for reports.
pub fn big_to_f64(r: &BigRational) -> f64 {
    crate::money::big_to_f64(r)
}

/// Convenience for tests and examples: a big rational from a small fraction.
pub fn big(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}
