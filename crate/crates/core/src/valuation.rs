//! Buyer value distributions on a discrete money grid, and the one-round
//! Myerson statistics derived from them.

use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::{fraction_from_f64, fraction_to_f64, Fraction, Money};

/// Common denominator used when a continuous law is discretized.
const QUANTUM: i128 = 1 << 40;

/// Tolerance on the total mass of an explicit pmf.
pub const PMF_SUM_TOLERANCE: f64 = 1e-12;

/// Evenly spaced money points `0, tick, 2 tick, ..., max_value`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct MoneyGrid {
    tick: Money,
    max_value: Money,
}

impl MoneyGrid {
    pub fn new(tick: Money, max_value: Money) -> Result<Self> {
        if tick <= Money::ZERO {
            return Err(Error::param("tick", format!("must be positive, got {tick}")));
        }
        if max_value < tick {
            return Err(Error::param("B", format!("must be at least one tick, got {max_value}")));
        }
        if max_value.ticks(tick).is_none() {
            return Err(Error::OffGrid(max_value));
        }
        Ok(Self { tick, max_value })
    }

    /// Grid on `[0, 1]` with `points` equally spaced points.
    pub fn unit(points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::param("grid", "needs at least two points"));
        }
        Self::new(Money::new(1, points as i128 - 1), Money::from_integer(1))
    }

    pub fn tick(&self) -> Money {
        self.tick
    }

    pub fn max_value(&self) -> Money {
        self.max_value
    }

    pub fn len(&self) -> usize {
        self.max_value.ticks(self.tick).expect("grid invariant") as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, index: usize) -> Money {
        Money::from_ticks(index as i128, self.tick)
    }

    pub fn points(&self) -> impl Iterator<Item = Money> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    pub fn index_of(&self, m: Money) -> Result<usize> {
        match m.ticks(self.tick) {
            Some(k) if k >= 0 && (k as usize) < self.len() => Ok(k as usize),
            _ => Err(Error::OffGrid(m)),
        }
    }

    pub fn contains(&self, m: Money) -> bool {
        self.index_of(m).is_ok()
    }
}

/// Config description of a value distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    /// Equal mass on every grid point of `[0, B]`.
    Uniform {
        #[serde(rename = "B")]
        max_value: Money,
        tick: Money,
    },
    /// Exponential law with the given rate truncated to `[0, B]`; each grid
    /// point receives the mass of its rounding cell.
    Exponential {
        #[serde(rename = "B")]
        max_value: Money,
        tick: Money,
        rate: f64,
    },
    /// Density `1/v^2` on `[1, H)` with an atom `1/H` at `H`; each grid point
    /// receives the mass of the cell to its right, so `Pr(v >= p) = 1/p`.
    EqualRevenue {
        #[serde(rename = "H")]
        high: Money,
        tick: Money,
    },
    Point {
        value: Money,
        tick: Money,
        #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
        max_value: Option<Money>,
    },
    /// Masses for the grid points `0, tick, 2 tick, ...` in order.
    Explicit { tick: Money, pmf: Vec<f64> },
}

/// One-round optimal posted-price statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MyersonStats {
    pub price: Money,
    pub revenue: Money,
    /// `Pr(v >= price)`.
    pub tail_at_price: Fraction,
}

#[derive(Clone, Debug)]
pub struct ValuationDistribution {
    grid: MoneyGrid,
    pmf: Vec<Fraction>,
    /// `tails[i] = Pr(v >= grid.point(i))`.
    tails: Vec<Fraction>,
    mean: Money,
    sampler: WeightedIndex<f64>,
    spec: Option<DistributionSpec>,
}

impl PartialEq for ValuationDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.pmf == other.pmf
    }
}

impl ValuationDistribution {
    /// Builds a distribution from exact masses; they must sum to exactly one.
    pub fn from_pmf(grid: MoneyGrid, pmf: Vec<Fraction>) -> Result<Self> {
        if pmf.len() != grid.len() {
            return Err(Error::Distribution(format!(
                "pmf has {} entries but the grid has {} points",
                pmf.len(),
                grid.len()
            )));
        }
        if let Some(neg) = pmf.iter().find(|p| **p < Fraction::zero()) {
            return Err(Error::Distribution(format!("negative mass {neg}")));
        }
        let total: Fraction = pmf.iter().copied().sum();
        if !total.is_one() {
            return Err(Error::Distribution(format!("masses sum to {total}, not 1")));
        }
        let mut tails = vec![Fraction::zero(); pmf.len()];
        let mut acc = Fraction::zero();
        for i in (0..pmf.len()).rev() {
            acc += pmf[i];
            tails[i] = acc;
        }
        let mean = pmf.iter().enumerate().map(|(i, p)| grid.point(i) * *p).sum();
        let weights: Vec<f64> = pmf.iter().map(|p| fraction_to_f64(*p)).collect();
        let sampler = WeightedIndex::new(&weights).map_err(|e| Error::Distribution(format!("cannot sample: {e}")))?;
        Ok(Self { grid, pmf, tails, mean, sampler, spec: None })
    }

    pub fn from_spec(spec: &DistributionSpec) -> Result<Self> {
        let mut dist = match spec {
            DistributionSpec::Uniform { max_value, tick } => Self::uniform(MoneyGrid::new(*tick, *max_value)?),
            DistributionSpec::Exponential { max_value, tick, rate } => {
                Self::truncated_exponential(MoneyGrid::new(*tick, *max_value)?, *rate)
            }
            DistributionSpec::EqualRevenue { high, tick } => Self::equal_revenue(*high, *tick),
            DistributionSpec::Point { value, tick, max_value } => {
                Self::point(*value, MoneyGrid::new(*tick, max_value.unwrap_or(*value))?)
            }
            DistributionSpec::Explicit { tick, pmf } => Self::explicit(*tick, pmf),
        }?;
        dist.spec = Some(spec.clone());
        Ok(dist)
    }

    pub fn uniform(grid: MoneyGrid) -> Result<Self> {
        let n = grid.len() as i128;
        Self::from_pmf(grid, vec![Ratio::new(1, n); grid.len()])
    }

    pub fn point(value: Money, grid: MoneyGrid) -> Result<Self> {
        let at = grid.index_of(value)?;
        let mut pmf = vec![Fraction::zero(); grid.len()];
        pmf[at] = Fraction::one();
        Self::from_pmf(grid, pmf)
    }

    pub fn truncated_exponential(grid: MoneyGrid, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::param("rate", format!("must be positive, got {rate}")));
        }
        let b = grid.max_value().to_f64();
        let half = grid.tick().to_f64() / 2.0;
        let floor = (-rate * b).exp();
        let tail = |i: usize| -> f64 {
            if i == 0 {
                1.0
            } else {
                let x = grid.point(i).to_f64() - half;
                ((-rate * x).exp() - floor) / (1.0 - floor)
            }
        };
        Self::from_tails(grid, tail)
    }

    pub fn equal_revenue(high: Money, tick: Money) -> Result<Self> {
        let grid = MoneyGrid::new(tick, high)?;
        let one = Money::from_integer(1);
        let start = grid.index_of(one).map_err(|_| Error::Distribution("1 must be a grid point".into()))?;
        if high < one {
            return Err(Error::param("H", "must be at least 1"));
        }
        let tail = |i: usize| -> f64 {
            if i <= start {
                1.0
            } else {
                1.0 / grid.point(i).to_f64()
            }
        };
        Self::from_tails(grid, tail)
    }

    pub fn explicit(tick: Money, pmf: &[f64]) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::Distribution("empty pmf".into()));
        }
        if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Distribution("masses must be finite and non-negative".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOLERANCE {
            return Err(Error::Distribution(format!("masses sum to {total}, not 1")));
        }
        let max_value = Money::from_ticks(pmf.len() as i128 - 1, tick);
        let grid = if pmf.len() == 1 {
            // A single atom at zero: widen the grid by one empty point.
            MoneyGrid::new(tick, tick)?
        } else {
            MoneyGrid::new(tick, max_value)?
        };
        let mut exact = pmf.iter().map(|p| fraction_from_f64(*p)).collect::<Result<Vec<_>>>()?;
        exact.resize(grid.len(), Fraction::zero());
        let sum: Fraction = exact.iter().copied().sum();
        if !sum.is_one() {
            exact.iter_mut().for_each(|p| *p /= sum);
        }
        Self::from_pmf(grid, exact)
    }

    /// Quantizes a tail function onto the common dyadic denominator; masses
    /// are differences of consecutive quantized tails so they sum to one
    /// exactly.
    fn from_tails(grid: MoneyGrid, tail: impl Fn(usize) -> f64) -> Result<Self> {
        let n = grid.len();
        let q: Vec<i128> = (0..n)
            .map(|i| if i == 0 { QUANTUM } else { (tail(i).clamp(0.0, 1.0) * QUANTUM as f64).round() as i128 })
            .collect();
        let pmf = (0..n)
            .map(|i| {
                let next = if i + 1 < n { q[i + 1] } else { 0 };
                Ratio::new((q[i] - next).max(0), QUANTUM)
            })
            .collect();
        Self::from_pmf(grid, pmf)
    }

    pub fn grid(&self) -> MoneyGrid {
        self.grid
    }

    pub fn spec(&self) -> Option<&DistributionSpec> {
        self.spec.as_ref()
    }

    pub fn pmf(&self) -> &[Fraction] {
        &self.pmf
    }

    pub fn pmf_at(&self, v: Money) -> Result<Fraction> {
        Ok(self.pmf[self.grid.index_of(v)?])
    }

    /// Grid points with positive mass, with their masses.
    pub fn support(&self) -> impl Iterator<Item = (Money, Fraction)> + '_ {
        self.pmf.iter().enumerate().filter(|(_, p)| !p.is_zero()).map(|(i, p)| (self.grid.point(i), *p))
    }

    pub fn mean(&self) -> Money {
        self.mean
    }

    /// Highest value with positive mass.
    pub fn support_max(&self) -> Money {
        self.support().last().map(|(v, _)| v).unwrap_or(Money::ZERO)
    }

    /// `Pr(v >= p)` for a grid price `p`.
    pub fn tail(&self, p: Money) -> Result<Fraction> {
        Ok(self.tails[self.grid.index_of(p)?])
    }

    /// Revenue-maximizing posted price over the grid, lowest price on ties.
    pub fn myerson(&self) -> MyersonStats {
        let mut best = MyersonStats { price: Money::ZERO, revenue: Money::ZERO, tail_at_price: self.tails[0] };
        for (i, tail) in self.tails.iter().enumerate() {
            let price = self.grid.point(i);
            let revenue = price * *tail;
            if revenue > best.revenue {
                best = MyersonStats { price, revenue, tail_at_price: *tail };
            }
        }
        best
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Money {
        self.grid.point(self.sampler.sample(rng))
    }
}
