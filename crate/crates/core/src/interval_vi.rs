//! Interval value iteration with extreme instantiations.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimation::IntervalMdp;
use crate::mdp::{argmax_by, GrayBoxView, PairId, QualityFunction, StateId, ValueFunction};
use crate::sampling::SamplingStrategy;

/// Lower and upper value functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueBounds {
    pub lower: ValueFunction,
    pub upper: ValueFunction,
}

impl ValueBounds {
    pub fn width(&self, s: StateId) -> f64 {
        self.upper[s] - self.lower[s]
    }
}

/// Lower and upper quality functions. Pairs outside `active` are not
/// available to strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityBounds {
    view: Arc<GrayBoxView>,
    pub lower: QualityFunction,
    pub upper: QualityFunction,
    active: Vec<bool>,
}

impl QualityBounds {
    pub fn new(
        view: Arc<GrayBoxView>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        active: Vec<bool>,
    ) -> Result<Self> {
        let n = view.num_pairs();
        if lower.len() != n || upper.len() != n || active.len() != n {
            return Err(Error::TopologyMismatch);
        }
        Ok(Self {
            view,
            lower: QualityFunction(lower),
            upper: QualityFunction(upper),
            active,
        })
    }

    pub fn view(&self) -> &Arc<GrayBoxView> {
        &self.view
    }

    pub fn is_active(&self, p: PairId) -> bool {
        self.active[p]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    /// Active pairs of `s`.
    pub fn active_pairs(&self, s: StateId) -> impl Iterator<Item = PairId> + '_ {
        self.view.pairs(s).filter(|&p| self.active[p])
    }

    /// Active pair of `s` maximizing `q`, lowest action id on ties.
    pub fn argmax(&self, s: StateId, q: &[f64]) -> Option<PairId> {
        argmax_by(self.active_pairs(s).map(|p| (p, q[p])))
    }

    /// Same bounds with the availability mask replaced.
    pub fn with_active(&self, active: &[bool]) -> Self {
        Self {
            active: active.to_vec(),
            ..self.clone()
        }
    }
}

/// One distribution per pair taken from an interval model, stored per triple.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeInstantiation {
    view: Arc<GrayBoxView>,
    probs: Vec<f64>,
}

impl ExtremeInstantiation {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, t: usize) -> f64 {
        self.probs[t]
    }

    pub fn view(&self) -> &Arc<GrayBoxView> {
        &self.view
    }
}

/// Fills `out` (the triples of `p`) with the instantiation that minimizes
/// (or maximizes) the expectation of `v`: everything at its lower end, then
/// the free mass poured in order of increasing (decreasing) value.
fn pour(
    imdp: &IntervalMdp,
    p: PairId,
    v: &[f64],
    maximize: bool,
    order: &mut Vec<usize>,
    out: &mut [f64],
) -> Result<()> {
    let view = imdp.view();
    let range = view.triples(p);
    let lo = &imdp.lower_bounds()[range.clone()];
    let hi = &imdp.upper_bounds()[range.clone()];
    out.copy_from_slice(lo);
    let lo_sum: f64 = lo.iter().sum();
    let hi_sum: f64 = hi.iter().sum();
    if lo_sum > 1.0 + 1e-12 || hi_sum < 1.0 - 1e-12 {
        return Err(Error::Infeasible {
            state: view.pair_state(p),
            action: view.pair_action(p),
        });
    }
    let mut budget = 1.0 - lo_sum;
    if budget <= 0.0 {
        return Ok(());
    }
    let succ = view.successors(p);
    order.clear();
    order.extend(0..succ.len());
    // Stable insertion sort; successors are already in ascending id order.
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (v[succ[order[j - 1]]], v[succ[order[j]]]);
            let out_of_order = if maximize { a < b } else { a > b };
            if !out_of_order {
                break;
            }
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    for &i in order.iter() {
        let add = (hi[i] - lo[i]).min(budget);
        out[i] += add;
        budget -= add;
        if budget <= 0.0 {
            break;
        }
    }
    Ok(())
}

fn instantiate(imdp: &IntervalMdp, v: &[f64], maximize: bool) -> Result<ExtremeInstantiation> {
    let view = imdp.view();
    if v.len() != view.num_states() {
        return Err(Error::TopologyMismatch);
    }
    let mut probs = vec![0.0; view.num_triples()];
    let mut order = Vec::new();
    for p in 0..view.num_pairs() {
        if imdp.is_active(p) {
            let range = view.triples(p);
            pour(imdp, p, v, maximize, &mut order, &mut probs[range])?;
        }
    }
    Ok(ExtremeInstantiation {
        view: view.clone(),
        probs,
    })
}

/// The instantiation minimizing `Σ V(s')·t(s')` for every active pair.
pub fn minimizing_transitions(imdp: &IntervalMdp, v: &[f64]) -> Result<ExtremeInstantiation> {
    instantiate(imdp, v, false)
}

/// The instantiation maximizing `Σ V(s')·t(s')` for every active pair.
pub fn maximizing_transitions(imdp: &IntervalMdp, v: &[f64]) -> Result<ExtremeInstantiation> {
    instantiate(imdp, v, true)
}

/// True if rewards are 1 or 0 and only goals carry reward 1.
fn is_reachability(view: &GrayBoxView) -> bool {
    (0..view.num_states()).all(|s| {
        let r = view.reward(s);
        r == 0.0 || (r == 1.0 && view.is_goal(s))
    })
}

/// Bounds guaranteed to contain the value of every instantiation.
pub fn safe_initial_bounds(imdp: &IntervalMdp) -> ValueBounds {
    let view = imdp.view();
    let n = view.num_states();
    let r_max = view.rewards().iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let (lo, hi) = if r_max == 0.0 {
        (0.0, 0.0)
    } else if is_reachability(view) {
        (0.0, 1.0)
    } else {
        let b = r_max * n as f64 / view.p_min().powi(n as i32);
        let b = if b.is_finite() { b } else { f64::MAX / 4.0 };
        (-b, b)
    };
    let pinned = |x: f64| -> ValueFunction {
        (0..n)
            .map(|s| if view.is_goal(s) { view.reward(s) } else { x })
            .collect::<Vec<_>>()
            .into()
    };
    ValueBounds {
        lower: pinned(lo),
        upper: pinned(hi),
    }
}

/// Expected value of `v` under `probs` for pair `p`, plus the state reward.
fn backup(view: &GrayBoxView, p: PairId, probs: &[f64], v: &[f64]) -> f64 {
    let r = view.triples(p);
    let mut acc = 0.0;
    for (t, &x) in r.clone().zip(&probs[r]) {
        acc += x * v[view.successor(t)];
    }
    view.reward(view.pair_state(p)) + acc
}

/// Runs `sweeps` Jacobi sweeps of interval value iteration from `init`,
/// keeping the bounds monotone, and returns the final bounds together with
/// quality bounds from the final extreme instantiations.
pub fn compute_bounds(
    imdp: &IntervalMdp,
    sweeps: usize,
    init: &ValueBounds,
) -> Result<(ValueBounds, QualityBounds)> {
    if sweeps == 0 {
        return Err(Error::config("compute_bounds needs at least one sweep"));
    }
    let view = imdp.view().clone();
    let n = view.num_states();
    if init.lower.len() != n || init.upper.len() != n {
        return Err(Error::TopologyMismatch);
    }
    for s in 0..n {
        if !view.is_goal(s) && !view.pairs(s).any(|p| imdp.is_active(p)) {
            return Err(Error::NoActionInScope { state: s });
        }
    }
    let mut lower = init.lower.0.clone();
    let mut upper = init.upper.0.clone();
    for s in view.goals() {
        lower[s] = view.reward(s);
        upper[s] = view.reward(s);
    }
    let mut next_lower = lower.clone();
    let mut next_upper = upper.clone();
    let mut t_min = vec![0.0; view.num_triples()];
    let mut t_max = vec![0.0; view.num_triples()];
    let mut order = Vec::new();

    for _ in 0..sweeps {
        let mut changed = false;
        for s in 0..n {
            if view.is_goal(s) {
                continue;
            }
            let mut w_lo = f64::NEG_INFINITY;
            let mut w_hi = f64::NEG_INFINITY;
            for p in view.pairs(s).filter(|&p| imdp.is_active(p)) {
                let r = view.triples(p);
                pour(imdp, p, &lower, false, &mut order, &mut t_min[r.clone()])?;
                pour(imdp, p, &upper, true, &mut order, &mut t_max[r])?;
                w_lo = w_lo.max(backup(&view, p, &t_min, &lower));
                w_hi = w_hi.max(backup(&view, p, &t_max, &upper));
            }
            let l = lower[s].max(w_lo);
            let u = upper[s].min(w_hi);
            changed |= l != lower[s] || u != upper[s];
            next_lower[s] = l;
            next_upper[s] = u;
        }
        std::mem::swap(&mut lower, &mut next_lower);
        std::mem::swap(&mut upper, &mut next_upper);
        // A sweep that changes nothing is a fixed point of the iteration.
        if !changed {
            break;
        }
    }

    let mut q_lo = vec![f64::NEG_INFINITY; view.num_pairs()];
    let mut q_hi = vec![f64::NEG_INFINITY; view.num_pairs()];
    for p in 0..view.num_pairs() {
        if imdp.is_active(p) {
            let r = view.triples(p);
            pour(imdp, p, &lower, false, &mut order, &mut t_min[r.clone()])?;
            pour(imdp, p, &upper, true, &mut order, &mut t_max[r])?;
            q_lo[p] = backup(&view, p, &t_min, &lower);
            q_hi[p] = backup(&view, p, &t_max, &upper);
        }
    }
    let bounds = ValueBounds {
        lower: ValueFunction(lower),
        upper: ValueFunction(upper),
    };
    let quality = QualityBounds::new(view, q_lo, q_hi, imdp.active_mask().to_vec())?;
    Ok((bounds, quality))
}

/// Deterministic strategies maximizing the lower and the upper quality.
pub fn pessimistic_and_optimistic_strategies(
    qb: &QualityBounds,
) -> Result<(SamplingStrategy, SamplingStrategy)> {
    Ok((
        SamplingStrategy::greedy(qb, &qb.lower)?,
        SamplingStrategy::greedy(qb, &qb.upper)?,
    ))
}
