//! Sampling strategies and run generation.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`). Run `i` of a learner with
//! seed `x` draws from stream `i` of the generator seeded with `x`, so every
//! run is reproducible on its own.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimation::SampleStatistics;
use crate::interval_vi::QualityBounds;
use crate::mdp::{ActionId, ExplicitMdp, GrayBoxView, PairId, Run, StateId};
use crate::scoping::ScopeSet;

/// Generator used for run `run_index` under base seed `seed`.
pub fn run_rng(seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index);
    rng
}

/// Randomized memoryless strategy, one probability per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingStrategy {
    view: Arc<GrayBoxView>,
    probs: Vec<f64>,
}

impl SamplingStrategy {
    /// Uniform over the in-scope actions of every state.
    pub fn uniform(scope: &ScopeSet) -> Self {
        let view = scope.view().clone();
        let mut probs = vec![0.0; view.num_pairs()];
        for s in 0..view.num_states() {
            let k = scope.in_scope(s).count();
            for p in scope.in_scope(s) {
                probs[p] = 1.0 / k as f64;
            }
        }
        Self { view, probs }
    }

    /// Builds a strategy from per-pair probabilities, checking that each
    /// non-goal state carries a distribution.
    pub fn from_pair_probs(view: Arc<GrayBoxView>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != view.num_pairs() {
            return Err(Error::TopologyMismatch);
        }
        for s in 0..view.num_states() {
            if view.is_goal(s) {
                continue;
            }
            let range = view.pairs(s);
            let total: f64 = probs[range.clone()].iter().sum();
            if probs[range].iter().any(|&x| !(0.0..=1.0).contains(&x)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::validation(format!(
                    "strategy of state {s} is not a distribution"
                )));
            }
        }
        Ok(Self { view, probs })
    }

    /// Point mass on the active argmax of `q` in every non-goal state.
    pub fn greedy(qb: &QualityBounds, q: &[f64]) -> Result<Self> {
        let view = qb.view().clone();
        let mut probs = vec![0.0; view.num_pairs()];
        for s in 0..view.num_states() {
            if view.is_goal(s) {
                continue;
            }
            let p = qb.argmax(s, q).ok_or(Error::NoActionInScope { state: s })?;
            probs[p] = 1.0;
        }
        Ok(Self { view, probs })
    }

    pub fn view(&self) -> &Arc<GrayBoxView> {
        &self.view
    }

    pub fn pair_probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, s: StateId, a: ActionId) -> f64 {
        self.view.pair(s, a).map_or(0.0, |p| self.probs[p])
    }

    /// The action chosen with probability one in `s`, if any.
    pub fn choice(&self, s: StateId) -> Option<ActionId> {
        self.view
            .pairs(s)
            .find(|&p| self.probs[p] == 1.0)
            .map(|p| self.view.pair_action(p))
    }

    /// Mask of pairs with positive probability.
    pub fn support_mask(&self) -> Vec<bool> {
        self.probs.iter().map(|&x| x > 0.0).collect()
    }

    fn draw<R: Rng + ?Sized>(&self, s: StateId, rng: &mut R) -> Option<PairId> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = None;
        for p in self.view.pairs(s) {
            if self.probs[p] > 0.0 {
                acc += self.probs[p];
                last = Some(p);
                if u < acc {
                    return Some(p);
                }
            }
        }
        last
    }
}

/// How a sampling strategy treats several actions sharing the best bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// The lowest action id takes all the mass.
    LowestAction,
    /// The mass is split evenly among all maximizers.
    #[default]
    Uniform,
}

impl std::str::FromStr for TieBreak {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest" => Ok(Self::LowestAction),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::config(format!("unknown tie rule `{other}`"))),
        }
    }
}

impl std::fmt::Display for TieBreak {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::LowestAction => "lowest",
            Self::Uniform => "uniform",
        })
    }
}

/// Adds `mass` to the maximizers of `q` among the active pairs of `s`.
fn add_to_best(qb: &QualityBounds, s: StateId, q: &[f64], mass: f64, ties: TieBreak, probs: &mut [f64]) -> Result<()> {
    let best = qb.argmax(s, q).ok_or(Error::NoActionInScope { state: s })?;
    match ties {
        TieBreak::LowestAction => probs[best] += mass,
        TieBreak::Uniform => {
            let top = q[best];
            let k = qb.active_pairs(s).filter(|&p| q[p] == top).count() as f64;
            for p in qb.active_pairs(s).filter(|&p| q[p] == top) {
                probs[p] += mass / k;
            }
        }
    }
    Ok(())
}

/// Point mass on the highest upper quality.
pub fn ucb_strategy(qb: &QualityBounds) -> Result<SamplingStrategy> {
    ucb_strategy_with(qb, TieBreak::LowestAction)
}

/// Highest upper quality, ties resolved by `ties`.
pub fn ucb_strategy_with(qb: &QualityBounds, ties: TieBreak) -> Result<SamplingStrategy> {
    let view = qb.view().clone();
    let mut probs = vec![0.0; view.num_pairs()];
    for s in (0..view.num_states()).filter(|&s| !view.is_goal(s)) {
        add_to_best(qb, s, &qb.upper, 1.0, ties, &mut probs)?;
    }
    Ok(SamplingStrategy { view, probs })
}

/// `epsilon` spread uniformly over active actions, the remaining `1 - epsilon`
/// on the highest lower quality.
pub fn lcb_strategy(qb: &QualityBounds, epsilon: f64) -> Result<SamplingStrategy> {
    lcb_strategy_with(qb, epsilon, TieBreak::LowestAction)
}

/// As [`lcb_strategy`], with ties of the lower quality resolved by `ties`.
pub fn lcb_strategy_with(qb: &QualityBounds, epsilon: f64, ties: TieBreak) -> Result<SamplingStrategy> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::config(format!("epsilon {epsilon} is outside [0, 1]")));
    }
    let view = qb.view().clone();
    let mut probs = vec![0.0; view.num_pairs()];
    for s in (0..view.num_states()).filter(|&s| !view.is_goal(s)) {
        let k = qb.active_pairs(s).count() as f64;
        for p in qb.active_pairs(s) {
            probs[p] = epsilon / k;
        }
        add_to_best(qb, s, &qb.lower, 1.0 - epsilon, ties, &mut probs)?;
    }
    Ok(SamplingStrategy { view, probs })
}

/// Boltzmann weights `exp(Q_lower / tau)` over active actions, one
/// temperature per pair.
pub fn softmax_strategy(qb: &QualityBounds, temperature: &[f64]) -> Result<SamplingStrategy> {
    let view = qb.view().clone();
    if temperature.len() != view.num_pairs() {
        return Err(Error::TopologyMismatch);
    }
    if temperature.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::config("softmax temperatures must be positive"));
    }
    let mut probs = vec![0.0; view.num_pairs()];
    for s in 0..view.num_states() {
        if view.is_goal(s) {
            continue;
        }
        let logits: Vec<(PairId, f64)> = qb
            .active_pairs(s)
            .map(|p| (p, qb.lower[p] / temperature[p]))
            .collect();
        let top = logits
            .iter()
            .map(|&(_, x)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Err(Error::NoActionInScope { state: s });
        }
        let total: f64 = logits.iter().map(|&(_, x)| (x - top).exp()).sum();
        for &(p, x) in &logits {
            probs[p] = (x - top).exp() / total;
        }
    }
    Ok(SamplingStrategy { view, probs })
}

/// Generates one run on the hidden environment and records its steps.
///
/// In every state the lowest in-scope action that was never sampled is taken
/// first; otherwise the action is drawn from `sigma`. The run stops at a goal
/// or after `|S|` steps.
pub fn sample_run<R: Rng + ?Sized>(
    env: &ExplicitMdp,
    sigma: &SamplingStrategy,
    scope: &ScopeSet,
    stats: &mut SampleStatistics,
    rng: &mut R,
) -> Result<Run> {
    let mut run = Run::default();
    sample_run_into(env, sigma, scope, stats, rng, &mut run, None)?;
    Ok(run)
}

pub(crate) fn sample_run_into<R: Rng + ?Sized>(
    env: &ExplicitMdp,
    sigma: &SamplingStrategy,
    scope: &ScopeSet,
    stats: &mut SampleStatistics,
    rng: &mut R,
    run: &mut Run,
    mut visits: Option<&mut [u64]>,
) -> Result<()> {
    let view = env.view();
    let cap = view.num_states();
    run.states.clear();
    run.actions.clear();
    let mut s = view.initial();
    run.states.push(s);
    while !view.is_goal(s) && run.actions.len() < cap {
        let p = match scope.in_scope(s).find(|&p| stats.pair_count(p) == 0) {
            Some(p) => p,
            None => sigma
                .draw(s, rng)
                .filter(|&p| scope.contains(p))
                .or_else(|| scope.in_scope(s).next())
                .ok_or(Error::NoActionInScope { state: s })?,
        };
        let u: f64 = rng.random();
        let range = view.triples(p);
        let mut t = range.end - 1;
        let mut acc = 0.0;
        for i in range {
            acc += env.prob(i);
            if u < acc {
                t = i;
                break;
            }
        }
        stats.record_triple(p, t);
        if let Some(v) = visits.as_deref_mut() {
            v[s] += 1;
        }
        run.actions.push(view.pair_action(p));
        s = view.successor(t);
        run.states.push(s);
    }
    Ok(())
}
