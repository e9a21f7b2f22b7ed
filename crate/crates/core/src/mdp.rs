//! Explicit-state MDPs and the exact computations used as ground truth.
//!
//! A model is stored in compressed form: the actions of a state occupy a
//! contiguous range of *pairs*, and the successors of a pair occupy a
//! contiguous range of *triples*. Successors inside a pair are sorted by
//! ascending state id. Every per-pair or per-triple quantity in the crate
//! (counts, intervals, strategies, qualities) is a flat vector indexed the
//! same way.

use std::ops::{Deref, DerefMut, Range};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sampling::SamplingStrategy;
use crate::scoping::ScopeSet;

/// Dense index of a state.
pub type StateId = usize;
/// Index of an action local to its state (`0..num_actions(s)`).
pub type ActionId = usize;
/// Global index of an enabled state-action pair.
pub type PairId = usize;

/// Tolerance for distributions summing to one.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// Sum check with slack for the rounding of the sum itself.
pub(crate) fn sums_to_one(total: f64) -> bool {
    (total - 1.0).abs() <= PROB_TOLERANCE * (1.0 + 1e-6)
}

/// Residual used by the exact oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-9;
pub const ORACLE_MAX_ITERS: usize = 1_000_000;

/// A finite distribution over states with strictly positive support.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    support: Vec<(StateId, f64)>,
}

impl Distribution {
    pub fn new(mut support: Vec<(StateId, f64)>) -> Result<Self> {
        support.sort_by_key(|&(s, _)| s);
        if support.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::validation("distribution lists a state twice"));
        }
        if let Some(&(s, p)) = support.iter().find(|&&(_, p)| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::validation(format!(
                "probability {p} of state {s} is outside (0, 1]"
            )));
        }
        let total: f64 = support.iter().map(|&(_, p)| p).sum();
        if !sums_to_one(total) {
            return Err(Error::validation(format!(
                "distribution sum {total} differs from 1"
            )));
        }
        Ok(Self { support })
    }

    pub fn point(s: StateId) -> Self {
        Self {
            support: vec![(s, 1.0)],
        }
    }

    pub fn support(&self) -> &[(StateId, f64)] {
        &self.support
    }

    pub fn prob(&self, s: StateId) -> f64 {
        self.support
            .binary_search_by_key(&s, |&(t, _)| t)
            .map(|i| self.support[i].1)
            .unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// Per-state values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(pub Vec<f64>);

impl Deref for ValueFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ValueFunction {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ValueFunction {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Per-pair values (indexed by [`PairId`]).
#[derive(Debug, Clone, PartialEq)]
pub struct QualityFunction(pub Vec<f64>);

impl Deref for QualityFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for QualityFunction {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Everything about an MDP except its transition probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayBoxView {
    name: String,
    initial: StateId,
    p_min: f64,
    rewards: Vec<f64>,
    goals: Vec<bool>,
    state_start: Vec<PairId>,
    pair_start: Vec<usize>,
    pair_state: Vec<StateId>,
    labels: Vec<String>,
    successors: Vec<StateId>,
}

impl GrayBoxView {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.pair_state.len()
    }

    pub fn num_triples(&self) -> usize {
        self.successors.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn reward(&self, s: StateId) -> f64 {
        self.rewards[s]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn is_goal(&self, s: StateId) -> bool {
        self.goals[s]
    }

    pub fn goals(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.num_states()).filter(|&s| self.goals[s])
    }

    /// Pair ids of the actions enabled in `s`.
    pub fn pairs(&self, s: StateId) -> Range<PairId> {
        self.state_start[s]..self.state_start[s + 1]
    }

    pub fn num_actions(&self, s: StateId) -> usize {
        self.state_start[s + 1] - self.state_start[s]
    }

    pub fn pair(&self, s: StateId, a: ActionId) -> Option<PairId> {
        (a < self.num_actions(s)).then(|| self.state_start[s] + a)
    }

    pub fn pair_state(&self, p: PairId) -> StateId {
        self.pair_state[p]
    }

    pub fn pair_action(&self, p: PairId) -> ActionId {
        p - self.state_start[self.pair_state[p]]
    }

    pub fn label(&self, p: PairId) -> &str {
        &self.labels[p]
    }

    /// Triple indices of the successors of pair `p`.
    pub fn triples(&self, p: PairId) -> Range<usize> {
        self.pair_start[p]..self.pair_start[p + 1]
    }

    /// `Post(s, a)` of a pair, sorted ascending.
    pub fn successors(&self, p: PairId) -> &[StateId] {
        &self.successors[self.triples(p)]
    }

    pub fn successor(&self, triple: usize) -> StateId {
        self.successors[triple]
    }

    /// Global triple index of `(p, succ)`, if `succ ∈ Post(p)`.
    pub fn triple(&self, p: PairId, succ: StateId) -> Option<usize> {
        let range = self.triples(p);
        self.successors[range.clone()]
            .binary_search(&succ)
            .ok()
            .map(|i| range.start + i)
    }

    pub fn is_probabilistic(&self, p: PairId) -> bool {
        self.triples(p).len() > 1
    }

    /// True iff goals are reached almost surely from every reachable state
    /// under every strategy.
    pub fn is_contracting(&self) -> bool {
        self.trapping_states(None).is_empty()
    }

    /// Reachable non-goal states in which some strategy restricted to the
    /// allowed pairs can keep a run forever. Empty iff contracting.
    pub(crate) fn trapping_states(&self, allowed: Option<&[bool]>) -> Vec<StateId> {
        let enabled = |p: PairId| allowed.is_none_or(|a| a[p]);
        let n = self.num_states();
        let mut reachable = vec![false; n];
        let mut stack = vec![self.initial];
        reachable[self.initial] = true;
        while let Some(s) = stack.pop() {
            for p in self.pairs(s).filter(|&p| enabled(p)) {
                for &t in self.successors(p) {
                    if !reachable[t] {
                        reachable[t] = true;
                        stack.push(t);
                    }
                }
            }
        }
        // Greatest set of non-goal states closed under some action choice.
        let mut inside: Vec<bool> = (0..n).map(|s| reachable[s] && !self.goals[s]).collect();
        loop {
            let mut changed = false;
            for s in 0..n {
                if !inside[s] {
                    continue;
                }
                let can_stay = self
                    .pairs(s)
                    .filter(|&p| enabled(p))
                    .any(|p| self.successors(p).iter().all(|&t| inside[t]));
                if !can_stay {
                    inside[s] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        (0..n).filter(|&s| inside[s]).collect()
    }
}

/// An MDP with known transition probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitMdp {
    view: Arc<GrayBoxView>,
    probs: Vec<f64>,
}

impl ExplicitMdp {
    pub fn view(&self) -> &Arc<GrayBoxView> {
        &self.view
    }

    /// Probabilities, indexed by triple.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, triple: usize) -> f64 {
        self.probs[triple]
    }

    pub fn transition(&self, p: PairId) -> Distribution {
        let v = &self.view;
        Distribution {
            support: v
                .triples(p)
                .map(|t| (v.successor(t), self.probs[t]))
                .collect(),
        }
    }

    /// Smallest positive transition probability.
    pub fn min_probability(&self) -> f64 {
        self.probs.iter().copied().fold(1.0, f64::min)
    }

    pub fn num_states(&self) -> usize {
        self.view.num_states()
    }

    pub fn initial(&self) -> StateId {
        self.view.initial()
    }

    /// Copy with every transition probability replaced by `probs`.
    /// The result is validated like a freshly built model.
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != self.probs.len() {
            return Err(Error::TopologyMismatch);
        }
        let m = Self {
            view: self.view.clone(),
            probs,
        };
        m.validate_probs()?;
        Ok(m)
    }

    /// Same model with a different declared `p_min`.
    pub fn with_p_min(&self, p_min: f64) -> Result<Self> {
        let mut view = (*self.view).clone();
        view.p_min = p_min;
        let m = Self {
            view: Arc::new(view),
            probs: self.probs.clone(),
        };
        m.validate_probs()?;
        Ok(m)
    }

    fn validate_probs(&self) -> Result<()> {
        let v = &self.view;
        if !(v.p_min > 0.0 && v.p_min <= 1.0) {
            return Err(Error::validation(format!(
                "p_min {} is outside (0, 1]",
                v.p_min
            )));
        }
        for p in 0..v.num_pairs() {
            let s = v.pair_state(p);
            let mut total = 0.0;
            for t in v.triples(p) {
                let prob = self.probs[t];
                if !(prob > 0.0 && prob <= 1.0) {
                    return Err(Error::validation(format!(
                        "probability {prob} of transition ({s}, {}, {}) is outside (0, 1]",
                        v.label(p),
                        v.successor(t)
                    )));
                }
                if prob < v.p_min {
                    return Err(Error::validation(format!(
                        "p_min violated: transition ({s}, {}, {}) has probability {prob} < {}",
                        v.label(p),
                        v.successor(t),
                        v.p_min
                    )));
                }
                total += prob;
            }
            if !sums_to_one(total) {
                return Err(Error::validation(format!(
                    "distribution sum of state {s}, action {} is {total}, not 1",
                    v.label(p)
                )));
            }
        }
        Ok(())
    }
}

/// Incremental constructor for [`ExplicitMdp`].
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    name: String,
    initial: StateId,
    p_min: f64,
    rewards: Vec<f64>,
    goals: Vec<bool>,
    actions: Vec<Vec<(String, Vec<(StateId, f64)>)>>,
}

impl MdpBuilder {
    pub fn new(name: impl Into<String>, num_states: usize, initial: StateId, p_min: f64) -> Self {
        Self {
            name: name.into(),
            initial,
            p_min,
            rewards: vec![0.0; num_states],
            goals: vec![false; num_states],
            actions: vec![Vec::new(); num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn set_p_min(&mut self, p_min: f64) -> &mut Self {
        self.p_min = p_min;
        self
    }

    pub fn reward(&mut self, s: StateId, r: f64) -> &mut Self {
        self.rewards[s] = r;
        self
    }

    pub fn goal(&mut self, s: StateId) -> &mut Self {
        self.goals[s] = true;
        self
    }

    /// Adds an action; returns its local [`ActionId`].
    pub fn action(
        &mut self,
        s: StateId,
        label: impl Into<String>,
        dist: Vec<(StateId, f64)>,
    ) -> ActionId {
        self.actions[s].push((label.into(), dist));
        self.actions[s].len() - 1
    }

    /// Merges `(succ, prob)` into the distribution of an existing action,
    /// adding probabilities of repeated successors.
    pub fn add_mass(&mut self, s: StateId, a: ActionId, succ: StateId, prob: f64) {
        let dist = &mut self.actions[s][a].1;
        match dist.iter_mut().find(|(t, _)| *t == succ) {
            Some((_, p)) => *p += prob,
            None => dist.push((succ, prob)),
        }
    }

    pub fn build(self) -> Result<ExplicitMdp> {
        let n = self.rewards.len();
        if n == 0 {
            return Err(Error::validation("model has no states"));
        }
        if self.initial >= n {
            return Err(Error::validation(format!(
                "initial state {} out of range (states={n})",
                self.initial
            )));
        }
        if let Some(s) = self.rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::validation(format!("reward of state {s} is not finite")));
        }
        let mut state_start = Vec::with_capacity(n + 1);
        let mut pair_start = vec![0];
        let mut pair_state = Vec::new();
        let mut labels = Vec::new();
        let mut successors = Vec::new();
        let mut probs = Vec::new();
        for (s, actions) in self.actions.into_iter().enumerate() {
            state_start.push(pair_state.len());
            if self.goals[s] && !actions.is_empty() {
                return Err(Error::validation(format!(
                    "goal state {s} has enabled actions"
                )));
            }
            if !self.goals[s] && actions.is_empty() {
                return Err(Error::validation(format!(
                    "non-goal state {s} has no enabled action"
                )));
            }
            for (i, (label, mut dist)) in actions.into_iter().enumerate() {
                if label.is_empty() || label.chars().any(|c| c.is_whitespace() || c == '#') {
                    return Err(Error::validation(format!(
                        "action label {label:?} of state {s} must be a non-empty token"
                    )));
                }
                if labels[labels.len() - i..].contains(&label) {
                    return Err(Error::validation(format!(
                        "state {s} declares action {label:?} twice"
                    )));
                }
                if dist.is_empty() {
                    return Err(Error::validation(format!(
                        "action {label:?} of state {s} has no successor"
                    )));
                }
                dist.sort_by_key(|&(t, _)| t);
                for w in dist.windows(2) {
                    if w[0].0 == w[1].0 {
                        return Err(Error::validation(format!(
                            "duplicate transition ({s}, {label}, {})",
                            w[0].0
                        )));
                    }
                }
                for &(t, p) in &dist {
                    if t >= n {
                        return Err(Error::validation(format!(
                            "successor {t} of state {s} out of range (states={n})"
                        )));
                    }
                    successors.push(t);
                    probs.push(p);
                }
                pair_state.push(s);
                labels.push(label);
                pair_start.push(successors.len());
            }
        }
        state_start.push(pair_state.len());
        let view = GrayBoxView {
            name: self.name,
            initial: self.initial,
            p_min: self.p_min,
            rewards: self.rewards,
            goals: self.goals,
            state_start,
            pair_start,
            pair_state,
            labels,
            successors,
        };
        let mdp = ExplicitMdp {
            view: Arc::new(view),
            probs,
        };
        mdp.validate_probs()?;
        Ok(mdp)
    }
}

/// A finite run `s0 a0 s1 a1 ... sn`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Run {
    pub states: Vec<StateId>,
    pub actions: Vec<ActionId>,
}

impl Run {
    /// Number of action steps.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn last_state(&self) -> Option<StateId> {
        self.states.last().copied()
    }

    /// Checks the run is well formed in `view`.
    pub fn is_valid_in(&self, view: &GrayBoxView) -> bool {
        if self.states.len() != self.actions.len() + 1 || self.states[0] != view.initial() {
            return false;
        }
        self.actions.iter().enumerate().all(|(i, &a)| {
            let s = self.states[i];
            !view.is_goal(s)
                && view
                    .pair(s, a)
                    .is_some_and(|p| view.triple(p, self.states[i + 1]).is_some())
        })
    }
}

/// Outcome of a Bellman iteration: the last iterate and its residual.
pub(crate) struct Iterate {
    pub values: ValueFunction,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Iterate {
    fn into_result(self) -> Result<ValueFunction> {
        if self.converged {
            Ok(self.values)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }
}

/// Bellman iteration with per-triple probabilities `probs`. `weights` fixes
/// a randomized strategy (per pair) instead of maximizing; `mask` restricts
/// the maximum to allowed pairs.
pub(crate) fn bellman_iterate(
    view: &GrayBoxView,
    probs: &[f64],
    weights: Option<&[f64]>,
    mask: Option<&[bool]>,
    tolerance: f64,
    max_iters: usize,
) -> Result<Iterate> {
    let n = view.num_states();
    let mut v: Vec<f64> = (0..n)
        .map(|s| if view.is_goal(s) { view.reward(s) } else { 0.0 })
        .collect();
    let mut next = v.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        residual = 0.0;
        for s in 0..n {
            if view.is_goal(s) {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            let mut mixed = 0.0;
            for p in view.pairs(s) {
                if mask.is_some_and(|m| !m[p]) {
                    continue;
                }
                let q: f64 = view.triples(p).map(|t| probs[t] * v[view.successor(t)]).sum();
                match weights {
                    Some(w) => mixed += w[p] * q,
                    None => best = best.max(q),
                }
            }
            let value = view.reward(s) + if weights.is_some() { mixed } else { best };
            if value == f64::NEG_INFINITY {
                return Err(Error::NoActionInScope { state: s });
            }
            residual = residual.max((value - v[s]).abs());
            next[s] = value;
        }
        std::mem::swap(&mut v, &mut next);
        if residual <= tolerance {
            return Ok(Iterate {
                values: ValueFunction(v),
                residual,
                iterations,
                converged: true,
            });
        }
    }
    Ok(Iterate {
        values: ValueFunction(v),
        residual,
        iterations,
        converged: false,
    })
}

fn check_tolerance(tolerance: f64) -> Result<()> {
    if tolerance > 0.0 {
        Ok(())
    } else {
        Err(Error::config("tolerance must be positive"))
    }
}

/// Optimal expected total reward until reaching a goal.
pub fn exact_value_iteration(
    mdp: &ExplicitMdp,
    tolerance: f64,
    max_iters: usize,
) -> Result<ValueFunction> {
    check_tolerance(tolerance)?;
    bellman_iterate(&mdp.view, &mdp.probs, None, None, tolerance, max_iters)?.into_result()
}

/// Optimal value when only the in-scope actions of `scope` may be used.
pub fn optimal_value_within(
    mdp: &ExplicitMdp,
    scope: &ScopeSet,
    tolerance: f64,
    max_iters: usize,
) -> Result<ValueFunction> {
    check_tolerance(tolerance)?;
    if scope.mask().len() != mdp.view.num_pairs() {
        return Err(Error::TopologyMismatch);
    }
    bellman_iterate(&mdp.view, &mdp.probs, None, Some(scope.mask()), tolerance, max_iters)?
        .into_result()
}

/// Expected total reward of a fixed randomized strategy.
pub fn exact_policy_evaluation(
    mdp: &ExplicitMdp,
    sigma: &SamplingStrategy,
    tolerance: f64,
    max_iters: usize,
) -> Result<ValueFunction> {
    if sigma.pair_probs().len() != mdp.view.num_pairs() {
        return Err(Error::TopologyMismatch);
    }
    check_tolerance(tolerance)?;
    bellman_iterate(&mdp.view, &mdp.probs, Some(sigma.pair_probs()), None, tolerance, max_iters)?
        .into_result()
}

/// `Q(s, a) = R(s) + Σ V(s')·T(s, a, s')` for every pair.
pub fn quality_from_value(mdp: &ExplicitMdp, v: &[f64]) -> QualityFunction {
    let view = &mdp.view;
    QualityFunction(
        (0..view.num_pairs())
            .map(|p| {
                let s = view.pair_state(p);
                view.reward(s)
                    + view
                        .triples(p)
                        .map(|t| mdp.probs[t] * v[view.successor(t)])
                        .sum::<f64>()
            })
            .collect(),
    )
}

pub fn check_contracting(mdp: &ExplicitMdp) -> bool {
    mdp.view.is_contracting()
}

/// Index of the maximum, lowest index winning ties.
pub(crate) fn argmax_by(values: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in values {
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}
