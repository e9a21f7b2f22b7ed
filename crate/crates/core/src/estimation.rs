//! Sample counts and Hoeffding confidence intervals.

use std::sync::Arc;

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::mdp::{ActionId, ExplicitMdp, GrayBoxView, PairId, StateId};
use crate::model_io::count_probabilistic_transitions;
use crate::scoping::ScopeSet;

/// Visit counts `#(s,a)` per pair and `#(s,a,s')` per triple.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStatistics {
    view: Arc<GrayBoxView>,
    pair_counts: Vec<u64>,
    triple_counts: Vec<u64>,
}

impl SampleStatistics {
    pub fn new(view: Arc<GrayBoxView>) -> Self {
        Self {
            pair_counts: vec![0; view.num_pairs()],
            triple_counts: vec![0; view.num_triples()],
            view,
        }
    }

    pub fn view(&self) -> &Arc<GrayBoxView> {
        &self.view
    }

    pub fn record_step(&mut self, s: StateId, a: ActionId, succ: StateId) -> Result<()> {
        let unknown = Error::UnknownTransition {
            state: s,
            action: a,
            successor: succ,
        };
        if s >= self.view.num_states() {
            return Err(unknown);
        }
        let Some(p) = self.view.pair(s, a) else {
            return Err(unknown);
        };
        let Some(t) = self.view.triple(p, succ) else {
            return Err(unknown);
        };
        self.record_triple(p, t);
        Ok(())
    }

    pub(crate) fn record_triple(&mut self, p: PairId, t: usize) {
        self.pair_counts[p] += 1;
        self.triple_counts[t] += 1;
    }

    pub fn pair_count(&self, p: PairId) -> u64 {
        self.pair_counts[p]
    }

    pub fn triple_count(&self, t: usize) -> u64 {
        self.triple_counts[t]
    }

    pub fn pair_counts(&self) -> &[u64] {
        &self.pair_counts
    }

    pub fn triple_counts(&self) -> &[u64] {
        &self.triple_counts
    }

    /// Total number of recorded steps.
    pub fn total_steps(&self) -> u64 {
        self.pair_counts.iter().sum()
    }
}

/// `sqrt(ln(eta / 2) / (-2 n))`.
pub fn hoeffding_radius(n: u64, eta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::NoSamples);
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::config(format!("eta {eta} is outside (0, 1)")));
    }
    Ok(((eta / 2.0).ln() / (-2.0 * n as f64)).sqrt())
}

/// Per-triple probability intervals over a fixed topology. Scoped-out pairs
/// carry `[0, 0]` on all their triples.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMdp {
    view: Arc<GrayBoxView>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    active: Vec<bool>,
}

impl IntervalMdp {
    /// Every probabilistic triple `[p_min, 1]`, every deterministic one
    /// `[1, 1]`, all pairs in scope.
    pub fn initial(view: Arc<GrayBoxView>) -> Self {
        let scope = ScopeSet::full(view.clone());
        Self::from_counts(&SampleStatistics::new(view), &scope, 0.5)
    }

    /// Builds a model from explicit bounds. Pairs with `active[p] == false`
    /// are forced to `[0, 0]`.
    pub fn from_bounds(
        view: Arc<GrayBoxView>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        active: Vec<bool>,
    ) -> Result<Self> {
        if lo.len() != view.num_triples()
            || hi.len() != view.num_triples()
            || active.len() != view.num_pairs()
        {
            return Err(Error::TopologyMismatch);
        }
        let mut m = Self {
            view,
            lo,
            hi,
            active,
        };
        for p in 0..m.view.num_pairs() {
            if !m.active[p] {
                for t in m.view.triples(p) {
                    m.lo[t] = 0.0;
                    m.hi[t] = 0.0;
                }
            } else {
                for t in m.view.triples(p) {
                    if !(0.0 <= m.lo[t] && m.lo[t] <= m.hi[t] && m.hi[t] <= 1.0) {
                        return Err(Error::Infeasible {
                            state: m.view.pair_state(p),
                            action: m.view.pair_action(p),
                        });
                    }
                }
            }
        }
        Ok(m)
    }

    /// Point intervals at the true probabilities of `mdp`.
    pub fn point(mdp: &ExplicitMdp) -> Self {
        let view = mdp.view().clone();
        Self {
            active: vec![true; view.num_pairs()],
            lo: mdp.probs().to_vec(),
            hi: mdp.probs().to_vec(),
            view,
        }
    }

    /// Hoeffding intervals with per-transition error tolerance `eta`.
    pub(crate) fn from_counts(stats: &SampleStatistics, scope: &ScopeSet, eta: f64) -> Self {
        let view = stats.view.clone();
        let p_min = view.p_min();
        let mut lo = vec![0.0; view.num_triples()];
        let mut hi = vec![0.0; view.num_triples()];
        for p in 0..view.num_pairs() {
            if !scope.contains(p) {
                continue;
            }
            let triples = view.triples(p);
            if triples.len() == 1 {
                lo[triples.start] = 1.0;
                hi[triples.start] = 1.0;
                continue;
            }
            let n = stats.pair_counts[p];
            if n == 0 {
                lo[triples.clone()].fill(p_min);
                hi[triples].fill(1.0);
                continue;
            }
            let c = hoeffding_radius(n, eta).expect("n >= 1 and eta in (0, 1)");
            for t in triples.clone() {
                let freq = stats.triple_counts[t] as f64 / n as f64;
                lo[t] = (freq - c).clamp(p_min, 1.0);
                hi[t] = (freq + c).clamp(p_min, 1.0);
            }
            let lo_sum: f64 = lo[triples.clone()].iter().sum();
            if lo_sum > 1.0 {
                // Only possible when the sample lies outside the confidence
                // region; widening the lower ends keeps the set non-empty.
                warn!(
                    "intervals of state {}, action {} admit no distribution; lower ends reset to p_min",
                    view.pair_state(p),
                    view.label(p)
                );
                lo[triples].fill(p_min);
            }
        }
        Self {
            active: scope.mask().to_vec(),
            view,
            lo,
            hi,
        }
    }

    pub fn view(&self) -> &Arc<GrayBoxView> {
        &self.view
    }

    pub fn lo(&self, t: usize) -> f64 {
        self.lo[t]
    }

    pub fn hi(&self, t: usize) -> f64 {
        self.hi[t]
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.lo
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.hi
    }

    pub fn is_active(&self, p: PairId) -> bool {
        self.active[p]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    /// `Σ lo ≤ 1 ≤ Σ hi` for an active pair.
    pub fn is_feasible(&self, p: PairId) -> bool {
        let r = self.view.triples(p);
        let lo: f64 = self.lo[r.clone()].iter().sum();
        let hi: f64 = self.hi[r].iter().sum();
        lo <= 1.0 + 1e-12 && hi >= 1.0 - 1e-12
    }

    /// Same intervals with only the pairs in `keep` active.
    pub fn restricted(&self, keep: &[bool]) -> Self {
        let mut m = self.clone();
        for p in 0..self.view.num_pairs() {
            if !keep[p] && m.active[p] {
                m.active[p] = false;
                for t in self.view.triples(p) {
                    m.lo[t] = 0.0;
                    m.hi[t] = 0.0;
                }
            }
        }
        m
    }
}

/// Error tolerance per transition, `delta / N_t`. `None` for deterministic
/// models.
pub fn transition_tolerance(view: &GrayBoxView, delta: f64) -> Option<f64> {
    let nt = count_probabilistic_transitions(view);
    (nt > 0).then(|| delta / nt as f64)
}

/// Rebuilds the interval model from `stats`, spreading `delta` uniformly over
/// the probabilistic transitions. Pairs outside `scope` stay `[0, 0]`.
pub fn update_prob_intervals(
    stats: &SampleStatistics,
    scope: &ScopeSet,
    delta: f64,
) -> Result<IntervalMdp> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(format!("delta {delta} is outside (0, 1)")));
    }
    if !Arc::ptr_eq(stats.view(), scope.view()) && **stats.view() != **scope.view() {
        return Err(Error::TopologyMismatch);
    }
    let eta = transition_tolerance(&stats.view, delta).unwrap_or_else(|| {
        debug!("model is deterministic; intervals are points");
        delta
    });
    Ok(IntervalMdp::from_counts(stats, scope, eta))
}

/// True iff every true probability lies in its interval.
pub fn contains_truth(imdp: &IntervalMdp, mdp: &ExplicitMdp) -> Result<bool> {
    if imdp.lo.len() != mdp.probs().len() || imdp.active.len() != mdp.view().num_pairs() {
        return Err(Error::TopologyMismatch);
    }
    let v = &imdp.view;
    Ok((0..v.num_pairs()).filter(|&p| imdp.active[p]).all(|p| {
        v.triples(p)
            .all(|t| imdp.lo[t] <= mdp.prob(t) && mdp.prob(t) <= imdp.hi[t])
    }))
}
