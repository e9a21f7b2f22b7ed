//! Action scopes and their reduction after each episode.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimation::{transition_tolerance, IntervalMdp, SampleStatistics};
use crate::interval_vi::{QualityBounds, ValueBounds};
use crate::mdp::{bellman_iterate, GrayBoxView, PairId, QualityFunction, StateId};

/// The set of pairs still available to the learner. Removal is permanent.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeSet {
    view: Arc<GrayBoxView>,
    mask: Vec<bool>,
    len: usize,
}

impl ScopeSet {
    pub fn full(view: Arc<GrayBoxView>) -> Self {
        let len = view.num_pairs();
        Self {
            mask: vec![true; len],
            view,
            len,
        }
    }

    pub fn view(&self) -> &Arc<GrayBoxView> {
        &self.view
    }

    pub fn contains(&self, p: PairId) -> bool {
        self.mask[p]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Number of in-scope pairs.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn in_scope(&self, s: StateId) -> impl Iterator<Item = PairId> + '_ {
        self.view.pairs(s).filter(|&p| self.mask[p])
    }

    /// Removes `p`; refuses to empty a state.
    pub fn remove(&mut self, p: PairId) -> Result<bool> {
        if !self.mask[p] {
            return Ok(false);
        }
        let s = self.view.pair_state(p);
        if self.in_scope(s).count() == 1 {
            return Err(Error::NoActionInScope { state: s });
        }
        self.mask[p] = false;
        self.len -= 1;
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScopeMode {
    #[default]
    Off,
    Conservative,
    Eager,
}

impl FromStr for ScopeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" | "none" => Ok(Self::Off),
            "cons" | "conservative" => Ok(Self::Conservative),
            "eager" => Ok(Self::Eager),
            other => Err(Error::config(format!("unknown scope mode `{other}`"))),
        }
    }
}

impl fmt::Display for ScopeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Off => "off",
            Self::Conservative => "cons",
            Self::Eager => "eager",
        })
    }
}

/// Per-transition error tolerance `h` of the scoping model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Tolerance {
    Fixed(f64),
    /// The same tolerance as the learner's intervals.
    #[default]
    DeltaOverNt,
}

impl Tolerance {
    pub fn resolve(&self, view: &GrayBoxView, delta: f64) -> f64 {
        match *self {
            Self::Fixed(h) => h,
            Self::DeltaOverNt => transition_tolerance(view, delta).unwrap_or(delta),
        }
    }
}

impl FromStr for Tolerance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::DeltaOverNt);
        }
        let h: f64 = s
            .parse()
            .map_err(|_| Error::config(format!("invalid tolerance `{s}`")))?;
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::config(format!("tolerance {h} is outside (0, 1)")));
        }
        Ok(Self::Fixed(h))
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(h) => write!(f, "{h}"),
            Self::DeltaOverNt => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScopeConfig {
    pub mode: ScopeMode,
    pub h: Tolerance,
}

/// Iteration limits for the maximum-likelihood model.
const MEAN_TOLERANCE: f64 = 1e-9;
const MEAN_MAX_ITERS: usize = 100_000;

/// Maximum-likelihood transition estimates: frequencies where a pair was
/// sampled, uniform over its successors otherwise.
pub fn max_likelihood_probs(stats: &SampleStatistics) -> Vec<f64> {
    let view = stats.view();
    let mut probs = vec![0.0; view.num_triples()];
    for p in 0..view.num_pairs() {
        let r = view.triples(p);
        let n = stats.pair_count(p);
        if n == 0 {
            let w = 1.0 / r.len() as f64;
            probs[r].fill(w);
        } else {
            for t in r {
                probs[t] = stats.triple_count(t) as f64 / n as f64;
            }
        }
    }
    probs
}

/// Quality of every pair in the maximum-likelihood model, optimizing over
/// in-scope actions only.
pub fn mean_quality(stats: &SampleStatistics, scope: &ScopeSet) -> Result<QualityFunction> {
    let view = stats.view();
    let probs = max_likelihood_probs(stats);
    let it = bellman_iterate(
        view,
        &probs,
        None,
        Some(scope.mask()),
        MEAN_TOLERANCE,
        MEAN_MAX_ITERS,
    )?;
    if !it.converged {
        log::warn!(
            "maximum-likelihood model did not converge (residual {:e}); using last iterate",
            it.residual
        );
    }
    let v = it.values;
    Ok(QualityFunction(
        (0..view.num_pairs())
            .map(|p| {
                let s = view.pair_state(p);
                view.reward(s)
                    + view
                        .triples(p)
                        .map(|t| probs[t] * v[view.successor(t)])
                        .sum::<f64>()
            })
            .collect(),
    ))
}

/// Hoeffding intervals with per-transition tolerance `h`.
pub fn build_tolerance_imdp(stats: &SampleStatistics, scope: &ScopeSet, h: f64) -> Result<IntervalMdp> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::config(format!("tolerance {h} is outside (0, 1)")));
    }
    Ok(IntervalMdp::from_counts(stats, scope, h))
}

/// Pairs the given mode would remove. The pair maximizing the lower quality
/// of `quality_h` is always kept.
pub fn removal_candidates(
    scope: &ScopeSet,
    bounds_h: &ValueBounds,
    quality_h: &QualityBounds,
    qdot: &[f64],
    mode: ScopeMode,
) -> Vec<PairId> {
    let view = scope.view();
    let mut out = Vec::new();
    if mode == ScopeMode::Off {
        return out;
    }
    for s in 0..view.num_states() {
        if view.is_goal(s) {
            continue;
        }
        let Some(keep) = crate::mdp::argmax_by(scope.in_scope(s).map(|p| (p, quality_h.lower[p])))
        else {
            continue;
        };
        let threshold = bounds_h.lower[s];
        for p in scope.in_scope(s) {
            let score = match mode {
                ScopeMode::Eager => qdot[p],
                _ => quality_h.upper[p],
            };
            if p != keep && score < threshold {
                out.push(p);
            }
        }
    }
    out
}

/// Removes the candidates of `mode` from `scope` and zeroes their intervals.
pub fn apply_scoping(
    imdp: &IntervalMdp,
    scope: &ScopeSet,
    bounds_h: &ValueBounds,
    quality_h: &QualityBounds,
    qdot: &[f64],
    mode: ScopeMode,
) -> Result<(IntervalMdp, ScopeSet)> {
    let mut next = scope.clone();
    for p in removal_candidates(scope, bounds_h, quality_h, qdot, mode) {
        next.remove(p)?;
    }
    Ok((imdp.restricted(next.mask()), next))
}
