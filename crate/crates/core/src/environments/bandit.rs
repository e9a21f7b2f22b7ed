//! Multi-armed bandits: one decision state, a winning goal with reward 1 and
//! a losing goal with reward 0.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mdp::{ExplicitMdp, MdpBuilder};

pub const INITIAL: usize = 0;
pub const WIN: usize = 1;
pub const LOSE: usize = 2;

/// How the winning probabilities of the arms are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ArmRule {
    Explicit(Vec<f64>),
    /// `count` evenly spaced probabilities from `lo` to `hi` inclusive.
    UniformRange { lo: f64, hi: f64, count: usize },
    /// Normal draws clamped to `[clamp, 1 - clamp]`.
    Gaussian {
        mean: f64,
        sd: f64,
        count: usize,
        clamp: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditSpec {
    pub arms: ArmRule,
    /// Declared lower bound on transition probabilities. Defaults to the true
    /// minimum `min(p, 1 - p)` over all arms.
    pub p_min: Option<f64>,
}

impl BanditSpec {
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Self {
        Self {
            arms: ArmRule::UniformRange { lo, hi, count },
            p_min: None,
        }
    }

    pub fn explicit(probs: Vec<f64>) -> Self {
        Self {
            arms: ArmRule::Explicit(probs),
            p_min: None,
        }
    }

    pub fn with_p_min(mut self, p_min: f64) -> Self {
        self.p_min = Some(p_min);
        self
    }

    pub fn arm_probs(&self) -> Result<Vec<f64>> {
        let probs = match &self.arms {
            ArmRule::Explicit(p) => p.clone(),
            &ArmRule::UniformRange { lo, hi, count } => match count {
                0 => Vec::new(),
                1 => vec![lo],
                n => (0..n)
                    .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
            &ArmRule::Gaussian {
                mean,
                sd,
                count,
                clamp,
                seed,
            } => {
                if !(clamp > 0.0 && clamp < 0.5) {
                    return Err(Error::config(format!("clamp {clamp} is outside (0, 0.5)")));
                }
                let normal = Normal::new(mean, sd)
                    .map_err(|e| Error::config(format!("invalid normal distribution: {e}")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| normal.sample(&mut rng).clamp(clamp, 1.0 - clamp))
                    .collect()
            }
        };
        if probs.is_empty() {
            return Err(Error::validation("bandit needs at least one arm"));
        }
        if let Some(p) = probs.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::validation(format!(
                "arm probability {p} is outside (0, 1)"
            )));
        }
        Ok(probs)
    }
}

pub fn build_bandit(spec: &BanditSpec) -> Result<ExplicitMdp> {
    let probs = spec.arm_probs()?;
    let true_min = probs
        .iter()
        .flat_map(|&p| [p, 1.0 - p])
        .fold(1.0, f64::min);
    let name = format!("bandit{}", probs.len());
    let mut b = MdpBuilder::new(name, 3, INITIAL, spec.p_min.unwrap_or(true_min));
    b.goal(WIN).goal(LOSE).reward(WIN, 1.0);
    for (i, &p) in probs.iter().enumerate() {
        b.action(INITIAL, format!("arm{i}"), vec![(WIN, p), (LOSE, 1.0 - p)]);
    }
    b.build()
}
