//! The episode loop: sample, refresh intervals, bound, update the sampling
//! strategy, optionally shrink scopes.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimation::{transition_tolerance, update_prob_intervals, IntervalMdp, SampleStatistics};
use crate::interval_vi::{
    compute_bounds, pessimistic_and_optimistic_strategies, safe_initial_bounds, QualityBounds,
    ValueBounds,
};
use crate::mdp::{exact_policy_evaluation, ExplicitMdp, Run, ORACLE_MAX_ITERS, ORACLE_TOLERANCE};
use crate::sampling::{
    lcb_strategy_with, run_rng, sample_run_into, softmax_strategy, ucb_strategy_with,
    SamplingStrategy, TieBreak,
};
use crate::scoping::{
    apply_scoping, build_tolerance_imdp, mean_quality, ScopeConfig, ScopeMode, ScopeSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    Ucb,
    #[default]
    Lcb,
    Softmax,
}

impl FromStr for SamplingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ucb" => Ok(Self::Ucb),
            "lcb" => Ok(Self::Lcb),
            "softmax" => Ok(Self::Softmax),
            other => Err(Error::config(format!("unknown sampling strategy `{other}`"))),
        }
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ucb => "ucb",
            Self::Lcb => "lcb",
            Self::Softmax => "softmax",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub delta: f64,
    pub episodes: usize,
    pub runs: usize,
    pub epsilon: f64,
    /// Multiplies epsilon once per episode; `None` keeps it constant.
    pub epsilon_decay: Option<f64>,
    pub sampling: SamplingMode,
    /// Softmax temperature, shared by all pairs.
    pub temperature: f64,
    pub scope: ScopeConfig,
    /// Tie rule of the sampling strategy.
    pub ties: TieBreak,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            episodes: 50,
            runs: 1,
            epsilon: 0.1,
            epsilon_decay: None,
            sampling: SamplingMode::Lcb,
            temperature: 1.0,
            scope: ScopeConfig::default(),
            ties: TieBreak::default(),
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!("delta {} is outside (0, 1)", self.delta)));
        }
        if self.runs == 0 {
            return Err(Error::config("runs per episode must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config(format!("epsilon {} is outside [0, 1]", self.epsilon)));
        }
        if let Some(d) = self.epsilon_decay {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::config(format!("epsilon decay {d} is outside (0, 1]")));
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("temperature must be positive"));
        }
        if let crate::scoping::Tolerance::Fixed(h) = self.scope.h {
            if !(h > 0.0 && h < 1.0) {
                return Err(Error::config(format!("tolerance {h} is outside (0, 1)")));
            }
        }
        Ok(())
    }

    fn epsilon_at(&self, episode: usize) -> f64 {
        match self.epsilon_decay {
            Some(d) => self.epsilon * d.powi(episode as i32 - 1),
            None => self.epsilon,
        }
    }
}

/// Quantities logged after one episode. `episode` counts from 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub lower: f64,
    pub upper: f64,
    pub corr_upper: f64,
    pub real: f64,
    pub state_action_pairs: usize,
}

/// Upper bound at the initial state when every state is restricted to the
/// actions `sigma_fixed` plays.
pub fn corr_upper_bound(
    imdp: &IntervalMdp,
    sigma_fixed: &SamplingStrategy,
    sweeps: usize,
) -> Result<f64> {
    let keep: Vec<bool> = sigma_fixed
        .support_mask()
        .iter()
        .zip(imdp.active_mask())
        .map(|(&a, &b)| a && b)
        .collect();
    let restricted = imdp.restricted(&keep);
    let (vb, _) = compute_bounds(&restricted, sweeps, &safe_initial_bounds(&restricted))?;
    Ok(vb.upper[imdp.view().initial()])
}

/// Result of a learning session.
#[derive(Debug, Clone)]
pub struct LearnerOutput {
    pub lower_strategy: SamplingStrategy,
    pub upper_strategy: SamplingStrategy,
    pub bounds: ValueBounds,
    pub quality: QualityBounds,
    pub records: Vec<EpisodeRecord>,
    pub scope: ScopeSet,
    pub stats: SampleStatistics,
    /// Steps taken from each state, summed over all runs.
    pub visits: Vec<u64>,
}

/// A learner working on one hidden environment.
#[derive(Debug, Clone)]
pub struct Learner<'a> {
    env: &'a ExplicitMdp,
    config: LearnerConfig,
    stats: SampleStatistics,
    scope: ScopeSet,
    imdp: IntervalMdp,
    sigma: SamplingStrategy,
    bounds: ValueBounds,
    quality: QualityBounds,
    episode: usize,
    next_run: u64,
    visits: Vec<u64>,
    records: Vec<EpisodeRecord>,
    run: Run,
}

impl<'a> Learner<'a> {
    pub fn new(env: &'a ExplicitMdp, config: LearnerConfig) -> Result<Self> {
        config.validate()?;
        let view = env.view().clone();
        let trapped = view.trapping_states(None);
        if !trapped.is_empty() {
            return Err(Error::NotContracting(format!(
                "states {trapped:?} can avoid the goals forever"
            )));
        }
        let scope = ScopeSet::full(view.clone());
        let imdp = IntervalMdp::initial(view.clone());
        let bounds = safe_initial_bounds(&imdp);
        let (q_lo, q_hi) = (0..view.num_pairs())
            .map(|p| {
                let s = view.pair_state(p);
                (bounds.lower[s], bounds.upper[s])
            })
            .unzip();
        let quality = QualityBounds::new(view.clone(), q_lo, q_hi, vec![true; view.num_pairs()])?;
        Ok(Self {
            sigma: SamplingStrategy::uniform(&scope),
            stats: SampleStatistics::new(view.clone()),
            visits: vec![0; view.num_states()],
            env,
            config,
            scope,
            imdp,
            bounds,
            quality,
            episode: 0,
            next_run: 0,
            records: Vec::new(),
            run: Run::default(),
        })
    }

    pub fn stats(&self) -> &SampleStatistics {
        &self.stats
    }

    pub fn scope(&self) -> &ScopeSet {
        &self.scope
    }

    pub fn sigma(&self) -> &SamplingStrategy {
        &self.sigma
    }

    pub fn bounds(&self) -> &ValueBounds {
        &self.bounds
    }

    pub fn quality(&self) -> &QualityBounds {
        &self.quality
    }

    pub fn interval_mdp(&self) -> &IntervalMdp {
        &self.imdp
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    /// Sample runs of one episode, recording them into the statistics.
    fn sample(&mut self) -> Result<()> {
        for _ in 0..self.config.runs {
            let mut rng = run_rng(self.config.seed, self.next_run);
            self.next_run += 1;
            sample_run_into(
                self.env,
                &self.sigma,
                &self.scope,
                &mut self.stats,
                &mut rng,
                &mut self.run,
                Some(&mut self.visits),
            )?;
        }
        Ok(())
    }

    /// Bounds of the scoping model together with its mean quality.
    fn scoping_inputs(
        &self,
        sweeps: usize,
        vb: &ValueBounds,
        qb: &QualityBounds,
    ) -> Result<(ValueBounds, QualityBounds)> {
        let view = self.env.view();
        let h = self.config.scope.h.resolve(view, self.config.delta);
        if transition_tolerance(view, self.config.delta) == Some(h) {
            return Ok((vb.clone(), qb.clone()));
        }
        let u_h = build_tolerance_imdp(&self.stats, &self.scope, h)?;
        compute_bounds(&u_h, sweeps, &safe_initial_bounds(&u_h))
    }

    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let k = self.episode + 1;
        self.sample()?;
        let view = self.env.view().clone();
        let imdp = update_prob_intervals(&self.stats, &self.scope, self.config.delta)?;
        let sweeps = k * view.num_states();
        let (vb, qb) = compute_bounds(&imdp, sweeps, &safe_initial_bounds(&imdp))?;
        let (sigma_lower, _) = pessimistic_and_optimistic_strategies(&qb)?;
        let corr_upper = corr_upper_bound(&imdp, &sigma_lower, sweeps)?;
        let state_action_pairs = self.scope.len();

        let (imdp, scope) = if self.config.scope.mode == ScopeMode::Off {
            (imdp, self.scope.clone())
        } else {
            let (vb_h, qb_h) = self.scoping_inputs(sweeps, &vb, &qb)?;
            let qdot = mean_quality(&self.stats, &self.scope)?;
            apply_scoping(&imdp, &self.scope, &vb_h, &qb_h, &qdot, self.config.scope.mode)?
        };

        let available = qb.with_active(scope.mask());
        self.sigma = match self.config.sampling {
            SamplingMode::Ucb => ucb_strategy_with(&available, self.config.ties)?,
            SamplingMode::Lcb => {
                lcb_strategy_with(&available, self.config.epsilon_at(k), self.config.ties)?
            }
            SamplingMode::Softmax => {
                let tau = vec![self.config.temperature; view.num_pairs()];
                softmax_strategy(&available, &tau)?
            }
        };
        let real = exact_policy_evaluation(self.env, &self.sigma, ORACLE_TOLERANCE, ORACLE_MAX_ITERS)?
            [view.initial()];

        let record = EpisodeRecord {
            episode: self.episode,
            lower: vb.lower[view.initial()],
            upper: vb.upper[view.initial()],
            corr_upper,
            real,
            state_action_pairs,
        };
        self.imdp = imdp;
        self.scope = scope;
        self.bounds = vb;
        self.quality = qb;
        self.episode = k;
        self.records.push(record);
        Ok(record)
    }

    pub fn finish(self) -> Result<LearnerOutput> {
        let (lower_strategy, upper_strategy) = pessimistic_and_optimistic_strategies(&self.quality)?;
        Ok(LearnerOutput {
            lower_strategy,
            upper_strategy,
            bounds: self.bounds,
            quality: self.quality,
            records: self.records,
            scope: self.scope,
            stats: self.stats,
            visits: self.visits,
        })
    }
}

/// Runs `config.episodes` episodes of learning on `env`.
pub fn imdp_rl(env: &ExplicitMdp, config: &LearnerConfig) -> Result<LearnerOutput> {
    let mut learner = Learner::new(env, config.clone())?;
    for _ in 0..config.episodes {
        learner.run_episode()?;
    }
    learner.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpBuilder;

    fn bandit(probs: &[f64]) -> ExplicitMdp {
        let mut b = MdpBuilder::new("b", 3, 0, 0.01);
        b.goal(1).goal(2).reward(1, 1.0);
        for (i, &p) in probs.iter().enumerate() {
            b.action(0, format!("a{i}"), vec![(1, p), (2, 1.0 - p)]);
        }
        b.build().unwrap()
    }

    #[test]
    fn zero_episodes_returns_safe_bounds() {
        let m = bandit(&[0.3, 0.6]);
        let cfg = LearnerConfig {
            episodes: 0,
            runs: 2,
            ..Default::default()
        };
        let out = imdp_rl(&m, &cfg).unwrap();
        assert_eq!(out.bounds.lower[0], 0.0);
        assert_eq!(out.bounds.upper[0], 1.0);
        assert_eq!(out.lower_strategy.choice(0), Some(0));
        assert_eq!(out.upper_strategy.choice(0), Some(0));
        assert!(out.records.is_empty());
    }

    #[test]
    fn records_are_consistent() {
        let m = bandit(&[0.3, 0.6, 0.5]);
        let cfg = LearnerConfig {
            episodes: 10,
            runs: 5,
            seed: 4,
            ..Default::default()
        };
        let out = imdp_rl(&m, &cfg).unwrap();
        assert_eq!(out.records.len(), 10);
        for (i, r) in out.records.iter().enumerate() {
            assert_eq!(r.episode, i);
            assert!(r.lower <= r.upper);
            assert!(r.lower <= r.corr_upper + 1e-12);
            assert_eq!(r.state_action_pairs, 3);
        }
        let steps: u64 = out.visits.iter().sum();
        assert_eq!(steps, out.stats.total_steps());
        assert_eq!(steps, 50);
    }

    #[test]
    fn non_contracting_env_rejected() {
        let mut b = MdpBuilder::new("loop", 2, 0, 1.0);
        b.goal(1);
        b.action(0, "stay", vec![(0, 1.0)]);
        b.action(0, "go", vec![(1, 1.0)]);
        let m = b.build().unwrap();
        assert!(matches!(
            Learner::new(&m, LearnerConfig::default()),
            Err(Error::NotContracting(_))
        ));
    }

    #[test]
    fn invalid_configs_rejected() {
        let m = bandit(&[0.5]);
        for cfg in [
            LearnerConfig { delta: 0.0, ..Default::default() },
            LearnerConfig { runs: 0, ..Default::default() },
            LearnerConfig { epsilon: -0.1, ..Default::default() },
            LearnerConfig { epsilon_decay: Some(1.5), ..Default::default() },
        ] {
            assert!(matches!(Learner::new(&m, cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn epsilon_decays_geometrically() {
        let cfg = LearnerConfig {
            epsilon: 0.2,
            epsilon_decay: Some(0.5),
            ..Default::default()
        };
        assert_eq!(cfg.epsilon_at(1), 0.2);
        assert_eq!(cfg.epsilon_at(3), 0.05);
    }

    #[test]
    fn eager_scoping_shrinks_scope() {
        let probs: Vec<f64> = (0..11).map(|i| 0.25 + 0.05 * i as f64).collect();
        let m = bandit(&probs);
        let cfg = LearnerConfig {
            episodes: 20,
            runs: 11,
            seed: 1,
            scope: ScopeConfig {
                mode: ScopeMode::Eager,
                h: crate::scoping::Tolerance::Fixed(0.05),
            },
            ..Default::default()
        };
        let out = imdp_rl(&m, &cfg).unwrap();
        let pairs: Vec<usize> = out.records.iter().map(|r| r.state_action_pairs).collect();
        assert_eq!(pairs[0], 11);
        assert!(pairs.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.scope.len() < 11);
    }
}
