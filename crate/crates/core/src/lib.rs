//! Strategy synthesis for gray-box MDPs.
//!
//! The learner knows the topology, the rewards and a lower bound `p_min` on
//! transition probabilities of a hidden MDP, but not the probabilities. It
//! samples runs, maintains Hoeffding confidence intervals, and computes lower
//! and upper bounds on the optimal expected total reward by interval value
//! iteration.

pub mod environments;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod interval_vi;
pub mod learner;
pub mod mdp;
pub mod model_io;
pub mod sampling;
pub mod scoping;

pub use error::{Error, Result};
pub use estimation::{
    contains_truth, hoeffding_radius, update_prob_intervals, IntervalMdp, SampleStatistics,
};
pub use experiment::{
    default_batch_size, format_g, heatmap_csv, load_model, run_experiment, visit_heatmap,
    AveragedRecord, BatchSize, ExperimentConfig, ExperimentLog, Model, RepSummary,
};
pub use interval_vi::{
    compute_bounds, maximizing_transitions, minimizing_transitions,
    pessimistic_and_optimistic_strategies, safe_initial_bounds, ExtremeInstantiation,
    QualityBounds, ValueBounds,
};
pub use learner::{
    corr_upper_bound, imdp_rl, EpisodeRecord, Learner, LearnerConfig, LearnerOutput, SamplingMode,
};
pub use mdp::{
    check_contracting, exact_policy_evaluation, exact_value_iteration, optimal_value_within,
    quality_from_value, ActionId, Distribution, ExplicitMdp, GrayBoxView, MdpBuilder, PairId, Run,
    StateId, ValueFunction, QualityFunction,
};
pub use model_io::{count_probabilistic_transitions, gray_box_of, parse_model, serialize_model};
pub use sampling::{
    lcb_strategy, lcb_strategy_with, run_rng, sample_run, softmax_strategy, ucb_strategy,
    ucb_strategy_with, SamplingStrategy, TieBreak,
};
pub use scoping::{
    apply_scoping, build_tolerance_imdp, mean_quality, removal_candidates, ScopeConfig, ScopeMode,
    ScopeSet, Tolerance,
};
