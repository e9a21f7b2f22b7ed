//! Replicated learning experiments and their CSV logs.
//!
//! Replication `i` uses seed `base + i`. Replications may run in parallel but
//! results are reduced in replication order, so logs are byte-identical for
//! identical configurations regardless of the thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::environments::{
    build_bandit, build_gridworld, build_racetrack_layout, BanditSpec, GridworldSpec, Racetrack,
    TrackSpec,
};
use crate::error::{Error, Result};
use crate::learner::{imdp_rl, EpisodeRecord, LearnerConfig};
use crate::mdp::{
    exact_value_iteration, optimal_value_within, ExplicitMdp, GrayBoxView, ORACLE_MAX_ITERS,
    ORACLE_TOLERANCE,
};
use crate::model_io::read_model_file;

pub const SMALL_TRACK: &str = include_str!("../tracks/small.track");
pub const SMALL_TRACK_NOISE: f64 = 0.2325;
pub const SMALL_TRACK_MAX_SPEED: i32 = 2;

/// Names accepted after `builtin:`.
pub const BUILTINS: [&str; 3] = ["bandit25-75", "racetrack-small", "gridworld"];

/// A loaded environment. Track models keep their layout for heatmaps.
#[derive(Debug, Clone)]
pub struct Model {
    pub mdp: ExplicitMdp,
    pub track: Option<Racetrack>,
}

impl From<ExplicitMdp> for Model {
    fn from(mdp: ExplicitMdp) -> Self {
        Self { mdp, track: None }
    }
}

pub fn small_track() -> Result<TrackSpec> {
    Ok(TrackSpec::parse(SMALL_TRACK, SMALL_TRACK_NOISE)?.with_max_speed(SMALL_TRACK_MAX_SPEED))
}

pub fn builtin(name: &str) -> Result<Model> {
    match name {
        // 101 arms from 0.25 to 0.75; the declared p_min stays below every
        // arm so the learner's intervals are not pinned by it.
        "bandit25-75" => Ok(build_bandit(&BanditSpec::uniform(0.25, 0.75, 101).with_p_min(0.01))?.into()),
        "racetrack-small" => {
            let track = build_racetrack_layout(&small_track()?)?;
            Ok(Model {
                mdp: track.mdp.clone(),
                track: Some(track),
            })
        }
        "gridworld" => Ok(build_gridworld(&GridworldSpec::calibrated())?.into()),
        other => Err(Error::config(format!(
            "unknown builtin model `{other}` (known: {})",
            BUILTINS.join(", ")
        ))),
    }
}

/// Loads `builtin:<name>` or a model file.
pub fn load_model(source: &str) -> Result<Model> {
    match source.strip_prefix("builtin:") {
        Some(name) => builtin(name),
        None => Ok(read_model_file(Path::new(source))?.into()),
    }
}

/// Number of pairs with more than one successor.
pub fn default_batch_size(view: &GrayBoxView) -> usize {
    (0..view.num_pairs()).filter(|&p| view.is_probabilistic(p)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatchSize {
    #[default]
    Auto,
    Fixed(usize),
}

impl BatchSize {
    pub fn resolve(self, view: &GrayBoxView) -> Result<usize> {
        match self {
            Self::Fixed(0) => Err(Error::config("runs per episode must be at least 1")),
            Self::Fixed(n) => Ok(n),
            Self::Auto => match default_batch_size(view) {
                0 => Err(Error::config(
                    "model has no probabilistic pairs; pass the number of runs explicitly",
                )),
                n => Ok(n),
            },
        }
    }
}

impl std::str::FromStr for BatchSize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        s.parse()
            .map(Self::Fixed)
            .map_err(|_| Error::config(format!("invalid number of runs `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// `learner.seed` is the base seed and `learner.runs` is ignored.
    pub learner: LearnerConfig,
    pub runs: BatchSize,
    pub reps: usize,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            learner: LearnerConfig::default(),
            runs: BatchSize::Auto,
            reps: 1,
            jobs: None,
        }
    }
}

/// Per-episode means over all replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedRecord {
    pub episode: usize,
    pub lower: f64,
    pub upper: f64,
    pub corr_upper: f64,
    pub real: f64,
    pub state_action_pairs: f64,
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RepSummary {
    pub seed: u64,
    pub last: EpisodeRecord,
    /// Optimal value of the true model restricted to the final scope.
    pub subsystem_optimum: f64,
    pub final_pairs: usize,
    pub visits: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentLog {
    pub model: String,
    pub config: ExperimentConfig,
    pub runs: usize,
    pub optimal: f64,
    pub rows: Vec<AveragedRecord>,
    pub reps: Vec<RepSummary>,
}

fn run_rep(
    env: &ExplicitMdp,
    config: &LearnerConfig,
    index: usize,
) -> Result<(RepSummary, Vec<EpisodeRecord>)> {
    let seed = config.seed.wrapping_add(index as u64);
    let learner = LearnerConfig {
        seed,
        ..config.clone()
    };
    let out = imdp_rl(env, &learner)?;
    let subsystem_optimum =
        optimal_value_within(env, &out.scope, ORACLE_TOLERANCE, ORACLE_MAX_ITERS)?[env.initial()];
    let summary = RepSummary {
        seed,
        last: *out.records.last().expect("at least one episode"),
        subsystem_optimum,
        final_pairs: out.scope.len(),
        visits: out.visits,
    };
    Ok((summary, out.records))
}

fn replication_error(index: usize, err: Error) -> Error {
    Error::Replication {
        index,
        source: Box::new(err),
    }
}

pub fn run_experiment(model: &Model, config: &ExperimentConfig) -> Result<ExperimentLog> {
    if config.reps == 0 {
        return Err(Error::config("replication count must be at least 1"));
    }
    if config.learner.episodes == 0 {
        return Err(Error::config("experiment needs at least one episode"));
    }
    if config.jobs == Some(0) {
        return Err(Error::config("jobs must be at least 1"));
    }
    let env = &model.mdp;
    let view = env.view();
    let runs = config.runs.resolve(view)?;
    let learner = LearnerConfig {
        runs,
        ..config.learner.clone()
    };
    learner.validate()?;
    let optimal = exact_value_iteration(env, ORACLE_TOLERANCE, ORACLE_MAX_ITERS)?[env.initial()];

    let work = || {
        (0..config.reps)
            .into_par_iter()
            .map(|i| run_rep(env, &learner, i).map_err(|e| replication_error(i, e)))
            .collect::<Result<Vec<_>>>()
    };
    let results = match config.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let k = learner.episodes;
    let m = config.reps as f64;
    let mut rows: Vec<AveragedRecord> = (0..k)
        .map(|episode| AveragedRecord {
            episode,
            lower: 0.0,
            upper: 0.0,
            corr_upper: 0.0,
            real: 0.0,
            state_action_pairs: 0.0,
        })
        .collect();
    for (_, records) in &results {
        for (row, r) in rows.iter_mut().zip(records) {
            row.lower += r.lower;
            row.upper += r.upper;
            row.corr_upper += r.corr_upper;
            row.real += r.real;
            row.state_action_pairs += r.state_action_pairs as f64;
        }
    }
    for row in &mut rows {
        row.lower /= m;
        row.upper /= m;
        row.corr_upper /= m;
        row.real /= m;
        row.state_action_pairs /= m;
    }
    Ok(ExperimentLog {
        model: view.name().to_string(),
        config: ExperimentConfig {
            learner,
            ..config.clone()
        },
        runs,
        optimal,
        rows,
        reps: results.into_iter().map(|(s, _)| s).collect(),
    })
}

/// Formats like C's `%g`: six significant digits, trailing zeros removed,
/// exponent notation outside `[1e-4, 1e6)`.
pub fn format_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim(&format!("{x:.decimals$}"))
    }
}

pub const CSV_COLUMNS: &str = "episode lower upper corr_upper real state-action-pairs";

impl ExperimentLog {
    pub fn mean_subsystem_optimum(&self) -> f64 {
        self.reps.iter().map(|r| r.subsystem_optimum).sum::<f64>() / self.reps.len() as f64
    }

    /// Per-episode means, preceded by `#` metadata lines.
    pub fn to_csv(&self) -> String {
        let l = &self.config.learner;
        let mut out = String::new();
        let mut meta = |key: &str, value: String| {
            let _ = writeln!(out, "# {key} {value}");
        };
        meta("model", self.model.clone());
        meta("sampling", l.sampling.to_string());
        meta("ties", l.ties.to_string());
        meta("scope", l.scope.mode.to_string());
        meta("h", l.scope.h.to_string());
        meta("delta", format_g(l.delta));
        meta("epsilon", format_g(l.epsilon));
        meta("episodes", l.episodes.to_string());
        meta("runs", self.runs.to_string());
        meta("reps", self.config.reps.to_string());
        meta("seed", l.seed.to_string());
        meta("optimal", format_g(self.optimal));
        meta("subsystem-optimum", format_g(self.mean_subsystem_optimum()));
        out.push_str(CSV_COLUMNS);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {}",
                r.episode,
                format_g(r.lower),
                format_g(r.upper),
                format_g(r.corr_upper),
                format_g(r.real),
                format_g(r.state_action_pairs)
            );
        }
        out
    }

    /// Final record and subsystem optimum of every replication.
    pub fn reps_csv(&self) -> String {
        let mut out =
            String::from("rep seed lower upper corr_upper real state-action-pairs subsystem-optimum\n");
        for (i, r) in self.reps.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i} {} {} {} {} {} {} {}",
                r.seed,
                format_g(r.last.lower),
                format_g(r.last.upper),
                format_g(r.last.corr_upper),
                format_g(r.last.real),
                r.final_pairs,
                format_g(r.subsystem_optimum)
            );
        }
        out
    }

    /// Visits per state summed over all replications.
    pub fn total_visits(&self) -> Vec<u64> {
        let n = self.reps.first().map_or(0, |r| r.visits.len());
        let mut total = vec![0; n];
        for r in &self.reps {
            for (t, v) in total.iter_mut().zip(&r.visits) {
                *t += v;
            }
        }
        total
    }

    /// Writes `log.csv` and `reps.csv` into `dir`, plus `heatmap.csv` and
    /// `track.txt` for track models. Returns the written paths.
    pub fn write_to(&self, dir: impl AsRef<Path>, track: Option<&Racetrack>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut files = vec![
            (dir.join("log.csv"), self.to_csv()),
            (dir.join("reps.csv"), self.reps_csv()),
        ];
        if let Some(track) = track {
            let grid = visit_heatmap(Some(track), &self.total_visits())?;
            files.push((dir.join("heatmap.csv"), heatmap_csv(&grid)));
            files.push((dir.join("track.txt"), track.spec.to_string()));
        }
        for (path, text) in &files {
            fs::write(path, text)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

/// Sums per-state visit counts onto the tiles of a track.
pub fn visit_heatmap(track: Option<&Racetrack>, visits: &[u64]) -> Result<Vec<Vec<u64>>> {
    let track = track.ok_or_else(|| Error::Unsupported("visit heatmaps need a track model".into()))?;
    if visits.len() != track.positions.len() {
        return Err(Error::TopologyMismatch);
    }
    let mut grid = vec![vec![0; track.spec.width()]; track.spec.height()];
    for (&count, pos) in visits.iter().zip(&track.positions) {
        match pos {
            Some((x, y)) => grid[*y][*x] += count,
            None if count > 0 => {
                return Err(Error::validation("visits recorded in the crash state"));
            }
            None => {}
        }
    }
    Ok(grid)
}

/// One line per grid row, comma-separated counts.
pub fn heatmap_csv(grid: &[Vec<u64>]) -> String {
    let mut out = String::new();
    for row in grid {
        let line: Vec<String> = row.iter().map(u64::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
