//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.

mod common;

use std::time::Instant;

use common::*;
use imdp_rl::experiment::{builtin, run_experiment, BatchSize, ExperimentConfig, ExperimentLog};
use imdp_rl::{
    compute_bounds, maximizing_transitions, minimizing_transitions, removal_candidates,
    safe_initial_bounds, build_tolerance_imdp, mean_quality, IntervalMdp, Learner, LearnerConfig,
    MdpBuilder, SamplingMode, ScopeConfig, ScopeMode, Tolerance,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let plain = random_contracting(&mut rng, 10, 3, i % 2 == 0);
        let mdp = plain.to_mdp(plain.min_prob());
        let imdp = IntervalMdp::point(&mdp);
        let (vb, _) = compute_bounds(&imdp, 1_000_000, &safe_initial_bounds(&imdp)).map_err(|e| e.to_string())?;
        let truth = oracle_values(&plain);
        for s in 0..truth.len() {
            worst = worst.max((vb.lower[s] - truth[s]).abs());
            worst = worst.max((vb.upper[s] - truth[s]).abs());
        }
    }
    check(worst <= 1e-9, format!("max deviation {worst:e} over 50 models (tolerance 1e-9)"))
}

fn extreme_instantiation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(1..=4);
        let (lo, hi) = loop {
            let lo: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..0.5)).collect();
            let hi: Vec<f64> = lo.iter().map(|&l| (l + rng.random_range(0.0..0.8)).min(1.0)).collect();
            if lo.iter().sum::<f64>() <= 1.0 && hi.iter().sum::<f64>() >= 1.0 {
                break (lo, hi);
            }
        };
        // state 0 has one action leading to the goals 1..=k
        let mut b = MdpBuilder::new("one", k + 1, 0, 1e-9);
        let dist: Vec<(usize, f64)> = (1..=k).map(|s| (s, 1.0 / k as f64)).collect();
        for s in 1..=k {
            b.goal(s);
        }
        b.action(0, "a", dist);
        let mdp = b.build().map_err(|e| e.to_string())?;
        let view = mdp.view().clone();
        let imdp = IntervalMdp::from_bounds(view.clone(), lo.clone(), hi.clone(), vec![true]).map_err(|e| e.to_string())?;
        let mut v: Vec<f64> = (0..=k).map(|_| rng.random_range(-1.0..1.0)).collect();
        if k > 1 && rng.random_bool(0.3) {
            v[2] = v[1];
        }
        let vertices = polytope_vertices(&lo, &hi);
        let objective = |p: &[f64]| p.iter().enumerate().map(|(i, x)| x * v[i + 1]).sum::<f64>();
        let brute_min = vertices.iter().map(|p| objective(p)).fold(f64::INFINITY, f64::min);
        let brute_max = vertices.iter().map(|p| objective(p)).fold(f64::NEG_INFINITY, f64::max);
        let tmin = minimizing_transitions(&imdp, &v).map_err(|e| e.to_string())?;
        let tmax = maximizing_transitions(&imdp, &v).map_err(|e| e.to_string())?;
        for (probs, target) in [(tmin.probs(), brute_min), (tmax.probs(), brute_max)] {
            let inside = probs
                .iter()
                .zip(lo.iter().zip(&hi))
                .all(|(p, (l, h))| *p >= l - 1e-12 && *p <= h + 1e-12);
            let total: f64 = probs.iter().sum();
            if !inside || (total - 1.0).abs() > 1e-12 {
                return Err(format!("instantiation {probs:?} leaves [{lo:?}, {hi:?}]"));
            }
            worst = worst.max((objective(probs) - target).abs());
        }
    }
    check(worst <= 1e-12, format!("max deviation {worst:e} over 100 interval functions (tolerance 1e-12)"))
}

fn soundness_sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut checks = 0;
    for i in 0..20 {
        let plain = random_contracting(&mut rng, 8, 3, i % 2 == 0);
        let iv = random_intervals(&mut rng, &plain, 0.01);
        let p_min = iv.lo.iter().flatten().flatten().copied().fold(1.0, f64::min);
        let mdp = plain.to_mdp(p_min);
        let imdp = to_interval_mdp(&mdp, &plain, &iv);
        let n = plain.num_states();
        let init = safe_initial_bounds(&imdp);
        let bounds: Vec<_> = [1, n, 10 * n]
            .into_iter()
            .map(|k| compute_bounds(&imdp, k, &init).map(|(vb, _)| vb))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let truth = oracle_values(&random_instantiation(&mut rng, &plain, &iv));
            for vb in &bounds {
                for s in 0..n {
                    checks += 1;
                    if truth[s] < vb.lower[s] - 1e-9 || truth[s] > vb.upper[s] + 1e-9 {
                        violations += 1;
                    }
                }
            }
        }
    }
    check(violations == 0, format!("{violations} violations in {checks} checks"))
}

fn bandit_config(sampling: SamplingMode, scope: ScopeConfig, reps: usize) -> ExperimentConfig {
    ExperimentConfig {
        learner: LearnerConfig {
            delta: 0.1,
            episodes: 50,
            epsilon: 0.1,
            sampling,
            scope,
            seed: 0,
            ..LearnerConfig::default()
        },
        runs: BatchSize::Fixed(101),
        reps,
        jobs: None,
    }
}

fn experiment(name: &str, config: &ExperimentConfig) -> Result<ExperimentLog, String> {
    let model = builtin(name).map_err(|e| e.to_string())?;
    run_experiment(&model, config).map_err(|e| e.to_string())
}

fn pac_containment() -> Outcome {
    let log = experiment("bandit25-75", &bandit_config(SamplingMode::Lcb, ScopeConfig::default(), 200))?;
    let hits = log
        .reps
        .iter()
        .filter(|r| r.last.lower <= 0.75 && 0.75 <= r.last.upper)
        .count();
    check(hits >= 180, format!("{hits}/200 final intervals contain 0.75 (need 180)"))
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn table_reproduction() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (sampling, lo, hi) in [(SamplingMode::Lcb, 0.61, 0.67), (SamplingMode::Ucb, 0.63, 0.92)] {
        let log = experiment("bandit25-75", &bandit_config(sampling, ScopeConfig::default(), 100))?;
        let last = log.rows.last().unwrap();
        ok &= within(last.lower, lo, 0.1) && within(last.corr_upper, hi, 0.1);
        details.push(format!(
            "{sampling} [{:.3}, {:.3}] vs [{lo}, {hi}]",
            last.lower, last.corr_upper
        ));
    }
    check(ok, details.join("; "))
}

fn scoping_keeps_optimum() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for sampling in [SamplingMode::Ucb, SamplingMode::Lcb] {
        let cons = ScopeConfig {
            mode: ScopeMode::Conservative,
            h: Tolerance::Fixed(0.05),
        };
        let log = experiment("bandit25-75", &bandit_config(sampling, cons, 100))?;
        let kept = log
            .reps
            .iter()
            .filter(|r| (r.subsystem_optimum - 0.75).abs() < 1e-9)
            .count();
        ok &= kept == 100;
        let eager = ScopeConfig {
            mode: ScopeMode::Eager,
            h: Tolerance::Fixed(0.05),
        };
        let log = experiment("bandit25-75", &bandit_config(sampling, eager, 100))?;
        let mean = log.mean_subsystem_optimum();
        ok &= mean >= 0.72;
        details.push(format!("{sampling}: conservative {kept}/100 keep 0.75, eager mean {mean:.4}"));
    }
    check(ok, details.join("; "))
}

fn scope_subset_law() -> Outcome {
    let model = builtin("bandit25-75").map_err(|e| e.to_string())?;
    let h = 0.05;
    let mut checked = 0;
    let mut violations = 0;
    for seed in 0..50u64 {
        let config = LearnerConfig {
            episodes: 50,
            runs: 101,
            sampling: if seed % 2 == 0 { SamplingMode::Ucb } else { SamplingMode::Lcb },
            scope: ScopeConfig {
                mode: if seed % 4 < 2 { ScopeMode::Conservative } else { ScopeMode::Eager },
                h: Tolerance::Fixed(h),
            },
            seed,
            ..LearnerConfig::default()
        };
        let mut learner = Learner::new(&model.mdp, config).map_err(|e| e.to_string())?;
        for k in 1..=50 {
            // the inputs the learner's next scoping step will see
            let scope = learner.scope().clone();
            learner.run_episode().map_err(|e| e.to_string())?;
            let stats_now = learner.stats();
            let u_h = build_tolerance_imdp(stats_now, &scope, h).map_err(|e| e.to_string())?;
            let n = model.mdp.num_states();
            let (vb, qb) = compute_bounds(&u_h, k * n, &safe_initial_bounds(&u_h)).map_err(|e| e.to_string())?;
            let qdot = mean_quality(stats_now, &scope).map_err(|e| e.to_string())?;
            let cons = removal_candidates(&scope, &vb, &qb, &qdot, ScopeMode::Conservative);
            let eager = removal_candidates(&scope, &vb, &qb, &qdot, ScopeMode::Eager);
            checked += 1;
            if !cons.iter().all(|p| eager.contains(p)) {
                violations += 1;
            }
        }
    }
    check(violations == 0, format!("{violations} violations in {checked} paired episodes"))
}

fn racetrack_desk_check() -> Outcome {
    let model = builtin("racetrack-small").map_err(|e| e.to_string())?;
    let view = model.mdp.view();
    let exact = view.num_states() == 158 && view.num_pairs() == 1377;
    let config = |sampling| ExperimentConfig {
        learner: LearnerConfig {
            episodes: 50,
            sampling,
            seed: 0,
            ..LearnerConfig::default()
        },
        runs: BatchSize::Fixed(940),
        reps: 10,
        jobs: None,
    };
    let lcb = run_experiment(&model, &config(SamplingMode::Lcb)).map_err(|e| e.to_string())?;
    let ucb = run_experiment(&model, &config(SamplingMode::Ucb)).map_err(|e| e.to_string())?;
    let (l, u) = (lcb.rows.last().unwrap(), ucb.rows.last().unwrap());
    let summary = format!(
        "{} states, {} pairs; LCB [{:.3}, {:.3}] vs [0.33, 0.53], UCB [{:.3}, {:.3}] vs [0.29, 0.75]",
        view.num_states(),
        view.num_pairs(),
        l.lower,
        l.corr_upper,
        u.lower,
        u.corr_upper
    );
    if exact {
        let ok = within(l.lower, 0.33, 0.1)
            && within(l.corr_upper, 0.53, 0.1)
            && within(u.lower, 0.29, 0.1)
            && within(u.corr_upper, 0.75, 0.1);
        check(ok, summary)
    } else {
        let ordered = lcb
            .reps
            .iter()
            .zip(&ucb.reps)
            .filter(|(a, b)| {
                a.last.corr_upper - a.last.lower < b.last.corr_upper - b.last.lower
                    && a.last.lower >= b.last.lower
            })
            .count();
        check(ordered >= 8, format!("{summary}; qualitative ordering in {ordered}/10 seeds"))
    }
}

fn determinism() -> Outcome {
    let config = bandit_config(
        SamplingMode::Ucb,
        ScopeConfig {
            mode: ScopeMode::Eager,
            h: Tolerance::Fixed(0.05),
        },
        8,
    );
    let a = experiment("bandit25-75", &config)?.to_csv();
    let b = experiment("bandit25-75", &ExperimentConfig { jobs: Some(1), ..config })?.to_csv();
    check(a == b, format!("two runs of {} and {} bytes, identical: {}", a.len(), b.len(), a == b))
}

fn convergence_toy() -> Outcome {
    let mut b = MdpBuilder::new("toy", 3, 0, 0.3);
    b.goal(1).goal(2).reward(1, 1.0);
    b.action(0, "good", vec![(1, 0.7), (2, 0.3)]);
    b.action(0, "poor", vec![(1, 0.4), (2, 0.6)]);
    let toy = b.build().map_err(|e| e.to_string())?;
    let config = ExperimentConfig {
        learner: LearnerConfig {
            episodes: 2000,
            epsilon: 0.1,
            sampling: SamplingMode::Lcb,
            seed: 0,
            ..LearnerConfig::default()
        },
        runs: BatchSize::Fixed(4),
        reps: 1,
        jobs: Some(1),
    };
    let log = run_experiment(&toy.into(), &config).map_err(|e| e.to_string())?;
    let last = log.rows.last().unwrap();
    let width = last.upper - last.lower;
    check(width < 0.05, format!("final width {width:.4} (need < 0.05)"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("extreme instantiation optimality", extreme_instantiation),
        ("soundness sandwich", soundness_sandwich),
        ("PAC containment", pac_containment),
        ("bandit table reproduction", table_reproduction),
        ("scoping keeps the optimum", scoping_keeps_optimum),
        ("scope subset law", scope_subset_law),
        ("racetrack desk-scale check", racetrack_desk_check),
        ("determinism", determinism),
        ("convergence toy", convergence_toy),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
