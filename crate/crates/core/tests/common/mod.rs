//! Independent oracles and random model generators shared by the
//! integration tests. Nothing here calls the solvers under test.

#![allow(dead_code)]

use imdp_rl::{ExplicitMdp, IntervalMdp, MdpBuilder};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

/// A model in plain nested-vector form: `actions[s][a]` lists `(succ, prob)`.
#[derive(Debug, Clone)]
pub struct Plain {
    pub initial: usize,
    pub rewards: Vec<f64>,
    pub goal: Vec<bool>,
    pub actions: Vec<Vec<Vec<(usize, f64)>>>,
}

impl Plain {
    pub fn num_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn min_prob(&self) -> f64 {
        self.actions
            .iter()
            .flatten()
            .flatten()
            .map(|&(_, p)| p)
            .fold(1.0, f64::min)
    }

    pub fn to_mdp(&self, p_min: f64) -> ExplicitMdp {
        let mut b = MdpBuilder::new("plain", self.num_states(), self.initial, p_min);
        for s in 0..self.num_states() {
            b.reward(s, self.rewards[s]);
            if self.goal[s] {
                b.goal(s);
            }
            for (a, dist) in self.actions[s].iter().enumerate() {
                b.action(s, format!("a{a}"), dist.clone());
            }
        }
        b.build().expect("generated model is valid")
    }

    pub fn with_probs(&self, actions: Vec<Vec<Vec<(usize, f64)>>>) -> Self {
        Self {
            actions,
            ..self.clone()
        }
    }
}

/// Gauss-Seidel value iteration to a residual of 1e-14.
pub fn oracle_values(m: &Plain) -> Vec<f64> {
    let n = m.num_states();
    let mut v: Vec<f64> = (0..n)
        .map(|s| if m.goal[s] { m.rewards[s] } else { 0.0 })
        .collect();
    for _ in 0..10_000_000 {
        let mut delta = 0.0f64;
        for s in 0..n {
            if m.goal[s] {
                continue;
            }
            let best = m.actions[s]
                .iter()
                .map(|d| m.rewards[s] + d.iter().map(|&(t, p)| p * v[t]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta < 1e-14 {
            return v;
        }
    }
    panic!("oracle did not converge");
}

fn random_dist<R: Rng>(rng: &mut R, succs: &[usize]) -> Vec<(usize, f64)> {
    let w: Vec<f64> = succs.iter().map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut d: Vec<(usize, f64)> = succs.iter().zip(&w).map(|(&s, &x)| (s, x / total)).collect();
    // put the rounding residue on the largest entry so the sum is exact
    let sum: f64 = d.iter().map(|x| x.1).sum();
    let big = (0..d.len())
        .max_by(|&i, &j| d[i].1.total_cmp(&d[j].1))
        .unwrap();
    d[big].1 += 1.0 - sum;
    d
}

/// Random model in which every action reaches a goal with positive
/// probability, so every strategy terminates. Reachability models reward
/// one goal with 1; general models draw all rewards from [-1, 1].
pub fn random_contracting<R: Rng>(rng: &mut R, max_states: usize, max_actions: usize, reach: bool) -> Plain {
    let n = rng.random_range(3..=max_states);
    let goals = rng.random_range(1..=2.min(n - 1));
    let goal: Vec<bool> = (0..n).map(|s| s >= n - goals).collect();
    let rewards: Vec<f64> = (0..n)
        .map(|s| {
            if reach {
                if s == n - 1 { 1.0 } else { 0.0 }
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
        .collect();
    let mut actions = vec![Vec::new(); n];
    let all: Vec<usize> = (0..n).collect();
    for s in 0..n - goals {
        for _ in 0..rng.random_range(1..=max_actions) {
            let k = rng.random_range(0..=3);
            let mut succs: Vec<usize> = all.choose_multiple(rng, k).copied().collect();
            let g = rng.random_range(n - goals..n);
            if !succs.contains(&g) {
                succs.push(g);
            }
            succs.sort_unstable();
            actions[s].push(random_dist(rng, &succs));
        }
    }
    Plain {
        initial: 0,
        rewards,
        goal,
        actions,
    }
}

/// Interval bounds per `(state, action, position in the action's list)`.
#[derive(Debug, Clone)]
pub struct PlainIntervals {
    pub lo: Vec<Vec<Vec<f64>>>,
    pub hi: Vec<Vec<Vec<f64>>>,
}

/// Intervals around the probabilities of `m`, with lower ends at least
/// `floor` so the model's minimum probability bounds every instantiation.
pub fn random_intervals<R: Rng>(rng: &mut R, m: &Plain, floor: f64) -> PlainIntervals {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for acts in &m.actions {
        let mut l_s = Vec::new();
        let mut h_s = Vec::new();
        for d in acts {
            if d.len() == 1 {
                l_s.push(vec![1.0]);
                h_s.push(vec![1.0]);
                continue;
            }
            l_s.push(
                d.iter()
                    .map(|&(_, p)| (p - rng.random_range(0.0..0.2)).max(floor).min(p))
                    .collect(),
            );
            h_s.push(d.iter().map(|&(_, p)| (p + rng.random_range(0.0..0.2)).min(1.0)).collect());
        }
        lo.push(l_s);
        hi.push(h_s);
    }
    PlainIntervals { lo, hi }
}

/// Converts plain intervals into the library's triple-indexed form.
pub fn to_interval_mdp(mdp: &ExplicitMdp, m: &Plain, iv: &PlainIntervals) -> IntervalMdp {
    let view = mdp.view().clone();
    let mut lo = vec![0.0; view.num_triples()];
    let mut hi = vec![0.0; view.num_triples()];
    for s in 0..m.num_states() {
        for (a, d) in m.actions[s].iter().enumerate() {
            let p = view.pair(s, a).unwrap();
            for (i, &(succ, _)) in d.iter().enumerate() {
                let t = view.triple(p, succ).unwrap();
                lo[t] = iv.lo[s][a][i];
                hi[t] = iv.hi[s][a][i];
            }
        }
    }
    IntervalMdp::from_bounds(view.clone(), lo, hi, vec![true; view.num_pairs()]).unwrap()
}

/// A random distribution inside `[lo, hi]` summing to one.
pub fn sample_within<R: Rng>(rng: &mut R, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let mut p = lo.to_vec();
    let mut rest = 1.0 - lo.iter().sum::<f64>();
    let mut order: Vec<usize> = (0..lo.len()).collect();
    order.shuffle(rng);
    for &i in &order {
        let add = (hi[i] - p[i]).min(rest) * rng.random_range(0.0..1.0);
        p[i] += add;
        rest -= add;
    }
    for &i in &order {
        let add = (hi[i] - p[i]).min(rest);
        p[i] += add;
        rest -= add;
    }
    p
}

pub fn random_instantiation<R: Rng>(rng: &mut R, m: &Plain, iv: &PlainIntervals) -> Plain {
    let actions = m
        .actions
        .iter()
        .enumerate()
        .map(|(s, acts)| {
            acts.iter()
                .enumerate()
                .map(|(a, d)| {
                    let p = sample_within(rng, &iv.lo[s][a], &iv.hi[s][a]);
                    d.iter().zip(p).map(|(&(succ, _), x)| (succ, x)).collect()
                })
                .collect()
        })
        .collect();
    m.with_probs(actions)
}

/// Vertices of `{p : lo <= p <= hi, sum p = 1}`: all coordinates but one at
/// a bound, the remaining one determined by the sum.
pub fn polytope_vertices(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let k = lo.len();
    let mut out = Vec::new();
    for free in 0..k {
        for mask in 0..(1u32 << (k - 1)) {
            let mut p = vec![0.0; k];
            let mut bit = 0;
            for i in 0..k {
                if i == free {
                    continue;
                }
                p[i] = if mask >> bit & 1 == 1 { hi[i] } else { lo[i] };
                bit += 1;
            }
            let rest = 1.0 - p.iter().sum::<f64>();
            if rest >= lo[free] - 1e-15 && rest <= hi[free] + 1e-15 {
                p[free] = rest;
                out.push(p);
            }
        }
    }
    out
}
