//! Cost-to-goal gridworld. Every cell off the goal costs `step_reward`. The
//! robot only moves towards the goal: along x, along y, or diagonally. With
//! probability `slip` the chosen move is replaced by one of the other enabled
//! moves, uniformly, or the robot stays put when no other move exists. Since
//! every move shortens the distance to the goal, every strategy reaches it.

use crate::error::{Error, Result};
use crate::mdp::{ExplicitMdp, MdpBuilder};

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub step_reward: f64,
    pub slip: f64,
    pub start: (usize, usize),
    pub goal: (usize, usize),
}

impl GridworldSpec {
    /// The calibrated 4x5 instance with optimal value close to -5.48.
    pub fn calibrated() -> Self {
        Self {
            width: 4,
            height: 5,
            step_reward: -1.0,
            slip: 0.37,
            start: (0, 0),
            goal: (3, 4),
        }
    }

    pub fn state_of(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation("gridworld is empty"));
        }
        let inside = |(x, y): (usize, usize)| x < self.width && y < self.height;
        if !inside(self.start) || !inside(self.goal) {
            return Err(Error::validation("start or goal lies outside the grid"));
        }
        if !(self.step_reward <= 0.0 && self.step_reward.is_finite()) {
            return Err(Error::validation("step reward must be finite and non-positive"));
        }
        if !(0.0..1.0).contains(&self.slip) {
            return Err(Error::validation(format!("slip {} is outside [0, 1)", self.slip)));
        }
        Ok(())
    }
}

const MOVE_NAMES: [&str; 3] = ["x", "y", "xy"];

pub fn build_gridworld(spec: &GridworldSpec) -> Result<ExplicitMdp> {
    spec.validate()?;
    let (gx, gy) = (spec.goal.0 as i64, spec.goal.1 as i64);
    let n = spec.width * spec.height;
    let mut actions = Vec::with_capacity(n);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let (xi, yi) = (x as i64, y as i64);
            if (xi, yi) == (gx, gy) {
                actions.push(Vec::new());
                continue;
            }
            let (sx, sy) = ((gx - xi).signum(), (gy - yi).signum());
            let moves: Vec<(&str, usize)> = [(sx, 0), (0, sy), (sx, sy)]
                .into_iter()
                .zip(MOVE_NAMES)
                .filter(|&((dx, dy), _)| (dx, dy) != (0, 0))
                .map(|((dx, dy), name)| (name, spec.state_of((xi + dx) as usize, (yi + dy) as usize)))
                .fold(Vec::new(), |mut acc, (name, t)| {
                    if !acc.iter().any(|&(_, u)| u == t) {
                        acc.push((name, t));
                    }
                    acc
                });
            let here = spec.state_of(x, y);
            let acts: Vec<(String, Vec<(usize, f64)>)> = moves
                .iter()
                .map(|&(name, target)| {
                    let others: Vec<usize> =
                        moves.iter().map(|&(_, t)| t).filter(|&t| t != target).collect();
                    let mut dist = vec![(target, 1.0 - spec.slip)];
                    if spec.slip > 0.0 {
                        if others.is_empty() {
                            dist.push((here, spec.slip));
                        } else {
                            let share = spec.slip / others.len() as f64;
                            dist.extend(others.into_iter().map(|t| (t, share)));
                        }
                    }
                    (name.to_string(), dist)
                })
                .collect();
            actions.push(acts);
        }
    }
    let p_min = actions
        .iter()
        .flatten()
        .flat_map(|(_, d)| d.iter().map(|&(_, p)| p))
        .fold(1.0, f64::min);
    let goal = spec.state_of(spec.goal.0, spec.goal.1);
    let start = spec.state_of(spec.start.0, spec.start.1);
    let mut b = MdpBuilder::new(format!("gridworld{}x{}", spec.width, spec.height), n, start, p_min);
    b.goal(goal);
    for (s, acts) in actions.into_iter().enumerate() {
        if s != goal {
            b.reward(s, spec.step_reward);
        }
        for (label, dist) in acts {
            b.action(s, label, dist);
        }
    }
    b.build()
}
