//! RaceTrack: a vehicle moves on a grid of tiles, accelerating by at most one
//! unit per axis and step. The last movement is repeated with the chosen
//! acceleration; with probability `noise_prob` the landing tile is shifted by
//! one tile towards one of its four neighbours. Touching a wall ends the run
//! without reward, crossing a goal tile yields reward 1.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::{ExplicitMdp, MdpBuilder, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tile {
    Start,
    Goal,
    Wall,
    Open,
}

impl Tile {
    fn from_char(c: char) -> Option<Self> {
        match c {
            's' => Some(Tile::Start),
            'g' => Some(Tile::Goal),
            'x' => Some(Tile::Wall),
            '.' => Some(Tile::Open),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Tile::Start => 's',
            Tile::Goal => 'g',
            Tile::Wall => 'x',
            Tile::Open => '.',
        }
    }
}

pub const DEFAULT_MAX_SPEED: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSpec {
    /// Rows from top to bottom.
    pub grid: Vec<Vec<Tile>>,
    pub noise_prob: f64,
    /// Velocity components are clamped to `[-max_speed, max_speed]`.
    pub max_speed: i32,
}

impl TrackSpec {
    /// Parses an ASCII grid, one row per line. Blank lines are ignored.
    pub fn parse(text: &str, noise_prob: f64) -> Result<Self> {
        let mut grid: Vec<Vec<Tile>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            let row = line
                .chars()
                .map(|c| {
                    Tile::from_char(c).ok_or_else(|| Error::Parse {
                        line: idx + 1,
                        msg: format!("unknown tile `{c}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = grid.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: format!("row has {} tiles, expected {}", row.len(), first.len()),
                    });
                }
            }
            grid.push(row);
        }
        let spec = Self {
            grid,
            noise_prob,
            max_speed: DEFAULT_MAX_SPEED,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>, noise_prob: f64) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, noise_prob)
    }

    pub fn with_max_speed(mut self, max_speed: i32) -> Self {
        self.max_speed = max_speed;
        self
    }

    pub fn width(&self) -> usize {
        self.grid.first().map_or(0, Vec::len)
    }

    pub fn height(&self) -> usize {
        self.grid.len()
    }

    /// Tiles outside the grid count as walls.
    pub fn tile(&self, x: i64, y: i64) -> Tile {
        if x < 0 || y < 0 {
            return Tile::Wall;
        }
        self.grid
            .get(y as usize)
            .and_then(|row| row.get(x as usize))
            .copied()
            .unwrap_or(Tile::Wall)
    }

    /// Start tiles in row-major order.
    pub fn starts(&self) -> Vec<(usize, usize)> {
        self.tiles_of(Tile::Start)
    }

    fn tiles_of(&self, kind: Tile) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (y, row) in self.grid.iter().enumerate() {
            for (x, &t) in row.iter().enumerate() {
                if t == kind {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.width() == 0 {
            return Err(Error::validation("track is empty"));
        }
        if self.grid.iter().any(|r| r.len() != self.width()) {
            return Err(Error::validation("track is not rectangular"));
        }
        if self.starts().is_empty() {
            return Err(Error::validation("track has no start tile"));
        }
        if self.tiles_of(Tile::Goal).is_empty() {
            return Err(Error::validation("track has no goal tile"));
        }
        if !(0.0..1.0).contains(&self.noise_prob) {
            return Err(Error::validation(format!(
                "noise probability {} is outside [0, 1)",
                self.noise_prob
            )));
        }
        if self.max_speed < 1 {
            return Err(Error::validation("max speed must be at least 1"));
        }
        Ok(())
    }
}

impl fmt::Display for TrackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.grid {
            let line: String = row.iter().map(|t| t.as_char()).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    Driving { x: i64, y: i64, vx: i64, vy: i64 },
    Goal { x: i64, y: i64 },
    Crash,
}

/// A generated track model together with the tile of every state.
#[derive(Debug, Clone)]
pub struct Racetrack {
    pub mdp: ExplicitMdp,
    pub spec: TrackSpec,
    /// Tile `(x, y)` of each state; `None` for the crash sink.
    pub positions: Vec<Option<(usize, usize)>>,
    /// Velocity of each driving state; `None` for goal and crash states.
    pub velocities: Vec<Option<(i64, i64)>>,
}

impl Racetrack {
    pub fn crash_state(&self) -> Option<StateId> {
        self.positions.iter().position(Option::is_none)
    }
}

/// Follows the straight segment from `(x, y)` to `(tx, ty)` tile by tile and
/// reports the first wall or goal touched.
fn trace(spec: &TrackSpec, x: i64, y: i64, tx: i64, ty: i64, vx: i64, vy: i64) -> Node {
    let (dx, dy) = (tx - x, ty - y);
    let n = dx.abs().max(dy.abs());
    for i in 1..=n {
        let px = x + (dx as f64 * i as f64 / n as f64).round() as i64;
        let py = y + (dy as f64 * i as f64 / n as f64).round() as i64;
        match spec.tile(px, py) {
            Tile::Wall => return Node::Crash,
            Tile::Goal => return Node::Goal { x: px, y: py },
            Tile::Start | Tile::Open => {}
        }
    }
    Node::Driving { x: tx, y: ty, vx, vy }
}

const NEIGHBOURS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn outcomes(spec: &TrackSpec, node: Node, ax: i64, ay: i64) -> Vec<(Node, f64)> {
    let Node::Driving { x, y, vx, vy } = node else {
        unreachable!("only driving states have actions");
    };
    let vmax = spec.max_speed as i64;
    let nvx = (vx + ax).clamp(-vmax, vmax);
    let nvy = (vy + ay).clamp(-vmax, vmax);
    let (tx, ty) = (x + nvx, y + nvy);
    let p = spec.noise_prob;
    // (successor, intended landing hits it, number of perturbed landings)
    let mut hits: Vec<(Node, bool, u32)> = Vec::new();
    let mut add = |succ: Node, intended: bool| match hits.iter_mut().find(|h| h.0 == succ) {
        Some(h) => {
            h.1 |= intended;
            h.2 += u32::from(!intended);
        }
        None => hits.push((succ, intended, u32::from(!intended))),
    };
    add(trace(spec, x, y, tx, ty, nvx, nvy), true);
    if p > 0.0 {
        for (ox, oy) in NEIGHBOURS {
            add(trace(spec, x, y, tx + ox, ty + oy, nvx, nvy), false);
        }
    }
    let out = hits
        .into_iter()
        .map(|(succ, intended, k)| {
            let prob = match (intended, k) {
                (true, 4) => 1.0,
                (true, k) => 1.0 - p * f64::from(4 - k) / 4.0,
                (false, k) => p * f64::from(k) / 4.0,
            };
            (succ, prob)
        })
        .collect();
    out
}

pub fn build_racetrack(spec: &TrackSpec) -> Result<ExplicitMdp> {
    Ok(build_racetrack_layout(spec)?.mdp)
}

/// Builds the model reachable from all start tiles at zero velocity. The
/// first start tile in row-major order is the initial state.
pub fn build_racetrack_layout(spec: &TrackSpec) -> Result<Racetrack> {
    spec.validate()?;
    let mut ids: HashMap<Node, StateId> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    let mut queue = VecDeque::new();
    let mut intern = |node: Node, nodes: &mut Vec<Node>, queue: &mut VecDeque<StateId>| {
        *ids.entry(node).or_insert_with(|| {
            nodes.push(node);
            if matches!(node, Node::Driving { .. }) {
                queue.push_back(nodes.len() - 1);
            }
            nodes.len() - 1
        })
    };
    for (x, y) in spec.starts() {
        let start = Node::Driving {
            x: x as i64,
            y: y as i64,
            vx: 0,
            vy: 0,
        };
        intern(start, &mut nodes, &mut queue);
    }

    let mut actions: Vec<Vec<(String, Vec<(StateId, f64)>)>> = Vec::new();
    while let Some(s) = queue.pop_front() {
        let mut acts = Vec::with_capacity(9);
        for ay in -1..=1 {
            for ax in -1..=1 {
                let dist = outcomes(spec, nodes[s], ax, ay)
                    .into_iter()
                    .map(|(n, p)| (intern(n, &mut nodes, &mut queue), p))
                    .collect();
                acts.push((format!("a{ax:+}{ay:+}"), dist));
            }
        }
        if actions.len() <= s {
            actions.resize(s + 1, Vec::new());
        }
        actions[s] = acts;
    }

    let n = nodes.len();
    let p_min = actions
        .iter()
        .flatten()
        .flat_map(|(_, d)| d.iter().map(|&(_, p)| p))
        .fold(1.0, f64::min);
    let mut b = MdpBuilder::new(format!("racetrack{n}"), n, 0, p_min);
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    for (s, node) in nodes.iter().enumerate() {
        match *node {
            Node::Driving { x, y, vx, vy } => {
                positions.push(Some((x as usize, y as usize)));
                velocities.push(Some((vx, vy)));
            }
            Node::Goal { x, y } => {
                b.goal(s).reward(s, 1.0);
                positions.push(Some((x as usize, y as usize)));
                velocities.push(None);
            }
            Node::Crash => {
                b.goal(s);
                positions.push(None);
                velocities.push(None);
            }
        }
    }
    for (s, acts) in actions.into_iter().enumerate() {
        for (label, dist) in acts {
            b.action(s, label, dist);
        }
    }
    Ok(Racetrack {
        mdp: b.build()?,
        spec: spec.clone(),
        positions,
        velocities,
    })
}
