pub mod bandit;
pub mod gridworld;
pub mod racetrack;

pub use bandit::{build_bandit, ArmRule, BanditSpec};
pub use gridworld::{build_gridworld, GridworldSpec};
pub use racetrack::{build_racetrack, build_racetrack_layout, Racetrack, Tile, TrackSpec};
