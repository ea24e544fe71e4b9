//! Trajectory-replay benchmark for robot navigation through pedestrian crowds.
//!
//! Recorded (or synthetic) pedestrian trajectories are replayed on a grid
//! while a robot controller moves from a start cell to a goal cell. Two
//! controller families are provided: incremental D* Lite planning around
//! predicted pedestrian positions, and a recurrent policy trained by
//! reinforcement in the same simulator. Episodes are scored by relative
//! delay and by collisions split into three classes (pedestrian hits a
//! stationary robot, robot hits a stationary pedestrian, both moving).

pub mod bench;
pub mod dataset;
pub mod prediction;
pub mod grid;
pub mod kv;
pub mod planner;
pub mod policy;
pub mod sim;

pub use grid::{Action, ActionMask, CellIndex, GridSpec, PixelPoint, SceneSpec};
