//! Trajectory-replay simulation: pedestrians follow their recordings, the
//! robot follows a controller, and cell co-occupancy is scored as a
//! collision.
//!
//! One tick: the controller looks at frame `f`, the pedestrians advance to
//! their recorded cells at `f + 1` while the robot executes its action, and
//! every pedestrian then sharing the robot's cell is classified.

mod controllers;
mod corridor;
mod episodes;
mod log;
mod predictors;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::{DatasetError, TrajectoryStore};
use crate::grid::{Action, CellIndex, GridSpec, PixelPoint};
use crate::planner::PlannerError;
use crate::policy::PolicyError;
use crate::prediction::PredictionError;

pub use controllers::{
    policy_observation, Controller, DStarController, PolicyController, ScriptedController, StraightLineController,
};
pub use corridor::{corridor_case, ScenarioCase, CorridorConfig};
pub use episodes::{make_episodes, max_steps, EpisodeSampler};
pub use log::{parse_event_log, EpisodeLog, TickRecord, EVENT_LOG_HEADER};
pub use predictors::{
    BaselinePredictor, ExternalPredictor, ForestPredictor, PerfectPredictor, Predictor, FALLBACK_RADIUS,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error(transparent)]
    Policy(Box<PolicyError>),
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
    #[error("cannot draw {requested} episodes: {reason}")]
    NotEnoughEpisodes { requested: usize, reason: String },
    #[error("recording exhausted at frame {0}")]
    RecordingExhausted(i64),
    #[error("action {action} leaves the grid at {cell}")]
    IllegalAction { action: &'static str, cell: CellIndex },
    #[error("delay is undefined: {0}")]
    Delay(String),
    #[error("event log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<PolicyError> for SimError {
    fn from(e: PolicyError) -> Self {
        SimError::Policy(Box::new(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CollisionType {
    /// Pedestrian walks into a stationary robot.
    Sr,
    /// Robot walks into a stationary pedestrian.
    Sp,
    /// Both moved into the cell during the same tick.
    Mrp,
}

impl CollisionType {
    pub const ALL: [CollisionType; 3] = [CollisionType::Sr, CollisionType::Sp, CollisionType::Mrp];

    pub fn as_str(self) -> &'static str {
        match self {
            CollisionType::Sr => "SR",
            CollisionType::Sp => "SP",
            CollisionType::Mrp => "MRP",
        }
    }
}

impl fmt::Display for CollisionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CollisionType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SR" => Ok(CollisionType::Sr),
            "SP" => Ok(CollisionType::Sp),
            "MRP" => Ok(CollisionType::Mrp),
            other => Err(format!("unknown collision type {other:?}")),
        }
    }
}

/// `None` when neither side moved: that overlap already existed and was
/// counted when it began.
pub fn classify_collision(robot_moved: bool, ped_moved: bool) -> Option<CollisionType> {
    match (robot_moved, ped_moved) {
        (false, true) => Some(CollisionType::Sr),
        (true, false) => Some(CollisionType::Sp),
        (true, true) => Some(CollisionType::Mrp),
        (false, false) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollisionEvent {
    pub tick: u32,
    pub frame: i64,
    pub cell: CellIndex,
    pub kind: CollisionType,
    pub pedestrian_id: u64,
    pub robot_moved: bool,
    pub ped_moved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Episode {
    pub start: CellIndex,
    pub goal: CellIndex,
    pub start_frame: i64,
    pub seed: u64,
}

/// Shortest step count on the empty 8-connected grid.
pub fn optimal_steps(start: CellIndex, goal: CellIndex) -> u32 {
    start.chebyshev(goal)
}

/// Relative delay in percent, `(t_hat / t - 1) * 100`.
pub fn delay(optimal: u32, taken: u32) -> Result<f64, SimError> {
    if optimal == 0 {
        return Err(SimError::Delay("optimal step count is zero".into()));
    }
    if taken < optimal {
        return Err(SimError::Delay(format!("{taken} steps beat the optimum of {optimal}")));
    }
    // written as an integer difference so that e.g. 107/100 gives exactly 7
    Ok(f64::from(taken - optimal) * 100.0 / f64::from(optimal))
}

/// A pedestrian as seen at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedestrianView {
    pub track: u32,
    pub pedestrian_id: u64,
    pub position: PixelPoint,
    pub cell: CellIndex,
    /// Position one frame earlier, if the track already existed.
    pub previous: Option<PixelPoint>,
}

impl PedestrianView {
    /// Pixels per frame; zero on the first frame of a track.
    pub fn velocity(&self) -> (f64, f64) {
        self.previous.map_or((0.0, 0.0), |p| (self.position.x - p.x, self.position.y - p.y))
    }
}

/// Read-only view of a recording on a grid, bounded to a frame window.
#[derive(Debug, Clone, Copy)]
pub struct Replay<'a> {
    store: &'a TrajectoryStore,
    grid: GridSpec,
    frames: (i64, i64),
}

impl<'a> Replay<'a> {
    /// Spans the store's own frame range.
    pub fn new(store: &'a TrajectoryStore, grid: GridSpec) -> Result<Self, SimError> {
        let frames =
            store.frame_range().ok_or_else(|| SimError::InvalidEpisode("the recording has no frames".into()))?;
        Ok(Self { store, grid, frames })
    }

    /// Explicit frame window, e.g. a scenario that outlasts its pedestrians.
    pub fn with_frames(store: &'a TrajectoryStore, grid: GridSpec, first: i64, last: i64) -> Result<Self, SimError> {
        if last < first {
            return Err(SimError::InvalidEpisode(format!("empty frame window {first}..={last}")));
        }
        Ok(Self { store, grid, frames: (first, last) })
    }

    pub fn store(&self) -> &'a TrajectoryStore {
        self.store
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn frames(&self) -> (i64, i64) {
        self.frames
    }

    pub fn pedestrians(&self, frame: i64) -> Vec<PedestrianView> {
        self.store
            .active_at(frame)
            .iter()
            .map(|&i| {
                let t = self.store.track(i as usize);
                let position = t.position_at(frame).expect("active tracks cover the frame");
                PedestrianView {
                    track: i,
                    pedestrian_id: t.pedestrian_id,
                    position,
                    cell: self.grid.cell_of(position),
                    previous: t.position_at(frame - 1),
                }
            })
            .collect()
    }

    pub fn occupancy(&self, frame: i64) -> BTreeSet<CellIndex> {
        self.store
            .active_at(frame)
            .iter()
            .filter_map(|&i| self.store.track(i as usize).position_at(frame))
            .map(|p| self.grid.cell_of(p))
            .collect()
    }
}

/// What a controller sees before choosing an action.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'s, 'a> {
    pub tick: u32,
    pub frame: i64,
    pub robot: CellIndex,
    pub previous_robot: CellIndex,
    pub goal: CellIndex,
    pub replay: &'s Replay<'a>,
    pub pedestrians: &'s [PedestrianView],
}

impl Observation<'_, '_> {
    pub fn occupied_cells(&self) -> BTreeSet<CellIndex> {
        self.pedestrians.iter().map(|p| p.cell).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub robot_moved: bool,
    pub events: Vec<CollisionEvent>,
}

#[derive(Debug, Clone)]
pub struct SimulationState<'a> {
    replay: Replay<'a>,
    episode: Episode,
    frame: i64,
    tick: u32,
    robot: CellIndex,
    previous_robot: CellIndex,
    pedestrians: Vec<PedestrianView>,
    stall_ticks: u32,
    counts: [u32; 3],
    events: Vec<CollisionEvent>,
    ticks: Vec<TickRecord>,
}

impl<'a> SimulationState<'a> {
    pub fn new(replay: Replay<'a>, episode: Episode) -> Result<Self, SimError> {
        let grid = replay.grid();
        for c in [episode.start, episode.goal] {
            grid.checked_cell(i64::from(c.col), i64::from(c.row)).map_err(DatasetError::from)?;
        }
        if episode.start == episode.goal {
            return Err(SimError::InvalidEpisode("start equals goal".into()));
        }
        let (lo, hi) = replay.frames();
        if episode.start_frame < lo || episode.start_frame > hi {
            return Err(SimError::InvalidEpisode(format!(
                "start frame {} outside the recording {lo}..={hi}",
                episode.start_frame
            )));
        }
        Ok(Self {
            pedestrians: replay.pedestrians(episode.start_frame),
            replay,
            episode,
            frame: episode.start_frame,
            tick: 0,
            robot: episode.start,
            previous_robot: episode.start,
            stall_ticks: 0,
            counts: [0; 3],
            events: Vec::new(),
            ticks: Vec::new(),
        })
    }

    pub fn replay(&self) -> &Replay<'a> {
        &self.replay
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    pub fn frame(&self) -> i64 {
        self.frame
    }

    pub fn tick(&self) -> u32 {
        self.tick
    }

    pub fn robot(&self) -> CellIndex {
        self.robot
    }

    pub fn at_goal(&self) -> bool {
        self.robot == self.episode.goal
    }

    pub fn pedestrians(&self) -> &[PedestrianView] {
        &self.pedestrians
    }

    pub fn stall_ticks(&self) -> u32 {
        self.stall_ticks
    }

    pub fn count(&self, kind: CollisionType) -> u32 {
        self.counts[kind as usize]
    }

    pub fn events(&self) -> &[CollisionEvent] {
        &self.events
    }

    pub fn ticks(&self) -> &[TickRecord] {
        &self.ticks
    }

    /// Whether the recording holds another frame.
    pub fn can_advance(&self) -> bool {
        self.frame < self.replay.frames().1
    }

    pub fn observation(&self) -> Observation<'_, 'a> {
        Observation {
            tick: self.tick,
            frame: self.frame,
            robot: self.robot,
            previous_robot: self.previous_robot,
            goal: self.episode.goal,
            replay: &self.replay,
            pedestrians: &self.pedestrians,
        }
    }

    /// Advances one tick with the robot executing `action`.
    pub fn step(&mut self, action: Action) -> Result<TickReport, SimError> {
        if !self.can_advance() {
            return Err(SimError::RecordingExhausted(self.frame));
        }
        let target = self
            .replay
            .grid()
            .apply(self.robot, action)
            .ok_or(SimError::IllegalAction { action: action.name(), cell: self.robot })?;
        let before: Vec<(u32, CellIndex)> = self.pedestrians.iter().map(|p| (p.track, p.cell)).collect();

        self.frame += 1;
        self.tick += 1;
        self.pedestrians = self.replay.pedestrians(self.frame);
        self.previous_robot = self.robot;
        self.robot = target;
        let robot_moved = self.previous_robot != self.robot;
        if !robot_moved {
            self.stall_ticks += 1;
        }

        let mut events = Vec::new();
        for p in self.pedestrians.iter().filter(|p| p.cell == self.robot) {
            let ped_moved = before.iter().find(|(t, _)| *t == p.track).is_none_or(|(_, c)| *c != p.cell);
            if let Some(kind) = classify_collision(robot_moved, ped_moved) {
                events.push(CollisionEvent {
                    tick: self.tick,
                    frame: self.frame,
                    cell: self.robot,
                    kind,
                    pedestrian_id: p.pedestrian_id,
                    robot_moved,
                    ped_moved,
                });
                self.counts[kind as usize] += 1;
            }
        }
        self.events.extend_from_slice(&events);
        self.ticks.push(TickRecord { tick: self.tick, frame: self.frame, robot: self.robot, moved: robot_moved });
        Ok(TickReport { robot_moved, events })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    Goal,
    RecordingEnd,
    StepCap,
    Aborted(String),
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Goal => f.write_str("goal"),
            Termination::RecordingEnd => f.write_str("recording_end"),
            Termination::StepCap => f.write_str("step_cap"),
            Termination::Aborted(why) => write!(f, "aborted: {why}"),
        }
    }
}

impl FromStr for Termination {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "goal" => Ok(Termination::Goal),
            "recording_end" => Ok(Termination::RecordingEnd),
            "step_cap" => Ok(Termination::StepCap),
            other => other
                .strip_prefix("aborted: ")
                .map(|why| Termination::Aborted(why.to_string()))
                .ok_or_else(|| format!("unknown termination {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub reached_goal: bool,
    pub steps_taken: u32,
    pub optimal_steps: u32,
    /// Percent; only defined when the goal was reached.
    pub delay: Option<f64>,
    pub sr: u32,
    pub sp: u32,
    pub mrp: u32,
    pub stall_ticks: u32,
    pub termination: Termination,
}

impl EpisodeResult {
    pub fn collisions(&self) -> u32 {
        self.sr + self.sp + self.mrp
    }

    pub fn failed(&self) -> bool {
        !self.reached_goal
    }
}

/// Runs `controller` until the goal, the end of the recording, or the step
/// cap. Controller errors end the episode as aborted.
pub fn run_episode(
    controller: &mut dyn Controller,
    episode: &Episode,
    replay: &Replay<'_>,
) -> Result<EpisodeLog, SimError> {
    let mut state = SimulationState::new(*replay, *episode)?;
    let optimal = optimal_steps(episode.start, episode.goal);
    let cap = max_steps(optimal);
    let termination = loop {
        if state.at_goal() {
            break Termination::Goal;
        }
        if state.tick() >= cap {
            break Termination::StepCap;
        }
        if !state.can_advance() {
            break Termination::RecordingEnd;
        }
        let action = match controller.act(&state.observation()) {
            Ok(a) => a,
            Err(e) => break Termination::Aborted(e.to_string()),
        };
        if let Err(e) = state.step(action) {
            break Termination::Aborted(e.to_string());
        }
    };
    let reached_goal = termination == Termination::Goal;
    let result = EpisodeResult {
        reached_goal,
        steps_taken: state.tick(),
        optimal_steps: optimal,
        delay: if reached_goal { Some(delay(optimal, state.tick())?) } else { None },
        sr: state.count(CollisionType::Sr),
        sp: state.count(CollisionType::Sp),
        mrp: state.count(CollisionType::Mrp),
        stall_ticks: state.stall_ticks(),
        termination,
    };
    Ok(EpisodeLog {
        episode: *episode,
        controller: controller.label(),
        ticks: state.ticks().to_vec(),
        events: state.events().to_vec(),
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RawTrajectory;
    use crate::grid::SceneSpec;

    fn c(col: u32, row: u32) -> CellIndex {
        CellIndex::new(col, row)
    }

    #[test]
    fn truth_table() {
        assert_eq!(classify_collision(false, true), Some(CollisionType::Sr));
        assert_eq!(classify_collision(true, false), Some(CollisionType::Sp));
        assert_eq!(classify_collision(true, true), Some(CollisionType::Mrp));
        assert_eq!(classify_collision(false, false), None);
    }

    #[test]
    fn delay_formula() {
        assert_eq!(delay(10, 10).unwrap(), 0.0);
        assert_eq!(delay(100, 107).unwrap(), 7.0);
        assert_eq!(delay(50, 51).unwrap(), 2.0);
        assert!(delay(0, 3).is_err());
        assert!(delay(5, 4).is_err());
        assert_eq!(optimal_steps(c(0, 0), c(5, 2)), 5);
    }

    fn scene() -> (SceneSpec, GridSpec) {
        let s = SceneSpec::new(300.0, 300.0, 1.0).unwrap();
        (s, GridSpec::new(&s, 10, 10).unwrap())
    }

    fn centers(g: &GridSpec, cells: &[(u32, u32)]) -> Vec<PixelPoint> {
        cells.iter().map(|&(x, y)| g.cell_center(c(x, y))).collect()
    }

    #[test]
    fn pedestrian_walking_through_a_parked_robot() {
        let (s, g) = scene();
        let walker = RawTrajectory::from_positions(7, 0, &centers(&g, &[(3, 5), (4, 5), (5, 5), (6, 5), (7, 5)]));
        let store = TrajectoryStore::new(s, vec![walker]).unwrap();
        let replay = Replay::new(&store, g).unwrap();
        let ep = Episode { start: c(5, 5), goal: c(9, 9), start_frame: 0, seed: 0 };
        let mut stay = ScriptedController::new(vec![]);
        let log = run_episode(&mut stay, &ep, &replay).unwrap();
        let r = &log.result;
        assert_eq!((r.sr, r.sp, r.mrp), (1, 0, 0));
        assert_eq!(log.events[0].frame, 2);
        assert_eq!(r.termination, Termination::RecordingEnd);
        assert_eq!(r.steps_taken, 4);
        assert_eq!(r.stall_ticks, 4);
        assert!(!r.reached_goal && r.delay.is_none());
    }

    #[test]
    fn simultaneous_entry_is_mrp_and_swap_is_not_a_collision() {
        let (s, g) = scene();
        let down = RawTrajectory::from_positions(1, 0, &centers(&g, &[(2, 0), (2, 1), (2, 2)]));
        let swap = RawTrajectory::from_positions(2, 0, &centers(&g, &[(6, 1), (5, 1)]));
        let store = TrajectoryStore::new(s, vec![down, swap]).unwrap();
        let replay = Replay::with_frames(&store, g, 0, 30).unwrap();
        // robot (1,1) -> (2,1) while pedestrian 1 goes (2,0) -> (2,1)
        let ep = Episode { start: c(1, 1), goal: c(9, 1), start_frame: 0, seed: 0 };
        let mut east = ScriptedController::new(vec![Action::E]);
        let log = run_episode(&mut east, &ep, &replay).unwrap();
        assert_eq!((log.result.sr, log.result.sp, log.result.mrp), (0, 0, 1));
        // robot (5,1) -> (6,1) while pedestrian 2 goes (6,1) -> (5,1)
        let ep = Episode { start: c(5, 1), goal: c(9, 1), start_frame: 0, seed: 0 };
        let mut east = ScriptedController::new(vec![Action::E]);
        let log = run_episode(&mut east, &ep, &replay).unwrap();
        assert_eq!(log.result.collisions(), 0);
    }

    #[test]
    fn stepping_onto_a_standing_pedestrian_is_sp_once() {
        let (s, g) = scene();
        let stand = RawTrajectory::from_positions(3, 0, &centers(&g, &[(4, 4); 6]));
        let store = TrajectoryStore::new(s, vec![stand]).unwrap();
        let replay = Replay::with_frames(&store, g, 0, 30).unwrap();
        let ep = Episode { start: c(3, 4), goal: c(9, 9), start_frame: 0, seed: 0 };
        let mut ctl = ScriptedController::new(vec![Action::E, Action::Stay, Action::Stay]);
        let log = run_episode(&mut ctl, &ep, &replay).unwrap();
        assert_eq!((log.result.sr, log.result.sp, log.result.mrp), (0, 1, 0));
    }

    #[test]
    fn optimal_controller_on_empty_scene() {
        let (s, g) = scene();
        let store = TrajectoryStore::new(s, vec![RawTrajectory::from_positions(1, 0, &centers(&g, &[(0, 0); 2]))])
            .unwrap();
        let replay = Replay::with_frames(&store, g, 0, 100).unwrap();
        let ep = Episode { start: c(2, 7), goal: c(9, 1), start_frame: 5, seed: 0 };
        let log = run_episode(&mut StraightLineController, &ep, &replay).unwrap();
        assert!(log.result.reached_goal);
        assert_eq!(log.result.steps_taken, 7);
        assert_eq!(log.result.delay, Some(0.0));
        assert_eq!(log.result.collisions(), 0);
    }

    #[test]
    fn state_rejects_bad_episodes() {
        let (s, g) = scene();
        let store = TrajectoryStore::new(s, vec![RawTrajectory::from_positions(1, 0, &centers(&g, &[(0, 0); 3]))])
            .unwrap();
        let replay = Replay::new(&store, g).unwrap();
        let same = Episode { start: c(1, 1), goal: c(1, 1), start_frame: 0, seed: 0 };
        assert!(SimulationState::new(replay, same).is_err());
        let late = Episode { start: c(1, 1), goal: c(2, 1), start_frame: 9, seed: 0 };
        assert!(SimulationState::new(replay, late).is_err());
        let mut st = SimulationState::new(replay, Episode { start: c(0, 0), goal: c(2, 1), start_frame: 0, seed: 0 })
            .unwrap();
        assert!(matches!(st.step(Action::N), Err(SimError::IllegalAction { .. })));
        st.step(Action::Stay).unwrap();
        st.step(Action::Stay).unwrap();
        assert!(matches!(st.step(Action::Stay), Err(SimError::RecordingExhausted(2))));
    }
}
