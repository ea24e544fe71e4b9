use std::collections::BTreeSet;
use std::sync::Arc;

use super::{Observation, Predictor, SimError};
use crate::grid::{Action, ActionMask, CellIndex};
use crate::planner::{DStarLite, PathStatus};
use crate::policy::{
    encode_joint_state, policy_forward, select_action, AgentObservation, JointStateEncoding, PolicyNetwork,
    RecurrentState, SelectionMode,
};
use crate::prediction::{OccupancyForecast, HORIZON};

pub trait Controller {
    fn act(&mut self, obs: &Observation<'_, '_>) -> Result<Action, SimError>;
    fn label(&self) -> String;
}

/// Replays a fixed action list, then stays put.
#[derive(Debug, Clone, Default)]
pub struct ScriptedController {
    plan: Vec<Action>,
    next: usize,
}

impl ScriptedController {
    pub fn new(plan: Vec<Action>) -> Self {
        Self { plan, next: 0 }
    }
}

impl Controller for ScriptedController {
    fn act(&mut self, _: &Observation<'_, '_>) -> Result<Action, SimError> {
        let a = self.plan.get(self.next).copied().unwrap_or(Action::Stay);
        self.next += 1;
        Ok(a)
    }

    fn label(&self) -> String {
        "scripted".into()
    }
}

/// Heads straight for the goal, diagonally first, ignoring pedestrians.
#[derive(Debug, Clone, Copy, Default)]
pub struct StraightLineController;

impl Controller for StraightLineController {
    fn act(&mut self, obs: &Observation<'_, '_>) -> Result<Action, SimError> {
        let dc = (i64::from(obs.goal.col) - i64::from(obs.robot.col)).signum();
        let dr = (i64::from(obs.goal.row) - i64::from(obs.robot.row)).signum();
        let to = CellIndex::new((i64::from(obs.robot.col) + dc) as u32, (i64::from(obs.robot.row) + dr) as u32);
        Ok(Action::between(obs.robot, to).unwrap_or(Action::Stay))
    }

    fn label(&self) -> String {
        "straight".into()
    }
}

/// D* Lite over the pedestrians' current cells plus a predictor's forecast.
///
/// When the planner finds no path the robot takes the action whose target
/// cell stays free for the most forecast steps (staying first on ties), and
/// never steps into a currently occupied cell.
pub struct DStarController {
    predictor: Arc<dyn Predictor>,
    planner: Option<DStarLite>,
}

impl DStarController {
    pub fn new(predictor: Arc<dyn Predictor>) -> Self {
        Self { predictor, planner: None }
    }

    pub fn planner(&self) -> Option<&DStarLite> {
        self.planner.as_ref()
    }
}

fn evasive_action(obs: &Observation<'_, '_>, forecast: &OccupancyForecast, current: &BTreeSet<CellIndex>) -> Action {
    let grid = obs.replay.grid();
    let mut best = (Action::Stay, None::<usize>);
    for a in Action::ALL {
        let Some(target) = grid.apply(obs.robot, a) else { continue };
        if a != Action::Stay && current.contains(&target) {
            continue;
        }
        let clear = (0..HORIZON).take_while(|&k| !forecast.step(k).contains(&target)).count();
        if best.1.is_none_or(|b| clear > b) {
            best = (a, Some(clear));
        }
    }
    best.0
}

impl Controller for DStarController {
    fn act(&mut self, obs: &Observation<'_, '_>) -> Result<Action, SimError> {
        let planner = match &mut self.planner {
            Some(p) => {
                p.move_start(obs.robot)?;
                p
            }
            slot => slot.insert(DStarLite::new(*obs.replay.grid(), obs.robot, obs.goal, [])?),
        };
        let current = obs.occupied_cells();
        let forecast = self.predictor.forecast(obs)?;
        planner.update_obstacles(&forecast, &current);
        if planner.compute_shortest_path() == PathStatus::PathExists {
            let next = planner.next_move()?;
            return Ok(Action::between(obs.robot, next).expect("next move is adjacent"));
        }
        Ok(evasive_action(obs, &forecast, &current))
    }

    fn label(&self) -> String {
        self.predictor.label()
    }
}

/// Joint-state encoding and legal-move mask for the policy. The robot and
/// pedestrians are given radii of half a cell width.
pub fn policy_observation(obs: &Observation<'_, '_>) -> (JointStateEncoding, ActionMask) {
    let grid = obs.replay.grid();
    let here = grid.cell_center(obs.robot);
    let before = grid.cell_center(obs.previous_robot);
    let radius = grid.cell_w / 2.0;
    let robot = AgentObservation::new(here, (here.x - before.x, here.y - before.y), radius);
    let peds: Vec<AgentObservation> =
        obs.pedestrians.iter().map(|p| AgentObservation::new(p.position, p.velocity(), radius)).collect();
    let enc = encode_joint_state(&robot, grid.cell_center(obs.goal), &peds, obs.replay.store().scene());
    (enc, grid.action_mask(obs.robot))
}

/// Recurrent policy; hidden state lives for one episode.
pub struct PolicyController {
    net: Arc<PolicyNetwork>,
    state: RecurrentState,
    mode: SelectionMode,
}

impl PolicyController {
    pub fn new(net: Arc<PolicyNetwork>, mode: SelectionMode) -> Self {
        let state = net.initial_state();
        Self { net, state, mode }
    }
}

impl Controller for PolicyController {
    fn act(&mut self, obs: &Observation<'_, '_>) -> Result<Action, SimError> {
        let (enc, mask) = policy_observation(obs);
        let (dist, next) = policy_forward(&self.net, enc.as_slice(), &self.state, &mask)?;
        self.state = next;
        Ok(select_action(&dist, &mut self.mode))
    }

    fn label(&self) -> String {
        "policy".into()
    }
}
