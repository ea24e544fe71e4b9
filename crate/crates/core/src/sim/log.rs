//! Per-episode event log.
//!
//! ```text
//! # key=value metadata lines (episode, controller, result)
//! tick,frame,robot_col,robot_row,event_type,pedestrian_id
//! ```
//!
//! Every tick contributes one `STEP` or `STALL` row, followed by one row per
//! collision (`SR`, `SP`, `MRP`) with the pedestrian's id.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{CollisionEvent, CollisionType, Episode, EpisodeResult, SimError, Termination};
use crate::grid::CellIndex;

pub const EVENT_LOG_HEADER: &str = "tick,frame,robot_col,robot_row,event_type,pedestrian_id";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickRecord {
    pub tick: u32,
    pub frame: i64,
    pub robot: CellIndex,
    pub moved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: Episode,
    pub controller: String,
    pub ticks: Vec<TickRecord>,
    pub events: Vec<CollisionEvent>,
    pub result: EpisodeResult,
}

impl EpisodeLog {
    pub fn to_csv(&self) -> String {
        let e = &self.episode;
        let r = &self.result;
        let mut out = String::new();
        let _ = writeln!(out, "# controller={}", self.controller);
        let _ = writeln!(out, "# start={},{}", e.start.col, e.start.row);
        let _ = writeln!(out, "# goal={},{}", e.goal.col, e.goal.row);
        let _ = writeln!(out, "# start_frame={}", e.start_frame);
        let _ = writeln!(out, "# seed={}", e.seed);
        let _ = writeln!(out, "# optimal_steps={}", r.optimal_steps);
        let _ = writeln!(out, "# termination={}", r.termination);
        out.push_str(EVENT_LOG_HEADER);
        out.push('\n');
        let mut events = self.events.iter().peekable();
        for t in &self.ticks {
            let kind = if t.moved { "STEP" } else { "STALL" };
            let _ = writeln!(out, "{},{},{},{},{kind},", t.tick, t.frame, t.robot.col, t.robot.row);
            while let Some(ev) = events.next_if(|ev| ev.tick == t.tick) {
                let _ = writeln!(out, "{},{},{},{},{},{}", ev.tick, ev.frame, ev.cell.col, ev.cell.row, ev.kind, ev.pedestrian_id);
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|source| SimError::Io { path: path.display().to_string(), source })
    }
}

fn parse_cell(s: &str) -> Option<CellIndex> {
    let (a, b) = s.split_once(',')?;
    Some(CellIndex::new(a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Rebuilds an [`EpisodeLog`], recomputing every count of the result from the rows.
pub fn parse_event_log(text: &str) -> Result<EpisodeLog, SimError> {
    let mut controller = None;
    let (mut start, mut goal, mut start_frame, mut seed, mut optimal, mut termination) =
        (None, None, None, None, None, None);
    let mut ticks: Vec<TickRecord> = Vec::new();
    let mut events = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| SimError::Log { line: line_no, message };
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let (k, v) = meta.trim().split_once('=').ok_or_else(|| err("metadata without '='".into()))?;
            let bad = || err(format!("invalid {k} value {v:?}"));
            match k {
                "controller" => controller = Some(v.to_string()),
                "start" => start = Some(parse_cell(v).ok_or_else(bad)?),
                "goal" => goal = Some(parse_cell(v).ok_or_else(bad)?),
                "start_frame" => start_frame = Some(v.parse::<i64>().map_err(|_| bad())?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad())?),
                "optimal_steps" => optimal = Some(v.parse::<u32>().map_err(|_| bad())?),
                "termination" => termination = Some(v.parse::<Termination>().map_err(err)?),
                _ => return Err(err(format!("unknown metadata key {k:?}"))),
            }
            continue;
        }
        if !header_seen {
            if line != EVENT_LOG_HEADER {
                return Err(err(format!("expected header {EVENT_LOG_HEADER:?}")));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 columns, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<i64>().map_err(|_| err(format!("invalid number {s:?}")));
        let tick = u32::try_from(num(f[0])?).map_err(|_| err("negative tick".into()))?;
        let frame = num(f[1])?;
        let cell = CellIndex::new(
            u32::try_from(num(f[2])?).map_err(|_| err("negative column".into()))?,
            u32::try_from(num(f[3])?).map_err(|_| err("negative row".into()))?,
        );
        match f[4] {
            "STEP" | "STALL" => ticks.push(TickRecord { tick, frame, robot: cell, moved: f[4] == "STEP" }),
            kind => {
                let kind: CollisionType = kind.parse().map_err(err)?;
                let pedestrian_id = f[5].parse().map_err(|_| err(format!("invalid pedestrian id {:?}", f[5])))?;
                let (robot_moved, ped_moved) = match kind {
                    CollisionType::Sr => (false, true),
                    CollisionType::Sp => (true, false),
                    CollisionType::Mrp => (true, true),
                };
                events.push(CollisionEvent { tick, frame, cell, kind, pedestrian_id, robot_moved, ped_moved });
            }
        }
    }
    let missing = |what: &str| SimError::Log { line: 0, message: format!("missing {what} metadata") };
    let episode = Episode {
        start: start.ok_or_else(|| missing("start"))?,
        goal: goal.ok_or_else(|| missing("goal"))?,
        start_frame: start_frame.ok_or_else(|| missing("start_frame"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
    };
    let optimal_steps = optimal.ok_or_else(|| missing("optimal_steps"))?;
    let termination = termination.ok_or_else(|| missing("termination"))?;
    let steps_taken = ticks.len() as u32;
    let reached_goal = termination == Termination::Goal;
    let count = |k: CollisionType| events.iter().filter(|e| e.kind == k).count() as u32;
    let result = EpisodeResult {
        reached_goal,
        steps_taken,
        optimal_steps,
        delay: if reached_goal { Some(super::delay(optimal_steps, steps_taken)?) } else { None },
        sr: count(CollisionType::Sr),
        sp: count(CollisionType::Sp),
        mrp: count(CollisionType::Mrp),
        stall_ticks: ticks.iter().filter(|t| !t.moved).count() as u32,
        termination,
    };
    Ok(EpisodeLog { episode, controller: controller.unwrap_or_default(), ticks, events, result })
}
