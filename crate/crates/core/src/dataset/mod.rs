//! Pedestrian trajectory ingestion, filtering and discretization.
//!
//! Trajectory files hold one `pedestrian_id frame x y` record per line.
//! Records for a pedestrian may appear in any order; at load time they are
//! sorted by frame and split into gap-free segments so that consecutive
//! points of a [`RawTrajectory`] are always exactly one frame apart.

mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::grid::{CellIndex, GeometryError, GridSpec, PixelPoint, SceneSpec};
use crate::kv::KvError;

pub use synth::{synth_crowd, straight_walker, CrowdConfig};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate record for pedestrian {pedestrian_id} at frame {frame}")]
    DuplicateRecord { line: usize, pedestrian_id: u64, frame: i64 },
    #[error("{} record(s) outside the scene; first: {}", .0.len(), .0[0])]
    OutOfBounds(Vec<RecordIssue>),
    #[error("frame {frame} is outside the recording range {range}")]
    FrameOutOfRange { frame: i64, range: FrameRangeDisplay },
    #[error("invalid trajectory for pedestrian {pedestrian_id}: {reason}")]
    InvalidTrajectory { pedestrian_id: u64, reason: String },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Config(#[from] KvError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRangeDisplay(pub Option<(i64, i64)>);

impl fmt::Display for FrameRangeDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some((a, b)) => write!(f, "[{a}, {b}]"),
            None => f.write_str("(empty)"),
        }
    }
}

/// A rejected input record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordIssue {
    pub line: usize,
    pub pedestrian_id: u64,
    pub frame: i64,
    pub x: f64,
    pub y: f64,
}

impl fmt::Display for RecordIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: pedestrian {} frame {} at ({}, {}) is outside the scene",
            self.line, self.pedestrian_id, self.frame, self.x, self.y
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub frame: i64,
    pub pos: PixelPoint,
}

/// A gap-free pixel path of one pedestrian.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrajectory {
    pub pedestrian_id: u64,
    pub points: Vec<TrackPoint>,
}

impl RawTrajectory {
    /// Builds a trajectory of consecutive frames starting at `first_frame`.
    pub fn from_positions(pedestrian_id: u64, first_frame: i64, positions: &[PixelPoint]) -> Self {
        let points = positions
            .iter()
            .enumerate()
            .map(|(i, &pos)| TrackPoint { frame: first_frame + i as i64, pos })
            .collect();
        Self { pedestrian_id, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_frame(&self) -> i64 {
        self.points[0].frame
    }

    pub fn last_frame(&self) -> i64 {
        self.points[self.points.len() - 1].frame
    }

    pub fn covers(&self, frame: i64) -> bool {
        !self.points.is_empty() && frame >= self.first_frame() && frame <= self.last_frame()
    }

    pub fn position_at(&self, frame: i64) -> Option<PixelPoint> {
        self.covers(frame).then(|| self.points[(frame - self.first_frame()) as usize].pos)
    }

    /// Up to `n` most recent points ending at `frame` (inclusive), oldest first.
    pub fn history(&self, frame: i64, n: usize) -> &[TrackPoint] {
        if !self.covers(frame) {
            return &[];
        }
        let end = (frame - self.first_frame()) as usize + 1;
        &self.points[end.saturating_sub(n)..end]
    }

    fn validate(&self, scene: &SceneSpec) -> Result<(), DatasetError> {
        let bad = |reason: String| DatasetError::InvalidTrajectory { pedestrian_id: self.pedestrian_id, reason };
        if self.points.is_empty() {
            return Err(bad("no points".into()));
        }
        for w in self.points.windows(2) {
            if w[1].frame != w[0].frame + 1 {
                return Err(bad(format!("frames {} and {} are not consecutive", w[0].frame, w[1].frame)));
            }
        }
        if let Some(p) = self.points.iter().find(|p| !scene.contains(p.pos)) {
            return Err(bad(format!("frame {} at ({}, {}) is outside the scene", p.frame, p.pos.x, p.pos.y)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTrajectory {
    pub pedestrian_id: u64,
    pub cells: Vec<(i64, CellIndex)>,
}

/// One cell per input point, `cell = (floor(x / cell_w), floor(y / cell_h))`.
pub fn to_grid(traj: &RawTrajectory, grid: &GridSpec) -> GridTrajectory {
    GridTrajectory {
        pedestrian_id: traj.pedestrian_id,
        cells: traj.points.iter().map(|p| (p.frame, grid.cell_of(p.pos))).collect(),
    }
}

/// Immutable collection of trajectories with a per-frame activity index.
#[derive(Debug, Clone)]
pub struct TrajectoryStore {
    scene: SceneSpec,
    trajectories: Vec<RawTrajectory>,
    frame_range: Option<(i64, i64)>,
    active: Vec<Vec<u32>>,
}

impl PartialEq for TrajectoryStore {
    fn eq(&self, other: &Self) -> bool {
        self.scene == other.scene && self.trajectories == other.trajectories
    }
}

impl TrajectoryStore {
    /// Validates every trajectory and orders them by `(pedestrian_id, first frame)`.
    pub fn new(scene: SceneSpec, mut trajectories: Vec<RawTrajectory>) -> Result<Self, DatasetError> {
        for t in &trajectories {
            t.validate(&scene)?;
        }
        trajectories.sort_by_key(|t| (t.pedestrian_id, t.first_frame()));
        let frame_range = trajectories.iter().fold(None, |acc: Option<(i64, i64)>, t| {
            Some(match acc {
                None => (t.first_frame(), t.last_frame()),
                Some((lo, hi)) => (lo.min(t.first_frame()), hi.max(t.last_frame())),
            })
        });
        let mut active = Vec::new();
        if let Some((lo, hi)) = frame_range {
            active = vec![Vec::new(); (hi - lo + 1) as usize];
            for (i, t) in trajectories.iter().enumerate() {
                for p in &t.points {
                    active[(p.frame - lo) as usize].push(i as u32);
                }
            }
        }
        Ok(Self { scene, trajectories, frame_range, active })
    }

    pub fn empty(scene: SceneSpec) -> Self {
        Self { scene, trajectories: Vec::new(), frame_range: None, active: Vec::new() }
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }

    pub fn trajectories(&self) -> &[RawTrajectory] {
        &self.trajectories
    }

    pub fn track(&self, idx: usize) -> &RawTrajectory {
        &self.trajectories[idx]
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn frame_range(&self) -> Option<(i64, i64)> {
        self.frame_range
    }

    /// All segments recorded for one pedestrian.
    pub fn by_pedestrian(&self, pedestrian_id: u64) -> impl Iterator<Item = &RawTrajectory> {
        let start = self.trajectories.partition_point(|t| t.pedestrian_id < pedestrian_id);
        self.trajectories[start..].iter().take_while(move |t| t.pedestrian_id == pedestrian_id)
    }

    /// Indices of trajectories that have a point at `frame`. Empty outside the range.
    pub fn active_at(&self, frame: i64) -> &[u32] {
        match self.frame_range {
            Some((lo, hi)) if frame >= lo && frame <= hi => &self.active[(frame - lo) as usize],
            _ => &[],
        }
    }

    pub fn total_points(&self) -> usize {
        self.trajectories.iter().map(RawTrajectory::len).sum()
    }

    pub fn summary(&self) -> StoreSummary {
        let pedestrians = self.trajectories.iter().map(|t| t.pedestrian_id).collect::<BTreeSet<_>>().len();
        let points = self.total_points();
        StoreSummary {
            pedestrians,
            trajectories: self.len(),
            points,
            mean_length: if self.is_empty() { 0.0 } else { points as f64 / self.len() as f64 },
            frame_range: self.frame_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreSummary {
    pub pedestrians: usize,
    pub trajectories: usize,
    pub points: usize,
    pub mean_length: f64,
    pub frame_range: Option<(i64, i64)>,
}

impl fmt::Display for StoreSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} trajectories ({} pedestrians), {} points, mean length {:.2}, frames {}",
            self.trajectories,
            self.pedestrians,
            self.points,
            self.mean_length,
            FrameRangeDisplay(self.frame_range)
        )
    }
}

/// Reads a trajectory file. See [`parse_trajectories`].
pub fn load_trajectories(path: impl AsRef<Path>, scene: SceneSpec) -> Result<TrajectoryStore, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_trajectories(&text, scene)
}

/// Parses `pedestrian_id frame x y` records. Every out-of-bounds record is
/// collected before failing so the caller gets the complete list.
/// Single-point segments left over after gap splitting are dropped.
pub fn parse_trajectories(text: &str, scene: SceneSpec) -> Result<TrajectoryStore, DatasetError> {
    let mut per_ped: BTreeMap<u64, Vec<(i64, PixelPoint, usize)>> = BTreeMap::new();
    let mut issues = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        if fields.len() != 4 {
            return Err(DatasetError::Parse {
                line: line_no,
                message: format!("expected 4 fields `pedestrian_id frame x y`, found {}", fields.len()),
            });
        }
        let parse_err = |what: &str, v: &str| DatasetError::Parse { line: line_no, message: format!("invalid {what} {v:?}") };
        let id: u64 = fields[0].parse().map_err(|_| parse_err("pedestrian id", fields[0]))?;
        let frame: i64 = fields[1].parse().map_err(|_| parse_err("frame", fields[1]))?;
        let x: f64 = fields[2].parse().map_err(|_| parse_err("x", fields[2]))?;
        let y: f64 = fields[3].parse().map_err(|_| parse_err("y", fields[3]))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(parse_err("coordinate", line));
        }
        let pos = PixelPoint::new(x, y);
        if !scene.contains(pos) {
            issues.push(RecordIssue { line: line_no, pedestrian_id: id, frame, x, y });
            continue;
        }
        per_ped.entry(id).or_default().push((frame, pos, line_no));
    }
    if !issues.is_empty() {
        return Err(DatasetError::OutOfBounds(issues));
    }

    let mut trajectories = Vec::new();
    for (id, mut recs) in per_ped {
        recs.sort_by_key(|r| (r.0, r.2));
        if let Some(w) = recs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(DatasetError::DuplicateRecord { line: w[1].2, pedestrian_id: id, frame: w[1].0 });
        }
        let mut segment: Vec<TrackPoint> = Vec::new();
        for (frame, pos, _) in recs {
            if segment.last().is_some_and(|p| p.frame + 1 != frame) {
                push_segment(&mut trajectories, id, std::mem::take(&mut segment));
            }
            segment.push(TrackPoint { frame, pos });
        }
        push_segment(&mut trajectories, id, segment);
    }
    TrajectoryStore::new(scene, trajectories)
}

fn push_segment(out: &mut Vec<RawTrajectory>, pedestrian_id: u64, points: Vec<TrackPoint>) {
    if points.len() >= 2 {
        out.push(RawTrajectory { pedestrian_id, points });
    }
}

/// Writes the store in the trajectory file format, ordered by pedestrian and frame.
pub fn write_trajectories<W: Write>(store: &TrajectoryStore, mut out: W) -> io::Result<()> {
    for t in store.trajectories() {
        for p in &t.points {
            writeln!(out, "{} {} {} {}", t.pedestrian_id, p.frame, p.pos.x, p.pos.y)?;
        }
    }
    out.flush()
}

pub fn export_trajectories(store: &TrajectoryStore, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io { path: path.display().to_string(), source };
    let file = fs::File::create(path).map_err(io_err)?;
    write_trajectories(store, io::BufWriter::new(file)).map_err(io_err)
}

/// Keeps trajectories with at least `min_length` points.
pub fn filter_min_length(store: &TrajectoryStore, min_length: usize) -> TrajectoryStore {
    let kept = store.trajectories().iter().filter(|t| t.len() >= min_length).cloned().collect();
    TrajectoryStore::new(*store.scene(), kept).expect("subset of a valid store is valid")
}

/// Cells occupied by every pedestrian present at `frame`.
pub fn occupancy_at(store: &TrajectoryStore, frame: i64, grid: &GridSpec) -> Result<BTreeSet<CellIndex>, DatasetError> {
    match store.frame_range() {
        Some((lo, hi)) if frame >= lo && frame <= hi => Ok(store
            .active_at(frame)
            .iter()
            .filter_map(|&i| store.track(i as usize).position_at(frame))
            .map(|p| grid.cell_of(p))
            .collect()),
        range => Err(DatasetError::FrameOutOfRange { frame, range: FrameRangeDisplay(range) }),
    }
}

/// Column layout of a foreign annotation file, for [`convert_records`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnLayout {
    pub id: usize,
    pub frame: usize,
    pub x: usize,
    pub y: usize,
}

impl ColumnLayout {
    /// Parses a comma-separated field order such as `x,y,frame,id`.
    pub fn parse(spec: &str) -> Result<Self, DatasetError> {
        let names: Vec<&str> = spec.split(',').map(str::trim).collect();
        let pos = |name: &str| {
            names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| DatasetError::InvalidConfig(format!("column layout {spec:?} lacks `{name}`")))
        };
        Ok(Self { id: pos("id")?, frame: pos("frame")?, x: pos("x")?, y: pos("y")? })
    }
}

impl Default for ColumnLayout {
    fn default() -> Self {
        Self { id: 0, frame: 1, x: 2, y: 3 }
    }
}

/// Rewrites whitespace- or comma-separated annotation records into the
/// trajectory file format. Frame values may be decimals holding integers.
pub fn convert_records(text: &str, layout: ColumnLayout) -> Result<String, DatasetError> {
    let mut out = String::new();
    let width = layout.id.max(layout.frame).max(layout.x).max(layout.y) + 1;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_ascii_whitespace()).filter(|s| !s.is_empty()).collect();
        let err = |message: String| DatasetError::Parse { line: i + 1, message };
        if fields.len() < width {
            return Err(err(format!("expected at least {width} fields, found {}", fields.len())));
        }
        let int = |s: &str| -> Result<i64, DatasetError> {
            s.parse::<i64>().or_else(|_| match s.parse::<f64>() {
                Ok(v) if v.fract() == 0.0 && v.is_finite() => Ok(v as i64),
                _ => Err(err(format!("expected an integer, found {s:?}"))),
            })
        };
        let real = |s: &str| s.parse::<f64>().map_err(|_| err(format!("expected a number, found {s:?}")));
        let id = int(fields[layout.id])?;
        if id < 0 {
            return Err(err(format!("negative pedestrian id {id}")));
        }
        let frame = int(fields[layout.frame])?;
        let x = real(fields[layout.x])?;
        let y = real(fields[layout.y])?;
        out.push_str(&format!("{id} {frame} {x} {y}\n"));
    }
    Ok(out)
}
