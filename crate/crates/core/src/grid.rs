//! Scene and grid geometry shared by every subsystem.
//!
//! Pixel coordinates follow image conventions: `x` grows to the right, `y`
//! grows downward. Grid cells are addressed by `(col, row)`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("scene dimensions must be positive (got {width}x{height}, fps {fps})")]
    InvalidScene { width: f64, height: f64, fps: f64 },
    #[error("grid must have at least one column and one row (got {cols}x{rows})")]
    InvalidGrid { cols: u32, rows: u32 },
    #[error("cell ({col}, {row}) is outside the {cols}x{rows} grid")]
    CellOutOfBounds { col: i64, row: i64, cols: u32, rows: u32 },
}

/// Recording geometry: width `X`, height `Y` in pixels and the frame rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub width: f64,
    pub height: f64,
    pub fps: f64,
}

impl SceneSpec {
    pub fn new(width: f64, height: f64, fps: f64) -> Result<Self, GeometryError> {
        if !(width > 0.0 && height > 0.0 && fps > 0.0) || !width.is_finite() || !height.is_finite() {
            return Err(GeometryError::InvalidScene { width, height, fps });
        }
        Ok(Self { width, height, fps })
    }

    /// Closed-world bounds check; the right and bottom edges are inside.
    pub fn contains(&self, p: PixelPoint) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    pub fn clamp(&self, p: PixelPoint) -> PixelPoint {
        PixelPoint::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }
}

impl Default for SceneSpec {
    /// The Grand Central recording: 1920x1080 at 1.5 frames per second.
    fn default() -> Self {
        Self { width: 1920.0, height: 1080.0, fps: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: PixelPoint) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    pub fn offset(self, dx: f64, dy: f64) -> PixelPoint {
        PixelPoint::new(self.x + dx, self.y + dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub col: u32,
    pub row: u32,
}

impl CellIndex {
    pub const fn new(col: u32, row: u32) -> Self {
        Self { col, row }
    }

    /// Number of unit 8-connected moves between two cells on an empty grid.
    pub fn chebyshev(self, other: CellIndex) -> u32 {
        self.col.abs_diff(other.col).max(self.row.abs_diff(other.row))
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.col, self.row)
    }
}

/// Regular grid laid over the scene. Cell size is derived from the scene
/// and the column/row counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub cols: u32,
    pub rows: u32,
    pub cell_w: f64,
    pub cell_h: f64,
}

impl GridSpec {
    pub fn new(scene: &SceneSpec, cols: u32, rows: u32) -> Result<Self, GeometryError> {
        if cols == 0 || rows == 0 {
            return Err(GeometryError::InvalidGrid { cols, rows });
        }
        Ok(Self {
            cols,
            rows,
            cell_w: scene.width / f64::from(cols),
            cell_h: scene.height / f64::from(rows),
        })
    }

    /// The 64x36 grid over the default scene (30x30 px cells).
    pub fn for_scene(scene: &SceneSpec) -> Self {
        Self::new(scene, 64, 36).expect("64x36 is a valid grid")
    }

    pub fn cell_count(&self) -> usize {
        self.cols as usize * self.rows as usize
    }

    pub fn contains(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && col < i64::from(self.cols) && row < i64::from(self.rows)
    }

    pub fn checked_cell(&self, col: i64, row: i64) -> Result<CellIndex, GeometryError> {
        if self.contains(col, row) {
            Ok(CellIndex::new(col as u32, row as u32))
        } else {
            Err(GeometryError::CellOutOfBounds { col, row, cols: self.cols, rows: self.rows })
        }
    }

    /// Cell containing a pixel position. Positions outside the grid are
    /// clamped to the border cells, so `x == X` maps to the last column.
    pub fn cell_of(&self, p: PixelPoint) -> CellIndex {
        let col = (p.x / self.cell_w).floor();
        let row = (p.y / self.cell_h).floor();
        let col = if col.is_nan() { 0.0 } else { col.clamp(0.0, f64::from(self.cols - 1)) };
        let row = if row.is_nan() { 0.0 } else { row.clamp(0.0, f64::from(self.rows - 1)) };
        CellIndex::new(col as u32, row as u32)
    }

    pub fn cell_center(&self, cell: CellIndex) -> PixelPoint {
        PixelPoint::new(
            (f64::from(cell.col) + 0.5) * self.cell_w,
            (f64::from(cell.row) + 0.5) * self.cell_h,
        )
    }

    /// Dense index used by per-cell arrays (row-major).
    pub fn linear(&self, cell: CellIndex) -> usize {
        cell.row as usize * self.cols as usize + cell.col as usize
    }

    pub fn from_linear(&self, idx: usize) -> CellIndex {
        CellIndex::new((idx % self.cols as usize) as u32, (idx / self.cols as usize) as u32)
    }

    /// Cell reached by taking `action` from `cell`, or `None` if it leaves the grid.
    pub fn apply(&self, cell: CellIndex, action: Action) -> Option<CellIndex> {
        let (dc, dr) = action.delta();
        let col = i64::from(cell.col) + i64::from(dc);
        let row = i64::from(cell.row) + i64::from(dr);
        self.contains(col, row).then(|| CellIndex::new(col as u32, row as u32))
    }

    /// In-bounds 8-neighbors in the fixed order N, NE, E, SE, S, SW, W, NW.
    pub fn neighbors(&self, cell: CellIndex) -> impl Iterator<Item = CellIndex> + '_ {
        Action::MOVES.iter().filter_map(move |&a| self.apply(cell, a))
    }

    /// All cells within Chebyshev distance `radius` of `cell` (inclusive), clipped.
    pub fn neighborhood(&self, cell: CellIndex, radius: u32) -> impl Iterator<Item = CellIndex> + '_ {
        let r = i64::from(radius);
        let (c0, r0) = (i64::from(cell.col), i64::from(cell.row));
        (r0 - r..=r0 + r).flat_map(move |row| {
            (c0 - r..=c0 + r)
                .filter(move |&col| self.contains(col, row))
                .map(move |col| CellIndex::new(col as u32, row as u32))
        })
    }

    /// Legal-action mask for a robot standing on `cell`.
    pub fn action_mask(&self, cell: CellIndex) -> ActionMask {
        let mut mask = [false; Action::COUNT];
        for a in Action::ALL {
            mask[a.index()] = self.apply(cell, a).is_some();
        }
        ActionMask(mask)
    }
}

/// One robot move on the 8-connected grid. `N` is toward row 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Stay,
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Action {
    pub const COUNT: usize = 9;

    /// Enumeration order used for tie-breaking in action selection.
    pub const ALL: [Action; 9] = [
        Action::Stay,
        Action::N,
        Action::NE,
        Action::E,
        Action::SE,
        Action::S,
        Action::SW,
        Action::W,
        Action::NW,
    ];

    /// The eight moves, in the planner's neighbor enumeration order.
    pub const MOVES: [Action; 8] = [
        Action::N,
        Action::NE,
        Action::E,
        Action::SE,
        Action::S,
        Action::SW,
        Action::W,
        Action::NW,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Action> {
        Action::ALL.get(idx).copied()
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Stay => (0, 0),
            Action::N => (0, -1),
            Action::NE => (1, -1),
            Action::E => (1, 0),
            Action::SE => (1, 1),
            Action::S => (0, 1),
            Action::SW => (-1, 1),
            Action::W => (-1, 0),
            Action::NW => (-1, -1),
        }
    }

    /// The action that moves `from` to an adjacent (or identical) cell `to`.
    pub fn between(from: CellIndex, to: CellIndex) -> Option<Action> {
        let dc = i64::from(to.col) - i64::from(from.col);
        let dr = i64::from(to.row) - i64::from(from.row);
        Action::ALL.into_iter().find(|a| {
            let (c, r) = a.delta();
            i64::from(c) == dc && i64::from(r) == dr
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Stay => "stay",
            Action::N => "N",
            Action::NE => "NE",
            Action::E => "E",
            Action::SE => "SE",
            Action::S => "S",
            Action::SW => "SW",
            Action::W => "W",
            Action::NW => "NW",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionMask(pub [bool; Action::COUNT]);

impl ActionMask {
    pub const ALL_LEGAL: ActionMask = ActionMask([true; Action::COUNT]);

    pub fn allows(&self, action: Action) -> bool {
        self.0[action.index()]
    }
}
