//! Per-tick raster frames of an episode log.

use std::fs;
use std::path::{Path, PathBuf};

use super::{io_err, BenchError};
use crate::dataset::{occupancy_at, TrajectoryStore};
use crate::grid::{CellIndex, GridSpec};
use crate::sim::EpisodeLog;

const CELL_PX: usize = 8;
const BACKGROUND: [u8; 3] = [255, 255, 255];
const GRID_LINE: [u8; 3] = [210, 210, 210];
const PEDESTRIAN: [u8; 3] = [40, 90, 220];
const ROBOT: [u8; 3] = [220, 30, 30];
const GOAL: [u8; 3] = [30, 170, 60];
const COLLISION: [u8; 3] = [250, 200, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Binary PPM (P6), no dependencies.
    Ppm,
    #[cfg(feature = "png")]
    Png,
}

impl ImageFormat {
    fn extension(self) -> &'static str {
        match self {
            ImageFormat::Ppm => "ppm",
            #[cfg(feature = "png")]
            ImageFormat::Png => "png",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB.
    pub pixels: Vec<u8>,
}

impl Raster {
    fn new(width: usize, height: usize) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&BACKGROUND);
        }
        Self { width, height, pixels }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// Fills a cell, leaving its one-pixel grid line; `inset` shrinks the box.
    fn fill_cell(&mut self, cell: CellIndex, inset: usize, c: [u8; 3]) {
        let (x0, y0) = (cell.col as usize * CELL_PX, cell.row as usize * CELL_PX);
        for y in y0 + 1 + inset..y0 + CELL_PX - inset {
            for x in x0 + 1 + inset..x0 + CELL_PX - inset {
                self.set(x, y, c);
            }
        }
    }

    fn outline_cell(&mut self, cell: CellIndex, c: [u8; 3]) {
        let (x0, y0) = (cell.col as usize * CELL_PX, cell.row as usize * CELL_PX);
        for d in 0..=CELL_PX {
            for (x, y) in [(x0 + d, y0), (x0 + d, y0 + CELL_PX), (x0, y0 + d), (x0 + CELL_PX, y0 + d)] {
                if x < self.width && y < self.height {
                    self.set(x, y, c);
                }
            }
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Draws tick `index` of `log`: grid lines, pedestrians at that tick's
/// frame, goal, robot and an outline on every cell with a collision that tick.
pub fn render_tick(log: &EpisodeLog, index: usize, store: &TrajectoryStore, grid: &GridSpec) -> Result<Raster, BenchError> {
    let tick = log.ticks.get(index).ok_or_else(|| BenchError::Config(format!("tick index {index} out of range")))?;
    let (w, h) = (grid.cols as usize * CELL_PX + 1, grid.rows as usize * CELL_PX + 1);
    let mut img = Raster::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if x % CELL_PX == 0 || y % CELL_PX == 0 {
                img.set(x, y, GRID_LINE);
            }
        }
    }
    img.fill_cell(log.episode.goal, 0, GOAL);
    for cell in occupancy_at(store, tick.frame, grid)? {
        img.fill_cell(cell, 0, PEDESTRIAN);
    }
    img.fill_cell(tick.robot, 1, ROBOT);
    for ev in log.events.iter().filter(|e| e.tick == tick.tick) {
        img.outline_cell(ev.cell, COLLISION);
    }
    Ok(img)
}

/// Writes one image per tick as `frame_00000.<ext>`; returns the paths in
/// tick order.
pub fn render_frames(
    log: &EpisodeLog,
    store: &TrajectoryStore,
    grid: &GridSpec,
    out_dir: impl AsRef<Path>,
    format: ImageFormat,
) -> Result<Vec<PathBuf>, BenchError> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut paths = Vec::with_capacity(log.ticks.len());
    for i in 0..log.ticks.len() {
        let img = render_tick(log, i, store, grid)?;
        let path = dir.join(format!("frame_{i:05}.{}", format.extension()));
        match format {
            ImageFormat::Ppm => fs::write(&path, img.to_ppm()).map_err(|e| io_err(&path, e))?,
            #[cfg(feature = "png")]
            ImageFormat::Png => {
                let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.pixels)
                    .ok_or_else(|| BenchError::Config("raster size mismatch".into()))?;
                buf.save(&path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
            }
        }
        paths.push(path);
    }
    Ok(paths)
}
