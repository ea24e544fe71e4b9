use crate::grid::{CellIndex, GridSpec, PixelPoint};

/// Maps continuous positions to cells. The moved flag is false when the cell
/// equals the previous one; the first entry has no predecessor and is false.
pub fn rasterize_continuous_path(positions: &[PixelPoint], grid: &GridSpec) -> Vec<(CellIndex, bool)> {
    let mut out: Vec<(CellIndex, bool)> = Vec::with_capacity(positions.len());
    for p in positions {
        let cell = grid.cell_of(*p);
        let moved = out.last().is_some_and(|(prev, _)| *prev != cell);
        out.push((cell, moved));
    }
    out
}
