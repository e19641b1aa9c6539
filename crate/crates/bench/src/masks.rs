//! Pruning-mask rendering: one image and one text grid per view.
//!
//! Images are binary PPM (P6), an uncompressed raster that needs no image
//! library to write or to parse back. Each token is a 12x12 cell:
//!
//! - fill: black for pruned tokens, light gray for retained ones;
//! - a 2px inner ring in green marks recycled tokens;
//! - a 2px outer ring in orange marks planted (ground-truth salient) tokens;
//! - trailing cells beyond the view's token count are white.
//!
//! The text grid encodes the same states one character per token:
//! '.' kept, 'r' recycled, 'x' pruned; uppercase 'O', 'R', 'X' mark the
//! planted variants.

use std::collections::BTreeSet;

use viewprune_core::layout::SequenceLayout;
use viewprune_core::pruning::PruneDecision;

use crate::error::{HarnessError, Result};

pub const CELL_PX: usize = 12;

const FILL_KEPT: [u8; 3] = [200, 200, 200];
const FILL_PRUNED: [u8; 3] = [0, 0, 0];
const RING_RECYCLED: [u8; 3] = [0, 180, 0];
const RING_PLANTED: [u8; 3] = [255, 140, 0];
const UNUSED: [u8; 3] = [255, 255, 255];

/// Decision state of one token cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Kept,
    Recycled,
    Pruned,
}

/// One view's render model.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewGrid {
    pub view_id: usize,
    pub cols: usize,
    pub rows: usize,
    /// (state, planted) per token, in within-view order.
    pub cells: Vec<(CellState, bool)>,
}

impl ViewGrid {
    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|(s, _)| *s == state).count()
    }

    pub fn planted_count(&self) -> usize {
        self.cells.iter().filter(|(_, p)| *p).count()
    }
}

/// Build per-view grids from a decision over the given layout.
///
/// `layout` must be the layout the decision was made on; `planted` holds
/// ground-truth original positions.
pub fn build_grids(
    decision: &PruneDecision,
    layout: &SequenceLayout,
    planted: &[usize],
    views: usize,
    tokens_per_view: usize,
) -> Result<Vec<ViewGrid>> {
    let selected: BTreeSet<usize> = decision.selected.iter().copied().collect();
    let recycled: BTreeSet<usize> = decision.recycled.iter().copied().collect();
    let planted: BTreeSet<usize> = planted.iter().copied().collect();
    let cols = (tokens_per_view as f64).sqrt().ceil() as usize;
    let rows = tokens_per_view.div_ceil(cols);

    let mut grids = Vec::with_capacity(views);
    for view in 0..views {
        let mut cells = Vec::with_capacity(tokens_per_view);
        for i in 0..tokens_per_view {
            let pos = view * tokens_per_view + i;
            let idx = layout.index_of_original(pos).ok_or_else(|| {
                HarnessError::Contract(format!("token {pos} missing from layout"))
            })?;
            if layout.token(idx).view_id() != Some(view) {
                return Err(HarnessError::Contract(format!(
                    "token {pos} is not in view {view}"
                )));
            }
            let state = if recycled.contains(&pos) {
                CellState::Recycled
            } else if selected.contains(&pos) {
                CellState::Kept
            } else {
                CellState::Pruned
            };
            cells.push((state, planted.contains(&pos)));
        }
        grids.push(ViewGrid { view_id: view, cols, rows, cells });
    }
    Ok(grids)
}

/// Render one grid as a binary PPM image.
pub fn render_ppm(grid: &ViewGrid) -> Vec<u8> {
    let w = grid.cols * CELL_PX;
    let h = grid.rows * CELL_PX;
    let mut pixels = vec![UNUSED; w * h];
    for (i, &(state, planted)) in grid.cells.iter().enumerate() {
        let cx = (i % grid.cols) * CELL_PX;
        let cy = (i / grid.cols) * CELL_PX;
        let fill = match state {
            CellState::Pruned => FILL_PRUNED,
            _ => FILL_KEPT,
        };
        for dy in 0..CELL_PX {
            for dx in 0..CELL_PX {
                let ring = dy.min(dx).min(CELL_PX - 1 - dy).min(CELL_PX - 1 - dx);
                let color = if ring < 2 {
                    if planted {
                        RING_PLANTED
                    } else {
                        fill
                    }
                } else if ring < 4 {
                    if state == CellState::Recycled {
                        RING_RECYCLED
                    } else {
                        fill
                    }
                } else {
                    fill
                };
                pixels[(cy + dy) * w + cx + dx] = color;
            }
        }
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for p in pixels {
        out.extend_from_slice(&p);
    }
    out
}

/// Parse a PPM produced by [`render_ppm`] back into cell states.
pub fn parse_ppm(bytes: &[u8], view_id: usize) -> Result<ViewGrid> {
    let header_end = bytes
        .windows(1)
        .enumerate()
        .filter(|(_, w)| w[0] == b'\n')
        .map(|(i, _)| i)
        .nth(2)
        .ok_or_else(|| HarnessError::Other("truncated ppm header".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| HarnessError::Other("bad ppm header".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some("P6") {
        return Err(HarnessError::Other("not a P6 ppm".into()));
    }
    let dims = lines.next().unwrap_or_default();
    let mut it = dims.split_whitespace();
    let w: usize = it.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let h: usize = it.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = &bytes[header_end + 1..];
    if data.len() != w * h * 3 || w % CELL_PX != 0 || h % CELL_PX != 0 {
        return Err(HarnessError::Other("ppm payload size mismatch".into()));
    }
    let cols = w / CELL_PX;
    let rows = h / CELL_PX;
    let pixel = |x: usize, y: usize| -> [u8; 3] {
        let o = (y * w + x) * 3;
        [data[o], data[o + 1], data[o + 2]]
    };
    let mut cells = Vec::new();
    for i in 0..cols * rows {
        let cx = (i % cols) * CELL_PX;
        let cy = (i / cols) * CELL_PX;
        let center = pixel(cx + CELL_PX / 2, cy + CELL_PX / 2);
        if center == UNUSED {
            break; // trailing unused cells
        }
        let planted = pixel(cx + 1, cy + 1) == RING_PLANTED;
        let state = if pixel(cx + 3, cy + 3) == RING_RECYCLED {
            CellState::Recycled
        } else if center == FILL_PRUNED {
            CellState::Pruned
        } else {
            CellState::Kept
        };
        cells.push((state, planted));
    }
    Ok(ViewGrid { view_id, cols, rows, cells })
}

fn cell_char(state: CellState, planted: bool) -> char {
    match (state, planted) {
        (CellState::Kept, false) => '.',
        (CellState::Kept, true) => 'O',
        (CellState::Recycled, false) => 'r',
        (CellState::Recycled, true) => 'R',
        (CellState::Pruned, false) => 'x',
        (CellState::Pruned, true) => 'X',
    }
}

/// Plain-text grid dump for one view.
pub fn render_text(grid: &ViewGrid) -> String {
    let mut out = format!("view {}\n", grid.view_id);
    for (i, &(state, planted)) in grid.cells.iter().enumerate() {
        out.push(cell_char(state, planted));
        if (i + 1) % grid.cols == 0 || i + 1 == grid.cells.len() {
            out.push('\n');
        }
    }
    out
}

/// Parse a text grid dump back.
pub fn parse_text(text: &str) -> Result<ViewGrid> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let view_id: usize = header
        .strip_prefix("view ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| HarnessError::Other(format!("bad grid header: {header}")))?;
    let mut cells = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        cols = cols.max(line.chars().count());
        rows += 1;
        for c in line.chars() {
            let cell = match c {
                '.' => (CellState::Kept, false),
                'O' => (CellState::Kept, true),
                'r' => (CellState::Recycled, false),
                'R' => (CellState::Recycled, true),
                'x' => (CellState::Pruned, false),
                'X' => (CellState::Pruned, true),
                other => {
                    return Err(HarnessError::Other(format!("bad grid char: {other}")))
                }
            };
            cells.push(cell);
        }
    }
    Ok(ViewGrid { view_id, cols, rows, cells })
}

/// Write all views' PPM images and text grids into `dir`.
pub fn write_masks(
    dir: &std::path::Path,
    decision: &PruneDecision,
    layout: &SequenceLayout,
    planted: &[usize],
    views: usize,
    tokens_per_view: usize,
) -> Result<Vec<ViewGrid>> {
    std::fs::create_dir_all(dir)?;
    let grids = build_grids(decision, layout, planted, views, tokens_per_view)?;
    for grid in &grids {
        std::fs::write(dir.join(format!("view{}.ppm", grid.view_id)), render_ppm(grid))?;
        std::fs::write(dir.join(format!("view{}.txt", grid.view_id)), render_text(grid))?;
    }
    Ok(grids)
}
