//! Even-grid tiling of scenes into fixed-size square tiles.
//!
//! Along each axis there are `ceil(dim / tile)` tiles whose offsets are
//! spread evenly from `0` to `dim - tile` (rounded to the nearest pixel), so
//! the last tile ends flush with the scene edge and neighbouring tiles
//! overlap when `dim` is not a multiple of `tile`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::LabelMask;
use crate::raster::RgbImage;

pub const DEFAULT_TILE_SIZE: usize = 512;

/// Tile offsets along one axis of length `dim`.
pub fn tile_offsets(dim: usize, tile: usize) -> Result<Vec<usize>> {
    if tile == 0 {
        return Err(Error::Parameter("tile size must be positive".into()));
    }
    if dim < tile {
        return Err(Error::Parameter(format!(
            "scene extent {dim} is smaller than tile size {tile}"
        )));
    }
    let count = dim.div_ceil(tile);
    if count == 1 {
        return Ok(alloc::vec![0]);
    }
    let span = dim - tile;
    let gaps = count - 1;
    // round(i * span / gaps), halves rounding up
    Ok((0..count).map(|i| (2 * i * span + gaps) / (2 * gaps)).collect())
}

/// Tile origins `(x, y)` in row-major order (rows of tiles top to bottom).
pub fn tile_grid(width: usize, height: usize, tile: usize) -> Result<Vec<(usize, usize)>> {
    let xs = tile_offsets(width, tile)?;
    let ys = tile_offsets(height, tile)?;
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect())
}

pub fn tile_image(scene: &RgbImage, tile: usize) -> Result<Vec<(RgbImage, (usize, usize))>> {
    tile_grid(scene.width(), scene.height(), tile)?
        .into_iter()
        .map(|(x, y)| Ok((scene.crop(x, y, tile, tile)?, (x, y))))
        .collect()
}

pub fn tile_mask(mask: &LabelMask, tile: usize) -> Result<Vec<(LabelMask, (usize, usize))>> {
    tile_grid(mask.width(), mask.height(), tile)?
        .into_iter()
        .map(|(x, y)| Ok((mask.crop(x, y, tile, tile)?, (x, y))))
        .collect()
}
