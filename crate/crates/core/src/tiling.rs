//! Overlapping tile grids for zoomed-in segmentation, and merging of
//! per-tile detections back into image coordinates.

use thiserror::Error;

use crate::conic::CraterEllipse;
use crate::mask::{BBox, SegmentRecord};
use crate::postprocess::{dedup_concentric, FilterConfig};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TilingError {
    #[error("overlap {overlap} must be smaller than the tile size {tile}")]
    BadStride { tile: u32, overlap: u32 },
    #[error("image and tile dimensions must be non-zero")]
    EmptyDimensions,
}

/// Top-left corner of a tile in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TileOrigin {
    pub x: u32,
    pub y: u32,
}

impl From<BBox> for TileOrigin {
    fn from(b: BBox) -> Self {
        Self { x: b.x, y: b.y }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub image_w: u32,
    pub image_h: u32,
    pub tile_w: u32,
    pub tile_h: u32,
    pub overlap: u32,
    /// Row-major list of tile rectangles.
    pub tiles: Vec<BBox>,
}

fn axis_starts(len: u32, tile: u32, overlap: u32) -> Vec<u32> {
    if len <= tile {
        return vec![0];
    }
    let stride = tile - overlap;
    let mut starts = Vec::new();
    let mut pos = 0u32;
    while pos + tile < len {
        starts.push(pos);
        pos += stride;
    }
    // Last tile is shifted back so that it ends on the image edge.
    let last = len - tile;
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    starts
}

/// Row-major grid with stride `tile - overlap`; the last row and column are
/// pulled back inside the image, and tiles larger than the image shrink to it.
pub fn plan_tiles(
    image_w: u32,
    image_h: u32,
    tile_w: u32,
    tile_h: u32,
    overlap: u32,
) -> Result<TilePlan, TilingError> {
    if image_w == 0 || image_h == 0 || tile_w == 0 || tile_h == 0 {
        return Err(TilingError::EmptyDimensions);
    }
    for tile in [tile_w, tile_h] {
        if overlap >= tile {
            return Err(TilingError::BadStride { tile, overlap });
        }
    }
    let xs = axis_starts(image_w, tile_w, overlap);
    let ys = axis_starts(image_h, tile_h, overlap);
    let tiles = ys
        .iter()
        .flat_map(|&y| {
            xs.iter()
                .map(move |&x| BBox::new(x, y, tile_w.min(image_w), tile_h.min(image_h)))
        })
        .collect();
    Ok(TilePlan {
        image_w,
        image_h,
        tile_w,
        tile_h,
        overlap,
        tiles,
    })
}

impl TilePlan {
    /// Whether a local bounding box touches a tile edge that lies inside the image.
    pub fn touches_interior_edge(&self, tile: &BBox, local: &BBox) -> bool {
        (local.x == 0 && tile.x > 0)
            || (local.y == 0 && tile.y > 0)
            || (local.right() >= tile.w && tile.right() < self.image_w)
            || (local.bottom() >= tile.h && tile.bottom() < self.image_h)
    }
}

/// Moves a tile-local crater into image coordinates.
pub fn to_global<T: Scalar>(e: &CraterEllipse<T>, origin: TileOrigin) -> CraterEllipse<T> {
    e.translate(
        T::from_u32(origin.x).expect("tile origin representable"),
        T::from_u32(origin.y).expect("tile origin representable"),
    )
}

/// Maps every tile catalog to image coordinates, concatenates them, and
/// removes concentric duplicates. Output order does not depend on the
/// order of `catalogs`.
pub fn merge_tiled<T: Scalar>(
    catalogs: &[(TileOrigin, Vec<CraterEllipse<T>>)],
    cfg: &FilterConfig<T>,
) -> Vec<CraterEllipse<T>> {
    let all = catalogs
        .iter()
        .flat_map(|(origin, craters)| craters.iter().map(move |c| to_global(c, *origin)))
        .collect();
    dedup_concentric(all, cfg)
}

/// Restricts full-image segments to one tile, as a segmenter run on the
/// tile crop would see them. Segments with no pixel in the tile are dropped;
/// source ids gain a `t<index>/` prefix.
pub fn crop_records(records: &[SegmentRecord], tile: &BBox, tile_index: usize) -> Vec<SegmentRecord> {
    records
        .iter()
        .filter(|r| {
            let b = r.bbox();
            r.area_px() > 0
                && b.x < tile.right()
                && b.right() > tile.x
                && b.y < tile.bottom()
                && b.bottom() > tile.y
        })
        .filter_map(|r| {
            let mask = r.mask().crop(tile.x as i64, tile.y as i64, tile.w, tile.h).ok()?;
            if mask.is_empty() {
                return None;
            }
            let point = r
                .prompt_point()
                .map(|[x, y]| [x - tile.x as f64, y - tile.y as f64]);
            SegmentRecord::new(mask, r.quality(), r.stability(), format!("t{tile_index}/{}", r.source_id()))
                .ok()
                .map(|s| s.with_prompt_point(point).with_crop_box(r.crop_box()))
        })
        .collect()
}
