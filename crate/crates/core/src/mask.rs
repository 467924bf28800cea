//! Binary masks, the row-major run-length codec, and mask normalization.

use std::collections::VecDeque;

use bitvec::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("mask dimensions must be non-zero (got {width}x{height})")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("run lengths sum to {got}, expected {expected}")]
    SumMismatch { expected: u64, got: u64 },
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("{field} = {value} is outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
}

/// Axis-aligned pixel rectangle `(x, y, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn to_array(self) -> [u32; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    /// True if `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }
}

/// Row-major binary raster. Origin top-left, `x` is the column, `y` the row.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: BitVec<u64, Lsb0>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mask({}x{}, {} fg)", self.width, self.height, self.count())?;
        if self.width <= 32 && self.height <= 32 {
            for y in 0..self.height {
                f.write_str("\n  ")?;
                for x in 0..self.width {
                    f.write_str(if self.get(x, y) { "#" } else { "." })?;
                }
            }
        }
        Ok(())
    }
}

impl Mask {
    /// All-background mask.
    pub fn new(width: u32, height: u32) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            bits: bitvec![u64, Lsb0; 0; width as usize * height as usize],
        })
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> bool,
    ) -> Result<Self, MaskError> {
        let mut m = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        Ok(m)
    }

    /// Parses rows of `#` (foreground) and `.` (background). Handy in tests.
    pub fn from_ascii(rows: &[&str]) -> Result<Self, MaskError> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.len()) as u32;
        Self::from_fn(width, height, |x, y| rows[y as usize].as_bytes()[x as usize] == b'#')
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.bits[self.index(x, y)]
    }

    /// Like [`Mask::get`] but accepts any coordinate; outside pixels are background.
    #[inline]
    pub fn get_i(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && self.get(x as u32, y as u32)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.bits.set(i, value);
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    /// Foreground pixel coordinates in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter_ones()
            .map(move |i| ((i % w) as u32, (i / w) as u32))
    }

    /// Tight bounding box of the foreground, `None` for an empty mask.
    pub fn bbox(&self) -> Option<BBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for (x, y) in self.foreground() {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        (x0 != u32::MAX).then(|| BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// Extracts the window with top-left `(x0, y0)`; pixels outside `self` read as background.
    pub fn crop(&self, x0: i64, y0: i64, width: u32, height: u32) -> Result<Mask, MaskError> {
        let mut out = Mask::new(width, height)?;
        for (x, y) in self.foreground() {
            let (lx, ly) = (x as i64 - x0, y as i64 - y0);
            if lx >= 0 && ly >= 0 && lx < width as i64 && ly < height as i64 {
                out.set(lx as u32, ly as u32, true);
            }
        }
        Ok(out)
    }

    /// Rotates the raster by 90 degrees clockwise.
    pub fn rotate90(&self) -> Mask {
        let mut out = Mask::new(self.height, self.width).expect("non-empty dims");
        for (x, y) in self.foreground() {
            out.set(self.height - 1 - y, x, true);
        }
        out
    }

    pub fn transpose(&self) -> Mask {
        let mut out = Mask::new(self.height, self.width).expect("non-empty dims");
        for (x, y) in self.foreground() {
            out.set(y, x, true);
        }
        out
    }
}

/// Decodes alternating background/foreground run lengths (background first) in row-major order.
pub fn decode_rle(counts: &[u64], width: u32, height: u32) -> Result<Mask, MaskError> {
    if width == 0 || height == 0 {
        return Err(MaskError::EmptyDimensions { width, height });
    }
    let expected = width as u64 * height as u64;
    let got = counts
        .iter()
        .try_fold(0u64, |acc, &c| acc.checked_add(c))
        .unwrap_or(u64::MAX);
    if got != expected {
        return Err(MaskError::SumMismatch { expected, got });
    }
    let mut mask = Mask::new(width, height)?;
    let mut pos = 0usize;
    for (i, &run) in counts.iter().enumerate() {
        let end = pos + run as usize;
        if i % 2 == 1 {
            mask.bits[pos..end].fill(true);
        }
        pos = end;
    }
    Ok(mask)
}

/// Column-major variant of [`decode_rle`], for sources that serialize masks Fortran-style.
pub fn decode_rle_column_major(counts: &[u64], width: u32, height: u32) -> Result<Mask, MaskError> {
    // A column-major stream of a w x h mask is the row-major stream of its transpose.
    Ok(decode_rle(counts, height, width)?.transpose())
}

/// Minimal alternating run lengths, starting with a (possibly empty) background run.
pub fn encode_rle(mask: &Mask) -> Vec<u64> {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for bit in mask.bits.iter().by_vals() {
        if bit == current {
            run += 1;
        } else {
            counts.push(run);
            current = bit;
            run = 1;
        }
    }
    counts.push(run);
    counts
}

/// Keeps the largest 8-connected foreground component and fills its holes.
///
/// Ties between equally large components go to the one whose first pixel in
/// row-major order comes first. A hole is a background region that is not
/// 4-connected to the raster border.
pub fn normalize(mask: &Mask) -> Result<Mask, MaskError> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut label = vec![0u32; mask.bits.len()];
    let mut best: Option<(u32, usize)> = None;
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for (sx, sy) in mask.foreground() {
        let si = mask.index(sx, sy);
        if label[si] != 0 {
            continue;
        }
        next += 1;
        label[si] = next;
        queue.push_back((sx as i64, sy as i64));
        let mut size = 0usize;
        while let Some((x, y)) = queue.pop_front() {
            size += 1;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let ni = (ny * w + nx) as usize;
                    if mask.bits[ni] && label[ni] == 0 {
                        label[ni] = next;
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
        if best.map_or(true, |(_, s)| size > s) {
            best = Some((next, size));
        }
    }
    let (keep, _) = best.ok_or(MaskError::EmptyMask)?;

    // Flood the background from the border; anything unreached is a hole.
    let mut outside = bitvec![u64, Lsb0; 0; mask.bits.len()];
    let is_bg = |i: usize| label[i] != keep;
    for x in 0..w {
        for y in [0, h - 1] {
            let i = (y * w + x) as usize;
            if is_bg(i) && !outside[i] {
                outside.set(i, true);
                queue.push_back((x, y));
            }
        }
    }
    for y in 0..h {
        for x in [0, w - 1] {
            let i = (y * w + x) as usize;
            if is_bg(i) && !outside[i] {
                outside.set(i, true);
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let ni = (ny * w + nx) as usize;
            if is_bg(ni) && !outside[ni] {
                outside.set(ni, true);
                queue.push_back((nx, ny));
            }
        }
    }
    let mut out = Mask::new(mask.width, mask.height)?;
    out.bits = !outside;
    Ok(out)
}

/// One segment produced by a mask generator, with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    mask: Mask,
    area_px: u64,
    bbox: BBox,
    quality: f64,
    stability: f64,
    prompt_point: Option<[f64; 2]>,
    crop_box: Option<BBox>,
    source_id: String,
}

impl SegmentRecord {
    /// Builds a record; area and bounding box are derived from the mask.
    pub fn new(
        mask: Mask,
        quality: f64,
        stability: f64,
        source_id: impl Into<String>,
    ) -> Result<Self, MaskError> {
        for (field, value) in [("quality", quality), ("stability", stability)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(MaskError::OutOfRange { field, value });
            }
        }
        let area_px = mask.count() as u64;
        let bbox = mask.bbox().unwrap_or_default();
        Ok(Self {
            mask,
            area_px,
            bbox,
            quality,
            stability,
            prompt_point: None,
            crop_box: None,
            source_id: source_id.into(),
        })
    }

    pub fn with_prompt_point(mut self, point: Option<[f64; 2]>) -> Self {
        self.prompt_point = point;
        self
    }

    pub fn with_crop_box(mut self, crop_box: Option<BBox>) -> Self {
        self.crop_box = crop_box;
        self
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn area_px(&self) -> u64 {
        self.area_px
    }

    /// Tight foreground box; all zeros for an empty mask.
    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn quality(&self) -> f64 {
        self.quality
    }

    pub fn stability(&self) -> f64 {
        self.stability
    }

    pub fn prompt_point(&self) -> Option<[f64; 2]> {
        self.prompt_point
    }

    pub fn crop_box(&self) -> Option<BBox> {
        self.crop_box
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }
}
