//! Moore-neighbour tracing of the outer contour of an 8-connected blob.

use crate::mask::Mask;

/// Clockwise neighbour offsets (y grows downward), starting west.
const DIRS: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn dir_index(dx: i64, dy: i64) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("offset between 8-neighbours")
}

/// One step of a traced chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainStep {
    pub from: (i64, i64),
    pub dir: u8,
}

impl ChainStep {
    pub fn is_diagonal(&self) -> bool {
        self.dir % 2 == 1
    }
}

/// Traces the outer boundary of the component containing the first
/// foreground pixel (row-major). Returns the closed chain of moves; an
/// isolated pixel yields an empty chain. `None` for an empty mask.
///
/// Tracing stops when the start pixel is about to be left in the same
/// direction as the very first move, so thin parts are walked on both sides.
pub fn trace(mask: &Mask) -> Option<(Vec<ChainStep>, (i64, i64))> {
    let (sx, sy) = mask.foreground().next()?;
    let start = (sx as i64, sy as i64);
    let mut cur = start;
    // The west neighbour of the first raster pixel is background.
    let mut back = 0usize;
    let mut first_dir: Option<usize> = None;
    let mut chain = Vec::new();
    let limit = 8 * mask.count() + 8;
    loop {
        let mut found = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let (dx, dy) = DIRS[d];
            if mask.get_i(cur.0 + dx, cur.1 + dy) {
                found = Some((d, (back + k - 1) % 8));
                break;
            }
        }
        let Some((d, prev)) = found else {
            return Some((chain, start));
        };
        if cur == start && first_dir == Some(d) {
            break;
        }
        first_dir.get_or_insert(d);
        chain.push(ChainStep {
            from: cur,
            dir: d as u8,
        });
        let next = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
        let probe = (cur.0 + DIRS[prev].0, cur.1 + DIRS[prev].1);
        back = dir_index(probe.0 - next.0, probe.1 - next.1);
        cur = next;
        if chain.len() > limit {
            break;
        }
    }
    Some((chain, start))
}

/// Distinct contour pixels in tracing order.
pub fn contour_pixels(mask: &Mask) -> Option<Vec<(i64, i64)>> {
    let (chain, start) = trace(mask)?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(chain.len() + 1);
    for p in std::iter::once(start).chain(chain.iter().map(|s| s.from)) {
        if seen.insert(p) {
            out.push(p);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_chain_is_closed() {
        let m = Mask::from_fn(3, 3, |_, _| true).unwrap();
        let (chain, start) = trace(&m).unwrap();
        assert_eq!(chain.len(), 8);
        let mut p = start;
        for s in &chain {
            assert_eq!(s.from, p);
            let (dx, dy) = DIRS[s.dir as usize];
            p = (p.0 + dx, p.1 + dy);
        }
        assert_eq!(p, start);
    }

    #[test]
    fn single_pixel_has_empty_chain() {
        let m = Mask::from_ascii(&["...", ".#.", "..."]).unwrap();
        let (chain, start) = trace(&m).unwrap();
        assert!(chain.is_empty());
        assert_eq!(start, (1, 1));
        assert_eq!(contour_pixels(&m).unwrap(), vec![(1, 1)]);
    }

    #[test]
    fn bar_is_walked_both_ways() {
        let m = Mask::from_fn(6, 1, |_, _| true).unwrap();
        let (chain, _) = trace(&m).unwrap();
        assert_eq!(chain.len(), 10);
        assert_eq!(contour_pixels(&m).unwrap().len(), 6);
    }

    #[test]
    fn concave_shape_cuts_diagonal_corner() {
        let m = Mask::from_ascii(&[
            "#####", //
            "#...#",
            "#.###",
            "#.#..",
            "###..",
        ])
        .unwrap();
        let pixels = contour_pixels(&m).unwrap();
        // (2, 2) touches the outside only diagonally; the 8-connected walk cuts that corner.
        assert_eq!(pixels.len(), m.count() - 1);
        assert!(!pixels.contains(&(2, 2)));
    }
}
