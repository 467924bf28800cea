use std::f64::consts::PI;

use crater_core::bundle::parse_manifest;
use crater_core::catalog::{size_frequency, CraterCatalog};
use crater_core::conic::{fit_ellipse, CraterEllipse};
use crater_core::mask::{decode_rle, encode_rle, normalize, Mask};
use crater_core::postprocess::{dedup_concentric, FilterConfig};
use crater_core::synth::{match_catalogs, precision_recall, MatchCriterion, MatchParams};
use crater_core::tiling::{merge_tiled, plan_tiles, to_global, TileOrigin};
use crater_core::{EdgePointSet, Point};
use proptest::prelude::*;

fn mask_strategy() -> impl Strategy<Value = Mask> {
    (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<bool>(), (w * h) as usize)
            .prop_map(move |bits| Mask::from_fn(w, h, |x, y| bits[(y * w + x) as usize]).unwrap())
    })
}

fn crater_strategy() -> impl Strategy<Value = CraterEllipse<f64>> {
    (0.0..200.0, 0.0..200.0, 2.0..40.0, 0.4..1.0, -PI..PI, any::<bool>()).prop_map(|(cx, cy, a, r, t, clipped)| {
        let mut c = CraterEllipse::ellipse(cx, cy, a, a * r, t);
        c.clipped = clipped;
        c
    })
}

fn close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * (1.0 + y.abs())
}

fn angle_close(x: f64, y: f64, tol: f64) -> bool {
    let d = (x - y).rem_euclid(PI);
    d.min(PI - d) <= tol
}

proptest! {
    #[test]
    fn rle_round_trip(m in mask_strategy()) {
        let counts = encode_rle(&m);
        prop_assert_eq!(counts.iter().sum::<u64>(), u64::from(m.width() * m.height()));
        prop_assert_eq!(decode_rle(&counts, m.width(), m.height()).unwrap(), m);
    }

    #[test]
    fn normalize_is_idempotent(m in mask_strategy()) {
        if let Ok(n) = normalize(&m) {
            prop_assert_eq!(normalize(&n).unwrap(), n.clone());
            prop_assert!(n.count() > 0);
        } else {
            prop_assert!(m.is_empty());
        }
    }

    #[test]
    fn dedup_is_idempotent_and_order_free(
        cs in proptest::collection::vec(crater_strategy(), 0..30),
        seed in any::<u64>(),
    ) {
        let cfg = FilterConfig::<f64>::default();
        let once = dedup_concentric(cs.clone(), &cfg);
        prop_assert_eq!(dedup_concentric(once.clone(), &cfg), once.clone());
        let mut shuffled = cs;
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.rotate_left(i as u32) % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(dedup_concentric(shuffled, &cfg), once);
    }

    #[test]
    fn ellipse_fit_is_equivariant(
        a in 5.0..50.0f64, r in 0.35..1.0f64, t in -PI..PI,
        dx in -500.0..500.0f64, dy in -500.0..500.0f64, rot in -PI..PI,
    ) {
        let truth = CraterEllipse::ellipse(0.0, 0.0, a, a * r, t);
        let pts = truth.sample(60);
        let base = fit_ellipse(&EdgePointSet::new(pts.clone())).unwrap();
        let (s, c) = rot.sin_cos();
        let moved: Vec<Point> = pts.iter().map(|p| Point::new(c * p.x - s * p.y + dx, s * p.x + c * p.y + dy)).collect();
        let fit = fit_ellipse(&EdgePointSet::new(moved)).unwrap();
        prop_assert!(close(fit.cx, dx, 1e-6) && close(fit.cy, dy, 1e-6), "{fit:?}");
        prop_assert!(close(fit.a, base.a, 1e-6) && close(fit.b, base.b, 1e-6));
        if base.a - base.b > 1e-3 * base.a {
            prop_assert!(angle_close(fit.theta, base.theta + rot, 1e-5), "{} vs {}", fit.theta, base.theta + rot);
        }
    }

    #[test]
    fn to_global_preserves_shape(c in crater_strategy(), x in 0u32..5000, y in 0u32..5000) {
        let g = to_global(&c, TileOrigin { x, y });
        prop_assert_eq!((g.a, g.b, g.theta), (c.a, c.b, c.theta));
        prop_assert!(close(g.cx, c.cx + f64::from(x), 1e-12) && close(g.cy, c.cy + f64::from(y), 1e-12));
    }

    #[test]
    fn merge_is_order_free(
        tiles in proptest::collection::vec((0u32..300, 0u32..300, proptest::collection::vec(crater_strategy(), 0..8)), 0..5),
    ) {
        let cfg = FilterConfig::<f64>::default();
        let catalogs: Vec<_> = tiles.into_iter().map(|(x, y, cs)| (TileOrigin { x, y }, cs)).collect();
        let forward = merge_tiled(&catalogs, &cfg);
        let mut rev = catalogs;
        rev.reverse();
        prop_assert_eq!(merge_tiled(&rev, &cfg), forward);
    }

    #[test]
    fn histogram_accounts_for_every_crater(cs in proptest::collection::vec(crater_strategy(), 0..50)) {
        let n = cs.len();
        let h = size_frequency(&CraterCatalog::without_dims(cs), &[5.0, 10.0, 20.0, 40.0]).unwrap();
        prop_assert_eq!(h.total() + h.out_of_range(), n);
    }

    #[test]
    fn matching_is_symmetric(
        det in proptest::collection::vec(crater_strategy(), 0..15),
        tru in proptest::collection::vec(crater_strategy(), 0..15),
    ) {
        // Equal-size craters make the size test symmetric as well.
        let flatten = |cs: Vec<CraterEllipse<f64>>| -> Vec<_> {
            cs.into_iter().map(|c| CraterEllipse::circle(c.cx.round(), c.cy.round(), 10.0)).collect()
        };
        let (d, t) = (CraterCatalog::without_dims(flatten(det)), CraterCatalog::without_dims(flatten(tru)));
        let p = MatchParams::default();
        let fwd = precision_recall(&match_catalogs(&d, &t, MatchCriterion::CenterAndSize, p).unwrap());
        let bwd = precision_recall(&match_catalogs(&t, &d, MatchCriterion::CenterAndSize, p).unwrap());
        prop_assert_eq!((fwd.precision, fwd.recall), (bwd.recall, bwd.precision));
    }

    #[test]
    fn ingest_skips_exactly_the_malformed(flags in proptest::collection::vec(any::<bool>(), 0..12)) {
        let segs: Vec<String> = flags
            .iter()
            .enumerate()
            .map(|(i, &bad)| {
                let rle = if bad { "[0,3]" } else { "[0,4]" };
                format!(r#"{{"id":"s{i}","rle":{rle},"quality":0.9,"stability":0.9}}"#)
            })
            .collect();
        let text = format!(
            r#"{{"version":1,"image":{{"width":2,"height":2,"source":""}},"order":"row-major","segments":[{}]}}"#,
            segs.join(",")
        );
        let b = parse_manifest(&text).unwrap();
        let bad = flags.iter().filter(|&&f| f).count();
        prop_assert_eq!(b.report.skipped.len(), bad);
        prop_assert_eq!(b.records.len(), flags.len() - bad);
    }
}

#[test]
fn tiles_cover_every_pixel() {
    for w in 1..=64u32 {
        for h in [1, 7, 16, 33, 64] {
            for overlap in [0, 4, 8] {
                let plan = plan_tiles(w, h, 16, 16, overlap).unwrap();
                let mut hits = vec![0u32; (w * h) as usize];
                for t in &plan.tiles {
                    assert!(t.right() <= w && t.bottom() <= h, "{t:?} outside {w}x{h}");
                    for y in t.y..t.bottom() {
                        for x in t.x..t.right() {
                            hits[(y * w + x) as usize] += 1;
                        }
                    }
                }
                assert!(hits.iter().all(|&c| c > 0), "{w}x{h} overlap {overlap}");
                let mut xs: Vec<u32> = plan.tiles.iter().map(|t| t.x).collect();
                xs.dedup();
                for pair in xs.windows(2) {
                    let tw = plan.tiles[0].w;
                    assert!(pair[0] + tw - pair[1] >= overlap, "{w}x{h} overlap {overlap}: {xs:?}");
                }
            }
        }
    }
}
