use lfpp_core::geometry::*;
use proptest::prelude::*;

#[test]
fn delta_and_aspect() {
    let p = ScaleParams::new(2, 3);
    assert!((p.delta * p.a(2) - 1.0).abs() < 1e-12);
    assert!((p.big_gamma() - (2.0 + p.delta).powi(3)).abs() < 1e-12);
    let pr = ScaleParams::paper_regime(2, 0.3).unwrap();
    let g2 = pr.big_gamma() * 0.09;
    assert!(pr.alpha <= g2 && g2 < (2.0 + pr.delta) * pr.alpha);
}

#[test]
fn tiles_are_contained_and_mirror_symmetric() {
    let p = ScaleParams::new(2, 2);
    let ell = 6;
    let parent = level_rect(&p, ell, 1.0, (0, 0));
    let kids = tile_level(&p, ell, (0, 0)).unwrap();
    let axis = parent.base.left + parent.base.right;
    let key = |r: &RectRegion| (r.base.left, r.base.right, r.span.left, r.span.right);
    let (mids, sides): (Vec<&(RectRegion, TileRole)>, Vec<_>) = kids.iter().partition(|k| matches!(k.1, TileRole::Middle { .. }));
    for (r, _) in &kids {
        assert!(parent.contains_rect(r), "{r:?} outside {parent:?}");
    }
    // copies and principal rectangles reflect exactly
    let mut a: Vec<_> = sides.iter().map(|k| key(&k.0)).collect();
    let mut b: Vec<_> = sides.iter().map(|k| (axis - k.0.base.right, axis - k.0.base.left, k.0.span.left, k.0.span.right)).collect();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    // the middle column is centred up to the parity of the lattice
    for (r, _) in &mids {
        assert!((r.base.left + r.base.right - axis).abs() <= 1);
    }
}

proptest! {
    #[test]
    fn partition_lengths_and_count(ell in 3i64..9, k in 1.0f64..20.0, x in -50.0f64..50.0, d in 0u32..4) {
        let p = ScaleParams::new(2, 2);
        let parts = partition(&p, ell, k, x, d);
        prop_assert!((parts.len() as f64) <= p.a((d + p.m) as i64) + 1e-9);
        prop_assert!((parts[0].left - x).abs() < 1e-9);
        prop_assert!((parts.last().unwrap().right - (x + k * p.a(ell))).abs() < 1e-6 * k * p.a(ell));
        for w in parts.windows(2) {
            prop_assert!((w[0].right - w[1].left).abs() < 1e-9 * k * p.a(ell));
        }
        for q in &parts {
            prop_assert!(((q.right - q.left) - k * p.a(q.depth)).abs() < 1e-9 * k * p.a(ell));
            prop_assert!(q.depth <= ell - d as i64);
        }
    }

    #[test]
    fn covering_covers_with_small_overlaps(ell in 3i64..8, k in 2.0f64..30.0, x in -100i64..100, d in 0u32..3) {
        let p = ScaleParams::new(2, 2);
        if k * p.a(ell - d as i64) < 2.0 {
            prop_assert!(covering(&p, ell, k, x, d).is_err());
            return Ok(());
        }
        let c = covering(&p, ell, k, x, d).unwrap();
        let total = IntervalZ::new(x, x + floor_tol(k * p.a(ell))).unwrap();
        prop_assert_eq!(c[0].interval.left, total.left);
        prop_assert_eq!(c.last().unwrap().interval.right, total.right);
        for w in c.windows(2) {
            let (a, b) = (w[0].interval, w[1].interval);
            // contiguous or overlapping by at most two points
            let shared = a.right - b.left + 1;
            prop_assert!(shared >= 0, "gap {a:?} {b:?}");
            prop_assert!(shared <= 2, "overlap {a:?} {b:?}");
        }
        for piece in c.iter().filter(|c| c.principal) {
            prop_assert_eq!(piece.interval.count(), floor_tol(k * p.a(ell - d as i64)) + 1);
        }
        prop_assert_eq!(c.iter().filter(|c| c.principal).count(), 1usize << d);
    }

    #[test]
    fn covering_translates(ell in 3i64..7, k in 2.0f64..10.0, x in -100i64..100, s in -50i64..50) {
        let p = ScaleParams::new(2, 2);
        let a = covering(&p, ell, k, x, 1).unwrap();
        let b = covering(&p, ell, k, x + s, 1).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert_eq!(u.interval.shift(s), v.interval);
        }
    }
}
