use lfpp_core::geometry::{Point, ScaleParams};
use lfpp_core::gff::FieldSample;
use lfpp_core::gff::HarmonicExtender;
use lfpp_core::multiscale::*;
use lfpp_core::par::Execution;

fn small(gamma: f64) -> Multiscale {
    Multiscale::new(ScaleParams::new(2, 2), 8, 2, gamma).unwrap()
}

fn mirror(path: &[Point], mid2: i64) -> Vec<Point> {
    path.iter().map(|&(x, y)| (x, mid2 - y)).collect()
}

#[test]
fn layout_is_reflection_symmetric() {
    let ms = small(0.0);
    let r = ms.top_rect;
    let mid2 = r.span.left + r.span.right;
    let lay = ms.layout(2, &r).unwrap();
    let (a, b) = (&lay.layers[0], &lay.layers[1]);
    assert_eq!(a.span.left + b.span.right, mid2);
    assert_eq!(a.row + b.row, mid2);
    for (m, n) in a.mids.iter().zip(b.mids.iter().rev()) {
        assert_eq!(m.span.left + n.span.right, mid2);
    }
}

#[test]
fn reflected_field_gives_mirrored_crossing() {
    let mut ms = small(1.0);
    ms.penalty_scale = 0.05;
    let mid2 = ms.top_rect.span.left + ms.top_rect.span.right;
    let mut switched = 0;
    for rep in 0..6 {
        let f = ms.sample_top(3, rep).unwrap();
        let cs = ChoiceStream::new(3, rep);
        for strategy in [Strategy::Uniform, Strategy::Switching] {
            let a = ms.construct(Some(&f), strategy, cs).unwrap();
            let b = ms.construct(Some(&f.reflect_vertical()), strategy, cs.mirrored()).unwrap();
            assert_eq!(mirror(&a.path.path, mid2), b.path.path);
            assert!((a.path.weight - b.path.weight).abs() <= 1e-9 * a.path.weight);
            assert_eq!(a.plan.gadgets.len(), b.plan.gadgets.len());
            switched += a.plan.gadgets.len();
        }
    }
    assert!(switched > 0, "no switch exercised");
}

#[test]
fn crossings_are_feasible_and_switches_capped() {
    let mut ms = small(1.0);
    ms.penalty_scale = 0.01;
    let cap = (3.0 * ms.params.alpha) as usize;
    let mut truncated = 0;
    for rep in 0..8 {
        let f = ms.sample_top(5, rep).unwrap();
        let c = strategy2_crossing(&ms, Some(&f), ChoiceStream::new(5, rep)).unwrap();
        assert!(is_crossing(&ms.top_rect, &c.path.path));
        assert!(compare_vs_optimal(&ms.top_rect, &f, 1.0, &c.path.path).unwrap() >= 1.0 - 1e-12);
        assert!(c.plan.gadgets.len() <= cap);
        assert_eq!(c.plan.layer_choice.len(), c.plan.switch_intervals.len());
        let changes = c.plan.layer_choice.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, c.plan.gadgets.len());
        let top = c.records.last().unwrap();
        assert!(top.join <= top.weight);
        truncated += c.plan.truncated as usize;
    }
    assert!(truncated > 0, "cap never reached at a tiny penalty");
}

#[test]
fn switch_intervals_tile_the_base() {
    let ms = small(0.0);
    let c = strategy2_crossing(&ms, None, ChoiceStream::new(1, 1)).unwrap();
    let iv = &c.plan.switch_intervals;
    assert_eq!(iv[0].left, ms.top_rect.base.left);
    assert_eq!(iv.last().unwrap().right, ms.top_rect.base.right);
    assert!(iv.windows(2).all(|w| w[0].right + 1 == w[1].left));
}

#[test]
fn no_coarse_gain_means_no_switch() {
    let mut ms = small(1.0);
    ms.penalty_scale = 0.05;
    let lay = ms.layout(2, &ms.top_rect).unwrap();
    for rep in 0..4 {
        let mut f = ms.sample_top(9, rep).unwrap();
        // remove the harmonic part of each layer strip
        for layer in &lay.layers {
            let strip = lfpp_core::geometry::RectRegion { base: ms.top_rect.base, span: layer.span };
            let h = HarmonicExtender::new(strip).unwrap().extend(&strip, |p| f.get(p)).unwrap();
            for (i, v) in h.into_iter().enumerate() {
                let p = strip.point_at(i);
                let old = f.get(p);
                f.set(p, old - v);
            }
        }
        let c = strategy2_crossing(&ms, Some(&f), ChoiceStream::new(9, rep)).unwrap();
        assert!(c.plan.gadgets.is_empty());
    }
}

#[test]
fn uniform_strategy_picks_evenly() {
    let ms = small(0.0);
    let runs = 10_000;
    let lay = ms.layout(2, &ms.top_rect).unwrap();
    let mut layer = [0usize; 2];
    let mut mids = [0usize; 4];
    for rep in 0..runs {
        let c = strategy1_crossing(&ms, None, ChoiceStream::new(1, rep)).unwrap();
        let k = c.plan.layer_choice[0] as usize;
        layer[k - 1] += 1;
        let mid = c.plan.skeleton[1];
        let i = lay.layers[k - 1].mids.iter().position(|m| *m == mid).unwrap();
        mids[i] += 1;
    }
    let check = |count: usize, p: f64| {
        let se = (runs as f64 * p * (1.0 - p)).sqrt();
        assert!((count as f64 - runs as f64 * p).abs() <= 3.0 * se, "{count} vs {}", runs as f64 * p);
    };
    check(layer[0], 0.5);
    for &m in &mids {
        check(m, 0.25);
    }
}

#[test]
fn switching_layers_marginally_uniform() {
    let mut ms = small(1.0);
    ms.penalty_scale = 0.05;
    let runs = 400;
    let f = ms.sample_top(21, 0).unwrap();
    let mut top = 0usize;
    let mut total = 0usize;
    for rep in 0..runs {
        let c = strategy2_crossing(&ms, Some(&f), ChoiceStream::new(21, rep)).unwrap();
        top += c.plan.layer_choice.iter().filter(|&&k| k == 2).count();
        total += c.plan.layer_choice.len();
    }
    // choices within one run are dependent; bound by whole-run variance
    let j = total as f64 / runs as f64;
    let se = j * (runs as f64 * 0.25).sqrt();
    assert!((top as f64 - total as f64 / 2.0).abs() <= 3.0 * se);
}

#[test]
fn unit_weights_count_points() {
    let ms = small(0.0);
    let f = FieldSample::zeros(ms.top_rect);
    for rep in 0..5 {
        let c = strategy1_crossing(&ms, Some(&f), ChoiceStream::new(2, rep)).unwrap();
        let verticals = c.path.path.windows(2).filter(|w| w[0].0 == w[1].0).count();
        assert!(c.path.path.windows(2).all(|w| w[1].0 >= w[0].0));
        assert_eq!(c.path.weight, (ms.top_rect.width() + 1) as f64 + verticals as f64);
        assert_eq!(c.path.weight, c.path.path.len() as f64);
    }
}

#[test]
fn zero_gamma_growth_ratio() {
    // Γ ≈ 10.7 keeps the junction overhead inside the 2δ budget
    let cfg = RunConfig { exec: Execution::Sequential, ..RunConfig::new(ScaleParams::new(2, 3), 16, 2, 0.0, 4, 1) };
    let rep = recursive_run(&cfg).unwrap();
    let delta = cfg.params.delta;
    for s in rep.stats.iter().filter(|s| s.level >= 1) {
        let r = s.ratio.unwrap();
        assert!((2.0..=2.0 + 2.0 * delta).contains(&r), "level {} ratio {r}", s.level);
        assert!(s.d_join_mean <= s.d_mean);
    }
    assert!(rep.top_ratios.iter().all(|&r| r >= 1.0 - 1e-12));
}

#[test]
fn choice_stream_is_unbiased() {
    let n = 100_000u64;
    for seed in [1u64, 17] {
        let ones = (0..n).filter(|&r| ChoiceStream::new(seed, r).layer() == 1).count() as f64;
        let z = (ones - n as f64 / 2.0) / (n as f64 * 0.25).sqrt();
        assert!(z.abs() < 4.0, "seed {seed}: z = {z}");
        let m = ChoiceStream::new(seed, 0).mirrored();
        assert_eq!(m.layer(), 3 - ChoiceStream::new(seed, 0).layer());
    }
}
