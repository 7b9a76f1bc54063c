use lfpp_core::par::Execution;
use lfpp_core::rng;
use lfpp_core::totalvar::*;
use proptest::prelude::*;
use rand::Rng;

/// Best value over every subset of internal grid points.
fn exhaustive(path: &PathSample, penalty: &dyn Penalty) -> f64 {
    let inner = path.len() - 2;
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << inner) {
        let idx: Vec<usize> = (0..inner).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).collect();
        let part = TimePartition::from_indices(path, &idx).unwrap();
        best = best.max(phi_value(path, &part, penalty).unwrap());
    }
    best
}

fn random_path(seed: u64, n: usize) -> PathSample {
    let mut r = rng::stream(seed, 0);
    PathSample::brownian(n - 1, 1.0, &mut r).unwrap()
}

#[test]
fn dp_matches_exhaustive_search() {
    for seed in 0..40 {
        let path = random_path(seed, 12);
        let (v, part) = phi_optimal_dp(&path, &0.3).unwrap();
        let ex = exhaustive(&path, &0.3);
        assert!((v - ex).abs() < 1e-12, "seed {seed}: {v} vs {ex}");
        assert!((phi_value(&path, &part, &0.3).unwrap() - v).abs() < 1e-12);
        let sp = StepPenalty::new(vec![0.0, 0.4, 1.0], vec![0.1, 0.5]).unwrap();
        let (v2, _) = phi_optimal_dp(&path, &sp).unwrap();
        assert!((v2 - exhaustive(&path, &sp)).abs() < 1e-12);
    }
}

#[test]
fn dp_limits() {
    let path = random_path(5, 200);
    let (v, part) = phi_optimal_dp(&path, &1e6).unwrap();
    assert_eq!(part.internal(), 0);
    assert!((v - (path.values[199] - path.values[0]).abs()).abs() < 1e-12);
    let (v0, _) = phi_optimal_dp(&path, &0.0).unwrap();
    assert!((v0 - path.total_variation()).abs() < 1e-12);
    assert!((phi_optimal_dp_quadratic(&path, &0.05).unwrap() - phi_optimal_dp(&path, &0.05).unwrap().0).abs() < 1e-12);
}

#[test]
fn monotone_path_prefers_trivial() {
    let times: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
    let values: Vec<f64> = times.iter().map(|t| t * t + t).collect();
    let path = PathSample::new(times, values).unwrap();
    let triv = phi_value(&path, &TimePartition::trivial(1.0).unwrap(), &0.2).unwrap();
    assert!((triv - 2.0).abs() < 1e-12);
    let part = TimePartition::from_indices(&path, &[3, 9, 15]).unwrap();
    assert!(phi_value(&path, &part, &0.2).unwrap() <= triv);
}

#[test]
fn lambda_star_closed_forms() {
    assert!((lambda_star(&StepPenalty::constant(0.37, 1.0).unwrap()) - 0.37).abs() < 1e-15);
    let two = StepPenalty::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0]).unwrap();
    assert!((lambda_star(&two) - (8.0f64 / 5.0).sqrt()).abs() < 1e-12);
}

#[test]
fn time_change_round_trip() {
    let p = StepPenalty::new(vec![0.0, 0.2, 0.7, 1.0], vec![0.1, 0.4, 0.2]).unwrap();
    let tc = time_change(&p).unwrap();
    for i in 0..=1000 {
        let u = i as f64 / 1000.0;
        assert!((tc.forward(tc.inverse(u)) - u).abs() < 1e-12);
    }
    let c = time_change(&StepPenalty::constant(0.3, 2.0).unwrap()).unwrap();
    for t in [0.0, 0.5, 1.3, 2.0] {
        assert!((c.forward(t) - t / 2.0).abs() < 1e-12);
    }
}

#[test]
fn time_change_identity_in_law() {
    let p = StepPenalty::new(vec![0.0, 0.3, 1.0], vec![0.2, 0.5]).unwrap();
    let part = TimePartition::new(vec![0.0, 0.11, 0.37, 0.52, 0.86, 1.0]).unwrap();
    let ((l, sl), (r, sr)) = time_change_check(&p, &part, 10_000, 31, Execution::Parallel).unwrap();
    assert!((l - r).abs() <= 3.0 * (sl * sl + sr * sr).sqrt(), "{l}±{sl} vs {r}±{sr}");
}

#[test]
fn small_range_has_no_ticks() {
    let times: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
    let values: Vec<f64> = times.iter().map(|t| 0.05 * (20.0 * t).sin()).collect();
    let path = PathSample::new(times, values).unwrap();
    let (part, rec) = uptick_partition_with(&path, 0.2, 10, &TickOptions { check_resolution: false, ..TickOptions::default() }).unwrap();
    assert_eq!(part.internal(), 0);
    assert!(rec.taus.is_empty());
}

#[test]
fn renewal_mean_gain() {
    let s = renewal_stats_mc(0.2, 10_000, 12, Execution::Parallel).unwrap();
    assert!((s.mean_delta - 0.4).abs() <= 3.0 * s.se_delta, "{} ± {}", s.mean_delta, s.se_delta);
    assert!((s.mean_tau1 - 0.04).abs() <= 3.0 * s.se_tau1);
}

#[test]
fn strategy_bounded_by_oracle() {
    let p = StepPenalty::constant(0.2, 1.0).unwrap();
    let rep = strategy_experiment(&p, 400, 3, Execution::Parallel).unwrap();
    assert!(rep.mean_phi_strategy <= rep.mean_phi_oracle + 3.0 * rep.se_oracle);
    assert!(rep.max_points <= rep.cap_k);
}

#[test]
fn strategy_rejects_large_penalty() {
    let p = StepPenalty::constant(0.8, 1.0).unwrap();
    assert!(strategy_experiment(&p, 10, 1, Execution::Sequential).is_err());
}

proptest! {
    #[test]
    fn dp_dominates_random_partitions(seed in 0u64..5000, lam in 0.0f64..1.0) {
        let path = random_path(seed, 60);
        let (best, _) = phi_optimal_dp(&path, &lam).unwrap();
        let mut r = rng::stream(seed, 9);
        for _ in 0..20 {
            let mut idx: Vec<usize> = (0..r.gen_range(0..10)).map(|_| r.gen_range(1..59)).collect();
            idx.sort_unstable();
            idx.dedup();
            let part = TimePartition::from_indices(&path, &idx).unwrap();
            prop_assert!(phi_value(&path, &part, &lam).unwrap() <= best + 1e-12);
        }
    }

    #[test]
    fn lambda_star_is_homogeneous(a in 0.05f64..3.0, b in 0.05f64..3.0, s in 0.1f64..0.9, c in 0.1f64..10.0) {
        let p = StepPenalty::new(vec![0.0, s, 1.0], vec![a, b]).unwrap();
        let q = p.scaled(c).unwrap();
        prop_assert!((lambda_star(&q) - c * lambda_star(&p)).abs() < 1e-12 * c * lambda_star(&p).max(1.0));
        prop_assert!(lambda_star(&p) >= a.min(b) - 1e-12 && lambda_star(&p) <= a.max(b) + 1e-12);
    }

    #[test]
    fn refining_the_grid_never_lowers_the_optimum(seed in 0u64..5000, lam in 0.01f64..0.5) {
        let fine = random_path(seed, 81);
        let idx: Vec<usize> = (0..81).step_by(2).collect();
        let coarse = PathSample::new(idx.iter().map(|&i| fine.times[i]).collect(), idx.iter().map(|&i| fine.values[i]).collect()).unwrap();
        let (a, _) = phi_optimal_dp(&coarse, &lam).unwrap();
        let (b, _) = phi_optimal_dp(&fine, &lam).unwrap();
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn penalty_spec_round_trips(a in 0.01f64..5.0, b in 0.01f64..5.0, s in 0.05f64..0.95) {
        let p = StepPenalty::new(vec![0.0, s, 1.0], vec![a, b]).unwrap();
        let q: StepPenalty = p.to_string().parse().unwrap();
        prop_assert_eq!(p, q);
    }
}
