use lfpp_core::geometry::{IntervalZ, RectRegion};
use lfpp_core::gff::*;
use lfpp_core::kernels::greens_via_solve;
use lfpp_core::par::Execution;
use lfpp_core::rng;
use nalgebra::DMatrix;
use rand::Rng;

fn empirical_cov(sampler: &GffSampler, n: usize, seed: u64) -> (Vec<lfpp_core::geometry::Point>, DMatrix<f64>) {
    let region = sampler.region();
    let pts = region.interior_points();
    let d = pts.len();
    let mut acc = DMatrix::<f64>::zeros(d, d);
    let batch = 1000;
    for b in 0..n.div_ceil(batch) {
        let cnt = batch.min(n - b * batch);
        let fields = sample_field(sampler, seed ^ (b as u64) << 20, cnt, Execution::Parallel);
        let x = DMatrix::from_fn(d, cnt, |i, j| fields[j].get(pts[i]));
        acc += &x * x.transpose();
    }
    (pts, acc / n as f64)
}

#[test]
fn single_point_variance() {
    let s = GffSampler::new(RectRegion::origin_rect(2, 2).unwrap(), SamplerMode::SparsePrecision).unwrap();
    let n = 100_000;
    let v: Vec<f64> = sample_field(&s, 4, n, Execution::Parallel).iter().map(|f| f.get((1, 1)).powi(2)).collect();
    let (m, se) = lfpp_core::par::mean_se(&v);
    assert!((m - 1.0).abs() <= 3.0 * se, "{m} ± {se}");
}

#[test]
fn sampler_covariance_matches_green() {
    let region = RectRegion::origin_rect(16, 16).unwrap();
    let g = greens_via_solve(region).unwrap();
    let n = 100_000;
    for mode in [SamplerMode::SparsePrecision, SamplerMode::Cholesky] {
        let s = GffSampler::new(region, mode).unwrap();
        let (pts, c) = empirical_cov(&s, n, 99);
        let mut worst: f64 = 0.0;
        for (i, &u) in pts.iter().enumerate() {
            for (j, &w) in pts.iter().enumerate() {
                let guv = g.get(u, w);
                let se = ((g.get(u, u) * g.get(w, w) + guv * guv) / n as f64).sqrt();
                worst = worst.max((c[(i, j)] - guv).abs() / se);
            }
        }
        assert!(worst < 5.0, "{mode:?}: worst deviation {worst} s.e.");
    }
}

#[test]
fn reflection_invariant_covariance() {
    let region = RectRegion::origin_rect(9, 6).unwrap();
    let g = greens_via_solve(region).unwrap();
    let refl = |p: (i64, i64)| (p.0, 6 - p.1);
    for u in region.interior_points() {
        for w in region.interior_points() {
            assert!((g.get(u, w) - g.get(refl(u), refl(w))).abs() < 1e-12);
        }
    }
}

#[test]
fn markov_split_covariances() {
    let region = RectRegion::origin_rect(14, 10).unwrap();
    let sub = RectRegion::new(3, 11, 2, 8).unwrap();
    let (fine, cross, gsub) = decomposition_covariances(region, sub).unwrap();
    assert!(cross.iter().all(|x| x.abs() < 1e-10));
    let pts = sub.interior_points();
    for (i, &u) in pts.iter().enumerate() {
        for (j, &w) in pts.iter().enumerate() {
            assert!((fine[(i, j)] - gsub.get(u, w)).abs() < 1e-10);
        }
    }
}

#[test]
fn markov_split_of_sample() {
    let region = RectRegion::origin_rect(20, 12).unwrap();
    let s = GffSampler::new(region, SamplerMode::SparsePrecision).unwrap();
    let f = s.sample(1, 0);
    let (c, fi) = markov_decompose(&f, &region).unwrap();
    assert!(c.values.iter().all(|v| v.abs() < 1e-12));
    assert_eq!(fi.values, f.values);
    let sub = RectRegion::new(4, 15, 3, 9).unwrap();
    let (c, fi) = markov_decompose(&f, &sub).unwrap();
    for i in 0..sub.num_points() {
        let p = sub.point_at(i);
        assert!((c.values[i] + fi.values[i] - f.get(p)).abs() < 1e-12);
        if !sub.is_interior(p) {
            assert!(fi.values[i].abs() < 1e-12);
        }
    }
}

#[test]
fn line_sums() {
    let region = RectRegion::origin_rect(30, 8).unwrap();
    let s = GffSampler::new(region, SamplerMode::SparsePrecision).unwrap();
    let f = s.sample(2, 0);
    let one = line_sum(&f, IntervalZ::new(5, 5).unwrap(), 4).unwrap();
    assert_eq!(one.value, f.get((5, 4)));
    let a = line_sum(&f, IntervalZ::new(2, 10).unwrap(), 4).unwrap().value;
    let b = line_sum(&f, IntervalZ::new(11, 20).unwrap(), 4).unwrap().value;
    let ab = line_sum(&f, IntervalZ::new(2, 20).unwrap(), 4).unwrap().value;
    assert!((a + b - ab).abs() < 1e-12);
    let vals: Vec<f64> = sample_field(&s, 3, 10_000, Execution::Parallel)
        .iter()
        .map(|f| line_sum(f, IntervalZ::new(2, 27).unwrap(), 4).unwrap().value)
        .collect();
    let (m, se) = lfpp_core::par::mean_se(&vals);
    assert!(m.abs() <= 3.0 * se);
    // empirical variance against the exact one
    let var = vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64;
    let exact = line_sum_var_exact(region, IntervalZ::new(2, 27).unwrap(), 4).unwrap();
    assert!((var - exact).abs() < 5.0 * exact * (2.0 / vals.len() as f64).sqrt());
}

#[test]
fn line_sum_sandwich() {
    // N = 4, |I| = 8000, ν = 1/2
    let n = 4i64;
    let len = 8000i64;
    let region = RectRegion::origin_rect(len + 2 * n, n).unwrap();
    let iv = IntervalZ::new(n, n + len - 1).unwrap();
    let var = line_sum_var_exact(region, iv, n / 2).unwrap();
    let nu = 0.5;
    let hi = 4.0 * len as f64 * nu * (1.0 - nu) * n as f64;
    let lo = 4.0 * (len as f64 - 201.0 * n as f64 * (len as f64 / n as f64).ln()) * nu * (1.0 - nu) * n as f64;
    assert!(lo <= var && var <= hi, "{lo} <= {var} <= {hi}");
    // the upper bound also holds for short intervals and other heights
    for (l, y, h) in [(1i64, 1i64, 4i64), (5, 2, 4), (40, 3, 8), (17, 1, 6)] {
        let r = RectRegion::origin_rect(l + 2 * h, h).unwrap();
        let v = line_sum_var_exact(r, IntervalZ::new(h, h + l - 1).unwrap(), y).unwrap();
        let nu = y as f64 / h as f64;
        assert!(v <= 4.0 * l as f64 * nu * (1.0 - nu) * h as f64 + 1e-9);
    }
}

#[test]
fn disjoint_line_sums_positively_correlated() {
    let n = 4i64;
    let region = RectRegion::origin_rect(200, n).unwrap();
    let mut prev = f64::INFINITY;
    for d in [2 * n, 3 * n, 4 * n] {
        let a = IntervalZ::new(10, 49).unwrap();
        let b = IntervalZ::new(49 + d, 88 + d).unwrap();
        let c = line_sum_cov(region, (a, 2), (b, 2)).unwrap();
        assert!(c >= 0.0);
        assert!(c < prev);
        prev = c;
    }
}

#[test]
fn decorrelation_ratios() {
    let n = 4i64;
    let region = RectRegion::origin_rect(400, n).unwrap();
    let solver = lfpp_core::lattice::GreenSolver::new(region).unwrap();
    let one = functional_covariance(&solver, &[line_functional(IntervalZ::new(10, 40).unwrap(), 2)]).unwrap();
    assert!((decorrelate_line_sums(&one).unwrap()[0] - 1.0).abs() < 1e-12);
    let far = [line_functional(IntervalZ::new(10, 40).unwrap(), 2), line_functional(IntervalZ::new(40 + 4 * n, 70 + 4 * n).unwrap(), 2)];
    let r = decorrelate_line_sums(&functional_covariance(&solver, &far).unwrap()).unwrap();
    assert!(r[1] >= 0.999, "{r:?}");
    let beta = 32i64;
    let adj = [line_functional(IntervalZ::new(10, 9 + beta * n).unwrap(), 2), line_functional(IntervalZ::new(10 + beta * n, 9 + 2 * beta * n).unwrap(), 2)];
    let r = decorrelate_line_sums(&functional_covariance(&solver, &adj).unwrap()).unwrap();
    assert!(r[1] >= 1.0 - 10.0 / (beta * beta) as f64, "{r:?}");
}

#[test]
fn gram_schmidt_bounds() {
    let mut g = rng::stream(2024, 0);
    for case in 0..100 {
        let n = g.gen_range(2..=50);
        let rho: f64 = g.gen_range(0.01..0.249);
        let a1 = g.gen_range(0.0..(0.1 / rho).min(1.5));
        let spec = GramSpec::random(n, rho, a1, &mut g);
        let a2 = g.gen_range(0.1..3.0);
        let y: Vec<f64> = (0..n).map(|i| a2 * rho.powi((n - i - 1) as i32) * g.gen_range(-1.0..=1.0)).collect();
        let (norms, ye) = sequential_decorrelate(&spec, Some(&y)).unwrap();
        let ye = ye.unwrap();
        let floor = 1.0 - 4.0 * a1 * a1 * rho * rho / (1.0 - rho * rho);
        for i in 0..n {
            assert!(norms[i] <= 1.0 + 1e-12, "case {case}");
            assert!(norms[i] >= floor - 1e-12, "case {case}: {} < {floor}", norms[i]);
            if i + 2 <= n {
                assert!(ye[i].abs() <= 3.0 * a2 * rho.powi((n - i - 1) as i32) + 1e-12, "case {case} i {i}");
            }
        }
    }
    let (norms, _) = gram_schmidt(&DMatrix::identity(5, 5), None).unwrap();
    assert!(norms.iter().all(|&x| (x - 1.0).abs() < 1e-15));
}

#[test]
fn residuals_are_whitened() {
    let region = RectRegion::origin_rect(60, 6).unwrap();
    let solver = lfpp_core::lattice::GreenSolver::new(region).unwrap();
    let fs: Vec<Functional> = (0..5).map(|j| line_functional(IntervalZ::new(2 + 11 * j, 12 + 11 * j).unwrap(), 3)).collect();
    let cov = functional_covariance(&solver, &fs).unwrap();
    let s = GffSampler::new(region, SamplerMode::SparsePrecision).unwrap();
    let reps = 20_000;
    let mut sums = DMatrix::<f64>::zeros(5, 5);
    for f in sample_field(&s, 8, reps, Execution::Parallel) {
        let y: Vec<f64> = fs.iter().map(|fun| fun.iter().map(|&(p, c)| c * f.get(p)).sum()).collect();
        let (r, v) = sequential_residuals(&cov, &y).unwrap();
        let z: Vec<f64> = r.iter().zip(&v).map(|(a, b)| a / b.sqrt()).collect();
        for i in 0..5 {
            for j in 0..5 {
                sums[(i, j)] += z[i] * z[j];
            }
        }
    }
    let c = sums / reps as f64;
    for i in 0..5 {
        for j in 0..5 {
            let target = (i == j) as i32 as f64;
            assert!((c[(i, j)] - target).abs() < 5.0 * (2.0 / reps as f64).sqrt(), "({i},{j}) = {}", c[(i, j)]);
        }
    }
}
