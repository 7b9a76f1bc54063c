#![allow(dead_code)]

use lfpp_core::fpp::WeightedGrid;
use lfpp_core::geometry::{neighbours, Point, RectRegion};
use nalgebra::{DMatrix, DVector};

/// Dense (I − P) on the interior of [0,m]×[0,n], row-major interior order.
pub fn dense_laplacian(m: i64, n: i64) -> (Vec<Point>, DMatrix<f64>) {
    let pts: Vec<Point> = (1..n).flat_map(|y| (1..m).map(move |x| (x, y))).collect();
    let idx = |p: Point| pts.iter().position(|&q| q == p);
    let mut a = DMatrix::identity(pts.len(), pts.len());
    for (i, &p) in pts.iter().enumerate() {
        for q in neighbours(p) {
            if let Some(j) = idx(q) {
                a[(i, j)] -= 0.25;
            }
        }
    }
    (pts, a)
}

/// Right-hand side whose Dirichlet solution is the exit probability at `z`,
/// or None when `z` has no interior neighbour.
pub fn exit_rhs(pts: &[Point], z: Point) -> Option<DVector<f64>> {
    let mut b = DVector::zeros(pts.len());
    let mut any = false;
    for (i, &p) in pts.iter().enumerate() {
        if neighbours(p).contains(&z) {
            b[i] = 0.25;
            any = true;
        }
    }
    any.then_some(b)
}

/// Minimum weight over all simple paths from any of `starts` to the first
/// vertex satisfying `done`, by exhaustive depth-first enumeration.
pub fn brute(grid: &WeightedGrid, rect: &RectRegion, starts: &[Point], done: &dyn Fn(Point) -> bool) -> f64 {
    fn dfs(g: &WeightedGrid, r: &RectRegion, p: Point, acc: f64, seen: &mut Vec<Point>, done: &dyn Fn(Point) -> bool, best: &mut f64) {
        if done(p) {
            *best = best.min(acc);
            return;
        }
        for q in neighbours(p) {
            if r.contains(q) && !seen.contains(&q) {
                seen.push(q);
                dfs(g, r, q, acc + g.weight(q), seen, done, best);
                seen.pop();
            }
        }
    }
    let mut best = f64::INFINITY;
    for &s in starts {
        let mut seen = vec![s];
        dfs(grid, rect, s, grid.weight(s), &mut seen, done, &mut best);
    }
    best
}
