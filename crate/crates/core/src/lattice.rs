//! Linear algebra for the killed simple random walk on a rectangle:
//! the operator `A = I - P` on interior points, a banded Cholesky
//! factorization, conjugate gradients, and harmonic extension.

use crate::error::{Error, Result};
use crate::geometry::{Point, RectRegion};

/// Largest banded factor (entries) we are willing to allocate.
pub const BANDED_ENTRY_LIMIT: usize = 120_000_000;

/// Interior points of a rectangle, numbered with the shorter side as the
/// fast axis so that `A` has the smallest possible bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorGrid {
    pub region: RectRegion,
    nx: usize,
    ny: usize,
    /// True when y is the fast axis.
    y_fast: bool,
}

impl InteriorGrid {
    pub fn new(region: RectRegion) -> Result<Self> {
        let (nx, ny) = region.interior_dims();
        if nx == 0 || ny == 0 {
            return Err(Error::Geometry(format!("{region:?} has no interior points")));
        }
        Ok(InteriorGrid { region, nx, ny, y_fast: ny < nx })
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Size of the fast axis, which is also the bandwidth of `A`.
    pub fn fast(&self) -> usize {
        if self.y_fast {
            self.ny
        } else {
            self.nx
        }
    }
    pub fn index(&self, p: Point) -> Option<usize> {
        if !self.region.is_interior(p) {
            return None;
        }
        let i = (p.0 - self.region.base.left - 1) as usize;
        let j = (p.1 - self.region.span.left - 1) as usize;
        Some(if self.y_fast { j + i * self.ny } else { i + j * self.nx })
    }
    pub fn point(&self, idx: usize) -> Point {
        let (i, j) = if self.y_fast { (idx / self.ny, idx % self.ny) } else { (idx % self.nx, idx / self.nx) };
        (self.region.base.left + 1 + i as i64, self.region.span.left + 1 + j as i64)
    }
    /// `out = (I - P) u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let f = self.fast();
        let n = self.len();
        for i in 0..n {
            let mut s = 0.0;
            if i % f != 0 {
                s += u[i - 1];
            }
            if (i + 1) % f != 0 {
                s += u[i + 1];
            }
            if i >= f {
                s += u[i - f];
            }
            if i + f < n {
                s += u[i + f];
            }
            out[i] = u[i] - 0.25 * s;
        }
    }
}

/// Banded Cholesky factor `L` of `A = I - P`, so `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    pub grid: InteriorGrid,
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(region: RectRegion) -> Result<Self> {
        let grid = InteriorGrid::new(region)?;
        let n = grid.len();
        let bw = grid.fast();
        let w = bw + 1;
        if n.saturating_mul(w) > BANDED_ENTRY_LIMIT {
            return Err(Error::Size(format!("banded factor of {n}x{w} entries exceeds limit")));
        }
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = if i == j {
                    1.0
                } else if (j + 1 == i && i % bw != 0) || j + bw == i {
                    -0.25
                } else {
                    0.0
                };
                let kmin = lo.max(j.saturating_sub(bw));
                if kmin < j {
                    let ri = &data[i * w + (kmin + bw - i)..i * w + (j + bw - i)];
                    let rj = &data[j * w + (kmin + bw - j)..j * w + bw];
                    s -= dot(ri, rj);
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::Numerical("banded Cholesky lost positive definiteness".into()));
                    }
                    data[i * w + bw] = s.sqrt();
                } else {
                    data[i * w + (j + bw - i)] = s / data[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { grid, n, bw, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Solve `L y = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * w + (lo + self.bw - i)..i * w + self.bw];
            let s = dot(row, &b[lo..i]);
            b[i] = (b[i] - s) / self.data[i * w + self.bw];
        }
    }

    /// Solve `Lᵀ x = y` in place.
    pub fn solve_upper(&self, y: &mut [f64]) {
        let w = self.bw + 1;
        for i in (0..self.n).rev() {
            let xi = y[i] / self.data[i * w + self.bw];
            y[i] = xi;
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * w + (lo + self.bw - i)..i * w + self.bw];
            for (yk, l) in y[lo..i].iter_mut().zip(row) {
                *yk -= l * xi;
            }
        }
    }

    /// `x = A⁻¹ b = G b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.solve_lower(b);
        self.solve_upper(b);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0f64; 4];
    let n = a.len().min(b.len());
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        s[0] += a[k] * b[k];
        s[1] += a[k + 1] * b[k + 1];
        s[2] += a[k + 2] * b[k + 2];
        s[3] += a[k + 3] * b[k + 3];
    }
    let mut t = (s[0] + s[1]) + (s[2] + s[3]);
    for k in 4 * chunks..n {
        t += a[k] * b[k];
    }
    t
}

/// Conjugate gradients for `(I - P) x = b`. Returns the solution and the
/// number of iterations; fails if the relative residual stays above `tol`.
pub fn cg_solve(grid: &InteriorGrid, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = grid.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok((x, it));
        }
        grid.apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= tol * bnorm {
        Ok((x, max_iter))
    } else {
        Err(Error::Numerical(format!("CG did not reach tolerance {tol} in {max_iter} iterations")))
    }
}

/// Applies the Green's function `G = (I - P)⁻¹` of a rectangle, by banded
/// Cholesky when it fits in memory and by CG otherwise.
#[derive(Debug, Clone)]
pub enum GreenSolver {
    Direct(BandedCholesky),
    Iterative { grid: InteriorGrid, tol: f64 },
}

impl GreenSolver {
    pub fn new(region: RectRegion) -> Result<Self> {
        match BandedCholesky::factor(region) {
            Ok(f) => Ok(GreenSolver::Direct(f)),
            Err(Error::Size(_)) => Ok(GreenSolver::Iterative { grid: InteriorGrid::new(region)?, tol: 1e-12 }),
            Err(e) => Err(e),
        }
    }
    /// Force the iterative path.
    pub fn iterative(region: RectRegion, tol: f64) -> Result<Self> {
        Ok(GreenSolver::Iterative { grid: InteriorGrid::new(region)?, tol })
    }
    pub fn grid(&self) -> &InteriorGrid {
        match self {
            GreenSolver::Direct(f) => &f.grid,
            GreenSolver::Iterative { grid, .. } => grid,
        }
    }
    /// `G b`, with `b` indexed by the grid numbering.
    pub fn apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            GreenSolver::Direct(f) => {
                let mut x = b.to_vec();
                f.solve(&mut x);
                Ok(x)
            }
            GreenSolver::Iterative { grid, tol } => {
                let max_iter = 20 * grid.len() + 100;
                cg_solve(grid, b, *tol, max_iter).map(|r| r.0)
            }
        }
    }
    /// `G(u, ·)` as a grid vector.
    pub fn column(&self, u: Point) -> Result<Vec<f64>> {
        let g = self.grid();
        let iu = g.index(u).ok_or_else(|| Error::Geometry(format!("{u:?} is not interior")))?;
        let mut b = vec![0.0; g.len()];
        b[iu] = 1.0;
        self.apply(&b)
    }
}

/// Right-hand side contribution of boundary data: `(1/4) Σ` over boundary
/// neighbours of each interior point, for values given by `f`.
pub fn boundary_rhs(grid: &InteriorGrid, f: impl Fn(Point) -> f64) -> Vec<f64> {
    let r = grid.region;
    let mut b = vec![0.0; grid.len()];
    for (idx, v) in b.iter_mut().enumerate() {
        let p = grid.point(idx);
        let mut s = 0.0;
        for q in crate::geometry::neighbours(p) {
            if !r.is_interior(q) {
                s += f(q);
            }
        }
        *v = 0.25 * s;
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_matches_cg() {
        let r = RectRegion::origin_rect(9, 6).unwrap();
        let f = BandedCholesky::factor(r).unwrap();
        let b: Vec<f64> = (0..f.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = b.clone();
        f.solve(&mut x);
        let (y, _) = cg_solve(&f.grid, &b, 1e-13, 10_000).unwrap();
        for (a, c) in x.iter().zip(&y) {
            assert!((a - c).abs() < 1e-10);
        }
        let mut ax = vec![0.0; x.len()];
        f.grid.apply(&x, &mut ax);
        for (a, c) in ax.iter().zip(&b) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_green_is_one() {
        let s = GreenSolver::new(RectRegion::origin_rect(2, 2).unwrap()).unwrap();
        assert!((s.column((1, 1)).unwrap()[0] - 1.0).abs() < 1e-15);
    }
}
