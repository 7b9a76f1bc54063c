//! Discrete Gaussian free field with Dirichlet boundary on rectangles:
//! sampling, coarse/fine decomposition, line sums and sequential
//! decorrelation of correlated Gaussian observables.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{IntervalZ, Point, RectRegion};
use crate::io::fmt_num;
use crate::kernels::{greens_via_solve, GreenTable};
use crate::lattice::{boundary_rhs, BandedCholesky, GreenSolver};
use crate::par::{self, Execution};
use crate::rng;

/// Field values on every point of a rectangle (row-major), zero on its boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub region: RectRegion,
    pub values: Vec<f64>,
    pub seed: u64,
    pub replicate: u64,
}

impl FieldSample {
    pub fn zeros(region: RectRegion) -> Self {
        FieldSample { region, values: vec![0.0; region.num_points()], seed: 0, replicate: 0 }
    }
    /// Value at `p`; panics outside the region.
    pub fn get(&self, p: Point) -> f64 {
        debug_assert!(self.region.contains(p), "{p:?} outside {:?}", self.region);
        self.values[self.region.index(p)]
    }
    pub fn set(&mut self, p: Point, v: f64) {
        let i = self.region.index(p);
        self.values[i] = v;
    }
    /// Restriction to a sub-rectangle.
    pub fn restrict(&self, sub: &RectRegion) -> Result<FieldSample> {
        if !self.region.contains_rect(sub) {
            return Err(Error::Geometry(format!("{sub:?} not inside {:?}", self.region)));
        }
        let mut out = FieldSample { region: *sub, values: Vec::with_capacity(sub.num_points()), seed: self.seed, replicate: self.replicate };
        for y in sub.span.left..=sub.span.right {
            let row = self.region.index((sub.base.left, y));
            out.values.extend_from_slice(&self.values[row..row + sub.base.count() as usize]);
        }
        Ok(out)
    }
    /// Image under the reflection `y -> y0 + y1 - y` of the region.
    pub fn reflect_vertical(&self) -> FieldSample {
        let r = self.region;
        let mut out = self.clone();
        for y in r.span.left..=r.span.right {
            for x in r.base.left..=r.base.right {
                out.set((x, r.span.left + r.span.right - y), self.get((x, y)));
            }
        }
        out
    }
    /// CSV snapshot with columns `x,y,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# region={}x{} seed={} replicate={}",
            self.region.width(),
            self.region.height(),
            self.seed,
            self.replicate
        );
        s.push_str("x,y,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let p = self.region.point_at(i);
            let _ = writeln!(s, "{},{},{}", p.0, p.1, fmt_num(*v));
        }
        s
    }
}

/// Covariance model: the Green's function of the region.
#[derive(Debug, Clone)]
pub struct CovModel {
    pub region: RectRegion,
    pub green: GreenTable,
}

impl CovModel {
    pub fn new(region: RectRegion) -> Result<Self> {
        Ok(CovModel { region, green: greens_via_solve(region)? })
    }
}

/// How the sampler factors the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerMode {
    /// Dense Cholesky factor of the Green's function.
    Cholesky,
    /// Banded Cholesky factor of the precision `I - P`.
    SparsePrecision,
}

/// Exact DGFF sampler for one rectangle.
#[derive(Debug, Clone)]
pub enum GffSampler {
    Dense { region: RectRegion, points: Vec<Point>, factor: DMatrix<f64> },
    Precision { region: RectRegion, factor: BandedCholesky },
}

impl GffSampler {
    pub fn new(region: RectRegion, mode: SamplerMode) -> Result<Self> {
        match mode {
            SamplerMode::Cholesky => {
                let cov = CovModel::new(region)?;
                Self::from_cov(&cov)
            }
            SamplerMode::SparsePrecision => Ok(GffSampler::Precision { region, factor: BandedCholesky::factor(region)? }),
        }
    }
    pub fn from_cov(cov: &CovModel) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(cov.green.values.clone())
            .ok_or_else(|| Error::Numerical("Green's table is not positive definite".into()))?;
        Ok(GffSampler::Dense { region: cov.region, points: cov.green.points(), factor: chol.l() })
    }
    pub fn region(&self) -> RectRegion {
        match self {
            GffSampler::Dense { region, .. } | GffSampler::Precision { region, .. } => *region,
        }
    }
    /// Draw one field from `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldSample {
        let region = self.region();
        let mut out = FieldSample::zeros(region);
        match self {
            GffSampler::Dense { points, factor, .. } => {
                let n = points.len();
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                for (i, p) in points.iter().enumerate() {
                    let row = factor.row(i);
                    let v: f64 = (0..=i).map(|k| row[k] * z[k]).sum();
                    out.set(*p, v);
                }
            }
            GffSampler::Precision { factor, .. } => {
                let mut z: Vec<f64> = (0..factor.len()).map(|_| rng.sample(StandardNormal)).collect();
                factor.solve_upper(&mut z);
                for (i, v) in z.into_iter().enumerate() {
                    out.set(factor.grid.point(i), v);
                }
            }
        }
        out
    }
    /// Replicate `replicate` of the stream keyed by `seed`.
    pub fn sample(&self, seed: u64, replicate: u64) -> FieldSample {
        let mut r = rng::stream(seed, replicate);
        let mut f = self.draw(&mut r);
        f.seed = seed;
        f.replicate = replicate;
        f
    }
}

/// `count` independent fields, replicates `0..count`.
pub fn sample_field(sampler: &GffSampler, seed: u64, count: usize, exec: Execution) -> Vec<FieldSample> {
    par::map_indexed(exec, count, |i| sampler.sample(seed, i as u64))
}

/// Dirichlet solver for sub-rectangles of one shape, reusable by translation.
#[derive(Debug, Clone)]
pub struct HarmonicExtender {
    factor: Option<BandedCholesky>,
    shape: (i64, i64),
}

impl HarmonicExtender {
    pub fn new(shape: RectRegion) -> Result<Self> {
        let factor = if shape.num_interior() > 0 { Some(BandedCholesky::factor(shape.shift(-shape.base.left, -shape.span.left))?) } else { None };
        Ok(HarmonicExtender { factor, shape: (shape.width(), shape.height()) })
    }
    /// Harmonic extension into `sub` of `f` restricted to the non-interior
    /// points of `sub`; values on every point of `sub`, row-major.
    pub fn extend(&self, sub: &RectRegion, f: impl Fn(Point) -> f64) -> Result<Vec<f64>> {
        if (sub.width(), sub.height()) != self.shape {
            return Err(Error::Geometry(format!("{sub:?} does not match the solver shape {:?}", self.shape)));
        }
        let mut out = vec![0.0; sub.num_points()];
        for (i, v) in out.iter_mut().enumerate() {
            let p = sub.point_at(i);
            if !sub.is_interior(p) {
                *v = f(p);
            }
        }
        if let Some(fac) = &self.factor {
            let (dx, dy) = (sub.base.left, sub.span.left);
            let mut b = boundary_rhs(&fac.grid, |q| f((q.0 + dx, q.1 + dy)));
            fac.solve(&mut b);
            for (i, v) in b.into_iter().enumerate() {
                let q = fac.grid.point(i);
                out[sub.index((q.0 + dx, q.1 + dy))] = v;
            }
        }
        Ok(out)
    }
}

/// Split a field on `sub` into the harmonic extension of its values on ∂sub
/// (coarse) and the remainder (fine, zero on ∂sub).
pub fn markov_decompose(sample: &FieldSample, sub: &RectRegion) -> Result<(FieldSample, FieldSample)> {
    let ext = HarmonicExtender::new(*sub)?;
    markov_decompose_with(&ext, sample, sub)
}

/// [`markov_decompose`] with a prebuilt solver.
pub fn markov_decompose_with(ext: &HarmonicExtender, sample: &FieldSample, sub: &RectRegion) -> Result<(FieldSample, FieldSample)> {
    if !sample.region.contains_rect(sub) {
        return Err(Error::Geometry(format!("{sub:?} not inside {:?}", sample.region)));
    }
    let coarse_vals = ext.extend(sub, |p| sample.get(p))?;
    let mut fine = sample.restrict(sub)?;
    for (f, c) in fine.values.iter_mut().zip(&coarse_vals) {
        *f -= c;
    }
    let coarse = FieldSample { region: *sub, values: coarse_vals, seed: sample.seed, replicate: sample.replicate };
    Ok((coarse, fine))
}

/// Harmonic measure matrix of `sub`: entry (s, b) is the weight of boundary
/// point `b` in the harmonic extension at interior point `s`.
fn harmonic_matrix(sub: &RectRegion) -> Result<(Vec<Point>, Vec<Point>, DMatrix<f64>)> {
    let interior = sub.interior_points();
    let bnd: Vec<Point> = (0..sub.num_points()).map(|i| sub.point_at(i)).filter(|&p| !sub.is_interior(p)).collect();
    let ext = HarmonicExtender::new(*sub)?;
    let mut h = DMatrix::zeros(interior.len(), bnd.len());
    for (j, &b) in bnd.iter().enumerate() {
        let vals = ext.extend(sub, |p| if p == b { 1.0 } else { 0.0 })?;
        for (i, &s) in interior.iter().enumerate() {
            h[(i, j)] = vals[sub.index(s)];
        }
    }
    Ok((interior, bnd, h))
}

/// Analytic covariances of the decomposition on `sub ⊂ region`:
/// (covariance of the fine part, cross-covariance fine/coarse, Green's table of `sub`).
pub fn decomposition_covariances(region: RectRegion, sub: RectRegion) -> Result<(DMatrix<f64>, DMatrix<f64>, GreenTable)> {
    if !region.contains_rect(&sub) {
        return Err(Error::Geometry(format!("{sub:?} not inside {region:?}")));
    }
    let g = greens_via_solve(region)?;
    let (s_pts, b_pts, h) = harmonic_matrix(&sub)?;
    let gm = |a: &[Point], b: &[Point]| DMatrix::from_fn(a.len(), b.len(), |i, j| g.get(a[i], b[j]));
    let g_ss = gm(&s_pts, &s_pts);
    let g_sb = gm(&s_pts, &b_pts);
    let g_bb = gm(&b_pts, &b_pts);
    let ht = h.transpose();
    let fine = &g_ss - &g_sb * &ht - &h * g_sb.transpose() + &h * &g_bb * &ht;
    let cross = (&g_sb - &h * &g_bb) * &ht;
    Ok((fine, cross, greens_via_solve(sub)?))
}

/// Sum of the field over `I × {height}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSum {
    pub interval: IntervalZ,
    pub height: i64,
    pub value: f64,
}

pub fn line_sum(sample: &FieldSample, interval: IntervalZ, height: i64) -> Result<LineSum> {
    let r = sample.region;
    if !(r.is_interior((interval.left, height)) && r.is_interior((interval.right, height))) {
        return Err(Error::Geometry(format!("line {interval:?} at height {height} not interior to {r:?}")));
    }
    let value = (interval.left..=interval.right).map(|x| sample.get((x, height))).sum();
    Ok(LineSum { interval, height, value })
}

/// Linear functional of the field: a list of (point, coefficient).
pub type Functional = Vec<(Point, f64)>;

/// Indicator functional of `I × {height}`.
pub fn line_functional(interval: IntervalZ, height: i64) -> Functional {
    (interval.left..=interval.right).map(|x| ((x, height), 1.0)).collect()
}

/// Exact covariance matrix of linear functionals of the DGFF on the solver's
/// region, one solve per functional.
pub fn functional_covariance(solver: &GreenSolver, fs: &[Functional]) -> Result<DMatrix<f64>> {
    let grid = solver.grid();
    let vecs: Vec<Vec<f64>> = fs
        .iter()
        .map(|f| {
            let mut b = vec![0.0; grid.len()];
            for &(p, c) in f {
                if let Some(i) = grid.index(p) {
                    b[i] += c;
                }
            }
            b
        })
        .collect();
    let mut cov = DMatrix::zeros(fs.len(), fs.len());
    for (j, bj) in vecs.iter().enumerate() {
        let gj = solver.apply(bj)?;
        for (i, bi) in vecs.iter().enumerate() {
            cov[(i, j)] = bi.iter().zip(&gj).map(|(a, b)| a * b).sum();
        }
    }
    let t = cov.transpose();
    Ok((cov + t) * 0.5)
}

/// Var of the line sum over `I × {height}` on `region`.
pub fn line_sum_var_exact(region: RectRegion, interval: IntervalZ, height: i64) -> Result<f64> {
    let solver = GreenSolver::new(region)?;
    Ok(functional_covariance(&solver, &[line_functional(interval, height)])?[(0, 0)])
}

/// Cov of two line sums on `region`.
pub fn line_sum_cov(region: RectRegion, a: (IntervalZ, i64), b: (IntervalZ, i64)) -> Result<f64> {
    let solver = GreenSolver::new(region)?;
    Ok(functional_covariance(&solver, &[line_functional(a.0, a.1), line_functional(b.0, b.1)])?[(0, 1)])
}

/// Gram matrix of unit vectors with geometric off-diagonal decay.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSpec {
    pub n: usize,
    pub inner: DMatrix<f64>,
    pub rho: f64,
    pub a1: f64,
}

impl GramSpec {
    /// Random admissible spec: `|inner(i,j)| ≤ a1·rho^{|i-j|}`, unit diagonal.
    /// Diagonal dominance (2·a1·rho/(1-rho) < 1) makes it positive definite.
    pub fn random<R: Rng + ?Sized>(n: usize, rho: f64, a1: f64, rng: &mut R) -> Self {
        let mut inner = DMatrix::identity(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let u: f64 = rng.gen_range(-1.0..=1.0);
                let v = u * a1 * rho.powi((j - i) as i32);
                inner[(i, j)] = v;
                inner[(j, i)] = v;
            }
        }
        GramSpec { n, inner, rho, a1 }
    }
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 0.25 && self.a1 * self.rho < 0.1) {
            return Err(Error::Domain(format!("need rho < 0.25 and a1*rho < 0.1, got rho={} a1={}", self.rho, self.a1)));
        }
        for i in 0..self.n {
            if (self.inner[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Domain("diagonal must be 1".into()));
            }
            for j in 0..self.n {
                let bound = self.a1 * self.rho.powi((i as i32 - j as i32).abs());
                if i != j && self.inner[(i, j)].abs() > bound * (1.0 + 1e-12) {
                    return Err(Error::Domain(format!("entry ({i},{j}) exceeds the decay bound")));
                }
            }
        }
        Ok(())
    }
}

/// Gram–Schmidt on the Gram matrix `inner`: returns |ε_i|² and, when the inner
/// products `(y, x_i)` are supplied, the values `(y, ε_i)`.
pub fn gram_schmidt(inner: &DMatrix<f64>, y_inner: Option<&[f64]>) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let n = inner.nrows();
    let chol = nalgebra::Cholesky::new(inner.clone()).ok_or_else(|| Error::Numerical("Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let norms: Vec<f64> = (0..n).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let ye = y_inner.map(|c| {
        // ε_i = x_i - Σ_{k<i} (L_ik / L_kk) ε_k
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut v = c[i];
            for k in 0..i {
                v -= l[(i, k)] / l[(k, k)] * out[k];
            }
            out[i] = v;
        }
        out
    });
    Ok((norms, ye))
}

/// [`gram_schmidt`] on a validated spec.
pub fn sequential_decorrelate(spec: &GramSpec, y_inner: Option<&[f64]>) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    spec.validate()?;
    gram_schmidt(&spec.inner, y_inner)
}

/// Var(η̃_i) / Var(η_i) where η̃_i is the residual of η_i given η_1..η_{i-1}.
pub fn decorrelate_line_sums(cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (res, _) = gram_schmidt(cov, None)?;
    Ok(res.iter().enumerate().map(|(i, r)| r / cov[(i, i)]).collect())
}

/// Sequential residuals of a realized Gaussian vector with covariance `cov`:
/// η̃_i = η_i - E(η_i | η_<i), returned together with Var(η̃_i).
pub fn sequential_residuals(cov: &DMatrix<f64>, values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = cov.nrows();
    let chol = nalgebra::Cholesky::new(cov.clone()).ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let l = chol.l();
    // whitened w = L⁻¹ η, residual_i = L_ii w_i
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut s = values[i];
        for k in 0..i {
            s -= l[(i, k)] * w[k];
        }
        w[i] = s / l[(i, i)];
    }
    Ok(((0..n).map(|i| l[(i, i)] * w[i]).collect(), (0..n).map(|i| l[(i, i)] * l[(i, i)]).collect()))
}
