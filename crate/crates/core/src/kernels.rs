//! Exact random-walk kernels on rectangles `R_{M,N} = [0,M]×[0,N] ∩ ℤ²`:
//! Poisson kernel (sine series), potential kernel, Green's functions, the
//! lazy one-dimensional Green's function and the continuum kernel.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{neighbours, Point, RectRegion};
use crate::lattice::BandedCholesky;
use crate::quad;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Constant term of the potential kernel expansion, (2γ + log 8)/π.
pub fn potential_constant() -> f64 {
    (2.0 * EULER_GAMMA + 8f64.ln()) / PI
}

/// Interior size above which [`greens_via_solve`] refuses to build a table.
pub const DENSE_LIMIT: usize = 20_000;

/// arccosh(2 - cos t), written as log1p so it stays accurate near 0.
pub fn r_of(t: f64) -> Result<f64> {
    if !(0.0..=PI + 1e-15).contains(&t) {
        return Err(Error::Domain(format!("r(t) needs t in [0, pi], got {t}")));
    }
    Ok(r_unchecked(t))
}

fn r_unchecked(t: f64) -> f64 {
    let s = (0.5 * t).sin();
    let u = 2.0 * s * s;
    (u + (u * (u + 2.0)).sqrt()).ln_1p()
}

/// sinh(a)/sinh(b) for 0 ≤ a ≤ b, b > 0, without overflow.
pub fn sinh_ratio(a: f64, b: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    (a - b).exp() * (-2.0 * a).exp_m1() / (-2.0 * b).exp_m1()
}

/// The rectangle `R_{M,N}` in local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectKernel {
    pub m: i64,
    pub n: i64,
}

/// Side of the rectangle a boundary point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl RectKernel {
    pub fn new(m: i64, n: i64) -> Result<Self> {
        if m < 2 || n < 2 {
            return Err(Error::Geometry(format!("R_{{{m},{n}}} has no interior point")));
        }
        Ok(RectKernel { m, n })
    }
    pub fn region(&self) -> RectRegion {
        RectRegion::origin_rect(self.m, self.n).expect("validated")
    }
    pub fn is_interior(&self, v: Point) -> bool {
        0 < v.0 && v.0 < self.m && 0 < v.1 && v.1 < self.n
    }
    fn side(&self, z: Point) -> Option<Side> {
        let (x, y) = z;
        if x == 0 && 0 < y && y < self.n {
            Some(Side::Left)
        } else if x == self.m && 0 < y && y < self.n {
            Some(Side::Right)
        } else if y == 0 && 0 < x && x < self.m {
            Some(Side::Bottom)
        } else if y == self.n && 0 < x && x < self.m {
            Some(Side::Top)
        } else {
            None
        }
    }

    /// Exit probability `P^v(S_τ = z)`.
    pub fn poisson_kernel(&self, v: Point, z: Point) -> Result<f64> {
        if !self.is_interior(v) {
            return Err(Error::Geometry(format!("{v:?} is not interior to R_{{{},{}}}", self.m, self.n)));
        }
        let side = self
            .side(z)
            .ok_or_else(|| Error::Geometry(format!("{z:?} is not a non-corner boundary point")))?;
        let (x, y) = v;
        let (m, n) = (self.m as f64, self.n as f64);
        let val = match side {
            Side::Left | Side::Right => {
                let xd = if side == Side::Left { x as f64 } else { m - x as f64 };
                let mut s = 0.0;
                for j in 1..self.n {
                    let t = j as f64 * PI / n;
                    let r = r_unchecked(t);
                    s += sinh_ratio(r * (m - xd), r * m) * (t * y as f64).sin() * (t * z.1 as f64).sin();
                }
                2.0 / n * s
            }
            Side::Bottom | Side::Top => {
                let yd = if side == Side::Bottom { y as f64 } else { n - y as f64 };
                let mut s = 0.0;
                for j in 1..self.m {
                    let t = j as f64 * PI / m;
                    let r = r_unchecked(t);
                    s += sinh_ratio(r * (n - yd), r * n) * (t * x as f64).sin() * (t * z.0 as f64).sin();
                }
                2.0 / m * s
            }
        };
        Ok(val)
    }

    /// `H(v, ·)` over all non-corner boundary points, in the order of
    /// [`RectRegion::boundary_points`] (left, right, bottom, top).
    pub fn poisson_row(&self, v: Point) -> Result<Vec<(Point, f64)>> {
        if !self.is_interior(v) {
            return Err(Error::Geometry(format!("{v:?} is not interior")));
        }
        let (x, y) = v;
        let mut out = Vec::with_capacity(2 * (self.m + self.n) as usize);
        // vertical sides
        let n = self.n as usize;
        let sin_n: Vec<f64> = (0..2 * n).map(|k| (k as f64 * PI / n as f64).sin()).collect();
        let mf = self.m as f64;
        let mut cl = vec![0.0; n];
        let mut cr = vec![0.0; n];
        for j in 1..n {
            let r = r_unchecked(j as f64 * PI / n as f64);
            let sy = sin_n[(j * y as usize) % (2 * n)];
            cl[j] = 2.0 / n as f64 * sinh_ratio(r * (mf - x as f64), r * mf) * sy;
            cr[j] = 2.0 / n as f64 * sinh_ratio(r * x as f64, r * mf) * sy;
        }
        for (c, xs) in [(&cl, 0), (&cr, self.m)] {
            for y1 in 1..n {
                let s: f64 = (1..n).map(|j| c[j] * sin_n[(j * y1) % (2 * n)]).sum();
                out.push(((xs, y1 as i64), s));
            }
        }
        let m = self.m as usize;
        let sin_m: Vec<f64> = (0..2 * m).map(|k| (k as f64 * PI / m as f64).sin()).collect();
        let nf = self.n as f64;
        let mut cb = vec![0.0; m];
        let mut ct = vec![0.0; m];
        for j in 1..m {
            let r = r_unchecked(j as f64 * PI / m as f64);
            let sx = sin_m[(j * x as usize) % (2 * m)];
            cb[j] = 2.0 / m as f64 * sinh_ratio(r * (nf - y as f64), r * nf) * sx;
            ct[j] = 2.0 / m as f64 * sinh_ratio(r * y as f64, r * nf) * sx;
        }
        for (c, ys) in [(&cb, 0), (&ct, self.n)] {
            for x1 in 1..m {
                let s: f64 = (1..m).map(|j| c[j] * sin_m[(j * x1) % (2 * m)]).sum();
                out.push(((x1 as i64, ys), s));
            }
        }
        Ok(out)
    }
}

/// Accuracy mode of the potential kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PotentialMode {
    /// Two-term asymptotic expansion.
    Approx,
    /// Numerically exact value from the one-dimensional integral representation.
    Exact,
}

/// Potential kernel `a(x)` of the simple random walk, `a(0) = 0`.
pub fn potential_kernel(x: Point, mode: PotentialMode) -> f64 {
    if x == (0, 0) {
        return 0.0;
    }
    match mode {
        PotentialMode::Approx => {
            let r = ((x.0 * x.0 + x.1 * x.1) as f64).sqrt();
            2.0 / PI * r.ln() + potential_constant()
        }
        PotentialMode::Exact => potential_exact(x.0.unsigned_abs(), x.1.unsigned_abs()),
    }
}

/// a(x) = (2/π) ∫_0^π (1 - cos(x₂ t) e^{-|x₁| r(t)}) / sinh r(t) dt with |x₁| ≥ |x₂|,
/// integrated on panels refined geometrically towards t = 0.
fn potential_exact(a: u64, b: u64) -> f64 {
    let (big, small) = if a >= b { (a as f64, b as f64) } else { (b as f64, a as f64) };
    let rule = quad::gl24();
    let f = |t: f64| {
        let s = (0.5 * t).sin();
        let u = 2.0 * s * s;
        let sh = (u * (u + 2.0)).sqrt();
        let r = (u + sh).ln_1p();
        let e = (-big * r).exp();
        let sb = (0.5 * small * t).sin();
        (-(-big * r).exp_m1() + e * 2.0 * sb * sb) / sh
    };
    let mut total = 0.0;
    // [π/2, π] split evenly, then [π/2^{k+1}, π/2^k]
    total += quad::integrate_composite(rule, 0.5 * PI, PI, 4, f);
    let mut hi = 0.5 * PI;
    for _ in 0..64 {
        let lo = 0.5 * hi;
        total += quad::integrate(rule, lo, hi, f);
        hi = lo;
    }
    // integrand ≈ |x₁| on the remaining sliver
    total += big * hi;
    2.0 / PI * total
}

/// Memoized exact potential kernel, keyed by the sorted absolute coordinates.
#[derive(Debug, Default)]
pub struct PotentialTable {
    cache: Mutex<HashMap<(u64, u64), f64>>,
}

impl PotentialTable {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn get(&self, x: Point) -> f64 {
        let (a, b) = (x.0.unsigned_abs(), x.1.unsigned_abs());
        let key = if a >= b { (a, b) } else { (b, a) };
        if key == (0, 0) {
            return 0.0;
        }
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return *v;
        }
        let v = potential_exact(key.0, key.1);
        self.cache.lock().expect("cache lock").insert(key, v);
        v
    }
}

/// G(u,w) = Σ_z H(u,z) a(z-w) - a(u-w).
pub fn greens_via_kernel(k: &RectKernel, u: Point, w: Point, mode: PotentialMode) -> Result<f64> {
    if !k.is_interior(w) {
        return Err(Error::Geometry(format!("{w:?} is not interior")));
    }
    let row = k.poisson_row(u)?;
    let pot = |p: Point| potential_kernel(p, mode);
    let s: f64 = row.iter().map(|&(z, h)| h * pot((z.0 - w.0, z.1 - w.1))).sum();
    Ok(s - pot((u.0 - w.0, u.1 - w.1)))
}

/// Dense Green's function of a rectangle, indexed by interior points in
/// row-major order.
#[derive(Debug, Clone)]
pub struct GreenTable {
    pub region: RectRegion,
    pub values: DMatrix<f64>,
}

impl GreenTable {
    /// Index of an interior point in the table, if any.
    pub fn index(&self, p: Point) -> Option<usize> {
        if !self.region.is_interior(p) {
            return None;
        }
        let w = (self.region.width() - 1) as usize;
        Some((p.0 - self.region.base.left - 1) as usize + (p.1 - self.region.span.left - 1) as usize * w)
    }
    /// G(u, w); zero if either point is not interior.
    pub fn get(&self, u: Point, w: Point) -> f64 {
        match (self.index(u), self.index(w)) {
            (Some(i), Some(j)) => self.values[(i, j)],
            _ => 0.0,
        }
    }
    pub fn points(&self) -> Vec<Point> {
        self.region.interior_points()
    }
}

/// Solve `(I - P) G = I` on the interior of `region`.
pub fn greens_via_solve(region: RectRegion) -> Result<GreenTable> {
    let n = region.num_interior();
    if n == 0 {
        return Err(Error::Geometry(format!("{region:?} has no interior points")));
    }
    if n > DENSE_LIMIT {
        return Err(Error::Size(format!("{n} interior points exceed the dense limit {DENSE_LIMIT}")));
    }
    let f = BandedCholesky::factor(region)?;
    let pts = region.interior_points();
    let mut values = DMatrix::zeros(n, n);
    for (j, &p) in pts.iter().enumerate() {
        let mut b = vec![0.0; n];
        b[f.grid.index(p).expect("interior")] = 1.0;
        f.solve(&mut b);
        for (i, &q) in pts.iter().enumerate() {
            values[(i, j)] = b[f.grid.index(q).expect("interior")];
        }
    }
    // exact symmetry
    let t = values.transpose();
    values = (values + t) * 0.5;
    Ok(GreenTable { region, values })
}

/// `(H(v,z), G(z_R, v)/4)` where `z_R` is the unique interior neighbour of `z`.
pub fn reversibility_check(k: &RectKernel, table: &GreenTable, v: Point, z: Point) -> Result<(f64, f64)> {
    let inner: Vec<Point> = neighbours(z).into_iter().filter(|&q| k.is_interior(q)).collect();
    if inner.len() != 1 {
        return Err(Error::Geometry(format!("{z:?} has {} interior neighbours", inner.len())));
    }
    Ok((k.poisson_kernel(v, z)?, 0.25 * table.get(inner[0], v)))
}

/// Diagonal Green's function 4(b-y)(y-a)/(b-a) of the lazy walk on `(a, b)`.
pub fn lazy_green_1d(a: i64, b: i64, y: i64) -> Result<f64> {
    if !(a < y && y < b) {
        return Err(Error::Domain(format!("need {a} < {y} < {b}")));
    }
    Ok(4.0 * ((b - y) * (y - a)) as f64 / (b - a) as f64)
}

/// Continuum kernel of `[0, 2Υ] × [0, 1]`: value and a bound on the
/// truncated tail.
pub fn continuum_kernel(upsilon: f64, w: (f64, f64), z: (f64, f64), terms: usize) -> Result<(f64, f64)> {
    if upsilon <= 1.0 {
        return Err(Error::Domain(format!("need upsilon > 1, got {upsilon}")));
    }
    if terms == 0 {
        return Err(Error::Domain("need at least one term".into()));
    }
    let l = 2.0 * upsilon;
    let (wx, wy) = w;
    if !(0.0 < wx && wx < l && 0.0 < wy && wy < 1.0) {
        return Err(Error::Domain(format!("{w:?} is not interior")));
    }
    let eps = 1e-12;
    let on_left = z.0.abs() < eps && 0.0 < z.1 && z.1 < 1.0;
    let on_right = (z.0 - l).abs() < eps && 0.0 < z.1 && z.1 < 1.0;
    let on_bottom = z.1.abs() < eps && 0.0 < z.0 && z.0 < l;
    let on_top = (z.1 - 1.0).abs() < eps && 0.0 < z.0 && z.0 < l;
    if on_left || on_right {
        let d = if on_left { wx } else { l - wx };
        let mut s = 0.0;
        for j in 1..=terms {
            let jp = j as f64 * PI;
            s += sinh_ratio(jp * (l - d), jp * l) * (jp * wy).sin() * (jp * z.1).sin();
        }
        let q = (-PI * d).exp();
        let tail = 2.0 * 1.001 * q.powi(terms as i32 + 1) / (1.0 - q);
        Ok((2.0 * s, tail))
    } else if on_bottom || on_top {
        let d = if on_bottom { wy } else { 1.0 - wy };
        let mut s = 0.0;
        for j in 1..=terms {
            let jp = j as f64 * PI;
            s += sinh_ratio(jp * (1.0 - d) / l, jp / l) * (jp * (1.0 - wx / l)).sin() * (jp * (1.0 - z.0 / l)).sin();
        }
        let q = (-PI * d / l).exp();
        let lead = 1.0 / (1.0 - (-2.0 * PI / l).exp());
        let tail = lead * q.powi(terms as i32 + 1) / (1.0 - q) / upsilon;
        Ok((s / upsilon, tail))
    } else {
        Err(Error::Domain(format!("{z:?} is not a non-corner boundary point")))
    }
}

/// Result of the average-Green scaling fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgGreenFit {
    pub sizes: Vec<i64>,
    pub means: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// C_I from quadrature of the continuum kernel.
    pub c_quadrature: f64,
}

/// Mean of G(v,v) over v ∈ {ΥN} × (N·I) on `R_{2ΥN, N}`.
pub fn avg_green_diag(upsilon: f64, intervals: &[(f64, f64)], n: i64, table: &PotentialTable) -> Result<f64> {
    let half = upsilon * n as f64;
    if (half - half.round()).abs() > 1e-9 {
        return Err(Error::Domain(format!("upsilon*N = {half} is not an integer")));
    }
    let xm = half.round() as i64;
    let k = RectKernel::new(2 * xm, n)?;
    let mut ys: Vec<i64> = (1..n)
        .filter(|&y| {
            let t = y as f64 / n as f64;
            intervals.iter().any(|&(a, b)| a - 1e-12 <= t && t <= b + 1e-12)
        })
        .collect();
    ys.dedup();
    if ys.is_empty() {
        return Err(Error::Domain("interval set contains no lattice heights".into()));
    }
    let mut total = 0.0;
    for &y in &ys {
        let v = (xm, y);
        let row = k.poisson_row(v)?;
        total += row.iter().map(|&(z, h)| h * table.get((z.0 - v.0, z.1 - v.1))).sum::<f64>();
    }
    Ok(total / ys.len() as f64)
}

/// C_I = (2/(π|I|)) ∫_I ∫_∂ log|(Υ,y) - w| h((Υ,y), w) dw dy + (2γ + log 8)/π.
pub fn c_i_quadrature(upsilon: f64, intervals: &[(f64, f64)]) -> Result<f64> {
    let l = 2.0 * upsilon;
    let theta = intervals.iter().map(|&(a, b)| a.min(1.0 - b)).fold(f64::INFINITY, f64::min);
    if !(theta > 0.0) {
        return Err(Error::Domain("intervals must lie inside (0,1)".into()));
    }
    let rule = quad::gl24();
    let terms = ((40.0 * l / (PI * theta)).ceil() as usize).clamp(20, 20_000);
    let inner = |y: f64| -> Result<f64> {
        let w = (upsilon, y);
        let mut s = 0.0;
        let mut err = None;
        let mut side = |zf: &dyn Fn(f64) -> (f64, f64), len: f64| {
            s += quad::integrate_composite(rule, 0.0, len, 16, |t| {
                let z = zf(t);
                match continuum_kernel(upsilon, w, z, terms) {
                    Ok((h, _)) => h * ((z.0 - w.0).hypot(z.1 - w.1)).ln(),
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                }
            });
        };
        side(&|t| (0.0, t), 1.0);
        side(&|t| (l, t), 1.0);
        side(&|t| (t, 0.0), l);
        side(&|t| (t, 1.0), l);
        match err {
            Some(e) => Err(e),
            None => Ok(s),
        }
    };
    let mut total = 0.0;
    let mut measure = 0.0;
    for &(a, b) in intervals {
        let mut e = None;
        total += quad::integrate_composite(rule, a, b, 4, |y| match inner(y) {
            Ok(v) => v,
            Err(x) => {
                e = Some(x);
                0.0
            }
        });
        if let Some(x) = e {
            return Err(Error::Numerical(format!("quadrature failed: {x}")));
        }
        measure += b - a;
    }
    if !total.is_finite() {
        return Err(Error::Numerical("non-finite quadrature".into()));
    }
    Ok(2.0 / (PI * measure) * total + potential_constant())
}

/// Fit `mean G(v,v) ≈ c₁ log N + c₀` and compute C_I independently.
pub fn avg_green_asymptotic(upsilon: f64, intervals: &[(f64, f64)], sizes: &[i64]) -> Result<AvgGreenFit> {
    let table = PotentialTable::new();
    let means = sizes
        .iter()
        .map(|&n| avg_green_diag(upsilon, intervals, n, &table))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let (slope, intercept) = least_squares(&xs, &means);
    Ok(AvgGreenFit { sizes: sizes.to_vec(), means, slope, intercept, c_quadrature: c_i_quadrature(upsilon, intervals)? })
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
