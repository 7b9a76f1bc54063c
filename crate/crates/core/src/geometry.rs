//! Integer intervals, lattice rectangles and the (2+δ)-adic scale system with
//! its self-similar partitions and coverings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice point `(x, y)`.
pub type Point = (i64, i64);

/// Floor with a small relative tolerance so that values which are integers in
/// exact arithmetic (e.g. `Γ·a_{-m_Γ} = 1`) do not round down by one ulp.
pub fn floor_tol(x: f64) -> i64 {
    (x + 1e-9 * x.abs().max(1.0)).floor() as i64
}

/// Ceiling counterpart of [`floor_tol`].
pub fn ceil_tol(x: f64) -> i64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil() as i64
}

/// Unique `δ > 0` with `δ (2+δ)^m = 1`.
pub fn solve_delta(m: u32) -> f64 {
    assert!(m >= 1, "solve_delta needs m >= 1");
    let mf = m as f64;
    let mut d = 0.5f64.powi(m as i32);
    for _ in 0..200 {
        let p = (2.0 + d).powi(m as i32);
        let g = d * p - 1.0;
        let dg = p + mf * d * (2.0 + d).powi(m as i32 - 1);
        let step = g / dg;
        d -= step;
        if step.abs() < 1e-17 {
            break;
        }
    }
    d
}

/// Parameters of the scale system and of the crossing construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub delta: f64,
    pub m: u32,
    pub gamma_fpp: f64,
    pub m_gamma: u32,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl ScaleParams {
    /// Scale system for exponent `m` and aspect exponent `m_gamma`, with
    /// γ = 0 and unit α, β, ε. Use the `with_*` builders to adjust.
    pub fn new(m: u32, m_gamma: u32) -> Self {
        ScaleParams {
            delta: solve_delta(m),
            m,
            gamma_fpp: 0.0,
            m_gamma,
            alpha: 1.0,
            beta: 1.0,
            epsilon: 0.1,
        }
    }

    /// Parameters following the asymptotic prescription: α = δ^{-1/4} and
    /// m_Γ the smallest exponent with Γγ² ≥ α.
    pub fn paper_regime(m: u32, gamma_fpp: f64) -> Result<Self> {
        if gamma_fpp <= 0.0 {
            return Err(Error::Domain("paper regime needs gamma > 0".into()));
        }
        let delta = solve_delta(m);
        let alpha = delta.powf(-0.25);
        let base = 2.0 + delta;
        let need = (alpha / (gamma_fpp * gamma_fpp)).ln() / base.ln();
        let m_gamma = need.ceil().max(1.0) as u32;
        let p = ScaleParams {
            delta,
            m,
            gamma_fpp,
            m_gamma,
            alpha,
            beta: 1.0,
            epsilon: 0.1,
        };
        p.check_regime()?;
        Ok(p)
    }

    pub fn with_gamma(mut self, g: f64) -> Self {
        self.gamma_fpp = g;
        self
    }
    pub fn with_alpha(mut self, a: f64) -> Self {
        self.alpha = a;
        self
    }
    pub fn with_beta(mut self, b: f64) -> Self {
        self.beta = b;
        self
    }

    /// Γ = (2+δ)^{m_Γ}, always derived from δ.
    pub fn big_gamma(&self) -> f64 {
        self.a(self.m_gamma as i64)
    }

    /// a_ℓ = (2+δ)^ℓ without overflow checking (internal use, |ℓ| small).
    pub fn a(&self, ell: i64) -> f64 {
        (2.0 + self.delta).powi(ell as i32)
    }

    /// Check α ≤ Γγ² < (2+δ)α.
    pub fn check_regime(&self) -> Result<()> {
        let g2 = self.big_gamma() * self.gamma_fpp * self.gamma_fpp;
        if self.gamma_fpp > 0.0 && (g2 < self.alpha || g2 >= (2.0 + self.delta) * self.alpha) {
            return Err(Error::Regime(format!(
                "need alpha <= Gamma*gamma^2 < (2+delta)*alpha, got alpha={} Gamma*gamma^2={}",
                self.alpha, g2
            )));
        }
        Ok(())
    }
}

/// a_ℓ = (2+δ)^ℓ, failing when the result leaves the floating range.
pub fn scale_length(params: &ScaleParams, ell: i64) -> Result<f64> {
    let lg = ell as f64 * (2.0 + params.delta).ln();
    if lg.abs() > 700.0 {
        return Err(Error::Overflow(format!("a_{ell} out of floating range")));
    }
    Ok((2.0 + params.delta).powf(ell as f64))
}

/// Closed integer interval `[left, right]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntervalZ {
    pub left: i64,
    pub right: i64,
}

impl IntervalZ {
    pub fn new(left: i64, right: i64) -> Result<Self> {
        if left > right {
            return Err(Error::Geometry(format!("interval [{left},{right}] is reversed")));
        }
        Ok(IntervalZ { left, right })
    }
    /// Length `right - left`.
    pub fn len(&self) -> i64 {
        self.right - self.left
    }
    /// Number of lattice points.
    pub fn count(&self) -> i64 {
        self.right - self.left + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn contains(&self, x: i64) -> bool {
        self.left <= x && x <= self.right
    }
    pub fn contains_interval(&self, o: &IntervalZ) -> bool {
        self.left <= o.left && o.right <= self.right
    }
    pub fn shift(&self, dx: i64) -> IntervalZ {
        IntervalZ { left: self.left + dx, right: self.right + dx }
    }
    /// Image under `x -> axis2 - x`, where `axis2` is twice the mirror axis.
    pub fn mirror(&self, axis2: i64) -> IntervalZ {
        IntervalZ { left: axis2 - self.right, right: axis2 - self.left }
    }
}

/// Real interval with its scale level and principal flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RIntervalLabeled {
    pub left: f64,
    pub right: f64,
    /// Level ℓ' such that the length equals k·a_{ℓ'}.
    pub depth: i64,
    pub principal: bool,
}

/// Axis-parallel lattice rectangle `base × span`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RectRegion {
    pub base: IntervalZ,
    pub span: IntervalZ,
}

impl RectRegion {
    pub fn new(x0: i64, x1: i64, y0: i64, y1: i64) -> Result<Self> {
        Ok(RectRegion { base: IntervalZ::new(x0, x1)?, span: IntervalZ::new(y0, y1)? })
    }
    /// The rectangle `[0,M] × [0,N]`.
    pub fn origin_rect(m: i64, n: i64) -> Result<Self> {
        Self::new(0, m, 0, n)
    }
    pub fn width(&self) -> i64 {
        self.base.len()
    }
    pub fn height(&self) -> i64 {
        self.span.len()
    }
    pub fn num_points(&self) -> usize {
        (self.base.count() * self.span.count()) as usize
    }
    pub fn contains(&self, p: Point) -> bool {
        self.base.contains(p.0) && self.span.contains(p.1)
    }
    pub fn contains_rect(&self, o: &RectRegion) -> bool {
        self.base.contains_interval(&o.base) && self.span.contains_interval(&o.span)
    }
    pub fn is_interior(&self, p: Point) -> bool {
        self.base.left < p.0 && p.0 < self.base.right && self.span.left < p.1 && p.1 < self.span.right
    }
    /// Boundary point with at least one interior neighbour (corners excluded).
    pub fn is_boundary(&self, p: Point) -> bool {
        self.contains(p)
            && !self.is_interior(p)
            && neighbours(p).iter().any(|&q| self.is_interior(q))
    }
    /// Interior column / row counts.
    pub fn interior_dims(&self) -> (usize, usize) {
        ((self.width() - 1).max(0) as usize, (self.height() - 1).max(0) as usize)
    }
    pub fn num_interior(&self) -> usize {
        let (a, b) = self.interior_dims();
        a * b
    }
    /// Row-major index of a point among all points of the rectangle.
    pub fn index(&self, p: Point) -> usize {
        ((p.1 - self.span.left) * self.base.count() + (p.0 - self.base.left)) as usize
    }
    pub fn point_at(&self, idx: usize) -> Point {
        let w = self.base.count() as usize;
        (self.base.left + (idx % w) as i64, self.span.left + (idx / w) as i64)
    }
    /// Interior points in row-major order.
    pub fn interior_points(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.num_interior());
        for y in self.span.left + 1..self.span.right {
            for x in self.base.left + 1..self.base.right {
                out.push((x, y));
            }
        }
        out
    }
    /// Boundary points with an interior neighbour: left, right, bottom, top.
    pub fn boundary_points(&self) -> Vec<Point> {
        let mut out = Vec::new();
        if self.num_interior() == 0 {
            return out;
        }
        for y in self.span.left + 1..self.span.right {
            out.push((self.base.left, y));
        }
        for y in self.span.left + 1..self.span.right {
            out.push((self.base.right, y));
        }
        for x in self.base.left + 1..self.base.right {
            out.push((x, self.span.left));
        }
        for x in self.base.left + 1..self.base.right {
            out.push((x, self.span.right));
        }
        out
    }
    pub fn shift(&self, dx: i64, dy: i64) -> RectRegion {
        RectRegion { base: self.base.shift(dx), span: self.span.shift(dy) }
    }
}

/// The four nearest neighbours.
pub fn neighbours(p: Point) -> [Point; 4] {
    [(p.0 - 1, p.1), (p.0 + 1, p.1), (p.0, p.1 - 1), (p.0, p.1 + 1)]
}

/// Self-similar partition of `[x, x + k a_ℓ]` into pieces of length at most
/// `k a_{ℓ-d}`. Each split produces (left, middle, right) with levels
/// (ℓ'-1, ℓ'-m-1, ℓ'-1); only side pieces of principal parents stay principal.
pub fn partition(params: &ScaleParams, ell: i64, k: f64, x: f64, d: u32) -> Vec<RIntervalLabeled> {
    let stop = ell - d as i64;
    let m = params.m as i64;
    let mut out = Vec::new();
    let mut stack = vec![RIntervalLabeled { left: x, right: x + k * params.a(ell), depth: ell, principal: true }];
    // depth-first, right piece pushed first so output is left to right
    while let Some(piece) = stack.pop() {
        if piece.depth <= stop {
            out.push(piece);
            continue;
        }
        let l = piece.depth;
        let side = k * params.a(l - 1);
        let mid = k * params.a(l - m - 1);
        let a0 = piece.left;
        let right = RIntervalLabeled { left: a0 + side + mid, right: piece.right, depth: l - 1, principal: piece.principal };
        let middle = RIntervalLabeled { left: a0 + side, right: a0 + side + mid, depth: l - m - 1, principal: false };
        let left = RIntervalLabeled { left: a0, right: a0 + side, depth: l - 1, principal: piece.principal };
        stack.push(right);
        stack.push(middle);
        stack.push(left);
    }
    out
}

/// One member of an integer covering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverPiece {
    pub interval: IntervalZ,
    /// Level ℓ' of the piece: it is a translate of ⌊I_{ℓ',k,0}⌋.
    pub depth: i64,
    pub principal: bool,
}

/// Integer covering of ⌊[x, x + k a_ℓ]⌋ refined `d` times.
///
/// A piece at level L starting at q splits into
/// `[q, q+⌊k a_{L-1}⌋]`, `[q+⌈k a_{L-1}⌉, ·+⌊k a_{L-m-1}⌋]` and `[q+p, q+⌊k a_L⌋]`
/// where `p = ⌊k a_L⌋ - ⌊k a_{L-1}⌋` is the snapped left end of the right piece.
pub fn covering(params: &ScaleParams, ell: i64, k: f64, x: i64, d: u32) -> Result<Vec<CoverPiece>> {
    let stop = ell - d as i64;
    if k * params.a(stop) < 2.0 - 1e-9 {
        return Err(Error::DegenerateScale(format!(
            "k*a_(ell-d) = {} < 2 (ell={ell}, k={k}, d={d})",
            k * params.a(stop)
        )));
    }
    let m = params.m as i64;
    let mut out = Vec::new();
    let root = CoverPiece {
        interval: IntervalZ { left: x, right: x + floor_tol(k * params.a(ell)) },
        depth: ell,
        principal: true,
    };
    let mut stack = vec![root];
    while let Some(piece) = stack.pop() {
        if piece.depth <= stop {
            out.push(piece);
            continue;
        }
        let l = piece.depth;
        let q = piece.interval.left;
        let side_len = floor_tol(k * params.a(l - 1));
        let mid_len = floor_tol(k * params.a(l - m - 1));
        let mid_start = q + ceil_tol(k * params.a(l - 1));
        let p = piece.interval.len() - side_len;
        debug_assert!({
            let c = k * (params.a(l - 1) + params.a(l - m - 1));
            (p as f64 - c).abs() <= 1.0 + 1e-6
        });
        let left = CoverPiece { interval: IntervalZ { left: q, right: q + side_len }, depth: l - 1, principal: piece.principal };
        let middle = CoverPiece {
            interval: IntervalZ { left: mid_start, right: mid_start + mid_len },
            depth: l - m - 1,
            principal: false,
        };
        let right = CoverPiece {
            interval: IntervalZ { left: q + p, right: piece.interval.right },
            depth: l - 1,
            principal: piece.principal,
        };
        stack.push(right);
        stack.push(middle);
        stack.push(left);
    }
    Ok(out)
}

/// Principal members of a covering, left to right.
pub fn principal_intervals(params: &ScaleParams, ell: i64, k: f64, x: i64, d: u32) -> Result<Vec<IntervalZ>> {
    Ok(covering(params, ell, k, x, d)?.into_iter().filter(|c| c.principal).map(|c| c.interval).collect())
}

/// Role of a rectangle returned by [`tile_level`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TileRole {
    /// One of the four level-(ℓ-1) copies; `layer` counts bottom to top,
    /// `column` left to right.
    Copy { layer: u8, column: u8 },
    /// A principal rectangle inside copy (`layer`, `column`); `row` = 1 bottom, 2 top.
    Principal { layer: u8, column: u8, row: u8 },
    /// A level-(ℓ-m-1) copy over the middle base interval.
    Middle { layer: u8, index: u16 },
}

/// The enlarged level-ℓ rectangle with lower-left principal corner at `origin`,
/// in lattice units `unit` (horizontal scale Γ·unit, vertical scale unit).
pub fn level_rect(params: &ScaleParams, ell: i64, unit: f64, origin: Point) -> RectRegion {
    let g = params.big_gamma() * unit;
    let m = params.m as i64;
    let mx = floor_tol(g * params.a(ell - m - 1));
    let my = floor_tol(unit * params.a(ell - m));
    RectRegion {
        base: IntervalZ { left: origin.0 - mx, right: origin.0 + floor_tol(g * params.a(ell)) + mx },
        span: IntervalZ { left: origin.1 - my, right: origin.1 + floor_tol(unit * params.a(ell + 1)) + my },
    }
}

/// Children of the level-ℓ enlarged rectangle: four level-(ℓ-1) copies, the
/// eight principal rectangles, and the level-(ℓ-m-1) copies over the middle
/// base interval (one per principal depth-m span interval of each layer).
pub fn tile_level(params: &ScaleParams, ell: i64, origin: Point) -> Result<Vec<(RectRegion, TileRole)>> {
    tile_level_scaled(params, ell, 1.0, origin)
}

/// [`tile_level`] with an explicit lattice unit.
pub fn tile_level_scaled(params: &ScaleParams, ell: i64, unit: f64, origin: Point) -> Result<Vec<(RectRegion, TileRole)>> {
    let g = params.big_gamma() * unit;
    let m = params.m;
    let base_cov = covering(params, ell, g, 0, 1)?;
    let base_lefts: Vec<i64> = base_cov.iter().filter(|c| c.principal).map(|c| c.interval.left).collect();
    let mid_base = base_cov.iter().find(|c| !c.principal).map(|c| c.interval).expect("middle interval");
    let layer_lefts = principal_intervals(params, ell + 1, unit, 0, 1)?;
    let row_lefts = principal_intervals(params, ell, unit, 0, 1)?;
    let mid_spans = principal_intervals(params, ell, unit, 0, m)?;
    let pw = floor_tol(g * params.a(ell - 1));
    let ph = floor_tol(unit * params.a(ell - 1));
    let mut out = Vec::new();
    for (li, layer) in layer_lefts.iter().enumerate() {
        for (ci, &bx) in base_lefts.iter().enumerate() {
            let corner = (origin.0 + bx, origin.1 + layer.left);
            let copy = level_rect(params, ell - 1, unit, corner);
            out.push((copy, TileRole::Copy { layer: li as u8 + 1, column: ci as u8 + 1 }));
            for (ri, row) in row_lefts.iter().enumerate() {
                let y0 = corner.1 + row.left;
                let r = RectRegion {
                    base: IntervalZ { left: corner.0, right: corner.0 + pw },
                    span: IntervalZ { left: y0, right: y0 + ph },
                };
                out.push((r, TileRole::Principal { layer: li as u8 + 1, column: ci as u8 + 1, row: ri as u8 + 1 }));
            }
        }
        for (idx, s) in mid_spans.iter().enumerate() {
            let corner = (origin.0 + mid_base.left, origin.1 + layer.left + s.left);
            let r = level_rect(params, ell - m as i64 - 1, unit, corner);
            out.push((r, TileRole::Middle { layer: li as u8 + 1, index: idx as u16 }));
        }
    }
    for (r, _) in &out {
        if r.width() < 2 || r.height() < 2 {
            return Err(Error::DegenerateScale(format!("child {r:?} thinner than 2 lattice units")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_values() {
        assert!((solve_delta(1) - (2f64.sqrt() - 1.0)).abs() < 1e-14);
        assert!((solve_delta(2) - 0.205_569_43).abs() < 1e-8);
        assert!((solve_delta(6) - 0.01487).abs() < 1e-4);
        for m in 1..=8 {
            let d = solve_delta(m);
            assert!((d * (2.0 + d).powi(m as i32) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_lengths() {
        let mut p = ScaleParams::new(2, 2);
        assert_eq!(scale_length(&p, 0).unwrap(), 1.0);
        assert!((scale_length(&p, 2).unwrap() - 1.0 / p.delta).abs() < 1e-12);
        assert!(scale_length(&p, 100_000).is_err());
        p.delta = 0.5;
        assert!((scale_length(&p, 1).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn partition_three_pieces() {
        let p = ScaleParams::new(2, 2);
        let parts = partition(&p, 5, 1.0, 0.0, 1);
        assert_eq!(parts.len(), 3);
        assert!((parts[0].right - parts[0].left - p.a(4)).abs() < 1e-9);
        assert!((parts[1].right - parts[1].left - p.a(2)).abs() < 1e-9);
        assert!(!parts[1].principal && parts[0].principal && parts[2].principal);
        assert_eq!(partition(&p, 5, 1.0, 0.0, 0).len(), 1);
    }

    #[test]
    fn covering_enumerated_instance() {
        // (ell, k, x, m) = (3, 1, 0, 2): a_3 = 10.717, a_2 = 4.864, a_0 = 1
        let p = ScaleParams::new(2, 2);
        let c = covering(&p, 3, 1.0, 0, 1).unwrap();
        let iv: Vec<(i64, i64)> = c.iter().map(|c| (c.interval.left, c.interval.right)).collect();
        assert_eq!(iv, vec![(0, 4), (5, 6), (6, 10)]);
        assert!(covering(&p, 3, 1.0, 0, 3).is_err());
    }

    #[test]
    fn tile_counts() {
        let p = ScaleParams::new(2, 2);
        let kids = tile_level(&p, 6, (0, 0)).unwrap();
        let copies = kids.iter().filter(|k| matches!(k.1, TileRole::Copy { .. })).count();
        let princ = kids.iter().filter(|k| matches!(k.1, TileRole::Principal { .. })).count();
        let mids = kids.iter().filter(|k| matches!(k.1, TileRole::Middle { .. })).count();
        assert_eq!((copies, princ, mids), (4, 8, 8));
    }
}
