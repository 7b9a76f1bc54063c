//! Desk-scale light-crossing construction. A level-ℓ block is cut into two
//! horizontal layers; each layer holds a left and a right level-(ℓ−1) block
//! and a column of level-(ℓ−m−1) blocks over the middle base interval.
//! Strategy I crosses one uniformly chosen layer. Strategy II builds both
//! layer crossings and switches between them where the coarse-field gain
//! outweighs the vertical gadget, using the renewal tick rule.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpp::{crossing_weight, PathResult, WeightedGrid};
use crate::geometry::{covering, floor_tol, principal_intervals, IntervalZ, Point, RectRegion, ScaleParams};
use crate::gff::{functional_covariance, sequential_residuals, FieldSample, Functional, HarmonicExtender};
use crate::lattice::{BandedCholesky, GreenSolver};
use crate::par::{self, Execution};
use crate::rng;
use crate::totalvar::{uptick_partition_with, PathSample, TickOptions};

/// Which rule assembles a block's crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// One layer chosen uniformly.
    Uniform,
    /// Switch between layers driven by the coarse-field gains.
    Switching,
}

/// How a vertical connector is realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GadgetMode {
    Straight,
}

/// A vertical connector on one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GadgetSpec {
    pub column_rect: RectRegion,
    pub mode: GadgetMode,
}

/// Record of how one block's crossing was assembled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingPlan {
    pub level: i64,
    pub rect: RectRegion,
    pub strategy: Option<Strategy>,
    pub switch_intervals: Vec<IntervalZ>,
    /// Layer (1 bottom, 2 top) used on each switch interval.
    pub layer_choice: Vec<u8>,
    /// Switch gadgets, one per change of layer.
    pub gadgets: Vec<GadgetSpec>,
    /// Connectors joining consecutive child crossings.
    pub junctions: Vec<GadgetSpec>,
    /// Child blocks whose crossings were used.
    pub skeleton: Vec<RectRegion>,
    /// Index of the chosen middle block within each constructed layer.
    pub mid_choice: Vec<usize>,
    /// More ticks were available than the switch cap allowed.
    pub truncated: bool,
    /// Last switch interval is shorter than a quarter of the nominal length.
    pub short_tail: bool,
}

/// One layer of a block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub span: IntervalZ,
    pub left: RectRegion,
    pub right: RectRegion,
    /// Middle blocks, bottom to top.
    pub mids: Vec<RectRegion>,
    /// Row used by straight crossings and line sums.
    pub row: i64,
}

/// Children of a level-ℓ block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub level: i64,
    pub rect: RectRegion,
    pub mid_base: IntervalZ,
    pub layers: [Layer; 2],
}

/// Rectangle of a level-ℓ block with lower-left corner `origin`: base
/// ⌊ΓN a_ℓ⌋ + 1 columns, span ⌊N a_{ℓ+1}⌋ + 1 rows.
pub fn block_rect(params: &ScaleParams, unit: i64, level: i64, origin: Point) -> Result<RectRegion> {
    let n = unit as f64;
    let w = floor_tol(params.big_gamma() * n * params.a(level));
    let h = floor_tol(n * params.a(level + 1));
    if w < 2 || h < 2 {
        return Err(Error::DegenerateScale(format!("level-{level} block is {w}x{h}")));
    }
    RectRegion::new(origin.0, origin.0 + w, origin.1, origin.1 + h)
}

/// Centre row of `span`; half-integer centres round toward the midline whose
/// doubled coordinate is `mid2`.
pub fn centre_row(span: IntervalZ, mid2: i64) -> i64 {
    let s = span.left + span.right;
    if s % 2 == 0 {
        s / 2
    } else if s < mid2 {
        (s + 1) / 2
    } else {
        (s - 1) / 2
    }
}

pub fn block_layout(params: &ScaleParams, unit: i64, level: i64, rect: &RectRegion, mid2: i64) -> Result<BlockLayout> {
    let n = unit as f64;
    let g = params.big_gamma() * n;
    let m = params.m;
    let base = covering(params, level, g, rect.base.left, 1)?;
    if base.len() != 3 || base[0].interval.left != rect.base.left || base[2].interval.right != rect.base.right {
        return Err(Error::Geometry(format!("base covering of {rect:?} does not match the block")));
    }
    let spans = principal_intervals(params, level + 1, n, rect.span.left, 1)?;
    let mut layers = Vec::with_capacity(2);
    for span in spans {
        let mk = |iv: IntervalZ, sp: IntervalZ| RectRegion { base: iv, span: sp };
        let mid_spans = principal_intervals(params, level, n, span.left, m)?;
        layers.push(Layer {
            span,
            left: mk(base[0].interval, span),
            right: mk(base[2].interval, span),
            mids: mid_spans.into_iter().map(|s| mk(base[1].interval, s)).collect(),
            row: centre_row(span, mid2),
        });
    }
    let [l1, l2]: [Layer; 2] = layers.try_into().map_err(|_| Error::Geometry("expected two layers".into()))?;
    Ok(BlockLayout { level, rect: *rect, mid_base: base[1].interval, layers: [l1, l2] })
}

/// Stateless source of construction choices. Every decision is derived from
/// a key, so the draws do not depend on construction order. The mirrored
/// stream makes the reflected decision everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChoiceStream {
    key: u64,
    mirrored: bool,
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ChoiceStream {
    pub fn new(seed: u64, replicate: u64) -> Self {
        ChoiceStream { key: mix(mix(seed, 0x5EED), replicate), mirrored: false }
    }
    pub fn mirrored(self) -> Self {
        ChoiceStream { mirrored: !self.mirrored, ..self }
    }
    pub fn is_mirrored(&self) -> bool {
        self.mirrored
    }
    pub fn child(&self, tag: u64) -> Self {
        ChoiceStream { key: mix(self.key, tag), mirrored: self.mirrored }
    }
    fn rng(&self, purpose: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(self.key, purpose))
    }
    /// Physical layer 1 or 2.
    pub fn layer(&self) -> u8 {
        let k = self.rng(1).gen_range(1..=2u8);
        if self.mirrored {
            3 - k
        } else {
            k
        }
    }
    /// Physical index among `n` vertically ordered options.
    pub fn pick(&self, n: usize) -> usize {
        let i = self.rng(2).gen_range(0..n);
        if self.mirrored {
            n - 1 - i
        } else {
            i
        }
    }
    /// Fair coin; true means the first leg looks for a downtick.
    pub fn coin(&self) -> bool {
        self.rng(3).gen_bool(0.5) ^ self.mirrored
    }
    /// Logical layer: maps a physical layer to the label an unmirrored run
    /// would use for it.
    fn logical(&self, physical: u8) -> u8 {
        if self.mirrored {
            3 - physical
        } else {
            physical
        }
    }
}

/// Per-block outcome, one row per constructed block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub level: i64,
    /// Crossing weight under the block's own fine field.
    pub weight: f64,
    /// Weight of the connectors created at this block.
    pub join: f64,
    pub switches: usize,
    pub truncated: bool,
    pub regime_ok: bool,
}

/// Assembled top crossing with everything recorded on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Construction {
    pub plan: CrossingPlan,
    pub path: PathResult,
    pub records: Vec<NodeRecord>,
}

/// Exact-covariance gain model of one block shape, in coordinates relative
/// to the block's lower-left corner.
#[derive(Debug, Clone)]
pub struct SwitchModel {
    pub intervals: Vec<IntervalZ>,
    /// Layer-2 minus layer-1 coarse line sums, one functional per interval.
    pub functionals: Vec<Functional>,
    pub cov: DMatrix<f64>,
    /// exp(γ² G(c,c)/2) at the block centre.
    pub kappa: f64,
    /// κ·|row₂ − row₁|.
    pub penalty: f64,
    pub cap: usize,
}

/// Run-wide geometry, solvers and caches.
pub struct Multiscale {
    pub params: ScaleParams,
    pub unit: i64,
    pub top_level: i64,
    pub gamma: f64,
    pub top_rect: RectRegion,
    /// Strategy II below the top is used from this level up.
    pub switch_from: i64,
    pub strict_regime: bool,
    /// Multiplier on the switch penalty; 1 is the gadget weight estimate.
    pub penalty_scale: f64,
    mid2: i64,
    top_solver: Mutex<Option<Arc<GreenSolver>>>,
    extenders: Mutex<HashMap<(i64, i64), Arc<HarmonicExtender>>>,
    models: Mutex<HashMap<i64, Arc<SwitchModel>>>,
}

type FieldCache = HashMap<RectRegion, Arc<Vec<f64>>>;

struct BuildCtx<'a> {
    top: Option<&'a FieldSample>,
    fine: FieldCache,
    records: Vec<NodeRecord>,
}

struct Built {
    path: Vec<Point>,
    plan: CrossingPlan,
}

fn straight(rect: &RectRegion, row: i64) -> Vec<Point> {
    (rect.base.left..=rect.base.right).map(|x| (x, row)).collect()
}

fn vertical(x: i64, from: i64, to: i64, include_end: bool) -> Vec<Point> {
    let mut out = Vec::new();
    if from < to {
        let end = if include_end { to } else { to - 1 };
        out.extend((from + 1..=end).map(|y| (x, y)));
    } else if from > to {
        let end = if include_end { to } else { to + 1 };
        out.extend((end..from).rev().map(|y| (x, y)));
    }
    out
}

/// Append `b` to `a`, where `a` ends on column xa and the x-monotone `b`
/// starts within one column of it. Returns the connector points added.
fn splice(a: &mut Vec<Point>, b: &[Point]) -> Result<Vec<Point>> {
    let (xa, ya) = *a.last().ok_or_else(|| Error::Geometry("empty path".into()))?;
    let k = b.iter().position(|p| p.0 >= xa).ok_or_else(|| Error::Geometry("path ends before the junction".into()))?;
    let (xb, yb) = b[k];
    let conn = if xb == xa {
        vertical(xa, ya, yb, false)
    } else if xb == xa + 1 && k == 0 {
        vertical(xa, ya, yb, true)
    } else {
        return Err(Error::Geometry(format!("gap between columns {xa} and {xb}")));
    };
    a.extend_from_slice(&conn);
    a.extend_from_slice(&b[k..]);
    Ok(conn)
}

/// Cut `a` at its first point on column `c` and continue along `b`.
fn splice_at(a: &[Point], b: &[Point], c: i64) -> Result<(Vec<Point>, Vec<Point>)> {
    let ia = a.iter().position(|p| p.0 == c).ok_or_else(|| Error::Geometry(format!("path misses column {c}")))?;
    let mut out = a[..=ia].to_vec();
    let conn = splice(&mut out, b)?;
    Ok((out, conn))
}

/// Row at which a path first enters each column of `base`.
fn entry_rows(path: &[Point], base: IntervalZ) -> Vec<i64> {
    let mut rows = vec![i64::MIN; base.count() as usize];
    for &(x, y) in path {
        if base.contains(x) {
            let i = (x - base.left) as usize;
            if rows[i] == i64::MIN {
                rows[i] = y;
            }
        }
    }
    rows
}

fn column_rect(x: i64, a: i64, b: i64) -> RectRegion {
    RectRegion { base: IntervalZ { left: x, right: x }, span: IntervalZ { left: a.min(b), right: a.max(b) } }
}

impl Multiscale {
    pub fn new(params: ScaleParams, unit: i64, top_level: i64, gamma: f64) -> Result<Self> {
        if unit < 2 {
            return Err(Error::Domain("unit must be at least 2".into()));
        }
        if !(0..=4).contains(&top_level) {
            return Err(Error::Domain(format!("top level {top_level} outside 0..=4")));
        }
        let top_rect = block_rect(&params, unit, top_level, (0, 0))?;
        let ms = Multiscale {
            params,
            unit,
            top_level,
            gamma,
            top_rect,
            switch_from: 2,
            strict_regime: false,
            penalty_scale: 1.0,
            mid2: top_rect.span.left + top_rect.span.right,
            top_solver: Mutex::new(None),
            extenders: Mutex::new(HashMap::new()),
            models: Mutex::new(HashMap::new()),
        };
        // every block of the hierarchy must be well formed
        ms.check_levels(top_level)?;
        Ok(ms)
    }

    fn check_levels(&self, level: i64) -> Result<()> {
        if level <= 0 {
            return Ok(());
        }
        let r = block_rect(&self.params, self.unit, level, (0, 0))?;
        let lay = self.layout(level, &r)?;
        for l in &lay.layers {
            for m in &l.mids {
                if m.height() < 2 || m.width() < 2 {
                    return Err(Error::DegenerateScale(format!("middle block {m:?} too thin")));
                }
            }
        }
        self.check_levels(level - 1)?;
        let mid_level = level - self.params.m as i64 - 1;
        block_rect(&self.params, self.unit, mid_level, (0, 0))?;
        self.check_levels(mid_level)
    }

    pub fn layout(&self, level: i64, rect: &RectRegion) -> Result<BlockLayout> {
        block_layout(&self.params, self.unit, level, rect, self.mid2)
    }

    /// Strategy used at `level` unless overridden at the top.
    pub fn strategy_at(&self, level: i64) -> Strategy {
        if level >= self.switch_from {
            Strategy::Switching
        } else {
            Strategy::Uniform
        }
    }

    fn solver_top(&self) -> Result<Arc<GreenSolver>> {
        let mut g = self.top_solver.lock().unwrap();
        if g.is_none() {
            *g = Some(Arc::new(GreenSolver::Direct(BandedCholesky::factor(self.top_rect)?)));
        }
        Ok(g.as_ref().unwrap().clone())
    }

    /// Zero-boundary DGFF on the top block.
    pub fn sample_top(&self, seed: u64, replicate: u64) -> Result<FieldSample> {
        let solver = self.solver_top()?;
        let GreenSolver::Direct(f) = solver.as_ref() else {
            return Err(Error::Budget("top block too large for the direct sampler".into()));
        };
        let mut r = rng::stream(seed, replicate);
        let mut z: Vec<f64> = (0..f.len()).map(|_| r.sample(StandardNormal)).collect();
        f.solve_upper(&mut z);
        let mut out = FieldSample::zeros(self.top_rect);
        for (i, v) in z.into_iter().enumerate() {
            out.set(f.grid.point(i), v);
        }
        out.seed = seed;
        out.replicate = replicate;
        Ok(out)
    }

    fn extender(&self, rect: &RectRegion) -> Result<Arc<HarmonicExtender>> {
        let key = (rect.width(), rect.height());
        let mut g = self.extenders.lock().unwrap();
        if let Some(e) = g.get(&key) {
            return Ok(e.clone());
        }
        let e = Arc::new(HarmonicExtender::new(*rect)?);
        g.insert(key, e.clone());
        Ok(e)
    }

    /// Fine field of `rect`: the top field minus its harmonic extension from ∂rect.
    fn fine_field(&self, ctx: &mut BuildCtx, rect: &RectRegion) -> Result<Option<Arc<Vec<f64>>>> {
        let Some(top) = ctx.top else { return Ok(None) };
        if let Some(v) = ctx.fine.get(rect) {
            return Ok(Some(v.clone()));
        }
        let vals = if *rect == top.region {
            top.values.clone()
        } else {
            let ext = self.extender(rect)?;
            let coarse = ext.extend(rect, |p| top.get(p))?;
            let mut v = top.restrict(rect)?.values;
            for (a, c) in v.iter_mut().zip(coarse) {
                *a -= c;
            }
            v
        };
        let v = Arc::new(vals);
        ctx.fine.insert(*rect, v.clone());
        Ok(Some(v))
    }

    fn weigher(&self, field: &Option<Arc<Vec<f64>>>, rect: RectRegion) -> impl Fn(&[Point]) -> f64 + '_ {
        let f = field.clone();
        let g = self.gamma;
        move |pts: &[Point]| match &f {
            Some(v) => pts.iter().map(|&p| (g * v[rect.index(p)]).exp()).sum(),
            None => pts.len() as f64,
        }
    }

    fn switch_intervals(&self, level: i64, base: IntervalZ) -> (Vec<IntervalZ>, bool) {
        let nominal = self.params.beta * self.unit as f64 * self.params.a(level - 1);
        let len = floor_tol(nominal) + 1;
        let mut out = Vec::new();
        let mut x = base.left;
        while x <= base.right {
            let r = (x + len - 1).min(base.right);
            out.push(IntervalZ { left: x, right: r });
            x = r + 1;
        }
        let short = out.len() > 1 && (out.last().unwrap().count() as f64) < nominal / 4.0;
        (out, short)
    }

    /// Gain model of a level-`level` block, built once per level.
    pub fn switch_model(&self, level: i64) -> Result<Arc<SwitchModel>> {
        if let Some(m) = self.models.lock().unwrap().get(&level) {
            return Ok(m.clone());
        }
        let rect = block_rect(&self.params, self.unit, level, (0, 0))?;
        let solver = if level == self.top_level { self.solver_top()? } else { Arc::new(GreenSolver::new(rect)?) };
        let lay = block_layout(&self.params, self.unit, level, &rect, rect.span.left + rect.span.right)?;
        let (intervals, _) = self.switch_intervals(level, rect.base);
        // layer-2 minus layer-1 harmonic prediction of the line sums
        let mut functionals: Vec<Functional> = vec![Vec::new(); intervals.len()];
        for (li, layer) in lay.layers.iter().enumerate() {
            let sign = if li == 1 { 1.0 } else { -1.0 };
            let strip = RectRegion { base: rect.base, span: layer.span };
            let fac = BandedCholesky::factor(strip)?;
            for (j, iv) in intervals.iter().enumerate() {
                let mut b = vec![0.0; fac.len()];
                let mut any = false;
                for x in iv.left..=iv.right {
                    let p = (x, layer.row);
                    match fac.grid.index(p) {
                        Some(i) => {
                            b[i] = 1.0;
                            any = true;
                        }
                        None => functionals[j].push((p, sign)),
                    }
                }
                if !any {
                    continue;
                }
                fac.solve(&mut b);
                // harmonic measure from the line: a quarter of G summed over
                // the interior neighbours of each boundary point
                for q in strip.boundary_points() {
                    let mut h = 0.0;
                    for nb in crate::geometry::neighbours(q) {
                        if let Some(i) = fac.grid.index(nb) {
                            h += 0.25 * b[i];
                        }
                    }
                    if h != 0.0 {
                        functionals[j].push((q, sign * h));
                    }
                }
            }
        }
        let coarse = functionals;
        let cov = functional_covariance(&solver, &coarse)?;
        let centre = ((rect.base.left + rect.base.right) / 2, (rect.span.left + rect.span.right) / 2);
        let gcc = {
            let col = solver.column(centre)?;
            col[solver.grid().index(centre).unwrap()]
        };
        let kappa = (0.5 * self.gamma * self.gamma * gcc).exp();
        let gap = (lay.layers[1].row - lay.layers[0].row).abs() as f64;
        let model = Arc::new(SwitchModel {
            intervals,
            functionals: coarse,
            cov,
            kappa,
            penalty: kappa * gap,
            cap: (3.0 * self.params.alpha + 1e-9).floor() as usize,
        });
        self.models.lock().unwrap().insert(level, model.clone());
        Ok(model)
    }

    fn build(&self, ctx: &mut BuildCtx, level: i64, rect: RectRegion, strategy: Strategy, cs: ChoiceStream) -> Result<Built> {
        let field = self.fine_field(ctx, &rect)?;
        let weigh = self.weigher(&field, rect);
        if level <= 0 {
            let row = centre_row(rect.span, self.mid2);
            let path = straight(&rect, row);
            ctx.records.push(NodeRecord { level, weight: weigh(&path), join: 0.0, switches: 0, truncated: false, regime_ok: true });
            let plan = CrossingPlan {
                level,
                rect,
                strategy: None,
                switch_intervals: vec![rect.base],
                layer_choice: vec![],
                gadgets: vec![],
                junctions: vec![],
                skeleton: vec![],
                mid_choice: vec![],
                truncated: false,
                short_tail: false,
            };
            return Ok(Built { path, plan });
        }
        let lay = self.layout(level, &rect)?;
        match strategy {
            Strategy::Uniform => {
                let k = cs.layer();
                let (path, junctions, skeleton, mid) = self.cross_layer(ctx, &lay, k, cs)?;
                let join = junctions.iter().map(|g| weigh(&g.1)).sum();
                ctx.records.push(NodeRecord { level, weight: weigh(&path), join, switches: 0, truncated: false, regime_ok: true });
                let plan = CrossingPlan {
                    level,
                    rect,
                    strategy: Some(Strategy::Uniform),
                    switch_intervals: vec![rect.base],
                    layer_choice: vec![k],
                    gadgets: vec![],
                    junctions: junctions.into_iter().map(|g| g.0).collect(),
                    skeleton,
                    mid_choice: vec![mid],
                    truncated: false,
                    short_tail: false,
                };
                Ok(Built { path, plan })
            }
            Strategy::Switching => self.switching(ctx, &lay, field, cs),
        }
    }

    /// Crossing of physical layer `k`: left child, a uniform middle block,
    /// right child, joined on their common columns.
    #[allow(clippy::type_complexity)]
    fn cross_layer(&self, ctx: &mut BuildCtx, lay: &BlockLayout, k: u8, cs: ChoiceStream) -> Result<(Vec<Point>, Vec<(GadgetSpec, Vec<Point>)>, Vec<RectRegion>, usize)> {
        let layer = &lay.layers[k as usize - 1];
        let level = lay.level;
        let mid_level = level - self.params.m as i64 - 1;
        let mi = cs.pick(layer.mids.len());
        let mid = layer.mids[mi];
        let left = self.build(ctx, level - 1, layer.left, self.strategy_at(level - 1), cs.child(1))?;
        let midc = self.build(ctx, mid_level, mid, self.strategy_at(mid_level), cs.child(2))?;
        let right = self.build(ctx, level - 1, layer.right, self.strategy_at(level - 1), cs.child(3))?;
        let mut path = left.path;
        let mut junctions = Vec::new();
        for piece in [&midc.path, &right.path] {
            let x = path.last().unwrap().0;
            let y0 = path.last().unwrap().1;
            let conn = splice(&mut path, piece)?;
            if let Some(&(_, y1)) = conn.last() {
                junctions.push((GadgetSpec { column_rect: column_rect(x, y0, y1), mode: GadgetMode::Straight }, conn));
            }
        }
        Ok((path, junctions, vec![layer.left, mid, layer.right], mi))
    }

    fn switching(&self, ctx: &mut BuildCtx, lay: &BlockLayout, field: Option<Arc<Vec<f64>>>, cs: ChoiceStream) -> Result<Built> {
        let rect = lay.rect;
        let level = lay.level;
        let weigh = self.weigher(&field, rect);
        // both layer crossings, each with the stream of its logical label
        let mut layer_paths = Vec::with_capacity(2);
        let mut junctions = Vec::new();
        let mut skeleton = Vec::new();
        let mut mid_choice = Vec::new();
        for k in [1u8, 2] {
            let sub = cs.child(10 + cs.logical(k) as u64);
            let (p, j, s, mi) = self.cross_layer(ctx, lay, k, sub)?;
            layer_paths.push(p);
            junctions.push(j);
            skeleton.extend(s);
            mid_choice.push(mi);
        }
        let (intervals, short_tail) = self.switch_intervals(level, rect.base);
        let downtick_first = cs.coin();
        let mut truncated = false;
        let mut regime_ok = true;
        let mut switch_at: Vec<usize> = Vec::new();
        if let (Some(f), true) = (&field, self.gamma != 0.0) {
            let model = self.switch_model(level)?;
            let (ox, oy) = (rect.base.left, rect.span.left);
            let y: Vec<f64> = model
                .functionals
                .iter()
                .map(|fun| fun.iter().map(|&((x, yy), c)| c * f[rect.index((x + ox, yy + oy))]).sum())
                .collect();
            let (res, var) = sequential_residuals(&model.cov, &y)?;
            let scale = model.kappa * self.gamma;
            let mut times = vec![0.0];
            let mut vals = vec![0.0];
            for (r, v) in res.iter().zip(&var) {
                times.push(times.last().unwrap() + v * scale * scale);
                vals.push(vals.last().unwrap() + r * scale);
            }
            let horizon = *times.last().unwrap();
            let penalty = model.penalty * self.penalty_scale;
            regime_ok = horizon / (penalty * penalty) >= self.params.alpha / 16.0;
            if !regime_ok && self.strict_regime {
                return Err(Error::Regime(format!("λ*⁻² = {} against α/4 = {}", horizon / penalty.powi(2), self.params.alpha / 4.0)));
            }
            let walk = PathSample::new(times, vals)?;
            let opts = TickOptions { start_with_downtick: downtick_first, monitoring_correction: false, check_resolution: false, burn_in: None };
            let (_, rec) = uptick_partition_with(&walk, penalty, usize::MAX, &opts)?;
            let all: Vec<usize> = rec.xi_index.iter().copied().filter(|&i| i > 0 && i < intervals.len()).collect();
            truncated = all.len() > model.cap;
            switch_at = all.into_iter().take(model.cap).collect();
        }
        // first segment falls after an uptick-first start: the upper layer is lighter
        let first = if downtick_first { 1u8 } else { 2u8 };
        let mut layer_choice = Vec::with_capacity(intervals.len());
        let mut cur = first;
        for j in 1..=intervals.len() {
            layer_choice.push(cur);
            if switch_at.contains(&j) {
                cur = 3 - cur;
            }
        }
        let entries = [entry_rows(&layer_paths[0], rect.base), entry_rows(&layer_paths[1], rect.base)];
        let window = floor_tol(self.params.beta * self.unit as f64 * self.params.a(level - 1) / 4.0).max(1);
        let mut path = layer_paths[first as usize - 1].clone();
        let mut gadgets = Vec::new();
        let mut gadget_pts = Vec::new();
        for &j in &switch_at {
            let iv = intervals[j - 1];
            let (from, to) = (layer_choice[j - 1], layer_choice[j]);
            let lo = (iv.right - window + 1).max(iv.left);
            let mut best: Option<(f64, i64)> = None;
            for c in lo..=iv.right {
                let i = (c - rect.base.left) as usize;
                let w = weigh(&vertical(c, entries[from as usize - 1][i], entries[to as usize - 1][i], false));
                if best.is_none_or(|(bw, _)| w <= bw) {
                    best = Some((w, c));
                }
            }
            let (_, c) = best.unwrap();
            let i = (c - rect.base.left) as usize;
            let (p, conn) = splice_at(&path, &layer_paths[to as usize - 1], c)?;
            path = p;
            gadgets.push(GadgetSpec { column_rect: column_rect(c, entries[from as usize - 1][i], entries[to as usize - 1][i]), mode: GadgetMode::Straight });
            gadget_pts.push(conn);
        }
        // junction connectors that survive in the final path
        let mut used_junctions = Vec::new();
        let mut join = gadget_pts.iter().map(|g| weigh(g)).sum::<f64>();
        let cuts: Vec<i64> = gadgets.iter().map(|g| g.column_rect.base.left).collect();
        for (li, js) in junctions.into_iter().enumerate() {
            let k = li as u8 + 1;
            for (g, pts) in js {
                let x = g.column_rect.base.left;
                // the layer in use at column x
                let seg = cuts.iter().filter(|&&c| c <= x).count();
                let layer_here = if seg % 2 == 0 { first } else { 3 - first };
                if layer_here == k {
                    join += weigh(&pts);
                    used_junctions.push(g);
                }
            }
        }
        ctx.records.push(NodeRecord { level, weight: weigh(&path), join, switches: gadgets.len(), truncated, regime_ok });
        let plan = CrossingPlan {
            level,
            rect,
            strategy: Some(Strategy::Switching),
            switch_intervals: intervals,
            layer_choice,
            gadgets,
            junctions: used_junctions,
            skeleton,
            mid_choice,
            truncated,
            short_tail,
        };
        Ok(Built { path, plan })
    }

    /// Crossing of the top block. `top_field` is the zero-boundary field on
    /// the top block, or `None` for unit weights.
    pub fn construct(&self, top_field: Option<&FieldSample>, strategy: Strategy, cs: ChoiceStream) -> Result<Construction> {
        if let Some(f) = top_field {
            if f.region != self.top_rect {
                return Err(Error::Geometry(format!("field on {:?}, top block is {:?}", f.region, self.top_rect)));
            }
        }
        let mut ctx = BuildCtx { top: top_field, fine: HashMap::new(), records: Vec::new() };
        let built = self.build(&mut ctx, self.top_level, self.top_rect, strategy, cs)?;
        let weight = ctx.records.last().map(|r| r.weight).unwrap_or(0.0);
        Ok(Construction { plan: built.plan, path: PathResult { weight, path: built.path }, records: ctx.records })
    }
}

/// Strategy I crossing of the top block.
pub fn strategy1_crossing(ms: &Multiscale, field: Option<&FieldSample>, cs: ChoiceStream) -> Result<Construction> {
    ms.construct(field, Strategy::Uniform, cs)
}

/// Strategy II crossing of the top block.
pub fn strategy2_crossing(ms: &Multiscale, field: Option<&FieldSample>, cs: ChoiceStream) -> Result<Construction> {
    ms.construct(field, Strategy::Switching, cs)
}

/// True when consecutive points are lattice neighbours, all points lie in
/// `rect` and the path runs from its left column to its right column.
pub fn is_crossing(rect: &RectRegion, path: &[Point]) -> bool {
    let (Some(first), Some(last)) = (path.first(), path.last()) else { return false };
    first.0 == rect.base.left
        && last.0 == rect.base.right
        && path.iter().all(|&p| rect.contains(p))
        && path.windows(2).all(|w| (w[0].0 - w[1].0).abs() + (w[0].1 - w[1].1).abs() == 1)
}

/// Constructed weight over the optimal left-right crossing weight of `rect`
/// under weights exp(γ·field). At least 1 for any feasible crossing.
pub fn compare_vs_optimal(rect: &RectRegion, field: &FieldSample, gamma: f64, path: &[Point]) -> Result<f64> {
    if !is_crossing(rect, path) {
        return Err(Error::Geometry("path is not a connected left-right crossing".into()));
    }
    let grid = WeightedGrid::from_field(field, gamma);
    let opt = crossing_weight(&grid, rect)?;
    Ok(grid.path_weight(path) / opt.weight)
}

/// Parameters of a multi-level run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ScaleParams,
    pub unit: i64,
    pub levels: i64,
    pub gamma: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Override the strategy of the top block.
    pub top_strategy: Option<Strategy>,
    pub exec: Execution,
    /// Upper bound on (top block points)·replicas.
    pub budget: f64,
}

impl RunConfig {
    pub fn new(params: ScaleParams, unit: i64, levels: i64, gamma: f64, replicas: usize, seed: u64) -> Self {
        RunConfig { params, unit, levels, gamma, replicas, seed, top_strategy: None, exec: Execution::Parallel, budget: 5e9 }
    }
}

/// Per replica and level: mean over the constructed blocks of that level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: i64,
    pub replicate: usize,
    pub d: f64,
    pub d_join: f64,
    pub switches: f64,
}

/// Aggregates across replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: i64,
    pub d_mean: f64,
    pub d_se: f64,
    pub d_join_mean: f64,
    pub switches_mean: f64,
    pub switches_max: usize,
    /// d_ℓ / d_{ℓ−1} with a bootstrap standard error.
    pub ratio: Option<f64>,
    pub ratio_se: Option<f64>,
    pub truncated: usize,
    pub regime_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<LevelRow>,
    pub stats: Vec<LevelStats>,
    /// Top crossing weight per replicate and its ratio to the optimum.
    pub top_weights: Vec<f64>,
    pub top_ratios: Vec<f64>,
}

/// Sample the top field per replica, construct bottom-up, and summarise
/// per level.
pub fn recursive_run(cfg: &RunConfig) -> Result<RunReport> {
    let ms = Multiscale::new(cfg.params, cfg.unit, cfg.levels, cfg.gamma)?;
    run_with(&ms, cfg)
}

pub fn run_with(ms: &Multiscale, cfg: &RunConfig) -> Result<RunReport> {
    if cfg.replicas == 0 {
        return Err(Error::Domain("need at least one replica".into()));
    }
    let pts = ms.top_rect.num_points() as f64;
    if pts * cfg.replicas as f64 > cfg.budget {
        return Err(Error::Budget(format!("{pts} points x {} replicas exceeds {}", cfg.replicas, cfg.budget)));
    }
    let strategy = cfg.top_strategy.unwrap_or_else(|| ms.strategy_at(ms.top_level));
    if cfg.gamma != 0.0 {
        ms.solver_top()?;
        if strategy == Strategy::Switching || ms.top_level > ms.switch_from {
            for l in ms.switch_from..=ms.top_level {
                ms.switch_model(l)?;
            }
        }
    }
    let outs = par::try_map_indexed(cfg.exec, cfg.replicas, |rep| {
        let field = if cfg.gamma != 0.0 { Some(ms.sample_top(cfg.seed, rep as u64)?) } else { None };
        let c = ms.construct(field.as_ref(), strategy, ChoiceStream::new(cfg.seed, rep as u64))?;
        let ratio = match &field {
            Some(f) => compare_vs_optimal(&ms.top_rect, f, cfg.gamma, &c.path.path)?,
            None => compare_vs_optimal(&ms.top_rect, &FieldSample::zeros(ms.top_rect), 0.0, &c.path.path)?,
        };
        Ok::<_, Error>((c.records, c.path.weight, ratio))
    })?;
    let mut levels: Vec<i64> = outs.iter().flat_map(|o| o.0.iter().map(|r| r.level)).collect();
    levels.sort_unstable();
    levels.dedup();
    let mut rows = Vec::new();
    for (rep, (recs, _, _)) in outs.iter().enumerate() {
        for &l in &levels {
            let sel: Vec<&NodeRecord> = recs.iter().filter(|r| r.level == l).collect();
            if sel.is_empty() {
                continue;
            }
            let n = sel.len() as f64;
            rows.push(LevelRow {
                level: l,
                replicate: rep,
                d: sel.iter().map(|r| r.weight).sum::<f64>() / n,
                d_join: sel.iter().map(|r| r.join).sum::<f64>() / n,
                switches: sel.iter().map(|r| r.switches as f64).sum::<f64>() / n,
            });
        }
    }
    let per_level = |l: i64| -> Vec<(usize, f64)> { rows.iter().filter(|r| r.level == l).map(|r| (r.replicate, r.d)).collect() };
    let mut stats = Vec::new();
    for &l in &levels {
        let ds: Vec<f64> = per_level(l).iter().map(|x| x.1).collect();
        let (d_mean, d_se) = par::mean_se(&ds);
        let sel: Vec<&LevelRow> = rows.iter().filter(|r| r.level == l).collect();
        let recs: Vec<&NodeRecord> = outs.iter().flat_map(|o| o.0.iter()).filter(|r| r.level == l).collect();
        let (ratio, ratio_se) = if levels.contains(&(l - 1)) {
            let lo: HashMap<usize, f64> = per_level(l - 1).into_iter().collect();
            let pairs: Vec<(f64, f64)> = per_level(l).into_iter().filter_map(|(r, d)| lo.get(&r).map(|&e| (d, e))).collect();
            ratio_with_se(&pairs, cfg.seed)
        } else {
            (None, None)
        };
        stats.push(LevelStats {
            level: l,
            d_mean,
            d_se,
            d_join_mean: sel.iter().map(|r| r.d_join).sum::<f64>() / sel.len() as f64,
            switches_mean: sel.iter().map(|r| r.switches).sum::<f64>() / sel.len() as f64,
            switches_max: recs.iter().map(|r| r.switches).max().unwrap_or(0),
            ratio,
            ratio_se,
            truncated: recs.iter().filter(|r| r.truncated).count(),
            regime_failures: recs.iter().filter(|r| !r.regime_ok).count(),
        });
    }
    Ok(RunReport { rows, stats, top_weights: outs.iter().map(|o| o.1).collect(), top_ratios: outs.iter().map(|o| o.2).collect() })
}

fn ratio_with_se(pairs: &[(f64, f64)], seed: u64) -> (Option<f64>, Option<f64>) {
    if pairs.is_empty() {
        return (None, None);
    }
    let ratio_of = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut a, mut b) = (0.0, 0.0);
        for i in idx {
            a += pairs[i].0;
            b += pairs[i].1;
        }
        a / b
    };
    let n = pairs.len();
    let r = ratio_of(&mut (0..n));
    let mut g = rng::substream(seed, 0, 0xA7105);
    let boots: Vec<f64> = (0..200).map(|_| ratio_of(&mut (0..n).map(|_| g.gen_range(0..n)))).collect();
    let (_, se) = par::mean_se(&boots);
    (Some(r), Some(se * (boots.len() as f64).sqrt()))
}

/// Paired comparison of the two top strategies on shared fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyComparison {
    pub weights_uniform: Vec<f64>,
    pub weights_switching: Vec<f64>,
    pub ratios_uniform: Vec<f64>,
    pub ratios_switching: Vec<f64>,
    pub switches: Vec<usize>,
}

pub fn compare_strategies(ms: &Multiscale, replicas: usize, seed: u64, exec: Execution) -> Result<StrategyComparison> {
    if ms.gamma != 0.0 {
        ms.switch_model(ms.top_level)?;
    }
    let outs = par::try_map_indexed(exec, replicas, |rep| {
        let field = if ms.gamma != 0.0 { ms.sample_top(seed, rep as u64)? } else { FieldSample::zeros(ms.top_rect) };
        let cs = ChoiceStream::new(seed, rep as u64);
        let a = ms.construct(Some(&field), Strategy::Uniform, cs)?;
        let b = ms.construct(Some(&field), Strategy::Switching, cs)?;
        let ra = compare_vs_optimal(&ms.top_rect, &field, ms.gamma, &a.path.path)?;
        let rb = compare_vs_optimal(&ms.top_rect, &field, ms.gamma, &b.path.path)?;
        Ok::<_, Error>((a.path.weight, b.path.weight, ra, rb, b.plan.gadgets.len()))
    })?;
    Ok(StrategyComparison {
        weights_uniform: outs.iter().map(|o| o.0).collect(),
        weights_switching: outs.iter().map(|o| o.1).collect(),
        ratios_uniform: outs.iter().map(|o| o.2).collect(),
        ratios_switching: outs.iter().map(|o| o.3).collect(),
        switches: outs.iter().map(|o| o.4).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_nests() {
        let p = ScaleParams::new(2, 3);
        let ms = Multiscale::new(p, 8, 2, 0.0).unwrap();
        let lay = ms.layout(2, &ms.top_rect).unwrap();
        for l in &lay.layers {
            assert!(ms.top_rect.contains_rect(&l.left) && ms.top_rect.contains_rect(&l.right));
            assert_eq!(l.mids.len(), 4);
            assert_eq!(l.left, block_rect(&p, 8, 1, (l.left.base.left, l.left.span.left)).unwrap());
            for m in &l.mids {
                assert!(l.span.contains_interval(&m.span));
            }
        }
    }

    #[test]
    fn straight_crossing_counts() {
        let p = ScaleParams::new(2, 3);
        let ms = Multiscale::new(p, 8, 1, 0.0).unwrap();
        let c = strategy1_crossing(&ms, None, ChoiceStream::new(1, 0)).unwrap();
        assert!(is_crossing(&ms.top_rect, &c.path.path));
        let vertical: i64 = c.path.path.windows(2).filter(|w| w[0].0 == w[1].0).count() as i64;
        assert_eq!(c.path.weight as i64, ms.top_rect.width() + 1 + vertical);
    }
}
