//! Liouville first-passage percolation: vertex-weighted shortest paths,
//! left-right crossings and the exponent-estimation scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{neighbours, Point, RectRegion};
use crate::gff::{FieldSample, GffSampler, SamplerMode};
use crate::kernels::least_squares;
use crate::par::{self, Execution};
use crate::rng;

/// Positive vertex weights on a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGrid {
    pub region: RectRegion,
    pub weights: Vec<f64>,
}

impl WeightedGrid {
    /// Weights `exp(γ η_v)`.
    pub fn from_field(field: &FieldSample, gamma: f64) -> Self {
        WeightedGrid { region: field.region, weights: field.values.iter().map(|v| (gamma * v).exp()).collect() }
    }
    pub fn uniform(region: RectRegion) -> Self {
        WeightedGrid { region, weights: vec![1.0; region.num_points()] }
    }
    pub fn from_weights(region: RectRegion, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != region.num_points() {
            return Err(Error::Geometry("weight count does not match region".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Domain("weights must be positive".into()));
        }
        Ok(WeightedGrid { region, weights })
    }
    pub fn weight(&self, p: Point) -> f64 {
        self.weights[self.region.index(p)]
    }
    /// Sum of weights along a point sequence, with multiplicity.
    pub fn path_weight(&self, path: &[Point]) -> f64 {
        path.iter().map(|&p| self.weight(p)).sum()
    }
}

/// A path and its weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub weight: f64,
    pub path: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    idx: usize,
}

impl Eq for Entry {}
impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on (dist, idx)
        o.dist.total_cmp(&self.dist).then_with(|| o.idx.cmp(&self.idx))
    }
}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Multi-source label-setting search inside `rect`. Each source starts at its
/// own weight; the first settled target ends the search.
fn label_setting(grid: &WeightedGrid, rect: &RectRegion, sources: &[Point], is_target: impl Fn(Point) -> bool) -> Result<PathResult> {
    if !grid.region.contains_rect(rect) {
        return Err(Error::Geometry(format!("{rect:?} not inside {:?}", grid.region)));
    }
    let n = rect.num_points();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if !rect.contains(s) {
            return Err(Error::Geometry(format!("{s:?} outside {rect:?}")));
        }
        let i = rect.index(s);
        let d = grid.weight(s);
        if d < dist[i] {
            dist[i] = d;
            heap.push(Entry { dist: d, idx: i });
        }
    }
    while let Some(Entry { dist: d, idx }) = heap.pop() {
        if done[idx] {
            continue;
        }
        done[idx] = true;
        let p = rect.point_at(idx);
        if is_target(p) {
            let mut path = vec![p];
            let mut cur = idx;
            while pred[cur] != usize::MAX {
                cur = pred[cur];
                path.push(rect.point_at(cur));
            }
            path.reverse();
            return Ok(PathResult { weight: d, path });
        }
        for q in neighbours(p) {
            if !rect.contains(q) {
                continue;
            }
            let j = rect.index(q);
            if done[j] {
                continue;
            }
            let nd = d + grid.weight(q);
            if nd < dist[j] || (nd == dist[j] && idx < pred[j]) {
                if nd < dist[j] {
                    heap.push(Entry { dist: nd, idx: j });
                }
                dist[j] = nd;
                pred[j] = idx;
            }
        }
    }
    Err(Error::Geometry("no target reachable".into()))
}

/// Minimum vertex-weight path between `x` and `y`, both endpoints counted.
pub fn fpp_distance(grid: &WeightedGrid, x: Point, y: Point) -> Result<PathResult> {
    if !grid.region.contains(x) || !grid.region.contains(y) {
        return Err(Error::Geometry(format!("{x:?} or {y:?} outside {:?}", grid.region)));
    }
    label_setting(grid, &grid.region, &[x], |p| p == y)
}

/// Minimum-weight left-right crossing of `rect` (from the column x = left to
/// the column x = right, staying inside `rect`).
pub fn crossing_weight(grid: &WeightedGrid, rect: &RectRegion) -> Result<PathResult> {
    let sources: Vec<Point> = (rect.span.left..=rect.span.right).map(|y| (rect.base.left, y)).collect();
    let right = rect.base.right;
    label_setting(grid, rect, &sources, |p| p.0 == right)
}

/// What the scan measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanMode {
    /// Distance between (⌊N/4⌋,⌊N/2⌋) and (⌊3N/4⌋,⌊N/2⌋).
    PointToPoint,
    /// Left-right crossing of the middle half [N/4, 3N/4]².
    Crossing,
}

impl std::str::FromStr for ScanMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point2point" => Ok(ScanMode::PointToPoint),
            "crossing" => Ok(ScanMode::Crossing),
            _ => Err(Error::Parse(format!("unknown mode '{s}' (point2point|crossing)"))),
        }
    }
}

/// Scan parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub gamma: f64,
    pub sizes: Vec<i64>,
    pub replicas: usize,
    pub seed: u64,
    pub mode: ScanMode,
    /// Constant added to every interior field value.
    pub field_shift: f64,
    /// Upper bound on N²·replicas per size.
    pub budget: f64,
    pub bootstrap: usize,
    pub exec: Execution,
}

impl ScanConfig {
    pub fn new(gamma: f64, sizes: Vec<i64>, replicas: usize, seed: u64, mode: ScanMode) -> Self {
        ScanConfig { gamma, sizes, replicas, seed, mode, field_shift: 0.0, budget: 2e9, bootstrap: 200, exec: Execution::Parallel }
    }
}

/// Least-squares slope of log-mean against log N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub sizes: Vec<i64>,
    pub means: Vec<f64>,
    pub slope: f64,
    pub stderr: f64,
}

/// Fit plus the raw (N, replicate, value) rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub fit: ExponentFit,
    pub rows: Vec<(i64, usize, f64)>,
}

fn measure(grid: &WeightedGrid, n: i64, mode: ScanMode) -> Result<f64> {
    match mode {
        ScanMode::PointToPoint => Ok(fpp_distance(grid, (n / 4, n / 2), (3 * n / 4, n / 2))?.weight),
        ScanMode::Crossing => {
            let r = RectRegion::new(n / 4, 3 * n / 4, n / 4, 3 * n / 4)?;
            Ok(crossing_weight(grid, &r)?.weight)
        }
    }
}

/// Sample DGFFs on V_N = [0,N]² for each size, measure, and fit the exponent.
pub fn exponent_scan(cfg: &ScanConfig) -> Result<ScanResult> {
    if cfg.sizes.is_empty() || cfg.replicas == 0 {
        return Err(Error::Domain("need at least one size and one replicate".into()));
    }
    if cfg.sizes.windows(2).any(|w| w[0] >= w[1]) || cfg.sizes[0] < 8 {
        return Err(Error::Domain("sizes must be ascending and at least 8".into()));
    }
    for &n in &cfg.sizes {
        if (n * n) as f64 * cfg.replicas as f64 > cfg.budget {
            return Err(Error::Budget(format!("N={n} with {} replicas exceeds the budget {}", cfg.replicas, cfg.budget)));
        }
    }
    let mut rows = Vec::new();
    let mut per_size = Vec::new();
    for &n in &cfg.sizes {
        let region = RectRegion::origin_rect(n, n)?;
        let sampler = if cfg.gamma != 0.0 { Some(GffSampler::new(region, SamplerMode::SparsePrecision)?) } else { None };
        let vals = par::try_map_indexed(cfg.exec, cfg.replicas, |rep| {
            let grid = match &sampler {
                Some(s) => {
                    let mut r = rng::substream(cfg.seed, rep as u64, n as u64);
                    let mut f = s.draw(&mut r);
                    if cfg.field_shift != 0.0 {
                        for (i, v) in f.values.iter_mut().enumerate() {
                            if region.is_interior(region.point_at(i)) {
                                *v += cfg.field_shift;
                            }
                        }
                    }
                    WeightedGrid::from_field(&f, cfg.gamma)
                }
                None => WeightedGrid::uniform(region),
            };
            measure(&grid, n, cfg.mode)
        })?;
        for (rep, v) in vals.iter().enumerate() {
            rows.push((n, rep, *v));
        }
        per_size.push(vals);
    }
    let fit = fit_exponent(&cfg.sizes, &per_size, cfg.bootstrap, cfg.seed);
    Ok(ScanResult { fit, rows })
}

/// Slope of log(mean) vs log N with a bootstrap standard error over replicas.
pub fn fit_exponent(sizes: &[i64], values: &[Vec<f64>], bootstrap: usize, seed: u64) -> ExponentFit {
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let means: Vec<f64> = values.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    let logs: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let (slope, _) = least_squares(&xs, &logs);
    let mut r = rng::substream(seed, 0, 0xB007);
    let mut slopes = Vec::with_capacity(bootstrap);
    for _ in 0..bootstrap {
        let lm: Vec<f64> = values
            .iter()
            .map(|v| {
                let s: f64 = (0..v.len()).map(|_| v[r.gen_range(0..v.len())]).sum();
                (s / v.len() as f64).ln()
            })
            .collect();
        slopes.push(least_squares(&xs, &lm).0);
    }
    let stderr = if slopes.len() > 1 {
        let m = slopes.iter().sum::<f64>() / slopes.len() as f64;
        (slopes.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (slopes.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    ExponentFit { sizes: sizes.to_vec(), means, slope, stderr }
}
