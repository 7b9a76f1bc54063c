//! Regularized total variation of Brownian paths with step-function
//! penalties: evaluation, the grid oracle, the penalty time change and the
//! uptick/downtick renewal strategy.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rng;

/// E of the overshoot of a Gaussian random walk over a level, per unit step
/// standard deviation: −ζ(1/2)/√(2π).
pub const OVERSHOOT_CONST: f64 = 0.582_597_157_939_010_7;

/// Largest grid the oracle accepts.
pub const DP_LIMIT: usize = 20_000_000;
/// Largest grid the quadratic reference oracle accepts.
pub const DP_QUADRATIC_LIMIT: usize = 20_000;

/// A path sampled on an ascending time grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl PathSample {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::Domain("need at least two samples with matching lengths".into()));
        }
        if times[0] != 0.0 || values[0] != 0.0 {
            return Err(Error::Domain("path must start at time 0 with value 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("times must be strictly increasing".into()));
        }
        Ok(PathSample { times, values })
    }

    /// Brownian motion on the uniform grid of `n` steps over [0, horizon].
    pub fn brownian<R: Rng + ?Sized>(n: usize, horizon: f64, rng: &mut R) -> Result<Self> {
        if n == 0 || !(horizon > 0.0) {
            return Err(Error::Domain("need n > 0 and a positive horizon".into()));
        }
        let times: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        Self::brownian_on(times, rng)
    }

    /// Brownian motion observed at the given times.
    pub fn brownian_on<R: Rng + ?Sized>(times: Vec<f64>, rng: &mut R) -> Result<Self> {
        let mut values = Vec::with_capacity(times.len());
        values.push(0.0);
        let mut w = 0.0;
        for k in 1..times.len() {
            let z: f64 = rng.sample(StandardNormal);
            w += z * (times[k] - times[k - 1]).max(0.0).sqrt();
            values.push(w);
        }
        Self::new(times, values)
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation of the path at `t`.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        let tn = self.horizon();
        if !(0.0..=tn).contains(&t) {
            return Err(Error::PartitionRange(format!("time {t} outside [0, {tn}]")));
        }
        let k = self.times.partition_point(|&s| s < t);
        if k < self.times.len() && self.times[k] == t {
            return Ok(self.values[k]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.values[k - 1] * (1.0 - w) + self.values[k] * w)
    }

    /// Largest step standard deviation √Δt.
    pub fn max_step_sd(&self) -> f64 {
        self.times.windows(2).map(|w| (w[1] - w[0]).sqrt()).fold(0.0, f64::max)
    }

    /// Discrete total variation Σ|Δf|.
    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }
}

/// Anything that charges a penalty at a time.
pub trait Penalty {
    fn at(&self, t: f64) -> f64;
}

impl Penalty for f64 {
    fn at(&self, _t: f64) -> f64 {
        *self
    }
}

/// Piecewise-constant positive penalty. Piece j covers (s_{j−1}, s_j]; time 0
/// belongs to the first piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPenalty {
    pub breaks: Vec<f64>,
    pub levels: Vec<f64>,
}

impl StepPenalty {
    pub fn new(breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() || breaks.len() != levels.len() + 1 {
            return Err(Error::Domain("need K levels and K+1 breakpoints".into()));
        }
        if breaks[0] != 0.0 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("breakpoints must start at 0 and increase strictly".into()));
        }
        if levels.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Domain("levels must be positive and finite".into()));
        }
        Ok(StepPenalty { breaks, levels })
    }

    pub fn constant(level: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![level])
    }

    pub fn horizon(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn pieces(&self) -> usize {
        self.levels.len()
    }

    pub fn is_constant(&self) -> bool {
        self.levels.windows(2).all(|w| w[0] == w[1])
    }

    fn piece_of(&self, t: f64) -> usize {
        let k = self.breaks.partition_point(|&s| s < t);
        k.saturating_sub(1).min(self.levels.len() - 1)
    }

    /// ∫ 1/λ over the horizon.
    pub fn integral_inv(&self) -> f64 {
        self.breaks.windows(2).zip(&self.levels).map(|(w, l)| (w[1] - w[0]) / l).sum()
    }

    pub fn min_level(&self) -> f64 {
        self.levels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_level(&self) -> f64 {
        self.levels.iter().copied().fold(0.0, f64::max)
    }

    /// (start, end, level) per piece.
    pub fn triples(&self) -> Vec<[f64; 3]> {
        self.breaks.windows(2).zip(&self.levels).map(|(w, &l)| [w[0], w[1], l]).collect()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.breaks.clone(), self.levels.iter().map(|l| l * c).collect())
    }
}

impl Penalty for StepPenalty {
    fn at(&self, t: f64) -> f64 {
        self.levels[self.piece_of(t)]
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad number '{x}': {e}"))))
        .collect()
}

/// `levels=a,b,c;breaks=0,t1,t2,T`, or a bare number for a constant penalty
/// on [0, 1].
impl FromStr for StepPenalty {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(v) = s.parse::<f64>() {
            return Self::constant(v, 1.0).map_err(|e| Error::Parse(e.to_string()));
        }
        let (mut levels, mut breaks) = (None, None);
        for part in s.split(';').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got '{part}'")))?;
            match k.trim() {
                "levels" => levels = Some(parse_list(v)?),
                "breaks" => breaks = Some(parse_list(v)?),
                other => return Err(Error::Parse(format!("unknown penalty key '{other}'"))),
            }
        }
        let levels = levels.ok_or_else(|| Error::Parse("missing levels".into()))?;
        let breaks = match breaks {
            Some(b) => b,
            None if levels.len() == 1 => vec![0.0, 1.0],
            None => return Err(Error::Parse("missing breaks".into())),
        };
        Self::new(breaks, levels).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl fmt::Display for StepPenalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let j = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "levels={};breaks={}", j(&self.levels), j(&self.breaks))
    }
}

/// Ascending partition q₀ = 0 < q₁ < … < q_{k+1} = T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    pub points: Vec<f64>,
}

impl TimePartition {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points[0] != 0.0 {
            return Err(Error::PartitionRange("partition must start at 0 and have an endpoint".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::PartitionRange("partition points must increase strictly".into()));
        }
        Ok(TimePartition { points })
    }

    pub fn trivial(horizon: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon])
    }

    /// Partition through grid indices of `path`; 0 and the last index are added.
    pub fn from_indices(path: &PathSample, idx: &[usize]) -> Result<Self> {
        let n = path.len() - 1;
        let mut pts = vec![0.0];
        for &i in idx {
            if i > 0 && i < n {
                pts.push(path.times[i]);
            }
        }
        pts.push(path.horizon());
        Self::new(pts)
    }

    /// Number of internal points k.
    pub fn internal(&self) -> usize {
        self.points.len() - 2
    }
}

/// Σ|f(t_i) − f(t_{i−1})| − Σ_{internal} λ(t_i), interpolating off-grid points.
pub fn phi_value<P: Penalty + ?Sized>(path: &PathSample, part: &TimePartition, penalty: &P) -> Result<f64> {
    let tn = path.horizon();
    let last = *part.points.last().unwrap();
    if (last - tn).abs() > 1e-12 * tn.max(1.0) {
        return Err(Error::PartitionRange(format!("partition ends at {last}, path at {tn}")));
    }
    let vals: Vec<f64> = part.points.iter().map(|&t| path.value_at(t.min(tn))).collect::<Result<_>>()?;
    let gain: f64 = vals.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let pen: f64 = part.points[1..part.points.len() - 1].iter().map(|&t| penalty.at(t)).sum();
    Ok(gain - pen)
}

/// Best partition with internal points on the grid, as (value, indices of all
/// partition points including both ends). Exact, linear time.
pub fn phi_optimal_dp_indices<P: Penalty + ?Sized>(path: &PathSample, penalty: &P) -> Result<(f64, Vec<usize>)> {
    let n = path.len();
    if n > DP_LIMIT {
        return Err(Error::Size(format!("grid of {n} points exceeds {DP_LIMIT}")));
    }
    let f = &path.values;
    let mut pred = vec![0usize; n];
    // best V_i - f_i and V_i + f_i over settled i, with their argmax
    let (mut a, mut ai) = (-f[0], 0usize);
    let (mut b, mut bi) = (f[0], 0usize);
    let mut v_last = 0.0;
    for j in 1..n {
        let up = f[j] + a;
        let down = b - f[j];
        let (mut v, p) = if up > down || (up == down && ai <= bi) { (up, ai) } else { (down, bi) };
        pred[j] = p;
        if j == n - 1 {
            v_last = v;
            break;
        }
        v -= penalty.at(path.times[j]);
        if v - f[j] > a {
            a = v - f[j];
            ai = j;
        }
        if v + f[j] > b {
            b = v + f[j];
            bi = j;
        }
    }
    let mut idx = vec![n - 1];
    let mut cur = n - 1;
    while cur != 0 {
        cur = pred[cur];
        idx.push(cur);
    }
    idx.reverse();
    Ok((v_last, idx))
}

/// Grid oracle: the supremum of [`phi_value`] over partitions whose internal
/// points are grid times.
pub fn phi_optimal_dp<P: Penalty + ?Sized>(path: &PathSample, penalty: &P) -> Result<(f64, TimePartition)> {
    let (v, idx) = phi_optimal_dp_indices(path, penalty)?;
    Ok((v, TimePartition::from_indices(path, &idx)?))
}

/// Quadratic-time reference for the oracle on small grids.
pub fn phi_optimal_dp_quadratic<P: Penalty + ?Sized>(path: &PathSample, penalty: &P) -> Result<f64> {
    let n = path.len();
    if n > DP_QUADRATIC_LIMIT {
        return Err(Error::Size(format!("grid of {n} points exceeds {DP_QUADRATIC_LIMIT}")));
    }
    let f = &path.values;
    let mut v = vec![f64::NEG_INFINITY; n];
    v[0] = 0.0;
    for j in 1..n {
        let best = (0..j).map(|i| v[i] + (f[j] - f[i]).abs()).fold(f64::NEG_INFINITY, f64::max);
        v[j] = if j == n - 1 { best } else { best - penalty.at(path.times[j]) };
    }
    Ok(v[n - 1])
}

/// λ* = (Σ Δs_j / λ_j²)^{−1/2}.
pub fn lambda_star(penalty: &StepPenalty) -> f64 {
    let s: f64 = penalty.breaks.windows(2).zip(&penalty.levels).map(|(w, l)| (w[1] - w[0]) / (l * l)).sum();
    s.powf(-0.5)
}

/// The clock F(t) = ∫₀ᵗ (λ*/λ)² under which the penalty becomes λ̃ = λ∘F⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChange {
    pub lambda_star: f64,
    /// Breakpoints in the original clock.
    pub knots_t: Vec<f64>,
    /// Their images under F; the last one is exactly 1.
    pub knots_u: Vec<f64>,
    pub lambda_tilde: StepPenalty,
}

impl TimeChange {
    pub fn forward(&self, t: f64) -> f64 {
        interp(&self.knots_t, &self.knots_u, t)
    }
    pub fn inverse(&self, u: f64) -> f64 {
        interp(&self.knots_u, &self.knots_t, u)
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&s| s <= x);
    let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + w * (ys[k] - ys[k - 1])
}

pub fn time_change(penalty: &StepPenalty) -> Result<TimeChange> {
    let ls = lambda_star(penalty);
    let mut knots_u = vec![0.0];
    let mut acc = 0.0;
    for (w, l) in penalty.breaks.windows(2).zip(&penalty.levels) {
        acc += (w[1] - w[0]) * (ls / l).powi(2);
        knots_u.push(acc);
    }
    *knots_u.last_mut().unwrap() = 1.0;
    let lambda_tilde = StepPenalty::new(knots_u.clone(), penalty.levels.clone())?;
    Ok(TimeChange { lambda_star: ls, knots_t: penalty.breaks.clone(), knots_u, lambda_tilde })
}

/// Σ|∫_{t_{i−1}}^{t_i} λ̃/λ* dW| − Σ λ̃(t_i) for a path `w` in the changed
/// clock. Partition points must be grid times of `w`.
pub fn phi_tilde(w: &PathSample, part: &TimePartition, tilde: &StepPenalty, lambda_star: f64) -> Result<f64> {
    let mut idx = Vec::with_capacity(part.points.len());
    for &t in &part.points {
        let k = w.times.partition_point(|&s| s < t);
        if k >= w.len() || (w.times[k] - t).abs() > 1e-12 {
            return Err(Error::PartitionRange(format!("partition point {t} is not a grid time")));
        }
        idx.push(k);
    }
    let mut total = 0.0;
    for seg in idx.windows(2) {
        let mut s = 0.0;
        for k in seg[0] + 1..=seg[1] {
            let mid = 0.5 * (w.times[k - 1] + w.times[k]);
            s += tilde.at(mid) / lambda_star * (w.values[k] - w.values[k - 1]);
        }
        total += s.abs();
    }
    let pen: f64 = part.points[1..part.points.len() - 1].iter().map(|&t| tilde.at(t)).sum();
    Ok(total - pen)
}

/// Monte Carlo of both sides of the time-change identity for a fixed
/// partition `part_u` in the changed clock. Returns ((mean, se) of the
/// original-clock side, (mean, se) of the changed-clock side).
pub fn time_change_check(penalty: &StepPenalty, part_u: &TimePartition, n_paths: usize, seed: u64, exec: Execution) -> Result<((f64, f64), (f64, f64))> {
    let tc = time_change(penalty)?;
    if (part_u.points.last().unwrap() - 1.0).abs() > 1e-12 {
        return Err(Error::PartitionRange("changed-clock partition must end at 1".into()));
    }
    let part_t = TimePartition::new(part_u.points.iter().map(|&u| tc.inverse(u)).collect())?;
    // W is observed at the partition points and at the λ̃ breakpoints
    let mut grid_u: Vec<f64> = part_u.points.iter().chain(&tc.knots_u).copied().collect();
    grid_u.sort_by(f64::total_cmp);
    grid_u.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let res = par::try_map_indexed(exec, n_paths, |p| {
        let mut r = rng::stream(seed, p as u64);
        let b = PathSample::brownian_on(part_t.points.clone(), &mut r)?;
        let lhs = phi_value(&b, &part_t, penalty)?;
        let w = PathSample::brownian_on(grid_u.clone(), &mut r)?;
        let part_w = TimePartition::new(part_u.points.iter().map(|&u| snap(&grid_u, u)).collect())?;
        let rhs = phi_tilde(&w, &part_w, &tc.lambda_tilde, tc.lambda_star)?;
        Ok::<_, Error>((lhs, rhs))
    })?;
    let l: Vec<f64> = res.iter().map(|x| x.0).collect();
    let r: Vec<f64> = res.iter().map(|x| x.1).collect();
    Ok((par::mean_se(&l), par::mean_se(&r)))
}

fn snap(grid: &[f64], t: f64) -> f64 {
    let k = grid.partition_point(|&s| s < t - 1e-14);
    grid[k.min(grid.len() - 1)]
}

/// Stopping times, extremum times and leg gains of the tick recursion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RenewalRecord {
    pub taus: Vec<f64>,
    pub xis: Vec<f64>,
    /// Grid indices of the extremum times.
    pub xi_index: Vec<usize>,
    /// Path values at the extrema (shifted outward when the monitoring
    /// correction is on).
    pub extrema: Vec<f64>,
    pub deltas: Vec<f64>,
}

/// Knobs of the tick detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOptions {
    pub start_with_downtick: bool,
    /// Compensate for discrete monitoring: the tick threshold drops by twice
    /// the expected overshoot and extrema move outward by one overshoot.
    pub monitoring_correction: bool,
    pub check_resolution: bool,
    /// Extremum times before this are not used as partition points.
    pub burn_in: Option<f64>,
}

impl Default for TickOptions {
    fn default() -> Self {
        TickOptions { start_with_downtick: false, monitoring_correction: false, check_resolution: true, burn_in: None }
    }
}

/// One completed leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tick {
    pub tau: f64,
    pub xi: f64,
    pub xi_index: usize,
    pub extremum: f64,
}

/// Streaming running-extremum tick detector.
#[derive(Debug, Clone)]
pub struct TickDetector {
    lambda_star: f64,
    correct: bool,
    up: bool,
    ext: f64,
    ext_sd: f64,
    ext_t: f64,
    ext_i: usize,
}

impl TickDetector {
    pub fn new(lambda_star: f64, opts: &TickOptions, w0: f64) -> Self {
        TickDetector { lambda_star, correct: opts.monitoring_correction, up: !opts.start_with_downtick, ext: w0, ext_sd: 0.0, ext_t: 0.0, ext_i: 0 }
    }

    /// Feed the sample (t, w) at grid index `i`; `sd` is the standard
    /// deviation of the step that led to it.
    pub fn push(&mut self, i: usize, t: f64, w: f64, sd: f64) -> Option<Tick> {
        let thr = if self.correct { self.lambda_star - 2.0 * OVERSHOOT_CONST * sd } else { self.lambda_star };
        let fired = if self.up {
            if w < self.ext {
                (self.ext, self.ext_sd, self.ext_t, self.ext_i) = (w, sd, t, i);
            }
            w - self.ext >= thr
        } else {
            if w > self.ext {
                (self.ext, self.ext_sd, self.ext_t, self.ext_i) = (w, sd, t, i);
            }
            self.ext - w >= thr
        };
        if !fired {
            return None;
        }
        let shift = if self.correct { OVERSHOOT_CONST * self.ext_sd } else { 0.0 };
        let extremum = if self.up { self.ext - shift } else { self.ext + shift };
        let tick = Tick { tau: t, xi: self.ext_t, xi_index: self.ext_i, extremum };
        self.up = !self.up;
        (self.ext, self.ext_sd, self.ext_t, self.ext_i) = (w, sd, t, i);
        Some(tick)
    }
}

fn record_tick(rec: &mut RenewalRecord, tk: Tick, first_up: bool) {
    rec.taus.push(tk.tau);
    rec.xis.push(tk.xi);
    rec.xi_index.push(tk.xi_index);
    rec.extrema.push(tk.extremum);
    let j = rec.extrema.len();
    if j >= 2 {
        // first leg ends at a minimum when starting with an uptick
        let sign = if j.is_multiple_of(2) == first_up { 1.0 } else { -1.0 };
        rec.deltas.push(sign * (rec.extrema[j - 1] - rec.extrema[j - 2]));
    }
}

/// Partition {0} ∪ {ξ_j} ∪ {T} from the alternating tick recursion, keeping
/// at most `cap_k` internal points. Plain detection, no correction.
pub fn uptick_partition(path: &PathSample, lambda_star: f64, cap_k: usize) -> Result<(TimePartition, RenewalRecord)> {
    uptick_partition_with(path, lambda_star, cap_k, &TickOptions::default())
}

pub fn uptick_partition_with(path: &PathSample, lambda_star: f64, cap_k: usize, opts: &TickOptions) -> Result<(TimePartition, RenewalRecord)> {
    if !(lambda_star > 0.0) {
        return Err(Error::Domain("λ* must be positive".into()));
    }
    if opts.check_resolution {
        let sd = path.max_step_sd();
        if sd > lambda_star / 20.0 * (1.0 + 1e-9) {
            return Err(Error::Resolution(format!("step sd {sd} exceeds λ*/20 = {}", lambda_star / 20.0)));
        }
    }
    let mut det = TickDetector::new(lambda_star, opts, path.values[0]);
    let mut rec = RenewalRecord::default();
    for i in 1..path.len() {
        let sd = (path.times[i] - path.times[i - 1]).sqrt();
        if let Some(tk) = det.push(i, path.times[i], path.values[i], sd) {
            record_tick(&mut rec, tk, !opts.start_with_downtick);
        }
    }
    let burn = opts.burn_in.unwrap_or(0.0);
    let idx: Vec<usize> = rec.xi_index.iter().zip(&rec.xis).filter(|(&i, &x)| i > 0 && x >= burn).map(|(&i, _)| i).take(cap_k).collect();
    Ok((TimePartition::from_indices(path, &idx)?, rec))
}

/// ⌈2/λ*²⌉.
pub fn tick_cap(lambda_star: f64) -> usize {
    (2.0 / (lambda_star * lambda_star) - 1e-9).ceil() as usize
}

/// Burn-in 13·λ*²·log(1/λ*) in the changed clock.
pub fn burn_in(lambda_star: f64) -> f64 {
    13.0 * lambda_star * lambda_star * (1.0 / lambda_star).ln()
}

/// Renewal statistics with their standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalStats {
    pub lambda_star: f64,
    pub paths: usize,
    pub mean_tau1: f64,
    pub se_tau1: f64,
    pub mean_delta: f64,
    pub se_delta: f64,
    pub theta: f64,
    pub mgf: f64,
    pub se_mgf: f64,
    /// sec(√(2θ)λ*).
    pub mgf_expected: f64,
}

fn summarize(lambda_star: f64, tau1: &[f64], delta: &[f64]) -> RenewalStats {
    let theta = std::f64::consts::PI.powi(2) / (64.0 * lambda_star * lambda_star);
    let e: Vec<f64> = tau1.iter().map(|t| (theta * t).exp()).collect();
    let (mt, st) = par::mean_se(tau1);
    let (md, sd) = par::mean_se(delta);
    let (mm, sm) = par::mean_se(&e);
    RenewalStats {
        lambda_star,
        paths: tau1.len(),
        mean_tau1: mt,
        se_tau1: st,
        mean_delta: md,
        se_delta: sd,
        theta,
        mgf: mm,
        se_mgf: sm,
        mgf_expected: 1.0 / ((2.0 * theta).sqrt() * lambda_star).cos(),
    }
}

/// E τ₁, E Δ₁ and E e^{θτ₁} at θ = π²/(64λ*²) from given paths, each of which
/// must contain two ticks. The monitoring correction is applied.
pub fn renewal_stats(lambda_star: f64, paths: &[PathSample]) -> Result<RenewalStats> {
    let opts = TickOptions { monitoring_correction: true, ..TickOptions::default() };
    let mut tau1 = Vec::with_capacity(paths.len());
    let mut delta = Vec::with_capacity(paths.len());
    for p in paths {
        let (_, rec) = uptick_partition_with(p, lambda_star, usize::MAX, &opts)?;
        if rec.deltas.is_empty() {
            return Err(Error::Domain("path too short to contain two ticks".into()));
        }
        tau1.push(rec.taus[0]);
        delta.push(rec.deltas[0]);
    }
    Ok(summarize(lambda_star, &tau1, &delta))
}

/// Same statistics, simulating each path on the grid dt = (λ*/20)² until its
/// second tick.
pub fn renewal_stats_mc(lambda_star: f64, n_paths: usize, seed: u64, exec: Execution) -> Result<RenewalStats> {
    if !(lambda_star > 0.0) || n_paths == 0 {
        return Err(Error::Domain("need λ* > 0 and at least one path".into()));
    }
    let sd = lambda_star / 20.0;
    let dt = sd * sd;
    let opts = TickOptions { monitoring_correction: true, ..TickOptions::default() };
    let res = par::map_indexed(exec, n_paths, |p| {
        let mut r = rng::stream(seed, p as u64);
        let mut det = TickDetector::new(lambda_star, &opts, 0.0);
        let mut rec = RenewalRecord::default();
        let mut w = 0.0;
        let mut i = 0usize;
        while rec.taus.len() < 2 {
            i += 1;
            let z: f64 = r.sample(StandardNormal);
            w += sd * z;
            if let Some(tk) = det.push(i, i as f64 * dt, w, sd) {
                record_tick(&mut rec, tk, true);
            }
        }
        (rec.taus[0], rec.deltas[0])
    });
    let tau1: Vec<f64> = res.iter().map(|x| x.0).collect();
    let delta: Vec<f64> = res.iter().map(|x| x.1).collect();
    Ok(summarize(lambda_star, &tau1, &delta))
}

/// Monte Carlo comparison of the renewal strategy against the grid oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub penalty: Vec<[f64; 3]>,
    pub lambda_star: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub grid_steps: usize,
    pub mean_phi_strategy: f64,
    pub mean_phi_oracle: f64,
    pub integral_inv_lambda: f64,
    pub se_strategy: f64,
    pub se_oracle: f64,
    /// ⌈2/λ*²⌉ and the most internal points any strategy partition used.
    pub cap_k: usize,
    pub max_points: usize,
    /// λ and 1/λ + λ for a constant penalty.
    pub sandwich_lower: Option<f64>,
    pub sandwich_upper: Option<f64>,
}

/// Per-path (Φ_strategy, Φ_oracle, internal points) on a grid of `n` steps.
pub fn strategy_path(penalty: &StepPenalty, tc: &TimeChange, n: usize, rng: &mut impl Rng) -> Result<(f64, f64, usize)> {
    let horizon = penalty.horizon();
    let b = PathSample::brownian(n, horizon, rng)?;
    let ls = tc.lambda_star;
    // gain process on the changed clock: dW = (λ*/λ) dB
    let mut u = Vec::with_capacity(n + 1);
    let mut w = Vec::with_capacity(n + 1);
    u.push(0.0);
    w.push(0.0);
    for k in 1..=n {
        let mid = 0.5 * (b.times[k - 1] + b.times[k]);
        let c = ls / penalty.at(mid);
        u.push(tc.forward(b.times[k]));
        w.push(w[k - 1] + c * (b.values[k] - b.values[k - 1]));
    }
    *u.last_mut().unwrap() = 1.0;
    let wp = PathSample::new(u, w)?;
    let cap = tick_cap(ls);
    let opts = TickOptions { monitoring_correction: true, burn_in: Some(burn_in(ls)), ..TickOptions::default() };
    let (part_u, rec) = uptick_partition_with(&wp, ls, cap, &opts)?;
    let k = part_u.internal();
    let used: Vec<usize> = rec.xi_index.iter().copied().filter(|&i| i > 0 && wp.times[i] >= burn_in(ls)).take(cap).collect();
    let part_t = TimePartition::from_indices(&b, &used)?;
    let strat = phi_value(&b, &part_t, penalty)?;
    let (oracle, _) = phi_optimal_dp_indices(&b, penalty)?;
    Ok((strat, oracle, k))
}

/// Build Q* by time change and tick detection for `n_paths` Brownian paths
/// on [0, 1], and compare with the grid oracle.
pub fn strategy_experiment(penalty: &StepPenalty, n_paths: usize, seed: u64, exec: Execution) -> Result<StrategyReport> {
    if (penalty.horizon() - 1.0).abs() > 1e-12 {
        return Err(Error::Domain("penalty must live on [0, 1]".into()));
    }
    if n_paths == 0 {
        return Err(Error::Domain("need at least one path".into()));
    }
    let tc = time_change(penalty)?;
    let ls = tc.lambda_star;
    if ls > 0.5 {
        return Err(Error::Regime(format!("λ* = {ls} exceeds 0.5")));
    }
    let lmin = penalty.min_level();
    let n = (400.0 / (lmin * lmin)).ceil() as usize;
    if n + 1 > DP_LIMIT {
        return Err(Error::Size(format!("grid of {n} steps exceeds {DP_LIMIT}")));
    }
    let res = par::try_map_indexed(exec, n_paths, |p| {
        let mut r = rng::stream(seed, p as u64);
        strategy_path(penalty, &tc, n, &mut r)
    })?;
    let s: Vec<f64> = res.iter().map(|x| x.0).collect();
    let o: Vec<f64> = res.iter().map(|x| x.1).collect();
    let (ms, ss) = par::mean_se(&s);
    let (mo, so) = par::mean_se(&o);
    let constant = penalty.is_constant().then(|| penalty.levels[0]);
    Ok(StrategyReport {
        penalty: penalty.triples(),
        lambda_star: ls,
        n_paths,
        seed,
        grid_steps: n,
        mean_phi_strategy: ms,
        mean_phi_oracle: mo,
        integral_inv_lambda: penalty.integral_inv(),
        se_strategy: ss,
        se_oracle: so,
        cap_k: tick_cap(ls),
        max_points: res.iter().map(|x| x.2).max().unwrap_or(0),
        sandwich_lower: constant,
        sandwich_upper: constant.map(|l| 1.0 / l + l),
    })
}
