//! `lfpp`: kernel tables, GFF samples, FPP exponent scans, total-variation
//! experiments and multiscale runs as CSV/JSON files.

mod config;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lfpp_core::fpp::{exponent_scan, ScanConfig, ScanMode};
use lfpp_core::geometry::{Point, RectRegion, ScaleParams};
use lfpp_core::gff::{sample_field, GffSampler, SamplerMode};
use lfpp_core::kernels::{greens_via_solve, potential_kernel, PotentialMode, RectKernel};
use lfpp_core::multiscale::{recursive_run, RunConfig};
use lfpp_core::par::Execution;
use lfpp_core::totalvar::{strategy_experiment, StepPenalty};
use output::{num, round, Output, Table};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Resource(String),
    #[error("{0}")]
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Resource(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }
}

impl From<lfpp_core::Error> for Failure {
    fn from(e: lfpp_core::Error) -> Self {
        use lfpp_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Size(_) | E::Budget(_) => Failure::Resource(msg),
            E::Numerical(_) | E::Overflow(_) => Failure::Numerical(msg),
            _ => Failure::Usage(msg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "lfpp", version, about = "Liouville first-passage percolation experiments", args_override_self = true)]
pub struct Cli {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (LFPP_THREADS takes precedence); 0 means all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Write <command>.csv / <command>.json here instead of printing.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Format printed to stdout when no output directory is given.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact random-walk kernels of a rectangle.
    #[command(subcommand)]
    Kernels(KernelCmd),
    /// Discrete GFF samples with zero boundary values.
    Gff(GffArgs),
    /// Passage-time exponent scan over square boxes.
    FppScan(ScanArgs),
    /// Uptick strategy vs oracle for a step penalty.
    Tv(TvArgs),
    /// Multiscale crossing construction, per-level statistics.
    Multiscale(MsArgs),
}

#[derive(Debug, Subcommand)]
enum KernelCmd {
    /// Exit distribution from one interior point.
    #[command(args_override_self = true)]
    Poisson {
        #[arg(long = "M")]
        m: i64,
        #[arg(long = "N")]
        n: i64,
        /// Starting point as x,y.
        #[arg(long, value_parser = parse_point)]
        v: Point,
    },
    /// Full Green's function table of the interior.
    #[command(args_override_self = true)]
    Green {
        #[arg(long = "M")]
        m: i64,
        #[arg(long = "N")]
        n: i64,
    },
    /// Potential kernel of the plane at one point.
    #[command(args_override_self = true)]
    Potential {
        #[arg(long)]
        x: i64,
        #[arg(long)]
        y: i64,
        #[arg(long, value_enum, default_value_t = PotMode::Exact)]
        mode: PotMode,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PotMode {
    Exact,
    Approx,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sampler {
    Sparse,
    Cholesky,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct GffArgs {
    #[arg(long = "M")]
    m: i64,
    #[arg(long = "N")]
    n: i64,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = Sampler::Sparse)]
    sampler: Sampler,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct ScanArgs {
    #[arg(long)]
    gamma: f64,
    /// Ascending box sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [32i64, 64, 128, 256])]
    sizes: Vec<i64>,
    #[arg(long, default_value_t = 200)]
    replicas: usize,
    #[arg(long, default_value = "point2point")]
    mode: ScanMode,
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    /// Upper bound on N²·replicas for any size.
    #[arg(long, default_value_t = 2e9)]
    budget: f64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct TvArgs {
    /// Step penalty, e.g. "levels=0.2,0.4;breaks=0,0.5,1".
    #[arg(long, default_value = "levels=0.2;breaks=0,1")]
    penalty: StepPenalty,
    #[arg(long, default_value_t = 2000)]
    paths: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct MsArgs {
    #[arg(long, default_value_t = 2)]
    levels: i64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 4)]
    replicas: usize,
    /// Smallest block height.
    #[arg(long, default_value_t = 16)]
    unit: i64,
    /// Scale parameters as key=value pairs: m, m_gamma, alpha, beta.
    #[arg(long, default_value = "m=2,m_gamma=3", value_parser = parse_params)]
    params: ScaleParams,
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    Ok((x.trim().parse().map_err(|e| format!("{e}"))?, y.trim().parse().map_err(|e| format!("{e}"))?))
}

fn parse_params(s: &str) -> Result<ScaleParams, String> {
    let (mut m, mut mg, mut alpha, mut beta) = (2u32, 3u32, None, None);
    for kv in s.split(',').filter(|t| !t.trim().is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("'{kv}' is not key=value"))?;
        let bad = |e: &dyn std::fmt::Display| format!("{k}: {e}");
        match k.trim() {
            "m" => m = v.trim().parse().map_err(|e| bad(&e))?,
            "m_gamma" => mg = v.trim().parse().map_err(|e| bad(&e))?,
            "alpha" => alpha = Some(v.trim().parse::<f64>().map_err(|e| bad(&e))?),
            "beta" => beta = Some(v.trim().parse::<f64>().map_err(|e| bad(&e))?),
            other => return Err(format!("unknown scale parameter '{other}'")),
        }
    }
    if m < 1 || mg < 1 {
        return Err("m and m_gamma must be at least 1".into());
    }
    let mut p = ScaleParams::new(m, mg);
    if let Some(a) = alpha {
        p.alpha = a;
    }
    if let Some(b) = beta {
        p.beta = b;
    }
    Ok(p)
}

fn kernels(cmd: &KernelCmd) -> Result<Output, Failure> {
    match *cmd {
        KernelCmd::Poisson { m, n, v } => {
            let k = RectKernel::new(m, n)?;
            let mut t = Table::new(vec!["x", "y", "probability"]);
            for (z, h) in k.poisson_row(v)? {
                t.rows.push(vec![z.0 as f64, z.1 as f64, h]);
            }
            Ok(Output { stem: "poisson", table: Some(t), json: None })
        }
        KernelCmd::Green { m, n } => {
            let g = greens_via_solve(RectRegion::origin_rect(m, n)?)?;
            let pts = g.points();
            let mut t = Table::new(vec!["ux", "uy", "wx", "wy", "green"]);
            for &u in &pts {
                for &w in &pts {
                    t.rows.push(vec![u.0 as f64, u.1 as f64, w.0 as f64, w.1 as f64, g.get(u, w)]);
                }
            }
            Ok(Output { stem: "green", table: Some(t), json: None })
        }
        KernelCmd::Potential { x, y, mode } => {
            let mode = match mode {
                PotMode::Exact => PotentialMode::Exact,
                PotMode::Approx => PotentialMode::Approx,
            };
            let a = potential_kernel((x, y), mode);
            if !a.is_finite() {
                return Err(Failure::Numerical(format!("potential kernel at ({x},{y}) is not finite")));
            }
            let mut t = Table::new(vec!["x", "y", "potential"]);
            t.rows.push(vec![x as f64, y as f64, a]);
            Ok(Output { stem: "potential", table: Some(t), json: None })
        }
    }
}

fn gff(a: &GffArgs, seed: u64, exec: Execution) -> Result<Output, Failure> {
    let region = RectRegion::origin_rect(a.m, a.n)?;
    if (region.num_points() as f64) * (a.samples as f64) > 5e8 {
        return Err(Failure::Resource(format!("{} samples of {} points is too much output", a.samples, region.num_points())));
    }
    let mode = match a.sampler {
        Sampler::Sparse => SamplerMode::SparsePrecision,
        Sampler::Cholesky => SamplerMode::Cholesky,
    };
    let s = GffSampler::new(region, mode)?;
    let mut t = Table::new(vec!["replicate", "x", "y", "value"]);
    for (r, f) in sample_field(&s, seed, a.samples, exec).iter().enumerate() {
        for (i, &v) in f.values.iter().enumerate() {
            let p = region.point_at(i);
            t.rows.push(vec![r as f64, p.0 as f64, p.1 as f64, v]);
        }
    }
    Ok(Output { stem: "gff", table: Some(t), json: None })
}

fn fpp_scan(a: &ScanArgs, seed: u64, exec: Execution) -> Result<Output, Failure> {
    let cfg = ScanConfig { bootstrap: a.bootstrap, budget: a.budget, exec, ..ScanConfig::new(a.gamma, a.sizes.clone(), a.replicas, seed, a.mode) };
    eprintln!("fpp-scan: gamma {} sizes {:?} x {} replicas", a.gamma, a.sizes, a.replicas);
    let res = exponent_scan(&cfg)?;
    let mut t = Table::new(vec!["N", "replicate", "value"]);
    for &(n, r, v) in &res.rows {
        t.rows.push(vec![n as f64, r as f64, v]);
    }
    let f = &res.fit;
    eprintln!("fpp-scan: slope {} +- {}", lfpp_core::io::fmt_num(f.slope), lfpp_core::io::fmt_num(f.stderr));
    let mode = match a.mode {
        ScanMode::PointToPoint => "point2point",
        ScanMode::Crossing => "crossing",
    };
    let j = json!({
        "gamma": num(a.gamma),
        "mode": mode,
        "sizes": f.sizes,
        "replicas": a.replicas,
        "means": f.means.iter().map(|&m| num(m)).collect::<Vec<_>>(),
        "slope": num(f.slope),
        "stderr": num(f.stderr),
        "seed": seed,
    });
    Ok(Output { stem: "fpp_scan", table: Some(t), json: Some(j) })
}

fn tv(a: &TvArgs, seed: u64, exec: Execution) -> Result<Output, Failure> {
    eprintln!("tv: penalty {} over {} paths", a.penalty, a.paths);
    let rep = strategy_experiment(&a.penalty, a.paths, seed, exec)?;
    let j = serde_json::to_value(&rep).map_err(|e| Failure::Numerical(e.to_string()))?;
    Ok(Output { stem: "tv", table: None, json: Some(round(j)) })
}

fn multiscale(a: &MsArgs, seed: u64, exec: Execution) -> Result<Output, Failure> {
    let cfg = RunConfig { exec, ..RunConfig::new(a.params, a.unit, a.levels, a.gamma, a.replicas, seed) };
    eprintln!("multiscale: {} levels, unit {}, gamma {}, {} replicas", a.levels, a.unit, a.gamma, a.replicas);
    let rep = recursive_run(&cfg)?;
    let mut t = Table::new(vec!["level", "replicate", "d", "d_join", "switches"]);
    for r in &rep.rows {
        t.rows.push(vec![r.level as f64, r.replicate as f64, r.d, r.d_join, r.switches]);
    }
    let p = &a.params;
    let j = json!({
        "levels": a.levels,
        "unit": a.unit,
        "gamma": num(a.gamma),
        "replicas": a.replicas,
        "seed": seed,
        "params": {"m": p.m, "m_gamma": p.m_gamma, "delta": num(p.delta), "big_gamma": num(p.big_gamma()), "alpha": num(p.alpha), "beta": num(p.beta)},
        "switch_cap": (3.0 * p.alpha) as usize,
        "stats": round(serde_json::to_value(&rep.stats).map_err(|e| Failure::Numerical(e.to_string()))?),
        "top_weights": rep.top_weights.iter().map(|&w| num(w)).collect::<Vec<_>>(),
        "top_ratios": rep.top_ratios.iter().map(|&w| num(w)).collect::<Vec<_>>(),
    });
    Ok(Output { stem: "multiscale", table: Some(t), json: Some(j) })
}

fn thread_count(flag: usize) -> Result<usize, Failure> {
    match std::env::var("LFPP_THREADS") {
        Ok(s) if !s.trim().is_empty() => s.trim().parse().map_err(|_| Failure::Usage(format!("LFPP_THREADS='{s}' is not a thread count"))),
        _ => Ok(flag),
    }
}

fn setup_threads(n: usize) -> Result<Execution, Failure> {
    #[cfg(feature = "parallel")]
    {
        if n != 1 {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Resource(e.to_string()))?;
            return Ok(Execution::Parallel);
        }
    }
    let _ = n;
    Ok(Execution::Sequential)
}

fn run() -> Result<(), Failure> {
    let args = config::expand(std::env::args().collect())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { Err(Failure::Usage(String::new())) } else { Ok(()) };
        }
    };
    let exec = setup_threads(thread_count(cli.threads)?)?;
    let out = match &cli.cmd {
        Command::Kernels(k) => kernels(k)?,
        Command::Gff(a) => gff(a, cli.seed, exec)?,
        Command::FppScan(a) => fpp_scan(a, cli.seed, exec)?,
        Command::Tv(a) => tv(a, cli.seed, exec)?,
        Command::Multiscale(a) => multiscale(a, cli.seed, exec)?,
    };
    out.emit(cli.out_dir.as_deref(), cli.format)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = f.to_string();
            if !msg.is_empty() {
                eprintln!("lfpp: {msg}");
            }
            ExitCode::from(f.code())
        }
    }
}
