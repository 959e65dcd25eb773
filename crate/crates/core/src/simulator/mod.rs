//! Monte Carlo engine: killed grid paths of the catalog models, their
//! extremes and decompositions, the post-infimum SDE and empirical laws.
//!
//! Every path is a pure function of `(seed, path_index)`, so batches can be
//! split over any number of workers without changing a single bit.

mod engine;
mod extremes;
mod post_rho;
mod rng;
mod stats;
mod walk;

use std::io::Write;
use std::ops::ControlFlow;
use std::path::Path;

pub use engine::{par_map, try_par_map, worker_count, WORKERS_ENV};
pub use extremes::PathExtremes;
pub use post_rho::{post_rho_stopped_value, simulate_post_rho};
pub use stats::{empirical_cdf, ks_statistic, ks_two_sample, EmpiricalCdf};

use crate::error::{Error, Result};
use crate::levy_model::{KillingRate, LevyModel};
use extremes::{ExtremesAccumulator, StridedExtremes};
use rng::{derive_seed, PathRng, DOMAIN_TILTED};

/// Simulation settings shared by every path of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    model: LevyModel,
    gamma: KillingRate,
    dt: f64,
    n_paths: u64,
    seed: u64,
    t_cap: f64,
}

impl SimConfig {
    pub const MAX_DT: f64 = 1e-2;
    /// Default cap in units of `1/γ`; `P(T > t_cap) = e^{−20}`.
    pub const DEFAULT_CAP_FACTOR: f64 = 20.0;
    /// Smallest admissible cap in units of `1/γ`.
    pub const MIN_CAP_FACTOR: f64 = 10.0;

    pub fn new(
        model: LevyModel,
        gamma: KillingRate,
        dt: f64,
        n_paths: u64,
        seed: u64,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt <= Self::MAX_DT) {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: dt,
                reason: "grid step must lie in (0, 1e-2]",
            });
        }
        if n_paths == 0 {
            return Err(Error::InvalidParameter {
                name: "n_paths",
                value: 0.0,
                reason: "need at least one path",
            });
        }
        Ok(Self {
            model,
            gamma,
            dt,
            n_paths,
            seed,
            t_cap: Self::DEFAULT_CAP_FACTOR / gamma.get(),
        })
    }

    pub fn with_t_cap(mut self, t_cap: f64) -> Result<Self> {
        if !(t_cap >= Self::MIN_CAP_FACTOR / self.gamma() && t_cap.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t_cap",
                value: t_cap,
                reason: "cap must be finite and at least 10/gamma",
            });
        }
        self.t_cap = t_cap;
        Ok(self)
    }

    pub fn with_n_paths(mut self, n_paths: u64) -> Result<Self> {
        if n_paths == 0 {
            return Err(Error::InvalidParameter {
                name: "n_paths",
                value: 0.0,
                reason: "need at least one path",
            });
        }
        self.n_paths = n_paths;
        Ok(self)
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.get()
    }

    pub fn killing_rate(&self) -> KillingRate {
        self.gamma
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_paths(&self) -> u64 {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn t_cap(&self) -> f64 {
        self.t_cap
    }

    fn check_index(&self, index: u64) -> Result<()> {
        if index < self.n_paths {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "path index {index} >= n_paths {}",
                self.n_paths
            )))
        }
    }
}

/// A killed path on the grid `0, dt, …, T ∧ t_cap` (the last cell is short).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    times: Vec<f64>,
    values: Vec<f64>,
    kill_time: f64,
    truncated: bool,
}

impl SamplePath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, kill_time: f64) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Domain(
                "path needs matching, non-empty times and values".into(),
            ));
        }
        if times[0] != 0.0 || values[0] != 0.0 {
            return Err(Error::Domain("path must start at (0, 0)".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("times must be strictly increasing".into()));
        }
        if !(kill_time >= times[times.len() - 1]) {
            return Err(Error::Domain(
                "kill time precedes the last grid time".into(),
            ));
        }
        Ok(Self {
            times,
            values,
            kill_time,
            truncated: false,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kill_time(&self) -> f64 {
        self.kill_time
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn segment(&self, from: usize, to: usize, base: f64) -> Segment {
        let t0 = self.times[from];
        Segment {
            start: t0,
            times: self.times[from..=to].iter().map(|t| t - t0).collect(),
            values: self.values[from..=to].iter().map(|v| v - base).collect(),
        }
    }
}

/// A slice of a path re-based to start at time 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segment {
    /// Time in the original path at which the segment starts.
    pub start: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// Path decomposition at `H_S` and `H_I`. Values keep the original levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub pre_hs: Segment,
    pub post_hs: Segment,
    pub post_hi: Segment,
    /// `X` on `[H_I, H_S]`, present when `H_I < H_S`.
    pub intermediate: Option<Segment>,
}

fn collect_path(cfg: &SimConfig, index: u64, level: Option<f64>) -> SamplePath {
    let mut times = Vec::new();
    let mut values = Vec::new();
    let end = walk::walk(cfg, index, |t, x| {
        times.push(t);
        values.push(x);
        match level {
            Some(b) if x > b => ControlFlow::Break(()),
            _ => ControlFlow::Continue(()),
        }
    });
    SamplePath {
        times,
        values,
        kill_time: end.kill_time,
        truncated: end.truncated,
    }
}

/// Path `path_index` of the batch, up to `T ∧ t_cap`.
pub fn simulate_path(cfg: &SimConfig, path_index: u64) -> Result<SamplePath> {
    cfg.check_index(path_index)?;
    Ok(collect_path(cfg, path_index, None))
}

/// The same path as [`simulate_path`], stopped at the first grid point above
/// `level` if that comes before `T`.
pub fn simulate_path_until(cfg: &SimConfig, path_index: u64, level: f64) -> Result<SamplePath> {
    cfg.check_index(path_index)?;
    Ok(collect_path(cfg, path_index, Some(level)))
}

/// Single pass over the grid values; `rho` needs a level `b`.
pub fn extremes_of(path: &SamplePath, b: Option<f64>) -> PathExtremes {
    let mut acc = ExtremesAccumulator::new(b);
    for (&t, &x) in path.times.iter().zip(&path.values) {
        acc.push(t, x);
    }
    acc.finish(path.kill_time, path.truncated)
}

fn check_strides(strides: &[usize]) -> Result<()> {
    if strides.first() != Some(&1) || strides.contains(&0) {
        return Err(Error::Domain(format!(
            "strides must start with 1 and be >= 1, got {strides:?}"
        )));
    }
    Ok(())
}

/// Extremes of path `path_index` observed on the grid and on the coarser
/// grids given by `strides` (which start with 1), without storing the path.
/// Stride `s` sees every `s`-th point plus the final one.
pub fn path_extremes(
    cfg: &SimConfig,
    path_index: u64,
    level: Option<f64>,
    strides: &[usize],
) -> Result<Vec<PathExtremes>> {
    cfg.check_index(path_index)?;
    check_strides(strides)?;
    Ok(strided_extremes(cfg, path_index, level, strides))
}

fn strided_extremes(
    cfg: &SimConfig,
    path_index: u64,
    level: Option<f64>,
    strides: &[usize],
) -> Vec<PathExtremes> {
    let mut acc = StridedExtremes::new(level, strides);
    let end = walk::walk(cfg, path_index, |t, x| {
        acc.push(t, x);
        ControlFlow::Continue(())
    });
    acc.finish(end.kill_time, end.truncated)
}

/// [`path_extremes`] for the whole batch, in path order.
pub fn simulate_extremes(
    cfg: &SimConfig,
    level: Option<f64>,
    strides: &[usize],
    workers: Option<usize>,
) -> Result<Vec<Vec<PathExtremes>>> {
    check_strides(strides)?;
    par_map(cfg.n_paths(), workers, |i| {
        strided_extremes(cfg, i, level, strides)
    })
}

pub fn decompose_at_extremes(path: &SamplePath, extremes: &PathExtremes) -> Decomposition {
    let ix = extremes.index;
    let last = ix.last.min(path.len() - 1);
    Decomposition {
        pre_hs: path.segment(0, ix.h_sup, 0.0),
        post_hs: path.segment(ix.h_sup, last, 0.0),
        post_hi: path.segment(ix.h_inf, last, 0.0),
        intermediate: (ix.h_inf < ix.h_sup).then(|| path.segment(ix.h_inf, ix.h_sup, 0.0)),
    }
}

/// `X_{ρ+t} − X_ρ` for `0 ≤ t ≤ τ_b⁺ − ρ`, when the level was crossed.
pub fn post_rho_segment(path: &SamplePath, extremes: &PathExtremes) -> Option<Segment> {
    let (rho, tau) = extremes.index.crossing?;
    Some(path.segment(rho, tau, path.values[rho]))
}

/// Unkilled walk of `model` (typically an Esscher tilt) run to its first grid
/// value at or above `level`: `(τ, min_{[0,τ]} X)`, or `None` past `t_max`.
/// Streams are disjoint from the primary paths of `seed`.
pub fn first_passage_reference(
    model: &LevyModel,
    dt: f64,
    seed: u64,
    index: u64,
    level: f64,
    t_max: f64,
) -> Option<(f64, f64)> {
    let rng = PathRng::new(derive_seed(seed, DOMAIN_TILTED), index);
    match walk::first_passage(model, dt, rng, level, t_max) {
        (Some(tau), min) => Some((tau, min)),
        (None, _) => None,
    }
}

/// Raw dump, one row per path:
/// `seed_index,T,S,I,HS,HI,Mloss,Mgain,rho,truncated`.
pub fn write_sample_csv(
    cfg: &SimConfig,
    level: Option<f64>,
    workers: Option<usize>,
    path: &Path,
) -> Result<()> {
    let rows = simulate_extremes(cfg, level, &[1], workers)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "seed_index,T,S,I,HS,HI,Mloss,Mgain,rho,truncated")?;
        for (i, row) in rows.iter().enumerate() {
            let e = &row[0];
            let rho = e.rho.map(|r| r.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{i},{},{},{},{},{},{},{},{rho},{}",
                e.kill_time, e.sup, e.inf, e.h_sup, e.h_inf, e.max_loss, e.max_gain, e.truncated
            )?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
