//! Named verification experiments: each one simulates (or integrates),
//! evaluates the matching analytic law and reports the gap per grid point.
//!
//! A [`Runner`] keeps the path batches it has simulated. Specs that agree on
//! model, `γ`, `dt`, seed, cap, level and strides share one batch, and a
//! smaller `n_paths` reuses its prefix; because every path depends only on
//! `(seed, index)` this changes nothing but the runtime.

mod experiments;
mod report;
mod spec;

use std::sync::Arc;
use std::time::Instant;

pub use report::{emit_report, Check, ExperimentReport, Relation, ReportRow, CSV_HEADER};
pub use spec::{default_spec, default_specs, ExperimentKind, ExperimentSpec, ParamGrid};

use crate::error::Result;
use crate::levy_model::LevyModel;
use crate::simulator::{simulate_extremes, PathExtremes, SimConfig};

type Batch = Arc<Vec<Vec<PathExtremes>>>;

#[derive(Debug, Clone, PartialEq)]
struct BatchKey {
    model: LevyModel,
    gamma: f64,
    dt: f64,
    seed: u64,
    t_cap: f64,
    level: Option<f64>,
    strides: Vec<usize>,
}

/// Runs experiments, sharing simulated batches between them.
#[derive(Debug, Default)]
pub struct Runner {
    workers: Option<usize>,
    batches: Vec<(BatchKey, Batch)>,
}

impl Runner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fixes the worker count instead of reading `LEVYFLUCT_WORKERS`.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn workers(&self) -> Option<usize> {
        self.workers
    }

    pub fn clear_cache(&mut self) {
        self.batches.clear();
    }

    pub fn run(&mut self, spec: &ExperimentSpec) -> Result<ExperimentReport> {
        spec.validate()?;
        let start = Instant::now();
        let mut report = ExperimentReport::new(spec);
        match spec.name {
            ExperimentKind::ScaleSelftest => experiments::scale_selftest(spec, &mut report, start)?,
            ExperimentKind::JointLaw => experiments::joint_law(self, spec, &mut report)?,
            ExperimentKind::SupMarginal => experiments::sup_marginal(self, spec, &mut report)?,
            ExperimentKind::PostInfSup => experiments::post_inf_sup(self, spec, &mut report)?,
            ExperimentKind::MaxLossPostSup => {
                experiments::max_loss_post_sup(self, spec, &mut report)?
            }
            ExperimentKind::EsscherPresup => experiments::esscher_presup(self, spec, &mut report)?,
            ExperimentKind::PostRhoSde => experiments::post_rho_sde(self, spec, &mut report)?,
            ExperimentKind::PathInvariants => {
                experiments::path_invariants(self, spec, &mut report)?
            }
        }
        report.runtime_secs = start.elapsed().as_secs_f64();
        Ok(report)
    }

    /// Extremes of the first `cfg.n_paths()` paths (the returned batch may be
    /// longer).
    fn batch(&mut self, cfg: &SimConfig, level: Option<f64>, strides: &[usize]) -> Result<Batch> {
        let key = BatchKey {
            model: *cfg.model(),
            gamma: cfg.gamma(),
            dt: cfg.dt(),
            seed: cfg.seed(),
            t_cap: cfg.t_cap(),
            level,
            strides: strides.to_vec(),
        };
        if let Some((_, batch)) = self
            .batches
            .iter()
            .find(|(k, b)| *k == key && b.len() as u64 >= cfg.n_paths())
        {
            return Ok(batch.clone());
        }
        let batch = Arc::new(simulate_extremes(cfg, level, strides, self.workers)?);
        self.batches.retain(|(k, _)| *k != key);
        self.batches.push((key, batch.clone()));
        Ok(batch)
    }
}

/// Runs one experiment with a fresh [`Runner`].
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    Runner::new().run(spec)
}
