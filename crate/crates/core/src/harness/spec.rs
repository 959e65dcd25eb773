use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_model::{KillingRate, LevyModel};
use crate::simulator::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ScaleSelftest,
    JointLaw,
    SupMarginal,
    PostInfSup,
    MaxLossPostSup,
    EsscherPresup,
    PostRhoSde,
    PathInvariants,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ScaleSelftest => "scale_selftest",
            Self::JointLaw => "joint_law",
            Self::SupMarginal => "sup_marginal",
            Self::PostInfSup => "post_inf_sup",
            Self::MaxLossPostSup => "max_loss_post_sup",
            Self::EsscherPresup => "esscher_presup",
            Self::PostRhoSde => "post_rho_sde",
            Self::PathInvariants => "path_invariants",
        }
    }

    /// Tolerance keys the experiment reads from `tolerances`.
    pub fn tolerance_keys(self) -> &'static [&'static str] {
        match self {
            Self::ScaleSelftest => &[
                "laplace_rel",
                "z_identity_rel",
                "closed_vs_inversion_rel",
                "runtime_s",
            ],
            Self::JointLaw | Self::PostInfSup | Self::MaxLossPostSup => &["gap"],
            Self::SupMarginal => &["ks", "mean_rel"],
            Self::EsscherPresup | Self::PostRhoSde => &["ks"],
            Self::PathInvariants => &["violations"],
        }
    }

    fn simulates(self) -> bool {
        self != Self::ScaleSelftest
    }
}

/// Parameter grid; each experiment reads the lists it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamGrid {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
    pub gamma: Vec<f64>,
}

fn default_x_max() -> f64 {
    40.0
}
fn default_h_grid() -> f64 {
    crate::scale::DEFAULT_H_GRID
}
fn default_min_bin_count() -> usize {
    500
}
fn default_strides() -> Vec<usize> {
    vec![1]
}
fn default_t_eval() -> f64 {
    0.25
}
fn default_reference_per_path() -> usize {
    4
}

/// One verification experiment. See `docs/experiment-spec.md` for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: ExperimentKind,
    /// Identifier used for output files; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub model: LevyModel,
    pub gamma: f64,
    #[serde(default)]
    pub dt: f64,
    #[serde(default)]
    pub n_paths: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_cap: Option<f64>,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_h_grid")]
    pub h_grid: f64,
    #[serde(default)]
    pub grid: ParamGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_b: Option<f64>,
    #[serde(default = "default_min_bin_count")]
    pub min_bin_count: usize,
    /// Grid strides for the coupled `dt`-refinement study; starts with 1.
    #[serde(default = "default_strides")]
    pub dt_strides: Vec<usize>,
    /// Upper level for the post-`ρ` experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default = "default_t_eval")]
    pub t_eval: f64,
    /// Start points of the post-`ρ` SDE as multiples of `level`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps_factors: Vec<f64>,
    /// Number of SDE paths per start point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_reference: Option<u64>,
    /// Tilted reference walks per conditioned path.
    #[serde(default = "default_reference_per_path")]
    pub reference_per_path: usize,
    pub tolerances: BTreeMap<String, f64>,
}

fn spec_err(msg: impl Into<String>) -> Error {
    Error::Spec(msg.into())
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serialises")
    }

    pub fn id(&self) -> &str {
        self.label.as_deref().unwrap_or(self.name.as_str())
    }

    pub fn tolerance(&self, key: &str) -> Result<f64> {
        self.tolerances
            .get(key)
            .copied()
            .ok_or_else(|| spec_err(format!("{}: missing tolerance `{key}`", self.id())))
    }

    pub fn killing_rate(&self) -> Result<KillingRate> {
        KillingRate::new(self.gamma)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let cfg = SimConfig::new(
            self.model,
            self.killing_rate()?,
            self.dt,
            self.n_paths,
            self.seed,
        )?;
        match self.t_cap {
            Some(cap) => cfg.with_t_cap(cap),
            None => Ok(cfg),
        }
    }

    fn require(&self, what: &str, values: &[f64]) -> Result<()> {
        if values.is_empty() {
            Err(spec_err(format!(
                "{}: grid.{what} must not be empty",
                self.id()
            )))
        } else if values.iter().any(|v| !v.is_finite()) {
            Err(spec_err(format!(
                "{}: grid.{what} has non-finite entries",
                self.id()
            )))
        } else {
            Ok(())
        }
    }

    fn delta(&self, name: &str, value: Option<f64>) -> Result<f64> {
        match value {
            Some(d) if d > 0.0 && d.is_finite() => Ok(d),
            _ => Err(spec_err(format!("{}: {name} must be > 0", self.id()))),
        }
    }

    fn within(&self, what: &str, x: f64) -> Result<()> {
        if x > self.x_max {
            Err(spec_err(format!(
                "{}: {what} = {x} exceeds x_max = {}",
                self.id(),
                self.x_max
            )))
        } else {
            Ok(())
        }
    }

    /// Structural checks; numerical preconditions are checked again where used.
    pub fn validate(&self) -> Result<()> {
        let id = self.id();
        self.killing_rate()?;
        if !(self.x_max > 0.0 && self.h_grid > 0.0 && self.h_grid < self.x_max) {
            return Err(spec_err(format!("{id}: need 0 < h_grid < x_max")));
        }
        for key in self.name.tolerance_keys() {
            self.tolerance(key)?;
        }
        if self.name.simulates() {
            self.sim_config()?;
            if self.dt_strides.first() != Some(&1) || self.dt_strides.contains(&0) {
                return Err(spec_err(format!("{id}: dt_strides must start with 1")));
            }
        }
        match self.name {
            ExperimentKind::ScaleSelftest => {
                for &g in &self.grid.gamma {
                    KillingRate::new(g)?;
                }
            }
            ExperimentKind::JointLaw => {
                self.require("a", &self.grid.a)?;
                self.require("b", &self.grid.b)?;
                for &a in &self.grid.a {
                    for &b in &self.grid.b {
                        if !(a < 0.0 && b > 0.0) {
                            return Err(spec_err(format!("{id}: need a < 0 < b, got ({a}, {b})")));
                        }
                        self.within("b - a", b - a)?;
                    }
                }
            }
            ExperimentKind::SupMarginal => {
                self.require("b", &self.grid.b)?;
            }
            ExperimentKind::PostInfSup => {
                self.require("a", &self.grid.a)?;
                self.require("b", &self.grid.b)?;
                let da = self.delta("delta_a", self.delta_a)?;
                for &a in &self.grid.a {
                    for &b in &self.grid.b {
                        if !(b > a + da) {
                            return Err(spec_err(format!(
                                "{id}: need b > a + delta_a, got a={a}, b={b}"
                            )));
                        }
                        self.within("b - a + delta_a", b - a + da)?;
                    }
                }
            }
            ExperimentKind::MaxLossPostSup => {
                self.require("a", &self.grid.a)?;
                self.require("b", &self.grid.b)?;
                self.require("d", &self.grid.d)?;
                let da = self.delta("delta_a", self.delta_a)?;
                let db = self.delta("delta_b", self.delta_b)?;
                for &a in &self.grid.a {
                    for &b in &self.grid.b {
                        let narrowest = b - a - da - db;
                        for &d in &self.grid.d {
                            if !(d > 0.0 && d < narrowest) {
                                return Err(spec_err(format!(
                                    "{id}: need 0 < d < b - a - delta_a - delta_b, got d={d} for a={a}, b={b}"
                                )));
                            }
                        }
                        self.within("b - a + delta_a + delta_b", b - a + da + db)?;
                    }
                }
            }
            ExperimentKind::EsscherPresup => {
                self.require("b", &self.grid.b)?;
                let db = self.delta("delta_b", self.delta_b)?;
                if self.grid.b.iter().any(|&b| b <= db) {
                    return Err(spec_err(format!("{id}: need b > delta_b")));
                }
                if self.reference_per_path == 0 {
                    return Err(spec_err(format!("{id}: reference_per_path must be >= 1")));
                }
            }
            ExperimentKind::PostRhoSde => {
                let level = self
                    .level
                    .ok_or_else(|| spec_err(format!("{id}: missing level")))?;
                if !(level > 0.0) {
                    return Err(spec_err(format!("{id}: level must be > 0")));
                }
                self.within("level", level)?;
                if self.eps_factors.is_empty()
                    || self.eps_factors.iter().any(|&f| !(f > 0.0 && f < 1.0))
                {
                    return Err(spec_err(format!(
                        "{id}: eps_factors must be non-empty and in (0, 1)"
                    )));
                }
                if !matches!(self.n_reference, Some(n) if n > 0) {
                    return Err(spec_err(format!("{id}: n_reference must be >= 1")));
                }
                if !(self.t_eval > 0.0) {
                    return Err(spec_err(format!("{id}: t_eval must be > 0")));
                }
            }
            ExperimentKind::PathInvariants => {}
        }
        Ok(())
    }
}

macro_rules! shipped {
    ($($file:literal),* $(,)?) => {
        &[$(($file, include_str!(concat!("../../specs/", $file, ".json")))),*]
    };
}

const SHIPPED: &[(&str, &str)] = shipped!(
    "scale_selftest_bm",
    "scale_selftest_cpexp",
    "joint_law",
    "sup_marginal",
    "post_inf_sup",
    "max_loss_post_sup",
    "esscher_presup",
    "post_rho_sde",
    "post_rho_sde_cpexp",
    "path_invariants_bm",
    "path_invariants_cpexp",
);

/// The shipped experiment specs, which together form the acceptance suite.
pub fn default_specs() -> Vec<ExperimentSpec> {
    SHIPPED
        .iter()
        .map(|(file, text)| {
            ExperimentSpec::from_json(text)
                .unwrap_or_else(|e| panic!("shipped spec {file} is invalid: {e}"))
        })
        .collect()
}

/// Shipped spec by id (its label, or its kind when unlabelled).
pub fn default_spec(id: &str) -> Option<ExperimentSpec> {
    default_specs().into_iter().find(|s| s.id() == id)
}
