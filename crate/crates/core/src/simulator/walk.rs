use std::ops::ControlFlow;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::rng::PathRng;
use super::SimConfig;
use crate::levy_model::{JumpSpec, LevyModel};

/// Exact increments of the model over consecutive cells: Gaussian part plus
/// compound Poisson jumps whose arrival falls in the cell.
pub(crate) struct Stepper {
    drift: f64,
    sigma: f64,
    jumps: Option<(f64, f64)>,
    next_jump: f64,
    pub rng: PathRng,
}

impl Stepper {
    pub fn new(model: &LevyModel, mut rng: PathRng) -> Self {
        let jumps = match model.jumps() {
            JumpSpec::CpExp { rate, eta } if rate > 0.0 => Some((rate, eta)),
            _ => None,
        };
        // rate 0 never touches the jump stream, so it reproduces BM exactly
        let next_jump = match jumps {
            Some((rate, _)) => rng.jumps.sample::<f64, _>(Exp1) / rate,
            None => f64::INFINITY,
        };
        Self {
            drift: model.drift(),
            sigma: model.sigma(),
            jumps,
            next_jump,
            rng,
        }
    }

    pub fn exponential(&mut self, rate: f64) -> f64 {
        self.rng.main.sample::<f64, _>(Exp1) / rate
    }

    /// Increment over the cell `(t1 − h, t1]`.
    #[inline]
    pub fn increment(&mut self, h: f64, sqrt_h: f64, t1: f64) -> f64 {
        let z: f64 = self.rng.main.sample(StandardNormal);
        let mut dx = self.drift * h + self.sigma * sqrt_h * z;
        if let Some((rate, eta)) = self.jumps {
            while self.next_jump <= t1 {
                dx -= self.rng.jumps.sample::<f64, _>(Exp1) / eta;
                self.next_jump += self.rng.jumps.sample::<f64, _>(Exp1) / rate;
            }
        }
        dx
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct WalkEnd {
    pub kill_time: f64,
    /// The horizon was cut at `t_cap` before `T` and the walk got there.
    pub truncated: bool,
}

/// Generates the grid path `0, dt, 2dt, …, T ∧ t_cap` of path `index`,
/// feeding each point to `visit` until it breaks.
pub(crate) fn walk<F>(cfg: &SimConfig, index: u64, mut visit: F) -> WalkEnd
where
    F: FnMut(f64, f64) -> ControlFlow<()>,
{
    let mut st = Stepper::new(cfg.model(), PathRng::new(cfg.seed(), index));
    let kill_time = st.exponential(cfg.gamma());
    let horizon = kill_time.min(cfg.t_cap());
    let mut end = WalkEnd {
        kill_time,
        truncated: false,
    };
    let dt = cfg.dt();
    let sqrt_dt = dt.sqrt();
    if visit(0.0, 0.0).is_break() {
        return end;
    }
    let (mut t, mut x, mut k) = (0.0, 0.0, 1u64);
    loop {
        let next = k as f64 * dt;
        if next >= horizon {
            let h = horizon - t;
            x += st.increment(h, h.sqrt(), horizon);
            let _ = visit(horizon, x);
            end.truncated = kill_time > cfg.t_cap();
            return end;
        }
        x += st.increment(dt, sqrt_dt, next);
        t = next;
        k += 1;
        if visit(t, x).is_break() {
            return end;
        }
    }
}

/// Unkilled walk on the grid until it first reaches `level` (value ≥ level).
/// Returns the passage time, if before `t_max`, and the running minimum.
pub(crate) fn first_passage(
    model: &LevyModel,
    dt: f64,
    rng: PathRng,
    level: f64,
    t_max: f64,
) -> (Option<f64>, f64) {
    let mut st = Stepper::new(model, rng);
    let sqrt_dt = dt.sqrt();
    let (mut x, mut min, mut k) = (0.0f64, 0.0f64, 1u64);
    loop {
        let t = k as f64 * dt;
        if t > t_max {
            return (None, min);
        }
        x += st.increment(dt, sqrt_dt, t);
        min = min.min(x);
        if x >= level {
            return (Some(t), min);
        }
        k += 1;
    }
}
