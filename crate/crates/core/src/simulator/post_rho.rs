//! The process after the last exit from the infimum, `Z_t = X_{ρ+t} − X_ρ`,
//! simulated directly from its stochastic equation.
//!
//! On `{τ_b⁺ ≤ T}` the post-`ρ` process is the killed process conditioned to
//! stay positive, i.e. the Doob transform with the `γ`-harmonic function
//! `W = W^{(γ)}`. Its generator is
//!
//! ```text
//! μ f' + σ²/2 f'' + σ² (W'/W) f' + ∫ (f(z+y) − f(z)) W(z+y)/W(z) Π(dy)
//! ```
//!
//! so the drift gains `σ²W'/W` and jumps from `Π` survive with probability
//! `W(z+y)/W(z)` (zero when they would cross 0). The law does not depend on
//! the target level: the level only stops the path.
//!
//! `0` is an entrance boundary with drift `~ σ²/z`, so the scheme starts at
//! `eps` and refines Euler steps by Brownian bridge halving until
//! `h ≤ 0.01·z²/σ²`; a step that would cross 0 is halved again, and a path
//! that still crosses after the maximum depth is discarded.

use std::ops::ControlFlow;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::rng::{derive_seed, PathRng, DOMAIN_POST_RHO};
use super::{Segment, SimConfig};
use crate::error::{Error, Result};
use crate::levy_model::JumpSpec;
use crate::scale::ScaleEvaluator;

const FINE_STEP: f64 = 0.01;
const MAX_DEPTH: u32 = 40;

struct Candidate {
    time: f64,
    size: f64,
    u: f64,
}

struct Sde<'a> {
    ev: &'a ScaleEvaluator,
    mu: f64,
    sigma: f64,
    sigma2: f64,
    jumps: Option<(f64, f64)>,
    next_jump: f64,
    candidates: Vec<Candidate>,
    cursor: usize,
    rng: PathRng,
}

impl<'a> Sde<'a> {
    fn new(ev: &'a ScaleEvaluator, mut rng: PathRng) -> Self {
        let model = ev.model();
        let jumps = match model.jumps() {
            JumpSpec::CpExp { rate, eta } if rate > 0.0 => Some((rate, eta)),
            _ => None,
        };
        let next_jump = match jumps {
            Some((rate, _)) => rng.jumps.sample::<f64, _>(Exp1) / rate,
            None => f64::INFINITY,
        };
        Self {
            ev,
            mu: model.drift(),
            sigma: model.sigma(),
            sigma2: model.sigma() * model.sigma(),
            jumps,
            next_jump,
            candidates: Vec::new(),
            cursor: 0,
            rng,
        }
    }

    fn drift(&self, z: f64) -> f64 {
        let x = z.min(self.ev.x_max());
        self.mu + self.sigma2 * self.ev.log_derivative_unchecked(x)
    }

    // W(z+y)/W(z), y < 0
    fn survival(&self, z: f64, y: f64) -> f64 {
        let u = z + y;
        if u <= 0.0 {
            return 0.0;
        }
        (self.ev.phi() * y).exp() * self.ev.damped_w_clamped(u) / self.ev.damped_w_clamped(z)
    }

    fn draw_candidates(&mut self, t1: f64) {
        self.candidates.clear();
        self.cursor = 0;
        if let Some((rate, eta)) = self.jumps {
            while self.next_jump <= t1 {
                let size = -self.rng.jumps.sample::<f64, _>(Exp1) / eta;
                let u: f64 = self.rng.jumps.random();
                self.candidates.push(Candidate {
                    time: self.next_jump,
                    size,
                    u,
                });
                self.next_jump += self.rng.jumps.sample::<f64, _>(Exp1) / rate;
            }
        }
    }

    fn apply_jumps(&mut self, z: &mut f64, t_end: f64) {
        while let Some(c) = self.candidates.get(self.cursor) {
            if c.time > t_end {
                break;
            }
            if c.u < self.survival(*z, c.size) {
                *z += c.size;
            }
            self.cursor += 1;
        }
    }

    // Advances over (t0, t0+h] given the Brownian increment `db`; false if
    // the path has to be discarded.
    fn advance(&mut self, z: &mut f64, t0: f64, h: f64, db: f64, depth: u32) -> bool {
        let z0 = *z;
        let coarse = h * self.sigma2 > FINE_STEP * z0 * z0;
        if !coarse || depth >= MAX_DEPTH {
            let next = z0 + self.drift(z0) * h + self.sigma * db;
            if next > 0.0 {
                *z = next;
                self.apply_jumps(z, t0 + h);
                return true;
            }
            if depth >= MAX_DEPTH {
                return false;
            }
        }
        let half = 0.5 * h;
        let n: f64 = self.rng.aux.sample(StandardNormal);
        let db1 = 0.5 * db + 0.5 * h.sqrt() * n;
        self.advance(z, t0, half, db1, depth + 1)
            && self.advance(z, t0 + half, half, db - db1, depth + 1)
    }
}

fn check_args(ev: &ScaleEvaluator, cfg: &SimConfig, level: f64, eps: f64) -> Result<()> {
    if ev.model() != cfg.model() || ev.gamma() != cfg.gamma() {
        return Err(Error::Domain(
            "scale evaluator and simulation config describe different models".into(),
        ));
    }
    if !(level > 0.0 && level <= ev.x_max()) {
        return Err(Error::Domain(format!(
            "level must lie in (0, x_max = {}], got {level}",
            ev.x_max()
        )));
    }
    if !(eps > 0.0 && eps < level) {
        return Err(Error::Domain(format!(
            "start eps must lie in (0, level), got {eps}"
        )));
    }
    Ok(())
}

/// Drives one path, feeding grid points `(k·dt, Z)` to `visit` until it
/// breaks, `Z` exceeds `level` or `t_cap` is reached. `Ok(false)` means the
/// path was discarded.
fn run<F>(
    ev: &ScaleEvaluator,
    cfg: &SimConfig,
    level: f64,
    eps: f64,
    index: u64,
    mut visit: F,
) -> Result<bool>
where
    F: FnMut(f64, f64) -> ControlFlow<()>,
{
    check_args(ev, cfg, level, eps)?;
    let mut sde = Sde::new(
        ev,
        PathRng::new(derive_seed(cfg.seed(), DOMAIN_POST_RHO), index),
    );
    let dt = cfg.dt();
    let sqrt_dt = dt.sqrt();
    let mut z = eps;
    if visit(0.0, z).is_break() {
        return Ok(true);
    }
    for k in 1u64.. {
        let t0 = (k - 1) as f64 * dt;
        let t1 = k as f64 * dt;
        if t1 > cfg.t_cap() {
            break;
        }
        let db = sqrt_dt * sde.rng.main.sample::<f64, _>(StandardNormal);
        sde.draw_candidates(t1);
        if !sde.advance(&mut z, t0, dt, db, 0) {
            return Ok(false);
        }
        sde.apply_jumps(&mut z, f64::INFINITY);
        if visit(t1, z).is_break() || z > level {
            break;
        }
    }
    Ok(true)
}

/// Simulates the post-`ρ` process from `Z₀ = eps` until it first exceeds
/// `level` (or `t_cap`). `None` if the path had to be discarded.
pub fn simulate_post_rho(
    ev: &ScaleEvaluator,
    cfg: &SimConfig,
    level: f64,
    eps: f64,
    path_index: u64,
) -> Result<Option<Segment>> {
    let mut seg = Segment::default();
    let kept = run(ev, cfg, level, eps, path_index, |t, z| {
        seg.times.push(t);
        seg.values.push(z);
        ControlFlow::Continue(())
    })?;
    Ok(kept.then_some(seg))
}

/// `Z` at grid time `t_eval` on the path stopped at `level`: `level` itself
/// if the path exceeded it by then. `None` if the path was discarded.
pub fn post_rho_stopped_value(
    ev: &ScaleEvaluator,
    cfg: &SimConfig,
    level: f64,
    eps: f64,
    path_index: u64,
    t_eval: f64,
) -> Result<Option<f64>> {
    let target = (t_eval / cfg.dt()).round() as u64;
    let mut k = 0u64;
    let mut value = None;
    let kept = run(ev, cfg, level, eps, path_index, |_, z| {
        if z > level {
            value = Some(level);
        } else if k >= target {
            value = Some(z);
        }
        k += 1;
        if value.is_some() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    Ok(if kept { value } else { None })
}
