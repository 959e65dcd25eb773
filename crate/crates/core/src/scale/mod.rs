//! `γ`-scale functions `W^(γ)`, `Z^(γ)` and their first derivatives.
//!
//! Internally the evaluator never stores `W` or `Z` themselves, which grow
//! like `e^{Φx}`. It keeps three bounded functions instead:
//!
//! - `g(x) = e^{−Φx} W(x)`, nondecreasing, tends to `1/ψ'(Φ)`;
//! - `q(x) = W'(x) − Φ W(x)`, nonnegative, decays to 0;
//! - `k(x) = Z(x) − (γ/Φ) W(x) = E_x[e^{−γτ₀⁻}]`, decreasing from 1 to 0.
//!
//! Every fluctuation identity can be written as a combination of these with
//! bounded coefficients, which avoids the cancellation between huge `Z` and
//! `W` values at large arguments. With `D(s) = (ψ(s) − ψ(Φ))/(s − Φ)` their
//! transforms are
//!
//! ```text
//! ĝ(s) = 1 / (s·D(s + Φ))
//! q̂(s) = 1 / D(s)
//! k̂(s) = (σ²/2 + rate/((η + s)(η + Φ))) / D(s)
//! ```
//!
//! all analytic on `Re s > 0`.

mod inversion;

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::levy_model::{JumpSpec, KillingRate, LevyModel};

pub use inversion::{EulerInverter, EulerParams};

pub const DEFAULT_H_GRID: f64 = 1e-3;

/// Absolute accuracy required of the inverted damped functions.
pub const INVERSION_TARGET: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMethod {
    ClosedForm,
    Inversion,
}

#[derive(Debug, Clone)]
struct BrownianClosedForm {
    // negative root of ψ(λ) = γ
    lambda_minus: f64,
    // 2/σ²
    w0_slope: f64,
}

/// Node values and slopes of one cubic Hermite interpolant.
#[derive(Debug, Clone, Default)]
struct Hermite {
    value: Vec<f64>,
    slope: Vec<f64>,
}

impl Hermite {
    fn eval(&self, h: f64, i: usize, t: f64) -> f64 {
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.value[i]
            + h10 * h * self.slope[i]
            + h01 * self.value[i + 1]
            + h11 * h * self.slope[i + 1]
    }

    /// Fritsch–Carlson limiter: shrinks slopes so each cell is monotone
    /// whenever the node data are.
    fn limit_monotone(&mut self, h: f64) {
        for i in 0..self.value.len() - 1 {
            let secant = (self.value[i + 1] - self.value[i]) / h;
            if secant == 0.0 {
                self.slope[i] = 0.0;
                self.slope[i + 1] = 0.0;
                continue;
            }
            let alpha = self.slope[i] / secant;
            let beta = self.slope[i + 1] / secant;
            if alpha < 0.0 {
                self.slope[i] = 0.0;
            }
            if beta < 0.0 {
                self.slope[i + 1] = 0.0;
            }
            let r2 = alpha * alpha + beta * beta;
            if r2 > 9.0 {
                let tau = 3.0 / r2.sqrt();
                self.slope[i] = tau * alpha * secant;
                self.slope[i + 1] = tau * beta * secant;
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Grid {
    h: f64,
    g: Hermite,
    q: Hermite,
    k: Hermite,
}

impl Grid {
    fn locate(&self, x: f64) -> (usize, f64) {
        let last = self.g.value.len() - 2;
        let pos = x / self.h;
        let i = (pos.floor() as usize).min(last);
        (i, pos - i as f64)
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Closed(BrownianClosedForm),
    Grid(Grid),
}

/// Evaluator for `W^(γ)`, `Z^(γ)` and their derivatives for one model and
/// killing rate, on `[0, x_max]`. Immutable after [`ScaleEvaluator::build`].
#[derive(Debug, Clone)]
pub struct ScaleEvaluator {
    model: LevyModel,
    gamma: f64,
    phi: f64,
    method: ScaleMethod,
    x_max: f64,
    h_grid: f64,
    repr: Repr,
    // nodes of (g, q, k) kept for both methods: dumps and invariant checks
    nodes: Vec<[f64; 3]>,
    accuracy: f64,
}

impl ScaleEvaluator {
    /// Closed form for Brownian motion, inversion for every other model.
    pub fn build(model: &LevyModel, gamma: KillingRate, x_max: f64, h_grid: f64) -> Result<Self> {
        let method = if model.is_brownian() {
            ScaleMethod::ClosedForm
        } else {
            ScaleMethod::Inversion
        };
        Self::build_with_method(model, gamma, x_max, h_grid, method)
    }

    pub fn build_with_method(
        model: &LevyModel,
        gamma: KillingRate,
        x_max: f64,
        h_grid: f64,
        method: ScaleMethod,
    ) -> Result<Self> {
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "x_max",
                value: x_max,
                reason: "must be finite and > 0",
            });
        }
        if !(h_grid > 0.0 && h_grid < x_max) {
            return Err(Error::InvalidParameter {
                name: "h_grid",
                value: h_grid,
                reason: "must be in (0, x_max)",
            });
        }
        if method == ScaleMethod::ClosedForm && !model.is_brownian() {
            return Err(Error::Domain(
                "closed-form scale functions exist only for the Brownian catalog entry".into(),
            ));
        }
        let gamma = gamma.get();
        let phi = model.phi(gamma)?;
        let sigma2 = model.sigma() * model.sigma();
        let cells = (x_max / h_grid).ceil() as usize;
        let h = x_max / cells as f64;
        let xs = (0..=cells).map(|i| if i == cells { x_max } else { i as f64 * h });

        let (repr, nodes, accuracy) = match method {
            ScaleMethod::ClosedForm => {
                let closed = BrownianClosedForm {
                    lambda_minus: -2.0 * gamma / (sigma2 * phi),
                    w0_slope: 2.0 / sigma2,
                };
                let nodes = xs.map(|x| closed.primitives(phi, x)).collect();
                (Repr::Closed(closed), nodes, 0.0)
            }
            ScaleMethod::Inversion => {
                let (grid, nodes, accuracy) = invert_grid(model, gamma, phi, h, cells)?;
                (Repr::Grid(grid), nodes, accuracy)
            }
        };

        let ev = Self {
            model: *model,
            gamma,
            phi,
            method,
            x_max,
            h_grid: h,
            repr,
            nodes,
            accuracy,
        };
        ev.check_grid_invariants()?;
        Ok(ev)
    }

    fn check_grid_invariants(&self) -> Result<()> {
        let mut prev_w = 0.0;
        let mut prev_z = 1.0;
        for (i, node) in self.nodes.iter().enumerate() {
            let x = self.node_x(i);
            let w = (self.phi * x).exp() * node[0];
            let z = node[2] + self.gamma / self.phi * w;
            let tol = 1e-9 * w.abs().max(1.0);
            if w < -tol || w < prev_w - tol {
                return Err(Error::GridInvariant {
                    invariant: "W nonnegative and nondecreasing",
                    x,
                });
            }
            if z < prev_z - 1e-9 * z.abs().max(1.0) {
                return Err(Error::GridInvariant {
                    invariant: "Z nondecreasing",
                    x,
                });
            }
            prev_w = w;
            prev_z = z;
        }
        if self.nodes[0][0] != 0.0 || self.nodes[0][2] != 1.0 {
            return Err(Error::GridInvariant {
                invariant: "W(0) = 0 and Z(0) = 1",
                x: 0.0,
            });
        }
        Ok(())
    }

    fn node_x(&self, i: usize) -> f64 {
        if i + 1 == self.nodes.len() {
            self.x_max
        } else {
            i as f64 * self.h_grid
        }
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Cached `Φ(γ)`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn method(&self) -> ScaleMethod {
        self.method
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Effective grid spacing (`x_max` divided into whole cells).
    pub fn h_grid(&self) -> f64 {
        self.h_grid
    }

    /// Largest disagreement between the two inversion settings over the grid
    /// (0 for closed forms).
    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    /// Slack allowed when clamping derived probabilities to `[0, 1]`.
    pub fn probability_slack(&self) -> f64 {
        match self.method {
            ScaleMethod::ClosedForm => 1e-12,
            ScaleMethod::Inversion => 100.0 * INVERSION_TARGET,
        }
    }

    fn check_range(&self, x: f64) -> Result<()> {
        if x.is_nan() {
            return Err(Error::Domain("NaN argument".into()));
        }
        if x > self.x_max * (1.0 + 1e-12) {
            return Err(Error::OutOfRange {
                x,
                x_max: self.x_max,
            });
        }
        Ok(())
    }

    // (g, q, k) at 0 ≤ x ≤ x_max, unchecked
    fn primitives(&self, x: f64) -> [f64; 3] {
        let x = x.min(self.x_max);
        match &self.repr {
            Repr::Closed(c) => c.primitives(self.phi, x),
            Repr::Grid(grid) => {
                let (i, t) = grid.locate(x);
                [
                    grid.g.eval(grid.h, i, t),
                    grid.q.eval(grid.h, i, t),
                    grid.k.eval(grid.h, i, t),
                ]
            }
        }
    }

    /// `g(x) = e^{−Φx} W(x)`; zero for `x ≤ 0`.
    pub fn damped_w(&self, x: f64) -> Result<f64> {
        self.check_range(x)?;
        if x <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.primitives(x)[0])
    }

    /// `q(x) = W'(x) − Φ W(x)` for `x ≥ 0` (right limit at 0).
    pub fn w_prime_excess(&self, x: f64) -> Result<f64> {
        self.check_range(x)?;
        if x < 0.0 {
            return Err(Error::Domain(format!("W' excess needs x >= 0, got {x}")));
        }
        Ok(self.primitives(x)[1])
    }

    /// `k(x) = Z(x) − (γ/Φ) W(x) = E_x[e^{−γτ₀⁻}]`; 1 for `x ≤ 0`.
    pub fn one_sided_down(&self, x: f64) -> Result<f64> {
        self.check_range(x)?;
        if x <= 0.0 {
            return Ok(1.0);
        }
        Ok(self.primitives(x)[2])
    }

    /// `W^(γ)(x)`, extended by 0 on `x < 0`.
    pub fn w(&self, x: f64) -> Result<f64> {
        self.check_range(x)?;
        if x <= 0.0 {
            return Ok(0.0);
        }
        Ok((self.phi * x).exp() * self.primitives(x)[0])
    }

    /// `dW^(γ)/dx` for `0 < x ≤ x_max`.
    pub fn w_prime(&self, x: f64) -> Result<f64> {
        self.check_range(x)?;
        if x <= 0.0 {
            return Err(Error::Domain(format!(
                "W' is only evaluated at x > 0, got {x}"
            )));
        }
        let [g, q, _] = self.primitives(x);
        Ok(q + self.phi * (self.phi * x).exp() * g)
    }

    /// `Z^(γ)(x) = 1 + γ ∫_0^x W^(γ)`, equal to 1 on `x ≤ 0`.
    pub fn z(&self, x: f64) -> Result<f64> {
        self.check_range(x)?;
        if x <= 0.0 {
            return Ok(1.0);
        }
        let [g, _, k] = self.primitives(x);
        Ok(k + self.gamma / self.phi * (self.phi * x).exp() * g)
    }

    /// `Z'(x) = γ W(x)`.
    pub fn z_prime(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::Domain(format!("Z' is evaluated at x >= 0, got {x}")));
        }
        Ok(self.gamma * self.w(x)?)
    }

    /// `W(u)/W(v)` for `0 ≤ u ≤ v`, `v > 0`, computed without forming either
    /// factor.
    pub fn w_ratio(&self, u: f64, v: f64) -> Result<f64> {
        self.check_range(v)?;
        if !(v > 0.0) || u > v {
            return Err(Error::Domain(format!(
                "W ratio needs 0 <= u <= v, v > 0; got u={u}, v={v}"
            )));
        }
        if u <= 0.0 {
            return Ok(0.0);
        }
        let gu = self.primitives(u)[0];
        let gv = self.primitives(v)[0];
        Ok((self.phi * (u - v)).exp() * gu / gv)
    }

    /// `W'(x)/W(x)` for `x > 0`.
    pub fn log_derivative(&self, x: f64) -> Result<f64> {
        self.check_range(x)?;
        if !(x > 0.0) {
            return Err(Error::Domain(format!("W'/W needs x > 0, got {x}")));
        }
        Ok(self.log_derivative_unchecked(x))
    }

    pub(crate) fn log_derivative_unchecked(&self, x: f64) -> f64 {
        let [g, q, _] = self.primitives(x);
        self.phi + (-self.phi * x).exp() * q / g
    }

    /// `g(x)` with arguments above `x_max` clamped to `x_max`.
    pub(crate) fn damped_w_clamped(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.primitives(x)[0]
        }
    }

    /// Grid rows `(x, W, W', Z)`; `W'` at 0 is the right derivative `2/σ²`.
    pub fn grid_rows(&self) -> impl Iterator<Item = [f64; 4]> + '_ {
        self.nodes.iter().enumerate().map(move |(i, &[g, q, k])| {
            let x = self.node_x(i);
            let w = (self.phi * x).exp() * g;
            [x, w, q + self.phi * w, k + self.gamma / self.phi * w]
        })
    }

    /// Writes the grid as CSV with header `x,W,Wprime,Z`.
    pub fn write_grid_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(out, "x,W,Wprime,Z")?;
            for [x, w, wp, z] in self.grid_rows() {
                writeln!(out, "{x},{w},{wp},{z}")?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

impl BrownianClosedForm {
    fn primitives(&self, phi: f64, x: f64) -> [f64; 3] {
        if x <= 0.0 {
            return [0.0, self.w0_slope, 1.0];
        }
        let spread = phi - self.lambda_minus;
        let g = -self.w0_slope / spread * (-spread * x).exp_m1();
        let decay = (self.lambda_minus * x).exp();
        [g, self.w0_slope * decay, decay]
    }
}

/// Divided difference `(ψ(s) − ψ(c))/(s − c)` in closed form.
fn psi_divided_difference(model: &LevyModel, s: Complex64, c: f64) -> Complex64 {
    let sigma2 = model.sigma() * model.sigma();
    let gauss = (s + c) * (0.5 * sigma2) + model.drift();
    match model.jumps() {
        JumpSpec::None => gauss,
        JumpSpec::CpExp { rate, eta } => gauss - rate * eta / ((s + eta) * (eta + c)),
    }
}

/// Transforms of `(g, q, k)` at `s`.
fn primitive_transforms(model: &LevyModel, phi: f64, s: Complex64) -> [Complex64; 3] {
    let d = psi_divided_difference(model, s, phi);
    let d_shift = psi_divided_difference(model, s + phi, phi);
    let sigma2 = model.sigma() * model.sigma();
    let k_num = match model.jumps() {
        JumpSpec::None => Complex64::new(0.5 * sigma2, 0.0),
        JumpSpec::CpExp { rate, eta } => rate / ((s + eta) * (eta + phi)) + 0.5 * sigma2,
    };
    [1.0 / (s * d_shift), 1.0 / d, k_num / d]
}

fn invert_grid(
    model: &LevyModel,
    gamma: f64,
    phi: f64,
    h: f64,
    cells: usize,
) -> Result<(Grid, Vec<[f64; 3]>, f64)> {
    let primary = EulerInverter::new(EulerParams::PRIMARY);
    let check = EulerInverter::new(EulerParams::CHECK);
    let w0_slope = 2.0 / (model.sigma() * model.sigma());
    let scales = [1.0f64, w0_slope.max(1.0), 1.0];

    let mut nodes = Vec::with_capacity(cells + 1);
    nodes.push([0.0, w0_slope, 1.0]);
    let mut accuracy = 0.0f64;
    for i in 1..=cells {
        let x = if i == cells {
            h * cells as f64
        } else {
            i as f64 * h
        };
        let f = |s: Complex64| primitive_transforms(model, phi, s);
        let a = primary.invert_many(f, x);
        let b = check.invert_many(f, x);
        for j in 0..3 {
            let scale = scales[j].max(a[j].abs());
            let err = (a[j] - b[j]).abs() / scale;
            if !(err <= INVERSION_TARGET) {
                return Err(Error::InversionFailed { x, error: err });
            }
            accuracy = accuracy.max(err);
        }
        nodes.push(a);
    }

    let node = |j: usize| nodes.iter().map(|n| n[j]).collect::<Vec<_>>();
    let g_values = node(0);
    let q_values = node(1);
    let k_values = node(2);

    // g' = e^{−Φx} q and k' = −(γ/Φ) q are exact; q' comes from differences.
    let g_slope = q_values
        .iter()
        .enumerate()
        .map(|(i, q)| (-phi * i as f64 * h).exp() * q)
        .collect();
    let k_slope = q_values.iter().map(|q| -gamma / phi * q).collect();
    let q_slope = five_point_derivative(&q_values, h);

    let mut g = Hermite {
        value: g_values,
        slope: g_slope,
    };
    let mut k = Hermite {
        value: k_values,
        slope: k_slope,
    };
    g.limit_monotone(h);
    k.limit_monotone(h);
    let q = Hermite {
        value: q_values,
        slope: q_slope,
    };
    Ok((Grid { h, g, q, k }, nodes, accuracy))
}

/// Five-point derivative on a uniform grid; one-sided stencils at the ends.
fn five_point_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "need at least five nodes");
    let mut d = vec![0.0; n];
    let c = 1.0 / (12.0 * h);
    d[0] = c * (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]);
    d[1] = c * (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]);
    for i in 2..n - 2 {
        d[i] = c * (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]);
    }
    d[n - 2] = c * (3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5]);
    d[n - 1] = c
        * (25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4] + 3.0 * f[n - 5]);
    d
}

#[cfg(test)]
mod tests;
