//! Model catalog and Laplace exponent.
//!
//! Sign convention: `ψ(λ) = log E[exp(λ X_1)]`, so the `drift` field enters
//! with a plus sign, matching the SDE `dX = μ dt + σ dB + jumps`. For the
//! compound Poisson catalog entry the jumps are not compensated; `drift` is
//! the coefficient of `λ` in
//!
//! ```text
//! ψ(λ) = drift·λ + σ²λ²/2 + rate·(η/(η+λ) − 1)
//! ```
//!
//! so the mean of `X_1` is `drift − rate/η`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Downward jump part of the Lévy triplet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JumpSpec {
    None,
    /// Jumps arrive at Poisson `rate`; magnitudes are Exponential(`eta`), i.e.
    /// `Π(dy) = rate·η·e^{ηy} dy` on `y < 0`.
    CpExp {
        rate: f64,
        eta: f64,
    },
}

impl JumpSpec {
    /// Total mass of the Lévy measure.
    pub fn intensity(&self) -> f64 {
        match *self {
            JumpSpec::None => 0.0,
            JumpSpec::CpExp { rate, .. } => rate,
        }
    }
}

#[derive(Deserialize)]
struct RawModel {
    drift: f64,
    sigma: f64,
    jumps: JumpSpec,
}

/// Spectrally negative Lévy process with a Gaussian part and finite-activity
/// downward jumps. Immutable once constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct LevyModel {
    drift: f64,
    sigma: f64,
    jumps: JumpSpec,
}

impl TryFrom<RawModel> for LevyModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        LevyModel::new(raw.drift, raw.sigma, raw.jumps)
    }
}

impl LevyModel {
    pub fn new(drift: f64, sigma: f64, jumps: JumpSpec) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::InvalidModel(format!(
                "drift must be finite, got {drift}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        if let JumpSpec::CpExp { rate, eta } = jumps {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "jump rate must be >= 0, got {rate}"
                )));
            }
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "jump eta must be > 0, got {eta}"
                )));
            }
        }
        Ok(Self {
            drift,
            sigma,
            jumps,
        })
    }

    /// Brownian motion with drift.
    pub fn brownian(drift: f64, sigma: f64) -> Result<Self> {
        Self::new(drift, sigma, JumpSpec::None)
    }

    pub fn cp_exp(drift: f64, sigma: f64, rate: f64, eta: f64) -> Result<Self> {
        Self::new(drift, sigma, JumpSpec::CpExp { rate, eta })
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn jumps(&self) -> JumpSpec {
        self.jumps
    }

    pub fn is_brownian(&self) -> bool {
        matches!(self.jumps, JumpSpec::None)
    }

    /// Laplace exponent `ψ(λ)` for `λ ≥ 0`.
    pub fn psi(&self, lambda: f64) -> f64 {
        let gauss = self.drift * lambda + 0.5 * self.sigma * self.sigma * lambda * lambda;
        match self.jumps {
            JumpSpec::None => gauss,
            // rate·(η/(η+λ) − 1) = −rate·λ/(η+λ), written without cancellation
            JumpSpec::CpExp { rate, eta } => gauss - rate * lambda / (eta + lambda),
        }
    }

    pub fn psi_prime(&self, lambda: f64) -> f64 {
        let gauss = self.drift + self.sigma * self.sigma * lambda;
        match self.jumps {
            JumpSpec::None => gauss,
            JumpSpec::CpExp { rate, eta } => gauss - rate * eta / ((eta + lambda) * (eta + lambda)),
        }
    }

    /// `ψ` continued analytically to `Re z > −η` (all of `C` for Brownian
    /// motion). Used by the Bromwich inversion.
    pub fn psi_complex(&self, z: Complex64) -> Complex64 {
        let gauss = z * self.drift + z * z * (0.5 * self.sigma * self.sigma);
        match self.jumps {
            JumpSpec::None => gauss,
            JumpSpec::CpExp { rate, eta } => gauss - z * rate / (z + eta),
        }
    }

    /// Right inverse `Φ(γ)`: the largest root of `ψ(λ) = γ`.
    pub fn phi(&self, gamma: f64) -> Result<f64> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
                reason: "must be finite and >= 0",
            });
        }
        let lo = self.psi_minimiser();
        if gamma == 0.0 && lo == 0.0 {
            return Ok(0.0);
        }

        let mut hi = lo.max(1.0);
        while self.psi(hi) <= gamma {
            hi *= 2.0;
        }
        // ψ is convex and increasing on [lo, ∞): Newton started right of the
        // root decreases monotonically onto it. The bracket guards rounding.
        let mut bracket = (lo, hi);
        let mut lambda = hi;
        for _ in 0..200 {
            let f = self.psi(lambda) - gamma;
            if f == 0.0 {
                return Ok(lambda);
            }
            if f > 0.0 {
                bracket.1 = lambda;
            } else {
                bracket.0 = lambda;
            }
            let mut next = lambda - f / self.psi_prime(lambda);
            if !(next > bracket.0 && next < bracket.1) {
                next = 0.5 * (bracket.0 + bracket.1);
            }
            if (next - lambda).abs() <= 4.0 * f64::EPSILON * lambda.abs().max(1e-300) {
                lambda = next;
                break;
            }
            lambda = next;
        }
        Ok(lambda)
    }

    /// Argmin of `ψ` over `[0, ∞)`.
    fn psi_minimiser(&self) -> f64 {
        if self.psi_prime(0.0) >= 0.0 {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.psi_prime(hi) < 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.psi_prime(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Esscher tilt by `c = Φ(γ)`: the catalog model whose exponent is
    /// `ψ(λ + Φ(γ)) − γ`.
    ///
    /// Brownian part: drift `μ + σ²Φ`, same `σ`. Jumps: `η' = η + Φ`,
    /// `rate' = rate·η/(η + Φ)`; the constant term vanishes since `ψ(Φ) = γ`.
    pub fn esscher_tilt(&self, gamma: f64) -> Result<LevyModel> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
                reason: "must be finite and > 0",
            });
        }
        let c = self.phi(gamma)?;
        let drift = self.drift + self.sigma * self.sigma * c;
        let jumps = match self.jumps {
            JumpSpec::None => JumpSpec::None,
            JumpSpec::CpExp { rate, eta } => JumpSpec::CpExp {
                rate: rate * eta / (eta + c),
                eta: eta + c,
            },
        };
        LevyModel::new(drift, self.sigma, jumps)
    }
}

/// Rate `γ > 0` of the independent exponential killing time `T`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct KillingRate(f64);

impl KillingRate {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(Self(gamma))
        } else {
            Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
                reason: "killing rate must be finite and > 0",
            })
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for KillingRate {
    type Error = Error;

    fn try_from(gamma: f64) -> Result<Self> {
        Self::new(gamma)
    }
}

impl From<KillingRate> for f64 {
    fn from(rate: KillingRate) -> f64 {
        rate.0
    }
}
