//! Numerical Laplace inversion by the Euler-summation Bromwich scheme.
//!
//! The Bromwich integral is discretised by the trapezoidal rule on the line
//! `Re s = A/(2t)`, which turns it into an alternating series; the tail of
//! that series is accelerated by binomial (Euler) averaging of `m + 1`
//! consecutive partial sums starting at `n`. Discretisation error is about
//! `e^{−A}` times the size of `f`; rounding error grows like `ε·e^{A/2}`.

use std::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerParams {
    pub a: f64,
    pub n: usize,
    pub m: usize,
}

impl EulerParams {
    pub const PRIMARY: EulerParams = EulerParams {
        a: 24.0,
        n: 40,
        m: 12,
    };
    /// Independent setting used to estimate the error of [`Self::PRIMARY`].
    pub const CHECK: EulerParams = EulerParams {
        a: 28.0,
        n: 60,
        m: 16,
    };
}

/// Precomputed binomial weights for one parameter set.
#[derive(Debug, Clone)]
pub struct EulerInverter {
    params: EulerParams,
    // weight applied to term k of the series (k = 0..=n+m)
    weights: Vec<f64>,
}

impl EulerInverter {
    pub fn new(params: EulerParams) -> Self {
        let EulerParams { n, m, .. } = params;
        // Partial sum S_j = Σ_{k≤j} a_k; averaging Σ_i C(m,i)2^{-m} S_{n+i}
        // gives each a_k the weight Σ_{i: n+i ≥ k} C(m,i) 2^{-m}.
        let mut binom = vec![1.0f64; m + 1];
        for i in 1..=m {
            binom[i] = binom[i - 1] * (m + 1 - i) as f64 / i as f64;
        }
        let scale = 0.5f64.powi(m as i32);
        let mut tail = vec![0.0; m + 2];
        for i in (0..=m).rev() {
            tail[i] = tail[i + 1] + binom[i] * scale;
        }
        let weights = (0..=n + m)
            .map(|k| if k <= n { 1.0 } else { tail[k - n] })
            .collect();
        Self { params, weights }
    }

    pub fn params(&self) -> EulerParams {
        self.params
    }

    /// Approximates `f(t)` for `t > 0` from its transform `f̂`, which must be
    /// analytic for `Re s > 0`.
    pub fn invert<F>(&self, transform: F, t: f64) -> f64
    where
        F: Fn(Complex64) -> Complex64,
    {
        self.invert_many(|s| [transform(s)], t)[0]
    }

    /// Inverts several transforms sharing the same Bromwich nodes.
    pub fn invert_many<F, const N: usize>(&self, transforms: F, t: f64) -> [f64; N]
    where
        F: Fn(Complex64) -> [Complex64; N],
    {
        debug_assert!(t > 0.0);
        let a = self.params.a;
        let re = a / (2.0 * t);
        let im_step = PI / t;
        let mut sums = transforms(Complex64::new(re, 0.0)).map(|v| 0.5 * v.re);
        let mut sign = -1.0;
        for (k, w) in self.weights.iter().enumerate().skip(1) {
            let values = transforms(Complex64::new(re, im_step * k as f64));
            for (sum, v) in sums.iter_mut().zip(values) {
                *sum += sign * w * v.re;
            }
            sign = -sign;
        }
        let scale = (0.5 * a).exp() / t;
        sums.map(|s| scale * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv(params: EulerParams) -> EulerInverter {
        EulerInverter::new(params)
    }

    #[test]
    fn weights_are_binomial_tail() {
        let e = inv(EulerParams {
            a: 18.4,
            n: 2,
            m: 2,
        });
        assert_eq!(e.weights, vec![1.0, 1.0, 1.0, 0.75, 0.25]);
    }

    #[test]
    fn inverts_exponential() {
        for p in [EulerParams::PRIMARY, EulerParams::CHECK] {
            let e = inv(p);
            for &t in &[0.01, 0.5, 1.0, 3.0, 10.0] {
                let got = e.invert(|s| 1.0 / (s + 1.0), t);
                assert!((got - (-t).exp()).abs() < 1e-9, "t={t} got {got}");
            }
        }
    }

    #[test]
    fn inverts_damped_sine() {
        let e = inv(EulerParams::PRIMARY);
        for &t in &[0.1, 1.0, 2.5] {
            let got = e.invert(|s| 1.0 / ((s + 0.5) * (s + 0.5) + 1.0), t);
            let want = (-0.5 * t).exp() * t.sin();
            assert!((got - want).abs() < 1e-9, "t={t} got {got} want {want}");
        }
    }
}
