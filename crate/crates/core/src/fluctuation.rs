//! Closed-form fluctuation identities as functions of a [`ScaleEvaluator`].
//!
//! Each identity is written through the evaluator's bounded primitives
//! (`k = Z − (γ/Φ)W`, `q = W' − ΦW`, the ratio `W(u)/W(v)` and `W'/W`) rather
//! than raw `W` and `Z`. Algebraically the expressions are unchanged; for
//! example the joint law of the extremes
//!
//! ```text
//! 1 − Z(−a) + (Z(b−a) − 1)·W(−a)/W(b−a)
//!   = 1 − k(−a) + (k(b−a) − 1)·W(−a)/W(b−a)
//! ```
//!
//! but the right-hand side never subtracts two numbers of size `e^{Φx}`.

use crate::error::{Error, Result};
use crate::scale::ScaleEvaluator;

/// Two-sided window `a < 0 < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    a: f64,
    b: f64,
}

impl Window {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a < 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            Ok(Self { a, b })
        } else {
            Err(Error::Domain(format!(
                "window needs a < 0 < b, got a={a}, b={b}"
            )))
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }
}

fn probability(ev: &ScaleEvaluator, value: f64, context: &'static str) -> Result<f64> {
    let slack = ev.probability_slack();
    if value >= -slack && value <= 1.0 + slack {
        Ok(value.clamp(0.0, 1.0))
    } else {
        Err(Error::NotAProbability {
            value,
            slack,
            context,
        })
    }
}

fn check_exit_args(x: f64, b: f64) -> Result<()> {
    if !(b > 0.0) {
        return Err(Error::Domain(format!("upper level must be > 0, got b={b}")));
    }
    if !(0.0..=b).contains(&x) {
        return Err(Error::Domain(format!(
            "start must satisfy 0 <= x <= b, got x={x}, b={b}"
        )));
    }
    Ok(())
}

/// `E_x[e^{−γτ_b⁺}; τ_b⁺ < τ₀⁻] = W(x)/W(b)`.
pub fn exit_up_lt(ev: &ScaleEvaluator, x: f64, b: f64) -> Result<f64> {
    check_exit_args(x, b)?;
    probability(ev, ev.w_ratio(x, b)?, "exit_up_lt")
}

/// `E_x[e^{−γτ₀⁻}; τ₀⁻ < τ_b⁺] = Z(x) − Z(b)·W(x)/W(b) = k(x) − k(b)·W(x)/W(b)`.
pub fn exit_down_lt(ev: &ScaleEvaluator, x: f64, b: f64) -> Result<f64> {
    check_exit_args(x, b)?;
    let ratio = ev.w_ratio(x, b)?;
    let value = ev.one_sided_down(x)? - ev.one_sided_down(b)? * ratio;
    probability(ev, value, "exit_down_lt")
}

/// `E_x[e^{−γτ₀⁻}; τ₀⁻ < ∞] = Z(x) − (γ/Φ) W(x)`.
pub fn one_sided_down_lt(ev: &ScaleEvaluator, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::Domain(format!("start must be >= 0, got {x}")));
    }
    probability(ev, ev.one_sided_down(x)?, "one_sided_down_lt")
}

/// `1 − Z(v) + (Z(u) − 1)·W(v)/W(u)` for `0 ≤ v ≤ u`, `u > 0`: the
/// probability of surviving `T` inside a band of width `u` from distance `v`
/// above its floor.
fn band_survival(ev: &ScaleEvaluator, v: f64, u: f64) -> Result<f64> {
    let ratio = ev.w_ratio(v, u)?;
    Ok(1.0 - ev.one_sided_down(v)? + (ev.one_sided_down(u)? - 1.0) * ratio)
}

/// `P_0(a < I_T, S_T < b) = 1 − Z(−a) + (Z(b−a) − 1)·W(−a)/W(b−a)`.
pub fn joint_sup_inf_cdf(ev: &ScaleEvaluator, win: Window) -> Result<f64> {
    let value = band_survival(ev, -win.a(), win.width())?;
    probability(ev, value, "joint_sup_inf_cdf")
}

/// `P(S_{H_I,T} ≤ b | I_T = a) = Φ (Z(b−a) − 1) / (γ W(b−a))`, a function of
/// `b − a` only. Undefined (0/0) at `b = a`.
pub fn post_inf_sup_cdf(ev: &ScaleEvaluator, a: f64, b: f64) -> Result<f64> {
    let u = b - a;
    if !(u > 0.0) {
        return Err(Error::Domain(format!(
            "post-infimum supremum law needs b > a (0/0 at b = a), got a={a}, b={b}"
        )));
    }
    // Φ(Z − 1)/(γW) = 1 − (Φ/γ)(1 − k)/W
    let value = 1.0 - ev.phi() / ev.gamma() * (1.0 - ev.one_sided_down(u)?) / ev.w(u)?;
    probability(ev, value, "post_inf_sup_cdf")
}

/// `P(M⁻_{H_S,T} < d | H_I < H_S, I_T = a, S_T = b)` for `0 < d < b − a`:
///
/// ```text
/// 1 − h(d)·[Z'(d) − Z(d) W'(d)/W(d)] / [−Z'(u) + (Z(u) − 1) W'(u)/W(u)],  u = b − a
/// ```
///
/// with `h` the intermediate-band survival function. With `ℓ = W'/W`,
/// numerator and denominator are `−(γ/Φ) q(d) − k(d) ℓ(d)` and
/// `(γ/Φ) q(u) + (k(u) − 1) ℓ(u)`.
pub fn max_loss_post_sup_cdf(ev: &ScaleEvaluator, d: f64, a: f64, b: f64) -> Result<f64> {
    let u = b - a;
    if !(d > 0.0 && d < u) {
        return Err(Error::Domain(format!(
            "max loss level needs 0 < d < b - a, got d={d}, b-a={u}"
        )));
    }
    let h = band_survival(ev, u - d, u)?;
    let c = ev.gamma() / ev.phi();
    let numerator = -c * ev.w_prime_excess(d)? - ev.one_sided_down(d)? * ev.log_derivative(d)?;
    let denominator =
        c * ev.w_prime_excess(u)? + (ev.one_sided_down(u)? - 1.0) * ev.log_derivative(u)?;
    probability(
        ev,
        1.0 - h * numerator / denominator,
        "max_loss_post_sup_cdf",
    )
}

/// `h̃(x) = P_x{T < τ₀⁻} = (γ/Φ) W(x) − (Z(x) − 1) = 1 − k(x)`.
pub fn h_tilde(ev: &ScaleEvaluator, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::Domain(format!("h-tilde needs x >= 0, got {x}")));
    }
    probability(ev, 1.0 - ev.one_sided_down(x)?, "h_tilde")
}

/// Post-supremum `h(z) = P{T < τ_z⁺} = 1 − e^{−Φz}`.
pub fn h_post_sup(ev: &ScaleEvaluator, z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("h needs z >= 0, got {z}")));
    }
    Ok(-(-ev.phi() * z).exp_m1())
}

/// Intermediate-process `h(z) = P_z{T < τ̂⁺_{b−a} ∧ τ̂₀⁻}` for the dual process
/// started at `z ∈ [0, b − a]`.
pub fn h_intermediate(ev: &ScaleEvaluator, z: f64, a: f64, b: f64) -> Result<f64> {
    let u = b - a;
    if !(u > 0.0) || !(0.0..=u).contains(&z) {
        return Err(Error::Domain(format!(
            "h needs 0 <= z <= b - a, got z={z}, b-a={u}"
        )));
    }
    probability(ev, band_survival(ev, u - z, u)?, "h_intermediate")
}

/// `Y = W(x − i)/W(b − i)`, the conditional probability that the last exit
/// from the infimum before `τ_b⁺` has already happened.
pub fn y_value(ev: &ScaleEvaluator, x: f64, i: f64, b: f64) -> Result<f64> {
    if !(i <= x && x <= b && i < b) {
        return Err(Error::Domain(format!(
            "Y needs i <= x <= b with i < b, got x={x}, i={i}, b={b}"
        )));
    }
    exit_up_lt(ev, x - i, b - i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::{KillingRate, LevyModel};
    use crate::scale::ScaleMethod;
    use proptest::prelude::*;

    fn bm_ev(x_max: f64) -> ScaleEvaluator {
        let m = LevyModel::brownian(0.0, 1.0).unwrap();
        ScaleEvaluator::build(&m, KillingRate::new(0.5).unwrap(), x_max, 1e-3).unwrap()
    }

    fn cp_ev(gamma: f64) -> ScaleEvaluator {
        let m = LevyModel::cp_exp(1.0, 1.0, 1.0, 2.0).unwrap();
        ScaleEvaluator::build(&m, KillingRate::new(gamma).unwrap(), 12.0, 1e-3).unwrap()
    }

    // Closed forms for BM(0,1), γ = 0.5: W = 2 sinh, Z = cosh.
    fn sh(x: f64) -> f64 {
        x.sinh()
    }
    fn ch(x: f64) -> f64 {
        x.cosh()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn exit_functionals_brownian() {
        let ev = bm_ev(10.0);
        assert_eq!(exit_up_lt(&ev, 2.0, 2.0).unwrap(), 1.0);
        assert_eq!(exit_up_lt(&ev, 0.0, 2.0).unwrap(), 0.0);
        let up = exit_up_lt(&ev, 1.0, 2.0).unwrap();
        assert!(close(up, sh(1.0) / sh(2.0), 1e-14));
        assert!(close(up, 0.3240, 1e-4));

        assert_eq!(exit_down_lt(&ev, 0.0, 2.0).unwrap(), 1.0);
        assert!(close(exit_down_lt(&ev, 2.0, 2.0).unwrap(), 0.0, 1e-15));
        let down = exit_down_lt(&ev, 1.0, 2.0).unwrap();
        assert!(close(down, ch(1.0) - ch(2.0) * sh(1.0) / sh(2.0), 1e-14));
        assert!(close(down, 0.3241, 1e-4));

        assert!(exit_up_lt(&ev, 1.0, 0.0).is_err());
        assert!(exit_up_lt(&ev, 3.0, 2.0).is_err());
    }

    #[test]
    fn one_sided_and_h_tilde() {
        let ev = bm_ev(10.0);
        assert_eq!(one_sided_down_lt(&ev, 0.0).unwrap(), 1.0);
        assert!(close(
            one_sided_down_lt(&ev, 1.0).unwrap(),
            (-1.0f64).exp(),
            1e-15
        ));
        assert_eq!(h_tilde(&ev, 0.0).unwrap(), 0.0);
        // standard BM: h̃(x) = 1 − e^{−x√(2γ)}
        for gamma in [0.1, 0.5, 2.0] {
            let m = LevyModel::brownian(0.0, 1.0).unwrap();
            let ev =
                ScaleEvaluator::build(&m, KillingRate::new(gamma).unwrap(), 10.0, 1e-3).unwrap();
            for x in [0.1, 0.5, 1.0, 3.0, 7.0] {
                let want = 1.0 - (-x * (2.0 * gamma).sqrt()).exp();
                assert!(
                    close(h_tilde(&ev, x).unwrap(), want, 1e-14),
                    "γ={gamma} x={x}"
                );
            }
        }
        // tail: monotone decrease of the one-sided transform towards 0
        let ev = cp_ev(0.5);
        let mut prev = 1.0;
        for i in 1..=120 {
            let v = one_sided_down_lt(&ev, 0.1 * i as f64).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert!(prev < 1e-3);
        assert!(h_tilde(&ev, 12.0).unwrap() > 0.999);
    }

    #[test]
    fn joint_law_brownian() {
        let ev = bm_ev(10.0);
        let p = joint_sup_inf_cdf(&ev, Window::new(-1.0, 1.0).unwrap()).unwrap();
        let want = 1.0 - ch(1.0) + (ch(2.0) - 1.0) * sh(1.0) / sh(2.0);
        assert!(close(p, want, 1e-14));
        assert!(close(p, 0.3520, 1e-4));
        let tiny = joint_sup_inf_cdf(&ev, Window::new(-1e-9, 1.0).unwrap()).unwrap();
        assert!(tiny < 1e-8);
        assert!(Window::new(0.0, 1.0).is_err());
        assert!(Window::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn joint_law_tends_to_one_sided_law_for_wide_windows() {
        for ev in [bm_ev(40.0), {
            let m = LevyModel::cp_exp(1.0, 1.0, 1.0, 2.0).unwrap();
            ScaleEvaluator::build(&m, KillingRate::new(0.5).unwrap(), 40.0, 1e-3).unwrap()
        }] {
            // b → ∞ limit is h̃(−a)
            let a = -1.3;
            let wide = joint_sup_inf_cdf(&ev, Window::new(a, ev.x_max() + a).unwrap()).unwrap();
            assert!(close(wide, h_tilde(&ev, -a).unwrap(), 1e-9));
            // a → −∞ limit is the exponential law of S_T
            for b in [0.5, 1.0, 2.0] {
                let win = Window::new(-(ev.x_max() - b), b).unwrap();
                let p = joint_sup_inf_cdf(&ev, win).unwrap();
                let want = 1.0 - (-ev.phi() * b).exp();
                assert!(close(p, want, 1e-3), "b={b}: {p} vs {want}");
            }
        }
    }

    #[test]
    fn post_infimum_supremum_law() {
        let ev = bm_ev(40.0);
        let p = post_inf_sup_cdf(&ev, -0.5, 0.5).unwrap();
        assert!(close(p, (ch(1.0) - 1.0) / sh(1.0), 1e-14));
        assert!(close(p, 0.4621, 1e-4));
        assert!(post_inf_sup_cdf(&ev, -1.0, -1.0).is_err());
        assert!(post_inf_sup_cdf(&ev, 0.0, 1e-6).unwrap() < 1e-6);
        assert!(post_inf_sup_cdf(&ev, 0.0, 40.0).unwrap() > 1.0 - 1e-12);
        let cp = cp_ev(0.5);
        assert!(post_inf_sup_cdf(&cp, 0.0, 1e-3).unwrap() < 1e-3);
        assert!(post_inf_sup_cdf(&cp, 0.0, 12.0).unwrap() > 0.99);
    }

    #[test]
    fn max_loss_law_brownian() {
        let ev = bm_ev(10.0);
        // direct transcription of the displayed formula with W = 2 sinh, Z = cosh
        let raw = |d: f64, u: f64| {
            let (w, wp, z, zp) = (
                |x: f64| 2.0 * sh(x),
                |x: f64| 2.0 * ch(x),
                ch,
                |x: f64| sh(x),
            );
            let h = 1.0 - z(u - d) + (z(u) - 1.0) * w(u - d) / w(u);
            let num = zp(d) - z(d) * wp(d) / w(d);
            let den = -zp(u) + (z(u) - 1.0) * wp(u) / w(u);
            1.0 - h * num / den
        };
        let p = max_loss_post_sup_cdf(&ev, 1.0, -1.0, 1.0).unwrap();
        assert!(close(p, raw(1.0, 2.0), 1e-13));
        assert!(close(p, 0.6067, 1e-4));
        let near_top = max_loss_post_sup_cdf(&ev, 2.0 - 1e-9, -1.0, 1.0).unwrap();
        assert!(close(near_top, 1.0, 1e-7));
        assert!(max_loss_post_sup_cdf(&ev, 0.0, -1.0, 1.0).is_err());
        assert!(max_loss_post_sup_cdf(&ev, 2.0, -1.0, 1.0).is_err());
        let mut prev = 0.0;
        for i in 1..200 {
            let v = max_loss_post_sup_cdf(&ev, 0.01 * i as f64, -1.0, 1.0).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn h_functions() {
        let ev = bm_ev(10.0);
        assert_eq!(h_post_sup(&ev, 0.0).unwrap(), 0.0);
        assert!(close(
            h_post_sup(&ev, 1.0).unwrap(),
            1.0 - (-1.0f64).exp(),
            1e-15
        ));
        assert!(close(h_post_sup(&ev, 60.0).unwrap(), 1.0, 1e-15));

        assert!(close(
            h_intermediate(&ev, 2.0, -1.0, 1.0).unwrap(),
            0.0,
            1e-15
        ));
        assert!(close(
            h_intermediate(&ev, 0.0, -1.0, 1.0).unwrap(),
            0.0,
            1e-15
        ));
        let h = h_intermediate(&ev, 1.0, -1.0, 1.0).unwrap();
        assert!(close(
            h,
            1.0 - ch(1.0) + (ch(2.0) - 1.0) * sh(1.0) / sh(2.0),
            1e-14
        ));
        assert!(h_intermediate(&ev, 2.5, -1.0, 1.0).is_err());
    }

    #[test]
    fn y_value_examples() {
        let ev = bm_ev(10.0);
        assert_eq!(y_value(&ev, 2.0, 0.0, 2.0).unwrap(), 1.0);
        assert_eq!(y_value(&ev, -0.5, -0.5, 2.0).unwrap(), 0.0);
        assert!(close(
            y_value(&ev, 1.0, 0.0, 2.0).unwrap(),
            sh(1.0) / sh(2.0),
            1e-14
        ));
        assert!(y_value(&ev, 3.0, 0.0, 2.0).is_err());
        assert!(y_value(&ev, -1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn inversion_backed_identities_match_closed_form() {
        let m = LevyModel::brownian(0.0, 1.0).unwrap();
        let rate = KillingRate::new(0.5).unwrap();
        let closed = ScaleEvaluator::build(&m, rate, 10.0, 1e-3).unwrap();
        let inv = ScaleEvaluator::build_with_method(&m, rate, 10.0, 1e-3, ScaleMethod::Inversion)
            .unwrap();
        for (a, b) in [(-0.5, 0.5), (-1.0, 1.0), (-1.5, 2.5)] {
            let w = Window::new(a, b).unwrap();
            assert!(close(
                joint_sup_inf_cdf(&closed, w).unwrap(),
                joint_sup_inf_cdf(&inv, w).unwrap(),
                1e-8
            ));
            assert!(close(
                post_inf_sup_cdf(&closed, a, b).unwrap(),
                post_inf_sup_cdf(&inv, a, b).unwrap(),
                1e-7
            ));
            let d = 0.4 * (b - a);
            assert!(close(
                max_loss_post_sup_cdf(&closed, d, a, b).unwrap(),
                max_loss_post_sup_cdf(&inv, d, a, b).unwrap(),
                1e-6
            ));
        }
    }

    fn arb_ev() -> impl Strategy<Value = ScaleEvaluator> {
        (
            -1.0..1.0f64,
            0.5..1.5f64,
            prop::option::of((0.1..2.0f64, 0.5..4.0f64)),
            0.1..2.0f64,
        )
            .prop_map(|(mu, sigma, jumps, gamma)| {
                let m = match jumps {
                    None => LevyModel::brownian(mu, sigma).unwrap(),
                    Some((r, e)) => LevyModel::cp_exp(mu, sigma, r, e).unwrap(),
                };
                ScaleEvaluator::build(&m, KillingRate::new(gamma).unwrap(), 16.0, 2e-3).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn identities_hold_on_random_models(ev in arb_ev(), x in 0.0..3.0f64, extra in 0.01..4.0f64, frac in 0.01..0.99f64) {
            let b = x + extra;
            let up = exit_up_lt(&ev, x, b).unwrap();
            let down = exit_down_lt(&ev, x, b).unwrap();
            prop_assert!((0.0..=1.0).contains(&up) && (0.0..=1.0).contains(&down));
            prop_assert!(up + down <= 1.0 + 1e-9);
            prop_assert_eq!(h_tilde(&ev, x).unwrap(), 1.0 - one_sided_down_lt(&ev, x).unwrap());
            let i = -extra * frac;
            prop_assert_eq!(y_value(&ev, x, i, b).unwrap(), exit_up_lt(&ev, x - i, b - i).unwrap());

            let win = Window::new(-extra * frac, x + 0.01).unwrap();
            let j = joint_sup_inf_cdf(&ev, win).unwrap();
            prop_assert!((0.0..=1.0).contains(&j));
            let c1 = post_inf_sup_cdf(&ev, 0.0, b).unwrap();
            let c1_wider = post_inf_sup_cdf(&ev, 0.0, b + 0.5).unwrap();
            prop_assert!(c1 <= c1_wider + 1e-9);
            let d = frac * b;
            let c2 = max_loss_post_sup_cdf(&ev, d, 0.0, b).unwrap();
            let c2_more = max_loss_post_sup_cdf(&ev, d + 0.5 * (b - d), 0.0, b).unwrap();
            prop_assert!((0.0..=1.0).contains(&c2));
            prop_assert!(c2 <= c2_more + 1e-9);
            let hz = h_intermediate(&ev, frac * b, 0.0, b).unwrap();
            prop_assert!((0.0..=1.0).contains(&hz));
        }
    }
}
