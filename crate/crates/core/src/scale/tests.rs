use super::*;

fn bm_std() -> LevyModel {
    LevyModel::brownian(0.0, 1.0).unwrap()
}

fn cp_model() -> LevyModel {
    LevyModel::cp_exp(1.0, 1.0, 1.0, 2.0).unwrap()
}

fn rate(g: f64) -> KillingRate {
    KillingRate::new(g).unwrap()
}

fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Partial-fraction scale function for the exponential-jump model:
/// 1/(ψ(λ) − γ) = (η + λ)/P(λ) with the cubic
/// P(λ) = (η + λ)(σ²λ²/2 + μλ − γ) − rate·λ, whose three real roots lie in
/// (−∞, −η), (−η, 0) and (0, ∞).
struct PartialFractionW {
    roots: [f64; 3],
    coeffs: [f64; 3],
}

impl PartialFractionW {
    fn new(mu: f64, sigma: f64, rate: f64, eta: f64, gamma: f64) -> Self {
        let p = move |l: f64| (eta + l) * (0.5 * sigma * sigma * l * l + mu * l - gamma) - rate * l;
        let dp = move |l: f64| {
            (0.5 * sigma * sigma * l * l + mu * l - gamma) + (eta + l) * (sigma * sigma * l + mu)
                - rate
        };
        let mut far = -eta - 1.0;
        while p(far) > 0.0 {
            far *= 2.0;
        }
        let mut big = 1.0;
        while p(big) < 0.0 {
            big *= 2.0;
        }
        let roots = [
            bisect(&p, far, -eta),
            bisect(&p, -eta, 0.0),
            bisect(&p, 0.0, big),
        ];
        let coeffs = roots.map(|r| (eta + r) / dp(r));
        Self { roots, coeffs }
    }

    fn w(&self, x: f64) -> f64 {
        self.roots
            .iter()
            .zip(&self.coeffs)
            .map(|(r, c)| c * (r * x).exp())
            .sum()
    }

    fn w_prime(&self, x: f64) -> f64 {
        self.roots
            .iter()
            .zip(&self.coeffs)
            .map(|(r, c)| c * r * (r * x).exp())
            .sum()
    }
}

/// Composite Simpson rule with `2n` panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / (2 * n) as f64;
    let mut s = f(a) + f(b);
    for i in 1..2 * n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn dispatch_by_catalog_entry() {
    let bm = ScaleEvaluator::build(&bm_std(), rate(0.5), 5.0, 1e-3).unwrap();
    assert_eq!(bm.method(), ScaleMethod::ClosedForm);
    let cp = ScaleEvaluator::build(&cp_model(), rate(0.5), 5.0, 1e-3).unwrap();
    assert_eq!(cp.method(), ScaleMethod::Inversion);
    let forced = ScaleEvaluator::build_with_method(
        &cp_model(),
        rate(0.5),
        5.0,
        1e-3,
        ScaleMethod::ClosedForm,
    );
    assert!(forced.is_err());
}

#[test]
fn brownian_closed_form_values() {
    let ev = ScaleEvaluator::build(&bm_std(), rate(0.5), 5.0, 1e-3).unwrap();
    assert_eq!(ev.phi(), 1.0);
    assert_eq!(ev.w(0.0).unwrap(), 0.0);
    assert_eq!(ev.w(-3.0).unwrap(), 0.0);
    let one = 1.0f64;
    assert!((ev.w(1.0).unwrap() - 2.0 * one.sinh()).abs() < 1e-14);
    assert!((ev.w_prime(1.0).unwrap() - 2.0 * one.cosh()).abs() < 1e-14);
    assert!((ev.z(1.0).unwrap() - one.cosh()).abs() < 1e-14);
    assert_eq!(ev.z(0.0).unwrap(), 1.0);
    assert_eq!(ev.z(-2.0).unwrap(), 1.0);
    assert!((ev.z_prime(1.0).unwrap() - one.sinh()).abs() < 1e-14);
    assert_eq!(ev.z_prime(0.0).unwrap(), 0.0);
}

#[test]
fn brownian_values_match_independent_oracles() {
    let ev = ScaleEvaluator::build(&bm_std(), rate(0.5), 5.0, 1e-3).unwrap();
    // Bromwich inversion of 1/(λ²/2 − 1/2), independent of the closed form
    let inv = EulerInverter::new(EulerParams::PRIMARY);
    let w1 = (1.0f64).exp() * inv.invert(|s| 1.0 / ((s + 1.0) * (s + 1.0) * 0.5 - 0.5), 1.0);
    assert!((ev.w(1.0).unwrap() - w1).abs() < 1e-8);
    let h = 1e-5;
    let fd = (ev.w(1.0 + h).unwrap() - ev.w(1.0 - h).unwrap()) / (2.0 * h);
    assert!((ev.w_prime(1.0).unwrap() - fd).abs() < 1e-8);
    let quad = 1.0 + 0.5 * simpson(|y| ev.w(y).unwrap(), 0.0, 1.0, 500);
    assert!((ev.z(1.0).unwrap() - quad).abs() < 1e-12);
}

#[test]
fn range_and_domain_errors() {
    let ev = ScaleEvaluator::build(&bm_std(), rate(0.5), 5.0, 1e-3).unwrap();
    assert!(matches!(ev.w(5.5), Err(Error::OutOfRange { .. })));
    assert!(matches!(ev.z(6.0), Err(Error::OutOfRange { .. })));
    assert!(matches!(ev.w_prime(0.0), Err(Error::Domain(_))));
    assert!(matches!(ev.w_prime(-1.0), Err(Error::Domain(_))));
    assert!(ev.w(5.0).is_ok());
    assert!(ScaleEvaluator::build(&bm_std(), rate(0.5), 0.0, 1e-3).is_err());
    assert!(ScaleEvaluator::build(&bm_std(), rate(0.5), 1.0, 0.0).is_err());
}

#[test]
fn inversion_matches_partial_fractions() {
    for gamma in [0.25, 0.5, 1.0] {
        let ev = ScaleEvaluator::build(&cp_model(), rate(gamma), 10.0, 1e-3).unwrap();
        let oracle = PartialFractionW::new(1.0, 1.0, 1.0, 2.0, gamma);
        assert!((oracle.roots[2] - ev.phi()).abs() < 1e-10 * ev.phi());
        for i in 1..=1000 {
            let x = 0.01 * i as f64;
            let (w, want) = (ev.w(x).unwrap(), oracle.w(x));
            assert!(
                (w - want).abs() <= 1e-7 * want,
                "γ={gamma} x={x}: {w} vs {want}"
            );
            let (wp, want_p) = (ev.w_prime(x).unwrap(), oracle.w_prime(x));
            assert!(
                (wp - want_p).abs() <= 1e-6 * want_p,
                "γ={gamma} x={x}: W' {wp} vs {want_p}"
            );
        }
    }
}

#[test]
fn forced_inversion_agrees_with_closed_form() {
    for gamma in [0.25, 0.5, 1.0] {
        let closed = ScaleEvaluator::build(&bm_std(), rate(gamma), 5.0, 1e-3).unwrap();
        let inv = ScaleEvaluator::build_with_method(
            &bm_std(),
            rate(gamma),
            5.0,
            1e-3,
            ScaleMethod::Inversion,
        )
        .unwrap();
        for i in 0..=4990 {
            let x = 0.01 + 0.001 * i as f64;
            let (a, b) = (closed.w(x).unwrap(), inv.w(x).unwrap());
            assert!((a - b).abs() <= 1e-6 * a, "x={x}: {a} vs {b}");
            let (a, b) = (closed.z(x).unwrap(), inv.z(x).unwrap());
            assert!((a - b).abs() <= 1e-6 * a, "Z at x={x}: {a} vs {b}");
        }
    }
}

#[test]
fn laplace_transform_identity() {
    for model in [bm_std(), cp_model()] {
        for gamma in [0.25, 0.5, 1.0] {
            let ev = ScaleEvaluator::build(&model, rate(gamma), 40.0, 1e-3).unwrap();
            for offset in [0.5, 1.0, 2.0] {
                let lambda = ev.phi() + offset;
                assert!((-offset * ev.x_max()).exp() < 1e-8);
                let quad = simpson(
                    |x| (-lambda * x).exp() * ev.w(x).unwrap(),
                    0.0,
                    ev.x_max(),
                    20_000,
                );
                let want = 1.0 / (model.psi(lambda) - gamma);
                assert!(
                    ((quad - want) / want).abs() <= 1e-4,
                    "γ={gamma} λ={lambda}: {quad} vs {want}"
                );
            }
        }
    }
}

#[test]
fn z_is_one_plus_gamma_integral_of_w() {
    for model in [bm_std(), cp_model()] {
        let gamma = 0.5;
        let ev = ScaleEvaluator::build(&model, rate(gamma), 40.0, 1e-3).unwrap();
        let h = ev.h_grid();
        let mut integral = 0.0;
        let mut worst = 0.0f64;
        for (i, row) in ev.grid_rows().enumerate().skip(1) {
            let x0 = (i - 1) as f64 * h;
            let x1 = row[0];
            let mid = 0.5 * (x0 + x1);
            integral += (x1 - x0) / 6.0
                * (ev.w(x0).unwrap() + 4.0 * ev.w(mid).unwrap() + ev.w(x1).unwrap());
            let z = row[3];
            worst = worst.max((z - 1.0 - gamma * integral).abs() / z.max(1.0));
        }
        assert!(worst <= 1e-8, "{model:?}: worst scaled residual {worst:e}");
    }
}

#[test]
fn grid_is_monotone_and_positive() {
    for model in [bm_std(), cp_model()] {
        let ev = ScaleEvaluator::build(&model, rate(0.5), 10.0, 1e-3).unwrap();
        let rows: Vec<_> = ev.grid_rows().collect();
        assert_eq!(rows[0][1], 0.0);
        assert_eq!(rows[0][3], 1.0);
        for pair in rows.windows(2) {
            assert!(pair[1][1] > 0.0);
            assert!(pair[1][1] >= pair[0][1]);
            assert!(pair[1][3] >= pair[0][3]);
            assert!(pair[1][2] > 0.0);
        }
    }
}

#[test]
fn w_prime_is_self_consistent_for_inversion() {
    let ev = ScaleEvaluator::build(&cp_model(), rate(0.5), 5.0, 1e-3).unwrap();
    let h = 1e-5;
    for i in 1..500 {
        let x = 0.01 * i as f64 + 0.00037;
        let fd = (ev.w(x + h).unwrap() - ev.w(x - h).unwrap()) / (2.0 * h);
        let wp = ev.w_prime(x).unwrap();
        assert!((wp - fd).abs() <= 1e-6 * wp, "x={x}: {wp} vs {fd}");
    }
}

#[test]
fn z_prime_is_gamma_times_w() {
    let ev = ScaleEvaluator::build(&cp_model(), rate(0.7), 5.0, 1e-3).unwrap();
    for row in ev.grid_rows() {
        assert_eq!(ev.z_prime(row[0]).unwrap(), 0.7 * ev.w(row[0]).unwrap());
    }
}

#[test]
fn ratios_and_log_derivative_stay_accurate_at_large_arguments() {
    let ev = ScaleEvaluator::build(&bm_std(), rate(0.5), 40.0, 1e-3).unwrap();
    // sinh(35)/sinh(38) = e^{-3}(1 − e^{-70})/(1 − e^{-76})
    let r = ev.w_ratio(35.0, 38.0).unwrap();
    assert!((r - (-3.0f64).exp()).abs() < 1e-15);
    assert!((ev.log_derivative(30.0).unwrap() - 30.0f64.cosh() / 30.0f64.sinh()).abs() < 1e-14);
    assert!((ev.one_sided_down(30.0).unwrap() - (-30.0f64).exp()).abs() < 1e-25);

    let cp = ScaleEvaluator::build(&cp_model(), rate(0.5), 40.0, 1e-3).unwrap();
    let oracle = PartialFractionW::new(1.0, 1.0, 1.0, 2.0, 0.5);
    let want = oracle.w(33.0) / oracle.w(38.0);
    assert!((cp.w_ratio(33.0, 38.0).unwrap() - want).abs() < 1e-9 * want);
    assert!(cp.one_sided_down(38.0).unwrap().abs() < 1e-8);
}

#[test]
fn grid_csv_dump() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    let ev = ScaleEvaluator::build(&bm_std(), rate(0.5), 1.0, 0.25).unwrap();
    ev.write_grid_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "x,W,Wprime,Z");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("0,0,2,1"));
}
