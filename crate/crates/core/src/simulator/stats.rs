use crate::error::{Error, Result};

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain("NaN in sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// `#{samples ≤ x} / n`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Empirical `p`-quantile (smallest sample with CDF ≥ p).
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let rank = (p * n as f64).ceil().clamp(1.0, n as f64) as usize;
        self.sorted[rank - 1]
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }
}

pub fn empirical_cdf(samples: &[f64]) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(samples.to_vec())
}

/// One-sample Kolmogorov–Smirnov distance `sup_x |F_n(x) − F(x)|` against a
/// continuous `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(cdf: F, samples: &[f64]) -> Result<f64> {
    let ecdf = empirical_cdf(samples)?;
    let s = ecdf.samples();
    let n = s.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < s.len() {
        let mut j = i;
        while j < s.len() && s[j] == s[i] {
            j += 1;
        }
        let f = cdf(s[i]);
        d = d
            .max((f - i as f64 / n).abs())
            .max((j as f64 / n - f).abs());
        i = j;
    }
    Ok(d.min(1.0))
}

/// Two-sample Kolmogorov–Smirnov distance, exact under ties.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = empirical_cdf(a)?;
    let b = empirical_cdf(b)?;
    let (sa, sb) = (a.samples(), b.samples());
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ecdf_examples() {
        let e = empirical_cdf(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.eval(2.0), 2.0 / 3.0);
        assert_eq!(e.eval(f64::NEG_INFINITY), 0.0);
        assert_eq!(e.eval(f64::INFINITY), 1.0);
        assert_eq!(empirical_cdf(&[4.0; 5]).unwrap().eval(4.0), 1.0);
        assert!(matches!(empirical_cdf(&[]), Err(Error::EmptySample)));
        assert_eq!(e.quantile(0.5), 2.0);
        assert_eq!(e.quantile(0.0), 1.0);
        assert_eq!(e.quantile(1.0), 3.0);
    }

    #[test]
    fn ks_examples() {
        let n = 1000;
        let ranks: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let exp_samples: Vec<f64> = ranks.iter().map(|p| -(1.0 - p).ln()).collect();
        let d = ks_statistic(|x| 1.0 - (-x).exp(), &exp_samples).unwrap();
        assert!(d <= 1.0 / n as f64);
        assert_eq!(ks_statistic(|_| 0.0, &exp_samples).unwrap(), 1.0);
        assert!(ks_statistic(|x| x, &[]).is_err());
        assert!(ks_two_sample(&[1.0], &[]).is_err());
    }

    #[test]
    fn two_sample_ties() {
        assert_eq!(
            ks_two_sample(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap(),
            1.0 / 3.0
        );
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn dkw_bound_on_uniforms() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(7);
        let samples: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        // P(D > 0.01) ≤ 2 e^{−2·10⁵·10⁻⁴} = 2e^{-20}
        assert!(ks_statistic(|x| x.clamp(0.0, 1.0), &samples).unwrap() <= 0.01);
    }

    fn brute_two_sample(a: &[f64], b: &[f64]) -> f64 {
        let ea = empirical_cdf(a).unwrap();
        let eb = empirical_cdf(b).unwrap();
        a.iter()
            .chain(b)
            .map(|&x| (ea.eval(x) - eb.eval(x)).abs())
            .fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn ecdf_is_monotone_in_unit_interval(
            samples in prop::collection::vec(-5i32..5, 1..40),
            probes in prop::collection::vec(-6.0..6.0f64, 1..20),
        ) {
            let samples: Vec<f64> = samples.into_iter().map(f64::from).collect();
            let e = empirical_cdf(&samples).unwrap();
            let mut probes = probes;
            probes.sort_by(f64::total_cmp);
            let values: Vec<f64> = probes.iter().map(|&x| e.eval(x)).collect();
            prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn two_sample_matches_brute_force(
            a in prop::collection::vec(0i32..6, 1..30),
            b in prop::collection::vec(0i32..6, 1..30),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let d = ks_two_sample(&a, &b).unwrap();
            prop_assert!((d - brute_two_sample(&a, &b)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
