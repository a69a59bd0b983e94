//! Fully online recursive kernel density estimation.
//!
//! The estimate after n updates is `(1/B_n) Σ_{k≤n} K((x_k − X_k)/b_k)` with
//! shrinking bandwidths `b_k = k^{-1/5}` and `B_n = Σ b_k`. Each update is
//! O(1) in time and memory, so the estimator runs alongside the SGD stream.
//!
//! The evaluation point `x_k` of each term is chosen by the caller. The
//! inference pipeline plugs in the current SGD iterate, since the true
//! quantile is unknown online; a fixed evaluation point is used by the tests
//! that compare against the batch form of the same sum.

use crate::error::{Error, Result};

/// Kernel family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// Indicator of (−1/2, 1/2).
    Rectangle,
    /// 0.75·(1 − v²) on [−1, 1].
    Epanechnikov,
}

/// A bounded-support kernel together with its verified constants.
#[derive(Clone, Copy, Debug)]
pub struct Kernel {
    kind: KernelKind,
    support_radius: f64,
    mass: f64,
    squared_integral: f64,
    curvature_bound: f64,
}

impl Kernel {
    /// Builds the kernel and verifies its constants by midpoint quadrature:
    /// unit mass within 1e-9, and finiteness of sup|K| + ∫u²|K| (tolerance
    /// 1e-6 against the analytic values).
    pub fn new(kind: KernelKind) -> Self {
        let support_radius = match kind {
            KernelKind::Rectangle => 0.5,
            KernelKind::Epanechnikov => 1.0,
        };
        let probe = Self {
            kind,
            support_radius,
            mass: 1.0,
            squared_integral: 0.0,
            curvature_bound: 0.0,
        };
        let n = 50_000;
        let h = 2.0 * support_radius / n as f64;
        let (mut mass, mut sq, mut second) = (0.0, 0.0, 0.0);
        let mut sup: f64 = 0.0;
        for i in 0..n {
            let u = -support_radius + (i as f64 + 0.5) * h;
            let k = probe.eval(u);
            mass += k * h;
            sq += k * k * h;
            second += u * u * k.abs() * h;
            sup = sup.max(k.abs());
        }
        assert!(
            (mass - 1.0).abs() < 1e-9,
            "{kind:?} kernel mass {mass} is not 1"
        );
        let analytic_sq = match kind {
            KernelKind::Rectangle => 1.0,
            KernelKind::Epanechnikov => 0.6,
        };
        assert!((sq - analytic_sq).abs() < 1e-6);
        let curvature_bound = sup + second;
        assert!(curvature_bound.is_finite());
        Self {
            kind,
            support_radius,
            mass,
            squared_integral: analytic_sq,
            curvature_bound,
        }
    }

    pub fn rectangle() -> Self {
        Self::new(KernelKind::Rectangle)
    }

    pub fn epanechnikov() -> Self {
        Self::new(KernelKind::Epanechnikov)
    }

    /// Pointwise kernel value K(v).
    pub fn eval(&self, v: f64) -> f64 {
        match self.kind {
            KernelKind::Rectangle => {
                if v.abs() < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::Epanechnikov => {
                if v.abs() <= 1.0 {
                    0.75 * (1.0 - v * v)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Support radius M: K vanishes outside [−M, M].
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// ∫K, equal to 1 for both kernels.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// κ = ∫K².
    pub fn squared_integral(&self) -> f64 {
        self.squared_integral
    }

    /// sup|K| + ∫u²|K|, the finite constant the support check verifies.
    pub fn curvature_bound(&self) -> f64 {
        self.curvature_bound
    }
}

/// Bandwidth b_k = k^{-1/5}; indexing starts at 1 so b_1 = 1.
pub fn bandwidth(k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "bandwidth index starts at 1".into(),
        ));
    }
    Ok((k as f64).powf(-0.2))
}

/// Running state of the recursive estimator.
#[derive(Clone, Copy, Debug)]
pub struct KdeState {
    kernel: Kernel,
    /// Σ_k K((x_k − X_k)/b_k).
    weighted_sum: f64,
    /// B_n = Σ_k b_k.
    bandwidth_sum: f64,
    count: u64,
}

impl KdeState {
    pub fn new(kernel: Kernel) -> Self {
        Self {
            kernel,
            weighted_sum: 0.0,
            bandwidth_sum: 0.0,
            count: 0,
        }
    }

    /// Absorbs one sample, with the kernel term evaluated at `x_eval`.
    pub fn update(&mut self, x_eval: f64, sample: f64) -> Result<()> {
        if !x_eval.is_finite() || !sample.is_finite() {
            return Err(Error::NonFiniteSample(if x_eval.is_finite() {
                sample
            } else {
                x_eval
            }));
        }
        self.count += 1;
        let b = bandwidth(self.count)?;
        self.weighted_sum += self.kernel.eval((x_eval - sample) / b);
        self.bandwidth_sum += b;
        Ok(())
    }

    /// Current density estimate; errors before the first sample.
    pub fn estimate(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::NoData);
        }
        Ok(self.weighted_sum / self.bandwidth_sum)
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn bandwidth_sum(&self) -> f64 {
        self.bandwidth_sum
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Distribution;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    #[test]
    fn kernel_pointwise_values() {
        let rect = Kernel::rectangle();
        assert_eq!(rect.eval(0.0), 1.0);
        assert_eq!(rect.eval(0.7), 0.0);
        assert_eq!(rect.eval(0.5), 0.0); // open support
        let epa = Kernel::epanechnikov();
        assert_eq!(epa.eval(0.0), 0.75);
        assert_eq!(epa.eval(1.0), 0.0);
        assert_eq!(epa.eval(1.2), 0.0);
    }

    #[test]
    fn kernel_constants() {
        let rect = Kernel::rectangle();
        assert!((rect.mass() - 1.0).abs() < 1e-9);
        assert!((rect.squared_integral() - 1.0).abs() < 1e-12);
        // sup|K| + ∫u²K = 1 + 1/12
        assert!((rect.curvature_bound() - (1.0 + 1.0 / 12.0)).abs() < 1e-6);
        let epa = Kernel::epanechnikov();
        assert!((epa.mass() - 1.0).abs() < 1e-9);
        assert!((epa.squared_integral() - 0.6).abs() < 1e-12);
        // sup|K| + ∫u²K = 3/4 + 1/5
        assert!((epa.curvature_bound() - 0.95).abs() < 1e-6);
    }

    #[test]
    fn bandwidth_values() {
        assert_eq!(bandwidth(1).unwrap(), 1.0);
        assert!((bandwidth(32).unwrap() - 0.5).abs() < 1e-15);
        assert!((bandwidth(100_000).unwrap() - 0.1).abs() < 1e-15);
        assert!(bandwidth(0).is_err());
    }

    #[test]
    fn single_update_examples() {
        let mut kde = KdeState::new(Kernel::rectangle());
        kde.update(0.0, 0.3).unwrap();
        assert_eq!(kde.estimate().unwrap(), 1.0);

        let mut kde = KdeState::new(Kernel::rectangle());
        kde.update(0.0, 0.6).unwrap();
        assert_eq!(kde.estimate().unwrap(), 0.0);

        assert!(matches!(
            KdeState::new(Kernel::rectangle()).estimate(),
            Err(Error::NoData)
        ));
        assert!(KdeState::new(Kernel::rectangle())
            .update(0.0, f64::NAN)
            .is_err());
    }

    #[test]
    fn bandwidth_sum_accumulates_the_series() {
        let mut kde = KdeState::new(Kernel::rectangle());
        let mut prev = 0.0;
        for k in 1..=500u64 {
            kde.update(0.0, 10.0).unwrap();
            let expect: f64 = (1..=k).map(|j| (j as f64).powf(-0.2)).sum();
            assert!((kde.bandwidth_sum() - expect).abs() <= 1e-9 * expect);
            assert!(kde.bandwidth_sum() > prev);
            prev = kde.bandwidth_sum();
        }
    }

    #[test]
    fn two_samples_inside_the_window() {
        // both terms contribute 1; B_2 = 1 + 2^{-1/5}
        let mut kde = KdeState::new(Kernel::rectangle());
        kde.update(0.0, 0.1).unwrap();
        kde.update(0.0, -0.2).unwrap();
        let expected = 2.0 / (1.0 + 2f64.powf(-0.2));
        assert!((kde.estimate().unwrap() - expected).abs() < 1e-15);
    }

    fn batch_estimate(kernel: &Kernel, evals: &[f64], samples: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut bsum = 0.0;
        for (k, (&x, &s)) in evals.iter().zip(samples).enumerate() {
            let b = ((k + 1) as f64).powf(-0.2);
            num += kernel.eval((x - s) / b);
            bsum += b;
        }
        num / bsum
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        // online updates equal the batch sum to 1e-12 relative
        #[test]
        fn online_matches_batch(seed in 0u64..1_000, n in 1usize..2_000) {
            let mut rng = SplitMix64::new(seed);
            let dist = Distribution::normal(0.0, 1.0).unwrap();
            for kernel in [Kernel::rectangle(), Kernel::epanechnikov()] {
                let samples: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
                let evals: Vec<f64> = (0..n).map(|_| 2.0 * rng.next_open01() - 1.0).collect();
                let mut kde = KdeState::new(kernel);
                for (&x, &s) in evals.iter().zip(&samples) {
                    kde.update(x, s).unwrap();
                }
                let online = kde.estimate().unwrap();
                let batch = batch_estimate(&kernel, &evals, &samples);
                prop_assert!((online - batch).abs() <= 1e-12 * batch.abs().max(1.0));
                prop_assert!(online >= 0.0);
            }
        }
    }

    #[test]
    fn online_matches_batch_at_ten_thousand() {
        let mut rng = SplitMix64::new(4);
        let dist = Distribution::beta(2.0, 3.0).unwrap();
        let samples: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
        let kernel = Kernel::epanechnikov();
        let mut kde = KdeState::new(kernel);
        for &s in &samples {
            kde.update(0.5, s).unwrap();
        }
        let evals = vec![0.5; samples.len()];
        let batch = batch_estimate(&kernel, &evals, &samples);
        let online = kde.estimate().unwrap();
        assert!((online - batch).abs() <= 1e-12 * batch);
    }

    #[test]
    fn consistent_at_the_true_quantile() {
        for (dist, level) in [
            (Distribution::beta(2.0, 3.0).unwrap(), 0.75),
            (Distribution::cauchy(0.0, 2.0).unwrap(), 0.75),
        ] {
            let x = dist.quantile(level).unwrap();
            let truth = dist.pdf(x);
            let mut rng = SplitMix64::new(31);
            let mut kde = KdeState::new(Kernel::epanechnikov());
            for _ in 0..100_000 {
                kde.update(x, dist.sample(&mut rng)).unwrap();
            }
            let est = kde.estimate().unwrap();
            assert!(
                (est - truth).abs() < 0.1 * truth,
                "{dist}: estimate {est} vs density {truth}"
            );
        }
    }
}
