//! Numeric verification of the chain's structural properties: balance
//! residual, Lyapunov drift, exponential-moment and tail bounds, moments,
//! distance to the Gaussian limit, and cyclic-class convergence.

use crate::error::{Error, Result};
use crate::sgd::Trajectory;
use crate::special;

use super::{LatticeChain, StationaryDistribution};

/// Max balance-equation residual over interior states:
/// `|π_k − π_{k+q−p} F_{k+q−p} − π_{k−p} (1−F_{k−p})|`.
///
/// Interior means both source states lie inside the window, so the reflecting
/// boundary does not enter.
pub fn balance_residual(pi: &StationaryDistribution, chain: &LatticeChain) -> f64 {
    let radius = chain.radius() as i64;
    let p = i64::from(chain.quantile().numer());
    let q = i64::from(chain.quantile().denom());
    let mut worst: f64 = 0.0;
    for k in (-radius + p)..=(radius - (q - p)) {
        let from_above = pi.prob(k + q - p) * chain.cdf_at(k + q - p);
        let from_below = pi.prob(k - p) * (1.0 - chain.cdf_at(k - p));
        worst = worst.max((pi.prob(k) - from_above - from_below).abs());
    }
    worst
}

/// Expected one-step change of the Lyapunov function L(k) = |k| + 1 from
/// state k, in lattice units. Uses the ideal (unclamped) jump targets.
pub fn drift_at(chain: &LatticeChain, k: i64) -> f64 {
    let p = i64::from(chain.quantile().numer());
    let q = i64::from(chain.quantile().denom());
    let f = chain.cdf_at(k);
    let down = ((k + p - q).abs() - k.abs()) as f64;
    let up = ((k + p).abs() - k.abs()) as f64;
    f * down + (1.0 - f) * up
}

/// Outcome of the drift condition scan.
#[derive(Clone, Copy, Debug)]
pub struct DriftReport {
    /// Margin the scan certified against.
    pub epsilon: f64,
    /// Smallest N such that the drift is ≤ −ε for every N < |k| ≤ radius.
    pub exception_radius: i64,
    /// Largest (least negative) drift outside the exception window.
    pub worst_drift_outside: f64,
}

/// Finds the smallest finite window outside of which the drift of
/// L(k) = |k| + 1 stays at or below −ε.
///
/// Errors when no such window fits strictly inside the truncated range, which
/// signals a misconfigured CDF or a truncation too narrow to reach the region
/// where the restoring drift has built up.
pub fn foster_drift_check(chain: &LatticeChain, epsilon: f64) -> Result<DriftReport> {
    let radius = chain.radius() as i64;
    let mut exception_radius = 0i64;
    for k in -radius..=radius {
        if drift_at(chain, k) > -epsilon {
            exception_radius = exception_radius.max(k.abs());
        }
    }
    if exception_radius >= radius {
        return Err(Error::NoDriftWindow { epsilon });
    }
    let mut worst = f64::NEG_INFINITY;
    for k in -radius..=radius {
        if k.abs() > exception_radius {
            worst = worst.max(drift_at(chain, k));
        }
    }
    Ok(DriftReport {
        epsilon,
        exception_radius,
        worst_drift_outside: worst,
    })
}

/// Exponential-moment sum `S = Σ_k η^β π_k |k|^d e^{|k|√η/q}` and whether it
/// stays below q². The bound is an asymptotic statement in η, so large
/// learning rates may legitimately return `holds == false`.
pub fn mgf_bound_check(pi: &StationaryDistribution, beta: f64, d: u32) -> (f64, bool) {
    debug_assert!(beta > 3.0, "the bound is stated for beta > 3");
    let eta = pi.learning_rate();
    let q = f64::from(pi.quantile().denom());
    let ln_eta = eta.ln();
    let sqrt_eta = eta.sqrt();
    let mut sum = 0.0;
    for k in pi.offsets() {
        let p = pi.prob(k);
        if p == 0.0 {
            continue;
        }
        let term = if k == 0 {
            if d == 0 {
                (beta * ln_eta).exp() * p
            } else {
                0.0
            }
        } else {
            let abs_k = k.abs() as f64;
            (beta * ln_eta + f64::from(d) * abs_k.ln() + abs_k * sqrt_eta / q + p.ln()).exp()
        };
        sum += term;
    }
    (sum, sum <= q * q)
}

/// Tail sum `Σ_{|k| ≥ N} π_k |k|^d` with `N = ⌈q·K₀·log(1/η)/√η⌉`, checked
/// against `q²·η^{K₀−β}`.
pub fn tail_bound_check(
    pi: &StationaryDistribution,
    k0: u32,
    beta: f64,
    d: u32,
) -> Result<(f64, bool)> {
    if f64::from(k0) <= beta {
        return Err(Error::InvalidParameter(format!(
            "tail check needs K0 > beta, got K0 = {k0}, beta = {beta}"
        )));
    }
    let eta = pi.learning_rate();
    let q = f64::from(pi.quantile().denom());
    let n_cut = (q * f64::from(k0) * (1.0 / eta).ln() / eta.sqrt()).ceil() as i64;
    if n_cut > pi.radius() as i64 {
        return Err(Error::TruncationTooSmall {
            radius: pi.radius(),
            reason: format!("tail cut N = {n_cut} lies outside the truncated window"),
        });
    }
    let mut tail = 0.0;
    for k in pi.offsets() {
        if k.abs() >= n_cut {
            tail += pi.prob(k) * (k.abs() as f64).powi(d as i32);
        }
    }
    let bound = q * q * eta.powf(f64::from(k0) - beta);
    Ok((tail, tail <= bound))
}

/// First absolute and second moments of the √η-standardized stationary law.
pub fn moment_check(pi: &StationaryDistribution) -> (f64, f64) {
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for k in pi.offsets() {
        let z = pi.standardized(k);
        let p = pi.prob(k);
        m1 += p * z.abs();
        m2 += p * z * z;
    }
    (m1, m2)
}

/// Characteristic function of the √η-standardized stationary law at t,
/// as (real, imaginary) parts. Converges pointwise to the Gaussian
/// `exp(−τ(1−τ)t²/(4f))` as the learning rate shrinks.
pub fn characteristic_function(pi: &StationaryDistribution, t: f64) -> (f64, f64) {
    let mut re = 0.0;
    let mut im = 0.0;
    for k in pi.offsets() {
        let p = pi.prob(k);
        if p > 0.0 {
            let (s, c) = (t * pi.standardized(k)).sin_cos();
            re += p * c;
            im += p * s;
        }
    }
    (re, im)
}

/// Kolmogorov–Smirnov distance between the standardized stationary law (a
/// step function over the lattice) and a continuous reference CDF.
pub fn ks_against<F: Fn(f64) -> f64>(pi: &StationaryDistribution, reference: F) -> f64 {
    let mut cum = 0.0;
    let mut ks: f64 = 0.0;
    for k in pi.offsets() {
        let g = reference(pi.standardized(k));
        ks = ks.max((cum - g).abs());
        cum += pi.prob(k);
        ks = ks.max((cum - g).abs());
    }
    ks
}

/// KS distance between two stationary laws on the same window.
pub fn ks_between(a: &StationaryDistribution, b: &StationaryDistribution) -> f64 {
    assert_eq!(a.radius(), b.radius(), "windows differ");
    let mut cum_a = 0.0;
    let mut cum_b = 0.0;
    let mut ks: f64 = 0.0;
    for k in a.offsets() {
        cum_a += a.prob(k);
        cum_b += b.prob(k);
        ks = ks.max((cum_a - cum_b).abs());
    }
    ks
}

/// KS distance of the standardized stationary law to its Gaussian limit
/// N(0, τ(1−τ)/(2f)), where f is the sampling density at the quantile.
pub fn normality_check(pi: &StationaryDistribution, f_at_quantile: f64) -> Result<f64> {
    if !(f_at_quantile.is_finite() && f_at_quantile > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "density at the quantile must be positive, got {f_at_quantile}"
        )));
    }
    let tau = pi.quantile().value();
    let sigma = (tau * (1.0 - tau) / (2.0 * f_at_quantile)).sqrt();
    Ok(ks_against(pi, |z| special::normal_cdf(z / sigma)))
}

/// Compares the per-class empirical laws of a simulated trajectory with the
/// cyclic restriction of the stationary distribution.
///
/// The chain has period q; at step n it can only occupy states whose lattice
/// offset from the start is ≡ n·p (mod q). Classes are indexed by that
/// position residue. For each class the empirical distribution of the
/// recorded iterates is matched against q·π restricted to the class; the
/// return value is the worst total-variation distance across classes. Rows
/// at or before `burn_in` steps are discarded.
pub fn cyclic_class_check(
    chain: &LatticeChain,
    pi: &StationaryDistribution,
    trajectory: &Trajectory,
    burn_in: u64,
) -> Result<f64> {
    if trajectory.dim != 1 {
        return Err(Error::InvalidParameter(
            "cyclic class check expects a scalar trajectory".into(),
        ));
    }
    let q = i64::from(chain.quantile().denom());
    let p = i64::from(chain.quantile().numer());
    let radius = chain.radius() as i64;
    let anchor_offset = chain.anchor_offset();
    let width = 2 * chain.radius() + 1;
    let mut counts = vec![vec![0u64; width]; q as usize];
    let mut outside = vec![0u64; q as usize];
    let mut totals = vec![0u64; q as usize];
    for (row, &sim_offset) in trajectory.rows.iter().enumerate() {
        let step = (row as u64 + 1) * trajectory.stride;
        if step <= burn_in {
            continue;
        }
        // position residue: offsets from the start satisfy ≡ step·p (mod q)
        let class = ((step % q as u64) as i64 * p.rem_euclid(q)).rem_euclid(q) as usize;
        debug_assert_eq!(sim_offset.rem_euclid(q), class as i64);
        let k = sim_offset - anchor_offset;
        totals[class] += 1;
        if k.abs() <= radius {
            counts[class][(k + radius) as usize] += 1;
        } else {
            outside[class] += 1;
        }
    }
    if totals.iter().all(|&t| t == 0) {
        return Err(Error::InvalidParameter(
            "trajectory has no rows past the burn-in".into(),
        ));
    }
    let mut max_tv: f64 = 0.0;
    for class in 0..q as usize {
        if totals[class] == 0 {
            continue;
        }
        let n = totals[class] as f64;
        let mut tv = outside[class] as f64 / n;
        for k in -radius..=radius {
            // state k belongs to this class iff its offset from the start,
            // k + anchor_offset, has the class's residue
            if (k + anchor_offset).rem_euclid(q) == class as i64 {
                let emp = counts[class][(k + radius) as usize] as f64 / n;
                tv += (emp - q as f64 * pi.prob(k)).abs();
            } else {
                debug_assert_eq!(counts[class][(k + radius) as usize], 0);
            }
        }
        max_tv = max_tv.max(0.5 * tv);
    }
    Ok(max_tv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Distribution;
    use crate::quantile::RationalQuantile;
    use crate::rng::SplitMix64;
    use crate::sgd::{run_scalar_stream, SgdConfig, TrajectoryOptions};

    fn tau(p: u32, q: u32) -> RationalQuantile {
        RationalQuantile::new(p, q).unwrap()
    }

    fn uniform_median_chain(eta: f64, radius: usize) -> (Distribution, LatticeChain) {
        let dist = Distribution::uniform(0.0, 1.0).unwrap();
        let chain = LatticeChain::build(&dist, tau(1, 2), eta, 0.0, radius).unwrap();
        (dist, chain)
    }

    #[test]
    fn solver_output_satisfies_the_balance_equation() {
        let (_, chain) = uniform_median_chain(0.01, 120);
        let pi = chain.stationary().unwrap();
        assert!(balance_residual(&pi, &chain) <= 1e-10);
    }

    #[test]
    fn perturbation_is_detected_by_the_residual() {
        let (_, chain) = uniform_median_chain(0.01, 120);
        let mut pi = chain.stationary().unwrap();
        let mid = pi.radius();
        pi.probs[mid] += 1e-3;
        assert!(balance_residual(&pi, &chain) >= 1e-4);
    }

    #[test]
    fn uniform_vector_is_not_stationary() {
        let dist = Distribution::beta(2.0, 3.0).unwrap();
        let chain = LatticeChain::build(&dist, tau(1, 2), 0.01, 0.0, 80).unwrap();
        let mut pi = chain.stationary().unwrap();
        let width = pi.probs.len();
        pi.probs.iter_mut().for_each(|p| *p = 1.0 / width as f64);
        let max_p = 1.0 / width as f64;
        assert!(balance_residual(&pi, &chain) > 0.01 * max_p);
    }

    #[test]
    fn drift_matches_direct_expectations() {
        // median chain on Uniform(0,1): state x = 0.75 has F = 0.75
        let (_, chain) = uniform_median_chain(0.01, 120);
        let k = 50; // x = 0.5 + 50·0.005 = 0.75
        assert!((chain.cdf_at(k) - 0.75).abs() < 1e-12);
        assert!((drift_at(&chain, k) + 0.5).abs() < 1e-12);

        // τ = 3/4: drift is 3 − 4F once |k| clears the jump sizes
        let dist = Distribution::uniform(0.0, 1.0).unwrap();
        let chain = LatticeChain::build(&dist, tau(3, 4), 0.01, 0.0, 90).unwrap();
        for k in 4..=90 {
            let f = chain.cdf_at(k);
            assert!(
                (drift_at(&chain, k) - (3.0 - 4.0 * f)).abs() < 1e-12,
                "k={k}"
            );
            if f > 0.875 {
                assert!(drift_at(&chain, k) < -0.5);
            }
        }
        // at the origin the Lyapunov drift is strictly positive
        assert!(drift_at(&chain, 0) > 0.0);
    }

    #[test]
    fn drift_window_is_finite_with_margin() {
        let (_, chain) = uniform_median_chain(0.01, 120);
        let report = foster_drift_check(&chain, 0.25).unwrap();
        assert!(report.exception_radius < 120);
        assert!(report.worst_drift_outside <= -0.25);
        // demanding more margin than the chain ever develops must fail
        assert!(matches!(
            foster_drift_check(&chain, 1.5),
            Err(Error::NoDriftWindow { .. })
        ));
    }

    #[test]
    fn mgf_bound_holds_at_small_learning_rates() {
        let (_, chain) = uniform_median_chain(0.01, 120);
        let pi = chain.stationary().unwrap();
        for d in 0..=2 {
            let (value, holds) = mgf_bound_check(&pi, 3.5, d);
            assert!(holds, "d={d}: S = {value}");
        }
        // termwise domination: only k = 0 separates d = 0 from d = 2
        let (s0, _) = mgf_bound_check(&pi, 3.5, 0);
        let (s2, _) = mgf_bound_check(&pi, 3.5, 2);
        let eta_beta = 0.01f64.powf(3.5);
        assert!(s0 <= s2 + eta_beta * pi.prob(0) + 1e-18);
    }

    #[test]
    fn mgf_bound_can_fail_at_large_learning_rates() {
        let dist = Distribution::cauchy(0.0, 2.0).unwrap();
        let chain = LatticeChain::build(&dist, tau(3, 4), 0.5, 0.0, 2000).unwrap();
        let pi = chain.stationary().unwrap();
        let (value, holds) = mgf_bound_check(&pi, 3.5, 2);
        assert!(!holds, "S = {value} unexpectedly within the bound");
        assert!(value.is_finite());
    }

    #[test]
    fn tail_cut_outside_the_window_errors() {
        let (_, chain) = uniform_median_chain(0.01, 120);
        let pi = chain.stationary().unwrap();
        assert!(matches!(
            tail_bound_check(&pi, 5, 3.5, 0),
            Err(Error::TruncationTooSmall { .. })
        ));
        assert!(tail_bound_check(&pi, 3, 3.5, 0).is_err()); // K0 <= beta
    }

    #[test]
    fn moments_of_a_symmetric_chain() {
        let dist = Distribution::normal(0.0, 1.0).unwrap();
        let chain = LatticeChain::build(&dist, tau(1, 2), 0.01, 0.0, 160).unwrap();
        let pi = chain.stationary().unwrap();
        let signed: f64 = pi.offsets().map(|k| pi.prob(k) * pi.standardized(k)).sum();
        assert!(signed.abs() < 1e-10);
        let (m1, m2) = moment_check(&pi);
        assert!(m1 > 0.0 && m2 > 0.0);
        // standardized second moment is stable when η halves
        let chain_half = LatticeChain::build(&dist, tau(1, 2), 0.005, 0.0, 230).unwrap();
        let (_, m2_half) = moment_check(&chain_half.stationary().unwrap());
        assert!(
            (m2_half - m2).abs() < 0.1 * m2,
            "m2 {m2} vs {m2_half} after halving eta"
        );
    }

    #[test]
    fn ks_of_a_distribution_with_itself_is_zero() {
        let (_, chain) = uniform_median_chain(0.01, 120);
        let pi = chain.stationary().unwrap();
        assert_eq!(ks_between(&pi, &pi), 0.0);
    }

    #[test]
    fn normality_ks_is_small_for_small_eta() {
        let (dist, chain) = uniform_median_chain(0.0025, 400);
        let f = dist.pdf(0.5);
        let pi = chain.stationary().unwrap();
        let ks = normality_check(&pi, f).unwrap();
        assert!(ks < 0.05, "ks = {ks}");
        assert!(normality_check(&pi, 0.0).is_err());
    }

    #[test]
    fn characteristic_function_approaches_the_gaussian_limit() {
        let (dist, chain) = uniform_median_chain(0.0025, 400);
        let sigma2 = 0.25 / (2.0 * dist.pdf(0.5));
        let pi = chain.stationary().unwrap();
        for t in [0.5, 1.0, 2.0, 4.0] {
            let (re, im) = characteristic_function(&pi, t);
            let limit = (-0.5 * sigma2 * t * t).exp();
            assert!(
                (re - limit).abs() < 0.02,
                "t={t}: re {re} vs limit {limit}"
            );
            // symmetric law: imaginary part stays near zero
            assert!(im.abs() < 0.02, "t={t}: im {im}");
        }
        // and at t = 0 the value is exactly the total mass
        let (re0, im0) = characteristic_function(&pi, 0.0);
        assert!((re0 - 1.0).abs() < 1e-12 && im0 == 0.0);
    }

    #[test]
    fn stride_q_samples_a_single_class() {
        // thinning by the period picks out one cyclic class; the check then
        // compares just that class against q·π restricted to it
        let dist = Distribution::uniform(0.0, 1.0).unwrap();
        let level = tau(3, 4);
        let radius = LatticeChain::default_radius(&dist, level, 0.04).unwrap();
        let chain = LatticeChain::build(&dist, level, 0.04, 0.0, radius).unwrap();
        let pi = chain.stationary().unwrap();
        let mut rng = SplitMix64::new(23);
        let cfg = SgdConfig::scalar(level, 0.04, 0.0).unwrap();
        let (_, traj) = run_scalar_stream(
            cfg,
            (0..400_000).map(|_| dist.sample(&mut rng)),
            Some(TrajectoryOptions {
                stride: 4,
                budget: 100_000,
            }),
        )
        .unwrap();
        let traj = traj.unwrap();
        assert_eq!(traj.stride, 4);
        let tv = cyclic_class_check(&chain, &pi, &traj, 20_000).unwrap();
        assert!(tv < 0.05, "tv = {tv}");
    }

    #[test]
    fn cyclic_classes_split_the_mass_evenly() {
        let (_, chain) = uniform_median_chain(0.01, 120);
        let pi = chain.stationary().unwrap();
        let even: f64 = pi
            .offsets()
            .filter(|k| (k + chain.anchor_offset()).rem_euclid(2) == 0)
            .map(|k| pi.prob(k))
            .sum();
        assert!((even - 0.5).abs() < 0.01, "even-class mass {even}");
    }

    #[test]
    fn short_trajectory_tracks_the_cyclic_classes() {
        // levels with multi-unit jumps exercise the class bookkeeping: for
        // τ = 2/5 the chain moves +2 or −3 lattice units per step
        for (p, q) in [(1u32, 2u32), (2, 5), (3, 4)] {
            let dist = Distribution::uniform(0.0, 1.0).unwrap();
            let level = tau(p, q);
            let radius = LatticeChain::default_radius(&dist, level, 0.04).unwrap();
            let chain = LatticeChain::build(&dist, level, 0.04, 0.0, radius).unwrap();
            let pi = chain.stationary().unwrap();
            let mut rng = SplitMix64::new(17);
            let cfg = SgdConfig::scalar(level, 0.04, 0.0).unwrap();
            let (_, traj) = run_scalar_stream(
                cfg,
                (0..200_000).map(|_| dist.sample(&mut rng)),
                Some(TrajectoryOptions {
                    stride: 1,
                    budget: 200_000,
                }),
            )
            .unwrap();
            let tv = cyclic_class_check(&chain, &pi, &traj.unwrap(), 20_000).unwrap();
            assert!(tv < 0.05, "tau={level}: tv = {tv}");
        }
    }
}
