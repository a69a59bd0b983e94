//! Constant learning-rate SGD for the quantile loss, as an explicit lattice
//! state machine.
//!
//! For τ = p/q the update moves the iterate by +pη/q when the sample exceeds
//! it and by −(q−p)η/q otherwise, so every reachable point is
//! `origin + k·η/q` for an integer k. The state stores that integer offset and
//! reconstructs θ on demand, which keeps the lattice structure exact over any
//! number of steps instead of accumulating floating-point drift.
//!
//! Coordinates of a multi-dimensional stream run as independent scalar chains
//! sharing one sample vector per step.

use crate::error::{Error, Result};
use crate::quantile::RationalQuantile;
use crate::rng::SplitMix64;

/// Configuration of a quantile-SGD run.
#[derive(Clone, Debug)]
pub struct SgdConfig {
    pub quantile: RationalQuantile,
    pub learning_rate: f64,
    /// Initial point, one entry per coordinate.
    pub init: Vec<f64>,
    /// Randomize the start uniformly over the q lattice offsets
    /// `init + j·η/q`, j = 0..q−1. Mixes the cyclic classes so the chain
    /// converges to the stationary distribution as a whole.
    pub randomized_init: bool,
    pub seed: u64,
}

impl SgdConfig {
    pub fn new(quantile: RationalQuantile, learning_rate: f64, init: Vec<f64>) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if init.is_empty() || init.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "init must be a non-empty finite vector".into(),
            ));
        }
        Ok(Self {
            quantile,
            learning_rate,
            init,
            randomized_init: false,
            seed: 0,
        })
    }

    pub fn scalar(quantile: RationalQuantile, learning_rate: f64, init: f64) -> Result<Self> {
        Self::new(quantile, learning_rate, vec![init])
    }

    pub fn with_randomized_init(mut self, seed: u64) -> Self {
        self.randomized_init = true;
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.init.len()
    }
}

/// Uniform draw over the q lattice offsets of the initial point.
pub fn randomized_init(
    theta0: f64,
    quantile: RationalQuantile,
    learning_rate: f64,
    rng: &mut SplitMix64,
) -> f64 {
    let j = rng.next_below(u64::from(quantile.denom()));
    theta0 + j as f64 * quantile.spacing(learning_rate)
}

/// Live position of the SGD chain.
#[derive(Clone, Debug)]
pub struct SgdState {
    config: SgdConfig,
    /// Start point per coordinate (after randomization, when enabled).
    origin: Vec<f64>,
    /// Lattice offsets from the origin, in units of η/q.
    offsets: Vec<i64>,
    steps: u64,
}

impl SgdState {
    pub fn new(config: SgdConfig) -> Self {
        let origin = if config.randomized_init {
            let mut rng = SplitMix64::new(config.seed);
            config
                .init
                .iter()
                .map(|&t| randomized_init(t, config.quantile, config.learning_rate, &mut rng))
                .collect()
        } else {
            config.init.clone()
        };
        let offsets = vec![0; config.dim()];
        Self {
            config,
            origin,
            offsets,
            steps: 0,
        }
    }

    /// One SGD update with a d-dimensional sample.
    pub fn step(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.offsets.len() {
            return Err(Error::DimensionMismatch {
                expected: self.offsets.len(),
                got: sample.len(),
            });
        }
        if let Some(&bad) = sample.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample(bad));
        }
        let up = self.config.quantile.up_step();
        let down = self.config.quantile.down_step();
        let spacing = self.config.quantile.spacing(self.config.learning_rate);
        for ((offset, &origin), &x) in self.offsets.iter_mut().zip(&self.origin).zip(sample) {
            let theta = origin + *offset as f64 * spacing;
            *offset += if x > theta { up } else { down };
        }
        self.steps += 1;
        Ok(())
    }

    pub fn theta(&self, coord: usize) -> f64 {
        self.origin[coord]
            + self.offsets[coord] as f64 * self.config.quantile.spacing(self.config.learning_rate)
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.offsets.len()).map(|i| self.theta(i)).collect()
    }

    /// Lattice offset of a coordinate relative to its origin.
    pub fn offset(&self, coord: usize) -> i64 {
        self.offsets[coord]
    }

    pub fn origin(&self, coord: usize) -> f64 {
        self.origin[coord]
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }
}

/// Trajectory recording options for [`run_stream`].
#[derive(Clone, Copy, Debug)]
pub struct TrajectoryOptions {
    /// Record every `stride`-th step (1 records all steps).
    pub stride: u64,
    /// Maximum number of recorded rows before the run aborts.
    pub budget: usize,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            budget: 1 << 24,
        }
    }
}

/// Thinned record of lattice offsets along a run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub stride: u64,
    pub dim: usize,
    /// Row r holds the offsets after step `(r+1)·stride`, row-major over
    /// coordinates.
    pub rows: Vec<i64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, r: usize) -> &[i64] {
        &self.rows[r * self.dim..(r + 1) * self.dim]
    }
}

/// Folds the SGD update over a sample stream, optionally recording a thinned
/// trajectory.
pub fn run_stream<I, S>(
    config: SgdConfig,
    samples: I,
    record: Option<TrajectoryOptions>,
) -> Result<(SgdState, Option<Trajectory>)>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[f64]>,
{
    let dim = config.dim();
    let mut state = SgdState::new(config);
    let mut trajectory = record.map(|opts| {
        (
            opts,
            Trajectory {
                stride: opts.stride.max(1),
                dim,
                rows: Vec::new(),
            },
        )
    });
    for sample in samples {
        state.step(sample.as_ref())?;
        if let Some((opts, traj)) = trajectory.as_mut() {
            if state.steps.is_multiple_of(traj.stride) {
                if traj.len() >= opts.budget {
                    return Err(Error::TrajectoryBudget {
                        budget: opts.budget,
                    });
                }
                traj.rows.extend_from_slice(&state.offsets);
            }
        }
    }
    Ok((state, trajectory.map(|(_, t)| t)))
}

/// Scalar-stream convenience wrapper around [`run_stream`].
pub fn run_scalar_stream<I>(
    config: SgdConfig,
    samples: I,
    record: Option<TrajectoryOptions>,
) -> Result<(SgdState, Option<Trajectory>)>
where
    I: IntoIterator<Item = f64>,
{
    run_stream(config, samples.into_iter().map(|x| [x]), record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Distribution;

    fn tau(p: u32, q: u32) -> RationalQuantile {
        RationalQuantile::new(p, q).unwrap()
    }

    #[test]
    fn median_steps_move_half_eta() {
        let mut state = SgdState::new(SgdConfig::scalar(tau(1, 2), 0.1, 0.0).unwrap());
        state.step(&[0.7]).unwrap();
        assert!((state.theta(0) - 0.05).abs() < 1e-15);
        let mut state = SgdState::new(SgdConfig::scalar(tau(1, 2), 0.1, 0.0).unwrap());
        state.step(&[-0.2]).unwrap();
        assert!((state.theta(0) + 0.05).abs() < 1e-15);
    }

    #[test]
    fn upper_quartile_down_step() {
        let mut state = SgdState::new(SgdConfig::scalar(tau(3, 4), 0.01, 2.0).unwrap());
        state.step(&[1.9]).unwrap();
        assert!((state.theta(0) - 1.9975).abs() < 1e-12);
        assert_eq!(state.offset(0), -1);
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let mut state = SgdState::new(SgdConfig::scalar(tau(1, 2), 0.1, 0.0).unwrap());
        assert!(matches!(
            state.step(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            state.step(&[f64::NAN]),
            Err(Error::NonFiniteSample(_))
        ));
        assert!(matches!(
            state.step(&[f64::INFINITY]),
            Err(Error::NonFiniteSample(_))
        ));
        // errors leave the step counter alone
        assert_eq!(state.steps(), 0);
    }

    #[test]
    fn randomized_init_hits_all_offsets_uniformly() {
        let q2 = tau(1, 2);
        let mut rng = SplitMix64::new(123);
        let mut at_zero = 0u32;
        let n = 10_000;
        for _ in 0..n {
            let v = randomized_init(0.0, q2, 0.1, &mut rng);
            assert!(v == 0.0 || (v - 0.05).abs() < 1e-15);
            if v == 0.0 {
                at_zero += 1;
            }
        }
        let freq = f64::from(at_zero) / f64::from(n);
        assert!((freq - 0.5).abs() < 0.02, "frequency {freq}");

        let q4 = tau(1, 4);
        let lattice = [0.0, 0.0025, 0.005, 0.0075];
        for _ in 0..100 {
            let v = randomized_init(0.0, q4, 0.01, &mut rng);
            assert!(lattice.iter().any(|&l| (v - l).abs() < 1e-15), "v = {v}");
        }
    }

    #[test]
    fn run_stream_folds_and_keeps_empty_stream_intact() {
        let cfg = SgdConfig::scalar(tau(1, 2), 0.1, 0.0).unwrap();
        let (state, _) = run_scalar_stream(cfg.clone(), [1.0, 1.0, 1.0], None).unwrap();
        assert!((state.theta(0) - 0.15).abs() < 1e-12);
        assert_eq!(state.steps(), 3);

        let (state, _) = run_scalar_stream(cfg, std::iter::empty(), None).unwrap();
        assert_eq!(state.steps(), 0);
        assert_eq!(state.theta(0), 0.0);
    }

    #[test]
    fn long_cauchy_stream_finds_the_upper_quartile() {
        let dist = Distribution::cauchy(0.0, 2.0).unwrap();
        let mut rng = SplitMix64::new(2024);
        let cfg = SgdConfig::scalar(tau(3, 4), 0.01, 0.0).unwrap();
        let (state, _) =
            run_scalar_stream(cfg, (0..100_000).map(|_| dist.sample(&mut rng)), None).unwrap();
        assert!(
            (state.theta(0) - 2.0).abs() < 0.1,
            "theta = {}",
            state.theta(0)
        );
    }

    #[test]
    fn lattice_closure_over_a_million_steps() {
        let dist = Distribution::normal(0.0, 1.0).unwrap();
        let mut rng = SplitMix64::new(9);
        let cfg = SgdConfig::scalar(tau(2, 5), 0.003, 0.25).unwrap();
        let spacing = cfg.quantile.spacing(cfg.learning_rate);
        let mut state = SgdState::new(cfg);
        for _ in 0..1_000_000 {
            state.step(&[dist.sample(&mut rng)]).unwrap();
        }
        let k = (state.theta(0) - state.origin(0)) / spacing;
        assert!((k - k.round()).abs() < 1e-9);
        assert_eq!(k.round() as i64, state.offset(0));
    }

    #[test]
    fn identical_seeds_give_bitwise_identical_trajectories() {
        let dist = Distribution::beta(2.0, 3.0).unwrap();
        let run = || {
            let mut rng = SplitMix64::new(77);
            let cfg = SgdConfig::scalar(tau(3, 4), 0.01, 0.0)
                .unwrap()
                .with_randomized_init(77);
            let samples: Vec<f64> = (0..5_000).map(|_| dist.sample(&mut rng)).collect();
            let (state, traj) = run_scalar_stream(
                cfg,
                samples,
                Some(TrajectoryOptions {
                    stride: 1,
                    budget: 10_000,
                }),
            )
            .unwrap();
            (state.theta(0).to_bits(), traj.unwrap().rows)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn trajectory_budget_is_enforced() {
        let cfg = SgdConfig::scalar(tau(1, 2), 0.1, 0.0).unwrap();
        let res = run_scalar_stream(
            cfg,
            std::iter::repeat_n(1.0, 100),
            Some(TrajectoryOptions {
                stride: 1,
                budget: 10,
            }),
        );
        assert!(matches!(res, Err(Error::TrajectoryBudget { .. })));
    }

    #[test]
    fn coordinates_run_as_independent_scalar_chains() {
        let dist = Distribution::beta(2.0, 3.0).unwrap();
        let mut rng = SplitMix64::new(55);
        let rows: Vec<[f64; 2]> = (0..10_000)
            .map(|_| [dist.sample(&mut rng), dist.sample(&mut rng)])
            .collect();
        let cfg = SgdConfig::new(tau(3, 4), 0.01, vec![0.0, 1.0]).unwrap();
        let (joint, _) = run_stream(cfg, rows.iter(), None).unwrap();

        // replaying each coordinate's sample column alone gives the same chain
        for coord in 0..2 {
            let cfg =
                SgdConfig::scalar(tau(3, 4), 0.01, if coord == 0 { 0.0 } else { 1.0 }).unwrap();
            let (solo, _) = run_scalar_stream(cfg, rows.iter().map(|r| r[coord]), None).unwrap();
            assert_eq!(solo.offset(0), joint.offset(coord));
            assert_eq!(solo.theta(0).to_bits(), joint.theta(coord).to_bits());
        }
    }

    #[test]
    fn mid_stream_error_propagates() {
        let cfg = SgdConfig::scalar(tau(1, 2), 0.1, 0.0).unwrap();
        let res = run_scalar_stream(cfg, [1.0, f64::NAN, 1.0], None);
        assert!(matches!(res, Err(Error::NonFiniteSample(_))));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            // after n steps the lattice offset is ≡ n·p (mod q), and each
            // step moves by exactly +p or p−q units
            #[test]
            fn offsets_follow_the_step_residue(
                seed in 0u64..10_000,
                p_idx in 0usize..6,
                steps in 1u64..400,
            ) {
                let (p, q) = [(1u32, 2u32), (1, 3), (2, 3), (3, 4), (2, 5), (4, 7)][p_idx];
                let level = tau(p, q);
                let dist = Distribution::normal(0.0, 1.0).unwrap();
                let mut rng = SplitMix64::new(seed);
                let mut state = SgdState::new(SgdConfig::scalar(level, 0.01, 0.0).unwrap());
                let mut prev = 0i64;
                for n in 1..=steps {
                    state.step(&[dist.sample(&mut rng)]).unwrap();
                    let delta = state.offset(0) - prev;
                    prop_assert!(delta == level.up_step() || delta == level.down_step());
                    prev = state.offset(0);
                    let residue = (n as i64 * i64::from(p)).rem_euclid(i64::from(q));
                    prop_assert_eq!(state.offset(0).rem_euclid(i64::from(q)), residue);
                }
            }
        }
    }

    #[test]
    fn state_types_move_between_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<SgdState>();
        assert_send_sync::<SgdConfig>();
        assert_send_sync::<Trajectory>();
    }

    // Returning to the start requires a multiple of q steps: enumerate every
    // up/down word of length m <= 2q and check the net lattice move.
    #[test]
    fn return_times_are_multiples_of_the_period() {
        for (p, q) in [(1u32, 2u32), (1, 3), (2, 3), (1, 4), (3, 4), (2, 5), (4, 5)] {
            let tau = tau(p, q);
            for m in 1..=(2 * q as usize) {
                let mut can_return = false;
                for word in 0u32..(1 << m) {
                    let mut net = 0i64;
                    for b in 0..m {
                        net += if word >> b & 1 == 1 {
                            tau.up_step()
                        } else {
                            tau.down_step()
                        };
                    }
                    if net == 0 {
                        can_return = true;
                        break;
                    }
                }
                if m % q as usize != 0 {
                    assert!(!can_return, "tau={tau}: returned after {m} steps");
                }
                if m == q as usize {
                    assert!(can_return, "tau={tau}: no return word of length q");
                }
            }
        }
    }
}
