//! Monte Carlo harness: coverage of the online confidence intervals,
//! mean-squared-error curves, and normality diagnostics of the final
//! iterates, replicated over independent seeded streams.
//!
//! Replications are embarrassingly parallel. Every replication derives its
//! own counter-based stream from the base seed, results are collected in
//! replication order, and aggregation is a sequential fold, so reports are
//! byte-identical regardless of the worker count.

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::inference::{self, DENSITY_FLOOR};
use crate::kde::{KdeState, Kernel, KernelKind};
use crate::quantile::RationalQuantile;
use crate::rng::SplitMix64;
use crate::sgd::{SgdConfig, SgdState};
use crate::special;

/// Full description of one experiment run.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub dist: Distribution,
    pub quantile: RationalQuantile,
    pub eta_grid: Vec<f64>,
    pub n_grid: Vec<u64>,
    pub replications: u32,
    pub alpha: f64,
    pub seed: u64,
    /// SGD-only steps discarded before the measured stream starts.
    pub burn_in: u64,
    pub theta0: f64,
    pub kernel: KernelKind,
    /// Worker pool size; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(
        dist: Distribution,
        quantile: RationalQuantile,
        eta_grid: Vec<f64>,
        n_grid: Vec<u64>,
        replications: u32,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            dist,
            quantile,
            eta_grid,
            n_grid,
            replications,
            alpha,
            seed,
            burn_in: 0,
            theta0: 0.0,
            kernel: KernelKind::Epanechnikov,
            threads: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::InvalidParameter(
                "need at least 1 replication".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.eta_grid.is_empty() || self.n_grid.is_empty() {
            return Err(Error::InvalidParameter("grids must be non-empty".into()));
        }
        if self.eta_grid.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return Err(Error::InvalidParameter(
                "learning rates must be positive".into(),
            ));
        }
        if !self.theta0.is_finite() {
            return Err(Error::InvalidParameter("theta0 must be finite".into()));
        }
        Ok(())
    }

    fn checkpoints(&self) -> Vec<u64> {
        let mut ns = self.n_grid.clone();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    fn run_pooled<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(job()),
            Some(t) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
                Ok(pool.install(job))
            }
        }
    }
}

/// One (η, n) cell of the coverage table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoverageCell {
    pub eta: f64,
    pub n: u64,
    /// covered replications / total replications
    pub coverage: f64,
    pub half_width: f64,
    pub mse: f64,
    /// KS distance of the pooled standardized finals to the limit normal.
    pub ks: f64,
    /// Replications whose density estimate fell below the floor.
    pub failed: u32,
}

/// Coverage of the online confidence intervals over an (η, n) grid.
#[derive(Clone, Debug, Serialize)]
pub struct CoverageReport {
    pub cells: Vec<CoverageCell>,
}

/// Iterate and density estimate of one replication at each checkpoint.
struct RepTrace {
    theta: Vec<f64>,
    f_hat: Vec<f64>,
}

/// Runs one replication at a fixed η, recording every checkpoint. A
/// checkpoint of 0 reads the initial point (with a density estimate of 0).
///
/// Each step first feeds the sample to the density estimator, with the kernel
/// term evaluated at the current iterate, and then applies the SGD update --
/// the fully online plug-in protocol.
fn run_replication(
    cfg: &ExperimentConfig,
    eta: f64,
    rep: u32,
    checkpoints: &[u64],
) -> Result<RepTrace> {
    let mut rng = SplitMix64::stream(cfg.seed, u64::from(rep));
    let sgd_cfg = SgdConfig::scalar(cfg.quantile, eta, cfg.theta0)?;
    let mut state = SgdState::new(sgd_cfg);
    for _ in 0..cfg.burn_in {
        let x = cfg.dist.sample(&mut rng);
        state.step(&[x])?;
    }
    let mut kde = KdeState::new(Kernel::new(cfg.kernel));
    let mut trace = RepTrace {
        theta: Vec::with_capacity(checkpoints.len()),
        f_hat: Vec::with_capacity(checkpoints.len()),
    };
    let mut next = 0usize;
    if checkpoints.first() == Some(&0) {
        trace.theta.push(state.theta(0));
        trace.f_hat.push(0.0);
        next = 1;
    }
    let n_max = *checkpoints.last().unwrap();
    for n in 1..=n_max {
        let x = cfg.dist.sample(&mut rng);
        kde.update(state.theta(0), x)?;
        state.step(&[x])?;
        if checkpoints[next] == n {
            trace.theta.push(state.theta(0));
            trace.f_hat.push(kde.estimate()?);
            next += 1;
            if next == checkpoints.len() {
                break;
            }
        }
    }
    Ok(trace)
}

fn run_all_replications(
    cfg: &ExperimentConfig,
    eta: f64,
    checkpoints: &[u64],
) -> Result<Vec<RepTrace>> {
    (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, eta, rep, checkpoints))
        .collect()
}

/// Empirical coverage, interval width, MSE and normality KS per (η, n) cell.
pub fn coverage_experiment(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let checkpoints = cfg.checkpoints();
    if checkpoints[0] == 0 {
        return Err(Error::InvalidParameter(
            "coverage needs n >= 1 at every checkpoint".into(),
        ));
    }
    let target = cfg.dist.quantile(cfg.quantile.value())?;
    let f_true = cfg.dist.pdf(target);
    let sigma_limit = inference::asymptotic_variance(cfg.quantile, f_true)?.sqrt();
    cfg.run_pooled(|| {
        let mut cells = Vec::new();
        for &eta in &cfg.eta_grid {
            let traces = run_all_replications(cfg, eta, &checkpoints)?;
            for (ci, &n) in checkpoints.iter().enumerate() {
                let mut covered = 0u32;
                let mut failed = 0u32;
                let mut width_sum = 0.0;
                let mut mse = 0.0;
                let mut standardized: Vec<f64> = Vec::with_capacity(traces.len());
                for trace in &traces {
                    let theta = trace.theta[ci];
                    let f_hat = trace.f_hat[ci];
                    mse += (theta - target) * (theta - target);
                    standardized.push((theta - target) / eta.sqrt());
                    if f_hat < DENSITY_FLOOR {
                        failed += 1;
                        continue;
                    }
                    let interval =
                        inference::confidence_interval(theta, eta, cfg.quantile, f_hat, cfg.alpha)?;
                    width_sum += interval.half_width;
                    if interval.contains(target) {
                        covered += 1;
                    }
                }
                let total = cfg.replications as f64;
                let ok = cfg.replications - failed;
                standardized.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let ks = ks_empirical(&standardized, |z| special::normal_cdf(z / sigma_limit));
                cells.push(CoverageCell {
                    eta,
                    n,
                    coverage: f64::from(covered) / total,
                    half_width: if ok > 0 {
                        width_sum / f64::from(ok)
                    } else {
                        0.0
                    },
                    mse: mse / total,
                    ks,
                    failed,
                });
            }
        }
        Ok(CoverageReport { cells })
    })?
}

/// One point of the MSE-versus-step-count curve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MsePoint {
    pub eta: f64,
    pub n: u64,
    pub mse: f64,
}

/// Mean squared error of θ_n against the true quantile at each checkpoint.
/// A checkpoint of 0 reports the squared offset of the initial point.
pub fn mse_curve(cfg: &ExperimentConfig) -> Result<Vec<MsePoint>> {
    cfg.validate()?;
    let checkpoints = cfg.checkpoints();
    let target = cfg.dist.quantile(cfg.quantile.value())?;
    cfg.run_pooled(|| {
        let mut points = Vec::new();
        for &eta in &cfg.eta_grid {
            let traces = run_all_replications(cfg, eta, &checkpoints)?;
            for (ci, &n) in checkpoints.iter().enumerate() {
                let mse = traces
                    .iter()
                    .map(|t| (t.theta[ci] - target) * (t.theta[ci] - target))
                    .sum::<f64>()
                    / cfg.replications as f64;
                points.push(MsePoint { eta, n, mse });
            }
        }
        Ok(points)
    })?
}

/// Histogram bin of the standardized finals.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u32,
}

/// Normality diagnostic at one learning rate.
#[derive(Clone, Debug, Serialize)]
pub struct NormalityCell {
    pub eta: f64,
    pub n: u64,
    pub ks: f64,
    pub bins: Vec<HistogramBin>,
}

/// Pools the standardized final iterates across replications and reports a
/// histogram plus the KS distance to the limit normal, per learning rate.
/// Uses the largest entry of the n grid as the run length.
pub fn normality_experiment(cfg: &ExperimentConfig) -> Result<Vec<NormalityCell>> {
    cfg.validate()?;
    let n = *cfg.checkpoints().last().unwrap();
    if n == 0 {
        return Err(Error::InvalidParameter("normality needs n >= 1".into()));
    }
    let target = cfg.dist.quantile(cfg.quantile.value())?;
    let f_true = cfg.dist.pdf(target);
    let sigma_limit = inference::asymptotic_variance(cfg.quantile, f_true)?.sqrt();
    cfg.run_pooled(|| {
        let mut cells = Vec::new();
        for &eta in &cfg.eta_grid {
            let traces = run_all_replications(cfg, eta, &[n])?;
            let mut standardized: Vec<f64> = traces
                .iter()
                .map(|t| (t.theta[0] - target) / eta.sqrt())
                .collect();
            standardized.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let ks = ks_empirical(&standardized, |z| special::normal_cdf(z / sigma_limit));
            // 40 bins over ±4 limit standard deviations
            let bins = 40usize;
            let lo = -4.0 * sigma_limit;
            let width = 8.0 * sigma_limit / bins as f64;
            let mut counts = vec![0u32; bins];
            for &z in &standardized {
                let b = ((z - lo) / width).floor();
                if b >= 0.0 && (b as usize) < bins {
                    counts[b as usize] += 1;
                }
            }
            cells.push(NormalityCell {
                eta,
                n,
                ks,
                bins: counts
                    .iter()
                    .enumerate()
                    .map(|(i, &count)| HistogramBin {
                        lo: lo + i as f64 * width,
                        hi: lo + (i + 1) as f64 * width,
                        count,
                    })
                    .collect(),
            });
        }
        Ok(cells)
    })?
}

/// One-sample KS statistic of a sorted sample against a continuous CDF.
pub fn ks_empirical<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let c = cdf(x);
        ks = ks
            .max((c - i as f64 / n).abs())
            .max((c - (i + 1) as f64 / n).abs());
    }
    ks
}

/// Asymptotic critical value of the one-sample KS statistic.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    // c(α) = sqrt(-ln(α/2)/2)
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c / (n as f64).sqrt()
}

/// Final state of the fully online estimation pipeline.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OnlineEstimate {
    pub theta: f64,
    pub f_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: u64,
}

/// Streams SGD and the recursive density estimate over a sample sequence and
/// returns the point estimate with its (1−α) interval.
pub fn online_estimate<I: IntoIterator<Item = f64>>(
    quantile: RationalQuantile,
    eta: f64,
    kernel: KernelKind,
    alpha: f64,
    theta0: f64,
    samples: I,
) -> Result<OnlineEstimate> {
    let mut state = SgdState::new(SgdConfig::scalar(quantile, eta, theta0)?);
    let mut kde = KdeState::new(Kernel::new(kernel));
    for x in samples {
        kde.update(state.theta(0), x)?;
        state.step(&[x])?;
    }
    let f_hat = kde.estimate()?;
    let interval = inference::confidence_interval(state.theta(0), eta, quantile, f_hat, alpha)?;
    Ok(OnlineEstimate {
        theta: state.theta(0),
        f_hat,
        ci_lo: interval.lo(),
        ci_hi: interval.hi(),
        n: state.steps(),
    })
}

// ─── output formatting ──────────────────────────────────────────────────────

/// Rounds to 6 significant digits; reports print rounded values so CSV and
/// JSON agree byte-for-byte across runs.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor();
    let scale = 10f64.powi(5 - mag as i32);
    (x * scale).round() / scale
}

impl CoverageReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eta,n,coverage,half_width,mse,ks,failed\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                round_sig(c.eta),
                c.n,
                round_sig(c.coverage),
                round_sig(c.half_width),
                round_sig(c.mse),
                round_sig(c.ks),
                c.failed
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rounded: Vec<CoverageCell> = self
            .cells
            .iter()
            .map(|c| CoverageCell {
                eta: round_sig(c.eta),
                n: c.n,
                coverage: round_sig(c.coverage),
                half_width: round_sig(c.half_width),
                mse: round_sig(c.mse),
                ks: round_sig(c.ks),
                failed: c.failed,
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&rounded).expect("serialization cannot fail");
        s.push('\n');
        s
    }
}

/// CSV with header `eta,n,mse`.
pub fn mse_to_csv(points: &[MsePoint]) -> String {
    let mut out = String::from("eta,n,mse\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{}\n",
            round_sig(p.eta),
            p.n,
            round_sig(p.mse)
        ));
    }
    out
}

pub fn mse_to_json(points: &[MsePoint]) -> String {
    let rounded: Vec<MsePoint> = points
        .iter()
        .map(|p| MsePoint {
            eta: round_sig(p.eta),
            n: p.n,
            mse: round_sig(p.mse),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&rounded).expect("serialization cannot fail");
    s.push('\n');
    s
}

/// CSV with header `eta,n,ks,bin_lo,bin_hi,count`, one row per histogram bin.
pub fn normality_to_csv(cells: &[NormalityCell]) -> String {
    let mut out = String::from("eta,n,ks,bin_lo,bin_hi,count\n");
    for c in cells {
        for b in &c.bins {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                round_sig(c.eta),
                c.n,
                round_sig(c.ks),
                round_sig(b.lo),
                round_sig(b.hi),
                b.count
            ));
        }
    }
    out
}

pub fn normality_to_json(cells: &[NormalityCell]) -> String {
    let rounded: Vec<NormalityCell> = cells
        .iter()
        .map(|c| NormalityCell {
            eta: round_sig(c.eta),
            n: c.n,
            ks: round_sig(c.ks),
            bins: c
                .bins
                .iter()
                .map(|b| HistogramBin {
                    lo: round_sig(b.lo),
                    hi: round_sig(b.hi),
                    count: b.count,
                })
                .collect(),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&rounded).expect("serialization cannot fail");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tau(p: u32, q: u32) -> RationalQuantile {
        RationalQuantile::new(p, q).unwrap()
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::new(
            Distribution::uniform(0.0, 1.0).unwrap(),
            tau(1, 2),
            vec![0.01],
            vec![500, 2000],
            24,
            0.05,
            7,
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config();
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.eta_grid.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.replications = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn coverage_report_shape_and_ranges() {
        let report = coverage_experiment(&small_config()).unwrap();
        assert_eq!(report.cells.len(), 2);
        for cell in &report.cells {
            assert!((0.0..=1.0).contains(&cell.coverage));
            assert!(cell.half_width > 0.0);
            assert!(cell.mse >= 0.0);
            assert!(cell.failed == 0);
        }
    }

    #[test]
    fn coverage_is_monotone_in_the_level() {
        // same seeds: the wider interval covers whenever the narrower one does
        let cfg = small_config();
        let strict = coverage_experiment(&cfg).unwrap();
        let mut loose_cfg = cfg;
        loose_cfg.alpha = 0.10;
        let loose = coverage_experiment(&loose_cfg).unwrap();
        for (s, l) in strict.cells.iter().zip(&loose.cells) {
            assert!(l.coverage <= s.coverage + 1e-12);
        }
    }

    #[test]
    fn mse_curve_starts_at_the_squared_offset() {
        let mut cfg = small_config();
        cfg.n_grid = vec![0, 1000];
        let points = mse_curve(&cfg).unwrap();
        // theta0 = 0, true median 0.5
        assert!((points[0].mse - 0.25).abs() < 1e-15);
        assert!(points[1].mse < 0.25);
    }

    #[test]
    fn mse_plateau_matches_the_limit_variance() {
        let mut cfg = small_config();
        cfg.replications = 300;
        cfg.n_grid = vec![20_000];
        cfg.eta_grid = vec![0.01, 0.005];
        let points = mse_curve(&cfg).unwrap();
        // plateau ≈ η·τ(1−τ)/(2f) = η·0.125 for Uniform(0,1) at the median
        let expect_full = 0.01 * 0.125;
        assert!(
            (points[0].mse - expect_full).abs() < 0.2 * expect_full,
            "mse {} vs {expect_full}",
            points[0].mse
        );
        // halving η halves the plateau
        let ratio = points[1].mse / points[0].mse;
        assert!((ratio - 0.5).abs() < 0.2 * 0.5, "ratio {ratio}");
    }

    #[test]
    fn density_floor_failures_are_counted_not_fatal() {
        // starting absurdly far away, no kernel window ever sees a sample by
        // n = 50, so every replication trips the density floor
        let mut cfg = ExperimentConfig::new(
            Distribution::uniform(0.0, 1.0).unwrap(),
            tau(1, 2),
            vec![0.01],
            vec![50],
            10,
            0.05,
            2,
        )
        .unwrap();
        cfg.theta0 = -1.0e6;
        let report = coverage_experiment(&cfg).unwrap();
        let cell = &report.cells[0];
        assert_eq!(cell.failed, 10);
        assert_eq!(cell.coverage, 0.0);
        assert_eq!(cell.half_width, 0.0);
        assert!(cell.mse > 0.0);
    }

    #[test]
    fn burn_in_rescues_an_unmixed_cell() {
        // Cauchy at eta=0.001 from theta0=0 has not reached its upper
        // quartile by n=25000; discarding enough transit steps first restores
        // coverage. This is the effect the burn_in knob exists to isolate.
        let mut cfg = ExperimentConfig::new(
            Distribution::cauchy(0.0, 2.0).unwrap(),
            tau(3, 4),
            vec![0.001],
            vec![25_000],
            60,
            0.05,
            3,
        )
        .unwrap();
        let cold = coverage_experiment(&cfg).unwrap().cells[0].coverage;
        cfg.burn_in = 80_000;
        let warm = coverage_experiment(&cfg).unwrap().cells[0].coverage;
        assert!(cold < 0.10, "cold coverage {cold}");
        assert!(warm > 0.85, "warm coverage {warm}");
    }

    #[test]
    fn normality_sanity_against_own_law() {
        // exact normal draws standardized by their own σ must sit inside the
        // 99% KS band
        let mut rng = SplitMix64::new(5);
        let d = Distribution::normal(0.0, 1.0).unwrap();
        let mut xs: Vec<f64> = (0..2000).map(|_| d.sample(&mut rng)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = ks_empirical(&xs, special::normal_cdf);
        assert!(ks < ks_critical(xs.len(), 0.01), "ks = {ks}");
    }

    #[test]
    fn normality_experiment_reports_bins_and_ks() {
        let mut cfg = small_config();
        cfg.replications = 200;
        cfg.n_grid = vec![5_000];
        let cells = normality_experiment(&cfg).unwrap();
        assert_eq!(cells.len(), 1);
        let total: u32 = cells[0].bins.iter().map(|b| b.count).sum();
        assert!(total >= 195); // ±4σ catches nearly everything
        assert!(cells[0].ks < 0.15);
    }

    #[test]
    fn reports_are_identical_across_worker_counts() {
        let mut one = small_config();
        one.threads = Some(1);
        let mut four = small_config();
        four.threads = Some(4);
        assert_eq!(
            coverage_experiment(&one).unwrap().to_csv(),
            coverage_experiment(&four).unwrap().to_csv()
        );
        assert_eq!(
            mse_to_json(&mse_curve(&one).unwrap()),
            mse_to_json(&mse_curve(&four).unwrap())
        );
    }

    #[test]
    fn online_estimate_pipeline() {
        let d = Distribution::uniform(0.0, 1.0).unwrap();
        let mut rng = SplitMix64::new(40);
        let samples: Vec<f64> = (0..20_000).map(|_| d.sample(&mut rng)).collect();
        let est = online_estimate(
            tau(1, 2),
            0.01,
            KernelKind::Epanechnikov,
            0.05,
            0.0,
            samples,
        )
        .unwrap();
        assert!((est.theta - 0.5).abs() < 0.1);
        assert!((est.f_hat - 1.0).abs() < 0.15);
        assert!(est.ci_lo < est.theta && est.theta < est.ci_hi);
        assert_eq!(est.n, 20_000);
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(round_sig(1.1780972450961724), 1.17810);
        assert_eq!(round_sig(0.0005148437), 0.000514844);
        assert_eq!(round_sig(25000.0), 25000.0);
        assert_eq!(round_sig(0.0), 0.0);
        let csv = CoverageReport {
            cells: vec![CoverageCell {
                eta: 0.01,
                n: 25000,
                coverage: 0.9640001,
                half_width: 0.05148437,
                mse: 1.25e-3,
                ks: 0.033333333,
                failed: 0,
            }],
        }
        .to_csv();
        assert_eq!(
            csv,
            "eta,n,coverage,half_width,mse,ks,failed\n0.01,25000,0.964,0.0514844,0.00125,0.0333333,0\n"
        );
    }
}
