//! Command-line interface: streaming estimation, the stationary-distribution
//! oracle with its checkers, and the replicated experiments.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on numeric failures.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qsgd::dist::Distribution;
use qsgd::error::Error;
use qsgd::experiments::{
    self, coverage_experiment, mse_curve, normality_experiment, ExperimentConfig,
};
use qsgd::kde::KernelKind;
use qsgd::oracle::{
    self, foster_drift_check, mgf_bound_check, moment_check, normality_check, tail_bound_check,
    LatticeChain,
};
use qsgd::quantile::RationalQuantile;

#[derive(Parser)]
#[command(
    name = "qsgd",
    version,
    about = "Streaming quantile estimation, online confidence intervals, and an exact stationary-distribution oracle for constant learning-rate quantile SGD"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KernelArg {
    Rectangle,
    Epanechnikov,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Rectangle => KernelKind::Rectangle,
            KernelArg::Epanechnikov => KernelKind::Epanechnikov,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Sampling distribution, e.g. beta:2,3 or cauchy:0,2
    #[arg(long)]
    dist: Distribution,
    /// Quantile level as a fraction p/q, e.g. 3/4
    #[arg(long)]
    tau: RationalQuantile,
    /// Learning rate grid (comma separated)
    #[arg(long, value_delimiter = ',', required = true)]
    eta: Vec<f64>,
    /// Step-count grid (comma separated)
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u64>,
    /// Monte Carlo replications
    #[arg(long, default_value_t = 500)]
    reps: u32,
    /// Interval miscoverage level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// SGD-only steps discarded before measurement starts
    #[arg(long = "burn-in", default_value_t = 0)]
    burn_in: u64,
    /// Initial point of every replication
    #[arg(long, default_value_t = 0.0)]
    theta0: f64,
    #[arg(long, value_enum, default_value_t = KernelArg::Epanechnikov)]
    kernel: KernelArg,
    /// Worker threads (default: rayon's global pool)
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Output file; relative paths resolve against $QSGD_OUT_DIR when set
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn to_config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::new(
            self.dist,
            self.tau,
            self.eta.clone(),
            self.n.clone(),
            self.reps,
            self.alpha,
            self.seed,
        )?;
        cfg.burn_in = self.burn_in;
        cfg.theta0 = self.theta0;
        cfg.kernel = self.kernel.into();
        cfg.threads = self.threads;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Stream newline-delimited numbers (stdin or --input) through SGD and
    /// the recursive density estimate; print the estimate and its interval
    /// as JSON
    Estimate {
        #[arg(long)]
        tau: RationalQuantile,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = KernelArg::Epanechnikov)]
        kernel: KernelArg,
        #[arg(long, default_value_t = 0.0)]
        theta0: f64,
        /// Input file; stdin when omitted. Lines starting with # are ignored
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Solve the truncated stationary distribution exactly and run the
    /// requested checkers; emits CSV columns k,theta,pi
    Oracle {
        #[arg(long)]
        dist: Distribution,
        #[arg(long)]
        tau: RationalQuantile,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 0.0)]
        theta0: f64,
        /// Truncation radius in lattice states (default: wide enough for
        /// every requested check)
        #[arg(long)]
        radius: Option<usize>,
        /// `all` or a comma list of balance,drift,mgf,tail,moments,normality
        #[arg(long, default_value = "all", value_delimiter = ',')]
        checks: Vec<String>,
        /// CSV output file (stationary distribution); stdout when omitted,
        /// in which case verdicts go to stderr
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical coverage of the online confidence intervals per (eta, n)
    Coverage {
        #[command(flatten)]
        args: ExperimentArgs,
    },
    /// Mean squared error of the iterate against the true quantile
    Mse {
        #[command(flatten)]
        args: ExperimentArgs,
    },
    /// Histogram and KS distance of standardized finals per learning rate
    Normality {
        #[command(flatten)]
        args: ExperimentArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed pipe (e.g. `qsgd oracle | head`) is not a failure
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Estimate {
            tau,
            eta,
            alpha,
            kernel,
            theta0,
            input,
        } => {
            let samples = read_samples(input.as_deref())?;
            let est =
                experiments::online_estimate(tau, eta, kernel.into(), alpha, theta0, samples)?;
            println!(
                "{}",
                serde_json::json!({
                    "theta": experiments::round_sig(est.theta),
                    "f_hat": experiments::round_sig(est.f_hat),
                    "ci_lo": experiments::round_sig(est.ci_lo),
                    "ci_hi": experiments::round_sig(est.ci_hi),
                    "n": est.n,
                })
            );
            Ok(())
        }
        Command::Oracle {
            dist,
            tau,
            eta,
            theta0,
            radius,
            checks,
            out,
        } => run_oracle(dist, tau, eta, theta0, radius, &checks, out.as_deref()),
        Command::Coverage { args } => {
            let report = coverage_experiment(&args.to_config()?)?;
            let body = match args.format {
                FormatArg::Csv => report.to_csv(),
                FormatArg::Json => report.to_json(),
            };
            emit(args.out.as_deref(), &body)
        }
        Command::Mse { args } => {
            let points = mse_curve(&args.to_config()?)?;
            let body = match args.format {
                FormatArg::Csv => experiments::mse_to_csv(&points),
                FormatArg::Json => experiments::mse_to_json(&points),
            };
            emit(args.out.as_deref(), &body)
        }
        Command::Normality { args } => {
            let cells = normality_experiment(&args.to_config()?)?;
            let body = match args.format {
                FormatArg::Csv => experiments::normality_to_csv(&cells),
                FormatArg::Json => experiments::normality_to_json(&cells),
            };
            emit(args.out.as_deref(), &body)
        }
    }
}

/// Reads one number per line; blank lines and `#` comments are skipped.
fn read_samples(input: Option<&Path>) -> Result<Vec<f64>, Error> {
    let reader: Box<dyn BufRead> = match input {
        Some(path) => Box::new(io::BufReader::new(fs::File::open(path)?)),
        None => Box::new(io::stdin().lock()),
    };
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let value = t.parse::<f64>().map_err(|_| Error::Parse {
            line: idx + 1,
            content: t.to_string(),
        })?;
        samples.push(value);
    }
    Ok(samples)
}

/// Relative output paths resolve against $QSGD_OUT_DIR when it is set.
fn resolve_out(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Ok(dir) = std::env::var("QSGD_OUT_DIR") {
            if !dir.is_empty() {
                return Path::new(&dir).join(path);
            }
        }
    }
    path.to_path_buf()
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(resolve_out(path), body)?,
        None => print!("{body}"),
    }
    Ok(())
}

fn run_oracle(
    dist: Distribution,
    tau: RationalQuantile,
    eta: f64,
    theta0: f64,
    radius: Option<usize>,
    checks: &[String],
    out: Option<&Path>,
) -> Result<(), Error> {
    let all = checks.iter().any(|c| c == "all");
    let wants = |name: &str| all || checks.iter().any(|c| c == name);
    const TAIL_K0: u32 = 5;
    const MGF_BETA: f64 = 3.5;
    const DRIFT_MARGIN: f64 = 0.25;

    let radius = match radius {
        Some(r) => r,
        None => LatticeChain::recommended_radius(
            &dist,
            tau,
            eta,
            wants("tail").then_some(TAIL_K0),
            wants("drift").then_some(DRIFT_MARGIN),
        )?,
    };
    let chain = LatticeChain::build(&dist, tau, eta, theta0, radius)?;
    let pi = chain.stationary()?;

    let mut csv = Vec::new();
    pi.write_csv(&mut csv)?;
    let csv = String::from_utf8(csv).expect("csv is ascii");

    // CSV to the file (verdicts to stdout), or CSV to stdout (verdicts to
    // stderr) so the table stays machine-readable either way.
    let mut verdicts: Box<dyn Write> = match out {
        Some(path) => {
            fs::write(resolve_out(path), &csv)?;
            Box::new(io::stdout().lock())
        }
        None => {
            print!("{csv}");
            Box::new(io::stderr().lock())
        }
    };

    let q = f64::from(tau.denom());
    writeln!(
        verdicts,
        "oracle: dist={dist} tau={tau} eta={eta} radius={radius} states={} truncated_mass<={:.3e}",
        2 * radius + 1,
        pi.truncated_mass_bound()
    )?;
    if wants("balance") {
        let r = oracle::balance_residual(&pi, &chain);
        writeln!(
            verdicts,
            "balance: residual={r:.3e} (gate 1e-10) {}",
            pass(r <= 1e-10)
        )?;
    }
    if wants("drift") {
        match foster_drift_check(&chain, DRIFT_MARGIN) {
            Ok(report) => writeln!(
                verdicts,
                "drift: exception window [-{n},{n}], worst outside {w:.4} (gate -{DRIFT_MARGIN}) {}",
                pass(report.worst_drift_outside <= -DRIFT_MARGIN),
                n = report.exception_radius,
                w = report.worst_drift_outside,
            )?,
            Err(e) => writeln!(verdicts, "drift: FAIL ({e})")?,
        }
    }
    if wants("mgf") {
        for d in 0..=2 {
            let (s, holds) = mgf_bound_check(&pi, MGF_BETA, d);
            writeln!(
                verdicts,
                "mgf(beta={MGF_BETA},d={d}): S={s:.3e} (gate q^2={}) {}",
                q * q,
                pass(holds)
            )?;
        }
    }
    if wants("tail") {
        for d in 0..=2 {
            match tail_bound_check(&pi, TAIL_K0, MGF_BETA, d) {
                Ok((s, holds)) => writeln!(
                    verdicts,
                    "tail(K0={TAIL_K0},d={d}): sum={s:.3e} (gate {:.3e}) {}",
                    q * q * eta.powf(f64::from(TAIL_K0) - MGF_BETA),
                    pass(holds)
                )?,
                Err(e) => writeln!(verdicts, "tail(K0={TAIL_K0},d={d}): FAIL ({e})")?,
            }
        }
    }
    if wants("moments") {
        let (m1, m2) = moment_check(&pi);
        let g1 = 10.0 * (1.0 / eta).ln();
        let g2 = 10.0 * eta.ln() * eta.ln();
        writeln!(
            verdicts,
            "moments: m1={m1:.4} (gate {g1:.2}), m2={m2:.4} (gate {g2:.2}) {}",
            pass(m1 <= g1 && m2 <= g2)
        )?;
    }
    if wants("normality") {
        let f = dist.pdf(dist.quantile(tau.value())?);
        let ks = normality_check(&pi, f)?;
        writeln!(
            verdicts,
            "normality: ks={ks:.4} (gate 0.05 for small eta) {}",
            pass(ks < 0.05)
        )?;
    }
    Ok(())
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}
