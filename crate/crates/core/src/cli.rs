//! Command-line front end: `run`, `sweep` and `verify`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::analysis::{
    convergence_study, energy_ledger, source_error, verify_remark_identities, ErrorReport, SlopeFit,
};
use crate::config::{resolve, RunConfig};
use crate::error::{Error, Result};
use crate::output::{write_manifest, write_rates, write_trajectory, LedgerSummary, RunManifest, SweepSummary};
use crate::stepper::advance_trajectory;

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Slack allowed between an observed contraction ratio and the bound.
pub const RATIO_SLACK: f64 = 1e-8;
/// Scheme residuals may exceed the configured solver tolerances by this
/// factor.
pub const RESIDUAL_FACTOR: f64 = 10.0;

#[derive(Debug, Parser)]
#[command(name = "parhyp", version, about = "Implicit scheme for a coupled parabolic-hyperbolic phase-field system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute one trajectory and write its fields and a manifest.
    Run(CommonArgs),
    /// Run the step sweep against a fine reference and fit the error rate.
    Sweep(CommonArgs),
    /// Run one trajectory and check identities, contraction and energy.
    Verify(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Seed for the randomized operator checks.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_solver_failure() {
        EXIT_SOLVER
    } else {
        EXIT_CONFIG
    }
}

fn load(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Human-readable output goes to `out`, errors to
/// `err`.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run(a, out),
        Command::Sweep(a) => sweep(a, out),
        Command::Verify(a) => verify(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn run(args: &CommonArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = load(args)?;
    let (instance, scheme, plan) = resolve(&cfg)?;
    let kappa = scheme.validate()?;
    let traj = advance_trajectory(&instance, &scheme)?;
    let ledger = energy_ledger(&traj)?;
    let remark = verify_remark_identities(&traj);
    writeln!(out, "steps {}  h {:e}  kappa {:e}", traj.steps(), traj.h(), kappa)?;
    writeln!(out, "max contraction ratio {:e}", traj.max_contraction_ratio())?;
    writeln!(out, "energy ledger {}", if ledger.passed() { "ok" } else { "violated" })?;
    for b in &ledger.bounds {
        writeln!(out, "  {:<36} {:e}", b.name, b.value)?;
    }
    if let Some(dir) = &plan.output_dir {
        let files = write_trajectory(&traj, dir)?;
        let manifest = RunManifest {
            config: Some(cfg.clone()),
            steps: traj.steps(),
            h: traj.h(),
            contraction_bound: kappa,
            max_contraction_ratio: traj.max_contraction_ratio(),
            source_error: source_error(&traj),
            ledger: Some(LedgerSummary::from(&ledger)),
            remark: Some(remark),
            reports: traj.reports.clone(),
            files,
        };
        write_manifest(&dir.join("manifest.json"), &manifest)?;
        writeln!(out, "wrote {}", dir.display())?;
    }
    Ok(0)
}

fn sweep(args: &CommonArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = load(args)?;
    let (instance, scheme, plan) = resolve(&cfg)?;
    let pool = thread_pool(args.threads)?;
    info!("sweep over {:?} with reference {}", plan.sweep_steps, plan.reference_steps);
    let study = pool.install(|| convergence_study(&instance, &scheme, &plan.sweep_steps, plan.reference_steps))?;
    write!(out, "{:>6} {:>12}", "N", "h")?;
    for name in ErrorReport::NORM_NAMES {
        write!(out, " {name:>12}")?;
    }
    writeln!(out, " {:>12} {:>12}", "composite", "M(h)")?;
    for row in &study.rows {
        write!(out, "{:>6} {:>12.4e}", row.steps, row.h)?;
        for e in row.errors.norms() {
            write!(out, " {e:>12.4e}")?;
        }
        writeln!(out, " {:>12.4e} {:>12.4e}", row.errors.composite, row.m_h)?;
    }
    match &study.fit {
        SlopeFit::Fitted { slope, .. } => writeln!(out, "slope {slope:.4}")?,
        SlopeFit::Degenerate { reason } => writeln!(out, "slope undefined: {reason}")?,
    }
    writeln!(out, "M(h) spread {:.3}  growth {:.3}", study.m_spread(), study.m_growth())?;
    if let Some(dir) = &plan.output_dir {
        std::fs::create_dir_all(dir)?;
        write_rates(&dir.join("rates.csv"), &study)?;
        let summary = SweepSummary::new(Some(cfg.clone()), &study);
        std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        writeln!(out, "wrote {}", dir.display())?;
    }
    Ok(0)
}

/// One named verification outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

/// All checks `verify` performs on a configuration. Structural hypotheses
/// are enforced while resolving, so a returned error means they failed.
pub fn verification_checks(cfg: &RunConfig) -> Result<Vec<Check>> {
    let (instance, scheme, _) = resolve(cfg)?;
    let kappa = scheme.validate()?;
    let mut checks = vec![check(
        "structural hypotheses",
        true,
        format!("operators, beta, pi and data accepted; kappa = {kappa:e}"),
    )];
    let traj = advance_trajectory(&instance, &scheme)?;

    let worst = traj
        .reports
        .iter()
        .enumerate()
        .map(|(n, r)| (n + 1, r.max_ratio()))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    checks.push(check(
        "contraction ratio",
        worst.1 <= kappa + RATIO_SLACK,
        format!("max {:e} at step {} against kappa {kappa:e}", worst.1, worst.0),
    ));

    // residuals in units of RESIDUAL_FACTOR times the configured tolerance
    let mut residual = (0, 0.0);
    for (n, r) in traj.reports.iter().enumerate() {
        let t = r.theta_equation_residual / (RESIDUAL_FACTOR * scheme.linear_tol * r.theta_equation_scale);
        let p = r.phi_equation_residual / (RESIDUAL_FACTOR * scheme.newton_tol * r.phi_equation_scale);
        if t.max(p) > residual.1 {
            residual = (n + 1, t.max(p));
        }
    }
    checks.push(check(
        "scheme residuals",
        residual.1 <= 1.0,
        format!("worst residual {:.3e} of the allowance at step {}", residual.1, residual.0),
    ));

    let remark = verify_remark_identities(&traj);
    let detail = match remark.first_failure() {
        Some(c) => format!("{}: {:e} vs {:e} (gap {:e})", c.name, c.lhs, c.rhs, c.relative_gap),
        None => format!("max relative gap {:e}", remark.max_gap()),
    };
    checks.push(check("interpolant identities", remark.passed(), detail));

    let ledger = energy_ledger(&traj)?;
    let detail = match (ledger.first_failed_step(), ledger.first_invalid_entry()) {
        (Some((n, s)), _) => format!(
            "step {n}: lhs {:e} exceeds rhs {:e} + tolerance {:e}",
            s.lhs, s.rhs, s.tolerance
        ),
        (None, Some((name, n, v))) => format!("{name} = {v:e} at step {n}"),
        (None, None) => format!("{} steps balanced", ledger.steps.len()),
    };
    checks.push(check("energy ledger", ledger.passed(), detail));
    Ok(checks)
}

fn verify(args: &CommonArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = load(args)?;
    let checks = verification_checks(&cfg)?;
    for c in &checks {
        writeln!(out, "{} {:<24} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
    }
    match checks.iter().find(|c| !c.passed) {
        Some(c) => {
            writeln!(out, "first failure: {}", c.name)?;
            Ok(EXIT_VERIFY)
        }
        None => {
            writeln!(out, "all checks passed")?;
            Ok(0)
        }
    }
}

/// Convenience for tests and scripts: writes `cfg` next to `dir` and returns
/// the path.
pub fn write_config(cfg: &RunConfig, dir: &Path, name: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    cfg.save(&path)?;
    Ok(path)
}
