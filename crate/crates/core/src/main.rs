use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ehcr::config::{self, RunConfig, CONFIG_DIR_ENV};
use ehcr::optimizer::{solve, OptProblem};
use ehcr::sim::{run, SimSetup};
use ehcr::sweep::{self, policy_for_scheme, Csv};
use ehcr::validate::{self, ValidationReport};
use ehcr::{Error, Scheme};

const EXIT_CONFIG: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ehcr",
    version,
    about = "Energy-harvesting cognitive radio: analysis, optimization and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file, layered over the preset if both are given.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration: fig4, fig6, fig7, fig8 or delay.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Directory searched for relative config paths and for ehcr.toml.
    #[arg(long, global = true, env = CONFIG_DIR_ENV)]
    config_dir: Option<PathBuf>,
    /// Restrict the run to one scheme.
    #[arg(long, global = true)]
    scheme: Option<Scheme>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulated slots.
    #[arg(long, global = true)]
    slots: Option<u64>,
    /// Write the CSV here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a config entry, e.g. `--set traffic.lambda_p=0.2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the configured policy in closed form.
    Analyze,
    /// Maximize the secondary service rate at the configured operating point.
    Optimize,
    /// Optimize over the configured sweep grid.
    Sweep,
    /// Simulate the configured policy.
    Simulate,
    /// Check the simulator against the closed forms and the lower-bound claim.
    Validate,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Unstable { .. } | Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_CONFIG,
    }
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let mut c = config::load(
        common.preset.as_deref(),
        common.config.as_deref(),
        &common.overrides,
        common.config_dir.as_deref(),
    )?;
    if let Some(s) = common.scheme {
        c.schemes = vec![s];
    }
    if let Some(seed) = common.seed {
        c.seed = seed;
    }
    if let Some(slots) = common.slots {
        c.simulation.slots = slots;
    }
    if common.out.is_some() {
        c.out = common.out.clone();
    }
    c.validate()?;
    Ok(c)
}

fn emit(config: &RunConfig, csv: &Csv) -> Result<(), Error> {
    let text = csv.render();
    match &config.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Config(format!("stdout: {e}"))),
    }
}

fn setup(config: &RunConfig, scheme: Scheme) -> Result<SimSetup, Error> {
    let pt = config.base_point()?;
    Ok(SimSetup {
        scheme,
        policy: policy_for_scheme(scheme, config.policy),
        profile: pt.profile,
        sensing: config.sensing,
        traffic: pt.traffic,
        energy_capacity: config.simulation.energy_capacity,
    })
}

fn analyze(config: &RunConfig) -> Result<u8, Error> {
    let mut reports = Vec::new();
    for &scheme in &config.schemes {
        let s = setup(config, scheme)?;
        let r = validate::analyze(&s);
        eprintln!(
            "{scheme}: mu_p={:.6} mu_s={:.6} idle={:.6} delay={:.6} stable={} delay_ok={}",
            r.mu_p, r.mu_s, r.idle_prob, r.delay, r.primary_stable, r.delay_feasible
        );
        reports.push((s.policy, r));
    }
    emit(config, &sweep::analyze_csv(config, &reports))?;
    Ok(if reports.iter().all(|(_, r)| r.feasible()) {
        0
    } else {
        EXIT_INFEASIBLE
    })
}

fn optimize(config: &RunConfig) -> Result<u8, Error> {
    let pt = config.base_point()?;
    let results = config
        .schemes
        .iter()
        .map(|&scheme| {
            solve(
                &OptProblem::new(scheme, pt.profile, config.sensing, pt.traffic)?,
                &config.solver,
            )
        })
        .collect::<Result<Vec<_>, Error>>()?;
    for r in &results {
        eprintln!(
            "{}: mu_s={:.6} mu_p={:.6} delay={:.6} policy={:?} feasible={}",
            r.scheme,
            r.mu_s,
            r.mu_p,
            r.delay,
            r.policy.to_array(),
            r.feasible
        );
    }
    emit(config, &sweep::optimize_csv(config, &results))?;
    Ok(if results.iter().all(|r| r.feasible) {
        0
    } else {
        EXIT_INFEASIBLE
    })
}

fn run_sweep(config: &RunConfig) -> Result<u8, Error> {
    let rows = sweep::run_sweep(config)?;
    let infeasible = rows.iter().filter(|r| !r.result.feasible).count();
    eprintln!(
        "{} rows, {infeasible} without a feasible policy",
        rows.len()
    );
    emit(config, &sweep::sweep_csv(&rows))?;
    Ok(0)
}

fn simulate(config: &RunConfig) -> Result<u8, Error> {
    let mut runs = Vec::new();
    for &scheme in &config.schemes {
        let st = run(
            &setup(config, scheme)?,
            config.simulation.semantics,
            config.simulation.slots,
            config.seed,
        )?;
        eprintln!(
            "{scheme}: mu_p={:.6}±{:.2e} mu_s={:.6}±{:.2e} delay={:.4}±{:.2e}",
            st.mu_p.mean,
            st.mu_p.half_width,
            st.mu_s.mean,
            st.mu_s.half_width,
            st.delay.mean,
            st.delay.half_width
        );
        if st.primary_drifts() {
            eprintln!("{scheme}: unstable detected (primary queue grows without bound)");
        }
        runs.push((scheme, config.seed, st));
    }
    emit(config, &sweep::simulate_csv(&runs))?;
    Ok(0)
}

fn run_validate(config: &RunConfig) -> Result<u8, Error> {
    let mut reports: Vec<ValidationReport> = Vec::new();
    for &scheme in &config.schemes {
        let s = setup(config, scheme)?;
        let (closed, _) =
            validate::validate_closed_forms(&s, config.simulation.slots, config.seed)?;
        reports.push(closed);
        reports.push(validate::validate_lower_bound(
            &s,
            config.simulation.slots,
            config.seed,
        )?);
    }
    for r in &reports {
        eprint!("{}", r.render());
    }
    emit(config, &sweep::validation_csv(&reports))?;
    let ok = reports.iter().all(|r| r.passed());
    eprintln!("validation {}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok { 0 } else { EXIT_VALIDATION })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let outcome = match cli.command {
        Command::Analyze => analyze(&config),
        Command::Optimize => optimize(&config),
        Command::Sweep => run_sweep(&config),
        Command::Simulate => simulate(&config),
        Command::Validate => run_validate(&config),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
