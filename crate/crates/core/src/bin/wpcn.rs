use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use wpcn::allocator::{build_subproblem, default_init, AllocationOutcome, GridPoint};
use wpcn::baselines::default_fit;
use wpcn::config::{ChannelFile, ExperimentConfig};
use wpcn::eh_model::{phi, phi_tangent};
use wpcn::experiments::{aggregate, run_scheme, run_sweep, write_records_csv, write_summary_csv, RecordStatus, Scheme, SweepOptions};
use wpcn::feasibility::check_feasibility;
use wpcn::system::{sample_channel, ChannelRealization};
use wpcn::{Error, Result};

#[derive(Parser)]
#[command(name = "wpcn", version, about = "Downlink power minimization for two-user wireless powered networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML configuration; reference values when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ChannelArgs {
    /// Seed for a Ricean channel draw.
    #[arg(long, conflicts_with = "channel")]
    seed: Option<u64>,
    /// JSON channel file `{"h1": [[re, im], ...], "h2": [...]}`.
    #[arg(long)]
    channel: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the EH law, its slope and the fitted surrogates as CSV.
    EvalEh {
        #[command(flatten)]
        config: ConfigArg,
        /// Grid points on [0, A_s^2].
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Explicit received powers in watts instead of a grid.
        #[arg(long, value_delimiter = ',')]
        x: Vec<f64>,
    },
    /// Classify the downlink-fraction interval for one channel.
    Feasibility {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Allocate resources for one channel and print the result as JSON.
    Allocate {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, default_value = "proposed")]
        scheme: Scheme,
        /// Write the per-fraction power curve as CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Write the first subproblem at this downlink fraction as text.
        #[arg(long, value_name = "TAU")]
        dump_subproblem: Option<f64>,
        #[arg(long, default_value = "subproblem.txt")]
        dump_path: PathBuf,
    },
    /// Monte-Carlo sweep writing records.csv and summary.csv.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        schemes: Vec<Scheme>,
        #[arg(long, value_delimiter = ',')]
        nt: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        rsum: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        realizations: Option<usize>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

fn load_config(arg: &ConfigArg) -> Result<ExperimentConfig> {
    match &arg.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_channel(cfg: &ExperimentConfig, args: &ChannelArgs) -> Result<ChannelRealization> {
    match &args.channel {
        Some(p) => {
            let ch = ChannelFile::load(p, cfg.system.noise_w)?;
            if ch.n_antennas() != cfg.system.n_antennas {
                eprintln!("note: channel file has {} antennas; config value ignored", ch.n_antennas());
            }
            Ok(ch)
        }
        None => sample_channel(&cfg.system, args.seed.unwrap_or(cfg.plan.master_seed)),
    }
}

fn write_curve(path: &Path, curve: &[GridPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::EvalEh { config, points, x } => {
            let cfg = load_config(&config)?;
            let eh = cfg.system.eh;
            let xs: Vec<f64> = if x.is_empty() {
                let n = points.max(2);
                (0..n).map(|i| eh.a_s_sq * i as f64 / (n - 1) as f64).collect()
            } else {
                x
            };
            let fit = default_fit(&cfg.system)?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "x_w,phi_w,phi_prime,sigmoid_w,linear_w")?;
            for x in xs {
                // One-sided slopes at both ends of the unsaturated range.
                let slope = if x <= eh.a_s_sq { phi_tangent(x, &eh).0 } else { 0.0 };
                writeln!(out, "{x:e},{:e},{slope:e},{:e},{:e}", phi(x, &eh)?, fit.sigmoid.eval(x), fit.linear.eval(x))?;
            }
        }
        Command::Feasibility { config, channel } => {
            let cfg = load_config(&config)?;
            let ch = load_channel(&cfg, &channel)?;
            let verdict = check_feasibility(&cfg.system, &ch);
            let out = json!({ "eff_noise_w": ch.eff_noise_w, "condition": ch.condition, "verdict": verdict });
            print_json(&out)?;
        }
        Command::Allocate { config, channel, scheme, curve, dump_subproblem, dump_path } => {
            let cfg = load_config(&config)?;
            let ch = load_channel(&cfg, &channel)?;
            if let Some(tau) = dump_subproblem {
                let (sp, _) = build_subproblem(tau, &ch, &cfg.system, &default_init(&ch, &cfg.system))?;
                std::fs::write(&dump_path, sp.write_text())?;
            }
            let fit = if scheme == Scheme::Proposed { None } else { Some(default_fit(&cfg.system)?) };
            let opts = SweepOptions { eps_tau: cfg.eps_tau, eps_sca: cfg.eps_sca, jobs: 1 };
            let outcome = run_scheme(scheme, &ch, &cfg.system, fit.as_ref(), &opts)?;
            let out = match &outcome {
                AllocationOutcome::Trivial(a) => json!({ "scheme": scheme, "status": "trivial", "allocation": a.to_json() }),
                AllocationOutcome::Infeasible(v) => json!({ "scheme": scheme, "status": "infeasible", "verdict": v }),
                AllocationOutcome::Allocated { allocation, curve: points } => {
                    if let Some(path) = &curve {
                        write_curve(path, points)?;
                    }
                    json!({ "scheme": scheme, "status": "ok", "allocation": allocation.to_json() })
                }
            };
            print_json(&out)?;
        }
        Command::Sweep { config, out, schemes, nt, rsum, seed, realizations, jobs } => {
            let cfg = load_config(&config)?;
            let mut plan = cfg.plan.clone();
            if !schemes.is_empty() {
                plan.schemes = schemes;
            }
            if !nt.is_empty() {
                plan.n_antennas = nt;
            }
            if !rsum.is_empty() {
                plan.r_sum = rsum;
            }
            if let Some(s) = seed {
                plan.master_seed = s;
            }
            if let Some(r) = realizations {
                plan.realizations = r;
            }
            let opts = SweepOptions { eps_tau: cfg.eps_tau, eps_sca: cfg.eps_sca, jobs };
            let records = run_sweep(&plan, &cfg.system, &opts)?;
            std::fs::create_dir_all(&out)?;
            write_records_csv(&out.join("records.csv"), &records)?;
            write_summary_csv(&out.join("summary.csv"), &aggregate(&records))?;
            let errors = records.iter().filter(|r| r.status == RecordStatus::SolverError).count();
            eprintln!("{} records, {} solver errors, written to {}", records.len(), errors, out.display());
            if errors == records.len() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        // A closed pipe (e.g. `| head`) is not an error for the user.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::AllGridPointsFailed { failures } = &e {
                for (tau, msg) in failures {
                    eprintln!("  tau = {tau}: {msg}");
                }
            }
            ExitCode::FAILURE
        }
    }
}
