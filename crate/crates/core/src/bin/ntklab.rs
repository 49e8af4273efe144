use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use ntklab::lab::{self, RunManifest};
use ntklab::Error;

const AFTER_HELP: &str = "\
Exit status: 0 success, 1 empty report, 2 configuration or I/O error,
3 numerical failure, 4 failed check under --check.

CSV schemas (floats printed with 17 significant digits):
  trajectory.csv     step,train_loss,dist_from_init,dist_from_ref,grad_norm
  train.csv          x1,...,xd,y
  sweep.csv          n,d,d2_over_n,test_error,std,seeds   (seeds joined by ';')
  margin_trend.csv   d,inv_gamma
  <probe>.csv        series,x,y

Every command writes manifest.json into --out as its last file, also on failure.";

#[derive(Parser)]
#[command(name = "ntklab", version, about = "Gradient-descent lab for deep ReLU networks in the lazy regime", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file (one flat object; unknown keys are rejected).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "ntklab-out")]
    out: PathBuf,
    /// Seed list, `0,1,2` or `0..10`; overrides the config.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads.
    #[arg(long, env = "NTKLAB_THREADS")]
    threads: Option<usize>,
    /// Also write SVG plots of every series.
    #[arg(long)]
    plot: bool,
    /// Exit with status 4 when any check fails.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a generated dataset and run the requested probes.
    Train(Common),
    /// Sweep n or d on noisy 2-XOR and fit test error against d^2/n.
    XorSweep(Common),
    /// Certify the tangent-feature margin and build the reference model.
    Margin(Common),
    /// Run one probe by name.
    Probe {
        /// Probe name; run with an unknown name to list the catalog.
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Merge run manifests into one table.
    Report {
        /// Manifest files or run directories.
        manifests: Vec<PathBuf>,
        /// Also write report.txt and report.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn setup(common: &Common) -> Result<Option<Vec<u64>>, Error> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
    }
    common.seeds.as_deref().map(lab::parse_seed_list).transpose()
}

fn config_echo<T: serde::Serialize>(cfg: &T) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

fn finish(manifest: &RunManifest, res: Result<(), Error>, check: bool, out: &std::path::Path) -> ExitCode {
    for line in manifest.check_lines() {
        println!("{line}");
    }
    match res {
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("manifest: {}", out.join(lab::MANIFEST_FILE).display());
            ExitCode::from(e.exit_code() as u8)
        }
        Ok(()) if check && !manifest.passed() => ExitCode::from(4),
        Ok(()) => {
            println!("manifest: {}", out.join(lab::MANIFEST_FILE).display());
            ExitCode::SUCCESS
        }
    }
}

/// Config errors before a run starts still leave a failed manifest behind.
fn failed_early(command: &str, common: &Common, e: Error) -> ExitCode {
    let (_, res) = lab::run_with_manifest(command, Value::Null, Vec::new(), &common.out, |_| Err(e));
    let e = res.expect_err("body always fails");
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train(c) => {
            let seeds = match setup(&c).and_then(|s| lab::load_config::<lab::TrainCommand>(c.config.as_deref()).map(|t| (s, t))) {
                Ok(v) => v,
                Err(e) => return failed_early("train", &c, e),
            };
            let (cli_seeds, cmd) = seeds;
            let seeds = cmd.seed_list(cli_seeds.as_deref());
            let (m, res) = lab::run_with_manifest("train", config_echo(&cmd), seeds.clone(), &c.out, |m| {
                lab::cmd_train(&cmd, &seeds, &c.out, c.plot, m)
            });
            if let Some(v) = m.results.get("mean_population_zero_one_error") {
                println!("mean population 0-1 error: {v}");
            }
            finish(&m, res, c.check, &c.out)
        }
        Command::XorSweep(c) => {
            let (cli_seeds, cmd) =
                match setup(&c).and_then(|s| lab::load_config::<lab::XorSweepCommand>(c.config.as_deref()).map(|t| (s, t))) {
                    Ok(v) => v,
                    Err(e) => return failed_early("xor-sweep", &c, e),
                };
            let seeds = cmd.seed_list(cli_seeds.as_deref());
            let mut table = None;
            let (m, res) = lab::run_with_manifest("xor-sweep", config_echo(&cmd), seeds.clone(), &c.out, |m| {
                table = Some(lab::cmd_xor_sweep(&cmd, &seeds, &c.out, c.plot, m)?);
                Ok(())
            });
            if let Some(t) = table {
                print!("{}", t.render());
            }
            finish(&m, res, c.check, &c.out)
        }
        Command::Margin(c) => {
            let cmd = match setup(&c).and_then(|_| lab::load_config::<lab::MarginCommand>(c.config.as_deref())) {
                Ok(v) => v,
                Err(e) => return failed_early("margin", &c, e),
            };
            let (m, res) = lab::run_with_manifest("margin", config_echo(&cmd), vec![cmd.seed], &c.out, |m| {
                let cert = lab::cmd_margin(&cmd, &c.out, m)?;
                println!("gamma = {}", lab::fmt17(cert.gamma));
                Ok(())
            });
            finish(&m, res, c.check, &c.out)
        }
        Command::Probe { name, common: c } => {
            let cmd = match setup(&c).and_then(|_| lab::load_config::<lab::ProbeCommand>(c.config.as_deref())) {
                Ok(v) => v,
                Err(e) => return failed_early("probe", &c, e),
            };
            let mut echo = config_echo(&cmd);
            echo["probe"] = Value::String(name.clone());
            let (m, res) = lab::run_with_manifest("probe", echo, vec![cmd.seed], &c.out, |m| {
                lab::cmd_probe(&name, &cmd, &c.out, c.plot, m).map(|_| ())
            });
            finish(&m, res, c.check, &c.out)
        }
        Command::Report { manifests, out } => {
            let summary = lab::cmd_report(&manifests);
            let text = summary.render();
            print!("{text}");
            if let Some(dir) = out {
                let written = std::fs::create_dir_all(&dir)
                    .and_then(|_| std::fs::write(dir.join("report.txt"), &text))
                    .and_then(|_| {
                        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&summary).unwrap_or_default())
                    });
                if let Err(e) = written {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            if summary.is_empty() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}
