use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qhd::harness::export::render_report;
use qhd::harness::sweep::SweepOptions;
use qhd::harness::{self, exit_code_for, Format, RunManifest, RunOptions, Scenario, SweepAxis};

#[derive(Parser)]
#[command(name = "qhd", version, about = "Quantum hydrodynamics runs, checks and sweeps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory for exports and the manifest.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides the trajectory seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: Format,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a config file and write all exports.
    Run {
        config: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run a preset (or config) and report its checks.
    Verify {
        target: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run one config at several values of a parameter.
    Sweep {
        config: String,
        /// hbar, dx, dt or n_trajectories.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a manifest and re-check its output hashes.
    Report {
        manifest: PathBuf,
        #[arg(long, default_value = "csv", value_parser = parse_format)]
        format: Format,
    },
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: qhd::Error| e.to_string())
}

fn load(target: &str, common: &Common) -> Result<Scenario, qhd::Error> {
    let mut s = harness::load_scenario(target)?;
    if let Some(seed) = common.seed {
        match &mut s.trajectories {
            Some(t) => t.seed = seed,
            None => eprintln!("note: --seed ignored, scenario has no trajectories"),
        }
    }
    Ok(s)
}

fn print_checks(m: &RunManifest) {
    for c in &m.checks {
        let value = c.value.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "n/a".into());
        let mark = if c.passed { "PASS" } else { "FAIL" };
        match &c.error {
            Some(e) => println!("{mark} {:<20} {value:>10} (threshold {:.1e}): {e}", c.name, c.threshold),
            None => println!("{mark} {:<20} {value:>10} (threshold {:.1e})", c.name, c.threshold),
        }
    }
    if let Some(e) = &m.error {
        eprintln!("error: {e}");
    }
    println!("status: {:?} (exit {})", m.status, m.exit_code());
}

fn run_one(target: &str, common: &Common, default_out: Option<PathBuf>) -> i32 {
    let s = match load(target, common) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let opts = RunOptions {
        out_dir: common.out_dir.clone().or(default_out),
        format: common.format,
    };
    match harness::with_workers(common.workers, || harness::run(&s, &opts)) {
        Ok(Ok(m)) => {
            print_checks(&m);
            if let Some(d) = &opts.out_dir {
                println!("manifest: {}", d.join("manifest.json").display());
            }
            m.exit_code()
        }
        Ok(Err(e)) | Err(e) => {
            eprintln!("error: {e}");
            3
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run { config, common } => run_one(&config, &common, Some(PathBuf::from("out"))),
        Cmd::Verify { target, common } => run_one(&target, &common, None),
        Cmd::Sweep {
            config,
            axis,
            values,
            common,
        } => {
            let parsed = axis.parse::<SweepAxis>().and_then(|a| {
                let vs = values
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| qhd::Error::Config(format!("bad sweep value `{v}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((a, vs, load(&config, &common)?))
            });
            match parsed {
                Err(e) => {
                    eprintln!("error: {e}");
                    2
                }
                Ok((a, vs, s)) => {
                    let opts = SweepOptions {
                        out_dir: common.out_dir.clone(),
                        format: common.format,
                        workers: common.workers,
                    };
                    match harness::sweep(&s, a, &vs, &opts) {
                        Ok(r) => {
                            if common.format == Format::Json {
                                println!("{}", serde_json::to_string_pretty(&r).unwrap_or_default());
                            } else {
                                print!("{}", r.to_csv());
                                if !r.orders.is_empty() {
                                    print!("{}", r.orders_csv());
                                }
                            }
                            r.rows.iter().map(|row| row.status.exit_code()).max().unwrap_or(0)
                        }
                        Err(e) => {
                            eprintln!("error: {e}");
                            exit_code_for(&e)
                        }
                    }
                }
            }
        }
        Cmd::Report { manifest, format } => match harness::report(&manifest) {
            Ok(r) => {
                match render_report(&r, format) {
                    Ok(text) => print!("{text}"),
                    Err(e) => eprintln!("error: {e}"),
                }
                if !r.mismatched_outputs.is_empty() {
                    eprintln!("outputs changed or missing: {}", r.mismatched_outputs.join(", "));
                    1
                } else {
                    r.exit_code
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                2
            }
        },
    };
    ExitCode::from(code as u8)
}
