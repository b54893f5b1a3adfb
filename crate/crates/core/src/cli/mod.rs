//! Command-line front end: scenario files, the run pipeline and artifact
//! writers. `main.rs` only forwards to [`main_with`].

pub mod run;
pub mod scenario;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Deserialize;

pub use run::{run_scenario, validation_report, Metrics, RunError, RunOptions, RunReport};
pub use scenario::{load_scenario, parse_scenario, LoadError, Scenario, BUILTINS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_GATE_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Environment variable overriding the default output root.
pub const OUT_ENV: &str = "REGPACK_OUT";

#[derive(Debug, Parser)]
#[command(name = "regpack", version, about = "Output regulation with non-smooth explicit exosystems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write artifacts under <out>/<scenario name>/.
    Run {
        /// Scenario file, or `builtin:<name>`.
        scenario: String,
        /// Override a scenario key, e.g. `--set regulator.k=50`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output root (default: $REGPACK_OUT or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// TOML file with `[[case]]` tables (`name`, `set`), run in parallel.
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Write only metrics.json and validation.json.
        #[arg(long)]
        summary_only: bool,
    },
    /// Parse and check a scenario, print validation.json to stdout.
    Validate {
        scenario: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// List the built-in scenarios.
    ListBuiltins,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    case: Vec<SweepCase>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepCase {
    name: String,
    #[serde(default)]
    set: Vec<String>,
}

fn load_exit(e: &LoadError) -> i32 {
    match e {
        LoadError::Io(_) => EXIT_IO,
        LoadError::Scenario(_) => EXIT_INVALID,
    }
}

fn run_exit(e: &RunError) -> i32 {
    match e {
        RunError::Io(_) => EXIT_IO,
        RunError::Numerical { error, .. } => match error {
            crate::Error::InvalidInput(_) | crate::Error::Parse { .. } => EXIT_INVALID,
            _ => EXIT_NUMERICAL,
        },
    }
}

fn out_root(out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn dir_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn report(label: &str, r: &RunReport) {
    let m = &r.metrics;
    println!(
        "{label}: {} tail={:.3e} sup_u={:.3e} probe={} -> {}",
        if m.pass { "PASS" } else { "FAIL" },
        m.regulation.tail_relative_error,
        m.regulation.sup_input,
        m.probe.as_ref().map_or("-", |p| if p.pass { "pass" } else { "fail" }),
        r.out_dir.display()
    );
    for g in m.gates.iter().filter(|g| !g.pass) {
        println!("  gate {} failed: value {:?} threshold {:?}", g.name, g.value, g.threshold);
    }
    for (stage, secs) in &r.timings {
        eprintln!("  {stage}: {secs:.2} s");
    }
}

fn run_one(reference: &str, set: &[String], root: &std::path::Path, opts: &RunOptions, label: Option<&str>) -> i32 {
    let s = match load_scenario(reference, set) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return load_exit(&e);
        }
    };
    let name = label.map_or_else(|| s.name.clone(), |l| format!("{}-{l}", s.name));
    let opts = RunOptions {
        out_dir: root.join(dir_name(&name)),
        ..opts.clone()
    };
    match run_scenario(&s, &opts) {
        Ok(r) => {
            report(&name, &r);
            if r.passed() {
                EXIT_OK
            } else {
                EXIT_GATE_FAILED
            }
        }
        Err(e) => {
            eprintln!("error ({name}): {e}");
            run_exit(&e)
        }
    }
}

/// Runs the parsed command line and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        Command::ListBuiltins => {
            for (name, src) in BUILTINS {
                let desc = parse_scenario(src, &[]).ok().and_then(|s| s.description).unwrap_or_default();
                println!("builtin:{name}\t{desc}");
            }
            EXIT_OK
        }
        Command::Validate { scenario, set } => {
            let s = match load_scenario(&scenario, &set) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return load_exit(&e);
                }
            };
            if let Err(e) = s.check() {
                eprintln!("error: {e}");
                return EXIT_INVALID;
            }
            match validation_report(&s, s.grid.horizon) {
                Ok(v) => {
                    println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_NUMERICAL
                }
            }
        }
        Command::Run {
            scenario,
            set,
            out,
            step,
            horizon,
            sweep,
            summary_only,
        } => {
            let root = out_root(out);
            let opts = RunOptions {
                out_dir: root.clone(),
                step,
                horizon,
                summary_only,
            };
            let Some(sweep) = sweep else {
                return run_one(&scenario, &set, &root, &opts, None);
            };
            let text = match std::fs::read_to_string(&sweep) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {}: {e}", sweep.display());
                    return EXIT_IO;
                }
            };
            let cases: SweepFile = match toml::from_str(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", sweep.display());
                    return EXIT_INVALID;
                }
            };
            let codes: Vec<i32> = std::thread::scope(|sc| {
                let handles: Vec<_> = cases
                    .case
                    .iter()
                    .map(|c| {
                        let mut all = set.clone();
                        all.extend(c.set.iter().cloned());
                        let (scenario, root, opts) = (&scenario, &root, &opts);
                        sc.spawn(move || run_one(scenario, &all, root, opts, Some(&c.name)))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap_or(EXIT_NUMERICAL)).collect()
            });
            // Worst outcome wins; invalid input outranks numerical failure.
            [EXIT_INVALID, EXIT_IO, EXIT_NUMERICAL, EXIT_GATE_FAILED]
                .into_iter()
                .find(|c| codes.contains(c))
                .unwrap_or(EXIT_OK)
        }
    }
}
