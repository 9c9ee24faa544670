//! Command-line surface: scenario verification, parameter sweeps, averaging
//! and A₂ spot checks, and random scenario generation.
//!
//! Exit codes: 0 on success, 1 when a check fails, 2 on invalid input.

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use matspec::linalg::C64;
use matspec::scenario::{random_scenario, Scenario, ToleranceSet};
use matspec::suites::{self, Suite};

#[derive(Parser)]
#[command(
    name = "matspec",
    version,
    about = "Finite-rank perturbation checks through matrix-valued spectral measures"
)]
struct Cli {
    /// Worker threads (overrides MATSPEC_THREADS; 0 = library default)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Scale factor applied to default check tolerances
    /// (overrides MATSPEC_TOL; per-scenario overrides still win)
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite against a scenario file ("-" for stdin)
    Verify {
        scenario: String,
        /// ak | averaging | ad | a2 | representation | bounds | dyadic | all
        #[arg(long, default_value = "all")]
        suite: String,
        /// Write the JSON report here (text report always goes to stdout)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Smallest ε used in the A₂ sample ladder
        #[arg(long, default_value_t = 1e-6)]
        eps_min: f64,
    },
    /// Sweep the perturbation parameter and emit eigenvalue trajectories,
    /// common-atom overlaps, and A₂ samples as CSV
    Sweep {
        scenario: String,
        #[arg(long, allow_negative_numbers = true)]
        t_min: f64,
        #[arg(long, allow_negative_numbers = true)]
        t_max: f64,
        #[arg(long)]
        steps: usize,
        /// Write CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average the perturbed spectral measures against a kernel over the line
    Average {
        scenario: String,
        /// Kernel family (only "poisson" is supported)
        #[arg(long, default_value = "poisson")]
        kernel: String,
        /// Kernel point, e.g. "1.5+2i", "2i", "-1-0.5i"
        #[arg(long, default_value = "i")]
        z: String,
    },
    /// Check the joint Poisson matrix A₂ bound for the scenario pair
    A2 {
        scenario: String,
        #[arg(long, default_value_t = 1e-6)]
        eps_min: f64,
    },
    /// Generate a reproducible random scenario
    Random {
        #[arg(long)]
        d: usize,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the scenario JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_scenario(path: &str) -> Result<Scenario, matspec::Error> {
    let text = if path == "-" {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf)?;
        buf
    } else {
        std::fs::read_to_string(path)?
    };
    Scenario::from_json(&text)
}

/// Parse "a+bi" style complex literals ("i", "2i", "1", "-1-0.5i").
fn parse_complex(text: &str) -> Result<C64, matspec::Error> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || matspec::Error::Parse(format!("cannot parse complex number '{text}'"));
    if !s.ends_with('i') {
        return s
            .parse::<f64>()
            .map(|re| C64::new(re, 0.0))
            .map_err(|_| bad());
    }
    let body = &s[..s.len() - 1];
    // split off the imaginary coefficient at the last sign that is neither
    // leading nor part of an exponent
    let mut split = None;
    for (idx, ch) in body.char_indices().skip(1) {
        if (ch == '+' || ch == '-') && !matches!(body.as_bytes()[idx - 1], b'e' | b'E') {
            split = Some(idx);
        }
    }
    let (re_str, im_str) = match split {
        Some(idx) => (&body[..idx], &body[idx..]),
        None => ("", body),
    };
    let im = match im_str {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse::<f64>().map_err(|_| bad())?,
    };
    let re = if re_str.is_empty() {
        0.0
    } else {
        re_str.parse::<f64>().map_err(|_| bad())?
    };
    Ok(C64::new(re, im))
}

fn env_f64(name: &str) -> Option<f64> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

fn env_usize(name: &str) -> Option<usize> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

fn run(cli: Cli) -> Result<i32, matspec::Error> {
    // flags win over environment
    let threads = cli.threads.or_else(|| env_usize("MATSPEC_THREADS"));
    if let Some(t) = threads {
        if t > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global();
        }
    }
    let tol_scale = cli.tol.or_else(|| env_f64("MATSPEC_TOL")).unwrap_or(1.0);

    match cli.command {
        Command::Verify {
            scenario,
            suite,
            out,
            eps_min,
        } => {
            let scenario = read_scenario(&scenario)?;
            let suite: Suite = suite.parse()?;
            let overrides = scenario.tolerances.clone().unwrap_or_default();
            let tol = ToleranceSet::default().with_overrides(&overrides, tol_scale);
            let report = suites::verify(&scenario, suite, &tol, eps_min)?;
            print!("{}", report.to_text());
            if let Some(path) = out {
                std::fs::write(path, report.to_json())?;
            }
            Ok(report.exit_code())
        }
        Command::Sweep {
            scenario,
            t_min,
            t_max,
            steps,
            out,
        } => {
            let scenario = read_scenario(&scenario)?;
            let csv = suites::sweep(&scenario, t_min, t_max, steps)?;
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(0)
        }
        Command::Average {
            scenario,
            kernel,
            z,
        } => {
            if kernel != "poisson" {
                return Err(matspec::Error::Validation(format!(
                    "unsupported kernel '{kernel}' (only 'poisson')"
                )));
            }
            let scenario = read_scenario(&scenario)?;
            let w = parse_complex(&z)?;
            if w.im <= 0.0 {
                return Err(matspec::Error::Validation(
                    "kernel point must satisfy Im z > 0".into(),
                ));
            }
            let out = suites::average_report(&scenario, w)?;
            print!("{out}");
            Ok(0)
        }
        Command::A2 { scenario, eps_min } => {
            let scenario = read_scenario(&scenario)?;
            let (out, pass) = suites::a2_report(&scenario, eps_min)?;
            print!("{out}");
            Ok(if pass { 0 } else { 1 })
        }
        Command::Random { d, n, seed, out } => {
            let scenario = random_scenario(d, n, seed)?;
            let json = scenario.to_json();
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
