use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wsnsim::harness::{self, Axis, SweepSpec};
use wsnsim::scenario::{ProtocolKind, Scenario};
use wsnsim::Result;

#[derive(Parser)]
#[command(name = "wsnsim", version, about = "Clustered WSN routing simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a single scenario and write one CSV row.
    Run {
        /// Scenario file (key = value lines); defaults apply when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        protocol: Option<ProtocolKind>,
        /// Write a per-event trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// CSV output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra `key=value` overrides applied after the scenario file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Run every protocol over a grid of points and seeds.
    Sweep {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// load, size or malicious.
        #[arg(long)]
        axis: Axis,
        /// Comma separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        points: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        seeds: u32,
        /// Comma separated; all three by default.
        #[arg(long, value_delimiter = ',')]
        protocols: Vec<ProtocolKind>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-point means and 95% intervals.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
}

fn scenario(path: Option<&PathBuf>, sets: &[String]) -> Result<Scenario> {
    let mut s = match path {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    for kv in sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| wsnsim::Error::Validation {
                key: kv.clone(),
                msg: "expected KEY=VALUE".into(),
            })?;
        s.set(k.trim(), v.trim())?;
    }
    s.finish();
    s.validate()?;
    Ok(s)
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn real_main(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run {
            scenario: path,
            seed,
            protocol,
            trace,
            out,
            sets,
        } => {
            let mut s = scenario(path.as_ref(), &sets)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(p) = protocol {
                s.protocol = p;
            }
            let trace: Option<Box<dyn Write>> = match trace {
                Some(p) => Some(Box::new(BufWriter::new(File::create(p)?))),
                None => None,
            };
            let o = harness::run_one(&s, trace)?;
            let mut w = output(out.as_ref())?;
            harness::write_csv(std::slice::from_ref(&o.row), &mut w)?;
            w.flush()?;
        }
        Cmd::Sweep {
            scenario: path,
            axis,
            points,
            seeds,
            protocols,
            out,
            summary,
            threads,
            sets,
        } => {
            let base = scenario(path.as_ref(), &sets)?;
            let spec = SweepSpec {
                axis,
                points,
                seeds_per_point: seeds,
                protocols: if protocols.is_empty() {
                    ProtocolKind::ALL.to_vec()
                } else {
                    protocols
                },
            };
            let rows = harness::run_sweep(
                &spec,
                &base,
                threads.unwrap_or_else(harness::default_threads),
            )?;
            let mut w = output(out.as_ref())?;
            harness::write_csv(&rows, &mut w)?;
            w.flush()?;
            if let Some(p) = summary {
                let mut f = BufWriter::new(File::create(p)?);
                writeln!(f, "{}", harness::SUMMARY_HEADER)?;
                for s in harness::summarize(&rows, axis)? {
                    writeln!(f, "{}", s.to_csv())?;
                }
                f.flush()?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
