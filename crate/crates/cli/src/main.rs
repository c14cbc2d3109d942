use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rfidsim::harness::{self, ReportFormat, ScenarioConfig, SweepParam};

#[derive(Parser)]
#[command(name = "rfidsim", version, about = "Band-parallel UHF RFID reader simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and print its metrics.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "text")]
        format: ReportFormat,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-event log as CSV.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Run the scenario once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// distance, tag_count, blf, cfo, n_bands or dpd
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the downlink baseband of one band as IQF.
    DumpIq {
        config: PathBuf,
        #[arg(long)]
        band: usize,
        #[arg(long)]
        out: PathBuf,
        /// Simulated seconds to capture.
        #[arg(long, default_value_t = 0.01)]
        duration: f64,
    },
}

fn write_out(out: Option<&PathBuf>, body: &str) -> rfidsim::Result<()> {
    match out {
        Some(p) => std::fs::write(p, body).map_err(|e| rfidsim::Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> rfidsim::Result<()> {
    match cli.cmd {
        Cmd::Run {
            config,
            format,
            out,
            events,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let report = harness::run_scenario(&cfg)?;
            match &out {
                Some(p) => harness::emit_report(&report, format, p)?,
                None => write_out(
                    None,
                    &match format {
                        ReportFormat::Csv => report.to_csv(),
                        ReportFormat::Text => report.to_text(),
                    },
                )?,
            }
            if let Some(p) = events {
                write_out(Some(&p), &report.events_csv())?;
            }
        }
        Cmd::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let reports = harness::sweep(&cfg, param, &values)?;
            let mut body = String::from("value,metric,band,value_out\n");
            for (v, r) in values.iter().zip(&reports) {
                for (m, b, x) in r.rows() {
                    let band = b.map_or("all".to_string(), |b| b.to_string());
                    body.push_str(&format!("{v},{m},{band},{x}\n"));
                }
            }
            write_out(out.as_ref(), &body)?;
        }
        Cmd::DumpIq {
            config,
            band,
            out,
            duration,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let iq = harness::dump_iq(&cfg, band, duration)?;
            let f = File::create(&out).map_err(|e| rfidsim::Error::Io(format!("{}: {e}", out.display())))?;
            let mut w = BufWriter::new(f);
            iq.write_iqf(&mut w)?;
            w.flush().map_err(|e| rfidsim::Error::Io(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rfidsim: {e}");
            ExitCode::FAILURE
        }
    }
}
