use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tsnsim::cbs::CreditMode;
use tsnsim::experiment::{
    run_matrix, run_scenario, summarize, tuples, write_matrix_csv, RunOptions,
};
use tsnsim::fp::FpMode;
use tsnsim::metrics::{write_kpi_csv, write_trace_csv};
use tsnsim::network::TraceOptions;
use tsnsim::scenario::{parse_duration, Scenario};

#[derive(Parser)]
#[command(
    name = "tsnsim",
    version,
    about = "TSN egress-port simulator (gating, CBS, frame preemption)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write per-flow KPIs and a summary.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Also write every dispatched event to events.log.
        #[arg(long)]
        event_log: bool,
    },
    /// Run every combination of credit mode, preemption mode and seed.
    Matrix {
        scenario: PathBuf,
        /// Credit modes, comma separated.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "nonfrozen,frozen,return-to-zero"
        )]
        modes: Vec<CreditMode>,
        /// Preemption modes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "none,with-hr,without-hr")]
        fps: Vec<FpMode>,
        #[arg(long, value_delimiter = ',', default_value = "on")]
        gbs: Vec<Switch>,
        /// Seeds as a list (1,2,3) or an inclusive range (1..10).
        #[arg(long, default_value = "1..10")]
        seeds: String,
        #[arg(long, value_parser = duration_arg)]
        duration: Option<tsnsim::model::TimeNs>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate scenario files.
    Validate { scenarios: Vec<PathBuf> },
    /// Run one simulation and write the credit/gate trace.
    Trace {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Restrict the trace to these egress ports (e.g. sw1->sw2).
        #[arg(long = "port")]
        ports: Vec<String>,
        /// Periodic sampling interval in addition to change points; 0 disables.
        #[arg(long, default_value = "10us", value_parser = duration_arg)]
        interval: tsnsim::model::TimeNs,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    mode: Option<CreditMode>,
    #[arg(long)]
    fp: Option<FpMode>,
    /// Guardband in without-hr mode.
    #[arg(long)]
    gb: Option<Switch>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = duration_arg)]
    duration: Option<tsnsim::model::TimeNs>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        matches!(self, Switch::On)
    }
}

fn duration_arg(s: &str) -> Result<tsnsim::model::TimeNs, String> {
    parse_duration(s)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty seed range {s}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<u64>()
                .with_context(|| format!("bad seed '{x}'"))
        })
        .collect()
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            credit_mode: self.mode,
            fp: self.fp,
            guardband: self.gb.map(Switch::on),
            seed: self.seed,
            duration: self.duration,
            ..RunOptions::default()
        }
    }
}

enum Failure {
    Scenario(anyhow::Error),
    Run(anyhow::Error),
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    let s = Scenario::load(path).map_err(|e| Failure::Scenario(e.into()))?;
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    Ok(s)
}

fn output(dir: Option<&Path>, file: &str) -> Result<Box<dyn Write>> {
    match dir {
        Some(d) => {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
            let p = d.join(file);
            let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn execute(cmd: Command) -> Result<(), Failure> {
    let run_err = Failure::Run;
    match cmd {
        Command::Run {
            scenario,
            common,
            event_log,
        } => {
            let s = load(&scenario)?;
            let opts = RunOptions {
                event_log,
                ..common.options()
            };
            let (cfg, r) = run_scenario(&s, &opts).map_err(|e| run_err(e.into()))?;
            let summary = summarize(s.name(), &cfg, &r);
            let dir = common.out.as_deref();
            (|| -> Result<()> {
                write_kpi_csv(output(dir, "kpi.csv")?, &r.kpis)?;
                if let Some(d) = dir {
                    let mut w = output(Some(d), "summary.json")?;
                    serde_json::to_writer_pretty(&mut w, &summary)?;
                    writeln!(w)?;
                    if event_log {
                        let mut w = output(Some(d), "events.log")?;
                        for line in &r.event_log {
                            writeln!(w, "{line}")?;
                        }
                    }
                }
                Ok(())
            })()
            .map_err(run_err)?;
            eprintln!(
                "{}: mode={} fp={} seed={} events={} max TT smd/smj={:?}/{:?} ns, max AVB smd/smj={:?}/{:?} ns",
                s.name(),
                summary.credit_mode,
                summary.fp_mode,
                summary.seed,
                summary.events,
                summary.tt.max_smd_ns,
                summary.tt.max_smj_ns,
                summary.avb.max_smd_ns,
                summary.avb.max_smj_ns
            );
        }
        Command::Matrix {
            scenario,
            modes,
            fps,
            gbs,
            seeds,
            duration,
            out,
        } => {
            let s = load(&scenario)?;
            let seeds = parse_seeds(&seeds).map_err(Failure::Scenario)?;
            let gbs: Vec<bool> = gbs.into_iter().map(Switch::on).collect();
            let all = tuples(&modes, &fps, &gbs, &seeds);
            let base = RunOptions {
                duration,
                ..RunOptions::default()
            };
            let runs = run_matrix(&s, &all, &base).map_err(|e| run_err(e.into()))?;
            (|| -> Result<()> {
                write_matrix_csv(output(out.as_deref(), "matrix.csv")?, &runs)?;
                if let Some(d) = out.as_deref() {
                    let summaries: Vec<_> = runs.iter().map(|r| &r.summary).collect();
                    let mut w = output(Some(d), "summary.json")?;
                    serde_json::to_writer_pretty(&mut w, &summaries)?;
                    writeln!(w)?;
                }
                Ok(())
            })()
            .map_err(run_err)?;
            eprintln!("{}: {} runs", s.name(), runs.len());
        }
        Command::Validate { scenarios } => {
            if scenarios.is_empty() {
                return Err(Failure::Scenario(anyhow::anyhow!("no scenario given")));
            }
            for p in &scenarios {
                let s = load(p)?;
                println!(
                    "{}: ok ({} nodes, {} links, {} flows, {} warnings)",
                    p.display(),
                    s.config.topology.nodes.len(),
                    s.config.topology.links.len(),
                    s.config.flows.len(),
                    s.warnings.len()
                );
            }
        }
        Command::Trace {
            scenario,
            common,
            ports,
            interval,
        } => {
            let s = load(&scenario)?;
            let opts = RunOptions {
                trace: Some(TraceOptions {
                    interval: Some(interval),
                    ports: (!ports.is_empty()).then_some(ports),
                }),
                ..common.options()
            };
            let (_, r) = run_scenario(&s, &opts).map_err(|e| run_err(e.into()))?;
            write_trace_csv(
                output(common.out.as_deref(), "trace.csv").map_err(run_err)?,
                &r.trace,
            )
            .map_err(|e| run_err(e.into()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Scenario(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
