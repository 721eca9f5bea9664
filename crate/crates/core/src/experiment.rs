//! Single runs with command-line overrides, run summaries and the
//! (credit mode x preemption mode x seed) matrix.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cbs::CreditMode;
use crate::error::SimError;
use crate::fp::FpMode;
use crate::metrics::{kind_str, maxima, FlowKpi, KindMaxima};
use crate::model::{TimeNs, TrafficKind};
use crate::network::{simulate, PortSummary, SimConfig, SimResult, TraceOptions};
use crate::scenario::Scenario;

/// Overrides applied on top of the scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub credit_mode: Option<CreditMode>,
    pub fp: Option<FpMode>,
    pub guardband: Option<bool>,
    pub seed: Option<u64>,
    pub duration: Option<TimeNs>,
    pub trace: Option<TraceOptions>,
    pub event_log: bool,
    pub tx_log: bool,
}

impl RunOptions {
    pub fn apply(&self, base: &SimConfig) -> SimConfig {
        let mut cfg = base.clone();
        if let Some(m) = self.credit_mode {
            cfg.credit_mode = m;
        }
        if let Some(fp) = self.fp {
            cfg.preemption.mode = fp;
        }
        if let Some(gb) = self.guardband {
            cfg.preemption.guardband = gb;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = self.duration {
            cfg.duration = d;
        }
        cfg.trace = self.trace.clone();
        cfg.event_log = self.event_log;
        cfg.tx_log = self.tx_log;
        cfg
    }
}

/// Structured run report with per-class maxima.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub credit_mode: String,
    pub fp_mode: String,
    pub guardband: bool,
    pub seed: u64,
    pub duration_ns: u64,
    pub events: u64,
    pub tt: KindMaxima,
    pub avb: KindMaxima,
    pub be: KindMaxima,
    pub per_class: Vec<ClassMaxima>,
    pub tt_window_misses: u64,
    pub preemptions: u64,
    pub express_blocked: u64,
    pub ports: Vec<PortSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassMaxima {
    pub class: u8,
    pub kind: &'static str,
    pub flows: usize,
    pub max_smd_ns: Option<u64>,
    pub max_smj_ns: Option<u64>,
}

pub fn summarize(name: &str, cfg: &SimConfig, r: &SimResult) -> Summary {
    let mut ids: Vec<u8> = r.kpis.iter().map(|k| k.class).collect();
    ids.sort_unstable_by(|a, b| b.cmp(a));
    ids.dedup();
    let per_class = ids
        .into_iter()
        .map(|c| {
            let rows: Vec<&FlowKpi> = r.kpis.iter().filter(|k| k.class == c).collect();
            ClassMaxima {
                class: c,
                kind: kind_str(rows[0].kind),
                flows: rows.len(),
                max_smd_ns: rows.iter().filter_map(|k| k.smd_ns).max(),
                max_smj_ns: rows.iter().filter_map(|k| k.smj_ns).max(),
            }
        })
        .collect();
    Summary {
        scenario: name.to_string(),
        credit_mode: cfg.credit_mode.to_string(),
        fp_mode: cfg.preemption.mode.to_string(),
        guardband: cfg.preemption.guardband,
        seed: cfg.seed,
        duration_ns: cfg.duration.0,
        events: r.events,
        tt: maxima(&r.kpis, TrafficKind::Tt),
        avb: maxima(&r.kpis, TrafficKind::Avb),
        be: maxima(&r.kpis, TrafficKind::Be),
        per_class,
        tt_window_misses: r.ports.iter().map(|p| p.tt_window_misses).sum(),
        preemptions: r.ports.iter().map(|p| p.preemptions).sum(),
        express_blocked: r.ports.iter().map(|p| p.express_blocked).sum(),
        ports: r.ports.clone(),
        warnings: r.warnings.clone(),
    }
}

pub fn run_scenario(
    scenario: &Scenario,
    opts: &RunOptions,
) -> Result<(SimConfig, SimResult), SimError> {
    let cfg = opts.apply(&scenario.config);
    let r = simulate(cfg.clone())?;
    Ok((cfg, r))
}

/// One cell of the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tuple {
    pub credit_mode: CreditMode,
    pub fp: FpMode,
    pub guardband: bool,
    pub seed: u64,
}

impl std::fmt::Display for Tuple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "mode={} fp={} gb={} seed={}",
            self.credit_mode,
            self.fp,
            if self.guardband { "on" } else { "off" },
            self.seed
        )
    }
}

#[derive(Debug, Error)]
#[error("run {tuple} failed: {source}")]
pub struct MatrixError {
    pub tuple: Tuple,
    #[source]
    pub source: SimError,
}

#[derive(Debug, Clone)]
pub struct MatrixRun {
    pub tuple: Tuple,
    pub kpis: Vec<FlowKpi>,
    pub summary: Summary,
}

pub fn tuples(modes: &[CreditMode], fps: &[FpMode], gbs: &[bool], seeds: &[u64]) -> Vec<Tuple> {
    let mut out = Vec::new();
    for &credit_mode in modes {
        for &fp in fps {
            for &guardband in gbs {
                for &seed in seeds {
                    out.push(Tuple {
                        credit_mode,
                        fp,
                        guardband,
                        seed,
                    });
                }
            }
        }
    }
    out
}

/// Runs every tuple in parallel; results come back in tuple order.
pub fn run_matrix(
    scenario: &Scenario,
    tuples: &[Tuple],
    base: &RunOptions,
) -> Result<Vec<MatrixRun>, MatrixError> {
    tuples
        .par_iter()
        .map(|&tuple| {
            let opts = RunOptions {
                credit_mode: Some(tuple.credit_mode),
                fp: Some(tuple.fp),
                guardband: Some(tuple.guardband),
                seed: Some(tuple.seed),
                trace: None,
                event_log: false,
                tx_log: false,
                ..base.clone()
            };
            let (cfg, r) =
                run_scenario(scenario, &opts).map_err(|source| MatrixError { tuple, source })?;
            Ok(MatrixRun {
                tuple,
                summary: summarize(scenario.name(), &cfg, &r),
                kpis: r.kpis,
            })
        })
        .collect()
}

pub fn write_matrix_csv<W: Write>(out: W, runs: &[MatrixRun]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "credit_mode",
        "fp_mode",
        "gb",
        "seed",
        "flow",
        "class",
        "kind",
        "smd_ns",
        "smj_ns",
        "samples",
    ])?;
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    for run in runs {
        let t = run.tuple;
        for k in &run.kpis {
            w.write_record([
                t.credit_mode.to_string(),
                t.fp.to_string(),
                if t.guardband { "on" } else { "off" }.to_string(),
                t.seed.to_string(),
                k.flow.clone(),
                k.class.to_string(),
                kind_str(k.kind).to_string(),
                opt(k.smd_ns),
                opt(k.smj_ns),
                k.samples.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
