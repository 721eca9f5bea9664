#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use tsnsim::scenario::Scenario;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn scenario_path(file: &str) -> PathBuf {
    scenario_dir().join(file)
}

pub fn load(file: &str) -> Scenario {
    Scenario::load(scenario_path(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

/// Every bundled scenario, sorted by file name.
pub fn bundled() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenario directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    v.sort();
    v
}

/// Runs a micro-scenario through the simulator and returns the `a->b`
/// transmission log in the oracle's shape.
pub fn engine_timeline(m: &oracle::Micro) -> Vec<oracle::Tx> {
    use tsnsim::experiment::{run_scenario, RunOptions};
    let s = Scenario::parse(&m.toml(), "micro").unwrap_or_else(|e| panic!("{e}\n{}", m.toml()));
    let opts = RunOptions {
        tx_log: true,
        ..RunOptions::default()
    };
    let (_, r) = run_scenario(&s, &opts).expect("micro-scenario runs");
    let (_, log) = r
        .tx_logs
        .into_iter()
        .find(|(name, _)| name == "a->b")
        .expect("a->b is logged");
    log.into_iter()
        .map(|x| oracle::Tx {
            class: x.class,
            flow: x.flow,
            fragment: x.fragment,
            data: x.data_bytes,
            last: x.is_final,
            start: x.start.0,
            end: x.end.0,
        })
        .collect()
}
