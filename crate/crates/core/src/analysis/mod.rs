//! Leakage assessment: Welch t-tests, correlation attacks and an
//! exhaustive probing-security checker.

mod dpa;
mod export;
mod probing;
mod stats;

pub use dpa::{
    dpa_attack, predicted_hd, traces_to_rank1, AttackReport, DpaAccumulator, MAX_ATTACK_WEIGHTS,
};
pub use export::{write_attack_csv, write_tvla_csv};
pub use probing::{
    probing_check, Gadget, GadgetFragment, ProbeMode, ProbeReport, ProbeWitness, MAX_CONE_SOURCES,
    MAX_PROBE_VARS,
};
pub use stats::{
    magnitude_spectrum, tvla_first_order, tvla_frequency, tvla_second_order, welch_t,
    welch_t_second_order, Moments, StreamStats, TTestReport, TestOrder, Tvla, TVLA_THRESHOLD,
};

use crate::netlist::NetlistError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("too few {class} traces: {n} (need at least 2)")]
    TooFewTraces { class: &'static str, n: u64 },
    #[error("too few samples per trace for this test: {0}")]
    TooFewSamples(usize),
    #[error("attack: {0}")]
    Attack(String),
    #[error("probing enumeration over {vars} variables exceeds the limit of {limit}")]
    Budget { vars: usize, limit: usize },
    #[error("probing: {0}")]
    Probe(String),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
