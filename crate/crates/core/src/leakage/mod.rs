//! Power-trace synthesis from simulated leakage events, trace campaigns and
//! the binary trace file format.

mod campaign;
mod io;
mod shuffle;

pub use campaign::{
    bank_cycles, build_trichina_bank, default_fixed_input, Campaign, CampaignConfig, TrichinaBank,
    Variant, BANK_OPS, BANK_SIZE,
};
pub use io::{read_traceset, write_traceset, TraceReader, TraceWriter, TRACE_MAGIC, TRACE_VERSION};
pub use shuffle::ShuffleToy;

use crate::bnn::BnnError;
use crate::netlist::{ArrivalPolicy, CycleReport, EvalMode, NetlistError};
use crate::prng::{Iv, Key};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LeakageError {
    #[error("invalid leak model: {0}")]
    Model(String),
    #[error("invalid campaign: {0}")]
    Campaign(String),
    #[error("trace file offset {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Bnn(#[from] BnnError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

/// Weights of the leakage events and the measurement noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeakModel {
    /// Contribution of one flipped register bit.
    pub register_weight: f64,
    /// Contribution of one transient combinational toggle.
    pub glitch_weight: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_sigma: f64,
    pub arrival: ArrivalPolicy,
}

impl Default for LeakModel {
    fn default() -> Self {
        Self {
            register_weight: 1.0,
            glitch_weight: 0.25,
            noise_sigma: 1.0,
            arrival: ArrivalPolicy::PerCycleRandom,
        }
    }
}

impl LeakModel {
    pub fn with_sigma(noise_sigma: f64) -> Self {
        Self {
            noise_sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LeakageError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.register_weight) || !ok(self.glitch_weight) || !ok(self.noise_sigma) {
            return Err(LeakageError::Model(format!(
                "weights and sigma must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }

    /// Glitches are only simulated when they carry weight.
    pub fn eval_mode(&self) -> EvalMode {
        if self.glitch_weight > 0.0 {
            EvalMode::Transient(self.arrival)
        } else {
            EvalMode::Settled
        }
    }

    fn noiseless(&self, reg_hd: u32, toggles: u32) -> f64 {
        self.register_weight * reg_hd as f64 + self.glitch_weight * toggles as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Fixed = 0,
    Random = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Fixed),
            1 => Some(Label::Random),
            _ => None,
        }
    }
}

/// One synthesized trace. `input` is the stimulus (image pixels, or the
/// operand words of the Trichina bank); it is not stored in trace files.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub trace_index: u64,
    pub label: Label,
    pub samples: Vec<f32>,
    pub input: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceSet {
    pub n_samples: usize,
    pub traces: Vec<Trace>,
}

impl TraceSet {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.traces.iter().filter(|t| t.label == label).count()
    }
}

/// Independent random streams derived from one campaign seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Noise = 1,
    Stimulus = 2,
    Arrival = 3,
}

/// Generator for `(key, iv, index, domain)`; every combination gives an
/// unrelated stream.
pub fn derived_rng(key: &Key, iv: &Iv, index: u64, domain: Domain) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..10].copy_from_slice(key);
    seed[10..20].copy_from_slice(iv);
    seed[20..28].copy_from_slice(&index.to_le_bytes());
    seed[28] = domain as u8;
    ChaCha8Rng::from_seed(seed)
}

pub fn noise_seed(key: &Key, iv: &Iv, trace_index: u64) -> u64 {
    derived_rng(key, iv, trace_index, Domain::Noise).next_u64()
}

/// `register_weight * reg_hd + glitch_weight * toggles + N(0, sigma^2)` per
/// cycle, with noise drawn from a generator seeded by `noise_seed`.
pub fn synthesize_trace(reports: &[CycleReport], model: &LeakModel, noise_seed: u64) -> Vec<f32> {
    synthesize(
        reports.len(),
        |t| (reports[t].reg_hd, reports[t].transient_toggles),
        model,
        noise_seed,
    )
}

pub(crate) fn synthesize(
    n: usize,
    events: impl Fn(usize) -> (u32, u32),
    model: &LeakModel,
    noise_seed: u64,
) -> Vec<f32> {
    let mut rng = (model.noise_sigma > 0.0).then(|| ChaCha8Rng::seed_from_u64(noise_seed));
    (0..n)
        .map(|t| {
            let (hd, toggles) = events(t);
            let mut v = model.noiseless(hd, toggles);
            if let Some(rng) = rng.as_mut() {
                let z: f64 = rng.sample(StandardNormal);
                v += model.noise_sigma * z;
            }
            v as f32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{NetId, NetlistBuilder, SimState};

    fn reports(hd: &[u32]) -> Vec<CycleReport> {
        hd.iter()
            .map(|&reg_hd| CycleReport {
                reg_hd,
                ..Default::default()
            })
            .collect()
    }

    #[test]
    fn silent_cycle_is_zero() {
        let m = LeakModel {
            glitch_weight: 0.0,
            noise_sigma: 0.0,
            ..LeakModel::default()
        };
        assert_eq!(synthesize_trace(&reports(&[0, 0]), &m, 5), vec![0.0, 0.0]);
    }

    #[test]
    fn accumulator_transition_sample() {
        let mut b = NetlistBuilder::new();
        let d = b.input_port("d", 20).unwrap();
        let q: Vec<NetId> = d.iter().map(|&n| b.reg(n)).collect();
        b.output("q", &q);
        let nl = b.finish().unwrap();
        let mut s = SimState::new(&nl, EvalMode::Settled);
        let r = vec![s.step(&[("d", 0xFF)], &[]).unwrap()];
        let m = LeakModel::with_sigma(0.0);
        assert_eq!(synthesize_trace(&r, &m, 1), vec![8.0]);
    }

    #[test]
    fn noise_mean_converges() {
        let m = LeakModel::with_sigma(2.0);
        let r = reports(&[5]);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|i| synthesize_trace(&r, &m, i)[0] as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 5.0).abs() < 3.0 * 2.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn glitch_weight_scales_toggles() {
        let r = vec![CycleReport {
            reg_hd: 2,
            transient_toggles: 8,
            ..Default::default()
        }];
        let m = LeakModel::with_sigma(0.0);
        assert_eq!(synthesize_trace(&r, &m, 0), vec![4.0]);
    }

    #[test]
    fn model_validation() {
        assert!(LeakModel::default().validate().is_ok());
        assert!(LeakModel::with_sigma(-1.0).validate().is_err());
        let m = LeakModel {
            glitch_weight: f64::NAN,
            ..LeakModel::default()
        };
        assert!(m.validate().is_err());
        assert_eq!(
            LeakModel {
                glitch_weight: 0.0,
                ..m
            }
            .eval_mode(),
            EvalMode::Settled
        );
    }

    #[test]
    fn derived_streams_differ() {
        let (k, iv) = ([1; 10], [2; 10]);
        let a = derived_rng(&k, &iv, 3, Domain::Noise).next_u64();
        assert_eq!(a, derived_rng(&k, &iv, 3, Domain::Noise).next_u64());
        assert_ne!(a, derived_rng(&k, &iv, 4, Domain::Noise).next_u64());
        assert_ne!(a, derived_rng(&k, &iv, 3, Domain::Stimulus).next_u64());
    }
}
