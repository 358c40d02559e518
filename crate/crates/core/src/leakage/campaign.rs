use super::{
    derived_rng, noise_seed, synthesize, synthesize_trace, Domain, Label, LeakModel, LeakageError,
    Trace, TraceSet,
};
use crate::adders::AdderTopology;
use crate::bnn::{
    build_masked_datapath, infer_unmasked, run_masked_batch, unmasked_accumulate_cycle, BnnModel,
    LaneJob, MaskedDatapath, PrngConfig, ScheduleConfig,
};
use crate::masked_gates::{trichina_sync, ShareBit, ShareWord, TRICHINA_LATENCY};
use crate::netlist::{Lane256, Lanes, Netlist, NetlistBuilder, NetlistError, Simulator};
use crate::prng::{iv_for_trace, Iv, Key, LaneTrivium, PrngMode};
use rand::{Rng, RngCore};
use rayon::prelude::*;
use std::ops::Range;

/// Parallel AND gates in the second-order test bank.
pub const BANK_SIZE: usize = 32;
/// Operand pairs applied to the bank per trace.
pub const BANK_OPS: usize = 8;

/// Samples per bank trace: operands, the input registers and the drain.
pub fn bank_cycles() -> usize {
    BANK_OPS + 1 + TRICHINA_LATENCY
}

/// `BANK_SIZE` synchronized Trichina gates fed from share registers.
#[derive(Clone, Debug)]
pub struct TrichinaBank {
    pub netlist: Netlist,
    pub a: ShareWord,
    pub b: ShareWord,
    pub out: ShareWord,
}

pub fn build_trichina_bank(n: usize) -> Result<TrichinaBank, NetlistError> {
    let mut b = NetlistBuilder::new();
    let a = ShareWord::input(&mut b, "a", n)?;
    let y = ShareWord::input(&mut b, "b", n)?;
    let aq = a.reg(&mut b);
    let yq = y.reg(&mut b);
    let r = b.random_word(n);
    let bits = (0..n)
        .map(|i| trichina_sync(&mut b, aq.bits[i], yq.bits[i], r[i]))
        .collect::<Result<Vec<ShareBit>, _>>()?;
    let out = ShareWord::new(bits);
    b.output("c0", &out.share0());
    b.output("c1", &out.share1());
    Ok(TrichinaBank {
        netlist: b.finish()?,
        a,
        b: y,
        out,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Unmasked,
    Masked {
        topology: AdderTopology,
        schedule: ScheduleConfig,
    },
    TrichinaBank,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignConfig {
    pub variant: Variant,
    pub n_traces: u64,
    pub leak: LeakModel,
    pub key: Key,
    pub base_iv: Iv,
    /// Image of the fixed class, or `2 * BANK_OPS` operand words for the
    /// bank as `[a0, b0, a1, b1, ...]`.
    pub fixed_input: Vec<u32>,
    pub prng: PrngMode,
}

/// Deterministic fixed-class input for a campaign keyed by `(key, iv)`:
/// an image for the model variants, operand words for the bank.
pub fn default_fixed_input(
    variant: &Variant,
    model: Option<&BnnModel>,
    key: &Key,
    iv: &Iv,
) -> Result<Vec<u32>, LeakageError> {
    let mut rng = derived_rng(key, iv, u64::MAX, Domain::Stimulus);
    match (variant, model) {
        (Variant::TrichinaBank, _) => Ok((0..2 * BANK_OPS).map(|_| rng.next_u32()).collect()),
        (_, Some(m)) => Ok(m.random_image(&mut rng)),
        (_, None) => Err(LeakageError::Campaign("this variant needs a model".into())),
    }
}

enum Target {
    Unmasked(BnnModel),
    Masked(BnnModel, Box<MaskedDatapath>),
    Bank(TrichinaBank),
}

/// A prepared fixed-vs-random campaign. Trace `i` depends only on the
/// configuration and `i` (plus the 256-trace batch it falls in, which
/// shares glitch arrival orders), never on the worker count.
pub struct Campaign {
    config: CampaignConfig,
    target: Target,
}

const BATCH: usize = Lane256::LANES;

impl Campaign {
    pub fn new(model: Option<&BnnModel>, config: CampaignConfig) -> Result<Self, LeakageError> {
        config.leak.validate()?;
        if config.n_traces < 2 {
            return Err(LeakageError::Campaign(format!(
                "need at least 2 traces, got {}",
                config.n_traces
            )));
        }
        let need_model = || {
            model
                .cloned()
                .ok_or_else(|| LeakageError::Campaign("this variant needs a model".into()))
        };
        let target = match config.variant {
            Variant::Unmasked => {
                let m = need_model()?;
                m.validate()?;
                m.check_image(&config.fixed_input)?;
                Target::Unmasked(m)
            }
            Variant::Masked { topology, schedule } => {
                let m = need_model()?;
                m.check_image(&config.fixed_input)?;
                let dp = build_masked_datapath(&m, topology, &schedule)?;
                Target::Masked(m, Box::new(dp))
            }
            Variant::TrichinaBank => {
                if config.fixed_input.len() != 2 * BANK_OPS {
                    return Err(LeakageError::Campaign(format!(
                        "bank fixed input needs {} words",
                        2 * BANK_OPS
                    )));
                }
                Target::Bank(build_trichina_bank(BANK_SIZE)?)
            }
        };
        Ok(Self { config, target })
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn datapath(&self) -> Option<&MaskedDatapath> {
        match &self.target {
            Target::Masked(_, dp) => Some(dp),
            _ => None,
        }
    }

    pub fn netlist(&self) -> Option<&Netlist> {
        match &self.target {
            Target::Masked(_, dp) => Some(&dp.netlist),
            Target::Bank(b) => Some(&b.netlist),
            Target::Unmasked(_) => None,
        }
    }

    pub fn n_samples(&self) -> usize {
        match &self.target {
            Target::Unmasked(m) => {
                let s = &m.layer_sizes;
                let nodes: usize = (0..s.len() - 1).map(|l| s[l + 1] * (s[l] + 1)).sum();
                nodes + m.n_out()
            }
            Target::Masked(_, dp) => dp.schedule.cycles(),
            Target::Bank(_) => bank_cycles(),
        }
    }

    /// Sample ranges of the first layer and of everything after it.
    pub fn layer_windows(&self) -> (Range<usize>, Range<usize>) {
        let n = self.n_samples();
        let split = match &self.target {
            Target::Unmasked(m) => m.layer_sizes[1] * (m.layer_sizes[0] + 1),
            Target::Masked(_, dp) => dp.schedule.layer_spans[0].1,
            Target::Bank(_) => 0,
        };
        (0..split, split..n)
    }

    /// Samples covering the update of node 0's first-layer accumulator with
    /// input `input`: its single cycle on the unmasked datapath, or issue
    /// through the accumulator write on the masked one.
    pub fn attack_window(&self, input: usize) -> Option<Range<usize>> {
        match &self.target {
            Target::Unmasked(m) if input < m.n_in() => {
                let c = unmasked_accumulate_cycle(input);
                Some(c..c + 1)
            }
            Target::Masked(_, dp) => {
                let c = dp.schedule.issue_cycle(0, 0, input)?;
                Some(c..(c + dp.regfile_depth + 1).min(self.n_samples()))
            }
            _ => None,
        }
    }

    /// Label and input of trace `index`, from a fair coin of the campaign
    /// stream.
    pub fn stimulus(&self, index: u64) -> (Label, Vec<u32>) {
        let c = &self.config;
        let mut rng = derived_rng(&c.key, &c.base_iv, index, Domain::Stimulus);
        if rng.random::<bool>() {
            let input = match &self.target {
                Target::Unmasked(m) | Target::Masked(m, _) => m.random_image(&mut rng),
                Target::Bank(_) => (0..2 * BANK_OPS).map(|_| rng.next_u32()).collect(),
            };
            (Label::Random, input)
        } else {
            (Label::Fixed, c.fixed_input.clone())
        }
    }

    /// Traces `start .. start + count` with `count <= 256`.
    pub fn run_batch(&self, start: u64, count: usize) -> Result<Vec<Trace>, LeakageError> {
        assert!(count > 0 && count <= BATCH);
        let c = &self.config;
        let stim: Vec<(Label, Vec<u32>)> = (0..count as u64)
            .map(|i| self.stimulus(start + i))
            .collect();
        let arrival = derived_rng(&c.key, &c.base_iv, start, Domain::Arrival).next_u64();
        let mode = c.leak.eval_mode();
        let traces = match &self.target {
            Target::Unmasked(m) => stim
                .into_iter()
                .enumerate()
                .map(|(i, (label, input))| {
                    let idx = start + i as u64;
                    let r = infer_unmasked(m, &input)?;
                    Ok(Trace {
                        trace_index: idx,
                        label,
                        samples: synthesize_trace(
                            &r.cycle_reports,
                            &c.leak,
                            noise_seed(&c.key, &c.base_iv, idx),
                        ),
                        input,
                    })
                })
                .collect::<Result<Vec<_>, LeakageError>>()?,
            Target::Masked(m, dp) => {
                let jobs: Vec<LaneJob> = stim
                    .iter()
                    .enumerate()
                    .map(|(i, (_, input))| LaneJob {
                        image: input,
                        trace_index: start + i as u64,
                    })
                    .collect();
                let prng = PrngConfig {
                    mode: c.prng,
                    key: c.key,
                    base_iv: c.base_iv,
                };
                let out = run_masked_batch::<Lane256>(dp, m, &jobs, &prng, mode, arrival, true)?;
                let lk = out.leakage.expect("leakage was recorded");
                stim.into_iter()
                    .enumerate()
                    .map(|(lane, (label, input))| {
                        let idx = start + lane as u64;
                        let samples = synthesize(
                            lk.cycles,
                            |t| (lk.reg_hd(lane, t), lk.toggles(lane, t)),
                            &c.leak,
                            noise_seed(&c.key, &c.base_iv, idx),
                        );
                        Trace {
                            trace_index: idx,
                            label,
                            samples,
                            input,
                        }
                    })
                    .collect()
            }
            Target::Bank(bank) => {
                let inputs: Vec<&[u32]> = stim.iter().map(|(_, i)| i.as_slice()).collect();
                let (hd, toggles) = simulate_bank(bank, c, start, &inputs, arrival)?;
                let n = bank_cycles();
                stim.into_iter()
                    .enumerate()
                    .map(|(lane, (label, input))| {
                        let idx = start + lane as u64;
                        let samples = synthesize(
                            n,
                            |t| (hd[t * count + lane], toggles[t * count + lane]),
                            &c.leak,
                            noise_seed(&c.key, &c.base_iv, idx),
                        );
                        Trace {
                            trace_index: idx,
                            label,
                            samples,
                            input,
                        }
                    })
                    .collect()
            }
        };
        Ok(traces)
    }

    /// Feeds every trace to `sink` in index order. Batches run in parallel
    /// on the current rayon pool.
    pub fn run(
        &self,
        mut sink: impl FnMut(Trace) -> Result<(), LeakageError>,
    ) -> Result<(), LeakageError> {
        let n = self.config.n_traces;
        let batches: Vec<u64> = (0..n.div_ceil(BATCH as u64)).collect();
        let wave = rayon::current_num_threads().max(1) * 2;
        for chunk in batches.chunks(wave) {
            let results: Vec<Result<Vec<Trace>, LeakageError>> = chunk
                .par_iter()
                .map(|&b| {
                    let start = b * BATCH as u64;
                    let count = (n - start).min(BATCH as u64) as usize;
                    self.run_batch(start, count)
                })
                .collect();
            for r in results {
                for t in r? {
                    sink(t)?;
                }
            }
        }
        Ok(())
    }

    pub fn collect(&self) -> Result<TraceSet, LeakageError> {
        let mut set = TraceSet {
            n_samples: self.n_samples(),
            traces: Vec::with_capacity(self.config.n_traces as usize),
        };
        self.run(|t| {
            set.traces.push(t);
            Ok(())
        })?;
        Ok(set)
    }
}

/// Per-cycle register HD and toggles of the bank, cycle-major.
fn simulate_bank(
    bank: &TrichinaBank,
    c: &CampaignConfig,
    start: u64,
    inputs: &[&[u32]],
    arrival: u64,
) -> Result<(Vec<u32>, Vec<u32>), LeakageError> {
    let lanes = inputs.len();
    let mut prng = match c.prng {
        PrngMode::Trivium => {
            let seeds: Vec<(Key, Iv)> = (0..lanes as u64)
                .map(|i| (c.key, iv_for_trace(&c.base_iv, start + i)))
                .collect();
            Some(LaneTrivium::<Lane256>::new(&seeds))
        }
        PrngMode::Zero => None,
    };
    let mut draw = || prng.as_mut().map_or(Lane256::default(), |t| t.next());
    let mut sim = Simulator::<Lane256>::new(&bank.netlist, c.leak.eval_mode());
    sim.set_arrival_seed(arrival);
    let n = bank_cycles();
    let mut hd = vec![0u32; n * lanes];
    let mut toggles = vec![0u32; n * lanes];
    let randoms = bank.netlist.random_nets().to_vec();
    for t in 0..n {
        for (operand, word) in [(0usize, &bank.a), (1, &bank.b)] {
            for (bit, sb) in word.bits.iter().enumerate() {
                let mut secret = Lane256::default();
                if t < BANK_OPS {
                    for (lane, input) in inputs.iter().enumerate() {
                        secret.set_lane(lane, (input[2 * t + operand] >> bit) & 1 == 1);
                    }
                }
                let m = draw();
                sim.assign(sb.share0, m);
                sim.assign(sb.share1, m ^ secret);
            }
        }
        for &r in &randoms {
            let v = draw();
            sim.assign(r, v);
        }
        sim.step()?;
        sim.reg_hd()
            .accumulate_into(&mut hd[t * lanes..(t + 1) * lanes]);
        sim.toggles()
            .accumulate_into(&mut toggles[t * lanes..(t + 1) * lanes]);
    }
    Ok((hd, toggles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> BnnModel {
        BnnModel::random(&[4, 6, 3], 4, 8, &mut ChaCha8Rng::seed_from_u64(7)).unwrap()
    }

    fn config(variant: Variant, n: u64, sigma: f64, fixed: Vec<u32>) -> CampaignConfig {
        CampaignConfig {
            variant,
            n_traces: n,
            leak: LeakModel::with_sigma(sigma),
            key: [3; 10],
            base_iv: [4; 10],
            fixed_input: fixed,
            prng: PrngMode::Trivium,
        }
    }

    #[test]
    fn fair_coin_labels() {
        let m = toy();
        let c = Campaign::new(
            Some(&m),
            config(Variant::Unmasked, 1000, 1.0, vec![1, 2, 3, 4]),
        )
        .unwrap();
        let set = c.collect().unwrap();
        assert_eq!(set.len(), 1000);
        let fixed = set.count(Label::Fixed) as f64;
        assert!((fixed - 500.0).abs() < 3.0 * (250.0f64).sqrt(), "{fixed}");
        assert!(set.traces.iter().all(|t| t.samples.len() == c.n_samples()));
    }

    #[test]
    fn unmasked_fixed_traces_identical_without_noise() {
        let m = toy();
        let c = Campaign::new(
            Some(&m),
            config(Variant::Unmasked, 64, 0.0, vec![1, 2, 3, 4]),
        )
        .unwrap();
        let set = c.collect().unwrap();
        let fixed: Vec<&Trace> = set
            .traces
            .iter()
            .filter(|t| t.label == Label::Fixed)
            .collect();
        assert!(fixed.len() > 2);
        assert!(fixed.iter().all(|t| t.samples == fixed[0].samples));
    }

    #[test]
    fn masked_fixed_traces_vary_and_campaign_is_deterministic() {
        let m = BnnModel::random(&[3, 22, 2], 3, 8, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let variant = Variant::Masked {
            topology: AdderTopology::Ksa,
            schedule: ScheduleConfig::default(),
        };
        let cfg = config(variant, 40, 0.0, vec![1, 2, 3]);
        let c = Campaign::new(Some(&m), cfg.clone()).unwrap();
        let a = c.collect().unwrap();
        let b = Campaign::new(Some(&m), cfg).unwrap().collect().unwrap();
        assert_eq!(a, b);
        let fixed: Vec<&Trace> = a
            .traces
            .iter()
            .filter(|t| t.label == Label::Fixed)
            .collect();
        assert!(fixed.len() >= 2);
        assert_ne!(fixed[0].samples, fixed[1].samples);
        assert!(a.traces.iter().all(|t| t.samples.len() == c.n_samples()));
    }

    #[test]
    fn batches_split_anywhere_agree() {
        let m = toy();
        let c = Campaign::new(
            Some(&m),
            config(Variant::Unmasked, 10, 1.0, vec![1, 2, 3, 4]),
        )
        .unwrap();
        let all = c.run_batch(0, 10).unwrap();
        let tail = c.run_batch(6, 4).unwrap();
        assert_eq!(&all[6..], &tail[..]);
    }

    #[test]
    fn bank_computes_and() {
        let bank = build_trichina_bank(4).unwrap();
        let mut sim =
            crate::netlist::SimState::new(&bank.netlist, crate::netlist::EvalMode::Functional);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = (0b1100u64, 0b1010u64);
        for _ in 0..=TRICHINA_LATENCY + 1 {
            let (ma, mb): (u64, u64) = (rng.random::<u64>() & 15, rng.random::<u64>() & 15);
            let r: Vec<bool> = (0..4).map(|_| rng.random()).collect();
            sim.step(
                &[("a0", ma), ("a1", ma ^ a), ("b0", mb), ("b1", mb ^ b)],
                &r,
            )
            .unwrap();
        }
        let v = sim.word(&bank.out.share0()) ^ sim.word(&bank.out.share1());
        assert_eq!(v, a & b);
    }

    #[test]
    fn bank_campaign_shape() {
        let cfg = config(Variant::TrichinaBank, 20, 0.5, vec![u32::MAX; 2 * BANK_OPS]);
        let c = Campaign::new(None, cfg).unwrap();
        let set = c.collect().unwrap();
        assert_eq!(set.n_samples, bank_cycles());
        assert!(set.traces.iter().all(|t| t.samples.len() == bank_cycles()));
        assert!(Campaign::new(None, config(Variant::TrichinaBank, 20, 0.5, vec![1])).is_err());
        assert!(Campaign::new(None, config(Variant::Unmasked, 20, 0.5, vec![])).is_err());
    }

    #[test]
    fn rejects_tiny_campaigns() {
        let m = toy();
        assert!(Campaign::new(
            Some(&m),
            config(Variant::Unmasked, 1, 1.0, vec![1, 2, 3, 4])
        )
        .is_err());
    }
}
