//! Binarized network model, the unmasked baseline accelerator and the
//! masked datapath with its scheduler and inference engine.

mod datapath;
mod engine;
mod model;
mod unmasked;

pub use datapath::{
    build_masked_datapath, masked_output_layer, regfile_depth, CycleCmd, DatapathPorts, Issue,
    MaskedDatapath, MaskedOutputLayer, Schedule, ScheduleConfig, Shuffle,
};
pub use engine::{
    reduce_start, run_masked_batch, run_masked_inference, BatchLeakage, BatchOutput, LaneJob,
    PrngConfig,
};
pub use model::{to_signed, BnnModel};
pub use unmasked::{infer_unmasked, unmasked_accumulate_cycle};

use crate::netlist::{CycleReport, NetlistError};
use crate::prng::PrngError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BnnError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("layer {layer} has {size} nodes, not a multiple of the register file depth {depth}")]
    Divisibility {
        layer: usize,
        size: usize,
        depth: usize,
    },
    #[error("start index {start} out of range for {n} nodes")]
    StartOutOfRange { start: usize, n: usize },
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Prng(#[from] PrngError),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InferenceResult {
    pub class_index: usize,
    /// Boolean shares of the class index (masked datapath only).
    pub class_index_shares: Option<(u64, u64)>,
    pub cycle_count: usize,
    pub cycle_reports: Vec<CycleReport>,
    /// Recombined activations of every hidden layer, by node index.
    pub activations: Vec<Vec<bool>>,
    /// Output-layer sums as raw `width`-bit words.
    pub output_sums: Vec<u64>,
}

/// Processing order `[start, start+1, ..., n-1, 0, ..., start-1]`.
pub fn rsi_shuffle_order(n: usize, start: usize) -> Result<Vec<usize>, BnnError> {
    if start >= n {
        return Err(BnnError::StartOutOfRange { start, n });
    }
    Ok((0..n).map(|p| (start + p) % n).collect())
}

/// Layer sizes `[n_in, depth, depth, n_out]` sized for the given adder.
pub fn toy_layers(n_in: usize, n_out: usize, depth: usize) -> Vec<usize> {
    vec![n_in, depth, depth, n_out]
}

/// A random model with layers `[n_in, hidden, hidden, n_out]` drawn from
/// `seed`.
pub fn toy_model(
    seed: u64,
    n_in: usize,
    hidden: usize,
    n_out: usize,
    pixel_width: usize,
    width: usize,
) -> Result<BnnModel, BnnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BnnModel::random(
        &toy_layers(n_in, n_out, hidden),
        pixel_width,
        width,
        &mut rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adders::AdderTopology;
    use crate::netlist::EvalMode;

    /// Independent evaluator: plain signed arithmetic, wrapped to the word.
    fn reference(model: &BnnModel, image: &[u32]) -> (usize, Vec<Vec<bool>>) {
        let w = model.width;
        let wrap = |v: i64| to_signed(v as u64, w);
        let mut input: Vec<i64> = image.iter().map(|&p| p as i64).collect();
        let mut hidden = Vec::new();
        let mut sums = Vec::new();
        for l in 0..model.n_layers() {
            sums = (0..model.layer_sizes[l + 1])
                .map(|j| {
                    let dot: i64 = input
                        .iter()
                        .zip(&model.weights[l][j])
                        .map(|(&x, &wt)| if wt { x } else { -x })
                        .sum();
                    wrap(dot + model.biases[l][j])
                })
                .collect::<Vec<i64>>();
            let act: Vec<bool> = sums.iter().map(|&s| s >= 0).collect();
            input = act.iter().map(|&a| if a { 1 } else { -1 }).collect();
            hidden.push(act);
        }
        hidden.pop();
        let mut best = 0;
        for k in 1..sums.len() {
            if wrap(sums[best] - sums[k]) < 0 {
                best = k;
            }
        }
        (best, hidden)
    }

    fn toy_model(layers: &[usize], seed: u64) -> BnnModel {
        BnnModel::random(layers, 4, 8, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn text_roundtrip_and_errors() {
        let m = toy_model(&[5, 3, 2], 1);
        let text = m.to_text();
        assert_eq!(BnnModel::parse(&text).unwrap(), m);
        let bad = text.replacen("bnn v1", "bnn v2", 1);
        assert!(matches!(
            BnnModel::parse(&bad),
            Err(BnnError::Parse { line: 1, .. })
        ));
        let bad = text.replacen("width: 8", "width: x", 1);
        assert!(matches!(
            BnnModel::parse(&bad),
            Err(BnnError::Parse { line: 4, .. })
        ));
        let mut lines: Vec<&str> = text.lines().collect();
        lines[6] = "10a01";
        assert!(matches!(
            BnnModel::parse(&lines.join("\n")),
            Err(BnnError::Parse { line: 7, .. })
        ));
    }

    #[test]
    fn unmasked_examples() {
        let m = BnnModel::new(
            vec![3, 2, 2],
            vec![vec![vec![true; 3]; 2], vec![vec![true; 2]; 2]],
            vec![vec![0, 0], vec![0, 0]],
            4,
            8,
        )
        .unwrap();
        let r = infer_unmasked(&m, &[0, 0, 0]).unwrap();
        assert_eq!(r.activations, vec![vec![true, true]]);

        let m = BnnModel::new(
            vec![1, 1, 1],
            vec![vec![vec![false]], vec![vec![true]]],
            vec![vec![2], vec![0]],
            4,
            8,
        )
        .unwrap();
        let r = infer_unmasked(&m, &[5]).unwrap();
        assert_eq!(r.activations, vec![vec![false]]);
        assert!(infer_unmasked(&m, &[5, 1]).is_err());
        assert!(infer_unmasked(&m, &[16]).is_err());
    }

    #[test]
    fn unmasked_matches_reference() {
        let m = toy_model(&[4, 6, 3], 7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let img = m.random_image(&mut rng);
            let r = infer_unmasked(&m, &img).unwrap();
            let (class, hidden) = reference(&m, &img);
            assert_eq!(r.class_index, class);
            assert_eq!(r.activations, hidden);
            assert_eq!(r.cycle_count, r.cycle_reports.len());
        }
    }

    #[test]
    fn unmasked_accumulator_hd() {
        // Weights all +1: the accumulator runs through the prefix sums.
        let m = BnnModel::new(vec![4, 1], vec![vec![vec![true; 4]]], vec![vec![0]], 4, 8).unwrap();
        let r = infer_unmasked(&m, &[3, 5, 6, 1]).unwrap();
        let pix_hd = [2u32, 2, 2, 3];
        let prefix = [0u64, 3, 8, 14, 15];
        for k in 0..4 {
            let acc_hd = (prefix[k] ^ prefix[k + 1]).count_ones();
            assert_eq!(
                r.cycle_reports[unmasked_accumulate_cycle(k)].reg_hd,
                acc_hd + pix_hd[k]
            );
        }
    }

    #[test]
    fn rsi_orders() {
        assert_eq!(rsi_shuffle_order(4, 0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(rsi_shuffle_order(4, 2).unwrap(), vec![2, 3, 0, 1]);
        assert_eq!(
            rsi_shuffle_order(4, 4),
            Err(BnnError::StartOutOfRange { start: 4, n: 4 })
        );
        for a in 0..5 {
            for b in 0..5 {
                let ra = rsi_shuffle_order(5, a).unwrap();
                let rb = rsi_shuffle_order(5, b).unwrap();
                let composed: Vec<usize> = rb.iter().map(|&p| ra[p]).collect();
                assert_eq!(composed, rsi_shuffle_order(5, (a + b) % 5).unwrap());
            }
        }
    }

    #[test]
    fn schedule_cycle_laws() {
        let lat = 9;
        let d = lat + 1;
        let on = ScheduleConfig::default();
        let s = Schedule::build(&[5, 2 * d, d, 3], lat, &on).unwrap();
        assert_eq!(s.layer_spans[0].1 - s.layer_spans[0].0, 5 * 2 * d + lat);
        assert_eq!(s.layer_spans[1].1 - s.layer_spans[1].0, 2 * d * d + lat);
        // steady state: an issue every cycle inside each optimized layer
        for l in 0..2 {
            let (a, b) = s.layer_spans[l];
            assert!(s.cmds[a..b - lat].iter().all(|c| c.issue.is_some()));
        }
        let off = ScheduleConfig {
            throughput_optimized: false,
            ..on
        };
        let s = Schedule::build(&[5, 2 * d, d, 3], lat, &off).unwrap();
        assert_eq!(s.layer_spans[0].1 - s.layer_spans[0].0, 5 * 2 * d * d);
        assert_eq!(
            Schedule::build(&[5, d + 1, 3], lat, &on),
            Err(BnnError::Divisibility {
                layer: 1,
                size: d + 1,
                depth: d
            })
        );
        assert!(Schedule::build(&[5, d + 1, 3], lat, &off).is_ok());
    }

    #[test]
    fn masked_matches_unmasked_small() {
        let d = regfile_depth(AdderTopology::Ksa, 8);
        let m = toy_model(&[3, d, 2], 3);
        for (shuffle, optimized) in [
            (Shuffle::Off, true),
            (Shuffle::Rsi, true),
            (Shuffle::Off, false),
        ] {
            let cfg = ScheduleConfig {
                throughput_optimized: optimized,
                shuffle,
            };
            let dp = build_masked_datapath(&m, AdderTopology::Ksa, &cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let images: Vec<Vec<u32>> = (0..40).map(|_| m.random_image(&mut rng)).collect();
            let jobs: Vec<LaneJob> = images
                .iter()
                .enumerate()
                .map(|(i, img)| LaneJob {
                    image: img,
                    trace_index: i as u64,
                })
                .collect();
            let prng = PrngConfig::trivium([1; 10], [2; 10]);
            let out =
                run_masked_batch::<u64>(&dp, &m, &jobs, &prng, EvalMode::Functional, 0, false)
                    .unwrap();
            for (img, r) in images.iter().zip(&out.results) {
                let u = infer_unmasked(&m, img).unwrap();
                assert_eq!(r.activations, u.activations);
                assert_eq!(r.output_sums, u.output_sums);
                assert_eq!(r.class_index, u.class_index);
            }
        }
    }

    #[test]
    fn masked_output_layer_examples() {
        use crate::masked_gates::ShareWord;
        use crate::netlist::{NetlistBuilder, SimState};
        let w = 8;
        let check = |sums: &[i64], topo: AdderTopology, seed: u64| -> usize {
            let mut b = NetlistBuilder::new();
            let words: Vec<ShareWord> = (0..sums.len())
                .map(|k| ShareWord::input(&mut b, &format!("n{k}_"), w).unwrap())
                .collect();
            let out = masked_output_layer(&mut b, &words, topo).unwrap();
            let nl = b.finish().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut inputs = vec![];
            let names: Vec<(String, String)> = (0..sums.len())
                .map(|k| (format!("n{k}_0"), format!("n{k}_1")))
                .collect();
            for (k, s) in sums.iter().enumerate() {
                let m: u64 = rand::Rng::random::<u64>(&mut rng) & 255;
                inputs.push((names[k].0.as_str(), m));
                inputs.push((names[k].1.as_str(), m ^ (*s as u64 & 255)));
            }
            let mut sim = SimState::new(&nl, EvalMode::Functional);
            let mut r = vec![false; nl.random_nets().len()];
            for _ in 0..=out.latency {
                r.iter_mut().for_each(|x| *x = rand::Rng::random(&mut rng));
                sim.step(&inputs, &r).unwrap();
            }
            (sim.word(&out.index.share0()) ^ sim.word(&out.index.share1())) as usize
        };
        assert_eq!(check(&[3, 7, 5, 1], AdderTopology::Ksa, 1), 1);
        assert_eq!(check(&[7, 7], AdderTopology::Rca, 2), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let sums: Vec<i64> = (0..4)
                .map(|_| rand::Rng::random_range(&mut rng, -60..60))
                .collect();
            let mut best = 0;
            for k in 1..4 {
                if sums[k] > sums[best] {
                    best = k;
                }
            }
            assert_eq!(check(&sums, AdderTopology::Ksa, seed), best, "{sums:?}");
        }
    }
}
