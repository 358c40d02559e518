use super::AnalysisError;
use crate::leakage::{Trace, TraceSet};
use rayon::prelude::*;
use std::ops::Range;

/// Largest supported weight-hypothesis exponent.
pub const MAX_ATTACK_WEIGHTS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct AttackReport {
    /// Per hypothesis: the largest Pearson correlation over the target
    /// cycles. Hypothesis bit `i` is weight `i` (1 means +1).
    pub scores: Vec<f64>,
    /// Hypotheses by descending score, ties broken by hypothesis index.
    pub ranking: Vec<u32>,
    /// 1-based rank of the true hypothesis when known.
    pub ground_truth_rank: Option<usize>,
    pub n_traces: u64,
}

impl AttackReport {
    pub fn rank_of(&self, h: u32) -> usize {
        self.ranking.iter().position(|&x| x == h).unwrap() + 1
    }
}

/// Hamming-distance prediction for the accumulator transition that absorbs
/// input `k - 1`: `HD(S_{k-2}, S_{k-1})` where `S_j` is the running sum of
/// `+-p_i` over inputs `0..=j` modulo `2^width` and `S_{-1} = 0`.
pub fn predicted_hd(hypothesis: u32, pixels: &[u32], k: usize, width: usize) -> u32 {
    let mask = (1u64 << width) - 1;
    let mut prev = 0u64;
    let mut acc = 0u64;
    for (i, &p) in pixels.iter().enumerate().take(k) {
        let p = p as u64;
        let term = if (hypothesis >> i) & 1 == 1 {
            p
        } else {
            p.wrapping_neg()
        };
        prev = acc;
        acc = acc.wrapping_add(term) & mask;
    }
    (prev ^ acc).count_ones()
}

/// Incremental correlation power analysis over all `2^k` weight
/// hypotheses, with per-hypothesis running sums for every target cycle.
#[derive(Clone, Debug)]
pub struct DpaAccumulator {
    k: usize,
    width: usize,
    cycles: Range<usize>,
    n: u64,
    sx: Vec<f64>,
    sxx: Vec<f64>,
    /// Per hypothesis.
    sy: Vec<f64>,
    syy: Vec<f64>,
    /// Hypothesis-major: `[h * cycles + c]`.
    sxy: Vec<f64>,
}

impl DpaAccumulator {
    pub fn new(k: usize, width: usize, cycles: Range<usize>) -> Result<Self, AnalysisError> {
        if k == 0 || k > MAX_ATTACK_WEIGHTS {
            return Err(AnalysisError::Attack(format!(
                "k must be in 1..={MAX_ATTACK_WEIGHTS}, got {k}"
            )));
        }
        if cycles.is_empty() {
            return Err(AnalysisError::Attack("empty target cycle range".into()));
        }
        if !(2..=32).contains(&width) {
            return Err(AnalysisError::Attack(format!(
                "width {width} outside 2..=32"
            )));
        }
        let h = 1usize << k;
        let c = cycles.len();
        Ok(Self {
            k,
            width,
            cycles,
            n: 0,
            sx: vec![0.0; c],
            sxx: vec![0.0; c],
            sy: vec![0.0; h],
            syy: vec![0.0; h],
            sxy: vec![0.0; h * c],
        })
    }

    pub fn n_traces(&self) -> u64 {
        self.n
    }

    pub fn add(&mut self, pixels: &[u32], samples: &[f32]) -> Result<(), AnalysisError> {
        if pixels.len() < self.k {
            return Err(AnalysisError::Attack(format!(
                "trace has {} inputs, attack needs {}",
                pixels.len(),
                self.k
            )));
        }
        if samples.len() < self.cycles.end {
            return Err(AnalysisError::Attack(format!(
                "trace has {} samples, target range ends at {}",
                samples.len(),
                self.cycles.end
            )));
        }
        let x: Vec<f64> = samples[self.cycles.clone()]
            .iter()
            .map(|&v| v as f64)
            .collect();
        for (c, &v) in x.iter().enumerate() {
            self.sx[c] += v;
            self.sxx[c] += v * v;
        }
        let c = x.len();
        let (k, width) = (self.k, self.width);
        self.sy
            .par_iter_mut()
            .zip(self.syy.par_iter_mut())
            .zip(self.sxy.par_chunks_mut(c))
            .enumerate()
            .with_min_len(256)
            .for_each(|(h, ((sy, syy), sxy))| {
                let y = predicted_hd(h as u32, pixels, k, width) as f64;
                *sy += y;
                *syy += y * y;
                for (s, &v) in sxy.iter_mut().zip(&x) {
                    *s += y * v;
                }
            });
        self.n += 1;
        Ok(())
    }

    fn correlation(&self, h: usize, c: usize) -> f64 {
        let n = self.n as f64;
        let cov = n * self.sxy[h * self.cycles.len() + c] - self.sx[c] * self.sy[h];
        let vx = n * self.sxx[c] - self.sx[c] * self.sx[c];
        let vy = n * self.syy[h] - self.sy[h] * self.sy[h];
        if vx <= 0.0 || vy <= 0.0 {
            return 0.0;
        }
        cov / (vx * vy).sqrt()
    }

    pub fn report(&self, truth: Option<u32>) -> AttackReport {
        let c = self.cycles.len();
        let scores: Vec<f64> = (0..self.sy.len())
            .map(|h| {
                (0..c)
                    .map(|j| self.correlation(h, j))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let mut ranking: Vec<u32> = (0..scores.len() as u32).collect();
        ranking.sort_by(|&a, &b| {
            scores[b as usize]
                .partial_cmp(&scores[a as usize])
                .unwrap()
                .then(a.cmp(&b))
        });
        let ground_truth_rank = truth.map(|t| ranking.iter().position(|&h| h == t).unwrap() + 1);
        AttackReport {
            scores,
            ranking,
            ground_truth_rank,
            n_traces: self.n,
        }
    }
}

/// CPA on the first `k` weights of node 0 in the first layer, using each
/// trace's input pixels and the samples in `cycles`.
pub fn dpa_attack(
    set: &TraceSet,
    cycles: Range<usize>,
    k: usize,
    width: usize,
    truth: Option<u32>,
) -> Result<AttackReport, AnalysisError> {
    let mut acc = DpaAccumulator::new(k, width, cycles)?;
    for t in &set.traces {
        acc.add(&t.input, &t.samples)?;
    }
    if acc.n < 2 {
        return Err(AnalysisError::Attack("need at least 2 traces".into()));
    }
    Ok(acc.report(truth))
}

/// Smallest checkpoint from which the true hypothesis stays at rank 1
/// through the last trace, or `None` if it is not rank 1 at the end.
pub fn traces_to_rank1(
    traces: &[Trace],
    cycles: Range<usize>,
    k: usize,
    width: usize,
    truth: u32,
    step: usize,
) -> Result<Option<usize>, AnalysisError> {
    let mut acc = DpaAccumulator::new(k, width, cycles)?;
    let mut since = None;
    for (i, t) in traces.iter().enumerate() {
        acc.add(&t.input, &t.samples)?;
        let n = i + 1;
        if n % step.max(1) == 0 || n == traces.len() {
            if n >= 2 && acc.report(Some(truth)).ground_truth_rank == Some(1) {
                since.get_or_insert(n);
            } else {
                since = None;
            }
        }
    }
    Ok(since)
}
