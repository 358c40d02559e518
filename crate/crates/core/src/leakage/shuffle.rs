use super::{derived_rng, noise_seed, synthesize, Domain, Label, LeakModel, LeakageError, Trace};
use crate::bnn::{reduce_start, rsi_shuffle_order};
use crate::prng::{iv_for_trace, Iv, Key, TriviumState};
use rand::Rng;
use rayon::prelude::*;

/// A single layer of `n_nodes` unmasked accumulators processed one node
/// after another in RSI order. Node `j` sums `k` pixels
/// `input[j*k .. (j+1)*k]` with its own `k` binary weights, so a
/// distinguisher aimed at node 0 only sees it in the first slot with
/// probability `1 / n_nodes`.
#[derive(Clone, Debug)]
pub struct ShuffleToy {
    pub n_nodes: usize,
    pub k: usize,
    pub width: usize,
    pub pixel_width: usize,
    /// Weight bits of every node, bit `i` for input `i` (1 means +1).
    pub weights: Vec<u32>,
    pub leak: LeakModel,
    pub key: Key,
    pub base_iv: Iv,
}

impl ShuffleToy {
    pub fn new(
        n_nodes: usize,
        k: usize,
        weights: Vec<u32>,
        leak: LeakModel,
        key: Key,
        base_iv: Iv,
    ) -> Result<Self, LeakageError> {
        if !n_nodes.is_power_of_two() || weights.len() != n_nodes || k == 0 || k > 20 {
            return Err(LeakageError::Campaign(format!(
                "shuffle toy needs a power-of-two node count with one weight word each and 1..=20 inputs, got {n_nodes} nodes, {} weights, k = {k}",
                weights.len()
            )));
        }
        leak.validate()?;
        Ok(Self {
            n_nodes,
            k,
            width: 20,
            pixel_width: 8,
            weights,
            leak,
            key,
            base_iv,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_nodes * self.k
    }

    /// RSI start index of trace `index`, drawn from its TRIVIUM stream.
    pub fn start(&self, index: u64) -> usize {
        let mut prng = TriviumState::new(&self.key, &iv_for_trace(&self.base_iv, index));
        let u = prng.next_u32().expect("fresh stream");
        reduce_start(u, self.n_nodes)
    }

    pub fn trace(&self, index: u64) -> Trace {
        let mut rng = derived_rng(&self.key, &self.base_iv, index, Domain::Stimulus);
        let input: Vec<u32> = (0..self.n_samples())
            .map(|_| rng.random_range(0..1u32 << self.pixel_width))
            .collect();
        let order = rsi_shuffle_order(self.n_nodes, self.start(index)).expect("start in range");
        let mask = (1u64 << self.width) - 1;
        let mut hd = Vec::with_capacity(self.n_samples());
        for &node in &order {
            let mut acc = 0u64;
            for i in 0..self.k {
                let p = input[node * self.k + i] as u64;
                let term = if (self.weights[node] >> i) & 1 == 1 {
                    p
                } else {
                    p.wrapping_neg()
                };
                let next = acc.wrapping_add(term) & mask;
                hd.push((acc ^ next).count_ones());
                acc = next;
            }
        }
        let seed = noise_seed(&self.key, &self.base_iv, index);
        Trace {
            trace_index: index,
            label: Label::Random,
            samples: synthesize(hd.len(), |t| (hd[t], 0), &self.leak, seed),
            input,
        }
    }

    pub fn traces(&self, n: usize) -> Vec<Trace> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.trace(i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::predicted_hd;

    fn toy(n: usize) -> ShuffleToy {
        let w = (0..n as u32).map(|j| 0b1010 ^ j).collect();
        ShuffleToy::new(n, 4, w, LeakModel::with_sigma(0.0), [3; 10], [4; 10]).unwrap()
    }

    #[test]
    fn first_slot_matches_prediction_when_node0_leads() {
        let t = toy(4);
        let mut seen = 0;
        for i in 0..64 {
            let tr = t.trace(i);
            if t.start(i) == 0 {
                seen += 1;
                let want = predicted_hd(t.weights[0], &tr.input, 4, 20) as f32;
                assert_eq!(tr.samples[3], want);
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn starts_cover_all_nodes() {
        let t = toy(4);
        let mut hist = [0usize; 4];
        for i in 0..400 {
            hist[t.start(i)] += 1;
        }
        assert!(hist.iter().all(|&h| h > 50), "{hist:?}");
    }

    #[test]
    fn rejects_bad_shapes() {
        let m = LeakModel::default();
        assert!(ShuffleToy::new(3, 4, vec![0; 3], m, [0; 10], [0; 10]).is_err());
        assert!(ShuffleToy::new(2, 4, vec![0; 3], m, [0; 10], [0; 10]).is_err());
        assert!(ShuffleToy::new(2, 0, vec![0; 2], m, [0; 10], [0; 10]).is_err());
    }
}
