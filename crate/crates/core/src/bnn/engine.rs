use super::datapath::{MaskedDatapath, Shuffle};
use super::{BnnError, BnnModel, InferenceResult};
use crate::netlist::{CycleReport, EvalMode, LaneCounter, Lanes, NetId, Simulator};
use crate::prng::{iv_for_trace, Iv, Key, LaneTrivium, PrngMode};

/// Seeding of every PRNG draw made during an inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrngConfig {
    pub mode: PrngMode,
    pub key: Key,
    pub base_iv: Iv,
}

impl PrngConfig {
    pub fn trivium(key: Key, base_iv: Iv) -> Self {
        Self {
            mode: PrngMode::Trivium,
            key,
            base_iv,
        }
    }

    pub fn zero() -> Self {
        Self {
            mode: PrngMode::Zero,
            key: [0; 10],
            base_iv: [0; 10],
        }
    }
}

/// One trace of a batch.
#[derive(Clone, Copy, Debug)]
pub struct LaneJob<'a> {
    pub image: &'a [u32],
    pub trace_index: u64,
}

/// Per-lane leakage events, cycle-major: entry `t * lanes + lane`.
#[derive(Clone, Debug, Default)]
pub struct BatchLeakage {
    pub lanes: usize,
    pub cycles: usize,
    pub reg_hd: Vec<u32>,
    pub toggles: Vec<u32>,
}

impl BatchLeakage {
    pub fn reg_hd(&self, lane: usize, cycle: usize) -> u32 {
        self.reg_hd[cycle * self.lanes + lane]
    }

    pub fn toggles(&self, lane: usize, cycle: usize) -> u32 {
        self.toggles[cycle * self.lanes + lane]
    }
}

#[derive(Clone, Debug)]
pub struct BatchOutput {
    pub results: Vec<InferenceResult>,
    /// RSI start index of every hidden layer, per lane.
    pub starts: Vec<Vec<usize>>,
    pub leakage: Option<BatchLeakage>,
}

/// `(u32 * n) >> 32`, exact for power-of-two `n`.
pub fn reduce_start(u: u32, n: usize) -> usize {
    ((u as u64 * n as u64) >> 32) as usize
}

struct Shares<L> {
    s0: L,
    s1: L,
}

fn split<L: Lanes>(secret: bool, mask: L) -> Shares<L> {
    Shares {
        s0: mask,
        s1: mask ^ L::splat(secret),
    }
}

/// Lanes grouped by the start index they drew.
struct StartGroups<L> {
    n: usize,
    groups: Vec<(usize, L)>,
}

impl<L: Lanes> StartGroups<L> {
    fn node(&self, start: usize, pos: usize) -> usize {
        (start + pos) % self.n
    }

    fn gather(&self, pos: usize, mut f: impl FnMut(usize) -> L) -> L {
        if let [(s, _)] = self.groups[..] {
            return f(self.node(s, pos));
        }
        let mut out = L::default();
        for &(s, m) in &self.groups {
            out |= m & f(self.node(s, pos));
        }
        out
    }

    fn scatter(&self, pos: usize, value: L, store: &mut [L]) {
        for &(s, m) in &self.groups {
            store[self.node(s, pos)] |= m & value;
        }
    }
}

/// Runs up to `L::LANES` masked inferences in lock step. Each lane's PRNG is
/// keyed with `prng.key` and IV `base_iv + trace_index`. With `record`,
/// per-lane register Hamming distances and combinational toggles are
/// returned for every cycle (the mode decides how toggles are counted).
pub fn run_masked_batch<L: Lanes>(
    dp: &MaskedDatapath,
    model: &BnnModel,
    jobs: &[LaneJob<'_>],
    prng: &PrngConfig,
    mode: EvalMode,
    arrival_seed: u64,
    record: bool,
) -> Result<BatchOutput, BnnError> {
    assert!(!jobs.is_empty() && jobs.len() <= L::LANES);
    if model.layer_sizes != dp.layer_sizes
        || model.width != dp.width
        || model.pixel_width != dp.pixel_width
    {
        return Err(BnnError::Dimension(
            "datapath was built for another model shape".into(),
        ));
    }
    for j in jobs {
        model.check_image(j.image)?;
    }
    let lanes = jobs.len();
    let w = model.width;
    let n_layers = model.n_layers();
    let active = L::first_lanes(lanes);

    let mut prng_lanes = match prng.mode {
        PrngMode::Trivium => {
            let seeds: Vec<(Key, Iv)> = jobs
                .iter()
                .map(|j| (prng.key, iv_for_trace(&prng.base_iv, j.trace_index)))
                .collect();
            Some(LaneTrivium::<L>::new(&seeds))
        }
        PrngMode::Zero => None,
    };
    let mut draw = || prng_lanes.as_mut().map_or(L::default(), |t| t.next());

    // Pre-split model secrets.
    let weights: Vec<Vec<Vec<Shares<L>>>> = model
        .weights
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|row| row.iter().map(|&wt| split(wt, draw())).collect())
                .collect()
        })
        .collect();
    let biases: Vec<Vec<Vec<Shares<L>>>> = (0..n_layers)
        .map(|l| {
            let fan_in = model.layer_sizes[l] as i64;
            model.biases[l]
                .iter()
                .map(|&bias| {
                    let folded = if l == 0 { bias } else { bias - fan_in };
                    let v = folded as u64 & model.mask();
                    (0..w)
                        .map(|bit| split((v >> bit) & 1 == 1, draw()))
                        .collect()
                })
                .collect()
        })
        .collect();

    // Start indices.
    let hidden = n_layers - 1;
    let mut starts = vec![vec![0usize; hidden]; lanes];
    let mut groups: Vec<StartGroups<L>> = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let n = model.layer_sizes[l + 1];
        if l < hidden && dp.config.shuffle == Shuffle::Rsi {
            let words: Vec<L> = (0..32).map(|_| draw()).collect();
            let mut by_start: Vec<L> = vec![L::default(); n];
            for (lane, st) in starts.iter_mut().enumerate() {
                let u = (0..32).fold(0u32, |u, b| u | (words[b].lane(lane) as u32) << b);
                let s = reduce_start(u, n);
                st[l] = s;
                by_start[s].set_lane(lane, true);
            }
            groups.push(StartGroups {
                n,
                groups: by_start
                    .into_iter()
                    .enumerate()
                    .filter(|(_, m)| m.any())
                    .collect(),
            });
        } else {
            groups.push(StartGroups {
                n,
                groups: vec![(0, active)],
            });
        }
    }

    // Bit-sliced pixels.
    let pw = model.pixel_width;
    let pixels: Vec<Vec<L>> = (0..model.n_in())
        .map(|i| {
            (0..pw)
                .map(|bit| {
                    let mut v = L::default();
                    for (lane, j) in jobs.iter().enumerate() {
                        v.set_lane(lane, (j.image[i] >> bit) & 1 == 1);
                    }
                    v
                })
                .collect()
        })
        .collect();

    let p = &dp.ports;
    let nl = &dp.netlist;
    let mut sim = Simulator::<L>::new(nl, mode);
    sim.set_arrival_seed(arrival_seed);
    let randoms: Vec<NetId> = nl.random_nets().to_vec();
    let mut rand_buf = vec![L::default(); randoms.len()];
    let mut acts: Vec<Vec<(L, L)>> = Vec::with_capacity(hidden);
    let mut store0 = vec![L::default(); model.layer_sizes[1]];
    let mut store1 = store0.clone();
    let cycles = dp.schedule.cycles();
    let mut leakage = record.then(|| BatchLeakage {
        lanes,
        cycles,
        reg_hd: vec![0; cycles * lanes],
        toggles: vec![0; cycles * lanes],
    });
    let zero = L::default();
    let one = L::splat(true);
    let bit = |b: bool| if b { one } else { zero };
    let mut cur_layer = 0usize;

    for (t, cmd) in dp.schedule.cmds.iter().enumerate() {
        let is = cmd.issue;
        let first = is.is_some_and(|i| i.first);
        sim.assign(p.a_acc, bit(is.is_some() && !first));
        sim.assign(p.a_bias, bit(first));
        sim.assign(p.a_max, bit(cmd.compare.is_some()));
        sim.assign(p.b_pix, bit(is.is_some_and(|i| i.layer == 0)));
        sim.assign(p.b_xnor, bit(is.is_some_and(|i| i.layer > 0)));
        sim.assign(p.b_out, bit(cmd.compare.is_some()));
        sim.assign(p.sub, bit(cmd.compare.is_some()));
        for (k, &n) in p.osel.iter().enumerate() {
            sim.assign(n, bit(cmd.osel == Some(k)));
        }
        for (k, &n) in p.we.iter().enumerate() {
            sim.assign(n, bit(cmd.write_out == Some(k)));
        }
        sim.assign(p.max_load, bit(cmd.max_load));
        sim.assign(p.upd, bit(cmd.update.is_some()));
        let kv = cmd.osel.unwrap_or(0);
        for (i, &n) in p.kidx.iter().enumerate() {
            sim.assign(n, bit((kv >> i) & 1 == 1));
        }
        for (i, &n) in p.pix.iter().enumerate() {
            sim.assign(n, cmd.pixel.map_or(zero, |px| pixels[px][i]));
        }
        match is {
            Some(op) => {
                if op.layer != cur_layer {
                    // Activations of the previous layer are complete.
                    acts.push(store0.iter().zip(&store1).map(|(&a, &b)| (a, b)).collect());
                    let n = model.layer_sizes[op.layer + 1];
                    store0 = vec![zero; n];
                    store1 = vec![zero; n];
                    cur_layer = op.layer;
                }
                let g = &groups[op.layer];
                let wl = &weights[op.layer];
                sim.assign(p.weight.share0, g.gather(op.pos, |j| wl[j][op.input].s0));
                sim.assign(p.weight.share1, g.gather(op.pos, |j| wl[j][op.input].s1));
                let (x0, x1) = if op.layer > 0 {
                    acts[op.layer - 1][op.input]
                } else {
                    (zero, zero)
                };
                sim.assign(p.x.share0, x0);
                sim.assign(p.x.share1, x1);
                let bl = &biases[op.layer];
                for (bitn, sb) in p.bias.bits.iter().enumerate() {
                    if first {
                        sim.assign(sb.share0, g.gather(op.pos, |j| bl[j][bitn].s0));
                        sim.assign(sb.share1, g.gather(op.pos, |j| bl[j][bitn].s1));
                    } else {
                        sim.assign(sb.share0, zero);
                        sim.assign(sb.share1, zero);
                    }
                }
            }
            None => {
                sim.assign(p.weight.share0, zero);
                sim.assign(p.weight.share1, zero);
                sim.assign(p.x.share0, zero);
                sim.assign(p.x.share1, zero);
                for sb in &p.bias.bits {
                    sim.assign(sb.share0, zero);
                    sim.assign(sb.share1, zero);
                }
            }
        }
        if let Some(t) = prng_lanes.as_mut() {
            t.fill(&mut rand_buf);
        }
        for (&n, &v) in randoms.iter().zip(&rand_buf) {
            sim.assign(n, v);
        }
        sim.step()?;
        if let Some(lk) = leakage.as_mut() {
            let row = t * lanes..(t + 1) * lanes;
            accumulate(sim.reg_hd(), &mut lk.reg_hd[row.clone()]);
            accumulate(sim.toggles(), &mut lk.toggles[row]);
        }
        if let Some((layer, pos)) = cmd.capture {
            debug_assert_eq!(layer, cur_layer);
            let g = &groups[layer];
            g.scatter(pos, sim.value(p.act.share0), &mut store0);
            g.scatter(pos, sim.value(p.act.share1), &mut store1);
        }
    }
    if acts.len() < hidden {
        acts.push(store0.iter().zip(&store1).map(|(&a, &b)| (a, b)).collect());
    }

    let word = |nets: &[NetId], lane: usize| -> u64 {
        nets.iter()
            .enumerate()
            .map(|(i, &n)| (sim.value(n).lane(lane) as u64) << i)
            .sum()
    };
    let results = (0..lanes)
        .map(|lane| {
            let i0 = word(&p.idx.share0(), lane);
            let i1 = word(&p.idx.share1(), lane);
            InferenceResult {
                class_index: (i0 ^ i1) as usize,
                class_index_shares: Some((i0, i1)),
                cycle_count: cycles,
                cycle_reports: Vec::new(),
                activations: acts
                    .iter()
                    .map(|layer| {
                        layer
                            .iter()
                            .map(|(a, b)| a.lane(lane) ^ b.lane(lane))
                            .collect()
                    })
                    .collect(),
                output_sums: p
                    .outs
                    .iter()
                    .map(|o| word(&o.share0(), lane) ^ word(&o.share1(), lane))
                    .collect(),
            }
        })
        .collect();
    Ok(BatchOutput {
        results,
        starts,
        leakage,
    })
}

fn accumulate<L: Lanes>(c: &LaneCounter<L>, out: &mut [u32]) {
    c.accumulate_into(out);
}

/// Single masked inference with per-cycle reports.
pub fn run_masked_inference(
    dp: &MaskedDatapath,
    model: &BnnModel,
    image: &[u32],
    prng: &PrngConfig,
    trace_index: u64,
    mode: EvalMode,
) -> Result<InferenceResult, BnnError> {
    let job = [LaneJob { image, trace_index }];
    let out = run_masked_batch::<bool>(dp, model, &job, prng, mode, trace_index, true)?;
    let lk = out.leakage.unwrap();
    let mut r = out.results.into_iter().next().unwrap();
    r.cycle_reports = (0..lk.cycles)
        .map(|t| CycleReport {
            reg_hd: lk.reg_hd(0, t),
            transient_toggles: lk.toggles(0, t),
            tagged_probes: Default::default(),
        })
        .collect();
    Ok(r)
}
