use super::BnnError;
use super::BnnModel;
use crate::adders::{
    build_masked_adder, build_unmasked_adder, ceil_log2, AdderSpec, AdderTopology,
};
use crate::masked_gates::{masked_mux_public, masked_mux_shared, masked_not, ShareBit, ShareWord};
use crate::netlist::{NetId, Netlist, NetlistBuilder, NetlistStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shuffle {
    Off,
    /// Random start index: each hidden layer's node order is rotated by a
    /// fresh PRNG-drawn offset.
    Rsi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleConfig {
    /// Interleave `regfile_depth` nodes so the adder takes a new operand
    /// pair every cycle.
    pub throughput_optimized: bool,
    pub shuffle: Shuffle,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            throughput_optimized: true,
            shuffle: Shuffle::Off,
        }
    }
}

/// Adder result latency plus the accumulator register.
pub fn regfile_depth(topology: AdderTopology, width: usize) -> usize {
    AdderSpec::new(width, topology).latency() + 1
}

/// One accumulate step: `node_pos` is the processing position within the
/// layer, which equals the node index unless the layer is shuffled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Issue {
    pub layer: usize,
    pub pos: usize,
    pub input: usize,
    pub first: bool,
}

/// Controller actions for one clock cycle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CycleCmd {
    pub issue: Option<Issue>,
    /// Issue `max - out[k]`.
    pub compare: Option<usize>,
    /// Output register routed to the operand and candidate multiplexers, and
    /// its index to the index multiplexer.
    pub osel: Option<usize>,
    /// Pixel presented to the pixel register (used the next cycle).
    pub pixel: Option<usize>,
    /// Read the activation of (layer, position) after this cycle.
    pub capture: Option<(usize, usize)>,
    pub write_out: Option<usize>,
    pub max_load: bool,
    /// Conditional swap of max and index with candidate `k`.
    pub update: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub cmds: Vec<CycleCmd>,
    /// First and one-past-last cycle of every layer.
    pub layer_spans: Vec<(usize, usize)>,
    /// Cycle after which the index register holds the result.
    pub final_cycle: usize,
}

impl Schedule {
    pub fn build(
        layer_sizes: &[usize],
        latency: usize,
        config: &ScheduleConfig,
    ) -> Result<Self, BnnError> {
        let depth = latency + 1;
        let n_layers = layer_sizes.len() - 1;
        let mut cmds: Vec<CycleCmd> = Vec::new();
        let at = |cmds: &mut Vec<CycleCmd>, t: usize| -> usize {
            if cmds.len() <= t {
                cmds.resize(t + 1, CycleCmd::default());
            }
            t
        };
        let issue = |cmds: &mut Vec<CycleCmd>, t: usize, is: Issue| {
            let t = at(cmds, t);
            cmds[t].issue = Some(is);
            if is.layer == 0 {
                cmds[t - 1].pixel = Some(is.input);
            }
        };
        let mut spans = Vec::new();
        let mut t = 1usize;
        for l in 0..n_layers {
            let (fan_in, nodes) = (layer_sizes[l], layer_sizes[l + 1]);
            let output = l + 1 == n_layers;
            let start = t;
            if !output && config.throughput_optimized {
                if nodes % depth != 0 {
                    return Err(BnnError::Divisibility {
                        layer: l + 1,
                        size: nodes,
                        depth,
                    });
                }
                for g in 0..nodes / depth {
                    let base = t + g * fan_in * depth;
                    for i in 0..fan_in {
                        for j in 0..depth {
                            let tt = base + i * depth + j;
                            let pos = g * depth + j;
                            issue(
                                &mut cmds,
                                tt,
                                Issue {
                                    layer: l,
                                    pos,
                                    input: i,
                                    first: i == 0,
                                },
                            );
                            if i + 1 == fan_in {
                                let c = at(&mut cmds, tt + latency);
                                cmds[c].capture = Some((l, pos));
                            }
                        }
                    }
                }
                t += nodes * fan_in + latency;
            } else {
                for j in 0..nodes {
                    let base = t + j * fan_in * depth;
                    for i in 0..fan_in {
                        issue(
                            &mut cmds,
                            base + i * depth,
                            Issue {
                                layer: l,
                                pos: j,
                                input: i,
                                first: i == 0,
                            },
                        );
                    }
                    let c = at(&mut cmds, base + (fan_in - 1) * depth + latency);
                    if output {
                        cmds[c].write_out = Some(j);
                    } else {
                        cmds[c].capture = Some((l, j));
                    }
                }
                t += nodes * fan_in * depth;
            }
            spans.push((start, t));
        }
        let n_out = layer_sizes[n_layers];
        let load = at(&mut cmds, t);
        cmds[load].max_load = true;
        let mut c = t + 1;
        let mut final_cycle = t + 1;
        for k in 1..n_out {
            at(&mut cmds, c + latency + 4);
            cmds[c].compare = Some(k);
            for cc in c..=c + latency + 4 {
                cmds[cc].osel = Some(k);
            }
            cmds[c + latency + 4].update = Some(k);
            final_cycle = c + latency + 5;
            c += latency + 5;
        }
        at(&mut cmds, final_cycle);
        Ok(Self {
            cmds,
            layer_spans: spans,
            final_cycle,
        })
    }

    pub fn cycles(&self) -> usize {
        self.cmds.len()
    }

    /// Cycle in which the product of `input` for processing position `pos`
    /// of `layer` enters the adder.
    pub fn issue_cycle(&self, layer: usize, pos: usize, input: usize) -> Option<usize> {
        self.cmds.iter().position(|c| {
            matches!(c.issue, Some(is) if is.layer == layer && is.pos == pos && is.input == input)
        })
    }
}

/// Nets the controller drives and observes.
#[derive(Clone, Debug)]
pub struct DatapathPorts {
    pub a_acc: NetId,
    pub a_bias: NetId,
    pub a_max: NetId,
    pub bias: ShareWord,
    pub weight: ShareBit,
    pub pix: Vec<NetId>,
    pub x: ShareBit,
    pub b_pix: NetId,
    pub b_xnor: NetId,
    pub b_out: NetId,
    pub osel: Vec<NetId>,
    pub sub: NetId,
    pub we: Vec<NetId>,
    pub max_load: NetId,
    pub upd: NetId,
    pub kidx: Vec<NetId>,
    pub act: ShareBit,
    pub acc: ShareWord,
    pub sum: ShareWord,
    pub max: ShareWord,
    pub idx: ShareWord,
    pub outs: Vec<ShareWord>,
}

/// The fully masked accelerator netlist plus its static schedule.
#[derive(Clone, Debug)]
pub struct MaskedDatapath {
    pub netlist: Netlist,
    pub ports: DatapathPorts,
    pub adder: AdderSpec,
    pub latency: usize,
    pub regfile_depth: usize,
    pub config: ScheduleConfig,
    pub schedule: Schedule,
    pub layer_sizes: Vec<usize>,
    pub width: usize,
    pub pixel_width: usize,
}

impl MaskedDatapath {
    pub fn stats(&self) -> NetlistStats {
        self.netlist.stats()
    }

    /// Fresh random bits consumed per clock cycle.
    pub fn random_bits_per_cycle(&self) -> usize {
        self.netlist.random_nets().len()
    }

    /// PRNG bits for one inference: pre-split model shares, start indices
    /// and per-cycle masks.
    pub fn random_bits_per_inference(&self) -> u64 {
        self.presplit_bits() as u64
            + self.start_index_bits() as u64
            + (self.random_bits_per_cycle() * self.schedule.cycles()) as u64
    }

    pub(crate) fn presplit_bits(&self) -> usize {
        let s = &self.layer_sizes;
        let weights: usize = (0..s.len() - 1).map(|l| s[l] * s[l + 1]).sum();
        let biases: usize = s[1..].iter().sum::<usize>() * self.width;
        weights + biases
    }

    pub(crate) fn start_index_bits(&self) -> usize {
        match self.config.shuffle {
            Shuffle::Off => 0,
            Shuffle::Rsi => 32 * (self.layer_sizes.len() - 2),
        }
    }

    pub fn hidden_layers(&self) -> usize {
        self.layer_sizes.len() - 2
    }
}

fn placeholder_word(b: &mut NetlistBuilder, width: usize) -> ShareWord {
    ShareWord::new(
        (0..width)
            .map(|_| ShareBit::new(b.reg_placeholder(false), b.reg_placeholder(false)))
            .collect(),
    )
}

fn connect_word(b: &mut NetlistBuilder, q: &ShareWord, d: &ShareWord) -> Result<(), BnnError> {
    for (qb, db) in q.bits.iter().zip(&d.bits) {
        b.connect_reg(qb.share0, db.share0)?;
        b.connect_reg(qb.share1, db.share1)?;
    }
    Ok(())
}

/// Builds the masked accelerator: public-select operand multiplexers into
/// one pipelined masked adder with subtract mode, the accumulator register
/// closing the ring, a public pixel register feeding the masked
/// multiplier, output registers, and the masked max/index registers.
pub fn build_masked_datapath(
    model: &BnnModel,
    topology: AdderTopology,
    config: &ScheduleConfig,
) -> Result<MaskedDatapath, BnnError> {
    model.validate()?;
    let w = model.width;
    let pw = model.pixel_width;
    let n_out = model.n_out();
    let iw = ceil_log2(n_out).max(1);
    let mut spec = AdderSpec::new(w, topology);
    let latency = spec.latency();
    let schedule = Schedule::build(&model.layer_sizes, latency, config)?;

    let mut b = NetlistBuilder::new();
    let a_acc = b.input_bit("a_acc")?;
    let a_bias = b.input_bit("a_bias")?;
    let a_max = b.input_bit("a_max")?;
    let bias = ShareWord::input(&mut b, "bias", w)?;
    let weight = ShareWord::input(&mut b, "w", 1)?.bits[0];
    let pix = b.input_port("pix", pw)?;
    let x = ShareWord::input(&mut b, "x", 1)?.bits[0];
    let b_pix = b.input_bit("b_pix")?;
    let b_xnor = b.input_bit("b_xnor")?;
    let b_out = b.input_bit("b_out")?;
    let osel = b.input_port("osel", n_out)?;
    let sub = b.input_bit("sub")?;
    let we = b.input_port("we", n_out)?;
    let max_load = b.input_bit("max_load")?;
    let upd = b.input_bit("upd")?;
    let kidx = b.input_port("kidx", iw)?;

    let zero = b.constant(false);
    let one = b.constant(true);

    // Public pixel path: d = pixel, e = -pixel.
    let pix_q: Vec<NetId> = pix.iter().map(|&p| b.reg(p)).collect();
    let mut d = pix_q.clone();
    d.resize(w, zero);
    let zeros = vec![zero; w];
    let neg_spec = AdderSpec {
        masked: false,
        sub_port: Some(one),
        ..AdderSpec::new(w, AdderTopology::Rca)
    };
    let e = build_unmasked_adder(&mut b, &neg_spec, &zeros, &d, zero)?.sum;
    let r_pix = b.random_word(w);
    let product = masked_mux_public(&mut b, &d, &e, weight, &r_pix)?;

    let acc = placeholder_word(&mut b, w);
    let max = placeholder_word(&mut b, w);
    let idx = placeholder_word(&mut b, iw);
    let outs: Vec<ShareWord> = (0..n_out).map(|_| placeholder_word(&mut b, w)).collect();

    let zero_word = ShareWord::constant(&mut b, 0, w);
    let op_a = max.mux_public(&mut b, a_max, &zero_word)?;
    let op_a = bias.mux_public(&mut b, a_bias, &op_a)?;
    let op_a = acc.mux_public(&mut b, a_acc, &op_a)?;

    let mut cand = zero_word.clone();
    for k in 0..n_out {
        cand = outs[k].mux_public(&mut b, osel[k], &cand)?;
    }
    let xw = b.xor(x.share0, weight.share0);
    let xnor = ShareBit::new(b.not(xw), b.xor(x.share1, weight.share1));
    let mut xnor_word = zero_word.clone();
    xnor_word.bits[1] = xnor;
    let op_b = cand.mux_public(&mut b, b_out, &zero_word)?;
    let op_b = xnor_word.mux_public(&mut b, b_xnor, &op_b)?;
    let op_b = product.mux_public(&mut b, b_pix, &op_b)?;

    spec.sub_port = Some(sub);
    let cin = ShareBit::constant(&mut b, false);
    let adder = build_masked_adder(&mut b, &spec, &op_a, &op_b, cin)?;
    let sum = adder.sum.clone();
    connect_word(&mut b, &acc, &sum)?;
    let msb = sum.bits[w - 1];
    let act = masked_not(&mut b, msb);

    for k in 0..n_out {
        let d = sum.mux_public(&mut b, we[k], &outs[k])?;
        connect_word(&mut b, &outs[k], &d)?;
    }

    let fresh = b.random_word(w);
    let new_max = masked_mux_shared(&mut b, msb, &cand, &max, &fresh)?;
    let kword = ShareWord::from_shares(&kidx, &vec![zero; iw]);
    let fresh = b.random_word(iw);
    let new_idx = masked_mux_shared(&mut b, msb, &kword, &idx, &fresh)?;
    let max_d = new_max.mux_public(&mut b, upd, &max)?;
    let max_d = outs[0].mux_public(&mut b, max_load, &max_d)?;
    connect_word(&mut b, &max, &max_d)?;
    let idx_zero = ShareWord::constant(&mut b, 0, iw);
    let idx_d = new_idx.mux_public(&mut b, upd, &idx)?;
    let idx_d = idx_zero.mux_public(&mut b, max_load, &idx_d)?;
    connect_word(&mut b, &idx, &idx_d)?;

    b.output("idx0", &idx.share0());
    b.output("idx1", &idx.share1());
    b.output("act0", &[act.share0]);
    b.output("act1", &[act.share1]);
    let netlist = b.finish()?;

    Ok(MaskedDatapath {
        netlist,
        ports: DatapathPorts {
            a_acc,
            a_bias,
            a_max,
            bias,
            weight,
            pix,
            x,
            b_pix,
            b_xnor,
            b_out,
            osel,
            sub,
            we,
            max_load,
            upd,
            kidx,
            act,
            acc,
            sum,
            max,
            idx,
            outs,
        },
        adder: spec,
        latency,
        regfile_depth: latency + 1,
        config: *config,
        schedule,
        layer_sizes: model.layer_sizes.clone(),
        width: w,
        pixel_width: pw,
    })
}

/// Stand-alone masked argmax over held node sums: one subtractor, masked
/// multiplexer and index multiplexer per comparison, chained. The index
/// shares are valid `latency` cycles after the sums are applied.
pub struct MaskedOutputLayer {
    pub index: ShareWord,
    pub latency: usize,
}

pub fn masked_output_layer(
    b: &mut NetlistBuilder,
    node_sums: &[ShareWord],
    topology: AdderTopology,
) -> Result<MaskedOutputLayer, BnnError> {
    let n = node_sums.len();
    if n == 0 {
        return Err(BnnError::Dimension("output layer needs a node".into()));
    }
    let w = node_sums[0].width();
    let iw = ceil_log2(n).max(1);
    let mut max = node_sums[0].clone();
    let mut idx = ShareWord::constant(b, 0, iw);
    let mut latency = 0;
    let one = b.constant(true);
    for (k, node) in node_sums.iter().enumerate().skip(1) {
        let spec = AdderSpec {
            sub_port: Some(one),
            ..AdderSpec::new(w, topology)
        };
        let cin = ShareBit::constant(b, false);
        let diff = build_masked_adder(b, &spec, &max, node, cin)?;
        let s = diff.sum.bits[w - 1];
        let node_d = node.delay(b, diff.latency);
        let max_d = max.delay(b, diff.latency);
        let idx_d = idx.delay(b, diff.latency);
        let fresh = b.random_word(w);
        max = masked_mux_shared(b, s, &node_d, &max_d, &fresh)?;
        let kword = ShareWord::constant(b, k as u64, iw);
        let fresh = b.random_word(iw);
        idx = masked_mux_shared(b, s, &kword, &idx_d, &fresh)?;
        latency += diff.latency + crate::masked_gates::TRICHINA_LATENCY;
    }
    Ok(MaskedOutputLayer {
        index: idx,
        latency,
    })
}
