use super::AnalysisError;
use crate::adders::{adder_fragment, build_masked_full_adder, AdderSpec, AdderTopology};
use crate::masked_gates::{
    trichina_glitchy, trichina_lut, trichina_sync, ShareBit, ShareWord, TRICHINA_LATENCY,
};
use crate::netlist::{GateKind, NetId, Netlist, NetlistBuilder, NetlistError};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

/// Largest number of enumerated variables (secret bits plus mask bits).
pub const MAX_PROBE_VARS: usize = 24;
/// Largest number of simultaneously switching sources in one fan-in cone.
pub const MAX_CONE_SOURCES: usize = 16;
const MAX_WITNESSES_PER_NET: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeMode {
    /// Probe the settled value of every visible net in every cycle.
    Settled,
    /// Additionally probe every intermediate value reachable by a
    /// one-at-a-time arrival order of the switching sources.
    Transient,
}

impl FromStr for ProbeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "settled" => Ok(ProbeMode::Settled),
            "transient" => Ok(ProbeMode::Transient),
            _ => Err(format!(
                "unknown probe mode {s:?} (expected settled or transient)"
            )),
        }
    }
}

/// A probed value whose distribution depends on the secret.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbeWitness {
    pub net: NetId,
    pub cycle: usize,
    /// Sources already switched to their new value; empty for a settled
    /// value.
    pub arrived: Vec<NetId>,
    /// The probed bit for every assignment `i` of the enumerated variables,
    /// stored as bit `i % 64` of word `i / 64`.
    pub values: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct ProbeReport {
    pub mode: ProbeMode,
    pub n_vars: usize,
    pub secret_bits: usize,
    pub cycles: usize,
    /// Nets with at least one secret-dependent probe, sorted.
    pub violating: Vec<NetId>,
    pub witnesses: Vec<ProbeWitness>,
    port_bits: BTreeMap<(String, usize), Vec<u64>>,
}

impl ProbeReport {
    pub fn is_secure(&self) -> bool {
        self.violating.is_empty()
    }

    /// Value of an input port bit over the enumeration, in the layout of
    /// [`ProbeWitness::values`].
    pub fn port_bit(&self, port: &str, bit: usize) -> Option<&[u64]> {
        self.port_bits
            .get(&(port.to_string(), bit))
            .map(|v| v.as_slice())
    }
}

/// Bitvectors over all `2^n_vars` assignments. Mask variables take the low
/// index bits; secret variables the high ones.
struct Space {
    words: usize,
    tail: u64,
    mask_bits: usize,
    secret_bits: usize,
}

impl Space {
    fn new(mask_bits: usize, secret_bits: usize) -> Self {
        let n = mask_bits + secret_bits;
        let bits = 1usize << n;
        Self {
            words: bits.div_ceil(64),
            tail: if bits >= 64 { !0 } else { (1u64 << bits) - 1 },
            mask_bits,
            secret_bits,
        }
    }

    fn zeros(&self) -> Vec<u64> {
        vec![0; self.words]
    }

    fn constant(&self, bit: bool) -> Vec<u64> {
        let mut v = vec![if bit { !0 } else { 0 }; self.words];
        *v.last_mut().unwrap() &= self.tail;
        v
    }

    fn var(&self, v: usize) -> Vec<u64> {
        const PAT: [u64; 6] = [
            0xAAAA_AAAA_AAAA_AAAA,
            0xCCCC_CCCC_CCCC_CCCC,
            0xF0F0_F0F0_F0F0_F0F0,
            0xFF00_FF00_FF00_FF00,
            0xFFFF_0000_FFFF_0000,
            0xFFFF_FFFF_0000_0000,
        ];
        let mut out: Vec<u64> = (0..self.words)
            .map(|w| {
                if v < 6 {
                    PAT[v]
                } else if (w >> (v - 6)) & 1 == 1 {
                    !0
                } else {
                    0
                }
            })
            .collect();
        *out.last_mut().unwrap() &= self.tail;
        out
    }

    fn block_count(&self, bv: &[u64], s: usize) -> u32 {
        let len = 1usize << self.mask_bits;
        let start = s * len;
        if len >= 64 {
            bv[start / 64..(start + len) / 64]
                .iter()
                .map(|w| w.count_ones())
                .sum()
        } else {
            let m = (1u64 << len) - 1;
            ((bv[start / 64] >> (start % 64)) & m).count_ones()
        }
    }

    /// Whether the number of assignments with value 1 differs between
    /// secret values, i.e. the probe's distribution over uniform masks
    /// depends on the secret.
    fn secret_dependent(&self, bv: &[u64]) -> bool {
        let c0 = self.block_count(bv, 0);
        (1..1usize << self.secret_bits).any(|s| self.block_count(bv, s) != c0)
    }

    fn eval(&self, kind: &GateKind, ins: &[&[u64]], out: &mut [u64]) {
        match kind {
            GateKind::And2 => {
                for ((o, a), b) in out.iter_mut().zip(ins[0]).zip(ins[1]) {
                    *o = a & b;
                }
            }
            GateKind::Xor2 => {
                for ((o, a), b) in out.iter_mut().zip(ins[0]).zip(ins[1]) {
                    *o = a ^ b;
                }
            }
            GateKind::Not => {
                for (o, a) in out.iter_mut().zip(ins[0]) {
                    *o = !a;
                }
                *out.last_mut().unwrap() &= self.tail;
            }
            GateKind::Mux2 => {
                for (i, o) in out.iter_mut().enumerate() {
                    let s = ins[0][i];
                    *o = (s & ins[1][i]) | (!s & ins[2][i]);
                }
            }
            _ => unreachable!("not combinational"),
        }
    }
}

enum Ref {
    Local(usize),
    Source(usize),
    Fixed(NetId),
}

/// A fan-in cone compiled for repeated evaluation under mixed old/new
/// source values.
struct Cone {
    target: NetId,
    srcs: Vec<NetId>,
    gates: Vec<(NetId, Vec<Ref>)>,
}

impl Cone {
    fn new(nl: &Netlist, target: NetId) -> Self {
        let (srcs, comb) = nl.fanin_cone(target);
        let local: HashMap<NetId, usize> = comb.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let src_pos: HashMap<NetId, usize> =
            srcs.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let gates = comb
            .iter()
            .map(|&n| {
                let refs = nl
                    .gate(n)
                    .inputs
                    .iter()
                    .map(|x| match (local.get(x), src_pos.get(x)) {
                        (Some(&j), _) => Ref::Local(j),
                        (None, Some(&k)) => Ref::Source(k),
                        (None, None) => Ref::Fixed(*x),
                    })
                    .collect();
                (n, refs)
            })
            .collect();
        Self {
            target,
            srcs,
            gates,
        }
    }

    /// Secret-dependent intermediate values of the target in one cycle.
    fn transients(
        &self,
        nl: &Netlist,
        space: &Space,
        prev: &[Vec<u64>],
        cur: &[Vec<u64>],
        cycle: usize,
    ) -> Result<Vec<ProbeWitness>, AnalysisError> {
        let changed: Vec<usize> = (0..self.srcs.len())
            .filter(|&k| prev[self.srcs[k].index()] != cur[self.srcs[k].index()])
            .collect();
        if changed.len() < 2 {
            // With at most one switching source the only values are the
            // previous and current settled ones.
            return Ok(Vec::new());
        }
        if changed.len() > MAX_CONE_SOURCES {
            return Err(AnalysisError::Probe(format!(
                "{} has {} switching sources, limit is {MAX_CONE_SOURCES}",
                self.target,
                changed.len()
            )));
        }
        let mut scratch: Vec<Vec<u64>> = vec![space.zeros(); self.gates.len()];
        let mut use_cur = vec![false; self.srcs.len()];
        let mut found: Vec<ProbeWitness> = Vec::new();
        for subset in 1..(1usize << changed.len()) - 1 {
            for (j, &k) in changed.iter().enumerate() {
                use_cur[k] = (subset >> j) & 1 == 1;
            }
            for (i, (net, refs)) in self.gates.iter().enumerate() {
                let (done, rest) = scratch.split_at_mut(i);
                let ins: Vec<&[u64]> = refs
                    .iter()
                    .map(|r| match *r {
                        Ref::Local(j) => done[j].as_slice(),
                        Ref::Source(k) => {
                            let s = self.srcs[k].index();
                            if use_cur[k] {
                                cur[s].as_slice()
                            } else {
                                prev[s].as_slice()
                            }
                        }
                        Ref::Fixed(n) => cur[n.index()].as_slice(),
                    })
                    .collect();
                space.eval(&nl.gate(*net).kind, &ins, &mut rest[0]);
            }
            let v = scratch.last().unwrap();
            if space.secret_dependent(v)
                && found.len() < MAX_WITNESSES_PER_NET
                && !found.iter().any(|w| &w.values == v)
            {
                found.push(ProbeWitness {
                    net: self.target,
                    cycle,
                    arrived: changed
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| (subset >> j) & 1 == 1)
                        .map(|(_, &k)| self.srcs[k])
                        .collect(),
                    values: v.clone(),
                });
            }
        }
        Ok(found)
    }
}

/// Exhaustive first-order probing check of a netlist fragment.
///
/// Every bit of a secret port pair `(s0, s1)` is shared as `s0 = m`,
/// `s1 = m ^ s` with a uniform mask bit `m`; bits of `masks` ports and all
/// random nets are uniform too. Other inputs are held at 0. Values stay
/// constant for `cycles` cycles, starting from the reset state (inputs 0,
/// registers at their initial value), which is also the previous state of
/// cycle 0. A probe is a violation when the number of mask assignments
/// giving 1 differs between two secret values.
pub fn probing_check(
    nl: &Netlist,
    secrets: &[(&str, &str)],
    masks: &[&str],
    cycles: usize,
    mode: ProbeMode,
) -> Result<ProbeReport, AnalysisError> {
    let port = |name: &str| -> Result<&[NetId], AnalysisError> {
        nl.input(name)
            .ok_or_else(|| NetlistError::UnknownPort(name.to_string()).into())
    };
    let mut pairs = Vec::new();
    for &(p0, p1) in secrets {
        let (s0, s1) = (port(p0)?, port(p1)?);
        if s0.len() != s1.len() {
            return Err(NetlistError::WidthMismatch {
                expected: s0.len(),
                got: s1.len(),
            }
            .into());
        }
        pairs.extend(s0.iter().copied().zip(s1.iter().copied()));
    }
    let mut mask_nets = Vec::new();
    for &m in masks {
        mask_nets.extend_from_slice(port(m)?);
    }
    let randoms = nl.random_nets();
    let secret_bits = pairs.len();
    let mask_bits = secret_bits + mask_nets.len() + randoms.len();
    let n_vars = mask_bits + secret_bits;
    if n_vars > MAX_PROBE_VARS {
        return Err(AnalysisError::Budget {
            vars: n_vars,
            limit: MAX_PROBE_VARS,
        });
    }
    let space = Space::new(mask_bits, secret_bits);

    let mut assigned: Vec<Option<Vec<u64>>> = vec![None; nl.len()];
    let mut set = |n: NetId, v: Vec<u64>| -> Result<(), AnalysisError> {
        if assigned[n.index()].replace(v).is_some() {
            return Err(AnalysisError::Probe(format!("{n} is enumerated twice")));
        }
        Ok(())
    };
    for (i, &(s0, s1)) in pairs.iter().enumerate() {
        let m = space.var(i);
        let s = space.var(mask_bits + i);
        let s1v = m.iter().zip(&s).map(|(a, b)| a ^ b).collect();
        set(s0, m)?;
        set(s1, s1v)?;
    }
    let mut next = secret_bits;
    for &n in mask_nets.iter().chain(randoms) {
        set(n, space.var(next))?;
        next += 1;
    }

    let mut port_bits = BTreeMap::new();
    for p in nl.input_ports() {
        for (bit, &n) in nl.input(&p.name).unwrap().iter().enumerate() {
            let v = assigned[n.index()].clone().unwrap_or_else(|| space.zeros());
            port_bits.insert((p.name.clone(), bit), v);
        }
    }

    let visible: Vec<NetId> = nl.nets().filter(|&n| !nl.is_internal(n)).collect();
    let cones: Vec<Cone> = match mode {
        ProbeMode::Settled => Vec::new(),
        ProbeMode::Transient => visible
            .iter()
            .filter(|&&n| nl.is_combinational(n))
            .map(|&n| Cone::new(nl, n))
            .collect(),
    };

    let mut prev = reset_state(nl, &space);
    let mut witnesses: Vec<ProbeWitness> = Vec::new();
    for cycle in 0..cycles {
        let mut cur: Vec<Vec<u64>> = Vec::with_capacity(nl.len());
        for (i, g) in nl.gates().iter().enumerate() {
            cur.push(match &g.kind {
                GateKind::Const(bit) => space.constant(*bit),
                GateKind::Input { .. } | GateKind::Random { .. } => {
                    assigned[i].clone().unwrap_or_else(|| space.zeros())
                }
                GateKind::Reg { init } if cycle == 0 => space.constant(*init),
                GateKind::Reg { .. } => prev[g.inputs[0].index()].clone(),
                _ => space.zeros(),
            });
        }
        settle(nl, &space, &mut cur);

        let settled: Vec<ProbeWitness> = visible
            .par_iter()
            .filter(|&&n| space.secret_dependent(&cur[n.index()]))
            .map(|&n| ProbeWitness {
                net: n,
                cycle,
                arrived: Vec::new(),
                values: cur[n.index()].clone(),
            })
            .collect();
        let transient: Vec<Vec<ProbeWitness>> = cones
            .par_iter()
            .map(|c| c.transients(nl, &space, &prev, &cur, cycle))
            .collect::<Result<_, _>>()?;
        for w in settled.into_iter().chain(transient.into_iter().flatten()) {
            let same_net = witnesses.iter().filter(|x| x.net == w.net);
            let mut n = 0;
            let mut dup = false;
            for x in same_net {
                n += 1;
                dup |= x.values == w.values;
            }
            if !dup && n < MAX_WITNESSES_PER_NET {
                witnesses.push(w);
            }
        }
        prev = cur;
    }

    let violating: BTreeSet<NetId> = witnesses.iter().map(|w| w.net).collect();
    Ok(ProbeReport {
        mode,
        n_vars,
        secret_bits,
        cycles,
        violating: violating.into_iter().collect(),
        witnesses,
        port_bits,
    })
}

fn reset_state(nl: &Netlist, space: &Space) -> Vec<Vec<u64>> {
    let mut v: Vec<Vec<u64>> = nl
        .gates()
        .iter()
        .map(|g| match g.kind {
            GateKind::Const(bit) | GateKind::Reg { init: bit } => space.constant(bit),
            _ => space.zeros(),
        })
        .collect();
    settle(nl, space, &mut v);
    v
}

fn settle(nl: &Netlist, space: &Space, v: &mut [Vec<u64>]) {
    let mut out = space.zeros();
    for &n in nl.eval_order() {
        let g = nl.gate(n);
        let ins: Vec<&[u64]> = g.inputs.iter().map(|x| v[x.index()].as_slice()).collect();
        space.eval(&g.kind, &ins, &mut out);
        std::mem::swap(&mut v[n.index()], &mut out);
    }
}

/// Small masked circuits with a known probing verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gadget {
    TgSync,
    TgGlitchy,
    TgLut,
    FullAdder,
    Rca2,
    Ksa2,
}

impl Gadget {
    pub const ALL: [Gadget; 6] = [
        Gadget::TgSync,
        Gadget::TgGlitchy,
        Gadget::TgLut,
        Gadget::FullAdder,
        Gadget::Rca2,
        Gadget::Ksa2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Gadget::TgSync => "tg-sync",
            Gadget::TgGlitchy => "tg-glitchy",
            Gadget::TgLut => "tg-lut",
            Gadget::FullAdder => "fa",
            Gadget::Rca2 => "rca2",
            Gadget::Ksa2 => "ksa2",
        }
    }

    /// The gadget with share ports `a0 a1 b0 b1` (and `c0 c1` for the
    /// adders) and one fresh random net per Trichina gate.
    pub fn fragment(self) -> Result<GadgetFragment, NetlistError> {
        let tg = |f: fn(
            &mut NetlistBuilder,
            ShareBit,
            ShareBit,
            NetId,
        ) -> Result<ShareBit, NetlistError>| {
            let mut b = NetlistBuilder::new();
            let x = ShareWord::input(&mut b, "a", 1)?.bits[0];
            let y = ShareWord::input(&mut b, "b", 1)?.bits[0];
            let r = b.random();
            let out = f(&mut b, x, y, r)?;
            b.output("c0", &[out.share0]);
            b.output("c1", &[out.share1]);
            Ok::<_, NetlistError>(GadgetFragment::new(
                b.finish()?,
                &["a", "b"],
                TRICHINA_LATENCY + 2,
            ))
        };
        match self {
            Gadget::TgSync => tg(trichina_sync),
            Gadget::TgGlitchy => tg(trichina_glitchy),
            Gadget::TgLut => tg(trichina_lut),
            Gadget::FullAdder => {
                let mut b = NetlistBuilder::new();
                let x = ShareWord::input(&mut b, "a", 1)?.bits[0];
                let y = ShareWord::input(&mut b, "b", 1)?.bits[0];
                let c = ShareWord::input(&mut b, "c", 1)?.bits[0];
                let r = [b.random(), b.random(), b.random()];
                let (s, co) = build_masked_full_adder(&mut b, x, y, c, r)?;
                b.output("s0", &[s.share0]);
                b.output("s1", &[s.share1]);
                b.output("co0", &[co.share0]);
                b.output("co1", &[co.share1]);
                Ok(GadgetFragment::new(
                    b.finish()?,
                    &["a", "b", "c"],
                    TRICHINA_LATENCY + 3,
                ))
            }
            Gadget::Rca2 | Gadget::Ksa2 => {
                let topology = if self == Gadget::Rca2 {
                    AdderTopology::Rca
                } else {
                    AdderTopology::Ksa
                };
                let spec = AdderSpec::new(2, topology);
                let (nl, _) = adder_fragment(&spec)?;
                Ok(GadgetFragment::new(
                    nl,
                    &["a", "b", "c"],
                    spec.latency() + 2,
                ))
            }
        }
    }
}

impl fmt::Display for Gadget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gadget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Gadget::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Gadget::ALL.iter().map(|g| g.name()).collect();
                format!(
                    "unknown gadget {s:?} (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

pub struct GadgetFragment {
    pub netlist: Netlist,
    /// Share port pairs `(name0, name1)`.
    pub secrets: Vec<(String, String)>,
    pub cycles: usize,
}

impl GadgetFragment {
    fn new(netlist: Netlist, names: &[&str], cycles: usize) -> Self {
        Self {
            netlist,
            secrets: names
                .iter()
                .map(|n| (format!("{n}0"), format!("{n}1")))
                .collect(),
            cycles,
        }
    }

    pub fn check(&self, mode: ProbeMode) -> Result<ProbeReport, AnalysisError> {
        let pairs: Vec<(&str, &str)> = self
            .secrets
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        probing_check(&self.netlist, &pairs, &[], self.cycles, mode)
    }
}
