use super::{GateKind, LaneCounter, Lanes, NetId, Netlist, NetlistError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};

/// Order in which changed sources switch under the glitch model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArrivalPolicy {
    /// Ascending NetId.
    Fixed,
    /// A fresh permutation every cycle.
    PerCycleRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    /// Settle only; no leakage counters.
    Functional,
    /// Settle in one pass; toggles count settled value changes only.
    Settled,
    /// Sources switch one at a time and every intermediate change counts.
    Transient(ArrivalPolicy),
}

/// Leakage-relevant events of one clock cycle for a single trace.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CycleReport {
    pub reg_hd: u32,
    pub transient_toggles: u32,
    pub tagged_probes: BTreeMap<String, bool>,
}

/// Lane-parallel cycle simulator. Each cycle: stage every INPUT and RANDOM
/// net with [`assign`](Simulator::assign), then call
/// [`step`](Simulator::step).
pub struct Simulator<'a, L: Lanes> {
    nl: &'a Netlist,
    values: Vec<L>,
    /// Next value of every source, indexed like `Netlist::sources`.
    pending: Vec<L>,
    stamp: Vec<u64>,
    /// (register, data net, source slot) per register.
    reg_links: Vec<(u32, u32, u32)>,
    port_srcs: Vec<u32>,
    mode: EvalMode,
    rng: ChaCha8Rng,
    cycle: u64,
    changed: Vec<u32>,
    reg_hd: LaneCounter<L>,
    toggles: LaneCounter<L>,
}

impl<'a, L: Lanes> Simulator<'a, L> {
    pub fn new(nl: &'a Netlist, mode: EvalMode) -> Self {
        let mut values = vec![L::default(); nl.len()];
        for (i, g) in nl.gates().iter().enumerate() {
            match g.kind {
                GateKind::Const(b) => values[i] = L::splat(b),
                GateKind::Reg { init } => values[i] = L::splat(init),
                _ => {}
            }
        }
        for op in &nl.ops {
            values[op.out as usize] = op.eval(&values);
        }
        let pending = nl.sources.iter().map(|s| values[s.index()]).collect();
        let reg_links = nl
            .regs
            .iter()
            .zip(&nl.reg_data)
            .map(|(r, d)| (r.0, d.0, nl.source_of[r.index()]))
            .collect();
        let port_srcs = nl
            .sources
            .iter()
            .enumerate()
            .filter(|(_, s)| !matches!(nl.gate(**s).kind, GateKind::Reg { .. }))
            .map(|(i, _)| i as u32)
            .collect();
        Self {
            nl,
            values,
            pending,
            stamp: vec![0; nl.sources.len()],
            reg_links,
            port_srcs,
            mode,
            rng: ChaCha8Rng::seed_from_u64(0),
            cycle: 0,
            changed: Vec::new(),
            reg_hd: LaneCounter::default(),
            toggles: LaneCounter::default(),
        }
    }

    pub fn netlist(&self) -> &'a Netlist {
        self.nl
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    /// Seeds the arrival-order generator used by `PerCycleRandom`.
    pub fn set_arrival_seed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Stages the value of an INPUT or RANDOM net for the next step.
    #[inline]
    pub fn assign(&mut self, net: NetId, value: L) {
        let si = self.nl.source_of[net.index()];
        assert!(
            si != u32::MAX && !matches!(self.nl.gate(net).kind, GateKind::Reg { .. }),
            "{net} is not an input"
        );
        self.pending[si as usize] = value;
        self.stamp[si as usize] = self.cycle + 1;
    }

    pub fn assign_word(&mut self, nets: &[NetId], values: &[L]) {
        for (&n, &v) in nets.iter().zip(values) {
            self.assign(n, v);
        }
    }

    /// Settled value of `net` in the most recent cycle.
    #[inline]
    pub fn value(&self, net: NetId) -> L {
        self.values[net.index()]
    }

    pub fn values(&self) -> &[L] {
        &self.values
    }

    /// Register Hamming distance of the most recent step.
    pub fn reg_hd(&self) -> &LaneCounter<L> {
        &self.reg_hd
    }

    /// Combinational toggles of the most recent step.
    pub fn toggles(&self) -> &LaneCounter<L> {
        &self.toggles
    }

    fn check_assigned(&self) -> Result<(), NetlistError> {
        for &si in &self.port_srcs {
            if self.stamp[si as usize] != self.cycle + 1 {
                let net = self.nl.sources[si as usize];
                let name = match &self.nl.gate(net).kind {
                    GateKind::Input { port, bit } => format!("{port}[{bit}]"),
                    GateKind::Random { stream } => format!("random[{stream}]"),
                    _ => unreachable!(),
                };
                return Err(NetlistError::UnassignedPort(name));
            }
        }
        Ok(())
    }

    /// Advances one clock cycle: sources take their staged values, logic
    /// settles, then every register latches its data input.
    pub fn step(&mut self) -> Result<(), NetlistError> {
        self.check_assigned()?;
        let nl = self.nl;
        self.toggles.clear();
        self.reg_hd.clear();
        match self.mode {
            EvalMode::Functional => {
                for (si, s) in nl.sources.iter().enumerate() {
                    self.values[s.index()] = self.pending[si];
                }
                for op in &nl.ops {
                    self.values[op.out as usize] = op.eval(&self.values);
                }
            }
            EvalMode::Settled => {
                for (si, s) in nl.sources.iter().enumerate() {
                    self.values[s.index()] = self.pending[si];
                }
                for op in &nl.ops {
                    let v = op.eval(&self.values);
                    let d = v ^ self.values[op.out as usize];
                    if d.any() {
                        self.values[op.out as usize] = v;
                        self.toggles.add(d);
                    }
                }
            }
            EvalMode::Transient(policy) => {
                self.changed.clear();
                for (si, s) in nl.sources.iter().enumerate() {
                    if self.pending[si] != self.values[s.index()] {
                        self.changed.push(si as u32);
                    }
                }
                if policy == ArrivalPolicy::PerCycleRandom {
                    self.changed.shuffle(&mut self.rng);
                }
                for k in 0..self.changed.len() {
                    let si = self.changed[k] as usize;
                    self.values[nl.sources[si].index()] = self.pending[si];
                    let cone =
                        &nl.cone_ops[nl.cone_start[si] as usize..nl.cone_start[si + 1] as usize];
                    for &oi in cone {
                        let op = &nl.ops[oi as usize];
                        let v = op.eval(&self.values);
                        let d = v ^ self.values[op.out as usize];
                        if d.any() {
                            self.values[op.out as usize] = v;
                            self.toggles.add(d);
                        }
                    }
                }
            }
        }
        let count = self.mode != EvalMode::Functional;
        let values = &self.values;
        for &(q, data, src) in &self.reg_links {
            let new = values[data as usize];
            if count {
                let d = new ^ values[q as usize];
                if d.any() {
                    self.reg_hd.add(d);
                }
            }
            self.pending[src as usize] = new;
        }
        self.cycle += 1;
        Ok(())
    }
}

/// Single-trace simulation with named port assignment.
pub struct SimState<'a> {
    sim: Simulator<'a, bool>,
}

impl<'a> SimState<'a> {
    pub fn new(nl: &'a Netlist, mode: EvalMode) -> Self {
        Self {
            sim: Simulator::new(nl, mode),
        }
    }

    pub fn cycle(&self) -> u64 {
        self.sim.cycle()
    }

    pub fn net_value(&self, n: NetId) -> bool {
        self.sim.value(n)
    }

    pub fn net_values(&self) -> &[bool] {
        self.sim.values()
    }

    /// Current register outputs, in `Netlist::registers` order.
    pub fn reg_values(&self) -> Vec<bool> {
        self.sim
            .nl
            .regs
            .iter()
            .map(|r| self.sim.pending[self.sim.nl.source_of[r.index()] as usize])
            .collect()
    }

    /// Reads a word of nets (LSB first) as an integer.
    pub fn word(&self, nets: &[NetId]) -> u64 {
        nets.iter()
            .enumerate()
            .map(|(i, &n)| (self.sim.value(n) as u64) << i)
            .sum()
    }

    /// `inputs` gives each input port's value (bit i = port bit i);
    /// `randoms[k]` drives RANDOM stream k.
    pub fn step(
        &mut self,
        inputs: &[(&str, u64)],
        randoms: &[bool],
    ) -> Result<CycleReport, NetlistError> {
        let nl = self.sim.nl;
        for (name, value) in inputs {
            let nets = nl
                .input(name)
                .ok_or_else(|| NetlistError::UnknownPort(name.to_string()))?;
            for (i, &n) in nets.iter().enumerate() {
                self.sim.assign(n, i < 64 && (value >> i) & 1 == 1);
            }
        }
        for (&n, &r) in nl.random_nets().iter().zip(randoms) {
            self.sim.assign(n, r);
        }
        self.sim.step()?;
        Ok(CycleReport {
            reg_hd: self.sim.reg_hd().lane_count(0),
            transient_toggles: self.sim.toggles().lane_count(0),
            tagged_probes: nl
                .probes()
                .iter()
                .map(|(k, &n)| (k.clone(), self.sim.value(n)))
                .collect(),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransientResult {
    pub toggles: u64,
    /// For every combinational net that moved: its settled start value
    /// followed by each value taken after a switch.
    pub sequences: BTreeMap<NetId, Vec<bool>>,
    pub final_values: Vec<bool>,
}

/// Switches sources from `prev` to `new` one at a time in `arrival_order`,
/// re-settling the logic after each switch. Sources missing from an
/// assignment are 0.
pub fn transient_evaluate(
    nl: &Netlist,
    prev: &[(NetId, bool)],
    new: &[(NetId, bool)],
    arrival_order: &[NetId],
) -> Result<TransientResult, NetlistError> {
    let lookup = |a: &[(NetId, bool)]| -> Result<HashMap<NetId, bool>, NetlistError> {
        a.iter()
            .map(|&(n, v)| {
                if nl.is_source(n) {
                    Ok((n, v))
                } else {
                    Err(NetlistError::BadArrivalOrder(format!(
                        "{n} is not a source"
                    )))
                }
            })
            .collect()
    };
    let prev = lookup(prev)?;
    let new = lookup(new)?;
    let mut values = vec![false; nl.len()];
    for (i, g) in nl.gates().iter().enumerate() {
        if let GateKind::Const(b) = g.kind {
            values[i] = b;
        }
    }
    for s in &nl.sources {
        values[s.index()] = prev.get(s).copied().unwrap_or(false);
    }
    for op in &nl.ops {
        values[op.out as usize] = op.eval(&values);
    }
    let target = |s: &NetId| new.get(s).copied().unwrap_or(false);
    let mut changed: Vec<NetId> = nl
        .sources
        .iter()
        .filter(|s| target(s) != values[s.index()])
        .copied()
        .collect();
    let mut order = arrival_order.to_vec();
    order.sort();
    changed.sort();
    if order != changed {
        return Err(NetlistError::BadArrivalOrder(format!(
            "expected a permutation of {changed:?}"
        )));
    }
    let mut result = TransientResult::default();
    for s in arrival_order {
        values[s.index()] = target(s);
        let si = nl.source_of[s.index()] as usize;
        for &oi in &nl.cone_ops[nl.cone_start[si] as usize..nl.cone_start[si + 1] as usize] {
            let op = &nl.ops[oi as usize];
            let v = op.eval(&values);
            let out = op.out as usize;
            if v != values[out] {
                result
                    .sequences
                    .entry(NetId(op.out))
                    .or_insert_with(|| vec![values[out]])
                    .push(v);
                values[out] = v;
                result.toggles += 1;
            }
        }
    }
    result.final_values = values;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{Lane256, NetlistBuilder};

    #[test]
    fn constant_gates_settle() {
        let mut b = NetlistBuilder::new();
        let one = b.constant(true);
        let zero = b.constant(false);
        let x = b.input_bit("x").unwrap();
        let a = b.and(one, one);
        let z = b.xor(x, x);
        let n = b.not(zero);
        let nl = b.finish().unwrap();
        let mut s = SimState::new(&nl, EvalMode::Settled);
        s.step(&[("x", 1)], &[]).unwrap();
        assert!(s.net_value(a));
        assert!(!s.net_value(z));
        assert!(s.net_value(n));
    }

    #[test]
    fn register_hamming_distance() {
        let mut b = NetlistBuilder::new();
        let d = b.input_port("d", 20).unwrap();
        let q: Vec<NetId> = d.iter().map(|&n| b.reg(n)).collect();
        b.output("q", &q);
        let nl = b.finish().unwrap();
        let mut s = SimState::new(&nl, EvalMode::Settled);
        assert_eq!(s.step(&[("d", 0xFF)], &[]).unwrap().reg_hd, 8);
        assert_eq!(s.word(&q), 0);
        assert_eq!(s.step(&[("d", 0xFF)], &[]).unwrap().reg_hd, 0);
        assert_eq!(s.word(&q), 0xFF);
        assert_eq!(s.step(&[("d", 0x0F)], &[]).unwrap().reg_hd, 4);
    }

    #[test]
    fn one_bit_register() {
        let mut b = NetlistBuilder::new();
        let one = b.constant(true);
        b.reg(one);
        let q1 = b.reg_init(one, true);
        let nl = b.finish().unwrap();
        let mut s = SimState::new(&nl, EvalMode::Settled);
        assert_eq!(s.step(&[], &[]).unwrap().reg_hd, 1);
        assert!(s.net_value(q1));
        assert_eq!(s.step(&[], &[]).unwrap().reg_hd, 0);
    }

    #[test]
    fn unassigned_port_is_error() {
        let mut b = NetlistBuilder::new();
        b.input_bit("x").unwrap();
        b.random();
        let nl = b.finish().unwrap();
        let mut s = SimState::new(&nl, EvalMode::Functional);
        assert_eq!(
            s.step(&[("x", 0)], &[]),
            Err(NetlistError::UnassignedPort("random[0]".into()))
        );
        assert_eq!(
            s.step(&[("y", 0)], &[false]),
            Err(NetlistError::UnknownPort("y".into()))
        );
    }

    #[test]
    fn early_arrivals_unmask_b() {
        // (a0.b0 ^ a0.b1) ^ r with r arriving last.
        let mut b = NetlistBuilder::new();
        let a0 = b.input_bit("a0").unwrap();
        let b0 = b.input_bit("b0").unwrap();
        let b1 = b.input_bit("b1").unwrap();
        let r = b.random();
        let p0 = b.and(a0, b0);
        let p1 = b.and(a0, b1);
        let x1 = b.xor(p0, p1);
        let x2 = b.xor(x1, r);
        let nl = b.finish().unwrap();
        for v in 0..16u32 {
            let bit = |i: u32| (v >> i) & 1 == 1;
            let (va0, vb0, vb1, vr) = (bit(0), bit(1), bit(2), bit(3));
            let new = [(a0, va0), (b0, vb0), (b1, vb1), (r, vr)];
            let order: Vec<NetId> = new.iter().filter(|x| x.1).map(|x| x.0).collect();
            let res = transient_evaluate(&nl, &[], &new, &order).unwrap();
            assert_eq!(res.final_values[x1.index()], va0 & (vb0 ^ vb1));
            if !vr {
                continue;
            }
            // Just before r switches, x2 carries the unmasked a0.(b0^b1).
            let seq = res.sequences.get(&x2).cloned().unwrap_or(vec![false]);
            let before_r = if seq.len() >= 2 {
                seq[seq.len() - 2]
            } else {
                false
            };
            assert_eq!(before_r, va0 & (vb0 ^ vb1));
        }
    }

    #[test]
    fn transient_rejects_bad_order() {
        let mut b = NetlistBuilder::new();
        let x = b.input_bit("x").unwrap();
        let y = b.input_bit("y").unwrap();
        b.and(x, y);
        let nl = b.finish().unwrap();
        let r = transient_evaluate(&nl, &[], &[(x, true)], &[y]);
        assert!(matches!(r, Err(NetlistError::BadArrivalOrder(_))));
        let r = transient_evaluate(&nl, &[(x, true)], &[(x, true)], &[]).unwrap();
        assert_eq!(r.toggles, 0);
        assert!(r.sequences.is_empty());
    }

    #[test]
    fn lanes_agree_with_scalar() {
        let mut b = NetlistBuilder::new();
        let x = b.input_port("x", 3).unwrap();
        let q = b.reg_placeholder(false);
        let a = b.and(x[0], q);
        let m = b.mux(x[1], a, x[2]);
        let d = b.xor(m, x[0]);
        b.connect_reg(q, d).unwrap();
        let nl = b.finish().unwrap();
        let mode = EvalMode::Transient(ArrivalPolicy::Fixed);
        let mut wide = Simulator::<Lane256>::new(&nl, mode);
        let inputs: Vec<Vec<u64>> = (0..256)
            .map(|l| (0..10).map(|c| ((l * 7 + c * 3) % 8) as u64).collect())
            .collect();
        let mut hd = vec![vec![0u32; 256]; 10];
        let mut tg = vec![vec![0u32; 256]; 10];
        for c in 0..10 {
            for (i, &net) in x.iter().enumerate() {
                let mut w = Lane256::default();
                for (l, inp) in inputs.iter().enumerate() {
                    w.set_lane(l, (inp[c] >> i) & 1 == 1);
                }
                wide.assign(net, w);
            }
            wide.step().unwrap();
            wide.reg_hd().accumulate_into(&mut hd[c]);
            wide.toggles().accumulate_into(&mut tg[c]);
        }
        for (l, inp) in inputs.iter().enumerate() {
            let mut s = SimState::new(&nl, mode);
            for c in 0..10 {
                let rep = s.step(&[("x", inp[c])], &[]).unwrap();
                assert_eq!(rep.reg_hd, hd[c][l]);
                assert_eq!(rep.transient_toggles, tg[c][l]);
            }
        }
    }
}
