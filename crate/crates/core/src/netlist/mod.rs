//! Gate-level netlists: construction, levelization and cycle-accurate
//! simulation with an optional glitch (transient) model.

mod lanes;
mod sim;

pub use lanes::{Lane256, LaneCounter, Lanes};
pub use sim::{
    transient_evaluate, ArrivalPolicy, CycleReport, EvalMode, SimState, Simulator, TransientResult,
};

use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

/// Identifier of a single-bit net. Net `i` is driven by gate `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NetId(pub(crate) u32);

impl NetId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GateKind {
    And2,
    Xor2,
    Not,
    /// `inputs = [select, a, b]`, output is `select ? a : b`.
    Mux2,
    Const(bool),
    /// Bit `bit` of the named input port.
    Input {
        port: String,
        bit: usize,
    },
    Random {
        stream: usize,
    },
    /// `inputs = [data]`. Output is the value latched at the previous edge.
    Reg {
        init: bool,
    },
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::And2 | GateKind::Xor2 => 2,
            GateKind::Not | GateKind::Reg { .. } => 1,
            GateKind::Mux2 => 3,
            GateKind::Const(_) | GateKind::Input { .. } | GateKind::Random { .. } => 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GateKind::And2 => "AND2",
            GateKind::Xor2 => "XOR2",
            GateKind::Not => "NOT",
            GateKind::Mux2 => "MUX2",
            GateKind::Const(_) => "CONST",
            GateKind::Input { .. } => "INPUT",
            GateKind::Random { .. } => "RANDOM",
            GateKind::Reg { .. } => "REG",
        }
    }

    pub fn is_combinational(&self) -> bool {
        matches!(
            self,
            GateKind::And2 | GateKind::Xor2 | GateKind::Not | GateKind::Mux2
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub inputs: Vec<NetId>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("{kind} expects {expected} inputs, got {got}")]
    ArityMismatch {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("input {0} does not exist")]
    DanglingInput(NetId),
    #[error("combinational cycle through {0:?}")]
    CombinationalCycle(Vec<NetId>),
    #[error("register {0} has no data input")]
    UnconnectedRegister(NetId),
    #[error("{0} is not an unconnected register")]
    NotPendingRegister(NetId),
    #[error("{0} is not a RANDOM net")]
    NotRandom(NetId),
    #[error("random net {0} is consumed twice")]
    RandomReuse(NetId),
    #[error("port {0} declared twice")]
    DuplicatePort(String),
    #[error("unknown port {0}")]
    UnknownPort(String),
    #[error("port {0} not assigned this cycle")]
    UnassignedPort(String),
    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("adder width {0} is below 2")]
    WidthTooSmall(usize),
    #[error("invalid arrival order: {0}")]
    BadArrivalOrder(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Port {
    pub name: String,
    pub nets: Vec<NetId>,
}

#[derive(Default)]
pub struct NetlistBuilder {
    gates: Vec<Gate>,
    inputs: Vec<Port>,
    randoms: Vec<NetId>,
    outputs: BTreeMap<String, Vec<NetId>>,
    probes: BTreeMap<String, NetId>,
    internal: HashSet<NetId>,
    claimed: HashSet<NetId>,
    pending: HashSet<NetId>,
    consts: [Option<NetId>; 2],
}

impl NetlistBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    fn push(&mut self, kind: GateKind, inputs: Vec<NetId>) -> NetId {
        let id = NetId(self.gates.len() as u32);
        self.gates.push(Gate { kind, inputs });
        id
    }

    /// Checked gate creation.
    pub fn add_gate(&mut self, kind: GateKind, inputs: &[NetId]) -> Result<NetId, NetlistError> {
        if inputs.len() != kind.arity() {
            return Err(NetlistError::ArityMismatch {
                kind: kind.name(),
                expected: kind.arity(),
                got: inputs.len(),
            });
        }
        if let Some(&bad) = inputs.iter().find(|n| n.index() >= self.gates.len()) {
            return Err(NetlistError::DanglingInput(bad));
        }
        match &kind {
            GateKind::Input { port, bit } => {
                let id = self.push(kind.clone(), vec![]);
                match self.inputs.iter_mut().find(|p| &p.name == port) {
                    Some(p) => {
                        if p.nets.len() <= *bit {
                            p.nets.resize(*bit + 1, id);
                        }
                        p.nets[*bit] = id;
                    }
                    None => {
                        let mut nets = vec![id; *bit + 1];
                        nets[*bit] = id;
                        self.inputs.push(Port {
                            name: port.clone(),
                            nets,
                        });
                    }
                }
                Ok(id)
            }
            GateKind::Random { .. } => Ok(self.random()),
            GateKind::Const(b) => Ok(self.constant(*b)),
            _ => Ok(self.push(kind, inputs.to_vec())),
        }
    }

    fn check(&self, n: NetId) {
        assert!(n.index() < self.gates.len(), "net {n} does not exist");
    }

    pub fn constant(&mut self, bit: bool) -> NetId {
        if let Some(n) = self.consts[bit as usize] {
            return n;
        }
        let n = self.push(GateKind::Const(bit), vec![]);
        self.consts[bit as usize] = Some(n);
        n
    }

    pub fn input_port(&mut self, name: &str, width: usize) -> Result<Vec<NetId>, NetlistError> {
        if self.inputs.iter().any(|p| p.name == name) {
            return Err(NetlistError::DuplicatePort(name.to_string()));
        }
        let nets: Vec<NetId> = (0..width)
            .map(|bit| {
                self.push(
                    GateKind::Input {
                        port: name.to_string(),
                        bit,
                    },
                    vec![],
                )
            })
            .collect();
        self.inputs.push(Port {
            name: name.to_string(),
            nets: nets.clone(),
        });
        Ok(nets)
    }

    pub fn input_bit(&mut self, name: &str) -> Result<NetId, NetlistError> {
        Ok(self.input_port(name, 1)?[0])
    }

    /// A fresh RANDOM net; the stream index is its position among RANDOM nets.
    pub fn random(&mut self) -> NetId {
        let stream = self.randoms.len();
        let n = self.push(GateKind::Random { stream }, vec![]);
        self.randoms.push(n);
        n
    }

    pub fn random_word(&mut self, width: usize) -> Vec<NetId> {
        (0..width).map(|_| self.random()).collect()
    }

    /// Records that a masked primitive consumes `r`; each RANDOM net may be
    /// consumed once.
    pub fn claim_random(&mut self, r: NetId) -> Result<(), NetlistError> {
        if r.index() >= self.gates.len()
            || !matches!(self.gates[r.index()].kind, GateKind::Random { .. })
        {
            return Err(NetlistError::NotRandom(r));
        }
        if !self.claimed.insert(r) {
            return Err(NetlistError::RandomReuse(r));
        }
        Ok(())
    }

    pub fn and(&mut self, a: NetId, b: NetId) -> NetId {
        self.check(a);
        self.check(b);
        self.push(GateKind::And2, vec![a, b])
    }

    pub fn xor(&mut self, a: NetId, b: NetId) -> NetId {
        self.check(a);
        self.check(b);
        self.push(GateKind::Xor2, vec![a, b])
    }

    pub fn not(&mut self, a: NetId) -> NetId {
        self.check(a);
        self.push(GateKind::Not, vec![a])
    }

    /// `select ? a : b`
    pub fn mux(&mut self, select: NetId, a: NetId, b: NetId) -> NetId {
        self.check(select);
        self.check(a);
        self.check(b);
        self.push(GateKind::Mux2, vec![select, a, b])
    }

    pub fn reg(&mut self, data: NetId) -> NetId {
        self.reg_init(data, false)
    }

    pub fn reg_init(&mut self, data: NetId, init: bool) -> NetId {
        self.check(data);
        self.push(GateKind::Reg { init }, vec![data])
    }

    /// A register whose data input is connected later with [`connect_reg`],
    /// for feedback loops.
    ///
    /// [`connect_reg`]: NetlistBuilder::connect_reg
    pub fn reg_placeholder(&mut self, init: bool) -> NetId {
        let n = self.push(GateKind::Reg { init }, vec![]);
        self.pending.insert(n);
        n
    }

    pub fn connect_reg(&mut self, reg: NetId, data: NetId) -> Result<(), NetlistError> {
        if !self.pending.remove(&reg) {
            return Err(NetlistError::NotPendingRegister(reg));
        }
        if data.index() >= self.gates.len() {
            self.pending.insert(reg);
            return Err(NetlistError::DanglingInput(data));
        }
        self.gates[reg.index()].inputs = vec![data];
        Ok(())
    }

    /// `net` delayed by `cycles` registers.
    pub fn delay(&mut self, net: NetId, cycles: usize) -> NetId {
        (0..cycles).fold(net, |n, _| self.reg(n))
    }

    pub fn output(&mut self, name: &str, nets: &[NetId]) {
        self.outputs.insert(name.to_string(), nets.to_vec());
    }

    pub fn probe(&mut self, name: &str, net: NetId) {
        self.probes.insert(name.to_string(), net);
    }

    /// Marks nets as internal to an atomic composite gate. They are hidden
    /// from settled-value probing but visible to the glitch model.
    pub fn mark_internal(&mut self, nets: &[NetId]) {
        self.internal.extend(nets.iter().copied());
    }

    pub fn finish(self) -> Result<Netlist, NetlistError> {
        if let Some(&r) = self.pending.iter().min() {
            return Err(NetlistError::UnconnectedRegister(r));
        }
        let n = self.gates.len();
        let mut internal = vec![false; n];
        for id in &self.internal {
            internal[id.index()] = true;
        }
        let eval_order = levelize(&self.gates)?;
        Ok(Netlist::compile(
            self.gates,
            eval_order,
            self.inputs,
            self.randoms,
            self.outputs,
            self.probes,
            internal,
        ))
    }
}

/// Topological order of the combinational gates, with REG outputs, ports and
/// constants as sources.
pub fn levelize(gates: &[Gate]) -> Result<Vec<NetId>, NetlistError> {
    let n = gates.len();
    let comb = |i: usize| gates[i].kind.is_combinational();
    let mut indegree = vec![0usize; n];
    let mut fanout: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (i, g) in gates.iter().enumerate() {
        if !comb(i) {
            continue;
        }
        for inp in &g.inputs {
            if comb(inp.index()) {
                indegree[i] += 1;
                fanout[inp.index()].push(i as u32);
            }
        }
    }
    let mut order = Vec::new();
    let mut ready: Vec<u32> = (0..n)
        .filter(|&i| comb(i) && indegree[i] == 0)
        .map(|i| i as u32)
        .collect();
    ready.reverse();
    while let Some(i) = ready.pop() {
        order.push(NetId(i));
        for &f in fanout[i as usize].iter().rev() {
            indegree[f as usize] -= 1;
            if indegree[f as usize] == 0 {
                ready.push(f);
            }
        }
    }
    let total = (0..n).filter(|&i| comb(i)).count();
    if order.len() == total {
        return Ok(order);
    }
    // Walk backwards through unresolved gates until a net repeats.
    let start = (0..n).find(|&i| comb(i) && indegree[i] > 0).unwrap();
    let mut path = vec![start];
    let mut pos = vec![usize::MAX; n];
    pos[start] = 0;
    let mut cur = start;
    loop {
        let next = gates[cur]
            .inputs
            .iter()
            .map(|x| x.index())
            .find(|&x| comb(x) && indegree[x] > 0)
            .unwrap();
        if pos[next] != usize::MAX {
            let mut cycle: Vec<NetId> =
                path[pos[next]..].iter().map(|&i| NetId(i as u32)).collect();
            cycle.reverse();
            return Err(NetlistError::CombinationalCycle(cycle));
        }
        pos[next] = path.len();
        path.push(next);
        cur = next;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub(crate) enum OpCode {
    And,
    Xor,
    Not,
    Mux,
}

/// A combinational gate compiled for evaluation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Op {
    pub code: OpCode,
    pub a: u32,
    pub b: u32,
    pub c: u32,
    pub out: u32,
}

impl Op {
    #[inline(always)]
    pub fn eval<L: Lanes>(&self, v: &[L]) -> L {
        let a = v[self.a as usize];
        match self.code {
            OpCode::And => a & v[self.b as usize],
            OpCode::Xor => a ^ v[self.b as usize],
            OpCode::Not => !a,
            OpCode::Mux => {
                let s = a;
                (s & v[self.b as usize]) | (!s & v[self.c as usize])
            }
        }
    }
}

/// Summary counts used in manifests and reports.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NetlistStats {
    pub nets: usize,
    pub and2: usize,
    pub xor2: usize,
    pub not: usize,
    pub mux2: usize,
    pub registers: usize,
    pub input_bits: usize,
    pub random_bits: usize,
    pub depth: usize,
}

/// An immutable, levelized netlist.
#[derive(Clone, Debug)]
pub struct Netlist {
    gates: Vec<Gate>,
    eval_order: Vec<NetId>,
    inputs: Vec<Port>,
    randoms: Vec<NetId>,
    outputs: BTreeMap<String, Vec<NetId>>,
    probes: BTreeMap<String, NetId>,
    internal: Vec<bool>,
    pub(crate) ops: Vec<Op>,
    /// Position of each combinational net in `ops`, `u32::MAX` otherwise.
    pub(crate) op_of: Vec<u32>,
    pub(crate) regs: Vec<NetId>,
    pub(crate) reg_data: Vec<NetId>,
    /// Every net that is a source for the combinational logic (REG, INPUT,
    /// RANDOM), in NetId order.
    pub(crate) sources: Vec<NetId>,
    /// Index into `sources` for each net, `u32::MAX` for non-sources.
    pub(crate) source_of: Vec<u32>,
    /// CSR lists of op indices in each source's combinational fanout cone.
    pub(crate) cone_start: Vec<u32>,
    pub(crate) cone_ops: Vec<u32>,
}

impl Netlist {
    fn compile(
        gates: Vec<Gate>,
        eval_order: Vec<NetId>,
        inputs: Vec<Port>,
        randoms: Vec<NetId>,
        outputs: BTreeMap<String, Vec<NetId>>,
        probes: BTreeMap<String, NetId>,
        internal: Vec<bool>,
    ) -> Netlist {
        let n = gates.len();
        let mut op_of = vec![u32::MAX; n];
        let ops: Vec<Op> = eval_order
            .iter()
            .enumerate()
            .map(|(k, id)| {
                op_of[id.index()] = k as u32;
                let g = &gates[id.index()];
                let inp = |i: usize| g.inputs.get(i).map_or(0, |x| x.0);
                let code = match g.kind {
                    GateKind::And2 => OpCode::And,
                    GateKind::Xor2 => OpCode::Xor,
                    GateKind::Not => OpCode::Not,
                    GateKind::Mux2 => OpCode::Mux,
                    _ => unreachable!(),
                };
                Op {
                    code,
                    a: inp(0),
                    b: inp(1),
                    c: inp(2),
                    out: id.0,
                }
            })
            .collect();
        let mut regs = Vec::new();
        let mut reg_data = Vec::new();
        let mut sources = Vec::new();
        let mut source_of = vec![u32::MAX; n];
        for (i, g) in gates.iter().enumerate() {
            match g.kind {
                GateKind::Reg { .. } => {
                    regs.push(NetId(i as u32));
                    reg_data.push(g.inputs[0]);
                }
                GateKind::Input { .. } | GateKind::Random { .. } => {}
                _ => continue,
            }
            source_of[i] = sources.len() as u32;
            sources.push(NetId(i as u32));
        }

        // Fanout cones: walk forward through combinational gates.
        let mut fanout: Vec<Vec<u32>> = vec![Vec::new(); n];
        for op in &ops {
            let mut push = |x: u32| {
                let f = &mut fanout[x as usize];
                if f.last() != Some(&op.out) {
                    f.push(op.out);
                }
            };
            push(op.a);
            if op.code != OpCode::Not {
                push(op.b);
            }
            if op.code == OpCode::Mux {
                push(op.c);
            }
        }
        let mut cone_start = Vec::with_capacity(sources.len() + 1);
        let mut cone_ops = Vec::new();
        let mut mark = vec![u32::MAX; n];
        let mut stack = Vec::new();
        let mut cone = Vec::new();
        for (si, s) in sources.iter().enumerate() {
            cone_start.push(cone_ops.len() as u32);
            cone.clear();
            stack.push(s.0);
            while let Some(x) = stack.pop() {
                for &f in &fanout[x as usize] {
                    if mark[f as usize] != si as u32 {
                        mark[f as usize] = si as u32;
                        cone.push(op_of[f as usize]);
                        stack.push(f);
                    }
                }
            }
            cone.sort_unstable();
            cone_ops.extend_from_slice(&cone);
        }
        cone_start.push(cone_ops.len() as u32);

        Netlist {
            gates,
            eval_order,
            inputs,
            randoms,
            outputs,
            probes,
            internal,
            ops,
            op_of,
            regs,
            reg_data,
            sources,
            source_of,
            cone_start,
            cone_ops,
        }
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gate(&self, n: NetId) -> &Gate {
        &self.gates[n.index()]
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn eval_order(&self) -> &[NetId] {
        &self.eval_order
    }

    pub fn registers(&self) -> &[NetId] {
        &self.regs
    }

    pub fn input_ports(&self) -> &[Port] {
        &self.inputs
    }

    pub fn input(&self, name: &str) -> Option<&[NetId]> {
        self.inputs
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.nets.as_slice())
    }

    pub fn random_nets(&self) -> &[NetId] {
        &self.randoms
    }

    pub fn outputs(&self) -> &BTreeMap<String, Vec<NetId>> {
        &self.outputs
    }

    pub fn output(&self, name: &str) -> Option<&[NetId]> {
        self.outputs.get(name).map(|v| v.as_slice())
    }

    pub fn probes(&self) -> &BTreeMap<String, NetId> {
        &self.probes
    }

    pub fn is_internal(&self, n: NetId) -> bool {
        self.internal[n.index()]
    }

    pub fn is_source(&self, n: NetId) -> bool {
        self.source_of[n.index()] != u32::MAX
    }

    pub fn is_combinational(&self, n: NetId) -> bool {
        self.op_of[n.index()] != u32::MAX
    }

    pub fn nets(&self) -> impl Iterator<Item = NetId> + '_ {
        (0..self.gates.len() as u32).map(NetId)
    }

    /// Sources in the transitive combinational fan-in of `n`, and the nets
    /// of the fan-in cone in evaluation order (including `n` when it is
    /// combinational).
    pub fn fanin_cone(&self, n: NetId) -> (Vec<NetId>, Vec<NetId>) {
        let mut seen = HashSet::new();
        let mut stack = vec![n];
        let mut srcs = Vec::new();
        let mut comb = Vec::new();
        while let Some(x) = stack.pop() {
            if !seen.insert(x) {
                continue;
            }
            let g = &self.gates[x.index()];
            if g.kind.is_combinational() {
                comb.push(x);
                stack.extend(g.inputs.iter().copied());
            } else if self.is_source(x) {
                srcs.push(x);
            }
        }
        srcs.sort();
        comb.sort_by_key(|x| self.op_of[x.index()]);
        (srcs, comb)
    }

    pub fn stats(&self) -> NetlistStats {
        let mut s = NetlistStats {
            nets: self.gates.len(),
            ..Default::default()
        };
        for g in &self.gates {
            match g.kind {
                GateKind::And2 => s.and2 += 1,
                GateKind::Xor2 => s.xor2 += 1,
                GateKind::Not => s.not += 1,
                GateKind::Mux2 => s.mux2 += 1,
                GateKind::Reg { .. } => s.registers += 1,
                GateKind::Input { .. } => s.input_bits += 1,
                GateKind::Random { .. } => s.random_bits += 1,
                GateKind::Const(_) => {}
            }
        }
        let mut level = vec![0usize; self.gates.len()];
        for op in &self.ops {
            let l = |x: u32| level[x as usize];
            let mut d = l(op.a);
            if op.code != OpCode::Not {
                d = d.max(l(op.b));
            }
            if op.code == OpCode::Mux {
                d = d.max(l(op.c));
            }
            level[op.out as usize] = d + 1;
            s.depth = s.depth.max(d + 1);
        }
        s
    }
}
