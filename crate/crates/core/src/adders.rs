//! Unmasked and masked adders: ripple-carry and Kogge-Stone.

use crate::masked_gates::{check_width, trichina_sync, ShareBit, ShareWord, TRICHINA_LATENCY};
use crate::netlist::{EvalMode, NetId, Netlist, NetlistBuilder, NetlistError, SimState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Latency of one masked full adder.
pub const FA_LATENCY: usize = TRICHINA_LATENCY + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AdderTopology {
    Rca,
    Ksa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdderSpec {
    pub width: usize,
    pub topology: AdderTopology,
    pub masked: bool,
    pub pipelined: bool,
    /// When set, the adder computes `a - b` while this net is 1.
    pub sub_port: Option<NetId>,
}

impl AdderSpec {
    /// A masked, pipelined adder without subtract mode.
    pub fn new(width: usize, topology: AdderTopology) -> Self {
        Self {
            width,
            topology,
            masked: true,
            pipelined: true,
            sub_port: None,
        }
    }

    /// Asks [`adder_fragment`] for a `sub` input port. The placeholder net
    /// is replaced by the fragment builder; [`build_masked_adder`] needs a
    /// real net instead.
    pub fn with_subtract(mut self) -> Self {
        self.sub_port = Some(NetId(0));
        self
    }

    /// Cycles from operand injection to result.
    pub fn latency(&self) -> usize {
        if !self.masked {
            return 0;
        }
        match self.topology {
            AdderTopology::Rca => rca_latency(self.width),
            AdderTopology::Ksa => ksa_latency(self.width),
        }
    }

    /// Number of prefix levels in the Kogge-Stone tree.
    pub fn ksa_levels(&self) -> usize {
        ceil_log2(self.width)
    }

    /// Fresh random bits consumed per cycle.
    pub fn random_bits(&self) -> usize {
        if !self.masked {
            return 0;
        }
        match self.topology {
            AdderTopology::Rca => 3 * self.width,
            AdderTopology::Ksa => ksa_trichina_count(self.width),
        }
    }
}

pub fn ceil_log2(w: usize) -> usize {
    if w <= 1 {
        0
    } else {
        (usize::BITS - (w - 1).leading_zeros()) as usize
    }
}

pub fn rca_latency(width: usize) -> usize {
    FA_LATENCY * width
}

/// Pre-stage, one stage per prefix level, then the registered sum XOR.
pub fn ksa_latency(width: usize) -> usize {
    FA_LATENCY * (1 + ceil_log2(width)) + 1
}

fn ksa_trichina_count(width: usize) -> usize {
    let mut n = width + 1;
    for d in 0..ceil_log2(width) {
        let span = 1usize << d;
        for e in span..width {
            n += 1;
            if e >= 2 * span {
                n += 1;
            }
        }
    }
    n
}

/// Group generate and propagate over bit positions `span.1..=span.0`.
/// `span.1 == -1` means the group includes the carry-in, in which case the
/// propagate is zero and not materialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupGP {
    pub g: ShareBit,
    pub p: Option<ShareBit>,
    pub span: (i64, i64),
}

#[derive(Clone, Debug)]
pub struct MaskedAdder {
    pub a: ShareWord,
    /// The b operand as it enters the adder (after subtract inversion).
    pub b: ShareWord,
    pub cin: ShareBit,
    pub sum: ShareWord,
    pub cout: ShareBit,
    pub latency: usize,
    pub random_bits: usize,
    /// Kogge-Stone prefix state after the pre-stage and after each level.
    pub levels: Vec<Vec<GroupGP>>,
}

#[derive(Clone, Debug)]
pub struct UnmaskedAdder {
    pub sum: Vec<NetId>,
    pub cout: NetId,
}

struct Tg<'a> {
    b: &'a mut NetlistBuilder,
    used: usize,
}

impl Tg<'_> {
    fn and(&mut self, x: ShareBit, y: ShareBit) -> Result<ShareBit, NetlistError> {
        let r = self.b.random();
        self.used += 1;
        trichina_sync(self.b, x, y, r)
    }
}

fn check_operands(a: &ShareWord, b: &ShareWord) -> Result<usize, NetlistError> {
    check_width(a.width(), b.width())?;
    if a.width() < 2 {
        return Err(NetlistError::WidthTooSmall(a.width()));
    }
    Ok(a.width())
}

/// Masked full adder with latency [`FA_LATENCY`]. `r` must be three
/// distinct fresh RANDOM nets.
pub fn build_masked_full_adder(
    b: &mut NetlistBuilder,
    x: ShareBit,
    y: ShareBit,
    c: ShareBit,
    r: [NetId; 3],
) -> Result<(ShareBit, ShareBit), NetlistError> {
    let d = trichina_sync(b, x, y, r[0])?;
    let e = trichina_sync(b, y, c, r[1])?;
    let f = trichina_sync(b, c, x, r[2])?;
    let carry = d.xor(b, e).xor(b, f).reg(b);
    let sum = x.xor(b, y).xor(b, c).delay(b, FA_LATENCY);
    Ok((sum, carry))
}

/// Ripple-carry adder of masked full adders. When pipelined, operand bit
/// `i` is skewed by `5i` cycles and sum bit `i` deskewed so that a new
/// operand pair can enter every cycle; the result appears `5W` cycles after
/// injection either way.
pub fn build_masked_rca(
    b: &mut NetlistBuilder,
    x: &ShareWord,
    y: &ShareWord,
    cin: ShareBit,
    pipelined: bool,
) -> Result<MaskedAdder, NetlistError> {
    let w = check_operands(x, y)?;
    let mut carry = cin;
    let mut sum = Vec::with_capacity(w);
    for i in 0..w {
        let skew = if pipelined { FA_LATENCY * i } else { 0 };
        let xi = x.bits[i].delay(b, skew);
        let yi = y.bits[i].delay(b, skew);
        let r = [b.random(), b.random(), b.random()];
        let (s, c) = build_masked_full_adder(b, xi, yi, carry, r)?;
        let deskew = if pipelined {
            FA_LATENCY * (w - 1 - i)
        } else {
            0
        };
        sum.push(s.delay(b, deskew));
        carry = c;
    }
    Ok(MaskedAdder {
        a: x.clone(),
        b: y.clone(),
        cin,
        sum: ShareWord::new(sum),
        cout: carry,
        latency: rca_latency(w),
        random_bits: 3 * w,
        levels: Vec::new(),
    })
}

/// Masked Kogge-Stone adder. The carry-in is folded into bit 0's generate
/// in the pre-stage, so the prefix tree has `ceil(log2 W)` levels; every
/// level is one Trichina stage plus an alignment register.
pub fn build_masked_ksa(
    b: &mut NetlistBuilder,
    x: &ShareWord,
    y: &ShareWord,
    cin: ShareBit,
) -> Result<MaskedAdder, NetlistError> {
    let w = check_operands(x, y)?;
    let levels_n = ceil_log2(w);
    let mut tg = Tg { b, used: 0 };

    let p: Vec<ShareBit> = (0..w).map(|i| x.bits[i].xor(tg.b, y.bits[i])).collect();
    let p5: Vec<ShareBit> = p.iter().map(|s| s.delay(tg.b, FA_LATENCY)).collect();

    let mut elems = Vec::with_capacity(w);
    for i in 0..w {
        let g = tg.and(x.bits[i], y.bits[i])?;
        let (g, lo) = if i == 0 {
            let h = tg.and(p[0], cin)?;
            (g.xor(tg.b, h).reg(tg.b), -1)
        } else {
            (g.reg(tg.b), i as i64)
        };
        elems.push(GroupGP {
            g,
            p: (i > 0).then_some(p5[i]),
            span: (i as i64, lo),
        });
    }
    let mut levels = vec![elems.clone()];

    for d in 0..levels_n {
        let span = 1usize << d;
        let mut next = Vec::with_capacity(w);
        for e in 0..w {
            let cur = elems[e];
            if e < span {
                next.push(GroupGP {
                    g: cur.g.delay(tg.b, FA_LATENCY),
                    ..cur
                });
                continue;
            }
            let lo = elems[e - span];
            let pe = cur.p.expect("incomplete group has a propagate");
            let m = tg.and(pe, lo.g)?;
            let g = cur.g.delay(tg.b, TRICHINA_LATENCY).xor(tg.b, m).reg(tg.b);
            let p = match lo.p {
                Some(pl) => Some(tg.and(pe, pl)?.reg(tg.b)),
                None => None,
            };
            next.push(GroupGP {
                g,
                p,
                span: (cur.span.0, lo.span.1),
            });
        }
        elems = next;
        levels.push(elems.clone());
    }

    let align = FA_LATENCY * (1 + levels_n);
    let cin_d = cin.delay(tg.b, align);
    let mut sum = Vec::with_capacity(w);
    for i in 0..w {
        let pd = p5[i].delay(tg.b, align - FA_LATENCY);
        let carry = if i == 0 { cin_d } else { elems[i - 1].g };
        sum.push(pd.xor(tg.b, carry).reg(tg.b));
    }
    let cout = elems[w - 1].g.reg(tg.b);
    let used = tg.used;
    Ok(MaskedAdder {
        a: x.clone(),
        b: y.clone(),
        cin,
        sum: ShareWord::new(sum),
        cout,
        latency: ksa_latency(w),
        random_bits: used,
        levels,
    })
}

/// Makes the adder compute `a - b` while `sub` is 1: inverts share 0 of the
/// b operand and of the carry-in.
pub fn attach_subtract_mode(
    b: &mut NetlistBuilder,
    y: &ShareWord,
    cin: ShareBit,
    sub: NetId,
) -> (ShareWord, ShareBit) {
    let bits = y
        .bits
        .iter()
        .map(|s| ShareBit::new(b.xor(s.share0, sub), s.share1))
        .collect();
    (
        ShareWord::new(bits),
        ShareBit::new(b.xor(cin.share0, sub), cin.share1),
    )
}

/// Builds the masked adder described by `spec`.
pub fn build_masked_adder(
    b: &mut NetlistBuilder,
    spec: &AdderSpec,
    x: &ShareWord,
    y: &ShareWord,
    cin: ShareBit,
) -> Result<MaskedAdder, NetlistError> {
    check_width(spec.width, x.width())?;
    let (y, cin) = match spec.sub_port {
        Some(sub) => attach_subtract_mode(b, y, cin, sub),
        None => (y.clone(), cin),
    };
    match spec.topology {
        AdderTopology::Rca => build_masked_rca(b, x, &y, cin, spec.pipelined),
        AdderTopology::Ksa => build_masked_ksa(b, x, &y, cin),
    }
}

/// Combinational unmasked adder of either topology.
pub fn build_unmasked_adder(
    b: &mut NetlistBuilder,
    spec: &AdderSpec,
    x: &[NetId],
    y: &[NetId],
    cin: NetId,
) -> Result<UnmaskedAdder, NetlistError> {
    check_width(x.len(), y.len())?;
    check_width(spec.width, x.len())?;
    let w = x.len();
    if w < 2 {
        return Err(NetlistError::WidthTooSmall(w));
    }
    let (y, cin) = match spec.sub_port {
        Some(sub) => (
            y.iter().map(|&n| b.xor(n, sub)).collect::<Vec<_>>(),
            b.xor(cin, sub),
        ),
        None => (y.to_vec(), cin),
    };
    let p: Vec<NetId> = (0..w).map(|i| b.xor(x[i], y[i])).collect();
    let g: Vec<NetId> = (0..w).map(|i| b.and(x[i], y[i])).collect();
    let mut carries = Vec::with_capacity(w + 1);
    carries.push(cin);
    match spec.topology {
        AdderTopology::Rca => {
            for i in 0..w {
                let t = b.and(p[i], carries[i]);
                let c = b.xor(g[i], t);
                carries.push(c);
            }
        }
        AdderTopology::Ksa => {
            let t = b.and(p[0], cin);
            let mut gg = g.clone();
            gg[0] = b.xor(g[0], t);
            let mut pp: Vec<Option<NetId>> = (0..w).map(|i| (i > 0).then_some(p[i])).collect();
            for d in 0..ceil_log2(w) {
                let span = 1usize << d;
                let (mut ng, mut np) = (gg.clone(), pp.clone());
                for e in span..w {
                    let pe = pp[e].expect("incomplete group has a propagate");
                    let m = b.and(pe, gg[e - span]);
                    ng[e] = b.xor(gg[e], m);
                    np[e] = pp[e - span].map(|pl| b.and(pe, pl));
                }
                gg = ng;
                pp = np;
            }
            carries.extend(gg);
        }
    }
    let sum = (0..w).map(|i| b.xor(p[i], carries[i])).collect();
    Ok(UnmaskedAdder {
        sum,
        cout: carries[w],
    })
}

/// A standalone masked adder netlist with share ports `a0 a1 b0 b1 c0 c1`,
/// optional `sub`, and outputs `s0 s1 co0 co1`.
pub fn adder_fragment(spec: &AdderSpec) -> Result<(Netlist, MaskedAdder), NetlistError> {
    let mut b = NetlistBuilder::new();
    let x = ShareWord::input(&mut b, "a", spec.width)?;
    let y = ShareWord::input(&mut b, "b", spec.width)?;
    let cin = ShareWord::input(&mut b, "c", 1)?.bits[0];
    let mut spec = *spec;
    if spec.sub_port.is_some() {
        spec.sub_port = Some(b.input_bit("sub")?);
    }
    let adder = build_masked_adder(&mut b, &spec, &x, &y, cin)?;
    b.output("s0", &adder.sum.share0());
    b.output("s1", &adder.sum.share1());
    b.output("co0", &[adder.cout.share0]);
    b.output("co1", &[adder.cout.share1]);
    Ok((b.finish()?, adder))
}

/// One streamed operation: `a + b + cin`, or `a - b` with `sub`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdderOp {
    pub a: u64,
    pub b: u64,
    pub cin: bool,
    pub sub: bool,
}

/// Streams `ops` through an [`adder_fragment`], one per cycle when
/// pipelined and one per `latency + 1` cycles otherwise, with random share
/// splits and randomness from `seed`. Returns recombined `(sum, cout)`.
pub fn stream_adder(
    nl: &Netlist,
    adder: &MaskedAdder,
    ops: &[AdderOp],
    pipelined: bool,
    seed: u64,
) -> Result<Vec<(u64, bool)>, NetlistError> {
    let w = adder.sum.width();
    let mask = if w >= 64 { u64::MAX } else { (1u64 << w) - 1 };
    let lat = adder.latency;
    let hold = if pipelined { 1 } else { lat + 1 };
    let total = ops.len() * hold + lat;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sim = SimState::new(nl, EvalMode::Functional);
    let has_sub = nl.input("sub").is_some();
    let (s0, s1) = (nl.output("s0").unwrap(), nl.output("s1").unwrap());
    let (c0, c1) = (nl.output("co0").unwrap()[0], nl.output("co1").unwrap()[0]);
    let mut out = Vec::with_capacity(ops.len());
    let mut randoms = vec![false; nl.random_nets().len()];
    let mut cur = [0u64; 7];
    for t in 0..total {
        if t % hold == 0 && t / hold < ops.len() {
            let op = ops[t / hold];
            let (ma, mb, mc) = (
                rng.random::<u64>() & mask,
                rng.random::<u64>() & mask,
                rng.random::<bool>(),
            );
            cur = [
                ma,
                (op.a & mask) ^ ma,
                mb,
                (op.b & mask) ^ mb,
                mc as u64,
                (op.cin ^ mc) as u64,
                op.sub as u64,
            ];
        }
        for r in randoms.iter_mut() {
            *r = rng.random();
        }
        let mut inputs = vec![
            ("a0", cur[0]),
            ("a1", cur[1]),
            ("b0", cur[2]),
            ("b1", cur[3]),
            ("c0", cur[4]),
            ("c1", cur[5]),
        ];
        if has_sub {
            inputs.push(("sub", cur[6]));
        }
        sim.step(&inputs, &randoms)?;
        if t >= lat && (t - lat).is_multiple_of(hold) && (t - lat) / hold < ops.len() {
            out.push((
                sim.word(s0) ^ sim.word(s1),
                sim.net_value(c0) ^ sim.net_value(c1),
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn add_op(a: u64, b: u64) -> AdderOp {
        AdderOp {
            a,
            b,
            cin: false,
            sub: false,
        }
    }

    fn run(spec: AdderSpec, ops: &[AdderOp], seed: u64) -> Vec<(u64, bool)> {
        let (nl, adder) = adder_fragment(&spec).unwrap();
        stream_adder(&nl, &adder, ops, spec.pipelined, seed).unwrap()
    }

    #[test]
    fn full_adder_exhaustive() {
        let mut b = NetlistBuilder::new();
        let x = ShareWord::input(&mut b, "x", 1).unwrap().bits[0];
        let y = ShareWord::input(&mut b, "y", 1).unwrap().bits[0];
        let c = ShareWord::input(&mut b, "c", 1).unwrap().bits[0];
        let r = [b.random(), b.random(), b.random()];
        let (s, co) = build_masked_full_adder(&mut b, x, y, c, r).unwrap();
        let nl = b.finish().unwrap();
        for v in 0..(1u64 << 9) {
            let bit = |i: u32| (v >> i) & 1;
            let mut sim = SimState::new(&nl, EvalMode::Functional);
            for _ in 0..=FA_LATENCY {
                sim.step(
                    &[
                        ("x0", bit(0)),
                        ("x1", bit(1)),
                        ("y0", bit(2)),
                        ("y1", bit(3)),
                        ("c0", bit(4)),
                        ("c1", bit(5)),
                    ],
                    &[bit(6) == 1, bit(7) == 1, bit(8) == 1],
                )
                .unwrap();
            }
            let (xv, yv, cv) = (bit(0) ^ bit(1), bit(2) ^ bit(3), bit(4) ^ bit(5));
            let total = xv + yv + cv;
            let got_s = sim.net_value(s.share0) ^ sim.net_value(s.share1);
            let got_c = sim.net_value(co.share0) ^ sim.net_value(co.share1);
            assert_eq!(
                (got_s as u64, got_c as u64),
                (total & 1, total >> 1),
                "case {v:09b}"
            );
        }
    }

    #[test]
    fn latency_formulas() {
        assert_eq!(rca_latency(20), 100);
        assert_eq!(ksa_latency(20), 31);
        assert_eq!(ksa_latency(12), 26);
        for w in 4..=32 {
            assert!(ksa_latency(w) < rca_latency(w));
        }
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(16), 4);
        assert_eq!(ceil_log2(17), 5);
    }

    #[test]
    fn width_below_two_rejected() {
        for topo in [AdderTopology::Rca, AdderTopology::Ksa] {
            assert_eq!(
                adder_fragment(&AdderSpec::new(1, topo)).err(),
                Some(NetlistError::WidthTooSmall(1))
            );
        }
    }

    #[test]
    fn ksa_examples() {
        let spec = AdderSpec::new(8, AdderTopology::Ksa);
        let got = run(
            spec,
            &[add_op(0x0F, 0x01), add_op(0xFF, 0x01), add_op(0, 0)],
            1,
        );
        assert_eq!(got, vec![(0x10, false), (0x00, true), (0, false)]);
    }

    #[test]
    fn ksa_random_budget_matches_netlist() {
        for w in [2, 4, 8, 12, 20] {
            let (nl, adder) = adder_fragment(&AdderSpec::new(w, AdderTopology::Ksa)).unwrap();
            assert_eq!(adder.random_bits, nl.random_nets().len());
            assert_eq!(
                AdderSpec::new(w, AdderTopology::Ksa).random_bits(),
                adder.random_bits
            );
            assert_eq!(adder.levels.len(), ceil_log2(w) + 1);
        }
        let (nl, _) = adder_fragment(&AdderSpec::new(8, AdderTopology::Rca)).unwrap();
        assert_eq!(nl.random_nets().len(), 24);
    }

    #[test]
    fn ksa_groups_match_oracle() {
        let w = 6;
        let (nl, adder) = adder_fragment(&AdderSpec::new(w, AdderTopology::Ksa)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let (a, bv, c) = (
                rng.random::<u64>() & 63,
                rng.random::<u64>() & 63,
                rng.random::<bool>(),
            );
            let mut sim = SimState::new(&nl, EvalMode::Functional);
            let (ma, mb) = (rng.random::<u64>() & 63, rng.random::<u64>() & 63);
            let mut randoms = vec![false; nl.random_nets().len()];
            for _ in 0..=adder.latency {
                randoms.iter_mut().for_each(|r| *r = rng.random());
                sim.step(
                    &[
                        ("a0", ma),
                        ("a1", a ^ ma),
                        ("b0", mb),
                        ("b1", bv ^ mb),
                        ("c0", 1),
                        ("c1", !c as u64),
                    ],
                    &randoms,
                )
                .unwrap();
            }
            let rec = |s: ShareBit| sim.net_value(s.share0) ^ sim.net_value(s.share1);
            for level in &adder.levels {
                for gp in level {
                    let (hi, lo) = gp.span;
                    // carry out of bit hi given carry zero into bit lo
                    // (or the real carry-in when lo = -1)
                    let from = lo.max(0) as u32;
                    let width = (hi - lo.max(0) + 1) as u32;
                    let m = (1u64 << width) - 1;
                    let (sa, sb) = ((a >> from) & m, (bv >> from) & m);
                    let cin = if lo < 0 { c as u64 } else { 0 };
                    let g = ((sa + sb + cin) >> width) & 1 == 1;
                    assert_eq!(rec(gp.g), g, "G span {:?}", gp.span);
                    match gp.p {
                        Some(p) => assert_eq!(rec(p), (sa ^ sb) == m, "P span {:?}", gp.span),
                        None => assert!(lo < 0),
                    }
                }
            }
        }
    }

    #[test]
    fn exhaustive_w4_both_topologies() {
        let mut ops = vec![];
        for a in 0..16 {
            for b in 0..16 {
                ops.push(add_op(a, b));
            }
        }
        for topo in [AdderTopology::Rca, AdderTopology::Ksa] {
            let got = run(AdderSpec::new(4, topo), &ops, 9);
            for (op, (s, c)) in ops.iter().zip(got) {
                let t = op.a + op.b;
                assert_eq!((s, c), (t & 15, t >> 4 == 1), "{topo:?} {op:?}");
            }
        }
    }

    #[test]
    fn rca_random_w8_and_carry_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ops: Vec<AdderOp> = (0..1000)
            .map(|_| AdderOp {
                a: rng.random::<u64>() & 255,
                b: rng.random::<u64>() & 255,
                cin: rng.random(),
                sub: false,
            })
            .collect();
        for topo in [AdderTopology::Rca, AdderTopology::Ksa] {
            let got = run(AdderSpec::new(8, topo), &ops, 4);
            for (op, (s, c)) in ops.iter().zip(got) {
                let t = op.a + op.b + op.cin as u64;
                assert_eq!((s, c), (t & 255, t >> 8 == 1));
            }
        }
    }

    #[test]
    fn non_pipelined_rca_matches() {
        let mut spec = AdderSpec::new(5, AdderTopology::Rca);
        spec.pipelined = false;
        let ops: Vec<AdderOp> = (0..32).map(|i| add_op(i, 31 - i / 2)).collect();
        for (op, (s, c)) in ops.iter().zip(run(spec, &ops, 2)) {
            let t = op.a + op.b;
            assert_eq!((s, c), (t & 31, t >> 5 == 1));
        }
    }

    #[test]
    fn subtract_mode() {
        for topo in [AdderTopology::Rca, AdderTopology::Ksa] {
            let mut spec = AdderSpec::new(20, topo);
            spec.sub_port = Some(NetId(0));
            let sub = |a, b| AdderOp {
                a,
                b,
                cin: false,
                sub: true,
            };
            let got = run(spec, &[sub(5, 3), sub(3, 5), add_op(5, 3)], 8);
            let m = (1u64 << 20) - 1;
            assert_eq!(got[0].0, 2);
            assert_eq!(got[1].0, (1 << 20) - 2);
            assert_eq!(got[1].0 >> 19, 1);
            assert_eq!(got[2].0 & m, 8);
        }
    }

    #[test]
    fn unmasked_adders_exhaustive() {
        for topo in [AdderTopology::Rca, AdderTopology::Ksa] {
            for w in [2usize, 3, 5] {
                let mut b = NetlistBuilder::new();
                let x = b.input_port("x", w).unwrap();
                let y = b.input_port("y", w).unwrap();
                let c = b.input_bit("c").unwrap();
                let add =
                    build_unmasked_adder(&mut b, &AdderSpec::new(w, topo), &x, &y, c).unwrap();
                let nl = b.finish().unwrap();
                for xv in 0..1u64 << w {
                    for yv in 0..1u64 << w {
                        for cv in 0..2 {
                            let mut sim = SimState::new(&nl, EvalMode::Functional);
                            sim.step(&[("x", xv), ("y", yv), ("c", cv)], &[]).unwrap();
                            let t = xv + yv + cv;
                            assert_eq!(sim.word(&add.sum), t & ((1 << w) - 1));
                            assert_eq!(sim.net_value(add.cout), t >> w == 1);
                        }
                    }
                }
            }
        }
    }
}
