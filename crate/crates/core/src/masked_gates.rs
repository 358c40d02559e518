//! Masked primitives over two Boolean shares.

use crate::netlist::{NetId, NetlistBuilder, NetlistError};

/// Latency of the synchronized Trichina AND gate.
pub const TRICHINA_LATENCY: usize = 4;

/// A bit split into two shares; its value is `share0 ^ share1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ShareBit {
    pub share0: NetId,
    pub share1: NetId,
}

impl ShareBit {
    pub fn new(share0: NetId, share1: NetId) -> Self {
        Self { share0, share1 }
    }

    /// A public constant as shares `(bit, 0)`.
    pub fn constant(b: &mut NetlistBuilder, bit: bool) -> Self {
        Self::new(b.constant(bit), b.constant(false))
    }

    pub fn xor(self, b: &mut NetlistBuilder, other: ShareBit) -> ShareBit {
        ShareBit::new(
            b.xor(self.share0, other.share0),
            b.xor(self.share1, other.share1),
        )
    }

    pub fn reg(self, b: &mut NetlistBuilder) -> ShareBit {
        ShareBit::new(b.reg(self.share0), b.reg(self.share1))
    }

    pub fn delay(self, b: &mut NetlistBuilder, cycles: usize) -> ShareBit {
        ShareBit::new(b.delay(self.share0, cycles), b.delay(self.share1, cycles))
    }

    /// Share-wise `select ? self : other` for a public select.
    pub fn mux_public(self, b: &mut NetlistBuilder, select: NetId, other: ShareBit) -> ShareBit {
        ShareBit::new(
            b.mux(select, self.share0, other.share0),
            b.mux(select, self.share1, other.share1),
        )
    }
}

/// A word of share pairs, LSB first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ShareWord {
    pub bits: Vec<ShareBit>,
}

impl ShareWord {
    pub fn new(bits: Vec<ShareBit>) -> Self {
        Self { bits }
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    /// Two input ports `{name}0` and `{name}1` carrying the shares.
    pub fn input(b: &mut NetlistBuilder, name: &str, width: usize) -> Result<Self, NetlistError> {
        let s0 = b.input_port(&format!("{name}0"), width)?;
        let s1 = b.input_port(&format!("{name}1"), width)?;
        Ok(Self::from_shares(&s0, &s1))
    }

    pub fn from_shares(s0: &[NetId], s1: &[NetId]) -> Self {
        Self::new(
            s0.iter()
                .zip(s1)
                .map(|(&x, &y)| ShareBit::new(x, y))
                .collect(),
        )
    }

    pub fn constant(b: &mut NetlistBuilder, value: u64, width: usize) -> Self {
        Self::new(
            (0..width)
                .map(|i| ShareBit::constant(b, i < 64 && (value >> i) & 1 == 1))
                .collect(),
        )
    }

    pub fn share0(&self) -> Vec<NetId> {
        self.bits.iter().map(|s| s.share0).collect()
    }

    pub fn share1(&self) -> Vec<NetId> {
        self.bits.iter().map(|s| s.share1).collect()
    }

    pub fn xor(
        &self,
        b: &mut NetlistBuilder,
        other: &ShareWord,
    ) -> Result<ShareWord, NetlistError> {
        check_width(self.width(), other.width())?;
        Ok(ShareWord::new(
            self.bits
                .iter()
                .zip(&other.bits)
                .map(|(x, y)| x.xor(b, *y))
                .collect(),
        ))
    }

    pub fn reg(&self, b: &mut NetlistBuilder) -> ShareWord {
        ShareWord::new(self.bits.iter().map(|x| x.reg(b)).collect())
    }

    pub fn delay(&self, b: &mut NetlistBuilder, cycles: usize) -> ShareWord {
        ShareWord::new(self.bits.iter().map(|x| x.delay(b, cycles)).collect())
    }

    pub fn mux_public(
        &self,
        b: &mut NetlistBuilder,
        select: NetId,
        other: &ShareWord,
    ) -> Result<ShareWord, NetlistError> {
        check_width(self.width(), other.width())?;
        Ok(ShareWord::new(
            self.bits
                .iter()
                .zip(&other.bits)
                .map(|(x, y)| x.mux_public(b, select, *y))
                .collect(),
        ))
    }
}

pub(crate) fn check_width(expected: usize, got: usize) -> Result<(), NetlistError> {
    if expected != got {
        return Err(NetlistError::WidthMismatch { expected, got });
    }
    Ok(())
}

struct Products {
    p11: NetId,
    p10: NetId,
    p01: NetId,
    p00: NetId,
}

fn partial_products(b: &mut NetlistBuilder, x: ShareBit, y: ShareBit) -> Products {
    Products {
        p11: b.and(x.share1, y.share1),
        p10: b.and(x.share1, y.share0),
        p01: b.and(x.share0, y.share1),
        p00: b.and(x.share0, y.share0),
    }
}

/// Trichina AND with a register in front of every XOR but the first; the
/// final XOR is registered too. Output shares are aligned after
/// [`TRICHINA_LATENCY`] cycles.
pub fn trichina_sync(
    b: &mut NetlistBuilder,
    x: ShareBit,
    y: ShareBit,
    r: NetId,
) -> Result<ShareBit, NetlistError> {
    b.claim_random(r)?;
    let p = partial_products(b, x, y);
    let x1 = b.xor(r, p.p11);
    let s1 = b.reg(x1);
    let q10 = b.reg(p.p10);
    let q01 = b.delay(p.p01, 2);
    let q00 = b.delay(p.p00, 3);
    let x2 = b.xor(s1, q10);
    let s2 = b.reg(x2);
    let x3 = b.xor(s2, q01);
    let s3 = b.reg(x3);
    let x4 = b.xor(s3, q00);
    let share1 = b.reg(x4);
    let share0 = b.delay(r, TRICHINA_LATENCY);
    Ok(ShareBit::new(share0, share1))
}

/// The same XOR chain without registers.
pub fn trichina_glitchy(
    b: &mut NetlistBuilder,
    x: ShareBit,
    y: ShareBit,
    r: NetId,
) -> Result<ShareBit, NetlistError> {
    b.claim_random(r)?;
    let p = partial_products(b, x, y);
    let x1 = b.xor(r, p.p11);
    let x2 = b.xor(x1, p.p10);
    let x3 = b.xor(x2, p.p01);
    let share1 = b.xor(x3, p.p00);
    Ok(ShareBit::new(r, share1))
}

/// A single 5-input table computing `share1 = x*y ^ r`, modeled by its
/// AND-XOR two-level form. The internal nets are hidden from settled
/// probing but still glitch.
pub fn trichina_lut(
    b: &mut NetlistBuilder,
    x: ShareBit,
    y: ShareBit,
    r: NetId,
) -> Result<ShareBit, NetlistError> {
    b.claim_random(r)?;
    let p = partial_products(b, x, y);
    let t1 = b.xor(p.p11, p.p10);
    let t0 = b.xor(p.p01, p.p00);
    let t = b.xor(t1, t0);
    let share1 = b.xor(t, r);
    b.mark_internal(&[p.p11, p.p10, p.p01, p.p00, t1, t0, t]);
    Ok(ShareBit::new(r, share1))
}

/// `w ? d : e` for public words `d`, `e` and a shared select `w`. AND with a
/// public value is linear, so each share is computed locally and refreshed
/// with `r`.
pub fn masked_mux_public(
    b: &mut NetlistBuilder,
    d: &[NetId],
    e: &[NetId],
    w: ShareBit,
    r: &[NetId],
) -> Result<ShareWord, NetlistError> {
    check_width(d.len(), e.len())?;
    check_width(d.len(), r.len())?;
    let mut bits = Vec::with_capacity(d.len());
    for i in 0..d.len() {
        b.claim_random(r[i])?;
        let de = b.xor(d[i], e[i]);
        let m0 = b.and(w.share0, de);
        let m1 = b.and(w.share1, de);
        let o0 = b.xor(e[i], m0);
        let o0 = b.xor(o0, r[i]);
        let o1 = b.xor(m1, r[i]);
        bits.push(ShareBit::new(o0, o1));
    }
    Ok(ShareWord::new(bits))
}

/// `s ? x : y` computed as `y ^ s*(x ^ y)` with one synchronized Trichina
/// gate per bit; latency [`TRICHINA_LATENCY`].
pub fn masked_mux_shared(
    b: &mut NetlistBuilder,
    s: ShareBit,
    x: &ShareWord,
    y: &ShareWord,
    fresh: &[NetId],
) -> Result<ShareWord, NetlistError> {
    check_width(x.width(), y.width())?;
    check_width(x.width(), fresh.len())?;
    let mut bits = Vec::with_capacity(x.width());
    for i in 0..x.width() {
        let diff = x.bits[i].xor(b, y.bits[i]);
        let t = trichina_sync(b, s, diff, fresh[i])?;
        let yd = y.bits[i].delay(b, TRICHINA_LATENCY);
        bits.push(yd.xor(b, t));
    }
    Ok(ShareWord::new(bits))
}

/// Inverts share 0 only.
pub fn masked_not(b: &mut NetlistBuilder, x: ShareBit) -> ShareBit {
    ShareBit::new(b.not(x.share0), x.share1)
}
