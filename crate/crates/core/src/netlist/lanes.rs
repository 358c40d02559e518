//! Lane-parallel bit words. Every net holds one bit per lane, so a single
//! pass over the netlist simulates `LANES` independent traces at once.

use std::fmt::Debug;
use std::ops::{BitAnd, BitAndAssign, BitOr, BitOrAssign, BitXor, BitXorAssign, Not};

pub trait Lanes:
    Copy
    + Default
    + PartialEq
    + Debug
    + Send
    + Sync
    + 'static
    + BitAnd<Output = Self>
    + BitOr<Output = Self>
    + BitXor<Output = Self>
    + Not<Output = Self>
    + BitAndAssign
    + BitOrAssign
    + BitXorAssign
{
    const LANES: usize;

    fn splat(bit: bool) -> Self;
    fn lane(&self, i: usize) -> bool;
    fn set_lane(&mut self, i: usize, bit: bool);
    fn any(&self) -> bool;
    fn count_ones(&self) -> u32;

    /// Calls `f` with the index of every lane whose bit is set.
    fn for_each_set(&self, mut f: impl FnMut(usize)) {
        for i in 0..Self::LANES {
            if self.lane(i) {
                f(i);
            }
        }
    }

    /// Word with the first `n` lanes set.
    fn first_lanes(n: usize) -> Self {
        let mut w = Self::default();
        for i in 0..n.min(Self::LANES) {
            w.set_lane(i, true);
        }
        w
    }
}

impl Lanes for bool {
    const LANES: usize = 1;

    #[inline]
    fn splat(bit: bool) -> Self {
        bit
    }
    #[inline]
    fn lane(&self, _i: usize) -> bool {
        *self
    }
    #[inline]
    fn set_lane(&mut self, _i: usize, bit: bool) {
        *self = bit;
    }
    #[inline]
    fn any(&self) -> bool {
        *self
    }
    #[inline]
    fn count_ones(&self) -> u32 {
        *self as u32
    }
}

impl Lanes for u64 {
    const LANES: usize = 64;

    #[inline]
    fn splat(bit: bool) -> Self {
        if bit {
            u64::MAX
        } else {
            0
        }
    }
    #[inline]
    fn lane(&self, i: usize) -> bool {
        (*self >> i) & 1 == 1
    }
    #[inline]
    fn set_lane(&mut self, i: usize, bit: bool) {
        *self = (*self & !(1u64 << i)) | ((bit as u64) << i);
    }
    #[inline]
    fn any(&self) -> bool {
        *self != 0
    }
    #[inline]
    fn count_ones(&self) -> u32 {
        u64::count_ones(*self)
    }
    #[inline]
    fn for_each_set(&self, mut f: impl FnMut(usize)) {
        let mut w = *self;
        while w != 0 {
            f(w.trailing_zeros() as usize);
            w &= w - 1;
        }
    }
}

const WORDS: usize = 4;

/// 256 lanes packed in four machine words.
#[derive(Clone, Copy, Default, PartialEq, Eq, Debug)]
#[repr(align(32))]
pub struct Lane256(pub [u64; WORDS]);

macro_rules! lane256_binop {
    ($tr:ident, $f:ident, $tra:ident, $fa:ident, $op:tt) => {
        impl $tr for Lane256 {
            type Output = Lane256;
            #[inline(always)]
            fn $f(self, rhs: Lane256) -> Lane256 {
                let mut out = [0u64; WORDS];
                for i in 0..WORDS {
                    out[i] = self.0[i] $op rhs.0[i];
                }
                Lane256(out)
            }
        }
        impl $tra for Lane256 {
            #[inline(always)]
            fn $fa(&mut self, rhs: Lane256) {
                for i in 0..WORDS {
                    self.0[i] = self.0[i] $op rhs.0[i];
                }
            }
        }
    };
}

lane256_binop!(BitAnd, bitand, BitAndAssign, bitand_assign, &);
lane256_binop!(BitOr, bitor, BitOrAssign, bitor_assign, |);
lane256_binop!(BitXor, bitxor, BitXorAssign, bitxor_assign, ^);

impl Not for Lane256 {
    type Output = Lane256;
    #[inline(always)]
    fn not(self) -> Lane256 {
        let mut out = [0u64; WORDS];
        for i in 0..WORDS {
            out[i] = !self.0[i];
        }
        Lane256(out)
    }
}

impl Lanes for Lane256 {
    const LANES: usize = 64 * WORDS;

    #[inline]
    fn splat(bit: bool) -> Self {
        Lane256([u64::splat(bit); WORDS])
    }
    #[inline]
    fn lane(&self, i: usize) -> bool {
        self.0[i / 64].lane(i % 64)
    }
    #[inline]
    fn set_lane(&mut self, i: usize, bit: bool) {
        self.0[i / 64].set_lane(i % 64, bit);
    }
    #[inline(always)]
    fn any(&self) -> bool {
        (self.0[0] | self.0[1] | self.0[2] | self.0[3]) != 0
    }
    #[inline]
    fn count_ones(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
    #[inline]
    fn for_each_set(&self, mut f: impl FnMut(usize)) {
        for (k, w) in self.0.iter().enumerate() {
            w.for_each_set(|i| f(k * 64 + i));
        }
    }
}

const PLANES: usize = 32;

/// Per-lane event counter stored as bit planes (a vertical binary counter).
/// Additions are carry-saved: each level keeps at most one pending word, and
/// two arrivals at a level fold into the plane with one full-adder step.
#[derive(Clone, Debug)]
pub struct LaneCounter<L: Lanes> {
    planes: [L; PLANES],
    pending: [L; PLANES],
    has_pending: u32,
    used: usize,
}

impl<L: Lanes> Default for LaneCounter<L> {
    fn default() -> Self {
        Self {
            planes: [L::default(); PLANES],
            pending: [L::default(); PLANES],
            has_pending: 0,
            used: 0,
        }
    }
}

impl<L: Lanes> LaneCounter<L> {
    /// Adds one to every lane set in `mask`.
    #[inline(always)]
    pub fn add(&mut self, mask: L) {
        let mut x = mask;
        let mut level = 0;
        loop {
            let bit = 1u32 << level;
            if self.has_pending & bit == 0 {
                self.pending[level] = x;
                self.has_pending |= bit;
                break;
            }
            self.has_pending &= !bit;
            let y = self.pending[level];
            let p = self.planes[level];
            self.planes[level] = p ^ x ^ y;
            x = (p & (x | y)) | (x & y);
            level += 1;
            if !x.any() {
                break;
            }
        }
        if level + 1 > self.used {
            self.used = level + 1;
        }
    }

    pub fn clear(&mut self) {
        for p in 0..self.used {
            self.planes[p] = L::default();
        }
        self.has_pending = 0;
        self.used = 0;
    }

    fn level_bit(&self, p: usize, lane: usize) -> u32 {
        let pend = self.has_pending >> p & 1 == 1 && self.pending[p].lane(lane);
        self.planes[p].lane(lane) as u32 + pend as u32
    }

    pub fn lane_count(&self, lane: usize) -> u32 {
        (0..self.used).map(|p| self.level_bit(p, lane) << p).sum()
    }

    /// Adds each lane's count into `out[lane]`.
    pub fn accumulate_into(&self, out: &mut [u32]) {
        for p in 0..self.used {
            let weight = 1u32 << p;
            let mut add = |lane: usize| {
                if lane < out.len() {
                    out[lane] += weight;
                }
            };
            self.planes[p].for_each_set(&mut add);
            if self.has_pending >> p & 1 == 1 {
                self.pending[p].for_each_set(&mut add);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lane256_roundtrip() {
        let mut w = Lane256::default();
        for i in [0, 63, 64, 129, 255] {
            w.set_lane(i, true);
        }
        assert_eq!(w.count_ones(), 5);
        let mut seen = vec![];
        w.for_each_set(|i| seen.push(i));
        assert_eq!(seen, vec![0, 63, 64, 129, 255]);
        assert!(!(w ^ w).any());
        assert_eq!((!Lane256::default()).count_ones(), 256);
    }

    #[test]
    fn counter_counts_per_lane() {
        let mut c = LaneCounter::<u64>::default();
        for k in 0..1024u64 {
            c.add(k & 0b1011);
        }
        let mut out = vec![0u32; 64];
        c.accumulate_into(&mut out);
        assert_eq!(out[0], 512);
        assert_eq!(out[1], 512);
        assert_eq!(out[2], 0);
        assert_eq!(out[3], 512);
        assert_eq!(c.lane_count(3), 512);
        c.clear();
        assert_eq!(c.lane_count(0), 0);
    }

    #[test]
    fn counter_matches_naive_on_wide_lanes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut c = LaneCounter::<Lane256>::default();
        let mut naive = vec![0u32; 256];
        for _ in 0..3000 {
            let mut m = Lane256::default();
            for lane in 0..256 {
                if rng.random_bool(0.3) {
                    m.set_lane(lane, true);
                    naive[lane] += 1;
                }
            }
            c.add(m);
        }
        let mut out = vec![0u32; 256];
        c.accumulate_into(&mut out);
        assert_eq!(out, naive);
        assert!((0..256).all(|l| c.lane_count(l) == naive[l]));
    }
}
