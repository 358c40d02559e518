//! TRIVIUM keystream generator, scalar and lane-parallel.
//!
//! Bit conventions: key bit `i` is bit `i % 8` of byte `i / 8` and loads
//! state bit `s(i+1)`; the IV loads `s94..s173` the same way. Keystream
//! bits pack into bytes least significant bit first.

use crate::netlist::Lanes;
use thiserror::Error;

pub const KEY_BYTES: usize = 10;
pub const IV_BYTES: usize = 10;
pub type Key = [u8; KEY_BYTES];
pub type Iv = [u8; IV_BYTES];

const WARMUP: usize = 4 * 288;
const NA: usize = 93;
const NB: usize = 84;
const NC: usize = 111;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PrngError {
    #[error("keystream output space exhausted; re-seed required")]
    OutputSpaceExhausted,
}

/// Where mask bits come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrngMode {
    Trivium,
    /// Every mask bit is zero, which disables masking.
    Zero,
}

struct Ring<L, const N: usize> {
    buf: [L; N],
    head: usize,
}

impl<L: Lanes, const N: usize> Ring<L, N> {
    fn new() -> Self {
        Self {
            buf: [L::default(); N],
            head: 0,
        }
    }

    /// Element `k` counted from the input end.
    #[inline(always)]
    fn at(&self, k: usize) -> L {
        let mut i = self.head + k;
        if i >= N {
            i -= N;
        }
        self.buf[i]
    }

    #[inline(always)]
    fn push(&mut self, v: L) {
        self.head = if self.head == 0 { N - 1 } else { self.head - 1 };
        self.buf[self.head] = v;
    }
}

/// TRIVIUM with one independent instance per lane.
pub struct LaneTrivium<L: Lanes> {
    a: Ring<L, NA>,
    b: Ring<L, NB>,
    c: Ring<L, NC>,
}

fn bit(bytes: &[u8], i: usize) -> bool {
    (bytes[i / 8] >> (i % 8)) & 1 == 1
}

impl<L: Lanes> LaneTrivium<L> {
    /// One (key, iv) pair per lane; lanes past `seeds.len()` run with zero
    /// key and IV.
    pub fn new(seeds: &[(Key, Iv)]) -> Self {
        assert!(seeds.len() <= L::LANES, "more seeds than lanes");
        let mut t = Self {
            a: Ring::new(),
            b: Ring::new(),
            c: Ring::new(),
        };
        for (lane, (key, iv)) in seeds.iter().enumerate() {
            for i in 0..80 {
                t.a.buf[i].set_lane(lane, bit(key, i));
                t.b.buf[i].set_lane(lane, bit(iv, i));
            }
        }
        for k in NC - 3..NC {
            t.c.buf[k] = L::splat(true);
        }
        for _ in 0..WARMUP {
            t.clock();
        }
        t
    }

    /// The same (key, iv) in every lane.
    pub fn splat(key: &Key, iv: &Iv) -> Self {
        Self::new(&vec![(*key, *iv); L::LANES])
    }

    #[inline(always)]
    fn clock(&mut self) -> L {
        let (a, b, c) = (&self.a, &self.b, &self.c);
        let mut t1 = a.at(65) ^ a.at(92);
        let mut t2 = b.at(68) ^ b.at(83);
        let mut t3 = c.at(65) ^ c.at(110);
        let z = t1 ^ t2 ^ t3;
        t1 ^= (a.at(90) & a.at(91)) ^ b.at(77);
        t2 ^= (b.at(81) & b.at(82)) ^ c.at(86);
        t3 ^= (c.at(108) & c.at(109)) ^ a.at(68);
        self.a.push(t3);
        self.b.push(t1);
        self.c.push(t2);
        z
    }

    /// Next keystream bit of every lane.
    #[inline]
    pub fn next(&mut self) -> L {
        self.clock()
    }

    pub fn fill(&mut self, out: &mut [L]) {
        for o in out {
            *o = self.clock();
        }
    }
}

/// Single TRIVIUM instance with an output counter.
pub struct TriviumState {
    core: LaneTrivium<bool>,
    emitted: u64,
}

impl TriviumState {
    pub fn new(key: &Key, iv: &Iv) -> Self {
        Self {
            core: LaneTrivium::new(&[(*key, *iv)]),
            emitted: 0,
        }
    }

    /// Keystream bits emitted so far.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    fn reserve(&mut self, n: u64) -> Result<(), PrngError> {
        match self.emitted.checked_add(n) {
            Some(total) if total < u64::MAX => {
                self.emitted = total;
                Ok(())
            }
            _ => Err(PrngError::OutputSpaceExhausted),
        }
    }

    pub fn next_bit(&mut self) -> Result<bool, PrngError> {
        self.reserve(1)?;
        Ok(self.core.next())
    }

    pub fn next_bits(&mut self, n: usize) -> Result<Vec<bool>, PrngError> {
        self.reserve(n as u64)?;
        Ok((0..n).map(|_| self.core.next()).collect())
    }

    /// `n ≤ 64` bits, first bit in the least significant position.
    pub fn next_word(&mut self, n: usize) -> Result<u64, PrngError> {
        assert!(n <= 64);
        self.reserve(n as u64)?;
        Ok((0..n).fold(0u64, |w, i| w | (self.core.next() as u64) << i))
    }

    pub fn next_u32(&mut self) -> Result<u32, PrngError> {
        Ok(self.next_word(32)? as u32)
    }

    pub fn fill_bytes(&mut self, out: &mut [u8]) -> Result<(), PrngError> {
        self.reserve(8 * out.len() as u64)?;
        for byte in out {
            *byte = (0..8).fold(0u8, |w, i| w | (self.core.next() as u8) << i);
        }
        Ok(())
    }

    #[cfg(test)]
    fn set_emitted(&mut self, n: u64) {
        self.emitted = n;
    }
}

/// Initializes TRIVIUM and runs the 1152 warm-up rounds.
pub fn trivium_init(key: &Key, iv: &Iv) -> TriviumState {
    TriviumState::new(key, iv)
}

pub fn trivium_next(state: &mut TriviumState, n: usize) -> Result<Vec<bool>, PrngError> {
    state.next_bits(n)
}

/// `base + index` as a little-endian 80-bit integer, wrapping.
pub fn iv_for_trace(base: &Iv, index: u64) -> Iv {
    let mut out = *base;
    let mut carry = index as u128;
    for byte in out.iter_mut() {
        let v = *byte as u128 + (carry & 0xFF);
        *byte = v as u8;
        carry = (carry >> 8) + (v >> 8);
    }
    out
}
