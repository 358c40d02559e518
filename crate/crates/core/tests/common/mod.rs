//! Independent reference models shared by the integration tests.

/// Bit-serial TRIVIUM over an explicit 288-bit state `s[0..288]`, where
/// `s[i]` is register bit `i + 1`. Key bit `i` sits in bit `i % 8` of byte
/// `i / 8`; the IV is laid out the same way.
pub struct TriviumOracle {
    s: [bool; 288],
}

impl TriviumOracle {
    pub fn new(key: &[u8; 10], iv: &[u8; 10]) -> Self {
        let bit = |bytes: &[u8; 10], i: usize| (bytes[i / 8] >> (i % 8)) & 1 == 1;
        let mut s = [false; 288];
        for i in 0..80 {
            s[i] = bit(key, i);
            s[93 + i] = bit(iv, i);
        }
        s[285] = true;
        s[286] = true;
        s[287] = true;
        let mut o = Self { s };
        for _ in 0..4 * 288 {
            o.round();
        }
        o
    }

    fn round(&mut self) -> bool {
        let s = &self.s;
        let mut t1 = s[65] ^ s[92];
        let mut t2 = s[161] ^ s[176];
        let mut t3 = s[242] ^ s[287];
        let z = t1 ^ t2 ^ t3;
        t1 ^= (s[90] & s[91]) ^ s[170];
        t2 ^= (s[174] & s[175]) ^ s[263];
        t3 ^= (s[285] & s[286]) ^ s[68];
        let s = &mut self.s;
        s.copy_within(0..92, 1);
        s[0] = t3;
        s.copy_within(93..176, 94);
        s[93] = t1;
        s.copy_within(177..287, 178);
        s[177] = t2;
        z
    }

    pub fn bits(&mut self, n: usize) -> Vec<bool> {
        (0..n).map(|_| self.round()).collect()
    }

    /// Keystream bytes, bit 0 of each byte first.
    pub fn bytes(&mut self, n: usize) -> Vec<u8> {
        (0..n)
            .map(|_| (0..8).fold(0u8, |acc, b| acc | ((self.round() as u8) << b)))
            .collect()
    }
}

/// The (key, IV) pairs checked against the oracle.
pub const TRIVIUM_PAIRS: [([u8; 10], [u8; 10]); 4] = [
    ([0; 10], [0; 10]),
    ([0x80, 0, 0, 0, 0, 0, 0, 0, 0, 0], [0; 10]),
    ([0; 10], [0, 0, 0, 0, 0, 0, 0, 0, 0, 0x01]),
    (
        [0x0f, 0x62, 0xb5, 0x08, 0x5b, 0xae, 0x01, 0x54, 0xa7, 0xfa],
        [0x28, 0x8f, 0xf6, 0x5d, 0xc4, 0x2b, 0x92, 0xf9, 0x60, 0xc7],
    ),
];

/// First keystream bytes for the all-zero key and IV.
pub const TRIVIUM_ZERO_VECTOR: &str = "fbe0bf265859051b517a2e4e239fc97f";
