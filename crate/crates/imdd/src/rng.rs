//! Pseudo-random generators for data generation.
//!
//! Training and test message streams must come from different generator
//! families so that the receiver cannot learn construction rules of the
//! training sequence: a Mersenne twister produces training data and a
//! three-component Tausworthe generator produces test data. Both are
//! implemented here so the streams are stable across platforms and
//! library versions. Channel noise uses ChaCha ([`rand_chacha`]), a
//! third, unrelated family.

use rand::{Error as RandError, RngCore, SeedableRng};

/// Generator family for message streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RngFamily {
    MersenneTwister,
    Tausworthe,
}

impl std::str::FromStr for RngFamily {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "mersenne_twister" | "mt19937" => Ok(RngFamily::MersenneTwister),
            "tausworthe" | "taus88" => Ok(RngFamily::Tausworthe),
            other => Err(crate::Error::config(format!("unknown rng family `{other}`"))),
        }
    }
}

/// Either message generator behind one concrete type.
#[derive(Debug, Clone)]
pub enum MessageRng {
    Mt(Mt19937),
    Taus(Taus88),
}

impl MessageRng {
    pub fn new(family: RngFamily, seed: u64) -> Self {
        match family {
            RngFamily::MersenneTwister => MessageRng::Mt(Mt19937::seed_u32(seed as u32)),
            RngFamily::Tausworthe => MessageRng::Taus(Taus88::seed_u64(seed)),
        }
    }

    /// Total numbers drawn so far, used to assert stream disjointness.
    pub fn draws(&self) -> u64 {
        match self {
            MessageRng::Mt(r) => r.draws,
            MessageRng::Taus(r) => r.draws,
        }
    }
}

impl RngCore for MessageRng {
    fn next_u32(&mut self) -> u32 {
        match self {
            MessageRng::Mt(r) => r.next_u32(),
            MessageRng::Taus(r) => r.next_u32(),
        }
    }

    fn next_u64(&mut self) -> u64 {
        match self {
            MessageRng::Mt(r) => r.next_u64(),
            MessageRng::Taus(r) => r.next_u64(),
        }
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        rand_core_fill(self, dest);
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.fill_bytes(dest);
        Ok(())
    }
}

const MT_N: usize = 624;
const MT_M: usize = 397;

/// Classic 32-bit Mersenne twister (MT19937).
#[derive(Clone)]
pub struct Mt19937 {
    state: [u32; MT_N],
    index: usize,
    draws: u64,
}

impl std::fmt::Debug for Mt19937 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mt19937").field("index", &self.index).field("draws", &self.draws).finish()
    }
}

impl Mt19937 {
    pub fn seed_u32(seed: u32) -> Self {
        let mut state = [0u32; MT_N];
        state[0] = seed;
        for i in 1..MT_N {
            state[i] = 1812433253u32
                .wrapping_mul(state[i - 1] ^ (state[i - 1] >> 30))
                .wrapping_add(i as u32);
        }
        Mt19937 { state, index: MT_N, draws: 0 }
    }

    /// Numbers drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    fn twist(&mut self) {
        for i in 0..MT_N {
            let y = (self.state[i] & 0x8000_0000) | (self.state[(i + 1) % MT_N] & 0x7fff_ffff);
            let mut next = self.state[(i + MT_M) % MT_N] ^ (y >> 1);
            if y & 1 != 0 {
                next ^= 0x9908_b0df;
            }
            self.state[i] = next;
        }
        self.index = 0;
    }
}

impl RngCore for Mt19937 {
    fn next_u32(&mut self) -> u32 {
        if self.index >= MT_N {
            self.twist();
        }
        let mut y = self.state[self.index];
        self.index += 1;
        self.draws += 1;
        y ^= y >> 11;
        y ^= (y << 7) & 0x9d2c_5680;
        y ^= (y << 15) & 0xefc6_0000;
        y ^= y >> 18;
        y
    }

    fn next_u64(&mut self) -> u64 {
        let lo = self.next_u32() as u64;
        let hi = self.next_u32() as u64;
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        rand_core_fill(self, dest);
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.fill_bytes(dest);
        Ok(())
    }
}

/// Three-component combined Tausworthe generator (taus88).
#[derive(Debug, Clone)]
pub struct Taus88 {
    s1: u32,
    s2: u32,
    s3: u32,
    draws: u64,
}

impl Taus88 {
    /// Seeds the three components from a 64-bit seed via splitmix64,
    /// respecting the minimum-value constraints of the recurrences.
    pub fn seed_u64(seed: u64) -> Self {
        let mut sm = seed;
        let mut next = || {
            sm = sm.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = sm;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            (z ^ (z >> 31)) as u32
        };
        // s1 >= 2, s2 >= 8, s3 >= 16 keep the LFSR components non-degenerate.
        let s1 = next() | 2;
        let s2 = next() | 8;
        let s3 = next() | 16;
        Taus88 { s1, s2, s3, draws: 0 }
    }

    /// Seeds the raw component states directly (for known-answer tests).
    pub fn from_components(s1: u32, s2: u32, s3: u32) -> Self {
        assert!(s1 >= 2 && s2 >= 8 && s3 >= 16, "degenerate taus88 seed");
        Taus88 { s1, s2, s3, draws: 0 }
    }

    /// Numbers drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }
}

impl RngCore for Taus88 {
    fn next_u32(&mut self) -> u32 {
        let b = ((self.s1 << 13) ^ self.s1) >> 19;
        self.s1 = ((self.s1 & 0xffff_fffe) << 12) ^ b;
        let b = ((self.s2 << 2) ^ self.s2) >> 25;
        self.s2 = ((self.s2 & 0xffff_fff8) << 4) ^ b;
        let b = ((self.s3 << 3) ^ self.s3) >> 11;
        self.s3 = ((self.s3 & 0xffff_fff0) << 17) ^ b;
        self.draws += 1;
        self.s1 ^ self.s2 ^ self.s3
    }

    fn next_u64(&mut self) -> u64 {
        let lo = self.next_u32() as u64;
        let hi = self.next_u32() as u64;
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        rand_core_fill(self, dest);
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.fill_bytes(dest);
        Ok(())
    }
}

fn rand_core_fill<R: RngCore>(rng: &mut R, dest: &mut [u8]) {
    let mut chunks = dest.chunks_exact_mut(4);
    for chunk in &mut chunks {
        chunk.copy_from_slice(&rng.next_u32().to_le_bytes());
    }
    let rem = chunks.into_remainder();
    if !rem.is_empty() {
        let bytes = rng.next_u32().to_le_bytes();
        rem.copy_from_slice(&bytes[..rem.len()]);
    }
}

/// Derives an independent child seed from a master seed and a stream
/// index (splitmix64 of the pair). Used to hand isolated RNGs to
/// parallel jobs without sharing mutable state.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ChaCha stream for channel noise, seeded per (master, stream) pair.
pub fn noise_rng(master: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
