//! Cost model of the supported block ciphers.
//!
//! Nothing here encrypts anything. Each key length maps to exactly one
//! algorithm; the model counts primitive operations per block (ECB mode, so
//! blocks are independent and the total is per-block cost times the block
//! count) and converts cycles to seconds with the processor clock.
//!
//! RSA's block size equals its key length, so with an `N^2` per-block cost the
//! per-bit cost grows linearly in `N`. That is modeled exactly as stated,
//! without any padding overhead.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::CryptoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    Des,
    Aes,
    Rsa,
}

/// A key length from the supported set. Other values cannot be constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct KeyLength(u32);

impl KeyLength {
    /// All supported key lengths, ascending. Index order is the key-head order.
    pub const ALL: [KeyLength; 8] = [
        KeyLength(64),
        KeyLength(128),
        KeyLength(192),
        KeyLength(256),
        KeyLength(1024),
        KeyLength(2048),
        KeyLength(3072),
        KeyLength(4096),
    ];

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|k| *k == self).expect("constructed keys are in ALL")
    }

    pub fn from_index(i: usize) -> Option<KeyLength> {
        Self::ALL.get(i).copied()
    }

    pub fn algorithm(self) -> Algorithm {
        match self.0 {
            64 => Algorithm::Des,
            128 | 192 | 256 => Algorithm::Aes,
            _ => Algorithm::Rsa,
        }
    }

    /// Smallest key whose security level meets `requirement`, if any.
    pub fn smallest_meeting(requirement: f64) -> Option<KeyLength> {
        Self::ALL.into_iter().find(|k| security_level(*k).0 >= requirement)
    }
}

impl TryFrom<u32> for KeyLength {
    type Error = CryptoError;

    fn try_from(bits: u32) -> Result<Self, Self::Error> {
        Self::ALL
            .into_iter()
            .find(|k| k.0 == bits)
            .ok_or(CryptoError::InvalidKeyLength(bits))
    }
}

impl From<KeyLength> for u32 {
    fn from(k: KeyLength) -> u32 {
        k.0
    }
}

impl fmt::Display for KeyLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Cycles needed by one AND, OR, shift and XOR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleCosts {
    pub and: f64,
    pub or: f64,
    pub shift: f64,
    pub xor: f64,
}

impl CycleCosts {
    pub const UNIT: CycleCosts = CycleCosts {
        and: 1.0,
        or: 1.0,
        shift: 1.0,
        xor: 1.0,
    };

    pub fn from_config(c: &crate::config::ScenarioConfig) -> Self {
        Self {
            and: c.cycles_and,
            or: c.cycles_or,
            shift: c.cycles_shift,
            xor: c.cycles_xor,
        }
    }
}

impl Default for CycleCosts {
    fn default() -> Self {
        Self::UNIT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Encrypt,
    Decrypt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CipherSuite {
    pub algorithm: Algorithm,
    pub key_length: KeyLength,
    pub block_size: u32,
    pub rounds: u32,
}

impl CipherSuite {
    pub fn new(key: KeyLength) -> Self {
        let (algorithm, block_size, rounds) = match key.bits() {
            64 => (Algorithm::Des, 64, 16),
            128 => (Algorithm::Aes, 128, 10),
            192 => (Algorithm::Aes, 128, 12),
            256 => (Algorithm::Aes, 128, 14),
            n => (Algorithm::Rsa, n, 1),
        };
        Self {
            algorithm,
            key_length: key,
            block_size,
            rounds,
        }
    }

    pub fn from_key_length(bits: u32) -> Result<Self, CryptoError> {
        KeyLength::try_from(bits).map(Self::new)
    }

    /// Cycles to process one block.
    pub fn complexity(&self, direction: Direction, costs: &CycleCosts) -> f64 {
        let r = self.rounds as f64;
        match self.algorithm {
            Algorithm::Des => 16.0 * costs.shift + r * (10.0 * costs.shift + 10.0 * costs.xor),
            Algorithm::Aes => {
                let round = match direction {
                    Direction::Encrypt => 184.0 * costs.and + 136.0 * costs.or + 352.0 * costs.shift,
                    Direction::Decrypt => 644.0 * costs.and + 500.0 * costs.or + 224.0 * costs.shift,
                };
                16.0 * costs.xor + (r - 1.0) * round + (16.0 * costs.xor + 12.0 * costs.shift + 12.0 * costs.or)
            }
            Algorithm::Rsa => {
                let n = self.key_length.bits() as f64;
                n * n
            }
        }
    }

    pub fn blocks(&self, data_bits: u64) -> u64 {
        data_bits.div_ceil(self.block_size as u64)
    }
}

/// Seconds a GU with `clock` Hz needs to encrypt `data_bits`.
pub fn encryption_latency(suite: &CipherSuite, data_bits: u64, clock: f64, costs: &CycleCosts) -> f64 {
    suite.complexity(Direction::Encrypt, costs) * suite.blocks(data_bits) as f64 / clock
}

/// Seconds an O-RU with `clock` Hz needs to decrypt `data_bits`.
pub fn decryption_latency(suite: &CipherSuite, data_bits: u64, clock: f64, costs: &CycleCosts) -> f64 {
    suite.complexity(Direction::Decrypt, costs) * suite.blocks(data_bits) as f64 / clock
}

/// log2 of the key length.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SecurityLevel(pub f64);

pub const SECURITY_MIN: f64 = 6.0;
pub const SECURITY_MAX: f64 = 12.0;

pub fn security_level(key: KeyLength) -> SecurityLevel {
    SecurityLevel((key.bits() as f64).log2())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn suite(bits: u32) -> CipherSuite {
        CipherSuite::from_key_length(bits).unwrap()
    }

    #[test]
    fn suites_from_key_lengths() {
        let des = suite(64);
        assert_eq!((des.algorithm, des.block_size, des.rounds), (Algorithm::Des, 64, 16));
        let aes = suite(192);
        assert_eq!((aes.algorithm, aes.block_size, aes.rounds), (Algorithm::Aes, 128, 12));
        assert_eq!(suite(128).rounds, 10);
        assert_eq!(suite(256).rounds, 14);
        let rsa = suite(3072);
        assert_eq!((rsa.algorithm, rsa.block_size), (Algorithm::Rsa, 3072));
        assert_eq!(CipherSuite::from_key_length(512), Err(CryptoError::InvalidKeyLength(512)));
    }

    #[test]
    fn unit_cost_complexities() {
        let u = CycleCosts::UNIT;
        assert_eq!(suite(1024).complexity(Direction::Encrypt, &u), 1_048_576.0);
        assert_eq!(suite(64).complexity(Direction::Encrypt, &u), 336.0);
        assert_eq!(suite(64).complexity(Direction::Decrypt, &u), 336.0);
        assert_eq!(suite(128).complexity(Direction::Encrypt, &u), 6104.0);
        assert_eq!(suite(128).complexity(Direction::Decrypt, &u), 12_368.0);
    }

    #[test]
    fn rsa_complexity_is_quadratic() {
        let u = CycleCosts::UNIT;
        for (a, b) in [(1024, 2048), (2048, 4096)] {
            let r = suite(b).complexity(Direction::Encrypt, &u) / suite(a).complexity(Direction::Encrypt, &u);
            assert_eq!(r, 4.0);
        }
    }

    #[test]
    fn des_latency_at_one_megabyte() {
        let t = encryption_latency(&suite(64), 8_388_608, 1.8e9, &CycleCosts::UNIT);
        assert!((t - 336.0 * 131_072.0 / 1.8e9).abs() < 1e-15);
        assert!((t - 0.024_466_773_333).abs() < 1e-9);
    }

    #[test]
    fn single_bit_is_one_block() {
        for k in KeyLength::ALL {
            let s = CipherSuite::new(k);
            let c = s.complexity(Direction::Encrypt, &CycleCosts::UNIT);
            assert_eq!(encryption_latency(&s, 1, 2e9, &CycleCosts::UNIT), c / 2e9);
        }
    }

    #[test]
    fn doubling_clock_halves_latency() {
        let s = suite(256);
        let a = encryption_latency(&s, 12_345_678, 1.9e9, &CycleCosts::UNIT);
        let b = encryption_latency(&s, 12_345_678, 3.8e9, &CycleCosts::UNIT);
        assert_eq!(a, 2.0 * b);
    }

    #[test]
    fn rsa_single_block_decrypt() {
        let t = decryption_latency(&suite(1024), 1024, 3.5e9, &CycleCosts::UNIT);
        assert!((t - 1_048_576.0 / 3.5e9).abs() < 1e-18);
        assert!((t - 2.996e-4).abs() < 1e-7);
    }

    #[test]
    fn aes_decrypt_costs_more_than_encrypt() {
        let s = suite(128);
        let e = encryption_latency(&s, 1 << 20, 3.5e9, &CycleCosts::UNIT);
        let d = decryption_latency(&s, 1 << 20, 3.5e9, &CycleCosts::UNIT);
        assert!(d > e);
        let des = suite(64);
        assert_eq!(
            encryption_latency(&des, 1 << 20, 3.5e9, &CycleCosts::UNIT),
            decryption_latency(&des, 1 << 20, 3.5e9, &CycleCosts::UNIT)
        );
    }

    #[test]
    fn security_levels() {
        let lv = |b: u32| security_level(KeyLength::try_from(b).unwrap()).0;
        assert_eq!(lv(64), 6.0);
        assert_eq!(lv(256), 8.0);
        assert_eq!(lv(4096), 12.0);
        for w in KeyLength::ALL.windows(2) {
            assert!(security_level(w[1]).0 > security_level(w[0]).0);
        }
        assert_eq!(KeyLength::smallest_meeting(6.0).unwrap().bits(), 64);
        assert_eq!(KeyLength::smallest_meeting(9.0).unwrap().bits(), 1024);
        assert_eq!(KeyLength::smallest_meeting(12.0).unwrap().bits(), 4096);
    }

    #[test]
    fn latency_steps_at_block_boundaries() {
        let s = suite(128);
        let step = s.complexity(Direction::Encrypt, &CycleCosts::UNIT) / 2e9;
        let mut prev = encryption_latency(&s, 1, 2e9, &CycleCosts::UNIT);
        for bits in 2..=1024u64 {
            let t = encryption_latency(&s, bits, 2e9, &CycleCosts::UNIT);
            assert!(t >= prev);
            if t > prev {
                assert!(((t - prev) - step).abs() < 1e-15);
                assert_eq!((bits - 1) % 128, 0);
            }
            prev = t;
        }
    }

    #[test]
    fn key_length_serde_rejects_unknown() {
        let k: KeyLength = serde_json::from_str("2048").unwrap();
        assert_eq!(k.bits(), 2048);
        assert!(serde_json::from_str::<KeyLength>("100").is_err());
    }
}
