//! Canonical bit-level serialization, used for exposed-memory hashing and
//! per-robot memory accounting.
//!
//! The encoding is fixed-width: integers occupy exactly `width_for_max(max)`
//! bits for the largest value their field can take, options spend one tag
//! bit, and ID sets are a count followed by the member IDs in ascending
//! order. The same byte stream feeds both the bit counter and the trace
//! hash, so the accounting is reproducible byte for byte.

use serde::{Deserialize, Serialize};

/// Scenario dimensions that fix the canonical field widths: values bounded
/// by the node count use `width_for_max(n)` bits, robot IDs use
/// `width_for_max(max_id)`, and round counters use `width_for_max(horizon)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitDims {
    pub n: u32,
    pub max_id: u32,
    pub horizon: u32,
}

impl BitDims {
    pub fn id_width(&self) -> u32 {
        width_for_max(self.max_id as u64)
    }

    pub fn count_width(&self) -> u32 {
        width_for_max(self.n as u64)
    }

    pub fn round_width(&self) -> u32 {
        width_for_max(self.horizon as u64)
    }
}

/// Bits needed to store any value in `0..=max` (at least one).
pub fn width_for_max(max: u64) -> u32 {
    if max == 0 {
        1
    } else {
        64 - max.leading_zeros()
    }
}

/// Append-only bit stream. Bits are packed MSB-first into bytes.
#[derive(Debug, Default)]
pub struct BitWriter {
    buf: Vec<u8>,
    bit_len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Resets the stream for reuse, keeping the allocation.
    pub fn clear(&mut self) {
        self.buf.clear();
        self.bit_len = 0;
    }

    pub fn write_bool(&mut self, v: bool) {
        self.write_bits(v as u64, 1);
    }

    pub fn write_bits(&mut self, value: u64, width: u32) {
        debug_assert!(width >= 1 && width <= 64);
        debug_assert!(width == 64 || value < (1u64 << width), "value {value} overflows {width} bits");
        for i in (0..width).rev() {
            let bit = (value >> i) & 1;
            let offset = (self.bit_len % 8) as u8;
            if offset == 0 {
                self.buf.push(0);
            }
            if bit == 1 {
                *self.buf.last_mut().unwrap() |= 0x80 >> offset;
            }
            self.bit_len += 1;
        }
    }

    /// One tag bit, then the payload when present.
    pub fn write_option<T>(&mut self, value: Option<T>, mut payload: impl FnMut(&mut Self, T)) {
        match value {
            None => self.write_bool(false),
            Some(v) => {
                self.write_bool(true);
                payload(self, v);
            }
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    /// FNV-1a over the packed bytes plus the bit length, so streams that
    /// differ only by trailing zero padding hash differently.
    pub fn fnv1a64(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut step = |byte: u8| {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for &b in &self.buf {
            step(b);
        }
        for b in self.bit_len.to_le_bytes() {
            step(b);
        }
        h
    }

    /// Two independent FNV streams packed into 128 bits, for callers that
    /// want fingerprints rather than bucket hashes.
    pub fn fnv1a128(&self) -> u128 {
        let mut a: u64 = 0xcbf2_9ce4_8422_2325;
        let mut b: u64 = 0x6c62_272e_07bb_0142;
        let mut step = |byte: u8| {
            a = (a ^ byte as u64).wrapping_mul(0x0000_0100_0000_01b3);
            b = (b ^ byte as u64).wrapping_mul(0x0000_0100_0000_0197);
        };
        for &byte in &self.buf {
            step(byte);
        }
        for byte in self.bit_len.to_le_bytes() {
            step(byte);
        }
        ((a as u128) << 64) | b as u128
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_examples() {
        assert_eq!(width_for_max(0), 1);
        assert_eq!(width_for_max(1), 1);
        assert_eq!(width_for_max(2), 2);
        assert_eq!(width_for_max(15), 4);
        assert_eq!(width_for_max(16), 5);
        assert_eq!(width_for_max(1023), 10);
    }

    #[test]
    fn packs_msb_first() {
        let mut w = BitWriter::new();
        w.write_bits(0b101, 3);
        w.write_bits(0b1, 1);
        assert_eq!(w.bit_len(), 4);
        assert_eq!(w.fnv1a64(), {
            let mut v = BitWriter::new();
            v.write_bits(0b1011, 4);
            v.fnv1a64()
        });
    }

    #[test]
    fn trailing_padding_does_not_collide() {
        let mut a = BitWriter::new();
        a.write_bits(0b10, 2);
        let mut b = BitWriter::new();
        b.write_bits(0b100, 3);
        assert_ne!(a.fnv1a64(), b.fnv1a64());
    }
}
