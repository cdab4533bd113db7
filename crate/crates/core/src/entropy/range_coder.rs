//! 32-bit range coder with 16-bit probability precision.
//!
//! Carry propagation follows the cache/carry scheme of the LZMA coder: `low`
//! is kept in 64 bits so a carry out of bit 32 can be pushed into bytes that
//! were already cached. The leading byte that scheme always emits as zero is
//! not written.

use super::CodingError;

pub const PROB_BITS: u32 = 16;
/// Total frequency of every model.
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;
const TOP: u32 = 1 << 24;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
    first: bool,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self { low: 0, range: u32::MAX, cache: 0, cache_size: 1, out: Vec::new(), first: true }
    }

    /// Codes the interval `[cum, cum + freq)` out of [`PROB_TOTAL`].
    pub fn encode(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && cum + freq <= PROB_TOTAL);
        let r = self.range >> PROB_BITS;
        self.low += r as u64 * cum as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Codes `bits` (at most 16) raw bits.
    pub fn encode_bits(&mut self, value: u32, bits: u32) {
        debug_assert!(bits <= PROB_BITS && value < (1 << bits));
        let shift = PROB_BITS - bits;
        self.encode(value << shift, 1 << shift);
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    fn push(&mut self, byte: u8) {
        if self.first {
            debug_assert_eq!(byte, 0);
            self.first = false;
        } else {
            self.out.push(byte);
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    input: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
    scale: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self, CodingError> {
        if input.len() < 4 {
            return Err(CodingError::Corrupt("coder stream shorter than 4 bytes".into()));
        }
        let code = u32::from_be_bytes([input[0], input[1], input[2], input[3]]);
        Ok(Self { input, pos: 4, code, range: u32::MAX, scale: 0 })
    }

    /// Cumulative-frequency target of the next symbol. Must be followed by
    /// [`RangeDecoder::consume`].
    pub fn target(&mut self) -> Result<u32, CodingError> {
        self.scale = self.range >> PROB_BITS;
        let t = self.code / self.scale;
        if t >= PROB_TOTAL {
            return Err(CodingError::Corrupt("code value outside the coding interval".into()));
        }
        Ok(t)
    }

    pub fn consume(&mut self, cum: u32, freq: u32) -> Result<(), CodingError> {
        self.code -= self.scale * cum;
        self.range = self.scale * freq;
        while self.range < TOP {
            let byte = *self
                .input
                .get(self.pos)
                .ok_or_else(|| CodingError::Corrupt("coder stream ended early".into()))?;
            self.pos += 1;
            self.code = (self.code << 8) | byte as u32;
            self.range <<= 8;
        }
        Ok(())
    }

    pub fn decode_bits(&mut self, bits: u32) -> Result<u32, CodingError> {
        let shift = PROB_BITS - bits;
        let v = self.target()? >> shift;
        self.consume(v << shift, 1 << shift)?;
        Ok(v)
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn is_exhausted(&self) -> bool {
        self.pos == self.input.len()
    }
}
