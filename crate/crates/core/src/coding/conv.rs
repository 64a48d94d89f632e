use crate::error::{invalid, Result};

/// Feedforward convolutional code of rate 1/2 with zero-tail termination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvCode {
    /// Generator polynomials, MSB tap on the current input bit.
    pub generators: [u32; 2],
    pub constraint_length: usize,
}

impl ConvCode {
    /// Octal (171, 133), constraint length 7.
    pub fn standard() -> Self {
        Self { generators: [0o171, 0o133], constraint_length: 7 }
    }

    pub fn new(generators: [u32; 2], constraint_length: usize) -> Result<Self> {
        if !(2..=16).contains(&constraint_length) {
            return invalid(format!("unsupported constraint length {constraint_length}"));
        }
        if generators.iter().any(|&g| g == 0 || g >> constraint_length != 0) {
            return invalid("generator degree must be below the constraint length");
        }
        Ok(Self { generators, constraint_length })
    }

    pub fn memory(&self) -> usize {
        self.constraint_length - 1
    }

    pub fn num_states(&self) -> usize {
        1 << self.memory()
    }

    pub fn tail_len(&self) -> usize {
        self.memory()
    }

    pub fn coded_len(&self, info_len: usize) -> usize {
        2 * (info_len + self.tail_len())
    }

    /// Payload length fitting exactly into `coded_len` coded bits.
    pub fn info_len_for(&self, coded_len: usize) -> Result<usize> {
        if !coded_len.is_multiple_of(2) || coded_len < 2 * self.tail_len() {
            return invalid(format!("coded length {coded_len} incompatible with a rate-1/2 zero-tail code"));
        }
        Ok(coded_len / 2 - self.tail_len())
    }

    /// Output pair and next state for input `bit` in `state`. The state holds
    /// the previous `memory` inputs, most recent in the highest bit.
    #[inline]
    pub fn step(&self, state: usize, bit: u8) -> ([u8; 2], usize) {
        let reg = ((bit as u32) << self.memory()) | state as u32;
        let out = [
            ((reg & self.generators[0]).count_ones() & 1) as u8,
            ((reg & self.generators[1]).count_ones() & 1) as u8,
        ];
        (out, (reg >> 1) as usize)
    }

    /// Encodes `info` followed by `memory` zero flush bits; outputs are
    /// interleaved `[a0, b0, a1, b1, ...]`.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.is_empty() {
            return invalid("payload must be non-empty");
        }
        if info.iter().any(|&b| b > 1) {
            return invalid("payload bits must be 0 or 1");
        }
        let mut state = 0;
        let mut out = Vec::with_capacity(self.coded_len(info.len()));
        for &b in info.iter().chain(std::iter::repeat_n(&0u8, self.tail_len())) {
            let (o, next) = self.step(state, b);
            out.extend_from_slice(&o);
            state = next;
        }
        debug_assert_eq!(state, 0);
        Ok(out)
    }
}
