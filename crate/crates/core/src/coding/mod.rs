//! Channel coding for both streams: a feedforward rate-1/2 convolutional
//! code, random interleaving, exact log-MAP decoding, and conversion between
//! per-symbol probability tables and per-bit LLRs.
//!
//! LLRs are `ln P(bit = 0) / P(bit = 1)` throughout.

mod bcjr;
mod conv;
mod interleaver;
mod llr;

pub use bcjr::{bcjr_extrinsic, BcjrOutput};
pub use conv::ConvCode;
pub use interleaver::Interleaver;
pub use llr::{bit_llrs_to_symbol_priors, symbols_to_bit_llrs, uniform_priors, SymbolPriorTable, PROB_FLOOR};

use crate::constellation::Constellation;
use crate::error::{invalid, Result};
use crate::rng::RngStream;

/// One codeword mapped onto a fixed number of symbol slots, with its
/// interleaver. Bits are interleaved after encoding and then Gray-mapped,
/// `bits_per_symbol` consecutive bits per slot.
#[derive(Debug, Clone)]
pub struct CodedStream {
    pub code: ConvCode,
    pub interleaver: Interleaver,
    pub constellation: Constellation,
    pub slots: usize,
}

impl CodedStream {
    pub fn new(code: ConvCode, constellation: Constellation, slots: usize, rng: RngStream) -> Result<Self> {
        let coded = slots * constellation.bits_per_symbol();
        let info = code.info_len_for(coded)?;
        if info == 0 {
            return invalid(format!("{slots} symbol slots leave no room for payload bits"));
        }
        Ok(Self { interleaver: Interleaver::random(coded, rng), code, constellation, slots })
    }

    pub fn coded_len(&self) -> usize {
        self.slots * self.constellation.bits_per_symbol()
    }

    pub fn info_len(&self) -> usize {
        self.code.info_len_for(self.coded_len()).expect("validated at construction")
    }

    /// Encodes, interleaves and maps `info` bits to constellation indices.
    pub fn encode_to_indices(&self, info: &[u8]) -> Result<Vec<usize>> {
        if info.len() != self.info_len() {
            return invalid(format!("expected {} payload bits, got {}", self.info_len(), info.len()));
        }
        let coded = self.interleaver.interleave(&self.code.encode(info)?)?;
        let bps = self.constellation.bits_per_symbol();
        Ok(coded.chunks(bps).map(|b| self.constellation.index_of_bits(b)).collect())
    }

    /// One decoder activation: symbol likelihoods from the detector in,
    /// extrinsic symbol priors and payload LLRs out.
    pub fn decode(&self, likelihoods: &SymbolPriorTable) -> Result<(SymbolPriorTable, Vec<f64>)> {
        if likelihoods.slots() != self.slots {
            return invalid(format!("expected {} slots, got {}", self.slots, likelihoods.slots()));
        }
        let llrs = symbols_to_bit_llrs(likelihoods, &self.constellation)?;
        let out = bcjr_extrinsic(&self.interleaver.deinterleave(&llrs)?, &self.code)?;
        let ext = self.interleaver.interleave(&out.coded_extrinsic)?;
        Ok((bit_llrs_to_symbol_priors(&ext, &self.constellation)?, out.info_llr))
    }
}
