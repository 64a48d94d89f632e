use ndarray::{Array2, ArrayView1};

use crate::constellation::Constellation;
use crate::error::{invalid, Result};

/// Floor applied to probabilities before taking logs or renormalizing.
pub const PROB_FLOOR: f64 = 1e-30;

/// Per-slot probability vectors over a finite alphabet; rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPriorTable {
    probs: Array2<f64>,
}

impl SymbolPriorTable {
    pub fn uniform(slots: usize, size: usize) -> Self {
        Self { probs: Array2::from_elem((slots, size), 1.0 / size as f64) }
    }

    /// Point masses at `indices` (one per slot).
    pub fn point_masses(indices: &[usize], size: usize) -> Result<Self> {
        let mut probs = Array2::zeros((indices.len(), size));
        for (slot, &i) in indices.iter().enumerate() {
            if i >= size {
                return invalid(format!("symbol index {i} out of range for alphabet of size {size}"));
            }
            probs[(slot, i)] = 1.0;
        }
        Ok(Self { probs })
    }

    /// Floors entries at [`PROB_FLOOR`] and normalizes every row.
    pub fn from_unnormalized(mut probs: Array2<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return invalid("probabilities must be finite and nonnegative");
        }
        for mut row in probs.rows_mut() {
            row.mapv_inplace(|p| p.max(PROB_FLOOR));
            let s = row.sum();
            row /= s;
        }
        Ok(Self { probs })
    }

    /// Normalizes rows of log-probabilities with a max shift.
    pub fn from_log(mut logp: Array2<f64>) -> Result<Self> {
        for mut row in logp.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            if !m.is_finite() {
                row.fill(0.0);
            } else {
                row.mapv_inplace(|l| (l - m).exp());
            }
        }
        Self::from_unnormalized(logp)
    }

    pub fn slots(&self) -> usize {
        self.probs.nrows()
    }

    pub fn size(&self) -> usize {
        self.probs.ncols()
    }

    pub fn row(&self, slot: usize) -> ArrayView1<'_, f64> {
        self.probs.row(slot)
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn max_normalization_error(&self) -> f64 {
        self.probs.rows().into_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn argmax(&self, slot: usize) -> usize {
        let row = self.probs.row(slot);
        (0..row.len()).fold(0, |best, i| if row[i] > row[best] { i } else { best })
    }
}

pub fn uniform_priors(slots: usize, constellation: &Constellation) -> SymbolPriorTable {
    SymbolPriorTable::uniform(slots, constellation.len())
}

/// Exact bit marginalization; output is slot-major, MSB first within a slot.
pub fn symbols_to_bit_llrs(table: &SymbolPriorTable, constellation: &Constellation) -> Result<Vec<f64>> {
    if table.size() != constellation.len() {
        return invalid(format!("table over {} symbols, constellation has {}", table.size(), constellation.len()));
    }
    let bps = constellation.bits_per_symbol();
    let mut out = Vec::with_capacity(table.slots() * bps);
    for row in table.probs.rows() {
        for b in 0..bps {
            let (mut p0, mut p1) = (0.0, 0.0);
            for (i, &p) in row.iter().enumerate() {
                if constellation.label_bit(i, b) == 0 {
                    p0 += p;
                } else {
                    p1 += p;
                }
            }
            out.push(p0.max(PROB_FLOOR).ln() - p1.max(PROB_FLOOR).ln());
        }
    }
    Ok(out)
}

/// `ln P(bit = value)` for an LLR, computed without overflow.
#[inline]
pub(crate) fn log_bit_prob(llr: f64, value: u8) -> f64 {
    let z = if value == 0 { -llr } else { llr };
    // -ln(1 + e^z)
    -(z.max(0.0) + (-z.abs()).exp().ln_1p())
}

/// Product-form symbol priors from independent bit LLRs.
pub fn bit_llrs_to_symbol_priors(llrs: &[f64], constellation: &Constellation) -> Result<SymbolPriorTable> {
    let bps = constellation.bits_per_symbol();
    if bps == 0 || !llrs.len().is_multiple_of(bps) {
        return invalid(format!("{} LLRs do not fill whole {bps}-bit symbols", llrs.len()));
    }
    let slots = llrs.len() / bps;
    let mut logp = Array2::zeros((slots, constellation.len()));
    for slot in 0..slots {
        let l = &llrs[slot * bps..(slot + 1) * bps];
        for i in 0..constellation.len() {
            logp[(slot, i)] = (0..bps).map(|b| log_bit_prob(l[b], constellation.label_bit(i, b))).sum();
        }
    }
    SymbolPriorTable::from_log(logp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{make_psk, make_qam};
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn bpsk_llr() {
        let bpsk = make_psk(2).unwrap();
        // index 0 is +1 and carries label 0
        let t = SymbolPriorTable::from_unnormalized(array![[0.9, 0.1]]).unwrap();
        let l = symbols_to_bit_llrs(&t, &bpsk).unwrap();
        assert!((l[0] - (0.9f64 / 0.1).ln()).abs() < 1e-12);
        assert!((l[0] - 2.197).abs() < 1e-3);
    }

    #[test]
    fn uniform_gives_zero_llrs() {
        let q = make_qam(16).unwrap();
        let l = symbols_to_bit_llrs(&uniform_priors(5, &q), &q).unwrap();
        assert!(l.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn uniform_priors_values() {
        let t = uniform_priors(3, &make_psk(2).unwrap());
        assert!(t.probs().iter().all(|&p| p == 0.5));
        assert!(t.max_normalization_error() < 1e-15);
        assert!(uniform_priors(2, &make_psk(4).unwrap()).probs().iter().all(|&p| p == 0.25));
    }

    #[test]
    fn zero_rows_are_floored() {
        let t = SymbolPriorTable::from_unnormalized(array![[0.0, 0.0]]).unwrap();
        assert_eq!(t.row(0).to_vec(), vec![0.5, 0.5]);
        assert!(SymbolPriorTable::from_unnormalized(array![[-1.0, 0.0]]).is_err());
    }

    #[test]
    fn extreme_llrs_stay_finite() {
        let bpsk = make_psk(2).unwrap();
        let t = bit_llrs_to_symbol_priors(&[1e4, -1e4], &bpsk).unwrap();
        assert!(t.probs().iter().all(|p| p.is_finite()));
        assert!(t.row(0)[0] > 0.999 && t.row(1)[1] > 0.999);
    }

    proptest! {
        #[test]
        fn qpsk_round_trip(l in proptest::collection::vec(-20.0f64..20.0, 2..40)) {
            let q = make_psk(4).unwrap();
            let l: Vec<f64> = l[..l.len() / 2 * 2].to_vec();
            let t = bit_llrs_to_symbol_priors(&l, &q).unwrap();
            prop_assert!(t.max_normalization_error() < 1e-9);
            let back = symbols_to_bit_llrs(&t, &q).unwrap();
            for (a, b) in l.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }
    }
}
