use rand::seq::SliceRandom;

use crate::error::{invalid, Result};
use crate::rng::RngStream;

/// Bit permutation: `interleave(x)[i] = x[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
}

impl Interleaver {
    pub fn identity(len: usize) -> Self {
        Self { perm: (0..len).collect() }
    }

    pub fn random(len: usize, rng: RngStream) -> Self {
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(&mut rng.rng());
        Self { perm }
    }

    pub fn from_permutation(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return invalid("interleaver permutation is not a bijection");
            }
        }
        Ok(Self { perm })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave<T: Copy>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check(x.len())?;
        Ok(self.perm.iter().map(|&p| x[p]).collect())
    }

    pub fn deinterleave<T: Copy + Default>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check(x.len())?;
        let mut out = vec![T::default(); x.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = x[i];
        }
        Ok(out)
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.perm.len() {
            return invalid(format!("interleaver length {} does not match input length {len}", self.perm.len()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_is_noop() {
        let x = [3, 1, 4, 1, 5];
        assert_eq!(Interleaver::identity(5).interleave(&x).unwrap(), x);
    }

    #[test]
    fn same_seed_same_permutation() {
        assert_eq!(Interleaver::random(100, RngStream::new(4, 4)), Interleaver::random(100, RngStream::new(4, 4)));
        assert_ne!(Interleaver::random(100, RngStream::new(4, 4)), Interleaver::random(100, RngStream::new(4, 5)));
    }

    #[test]
    fn length_mismatch() {
        assert!(Interleaver::identity(3).interleave(&[1, 2]).is_err());
        assert!(Interleaver::from_permutation(vec![0, 0]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(bits in proptest::collection::vec(0u8..2, 0..300), seed in any::<u64>()) {
            let il = Interleaver::random(bits.len(), RngStream::new(seed, 0));
            prop_assert_eq!(il.deinterleave(&il.interleave(&bits).unwrap()).unwrap(), bits);
        }
    }
}
