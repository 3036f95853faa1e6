//! Enumerated product spaces `Z^n` and dense subsets of them.
//!
//! A sequence `z = (z_0, ..., z_{n-1})` has index `sum_i z_i |Z|^i`, so the
//! symbol at position `i` is base-`|Z|` digit `i`.

use crate::error::{Error, Result};
use crate::probcore::Pmf;

/// Largest space that may be enumerated.
pub const MAX_ENUMERATED: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceSpace {
    q: usize,
    n: usize,
    total: usize,
}

impl SequenceSpace {
    pub fn new(alphabet_size: usize, n: usize) -> Result<Self> {
        if alphabet_size == 0 || n == 0 {
            return Err(Error::InvalidParameter(
                "sequence space needs alphabet size >= 1 and n >= 1".into(),
            ));
        }
        let total = checked_power(alphabet_size, n).filter(|&t| t <= MAX_ENUMERATED);
        match total {
            Some(total) => Ok(Self {
                q: alphabet_size,
                n,
                total,
            }),
            None => Err(Error::TooLarge {
                what: "sequence space enumeration",
                needed: (alphabet_size as u128).saturating_pow(n as u32),
                limit: MAX_ENUMERATED as u128,
            }),
        }
    }

    pub fn alphabet_size(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// `|Z|^i`, the index stride of position `i`.
    pub fn stride(&self, i: usize) -> usize {
        self.q.pow(i as u32)
    }

    pub fn digit(&self, index: usize, pos: usize) -> usize {
        (index / self.stride(pos)) % self.q
    }

    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            d.push(index % self.q);
            index /= self.q;
        }
        d
    }

    pub fn index_of(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.n || digits.iter().any(|&d| d >= self.q) {
            return Err(Error::InvalidParameter(format!(
                "sequence {digits:?} not in a length-{} space over {} symbols",
                self.n, self.q
            )));
        }
        Ok(digits.iter().rev().fold(0, |acc, &d| acc * self.q + d))
    }

    pub fn hamming(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        let mut d = 0;
        for _ in 0..self.n {
            if a % self.q != b % self.q {
                d += 1;
            }
            a /= self.q;
            b /= self.q;
        }
        d
    }

    /// Probability of every sequence under the i.i.d. law `pmf`.
    pub fn product_weights(&self, pmf: &Pmf) -> Result<Vec<f64>> {
        if pmf.len() != self.q {
            return Err(Error::AlphabetMismatch(format!(
                "pmf over {} symbols for a space over {}",
                pmf.len(),
                self.q
            )));
        }
        let factors: Vec<&[f64]> = vec![pmf.as_slice(); self.n];
        Ok(kronecker(&factors))
    }
}

fn checked_power(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// `out[sum_i z_i stride_i] = prod_i factors[i][z_i]`, position 0 least
/// significant.
pub(crate) fn kronecker(factors: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![1.0];
    for f in factors {
        let len = out.len();
        let mut next = vec![0.0; len * f.len()];
        for (d, &fd) in f.iter().enumerate() {
            let block = &mut next[d * len..(d + 1) * len];
            for (b, o) in block.iter_mut().zip(&out) {
                *b = o * fd;
            }
        }
        out = next;
    }
    out
}

/// Dense bitset over a [`SequenceSpace`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSet {
    space: SequenceSpace,
    words: Vec<u64>,
}

impl SequenceSet {
    pub fn empty(space: SequenceSpace) -> Self {
        Self {
            space,
            words: vec![0; space.total().div_ceil(64)],
        }
    }

    pub fn full(space: SequenceSpace) -> Self {
        let mut s = Self::empty(space);
        s.words.iter_mut().for_each(|w| *w = !0);
        s.trim();
        s
    }

    pub fn from_indices(space: SequenceSpace, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut s = Self::empty(space);
        for i in indices {
            if i >= space.total() {
                return Err(Error::InvalidParameter(format!(
                    "index {i} outside space of {} sequences",
                    space.total()
                )));
            }
            s.insert(i);
        }
        Ok(s)
    }

    pub fn from_predicate(space: SequenceSpace, mut keep: impl FnMut(usize) -> bool) -> Self {
        let mut s = Self::empty(space);
        for i in 0..space.total() {
            if keep(i) {
                s.insert(i);
            }
        }
        s
    }

    fn trim(&mut self) {
        let rem = self.space.total() % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn space(&self) -> SequenceSpace {
        self.space
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        self.words[i >> 6] |= 1 << (i & 63);
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.space.total()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn is_subset(&self, other: &SequenceSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn union(&self, other: &SequenceSet) -> SequenceSet {
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect();
        SequenceSet {
            space: self.space,
            words,
        }
    }

    /// Total weight of the members.
    pub fn measure(&self, weights: &[f64]) -> f64 {
        self.iter().map(|i| weights[i]).sum()
    }

    /// All sequences within Hamming distance 1 of a member.
    pub fn expand_once(&self) -> SequenceSet {
        if self.space.alphabet_size() == 2 {
            self.expand_binary()
        } else {
            self.expand_generic()
        }
    }

    fn expand_binary(&self) -> SequenceSet {
        const MASKS: [u64; 6] = [
            0x5555_5555_5555_5555,
            0x3333_3333_3333_3333,
            0x0F0F_0F0F_0F0F_0F0F,
            0x00FF_00FF_00FF_00FF,
            0x0000_FFFF_0000_FFFF,
            0x0000_0000_FFFF_FFFF,
        ];
        let mut out = self.words.clone();
        for i in 0..self.space.n() {
            let s = 1usize << i;
            if s < 64 {
                let m = MASKS[i];
                for (o, &w) in out.iter_mut().zip(&self.words) {
                    *o |= ((w & m) << s) | ((w >> s) & m);
                }
            } else {
                let ws = s / 64;
                for j in 0..self.words.len() {
                    if (j / ws).is_multiple_of(2) {
                        out[j] |= self.words[j + ws];
                        out[j + ws] |= self.words[j];
                    }
                }
            }
        }
        SequenceSet {
            space: self.space,
            words: out,
        }
    }

    fn expand_generic(&self) -> SequenceSet {
        let q = self.space.alphabet_size();
        let total = self.space.total();
        let mut out = self.clone();
        for i in 0..self.space.n() {
            let s = self.space.stride(i);
            let block = s * q;
            for base in (0..total).step_by(block) {
                for low in 0..s {
                    let first = base + low;
                    if (0..q).any(|d| self.contains(first + d * s)) {
                        for d in 0..q {
                            out.insert(first + d * s);
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trip() {
        let sp = SequenceSpace::new(3, 4).unwrap();
        assert_eq!(sp.total(), 81);
        for i in 0..sp.total() {
            assert_eq!(sp.index_of(&sp.digits(i)).unwrap(), i);
        }
        assert_eq!(sp.index_of(&[1, 0, 0, 0]).unwrap(), 1);
        assert_eq!(sp.digit(sp.index_of(&[0, 2, 1, 0]).unwrap(), 1), 2);
        assert!(sp.index_of(&[3, 0, 0, 0]).is_err());
    }

    #[test]
    fn refuses_oversized_spaces() {
        assert!(matches!(
            SequenceSpace::new(2, 29),
            Err(Error::TooLarge { .. })
        ));
        assert!(SequenceSpace::new(2, 28).is_ok());
        assert!(SequenceSpace::new(usize::MAX, 3).is_err());
    }

    #[test]
    fn product_weights_sum_to_one() {
        let sp = SequenceSpace::new(3, 5).unwrap();
        let w = sp.product_weights(&Pmf::new(vec![0.2, 0.3, 0.5]).unwrap()).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let idx = sp.index_of(&[2, 0, 1, 1, 2]).unwrap();
        assert!((w[idx] - 0.5 * 0.2 * 0.3 * 0.3 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn full_and_iteration() {
        let sp = SequenceSpace::new(2, 3).unwrap();
        let f = SequenceSet::full(sp);
        assert_eq!(f.len(), 8);
        assert_eq!(f.iter().collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
        let s = SequenceSet::from_indices(sp, [1, 6]).unwrap();
        assert!(s.is_subset(&f));
        assert!(!f.is_subset(&s));
        assert!(SequenceSet::from_indices(sp, [8]).is_err());
    }

    #[test]
    fn binary_and_generic_expansion_agree() {
        for n in 1..=9 {
            let sp = SequenceSpace::new(2, n).unwrap();
            let s = SequenceSet::from_predicate(sp, |i| (i * 2654435761) % 7 == 0);
            assert_eq!(s.expand_binary(), s.expand_generic(), "n={n}");
        }
    }
}
