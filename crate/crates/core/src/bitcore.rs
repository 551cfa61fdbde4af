//! Packed ±1 linear algebra.
//!
//! A ±1 entry is one bit: `1` encodes +1 and `0` encodes −1, least
//! significant bit first within each word. Bits past the logical length are
//! always zero, so whole-word XOR + popcount needs no tail masking: padding
//! agrees with padding and contributes nothing to the disagreement count.

use std::fmt::Debug;
use std::ops::BitXor;

use crate::error::{Error, Result};

/// Machine word used as the packing unit.
pub trait Word: Copy + Eq + Debug + Default + Send + Sync + BitXor<Output = Self> + 'static {
    const BITS: usize;
    const ZERO: Self;

    fn count_ones(self) -> u32;
    fn bit(self, i: usize) -> bool;
    fn with_bit(self, i: usize, on: bool) -> Self;
    fn to_le_bytes_vec(self) -> Vec<u8>;
    fn from_le_slice(bytes: &[u8]) -> Self;
}

macro_rules! impl_word {
    ($($t:ty),*) => {$(
        impl Word for $t {
            const BITS: usize = <$t>::BITS as usize;
            const ZERO: Self = 0;

            #[inline(always)]
            fn count_ones(self) -> u32 {
                <$t>::count_ones(self)
            }

            #[inline(always)]
            fn bit(self, i: usize) -> bool {
                (self >> i) & 1 == 1
            }

            #[inline(always)]
            fn with_bit(self, i: usize, on: bool) -> Self {
                let mask: $t = 1 << i;
                if on { self | mask } else { self & !mask }
            }

            fn to_le_bytes_vec(self) -> Vec<u8> {
                self.to_le_bytes().to_vec()
            }

            fn from_le_slice(bytes: &[u8]) -> Self {
                let mut buf = [0u8; std::mem::size_of::<$t>()];
                buf.copy_from_slice(bytes);
                <$t>::from_le_bytes(buf)
            }
        }
    )*};
}

impl_word!(u8, u16, u32, u64, u128);

#[inline]
pub fn words_for<W: Word>(len: usize) -> usize {
    len.div_ceil(W::BITS)
}

/// A packed vector of ±1 entries.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BitVector<W: Word = u64> {
    len: usize,
    words: Vec<W>,
}

impl<W: Word> BitVector<W> {
    /// All entries −1.
    pub fn negative(len: usize) -> Self {
        Self { len, words: vec![W::ZERO; words_for::<W>(len)] }
    }

    /// Packs a sequence of ±1 integers.
    pub fn pack_signs(values: &[i32]) -> Result<Self> {
        let mut v = Self::negative(values.len());
        for (i, &x) in values.iter().enumerate() {
            match x {
                1 => v.set(i, true),
                -1 => {}
                other => return Err(Error::InvalidInput(format!("entry {i} is {other}, expected -1 or +1"))),
            }
        }
        Ok(v)
    }

    pub fn from_bools(bits: impl ExactSizeIterator<Item = bool>) -> Self {
        let mut v = Self::negative(bits.len());
        for (i, b) in bits.enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Wraps raw words, rejecting wrong word counts and nonzero padding.
    pub fn from_words(len: usize, words: Vec<W>) -> Result<Self> {
        if words.len() != words_for::<W>(len) {
            return Err(Error::Shape(format!("{} words cannot hold exactly {len} bits", words.len())));
        }
        if !padding_is_zero(len, &words) {
            return Err(Error::Validation("nonzero padding bits".into()));
        }
        Ok(Self { len, words })
    }

    pub fn unpack(&self) -> Vec<i32> {
        (0..self.len).map(|i| self.sign(i) as i32).collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[W] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "index {i} out of range for length {}", self.len);
        self.words[i / W::BITS].bit(i % W::BITS)
    }

    /// Entry `i` as ±1.
    #[inline]
    pub fn sign(&self, i: usize) -> i8 {
        if self.get(i) {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, positive: bool) {
        assert!(i < self.len, "index {i} out of range for length {}", self.len);
        let w = &mut self.words[i / W::BITS];
        *w = w.with_bit(i % W::BITS, positive);
    }

    pub fn count_positive(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

fn padding_is_zero<W: Word>(len: usize, words: &[W]) -> bool {
    let tail = len % W::BITS;
    if tail == 0 {
        return true;
    }
    let last = *words.last().expect("tail bits imply at least one word");
    (tail..W::BITS).all(|b| !last.bit(b))
}

/// Signed ±1 dot product of two packed slices holding `len` logical entries.
///
/// Equals `2·popcount(XNOR) − len`, computed as `len − 2·popcount(XOR)` since
/// zero padding never disagrees.
#[inline]
pub fn dot_words<W: Word>(a: &[W], b: &[W], len: usize) -> i32 {
    debug_assert_eq!(a.len(), b.len());
    let mut disagree = 0u32;
    for (&x, &y) in a.iter().zip(b) {
        disagree += (x ^ y).count_ones();
    }
    len as i32 - 2 * disagree as i32
}

pub fn xnor_popcount_dot<W: Word>(a: &BitVector<W>, w: &BitVector<W>) -> Result<i32> {
    if a.len != w.len {
        return Err(Error::Shape(format!("dot of lengths {} and {}", a.len, w.len)));
    }
    Ok(dot_words(&a.words, &w.words, a.len))
}

/// Sign with `sign(0) = +1`.
#[inline(always)]
pub fn sign_int(x: i64) -> i8 {
    if x < 0 {
        -1
    } else {
        1
    }
}

/// Clips a pre-activation to the symmetric range representable in `bits` bits.
#[inline]
pub fn clamp_preactivation(z: i32, bits: u32) -> i32 {
    debug_assert!(bits >= 2);
    let bound = if bits >= 32 { i32::MAX } else { (1i32 << (bits - 1)) - 1 };
    z.clamp(-bound, bound)
}

/// Row-major packed ±1 matrix; rows are stored back to back.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BitMatrix<W: Word = u64> {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<W>,
}

impl<W: Word> BitMatrix<W> {
    /// All entries −1.
    pub fn negative(rows: usize, cols: usize) -> Self {
        let stride = words_for::<W>(cols);
        Self { rows, cols, stride, data: vec![W::ZERO; rows * stride] }
    }

    pub fn from_rows(cols: usize, rows: &[BitVector<W>]) -> Result<Self> {
        let mut m = Self::negative(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!("row {i} has length {}, expected {cols}", r.len())));
            }
            m.row_words_mut(i).copy_from_slice(r.words());
        }
        Ok(m)
    }

    /// Builds a matrix from a ±1 predicate over `(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut positive: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::negative(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if positive(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Words per row.
    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }

    #[inline]
    pub fn row_words(&self, r: usize) -> &[W] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    #[inline]
    pub fn row_words_mut(&mut self, r: usize) -> &mut [W] {
        &mut self.data[r * self.stride..(r + 1) * self.stride]
    }

    pub fn row(&self, r: usize) -> BitVector<W> {
        BitVector { len: self.cols, words: self.row_words(r).to_vec() }
    }

    pub fn as_words(&self) -> &[W] {
        &self.data
    }

    pub(crate) fn words_mut(&mut self) -> &mut [W] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.stride + c / W::BITS].bit(c % W::BITS)
    }

    #[inline]
    pub fn sign(&self, r: usize, c: usize) -> i8 {
        if self.get(r, c) {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, positive: bool) {
        debug_assert!(r < self.rows && c < self.cols);
        let w = &mut self.data[r * self.stride + c / W::BITS];
        *w = w.with_bit(c % W::BITS, positive);
    }

    /// Gathers a subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.stride);
        for &i in idx {
            data.extend_from_slice(self.row_words(i));
        }
        Self { rows: idx.len(), cols: self.cols, stride: self.stride, data }
    }

    pub fn padding_is_zero(&self) -> bool {
        (0..self.rows).all(|r| padding_is_zero(self.cols, self.row_words(r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_is_lsb_first() {
        let v = BitVector::<u64>::pack_signs(&[1, -1, -1, 1]).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.words(), &[0b1001]);
    }

    #[test]
    fn pack_empty() {
        let v = BitVector::<u64>::pack_signs(&[]).unwrap();
        assert!(v.is_empty());
        assert!(v.words().is_empty());
    }

    #[test]
    fn pack_hundred_positive_pads_with_zeros() {
        let v = BitVector::<u64>::pack_signs(&[1; 100]).unwrap();
        assert_eq!(v.words(), &[0xFFFF_FFFF_FFFF_FFFF, 0x0000_000F_FFFF_FFFF]);
    }

    #[test]
    fn pack_rejects_non_sign() {
        assert!(matches!(BitVector::<u64>::pack_signs(&[1, 0, -1]), Err(Error::InvalidInput(_))));
        assert!(BitVector::<u64>::pack_signs(&[2]).is_err());
    }

    #[test]
    fn dot_examples() {
        let a = BitVector::<u64>::pack_signs(&[1; 64]).unwrap();
        assert_eq!(xnor_popcount_dot(&a, &a).unwrap(), 64);

        let a = BitVector::<u64>::pack_signs(&[1, 1, -1, -1]).unwrap();
        let w = BitVector::<u64>::pack_signs(&[1, -1, -1, 1]).unwrap();
        assert_eq!(xnor_popcount_dot(&a, &w).unwrap(), 0);
    }

    #[test]
    fn dot_length_mismatch() {
        let a = BitVector::<u64>::negative(3);
        let b = BitVector::<u64>::negative(4);
        assert!(matches!(xnor_popcount_dot(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn narrow_words_agree_with_u64() {
        let signs: Vec<i32> = (0..77).map(|i| if (i * 7) % 3 == 0 { 1 } else { -1 }).collect();
        let other: Vec<i32> = (0..77).map(|i| if i % 5 < 2 { 1 } else { -1 }).collect();
        let d64 = xnor_popcount_dot(
            &BitVector::<u64>::pack_signs(&signs).unwrap(),
            &BitVector::<u64>::pack_signs(&other).unwrap(),
        )
        .unwrap();
        let d8 = xnor_popcount_dot(
            &BitVector::<u8>::pack_signs(&signs).unwrap(),
            &BitVector::<u8>::pack_signs(&other).unwrap(),
        )
        .unwrap();
        let d32 = xnor_popcount_dot(
            &BitVector::<u32>::pack_signs(&signs).unwrap(),
            &BitVector::<u32>::pack_signs(&other).unwrap(),
        )
        .unwrap();
        assert_eq!(d64, d8);
        assert_eq!(d64, d32);
    }

    #[test]
    fn sign_zero_is_positive() {
        assert_eq!(sign_int(5), 1);
        assert_eq!(sign_int(-3), -1);
        assert_eq!(sign_int(0), 1);
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_preactivation(200, 8), 127);
        assert_eq!(clamp_preactivation(-50, 8), -50);
        assert_eq!(clamp_preactivation(-130, 8), -127);
        assert_eq!(clamp_preactivation(5, 2), 1);
    }

    #[test]
    fn from_words_rejects_dirty_padding() {
        assert!(BitVector::<u8>::from_words(3, vec![0b1000]).is_err());
        assert!(BitVector::<u8>::from_words(3, vec![0b101]).is_ok());
        assert!(BitVector::<u8>::from_words(9, vec![0]).is_err());
    }

    #[test]
    fn matrix_rows_roundtrip() {
        let m = BitMatrix::<u64>::from_fn(3, 70, |r, c| (r + c) % 3 == 0);
        assert!(m.padding_is_zero());
        let rows: Vec<_> = (0..3).map(|r| m.row(r)).collect();
        assert_eq!(BitMatrix::from_rows(70, &rows).unwrap(), m);
        assert_eq!(m.sign(1, 2), 1);
        assert_eq!(m.sign(1, 3), -1);
    }
}
