//! Bit-packed square Boolean matrices and the Boolean-algebra kernels
//! (product, Kleene star closure, mutual reachability) used by the
//! structural analysis pipeline.

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

/// Square Boolean matrix with 64 columns packed per machine word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolMatrix {
    n: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BoolMatrix {
    pub fn zeros(n: usize) -> Self {
        let words_per_row = n.div_ceil(WORD_BITS).max(1);
        BoolMatrix {
            n,
            words_per_row,
            words: vec![0; n * words_per_row],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_entries(n: usize, entries: &[(usize, usize)]) -> Self {
        let mut m = Self::zeros(n);
        for &(i, j) in entries {
            m.set(i, j, true);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        let w = self.words[i * self.words_per_row + j / WORD_BITS];
        (w >> (j % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        debug_assert!(i < self.n && j < self.n);
        let idx = i * self.words_per_row + j / WORD_BITS;
        let bit = 1u64 << (j % WORD_BITS);
        if value {
            self.words[idx] |= bit;
        } else {
            self.words[idx] &= !bit;
        }
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    pub fn row_indices(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (w, &word) in self.row(i).iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                out.push(w * WORD_BITS + b);
                bits &= bits - 1;
            }
        }
        out
    }

    pub fn transpose(&self) -> BoolMatrix {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in self.row_indices(i) {
                t.set(j, i, true);
            }
        }
        t
    }

    pub fn or(&self, other: &BoolMatrix) -> Result<BoolMatrix> {
        self.check_same_order(other)?;
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(other.words.iter()) {
            *a |= b;
        }
        Ok(out)
    }

    pub fn and(&self, other: &BoolMatrix) -> Result<BoolMatrix> {
        self.check_same_order(other)?;
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(other.words.iter()) {
            *a &= b;
        }
        Ok(out)
    }

    /// Clears the diagonal (elementwise AND with the complement of I).
    pub fn and_not_identity(&self) -> BoolMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            out.set(i, i, false);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn check_same_order(&self, other: &BoolMatrix) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "boolean operands have orders {} and {}",
                self.n, other.n
            )));
        }
        Ok(())
    }
}

/// Boolean matrix product `c_ij = OR_k (a_ik AND b_kj)`.
///
/// Row-broadcast formulation: for every set bit `a_ik`, row `k` of `b`
/// is OR-ed into row `i` of the result, one word at a time.
pub fn boolean_product(a: &BoolMatrix, b: &BoolMatrix) -> Result<BoolMatrix> {
    a.check_same_order(b)?;
    let n = a.n;
    let wpr = a.words_per_row;
    let mut c = BoolMatrix::zeros(n);
    for i in 0..n {
        let a_row = &a.words[i * wpr..(i + 1) * wpr];
        for (w, &word) in a_row.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let k = w * WORD_BITS + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let b_row = &b.words[k * wpr..(k + 1) * wpr];
                let c_row = &mut c.words[i * wpr..(i + 1) * wpr];
                for (cw, bw) in c_row.iter_mut().zip(b_row.iter()) {
                    *cw |= bw;
                }
            }
        }
    }
    Ok(c)
}

/// Reflexive-transitive closure `M* = (M OR I)^(2^t)` with
/// `t = ceil(log2(max(n-1, 1)))` squarings (Kleene--Valiant).
///
/// A fixed-point early exit is taken when a squaring leaves the matrix
/// unchanged; this cannot alter the result.
pub fn star_closure(m: &BoolMatrix) -> Result<BoolMatrix> {
    let n = m.n;
    let mut a = m.or(&BoolMatrix::identity(n))?;
    if n <= 1 {
        return Ok(a);
    }
    for _ in 0..ceil_log2(n - 1) {
        let next = boolean_product(&a, &a)?;
        if next == a {
            break;
        }
        a = next;
    }
    Ok(a)
}

fn ceil_log2(x: usize) -> usize {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as usize
    }
}

/// Number of squarings the closure performs for order `n` (exposed for
/// performance accounting).
pub fn closure_depth(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        ceil_log2(n - 1)
    }
}

/// Mutual reachability relation `B = M* AND (M*)^T`.
pub fn mutual_reachability(mstar: &BoolMatrix) -> Result<BoolMatrix> {
    mstar.and(&mstar.transpose())
}
