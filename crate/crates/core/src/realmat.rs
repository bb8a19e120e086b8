//! Dense real matrices, vectors, and multi-channel bundles, with the
//! fixed-accumulation-order kernels that keep outputs byte-reproducible.

use crate::error::{Error, Result};

/// Row-major dense matrix of finite `f64` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        RealMatrix {
            n_rows,
            n_cols,
            entries: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting NaN/Inf.
    pub fn from_entries(n_rows: usize, n_cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries, got {}",
                n_rows * n_cols,
                entries.len()
            )));
        }
        for (idx, &v) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: idx / n_cols,
                    col: idx % n_cols,
                });
            }
        }
        Ok(RealMatrix {
            n_rows,
            n_cols,
            entries,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.n_cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn transpose(&self) -> RealMatrix {
        let mut t = RealMatrix::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Bitwise equality (distinguishes +0.0 from -0.0 and is total).
    pub fn bitwise_eq(&self, other: &RealMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self
                .entries
                .iter()
                .zip(other.entries.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Dense column vector of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVector {
    entries: Vec<f64>,
}

impl RealVector {
    pub fn zeros(len: usize) -> Self {
        RealVector {
            entries: vec![0.0; len],
        }
    }

    pub fn from_entries(entries: Vec<f64>) -> Result<Self> {
        for (idx, &v) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: idx, col: 0 });
            }
        }
        Ok(RealVector { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.entries[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: f64) {
        self.entries[i] = v;
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Elementwise nonlinearity registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Nonlinearity {
    Identity,
    Relu,
    Tanh,
}

impl Nonlinearity {
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "identity" => Ok(Nonlinearity::Identity),
            "relu" => Ok(Nonlinearity::Relu),
            "tanh" => Ok(Nonlinearity::Tanh),
            other => Err(Error::UnknownNonlinearity(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Nonlinearity::Identity => "identity",
            Nonlinearity::Relu => "relu",
            Nonlinearity::Tanh => "tanh",
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Identity => x,
            Nonlinearity::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Nonlinearity::Tanh => x.tanh(),
        }
    }
}

/// Multi-channel joint operator: `k/2` first-stage and `k/2` second-stage
/// `n x n` channel matrices jointly parameterizing each structural edge
/// with a `k`-dimensional sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBundle {
    n: usize,
    w1: Vec<RealMatrix>,
    w2: Vec<RealMatrix>,
}

impl ChannelBundle {
    pub fn new(w1: Vec<RealMatrix>, w2: Vec<RealMatrix>) -> Result<Self> {
        if w1.is_empty() || w1.len() != w2.len() {
            return Err(Error::InvalidInput(
                "channel bundle needs equally many first- and second-stage matrices".into(),
            ));
        }
        let n = w1[0].n_rows();
        for m in w1.iter().chain(w2.iter()) {
            if m.n_rows() != n || m.n_cols() != n {
                return Err(Error::DimensionMismatch(
                    "all channel matrices must be n x n".into(),
                ));
            }
        }
        Ok(ChannelBundle { n, w1, w2 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Channel-sequence length `k` (twice the per-stage channel count).
    pub fn k(&self) -> usize {
        2 * self.w1.len()
    }

    pub fn w1(&self) -> &[RealMatrix] {
        &self.w1
    }

    pub fn w2(&self) -> &[RealMatrix] {
        &self.w2
    }

    /// The `k`-dimensional parameter sequence of edge `(i, j)`:
    /// first-stage channels in order, then second-stage channels.
    pub fn edge_sequence(&self, i: usize, j: usize) -> Vec<f64> {
        let mut seq = Vec::with_capacity(self.k());
        for m in &self.w1 {
            seq.push(m.get(i, j));
        }
        for m in &self.w2 {
            seq.push(m.get(i, j));
        }
        seq
    }

    pub fn set_edge_zero(&mut self, i: usize, j: usize) {
        for m in self.w1.iter_mut().chain(self.w2.iter_mut()) {
            m.set(i, j, 0.0);
        }
    }
}

/// Matrix-vector product with ascending-column accumulation order.
pub fn matvec(w: &RealMatrix, x: &RealVector) -> Result<RealVector> {
    if w.n_cols() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, vector has length {}",
            w.n_cols(),
            x.len()
        )));
    }
    let mut y = RealVector::zeros(w.n_rows());
    for i in 0..w.n_rows() {
        let row = w.row(i);
        let mut acc = 0.0;
        for (j, &wij) in row.iter().enumerate() {
            acc += wij * x.get(j);
        }
        y.set(i, acc);
    }
    Ok(y)
}

/// Channel forward pass `y = sum_g W2^(g) sigma(W1^(g) x)`, channels
/// accumulated in ascending `g`.
pub fn channel_forward(b: &ChannelBundle, x: &RealVector, sigma: Nonlinearity) -> Result<RealVector> {
    if x.len() != b.n() {
        return Err(Error::DimensionMismatch(format!(
            "bundle order {}, input length {}",
            b.n(),
            x.len()
        )));
    }
    let mut y = RealVector::zeros(b.n());
    for g in 0..b.w1.len() {
        let mut h = matvec(&b.w1[g], x)?;
        for i in 0..h.len() {
            h.set(i, sigma.apply(h.get(i)));
        }
        let part = matvec(&b.w2[g], &h)?;
        for i in 0..y.len() {
            y.set(i, y.get(i) + part.get(i));
        }
    }
    Ok(y)
}
