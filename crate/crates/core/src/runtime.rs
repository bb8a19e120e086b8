//! Restructured inference runtime: the structural permutation plus
//! index-routed sub-operators (projection / embedding value tables per
//! block), dormant channel handling, triangular block subdivision, and
//! redistribution of local training updates into the decomposed form.
//!
//! Exactness contract: per output row, every reduction visits the
//! block's columns in ascending source (pre-permutation) index order
//! and omits only addends that are exact zeros in the original
//! operator. The kept addends therefore appear in exactly the order
//! the monolithic evaluation uses, so outputs agree under numeric
//! equality (and bitwise away from signed-zero corners).

use crate::annealing::Weights;
use crate::error::{Error, Result};
use crate::realmat::{channel_forward, ChannelBundle, Nonlinearity, RealMatrix, RealVector};
use crate::structure::{invert_permutation, validate_permutation, AnalysisResult};

/// Column-selection value table: local index -> ambient permuted index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    pub table: Vec<usize>,
}

/// Row-placement value table: local index -> ambient permuted index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Embedding {
    pub table: Vec<usize>,
}

/// Block-local operator payload.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockOp {
    Dense(RealMatrix),
    Channels(ChannelBundle),
}

impl BlockOp {
    pub fn order(&self) -> usize {
        match self {
            BlockOp::Dense(m) => m.n_rows(),
            BlockOp::Channels(b) => b.n(),
        }
    }
}

/// One routed sub-operator: reads ambient positions `projection`,
/// writes ambient positions `embedding`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubOperator {
    pub projection: Projection,
    pub embedding: Embedding,
    pub op: BlockOp,
    /// Ascending local prefix lengths at strongly-connected-component
    /// boundaries (last entry equals the block order); the valid cut
    /// points for triangular subdivision.
    pub cuts: Vec<usize>,
    /// Local column indices ordered by ascending source index; the
    /// reduction order that reproduces the monolithic evaluation.
    pub source_order: Vec<usize>,
}

/// Decomposed, output-equivalent form of an annealed operator.
#[derive(Debug, Clone, PartialEq)]
pub struct RestructuredSystem {
    pub n: usize,
    /// New-to-old index map.
    pub permutation: Vec<usize>,
    /// Old-to-new index map.
    pub inverse: Vec<usize>,
    pub operators: Vec<SubOperator>,
    /// Ambient permuted positions outside every block; their outputs
    /// are exact zeros.
    pub dormant: Vec<usize>,
    /// Nonlinearity applied inside channel sub-operators.
    pub nonlinearity: Nonlinearity,
}

fn edge_nonzero(weights: &Weights, i: usize, j: usize) -> bool {
    match weights {
        Weights::Scalar(w) => w.get(i, j) != 0.0,
        Weights::Channels(b) => b.edge_sequence(i, j).iter().any(|&v| v != 0.0),
    }
}

fn extract_block(weights: &Weights, rows: &[usize], cols: &[usize]) -> BlockOp {
    match weights {
        Weights::Scalar(w) => {
            let mut m = RealMatrix::zeros(rows.len(), cols.len());
            for (li, &i) in rows.iter().enumerate() {
                for (lj, &j) in cols.iter().enumerate() {
                    m.set(li, lj, w.get(i, j));
                }
            }
            BlockOp::Dense(m)
        }
        Weights::Channels(b) => {
            let pick = |mats: &[RealMatrix]| -> Vec<RealMatrix> {
                mats.iter()
                    .map(|src| {
                        let mut m = RealMatrix::zeros(rows.len(), cols.len());
                        for (li, &i) in rows.iter().enumerate() {
                            for (lj, &j) in cols.iter().enumerate() {
                                m.set(li, lj, src.get(i, j));
                            }
                        }
                        m
                    })
                    .collect()
            };
            BlockOp::Channels(
                ChannelBundle::new(pick(b.w1()), pick(b.w2()))
                    .expect("square block extraction preserves bundle shape"),
            )
        }
    }
}

/// Assembles the routed system from annealed weights and the structural
/// analysis of their adjacency relation. Every nonzero of the weights
/// must fall inside a block (or on a dormant self-loop, which becomes a
/// one-by-one sub-operator).
pub fn build_system(
    weights: &Weights,
    analysis: &AnalysisResult,
    nonlinearity: Nonlinearity,
) -> Result<RestructuredSystem> {
    let n = weights.n();
    if n != analysis.n {
        return Err(Error::DimensionMismatch(format!(
            "weights have order {n}, analysis covers {}",
            analysis.n
        )));
    }
    validate_permutation(&analysis.permutation, n)?;
    let perm = analysis.permutation.clone();
    let inverse = invert_permutation(&perm);

    let in_block = {
        let mut v = vec![usize::MAX; n];
        for (b, range) in analysis.blocks.iter().enumerate() {
            for pos in range.start..range.end {
                v[pos] = b;
            }
        }
        v
    };
    // Structural soundness: nonzeros may only sit inside one block or on
    // the diagonal of a dormant position.
    for a in 0..n {
        for b in 0..n {
            if edge_nonzero(weights, perm[a], perm[b])
                && !(in_block[a] != usize::MAX && in_block[a] == in_block[b])
                && a != b
            {
                return Err(Error::InvalidInput(format!(
                    "weights carry an off-block entry at permuted ({a},{b})"
                )));
            }
        }
    }

    let mut operators = Vec::with_capacity(analysis.blocks.len());
    for range in &analysis.blocks {
        let ambient: Vec<usize> = (range.start..range.end).collect();
        let old: Vec<usize> = ambient.iter().map(|&a| perm[a]).collect();
        let mut cuts = Vec::new();
        for (local, pos) in (range.start..range.end).enumerate() {
            let next_differs = pos + 1 == range.end
                || analysis.table.rows[pos + 1].s_tag != analysis.table.rows[pos].s_tag;
            if next_differs {
                cuts.push(local + 1);
            }
        }
        let mut source_order: Vec<usize> = (0..old.len()).collect();
        source_order.sort_by_key(|&lj| old[lj]);
        operators.push(SubOperator {
            projection: Projection {
                table: ambient.clone(),
            },
            embedding: Embedding { table: ambient },
            op: extract_block(weights, &old, &old),
            cuts,
            source_order,
        });
    }
    // Dormant self-loops keep their weight as one-by-one sub-operators.
    for &pos in &analysis.dormant {
        if edge_nonzero(weights, perm[pos], perm[pos]) {
            operators.push(SubOperator {
                projection: Projection { table: vec![pos] },
                embedding: Embedding { table: vec![pos] },
                op: extract_block(weights, &[perm[pos]], &[perm[pos]]),
                cuts: vec![1],
                source_order: vec![0],
            });
        }
    }

    Ok(RestructuredSystem {
        n,
        permutation: perm,
        inverse,
        operators,
        dormant: analysis.dormant.clone(),
        nonlinearity,
    })
}

fn gather(xp: &[f64], table: &[usize]) -> RealVector {
    let mut out = RealVector::zeros(table.len());
    for (local, &a) in table.iter().enumerate() {
        out.set(local, xp[a]);
    }
    out
}

/// Matrix-vector reduction visiting columns in the given order.
fn ordered_matvec(m: &RealMatrix, x: &RealVector, order: &[usize]) -> RealVector {
    let mut y = RealVector::zeros(m.n_rows());
    for i in 0..m.n_rows() {
        let mut acc = 0.0f64;
        for &j in order {
            acc += m.get(i, j) * x.get(j);
        }
        y.set(i, acc);
    }
    y
}

fn eval_sub_operator(
    sub: &SubOperator,
    xp: &[f64],
    yp: &mut [f64],
    sigma: Nonlinearity,
) -> Result<()> {
    let x_local = gather(xp, &sub.projection.table);
    let y_local = match &sub.op {
        BlockOp::Dense(m) => ordered_matvec(m, &x_local, &sub.source_order),
        BlockOp::Channels(b) => {
            // Per-channel two-stage pass, both reductions in source
            // order, channels accumulated in ascending channel index.
            let order = &sub.source_order;
            let mut y = RealVector::zeros(b.n());
            for g in 0..b.w1().len() {
                let mut h = ordered_matvec(&b.w1()[g], &x_local, order);
                for i in 0..h.len() {
                    h.set(i, sigma.apply(h.get(i)));
                }
                let part = ordered_matvec(&b.w2()[g], &h, order);
                for i in 0..y.len() {
                    y.set(i, y.get(i) + part.get(i));
                }
            }
            y
        }
    };
    for (local, &a) in sub.embedding.table.iter().enumerate() {
        yp[a] = y_local.get(local);
    }
    Ok(())
}

/// Routed forward pass: permute in, evaluate each sub-operator on its
/// projected input, embed, permute out. Dormant outputs are exact
/// zeros unless a self-loop sub-operator covers them.
pub fn infer(sys: &RestructuredSystem, x: &RealVector) -> Result<RealVector> {
    if x.len() != sys.n {
        return Err(Error::DimensionMismatch(format!(
            "system order {}, input length {}",
            sys.n,
            x.len()
        )));
    }
    let xp: Vec<f64> = sys.permutation.iter().map(|&old| x.get(old)).collect();
    let mut yp = vec![0.0f64; sys.n];
    for sub in &sys.operators {
        eval_sub_operator(sub, &xp, &mut yp, sys.nonlinearity)?;
    }
    let mut y = RealVector::zeros(sys.n);
    for (a, &old) in sys.permutation.iter().enumerate() {
        y.set(old, yp[a]);
    }
    Ok(y)
}

/// Triangular part of a subdivided dense block: rows `(row_start,
/// row_end]` of the block computed from the column prefix `0..col_end`
/// (local coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPart {
    pub row_start: usize,
    pub row_end: usize,
    pub col_end: usize,
    pub weights: RealMatrix,
}

/// A dense block split at component boundaries into independently
/// schedulable triangular parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdividedBlock {
    pub parts: Vec<BlockPart>,
}

/// Splits a dense sub-operator at the given ascending cut points; each
/// part reads only the column prefix up to its own cut, which is exact
/// because cross-component entries are lower-triangular.
pub fn subdivide_block(sub: &SubOperator, cuts: &[usize]) -> Result<SubdividedBlock> {
    let m = match &sub.op {
        BlockOp::Dense(m) => m,
        BlockOp::Channels(_) => {
            return Err(Error::InvalidInput(
                "subdivision applies to dense blocks only".into(),
            ))
        }
    };
    let order = m.n_rows();
    if cuts.is_empty() || *cuts.last().unwrap() != order {
        return Err(Error::InvalidInput(
            "cuts must be non-empty and end at the block order".into(),
        ));
    }
    for w in cuts.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidInput("cuts must be strictly ascending".into()));
        }
    }
    for &c in cuts {
        if !sub.cuts.contains(&c) {
            return Err(Error::InvalidInput(format!(
                "cut {c} is not a component boundary"
            )));
        }
    }
    let mut parts = Vec::with_capacity(cuts.len());
    let mut prev = 0usize;
    for &cut in cuts {
        let mut w = RealMatrix::zeros(cut - prev, cut);
        for i in prev..cut {
            for j in 0..cut {
                w.set(i - prev, j, m.get(i, j));
            }
        }
        parts.push(BlockPart {
            row_start: prev,
            row_end: cut,
            col_end: cut,
            weights: w,
        });
        prev = cut;
    }
    Ok(SubdividedBlock { parts })
}

/// Forward pass evaluating every dense block through its finest
/// subdivision; bitwise equal to [`infer`].
pub fn infer_subdivided(sys: &RestructuredSystem, x: &RealVector) -> Result<RealVector> {
    if x.len() != sys.n {
        return Err(Error::DimensionMismatch(format!(
            "system order {}, input length {}",
            sys.n,
            x.len()
        )));
    }
    let xp: Vec<f64> = sys.permutation.iter().map(|&old| x.get(old)).collect();
    let mut yp = vec![0.0f64; sys.n];
    for sub in &sys.operators {
        match &sub.op {
            BlockOp::Dense(_) => {
                let divided = subdivide_block(sub, &sub.cuts)?;
                let x_local = gather(&xp, &sub.projection.table);
                for part in &divided.parts {
                    for i in part.row_start..part.row_end {
                        let mut acc = 0.0f64;
                        // Prefix columns visited in source order, same
                        // as the undivided reduction restricted to them.
                        for &j in &sub.source_order {
                            if j < part.col_end {
                                acc += part.weights.get(i - part.row_start, j) * x_local.get(j);
                            }
                        }
                        yp[sub.embedding.table[i]] = acc;
                    }
                }
            }
            BlockOp::Channels(_) => {
                eval_sub_operator(sub, &xp, &mut yp, sys.nonlinearity)?;
            }
        }
    }
    let mut y = RealVector::zeros(sys.n);
    for (a, &old) in sys.permutation.iter().enumerate() {
        y.set(old, yp[a]);
    }
    Ok(y)
}

/// Routes one masked local training update into the decomposed form:
/// each dense sub-operator receives its (embedding rows x projection
/// columns) sub-rectangle of `eta * g_y x^T`, masked to the support of
/// `x` in original coordinates. Bitwise identical to updating the
/// monolithic matrix and re-extracting the blocks.
pub fn redistribute_update(
    sys: &mut RestructuredSystem,
    x: &RealVector,
    g_y: &RealVector,
    eta: f64,
) -> Result<()> {
    if x.len() != sys.n || g_y.len() != sys.n {
        return Err(Error::DimensionMismatch(format!(
            "system order {} but vectors have lengths {} and {}",
            sys.n,
            x.len(),
            g_y.len()
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidInput("eta must be positive".into()));
    }
    if sys
        .operators
        .iter()
        .any(|s| matches!(s.op, BlockOp::Channels(_)))
    {
        return Err(Error::InvalidInput(
            "update redistribution is defined for dense sub-operators only".into(),
        ));
    }
    let perm = sys.permutation.clone();
    for sub in &mut sys.operators {
        let m = match &mut sub.op {
            BlockOp::Dense(m) => m,
            BlockOp::Channels(_) => unreachable!(),
        };
        for (li, &a) in sub.embedding.table.iter().enumerate() {
            let oi = perm[a];
            if x.get(oi) == 0.0 {
                continue;
            }
            for (lj, &b) in sub.projection.table.iter().enumerate() {
                let oj = perm[b];
                if x.get(oj) == 0.0 {
                    continue;
                }
                m.set(li, lj, m.get(li, lj) - eta * (g_y.get(oi) * x.get(oj)));
            }
        }
    }
    Ok(())
}

/// Result of a bitwise equivalence sweep between the routed system and
/// the monolithic operator.
#[derive(Debug, Clone, Default)]
pub struct EquivalenceReport {
    pub inputs_checked: usize,
    /// `(input index, original row index)` of every mismatch.
    pub mismatches: Vec<(usize, usize)>,
}

impl EquivalenceReport {
    pub fn is_equivalent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares `infer` against direct evaluation of the original weights
/// on each input, bitwise.
pub fn verify_equivalence(
    sys: &RestructuredSystem,
    weights: &Weights,
    inputs: &[RealVector],
) -> Result<EquivalenceReport> {
    let mut report = EquivalenceReport::default();
    for (idx, x) in inputs.iter().enumerate() {
        let reference = match weights {
            Weights::Scalar(w) => crate::realmat::matvec(w, x)?,
            Weights::Channels(b) => channel_forward(b, x, sys.nonlinearity)?,
        };
        let routed = infer(sys, x)?;
        for i in 0..sys.n {
            if routed.get(i).to_bits() != reference.get(i).to_bits() {
                report.mismatches.push((idx, i));
            }
        }
        report.inputs_checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{analyze, p_adjacency, p_adjacency_channels, AnalyzeOptions};
    use crate::training::local_update_step;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Random block-structured weights: a permuted direct sum of dense
    /// diagonal blocks, optionally with dormant self-loops.
    fn random_block_weights(
        n: usize,
        blocks: usize,
        seed: u64,
        self_loops: bool,
    ) -> RealMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut group = vec![0usize; n];
        for (i, g) in group.iter_mut().enumerate() {
            *g = i * blocks / n;
        }
        // Scatter nodes so blocks are non-contiguous in original coords.
        let mut shuffled: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        let group_of: Vec<usize> = (0..n).map(|i| group[shuffled[i]]).collect();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut w = RealMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if group_of[i] == group_of[j] && (i != j || self_loops) && rng.gen_bool(0.6) {
                    let mut v: f64 = normal.sample(&mut rng);
                    while v == 0.0 {
                        v = normal.sample(&mut rng);
                    }
                    w.set(i, j, v);
                }
            }
        }
        w
    }

    fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> RealVector {
        let normal = Normal::new(0.0, 1.0).unwrap();
        RealVector::from_entries((0..n).map(|_| normal.sample(rng)).collect()).unwrap()
    }

    fn build_scalar(w: &RealMatrix) -> RestructuredSystem {
        let analysis = analyze(&p_adjacency(w).unwrap(), &AnalyzeOptions::default()).unwrap();
        build_system(
            &Weights::Scalar(w.clone()),
            &analysis,
            Nonlinearity::Identity,
        )
        .unwrap()
    }

    #[test]
    fn infer_identity_weights() {
        let w = RealMatrix::identity(7);
        let sys = build_scalar(&w);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_vector(7, &mut rng);
        let y = infer(&sys, &x).unwrap();
        for i in 0..7 {
            assert_eq!(y.get(i).to_bits(), (1.0 * x.get(i)).to_bits());
        }
    }

    #[test]
    fn infer_matches_monolithic_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for seed in 0..20 {
            let n = rng.gen_range(4..48);
            let blocks = rng.gen_range(1..=4.min(n));
            let w = random_block_weights(n, blocks, seed, false);
            let sys = build_scalar(&w);
            for _ in 0..5 {
                let x = random_vector(n, &mut rng);
                let y = infer(&sys, &x).unwrap();
                let reference = crate::realmat::matvec(&w, &x).unwrap();
                for i in 0..n {
                    assert_eq!(y.get(i), reference.get(i));
                }
            }
        }
    }

    #[test]
    fn dormant_outputs_are_exact_zero() {
        // Node 2 is fully disconnected.
        let mut w = RealMatrix::zeros(4, 4);
        w.set(0, 1, 1.5);
        w.set(1, 0, -2.0);
        w.set(3, 3, 0.0);
        let sys = build_scalar(&w);
        assert!(!sys.dormant.is_empty());
        let x = RealVector::from_entries(vec![1.0, -3.0, 5.0, 2.0]).unwrap();
        let y = infer(&sys, &x).unwrap();
        assert_eq!(y.get(2).to_bits(), 0.0f64.to_bits());
        assert_eq!(y.get(3).to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn dormant_self_loop_becomes_unit_operator() {
        let mut w = RealMatrix::zeros(3, 3);
        w.set(0, 1, 1.0);
        w.set(1, 0, 1.0);
        w.set(2, 2, -0.5);
        let sys = build_scalar(&w);
        let x = RealVector::from_entries(vec![1.0, 2.0, 4.0]).unwrap();
        let y = infer(&sys, &x).unwrap();
        let reference = crate::realmat::matvec(&w, &x).unwrap();
        for i in 0..3 {
            assert_eq!(y.get(i), reference.get(i));
        }
        assert_eq!(y.get(2), -2.0);
    }

    #[test]
    fn build_rejects_mismatched_weights() {
        // Analysis of one matrix, weights of another with extra edges.
        let mut w = RealMatrix::zeros(4, 4);
        w.set(0, 1, 1.0);
        w.set(1, 0, 1.0);
        w.set(2, 3, 1.0);
        w.set(3, 2, 1.0);
        let analysis = analyze(&p_adjacency(&w).unwrap(), &AnalyzeOptions::default()).unwrap();
        w.set(0, 3, 9.0);
        let err = build_system(&Weights::Scalar(w), &analysis, Nonlinearity::Identity);
        assert!(err.is_err());
    }

    #[test]
    fn subdivided_inference_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 100..115 {
            let n = rng.gen_range(6..40);
            let w = random_block_weights(n, rng.gen_range(1..=3), seed, true);
            let sys = build_scalar(&w);
            for _ in 0..4 {
                let x = random_vector(n, &mut rng);
                let a = infer(&sys, &x).unwrap();
                let b = infer_subdivided(&sys, &x).unwrap();
                for i in 0..n {
                    assert_eq!(a.get(i), b.get(i));
                }
            }
        }
    }

    #[test]
    fn subdivision_with_triangular_coupling() {
        // Two 2-cycles coupled by a one-way edge: one block, two
        // component-level cuts, genuinely triangular.
        let mut w = RealMatrix::zeros(4, 4);
        w.set(0, 1, 1.0);
        w.set(1, 0, 2.0);
        w.set(2, 3, 3.0);
        w.set(3, 2, 4.0);
        w.set(2, 0, 5.0); // edge from component {0,1} into {2,3}
        let sys = build_scalar(&w);
        assert_eq!(sys.operators.len(), 1);
        assert_eq!(sys.operators[0].cuts, vec![2, 4]);
        let divided = subdivide_block(&sys.operators[0], &[2, 4]).unwrap();
        assert_eq!(divided.parts.len(), 2);
        assert_eq!(divided.parts[1].col_end, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_vector(4, &mut rng);
        let a = infer(&sys, &x).unwrap();
        let b = infer_subdivided(&sys, &x).unwrap();
        for i in 0..4 {
            assert_eq!(a.get(i), b.get(i));
        }
    }

    #[test]
    fn subdivision_rejects_non_boundary_cut() {
        let mut w = RealMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    w.set(i, j, 1.0);
                }
            }
        }
        let sys = build_scalar(&w);
        assert_eq!(sys.operators[0].cuts, vec![4]);
        assert!(subdivide_block(&sys.operators[0], &[2, 4]).is_err());
        assert!(subdivide_block(&sys.operators[0], &[]).is_err());
    }

    #[test]
    fn redistribute_matches_monolithic_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for seed in 200..215 {
            let n = rng.gen_range(6..32);
            let w = random_block_weights(n, rng.gen_range(1..=3), seed, true);
            let mut sys = build_scalar(&w);
            // Sparse input support.
            let x = RealVector::from_entries(
                (0..n)
                    .map(|_| {
                        if rng.gen_bool(0.4) {
                            normal.sample(&mut rng)
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            )
            .unwrap();
            let g_y = random_vector(n, &mut rng);
            let eta = 0.05;
            redistribute_update(&mut sys, &x, &g_y, eta).unwrap();

            // Oracle: monolithic masked update, then read each block's
            // sub-rectangle back out.
            let updated = local_update_step(&w, &x, &g_y, eta).unwrap();
            for sub in &sys.operators {
                let m = match &sub.op {
                    BlockOp::Dense(m) => m,
                    _ => unreachable!(),
                };
                for (li, &a) in sub.embedding.table.iter().enumerate() {
                    for (lj, &b) in sub.projection.table.iter().enumerate() {
                        let oi = sys.permutation[a];
                        let oj = sys.permutation[b];
                        assert_eq!(
                            m.get(li, lj).to_bits(),
                            updated.get(oi, oj).to_bits(),
                            "seed={seed} ({oi},{oj})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn redistribute_rejects_channel_blocks() {
        let n = 4;
        let b = ChannelBundle::new(
            vec![RealMatrix::identity(n)],
            vec![RealMatrix::identity(n)],
        )
        .unwrap();
        let analysis =
            analyze(&p_adjacency_channels(&b), &AnalyzeOptions::default()).unwrap();
        let mut sys =
            build_system(&Weights::Channels(b), &analysis, Nonlinearity::Relu).unwrap();
        let x = RealVector::from_entries(vec![1.0; n]).unwrap();
        assert!(redistribute_update(&mut sys, &x.clone(), &x, 0.1).is_err());
    }

    #[test]
    fn channel_system_infer_matches_monolithic() {
        let n = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let normal = Normal::new(0.0, 1.0).unwrap();
        // Two-block channel structure.
        let group_of: Vec<usize> = (0..n).map(|i| i * 2 / n).collect();
        let make = |rng: &mut ChaCha8Rng| {
            let mut m = RealMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if group_of[i] == group_of[j] && rng.gen_bool(0.7) {
                        m.set(i, j, normal.sample(rng));
                    }
                }
            }
            m
        };
        let bundle = ChannelBundle::new(
            vec![make(&mut rng), make(&mut rng)],
            vec![make(&mut rng), make(&mut rng)],
        )
        .unwrap();
        let analysis =
            analyze(&p_adjacency_channels(&bundle), &AnalyzeOptions::default()).unwrap();
        let sys = build_system(
            &Weights::Channels(bundle.clone()),
            &analysis,
            Nonlinearity::Relu,
        )
        .unwrap();
        for _ in 0..6 {
            let x = random_vector(n, &mut rng);
            let y = infer(&sys, &x).unwrap();
            let reference = channel_forward(&bundle, &x, Nonlinearity::Relu).unwrap();
            for i in 0..n {
                assert_eq!(y.get(i), reference.get(i), "row {i}");
            }
        }
    }

    #[test]
    fn verify_equivalence_reports_clean_and_dirty() {
        let w = random_block_weights(16, 2, 7, true);
        let sys = build_scalar(&w);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inputs: Vec<RealVector> = (0..5).map(|_| random_vector(16, &mut rng)).collect();
        let clean = verify_equivalence(&sys, &Weights::Scalar(w.clone()), &inputs).unwrap();
        assert!(clean.is_equivalent());
        assert_eq!(clean.inputs_checked, 5);

        let mut tampered = sys.clone();
        if let BlockOp::Dense(m) = &mut tampered.operators[0].op {
            m.set(0, 0, m.get(0, 0) + 1.0);
        }
        let dirty = verify_equivalence(&tampered, &Weights::Scalar(w), &inputs).unwrap();
        assert!(!dirty.is_equivalent());
    }
}
