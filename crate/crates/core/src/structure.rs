//! Structural analysis pipeline: adjacency predicate, strongly
//! connected components via mutual reachability, condensation, layer
//! peeling, weakly connected components, and the node attribute table
//! whose stable sort yields the block-exposing permutation.
//!
//! Convention: `m[i][j] = 1` encodes a directed edge from vertex `j`
//! into vertex `i`; reachability in the Kleene closure follows the
//! row-to-column reading. All node and component labels in the
//! attribute table are 1-based; indices inside the library are 0-based.

use crate::boolmat::{mutual_reachability, star_closure, BoolMatrix};
use crate::error::{Error, Result};
use crate::realmat::{ChannelBundle, RealMatrix};

/// Adjacency predicate of a scalar weight matrix: an edge exists where
/// the weight is nonzero.
pub fn p_adjacency(w: &RealMatrix) -> Result<BoolMatrix> {
    if !w.is_square() {
        return Err(Error::InvalidInput(
            "adjacency predicate requires a square matrix".into(),
        ));
    }
    let n = w.n_rows();
    let mut m = BoolMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if w.get(i, j) != 0.0 {
                m.set(i, j, true);
            }
        }
    }
    Ok(m)
}

/// Adjacency predicate of a multi-channel bundle: an edge exists where
/// any channel carries a nonzero weight.
pub fn p_adjacency_channels(b: &ChannelBundle) -> BoolMatrix {
    let n = b.n();
    let mut m = BoolMatrix::zeros(n);
    for mat in b.w1().iter().chain(b.w2().iter()) {
        for i in 0..n {
            for j in 0..n {
                if mat.get(i, j) != 0.0 {
                    m.set(i, j, true);
                }
            }
        }
    }
    m
}

/// Dense-ranks a min-scan representative vector into labels `1..=k`.
/// `rep[i]` must be the minimal member of `i`'s class.
fn dense_rank(rep: &[usize]) -> Vec<usize> {
    let mut label_of_rep = vec![0usize; rep.len()];
    let mut next = 0usize;
    let mut labels = vec![0usize; rep.len()];
    for (i, &r) in rep.iter().enumerate() {
        if r == i {
            next += 1;
            label_of_rep[r] = next;
        }
        labels[i] = label_of_rep[rep[i]];
    }
    labels
}

/// SCC labels `1..=k` by min-scan of the mutual-reachability relation:
/// each vertex is represented by the smallest vertex in its class, and
/// classes are numbered by ascending representative.
pub fn scc_labels(b: &BoolMatrix) -> Vec<usize> {
    let n = b.n();
    let mut rep = vec![0usize; n];
    for i in 0..n {
        rep[i] = b
            .row_indices(i)
            .into_iter()
            .next()
            .expect("mutual reachability is reflexive");
    }
    dense_rank(&rep)
}

/// Condensation of the adjacency relation over an SCC labeling.
#[derive(Debug, Clone)]
pub struct CondensationResult {
    /// Component count.
    pub k: usize,
    /// `k x k` component adjacency `M_C = (R_C M R_C^T) AND NOT I`.
    pub matrix: BoolMatrix,
    /// Members of each component (0-based node indices, ascending).
    pub members: Vec<Vec<usize>>,
}

pub fn condensation(m: &BoolMatrix, scc: &[usize]) -> Result<CondensationResult> {
    let n = m.n();
    if scc.len() != n {
        return Err(Error::DimensionMismatch(
            "SCC labeling length does not match matrix order".into(),
        ));
    }
    let k = scc.iter().copied().max().unwrap_or(0);
    let mut members = vec![Vec::new(); k];
    for (i, &c) in scc.iter().enumerate() {
        if c == 0 || c > k {
            return Err(Error::InvalidInput("SCC labels must lie in 1..=k".into()));
        }
        members[c - 1].push(i);
    }
    let mut mc = BoolMatrix::zeros(k);
    for i in 0..n {
        for j in m.row_indices(i) {
            if scc[i] != scc[j] {
                mc.set(scc[i] - 1, scc[j] - 1, true);
            }
        }
    }
    Ok(CondensationResult {
        k,
        matrix: mc,
        members,
    })
}

/// Layer labels `1..=depth` per component by iterative peeling: a
/// component joins the current layer when its condensation row has no
/// set bit in a still-unassigned column.
pub fn layer_peel(mc: &BoolMatrix) -> Result<Vec<usize>> {
    let k = mc.n();
    let mut layer = vec![0usize; k];
    let mut remaining = k;
    let mut current = 0usize;
    while remaining > 0 {
        current += 1;
        let peel: Vec<usize> = (0..k)
            .filter(|&c| {
                layer[c] == 0 && mc.row_indices(c).iter().all(|&d| layer[d] != 0)
            })
            .collect();
        if peel.is_empty() {
            return Err(Error::InternalInvariant(
                "layer peeling stalled on a cyclic condensation".into(),
            ));
        }
        for c in peel {
            layer[c] = current;
            remaining -= 1;
        }
    }
    Ok(layer)
}

/// Weakly-connected-component labels `1..=g` over the condensation:
/// closure of the symmetrized relation, then min-scan dense ranking.
pub fn wcc_labels(mc: &BoolMatrix) -> Result<Vec<usize>> {
    let sym = mc.or(&mc.transpose())?;
    let closure = star_closure(&sym)?;
    let k = mc.n();
    let mut rep = vec![0usize; k];
    for c in 0..k {
        rep[c] = closure
            .row_indices(c)
            .into_iter()
            .next()
            .expect("closure is reflexive");
    }
    Ok(dense_rank(&rep))
}

/// One row of the node attribute table; all tags are 1-based except
/// `i_tag`, which is the 0/1 isolation indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRow {
    pub v_tag: usize,
    pub s_tag: usize,
    pub g_tag: usize,
    pub l_tag: usize,
    pub i_tag: usize,
    pub v_new_tag: usize,
}

/// Attribute table sorted by `v_new_tag`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeAttributeTable {
    pub n: usize,
    pub rows: Vec<NodeRow>,
}

/// Contiguous half-open range `[start, end)` of permuted indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRange {
    pub start: usize,
    pub end: usize,
}

impl BlockRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyzeOptions {
    /// Promote the isolation indicator to the primary sort key, pushing
    /// all dormant vertices past every block.
    pub isolated_last: bool,
}

/// Full analysis output: attribute table, permutation, and the derived
/// block layout.
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub n: usize,
    /// SCC count.
    pub k: usize,
    pub table: NodeAttributeTable,
    /// New-to-old index map (0-based): `permutation[a]` is the original
    /// index placed at permuted position `a`.
    pub permutation: Vec<usize>,
    pub condensation: BoolMatrix,
    /// Ranges of permuted indices covered by each non-isolated
    /// weak component, in permuted order.
    pub blocks: Vec<BlockRange>,
    /// Permuted indices (0-based) of isolated vertices.
    pub dormant: Vec<usize>,
}

/// Runs the pipeline on an adjacency relation.
pub fn analyze(m: &BoolMatrix, opts: &AnalyzeOptions) -> Result<AnalysisResult> {
    let n = m.n();
    if n == 0 {
        return Err(Error::InvalidInput("empty adjacency relation".into()));
    }
    let closure = star_closure(m)?;
    let mutual = mutual_reachability(&closure)?;
    let scc = scc_labels(&mutual);
    let cond = condensation(m, &scc)?;

    // A single component admits no further decomposition: one block,
    // one layer, nothing isolated.
    let (layer_of, wcc_of, isolated) = if cond.k == 1 {
        (vec![1usize], vec![1usize], vec![false])
    } else {
        let layer = layer_peel(&cond.matrix)?;
        let wcc = wcc_labels(&cond.matrix)?;
        let g = wcc.iter().copied().max().unwrap_or(0);
        let mut size = vec![0usize; g];
        for (c, &w) in wcc.iter().enumerate() {
            size[w - 1] += cond.members[c].len();
        }
        let iso = wcc.iter().map(|&w| size[w - 1] == 1).collect();
        (layer, wcc, iso)
    };

    let mut rows: Vec<NodeRow> = (0..n)
        .map(|i| {
            let c = scc[i] - 1;
            NodeRow {
                v_tag: i + 1,
                s_tag: scc[i],
                g_tag: wcc_of[c],
                l_tag: layer_of[c],
                i_tag: usize::from(isolated[c]),
                v_new_tag: 0,
            }
        })
        .collect();
    let isolated_last = opts.isolated_last;
    rows.sort_by_key(|r| {
        if isolated_last {
            (r.i_tag, r.g_tag, 0, r.l_tag, r.s_tag, r.v_tag)
        } else {
            (r.g_tag, r.i_tag, 0, r.l_tag, r.s_tag, r.v_tag)
        }
    });
    for (pos, r) in rows.iter_mut().enumerate() {
        r.v_new_tag = pos + 1;
    }
    let permutation: Vec<usize> = rows.iter().map(|r| r.v_tag - 1).collect();

    let mut blocks = Vec::new();
    let mut dormant = Vec::new();
    let mut pos = 0usize;
    while pos < n {
        if rows[pos].i_tag == 1 {
            dormant.push(pos);
            pos += 1;
            continue;
        }
        let g = rows[pos].g_tag;
        let start = pos;
        while pos < n && rows[pos].i_tag == 0 && rows[pos].g_tag == g {
            pos += 1;
        }
        blocks.push(BlockRange { start, end: pos });
    }

    Ok(AnalysisResult {
        n,
        k: cond.k,
        table: NodeAttributeTable { n, rows },
        permutation,
        condensation: cond.matrix,
        blocks,
        dormant,
    })
}

/// Checks that `perm` is a bijection on `0..n`.
pub fn validate_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::InvalidInput(format!(
            "permutation has length {}, expected {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidInput("not a bijection on 0..n".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// `out[a][b] = w[perm[a]][perm[b]]` (two-sided conjugation by the
/// permutation, new-to-old convention).
pub fn apply_permutation(w: &RealMatrix, perm: &[usize]) -> Result<RealMatrix> {
    if !w.is_square() {
        return Err(Error::InvalidInput("permutation conjugation needs a square matrix".into()));
    }
    let n = w.n_rows();
    validate_permutation(perm, n)?;
    let mut out = RealMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            out.set(a, b, w.get(perm[a], perm[b]));
        }
    }
    Ok(out)
}

/// Boolean counterpart of [`apply_permutation`].
pub fn apply_permutation_bool(m: &BoolMatrix, perm: &[usize]) -> Result<BoolMatrix> {
    let n = m.n();
    validate_permutation(perm, n)?;
    let mut out = BoolMatrix::zeros(n);
    for a in 0..n {
        for b in 0..n {
            if m.get(perm[a], perm[b]) {
                out.set(a, b, true);
            }
        }
    }
    Ok(out)
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (a, &old) in perm.iter().enumerate() {
        inv[old] = a;
    }
    inv
}
