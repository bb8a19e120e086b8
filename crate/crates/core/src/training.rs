//! Local gradient-update simulation over synthetic sample streams, the
//! co-occurrence relation it induces, and empirical checks of the
//! structural invariance and minimality results.
//!
//! All indices are 0-based in memory; serialization converts to 1-based.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::boolmat::{star_closure, BoolMatrix};
use crate::error::{Error, Result};
use crate::realmat::{RealMatrix, RealVector};

/// Ordered stream of locally activated state sets S(t).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationTrace {
    pub n: usize,
    pub steps: Vec<Vec<usize>>,
}

impl ActivationTrace {
    pub fn new(n: usize, steps: Vec<Vec<usize>>) -> Result<Self> {
        for step in &steps {
            for &i in step {
                if i >= n {
                    return Err(Error::InvalidInput(format!(
                        "trace index {i} out of range for n={n}"
                    )));
                }
            }
        }
        let steps = steps
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        Ok(ActivationTrace { n, steps })
    }
}

/// Symmetric reflexive co-occurrence relation over states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoOccurrence {
    pub n: usize,
    pub relation: BoolMatrix,
}

/// Partition of states into coupling classes (connected components of
/// the co-occurrence graph), labeled by ascending minimum member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CouplingPartition {
    pub n: usize,
    /// 0-based class label per node.
    pub class_of: Vec<usize>,
    /// Class index sets, sorted ascending within each class.
    pub classes: Vec<Vec<usize>>,
}

/// One masked gradient step: `W - eta * (M(t) AND g_y x^T)` where the
/// mask keeps exactly the S(t) x S(t) submatrix, S(t) = support of x.
/// Entries outside the mask are returned bitwise unchanged.
pub fn local_update_step(
    w: &RealMatrix,
    x: &RealVector,
    g_y: &RealVector,
    eta: f64,
) -> Result<RealMatrix> {
    if !w.is_square() {
        return Err(Error::InvalidInput("update requires a square matrix".into()));
    }
    let n = w.n_rows();
    if x.len() != n || g_y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix order {n} but vectors have lengths {} and {}",
            x.len(),
            g_y.len()
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidInput("eta must be positive".into()));
    }
    let active: Vec<usize> = (0..n).filter(|&i| x.get(i) != 0.0).collect();
    let mut out = w.clone();
    for &i in &active {
        for &j in &active {
            out.set(i, j, w.get(i, j) - eta * (g_y.get(i) * x.get(j)));
        }
    }
    Ok(out)
}

/// Builds the co-occurrence relation: `(i, j)` related iff `i == j` or
/// some step activates both.
pub fn build_co_occurrence(trace: &ActivationTrace) -> CoOccurrence {
    let mut relation = BoolMatrix::identity(trace.n);
    for step in &trace.steps {
        for (a, &i) in step.iter().enumerate() {
            for &j in &step[a + 1..] {
                relation.set(i, j, true);
                relation.set(j, i, true);
            }
        }
    }
    CoOccurrence {
        n: trace.n,
        relation,
    }
}

/// Coupling partition: connected components of the co-occurrence graph,
/// via the transitive closure of the relation; the class containing the
/// smallest unassigned node gets the next label.
pub fn coupling_partition(o: &CoOccurrence) -> Result<CouplingPartition> {
    let closure = star_closure(&o.relation)?;
    let n = o.n;
    let mut class_of = vec![usize::MAX; n];
    let mut classes = Vec::new();
    for i in 0..n {
        if class_of[i] != usize::MAX {
            continue;
        }
        let label = classes.len();
        let members: Vec<usize> = closure
            .row_indices(i)
            .into_iter()
            .filter(|&j| class_of[j] == usize::MAX)
            .collect();
        for &j in &members {
            class_of[j] = label;
        }
        classes.push(members);
    }
    Ok(CouplingPartition {
        n,
        class_of,
        classes,
    })
}

/// Off-class entries that changed between initialization and the final
/// matrix; empty means the invariance result holds on this run.
#[derive(Debug, Clone, Default)]
pub struct InvarianceReport {
    pub violations: Vec<(usize, usize)>,
}

pub fn verify_block_invariance(
    w0: &RealMatrix,
    w_final: &RealMatrix,
    part: &CouplingPartition,
) -> Result<InvarianceReport> {
    let n = part.n;
    if w0.n_rows() != n || !w0.is_square() || w_final.n_rows() != n || !w_final.is_square() {
        return Err(Error::DimensionMismatch(
            "matrices and partition must share the same order".into(),
        ));
    }
    let mut violations = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if part.class_of[i] != part.class_of[j]
                && w_final.get(i, j).to_bits() != w0.get(i, j).to_bits()
            {
                violations.push((i, j));
            }
        }
    }
    Ok(InvarianceReport { violations })
}

/// Classes whose induced co-occurrence subgraph is disconnected; empty
/// means every coupling class is minimal.
#[derive(Debug, Clone, Default)]
pub struct MinimalityReport {
    pub disconnected_classes: Vec<usize>,
}

pub fn verify_block_minimality(
    o: &CoOccurrence,
    part: &CouplingPartition,
) -> Result<MinimalityReport> {
    if o.n != part.n {
        return Err(Error::DimensionMismatch(
            "relation and partition orders differ".into(),
        ));
    }
    let mut disconnected = Vec::new();
    for (label, class) in part.classes.iter().enumerate() {
        if class.len() <= 1 {
            continue;
        }
        let in_class: std::collections::HashSet<usize> = class.iter().copied().collect();
        let mut seen = std::collections::HashSet::new();
        let mut queue = vec![class[0]];
        seen.insert(class[0]);
        while let Some(u) = queue.pop() {
            for v in o.relation.row_indices(u) {
                if v != u && in_class.contains(&v) && seen.insert(v) {
                    queue.push(v);
                }
            }
        }
        if seen.len() != class.len() {
            disconnected.push(label);
        }
    }
    Ok(MinimalityReport {
        disconnected_classes: disconnected,
    })
}

/// Planted-structure simulation output.
#[derive(Debug, Clone)]
pub struct PlantedSystem {
    pub w0: RealMatrix,
    pub w_final: RealMatrix,
    pub trace: ActivationTrace,
    /// Planted group index per state, 0-based.
    pub group_of: Vec<usize>,
}

/// Runs a seeded local-update simulation over disjoint planted groups:
/// each step activates a random non-empty subset of one group and applies
/// a synthetic Gaussian output gradient restricted to that support.
pub fn generate_planted_system(
    n: usize,
    k_blocks: usize,
    steps: usize,
    eta: f64,
    seed: u64,
    init_sigma: f64,
) -> Result<PlantedSystem> {
    if n == 0 || k_blocks == 0 || k_blocks > n {
        return Err(Error::InvalidInput(format!(
            "invalid sizes n={n}, k_blocks={k_blocks}"
        )));
    }
    if !(eta > 0.0) || !(init_sigma > 0.0) {
        return Err(Error::InvalidInput("eta and init_sigma must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, init_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let w0 = RealMatrix::from_entries(
        n,
        n,
        (0..n * n).map(|_| normal.sample(&mut rng)).collect(),
    )?;

    // Near-equal contiguous groups.
    let mut group_of = vec![0usize; n];
    for (i, g) in group_of.iter_mut().enumerate() {
        *g = i * k_blocks / n;
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k_blocks];
    for (i, &g) in group_of.iter().enumerate() {
        groups[g].push(i);
    }

    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut w = w0.clone();
    let mut trace_steps = Vec::with_capacity(steps);
    for _ in 0..steps {
        let g = rng.gen_range(0..k_blocks);
        let group = &groups[g];
        let mut active: Vec<usize> = group
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(0.5))
            .collect();
        if active.is_empty() {
            active.push(group[rng.gen_range(0..group.len())]);
        }
        let mut x = RealVector::zeros(n);
        let mut g_y = RealVector::zeros(n);
        for &i in &active {
            // Nonzero input support; gradients restricted to S(t).
            let mut v = unit.sample(&mut rng);
            while v == 0.0 {
                v = unit.sample(&mut rng);
            }
            x.set(i, v);
            g_y.set(i, unit.sample(&mut rng));
        }
        w = local_update_step(&w, &x, &g_y, eta)?;
        trace_steps.push(active);
    }
    let trace = ActivationTrace::new(n, trace_steps)?;
    Ok(PlantedSystem {
        w0,
        w_final: w,
        trace,
        group_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_support_leaves_matrix_unchanged() {
        let w = RealMatrix::from_entries(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = RealVector::zeros(2);
        let g = RealVector::from_entries(vec![1.0, 1.0]).unwrap();
        let out = local_update_step(&w, &x, &g, 0.1).unwrap();
        assert!(out.bitwise_eq(&w));
    }

    #[test]
    fn mask_keeps_only_active_square() {
        let w = RealMatrix::zeros(2, 2);
        let x = RealVector::from_entries(vec![1.0, 0.0]).unwrap();
        let g = RealVector::from_entries(vec![1.0, 1.0]).unwrap();
        let out = local_update_step(&w, &x, &g, 1.0).unwrap();
        assert_eq!(out.get(0, 0), -1.0);
        assert_eq!(out.get(0, 1), 0.0);
        assert_eq!(out.get(1, 0), 0.0);
        assert_eq!(out.get(1, 1), 0.0);
    }

    #[test]
    fn masked_step_matches_dense_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 10;
        let w = RealMatrix::from_entries(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let x = RealVector::from_entries(
            (0..n)
                .map(|_| if rng.gen_bool(0.4) { rng.gen_range(0.1..1.0) } else { 0.0 })
                .collect(),
        )
        .unwrap();
        let g = RealVector::from_entries((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let eta = 0.05;
        let out = local_update_step(&w, &x, &g, eta).unwrap();
        // Dense outer-product update masked post hoc.
        for i in 0..n {
            for j in 0..n {
                let expect = if x.get(i) != 0.0 && x.get(j) != 0.0 {
                    w.get(i, j) - eta * (g.get(i) * x.get(j))
                } else {
                    w.get(i, j)
                };
                assert_eq!(out.get(i, j).to_bits(), expect.to_bits(), "({i},{j})");
            }
        }
    }

    #[test]
    fn rejects_non_positive_eta() {
        let w = RealMatrix::zeros(2, 2);
        let x = RealVector::zeros(2);
        assert!(local_update_step(&w, &x, &x, 0.0).is_err());
    }

    #[test]
    fn co_occurrence_empty_steps_is_identity() {
        let trace = ActivationTrace::new(4, vec![]).unwrap();
        let o = build_co_occurrence(&trace);
        assert_eq!(o.relation, BoolMatrix::identity(4));
    }

    #[test]
    fn co_occurrence_direct_pairs() {
        let trace = ActivationTrace::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let o = build_co_occurrence(&trace);
        assert!(o.relation.get(0, 1) && o.relation.get(1, 0));
        assert!(o.relation.get(1, 2) && o.relation.get(2, 1));
        assert!(!o.relation.get(0, 2));
    }

    #[test]
    fn co_occurrence_matches_pair_scan_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let n = 12;
        let steps: Vec<Vec<usize>> = (0..20)
            .map(|_| (0..n).filter(|_| rng.gen_bool(0.25)).collect())
            .collect();
        let trace = ActivationTrace::new(n, steps.clone()).unwrap();
        let o = build_co_occurrence(&trace);
        let mut oracle = BoolMatrix::identity(n);
        for step in &steps {
            for &i in step {
                for &j in step {
                    oracle.set(i, j, true);
                }
            }
        }
        assert_eq!(o.relation, oracle);
    }

    #[test]
    fn partition_identity_relation_is_singletons() {
        let o = CoOccurrence {
            n: 5,
            relation: BoolMatrix::identity(5),
        };
        let p = coupling_partition(&o).unwrap();
        assert_eq!(p.classes.len(), 5);
        for (i, class) in p.classes.iter().enumerate() {
            assert_eq!(class, &vec![i]);
        }
    }

    #[test]
    fn partition_transitivity_through_shared_state() {
        let trace = ActivationTrace::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let p = coupling_partition(&build_co_occurrence(&trace)).unwrap();
        assert_eq!(p.classes.len(), 1);
        assert_eq!(p.classes[0], vec![0, 1, 2]);
    }

    #[test]
    fn partition_matches_union_find_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(2..30);
            let steps: Vec<Vec<usize>> = (0..10)
                .map(|_| (0..n).filter(|_| rng.gen_bool(0.2)).collect())
                .collect();
            let trace = ActivationTrace::new(n, steps.clone()).unwrap();
            let p = coupling_partition(&build_co_occurrence(&trace)).unwrap();

            // Union-find over listed pairs.
            let mut parent: Vec<usize> = (0..n).collect();
            fn find(parent: &mut Vec<usize>, i: usize) -> usize {
                if parent[i] != i {
                    let p = parent[i];
                    let r = find(parent, p);
                    parent[i] = r;
                }
                parent[i]
            }
            for step in &steps {
                for w in step.windows(2) {
                    let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let same_oracle = find(&mut parent, i) == find(&mut parent, j);
                    let same_ours = p.class_of[i] == p.class_of[j];
                    assert_eq!(same_oracle, same_ours, "n={n} i={i} j={j}");
                }
            }
        }
    }

    #[test]
    fn zero_steps_invariance_trivial() {
        let sys = generate_planted_system(8, 2, 0, 0.1, 1, 0.5).unwrap();
        assert!(sys.w_final.bitwise_eq(&sys.w0));
    }

    #[test]
    fn single_block_partition_has_one_class() {
        let sys = generate_planted_system(10, 1, 200, 0.1, 2, 0.5).unwrap();
        let p = coupling_partition(&build_co_occurrence(&sys.trace)).unwrap();
        // All activated states fall in one class.
        let activated: std::collections::HashSet<usize> =
            sys.trace.steps.iter().flatten().copied().collect();
        let labels: std::collections::HashSet<usize> =
            activated.iter().map(|&i| p.class_of[i]).collect();
        assert_eq!(labels.len(), 1);
    }

    #[test]
    fn planted_invariance_and_minimality_hold() {
        let sys = generate_planted_system(24, 3, 500, 0.05, 3, 0.4).unwrap();
        let o = build_co_occurrence(&sys.trace);
        let p = coupling_partition(&o).unwrap();
        let inv = verify_block_invariance(&sys.w0, &sys.w_final, &p).unwrap();
        assert!(inv.violations.is_empty());
        let min = verify_block_minimality(&o, &p).unwrap();
        assert!(min.disconnected_classes.is_empty());
    }

    #[test]
    fn corrupted_off_block_entry_is_reported() {
        let sys = generate_planted_system(16, 4, 300, 0.05, 4, 0.4).unwrap();
        let o = build_co_occurrence(&sys.trace);
        let p = coupling_partition(&o).unwrap();
        // Find an off-class pair and corrupt it.
        let mut w_bad = sys.w_final.clone();
        let mut target = None;
        'outer: for i in 0..16 {
            for j in 0..16 {
                if p.class_of[i] != p.class_of[j] {
                    target = Some((i, j));
                    break 'outer;
                }
            }
        }
        let (i, j) = target.expect("planted system should have off-class pairs");
        w_bad.set(i, j, w_bad.get(i, j) + 1.0);
        let inv = verify_block_invariance(&sys.w0, &w_bad, &p).unwrap();
        assert_eq!(inv.violations, vec![(i, j)]);
    }

    #[test]
    fn determinism_same_seed_same_output() {
        let a = generate_planted_system(12, 3, 100, 0.1, 42, 0.3).unwrap();
        let b = generate_planted_system(12, 3, 100, 0.1, 42, 0.3).unwrap();
        assert!(a.w0.bitwise_eq(&b.w0));
        assert!(a.w_final.bitwise_eq(&b.w_final));
        assert_eq!(a.trace, b.trace);
    }
}
