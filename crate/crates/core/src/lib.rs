//! Decomposition toolkit for trained parameter matrices: statistical
//! annealing of learning-unsupported edges, Boolean-algebra structural
//! analysis (closure, strongly/weakly connected components, layers,
//! block-exposing permutation), and an index-routed inference runtime
//! that is output-equivalent to the monolithic operator.

pub mod annealing;
pub mod boolmat;
pub mod error;
pub mod io;
pub mod realmat;
pub mod runtime;
pub mod stats;
pub mod structure;
pub mod training;

pub use annealing::{
    anneal, channel_consistency_test, classify_edge, estimate_bandwidth, neyman_tail_test,
    neyman_threshold, row_normalize, sequence_norm_test, AnnealReport, AnnealedSystem,
    EdgeClassification, EdgeLabel, InitDistribution, NormalizedMatrix, TestConfig, TestDecision,
    Weights,
};
pub use boolmat::{
    boolean_product, closure_depth, mutual_reachability, star_closure, BoolMatrix,
};
pub use error::{Error, Result};
pub use realmat::{
    channel_forward, matvec, ChannelBundle, Nonlinearity, RealMatrix, RealVector,
};
pub use runtime::{
    build_system, infer, infer_subdivided, redistribute_update, subdivide_block,
    verify_equivalence, BlockOp, BlockPart, Embedding, EquivalenceReport, Projection,
    RestructuredSystem, SubOperator, SubdividedBlock,
};
pub use structure::{
    analyze, apply_permutation, apply_permutation_bool, condensation, invert_permutation,
    layer_peel, p_adjacency, p_adjacency_channels, scc_labels, validate_permutation, wcc_labels,
    AnalysisResult, AnalyzeOptions, BlockRange, CondensationResult, NodeAttributeTable, NodeRow,
};
pub use training::{
    build_co_occurrence, coupling_partition, generate_planted_system, local_update_step,
    verify_block_invariance, verify_block_minimality, ActivationTrace, CoOccurrence,
    CouplingPartition, InvarianceReport, MinimalityReport, PlantedSystem,
};
