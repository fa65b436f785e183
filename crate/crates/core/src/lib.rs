//! Invasion percolation on the square lattice and the quantities that enter
//! the discrete splicing argument: annulus crossing counts and their dual
//! defected circuits, arm events, correlation length, and tranche
//! resampling experiments.

pub mod arms;
pub mod crossing;
pub mod error;
pub mod estimate;
pub mod flow;
pub mod invasion;
pub mod lattice;
pub mod rng;
pub mod splice;
pub mod unionfind;
pub mod weights;

pub use error::{Error, Result};
pub use lattice::{
    box_sites, dual_edge, graph_boundary, region_edges, AnnulusSpec, DualEdgeId, DualSite, EdgeId,
    EdgeSet, Orientation, Site, Subgraph,
};
pub use weights::{
    resample_region, sample_weights, threshold_config, Configuration, EdgeStatus, Region,
    WeightField,
};
pub use invasion::{invade, invaded_weight_tail, invasion_configuration, InvasionResult, StopReason, StopRule};
pub use crossing::{
    brute_force_crossings, circuit_through_edge, count_disjoint_crossings, min_defect_circuit, CrossingCount,
    DefectCircuit,
};
pub use arms::{
    detect_circuit_event_a, detect_four_arm, estimate_arm_probability, estimate_correlation_length, estimate_p_n,
    ArmEventSpec, DefectBudget,
};
pub use estimate::{CiMethod, EstimateWithCI};
pub use splice::{
    a_event_stability, build_tranche, estimate_conditional_variance, estimate_mismatch, resample_pair,
    resample_sequence, DerivationMode, SpliceRun, SpliceSetup, TrancheSpec,
};

/// Library version embedded in every experiment output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
