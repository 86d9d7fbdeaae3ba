//! Stability analysis of type-Y heteroclinic cycles.
//!
//! A cycle is described by the classified spectrum of each of its equilibria
//! and by the permutations that carry one node's outgoing cross-section
//! coordinates onto the next node's incoming ones ([`NodeSpec`], [`CycleSpec`]).
//! From that data the crate assembles the log-coordinate linearisations of the
//! return maps ([`matrix`]), traces which coordinates ever occupy an expanding
//! slot ([`stability::classify_indices`]), and issues a verdict: asymptotically
//! stable, fragmentarily asymptotically stable, or completely unstable
//! ([`stability::verdict`]).
//!
//! The [`glv`] module builds generalised Lotka-Volterra systems realising such
//! cycles (including the two worked five-species examples), [`sim`] integrates
//! them to cross-check verdicts empirically (visit sequences, dwell-time
//! contraction, basin sampling), and [`rankcert`] certifies that the cyclic
//! matrix products are generically nondegenerate.

pub mod cycle;
mod eigen;
pub mod glv;
pub mod matrix;
pub mod rankcert;
pub mod sim;
pub mod stability;

pub use cycle::{validate_cycle, CycleError, CycleSpec, NodeSpec, Violation};
pub use glv::{
    axis_equilibrium, build_cycle, check_connection_2d, check_tlv3, check_tlv30, example1,
    example2, interior_equilibrium_3d, invariant_box, planar_equilibrium, EquilibriumInfo,
    ExampleCycle, GlvError, GlvSystem,
};
pub use matrix::{basic_matrix, partial_product, transition_product, BasicMatrix, TransitionProduct};
pub use rankcert::{certificate, randomized_rank, split_vectors, Certificate, RankSample};
pub use sim::{
    basin_sample, contraction_estimate, detect_visits, export_csv, integrate, integrate_log,
    ordered_loops, BasinSample, ContractionEstimate, NamedPoint, SimError, Trajectory, VisitEvent,
};
pub use stability::{
    check_lemma_conditions, classify_indices, iterate_maps, significant_spectrum, verdict,
    ConditionCheck, IndexClassification, MapOrbit, MapOutcome, StabilityReport, Verdict,
};
