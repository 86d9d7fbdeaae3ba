//! Cycle specification: per-node classified eigenvalue data and the slot
//! permutations chaining consecutive nodes.
//!
//! Coordinate conventions used throughout the crate:
//!
//! * the incoming cross-section of node `j` has `d_j = 1 + n_j^t` coordinates,
//!   ordered `(expanding, transverse_1, .., transverse_{n_t})`;
//! * the outgoing cross-section has `n_j^c + n_j^t` coordinates, ordered
//!   `(contracting_1, .., contracting_{n_c}, transverse_1, .., transverse_{n_t})`;
//! * `out_permutation[k]` names the incoming slot of the *next* node that
//!   receives outgoing slot `k` (an image list, 0-based).
//!
//! A cycle is dimension-consistent when every node's outgoing dimension equals
//! the next node's incoming dimension, cyclically.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// One equilibrium of the cycle: eigenvalues of the linearisation grouped by
/// class, plus the permutation onto the next node's incoming slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    /// Display label, e.g. the equilibrium name.
    pub id: String,
    /// The (unique) expanding eigenvalue `e_j > 0` driving departure.
    pub expanding: f64,
    /// Contracting eigenvalues `c_{j,1..n_c}` (may be empty).
    pub contracting: Vec<f64>,
    /// Transverse eigenvalues `t_{j,1..n_t}` (may be empty).
    pub transverse: Vec<f64>,
    /// Largest real part over the radial eigenvalues.
    pub radial_abscissa: f64,
    /// Image list sending outgoing slot `k` to incoming slot
    /// `out_permutation[k]` of the next node.
    pub out_permutation: Vec<usize>,
}

impl NodeSpec {
    pub fn n_contracting(&self) -> usize {
        self.contracting.len()
    }

    pub fn n_transverse(&self) -> usize {
        self.transverse.len()
    }

    /// Incoming cross-section dimension `d_j = 1 + n_j^t`.
    pub fn incoming_dim(&self) -> usize {
        1 + self.transverse.len()
    }

    /// Outgoing cross-section dimension `n_j^c + n_j^t`; equals the next
    /// node's incoming dimension in a valid cycle.
    pub fn outgoing_dim(&self) -> usize {
        self.contracting.len() + self.transverse.len()
    }
}

/// A cyclic sequence of nodes; the input to every analysis in this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSpec {
    pub nodes: Vec<NodeSpec>,
}

/// A named violation of the cycle invariants, tied to the node it occurs at.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Index of the offending node (0 for whole-cycle violations).
    pub node: usize,
    /// Human-readable statement of the failed identity.
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}: {}", self.node, self.rule)
    }
}

/// Errors for operations that require a structurally valid cycle.
#[derive(Debug, Clone, Error)]
pub enum CycleError {
    #[error("invalid cycle: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("node index {index} out of range for a {len}-node cycle")]
    IndexOutOfRange { index: usize, len: usize },
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(Violation::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl CycleSpec {
    pub fn new(nodes: Vec<NodeSpec>) -> Self {
        CycleSpec { nodes }
    }

    /// Number of nodes `m`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Cyclic successor index.
    pub fn next(&self, j: usize) -> usize {
        (j + 1) % self.nodes.len()
    }

    pub fn node(&self, j: usize) -> Result<&NodeSpec, CycleError> {
        self.nodes.get(j).ok_or(CycleError::IndexOutOfRange {
            index: j,
            len: self.nodes.len(),
        })
    }

    /// The same geometric cycle with the node list rotated to start at `k`.
    pub fn rotated(&self, k: usize) -> CycleSpec {
        let m = self.nodes.len();
        let nodes = (0..m).map(|i| self.nodes[(k + i) % m].clone()).collect();
        CycleSpec { nodes }
    }

    /// All invariant violations; empty when the description is valid.
    pub fn validate(&self) -> Vec<Violation> {
        validate_cycle(self)
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Returns `Ok(())` for a valid spec, or the violation list as an error.
    pub fn ensure_valid(&self) -> Result<(), CycleError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(CycleError::Invalid(violations))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cycle specs always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Checks every node and chain invariant; violations are data, not failures.
pub fn validate_cycle(spec: &CycleSpec) -> Vec<Violation> {
    let mut violations = Vec::new();
    if spec.nodes.is_empty() {
        violations.push(Violation {
            node: 0,
            rule: "cycle has no nodes".to_string(),
        });
        return violations;
    }
    let m = spec.nodes.len();
    for (j, node) in spec.nodes.iter().enumerate() {
        if !(node.expanding > 0.0) {
            violations.push(Violation {
                node: j,
                rule: format!("expanding eigenvalue must be > 0, got {}", node.expanding),
            });
        }
        let finite = node.expanding.is_finite()
            && node.radial_abscissa.is_finite()
            && node.contracting.iter().all(|v| v.is_finite())
            && node.transverse.iter().all(|v| v.is_finite());
        if !finite {
            violations.push(Violation {
                node: j,
                rule: "all eigenvalue entries must be finite".to_string(),
            });
        }

        let next = &spec.nodes[(j + 1) % m];
        let out_dim = node.outgoing_dim();
        if out_dim != next.incoming_dim() {
            violations.push(Violation {
                node: j,
                rule: format!(
                    "dimension chain broken: n^c + n^t = {} but next node expects 1 + n^t' = {}",
                    out_dim,
                    next.incoming_dim()
                ),
            });
        }
        if node.out_permutation.len() != out_dim {
            violations.push(Violation {
                node: j,
                rule: format!(
                    "out_permutation length {} differs from outgoing dimension {}",
                    node.out_permutation.len(),
                    out_dim
                ),
            });
            continue;
        }
        let mut seen = vec![false; out_dim];
        let mut bijective = true;
        for &image in &node.out_permutation {
            if image >= out_dim || seen[image] {
                bijective = false;
                break;
            }
            seen[image] = true;
        }
        if !bijective {
            violations.push(Violation {
                node: j,
                rule: format!(
                    "out_permutation {:?} is not a bijection onto 0..{}",
                    node.out_permutation, out_dim
                ),
            });
        }
    }
    violations
}
