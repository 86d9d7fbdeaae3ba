//! Basic transition matrices of the node-to-node return maps and their cyclic
//! products.
//!
//! In log coordinates `η = (ln|w|, ln|z_1|, ..)` the restricted map past node
//! `j` is linear: `η ↦ M_j η`. Before permutation the matrix has, for each
//! contracting direction `d`, a row `(−c_{j,d}/e_j, 0, ..)` and, for each
//! transverse direction `k`, a row `(−t_{j,k}/e_j, 0, .., 1, ..)` with the 1 in
//! column `1+k`. The node's `out_permutation` then reorders those rows into the
//! next node's `(expanding, transverse..)` slot order.

use nalgebra::DMatrix;

use crate::cycle::{CycleError, CycleSpec, NodeSpec};

/// The log-coordinate linearisation of one node's return map, shaped
/// `d_{j+1} × d_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicMatrix {
    pub node_index: usize,
    pub entries: DMatrix<f64>,
}

/// Cyclic product of all basic matrices starting (rightmost factor) at
/// `base_index`; square of side `d_base`. Its nonzero spectrum is independent
/// of the base.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionProduct {
    pub base_index: usize,
    pub entries: DMatrix<f64>,
}

impl BasicMatrix {
    /// The entries as row-major nested vectors, for serialization.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.entries)
    }
}

impl TransitionProduct {
    /// The entries as row-major nested vectors, for serialization.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.entries)
    }
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// Builds the basic matrix without re-validating the whole spec. The caller
/// guarantees chain consistency at node `j`.
pub(crate) fn build_basic_unchecked(node: &NodeSpec) -> DMatrix<f64> {
    let n_c = node.n_contracting();
    let rows = node.outgoing_dim();
    let cols = node.incoming_dim();
    let e = node.expanding;

    let mut pre = DMatrix::<f64>::zeros(rows, cols);
    for (d, &c) in node.contracting.iter().enumerate() {
        pre[(d, 0)] = -c / e;
    }
    for (k, &t) in node.transverse.iter().enumerate() {
        pre[(n_c + k, 0)] = -t / e;
        pre[(n_c + k, 1 + k)] = 1.0;
    }

    debug_assert_eq!(node.out_permutation.len(), rows);
    let mut permuted = DMatrix::<f64>::zeros(rows, cols);
    for (row, &image) in node.out_permutation.iter().enumerate() {
        permuted.row_mut(image).copy_from(&pre.row(row));
    }
    permuted
}

/// The basic transition matrix of node `j`.
pub fn basic_matrix(spec: &CycleSpec, j: usize) -> Result<BasicMatrix, CycleError> {
    spec.ensure_valid()?;
    let node = spec.node(j)?;
    Ok(BasicMatrix {
        node_index: j,
        entries: build_basic_unchecked(node),
    })
}

/// The transition matrix `M^(j)`: the product of all `m` basic matrices taken
/// cyclically with `M_j` applied first (rightmost), i.e.
/// `M_{j-1} ⋯ M_1 M_m ⋯ M_{j+1} M_j`.
pub fn transition_product(spec: &CycleSpec, j: usize) -> Result<TransitionProduct, CycleError> {
    spec.ensure_valid()?;
    spec.node(j)?;
    let m = spec.len();
    let d = spec.nodes[j].incoming_dim();
    let mut product = DMatrix::<f64>::identity(d, d);
    for step in 0..m {
        let idx = (j + step) % m;
        product = build_basic_unchecked(&spec.nodes[idx]) * product;
    }
    Ok(TransitionProduct {
        base_index: j,
        entries: product,
    })
}

/// The partial product `M_{j,l} = M_j ⋯ M_{l+1} M_l` taken cyclically from
/// node `l` forward to node `j` inclusive; shape `d_{j+1} × d_l`. With `l == j`
/// it reduces to the single basic matrix `M_j`.
pub fn partial_product(spec: &CycleSpec, l: usize, j: usize) -> Result<DMatrix<f64>, CycleError> {
    spec.ensure_valid()?;
    spec.node(l)?;
    spec.node(j)?;
    let m = spec.len();
    let factors = (j + m - l) % m + 1;
    let d = spec.nodes[l].incoming_dim();
    let mut product = DMatrix::<f64>::identity(d, d);
    for step in 0..factors {
        let idx = (l + step) % m;
        product = build_basic_unchecked(&spec.nodes[idx]) * product;
    }
    Ok(product)
}
