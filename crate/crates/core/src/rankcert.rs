//! Generic-rank certification for transition products.
//!
//! A transition product is built from sparse rectangular factors, so it is
//! not obvious that it has full rank. Working with the cycle rotated to
//! start at a node of minimal incoming dimension `n_1`, this module
//! constructs an explicit synthetic assignment of the first-column entries
//! (the only entries of a basic matrix that depend on the eigenvalues) that
//! turns the full-cycle product into an exact permutation matrix. Since the
//! determinant is a polynomial in those entries and is ±1 ≠ 0 at one point,
//! it vanishes only on a measure-zero set: generically the product has rank
//! `n_1`. A randomized sampler complements the certificate by measuring
//! |det| and numerical ranks over uniformly drawn first columns.
//!
//! The synthetic assignment tracks a binary splitting of each node's
//! incoming basis into a "carried" group (size `n_1` at every node) and a
//! discarded group, updated around the cycle by four deterministic rules
//! depending on how the section dimension changes at each step.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cycle::{CycleError, CycleSpec, NodeSpec};

/// Singular values above this threshold count towards the numerical rank.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error)]
pub enum RankError {
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("certification failed: {0}")]
    NotPermutation(String),
}

/// How the carried-group flags are transported across one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SplitCase {
    /// Section dimension unchanged; flags pass through, the departing
    /// coordinate re-enters through the single contracting row.
    EqualDims,
    /// Dimension grows by `zeros`; that many discarded slots are prepended.
    Grow { zeros: usize },
    /// Dimension shrinks and the departing coordinate was discarded; its
    /// flag is dropped.
    ShrinkDropZero,
    /// Dimension shrinks but the departing coordinate was carried; the
    /// discarded incoming slot `slot` is promoted to carry it.
    ShrinkPromote { slot: usize },
}

/// The splitting state at one node of the rotated cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitVector {
    /// Node index in the rotated cycle.
    pub node: usize,
    /// Node index in the input spec.
    pub original_node: usize,
    /// Flag per incoming slot: 1 = carried, 0 = discarded. Exactly `n_1`
    /// ones at every node.
    pub h: Vec<u8>,
    /// Rule applied when leaving this node.
    pub case: SplitCase,
    /// Row of the synthetic first column holding the single 1 (None: the
    /// first column is identically zero at this node).
    pub b_row: Option<usize>,
}

/// The splitting for a whole cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitSequence {
    /// Input node index that became node 0 (first node of minimal incoming
    /// dimension).
    pub rotation: usize,
    pub n1: usize,
    pub nodes: Vec<SplitVector>,
}

/// Certificate that the cycle's transition product is generically
/// nondegenerate: a synthetic first-column assignment under which the
/// product is exactly a permutation matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Certificate {
    pub rotation: usize,
    pub n1: usize,
    pub splits: Vec<SplitVector>,
    /// The integer product matrix (a permutation matrix).
    pub product: Vec<Vec<i64>>,
    /// Its determinant: +1 or −1, exactly.
    pub determinant: i64,
}

/// Statistics from sampling random first-column entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSample {
    pub rotation: usize,
    pub n1: usize,
    pub trials: usize,
    /// Minimum |det| of the product at the minimal-dimension base.
    pub min_abs_det: f64,
    pub median_abs_det: f64,
    /// Minimum over trials and bases of the `n1`-th largest singular value.
    pub min_compressed_sv: f64,
    /// True when every trial gave numerical rank `n1` at every base.
    pub full_rank: bool,
}

fn rotation_to_minimal(spec: &CycleSpec) -> usize {
    let mut best = 0;
    for (j, node) in spec.nodes.iter().enumerate() {
        if node.incoming_dim() < spec.nodes[best].incoming_dim() {
            best = j;
        }
    }
    best
}

/// Computes the carried/discarded splitting around the cycle.
///
/// The cycle is rotated so its first node has minimal incoming dimension
/// `n_1`; the splitting starts from all-carried there and each step applies
/// one of the four transport rules followed by the node's out-permutation.
/// The closure back to all-carried at the end is forced by the constant
/// ones-count and is asserted.
pub fn split_vectors(spec: &CycleSpec) -> Result<SplitSequence, RankError> {
    spec.ensure_valid()?;
    let rotation = rotation_to_minimal(spec);
    let rotated = spec.rotated(rotation);
    let m = rotated.len();
    let n1 = rotated.nodes[0].incoming_dim();

    let mut nodes = Vec::with_capacity(m);
    let mut h: Vec<u8> = vec![1; n1];
    for (j, node) in rotated.nodes.iter().enumerate() {
        let (case, b_row, h_tilde) = transport(node, &h);
        let mut h_next = vec![0u8; node.outgoing_dim()];
        for (r, &flag) in h_tilde.iter().enumerate() {
            h_next[node.out_permutation[r]] = flag;
        }
        nodes.push(SplitVector {
            node: j,
            original_node: (j + rotation) % spec.len(),
            h,
            case,
            b_row,
        });
        h = h_next;
    }
    debug_assert!(h.iter().all(|&f| f == 1), "splitting failed to close");
    Ok(SplitSequence { rotation, n1, nodes })
}

/// Applies the transport rule at one node: returns the rule used, the row
/// of the synthetic 1 in the first column, and the pre-permutation flags.
fn transport(node: &NodeSpec, h: &[u8]) -> (SplitCase, Option<usize>, Vec<u8>) {
    let n_c = node.n_contracting();
    if n_c >= 1 {
        // Dimension equal (n_c = 1) or growing by n_c − 1: the departing
        // coordinate's flag travels through contracting row n_c − 1, the
        // rows above it are fresh discarded slots.
        let zeros = n_c - 1;
        let mut h_tilde = vec![0u8; zeros];
        h_tilde.extend_from_slice(h);
        let case = if zeros == 0 {
            SplitCase::EqualDims
        } else {
            SplitCase::Grow { zeros }
        };
        (case, Some(zeros), h_tilde)
    } else if h[0] == 0 {
        // Shrink with a discarded departing coordinate: drop its flag.
        (SplitCase::ShrinkDropZero, None, h[1..].to_vec())
    } else {
        // Shrink with a carried departing coordinate: promote the first
        // discarded slot. One exists because the carried count n_1 is at
        // most the shrunken dimension, so h has a zero beyond position 0.
        let slot = h
            .iter()
            .skip(1)
            .position(|&f| f == 0)
            .map(|p| p + 1)
            .expect("a discarded slot exists when shrinking from a carried head");
        let mut h_tilde = h[1..].to_vec();
        h_tilde[slot - 1] = 1;
        (SplitCase::ShrinkPromote { slot }, Some(slot - 1), h_tilde)
    }
}

/// Builds a basic matrix with the eigenvalue-dependent first column replaced
/// by arbitrary entries.
fn synthetic_basic<T>(node: &NodeSpec, first_column: &[T]) -> DMatrix<T>
where
    T: nalgebra::Scalar + num_traits::Zero + num_traits::One + Copy,
{
    let rows = node.outgoing_dim();
    let cols = node.incoming_dim();
    let n_c = node.n_contracting();
    let mut pre = DMatrix::from_element(rows, cols, T::zero());
    for (r, &b) in first_column.iter().enumerate() {
        pre[(r, 0)] = b;
    }
    for i in 1..cols {
        pre[(n_c + i - 1, i)] = T::one();
    }
    let mut permuted = DMatrix::from_element(rows, cols, T::zero());
    for r in 0..rows {
        permuted.row_mut(node.out_permutation[r]).copy_from(&pre.row(r));
    }
    permuted
}

/// Constructs the synthetic integer product and verifies it is a
/// permutation matrix with determinant ±1 (exact integer arithmetic).
pub fn certificate(spec: &CycleSpec) -> Result<Certificate, RankError> {
    let splits = split_vectors(spec)?;
    let rotated = spec.rotated(splits.rotation);
    let n1 = splits.n1;

    let mut product = DMatrix::<i64>::identity(n1, n1);
    for (node, split) in rotated.nodes.iter().zip(&splits.nodes) {
        let mut column = vec![0i64; node.outgoing_dim()];
        if let Some(row) = split.b_row {
            column[row] = 1;
        }
        product = synthetic_basic(node, &column) * product;
    }

    let determinant = permutation_sign(&product).map_err(RankError::NotPermutation)?;
    Ok(Certificate {
        rotation: splits.rotation,
        n1,
        splits: splits.nodes,
        product: (0..product.nrows())
            .map(|r| product.row(r).iter().copied().collect())
            .collect(),
        determinant,
    })
}

/// Checks that an integer matrix is a permutation matrix and returns the
/// sign of the permutation.
fn permutation_sign(m: &DMatrix<i64>) -> Result<i64, String> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(format!("product is {}x{}, not square", n, m.ncols()));
    }
    // image[col] = the row holding that column's single 1
    let mut image = vec![usize::MAX; n];
    for c in 0..n {
        for r in 0..n {
            match m[(r, c)] {
                0 => {}
                1 => {
                    if image[c] != usize::MAX {
                        return Err(format!("column {c} has more than one nonzero entry"));
                    }
                    image[c] = r;
                }
                other => {
                    return Err(format!("entry ({r},{c}) is {other}, not 0 or 1"));
                }
            }
        }
        if image[c] == usize::MAX {
            return Err(format!("column {c} is zero"));
        }
    }
    let mut seen = vec![false; n];
    for &r in &image {
        if seen[r] {
            return Err(format!("row {r} holds more than one nonzero entry"));
        }
        seen[r] = true;
    }
    // Parity by cycle decomposition.
    let mut visited = vec![false; n];
    let mut sign = 1i64;
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut len = 0;
        let mut c = start;
        while !visited[c] {
            visited[c] = true;
            c = image[c];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    Ok(sign)
}

/// Computes the product over the rotated cycle based at `base`, with the
/// given per-node synthetic first columns.
fn sampled_product(rotated: &CycleSpec, columns: &[Vec<f64>], base: usize) -> DMatrix<f64> {
    let m = rotated.len();
    let mut product = DMatrix::<f64>::identity(
        rotated.nodes[base].incoming_dim(),
        rotated.nodes[base].incoming_dim(),
    );
    for step in 0..m {
        let j = (base + step) % m;
        product = synthetic_basic(&rotated.nodes[j], &columns[j]) * product;
    }
    product
}

/// Samples random first-column entries (uniform on ±[0.1, 2]) and measures
/// how nondegenerate the transition products are.
///
/// Per trial: |det| of the product at the minimal-dimension base, and the
/// numerical rank (singular values above [`RANK_TOL`]) of the product at
/// every base, which must equal `n_1` everywhere. Trials run in parallel
/// with independent deterministic generators (`seed` + trial stream).
pub fn randomized_rank(
    spec: &CycleSpec,
    trials: usize,
    seed: u64,
) -> Result<RankSample, RankError> {
    spec.ensure_valid()?;
    if trials == 0 {
        return Err(RankError::NoTrials);
    }
    let rotation = rotation_to_minimal(spec);
    let rotated = spec.rotated(rotation);
    let m = rotated.len();
    let n1 = rotated.nodes[0].incoming_dim();

    let per_trial: Vec<(f64, f64, bool)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let columns: Vec<Vec<f64>> = rotated
                .nodes
                .iter()
                .map(|node| {
                    (0..node.outgoing_dim())
                        .map(|_| {
                            let magnitude = rng.random_range(0.1..=2.0);
                            if rng.random_bool(0.5) {
                                magnitude
                            } else {
                                -magnitude
                            }
                        })
                        .collect()
                })
                .collect();
            let det = sampled_product(&rotated, &columns, 0).determinant().abs();
            let mut min_sv = f64::INFINITY;
            let mut full_rank = true;
            for base in 0..m {
                let product = sampled_product(&rotated, &columns, base);
                let mut sv: Vec<f64> = product.svd(false, false).singular_values.iter().copied().collect();
                sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let rank = sv.iter().filter(|&&s| s > RANK_TOL).count();
                full_rank &= rank == n1;
                min_sv = min_sv.min(sv[n1 - 1]);
            }
            (det, min_sv, full_rank)
        })
        .collect();

    let mut dets: Vec<f64> = per_trial.iter().map(|t| t.0).collect();
    dets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_abs_det = if dets.len() % 2 == 1 {
        dets[dets.len() / 2]
    } else {
        (dets[dets.len() / 2 - 1] + dets[dets.len() / 2]) / 2.0
    };
    Ok(RankSample {
        rotation,
        n1,
        trials,
        min_abs_det: dets[0],
        median_abs_det,
        min_compressed_sv: per_trial.iter().map(|t| t.1).fold(f64::INFINITY, f64::min),
        full_rank: per_trial.iter().all(|t| t.2),
    })
}
