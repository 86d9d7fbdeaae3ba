//! Significant/insignificant index classification, spectral condition checks,
//! the stability verdict, and a nonlinear map-iteration oracle.
//!
//! The verdict logic: with every radial abscissa and contracting eigenvalue
//! negative, a cycle whose transverse eigenvalues are all negative is decided
//! by the spectral radius of the transition product (greater than one ⇒
//! asymptotically stable, less than one ⇒ completely unstable). When some
//! transverse eigenvalue is positive, the basic matrices acquire negative
//! entries; the cycle is fragmentarily asymptotically stable iff, for every
//! node following a negative-entry node, the dominant significant eigenvalue
//! of the transition product based there is real, exceeds one, and has an
//! eigenvector with nonzero components of a single sign — otherwise it is
//! completely unstable. Degenerate spectra (modulus ties, |λ| ≈ 1, zero
//! eigenvector components) are reported Inconclusive, never guessed.

use std::collections::BTreeSet;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycle::{CycleError, CycleSpec};
use crate::eigen;
use crate::matrix::{basic_matrix, transition_product, TransitionProduct};

#[derive(Debug, Clone, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("classification base {cls_base} does not match product base {product_base}")]
    BaseMismatch { cls_base: usize, product_base: usize },
    #[error("classification covers {cls_dim} slots but the product is {product_dim}-dimensional")]
    DimensionMismatch { cls_dim: usize, product_dim: usize },
    #[error("invalid iteration start: {0}")]
    InvalidStart(String),
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
}

/// Real/imaginary parts of a complex scalar, serialisable for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexScalar {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexScalar {
    fn from(value: Complex64) -> Self {
        ComplexScalar { re: value.re, im: value.im }
    }
}

impl ComplexScalar {
    pub fn norm(&self) -> f64 {
        Complex64::new(self.re, self.im).norm()
    }
}

/// Which incoming coordinates of the base node ever reach an expanding slot.
///
/// Slot 0 is the expanding coordinate itself; slots `1..d` are transverse.
/// An index is insignificant iff its orbit under the chained out-permutations
/// occupies a transverse slot at every node it ever visits (the orbit then
/// closes on itself); such indices carry modulus-1 eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexClassification {
    /// Node whose incoming slots are classified.
    pub base: usize,
    /// Per incoming slot of the base node.
    pub significant: Vec<bool>,
    /// Per slot: the (node, incoming-slot) pairs visited, ending at the first
    /// expanding slot (significant) or at the first repeated pair
    /// (insignificant).
    pub orbits: Vec<Vec<(usize, usize)>>,
}

impl IndexClassification {
    /// Indices of the base node's insignificant incoming slots.
    pub fn insignificant_slots(&self) -> Vec<usize> {
        self.significant
            .iter()
            .enumerate()
            .filter(|(_, &sig)| !sig)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Classifies the incoming coordinates of node 0.
pub fn classify_indices(spec: &CycleSpec) -> Result<IndexClassification, CycleError> {
    classify_indices_at(spec, 0)
}

/// Classifies the incoming coordinates of an arbitrary base node.
///
/// The orbit of a slot is followed for as many turns of the cycle as needed:
/// a slot that comes back to the base node in a *different* transverse slot
/// may still reach an expanding slot on a later turn, so tracing stops only
/// at an expanding slot or at an exact repeat.
pub fn classify_indices_at(
    spec: &CycleSpec,
    base: usize,
) -> Result<IndexClassification, CycleError> {
    spec.ensure_valid()?;
    spec.node(base)?;
    let m = spec.len();
    let d = spec.nodes[base].incoming_dim();
    let mut significant = Vec::with_capacity(d);
    let mut orbits = Vec::with_capacity(d);
    for slot0 in 0..d {
        let mut orbit = vec![(base, slot0)];
        let (mut j, mut s) = (base, slot0);
        let sig = loop {
            if s == 0 {
                break true;
            }
            let node = &spec.nodes[j];
            let out_slot = node.n_contracting() + (s - 1);
            let next_slot = node.out_permutation[out_slot];
            let next_node = (j + 1) % m;
            let state = (next_node, next_slot);
            let seen = orbit.contains(&state);
            orbit.push(state);
            if seen {
                break false;
            }
            j = next_node;
            s = next_slot;
        };
        significant.push(sig);
        orbits.push(orbit);
    }
    Ok(IndexClassification { base, significant, orbits })
}

/// One eigenpair of a transition product with its classification.
#[derive(Debug, Clone)]
pub struct SpectrumEntry {
    pub value: Complex64,
    pub vector: DVector<Complex64>,
    /// True unless the eigenvector is supported (up to `tol`) entirely on the
    /// insignificant slots.
    pub significant: bool,
    /// Set when an insignificant-flagged eigenvalue fails `||λ|−1| < tol`.
    pub modulus_anomaly: bool,
}

/// Full eigendecomposition of a transition product with per-pair
/// significant/insignificant flags.
pub fn significant_spectrum(
    product: &TransitionProduct,
    cls: &IndexClassification,
    tol: f64,
) -> Result<Vec<SpectrumEntry>, StabilityError> {
    check_tol(tol)?;
    if cls.base != product.base_index {
        return Err(StabilityError::BaseMismatch {
            cls_base: cls.base,
            product_base: product.base_index,
        });
    }
    if cls.significant.len() != product.entries.nrows() {
        return Err(StabilityError::DimensionMismatch {
            cls_dim: cls.significant.len(),
            product_dim: product.entries.nrows(),
        });
    }
    let pairs = eigen::eigenpairs(&product.entries)
        .map_err(|e| StabilityError::Eigen(e.to_string()))?;
    let entries = pairs
        .into_iter()
        .map(|pair| {
            let max_norm = pair.vector.iter().map(|x| x.norm()).fold(0.0, f64::max);
            let significant = pair
                .vector
                .iter()
                .enumerate()
                .any(|(i, x)| cls.significant[i] && x.norm() >= tol * max_norm);
            let modulus_anomaly = !significant && (pair.value.norm() - 1.0).abs() >= tol;
            SpectrumEntry {
                value: pair.value,
                vector: pair.vector,
                significant,
                modulus_anomaly,
            }
        })
        .collect();
    Ok(entries)
}

/// Outcome of the three spectral conditions on one transition product.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    /// Base node of the checked product.
    pub base: usize,
    pub lambda_max: ComplexScalar,
    /// Condition (i): the dominant significant eigenvalue is real.
    pub is_real: bool,
    /// Condition (ii): it exceeds one (for a complex or tied dominant value
    /// this records whether its modulus exceeds one).
    pub exceeds_one: bool,
    /// Condition (iii): the eigenvector has nonzero components of one sign.
    pub uniform_sign: bool,
    /// Eigenvector scaled so its largest-magnitude component is +1 (real
    /// dominant eigenvalue only).
    pub eigenvector: Option<Vec<f64>>,
    /// Degenerate situations that make the conditions undecidable: spectral
    /// radius within `tol` of 1, modulus ties between non-conjugate
    /// eigenvalues, eigenvector components within `tol` of zero, or an empty
    /// significant spectrum. Maps to an Inconclusive verdict upstream.
    pub degenerate: Option<String>,
}

impl ConditionCheck {
    /// True when all three conditions hold and nothing was degenerate.
    pub fn passes(&self) -> bool {
        self.degenerate.is_none() && self.is_real && self.exceeds_one && self.uniform_sign
    }
}

/// Evaluates the three conditions on the dominant significant eigenvalue of
/// `product`.
pub fn check_lemma_conditions(
    product: &TransitionProduct,
    cls: &IndexClassification,
    tol: f64,
) -> Result<ConditionCheck, StabilityError> {
    let spectrum = significant_spectrum(product, cls, tol)?;
    Ok(conditions_from_spectrum(product.base_index, &spectrum, tol))
}

fn conditions_from_spectrum(
    base: usize,
    spectrum: &[SpectrumEntry],
    tol: f64,
) -> ConditionCheck {
    let degenerate_check = |reason: String| ConditionCheck {
        base,
        lambda_max: Complex64::new(0.0, 0.0).into(),
        is_real: false,
        exceeds_one: false,
        uniform_sign: false,
        eigenvector: None,
        degenerate: Some(reason),
    };

    let significant: Vec<&SpectrumEntry> = spectrum.iter().filter(|e| e.significant).collect();
    if significant.is_empty() {
        return degenerate_check("no significant eigenvalue in the spectrum".to_string());
    }
    let max_mod = significant
        .iter()
        .map(|e| e.value.norm())
        .fold(0.0, f64::max);
    if (max_mod - 1.0).abs() <= tol {
        return degenerate_check(format!(
            "dominant significant eigenvalue modulus {max_mod} is within tolerance of 1"
        ));
    }
    let candidates: Vec<&&SpectrumEntry> = significant
        .iter()
        .filter(|e| e.value.norm() >= max_mod * (1.0 - tol))
        .collect();

    match candidates.len() {
        1 => {
            let entry = candidates[0];
            let lambda = entry.value;
            let is_real = lambda.im.abs() <= tol * lambda.norm().max(1.0);
            if !is_real {
                // A lone complex candidate only happens on borderline numerics;
                // treat like a conjugate pair: condition (i) fails.
                return ConditionCheck {
                    base,
                    lambda_max: lambda.into(),
                    is_real: false,
                    exceeds_one: lambda.norm() > 1.0,
                    uniform_sign: false,
                    eigenvector: None,
                    degenerate: None,
                };
            }
            match normalized_real_vector(&entry.vector, tol) {
                Ok((vec, uniform)) => ConditionCheck {
                    base,
                    lambda_max: lambda.into(),
                    is_real: true,
                    exceeds_one: lambda.re > 1.0,
                    uniform_sign: uniform,
                    eigenvector: Some(vec),
                    degenerate: None,
                },
                Err(reason) => ConditionCheck {
                    base,
                    lambda_max: lambda.into(),
                    is_real: true,
                    exceeds_one: lambda.re > 1.0,
                    uniform_sign: false,
                    eigenvector: None,
                    degenerate: Some(reason),
                },
            }
        }
        2 => {
            let a = candidates[0].value;
            let b = candidates[1].value;
            let conjugates = (a - b.conj()).norm() <= tol * (1.0 + max_mod)
                && a.im.abs() > tol * (1.0 + max_mod);
            if conjugates {
                let lambda = if a.im > 0.0 { a } else { b };
                ConditionCheck {
                    base,
                    lambda_max: lambda.into(),
                    is_real: false,
                    exceeds_one: lambda.norm() > 1.0,
                    uniform_sign: false,
                    eigenvector: None,
                    degenerate: None,
                }
            } else {
                degenerate_check(format!(
                    "modulus tie between significant eigenvalues {a} and {b}"
                ))
            }
        }
        n => degenerate_check(format!(
            "modulus tie among {n} significant eigenvalues at modulus {max_mod}"
        )),
    }
}

/// Scales a (numerically real) eigenvector so its largest-magnitude component
/// is +1; errors when any component is within `tol` of zero.
fn normalized_real_vector(
    vector: &DVector<Complex64>,
    tol: f64,
) -> Result<(Vec<f64>, bool), String> {
    let re: Vec<f64> = vector.iter().map(|x| x.re).collect();
    let mut pivot = 0;
    for (i, v) in re.iter().enumerate() {
        if v.abs() > re[pivot].abs() {
            pivot = i;
        }
    }
    let scale = re[pivot];
    if scale == 0.0 {
        return Err("eigenvector is numerically zero".to_string());
    }
    let normalized: Vec<f64> = re.iter().map(|v| v / scale).collect();
    if normalized.iter().any(|v| v.abs() < tol) {
        return Err("eigenvector has a component within tolerance of zero".to_string());
    }
    let uniform = normalized.iter().all(|&v| v > 0.0);
    Ok((normalized, uniform))
}

/// Stability verdict for a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    AsymptoticallyStable,
    FragmentarilyAsymptoticallyStable,
    CompletelyUnstable,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Verdict::AsymptoticallyStable => "AsymptoticallyStable",
            Verdict::FragmentarilyAsymptoticallyStable => "FragmentarilyAsymptoticallyStable",
            Verdict::CompletelyUnstable => "CompletelyUnstable",
            Verdict::Inconclusive => "Inconclusive",
        };
        f.write_str(name)
    }
}

/// Sign diagnostics of one node's spectrum, recorded in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodePrecondition {
    pub node: usize,
    pub id: String,
    pub radial_negative: bool,
    pub contracting_negative: bool,
    pub transverse_all_negative: bool,
}

/// The verdict plus all evidence used to reach it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub reason: String,
    pub tol: f64,
    pub preconditions: Vec<NodePrecondition>,
    pub preconditions_ok: bool,
    pub all_transverse_negative: bool,
    /// Nodes whose basic matrix contains a negative entry.
    pub negative_entry_nodes: Vec<usize>,
    /// Insignificant incoming slots of node 0.
    pub insignificant_slots: Vec<usize>,
    pub lambda_max: Option<ComplexScalar>,
    pub eigenvector: Option<Vec<f64>>,
    /// Condition checks per examined base node.
    pub checks: Vec<ConditionCheck>,
}

fn check_tol(tol: f64) -> Result<(), StabilityError> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(StabilityError::InvalidTolerance(tol))
    }
}

/// Decides the stability of the cycle.
pub fn verdict(spec: &CycleSpec, tol: f64) -> Result<StabilityReport, StabilityError> {
    check_tol(tol)?;
    spec.ensure_valid()?;
    let m = spec.len();

    let preconditions: Vec<NodePrecondition> = spec
        .nodes
        .iter()
        .enumerate()
        .map(|(j, node)| NodePrecondition {
            node: j,
            id: node.id.clone(),
            radial_negative: node.radial_abscissa < 0.0,
            contracting_negative: node.contracting.iter().all(|&c| c < 0.0),
            transverse_all_negative: node.transverse.iter().all(|&t| t < 0.0),
        })
        .collect();
    let preconditions_ok = preconditions
        .iter()
        .all(|p| p.radial_negative && p.contracting_negative);
    let all_transverse_negative = preconditions.iter().all(|p| p.transverse_all_negative);

    let cls0 = classify_indices(spec)?;
    let insignificant_slots = cls0.insignificant_slots();

    let mut negative_entry_nodes = Vec::new();
    for j in 0..m {
        let basic = basic_matrix(spec, j)?;
        if basic.entries.iter().any(|&v| v < 0.0) {
            negative_entry_nodes.push(j);
        }
    }

    let mut report = StabilityReport {
        verdict: Verdict::Inconclusive,
        reason: String::new(),
        tol,
        preconditions,
        preconditions_ok,
        all_transverse_negative,
        negative_entry_nodes: negative_entry_nodes.clone(),
        insignificant_slots,
        lambda_max: None,
        eigenvector: None,
        checks: Vec::new(),
    };

    if !preconditions_ok {
        report.reason = "theorem preconditions violated: every radial abscissa and \
                         contracting eigenvalue must be negative"
            .to_string();
        return Ok(report);
    }

    if all_transverse_negative {
        // All basic matrices are nonnegative, so the spectral radius over the
        // significant eigenvalues is attained by a real nonnegative eigenvalue
        // and decides between asymptotic stability and complete instability.
        let product = transition_product(spec, 0)?;
        let spectrum = significant_spectrum(&product, &cls0, tol)?;
        let check = conditions_from_spectrum(0, &spectrum, tol);
        let significant: Vec<&SpectrumEntry> =
            spectrum.iter().filter(|e| e.significant).collect();
        if significant.is_empty() {
            report.reason = "no significant eigenvalue in the spectrum".to_string();
            report.checks.push(check);
            return Ok(report);
        }
        let rho = significant
            .iter()
            .map(|e| e.value.norm())
            .fold(0.0, f64::max);
        // Representative of the spectral radius: largest real part among the
        // maximal-modulus eigenvalues (the nonnegative Perron root).
        let rep = significant
            .iter()
            .filter(|e| e.value.norm() >= rho * (1.0 - tol))
            .max_by(|a, b| a.value.re.partial_cmp(&b.value.re).unwrap())
            .unwrap();
        report.lambda_max = Some(rep.value.into());
        if rep.value.im.abs() <= tol * rep.value.norm().max(1.0) {
            if let Ok((vec, _)) = normalized_real_vector(&rep.vector, tol) {
                report.eigenvector = Some(vec);
            }
        }
        report.checks.push(check);
        if (rho - 1.0).abs() <= tol {
            report.reason = format!(
                "spectral radius {rho} of the transition product is within tolerance of 1"
            );
            return Ok(report);
        }
        if rho > 1.0 {
            report.verdict = Verdict::AsymptoticallyStable;
            report.reason = format!(
                "all transverse eigenvalues negative and spectral radius {rho} > 1"
            );
        } else {
            report.verdict = Verdict::CompletelyUnstable;
            report.reason = format!(
                "all transverse eigenvalues negative and spectral radius {rho} < 1"
            );
        }
        return Ok(report);
    }

    // Mixed transverse signs: check the conditions at every node that follows
    // a negative-entry node.
    if negative_entry_nodes.is_empty() {
        report.reason = "some transverse eigenvalue is non-negative yet no basic matrix \
                         has a negative entry (boundary spectrum)"
            .to_string();
        return Ok(report);
    }
    let targets: BTreeSet<usize> = negative_entry_nodes.iter().map(|&j| (j + 1) % m).collect();
    let mut all_pass = true;
    let mut failure: Option<(usize, String)> = None;
    for &target in &targets {
        let cls = classify_indices_at(spec, target)?;
        let product = transition_product(spec, target)?;
        let check = check_lemma_conditions(&product, &cls, tol)?;
        if let Some(reason) = &check.degenerate {
            report.reason = format!("degenerate spectrum at base node {target}: {reason}");
            report.checks.push(check);
            return Ok(report);
        }
        if !check.passes() && failure.is_none() {
            let why = if !check.is_real {
                "dominant significant eigenvalue is not real"
            } else if !check.exceeds_one {
                "dominant significant eigenvalue does not exceed 1"
            } else {
                "eigenvector components do not share one sign"
            };
            failure = Some((target, why.to_string()));
        }
        all_pass &= check.passes();
        report.checks.push(check);
    }
    if let Some(first) = report.checks.first() {
        report.lambda_max = Some(first.lambda_max);
        report.eigenvector = first.eigenvector.clone();
    }
    if all_pass {
        report.verdict = Verdict::FragmentarilyAsymptoticallyStable;
        report.reason = format!(
            "conditions hold at every checked base node ({:?})",
            targets.iter().copied().collect::<Vec<_>>()
        );
    } else {
        let (node, why) = failure.unwrap();
        report.verdict = Verdict::CompletelyUnstable;
        report.reason = format!("conditions fail at base node {node}: {why}");
    }
    Ok(report)
}

/// One recorded passage of the map iteration: the incoming log coordinates at
/// a node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapPassage {
    pub node: usize,
    /// `(ln w, ln |z_1|, ..)` at arrival.
    pub log_state: Vec<f64>,
}

impl MapPassage {
    /// The coordinates themselves (may underflow to 0 for deep orbits).
    pub fn state(&self) -> Vec<f64> {
        self.log_state.iter().map(|&v| v.exp()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MapOutcome {
    /// Every coordinate fell below the floor at the given passage.
    Converged { step: usize },
    /// Some coordinate reached 1 (or overflowed) at the given passage.
    Diverged { step: usize },
    StepsExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapOrbit {
    pub passages: Vec<MapPassage>,
    pub outcome: MapOutcome,
}

/// Iterates the collection of restricted node maps from a start on node 0's
/// incoming section.
///
/// In log coordinates each map application is exactly the basic matrix
/// (integration constants set to 1), so the orbit is computed as repeated
/// matrix-vector products on `(ln w, ln|z|..)`. Divergence means some
/// coordinate `exp(η_i)` reached 1 — crossing, rounding up from below, or
/// overflowing — and convergence means every coordinate dropped below
/// `floor`.
pub fn iterate_maps(
    spec: &CycleSpec,
    w: f64,
    z: &[f64],
    steps: usize,
    floor: f64,
) -> Result<MapOrbit, StabilityError> {
    spec.ensure_valid()?;
    if !(w > 0.0) || !w.is_finite() {
        return Err(StabilityError::InvalidStart(format!(
            "w must be positive and finite, got {w}"
        )));
    }
    let n_t = spec.nodes[0].n_transverse();
    if z.len() != n_t {
        return Err(StabilityError::InvalidStart(format!(
            "expected {n_t} transverse coordinates, got {}",
            z.len()
        )));
    }
    if z.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return Err(StabilityError::InvalidStart(
            "transverse coordinates must be nonzero and finite".to_string(),
        ));
    }
    if !(floor > 0.0 && floor < 1.0) {
        return Err(StabilityError::InvalidStart(format!(
            "floor must lie in (0, 1), got {floor}"
        )));
    }

    let m = spec.len();
    let matrices: Vec<_> = (0..m)
        .map(|j| crate::matrix::build_basic_unchecked(&spec.nodes[j]))
        .collect();

    let mut eta = DVector::from_iterator(
        1 + n_t,
        std::iter::once(w.ln()).chain(z.iter().map(|v| v.abs().ln())),
    );

    // Outcomes are judged on the coordinates exp(η) themselves: a coordinate
    // "reaches 1" as soon as its log is within one rounding step of 0, which
    // is what makes escape from a decaying log-norm a finite-step event.
    let classify = |eta: &DVector<f64>| -> Option<MapOutcome> {
        if eta.iter().any(|&v| v.is_nan() || v.exp() >= 1.0) {
            return Some(MapOutcome::Diverged { step: usize::MAX });
        }
        if eta.iter().all(|&v| v.exp() < floor) {
            return Some(MapOutcome::Converged { step: usize::MAX });
        }
        None
    };

    let mut passages = vec![MapPassage {
        node: 0,
        log_state: eta.iter().copied().collect(),
    }];
    let stamp = |outcome: MapOutcome, step: usize| match outcome {
        MapOutcome::Diverged { .. } => MapOutcome::Diverged { step },
        MapOutcome::Converged { .. } => MapOutcome::Converged { step },
        other => other,
    };
    if let Some(outcome) = classify(&eta) {
        return Ok(MapOrbit { passages, outcome: stamp(outcome, 0) });
    }

    for k in 0..steps {
        let j = k % m;
        eta = &matrices[j] * eta;
        passages.push(MapPassage {
            node: (k + 1) % m,
            log_state: eta.iter().copied().collect(),
        });
        if let Some(outcome) = classify(&eta) {
            return Ok(MapOrbit { passages, outcome: stamp(outcome, k + 1) });
        }
    }
    Ok(MapOrbit { passages, outcome: MapOutcome::StepsExhausted })
}
