//! Shared helpers for the integration suites: deterministic random cycle
//! structures, a tiny nested-`Vec` matrix oracle kept deliberately
//! independent of the crate's own linear algebra, and the randomized
//! invariance checkers shared between the property and acceptance targets.

#![allow(dead_code)] // each test target uses its own subset

use hetcycle_core::stability::classify_indices_at;
use hetcycle_core::{
    integrate, significant_spectrum, transition_product, verdict, CycleSpec, GlvSystem, NodeSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fisher–Yates shuffle of `0..n`.
pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        let j = rng.random_range(0..=k);
        p.swap(k, j);
    }
    p
}

/// A random structurally valid cycle.
///
/// Incoming dimensions are drawn in `1..=4` under the cyclic constraint
/// `d_{j+1} ≥ d_j − 1` (nonnegative contracting counts); eigenvalue
/// magnitudes stay in `[0.2, 2]`, away from degeneracy. With `mixed_signs`
/// roughly a third of the transverse eigenvalues come out positive, which
/// exercises the fragmentary-stability paths of the verdict engine.
pub fn random_cycle(rng: &mut impl Rng, mixed_signs: bool) -> CycleSpec {
    loop {
        let m = rng.random_range(1..=5);
        let dims: Vec<usize> = (0..m).map(|_| rng.random_range(1..=4usize)).collect();
        if (0..m).any(|j| dims[(j + 1) % m] + 1 < dims[j]) {
            continue;
        }
        let nodes: Vec<NodeSpec> = (0..m)
            .map(|j| {
                let d = dims[j];
                let d_next = dims[(j + 1) % m];
                let n_t = d - 1;
                let n_c = d_next + 1 - d;
                NodeSpec {
                    id: format!("n{j}"),
                    expanding: rng.random_range(0.2..2.0),
                    contracting: (0..n_c).map(|_| -rng.random_range(0.2..2.0)).collect(),
                    transverse: (0..n_t)
                        .map(|_| {
                            let v = rng.random_range(0.2..2.0);
                            if mixed_signs && rng.random_bool(0.3) {
                                v
                            } else {
                                -v
                            }
                        })
                        .collect(),
                    radial_abscissa: -rng.random_range(0.2..2.0),
                    out_permutation: random_permutation(rng, d_next),
                }
            })
            .collect();
        let spec = CycleSpec::new(nodes);
        assert!(spec.is_valid(), "generator produced an invalid spec");
        return spec;
    }
}

/// Extends every node with one synthetic transverse direction wired to the
/// last slot of the next node, so the added coordinate occupies a transverse
/// slot at every node and never the expanding one: by construction it is
/// insignificant.
pub fn augment_insignificant(spec: &CycleSpec, rng: &mut impl Rng) -> CycleSpec {
    let m = spec.len();
    let nodes: Vec<NodeSpec> = (0..m)
        .map(|j| {
            let mut node = spec.nodes[j].clone();
            let next_incoming = spec.nodes[(j + 1) % m].incoming_dim();
            node.transverse.push(-rng.random_range(0.2..2.0));
            node.out_permutation.push(next_incoming);
            node
        })
        .collect();
    let augmented = CycleSpec::new(nodes);
    assert!(augmented.is_valid(), "augmentation broke the cycle description");
    augmented
}

/// Plain row-major matrix product, the independent oracle for the crate's
/// transition products.
pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = a.len();
    let inner = b.len();
    let cols = b[0].len();
    assert_eq!(a[0].len(), inner);
    let mut out = vec![vec![0.0; cols]; rows];
    for (r, out_row) in out.iter_mut().enumerate() {
        for (c, slot) in out_row.iter_mut().enumerate() {
            *slot = (0..inner).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

/// Builds one node's basic matrix from first principles: eigenvalue-ratio
/// rows assembled by hand, then the row permutation applied.
pub fn oracle_basic_matrix(node: &NodeSpec) -> Vec<Vec<f64>> {
    let n_c = node.contracting.len();
    let n_t = node.transverse.len();
    let rows = n_c + n_t;
    let cols = 1 + n_t;
    let mut pre = vec![vec![0.0; cols]; rows];
    for (d, &c) in node.contracting.iter().enumerate() {
        pre[d][0] = -c / node.expanding;
    }
    for (k, &t) in node.transverse.iter().enumerate() {
        pre[n_c + k][0] = -t / node.expanding;
        pre[n_c + k][1 + k] = 1.0;
    }
    let mut out = vec![vec![0.0; cols]; rows];
    for (r, row) in pre.into_iter().enumerate() {
        out[node.out_permutation[r]] = row;
    }
    out
}

/// The full transition product at `base`, multiplied with the oracle.
pub fn oracle_transition_product(spec: &CycleSpec, base: usize) -> Vec<Vec<f64>> {
    let m = spec.len();
    let d = spec.nodes[base].incoming_dim();
    let mut product: Vec<Vec<f64>> = (0..d)
        .map(|r| (0..d).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();
    for step in 0..m {
        let factor = oracle_basic_matrix(&spec.nodes[(base + step) % m]);
        product = mat_mul(&factor, &product);
    }
    product
}

/// Rotation invariance: the verdict names a property of the geometric cycle,
/// so listing the same nodes starting from a different one must not change it.
pub fn check_rotation_invariance(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    for case in 0..cases {
        let spec = random_cycle(&mut rng, true);
        let baseline = verdict(&spec, 1e-9)
            .map_err(|e| format!("case {case}: verdict failed: {e}"))?
            .verdict;
        for k in 1..spec.len() {
            let rotated = verdict(&spec.rotated(k), 1e-9)
                .map_err(|e| format!("case {case}: rotated verdict failed: {e}"))?
                .verdict;
            if baseline != rotated {
                return Err(format!(
                    "case {case}: rotation by {k} changed the verdict \
                     ({baseline:?} vs {rotated:?}) of {}",
                    spec.to_json()
                ));
            }
        }
    }
    Ok(())
}

/// Base invariance of the nonzero spectrum, within relative tolerance 1e−9.
pub fn check_spectrum_base_invariance(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    for case in 0..cases {
        let spec = random_cycle(&mut rng, true);
        let n1 = spec.nodes.iter().map(|n| n.incoming_dim()).min().unwrap();

        let spectrum_at = |j: usize| -> Result<Vec<(f64, f64)>, String> {
            let product = transition_product(&spec, j)
                .map_err(|e| format!("case {case}: product at {j}: {e}"))?;
            let cls = classify_indices_at(&spec, j)
                .map_err(|e| format!("case {case}: classification at {j}: {e}"))?;
            let mut values: Vec<(f64, f64)> = significant_spectrum(&product, &cls, 1e-9)
                .map_err(|e| format!("case {case}: spectrum at {j}: {e}"))?
                .iter()
                .map(|entry| (entry.value.re, entry.value.im))
                .collect();
            // Keep the n1 largest-modulus eigenvalues: the rest are the
            // structural zeros introduced by rank compression.
            values.sort_by(|a, b| {
                let (ma, mb) = (a.0.hypot(a.1), b.0.hypot(b.1));
                mb.partial_cmp(&ma).unwrap()
            });
            values.truncate(n1);
            Ok(values)
        };

        let reference = spectrum_at(0)?;
        for j in 1..spec.len() {
            let mut other = spectrum_at(j)?;
            for &(re, im) in &reference {
                let (idx, dist) = other
                    .iter()
                    .enumerate()
                    .map(|(i, &(or, oi))| (i, (re - or).hypot(im - oi)))
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .ok_or_else(|| format!("case {case}: eigenvalue count shrank at base {j}"))?;
                let scale = re.hypot(im).max(1.0);
                if dist > 1e-9 * scale {
                    return Err(format!(
                        "case {case}: eigenvalue {re}+{im}i of base 0 unmatched at base {j} \
                         (closest at distance {dist}) for {}",
                        spec.to_json()
                    ));
                }
                other.swap_remove(idx);
            }
        }
    }
    Ok(())
}

/// Insignificant coordinates carry eigenvalues of modulus one (tolerance 1e−6).
pub fn check_insignificant_modulus(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    for case in 0..cases {
        let spec = augment_insignificant(&random_cycle(&mut rng, true), &mut rng);
        let product =
            transition_product(&spec, 0).map_err(|e| format!("case {case}: product: {e}"))?;
        let cls = classify_indices_at(&spec, 0)
            .map_err(|e| format!("case {case}: classification: {e}"))?;
        if cls.significant.iter().all(|&s| s) {
            return Err(format!("case {case}: augmentation added no insignificant index"));
        }
        let entries = significant_spectrum(&product, &cls, 1e-6)
            .map_err(|e| format!("case {case}: spectrum: {e}"))?;
        let insignificant: Vec<_> = entries.iter().filter(|e| !e.significant).collect();
        if insignificant.is_empty() {
            return Err(format!(
                "case {case}: expected an insignificant eigenpair in {}",
                spec.to_json()
            ));
        }
        for entry in insignificant {
            let modulus = entry.value.norm();
            if (modulus - 1.0).abs() >= 1e-6 {
                return Err(format!(
                    "case {case}: insignificant eigenvalue {} has modulus {modulus} in {}",
                    entry.value,
                    spec.to_json()
                ));
            }
            if entry.modulus_anomaly {
                return Err(format!("case {case}: modulus anomaly flagged"));
            }
        }
    }
    Ok(())
}

/// The integrator keeps trajectories in the nonnegative orthant and on the
/// invariant hyperplanes of coordinates that start at zero (tolerance 1e−12).
pub fn check_integrator_invariance(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    for case in 0..cases {
        let n = rng.random_range(2..=4usize);
        // Competitive interactions keep every trajectory bounded.
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { -1.0 } else { -rng.random_range(0.0..1.5) })
                    .collect()
            })
            .collect();
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let sys = GlvSystem::new(r, a).map_err(|e| format!("case {case}: system: {e}"))?;

        let x0: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.05..1.5) })
            .collect();
        let zero_axes: Vec<usize> = (0..n).filter(|&i| x0[i] == 0.0).collect();

        let traj = integrate(&sys, &x0, 15.0, 1e-10, 1e-12)
            .map_err(|e| format!("case {case}: integration: {e}"))?;
        for (k, state) in traj.states.iter().enumerate() {
            for (i, &v) in state.iter().enumerate() {
                if v < -1e-12 {
                    return Err(format!(
                        "case {case}: coordinate {i} left the orthant ({v}) at sample {k}"
                    ));
                }
            }
            for &i in &zero_axes {
                if state[i].abs() > 1e-12 {
                    return Err(format!(
                        "case {case}: coordinate {i} left its hyperplane ({}) at sample {k}",
                        state[i]
                    ));
                }
            }
        }
    }
    Ok(())
}
