//! Generalised Lotka-Volterra systems realising heteroclinic cycles.
//!
//! The model is `ẋ_i = x_i (r_i + Σ_j a_ij x_j)` on the nonnegative orthant;
//! every coordinate hyperplane is flow-invariant, which is what makes these
//! systems a natural home for heteroclinic cycles between equilibria lying
//! in nested coordinate subspaces. Throughout, the *normal form* convention
//! is `r_i = 1`, `a_ii = −1`, which places an equilibrium at 1 on every
//! coordinate axis, stable along its own axis.
//!
//! The module computes axis, planar and three-species interior equilibria
//! with their spectra, decides two-species phase portraits and two families
//! of three-species sufficient conditions for heteroclinic connections,
//! constructs forward-invariant boxes certifying global attraction, and
//! assembles complete cycle descriptions ([`CycleSpec`]) from a list of
//! stations (equilibrium support + connection subspace), including the two
//! worked five-species examples.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycle::{CycleSpec, NodeSpec};
use crate::eigen;
use crate::stability::ComplexScalar;

/// Strict inequalities closer than this to equality are flagged degenerate.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Max-norm residual bound for reported equilibria.
pub const EQUILIBRIUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error)]
pub enum GlvError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("index {index} out of range for a {n}-species system")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("indices must be distinct, got {0:?}")]
    RepeatedIndices(Vec<usize>),
    #[error("species {0} is not in normal form (r = 1, self-interaction = -1)")]
    NotNormalForm(usize),
    #[error("no planar equilibrium for pair ({i}, {j}): {reason}")]
    NoEquilibrium { i: usize, j: usize, reason: String },
    #[error("linear system for the interior equilibrium is singular (det = {0})")]
    SingularInterior(f64),
    #[error("no invariant box: {0}")]
    NoBox(String),
    #[error("invalid cycle station {station}: {reason}")]
    BadStation { station: usize, reason: String },
    #[error("malformed system JSON: {0}")]
    Json(String),
}

/// The model `ẋ_i = x_i (r_i + Σ_j a_ij x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlvSystem {
    pub n: usize,
    pub r: Vec<f64>,
    pub a: Vec<Vec<f64>>,
}

impl GlvSystem {
    pub fn new(r: Vec<f64>, a: Vec<Vec<f64>>) -> Result<Self, GlvError> {
        let sys = GlvSystem { n: r.len(), r, a };
        sys.validate()?;
        Ok(sys)
    }

    /// Normal-form constructor: `r_i = 1` with the given interaction matrix
    /// (whose diagonal must be −1).
    pub fn normal(a: Vec<Vec<f64>>) -> Result<Self, GlvError> {
        let n = a.len();
        let sys = GlvSystem { n, r: vec![1.0; n], a };
        sys.validate()?;
        for i in 0..n {
            if sys.a[i][i] != -1.0 {
                return Err(GlvError::NotNormalForm(i));
            }
        }
        Ok(sys)
    }

    pub fn validate(&self) -> Result<(), GlvError> {
        if self.n == 0 {
            return Err(GlvError::InvalidSystem("empty system".to_string()));
        }
        if self.r.len() != self.n {
            return Err(GlvError::InvalidSystem(format!(
                "r has {} entries, expected {}",
                self.r.len(),
                self.n
            )));
        }
        if self.a.len() != self.n || self.a.iter().any(|row| row.len() != self.n) {
            return Err(GlvError::InvalidSystem(format!(
                "a must be {0}x{0}",
                self.n
            )));
        }
        let finite = self.r.iter().all(|v| v.is_finite())
            && self.a.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(GlvError::InvalidSystem(
                "all coefficients must be finite".to_string(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GlvError> {
        let sys: GlvSystem =
            serde_json::from_str(text).map_err(|e| GlvError::Json(e.to_string()))?;
        sys.validate()?;
        Ok(sys)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("system serialises")
    }

    fn check_index(&self, i: usize) -> Result<(), GlvError> {
        if i < self.n {
            Ok(())
        } else {
            Err(GlvError::IndexOutOfRange { index: i, n: self.n })
        }
    }

    fn ensure_normal_form(&self, indices: &[usize]) -> Result<(), GlvError> {
        for &i in indices {
            self.check_index(i)?;
            if (self.r[i] - 1.0).abs() > DEGENERACY_TOL
                || (self.a[i][i] + 1.0).abs() > DEGENERACY_TOL
            {
                return Err(GlvError::NotNormalForm(i));
            }
        }
        Ok(())
    }

    /// Growth rate `r_i + Σ_j a_ij x_j` of species `i`.
    pub fn bracket(&self, i: usize, x: &[f64]) -> f64 {
        self.r[i] + self.a[i].iter().zip(x).map(|(aij, xj)| aij * xj).sum::<f64>()
    }

    /// The vector field.
    pub fn f(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| x[i] * self.bracket(i, x)).collect()
    }

    /// Analytic Jacobian at `x`.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, l| {
            let mut v = x[i] * self.a[i][l];
            if i == l {
                v += self.bracket(i, x);
            }
            v
        })
    }
}

/// Eigenvalue class relative to a cycle context: by the invariant subspace
/// holding the eigenvector (within the connection intersection; within the
/// incoming connection subspace; within the outgoing one; in none of them).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EigenClass {
    Radial,
    Contracting,
    Expanding,
    Transverse,
}

/// One eigenvalue of the linearisation at an equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenvalueInfo {
    /// Coordinate axis of the eigendirection; None for eigenvalues of the
    /// in-support block, whose eigenvectors are not axis-aligned.
    pub axis: Option<usize>,
    pub value: ComplexScalar,
    /// Assigned only by cycle assembly; standalone equilibrium queries leave
    /// it None.
    pub class: Option<EigenClass>,
    /// |value| within [`DEGENERACY_TOL`] of zero.
    pub marginal: bool,
}

/// An equilibrium of the system with its spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumInfo {
    pub label: String,
    /// Indices of the nonzero coordinates.
    pub support: Vec<usize>,
    pub point: Vec<f64>,
    pub eigen: Vec<EigenvalueInfo>,
    /// ‖f(point)‖_∞.
    pub residual: f64,
}

fn eigen_entry(axis: Option<usize>, value: ComplexScalar) -> EigenvalueInfo {
    EigenvalueInfo {
        axis,
        value,
        class: None,
        marginal: value.norm() <= DEGENERACY_TOL,
    }
}

fn residual(sys: &GlvSystem, x: &[f64]) -> f64 {
    sys.f(x).iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// The equilibrium at 1 on coordinate axis `i` (normal form).
///
/// Its spectrum is fully explicit: −1 along the axis itself and
/// `1 + a_ji` in each off-axis direction `j`.
pub fn axis_equilibrium(sys: &GlvSystem, i: usize) -> Result<EquilibriumInfo, GlvError> {
    sys.ensure_normal_form(&[i])?;
    let mut point = vec![0.0; sys.n];
    point[i] = 1.0;
    let mut eigen = vec![eigen_entry(None, ComplexScalar { re: -1.0, im: 0.0 })];
    for j in 0..sys.n {
        if j != i {
            eigen.push(eigen_entry(
                Some(j),
                ComplexScalar { re: 1.0 + sys.a[j][i], im: 0.0 },
            ));
        }
    }
    Ok(EquilibriumInfo {
        label: format!("xi{}", i + 1),
        support: vec![i],
        point: point.clone(),
        eigen,
        residual: residual(sys, &point),
    })
}

/// The coexistence equilibrium in the (i, j) coordinate plane (normal form):
/// `x_i = (1+a_ij)/(1−a_ij a_ji)`, `x_j = (1+a_ji)/(1−a_ij a_ji)`.
///
/// Exists (strictly inside the plane's positive quadrant) iff `1+a_ij`,
/// `1+a_ji` and `1−a_ij a_ji` are all positive. Off-plane directions have
/// eigenvalue `1 + x_i a_ki + x_j a_kj`; the in-plane 2×2 block is reported
/// through its (possibly complex) eigenvalues.
pub fn planar_equilibrium(
    sys: &GlvSystem,
    i: usize,
    j: usize,
) -> Result<EquilibriumInfo, GlvError> {
    sys.ensure_normal_form(&[i, j])?;
    if i == j {
        return Err(GlvError::RepeatedIndices(vec![i, j]));
    }
    let bi = 1.0 + sys.a[i][j];
    let bj = 1.0 + sys.a[j][i];
    let denom = 1.0 - sys.a[i][j] * sys.a[j][i];
    for (name, value) in [
        (format!("1 + a[{}][{}]", i + 1, j + 1), bi),
        (format!("1 + a[{}][{}]", j + 1, i + 1), bj),
        (format!("1 - a[{}][{}]*a[{}][{}]", i + 1, j + 1, j + 1, i + 1), denom),
    ] {
        if value <= DEGENERACY_TOL {
            return Err(GlvError::NoEquilibrium {
                i,
                j,
                reason: format!("{name} = {value} is not positive"),
            });
        }
    }
    let xi = bi / denom;
    let xj = bj / denom;
    let mut point = vec![0.0; sys.n];
    point[i] = xi;
    point[j] = xj;

    // In-plane block: [[−x_i, a_ij x_i], [a_ji x_j, −x_j]].
    let block = DMatrix::from_row_slice(
        2,
        2,
        &[-xi, sys.a[i][j] * xi, sys.a[j][i] * xj, -xj],
    );
    let mut eigen: Vec<EigenvalueInfo> = eigen::eigenvalues(&block)
        .map_err(|e| GlvError::InvalidSystem(e.to_string()))?
        .iter()
        .map(|&v| eigen_entry(None, v.into()))
        .collect();
    for k in 0..sys.n {
        if k != i && k != j {
            let mu = 1.0 + xi * sys.a[k][i] + xj * sys.a[k][j];
            eigen.push(eigen_entry(Some(k), ComplexScalar { re: mu, im: 0.0 }));
        }
    }
    Ok(EquilibriumInfo {
        label: format!("xi{}{}*", i + 1, j + 1),
        support: vec![i, j],
        point: point.clone(),
        eigen,
        residual: residual(sys, &point),
    })
}

/// Result of solving for a three-species interior equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteriorSolve {
    /// Present iff all three coordinates are strictly positive.
    pub equilibrium: Option<EquilibriumInfo>,
    /// Solution of the linear system (may have nonpositive entries).
    pub solution: [f64; 3],
    /// Signed Cramer numerators (solution × determinant).
    pub numerators: [f64; 3],
    pub determinant: f64,
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Solves for the equilibrium interior to the 3D coordinate subspace of the
/// (distinct) triple, reporting the signed Cramer numerators either way.
pub fn interior_equilibrium_3d(
    sys: &GlvSystem,
    triple: (usize, usize, usize),
) -> Result<InteriorSolve, GlvError> {
    let idx = [triple.0, triple.1, triple.2];
    for &s in &idx {
        sys.check_index(s)?;
    }
    if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
        return Err(GlvError::RepeatedIndices(idx.to_vec()));
    }
    // Equilibrium equations restricted to the subspace: Σ_t a_st x_t = −r_s.
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for (row, &s) in idx.iter().enumerate() {
        for (col, &t) in idx.iter().enumerate() {
            m[row][col] = sys.a[s][t];
        }
        rhs[row] = -sys.r[s];
    }
    let determinant = det3(&m);
    let mut numerators = [0.0; 3];
    for col in 0..3 {
        let mut replaced = m;
        for row in 0..3 {
            replaced[row][col] = rhs[row];
        }
        numerators[col] = det3(&replaced);
    }
    if determinant.abs() <= DEGENERACY_TOL {
        return Err(GlvError::SingularInterior(determinant));
    }
    let solution = [
        numerators[0] / determinant,
        numerators[1] / determinant,
        numerators[2] / determinant,
    ];
    let equilibrium = if solution.iter().all(|&v| v > 0.0) {
        let mut point = vec![0.0; sys.n];
        for (pos, &s) in idx.iter().enumerate() {
            point[s] = solution[pos];
        }
        // In-subspace block (x_s a_st) and diagonal off-subspace rates.
        let block = DMatrix::from_fn(3, 3, |row, col| point[idx[row]] * sys.a[idx[row]][idx[col]]);
        let mut eigen: Vec<EigenvalueInfo> = eigen::eigenvalues(&block)
            .map_err(|e| GlvError::InvalidSystem(e.to_string()))?
            .iter()
            .map(|&v| eigen_entry(None, v.into()))
            .collect();
        for k in 0..sys.n {
            if !idx.contains(&k) {
                let mu = sys.bracket(k, &point);
                eigen.push(eigen_entry(Some(k), ComplexScalar { re: mu, im: 0.0 }));
            }
        }
        Some(EquilibriumInfo {
            label: format!("xi{}{}{}~", idx[0] + 1, idx[1] + 1, idx[2] + 1),
            support: idx.to_vec(),
            point: point.clone(),
            eigen,
            residual: residual(sys, &point),
        })
    } else {
        None
    };
    Ok(InteriorSolve { equilibrium, solution, numerators, determinant })
}

/// One strict inequality evaluated on the coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    /// "<" or ">".
    pub relation: String,
    pub rhs: f64,
    pub satisfied: bool,
    /// |lhs − rhs| within [`DEGENERACY_TOL`].
    pub degenerate: bool,
}

fn check(name: impl Into<String>, lhs: f64, relation: &str, rhs: f64) -> InequalityCheck {
    let satisfied = match relation {
        "<" => lhs < rhs,
        ">" => lhs > rhs,
        other => panic!("unsupported relation {other}"),
    };
    InequalityCheck {
        name: name.into(),
        lhs,
        relation: relation.to_string(),
        rhs,
        satisfied,
        degenerate: (lhs - rhs).abs() <= DEGENERACY_TOL,
    }
}

/// Outcome of a connection-existence checker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectionReport {
    /// Which checker and case produced the report.
    pub kind: String,
    /// Every listed inequality holds strictly.
    pub satisfied: bool,
    /// Some inequality sits within [`DEGENERACY_TOL`] of equality.
    pub degenerate: bool,
    pub checks: Vec<InequalityCheck>,
    /// Heteroclinic connections asserted when satisfied, as "from -> to".
    pub connections: Vec<String>,
    /// Attracting set asserted when satisfied.
    pub attractor: Option<String>,
    pub notes: Vec<String>,
}

impl ConnectionReport {
    fn new(kind: impl Into<String>, checks: Vec<InequalityCheck>) -> Self {
        ConnectionReport {
            kind: kind.into(),
            satisfied: checks.iter().all(|c| c.satisfied),
            degenerate: checks.iter().any(|c| c.degenerate),
            checks,
            connections: Vec::new(),
            attractor: None,
            notes: Vec::new(),
        }
    }
}

fn axis_label(i: usize) -> String {
    format!("xi{}", i + 1)
}

fn planar_label(i: usize, j: usize) -> String {
    format!("xi{}{}*", i + 1, j + 1)
}

/// Classifies the two-species phase portrait of the (i, j) restriction.
///
/// With both species in normal form the restricted system is decided by
/// `β = a_ij` and `γ = a_ji`:
/// - case a: 1+β < 0 < 1+γ — connection ξ_i → ξ_j, everything attracted to ξ_j;
/// - case b: 1+γ < 0 < 1+β — the mirror image, attractor ξ_i;
/// - case c: both positive, βγ < 1 — coexistence point attracts, with
///   connections from both axis equilibria;
/// - case d: both positive, βγ > 1 — no interior equilibrium, orbits unbounded;
/// - case e: both negative — bistability, the interior saddle's stable
///   manifold separating the two axis attractors.
///
/// Any margin within [`DEGENERACY_TOL`] of zero flags the report degenerate.
pub fn check_connection_2d(
    sys: &GlvSystem,
    i: usize,
    j: usize,
) -> Result<ConnectionReport, GlvError> {
    sys.ensure_normal_form(&[i, j])?;
    if i == j {
        return Err(GlvError::RepeatedIndices(vec![i, j]));
    }
    let beta = sys.a[i][j];
    let gamma = sys.a[j][i];
    let m_beta = 1.0 + beta;
    let m_gamma = 1.0 + gamma;
    let product = beta * gamma;
    let b_name = format!("1 + a[{}][{}]", i + 1, j + 1);
    let g_name = format!("1 + a[{}][{}]", j + 1, i + 1);
    let p_name = format!("a[{}][{}]*a[{}][{}]", i + 1, j + 1, j + 1, i + 1);

    let mut report = if m_beta < 0.0 && m_gamma > 0.0 {
        let mut r = ConnectionReport::new(
            "tlv2-case-a",
            vec![check(&b_name, m_beta, "<", 0.0), check(&g_name, m_gamma, ">", 0.0)],
        );
        r.connections.push(format!("{} -> {}", axis_label(i), axis_label(j)));
        r.attractor = Some(axis_label(j));
        r
    } else if m_beta > 0.0 && m_gamma < 0.0 {
        let mut r = ConnectionReport::new(
            "tlv2-case-b",
            vec![check(&b_name, m_beta, ">", 0.0), check(&g_name, m_gamma, "<", 0.0)],
        );
        r.connections.push(format!("{} -> {}", axis_label(j), axis_label(i)));
        r.attractor = Some(axis_label(i));
        r
    } else if m_beta > 0.0 && m_gamma > 0.0 && product < 1.0 {
        let mut r = ConnectionReport::new(
            "tlv2-case-c",
            vec![
                check(&b_name, m_beta, ">", 0.0),
                check(&g_name, m_gamma, ">", 0.0),
                check(&p_name, product, "<", 1.0),
            ],
        );
        let star = planar_label(i, j);
        r.connections.push(format!("{} -> {}", axis_label(i), star));
        r.connections.push(format!("{} -> {}", axis_label(j), star));
        r.attractor = Some(star);
        r
    } else if m_beta > 0.0 && m_gamma > 0.0 {
        let mut r = ConnectionReport::new(
            "tlv2-case-d",
            vec![
                check(&b_name, m_beta, ">", 0.0),
                check(&g_name, m_gamma, ">", 0.0),
                check(&p_name, product, ">", 1.0),
            ],
        );
        r.notes.push(
            "no coexistence equilibrium; interior trajectories grow without bound".to_string(),
        );
        r
    } else {
        let mut r = ConnectionReport::new(
            "tlv2-case-e",
            vec![check(&b_name, m_beta, "<", 0.0), check(&g_name, m_gamma, "<", 0.0)],
        );
        let star = planar_label(i, j);
        r.connections.push(format!("{} -> {}", star, axis_label(i)));
        r.connections.push(format!("{} -> {}", star, axis_label(j)));
        r.notes.push(format!(
            "bistable: almost every interior trajectory reaches {} or {}",
            axis_label(i),
            axis_label(j)
        ));
        r
    };
    if (m_beta.abs() <= DEGENERACY_TOL)
        || (m_gamma.abs() <= DEGENERACY_TOL)
        || (m_beta > 0.0 && m_gamma > 0.0 && (product - 1.0).abs() <= DEGENERACY_TOL)
    {
        report.degenerate = true;
        report.notes.push("a classifying margin is within tolerance of zero".to_string());
    }
    Ok(report)
}

/// β/γ role assignment for a three-species triple (i, j, k): in the
/// restricted system the coupling felt by the first species from the second
/// is β1 = a_ij and from the third γ1 = a_ik, and cyclically
/// β2 = a_jk, γ2 = a_ji, β3 = a_ki, γ3 = a_kj.
struct Roles {
    beta: [f64; 3],
    gamma: [f64; 3],
}

fn roles(sys: &GlvSystem, triple: (usize, usize, usize)) -> Result<Roles, GlvError> {
    let (i, j, k) = triple;
    if i == j || j == k || i == k {
        return Err(GlvError::RepeatedIndices(vec![i, j, k]));
    }
    sys.ensure_normal_form(&[i, j, k])?;
    Ok(Roles {
        beta: [sys.a[i][j], sys.a[j][k], sys.a[k][i]],
        gamma: [sys.a[i][k], sys.a[j][i], sys.a[k][j]],
    })
}

/// Sufficient conditions for the "double-link" three-species portrait on the
/// triple (i, j, k): coexistence points in the (i,j) and (j,k) planes, a
/// chain of connections ending at the (j,k) coexistence point, and global
/// attraction to it.
pub fn check_tlv30(
    sys: &GlvSystem,
    triple: (usize, usize, usize),
) -> Result<ConnectionReport, GlvError> {
    let Roles { beta, gamma } = roles(sys, triple)?;
    let (i, j, k) = triple;
    let checks = vec![
        check("beta1 > -1", beta[0], ">", -1.0),
        check("beta1 < 0", beta[0], "<", 0.0),
        check("1 + gamma1 < 0", 1.0 + gamma[0], "<", 0.0),
        check("1 + beta2 > 0", 1.0 + beta[1], ">", 0.0),
        check("1 + gamma2 > 0", 1.0 + gamma[1], ">", 0.0),
        check("1 + beta3 > 0", 1.0 + beta[2], ">", 0.0),
        check("1 + gamma3 > 0", 1.0 + gamma[2], ">", 0.0),
        check("beta2*gamma3 < 1", beta[1] * gamma[2], "<", 1.0),
        check("beta1*gamma2 < 1", beta[0] * gamma[1], "<", 1.0),
        check(
            "1 - beta2*gamma3 + beta1*(1+beta2) + gamma1*(1+gamma3) < 0",
            1.0 - beta[1] * gamma[2] + beta[0] * (1.0 + beta[1]) + gamma[0] * (1.0 + gamma[2]),
            "<",
            0.0,
        ),
        check(
            "1 - beta1*gamma2 + beta3*(1+beta1) + gamma3*(1+gamma2) > 0",
            1.0 - beta[0] * gamma[1] + beta[2] * (1.0 + beta[0]) + gamma[2] * (1.0 + gamma[1]),
            ">",
            0.0,
        ),
    ];
    let mut report = ConnectionReport::new("tlv30", checks);
    let star_ij = planar_label(i, j);
    let star_jk = planar_label(j, k);
    report.connections = vec![
        format!("{} -> {}", axis_label(i), axis_label(k)),
        format!("{} -> {}", axis_label(i), star_ij),
        format!("{} -> {}", axis_label(j), star_ij),
        format!("{} -> {}", axis_label(j), star_jk),
        format!("{} -> {}", axis_label(k), star_jk),
        format!("{} -> {}", star_ij, star_jk),
    ];
    report.attractor = Some(star_jk);
    Ok(report)
}

/// Sufficient conditions for the "funnel" three-species portrait on the
/// triple (i, j, k): a coexistence point in the (i,j) plane feeding the
/// third axis equilibrium, which attracts everything.
pub fn check_tlv3(
    sys: &GlvSystem,
    triple: (usize, usize, usize),
) -> Result<ConnectionReport, GlvError> {
    let Roles { beta, gamma } = roles(sys, triple)?;
    let (i, j, k) = triple;
    let checks = vec![
        check("1 + beta1 > 0", 1.0 + beta[0], ">", 0.0),
        check("1 + gamma1 < 0", 1.0 + gamma[0], "<", 0.0),
        check("1 + beta2 < 0", 1.0 + beta[1], "<", 0.0),
        check("1 + gamma2 > 0", 1.0 + gamma[1], ">", 0.0),
        check("1 + beta3 > 0", 1.0 + beta[2], ">", 0.0),
        check("1 + gamma3 > 0", 1.0 + gamma[2], ">", 0.0),
        check("beta1*gamma2 < 1", beta[0] * gamma[1], "<", 1.0),
        check(
            "1 - beta1*gamma2 + beta3*(1+beta1) + gamma3*(1+gamma2) > 0",
            1.0 - beta[0] * gamma[1] + beta[2] * (1.0 + beta[0]) + gamma[2] * (1.0 + gamma[1]),
            ">",
            0.0,
        ),
    ];
    let mut report = ConnectionReport::new("tlv3", checks);
    let star_ij = planar_label(i, j);
    report.connections = vec![
        format!("{} -> {}", axis_label(i), star_ij),
        format!("{} -> {}", axis_label(i), axis_label(k)),
        format!("{} -> {}", axis_label(j), star_ij),
        format!("{} -> {}", axis_label(j), axis_label(k)),
        format!("{} -> {}", star_ij, axis_label(k)),
    ];
    report.attractor = Some(axis_label(k));
    Ok(report)
}

/// A forward-invariant box certifying that interior trajectories of the
/// triple's restricted system eventually enter a compact region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxCertificate {
    /// Upper bounds for the triple's coordinates, in triple order.
    pub bounds: [f64; 3],
    /// Which sign case of the couplings selected the construction.
    pub case: String,
    /// Largest outward flux found over the sampled face points (negative =
    /// strictly inward everywhere sampled).
    pub max_face_flux: f64,
    pub samples_per_face: usize,
}

/// Constructs the invariant box for a triple in the `check_tlv30` sign
/// context and verifies inward flux by sampling each outer face.
///
/// With `s(y) = max(0, y)` and a strictness margin added to every bound, the
/// face bounds depend on the signs of β2 = a_jk and γ3 = a_kj; when both are
/// positive the construction needs β2·γ3 < 1 and solves the two coupled
/// bounds exactly.
pub fn invariant_box(
    sys: &GlvSystem,
    triple: (usize, usize, usize),
) -> Result<BoxCertificate, GlvError> {
    let Roles { beta, gamma } = roles(sys, triple)?;
    let idx = [triple.0, triple.1, triple.2];
    let s = |y: f64| y.max(0.0);
    const MARGIN: f64 = 0.5;

    let x1 = 1.0 + MARGIN;
    let (case, x2, x3) = if beta[1] <= 0.0 && gamma[2] <= 0.0 {
        let x2 = 1.0 + x1 * s(gamma[1]) + MARGIN;
        let x3 = 1.0 + x1 * s(beta[2]) + MARGIN;
        ("beta2 <= 0, gamma3 <= 0", x2, x3)
    } else if beta[1] <= 0.0 {
        let x2 = 1.0 + x1 * s(gamma[1]) + MARGIN;
        let x3 = 1.0 + x1 * s(beta[2]) + x2 * gamma[2] + MARGIN;
        ("beta2 <= 0, gamma3 > 0", x2, x3)
    } else if gamma[2] <= 0.0 {
        let x3 = 1.0 + x1 * s(beta[2]) + MARGIN;
        let x2 = 1.0 + x1 * s(gamma[1]) + x3 * beta[1] + MARGIN;
        ("beta2 > 0, gamma3 <= 0", x2, x3)
    } else {
        let denom = 1.0 - beta[1] * gamma[2];
        if denom <= DEGENERACY_TOL {
            return Err(GlvError::NoBox(format!(
                "beta2*gamma3 = {} >= 1: mutual growth is unbounded",
                beta[1] * gamma[2]
            )));
        }
        let q = 1.0 + x1 * s(beta[2]) + x1 * s(gamma[1]) + MARGIN;
        let x2 = q * (1.0 + beta[1]) / denom;
        let x3 = q * (1.0 + gamma[2]) / denom;
        ("beta2 > 0, gamma3 > 0", x2, x3)
    };
    let bounds = [x1, x2, x3];

    // A-posteriori verification: the vector field must point inward at the
    // x_s = bound face of the box for each of the three coordinates.
    const SAMPLES: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(0x1b0c5);
    let mut max_flux = f64::NEG_INFINITY;
    let mut x = vec![0.0; sys.n];
    for face in 0..3 {
        for _ in 0..SAMPLES {
            x.iter_mut().for_each(|v| *v = 0.0);
            for pos in 0..3 {
                x[idx[pos]] = if pos == face {
                    bounds[pos]
                } else {
                    rng.random_range(0.0..=bounds[pos])
                };
            }
            let flux = x[idx[face]] * sys.bracket(idx[face], &x);
            max_flux = max_flux.max(flux);
        }
    }
    if max_flux >= 0.0 {
        return Err(GlvError::NoBox(format!(
            "outward flux {max_flux} found on a face of the candidate box"
        )));
    }
    Ok(BoxCertificate {
        bounds,
        case: case.to_string(),
        max_face_flux: max_flux,
        samples_per_face: SAMPLES,
    })
}

/// One stop of a cycle: the equilibrium's support and the coordinate
/// subspace carrying the outgoing connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Station {
    pub label: String,
    /// Nonzero coordinates of the equilibrium (1 = axis, 2 = planar).
    pub support: Vec<usize>,
    /// Coordinate support of the invariant subspace holding the connection
    /// to the next station.
    pub connection: Vec<usize>,
}

/// A cycle assembled from a system: the node data for stability analysis
/// plus the concrete equilibria for simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleAssembly {
    pub spec: CycleSpec,
    pub equilibria: Vec<EquilibriumInfo>,
}

/// Builds the cycle description from equilibrium/connection stations.
///
/// For station `j` with incoming connection support `P_prev` and outgoing
/// `P_cur`, eigendirections split by axis: axes in `L = P_prev ∩ P_cur`
/// form the radial block, axes in `P_prev ∖ L` are contracting, the single
/// axis in `P_cur ∖ L` is expanding, and all remaining axes are transverse.
/// Out-permutations follow from matching each outgoing axis (contracting
/// then transverse, ascending) to its slot in the next station's incoming
/// order (expanding first, then transverse ascending).
pub fn build_cycle(sys: &GlvSystem, stations: &[Station]) -> Result<CycleAssembly, GlvError> {
    if stations.is_empty() {
        return Err(GlvError::InvalidSystem("no stations".to_string()));
    }
    let m = stations.len();
    let mut equilibria = Vec::with_capacity(m);
    let mut nodes = Vec::with_capacity(m);
    // Per station: (contracting axes, transverse axes, expanding axis).
    let mut layouts: Vec<(Vec<usize>, Vec<usize>, usize)> = Vec::with_capacity(m);

    for (jdx, station) in stations.iter().enumerate() {
        let bad = |reason: String| GlvError::BadStation { station: jdx, reason };
        let prev = &stations[(jdx + m - 1) % m];
        let p_prev: Vec<usize> = prev.connection.clone();
        let p_cur: Vec<usize> = station.connection.clone();
        for &ax in p_prev.iter().chain(&p_cur) {
            sys.check_index(ax)?;
        }

        let mut info = match station.support.len() {
            1 => axis_equilibrium(sys, station.support[0])?,
            2 => planar_equilibrium(sys, station.support[0], station.support[1])?,
            len => {
                return Err(bad(format!(
                    "support of size {len} is not supported (axis or planar only)"
                )))
            }
        };
        info.label = station.label.clone();

        let in_l = |ax: usize| p_prev.contains(&ax) && p_cur.contains(&ax);
        if !station.support.iter().all(|&ax| in_l(ax)) {
            return Err(bad(
                "equilibrium support must lie in both adjacent connection subspaces".to_string(),
            ));
        }
        let radial_axes: Vec<usize> = (0..sys.n).filter(|&ax| in_l(ax)).collect();
        let contracting_axes: Vec<usize> = p_prev
            .iter()
            .copied()
            .filter(|ax| !p_cur.contains(ax))
            .collect();
        let expanding_axes: Vec<usize> = p_cur
            .iter()
            .copied()
            .filter(|ax| !p_prev.contains(ax))
            .collect();
        if expanding_axes.len() != 1 {
            return Err(bad(format!(
                "outgoing connection must add exactly one axis, adds {:?}",
                expanding_axes
            )));
        }
        let expanding_axis = expanding_axes[0];
        let mut contracting_axes = contracting_axes;
        contracting_axes.sort_unstable();
        let mut transverse_axes: Vec<usize> = (0..sys.n)
            .filter(|ax| {
                !radial_axes.contains(ax)
                    && !contracting_axes.contains(ax)
                    && *ax != expanding_axis
            })
            .collect();
        transverse_axes.sort_unstable();

        // Radial block: the Jacobian restricted to the L axes. Its
        // eigenvalues replace the standalone in-support entries.
        let jac = sys.jacobian(&info.point);
        let block = DMatrix::from_fn(radial_axes.len(), radial_axes.len(), |r, c| {
            jac[(radial_axes[r], radial_axes[c])]
        });
        let radial_values = eigen::eigenvalues(&block)
            .map_err(|e| GlvError::InvalidSystem(e.to_string()))?;
        let radial_abscissa = radial_values
            .iter()
            .map(|v| v.re)
            .fold(f64::NEG_INFINITY, f64::max);

        let axis_value = |ax: usize| -> Result<f64, GlvError> {
            info.eigen
                .iter()
                .find(|e| e.axis == Some(ax))
                .map(|e| e.value.re)
                .ok_or_else(|| bad(format!("no axis eigenvalue for direction {ax}")))
        };
        let contracting: Vec<f64> = contracting_axes
            .iter()
            .map(|&ax| axis_value(ax))
            .collect::<Result<_, _>>()?;
        let transverse: Vec<f64> = transverse_axes
            .iter()
            .map(|&ax| axis_value(ax))
            .collect::<Result<_, _>>()?;
        let expanding = axis_value(expanding_axis)?;

        // Rewrite the eigen list with cycle classes: radial block entries
        // first, then the classified axis directions.
        let mut eigen: Vec<EigenvalueInfo> = radial_values
            .iter()
            .map(|&v| EigenvalueInfo {
                axis: None,
                value: v.into(),
                class: Some(EigenClass::Radial),
                marginal: v.norm() <= DEGENERACY_TOL,
            })
            .collect();
        for (axes, class) in [
            (&contracting_axes, EigenClass::Contracting),
            (&vec![expanding_axis], EigenClass::Expanding),
            (&transverse_axes, EigenClass::Transverse),
        ] {
            for &ax in axes.iter() {
                let value = axis_value(ax)?;
                eigen.push(EigenvalueInfo {
                    axis: Some(ax),
                    value: ComplexScalar { re: value, im: 0.0 },
                    class: Some(class),
                    marginal: value.abs() <= DEGENERACY_TOL,
                });
            }
        }
        info.eigen = eigen;

        nodes.push(NodeSpec {
            id: station.label.clone(),
            expanding,
            contracting,
            transverse,
            radial_abscissa,
            out_permutation: Vec::new(), // filled below, needs the next station
        });
        layouts.push((contracting_axes, transverse_axes, expanding_axis));
        equilibria.push(info);
    }

    // Out-permutations: outgoing axis order (contracting.., transverse..)
    // mapped onto the next node's incoming order (expanding, transverse..).
    for jdx in 0..m {
        let next = (jdx + 1) % m;
        let outgoing: Vec<usize> = layouts[jdx]
            .0
            .iter()
            .chain(layouts[jdx].1.iter())
            .copied()
            .collect();
        let incoming: Vec<usize> = std::iter::once(layouts[next].2)
            .chain(layouts[next].1.iter().copied())
            .collect();
        let mut perm = Vec::with_capacity(outgoing.len());
        for &ax in &outgoing {
            let slot = incoming.iter().position(|&inc| inc == ax).ok_or_else(|| {
                GlvError::BadStation {
                    station: jdx,
                    reason: format!(
                        "outgoing axis {} has no slot at the next station (incoming axes {:?})",
                        ax, incoming
                    ),
                }
            })?;
            perm.push(slot);
        }
        if outgoing.len() != incoming.len() {
            return Err(GlvError::BadStation {
                station: jdx,
                reason: format!(
                    "outgoing axes {:?} do not match the next station's incoming axes {:?}",
                    outgoing, incoming
                ),
            });
        }
        nodes[jdx].out_permutation = perm;
    }

    Ok(CycleAssembly { spec: CycleSpec::new(nodes), equilibria })
}

/// A worked example: the system, the cycle description used for stability
/// analysis, and the equilibria visited by trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleCycle {
    pub system: GlvSystem,
    pub spec: CycleSpec,
    /// Equilibria in visiting order (one full geometric loop).
    pub equilibria: Vec<EquilibriumInfo>,
}

/// Five-species cyclically symmetric system with a homoclinic cycle of
/// planar coexistence points.
///
/// Interactions are circulant, `a[i][j] = g[(j − i) mod 5]` with
/// `g = (−1, −0.5, −2, −0.5, 0.5)`, making the system equivariant under the
/// cyclic coordinate shift. The cycle visits the five planar equilibria
/// `xi1*..xi5*` (each the shift image of `(0.4, 1.2, 0, 0, 0)`); because all
/// five nodes are equivalent under the symmetry, the analysis spec is the
/// one-node quotient, whose transition matrix is the single basic matrix.
pub fn example1() -> ExampleCycle {
    let g = [-1.0, -0.5, -2.0, -0.5, 0.5];
    let a: Vec<Vec<f64>> = (0..5)
        .map(|i| (0..5).map(|j| g[(j + 5 - i) % 5]).collect())
        .collect();
    let system = GlvSystem::normal(a).expect("valid coefficients");

    let stations: Vec<Station> = (0..5)
        .map(|j| {
            let mut support = vec![j, (j + 1) % 5];
            support.sort_unstable();
            let mut connection = vec![j, (j + 1) % 5, (j + 2) % 5];
            connection.sort_unstable();
            Station {
                label: format!("xi{}*", j + 1),
                support,
                connection,
            }
        })
        .collect();
    let assembly = build_cycle(&system, &stations).expect("example cycle assembles");
    // Symmetry quotient: all five nodes are identical, so stability analysis
    // uses a single node whose out-permutation already encodes the shift.
    let spec = CycleSpec::new(vec![assembly.spec.nodes[0].clone()]);
    ExampleCycle {
        system,
        spec,
        equilibria: assembly.equilibria,
    }
}

/// Five-species system with a mixed cycle of four axis equilibria and one
/// planar coexistence point, `xi1 → xi2* → xi3 → xi4 → xi5 → xi1`.
///
/// One transverse eigenvalue (direction 3 at `xi1`) is positive, so the
/// cycle cannot be asymptotically stable but retains a positive-measure
/// basin (fragmentary asymptotic stability).
pub fn example2() -> ExampleCycle {
    let mut a = vec![vec![-1.02; 5]; 5];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = -1.0;
    }
    a[0][2] = -3.0; // a13
    a[1][2] = -3.0; // a23
    a[2][3] = -3.0; // a34
    a[3][4] = -3.0; // a45
    a[3][2] = 1.0; // a43
    a[4][3] = 1.0; // a54
    a[0][4] = 1.0; // a15
    a[0][1] = 0.5; // a12
    a[1][0] = 0.5; // a21
    a[2][0] = -0.75; // a31
    a[2][1] = 0.75; // a32
    let system = GlvSystem::normal(a).expect("valid coefficients");

    let stations = vec![
        Station { label: "xi1".into(), support: vec![0], connection: vec![0, 1] },
        Station { label: "xi2*".into(), support: vec![0, 1], connection: vec![0, 1, 2] },
        Station { label: "xi3".into(), support: vec![2], connection: vec![2, 3] },
        Station { label: "xi4".into(), support: vec![3], connection: vec![3, 4] },
        Station { label: "xi5".into(), support: vec![4], connection: vec![0, 4] },
    ];
    let assembly = build_cycle(&system, &stations).expect("example cycle assembles");
    ExampleCycle {
        system,
        spec: assembly.spec,
        equilibria: assembly.equilibria,
    }
}

/// The condition survey justifying the five-node example's cycle: planar
/// coexistence for the first pair, chain connections along the remaining
/// pairs, the transverse sign table, and both three-species displays for
/// the exit connection `xi2* → xi3` — the one printed with a contradictory
/// product condition (reported, not repaired) and the consistent one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example2Conditions {
    /// Coexistence in the (1,2) plane with connections from both axes.
    pub pair: ConnectionReport,
    /// Axis-to-axis connections 3→4, 4→5, 5→1.
    pub chain: Vec<ConnectionReport>,
    /// The eight prescribed negative transverse eigenvalues.
    pub transverse_signs: Vec<InequalityCheck>,
    /// The exit-connection display evaluated exactly as printed (contains
    /// `a12·a21 > 1`, which contradicts the coexistence requirement).
    pub printed_exit: ConnectionReport,
    /// The consistent sufficient conditions for the same connection.
    pub exit: ConnectionReport,
    pub conflicts: Vec<String>,
}

pub fn example2_conditions(sys: &GlvSystem) -> Result<Example2Conditions, GlvError> {
    let pair = check_connection_2d(sys, 0, 1)?;
    let chain = vec![
        check_connection_2d(sys, 2, 3)?,
        check_connection_2d(sys, 3, 4)?,
        check_connection_2d(sys, 4, 0)?,
    ];

    let planar = planar_equilibrium(sys, 0, 1)?;
    let mu = |ax: usize| -> f64 {
        planar
            .eigen
            .iter()
            .find(|e| e.axis == Some(ax))
            .map(|e| e.value.re)
            .expect("axis eigenvalue present")
    };
    let lambda = |at: usize, dir: usize| 1.0 + sys.a[dir][at];
    let transverse_signs = vec![
        check("lambda14 < 0", lambda(0, 3), "<", 0.0),
        check("lambda35 < 0", lambda(2, 4), "<", 0.0),
        check("lambda41 < 0", lambda(3, 0), "<", 0.0),
        check("lambda42 < 0", lambda(3, 1), "<", 0.0),
        check("lambda52 < 0", lambda(4, 1), "<", 0.0),
        check("lambda53 < 0", lambda(4, 2), "<", 0.0),
        check("mu24 < 0", mu(3), "<", 0.0),
        check("mu25 < 0", mu(4), "<", 0.0),
    ];

    // The exit display as printed, on the triple (1, 2, 3).
    let a = &sys.a;
    let printed_checks = vec![
        check("1 + a12 > 0", 1.0 + a[0][1], ">", 0.0),
        check("1 + a13 < 0", 1.0 + a[0][2], "<", 0.0),
        check("1 + a21 > 0", 1.0 + a[1][0], ">", 0.0),
        check("1 + a23 < 0", 1.0 + a[1][2], "<", 0.0),
        check("1 + a31 > 0", 1.0 + a[2][0], ">", 0.0),
        check("1 + a32 > 0", 1.0 + a[2][1], ">", 0.0),
        check("a12*a21 > 1", a[0][1] * a[1][0], ">", 1.0),
        check(
            "1 - a12*a21 + a31*(1+a12) + a32*(1+a21) > 0",
            1.0 - a[0][1] * a[1][0] + a[2][0] * (1.0 + a[0][1]) + a[2][1] * (1.0 + a[1][0]),
            ">",
            0.0,
        ),
    ];
    let mut printed_exit = ConnectionReport::new("exit-display-as-printed", printed_checks);
    printed_exit
        .connections
        .push(format!("{} -> {}", planar_label(0, 1), axis_label(2)));

    let exit = check_tlv3(sys, (0, 1, 2))?;

    let mut conflicts = Vec::new();
    let pair_product_ok = pair
        .checks
        .iter()
        .any(|c| c.relation == "<" && c.rhs == 1.0 && c.satisfied);
    let printed_product = printed_exit
        .checks
        .iter()
        .find(|c| c.name == "a12*a21 > 1")
        .expect("printed product condition present");
    if pair_product_ok && !printed_product.satisfied {
        conflicts.push(format!(
            "printed exit condition 'a12*a21 > 1' (lhs = {}) contradicts the coexistence \
             requirement a12*a21 < 1 that the pair report satisfies; the consistent \
             sufficient set (kind 'tlv3') uses the < direction and is fully satisfied",
            printed_product.lhs
        ));
        printed_exit.notes.push(
            "contains a product condition that cannot hold together with the coexistence \
             requirement; see the conflicts list"
                .to_string(),
        );
    }
    Ok(Example2Conditions {
        pair,
        chain,
        transverse_signs,
        printed_exit,
        exit,
        conflicts,
    })
}
