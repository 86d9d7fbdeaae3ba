//! Direct numerical integration and trajectory diagnostics.
//!
//! The integrator is an adaptive Dormand–Prince 4(5) pair with an extra
//! per-step cap on the state change, so that the recorded samples are always
//! dense enough for the event detection downstream. Two front ends share the
//! engine: [`integrate`] works in the original coordinates and accepts starts
//! on the orthant boundary, while [`integrate_log`] integrates the logarithms
//! of strictly positive trajectories — near a heteroclinic cycle coordinates
//! decay below the subnormal range in the original variables, and only the
//! log form can follow the dwell phases without underflow.
//!
//! On top of trajectories: [`detect_visits`] extracts the sequence of
//! neighborhood passages near a set of labelled equilibria,
//! [`contraction_estimate`] fits the geometric growth rate of dwell times,
//! [`basin_sample`] measures the fraction of perturbed starts that converge
//! to a cycle, and [`export_csv`] writes samples losslessly for external
//! tooling.

use std::io::{self, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::glv::{EquilibriumInfo, GlvSystem};

/// Default relative tolerance of the step-size controller.
pub const DEFAULT_RTOL: f64 = 1e-10;
/// Default absolute tolerance of the step-size controller.
pub const DEFAULT_ATOL: f64 = 1e-12;
/// Max-norm bound on the recorded state change per accepted step.
const MAX_STATE_CHANGE: f64 = 0.05;
/// States beyond this bound are reported as finite-time blow-up.
const STATE_BOUND: f64 = 1e8;
/// Visits are counted as converged in basin sampling after this many
/// complete ordered loops.
const BASIN_LOOPS: usize = 5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid start: {0}")]
    InvalidStart(String),
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("step size underflowed at t = {t}; the problem looks stiff or degenerate here")]
    StepUnderflow { t: f64 },
    #[error("state left the finite range at t = {t}; finite-time blow-up")]
    NonFinite { t: f64 },
    #[error("invalid visit radius: {0}")]
    BadRadius(String),
    #[error("only {found} complete loops detected, need at least {required}")]
    InsufficientLoops { found: usize, required: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Step-acceptance counters of one integration run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Largest accepted scaled error estimate (≤ 1 by construction).
    pub max_error: f64,
}

/// A sampled solution: one state per accepted step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(|s| s.as_slice())
    }
}

// Dormand–Prince 4(5) tableau. Row 6 of A doubles as the 5th-order weights
// (first-same-as-last pair), B4 are the embedded 4th-order weights.
const STAGES: usize = 7;
const A: [[f64; 6]; STAGES] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B4: [f64; STAGES] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn check_tolerances(rtol: f64, atol: f64) -> Result<(), SimError> {
    if !(rtol > 0.0 && rtol.is_finite()) || !(atol > 0.0 && atol.is_finite()) {
        return Err(SimError::InvalidTolerance(format!(
            "rtol = {rtol}, atol = {atol}; both must be positive and finite"
        )));
    }
    Ok(())
}

/// Shared engine: integrates `dy/dt = rhs(y)` to `t_end`, recording
/// `to_state(y)` after every accepted step. The state-change cap and the
/// blow-up bound apply to the recorded coordinates.
fn run_dopri5(
    rhs: &dyn Fn(&[f64], &mut [f64]),
    y0: Vec<f64>,
    t_end: f64,
    rtol: f64,
    atol: f64,
    to_state: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<Trajectory, SimError> {
    check_tolerances(rtol, atol)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(SimError::InvalidTolerance(format!(
            "t_end = {t_end} must be positive and finite"
        )));
    }
    let dim = y0.len();
    let min_step = 1e-12 * t_end.max(1.0);

    let mut t = 0.0;
    let mut y = y0;
    let mut k = vec![vec![0.0; dim]; STAGES];
    let mut y_stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    rhs(&y, &mut k[0]);

    let mut state = to_state(&y);
    let mut times = vec![0.0];
    let mut states = vec![state.clone()];
    let mut stats = IntegratorStats::default();
    let mut h = 1e-4_f64.min(t_end);

    while t < t_end {
        h = h.min(t_end - t);
        if h < min_step {
            return Err(SimError::StepUnderflow { t });
        }

        for s in 1..STAGES {
            for i in 0..dim {
                let mut acc = 0.0;
                for (q, a_sq) in A[s].iter().enumerate().take(s) {
                    acc += a_sq * k[q][i];
                }
                y_stage[i] = y[i] + h * acc;
            }
            if s == STAGES - 1 {
                y_new.copy_from_slice(&y_stage);
            }
            rhs(&y_stage, &mut k[s]);
        }

        if y_new.iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            h *= 0.5;
            continue;
        }

        // Scaled error of the embedded pair.
        let mut err_sq = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for q in 0..STAGES {
                let b5 = if q < 6 { A[6][q] } else { 0.0 };
                e += (b5 - B4[q]) * k[q][i];
            }
            e *= h;
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (err_sq / dim as f64).sqrt();

        if err <= 1.0 {
            let new_state = to_state(&y_new);
            let change = new_state
                .iter()
                .zip(&state)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            // Density cap on the recorded samples, relative for large states
            // so that genuine blow-up still escalates geometrically.
            let cap = MAX_STATE_CHANGE
                * state.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            if change > cap {
                stats.rejected += 1;
                h *= (0.5 * cap / change).max(0.1);
                continue;
            }
            t += h;
            y.copy_from_slice(&y_new);
            k.swap(0, STAGES - 1); // first-same-as-last
            state = new_state;
            times.push(t);
            states.push(state.clone());
            stats.accepted += 1;
            stats.max_error = stats.max_error.max(err);
            if state.iter().any(|v| v.abs() > STATE_BOUND) {
                return Err(SimError::NonFinite { t });
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0).min(0.5);
        }
    }

    Ok(Trajectory { dim, times, states, stats })
}

fn check_start(sys: &GlvSystem, x0: &[f64]) -> Result<(), SimError> {
    if x0.len() != sys.n {
        return Err(SimError::InvalidStart(format!(
            "start has {} coordinates, system has {}",
            x0.len(),
            sys.n
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SimError::InvalidStart("start has non-finite coordinates".to_string()));
    }
    Ok(())
}

/// Integrates the system from a nonnegative start in the original
/// coordinates.
pub fn integrate(
    sys: &GlvSystem,
    x0: &[f64],
    t_end: f64,
    rtol: f64,
    atol: f64,
) -> Result<Trajectory, SimError> {
    check_start(sys, x0)?;
    if x0.iter().any(|&v| v < 0.0) {
        return Err(SimError::InvalidStart(
            "the model lives on the nonnegative orthant; negative start coordinates".to_string(),
        ));
    }
    let sys = sys.clone();
    let rhs = move |x: &[f64], out: &mut [f64]| {
        for i in 0..sys.n {
            out[i] = x[i] * sys.bracket(i, x);
        }
    };
    run_dopri5(&rhs, x0.to_vec(), t_end, rtol, atol, &|y| y.to_vec())
}

/// Integrates the logarithms `u_i = ln x_i` of a strictly positive start;
/// recorded samples are the original coordinates `x = exp(u)`.
///
/// The log form follows trajectories into arbitrarily small neighborhoods of
/// the coordinate hyperplanes, which direct integration cannot (coordinates
/// underflow after a few dwell periods near a cycle).
pub fn integrate_log(
    sys: &GlvSystem,
    x0: &[f64],
    t_end: f64,
    rtol: f64,
    atol: f64,
) -> Result<Trajectory, SimError> {
    check_start(sys, x0)?;
    if x0.iter().any(|&v| v <= 0.0) {
        return Err(SimError::InvalidStart(
            "log-coordinate integration needs strictly positive start coordinates".to_string(),
        ));
    }
    let sys = sys.clone();
    let n = sys.n;
    let rhs = move |u: &[f64], out: &mut [f64]| {
        // du_i/dt = r_i + Σ_j a_ij exp(u_j)
        for i in 0..n {
            let mut acc = sys.r[i];
            for j in 0..n {
                acc += sys.a[i][j] * u[j].exp();
            }
            out[i] = acc;
        }
    };
    let u0: Vec<f64> = x0.iter().map(|v| v.ln()).collect();
    run_dopri5(&rhs, u0, t_end, rtol, atol, &|u| {
        u.iter().map(|v| v.exp()).collect()
    })
}

/// A labelled reference point (usually an equilibrium) for visit detection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedPoint {
    pub label: String,
    pub point: Vec<f64>,
}

impl NamedPoint {
    pub fn new(label: impl Into<String>, point: Vec<f64>) -> Self {
        NamedPoint { label: label.into(), point }
    }
}

impl From<&EquilibriumInfo> for NamedPoint {
    fn from(eq: &EquilibriumInfo) -> Self {
        NamedPoint { label: eq.label.clone(), point: eq.point.clone() }
    }
}

/// One maximal time interval spent inside a target's neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisitEvent {
    #[serde(rename = "equilibrium")]
    pub label: String,
    /// Index into the target list.
    pub target: usize,
    pub t_in: f64,
    pub t_out: f64,
    /// Closest max-norm approach to the target during the visit.
    #[serde(rename = "min_dist")]
    pub min_distance: f64,
    /// The trajectory ended while still inside; `t_out` is the final sample
    /// time, not a boundary crossing.
    pub truncated: bool,
}

impl VisitEvent {
    pub fn dwell(&self) -> f64 {
        self.t_out - self.t_in
    }
}

fn max_norm_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Extracts the time-ordered sequence of visits to max-norm balls of the
/// given radius around the targets, interpolating entry and exit times
/// linearly between samples. The radius must keep the balls disjoint
/// (less than half the smallest pairwise target distance).
pub fn detect_visits(
    traj: &Trajectory,
    targets: &[NamedPoint],
    radius: f64,
) -> Result<Vec<VisitEvent>, SimError> {
    if targets.is_empty() {
        return Err(SimError::BadRadius("no targets given".to_string()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(SimError::BadRadius(format!("radius = {radius} must be positive")));
    }
    for t in targets {
        if t.point.len() != traj.dim {
            return Err(SimError::DimensionMismatch(format!(
                "target '{}' has {} coordinates, trajectory has {}",
                t.label,
                t.point.len(),
                traj.dim
            )));
        }
    }
    for (i, a) in targets.iter().enumerate() {
        for b in targets.iter().skip(i + 1) {
            let d = max_norm_dist(&a.point, &b.point);
            if radius >= 0.5 * d {
                return Err(SimError::BadRadius(format!(
                    "radius {radius} is not below half the distance {d} between targets '{}' and '{}'",
                    a.label, b.label
                )));
            }
        }
    }

    let dist = |k: usize, target: usize| max_norm_dist(&traj.states[k], &targets[target].point);
    let inside_target = |k: usize| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for tdx in 0..targets.len() {
            let d = dist(k, tdx);
            if d < radius && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((tdx, d));
            }
        }
        best
    };

    // Linear interpolation of the time where a target's distance crosses
    // the radius between samples k-1 and k.
    let crossing = |k: usize, target: usize| -> f64 {
        let (d0, d1) = (dist(k - 1, target), dist(k, target));
        let (t0, t1) = (traj.times[k - 1], traj.times[k]);
        if (d1 - d0).abs() < f64::EPSILON * radius {
            return t1;
        }
        t0 + (t1 - t0) * (radius - d0) / (d1 - d0)
    };

    let mut events = Vec::new();
    let mut active: Option<(usize, f64, f64)> = None; // (target, t_in, min_d)
    for k in 0..traj.len() {
        let now = inside_target(k);
        match (active, now) {
            (None, None) => {}
            (None, Some((tdx, d))) => {
                let t_in = if k == 0 { traj.times[0] } else { crossing(k, tdx) };
                active = Some((tdx, t_in, d));
            }
            (Some((tdx, t_in, min_d)), Some((ndx, d))) if tdx == ndx => {
                active = Some((tdx, t_in, min_d.min(d)));
            }
            (Some((tdx, t_in, min_d)), now) => {
                let t_out = crossing(k, tdx);
                events.push(VisitEvent {
                    label: targets[tdx].label.clone(),
                    target: tdx,
                    t_in,
                    t_out,
                    min_distance: min_d,
                    truncated: false,
                });
                active = now.map(|(ndx, d)| {
                    let t_in = crossing(k, ndx);
                    (ndx, t_in, d)
                });
            }
        }
    }
    if let Some((tdx, t_in, min_d)) = active {
        events.push(VisitEvent {
            label: targets[tdx].label.clone(),
            target: tdx,
            t_in,
            t_out: *traj.times.last().expect("nonempty trajectory"),
            min_distance: min_d,
            truncated: true,
        });
    }
    Ok(events)
}

/// Number of complete loops in the longest consecutive run of events whose
/// target indices advance by one modulo `period`.
pub fn ordered_loops(events: &[VisitEvent], period: usize) -> usize {
    if period == 0 || events.is_empty() {
        return 0;
    }
    let (mut best, mut run) = (1usize, 1usize);
    for pair in events.windows(2) {
        if pair[1].target == (pair[0].target + 1) % period {
            run += 1;
            best = best.max(run);
        } else {
            run = 1;
        }
    }
    best / period
}

/// Fitted geometric growth of dwell times along a cyclic visit sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionEstimate {
    /// Mean over node positions of the per-loop dwell growth factor.
    pub ratio: f64,
    /// Growth factor fitted at each position in the loop.
    pub per_group: Vec<f64>,
    /// Largest absolute residual of the log-dwell least-squares fits.
    pub max_residual: f64,
    /// Complete loops used by the fit.
    pub loops: usize,
}

/// Fits `ln(dwell) ~ intercept + slope × loop` at each of the
/// `nodes_per_loop` positions of the longest ordered run of events and
/// averages `exp(slope)`. A truncated final event is ignored. With one node
/// per loop this is the per-visit dwell ratio; the result approximates the
/// dominant transition-matrix eigenvalue for trajectories converging to a
/// cycle.
pub fn contraction_estimate(
    events: &[VisitEvent],
    nodes_per_loop: usize,
) -> Result<ContractionEstimate, SimError> {
    if nodes_per_loop == 0 {
        return Err(SimError::InsufficientLoops { found: 0, required: 3 });
    }
    let mut events = events;
    while let Some(last) = events.last() {
        if last.truncated {
            events = &events[..events.len() - 1];
        } else {
            break;
        }
    }
    // Longest run with cyclically advancing targets. Targets are reduced
    // modulo the loop length, so a symmetry-quotient description (fewer nodes
    // than distinct equilibria, e.g. one node standing for five shift-images)
    // treats every equilibrium visit as one quotient-loop passage, provided
    // the caller indexed the targets in visit order.
    let m = nodes_per_loop;
    let (mut best_start, mut best_len) = (0usize, 0usize);
    let (mut start, mut len) = (0usize, 0usize);
    for k in 0..events.len() {
        if k == 0 || events[k].target % m != (events[k - 1].target % m + 1) % m {
            start = k;
            len = 0;
        }
        len += 1;
        if len > best_len {
            best_start = start;
            best_len = len;
        }
    }
    let loops = best_len / m;
    if loops < 3 {
        return Err(SimError::InsufficientLoops { found: loops, required: 3 });
    }
    let run = &events[best_start..best_start + best_len];

    let mut per_group = Vec::with_capacity(m);
    let mut max_residual = 0.0_f64;
    for r in 0..m {
        let logs: Vec<f64> = run
            .iter()
            .skip(r)
            .step_by(m)
            .map(|e| e.dwell().ln())
            .collect();
        let n = logs.len() as f64;
        let mean_x = (logs.len() as f64 - 1.0) / 2.0;
        let mean_y = logs.iter().sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (j, y) in logs.iter().enumerate() {
            let dx = j as f64 - mean_x;
            sxx += dx * dx;
            sxy += dx * (y - mean_y);
        }
        let slope = sxy / sxx;
        let intercept = mean_y - slope * mean_x;
        for (j, y) in logs.iter().enumerate() {
            max_residual = max_residual.max((y - (intercept + slope * j as f64)).abs());
        }
        per_group.push(slope.exp());
    }
    let ratio = per_group.iter().sum::<f64>() / per_group.len() as f64;
    Ok(ContractionEstimate { ratio, per_group, max_residual, loops })
}

/// Outcome of one basin sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasinOutcome {
    pub converged: bool,
    pub loops: usize,
    pub min_distance: f64,
}

/// Result of sampling starts around an anchor point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinSample {
    pub fraction: f64,
    pub converged: usize,
    pub total: usize,
    pub outcomes: Vec<BasinOutcome>,
}

/// Estimates the fraction of perturbed starts attracted to the cycle.
///
/// Starts are drawn uniformly from the `delta`-box around `anchor`
/// intersected with the positive orthant (coordinates are floored at
/// `delta * 1e-9` so the log integrator applies). A sample counts as
/// converged when its visit sequence completes at least 5 ordered loops
/// through the targets and its closest approach drops below `delta / 10`.
/// Sampling is deterministic in `seed` and independent of thread schedule.
pub fn basin_sample(
    sys: &GlvSystem,
    targets: &[NamedPoint],
    anchor: &[f64],
    delta: f64,
    n_samples: usize,
    seed: u64,
    t_end: f64,
    radius: f64,
) -> Result<BasinSample, SimError> {
    if anchor.len() != sys.n {
        return Err(SimError::DimensionMismatch(format!(
            "anchor has {} coordinates, system has {}",
            anchor.len(),
            sys.n
        )));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(SimError::InvalidTolerance(format!("delta = {delta} must be positive")));
    }
    if n_samples == 0 {
        return Err(SimError::InvalidTolerance("need at least one sample".to_string()));
    }

    let outcomes: Vec<BasinOutcome> = (0..n_samples)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let x0: Vec<f64> = anchor
                .iter()
                .map(|&a| (a + rng.random_range(-delta..=delta)).max(delta * 1e-9))
                .collect();
            let traj = match integrate_log(sys, &x0, t_end, DEFAULT_RTOL, DEFAULT_ATOL) {
                Ok(t) => t,
                Err(_) => {
                    return BasinOutcome {
                        converged: false,
                        loops: 0,
                        min_distance: f64::INFINITY,
                    }
                }
            };
            let events = match detect_visits(&traj, targets, radius) {
                Ok(e) => e,
                Err(_) => {
                    return BasinOutcome {
                        converged: false,
                        loops: 0,
                        min_distance: f64::INFINITY,
                    }
                }
            };
            let loops = ordered_loops(&events, targets.len());
            let min_distance = events
                .iter()
                .map(|e| e.min_distance)
                .fold(f64::INFINITY, f64::min);
            BasinOutcome {
                converged: loops >= BASIN_LOOPS && min_distance < delta / 10.0,
                loops,
                min_distance,
            }
        })
        .collect();

    let converged = outcomes.iter().filter(|o| o.converged).count();
    Ok(BasinSample {
        fraction: converged as f64 / n_samples as f64,
        converged,
        total: n_samples,
        outcomes,
    })
}

/// Writes `t,x1,...,xn` rows with 17 significant digits (lossless for f64).
pub fn write_csv<W: Write>(traj: &Trajectory, mut out: W) -> io::Result<()> {
    write!(out, "t")?;
    for i in 0..traj.dim {
        write!(out, ",x{}", i + 1)?;
    }
    writeln!(out)?;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        write!(out, "{t:.16e}")?;
        for v in state {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// [`write_csv`] to a file path.
pub fn export_csv(traj: &Trajectory, path: &Path) -> Result<(), SimError> {
    let file = std::fs::File::create(path)?;
    let mut buf = io::BufWriter::new(file);
    write_csv(traj, &mut buf)?;
    buf.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glv::{example1, example2, GlvSystem};
    use approx::assert_abs_diff_eq;

    fn logistic() -> GlvSystem {
        GlvSystem::normal(vec![vec![-1.0]]).unwrap()
    }

    #[test]
    fn logistic_growth_reaches_capacity() {
        let sys = logistic();
        let traj = integrate(&sys, &[0.5], 30.0, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
        assert_abs_diff_eq!(traj.last_state().unwrap()[0], 1.0, epsilon = 1e-9);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert!(traj.states.iter().flatten().all(|&v| v >= -1e-12));
        assert_eq!(traj.stats.accepted + 1, traj.len());
    }

    #[test]
    fn log_and_plain_integration_agree_away_from_boundaries() {
        let sys = example2().system;
        let x0 = [0.9, 0.8, 1.1, 0.7, 1.2];
        let a = integrate(&sys, &x0, 5.0, 1e-10, 1e-12).unwrap();
        let b = integrate_log(&sys, &x0, 5.0, 1e-10, 1e-12).unwrap();
        for (u, v) in a.last_state().unwrap().iter().zip(b.last_state().unwrap()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-7);
        }
    }

    #[test]
    fn halving_tolerances_changes_little() {
        let sys = example1().system;
        let x0 = [0.4, 1.2, 1e-4, 1e-6, 1e-6];
        let coarse = integrate_log(&sys, &x0, 40.0, 1e-8, 1e-10).unwrap();
        let fine = integrate_log(&sys, &x0, 40.0, 5e-9, 5e-11).unwrap();
        for (u, v) in coarse
            .last_state()
            .unwrap()
            .iter()
            .zip(fine.last_state().unwrap())
        {
            assert!((u - v).abs() < 10.0 * 1e-8, "|{u} - {v}| too large");
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let sys = logistic();
        assert!(matches!(
            integrate(&sys, &[-0.1], 1.0, 1e-10, 1e-12),
            Err(SimError::InvalidStart(_))
        ));
        assert!(matches!(
            integrate(&sys, &[0.1, 0.2], 1.0, 1e-10, 1e-12),
            Err(SimError::InvalidStart(_))
        ));
        assert!(matches!(
            integrate(&sys, &[0.1], 0.0, 1e-10, 1e-12),
            Err(SimError::InvalidTolerance(_))
        ));
        assert!(matches!(
            integrate(&sys, &[0.1], 1.0, -1e-10, 1e-12),
            Err(SimError::InvalidTolerance(_))
        ));
        assert!(matches!(
            integrate_log(&sys, &[0.0], 1.0, 1e-10, 1e-12),
            Err(SimError::InvalidStart(_))
        ));
    }

    #[test]
    fn mutualistic_blowup_is_diagnosed() {
        // Two species feeding each other with product > 1: finite-time escape.
        let sys = GlvSystem::normal(vec![vec![-1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let result = integrate(&sys, &[1.0, 1.0], 50.0, 1e-10, 1e-12);
        assert!(matches!(result, Err(SimError::NonFinite { .. })));
    }

    fn synthetic_trajectory(samples: &[(f64, f64)]) -> Trajectory {
        Trajectory {
            dim: 1,
            times: samples.iter().map(|s| s.0).collect(),
            states: samples.iter().map(|s| vec![s.1]).collect(),
            stats: IntegratorStats::default(),
        }
    }

    #[test]
    fn visits_are_interpolated_and_ordered() {
        let targets = vec![
            NamedPoint::new("a", vec![0.0]),
            NamedPoint::new("b", vec![10.0]),
        ];
        let traj = synthetic_trajectory(&[
            (0.0, 5.0),
            (1.0, 0.05),
            (2.0, 0.05),
            (3.0, 5.0),
            (4.0, 9.95),
            (5.0, 9.95),
            (6.0, 5.0),
        ]);
        let events = detect_visits(&traj, &targets, 0.1).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].label, "a");
        assert_eq!(events[1].label, "b");
        assert!(!events[0].truncated && !events[1].truncated);
        // Entry when the distance 5 → 0.05 crosses 0.1.
        assert_abs_diff_eq!(events[0].t_in, (5.0 - 0.1) / (5.0 - 0.05), epsilon = 1e-12);
        assert_abs_diff_eq!(
            events[0].t_out,
            2.0 + (0.1 - 0.05) / (5.0 - 0.05),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(events[0].min_distance, 0.05, epsilon = 1e-15);

        // Ending inside flags truncation.
        let traj = synthetic_trajectory(&[(0.0, 5.0), (1.0, 0.05), (2.0, 0.04)]);
        let events = detect_visits(&traj, &targets, 0.1).unwrap();
        assert_eq!(events.len(), 1);
        assert!(events[0].truncated);
        assert_eq!(events[0].t_out, 2.0);
    }

    #[test]
    fn oversized_radius_is_rejected() {
        let targets = vec![
            NamedPoint::new("a", vec![0.0]),
            NamedPoint::new("b", vec![10.0]),
        ];
        let traj = synthetic_trajectory(&[(0.0, 5.0)]);
        assert!(matches!(
            detect_visits(&traj, &targets, 6.0),
            Err(SimError::BadRadius(_))
        ));
        assert!(detect_visits(&traj, &targets, 4.9).is_ok());
    }

    fn synthetic_events(dwells: &[(usize, f64)]) -> Vec<VisitEvent> {
        let mut t = 0.0;
        dwells
            .iter()
            .map(|&(target, dwell)| {
                let e = VisitEvent {
                    label: format!("n{target}"),
                    target,
                    t_in: t,
                    t_out: t + dwell,
                    min_distance: 1e-6,
                    truncated: false,
                };
                t += dwell + 1.0;
                e
            })
            .collect()
    }

    #[test]
    fn contraction_recovers_exact_geometric_dwells() {
        let rho: f64 = 1.3;
        let dwells: Vec<(usize, f64)> = (0..8)
            .map(|k| {
                let loop_no = (k / 2) as i32;
                let base = if k % 2 == 0 { 1.0 } else { 2.0 };
                (k % 2, base * rho.powi(loop_no))
            })
            .collect();
        let events = synthetic_events(&dwells);
        let est = contraction_estimate(&events, 2).unwrap();
        assert_abs_diff_eq!(est.ratio, rho, epsilon = 1e-12);
        assert_eq!(est.loops, 4);
        assert!(est.max_residual < 1e-12);

        // Two loops are not enough.
        let short = synthetic_events(&dwells[..4]);
        assert!(matches!(
            contraction_estimate(&short, 2),
            Err(SimError::InsufficientLoops { found: 2, .. })
        ));
    }

    #[test]
    fn truncated_tail_events_are_ignored() {
        let rho: f64 = 1.5;
        let dwells: Vec<(usize, f64)> = (0..6).map(|k| (0, rho.powi(k))).collect();
        let mut events = synthetic_events(&dwells);
        // Corrupt the final dwell and mark it truncated: estimate unaffected.
        let last = events.last_mut().unwrap();
        last.t_out = last.t_in + 1e-9;
        last.truncated = true;
        let est = contraction_estimate(&events, 1).unwrap();
        assert_abs_diff_eq!(est.ratio, rho, epsilon = 1e-12);
        assert_eq!(est.loops, 5);
    }

    #[test]
    fn loop_counting_handles_runs_and_period_one() {
        let events = synthetic_events(&[(0, 1.0), (1, 1.0), (0, 1.0), (1, 1.0), (0, 1.0)]);
        assert_eq!(ordered_loops(&events, 2), 2);
        let events = synthetic_events(&[(0, 1.0), (0, 1.0), (0, 1.0)]);
        assert_eq!(ordered_loops(&events, 1), 3);
        let broken = synthetic_events(&[(0, 1.0), (1, 1.0), (1, 1.0), (0, 1.0)]);
        assert_eq!(ordered_loops(&broken, 2), 1);
        assert_eq!(ordered_loops(&[], 2), 0);
    }

    #[test]
    fn example1_trajectory_cycles_through_the_planar_equilibria() {
        let ex = example1();
        let targets: Vec<NamedPoint> = ex.equilibria.iter().map(NamedPoint::from).collect();
        let x0 = [0.4, 1.2, 1e-5, 1e-8, 1e-8];
        // Dwell times grow by the contraction factor every visit, so loops
        // lengthen quickly; this horizon covers a bit over two loops.
        let traj = integrate_log(&ex.system, &x0, 800.0, 1e-10, 1e-12).unwrap();
        assert!(traj.states.iter().flatten().all(|&v| v >= -1e-12));
        let events = detect_visits(&traj, &targets, 0.3).unwrap();
        assert!(events.len() >= 10, "only {} events", events.len());
        assert_eq!(events[0].label, "xi1*");
        for pair in events.windows(2) {
            assert_eq!(pair[1].target, (pair[0].target + 1) % 5);
        }
        assert!(ordered_loops(&events, 5) >= 2);
    }

    #[test]
    fn example2_trajectory_follows_the_mixed_cycle() {
        let ex = example2();
        let targets: Vec<NamedPoint> = ex.equilibria.iter().map(NamedPoint::from).collect();
        let x0 = [1.0, 1e-4, 1e-8, 1e-8, 1e-8];
        // Two-plus loops: loop durations grow by the loop contraction
        // factor, so the third loop alone is longer than the first two.
        let traj = integrate_log(&ex.system, &x0, 650.0, 1e-10, 1e-12).unwrap();
        let events = detect_visits(&traj, &targets, 0.3).unwrap();
        assert!(events.len() >= 10, "only {} events", events.len());
        let labels: Vec<&str> = events.iter().take(5).map(|e| e.label.as_str()).collect();
        assert_eq!(labels, vec!["xi1", "xi2*", "xi3", "xi4", "xi5"]);
        assert!(ordered_loops(&events, 5) >= 2);
    }

    #[test]
    fn csv_round_trips_at_full_precision() {
        let sys = logistic();
        let traj = integrate(&sys, &[0.25], 2.0, 1e-10, 1e-12).unwrap();
        let mut buf = Vec::new();
        write_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x1"));
        for (line, (t, state)) in lines.zip(traj.times.iter().zip(&traj.states)) {
            let mut fields = line.split(',');
            let tv: f64 = fields.next().unwrap().parse().unwrap();
            let xv: f64 = fields.next().unwrap().parse().unwrap();
            assert_eq!(tv, *t);
            assert_eq!(xv, state[0]);
        }

        let empty = Trajectory {
            dim: 3,
            times: vec![],
            states: vec![],
            stats: IntegratorStats::default(),
        };
        let mut buf = Vec::new();
        write_csv(&empty, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x1,x2,x3\n");
    }

    #[test]
    fn basin_sampling_is_deterministic_and_finds_the_attractor() {
        let ex = example2();
        let targets: Vec<NamedPoint> = ex.equilibria.iter().map(NamedPoint::from).collect();
        // A point on the connection from xi1 to xi2* (zeros are floored
        // inside the sampler to keep starts in the open orthant).
        let anchor = [1.5, 1.0, 0.0, 0.0, 0.0];
        let run = || {
            basin_sample(&ex.system, &targets, &anchor, 1e-3, 3, 7, 12_000.0, 0.3).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert_eq!(a.total, 3);
        assert!(a.fraction > 0.0, "outcomes: {:?}", a.outcomes);
    }
}
