//! Command-line front end: ingest cycle and system descriptions, run the
//! analyses and simulations, and emit deterministic JSON reports (plus CSV
//! time series on request).
//!
//! Every report embeds the tool version and the resolved tolerances, keeps a
//! fixed field order, and formats floats at 17 significant digits, so
//! identical inputs produce byte-identical output. Exit code 0 means the
//! command ran (an `Inconclusive` verdict is still a successful analysis);
//! exit code 2 means invalid input, with machine-readable diagnostics on
//! standard output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};

use hetcycle_core::glv::{
    self, example2_conditions, BoxCertificate, ExampleCycle, GlvSystem,
};
use hetcycle_core::sim::{
    self, NamedPoint, Trajectory, DEFAULT_ATOL, DEFAULT_RTOL,
};
use hetcycle_core::{
    classify_indices, randomized_rank, transition_product, validate_cycle, CycleSpec,
};

const TOOL: &str = "hetcycle";
const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Default verdict tolerance.
const DEFAULT_TOL: f64 = 1e-9;
/// Default neighborhood radius for visit detection in example simulations.
const DEFAULT_RADIUS: f64 = 0.3;

#[derive(Parser)]
#[command(name = TOOL, version, about = "Stability analysis of heteroclinic cycles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a cycle description and report its stability verdict.
    Analyze {
        /// Path to the cycle JSON ({"nodes": [...]}).
        cycle: PathBuf,
        /// Spectral tolerance of the verdict engine.
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Evaluate the three-species connection conditions of a system.
    GlvCheck {
        /// Path to the system JSON ({"n", "r", "a"}).
        system: PathBuf,
        /// 1-based species triple, e.g. --triple 1,2,3.
        #[arg(long)]
        triple: String,
    },
    /// Integrate a system and report the trajectory summary.
    Simulate {
        /// Path to the system JSON.
        system: PathBuf,
        /// Comma-separated start coordinates, e.g. --x0 0.4,1.2,1e-5.
        #[arg(long)]
        x0: String,
        /// Integration horizon.
        #[arg(long = "t-end")]
        t_end: f64,
        #[arg(long, default_value_t = DEFAULT_RTOL)]
        rtol: f64,
        #[arg(long, default_value_t = DEFAULT_ATOL)]
        atol: f64,
        /// Integrate the coordinate logarithms (needs a strictly positive
        /// start; follows trajectories arbitrarily close to the axes).
        #[arg(long)]
        log: bool,
        /// Write the samples as CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run one of the built-in worked examples.
    Example {
        /// Which example: 1 (asymptotically stable homoclinic loop) or
        /// 2 (fragmentarily asymptotically stable mixed cycle).
        which: u8,
        /// Also integrate the system and report the visit sequence.
        #[arg(long)]
        simulate: bool,
        /// Integration horizon for --simulate (default picked per example).
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Write the simulated trajectory as CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Certify generic nondegeneracy of a cycle's transition products.
    RankCert {
        /// Path to the cycle JSON.
        cycle: PathBuf,
        /// Random coefficient samples.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Seed for the deterministic sampler.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Invalid-input failure carrying machine-readable diagnostics.
struct Failure {
    message: String,
    details: Value,
}

impl Failure {
    fn new(message: impl Into<String>) -> Self {
        Failure { message: message.into(), details: Value::Null }
    }

    fn with_details(message: impl Into<String>, details: Value) -> Self {
        Failure { message: message.into(), details }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command_name = match &cli.command {
        Command::Analyze { .. } => "analyze",
        Command::GlvCheck { .. } => "glv-check",
        Command::Simulate { .. } => "simulate",
        Command::Example { .. } => "example",
        Command::RankCert { .. } => "rank-cert",
    };
    match run(cli.command) {
        Ok(report) => {
            println!("{}", canonical_json(&report));
            ExitCode::SUCCESS
        }
        Err(failure) => {
            let diagnostics = json!({
                "tool": TOOL,
                "version": VERSION,
                "command": command_name,
                "error": failure.message,
                "details": failure.details,
            });
            println!("{}", canonical_json(&diagnostics));
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<Value, Failure> {
    match command {
        Command::Analyze { cycle, tol } => analyze(&cycle, tol),
        Command::GlvCheck { system, triple } => glv_check(&system, &triple),
        Command::Simulate { system, x0, t_end, rtol, atol, log, csv } => {
            simulate(&system, &x0, t_end, rtol, atol, log, csv.as_deref())
        }
        Command::Example { which, simulate, t_end, csv } => {
            example(which, simulate, t_end, csv.as_deref())
        }
        Command::RankCert { cycle, trials, seed } => rank_cert(&cycle, trials, seed),
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::new(format!("cannot read {}: {e}", path.display())))
}

fn load_cycle(path: &Path) -> Result<CycleSpec, Failure> {
    let text = read_file(path)?;
    let spec = CycleSpec::from_json(&text)
        .map_err(|e| Failure::new(format!("malformed cycle JSON: {e}")))?;
    let violations = validate_cycle(&spec);
    if !violations.is_empty() {
        let list: Vec<Value> = violations
            .iter()
            .map(|v| json!({ "node": v.node, "rule": v.rule }))
            .collect();
        return Err(Failure::with_details(
            "invalid cycle description",
            json!({ "violations": list }),
        ));
    }
    Ok(spec)
}

fn load_system(path: &Path) -> Result<GlvSystem, Failure> {
    let text = read_file(path)?;
    GlvSystem::from_json(&text).map_err(|e| Failure::new(format!("invalid system: {e}")))
}

fn to_value<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("report types serialize")
}

fn meta(command: &str) -> Map<String, Value> {
    let mut map = Map::new();
    map.insert("tool".into(), json!(TOOL));
    map.insert("version".into(), json!(VERSION));
    map.insert("command".into(), json!(command));
    map
}

fn analyze(path: &Path, tol: f64) -> Result<Value, Failure> {
    let spec = load_cycle(path)?;
    let report = hetcycle_core::verdict(&spec, tol)
        .map_err(|e| Failure::new(format!("analysis failed: {e}")))?;
    let classification = classify_indices(&spec)
        .map_err(|e| Failure::new(format!("classification failed: {e}")))?;
    let product = transition_product(&spec, 0)
        .map_err(|e| Failure::new(format!("transition product failed: {e}")))?;

    let mut out = meta("analyze");
    out.insert("tolerance".into(), json!(tol));
    out.insert("nodes".into(), json!(spec.nodes.iter().map(|n| n.id.clone()).collect::<Vec<_>>()));
    out.insert("report".into(), to_value(&report));
    out.insert(
        "transition_matrix".into(),
        json!({
            "base_index": 0,
            "entries": product.rows(),
        }),
    );
    out.insert(
        "classification".into(),
        json!({
            "significant": classification.significant,
            "insignificant_slots": classification.insignificant_slots(),
        }),
    );
    Ok(Value::Object(out))
}

fn parse_triple(text: &str) -> Result<(usize, usize, usize), Failure> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Failure::new(format!(
            "--triple wants three comma-separated 1-based indices, got '{text}'"
        )));
    }
    let mut idx = [0usize; 3];
    for (slot, part) in idx.iter_mut().zip(&parts) {
        let value: usize = part
            .parse()
            .map_err(|_| Failure::new(format!("'{part}' is not a species index")))?;
        if value == 0 {
            return Err(Failure::new("species indices are 1-based".to_string()));
        }
        *slot = value - 1;
    }
    Ok((idx[0], idx[1], idx[2]))
}

fn glv_check(path: &Path, triple_text: &str) -> Result<Value, Failure> {
    let sys = load_system(path)?;
    let triple = parse_triple(triple_text)?;
    let err_map = |e: glv::GlvError| Failure::new(format!("check failed: {e}"));
    let tlv30 = glv::check_tlv30(&sys, triple).map_err(err_map)?;
    let tlv3 = glv::check_tlv3(&sys, triple).map_err(err_map)?;
    let interior = glv::interior_equilibrium_3d(&sys, triple).map_err(err_map)?;
    let (box_cert, box_error): (Option<BoxCertificate>, Option<String>) =
        match glv::invariant_box(&sys, triple) {
            Ok(cert) => (Some(cert), None),
            Err(e) => (None, Some(e.to_string())),
        };

    let mut out = meta("glv-check");
    out.insert(
        "triple".into(),
        json!([triple.0 + 1, triple.1 + 1, triple.2 + 1]),
    );
    out.insert("degeneracy_tolerance".into(), json!(glv::DEGENERACY_TOL));
    out.insert("tlv30".into(), to_value(&tlv30));
    out.insert("tlv3".into(), to_value(&tlv3));
    out.insert("interior".into(), to_value(&interior));
    out.insert("invariant_box".into(), to_value(&box_cert));
    out.insert("invariant_box_error".into(), to_value(&box_error));
    Ok(Value::Object(out))
}

fn parse_x0(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(str::trim)
        .map(|part| {
            part.parse::<f64>()
                .map_err(|_| Failure::new(format!("'{part}' is not a coordinate")))
        })
        .collect()
}

fn trajectory_summary(traj: &Trajectory, csv: Option<&Path>) -> Result<Value, Failure> {
    if let Some(path) = csv {
        sim::export_csv(traj, path)
            .map_err(|e| Failure::new(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(json!({
        "samples": traj.len(),
        "final_time": traj.times.last(),
        "final_state": traj.last_state(),
        "stats": to_value(&traj.stats),
        "csv": csv.map(|p| p.display().to_string()),
    }))
}

fn simulate(
    path: &Path,
    x0_text: &str,
    t_end: f64,
    rtol: f64,
    atol: f64,
    log: bool,
    csv: Option<&Path>,
) -> Result<Value, Failure> {
    let sys = load_system(path)?;
    let x0 = parse_x0(x0_text)?;
    let traj = if log {
        sim::integrate_log(&sys, &x0, t_end, rtol, atol)
    } else {
        sim::integrate(&sys, &x0, t_end, rtol, atol)
    }
    .map_err(|e| Failure::new(format!("integration failed: {e}")))?;

    let mut out = meta("simulate");
    out.insert("rtol".into(), json!(rtol));
    out.insert("atol".into(), json!(atol));
    out.insert("t_end".into(), json!(t_end));
    out.insert("log_coordinates".into(), json!(log));
    out.insert("trajectory".into(), trajectory_summary(&traj, csv)?);
    Ok(Value::Object(out))
}

/// Start just off the first equilibrium, with every vanishing coordinate
/// seeded small and positive so the trajectory can follow the full cycle.
fn example_start(ex: &ExampleCycle, main_seed: f64, rest_seed: f64) -> Vec<f64> {
    let first = &ex.equilibria[0];
    let next = &ex.equilibria[1];
    first
        .point
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > 0.0 {
                v
            } else if next.point[i] > 0.0 {
                // Nudge along the outgoing connection.
                main_seed
            } else {
                rest_seed
            }
        })
        .collect()
}

fn example(
    which: u8,
    simulate: bool,
    t_end: Option<f64>,
    csv: Option<&Path>,
) -> Result<Value, Failure> {
    let (ex, default_t_end) = match which {
        1 => (glv::example1(), 800.0),
        2 => (glv::example2(), 650.0),
        other => return Err(Failure::new(format!("no example {other}; use 1 or 2"))),
    };
    let report = hetcycle_core::verdict(&ex.spec, DEFAULT_TOL)
        .map_err(|e| Failure::new(format!("analysis failed: {e}")))?;
    let product = transition_product(&ex.spec, 0)
        .map_err(|e| Failure::new(format!("transition product failed: {e}")))?;
    let conditions = match which {
        1 => to_value(&glv::check_tlv30(&ex.system, (0, 1, 2)).map_err(|e| {
            Failure::new(format!("condition check failed: {e}"))
        })?),
        _ => to_value(&example2_conditions(&ex.system).map_err(|e| {
            Failure::new(format!("condition check failed: {e}"))
        })?),
    };

    let mut out = meta("example");
    out.insert("which".into(), json!(which));
    out.insert("tolerance".into(), json!(DEFAULT_TOL));
    out.insert("system".into(), to_value(&ex.system));
    out.insert("cycle".into(), to_value(&ex.spec));
    out.insert("equilibria".into(), to_value(&ex.equilibria));
    out.insert("conditions".into(), conditions);
    out.insert("report".into(), to_value(&report));
    out.insert(
        "transition_matrix".into(),
        json!({
            "base_index": 0,
            "entries": product.rows(),
        }),
    );

    if simulate {
        let t_end = t_end.unwrap_or(default_t_end);
        let x0 = example_start(&ex, 1e-4, 1e-8);
        let traj = sim::integrate_log(&ex.system, &x0, t_end, DEFAULT_RTOL, DEFAULT_ATOL)
            .map_err(|e| Failure::new(format!("integration failed: {e}")))?;
        let targets: Vec<NamedPoint> = ex.equilibria.iter().map(NamedPoint::from).collect();
        let events = sim::detect_visits(&traj, &targets, DEFAULT_RADIUS)
            .map_err(|e| Failure::new(format!("visit detection failed: {e}")))?;
        let loops = sim::ordered_loops(&events, targets.len());
        let contraction = sim::contraction_estimate(&events, ex.spec.len()).ok();

        let mut sim_out = Map::new();
        sim_out.insert("t_end".into(), json!(t_end));
        sim_out.insert("rtol".into(), json!(DEFAULT_RTOL));
        sim_out.insert("atol".into(), json!(DEFAULT_ATOL));
        sim_out.insert("radius".into(), json!(DEFAULT_RADIUS));
        sim_out.insert("x0".into(), json!(x0));
        sim_out.insert("trajectory".into(), trajectory_summary(&traj, csv)?);
        sim_out.insert(
            "visit_labels".into(),
            json!(events.iter().map(|e| e.label.clone()).collect::<Vec<_>>()),
        );
        sim_out.insert("events".into(), to_value(&events));
        sim_out.insert("ordered_loops".into(), json!(loops));
        sim_out.insert("contraction".into(), to_value(&contraction));
        out.insert("simulation".into(), Value::Object(sim_out));
    }
    Ok(Value::Object(out))
}

fn rank_cert(path: &Path, trials: usize, seed: u64) -> Result<Value, Failure> {
    let spec = load_cycle(path)?;
    let certificate = hetcycle_core::certificate(&spec)
        .map_err(|e| Failure::new(format!("certificate failed: {e}")))?;
    let sampled = randomized_rank(&spec, trials, seed)
        .map_err(|e| Failure::new(format!("rank sampling failed: {e}")))?;

    let mut out = meta("rank-cert");
    out.insert("trials".into(), json!(trials));
    out.insert("seed".into(), json!(seed));
    out.insert("certificate".into(), to_value(&certificate));
    out.insert("sampled".into(), to_value(&sampled));
    Ok(Value::Object(out))
}

/// Deterministic JSON: object fields in insertion order, two-space indent,
/// floats at 17 significant digits, integers verbatim.
fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out
}

fn write_value(out: &mut String, value: &Value, depth: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                let f = n.as_f64().expect("JSON numbers are i64, u64 or f64");
                let _ = write!(out, "{f:.16e}");
            }
        }
        Value::String(s) => {
            let _ = write!(out, "{}", Value::String(s.clone()));
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push('\n');
                indent(out, depth + 1);
                write_value(out, item, depth + 1);
            }
            out.push('\n');
            indent(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (k, (key, item)) in map.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push('\n');
                indent(out, depth + 1);
                let _ = write!(out, "{}: ", Value::String(key.clone()));
                write_value(out, item, depth + 1);
            }
            out.push('\n');
            indent(out, depth);
            out.push('}');
        }
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}
