//! Command-line driver: sampling campaigns, single trajectories, Borland-Dennis sweeps,
//! variational bound reports and constraint evaluation.
//!
//! Exit codes: 0 when every checked bound holds, 1 on a bound violation, 2 on a
//! contract violation (degeneracy and the like), 3 on malformed input.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::borland_dennis as bd;
use crate::constraints::{
    borland_dennis_d, borland_dennis_set, collective_pauli, higuchi, higuchi_set, load_constraint_file, pauli_set,
    ConstraintSet, LinearConstraint, SystemKind,
};
use crate::error::{Error, Result};
use crate::flow::{
    amplitudes_from_json, decay_excess, fmt_f64, integrate, monotonicity_excess, terminal_report, verify_path_bound,
    FermionSystem, FlowParams, MarginalSystem, Termination,
};
use crate::fock::{Basis, FockSetting, StateVector};
use crate::qubit::{QubitState, QubitSystem};
use crate::scalar::CVector;
use crate::variational::{check_energy_estimates, EstimateOptions, Hamiltonian, OptimizerOptions, VariationalProblem};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONTRACT: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

/// Header of the `sample` CSV.
pub const SAMPLE_HEADER: &str = "seed_index,D_lambda,flow_converged,dist_final,bound_sqrt2D,weight_outside_PD,bound_2D";

#[derive(Parser, Debug)]
#[command(name = "marginalflow", version, about = "Stabilizing flows and marginal-constraint bounds for small quantum systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Flow many random states and check the distance and weight bounds; writes CSV.
    Sample(SampleArgs),
    /// Integrate one trajectory; writes a JSON summary and optionally the CSV trace.
    Flow(FlowArgs),
    /// Borland-Dennis structure, theorem and rotation checks on (3,6) samples.
    Bd(BdArgs),
    /// Energy estimates for facet ansatzes over a Hamiltonian ensemble.
    Variational(VariationalArgs),
    /// Evaluate a constraint set on a given spectrum.
    Constraints(ConstraintsArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SystemArgs {
    /// Fermionic setting `N,d`.
    #[arg(long, value_parser = parse_setting, default_value = "3,6")]
    pub setting: (usize, usize),
    /// Qubit register size; overrides --setting.
    #[arg(long)]
    pub qubits: Option<usize>,
    /// Catalog name (bd, S<r>,<s>, D<i>, upper<i>, lower<i>, trivial) or a JSON file,
    /// optionally suffixed `#name`. Defaults: bd for (3,6), D1 for qubits.
    #[arg(long)]
    pub constraint: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct IntegrationArgs {
    /// Integration horizon.
    #[arg(long, default_value_t = 60.0)]
    pub t_max: f64,
    /// Convergence threshold on D.
    #[arg(long, default_value_t = 1e-10)]
    pub stop_d: f64,
    /// Spectral gap below which the marginal spectrum counts as degenerate.
    #[arg(long, default_value_t = 1e-6)]
    pub gap_tol: f64,
    /// Largest step size.
    #[arg(long, default_value_t = 0.05)]
    pub dt_max: f64,
}

impl IntegrationArgs {
    fn params(&self) -> FlowParams {
        FlowParams {
            t_max: self.t_max,
            stop_d: self.stop_d,
            gap_tol: self.gap_tol,
            dt_max: self.dt_max,
            dt_initial: self.dt_max.min(FlowParams::default().dt_initial),
            ..FlowParams::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Base seed; sample `i` uses `seed + i`.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0: one per core).
    #[arg(long, env = "MARGINALFLOW_JOBS", default_value_t = 0)]
    pub jobs: usize,
    /// Slack allowed on every bound.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    /// Keep only states with D below this value (rejection sampling).
    #[arg(long)]
    pub max_d: Option<f64>,
    /// Keep only states whose spectral gap exceeds this value.
    #[arg(long, default_value_t = 0.0)]
    pub min_gap: f64,
}

#[derive(Args, Debug)]
pub struct FlowArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    /// Seed of a Haar-random initial state.
    #[arg(long, required_unless_present = "state")]
    pub seed: Option<u64>,
    /// Initial state as a JSON array of [re, im] pairs.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// JSON summary output (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV trace output.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Keep every k-th accepted state as a snapshot.
    #[arg(long, default_value_t = 10)]
    pub snapshot_stride: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BdMode {
    /// Haar-random states.
    Haar,
    /// Haar-random states with D below --max-d.
    Quasipinned,
    /// Pinned states perturbed by --eps.
    Perturbed,
}

#[derive(Args, Debug)]
pub struct BdArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value_t = BdMode::Quasipinned)]
    pub mode: BdMode,
    #[arg(long, default_value_t = 0.1)]
    pub max_d: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Minimum lambda_3 - lambda_4 for the unstable-weight theorem.
    #[arg(long, default_value_t = 0.05)]
    pub s2_gap: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub gap_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Model {
    /// Gaussian h plus Gaussian antisymmetrized V scaled by --coupling.
    Random,
    /// Open Hubbard chain with U = --coupling and a weak random field.
    Hubbard,
}

#[derive(Args, Debug)]
pub struct VariationalArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[arg(long, value_enum, default_value_t = Model::Random)]
    pub model: Model,
    #[arg(long, default_value_t = 0.1)]
    pub coupling: f64,
    /// Random restarts per optimization.
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
}

#[derive(Args, Debug)]
pub struct ConstraintsArgs {
    /// Fermionic setting `N,d`.
    #[arg(long, value_parser = parse_setting, default_value = "3,6")]
    pub setting: (usize, usize),
    #[arg(long)]
    pub qubits: Option<usize>,
    /// Set name (bd, pauli, higuchi, S<r>,<s>) or a JSON constraint file. Default: bd for
    /// (3,6), pauli otherwise, higuchi for qubits.
    #[arg(long)]
    pub set: Option<String>,
    /// Comma-separated spectrum.
    #[arg(long, conflicts_with = "lambda_file")]
    pub lambda: Option<String>,
    /// File holding the spectrum (JSON array or separated numbers).
    #[arg(long)]
    pub lambda_file: Option<PathBuf>,
    /// Saturation tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub json: bool,
}

fn parse_setting(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected N,d, got {s:?}"))?;
    let n = a.trim().parse().map_err(|e| format!("N: {e}"))?;
    let d = b.trim().parse().map_err(|e| format!("d: {e}"))?;
    Ok((n, d))
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Degenerate { .. }
        | Error::DegenerateGround(_)
        | Error::Precondition(_)
        | Error::ResidualWeight(_)
        | Error::NotHermitian(_)
        | Error::NotUnitary(_) => EXIT_CONTRACT,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_INPUT;
            }
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    };
    match run(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Sample(a) => cmd_sample(a, stdout, stderr),
        Command::Flow(a) => cmd_flow(a, stdout, stderr),
        Command::Bd(a) => cmd_bd(a, stdout, stderr),
        Command::Variational(a) => cmd_variational(a, stdout, stderr),
        Command::Constraints(a) => cmd_constraints(a, stdout),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))
}

fn emit(out: &Option<PathBuf>, stdout: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => stdout.write_all(bytes)?,
    }
    Ok(())
}

fn to_json(v: &impl Serialize) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

/// The system a command runs on.
enum Target {
    Fermions(FermionSystem),
    Qubits(QubitSystem),
}

impl Target {
    fn constraint(&self) -> &LinearConstraint {
        match self {
            Target::Fermions(s) => MarginalSystem::<f64>::constraint(s),
            Target::Qubits(s) => MarginalSystem::<f64>::constraint(s),
        }
    }

    fn label(&self) -> String {
        match self {
            Target::Fermions(s) => {
                let st = s.basis().setting();
                format!("fermions({},{})", st.particles(), st.orbitals())
            }
            Target::Qubits(s) => format!("qubits({})", s.sites()),
        }
    }

    fn random_state(&self, seed: u64) -> Result<CVector<f64>> {
        Ok(match self {
            Target::Fermions(s) => StateVector::<f64>::random(s.basis().setting(), seed).into_amplitudes(),
            Target::Qubits(s) => QubitState::<f64>::random(s.sites(), seed)?.amplitudes().clone(),
        })
    }
}

fn split_selector(spec: &str) -> (&str, Option<&str>) {
    match spec.rsplit_once('#') {
        Some((p, n)) => (p, Some(n)),
        None => (spec, None),
    }
}

/// First constraint that is neither an equality nor an ordering constraint, or the one named.
fn pick_constraint(set: &ConstraintSet, name: Option<&str>) -> Result<LinearConstraint> {
    match name {
        Some(n) => set.find(n).cloned().ok_or_else(|| Error::Schema(format!("no constraint named {n:?}"))),
        None => set
            .nontrivial_inequalities()
            .next()
            .cloned()
            .ok_or_else(|| Error::Schema(format!("set {:?} has no nontrivial inequality", set.name))),
    }
}

fn catalog_constraint(name: &str, system: SystemKind) -> Result<Option<LinearConstraint>> {
    let width = system.width();
    if name == "trivial" {
        return Ok(Some(LinearConstraint::trivial(width)));
    }
    match system {
        SystemKind::Fermions { n, d } => {
            if matches!(name, "bd" | "borland-dennis" | "D") {
                if (n, d) != (3, 6) {
                    return Err(Error::InvalidSetting(format!("Borland-Dennis needs (3,6), got ({n},{d})")));
                }
                return Ok(Some(borland_dennis_d()));
            }
            if let Some(rest) = name.strip_prefix('S') {
                if let Some((r, s)) = rest.split_once(',') {
                    let r = r.parse().map_err(|_| Error::Schema(format!("bad constraint {name:?}")))?;
                    let s = s.parse().map_err(|_| Error::Schema(format!("bad constraint {name:?}")))?;
                    return Ok(Some(collective_pauli(r, s, n, d)?));
                }
            }
            Ok(pauli_set(n, d).find(name).cloned())
        }
        SystemKind::Qubits { n } => {
            if let Some(i) = name.strip_prefix('D').and_then(|i| i.parse::<usize>().ok()) {
                if i == 0 || i > n {
                    return Err(Error::IndexOutOfRange { index: i, limit: n });
                }
                return Ok(Some(higuchi(n, i - 1)));
            }
            Ok(None)
        }
    }
}

fn resolve_constraint(spec: Option<&str>, system: SystemKind) -> Result<LinearConstraint> {
    let spec = match (spec, system) {
        (Some(s), _) => s,
        (None, SystemKind::Fermions { n: 3, d: 6 }) => "bd",
        (None, SystemKind::Qubits { .. }) => "D1",
        (None, _) => return Err(Error::InvalidSetting("--constraint is required for this setting".into())),
    };
    if let Some(c) = catalog_constraint(spec, system)? {
        return Ok(c);
    }
    let (path, name) = split_selector(spec);
    if !Path::new(path).exists() {
        return Err(Error::Schema(format!("unknown constraint {spec:?}")));
    }
    let set = load_constraint_file(path)?;
    let c = pick_constraint(&set, name)?;
    if c.len() != system.width() {
        return Err(Error::DimensionMismatch {
            expected: system.width(),
            got: c.len(),
        });
    }
    Ok(c)
}

fn system_kind(setting: (usize, usize), qubits: Option<usize>) -> Result<SystemKind> {
    Ok(match qubits {
        Some(n) => SystemKind::Qubits { n },
        None => {
            FockSetting::new(setting.0, setting.1)?;
            SystemKind::Fermions { n: setting.0, d: setting.1 }
        }
    })
}

fn target(args: &SystemArgs) -> Result<Target> {
    let kind = system_kind(args.setting, args.qubits)?;
    let c = resolve_constraint(args.constraint.as_deref(), kind)?;
    Ok(match kind {
        SystemKind::Fermions { n, d } => Target::Fermions(FermionSystem::new(Basis::new(FockSetting::new(n, d)?), c)?),
        SystemKind::Qubits { n } => Target::Qubits(QubitSystem::new(n, c)?),
    })
}

#[derive(Clone, Debug)]
struct SampleRow {
    index: usize,
    d_lambda: f64,
    converged: bool,
    dist_final: f64,
    bound_sqrt2d: f64,
    weight_outside: f64,
    bound_2d: f64,
    ok: bool,
}

impl SampleRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.index,
            fmt_f64(self.d_lambda),
            self.converged,
            fmt_f64(self.dist_final),
            fmt_f64(self.bound_sqrt2d),
            fmt_f64(self.weight_outside),
            fmt_f64(self.bound_2d)
        )
    }
}

fn draw_state<S: MarginalSystem<f64>>(
    sys: &S,
    target: &Target,
    seed: u64,
    max_d: Option<f64>,
    min_gap: f64,
    gap_tol: f64,
) -> Result<CVector<f64>> {
    if max_d.is_none() && min_gap <= 0.0 {
        return target.random_state(seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100_000 {
        let amps = target.random_state(rng.random())?;
        let f = sys.frame(&amps, gap_tol)?;
        if max_d.is_none_or(|m| f.value < m) && f.gap > min_gap {
            return Ok(amps);
        }
    }
    Err(Error::Precondition(format!("no acceptable state for seed {seed} in 100000 draws")))
}

fn sample_one<S: MarginalSystem<f64>>(sys: &S, target: &Target, args: &SampleArgs, index: usize) -> Result<SampleRow> {
    let params = args.integration.params();
    let seed = args.run.seed.wrapping_add(index as u64);
    let amps = draw_state(sys, target, seed, args.max_d, args.min_gap, params.gap_tol)?;
    let trace = integrate(sys, &amps, &params)?;
    let rep = terminal_report(sys, &trace, args.run.tol, params.gap_tol)?;
    Ok(SampleRow {
        index,
        d_lambda: rep.d_initial,
        converged: trace.converged(),
        dist_final: rep.distance,
        bound_sqrt2d: rep.distance_bound,
        weight_outside: rep.weight_outside,
        bound_2d: rep.weight_bound,
        ok: rep.distance_holds && (!trace.converged() || rep.weight_holds),
    })
}

pub fn cmd_sample(args: &SampleArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    args.integration.params().validate()?;
    let target = target(&args.system)?;
    let rows: Vec<SampleRow> = pool(args.run.jobs)?.install(|| {
        (0..args.run.samples)
            .into_par_iter()
            .map(|i| match &target {
                Target::Fermions(s) => sample_one(s, &target, args, i),
                Target::Qubits(s) => sample_one(s, &target, args, i),
            })
            .collect::<Result<_>>()
    })?;
    let mut text = String::from(SAMPLE_HEADER);
    text.push('\n');
    for r in &rows {
        text.push_str(&r.csv());
        text.push('\n');
    }
    emit(&args.run.out, stdout, text.as_bytes())?;
    if let Some(bad) = rows.iter().find(|r| !r.ok) {
        writeln!(stderr, "bound violated: {}", bad.csv())?;
        return Ok(EXIT_VIOLATION);
    }
    Ok(EXIT_OK)
}

fn read_state_file(path: &Path) -> Result<CVector<f64>> {
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let arr = v.get("amplitudes").unwrap_or(&v);
    amplitudes_from_json(arr)
}

fn flow_summary<S: MarginalSystem<f64>>(
    sys: &S,
    target: &Target,
    amps: &CVector<f64>,
    args: &FlowArgs,
) -> Result<(Value, Vec<u8>, i32)> {
    let params = FlowParams {
        snapshot_stride: args.snapshot_stride,
        ..args.integration.params()
    };
    if amps.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: amps.len(),
        });
    }
    let norm = amps.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized(norm));
    }
    let trace = integrate(sys, amps, &params)?;
    let rep = terminal_report(sys, &trace, args.tol, params.gap_tol)?;
    let path = verify_path_bound(&trace);
    let decay = decay_excess(&trace);
    let mono = if trace.len() > 1 { monotonicity_excess(&trace) } else { 0.0 };
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    let bounds_hold = rep.distance_holds && path.passes && decay <= args.tol && mono <= 1e-9;
    let code = match trace.termination {
        Termination::Degenerate => EXIT_CONTRACT,
        _ if !bounds_hold || (trace.converged() && !rep.weight_holds) => EXIT_VIOLATION,
        _ => EXIT_OK,
    };
    let summary = json!({
        "system": target.label(),
        "constraint": target.constraint().name,
        "termination_reason": trace.termination,
        "steps": trace.len() - 1,
        "t_final": trace.times.last(),
        "D_initial": rep.d_initial,
        "D_final": trace.final_d(),
        "dist_final": rep.distance,
        "bound_sqrt2D": rep.distance_bound,
        "weight_outside_PD": rep.weight_outside,
        "bound_2D": rep.weight_bound,
        "decay_excess": decay,
        "monotonicity_excess": mono,
        "path_bound": path,
        "params": params,
        "snapshot_times": trace.snapshots.iter().map(|s| s.t).collect::<Vec<_>>(),
        "snapshots": trace.snapshots_json(),
    });
    Ok((summary, csv, code))
}

pub fn cmd_flow(args: &FlowArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let target = target(&args.system)?;
    let amps = match (&args.state, args.seed) {
        (Some(p), _) => read_state_file(p)?,
        (None, Some(seed)) => target.random_state(seed)?,
        (None, None) => return Err(Error::InvalidSetting("either --seed or --state is required".into())),
    };
    let (summary, csv, code) = match &target {
        Target::Fermions(s) => flow_summary(s, &target, &amps, args)?,
        Target::Qubits(s) => flow_summary(s, &target, &amps, args)?,
    };
    if let Some(p) = &args.trace {
        fs::write(p, &csv)?;
    }
    emit(&args.out, stdout, &to_json(&summary)?)?;
    if code == EXIT_CONTRACT {
        writeln!(stderr, "flow stopped at a degenerate spectrum")?;
    } else if code == EXIT_VIOLATION {
        writeln!(stderr, "bound violated along the trajectory")?;
    }
    Ok(code)
}

#[derive(Serialize)]
struct BdRecord {
    seed_index: usize,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambdas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual_weight_8sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    equality_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    off_diagonal_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    xizeta: Option<bd::BoundCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unstable: Option<bd::BoundCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rotation: Option<Value>,
}

fn bd_state(args: &BdArgs, index: usize) -> Result<StateVector<f64>> {
    let seed = args.run.seed.wrapping_add(index as u64);
    match args.mode {
        BdMode::Haar => Ok(StateVector::random(bd::setting(), seed)),
        BdMode::Quasipinned => bd::sample_quasipinned(args.max_d, seed, 100_000),
        BdMode::Perturbed => bd::perturbed_pinned(args.eps, seed),
    }
}

fn bd_one(args: &BdArgs, index: usize) -> Result<BdRecord> {
    let state = bd_state(args, index)?;
    let mut rec = BdRecord {
        seed_index: index,
        status: "pass",
        reason: None,
        d: None,
        lambdas: None,
        residual_weight_8sd: None,
        equality_defect: None,
        off_diagonal_defect: None,
        xizeta: None,
        unstable: None,
        rotation: None,
    };
    let exp = match bd::expand(&state, args.gap_tol) {
        Ok(e) => e,
        Err(Error::Degenerate { gap, .. }) => {
            rec.status = "skipped";
            rec.reason = Some(format!("degenerate spectrum (gap {gap:e})"));
            return Ok(rec);
        }
        Err(Error::ResidualWeight(w)) => {
            rec.status = "fail";
            rec.reason = Some(format!("weight {w:e} outside the eight configurations"));
            return Ok(rec);
        }
        Err(e) => return Err(e),
    };
    let mut ok = exp.off_diagonal_defect() <= bd::IDENTITY_TOL && exp.occupation_defect() <= bd::IDENTITY_TOL;
    let t1 = bd::check_theorem_xizeta(&exp);
    ok &= t1.holds;
    let t2 = if (exp.lambdas[2] - exp.lambdas[3]) > args.s2_gap {
        let t = bd::check_theorem_unstable(&exp, args.gap_tol)?;
        ok &= t.holds;
        Some(t)
    } else {
        None
    };
    if exp.d_value < 0.25 {
        let r = bd::rotate_and_bound(&state, &exp)?;
        let rot_ok = r.bound.holds && r.agreement <= 1e-10 && r.closed_form.beta.norm() <= 1e-10;
        ok &= rot_ok;
        rec.rotation = Some(json!({
            "residual_weight": r.residual_weight,
            "bound_2D_over_1_minus_D": r.bound.rhs,
            "bound_4D": r.loose_bound.rhs,
            "closed_form_agreement": r.agreement,
            "holds": rot_ok,
        }));
    }
    rec.d = Some(exp.d_value);
    rec.lambdas = Some(exp.lambdas.clone());
    rec.residual_weight_8sd = Some(exp.residual_weight);
    rec.equality_defect = Some(exp.equality_defect());
    rec.off_diagonal_defect = Some(exp.off_diagonal_defect());
    rec.xizeta = Some(t1);
    rec.unstable = t2;
    if !ok {
        rec.status = "fail";
    }
    Ok(rec)
}

pub fn cmd_bd(args: &BdArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let records: Vec<BdRecord> =
        pool(args.run.jobs)?.install(|| (0..args.run.samples).into_par_iter().map(|i| bd_one(args, i)).collect::<Result<_>>())?;
    let count = |s: &str| records.iter().filter(|r| r.status == s).count();
    let failed = count("fail");
    let report = json!({
        "mode": format!("{:?}", args.mode).to_lowercase(),
        "samples": records.len(),
        "passed": count("pass"),
        "failed": failed,
        "skipped": count("skipped"),
        "all_pass": failed == 0,
        "records": records,
    });
    emit(&args.run.out, stdout, &to_json(&report)?)?;
    if failed > 0 {
        writeln!(stderr, "{failed} sample(s) violate a bound")?;
        return Ok(EXIT_VIOLATION);
    }
    Ok(EXIT_OK)
}

fn variational_one(args: &VariationalArgs, constraint: &LinearConstraint, setting: FockSetting, index: usize) -> Result<Value> {
    let seed = args.run.seed.wrapping_add(index as u64);
    let ham = match args.model {
        Model::Random => Hamiltonian::<f64>::random(setting, args.coupling, seed),
        Model::Hubbard => {
            if !setting.orbitals().is_multiple_of(2) {
                return Err(Error::InvalidSetting("Hubbard chains need an even number of spin orbitals".into()));
            }
            Hamiltonian::hubbard_chain(setting.orbitals() / 2, setting.particles(), 1.0, args.coupling, 0.05, seed)?
        }
    };
    let problem = VariationalProblem::new(ham)?;
    if problem.spectrum.degenerate {
        return Ok(json!({ "seed_index": index, "status": "skipped", "reason": "degenerate ground state" }));
    }
    let opts = EstimateOptions {
        optimizer: OptimizerOptions {
            restarts: args.restarts,
            seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            ..OptimizerOptions::default()
        },
        flow: args.integration.params(),
        slack: 1e-7,
        min_s: 1e-6,
    };
    let rep = check_energy_estimates(&problem, constraint, &opts)?;
    let mut v = serde_json::to_value(&rep)?;
    v["seed_index"] = json!(index);
    v["status"] = json!(if rep.holds() { "pass" } else { "fail" });
    Ok(v)
}

pub fn cmd_variational(args: &VariationalArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    if args.system.qubits.is_some() {
        return Err(Error::InvalidSetting("the variational testbed is fermionic".into()));
    }
    args.integration.params().validate()?;
    let kind = system_kind(args.system.setting, None)?;
    let constraint = resolve_constraint(args.system.constraint.as_deref(), kind)?;
    let setting = FockSetting::new(args.system.setting.0, args.system.setting.1)?;
    let rows: Vec<Value> = pool(args.run.jobs)?.install(|| {
        (0..args.run.samples)
            .into_par_iter()
            .map(|i| variational_one(args, &constraint, setting, i))
            .collect::<Result<_>>()
    })?;
    let status = |s: &str| rows.iter().filter(|r| r["status"] == s).count();
    let failed = status("fail");
    let min_of = |key: &str| {
        rows.iter()
            .filter_map(|r| r[key].as_f64())
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
    };
    let report = json!({
        "constraint": constraint.name,
        "model": format!("{:?}", args.model).to_lowercase(),
        "coupling": args.coupling,
        "instances": rows.len(),
        "skipped_degenerate": status("skipped"),
        "failed": failed,
        "all_hold": failed == 0,
        "min_slack_linear": min_of("slack_eq15"),
        "min_slack_ratio": min_of("slack_eq16"),
        "records": rows,
    });
    emit(&args.run.out, stdout, &to_json(&report)?)?;
    if failed > 0 {
        writeln!(stderr, "{failed} instance(s) violate an energy estimate")?;
        return Ok(EXIT_VIOLATION);
    }
    Ok(EXIT_OK)
}

fn parse_lambda(text: &str) -> Result<Vec<f64>> {
    let t = text.trim();
    if t.starts_with('[') {
        return Ok(serde_json::from_str(t)?);
    }
    t.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Error::Schema(format!("not a number: {s:?}"))))
        .collect()
}

fn resolve_set(spec: Option<&str>, kind: SystemKind) -> Result<ConstraintSet> {
    let spec = spec.unwrap_or(match kind {
        SystemKind::Fermions { n: 3, d: 6 } => "bd",
        SystemKind::Fermions { .. } => "pauli",
        SystemKind::Qubits { .. } => "higuchi",
    });
    match (spec, kind) {
        ("bd" | "borland-dennis", SystemKind::Fermions { n: 3, d: 6 }) => Ok(borland_dennis_set()),
        ("pauli", SystemKind::Fermions { n, d }) => Ok(pauli_set(n, d)),
        ("higuchi", SystemKind::Qubits { n }) => higuchi_set(n),
        _ => {
            if let Some(c) = catalog_constraint(spec, kind)? {
                return ConstraintSet::new(c.name.clone(), kind, vec![c]);
            }
            if !Path::new(spec).exists() {
                return Err(Error::Schema(format!("unknown constraint set {spec:?}")));
            }
            let set = load_constraint_file(spec)?;
            if set.system.width() != kind.width() {
                return Err(Error::DimensionMismatch {
                    expected: kind.width(),
                    got: set.system.width(),
                });
            }
            Ok(ConstraintSet::new(set.name, kind, set.constraints)?)
        }
    }
}

pub fn cmd_constraints(args: &ConstraintsArgs, stdout: &mut dyn Write) -> Result<i32> {
    let kind = system_kind(args.setting, args.qubits)?;
    let set = resolve_set(args.set.as_deref(), kind)?;
    let text = match (&args.lambda, &args.lambda_file) {
        (Some(s), _) => s.clone(),
        (None, Some(p)) => fs::read_to_string(p)?,
        (None, None) => return Err(Error::Schema("--lambda or --lambda-file is required".into())),
    };
    let lambdas = parse_lambda(&text)?;
    let values = set.evaluate_all(&lambdas)?;
    let rows: Vec<Value> = set
        .constraints
        .iter()
        .zip(&values)
        .map(|(c, &v)| {
            json!({
                "name": c.name,
                "equality": c.equality,
                "value": v,
                "saturated": v.abs() < args.tol,
                "violated": if c.equality { v.abs() >= args.tol } else { v < -args.tol },
            })
        })
        .collect();
    if args.json {
        stdout.write_all(&to_json(&json!({ "set": set.name, "lambda": lambdas, "constraints": rows }))?)?;
    } else {
        for r in &rows {
            let flag = if r["violated"] == true {
                "violated"
            } else if r["saturated"] == true {
                "saturated"
            } else {
                ""
            };
            writeln!(stdout, "{}\t{}\t{}", r["name"].as_str().unwrap_or(""), fmt_f64(r["value"].as_f64().unwrap_or(f64::NAN)), flag)?;
        }
    }
    Ok(EXIT_OK)
}
