//! The stabilizing flow `dPsi/dt = -(1 - |Psi><Psi|) D_Psi |Psi>` and the checks of
//! its decay, derivative, path-length and weight bounds.
//!
//! The flow is integrated with classical fourth-order Runge-Kutta steps. The operator
//! `D_Psi` is rebuilt from the marginals of every stage point, each accepted state is
//! renormalized, and a step is halved whenever `D` increases, the spectrum becomes
//! degenerate, or the sorted natural orbitals stop matching the previous step's orbitals.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::constraints::LinearConstraint;
use crate::dhat::{natural_dhat, zero_projector, DhatOperator};
use crate::error::{Error, Result};
use crate::fock::{Basis, StateVector};
use crate::scalar::{CMatrix, CVector, ComplexField, Real};

/// Marginal data at one point of state space: the operator `D_Psi` built from the
/// current single-party eigenbases and the spectral quantities around it.
#[derive(Clone, Debug)]
pub struct Frame<T: Real> {
    pub op: DhatOperator<T>,
    /// `D(lambda)` evaluated on the marginal spectra.
    pub value: T,
    pub gap: T,
    pub degenerate: bool,
    /// One eigenbasis per party (one for fermions, one per site for qubits), columns in
    /// the order used to build the operator.
    pub eigenbases: Vec<CMatrix<T>>,
}

/// A state space together with one constraint whose `D_Psi` drives the flow.
pub trait MarginalSystem<T: Real>: Sync {
    fn dim(&self) -> usize;

    /// Frame of the normalized state `amps`. Degeneracy is reported in the frame, not as
    /// an error.
    fn frame(&self, amps: &CVector<T>, gap_tol: f64) -> Result<Frame<T>>;

    fn constraint(&self) -> &LinearConstraint;
}

/// Fermions in a fixed Slater basis.
#[derive(Clone, Debug)]
pub struct FermionSystem {
    basis: Arc<Basis>,
    constraint: LinearConstraint,
}

impl FermionSystem {
    pub fn new(basis: Arc<Basis>, constraint: LinearConstraint) -> Result<Self> {
        let d = basis.setting().orbitals();
        if constraint.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: constraint.len(),
            });
        }
        Ok(Self { basis, constraint })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }
}

impl<T: Real> MarginalSystem<T> for FermionSystem {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn frame(&self, amps: &CVector<T>, gap_tol: f64) -> Result<Frame<T>> {
        let state = StateVector::new(self.basis.clone(), amps.clone())?;
        let spectrum = crate::marginal::state_spectrum(&state, gap_tol)?;
        let value = self.constraint.evaluate(&spectrum.lambdas)?;
        let op = crate::dhat::build_dhat(&self.constraint, &spectrum.orbitals, &self.basis)?;
        Ok(Frame {
            op,
            value,
            gap: spectrum.gap,
            degenerate: spectrum.degenerate,
            eigenbases: vec![spectrum.orbitals.matrix().clone()],
        })
    }

    fn constraint(&self) -> &LinearConstraint {
        &self.constraint
    }
}

/// Integration controls.
#[derive(Clone, Debug, Serialize)]
pub struct FlowParams {
    pub dt_initial: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_max: f64,
    /// Convergence is declared once `D` drops below this value.
    pub stop_d: f64,
    pub gap_tol: f64,
    /// Keep every `snapshot_stride`-th accepted state (first and last are always kept).
    pub snapshot_stride: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            dt_initial: 0.01,
            dt_min: 1e-7,
            dt_max: 0.05,
            t_max: 60.0,
            stop_d: 1e-10,
            gap_tol: 1e-6,
            snapshot_stride: 10,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt_initial
            && self.dt_initial <= self.dt_max
            && self.stop_d >= 0.0
            && self.t_max >= 0.0
            && self.snapshot_stride >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("invalid flow parameters {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    Degenerate,
    TMax,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::Degenerate => "degenerate",
            Termination::TMax => "t_max",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot<T: Real> {
    pub t: T,
    pub d_value: T,
    pub amps: CVector<T>,
}

/// Time series of one trajectory.
#[derive(Clone, Debug)]
pub struct FlowTrace<T: Real> {
    pub times: Vec<T>,
    pub d_values: Vec<T>,
    pub variances: Vec<T>,
    /// `||Psi(t) - Psi(0)||`.
    pub dist_from_start: Vec<T>,
    /// Running minimum of the spectral gap.
    pub min_gap: Vec<T>,
    pub snapshots: Vec<Snapshot<T>>,
    pub termination: Termination,
    /// Final renormalized state, the estimate of `Psi_inf`.
    pub terminal: CVector<T>,
}

impl<T: Real> FlowTrace<T> {
    pub fn initial_d(&self) -> T {
        self.d_values[0]
    }

    pub fn final_d(&self) -> T {
        *self.d_values.last().expect("non-empty trace")
    }

    pub fn final_distance(&self) -> T {
        *self.dist_from_start.last().expect("non-empty trace")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// CSV with header `t,D,variance,dist_from_start,min_gap`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(b"t,D,variance,dist_from_start,min_gap\n")?;
        for k in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(self.times[k].to_f64_lossy()),
                fmt_f64(self.d_values[k].to_f64_lossy()),
                fmt_f64(self.variances[k].to_f64_lossy()),
                fmt_f64(self.dist_from_start[k].to_f64_lossy()),
                fmt_f64(self.min_gap[k].to_f64_lossy()),
            )?;
        }
        Ok(())
    }

    /// JSON array of snapshots, each an array of `[re, im]` amplitude pairs.
    pub fn snapshots_json(&self) -> serde_json::Value {
        serde_json::Value::Array(self.snapshots.iter().map(|s| amplitudes_json(&s.amps)).collect())
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:e}")
    }
}

pub fn amplitudes_json<T: Real>(amps: &CVector<T>) -> serde_json::Value {
    serde_json::Value::Array(
        amps.iter()
            .map(|z| serde_json::json!([z.re.to_f64_lossy(), z.im.to_f64_lossy()]))
            .collect(),
    )
}

/// Parses a JSON array of `[re, im]` pairs.
pub fn amplitudes_from_json<T: Real>(value: &serde_json::Value) -> Result<CVector<T>> {
    let arr = value
        .as_array()
        .ok_or_else(|| Error::Schema("amplitudes must be an array of [re, im] pairs".into()))?;
    let mut out = Vec::with_capacity(arr.len());
    for (i, pair) in arr.iter().enumerate() {
        let p = pair.as_array().filter(|p| p.len() == 2).ok_or_else(|| {
            Error::Schema(format!("amplitude {i} must be a [re, im] pair"))
        })?;
        let re = p[0].as_f64().ok_or_else(|| Error::Schema(format!("amplitude {i}: re")))?;
        let im = p[1].as_f64().ok_or_else(|| Error::Schema(format!("amplitude {i}: im")))?;
        out.push(crate::scalar::C::new(T::lit(re), T::lit(im)));
    }
    Ok(CVector::from_vec(out))
}

fn normalized<T: Real>(v: &CVector<T>) -> CVector<T> {
    let n = v.norm();
    v.map(|z| z / n)
}

/// `-(1 - |Psi><Psi|) D |Psi>` for a normalized `amps` and its frame operator.
fn tangent<T: Real>(op: &DhatOperator<T>, amps: &CVector<T>) -> CVector<T> {
    let dpsi = op.apply(amps);
    let mean = amps.dotc(&dpsi);
    amps * mean - dpsi
}

/// Flow velocity at a normalized state; fails on a degenerate spectrum.
pub fn flow_rhs<T: Real, S: MarginalSystem<T>>(system: &S, amps: &CVector<T>, gap_tol: f64) -> Result<CVector<T>> {
    let frame = system.frame(amps, gap_tol)?;
    if frame.degenerate {
        return Err(Error::Degenerate {
            gap: frame.gap.to_f64_lossy(),
            tol: gap_tol,
        });
    }
    Ok(tangent(&frame.op, amps))
}

/// `flow_rhs` for a fermionic state and constraint.
pub fn fermion_flow_rhs<T: Real>(
    state: &StateVector<T>,
    constraint: &LinearConstraint,
    gap_tol: f64,
) -> Result<StateVector<T>> {
    state.ensure_normalized(1e-8)?;
    let (op, _) = natural_dhat(state, constraint, gap_tol)?;
    state.with_amplitudes(tangent(&op, state.amplitudes()))
}

struct StepOutcome<T: Real> {
    amps: CVector<T>,
    frame: Frame<T>,
}

enum StepError {
    Degenerate,
}

/// Whether each sorted eigenvector still overlaps most with its predecessor.
fn orbitals_consistent<T: Real>(prev: &[CMatrix<T>], next: &[CMatrix<T>]) -> bool {
    prev.iter().zip(next).all(|(a, b)| {
        let o = a.adjoint() * b;
        (0..o.ncols()).all(|j| {
            let col = o.column(j);
            let mut best = 0;
            for i in 1..col.len() {
                if col[i].modulus() > col[best].modulus() {
                    best = i;
                }
            }
            best == j
        })
    })
}

fn rk4_step<T: Real, S: MarginalSystem<T>>(
    system: &S,
    amps: &CVector<T>,
    frame: &Frame<T>,
    dt: T,
    gap_tol: f64,
) -> std::result::Result<StepOutcome<T>, StepError> {
    let stage = |v: &CVector<T>| -> std::result::Result<(CVector<T>, CVector<T>), StepError> {
        let v = normalized(v);
        let f = system.frame(&v, gap_tol).map_err(|_| StepError::Degenerate)?;
        if f.degenerate {
            return Err(StepError::Degenerate);
        }
        let t = tangent(&f.op, &v);
        Ok((v, t))
    };
    let half = dt * T::lit(0.5);
    let k1 = tangent(&frame.op, amps);
    let (_, k2) = stage(&(amps + k1.map(|z| z * half)))?;
    let (_, k3) = stage(&(amps + k2.map(|z| z * half)))?;
    let (_, k4) = stage(&(amps + k3.map(|z| z * dt)))?;
    let sixth = dt / T::lit(6.0);
    let incr = (k1 + k2.map(|z| z * T::lit(2.0)) + k3.map(|z| z * T::lit(2.0)) + k4).map(|z| z * sixth);
    let next = normalized(&(amps + incr));
    let f = system.frame(&next, gap_tol).map_err(|_| StepError::Degenerate)?;
    if f.degenerate {
        return Err(StepError::Degenerate);
    }
    Ok(StepOutcome { amps: next, frame: f })
}

/// Integrates the flow from `state0` (normalized) until convergence, degeneracy or `t_max`.
pub fn integrate<T: Real, S: MarginalSystem<T>>(
    system: &S,
    state0: &CVector<T>,
    params: &FlowParams,
) -> Result<FlowTrace<T>> {
    params.validate()?;
    if state0.len() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: state0.len(),
        });
    }
    let n0 = state0.norm();
    if (n0 - T::one()).abs() > T::tol(1e-8) {
        return Err(Error::NotNormalized(n0.to_f64_lossy()));
    }
    let start = normalized(state0);
    let mut frame = system.frame(&start, params.gap_tol)?;
    let mut amps = start.clone();
    let mut t = T::zero();
    let mut trace = FlowTrace {
        times: vec![t],
        d_values: vec![frame.value],
        variances: vec![frame.op.variance_of(&amps)],
        dist_from_start: vec![T::zero()],
        min_gap: vec![frame.gap],
        snapshots: vec![Snapshot {
            t,
            d_value: frame.value,
            amps: amps.clone(),
        }],
        termination: Termination::TMax,
        terminal: amps.clone(),
    };
    // an already pinned start is a fixed point even when its spectrum is degenerate
    if frame.value < T::lit(params.stop_d) {
        trace.termination = Termination::Converged;
        return Ok(trace);
    }
    if frame.degenerate {
        trace.termination = Termination::Degenerate;
        return Ok(trace);
    }
    let t_max = T::lit(params.t_max);
    let dt_min = T::lit(params.dt_min);
    let dt_max = T::lit(params.dt_max);
    let mut dt = T::lit(params.dt_initial);
    let mut accepted = 0usize;
    let mut running_gap = frame.gap;
    let termination = loop {
        if t >= t_max {
            break Termination::TMax;
        }
        let step = if t + dt > t_max { t_max - t } else { dt };
        match rk4_step(system, &amps, &frame, step, params.gap_tol) {
            Ok(out) => {
                let increased = out.frame.value > frame.value;
                let jumped = !orbitals_consistent(&frame.eigenbases, &out.frame.eigenbases);
                if (increased || jumped) && step * T::lit(0.5) >= dt_min {
                    dt = step * T::lit(0.5);
                    continue;
                }
                if jumped {
                    break Termination::Degenerate;
                }
                t += step;
                amps = out.amps;
                frame = out.frame;
                accepted += 1;
                if frame.gap < running_gap {
                    running_gap = frame.gap;
                }
                trace.times.push(t);
                trace.d_values.push(frame.value);
                trace.variances.push(frame.op.variance_of(&amps));
                trace.dist_from_start.push((&amps - &start).norm());
                trace.min_gap.push(running_gap);
                let done = frame.value < T::lit(params.stop_d);
                if accepted.is_multiple_of(params.snapshot_stride) || done {
                    trace.snapshots.push(Snapshot {
                        t,
                        d_value: frame.value,
                        amps: amps.clone(),
                    });
                }
                if done {
                    break Termination::Converged;
                }
                let grown = dt * T::lit(1.5);
                dt = if grown > dt_max { dt_max } else { grown };
            }
            Err(StepError::Degenerate) => {
                if step * T::lit(0.5) >= dt_min {
                    dt = step * T::lit(0.5);
                } else {
                    break Termination::Degenerate;
                }
            }
        }
    };
    if trace.snapshots.last().map(|s| s.t) != Some(t) {
        trace.snapshots.push(Snapshot {
            t,
            d_value: frame.value,
            amps: amps.clone(),
        });
    }
    trace.termination = termination;
    trace.terminal = amps;
    Ok(trace)
}

/// Finite-difference check of `dD/dt = -2 Var D`.
#[derive(Clone, Debug, Serialize)]
pub struct DerivativeReport {
    pub d_value: f64,
    pub finite_difference: f64,
    pub minus_two_variance: f64,
    /// `|fd + 2 Var| / max(Var, 1e-12)`.
    pub relative_error: f64,
    pub tolerance: f64,
    pub passes: bool,
}

/// Central difference of `D(lambda(t))` over one Runge-Kutta step of size `h` in each
/// direction, compared with `-2 Var`.
pub fn verify_derivative_identity<T: Real, S: MarginalSystem<T>>(
    system: &S,
    amps: &CVector<T>,
    h: f64,
    gap_tol: f64,
) -> Result<DerivativeReport> {
    let amps = normalized(amps);
    let frame = system.frame(&amps, gap_tol)?;
    if frame.degenerate {
        return Err(Error::Degenerate {
            gap: frame.gap.to_f64_lossy(),
            tol: gap_tol,
        });
    }
    let var = frame.op.variance_of(&amps).to_f64_lossy();
    let tolerance = f64::max(1e-6, 10.0 * h * h);
    if var == 0.0 {
        return Ok(DerivativeReport {
            d_value: frame.value.to_f64_lossy(),
            finite_difference: 0.0,
            minus_two_variance: 0.0,
            relative_error: 0.0,
            tolerance,
            passes: true,
        });
    }
    let degenerate = |_| Error::Degenerate {
        gap: frame.gap.to_f64_lossy(),
        tol: gap_tol,
    };
    let fwd = rk4_step(system, &amps, &frame, T::lit(h), gap_tol).map_err(degenerate)?;
    let bwd = rk4_step(system, &amps, &frame, T::lit(-h), gap_tol).map_err(degenerate)?;
    let fd = (fwd.frame.value - bwd.frame.value).to_f64_lossy() / (2.0 * h);
    let target = -2.0 * var;
    let rel = (fd - target).abs() / var.max(1e-12);
    Ok(DerivativeReport {
        d_value: frame.value.to_f64_lossy(),
        finite_difference: fd,
        minus_two_variance: target,
        relative_error: rel,
        tolerance,
        passes: rel <= tolerance,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PathBoundReport {
    pub pairs_checked: usize,
    /// Largest `||Psi(t2) - Psi(t1)|| - (sqrt(2 D(t1)) - sqrt(2 D(t2)))`.
    pub worst_excess: f64,
    pub tolerance: f64,
    pub passes: bool,
}

/// `||Psi(t2) - Psi(t1)|| <= sqrt(2 D(t1)) - sqrt(2 D(t2))` over all snapshot pairs.
pub fn verify_path_bound<T: Real>(trace: &FlowTrace<T>) -> PathBoundReport {
    let tol = 1e-7;
    let mut worst = f64::NEG_INFINITY;
    let mut pairs = 0;
    let snaps = &trace.snapshots;
    for a in 0..snaps.len() {
        for b in a..snaps.len() {
            let lhs = (&snaps[b].amps - &snaps[a].amps).norm().to_f64_lossy();
            let r1 = (2.0 * snaps[a].d_value.to_f64_lossy().max(0.0)).sqrt();
            let r2 = (2.0 * snaps[b].d_value.to_f64_lossy().max(0.0)).sqrt();
            worst = worst.max(lhs - (r1 - r2));
            pairs += 1;
        }
    }
    PathBoundReport {
        pairs_checked: pairs,
        worst_excess: worst,
        tolerance: tol,
        passes: worst <= tol,
    }
}

/// Terminal distance and weight checks against the starting value of `D`.
#[derive(Clone, Debug, Serialize)]
pub struct TerminalReport {
    pub d_initial: f64,
    pub distance: f64,
    pub distance_bound: f64,
    /// `1 - ||P_D Psi_0||^2` with the projector in the eigenbases of `Psi_inf`.
    pub weight_outside: f64,
    pub weight_bound: f64,
    pub distance_holds: bool,
    pub weight_holds: bool,
}

pub fn terminal_report<T: Real, S: MarginalSystem<T>>(
    system: &S,
    trace: &FlowTrace<T>,
    tol: f64,
    gap_tol: f64,
) -> Result<TerminalReport> {
    let d0 = trace.initial_d().to_f64_lossy();
    let start = &trace.snapshots[0].amps;
    let frame = system.frame(&trace.terminal, gap_tol)?;
    let p = zero_projector(&frame.op);
    let weight_outside = 1.0 - p.weight(start).to_f64_lossy();
    let distance = (&trace.terminal - start).norm().to_f64_lossy();
    let distance_bound = (2.0 * d0.max(0.0)).sqrt();
    Ok(TerminalReport {
        d_initial: d0,
        distance,
        distance_bound,
        weight_outside,
        weight_bound: 2.0 * d0,
        distance_holds: distance <= distance_bound + tol,
        weight_holds: weight_outside <= 2.0 * d0 + tol,
    })
}

/// Largest violation of `D(t) <= D(0) e^{-t}` along the trace.
pub fn decay_excess<T: Real>(trace: &FlowTrace<T>) -> f64 {
    let d0 = trace.initial_d().to_f64_lossy();
    trace
        .times
        .iter()
        .zip(&trace.d_values)
        .map(|(t, d)| d.to_f64_lossy() - d0 * (-t.to_f64_lossy()).exp())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest increase of `D` between consecutive recorded times.
pub fn monotonicity_excess<T: Real>(trace: &FlowTrace<T>) -> f64 {
    trace
        .d_values
        .windows(2)
        .map(|w| (w[1] - w[0]).to_f64_lossy())
        .fold(f64::NEG_INFINITY, f64::max)
}
