//! Acceptance report: one line per criterion, non-zero exit if any fails.

mod common;

use std::time::Instant;

use marginalflow::borland_dennis as bd;
use marginalflow::constraints::{borland_dennis_d, collective_pauli};
use marginalflow::dhat::{natural_dhat, variance};
use marginalflow::flow::{decay_excess, integrate, terminal_report, verify_derivative_identity};
use marginalflow::fock::apply_one_body_operator;
use marginalflow::marginal::{one_rdm, state_spectrum};
use marginalflow::qubit::{ghz_state, higuchi_evaluate, qubit_dhat, w_state};
use marginalflow::variational::{
    check_energy_estimates, check_energy_sandwich, exact_diagonalize, facet_variational, hartree_fock,
    EstimateOptions, OptimizerOptions,
};
use marginalflow::{
    Basis, CMatrix, Error, FermionSystem, FlowParams, FockSetting, Hamiltonian, QubitState,
    QubitSystem, StateVector, VariationalProblem, C,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn worst(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn bd_setting() -> FockSetting {
    FockSetting::new(3, 6).unwrap()
}

/// Haar states with `D <= 0.4` and spectral gap above `1e-3`, seeds 0, 1, 2, ...
fn flow_ensemble(count: usize) -> Vec<StateVector<f64>> {
    let d = borland_dennis_d();
    let mut out = Vec::with_capacity(count);
    let mut seed = 0u64;
    while out.len() < count {
        let s = StateVector::<f64>::random(bd_setting(), seed);
        seed += 1;
        let sp = state_spectrum(&s, 1e-3).unwrap();
        if !sp.degenerate && d.evaluate(&sp.lambdas).unwrap() <= 0.4 {
            out.push(s);
        }
    }
    out
}

struct FlowRun {
    decay: f64,
    converged: bool,
    distance_excess: f64,
    weight_excess: f64,
}

fn run_flows() -> Vec<FlowRun> {
    let sys = FermionSystem::new(Basis::new(bd_setting()), borland_dennis_d()).unwrap();
    let params = FlowParams::default();
    flow_ensemble(200)
        .par_iter()
        .map(|s| {
            let trace = integrate(&sys, s.amplitudes(), &params).unwrap();
            let rep = terminal_report(&sys, &trace, 1e-6, params.gap_tol).unwrap();
            FlowRun {
                decay: decay_excess(&trace),
                converged: trace.converged(),
                distance_excess: rep.distance - rep.distance_bound,
                weight_excess: rep.weight_outside - rep.weight_bound,
            }
        })
        .collect()
}

fn criterion_1(runs: &[FlowRun]) -> Outcome {
    let w = worst(runs.iter().map(|r| r.decay));
    outcome(
        w <= 1e-6,
        format!("{} trajectories, max of D(t) - D(0)e^-t = {w:.2e} (tol 1e-6)", runs.len()),
    )
}

fn criterion_2() -> Outcome {
    let sys = FermionSystem::new(Basis::new(bd_setting()), borland_dennis_d()).unwrap();
    let mut fermion = Vec::new();
    let mut seed = 1000;
    while fermion.len() < 50 {
        let s = StateVector::<f64>::random(bd_setting(), seed);
        seed += 1;
        match verify_derivative_identity(&sys, s.amplitudes(), 1e-4, 1e-6) {
            Ok(r) => fermion.push(r.relative_error),
            Err(Error::Degenerate { .. }) => continue,
            Err(e) => panic!("{e}"),
        }
    }
    let mut qubit = Vec::new();
    let mut seed = 2000;
    while qubit.len() < 50 {
        let n = 3 + qubit.len() % 3;
        let q = QubitState::<f64>::random(n, seed).unwrap();
        seed += 1;
        let sys = QubitSystem::higuchi(n, qubit.len() % n).unwrap();
        match verify_derivative_identity(&sys, q.amplitudes(), 1e-4, 1e-6) {
            Ok(r) => qubit.push(r.relative_error),
            Err(Error::Degenerate { .. }) => continue,
            Err(e) => panic!("{e}"),
        }
    }
    let (wf, wq) = (worst(fermion), worst(qubit));
    outcome(
        wf <= 1e-5 && wq <= 1e-5,
        format!("50 fermionic + 50 qubit states, worst relative error {wf:.2e} / {wq:.2e} (tol 1e-5)"),
    )
}

fn criterion_3(runs: &[FlowRun]) -> Outcome {
    let conv: Vec<&FlowRun> = runs.iter().filter(|r| r.converged).collect();
    let w = worst(conv.iter().map(|r| r.distance_excess));
    outcome(
        !conv.is_empty() && w <= 1e-6,
        format!("{}/{} converged, max of dist - sqrt(2D) = {w:.2e} (tol 1e-6)", conv.len(), runs.len()),
    )
}

fn criterion_4(runs: &[FlowRun]) -> Outcome {
    let conv: Vec<&FlowRun> = runs.iter().filter(|r| r.converged).collect();
    let w = worst(conv.iter().map(|r| r.weight_excess));
    outcome(
        !conv.is_empty() && w <= 1e-6,
        format!("{} converged, max of weight_outside - 2D = {w:.2e} (tol 1e-6)", conv.len()),
    )
}

fn criterion_5() -> Outcome {
    let c = borland_dennis_d();
    let excess: Vec<f64> = (0..1000u64)
        .into_par_iter()
        .filter_map(|seed| {
            let s = StateVector::<f64>::random(bd_setting(), 5000 + seed);
            let (op, sp) = natural_dhat(&s, &c, 1e-9).ok()?;
            let d = c.evaluate(&sp.lambdas).unwrap();
            (d < 1.0).then(|| d * (1.0 - d) - variance(&s, &op).unwrap())
        })
        .collect();
    let w = worst(excess.iter().copied());
    outcome(
        excess.len() == 1000 && w <= 1e-9,
        format!("{} states, max of D(1-D) - Var = {w:.2e} (tol 1e-9)", excess.len()),
    )
}

fn criterion_6() -> Outcome {
    let rows: Vec<Option<(f64, f64, bool, Option<bool>)>> = (0..1000u64)
        .into_par_iter()
        .map(|seed| {
            let s = StateVector::<f64>::random(bd_setting(), 9000 + seed);
            let exp = match bd::expand(&s, 1e-6) {
                Ok(e) => e,
                Err(Error::Degenerate { .. }) => return None,
                Err(e) => panic!("{e}"),
            };
            let s1 = bd::check_theorem_xizeta(&exp).holds;
            let s2 = (exp.lambdas[2] - exp.lambdas[3] > 0.05).then(|| bd::check_theorem_unstable(&exp, 1e-6).unwrap().holds);
            Some((exp.residual_weight, exp.equality_defect(), s1, s2))
        })
        .collect();
    let ok: Vec<_> = rows.iter().flatten().collect();
    let skipped = rows.len() - ok.len();
    let res = worst(ok.iter().map(|r| r.0));
    let eq = worst(ok.iter().map(|r| r.1));
    let s1 = ok.iter().all(|r| r.2);
    let s2_checked = ok.iter().filter(|r| r.3.is_some()).count();
    let s2 = ok.iter().all(|r| r.3 != Some(false));
    outcome(
        res < 1e-7 && eq <= 1e-8 && s1 && s2 && skipped < 10,
        format!(
            "{} states ({skipped} degenerate), residual {res:.1e} (<1e-7), equalities {eq:.1e} (<=1e-8), |xi|^2+|zeta|^2<=D {s1}, unstable bound {s2} on {s2_checked}",
            ok.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let rows: Vec<(f64, f64, f64)> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let s = bd::sample_quasipinned::<f64>(0.1, 300 + seed, 100_000).unwrap();
            let exp = bd::expand(&s, 1e-6).unwrap();
            let r = bd::rotate_and_bound(&s, &exp).unwrap();
            let d = exp.d_value;
            (d, r.residual_weight - 2.0 * d / (1.0 - d), r.agreement)
        })
        .collect();
    let excess = worst(rows.iter().map(|r| r.1));
    let agree = worst(rows.iter().map(|r| r.2));
    let dmax = worst(rows.iter().map(|r| r.0));
    outcome(
        excess <= 1e-9 && agree <= 1e-10 && dmax < 0.1,
        format!("200 states (max D {dmax:.3}), max of residual - 2D/(1-D) = {excess:.2e} (tol 1e-9), closed form vs brute force {agree:.1e} (tol 1e-10)"),
    )
}

fn criterion_8() -> Outcome {
    let mut failures = 0;
    let mut count = 0;
    for (n, d) in [(2, 4), (3, 6)] {
        let st = FockSetting::new(n, d).unwrap();
        let results: Vec<bool> = (0..100u64)
            .into_par_iter()
            .map(|k| {
                let p = VariationalProblem::new(Hamiltonian::<f64>::random(st, 1.0, 700 + k)).unwrap();
                let psi = StateVector::random(st, 800 + k);
                check_energy_sandwich(&p, &psi, 1e-9).unwrap().holds
            })
            .collect();
        count += results.len();
        failures += results.iter().filter(|h| !**h).count();
    }
    outcome(failures == 0, format!("{count} (H, state) pairs on (2,4) and (3,6), {failures} violations (slack 1e-9)"))
}

fn unique_ground_problems(count: usize, coupling: f64, seed0: u64) -> (Vec<(u64, VariationalProblem<f64>)>, usize) {
    let mut out = Vec::new();
    let mut skipped = 0;
    let mut seed = seed0;
    while out.len() < count {
        let p = VariationalProblem::new(Hamiltonian::<f64>::random(bd_setting(), coupling, seed)).unwrap();
        if p.spectrum.degenerate {
            skipped += 1;
        } else {
            out.push((seed, p));
        }
        seed += 1;
    }
    (out, skipped)
}

fn criterion_9() -> Outcome {
    let (problems, skipped) = unique_ground_problems(50, 0.5, 10_000);
    let c = borland_dennis_d();
    let rows: Vec<(f64, Option<f64>, f64)> = problems
        .par_iter()
        .map(|(seed, p)| {
            let opts = EstimateOptions {
                optimizer: OptimizerOptions {
                    seed: *seed,
                    ..OptimizerOptions::default()
                },
                ..EstimateOptions::default()
            };
            let r = check_energy_estimates(p, &c, &opts).unwrap();
            let sp = &p.spectrum;
            let gap_plus = sp.e_ex_plus - sp.e0;
            let delta = r.e_d - r.e0;
            let linear = delta - 2.0 * gap_plus * r.d_lambda0;
            let ratio = (r.s_lambda0 > 1e-6).then(|| {
                let k = 2.0 * 3.0 * gap_plus / (sp.e_ex_minus - sp.e0);
                delta / (r.e_hf - r.e0) - k * r.d_lambda0 / r.s_lambda0
            });
            (linear, ratio, r.e0 - r.e_d)
        })
        .collect();
    let lin = worst(rows.iter().map(|r| r.0));
    let ratio_rows: Vec<f64> = rows.iter().filter_map(|r| r.1).collect();
    let ratio = worst(ratio_rows.iter().copied());
    let below = worst(rows.iter().map(|r| r.2));
    outcome(
        lin <= 1e-7 && ratio <= 1e-7 && below <= 1e-9,
        format!(
            "50 Hamiltonians at g=0.5 ({skipped} degenerate skipped), max linear excess {lin:.2e}, max ratio excess {ratio:.2e} on {} (tol 1e-7), E_D >= E0",
            ratio_rows.len()
        ),
    )
}

fn criterion_10() -> Outcome {
    let (problems, _) = unique_ground_problems(20, 0.5, 20_000);
    let facet = [collective_pauli(3, 3, 3, 6).unwrap()];
    let diffs: Vec<f64> = problems
        .par_iter()
        .map(|(seed, p)| {
            let opts = OptimizerOptions {
                seed: *seed,
                ..OptimizerOptions::default()
            };
            let hf = hartree_fock(p, &opts).unwrap();
            let fv = facet_variational(p, &facet, &opts).unwrap();
            assert_eq!(fv.zero_rank, 1);
            (hf.energy - fv.energy).abs()
        })
        .collect();
    let w = worst(diffs);
    outcome(w <= 1e-6, format!("20 Hamiltonians, max |E_HF - E_S33| = {w:.2e} (tol 1e-6)"))
}

fn criterion_11() -> Outcome {
    let mut dims_ok = true;
    for n in 3..=5 {
        for site in 0..n {
            let q = QubitState::<f64>::random(n, (10 * n + site) as u64).unwrap();
            let (_, rule) = qubit_dhat(&q, site, 1e-9).unwrap();
            dims_ok &= rule.zero_configs.len() == n;
        }
    }
    let mut err: f64 = 0.0;
    for (state, expect) in [(w_state::<f64>(3).unwrap(), 1.0 / 3.0), (ghz_state::<f64>(3).unwrap(), 0.5)] {
        let ours = higuchi_evaluate(&state).unwrap();
        let lambdas: Vec<f64> = (0..3).map(|s| common::smaller_eig(&common::qubit_site_rdm(state.amplitudes(), 3, s))).collect();
        for (i, v) in ours.iter().enumerate() {
            let oracle = lambdas.iter().sum::<f64>() - 2.0 * lambdas[i];
            err = err.max((v - oracle).abs()).max((v - expect).abs());
        }
    }
    outcome(
        dims_ok && err <= 1e-10,
        format!("zero space dimension = n for n in 3..=5: {dims_ok}; W3 and GHZ3 Higuchi values within {err:.1e} (tol 1e-10)"),
    )
}

fn criterion_12() -> Outcome {
    let st = FockSetting::new(2, 4).unwrap();
    let o = common::Oracle::new(2, 4);
    let basis = Basis::new(st);
    let (mut e_ham, mut e_one, mut e_rdm): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..10u64 {
        let ham = Hamiltonian::<f64>::random(st, 1.0, k);
        let dense = o.project(&o.hamiltonian(ham.one_body(), |i, j, k, l| ham.two_body(i, j, k, l)));
        e_ham = e_ham.max(common::max_abs(&(ham.matrix(&basis).unwrap() - &dense)));
        let reference = common::hermitian_eigenvalues(&dense);
        let ours = exact_diagonalize(&ham).unwrap();
        for (a, b) in ours.energies.iter().zip(&reference) {
            e_ham = e_ham.max((a - b).abs());
        }
        let a = CMatrix::<f64>::from_fn(4, 4, |_, _| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let h = (&a + a.adjoint()) * C::new(0.5, 0.0);
        let psi = StateVector::<f64>::random(st, 100 + k);
        let ours = apply_one_body_operator(&psi, &h).unwrap();
        let reference = o.restrict(&(o.one_body(&h) * o.embed(psi.amplitudes())));
        e_one = e_one.max((ours.amplitudes() - reference).norm());
        let rdm = one_rdm(&psi).unwrap();
        e_rdm = e_rdm.max(common::max_abs(&(rdm.matrix() - o.rdm(psi.amplitudes()))));
    }
    outcome(
        e_ham <= 1e-9 && e_one <= 1e-9 && e_rdm <= 1e-9,
        format!("(2,4), 10 instances: Hamiltonian {e_ham:.1e}, one-body action {e_one:.1e}, 1-RDM {e_rdm:.1e} (tol 1e-9)"),
    )
}

fn main() {
    let mut failed = Vec::new();
    let mut report = |id: usize, name: &str, start: Instant, o: Outcome| {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status}  {name}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed.push(id);
        }
    };
    let t = Instant::now();
    let runs = run_flows();
    report(1, "flow decay", t, criterion_1(&runs));
    report(2, "derivative identity", Instant::now(), criterion_2());
    report(3, "distance bound", t, criterion_3(&runs));
    report(4, "weight bound", t, criterion_4(&runs));
    report(5, "variance lower bound", Instant::now(), criterion_5());
    report(6, "Borland-Dennis structure", Instant::now(), criterion_6());
    report(7, "rotation bound", Instant::now(), criterion_7());
    report(8, "energy sandwich", Instant::now(), criterion_8());
    report(9, "energy estimates", Instant::now(), criterion_9());
    report(10, "Hartree-Fock facet equivalence", Instant::now(), criterion_10());
    report(11, "qubit selection rule", Instant::now(), criterion_11());
    report(12, "oracle equivalence", Instant::now(), criterion_12());
    if failed.is_empty() {
        println!("acceptance: all 12 criteria pass");
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
