mod common;

use marginalflow::constraints::{
    borland_dennis_d, borland_dennis_set, collective_pauli, constraint_json, hf_distance, higuchi_set,
    parse_constraint_json,
};
use marginalflow::dhat::{natural_dhat, variance};
use marginalflow::flow::integrate;
use marginalflow::fock::{apply_number_operator, apply_orbital_rotation};
use marginalflow::marginal::{one_rdm, state_spectrum};
use marginalflow::qubit::{higuchi_evaluate, local_spectra};
use marginalflow::{
    Basis, CMatrix, CVector, FermionSystem, FlowParams, FockSetting, LinearConstraint, OrbitalRotation, QubitState,
    StateVector, C,
};
use proptest::prelude::*;

fn setting_strategy() -> impl Strategy<Value = FockSetting> {
    prop_oneof![Just((2, 4)), Just((3, 6)), Just((2, 5)), Just((1, 4)), Just((3, 7))]
        .prop_map(|(n, d)| FockSetting::new(n, d).unwrap())
}

fn decreasing(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, d).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

fn kron(a: &CMatrix<f64>, b: &CMatrix<f64>) -> CMatrix<f64> {
    a.kronecker(b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constraint_is_affine_on_sorted_spectra(
        kappa in prop::collection::vec(-3i64..=3, 6),
        kappa0 in -3i64..=3,
        l in decreasing(6),
        m in decreasing(6),
        t in 0.0..1.0f64,
    ) {
        let c = LinearConstraint::new("c", kappa0, kappa);
        let mix: Vec<f64> = l.iter().zip(&m).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let lhs = c.evaluate(&mix).unwrap();
        let rhs = t * c.evaluate(&l).unwrap() + (1.0 - t) * c.evaluate(&m).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn lift_is_multiplicative(st in setting_strategy(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let basis = Basis::new(st);
        let u = OrbitalRotation::<f64>::random(st.orbitals(), s1);
        let v = OrbitalRotation::<f64>::random(st.orbitals(), s2);
        let lhs = u.compose(&v).lift(&basis);
        let rhs = u.lift(&basis) * v.lift(&basis);
        prop_assert!(common::max_abs(&(lhs - rhs)) < 1e-10);
    }

    #[test]
    fn lift_preserves_inner_products(st in setting_strategy(), s in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let u = OrbitalRotation::<f64>::random(st.orbitals(), s);
        let psi = StateVector::<f64>::random(st, a);
        let phi = StateVector::<f64>::random(st, b);
        let up = apply_orbital_rotation(&psi, &u).unwrap();
        let uf = apply_orbital_rotation(&phi, &u).unwrap();
        prop_assert!((up.inner(&uf) - psi.inner(&phi)).norm() < 1e-10);
    }

    #[test]
    fn rotated_rdm_is_conjugated(st in setting_strategy(), s in any::<u64>(), a in any::<u64>()) {
        let u = OrbitalRotation::<f64>::random(st.orbitals(), s);
        let psi = StateVector::<f64>::random(st, a);
        let rho = one_rdm(&psi).unwrap();
        let rotated = one_rdm(&apply_orbital_rotation(&psi, &u).unwrap()).unwrap();
        let expect = u.matrix() * rho.matrix() * u.matrix().adjoint();
        prop_assert!(common::max_abs(&(rotated.matrix() - expect)) < 1e-10);
    }

    #[test]
    fn number_operators_sum_to_particle_number(st in setting_strategy(), a in any::<u64>()) {
        let psi = StateVector::<f64>::random(st, a);
        let mut total = CVector::<f64>::zeros(psi.amplitudes().len());
        for j in 0..st.orbitals() {
            total += apply_number_operator(&psi, j).unwrap().amplitudes();
        }
        let expect = psi.amplitudes() * C::new(st.particles() as f64, 0.0);
        prop_assert!((total - expect).norm() < 1e-12);
        let rho = one_rdm(&psi).unwrap();
        prop_assert!((rho.matrix().trace().re - st.particles() as f64).abs() < 1e-12);
    }

    #[test]
    fn spectrum_lies_in_pauli_box(st in setting_strategy(), a in any::<u64>()) {
        let sp = state_spectrum(&StateVector::<f64>::random(st, a), 1e-6).unwrap();
        for w in sp.lambdas.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!(sp.lambdas[0] <= 1.0 + 1e-12 && *sp.lambdas.last().unwrap() >= -1e-12);
        prop_assert!(hf_distance(&sp.lambdas, st.particles()).unwrap() >= -1e-12);
    }

    #[test]
    fn borland_dennis_set_holds_on_random_states(a in any::<u64>()) {
        let st = FockSetting::new(3, 6).unwrap();
        let sp = state_spectrum(&StateVector::<f64>::random(st, a), 1e-6).unwrap();
        let set = borland_dennis_set();
        for (c, v) in set.constraints.iter().zip(set.evaluate_all(&sp.lambdas).unwrap()) {
            if c.equality {
                prop_assert!(v.abs() < 1e-10, "{} = {}", c.name, v);
            } else {
                prop_assert!(v >= -1e-10, "{} = {}", c.name, v);
            }
        }
    }

    #[test]
    fn dhat_expectation_and_variance_bound(a in any::<u64>()) {
        let st = FockSetting::new(3, 6).unwrap();
        let psi = StateVector::<f64>::random(st, a);
        let (op, sp) = natural_dhat(&psi, &borland_dennis_d(), 1e-9).unwrap();
        let d = borland_dennis_d().evaluate(&sp.lambdas).unwrap();
        prop_assert!((op.expectation(psi.amplitudes()) - d).abs() < 1e-10);
        let var = variance(&psi, &op).unwrap();
        prop_assert!(var >= d * (1.0 - d) - 1e-9);
    }

    #[test]
    fn d_is_invariant_under_orbital_rotations(a in any::<u64>(), s in any::<u64>()) {
        let st = FockSetting::new(3, 6).unwrap();
        let psi = StateVector::<f64>::random(st, a);
        let rotated = apply_orbital_rotation(&psi, &OrbitalRotation::random(6, s)).unwrap();
        let c = collective_pauli(1, 1, 3, 6).unwrap();
        let l0 = state_spectrum(&psi, 1e-6).unwrap().lambdas;
        let l1 = state_spectrum(&rotated, 1e-6).unwrap().lambdas;
        prop_assert!((c.evaluate(&l0).unwrap() - c.evaluate(&l1).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn higuchi_nonnegative(n in 2usize..=6, a in any::<u64>()) {
        let q = QubitState::<f64>::random(n, a).unwrap();
        for v in higuchi_evaluate(&q).unwrap() {
            prop_assert!(v >= -1e-12);
        }
    }

    #[test]
    fn local_spectra_match_partial_trace(n in 2usize..=5, a in any::<u64>()) {
        let q = QubitState::<f64>::random(n, a).unwrap();
        let ls = local_spectra(&q, 1e-9).unwrap();
        for site in 0..n {
            let r = common::qubit_site_rdm(q.amplitudes(), n, site);
            prop_assert!((ls.smaller[site] - common::smaller_eig(&r)).abs() < 1e-10);
        }
    }

    #[test]
    fn higuchi_invariant_under_local_unitaries(n in 2usize..=4, a in any::<u64>(), s in any::<u64>()) {
        let q = QubitState::<f64>::random(n, a).unwrap();
        let mut u = CMatrix::<f64>::identity(1, 1);
        for site in 0..n {
            let local = OrbitalRotation::<f64>::random(2, s.wrapping_add(site as u64));
            u = kron(&u, local.matrix());
        }
        let moved = QubitState::new(n, u * q.amplitudes()).unwrap();
        let set = higuchi_set(n).unwrap();
        let before = higuchi_evaluate(&q).unwrap();
        let after = higuchi_evaluate(&moved).unwrap();
        prop_assert_eq!(set.constraints.len(), n);
        for (x, y) in before.iter().zip(&after) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn constraint_json_round_trip(
        rows in prop::collection::vec((-4i64..=4, prop::collection::vec(-4i64..=4, 5), any::<bool>()), 1..5),
    ) {
        let cs = rows
            .into_iter()
            .enumerate()
            .map(|(i, (k0, k, eq))| {
                if eq {
                    LinearConstraint::equality(format!("c{i}"), k0, k)
                } else {
                    LinearConstraint::new(format!("c{i}"), k0, k)
                }
            })
            .collect();
        let set = marginalflow::ConstraintSet::new("rt", marginalflow::SystemKind::Fermions { n: 2, d: 5 }, cs).unwrap();
        let back = parse_constraint_json(&constraint_json(&set).unwrap()).unwrap();
        prop_assert_eq!(back, set);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn flow_decreases_d(a in any::<u64>()) {
        let st = FockSetting::new(3, 6).unwrap();
        let sys = FermionSystem::new(Basis::new(st), borland_dennis_d()).unwrap();
        let psi = StateVector::<f64>::random(st, a);
        let params = FlowParams { t_max: 5.0, ..FlowParams::default() };
        match integrate(&sys, psi.amplitudes(), &params) {
            Ok(trace) => {
                for w in trace.d_values.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-9);
                }
                for (t, d) in trace.times.iter().zip(&trace.d_values) {
                    prop_assert!(*d <= trace.initial_d() * (-t).exp() + 1e-6);
                }
            }
            Err(marginalflow::Error::Degenerate { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}
