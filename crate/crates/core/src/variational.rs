//! Small-Hamiltonian testbed: exact diagonalization, Hartree-Fock, facet-restricted
//! variational ansatzes and the energy estimates that tie them to `D(lambda_0)`.
//!
//! Hamiltonians are `sum h_ij a†_i a_j + sum V_ijkl a†_i a†_j a_l a_k` with `V`
//! antisymmetric in `(i, j)` and in `(k, l)` and `V_ijkl = conj(V_klij)`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::constraints::{hf_distance, hf_distance_unordered, LinearConstraint};
use crate::error::{Error, Result};
use crate::flow::{integrate, FermionSystem, FlowParams};
use crate::fock::{annihilate, create, excite, express_in_basis, Basis, FockSetting, OrbitalRotation, StateVector};
use crate::marginal::{one_rdm, state_spectrum, transition_rdm};
use crate::scalar::{cr, czero, expm_antihermitian, hermitian_defect, hermitian_eigh, CMatrix, CVector, Real, C};

/// Ground-state degeneracy threshold.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Hamiltonian<T: Real> {
    setting: FockSetting,
    one_body: CMatrix<T>,
    /// `V_ijkl` at `((i d + j) d + k) d + l`.
    two_body: Vec<C<T>>,
}

fn idx4(d: usize, i: usize, j: usize, k: usize, l: usize) -> usize {
    ((i * d + j) * d + k) * d + l
}

fn complex_gaussian<T: Real>(rng: &mut ChaCha8Rng) -> C<T> {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C::new(T::lit(re), T::lit(im))
}

impl<T: Real> Hamiltonian<T> {
    pub fn new(setting: FockSetting, one_body: CMatrix<T>, two_body: Vec<C<T>>) -> Result<Self> {
        let d = setting.orbitals();
        if one_body.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: one_body.nrows(),
            });
        }
        if two_body.len() != d * d * d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d * d * d,
                got: two_body.len(),
            });
        }
        let defect = hermitian_defect(&one_body);
        if defect > T::tol(1e-10) {
            return Err(Error::NotHermitian(defect.to_f64_lossy()));
        }
        let ham = Self { setting, one_body, two_body };
        let (anti, herm) = ham.two_body_defects();
        if anti > T::tol(1e-10) {
            return Err(Error::Precondition(format!("two-body tensor not antisymmetric ({})", anti.to_f64_lossy())));
        }
        if herm > T::tol(1e-10) {
            return Err(Error::NotHermitian(herm.to_f64_lossy()));
        }
        Ok(ham)
    }

    pub fn one_body_only(setting: FockSetting, h: CMatrix<T>) -> Result<Self> {
        let d = setting.orbitals();
        Self::new(setting, h, vec![czero(); d * d * d * d])
    }

    /// Gaussian Hermitian `h` and a Gaussian antisymmetrized `V` scaled by `coupling`.
    pub fn random(setting: FockSetting, coupling: f64, seed: u64) -> Self {
        let d = setting.orbitals();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CMatrix::from_fn(d, d, |_, _| complex_gaussian::<T>(&mut rng));
        let h = (&a + a.adjoint()).map(|z| z * cr(T::lit(0.5)));
        let w: Vec<C<T>> = (0..d * d * d * d).map(|_| complex_gaussian(&mut rng)).collect();
        let mut x = vec![czero(); w.len()];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        x[idx4(d, i, j, k, l)] = (w[idx4(d, i, j, k, l)] - w[idx4(d, j, i, k, l)] - w[idx4(d, i, j, l, k)]
                            + w[idx4(d, j, i, l, k)])
                            * cr(T::lit(0.5));
                    }
                }
            }
        }
        let g = cr(T::lit(coupling * 0.5));
        let mut v = vec![czero(); w.len()];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        v[idx4(d, i, j, k, l)] = (x[idx4(d, i, j, k, l)] + x[idx4(d, k, l, i, j)].conj()) * g;
                    }
                }
            }
        }
        Self {
            setting,
            one_body: h,
            two_body: v,
        }
    }

    /// Open Hubbard chain of `sites` sites, spin orbital `2 site + spin`, with hopping `t`,
    /// on-site repulsion `u` and random on-site potentials of size `field`.
    pub fn hubbard_chain(sites: usize, particles: usize, t: f64, u: f64, field: f64, seed: u64) -> Result<Self> {
        let setting = FockSetting::new(particles, 2 * sites)?;
        let d = 2 * sites;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = CMatrix::<T>::zeros(d, d);
        for s in 0..sites {
            for spin in 0..2 {
                let eps: f64 = StandardNormal.sample(&mut rng);
                h[(2 * s + spin, 2 * s + spin)] = cr(T::lit(field * eps));
                if s + 1 < sites {
                    let (a, b) = (2 * s + spin, 2 * (s + 1) + spin);
                    h[(a, b)] = cr(T::lit(-t));
                    h[(b, a)] = cr(T::lit(-t));
                }
            }
        }
        let mut v = vec![czero(); d * d * d * d];
        let q = cr(T::lit(u / 4.0));
        for s in 0..sites {
            let (up, dn) = (2 * s, 2 * s + 1);
            // u n_up n_dn = u a†_up a†_dn a_dn a_up, spread over the antisymmetric images
            v[idx4(d, up, dn, up, dn)] += q;
            v[idx4(d, dn, up, up, dn)] -= q;
            v[idx4(d, up, dn, dn, up)] -= q;
            v[idx4(d, dn, up, dn, up)] += q;
        }
        Self::new(setting, h, v)
    }

    pub fn setting(&self) -> FockSetting {
        self.setting
    }

    pub fn one_body(&self) -> &CMatrix<T> {
        &self.one_body
    }

    pub fn two_body(&self, i: usize, j: usize, k: usize, l: usize) -> C<T> {
        self.two_body[idx4(self.setting.orbitals(), i, j, k, l)]
    }

    /// Largest antisymmetry and Hermiticity defects of `V`.
    fn two_body_defects(&self) -> (T, T) {
        let d = self.setting.orbitals();
        let (mut anti, mut herm) = (T::zero(), T::zero());
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let v = self.two_body(i, j, k, l);
                        let a = (v + self.two_body(j, i, k, l)).norm_sqr().max((v + self.two_body(i, j, l, k)).norm_sqr());
                        let h = (v - self.two_body(k, l, i, j).conj()).norm_sqr();
                        anti = anti.max(a);
                        herm = herm.max(h);
                    }
                }
            }
        }
        (anti.sqrt(), herm.sqrt())
    }

    /// Dense matrix on the `N`-particle sector in the order of `basis`.
    pub fn matrix(&self, basis: &Basis) -> Result<CMatrix<T>> {
        if basis.setting() != self.setting {
            return Err(Error::Precondition("basis and Hamiltonian settings differ".into()));
        }
        let d = self.setting.orbitals();
        let dim = basis.dim();
        let mut m = CMatrix::<T>::zeros(dim, dim);
        let sign = |s: i32| T::lit(s as f64);
        for (col, cfg) in basis.configs().iter().enumerate() {
            let bits = cfg.bits();
            for i in 0..d {
                for j in 0..d {
                    let hij = self.one_body[(i, j)];
                    if hij == czero() {
                        continue;
                    }
                    if let Some((b, s)) = excite(bits, i, j) {
                        let row = basis.index_of(b).expect("particle number conserved");
                        m[(row, col)] += hij * sign(s);
                    }
                }
            }
            for k in cfg.orbitals() {
                let (b1, s1) = annihilate(bits, k).expect("occupied");
                for l in crate::fock::OccupationConfig(b1).orbitals() {
                    let (b2, s2) = annihilate(b1, l).expect("occupied");
                    for j in 0..d {
                        let Some((b3, s3)) = create(b2, j) else { continue };
                        for i in 0..d {
                            let v = self.two_body(i, j, k, l);
                            if v == czero() {
                                continue;
                            }
                            let Some((b4, s4)) = create(b3, i) else { continue };
                            let row = basis.index_of(b4).expect("particle number conserved");
                            m[(row, col)] += v * sign(s1 * s2 * s3 * s4);
                        }
                    }
                }
            }
        }
        let defect = hermitian_defect(&m);
        if defect > T::tol(1e-9) {
            return Err(Error::NotHermitian(defect.to_f64_lossy()));
        }
        Ok(m)
    }

    /// Energy of the Slater determinant on the first `N` columns of `orbitals`, by Wick's
    /// theorem, with the generator `[rho, F]` of steepest descent.
    pub fn hartree_fock_energy(&self, orbitals: &CMatrix<T>) -> (T, CMatrix<T>) {
        let d = self.setting.orbitals();
        let n = self.setting.particles();
        let occ = orbitals.columns(0, n);
        let rho: CMatrix<T> = occ * occ.adjoint();
        let mut e = C::new(T::zero(), T::zero());
        let mut fock = self.one_body.clone();
        for i in 0..d {
            for j in 0..d {
                e += self.one_body[(i, j)] * rho[(j, i)];
            }
        }
        let two = cr(T::lit(2.0));
        let four = cr(T::lit(4.0));
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let v = self.two_body(i, j, k, l);
                        if v == czero() {
                            continue;
                        }
                        e += two * v * rho[(k, i)] * rho[(l, j)];
                        // F_ba = h_ba + 4 sum_jl V_bjal rho_lj with b = i, a = k
                        fock[(i, k)] += four * v * rho[(l, j)];
                    }
                }
            }
        }
        let gen = &rho * &fock - &fock * &rho;
        (e.re, gen)
    }
}

/// Full spectrum of a Hamiltonian on its `N`-particle sector.
#[derive(Clone, Debug)]
pub struct SpectralData<T: Real> {
    pub basis: Arc<Basis>,
    /// Ascending.
    pub energies: Vec<T>,
    /// Column `k` belongs to `energies[k]`.
    pub eigenvectors: CMatrix<T>,
    pub e0: T,
    /// First level above the ground level.
    pub e_ex_minus: T,
    /// Highest level.
    pub e_ex_plus: T,
    pub ground_state: StateVector<T>,
    pub gap_to_second: T,
    /// Number of levels within `DEGENERACY_TOL` of `e0`.
    pub ground_multiplicity: usize,
    pub degenerate: bool,
}

impl<T: Real> SpectralData<T> {
    /// `||pi_E0 psi||^2` with `pi_E0` the projector on the ground level.
    pub fn ground_weight(&self, amps: &CVector<T>) -> T {
        (0..self.ground_multiplicity).fold(T::zero(), |acc, k| acc + self.eigenvectors.column(k).dotc(amps).norm_sqr())
    }
}

pub fn exact_diagonalize<T: Real>(ham: &Hamiltonian<T>) -> Result<SpectralData<T>> {
    let basis = Basis::new(ham.setting());
    let m = ham.matrix(&basis)?;
    spectral_data(basis, &m)
}

fn spectral_data<T: Real>(basis: Arc<Basis>, m: &CMatrix<T>) -> Result<SpectralData<T>> {
    let (energies, vecs) = hermitian_eigh(m);
    let e0 = energies[0];
    let tol = T::lit(DEGENERACY_TOL);
    let mult = energies.iter().take_while(|&&e| e - e0 < tol).count();
    let e_ex_plus = *energies.last().expect("non-empty");
    let e_ex_minus = energies.get(mult).copied().unwrap_or(e_ex_plus);
    let gap = if energies.len() > 1 { energies[1] - e0 } else { T::lit(f64::INFINITY) };
    let ground_state = StateVector::new(basis.clone(), vecs.column(0).into_owned())?;
    Ok(SpectralData {
        basis,
        e0,
        e_ex_minus,
        e_ex_plus,
        ground_state,
        gap_to_second: gap,
        ground_multiplicity: mult,
        degenerate: mult > 1,
        energies,
        eigenvectors: vecs,
    })
}

/// A Hamiltonian with its dense sector matrix and spectrum, shared by the optimizers.
#[derive(Clone, Debug)]
pub struct VariationalProblem<T: Real> {
    pub hamiltonian: Hamiltonian<T>,
    pub matrix: CMatrix<T>,
    pub spectrum: SpectralData<T>,
}

impl<T: Real> VariationalProblem<T> {
    pub fn new(hamiltonian: Hamiltonian<T>) -> Result<Self> {
        let basis = Basis::new(hamiltonian.setting());
        let matrix = hamiltonian.matrix(&basis)?;
        let spectrum = spectral_data(basis, &matrix)?;
        Ok(Self {
            hamiltonian,
            matrix,
            spectrum,
        })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.spectrum.basis
    }

    pub fn energy_of(&self, amps: &CVector<T>) -> T {
        amps.dotc(&(&self.matrix * amps)).re
    }

    fn require_unique_ground(&self) -> Result<()> {
        if self.spectrum.degenerate {
            Err(Error::DegenerateGround(self.spectrum.gap_to_second.to_f64_lossy()))
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DescentOptions {
    pub max_iter: usize,
    /// Stop once the Frobenius norm of the descent generator is below this.
    pub grad_tol: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iter: 4000,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizerOptions<T: Real> {
    /// Random starting bases, in addition to `warm_starts`.
    pub restarts: usize,
    pub seed: u64,
    pub warm_starts: Vec<OrbitalRotation<T>>,
    pub descent: DescentOptions,
}

impl<T: Real> Default for OptimizerOptions<T> {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            warm_starts: Vec::new(),
            descent: DescentOptions::default(),
        }
    }
}

impl<T: Real> OptimizerOptions<T> {
    fn starts(&self, d: usize) -> Vec<CMatrix<T>> {
        self.warm_starts
            .iter()
            .map(|u| u.matrix().clone())
            .chain((0..self.restarts).map(|r| OrbitalRotation::<T>::random(d, self.seed.wrapping_add(r as u64)).matrix().clone()))
            .collect()
    }
}

#[derive(Clone, Debug)]
struct DescentOutcome<T: Real> {
    energy: T,
    rotation: CMatrix<T>,
    converged: bool,
}

fn inner<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (x, y)| acc + (x.conj() * y).re)
}

/// Steepest descent on the unitary group: `U <- exp(s Y) U`, where `objective` returns the
/// energy and a generator `Y` with `dE/ds = -||Y||^2`. The trial step is a
/// Barzilai-Borwein estimate, reduced by halving until the Armijo condition holds.
fn descend<T: Real, F>(start: CMatrix<T>, objective: F, opts: &DescentOptions) -> Result<DescentOutcome<T>>
where
    F: Fn(&CMatrix<T>) -> Result<(T, CMatrix<T>)>,
{
    let mut u = start;
    let (mut e, mut y) = objective(&u)?;
    let mut step = T::lit(0.1);
    let mut prev: Option<(CMatrix<T>, CMatrix<T>)> = None;
    let armijo = T::lit(1e-4);
    for _ in 0..opts.max_iter {
        let g2 = y.norm_squared();
        if g2.sqrt() < T::lit(opts.grad_tol) {
            return Ok(DescentOutcome { energy: e, rotation: u, converged: true });
        }
        if let Some((dx, y_old)) = &prev {
            let dg = &y_old.clone() - &y;
            let num = dx.norm_squared();
            let den = inner(dx, &dg);
            if den > T::zero() {
                step = (num / den).max(T::lit(1e-6)).min(T::lit(100.0));
            }
        }
        let mut s = step;
        let accepted = loop {
            let trial = expm_antihermitian(&y.map(|z| z * cr(s))) * &u;
            let (e_new, y_new) = objective(&trial)?;
            if e_new <= e - armijo * s * g2 {
                break Some((trial, e_new, y_new));
            }
            s *= T::lit(0.5);
            if s < T::lit(1e-14) {
                break None;
            }
        };
        let Some((trial, e_new, y_new)) = accepted else {
            // no decrease resolvable at working precision
            return Ok(DescentOutcome { energy: e, rotation: u, converged: true });
        };
        prev = Some((y.map(|z| z * cr(s)), y.clone()));
        u = trial;
        e = e_new;
        y = y_new;
    }
    let converged = y.norm() < T::lit(opts.grad_tol);
    Ok(DescentOutcome { energy: e, rotation: u, converged })
}

/// Runs `descend` from every start in parallel and keeps the lowest energy (first on ties).
fn best_of<T: Real, F>(starts: Vec<CMatrix<T>>, objective: F, opts: &DescentOptions) -> Result<(DescentOutcome<T>, usize, usize)>
where
    F: Fn(&CMatrix<T>) -> Result<(T, CMatrix<T>)> + Sync,
{
    if starts.is_empty() {
        return Err(Error::Precondition("optimizer needs at least one start".into()));
    }
    let runs: Vec<DescentOutcome<T>> = starts
        .into_par_iter()
        .map(|u| descend(u, &objective, opts))
        .collect::<Result<_>>()?;
    let converged = runs.iter().filter(|r| r.converged).count();
    let mut best = 0;
    for (k, r) in runs.iter().enumerate() {
        if r.energy < runs[best].energy {
            best = k;
        }
    }
    let count = runs.len();
    Ok((runs.into_iter().nth(best).expect("non-empty"), count, converged))
}

#[derive(Clone, Debug)]
pub struct HartreeFockResult<T: Real> {
    pub energy: T,
    /// First `N` columns span the occupied orbitals.
    pub orbitals: OrbitalRotation<T>,
    pub determinant: StateVector<T>,
    pub restarts_used: usize,
    pub converged_runs: usize,
}

/// Minimizes the determinant energy over orbital rotations.
pub fn hartree_fock<T: Real>(problem: &VariationalProblem<T>, opts: &OptimizerOptions<T>) -> Result<HartreeFockResult<T>> {
    let ham = &problem.hamiltonian;
    let d = ham.setting().orbitals();
    let (run, used, converged) = best_of(opts.starts(d), |u| Ok(ham.hartree_fock_energy(u)), &opts.descent)?;
    let orbitals = OrbitalRotation::new_unchecked(run.rotation);
    let reference = StateVector::determinant(
        problem.basis().clone(),
        crate::fock::OccupationConfig::from_orbitals(&(0..ham.setting().particles()).collect::<Vec<_>>()),
    )?;
    let determinant = crate::fock::apply_orbital_rotation(&reference, &orbitals)?;
    Ok(HartreeFockResult {
        energy: run.energy,
        orbitals,
        determinant,
        restarts_used: used,
        converged_runs: converged,
    })
}

/// Indices of basis configurations annihilated by every constraint.
fn zero_columns(basis: &Basis, constraints: &[LinearConstraint]) -> Result<Vec<usize>> {
    let d = basis.setting().orbitals();
    for c in constraints {
        if c.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: c.len() });
        }
    }
    Ok(basis
        .configs()
        .iter()
        .enumerate()
        .filter(|(_, cfg)| constraints.iter().all(|c| c.eigenvalue(cfg.bits()) == 0))
        .map(|(k, _)| k)
        .collect())
}

/// Lowest energy within the zero space spanned by `cols` of the lift of `u`, with the
/// minimizing state.
fn facet_minimum<T: Real>(problem: &VariationalProblem<T>, cols: &[usize], u: &CMatrix<T>) -> (T, CVector<T>) {
    let l = OrbitalRotation::new_unchecked(u.clone()).lift_columns(problem.basis(), cols);
    let projected = l.adjoint() * &problem.matrix * &l;
    let (vals, vecs) = hermitian_eigh(&projected);
    (vals[0], &l * vecs.column(0))
}

/// `Y = T(H psi, psi) - T(psi, H psi)`, the steepest-descent generator of `<psi|H|psi>`
/// under `psi <- lift(exp(s Y)) psi`.
fn energy_generator<T: Real>(problem: &VariationalProblem<T>, psi: &CVector<T>) -> CMatrix<T> {
    let hpsi = &problem.matrix * psi;
    transition_rdm(problem.basis(), &hpsi, psi) - transition_rdm(problem.basis(), psi, &hpsi)
}

#[derive(Clone, Debug)]
pub struct VariationalResult<T: Real> {
    pub energy: T,
    /// The optimal reference basis `B_1`.
    pub basis: OrbitalRotation<T>,
    pub state: StateVector<T>,
    pub zero_rank: usize,
    pub restarts_used: usize,
    pub converged_runs: usize,
}

/// Minimum of `<Phi|H|Phi>` over states in the joint zero space of the constraint
/// operators built in some reference basis, minimized over reference bases.
pub fn facet_variational<T: Real>(
    problem: &VariationalProblem<T>,
    constraints: &[LinearConstraint],
    opts: &OptimizerOptions<T>,
) -> Result<VariationalResult<T>> {
    problem.require_unique_ground()?;
    let cols = zero_columns(problem.basis(), constraints)?;
    if cols.is_empty() {
        return Err(Error::Precondition("the facet has an empty zero space".into()));
    }
    let d = problem.hamiltonian.setting().orbitals();
    let objective = |u: &CMatrix<T>| {
        let (e, psi) = facet_minimum(problem, &cols, u);
        Ok((e, energy_generator(problem, &psi)))
    };
    let (run, used, converged) = best_of(opts.starts(d), objective, &opts.descent)?;
    let (energy, psi) = facet_minimum(problem, &cols, &run.rotation);
    Ok(VariationalResult {
        energy,
        basis: OrbitalRotation::new_unchecked(run.rotation),
        state: StateVector::new(problem.basis().clone(), psi)?,
        zero_rank: cols.len(),
        restarts_used: used,
        converged_runs: converged,
    })
}

/// Energy of the facet ansatz in a fixed reference basis.
pub fn facet_energy_in<T: Real>(
    problem: &VariationalProblem<T>,
    constraints: &[LinearConstraint],
    basis: &OrbitalRotation<T>,
) -> Result<T> {
    let cols = zero_columns(problem.basis(), constraints)?;
    if cols.is_empty() {
        return Err(Error::Precondition("the facet has an empty zero space".into()));
    }
    Ok(facet_minimum(problem, &cols, basis.matrix()).0)
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "E_hf")]
    pub e_hf: f64,
    #[serde(rename = "E_D")]
    pub e_d: f64,
    #[serde(rename = "D_lambda0")]
    pub d_lambda0: f64,
    #[serde(rename = "S_lambda0")]
    pub s_lambda0: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "K")]
    pub k: f64,
    /// `C D(lambda_0) - Delta E_D`.
    #[serde(rename = "slack_eq15")]
    pub slack_linear: f64,
    /// `K D/S - Delta E_D / E_corr`, absent when `S(lambda_0)` or `E_corr` vanishes.
    #[serde(rename = "slack_eq16")]
    pub slack_ratio: Option<f64>,
    pub restarts_used: usize,
    pub linear_bound_holds: bool,
    pub ratio_bound_holds: Option<bool>,
}

impl EnergyReport {
    pub fn holds(&self) -> bool {
        self.linear_bound_holds && self.ratio_bound_holds.unwrap_or(true)
    }
}

/// Settings for `check_energy_estimates`.
#[derive(Clone, Debug)]
pub struct EstimateOptions<T: Real> {
    pub optimizer: OptimizerOptions<T>,
    pub flow: FlowParams,
    pub slack: f64,
    /// Ratio bound is evaluated only when `S(lambda_0)` exceeds this.
    pub min_s: f64,
}

impl<T: Real> Default for EstimateOptions<T> {
    fn default() -> Self {
        Self {
            optimizer: OptimizerOptions::default(),
            flow: FlowParams::default(),
            slack: 1e-7,
            min_s: 1e-6,
        }
    }
}

/// Natural orbitals of the state reached by flowing `state` under `constraint`; falls
/// back to the state's own natural orbitals if the flow cannot start.
fn flowed_orbitals<T: Real>(
    state: &StateVector<T>,
    constraint: &LinearConstraint,
    params: &FlowParams,
) -> Result<OrbitalRotation<T>> {
    let system = FermionSystem::new(state.basis().clone(), constraint.clone())?;
    let trace = integrate(&system, state.amplitudes(), params)?;
    let end = StateVector::new(state.basis().clone(), trace.terminal)?;
    Ok(state_spectrum(&end, params.gap_tol)?.orbitals)
}

/// Checks `Delta E_D <= C D(lambda_0)` and `Delta E_D / E_corr <= K D(lambda_0) / S(lambda_0)`
/// for the facet of `constraint`, using the exact ground state's spectrum.
pub fn check_energy_estimates<T: Real>(
    problem: &VariationalProblem<T>,
    constraint: &LinearConstraint,
    opts: &EstimateOptions<T>,
) -> Result<EnergyReport> {
    problem.require_unique_ground()?;
    let sp = &problem.spectrum;
    let n = problem.hamiltonian.setting().particles();
    let ground = &sp.ground_state;
    let spectrum0 = state_spectrum(ground, opts.flow.gap_tol)?;
    let d0 = constraint.evaluate(&spectrum0.lambdas)?.to_f64_lossy();
    let s0 = hf_distance(&spectrum0.lambdas, n)?.to_f64_lossy();

    let hf = hartree_fock(problem, &opts.optimizer)?;
    let mut facet_opts = opts.optimizer.clone();
    let mut warm = vec![hf.orbitals.clone(), spectrum0.orbitals.clone()];
    if !spectrum0.degenerate {
        warm.push(flowed_orbitals(ground, constraint, &opts.flow)?);
    }
    warm.append(&mut facet_opts.warm_starts);
    facet_opts.warm_starts = warm;
    let facet = facet_variational(problem, std::slice::from_ref(constraint), &facet_opts)?;

    let e0 = sp.e0.to_f64_lossy();
    let e_plus = sp.e_ex_plus.to_f64_lossy();
    let e_minus = sp.e_ex_minus.to_f64_lossy();
    let e_hf = hf.energy.to_f64_lossy();
    let e_d = facet.energy.to_f64_lossy();
    let c = 2.0 * (e_plus - e0);
    let k = 2.0 * n as f64 * (e_plus - e0) / (e_minus - e0);
    let delta = e_d - e0;
    let slack_linear = c * d0 - delta;
    let e_corr = e_hf - e0;
    let slack_ratio = (s0 > opts.min_s && e_corr > 1e-10).then(|| k * d0 / s0 - delta / e_corr);
    Ok(EnergyReport {
        e0,
        e_hf,
        e_d,
        d_lambda0: d0,
        s_lambda0: s0,
        c,
        k,
        slack_linear,
        slack_ratio,
        restarts_used: hf.restarts_used + facet.restarts_used,
        linear_bound_holds: slack_linear >= -opts.slack,
        ratio_bound_holds: slack_ratio.map(|s| s >= -opts.slack),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SandwichReport {
    /// `(E~ - E0) / (E+ - E0)`.
    pub lower: f64,
    /// `1 - ||pi_E0 psi||^2`.
    pub weight_outside: f64,
    /// `(E~ - E0) / (E- - E0)`.
    pub upper: f64,
    pub holds: bool,
}

/// `(E~ - E0)/(E+ - E0) <= 1 - ||pi_E0 psi||^2 <= (E~ - E0)/(E- - E0)`.
pub fn check_energy_sandwich<T: Real>(problem: &VariationalProblem<T>, state: &StateVector<T>, slack: f64) -> Result<SandwichReport> {
    state.ensure_normalized(1e-8)?;
    let sp = &problem.spectrum;
    let e = problem.energy_of(state.amplitudes()).to_f64_lossy() - sp.e0.to_f64_lossy();
    let w = 1.0 - sp.ground_weight(state.amplitudes()).to_f64_lossy();
    let plus = (sp.e_ex_plus - sp.e0).to_f64_lossy();
    let minus = (sp.e_ex_minus - sp.e0).to_f64_lossy();
    if plus <= 0.0 {
        // a single level: every state is a ground state
        return Ok(SandwichReport { lower: 0.0, weight_outside: w, upper: 0.0, holds: w.abs() <= slack });
    }
    let lower = e / plus;
    let upper = e / minus;
    Ok(SandwichReport {
        lower,
        weight_outside: w,
        upper,
        holds: lower <= w + slack && w <= upper + slack,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HfLemmaReport {
    pub s_lambda: f64,
    /// `S` of the diagonal occupations in the reference basis.
    pub s_reference: f64,
    /// `S(lambda) / N`.
    pub lhs: f64,
    /// `1 - |<1',...,N'|psi>|^2`.
    pub rhs: f64,
    pub lemma_holds: bool,
    pub majorization_holds: bool,
}

/// `S(lambda)/N <= 1 - |<1',...,N'|psi>|^2` for the determinant on the first `N` columns of
/// `reference`, and `S(lambda) <= S(lambda')`.
pub fn check_hf_lemma<T: Real>(state: &StateVector<T>, reference: &OrbitalRotation<T>, slack: f64) -> Result<HfLemmaReport> {
    let n = state.setting().particles();
    let rdm = one_rdm(state)?;
    let sp = state_spectrum(state, 0.0)?;
    let s = hf_distance(&sp.lambdas, n)?.to_f64_lossy();
    let diag = rdm.occupations_in(reference);
    let s_ref = hf_distance_unordered(&diag, n).to_f64_lossy();
    let in_ref = express_in_basis(state, reference)?;
    let head = crate::fock::OccupationConfig::from_orbitals(&(0..n).collect::<Vec<_>>());
    let overlap = in_ref.amplitude(head).norm_sqr().to_f64_lossy();
    let lhs = s / n as f64;
    let rhs = 1.0 - overlap;
    Ok(HfLemmaReport {
        s_lambda: s,
        s_reference: s_ref,
        lhs,
        rhs,
        lemma_holds: lhs <= rhs + slack,
        majorization_holds: s <= s_ref + slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{borland_dennis_d, collective_pauli, LinearConstraint};
    use crate::fock::OccupationConfig;

    fn diag_h(eps: &[f64]) -> CMatrix<f64> {
        CMatrix::from_fn(eps.len(), eps.len(), |i, j| if i == j { cr(eps[i]) } else { czero() })
    }

    #[test]
    fn random_hamiltonian_is_valid() {
        let st = FockSetting::new(3, 6).unwrap();
        let h = Hamiltonian::<f64>::random(st, 0.5, 3);
        let (anti, herm) = h.two_body_defects();
        assert!(anti < 1e-14 && herm < 1e-14);
        let m = h.matrix(&Basis::new(st)).unwrap();
        assert!(hermitian_defect(&m) < 1e-12);
        let again = Hamiltonian::<f64>::random(st, 0.5, 3);
        assert_eq!(h.one_body, again.one_body);
    }

    #[test]
    fn rejects_non_antisymmetric_tensor() {
        let st = FockSetting::new(2, 3).unwrap();
        let mut v = vec![czero::<f64>(); 81];
        v[idx4(3, 0, 1, 0, 1)] = cr(1.0);
        assert!(Hamiltonian::new(st, CMatrix::zeros(3, 3), v).is_err());
    }

    #[test]
    fn free_fermions() {
        let st = FockSetting::new(2, 4).unwrap();
        let h = Hamiltonian::one_body_only(st, diag_h(&[0.3, -1.0, 2.0, -0.5])).unwrap();
        let sp = exact_diagonalize(&h).unwrap();
        assert!((sp.e0 - (-1.5)).abs() < 1e-12);
        let gs = sp.ground_state.amplitude(OccupationConfig::from_orbitals(&[1, 3]));
        assert!((gs.norm() - 1.0).abs() < 1e-12);
        assert!(!sp.degenerate);
    }

    #[test]
    fn identity_is_degenerate() {
        // sum_i n_i / N is the identity on the sector
        let st = FockSetting::new(2, 4).unwrap();
        let h = Hamiltonian::one_body_only(st, diag_h(&[0.5; 4])).unwrap();
        let sp = exact_diagonalize(&h).unwrap();
        for e in &sp.energies {
            assert!((e - 1.0).abs() < 1e-12);
        }
        assert!(sp.degenerate);
        let p = VariationalProblem::new(h).unwrap();
        assert!(matches!(
            facet_variational(&p, &[LinearConstraint::trivial(4)], &OptimizerOptions::default()),
            Err(Error::DegenerateGround(_))
        ));
    }

    #[test]
    fn hubbard_dimer_energy() {
        // two sites, two electrons: E0 = (U - sqrt(U^2 + 16 t^2)) / 2
        let h = Hamiltonian::<f64>::hubbard_chain(2, 2, 1.0, 4.0, 0.0, 0).unwrap();
        let sp = exact_diagonalize(&h).unwrap();
        let want = (4.0 - (16.0f64 + 16.0).sqrt()) / 2.0;
        assert!((sp.e0 - want).abs() < 1e-10, "{} vs {want}", sp.e0);
    }

    #[test]
    fn wick_energy_matches_dense_expectation() {
        let st = FockSetting::new(3, 6).unwrap();
        let p = VariationalProblem::new(Hamiltonian::<f64>::random(st, 1.0, 9)).unwrap();
        for seed in 0..5 {
            let u = OrbitalRotation::<f64>::random(6, seed);
            let det = crate::fock::apply_orbital_rotation(
                &StateVector::determinant(p.basis().clone(), OccupationConfig::from_orbitals(&[0, 1, 2])).unwrap(),
                &u,
            )
            .unwrap();
            let (e, y) = p.hamiltonian.hartree_fock_energy(u.matrix());
            assert!((e - p.energy_of(det.amplitudes())).abs() < 1e-10);
            // the Wick generator equals the dense commutator generator
            let y2 = energy_generator(&p, det.amplitudes());
            let gap = (&y - &y2).norm();
            assert!(gap < 1e-9, "{gap}");
        }
    }

    #[test]
    fn generator_is_descent_direction() {
        let st = FockSetting::new(3, 6).unwrap();
        let p = VariationalProblem::new(Hamiltonian::<f64>::random(st, 0.5, 2)).unwrap();
        let bd = [borland_dennis_d()];
        let cols = zero_columns(p.basis(), &bd).unwrap();
        let u = OrbitalRotation::<f64>::random(6, 4);
        let (e, psi) = facet_minimum(&p, &cols, u.matrix());
        let y = energy_generator(&p, &psi);
        let h = 1e-5;
        let plus = facet_minimum(&p, &cols, &(expm_antihermitian(&y.map(|z| z * h)) * u.matrix())).0;
        let minus = facet_minimum(&p, &cols, &(expm_antihermitian(&y.map(|z| z * -h)) * u.matrix())).0;
        let fd = (plus - minus) / (2.0 * h);
        assert!((fd + y.norm_squared()).abs() < 1e-6 * (1.0 + y.norm_squared()), "{fd} {}", y.norm_squared());
        assert!(e.is_finite());
    }

    #[test]
    fn hartree_fock_is_exact_without_interaction() {
        let st = FockSetting::new(3, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = CMatrix::from_fn(6, 6, |_, _| complex_gaussian::<f64>(&mut rng));
        let h = (&a + a.adjoint()).map(|z| z * 0.5);
        let p = VariationalProblem::new(Hamiltonian::one_body_only(st, h).unwrap()).unwrap();
        let hf = hartree_fock(&p, &OptimizerOptions { restarts: 3, ..Default::default() }).unwrap();
        assert!((hf.energy - p.spectrum.e0).abs() < 1e-9, "{} vs {}", hf.energy, p.spectrum.e0);
        assert!((p.energy_of(hf.determinant.amplitudes()) - hf.energy).abs() < 1e-10);
    }

    #[test]
    fn projected_minimum_matches_explicit_submatrix() {
        let st = FockSetting::new(3, 6).unwrap();
        let p = VariationalProblem::new(Hamiltonian::<f64>::random(st, 0.5, 5)).unwrap();
        let bd = [borland_dennis_d()];
        let u = OrbitalRotation::<f64>::random(6, 8);
        let cols = zero_columns(p.basis(), &bd).unwrap();
        assert_eq!(cols.len(), 9);
        let (e, _) = facet_minimum(&p, &cols, u.matrix());
        // rotate H into the reference basis, keep the zero rows and columns
        let lift = u.lift(p.basis());
        let hr = lift.adjoint() * &p.matrix * &lift;
        let sub = CMatrix::from_fn(cols.len(), cols.len(), |a, b| hr[(cols[a], cols[b])]);
        let (vals, _) = hermitian_eigh(&sub);
        assert!((vals[0] - e).abs() < 1e-10);
    }

    #[test]
    fn trivial_facet_recovers_ground_energy() {
        let st = FockSetting::new(2, 4).unwrap();
        let p = VariationalProblem::new(Hamiltonian::<f64>::random(st, 1.0, 4)).unwrap();
        let r = facet_variational(&p, &[LinearConstraint::trivial(4)], &OptimizerOptions { restarts: 1, ..Default::default() }).unwrap();
        assert_eq!(r.zero_rank, 6);
        assert!((r.energy - p.spectrum.e0).abs() < 1e-10);
    }

    #[test]
    fn hartree_fock_facet_matches_hartree_fock() {
        let st = FockSetting::new(3, 6).unwrap();
        let p = VariationalProblem::new(Hamiltonian::<f64>::random(st, 0.5, 6)).unwrap();
        let opts = OptimizerOptions { restarts: 4, seed: 10, ..Default::default() };
        let hf = hartree_fock(&p, &opts).unwrap();
        let s = collective_pauli(3, 3, 3, 6).unwrap();
        let facet = facet_variational(&p, &[s], &opts).unwrap();
        assert_eq!(facet.zero_rank, 1);
        assert!((hf.energy - facet.energy).abs() < 1e-6, "{} vs {}", hf.energy, facet.energy);
        assert!(hf.energy >= p.spectrum.e0 - 1e-9);
    }

    #[test]
    fn energy_estimates_hold_on_weak_coupling() {
        let st = FockSetting::new(3, 6).unwrap();
        let p = VariationalProblem::new(Hamiltonian::<f64>::random(st, 0.1, 12)).unwrap();
        let opts = EstimateOptions {
            optimizer: OptimizerOptions { restarts: 2, ..Default::default() },
            ..Default::default()
        };
        let r = check_energy_estimates(&p, &borland_dennis_d(), &opts).unwrap();
        assert!(r.holds(), "{r:?}");
        assert!(r.e_d >= r.e0 - 1e-9 && r.e_d <= r.e_hf + 1e-9);
        let json = serde_json::to_value(&r).unwrap();
        for key in ["E0", "E_hf", "E_D", "D_lambda0", "S_lambda0", "C", "K", "slack_eq15", "slack_eq16", "restarts_used"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn sandwich_examples() {
        let st = FockSetting::new(2, 4).unwrap();
        let p = VariationalProblem::new(Hamiltonian::<f64>::random(st, 1.0, 7)).unwrap();
        let g = check_energy_sandwich(&p, &p.spectrum.ground_state, 1e-9).unwrap();
        assert!(g.holds && g.lower.abs() < 1e-9 && g.weight_outside.abs() < 1e-9 && g.upper.abs() < 1e-9);
        let last = p.spectrum.eigenvectors.ncols() - 1;
        let top = StateVector::new(p.basis().clone(), p.spectrum.eigenvectors.column(last).into_owned()).unwrap();
        let t = check_energy_sandwich(&p, &top, 1e-9).unwrap();
        assert!(t.holds && (t.lower - 1.0).abs() < 1e-9 && (t.weight_outside - 1.0).abs() < 1e-9);
        for seed in 0..20 {
            let s = StateVector::<f64>::random(st, seed);
            assert!(check_energy_sandwich(&p, &s, 1e-9).unwrap().holds);
        }
    }

    #[test]
    fn hf_lemma_examples() {
        let st = FockSetting::new(3, 6).unwrap();
        let basis = Basis::new(st);
        let det = StateVector::<f64>::determinant(basis, OccupationConfig::from_orbitals(&[0, 1, 2])).unwrap();
        let r = check_hf_lemma(&det, &OrbitalRotation::identity(6), 1e-9).unwrap();
        assert!(r.lemma_holds && r.lhs.abs() < 1e-12 && r.rhs.abs() < 1e-12);
        for seed in 0..20 {
            let s = StateVector::<f64>::random(st, seed);
            let r = check_hf_lemma(&s, &OrbitalRotation::random(6, seed + 100), 1e-9).unwrap();
            assert!(r.lemma_holds && r.majorization_holds, "{r:?}");
            let nat = state_spectrum(&s, 0.0).unwrap().orbitals;
            let r = check_hf_lemma(&s, &nat, 1e-9).unwrap();
            assert!((r.s_lambda - r.s_reference).abs() < 1e-10);
        }
    }
}
