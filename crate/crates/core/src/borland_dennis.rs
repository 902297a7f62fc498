//! Constructive analysis of three fermions in six orbitals.
//!
//! In its natural orbitals every state of the (3,6) setting lives on eight
//! configurations,
//! `a|123> + b|124> + g|135> + d|236> + n|145> + m|246> + x|356> + z|456>`,
//! and the three off-diagonal entries of the 1-RDM vanish. This module reads those
//! amplitudes, checks the two weight theorems, and performs the rotation in the
//! `{3, 4}` plane that brings a quasipinned state close to the pinned three-term form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constraints::borland_dennis_d;
use crate::error::{Error, Result};
use crate::fock::{express_in_basis, Basis, FockSetting, OccupationConfig, OrbitalRotation, StateVector};
use crate::marginal::state_spectrum;
use crate::scalar::{cr, czero, CMatrix, ComplexField, Real, C};

/// Zero-based orbitals of the eight configurations, in the order
/// alpha, beta, gamma, delta, nu, mu, xi, zeta.
pub const EIGHT_CONFIGS: [[usize; 3]; 8] = [
    [0, 1, 2],
    [0, 1, 3],
    [0, 2, 4],
    [1, 2, 5],
    [0, 3, 4],
    [1, 3, 5],
    [2, 4, 5],
    [3, 4, 5],
];

/// Residual weight tolerated outside the eight configurations.
pub const RESIDUAL_TOL: f64 = 1e-7;
/// Tolerance of the equality and off-diagonal identities.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Slack of the inequality checks.
pub const BOUND_SLACK: f64 = 1e-9;

pub fn setting() -> FockSetting {
    FockSetting::new(3, 6).expect("3 <= 6")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients<T: Real> {
    pub alpha: C<T>,
    pub beta: C<T>,
    pub gamma: C<T>,
    pub delta: C<T>,
    pub nu: C<T>,
    pub mu: C<T>,
    pub xi: C<T>,
    pub zeta: C<T>,
}

impl<T: Real> Coefficients<T> {
    pub fn from_array(c: [C<T>; 8]) -> Self {
        let [alpha, beta, gamma, delta, nu, mu, xi, zeta] = c;
        Self { alpha, beta, gamma, delta, nu, mu, xi, zeta }
    }

    pub fn to_array(&self) -> [C<T>; 8] {
        [self.alpha, self.beta, self.gamma, self.delta, self.nu, self.mu, self.xi, self.zeta]
    }

    /// Squared moduli in array order.
    pub fn weights(&self) -> [T; 8] {
        self.to_array().map(|z| z.norm_sqr())
    }

    pub fn total_weight(&self) -> T {
        self.weights().iter().fold(T::zero(), |a, &w| a + w)
    }

    /// Reads the eight amplitudes off a coefficient vector over the (3,6) basis.
    pub fn read(basis: &Basis, amps: &crate::scalar::CVector<T>) -> Self {
        Self::from_array(EIGHT_CONFIGS.map(|o| {
            let k = basis.index_of(OccupationConfig::from_orbitals(&o).bits()).expect("(3,6) basis");
            amps[k]
        }))
    }

    /// `<1|rho|6>`, `-<2|rho|5>` and `<3|rho|4>` written in the amplitudes.
    pub fn off_diagonals(&self) -> [C<T>; 3] {
        let Self { alpha, beta, gamma, delta, nu, mu, xi, zeta } = *self;
        [
            alpha * delta.conj() + beta * mu.conj() + nu * zeta.conj() + gamma * xi.conj(),
            alpha * gamma.conj() + beta * nu.conj() + delta * xi.conj() + mu * zeta.conj(),
            alpha * beta.conj() + gamma * nu.conj() + delta * mu.conj() + xi * zeta.conj(),
        ]
    }

    /// `lambda_4, lambda_5, lambda_6` from the amplitudes.
    pub fn lower_occupations(&self) -> [T; 3] {
        let [_, b, _, d, n, m, x, z] = self.weights();
        let g = self.gamma.norm_sqr();
        [b + m + n + z, g + n + x + z, d + m + x + z]
    }
}

/// Natural-orbital expansion of a (3,6) state.
#[derive(Clone, Debug)]
pub struct BdExpansion<T: Real> {
    pub coefficients: Coefficients<T>,
    pub natural_orbitals: OrbitalRotation<T>,
    pub lambdas: Vec<T>,
    /// Weight on the twelve configurations outside the expansion.
    pub residual_weight: T,
    pub d_value: T,
}

impl<T: Real> BdExpansion<T> {
    /// Largest modulus among the three off-diagonal identities.
    pub fn off_diagonal_defect(&self) -> f64 {
        self.coefficients
            .off_diagonals()
            .iter()
            .map(|z| z.modulus().to_f64_lossy())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of `lambda_1 + lambda_6`, `lambda_2 + lambda_5`, `lambda_3 + lambda_4` from 1.
    pub fn equality_defect(&self) -> f64 {
        let l = &self.lambdas;
        (0..3)
            .map(|i| (l[i] + l[5 - i] - T::one()).abs().to_f64_lossy())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of `lambda_4..6` from their amplitude expressions.
    pub fn occupation_defect(&self) -> f64 {
        let lo = self.coefficients.lower_occupations();
        (0..3)
            .map(|i| (self.lambdas[3 + i] - lo[i]).abs().to_f64_lossy())
            .fold(0.0, f64::max)
    }
}

/// Expands `state` in its natural orbitals.
pub fn expand<T: Real>(state: &StateVector<T>, gap_tol: f64) -> Result<BdExpansion<T>> {
    if state.setting() != setting() {
        return Err(Error::Precondition(format!(
            "expansion needs the (3,6) setting, got ({},{})",
            state.setting().particles(),
            state.setting().orbitals()
        )));
    }
    let spectrum = state_spectrum(state, gap_tol)?;
    if spectrum.degenerate {
        return Err(Error::Degenerate {
            gap: spectrum.gap.to_f64_lossy(),
            tol: gap_tol,
        });
    }
    let nat = express_in_basis(state, &spectrum.orbitals)?;
    let coefficients = Coefficients::read(nat.basis(), nat.amplitudes());
    let total = nat.amplitudes().norm_squared();
    let residual = total - coefficients.total_weight();
    let residual = if residual < T::zero() { T::zero() } else { residual };
    if residual.to_f64_lossy() > RESIDUAL_TOL {
        return Err(Error::ResidualWeight(residual.to_f64_lossy()));
    }
    let d_value = borland_dennis_d().evaluate(&spectrum.lambdas)?;
    let exp = BdExpansion {
        coefficients,
        natural_orbitals: spectrum.orbitals,
        lambdas: spectrum.lambdas,
        residual_weight: residual,
        d_value,
    };
    let eq = exp.equality_defect();
    if eq > IDENTITY_TOL {
        return Err(Error::Precondition(format!("equality constraints violated by {eq:e}")));
    }
    Ok(exp)
}

/// `lhs <= rhs + slack`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundCheck {
    pub fn new(lhs: f64, rhs: f64, slack: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs <= rhs + slack,
        }
    }

    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// `|xi|^2 + |zeta|^2 <= D(lambda)`.
pub fn check_theorem_xizeta<T: Real>(exp: &BdExpansion<T>) -> BoundCheck {
    let c = &exp.coefficients;
    let lhs = (c.xi.norm_sqr() + c.zeta.norm_sqr()).to_f64_lossy();
    BoundCheck::new(lhs, exp.d_value.to_f64_lossy(), BOUND_SLACK)
}

/// `|beta|^2 + |gamma|^2 + |delta|^2 <= D / (lambda_3 - lambda_4) + 3 D`; refuses
/// when `lambda_3 - lambda_4 < gap_tol`.
pub fn check_theorem_unstable<T: Real>(exp: &BdExpansion<T>, gap_tol: f64) -> Result<BoundCheck> {
    let gap = (exp.lambdas[2] - exp.lambdas[3]).to_f64_lossy();
    if gap < gap_tol {
        return Err(Error::Degenerate { gap, tol: gap_tol });
    }
    let c = &exp.coefficients;
    let lhs = (c.beta.norm_sqr() + c.gamma.norm_sqr() + c.delta.norm_sqr()).to_f64_lossy();
    let d = exp.d_value.to_f64_lossy();
    Ok(BoundCheck::new(lhs, d / gap + 3.0 * d, BOUND_SLACK))
}

/// Weight bookkeeping behind the lower bound on `|alpha|^2 + |beta|^2`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SwapChain {
    /// `D` against `-|b|^2 + |g|^2 + |d|^2 + 2|x|^2 + |z|^2`.
    pub d_defect: f64,
    /// `Q = 2 - (lambda_1 + lambda_2 + lambda_3)` against `-|a|^2 + |n|^2 + |m|^2 + |x|^2 + 2|z|^2`.
    pub q_defect: f64,
    /// `D + Q` against `1 - 2(|a|^2 + |b|^2) + 2(|x|^2 + |z|^2)`.
    pub sum_defect: f64,
    /// `Q <= D`.
    pub q_below_d: BoundCheck,
    /// `1/2 - D <= |a|^2 + |b|^2`, stated as `1/2 - D - (|a|^2 + |b|^2) <= 0`.
    pub alpha_beta: BoundCheck,
}

impl SwapChain {
    pub fn holds(&self) -> bool {
        self.d_defect <= IDENTITY_TOL
            && self.q_defect <= IDENTITY_TOL
            && self.sum_defect <= IDENTITY_TOL
            && self.q_below_d.holds
            && self.alpha_beta.holds
    }
}

pub fn check_swap_chain<T: Real>(exp: &BdExpansion<T>) -> SwapChain {
    let [a, b, g, d, n, m, x, z] = exp.coefficients.weights().map(|w| w.to_f64_lossy());
    let l: Vec<f64> = exp.lambdas.iter().map(|v| v.to_f64_lossy()).collect();
    let dv = exp.d_value.to_f64_lossy();
    let q = 2.0 - (l[0] + l[1] + l[2]);
    SwapChain {
        d_defect: (dv - (-b + g + d + 2.0 * x + z)).abs(),
        q_defect: (q - (-a + n + m + x + 2.0 * z)).abs(),
        sum_defect: (dv + q - (1.0 - 2.0 * (a + b) + 2.0 * (x + z))).abs(),
        q_below_d: BoundCheck::new(q, dv, BOUND_SLACK),
        alpha_beta: BoundCheck::new(0.5 - dv - (a + b), 0.0, BOUND_SLACK),
    }
}

/// Outcome of the rotation in the `{3, 4}` natural-orbital plane.
#[derive(Clone, Debug)]
pub struct Rotation34<T: Real> {
    /// The 2x2 block: column 0 is `3~`, column 1 is `4~`, both in the `{3, 4}` natural orbitals.
    pub block: CMatrix<T>,
    /// Full 6x6 rotation from natural to rotated orbitals.
    pub in_natural: OrbitalRotation<T>,
    /// Rotated orbitals in the computational basis.
    pub orbitals: OrbitalRotation<T>,
    /// Closed-form transformed amplitudes.
    pub closed_form: Coefficients<T>,
    /// Amplitudes read after rotating the state with the fermionic lift.
    pub brute_force: Coefficients<T>,
    /// `max |closed - brute|` over the eight amplitudes.
    pub agreement: f64,
    /// Defect of `gamma~ = -(d* x + m* z)/n` and `delta~ = -(n* z + g* x)/n`.
    pub reduced_form_defect: f64,
    /// Weight of the rotated state outside the eight configurations.
    pub brute_force_leak: f64,
    /// `1 - (|alpha~|^2 + |nu~|^2 + |mu~|^2)`.
    pub residual_weight: f64,
    /// `D / (|alpha|^2 + |beta|^2)`, the bound the argument establishes before the last step.
    pub intermediate_bound: f64,
    /// `2 D / (1 - D)`.
    pub bound: BoundCheck,
    /// `4 D`.
    pub loose_bound: BoundCheck,
}

/// Rotates orbitals 3 and 4 so that `beta~ = 0` and bounds the weight left outside
/// `alpha~|123> + nu~|145> + mu~|246>`. Refuses `D >= 1/4`.
pub fn rotate_and_bound<T: Real>(state: &StateVector<T>, exp: &BdExpansion<T>) -> Result<Rotation34<T>> {
    let dv = exp.d_value.to_f64_lossy();
    if dv >= 0.25 {
        return Err(Error::Precondition(format!("D = {dv} is not below 1/4")));
    }
    let Coefficients { alpha, beta, gamma, delta, nu, mu, xi, zeta } = exp.coefficients;
    let nrm2 = alpha.norm_sqr() + beta.norm_sqr();
    if nrm2 <= T::zero() {
        return Err(Error::Precondition("alpha and beta both vanish".into()));
    }
    let n = nrm2.sqrt();
    let s = |z: C<T>| z / n;

    let mut block = CMatrix::zeros(2, 2);
    block[(0, 0)] = s(alpha);
    block[(1, 0)] = s(beta);
    block[(0, 1)] = s(beta.conj());
    block[(1, 1)] = s(-alpha.conj());
    let mut full = CMatrix::<T>::identity(6, 6);
    for r in 0..2 {
        for c in 0..2 {
            full[(2 + r, 2 + c)] = block[(r, c)];
        }
    }
    let in_natural = OrbitalRotation::new(full)?;
    let orbitals = exp.natural_orbitals.compose(&in_natural);

    let closed_form = Coefficients {
        alpha: cr(n),
        beta: czero(),
        gamma: s(alpha.conj() * gamma + beta.conj() * nu),
        delta: s(alpha.conj() * delta + beta.conj() * mu),
        nu: s(beta * gamma - alpha * nu),
        mu: s(beta * delta - alpha * mu),
        xi: s(alpha.conj() * xi + beta.conj() * zeta),
        zeta: s(beta * xi - alpha * zeta),
    };
    let reduced_gamma = s(-(delta.conj() * xi + mu.conj() * zeta));
    let reduced_delta = s(-(nu.conj() * zeta + gamma.conj() * xi));
    let reduced_form_defect = (closed_form.gamma - reduced_gamma)
        .modulus()
        .max((closed_form.delta - reduced_delta).modulus())
        .to_f64_lossy();

    let rotated = express_in_basis(state, &orbitals)?;
    let brute_force = Coefficients::read(rotated.basis(), rotated.amplitudes());
    let agreement = closed_form
        .to_array()
        .iter()
        .zip(brute_force.to_array())
        .map(|(a, b)| (*a - b).modulus().to_f64_lossy())
        .fold(0.0, f64::max);
    let brute_force_leak = (T::one() - brute_force.total_weight()).to_f64_lossy().max(0.0);

    let kept = (closed_form.alpha.norm_sqr() + closed_form.nu.norm_sqr() + closed_form.mu.norm_sqr()).to_f64_lossy();
    let residual_weight = (1.0 - kept).max(0.0);
    Ok(Rotation34 {
        block,
        in_natural,
        orbitals,
        closed_form,
        brute_force,
        agreement,
        reduced_form_defect,
        brute_force_leak,
        residual_weight,
        intermediate_bound: dv / nrm2.to_f64_lossy(),
        bound: BoundCheck::new(residual_weight, 2.0 * dv / (1.0 - dv), BOUND_SLACK),
        loose_bound: BoundCheck::new(residual_weight, 4.0 * dv, BOUND_SLACK),
    })
}

/// `sqrt(w0)|123> + sqrt(w1)|145> + sqrt(w2)|246>` in the computational orbitals.
pub fn pinned_state<T: Real>(weights: [f64; 3]) -> Result<StateVector<T>> {
    let terms: Vec<_> = [[0, 1, 2], [0, 3, 4], [1, 3, 5]]
        .iter()
        .zip(weights)
        .map(|(o, w)| (OccupationConfig::from_orbitals(o), cr(T::lit(w.max(0.0).sqrt()))))
        .collect();
    StateVector::from_terms(Basis::new(setting()), &terms)
}

/// Haar states with `D < max_d`, by rejection.
pub fn sample_quasipinned<T: Real>(max_d: f64, seed: u64, max_tries: usize) -> Result<StateVector<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = borland_dennis_d();
    for _ in 0..max_tries {
        let s = StateVector::<T>::random(setting(), rng.random());
        let sp = state_spectrum(&s, 0.0)?;
        if d.evaluate(&sp.lambdas)?.to_f64_lossy() < max_d {
            return Ok(s);
        }
    }
    Err(Error::Precondition(format!("no state with D < {max_d} in {max_tries} draws")))
}

/// A random nondegenerate pinned state in random orbitals plus a Gaussian perturbation of size `eps`.
pub fn perturbed_pinned<T: Real>(eps: f64, seed: u64) -> Result<StateVector<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // w0 > 1/2 keeps orbitals 3 and 4 in natural order
    let w0 = 0.55 + 0.35 * rng.random::<f64>();
    let split = 0.2 + 0.6 * rng.random::<f64>();
    let pinned = pinned_state::<T>([w0, (1.0 - w0) * split, (1.0 - w0) * (1.0 - split)])?;
    let noise = crate::fock::gaussian_unit_vector::<T>(pinned.basis().dim(), rng.random());
    let amps = pinned.amplitudes() + noise.map(|z| z * T::lit(eps));
    let mixed = pinned.with_amplitudes(amps)?.normalize()?;
    crate::fock::apply_orbital_rotation(&mixed, &OrbitalRotation::random(6, rng.random()))
}
