//! Pure states of `n` distinguishable qubits, their one-site marginals and the
//! polygon inequalities `D_i = -lambda_i + sum_{j != i} lambda_j >= 0` on the smaller
//! local eigenvalues.
//!
//! Amplitudes are stored big-endian: site 0 is the most significant bit of the index.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::constraints::{higuchi, LinearConstraint};
use crate::dhat::{selection_rule, DhatOperator, ReferenceFrame, SelectionRule};
use crate::error::{Error, Result};
use crate::flow::{Frame, MarginalSystem};
use crate::fock::{gaussian_unit_vector, OccupationConfig};
use crate::marginal::sorted_eigenpairs;
use crate::scalar::{cr, czero, CMatrix, CVector, Real, C};

/// Largest supported register.
pub const MAX_QUBITS: usize = 13;

#[derive(Clone, Debug)]
pub struct QubitState<T: Real> {
    n: usize,
    amps: CVector<T>,
}

impl<T: Real> QubitState<T> {
    pub fn new(n: usize, amps: CVector<T>) -> Result<Self> {
        check_width(n)?;
        if amps.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                got: amps.len(),
            });
        }
        Ok(Self { n, amps })
    }

    /// Normalizes `(index, amplitude)` terms into a state.
    pub fn from_terms(n: usize, terms: &[(usize, C<T>)]) -> Result<Self> {
        check_width(n)?;
        let mut amps = CVector::<T>::zeros(1 << n);
        for &(k, z) in terms {
            if k >= 1 << n {
                return Err(Error::IndexOutOfRange { index: k, limit: 1 << n });
            }
            amps[k] += z;
        }
        let norm = amps.norm();
        if norm == T::zero() {
            return Err(Error::NotNormalized(0.0));
        }
        Ok(Self { n, amps: amps.map(|z| z / norm) })
    }

    /// Haar-random pure state.
    pub fn random(n: usize, seed: u64) -> Result<Self> {
        check_width(n)?;
        Ok(Self {
            n,
            amps: gaussian_unit_vector(1 << n, seed),
        })
    }

    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &CVector<T> {
        &self.amps
    }

    pub fn norm(&self) -> T {
        self.amps.norm()
    }

    fn ensure_normalized(&self) -> Result<()> {
        let n = self.amps.norm();
        if (n - T::one()).abs() > T::tol(1e-8) {
            return Err(Error::NotNormalized(n.to_f64_lossy()));
        }
        Ok(())
    }
}

fn check_width(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::InvalidSetting(format!("qubit count {n} outside 1..={MAX_QUBITS}")));
    }
    Ok(())
}

/// `W_n`: equal superposition of the single-excitation strings.
pub fn w_state<T: Real>(n: usize) -> Result<QubitState<T>> {
    check_width(n)?;
    let terms: Vec<_> = (0..n).map(|s| (1usize << (n - 1 - s), cr(T::one()))).collect();
    QubitState::from_terms(n, &terms)
}

/// `(|0...0> + |1...1>) / sqrt 2`.
pub fn ghz_state<T: Real>(n: usize) -> Result<QubitState<T>> {
    check_width(n)?;
    QubitState::from_terms(n, &[(0, cr(T::one())), ((1 << n) - 1, cr(T::one()))])
}

/// Reduced density matrix of `site` in the computational basis.
pub fn qubit_rdm<T: Real>(state: &QubitState<T>, site: usize) -> Result<CMatrix<T>> {
    if site >= state.n {
        return Err(Error::IndexOutOfRange { index: site, limit: state.n });
    }
    state.ensure_normalized()?;
    Ok(site_rdm(state.n, &state.amps, site))
}

fn site_rdm<T: Real>(n: usize, amps: &CVector<T>, site: usize) -> CMatrix<T> {
    let shift = n - 1 - site;
    let bit = 1usize << shift;
    let mut rho = CMatrix::zeros(2, 2);
    for k in 0..amps.len() {
        if k & bit != 0 {
            continue;
        }
        let (z0, z1) = (amps[k], amps[k | bit]);
        rho[(0, 0)] += z0 * z0.conj();
        rho[(0, 1)] += z0 * z1.conj();
        rho[(1, 0)] += z1 * z0.conj();
        rho[(1, 1)] += z1 * z1.conj();
    }
    rho
}

/// Local eigenvalues and eigenbases of every site.
#[derive(Clone, Debug)]
pub struct LocalSpectra<T: Real> {
    /// Smaller eigenvalue `lambda_i` of each site.
    pub smaller: Vec<T>,
    pub larger: Vec<T>,
    /// Columns ordered (larger, smaller), largest entry of each column real positive.
    pub bases: Vec<CMatrix<T>>,
    /// `min_i (larger_i - smaller_i)`.
    pub gap: T,
    pub degenerate: bool,
}

pub fn local_spectra<T: Real>(state: &QubitState<T>, gap_tol: f64) -> Result<LocalSpectra<T>> {
    state.ensure_normalized()?;
    Ok(spectra_of(state.n, &state.amps, gap_tol))
}

fn spectra_of<T: Real>(n: usize, amps: &CVector<T>, gap_tol: f64) -> LocalSpectra<T> {
    let mut out = LocalSpectra {
        smaller: Vec::with_capacity(n),
        larger: Vec::with_capacity(n),
        bases: Vec::with_capacity(n),
        gap: T::lit(f64::INFINITY),
        degenerate: false,
    };
    for s in 0..n {
        let (vals, vecs) = sorted_eigenpairs(&site_rdm(n, amps, s));
        let gap = vals[0] - vals[1];
        if gap < out.gap {
            out.gap = gap;
        }
        out.larger.push(vals[0]);
        out.smaller.push(vals[1]);
        out.bases.push(vecs);
    }
    out.degenerate = out.gap < T::lit(gap_tol);
    out
}

/// `D_i(lambda)` for every site.
pub fn higuchi_evaluate<T: Real>(state: &QubitState<T>) -> Result<Vec<T>> {
    let sp = local_spectra(state, 0.0)?;
    let set = crate::constraints::higuchi_set(state.n)?;
    set.constraints
        .iter()
        .map(|c| Ok(c.evaluate_unordered(&sp.smaller)))
        .collect()
}

/// Site labels with bit `s` of the config meaning "site `s` in its smaller-eigenvalue
/// state", printed as `1`/`2` per site.
pub fn site_labels(config: OccupationConfig, n: usize) -> String {
    (0..n).map(|s| if config.is_occupied(s) { '2' } else { '1' }).collect()
}

fn site_constraint(n: usize, site: usize) -> Result<LinearConstraint> {
    check_width(n)?;
    if site >= n {
        return Err(Error::IndexOutOfRange { index: site, limit: n });
    }
    Ok(higuchi(n, site))
}

fn reverse_sites(k: usize, n: usize) -> OccupationConfig {
    let mut bits = 0u64;
    for s in 0..n {
        if k >> (n - 1 - s) & 1 == 1 {
            bits |= 1 << s;
        }
    }
    OccupationConfig(bits)
}

fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::from_element(ar * br, ac * bc, czero());
    for i in 0..ar {
        for j in 0..ac {
            let z = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = z * b[(k, l)];
                }
            }
        }
    }
    out
}

/// `D` for `constraint` with site eigenbases `bases`.
pub fn build_qubit_dhat<T: Real>(constraint: &LinearConstraint, bases: &[CMatrix<T>]) -> Result<DhatOperator<T>> {
    let n = bases.len();
    check_width(n)?;
    if constraint.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: constraint.len(),
        });
    }
    let mut lift = bases[0].clone();
    for b in &bases[1..] {
        lift = kron(&lift, b);
    }
    let configs = (0..1usize << n).map(|k| reverse_sites(k, n)).collect();
    Ok(DhatOperator::from_parts(
        constraint.clone(),
        ReferenceFrame::Sites(bases.to_vec()),
        configs,
        Arc::new(lift),
    ))
}

/// `D_i` in the local eigenbases of `state` and its selection rule.
pub fn qubit_dhat<T: Real>(
    state: &QubitState<T>,
    site: usize,
    gap_tol: f64,
) -> Result<(DhatOperator<T>, SelectionRule)> {
    let c = site_constraint(state.n, site)?;
    let sp = local_spectra(state, gap_tol)?;
    if sp.degenerate {
        return Err(Error::Degenerate {
            gap: sp.gap.to_f64_lossy(),
            tol: gap_tol,
        });
    }
    let op = build_qubit_dhat(&c, &sp.bases)?;
    let rule = selection_rule(&op);
    Ok((op, rule))
}

/// Qubit register driven by one linear constraint on the smaller local eigenvalues.
#[derive(Clone, Debug)]
pub struct QubitSystem {
    n: usize,
    constraint: LinearConstraint,
}

impl QubitSystem {
    pub fn new(n: usize, constraint: LinearConstraint) -> Result<Self> {
        check_width(n)?;
        if constraint.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: constraint.len(),
            });
        }
        Ok(Self { n, constraint })
    }

    pub fn higuchi(n: usize, site: usize) -> Result<Self> {
        Self::new(n, site_constraint(n, site)?)
    }

    pub fn sites(&self) -> usize {
        self.n
    }
}

impl<T: Real> MarginalSystem<T> for QubitSystem {
    fn dim(&self) -> usize {
        1 << self.n
    }

    fn frame(&self, amps: &CVector<T>, gap_tol: f64) -> Result<Frame<T>> {
        let sp = spectra_of(self.n, amps, gap_tol);
        let op = build_qubit_dhat(&self.constraint, &sp.bases)?;
        Ok(Frame {
            op,
            value: self.constraint.evaluate_unordered(&sp.smaller),
            gap: sp.gap,
            degenerate: sp.degenerate,
            eigenbases: sp.bases,
        })
    }

    fn constraint(&self) -> &LinearConstraint {
        &self.constraint
    }
}

/// Random state with `D_site` below `max_d`, by rejection from the Haar measure.
pub fn sample_below<T: Real>(n: usize, site: usize, max_d: f64, seed: u64, max_tries: usize) -> Result<QubitState<T>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = site_constraint(n, site)?;
    for _ in 0..max_tries {
        let s = QubitState::<T>::random(n, rng.random())?;
        let sp = local_spectra(&s, 0.0)?;
        let d = c.evaluate_unordered(&sp.smaller).to_f64_lossy();
        if d < max_d && !sp.degenerate {
            return Ok(s);
        }
    }
    Err(Error::Precondition(format!("no state with D < {max_d} in {max_tries} draws")))
}
