//! One-particle reduced density matrix, occupation numbers and natural orbitals.

use crate::error::{Error, Result};
use crate::fock::{excite, OrbitalRotation, StateVector};
use crate::scalar::{cr, czero, hermitian_defect, hermitian_eigh, CMatrix, CVector, ComplexField, Real};
use crate::fock::Basis;

/// Default gap below which a natural spectrum is reported as degenerate.
pub const DEFAULT_GAP_TOL: f64 = 1e-6;

/// Hermitian `d x d` matrix `rho_ij = <a†_j a_i>` with trace `N`.
#[derive(Clone, Debug)]
pub struct OneRdm<T: Real> {
    matrix: CMatrix<T>,
}

impl<T: Real> OneRdm<T> {
    /// Wraps a matrix after checking Hermiticity and the trace.
    pub fn from_matrix(matrix: CMatrix<T>, particles: usize) -> Result<Self> {
        let defect = hermitian_defect(&matrix);
        if defect > T::tol(1e-10) {
            return Err(Error::NotHermitian(defect.to_f64_lossy()));
        }
        let tr = matrix.trace().re;
        if (tr - T::lit(particles as f64)).abs() > T::tol(1e-9) {
            return Err(Error::Precondition(format!(
                "trace {} differs from N = {particles}",
                tr.to_f64_lossy()
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Occupations `<j|rho|j>` in the orbitals given by the columns of `basis`.
    pub fn occupations_in(&self, basis: &OrbitalRotation<T>) -> Vec<T> {
        let m = basis.matrix().adjoint() * &self.matrix * basis.matrix();
        (0..m.nrows()).map(|i| m[(i, i)].re).collect()
    }
}

/// `T_ij = <bra| a†_j a_i |ket>` on raw amplitudes over `basis`.
pub(crate) fn transition_rdm<T: Real>(basis: &Basis, bra: &CVector<T>, ket: &CVector<T>) -> CMatrix<T> {
    let d = basis.setting().orbitals();
    let mut rho = CMatrix::zeros(d, d);
    for (k, cfg) in basis.configs().iter().enumerate() {
        let c = ket[k];
        if c == czero() {
            continue;
        }
        for i in cfg.orbitals() {
            for j in 0..d {
                if let Some((bits, s)) = excite(cfg.bits(), j, i) {
                    let t = basis.index_of(bits).expect("particle number conserved");
                    rho[(i, j)] += bra[t].conj() * c * cr(T::lit(s as f64));
                }
            }
        }
    }
    rho
}

/// One-particle reduced density matrix of a normalized state.
pub fn one_rdm<T: Real>(state: &StateVector<T>) -> Result<OneRdm<T>> {
    state.ensure_normalized(1e-8)?;
    let m = transition_rdm(state.basis(), state.amplitudes(), state.amplitudes());
    Ok(OneRdm { matrix: m })
}

/// Decreasingly ordered occupations with matched natural orbitals.
#[derive(Clone, Debug)]
pub struct NaturalSpectrum<T: Real> {
    pub lambdas: Vec<T>,
    /// Column `j` is the natural orbital for `lambdas[j]`.
    pub orbitals: OrbitalRotation<T>,
    /// `min_i lambda_i - lambda_{i+1}`.
    pub gap: T,
    /// Raised when `gap < gap_tol`.
    pub degenerate: bool,
}

impl<T: Real> NaturalSpectrum<T> {
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn lambdas_f64(&self) -> Vec<f64> {
        self.lambdas.iter().map(|x| x.to_f64_lossy()).collect()
    }
}

/// Eigen-decomposition of a Hermitian matrix returning eigenpairs in decreasing order,
/// ties broken by the diagonal entry at each eigenvector's dominant component, then by
/// that component's index. Each eigenvector is rotated so its largest entry is real
/// positive.
pub(crate) fn sorted_eigenpairs<T: Real>(m: &CMatrix<T>) -> (Vec<T>, CMatrix<T>) {
    let n = m.nrows();
    let (vals, vecs) = hermitian_eigh(m);
    let dominant: Vec<usize> = (0..n)
        .map(|k| {
            let col = vecs.column(k);
            let mut best = 0;
            for i in 1..n {
                if col[i].modulus() > col[best].modulus() * (T::one() + T::tol(1e-12)) {
                    best = i;
                }
            }
            best
        })
        .collect();
    let tie = T::tol(1e-12);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        if (vals[a] - vals[b]).abs() > tie {
            return vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal);
        }
        let da = m[(dominant[a], dominant[a])].re;
        let db = m[(dominant[b], dominant[b])].re;
        if (da - db).abs() > tie {
            db.partial_cmp(&da).unwrap_or(std::cmp::Ordering::Equal)
        } else {
            dominant[a].cmp(&dominant[b])
        }
    });
    let mut out = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (col, &k) in order.iter().enumerate() {
        let v = vecs.column(k);
        let piv = v[dominant[k]];
        let phase = if piv.modulus() > T::zero() {
            piv.conj() / piv.modulus()
        } else {
            cr(T::one())
        };
        for r in 0..n {
            out[(r, col)] = v[r] * phase;
        }
        // tie-broken neighbours may differ by rounding; keep the list monotone
        let v = match values.last() {
            Some(&prev) if vals[k] > prev => prev,
            _ => vals[k],
        };
        values.push(v);
    }
    (values, out)
}

/// Natural occupations and orbitals of a 1-RDM. Degeneracy is flagged, never fatal.
pub fn natural_spectrum<T: Real>(rdm: &OneRdm<T>, gap_tol: f64) -> NaturalSpectrum<T> {
    let (lambdas, orbitals) = sorted_eigenpairs(&rdm.matrix);
    let gap = spectral_gap(&lambdas);
    NaturalSpectrum {
        degenerate: gap < T::lit(gap_tol),
        lambdas,
        orbitals: OrbitalRotation::new_unchecked(orbitals),
        gap,
    }
}

pub(crate) fn spectral_gap<T: Real>(lambdas: &[T]) -> T {
    lambdas
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(T::lit(f64::INFINITY), |a, b| if b < a { b } else { a })
}

/// Convenience: natural spectrum of a state.
pub fn state_spectrum<T: Real>(state: &StateVector<T>, gap_tol: f64) -> Result<NaturalSpectrum<T>> {
    Ok(natural_spectrum(&one_rdm(state)?, gap_tol))
}
