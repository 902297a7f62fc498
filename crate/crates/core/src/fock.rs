//! N-fermion pure states over bitmask-encoded Slater determinants.
//!
//! Orbitals are numbered from 0. A configuration is a `u64` mask whose set bits mark the
//! occupied orbitals; the basis of a setting lists every mask with `N` set bits in
//! ascending integer order.
//!
//! Sign convention: the determinant `|i1 < i2 < ... < iN>` equals
//! `a†_{i1} a†_{i2} ... a†_{iN} |vac>`, so `a†_i` and `a_i` act on a mask with the sign
//! `(-1)^(number of set bits below i)`.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::{cr, czero, hermitian_defect, unitary_defect, CMatrix, CVector, ComplexField, Real, C};

/// Largest basis dimension the dense representation accepts.
pub const MAX_BASIS_DIM: usize = 10_000;

/// Particle and orbital counts of an N-fermion system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FockSetting {
    n: usize,
    d: usize,
}

impl FockSetting {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidSetting(format!("N = {n} must be at least 1")));
        }
        if n > d {
            return Err(Error::InvalidSetting(format!("N = {n} exceeds d = {d}")));
        }
        if d > 64 {
            return Err(Error::InvalidSetting(format!("d = {d} exceeds 64 orbitals")));
        }
        let dim = binomial(d, n);
        if dim > MAX_BASIS_DIM as u128 {
            return Err(Error::InvalidSetting(format!(
                "basis dimension {dim} exceeds the dense cap {MAX_BASIS_DIM}"
            )));
        }
        Ok(Self { n, d })
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn orbitals(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        binomial(self.d, self.n) as usize
    }
}

impl fmt::Display for FockSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n, self.d)
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Occupation mask of a Slater determinant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OccupationConfig(pub u64);

impl OccupationConfig {
    /// Builds the mask from zero-based orbital indices.
    pub fn from_orbitals(orbitals: &[usize]) -> Self {
        Self(orbitals.iter().fold(0u64, |m, &i| m | (1u64 << i)))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_occupied(self, orbital: usize) -> bool {
        self.0 >> orbital & 1 == 1
    }

    /// Zero-based occupied orbitals in ascending order.
    pub fn orbitals(self) -> impl Iterator<Item = usize> {
        let mut m = self.0;
        std::iter::from_fn(move || {
            if m == 0 {
                None
            } else {
                let i = m.trailing_zeros() as usize;
                m &= m - 1;
                Some(i)
            }
        })
    }

    /// One-based orbital labels, the usual notation `|1,2,3>`.
    pub fn labels(self) -> Vec<usize> {
        self.orbitals().map(|i| i + 1).collect()
    }

    /// Binary string with the highest orbital first, `d` characters wide.
    pub fn to_bit_string(self, d: usize) -> String {
        (0..d)
            .rev()
            .map(|i| if self.is_occupied(i) { '1' } else { '0' })
            .collect()
    }
}

impl fmt::Display for OccupationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.labels().iter().map(|l| l.to_string()).collect();
        write!(f, "|{}>", labels.join(","))
    }
}

#[inline]
fn sign_below(bits: u64, i: usize) -> i32 {
    if (bits & ((1u64 << i) - 1)).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// `a†_i` on a mask: `None` if the orbital is already occupied.
#[inline]
pub fn create(bits: u64, i: usize) -> Option<(u64, i32)> {
    if bits >> i & 1 == 1 {
        None
    } else {
        Some((bits | (1u64 << i), sign_below(bits, i)))
    }
}

/// `a_i` on a mask: `None` if the orbital is empty.
#[inline]
pub fn annihilate(bits: u64, i: usize) -> Option<(u64, i32)> {
    if bits >> i & 1 == 0 {
        None
    } else {
        Some((bits & !(1u64 << i), sign_below(bits, i)))
    }
}

/// `a†_i a_j` on a mask.
#[inline]
pub fn excite(bits: u64, i: usize, j: usize) -> Option<(u64, i32)> {
    let (mid, s1) = annihilate(bits, j)?;
    let (out, s2) = create(mid, i)?;
    Some((out, s1 * s2))
}

/// All configurations of a setting in ascending mask order.
pub fn enumerate_basis(setting: FockSetting) -> Vec<OccupationConfig> {
    let (n, d) = (setting.n, setting.d);
    let mut out = Vec::with_capacity(setting.dim());
    let mut m: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let limit: u128 = 1u128 << d;
    loop {
        out.push(OccupationConfig(m));
        // Gosper's hack: next integer with the same popcount
        let c = m & m.wrapping_neg();
        let r = m as u128 + c as u128;
        if r >= limit || c == 0 {
            break;
        }
        let r = r as u64;
        m = (((r ^ m) >> 2) / c) | r;
    }
    out
}

/// Ordered Slater basis of a setting with mask lookup.
#[derive(Debug, PartialEq, Eq)]
pub struct Basis {
    setting: FockSetting,
    configs: Vec<OccupationConfig>,
}

impl Basis {
    pub fn new(setting: FockSetting) -> Arc<Self> {
        Arc::new(Self {
            setting,
            configs: enumerate_basis(setting),
        })
    }

    pub fn setting(&self) -> FockSetting {
        self.setting
    }

    pub fn configs(&self) -> &[OccupationConfig] {
        &self.configs
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn index_of(&self, bits: u64) -> Option<usize> {
        self.configs.binary_search(&OccupationConfig(bits)).ok()
    }
}

/// Complex amplitudes over the ordered Slater basis.
#[derive(Clone, Debug)]
pub struct StateVector<T: Real> {
    basis: Arc<Basis>,
    amps: CVector<T>,
}

impl<T: Real> StateVector<T> {
    pub fn new(basis: Arc<Basis>, amps: CVector<T>) -> Result<Self> {
        if amps.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: amps.len(),
            });
        }
        Ok(Self { basis, amps })
    }

    pub fn zeros(basis: Arc<Basis>) -> Self {
        let amps = CVector::zeros(basis.dim());
        Self { basis, amps }
    }

    /// The single determinant `config`.
    pub fn determinant(basis: Arc<Basis>, config: OccupationConfig) -> Result<Self> {
        let idx = basis.index_of(config.bits()).ok_or_else(|| {
            Error::InvalidSetting(format!("{config} is not in the {} basis", basis.setting()))
        })?;
        let mut s = Self::zeros(basis);
        s.amps[idx] = cr(T::one());
        Ok(s)
    }

    /// Superposition `sum c_k |config_k>`, normalized afterwards.
    pub fn from_terms(basis: Arc<Basis>, terms: &[(OccupationConfig, C<T>)]) -> Result<Self> {
        let mut s = Self::zeros(basis);
        for &(config, c) in terms {
            let idx = s.basis.index_of(config.bits()).ok_or_else(|| {
                Error::InvalidSetting(format!("{config} is not in the basis"))
            })?;
            s.amps[idx] += c;
        }
        s.normalize()
    }

    /// Haar-random unit vector, reproducible per seed.
    pub fn random(setting: FockSetting, seed: u64) -> Self {
        let basis = Basis::new(setting);
        let amps = gaussian_unit_vector(basis.dim(), seed);
        Self { basis, amps }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn setting(&self) -> FockSetting {
        self.basis.setting
    }

    pub fn amplitudes(&self) -> &CVector<T> {
        &self.amps
    }

    pub fn into_amplitudes(self) -> CVector<T> {
        self.amps
    }

    pub fn amplitude(&self, config: OccupationConfig) -> C<T> {
        self.basis
            .index_of(config.bits())
            .map(|i| self.amps[i])
            .unwrap_or_else(czero)
    }

    pub fn with_amplitudes(&self, amps: CVector<T>) -> Result<Self> {
        Self::new(self.basis.clone(), amps)
    }

    pub fn norm(&self) -> T {
        self.amps.norm()
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n <= T::default_epsilon() {
            return Err(Error::NotNormalized(0.0));
        }
        Ok(Self {
            basis: self.basis.clone(),
            amps: self.amps.map(|z| z / n),
        })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> C<T> {
        self.amps.dotc(&other.amps)
    }

    pub fn distance(&self, other: &Self) -> T {
        (&self.amps - &other.amps).norm()
    }

    pub(crate) fn ensure_normalized(&self, tol: f64) -> Result<()> {
        let n = self.norm();
        if (n - T::one()).abs() > T::tol(tol) {
            return Err(Error::NotNormalized(n.to_f64_lossy()));
        }
        Ok(())
    }
}

pub(crate) fn gaussian_unit_vector<T: Real>(dim: usize, seed: u64) -> CVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = CVector::<T>::from_fn(dim, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C::new(T::lit(re), T::lit(im))
    });
    let n = v.norm();
    v.iter_mut().for_each(|z| *z /= n);
    v
}

/// `n_orbital |state>`.
pub fn apply_number_operator<T: Real>(
    state: &StateVector<T>,
    orbital: usize,
) -> Result<StateVector<T>> {
    let d = state.setting().orbitals();
    if orbital >= d {
        return Err(Error::IndexOutOfRange {
            index: orbital,
            limit: d,
        });
    }
    let mut out = state.clone();
    for (k, cfg) in state.basis.configs.iter().enumerate() {
        if !cfg.is_occupied(orbital) {
            out.amps[k] = czero();
        }
    }
    Ok(out)
}

/// `a†_i a_j |state>` (no Hermiticity requirement).
pub fn apply_excitation<T: Real>(
    state: &StateVector<T>,
    i: usize,
    j: usize,
) -> Result<StateVector<T>> {
    let d = state.setting().orbitals();
    for idx in [i, j] {
        if idx >= d {
            return Err(Error::IndexOutOfRange { index: idx, limit: d });
        }
    }
    let mut out = CVector::zeros(state.basis.dim());
    for (k, cfg) in state.basis.configs.iter().enumerate() {
        if let Some((bits, s)) = excite(cfg.0, i, j) {
            let target = state.basis.index_of(bits).expect("particle number conserved");
            out[target] += state.amps[k] * cr(T::lit(s as f64));
        }
    }
    Ok(StateVector {
        basis: state.basis.clone(),
        amps: out,
    })
}

/// `sum_ij h_ij a†_i a_j` applied to raw amplitudes; `h` need not be Hermitian.
pub(crate) fn one_body_action<T: Real>(basis: &Basis, amps: &CVector<T>, h: &CMatrix<T>) -> CVector<T> {
    let d = basis.setting.d;
    let mut out = CVector::zeros(basis.dim());
    for (k, cfg) in basis.configs.iter().enumerate() {
        let a = amps[k];
        if a == czero() {
            continue;
        }
        for j in cfg.orbitals() {
            let (mid, sj) = annihilate(cfg.0, j).expect("occupied");
            for i in 0..d {
                let hij = h[(i, j)];
                if hij == czero() {
                    continue;
                }
                if let Some((bits, si)) = create(mid, i) {
                    let target = basis.index_of(bits).expect("particle number conserved");
                    out[target] += hij * a * cr(T::lit((si * sj) as f64));
                }
            }
        }
    }
    out
}

/// Second-quantized `sum_ij h_ij a†_i a_j |state>` for a Hermitian `h`.
pub fn apply_one_body_operator<T: Real>(
    state: &StateVector<T>,
    h: &CMatrix<T>,
) -> Result<StateVector<T>> {
    let d = state.setting().orbitals();
    if h.nrows() != d || h.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: h.nrows(),
        });
    }
    let defect = hermitian_defect(h);
    if defect > T::tol(1e-10) {
        return Err(Error::NotHermitian(defect.to_f64_lossy()));
    }
    Ok(StateVector {
        basis: state.basis.clone(),
        amps: one_body_action(&state.basis, &state.amps, h),
    })
}

/// Unitary `d x d` change of one-particle basis; column `j` holds orbital `j` in the
/// original orbitals.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitalRotation<T: Real> {
    matrix: CMatrix<T>,
}

impl<T: Real> OrbitalRotation<T> {
    pub fn new(matrix: CMatrix<T>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let defect = unitary_defect(&matrix);
        if defect > T::tol(1e-10) {
            return Err(Error::NotUnitary(defect.to_f64_lossy()));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn new_unchecked(matrix: CMatrix<T>) -> Self {
        Self { matrix }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: CMatrix::identity(d, d),
        }
    }

    /// Orbital `j` is sent to orbital `perm[j]`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let d = perm.len();
        let mut m = CMatrix::zeros(d, d);
        for (j, &p) in perm.iter().enumerate() {
            if p >= d {
                return Err(Error::IndexOutOfRange { index: p, limit: d });
            }
            m[(p, j)] = cr(T::one());
        }
        Self::new(m)
    }

    /// Haar-random unitary (QR of a complex Gaussian matrix with phase-fixed R).
    pub fn random(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = CMatrix::<T>::from_fn(d, d, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C::new(T::lit(re), T::lit(im))
        });
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..d {
            let rjj = r[(j, j)];
            let n = rjj.modulus();
            if n > T::zero() {
                let phase = rjj / n;
                for i in 0..d {
                    q[(i, j)] *= phase;
                }
            }
        }
        Self { matrix: q }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
        }
    }

    /// `self * other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            matrix: &self.matrix * &other.matrix,
        }
    }

    /// Matrix of the induced N-particle operator: entry `(I, J)` is the minor
    /// `det U[I, J]` on occupied rows `I` and columns `J`.
    pub fn lift(&self, basis: &Basis) -> CMatrix<T> {
        let all: Vec<usize> = (0..basis.dim()).collect();
        self.lift_columns(basis, &all)
    }

    /// Columns `cols` of the lift.
    pub fn lift_columns(&self, basis: &Basis, cols: &[usize]) -> CMatrix<T> {
        let configs = &basis.configs;
        let n = basis.setting.n;
        let rows: Vec<Vec<usize>> = configs.iter().map(|c| c.orbitals().collect()).collect();
        let mut out = CMatrix::zeros(configs.len(), cols.len());
        let mut buf = vec![czero::<T>(); n * n];
        for (b, &jb) in cols.iter().enumerate() {
            let occ = &rows[jb];
            for (a, rws) in rows.iter().enumerate() {
                for (r, &ri) in rws.iter().enumerate() {
                    for (c, &cj) in occ.iter().enumerate() {
                        buf[r * n + c] = self.matrix[(ri, cj)];
                    }
                }
                out[(a, b)] = small_det(&mut buf, n);
            }
        }
        out
    }
}

/// Determinant by Gaussian elimination with partial pivoting; destroys `m`.
fn small_det<T: Real>(m: &mut [C<T>], n: usize) -> C<T> {
    let mut det = cr(T::one());
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col * n + col].norm_sqr();
        for r in col + 1..n {
            let v = m[r * n + col].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == T::zero() {
            return czero();
        }
        if piv != col {
            for c in 0..n {
                m.swap(col * n + c, piv * n + c);
            }
            det = -det;
        }
        let p = m[col * n + col];
        det *= p;
        for r in col + 1..n {
            let f = m[r * n + col] / p;
            if f == czero() {
                continue;
            }
            for c in col..n {
                let v = m[col * n + c];
                m[r * n + c] -= f * v;
            }
        }
    }
    det
}

/// `lift(U) |state>`: the state with every orbital `j` replaced by column `j` of `U`.
pub fn apply_orbital_rotation<T: Real>(
    state: &StateVector<T>,
    rotation: &OrbitalRotation<T>,
) -> Result<StateVector<T>> {
    check_rotation_dim(state, rotation)?;
    let lift = rotation.lift(&state.basis);
    Ok(StateVector {
        basis: state.basis.clone(),
        amps: lift * &state.amps,
    })
}

/// Coefficients of `state` in the determinant basis built from the columns of `basis`.
pub fn express_in_basis<T: Real>(
    state: &StateVector<T>,
    basis: &OrbitalRotation<T>,
) -> Result<StateVector<T>> {
    check_rotation_dim(state, basis)?;
    let lift = basis.lift(&state.basis);
    Ok(StateVector {
        basis: state.basis.clone(),
        amps: lift.adjoint() * &state.amps,
    })
}

fn check_rotation_dim<T: Real>(state: &StateVector<T>, rotation: &OrbitalRotation<T>) -> Result<()> {
    let d = state.setting().orbitals();
    if rotation.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rotation.dim(),
        });
    }
    Ok(())
}
