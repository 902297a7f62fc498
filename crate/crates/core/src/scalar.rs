//! Scalar abstraction shared by every numerical module.

use nalgebra as na;
pub(crate) use na::ComplexField;
use num_complex::Complex;
use num_traits as nt;

/// Real floating point type usable throughout the crate (`f32` or `f64`).
pub trait Real:
    na::RealField + Copy + nt::FromPrimitive + nt::ToPrimitive + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Tolerance `t`, clamped from below to a multiple of the type's epsilon so that
    /// `f64` tolerances stay meaningful when the crate runs in single precision.
    fn tol(t: f64) -> Self {
        let floor = Self::default_epsilon() * Self::lit(256.0);
        let t = Self::lit(t);
        if t < floor {
            floor
        } else {
            t
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type C<T> = Complex<T>;
pub type CMatrix<T> = na::DMatrix<Complex<T>>;
pub type CVector<T> = na::DVector<Complex<T>>;

pub(crate) fn cr<T: Real>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

pub(crate) fn czero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

/// Maximum entry-wise deviation of `m` from being Hermitian.
pub(crate) fn hermitian_defect<T: Real>(m: &CMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let dev = (m[(i, j)] - m[(j, i)].conj()).modulus();
            if dev > worst {
                worst = dev;
            }
        }
    }
    worst
}

/// Maximum entry-wise deviation of `U^dagger U` from the identity.
pub(crate) fn unitary_defect<T: Real>(u: &CMatrix<T>) -> T {
    let g = u.adjoint() * u;
    let mut worst = T::zero();
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { T::one() } else { T::zero() };
            let dev = (g[(i, j)] - cr(target)).modulus();
            if dev > worst {
                worst = dev;
            }
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
pub(crate) fn hermitian_eigh<T: Real>(m: &CMatrix<T>) -> (Vec<T>, CMatrix<T>) {
    let n = m.nrows();
    // symmetrize first; nalgebra only reads the lower triangle
    let sym = (m + m.adjoint()).map(|z| z * cr(T::lit(0.5)));
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::<T>::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// `exp(Y)` for an anti-Hermitian generator `Y`, computed through the Hermitian matrix `iY`
/// so that the result is unitary to working precision.
pub(crate) fn expm_antihermitian<T: Real>(y: &CMatrix<T>) -> CMatrix<T> {
    let i = C::new(T::zero(), T::one());
    let h = y.map(|z| z * i);
    let (vals, vecs) = hermitian_eigh(&h);
    // Y = -i H  =>  exp(Y) = V diag(exp(-i lambda)) V^dagger
    let mut scaled = vecs.clone();
    for (k, &lam) in vals.iter().enumerate() {
        let phase = C::new(lam.cos(), -lam.sin());
        for r in 0..scaled.nrows() {
            scaled[(r, k)] *= phase;
        }
    }
    scaled * vecs.adjoint()
}
