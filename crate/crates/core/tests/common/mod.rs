//! Dense brute-force oracles on the full 2^d Fock space (Jordan-Wigner matrices).
#![allow(dead_code)]

use marginalflow::{CMatrix, CVector, C};
use nalgebra::DMatrix;

pub type Mat = DMatrix<C<f64>>;

fn c(re: f64) -> C<f64> {
    C::new(re, 0.0)
}

/// `a_i` on the full Fock space; basis index = occupation bitmask, sign from the
/// occupied orbitals below `i`.
pub fn annihilator(d: usize, i: usize) -> Mat {
    let dim = 1usize << d;
    let mut m = Mat::zeros(dim, dim);
    for bits in 0..dim {
        if bits >> i & 1 == 1 {
            let below = (bits & ((1 << i) - 1)).count_ones();
            let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
            m[(bits ^ (1 << i), bits)] = c(sign);
        }
    }
    m
}

pub struct Oracle {
    pub d: usize,
    pub n: usize,
    pub a: Vec<Mat>,
    /// Ascending bitmasks with `n` set bits.
    pub sector: Vec<usize>,
}

impl Oracle {
    pub fn new(n: usize, d: usize) -> Self {
        let a = (0..d).map(|i| annihilator(d, i)).collect();
        let sector = (0..1usize << d).filter(|b| b.count_ones() as usize == n).collect();
        Oracle { d, n, a, sector }
    }

    pub fn embed(&self, amps: &CVector<f64>) -> CVector<f64> {
        let mut v = CVector::zeros(1 << self.d);
        for (k, &b) in self.sector.iter().enumerate() {
            v[b] = amps[k];
        }
        v
    }

    pub fn restrict(&self, full: &CVector<f64>) -> CVector<f64> {
        CVector::from_iterator(self.sector.len(), self.sector.iter().map(|&b| full[b]))
    }

    pub fn project(&self, m: &Mat) -> CMatrix<f64> {
        let s = &self.sector;
        CMatrix::from_fn(s.len(), s.len(), |r, q| m[(s[r], s[q])])
    }

    pub fn one_body(&self, h: &CMatrix<f64>) -> Mat {
        let dim = 1 << self.d;
        let mut out = Mat::zeros(dim, dim);
        for i in 0..self.d {
            for j in 0..self.d {
                if h[(i, j)] != c(0.0) {
                    out += self.a[i].adjoint() * &self.a[j] * h[(i, j)];
                }
            }
        }
        out
    }

    /// `sum h_ij a†_i a_j + sum V_ijkl a†_i a†_j a_l a_k`.
    pub fn hamiltonian(&self, h: &CMatrix<f64>, v: impl Fn(usize, usize, usize, usize) -> C<f64>) -> Mat {
        let d = self.d;
        let pairs: Vec<Vec<Mat>> = (0..d)
            .map(|k| (0..d).map(|l| &self.a[l] * &self.a[k]).collect())
            .collect();
        let mut out = self.one_body(h);
        for i in 0..d {
            for j in 0..d {
                let create = pairs[i][j].adjoint();
                for k in 0..d {
                    for l in 0..d {
                        let x = v(i, j, k, l);
                        if x.norm() > 0.0 {
                            out += &create * &pairs[k][l] * x;
                        }
                    }
                }
            }
        }
        out
    }

    /// `rho_ij = <psi| a†_j a_i |psi>` for sector amplitudes.
    pub fn rdm(&self, amps: &CVector<f64>) -> CMatrix<f64> {
        let psi = self.embed(amps);
        CMatrix::from_fn(self.d, self.d, |i, j| {
            let op = self.a[j].adjoint() * &self.a[i];
            (psi.adjoint() * op * &psi)[(0, 0)]
        })
    }
}

/// Reduced density matrix of qubit `site` for an `n`-qubit state, site 0 the most
/// significant bit; computed by explicit summation.
pub fn qubit_site_rdm(amps: &CVector<f64>, n: usize, site: usize) -> [[C<f64>; 2]; 2] {
    let shift = n - 1 - site;
    let mut r = [[c(0.0); 2]; 2];
    for idx in 0..1usize << n {
        let a = idx >> shift & 1;
        for b in 0..2 {
            let other = (idx & !(1 << shift)) | (b << shift);
            r[a][b] += amps[idx] * amps[other].conj();
        }
    }
    r
}

/// Smaller eigenvalue of a 2x2 Hermitian matrix.
pub fn smaller_eig(r: &[[C<f64>; 2]; 2]) -> f64 {
    let (p, q) = (r[0][0].re, r[1][1].re);
    let off = r[0][1].norm();
    0.5 * (p + q) - (0.25 * (p - q).powi(2) + off * off).sqrt()
}

/// Ascending eigenvalues of a Hermitian matrix via its real symmetric embedding
/// `[[Re, -Im], [Im, Re]]`, whose spectrum is that of `m` with every value doubled.
pub fn hermitian_eigenvalues(m: &CMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let real = DMatrix::<f64>::from_fn(2 * n, 2 * n, |r, q| {
        let z = m[(r % n, q % n)];
        match (r < n, q < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let mut v: Vec<f64> = real.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().step_by(2).collect()
}

pub fn max_abs(m: &CMatrix<f64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
