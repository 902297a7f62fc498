//! Occupation-number operators `D = kappa0 + sum_j kappa_j n_j` attached to a reference
//! frame, their integer spectra, zero-eigenspace projectors and variances.
//!
//! The operator is stored as an integer diagonal over the basis configurations of the
//! reference frame together with the dense lift of that frame; it is never materialized
//! as a dense matrix.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::constraints::LinearConstraint;
use crate::error::{Error, Result};
use crate::fock::{Basis, OccupationConfig, OrbitalRotation, StateVector};
use crate::marginal::{state_spectrum, NaturalSpectrum};
use crate::scalar::{cr, czero, CMatrix, CVector, Real};

/// One-particle reference data the operator was built from.
#[derive(Clone, Debug)]
pub enum ReferenceFrame<T: Real> {
    /// Fermions: columns of the rotation are the reference orbitals.
    Orbitals(OrbitalRotation<T>),
    /// Distinguishable qubits: per-site 2x2 unitaries, columns ordered (larger, smaller).
    Sites(Vec<CMatrix<T>>),
}

#[derive(Clone, Debug)]
pub struct DhatOperator<T: Real> {
    constraint: LinearConstraint,
    reference: ReferenceFrame<T>,
    configs: Vec<OccupationConfig>,
    diagonal: Vec<i64>,
    /// Column `k` is reference configuration `k` in the computational basis.
    lift: Arc<CMatrix<T>>,
}

impl<T: Real> DhatOperator<T> {
    pub(crate) fn from_parts(
        constraint: LinearConstraint,
        reference: ReferenceFrame<T>,
        configs: Vec<OccupationConfig>,
        lift: Arc<CMatrix<T>>,
    ) -> Self {
        let diagonal = configs.iter().map(|c| constraint.eigenvalue(c.bits())).collect();
        Self {
            constraint,
            reference,
            configs,
            diagonal,
            lift,
        }
    }

    pub fn constraint(&self) -> &LinearConstraint {
        &self.constraint
    }

    pub fn reference(&self) -> &ReferenceFrame<T> {
        &self.reference
    }

    /// Integer eigenvalue for each reference configuration.
    pub fn diagonal(&self) -> &[i64] {
        &self.diagonal
    }

    pub fn configs(&self) -> &[OccupationConfig] {
        &self.configs
    }

    pub fn lift(&self) -> &CMatrix<T> {
        &self.lift
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    /// Coefficients of `amps` in the reference configurations.
    pub fn to_reference(&self, amps: &CVector<T>) -> CVector<T> {
        self.lift.ad_mul(amps)
    }

    pub fn from_reference(&self, coeffs: &CVector<T>) -> CVector<T> {
        &*self.lift * coeffs
    }

    pub fn apply(&self, amps: &CVector<T>) -> CVector<T> {
        let mut c = self.to_reference(amps);
        for (z, &e) in c.iter_mut().zip(&self.diagonal) {
            *z *= cr(T::lit(e as f64));
        }
        self.from_reference(&c)
    }

    /// Probability weight of each eigenvalue.
    pub fn weights_by_eigenvalue(&self, amps: &CVector<T>) -> BTreeMap<i64, T> {
        let c = self.to_reference(amps);
        let mut out = BTreeMap::new();
        for (z, &e) in c.iter().zip(&self.diagonal) {
            *out.entry(e).or_insert_with(T::zero) += z.norm_sqr();
        }
        out
    }

    pub fn expectation(&self, amps: &CVector<T>) -> T {
        let c = self.to_reference(amps);
        c.iter()
            .zip(&self.diagonal)
            .fold(T::zero(), |acc, (z, &e)| acc + T::lit(e as f64) * z.norm_sqr())
    }

    /// `<D^2> - <D>^2`, clamped at zero.
    pub fn variance_of(&self, amps: &CVector<T>) -> T {
        let c = self.to_reference(amps);
        let (mut m1, mut m2) = (T::zero(), T::zero());
        for (z, &e) in c.iter().zip(&self.diagonal) {
            let w = z.norm_sqr();
            let e = T::lit(e as f64);
            m1 += e * w;
            m2 += e * e * w;
        }
        let v = m2 - m1 * m1;
        if v < T::zero() {
            T::zero()
        } else {
            v
        }
    }
}

/// `D` for `constraint` in the Slater basis built from the columns of `reference_basis`.
pub fn build_dhat<T: Real>(
    constraint: &LinearConstraint,
    reference_basis: &OrbitalRotation<T>,
    basis: &Arc<Basis>,
) -> Result<DhatOperator<T>> {
    let d = basis.setting().orbitals();
    if constraint.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: constraint.len(),
        });
    }
    let checked = OrbitalRotation::new(reference_basis.matrix().clone())?;
    if checked.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: checked.dim(),
        });
    }
    let lift = Arc::new(checked.lift(basis));
    Ok(DhatOperator::from_parts(
        constraint.clone(),
        ReferenceFrame::Orbitals(checked),
        basis.configs().to_vec(),
        lift,
    ))
}

/// `D_Psi`: the operator for `constraint` in the natural orbitals of `state`.
pub fn natural_dhat<T: Real>(
    state: &StateVector<T>,
    constraint: &LinearConstraint,
    gap_tol: f64,
) -> Result<(DhatOperator<T>, NaturalSpectrum<T>)> {
    let spectrum = state_spectrum(state, gap_tol)?;
    if spectrum.degenerate {
        return Err(Error::Degenerate {
            gap: spectrum.gap.to_f64_lossy(),
            tol: gap_tol,
        });
    }
    let op = build_dhat(constraint, &spectrum.orbitals, state.basis())?;
    Ok((op, spectrum))
}

/// Configurations annihilated by the operator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionRule {
    pub zero_configs: Vec<OccupationConfig>,
}

pub fn selection_rule<T: Real>(op: &DhatOperator<T>) -> SelectionRule {
    joint_selection_rule(std::slice::from_ref(op)).expect("single operator")
}

/// Configurations annihilated by every operator of a facet (all sharing one frame).
pub fn joint_selection_rule<T: Real>(ops: &[DhatOperator<T>]) -> Result<SelectionRule> {
    let mask = joint_mask(ops)?;
    let configs = ops[0].configs();
    Ok(SelectionRule {
        zero_configs: configs
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(c, _)| *c)
            .collect(),
    })
}

fn joint_mask<T: Real>(ops: &[DhatOperator<T>]) -> Result<Vec<bool>> {
    let first = ops
        .first()
        .ok_or_else(|| Error::Precondition("no operators given".into()))?;
    for op in &ops[1..] {
        if !Arc::ptr_eq(&op.lift, &first.lift) && *op.lift != *first.lift {
            return Err(Error::Precondition("operators use different reference frames".into()));
        }
    }
    Ok((0..first.dim())
        .map(|k| ops.iter().all(|op| op.diagonal[k] == 0))
        .collect())
}

/// Orthogonal projector onto the zero eigenspace.
#[derive(Clone, Debug)]
pub struct ZeroProjector<T: Real> {
    lift: Arc<CMatrix<T>>,
    mask: Vec<bool>,
}

impl<T: Real> ZeroProjector<T> {
    pub fn rank(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn apply(&self, amps: &CVector<T>) -> CVector<T> {
        let mut c = self.lift.ad_mul(amps);
        for (z, &m) in c.iter_mut().zip(&self.mask) {
            if !m {
                *z = czero();
            }
        }
        &*self.lift * c
    }

    /// `||P psi||^2`.
    pub fn weight(&self, amps: &CVector<T>) -> T {
        let c = self.lift.ad_mul(amps);
        c.iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .fold(T::zero(), |a, (z, _)| a + z.norm_sqr())
    }

    /// Isometry whose columns span the zero eigenspace.
    pub fn isometry(&self) -> CMatrix<T> {
        let cols: Vec<usize> = (0..self.mask.len()).filter(|&k| self.mask[k]).collect();
        CMatrix::from_fn(self.lift.nrows(), cols.len(), |r, c| self.lift[(r, cols[c])])
    }

    pub fn dense(&self) -> CMatrix<T> {
        let v = self.isometry();
        &v * v.adjoint()
    }
}

pub fn zero_projector<T: Real>(op: &DhatOperator<T>) -> ZeroProjector<T> {
    joint_zero_projector(std::slice::from_ref(op)).expect("single operator")
}

pub fn joint_zero_projector<T: Real>(ops: &[DhatOperator<T>]) -> Result<ZeroProjector<T>> {
    let mask = joint_mask(ops)?;
    Ok(ZeroProjector {
        lift: ops[0].lift.clone(),
        mask,
    })
}

/// Operators for several constraints sharing a single frame (one lift computation).
pub fn build_facet<T: Real>(
    constraints: &[LinearConstraint],
    reference_basis: &OrbitalRotation<T>,
    basis: &Arc<Basis>,
) -> Result<Vec<DhatOperator<T>>> {
    let first = constraints
        .first()
        .ok_or_else(|| Error::Precondition("empty facet".into()))?;
    let op = build_dhat(first, reference_basis, basis)?;
    let mut out = vec![op.clone()];
    for c in &constraints[1..] {
        if c.len() != first.len() {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                got: c.len(),
            });
        }
        out.push(DhatOperator::from_parts(
            c.clone(),
            op.reference.clone(),
            op.configs.clone(),
            op.lift.clone(),
        ));
    }
    Ok(out)
}

/// `Var_psi D`.
pub fn variance<T: Real>(state: &StateVector<T>, op: &DhatOperator<T>) -> Result<T> {
    state.ensure_normalized(1e-8)?;
    if op.dim() != state.basis().dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: state.basis().dim(),
        });
    }
    Ok(op.variance_of(state.amplitudes()))
}
