//! Integer-coefficient spectral constraints `D(lambda) = kappa0 + sum_j kappa_j lambda_j`
//! and the hard-coded catalogs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Linear constraint with integer coefficients. Inequalities read `D >= 0`,
/// equalities `D = 0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    pub kappa0: i64,
    pub kappa: Vec<i64>,
    pub equality: bool,
}

impl LinearConstraint {
    pub fn new(name: impl Into<String>, kappa0: i64, kappa: Vec<i64>) -> Self {
        Self {
            name: name.into(),
            kappa0,
            kappa,
            equality: false,
        }
    }

    pub fn equality(name: impl Into<String>, kappa0: i64, kappa: Vec<i64>) -> Self {
        Self {
            equality: true,
            ..Self::new(name, kappa0, kappa)
        }
    }

    /// The constraint that vanishes identically.
    pub fn trivial(d: usize) -> Self {
        Self::new("trivial", 0, vec![0; d])
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    /// `true` for the ordering constraints `lambda_j - lambda_{j+1} >= 0` and
    /// `lambda_d >= 0`, which every sorted spectrum satisfies by construction.
    pub fn is_ordering(&self) -> bool {
        if self.equality || self.kappa0 != 0 {
            return false;
        }
        let nz: Vec<(usize, i64)> = self
            .kappa
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, k)| k != 0)
            .collect();
        match nz.as_slice() {
            [(j, 1), (k, -1)] => *k == j + 1,
            [(j, 1)] => *j + 1 == self.kappa.len(),
            _ => false,
        }
    }

    /// `D(lambda)` for a decreasing spectrum of matching length.
    pub fn evaluate<T: Real>(&self, lambdas: &[T]) -> Result<T> {
        if lambdas.len() != self.kappa.len() {
            return Err(Error::DimensionMismatch {
                expected: self.kappa.len(),
                got: lambdas.len(),
            });
        }
        if let Some(pos) = lambdas.windows(2).position(|w| w[0] < w[1]) {
            return Err(Error::NotDecreasing(pos + 1));
        }
        Ok(self.evaluate_unordered(lambdas))
    }

    /// `D` on an arbitrary vector, with no ordering check (per-site qubit spectra,
    /// occupations in a non-natural basis).
    pub fn evaluate_unordered<T: Real>(&self, values: &[T]) -> T {
        self.kappa
            .iter()
            .zip(values)
            .fold(T::lit(self.kappa0 as f64), |acc, (&k, &l)| acc + T::lit(k as f64) * l)
    }

    /// Integer eigenvalue of the associated occupation-number operator on the basis
    /// configuration `bits` (one bit per orbital or per site).
    pub fn eigenvalue(&self, bits: u64) -> i64 {
        self.kappa
            .iter()
            .enumerate()
            .filter(|&(j, _)| bits >> j & 1 == 1)
            .fold(self.kappa0, |acc, (_, &k)| acc + k)
    }
}

/// What a constraint set describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemKind {
    Fermions { n: usize, d: usize },
    Qubits { n: usize },
}

impl SystemKind {
    /// Length of the coefficient vectors.
    pub fn width(&self) -> usize {
        match *self {
            SystemKind::Fermions { d, .. } => d,
            SystemKind::Qubits { n } => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintSet {
    pub name: String,
    pub system: SystemKind,
    pub constraints: Vec<LinearConstraint>,
}

impl ConstraintSet {
    pub fn new(name: impl Into<String>, system: SystemKind, constraints: Vec<LinearConstraint>) -> Result<Self> {
        let width = system.width();
        for (i, c) in constraints.iter().enumerate() {
            if c.kappa.len() != width {
                return Err(Error::LengthMismatch {
                    constraint: i,
                    expected: width,
                    got: c.kappa.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            system,
            constraints,
        })
    }

    pub fn equalities(&self) -> impl Iterator<Item = &LinearConstraint> {
        self.constraints.iter().filter(|c| c.equality)
    }

    /// Inequalities other than the ordering constraints.
    pub fn nontrivial_inequalities(&self) -> impl Iterator<Item = &LinearConstraint> {
        self.constraints.iter().filter(|c| !c.equality && !c.is_ordering())
    }

    pub fn find(&self, name: &str) -> Option<&LinearConstraint> {
        self.constraints.iter().find(|c| c.name == name)
    }

    /// `D` for every constraint. Fermionic sets require a decreasing spectrum; qubit sets
    /// take the vector of smaller local eigenvalues.
    pub fn evaluate_all<T: Real>(&self, lambdas: &[T]) -> Result<Vec<T>> {
        match self.system {
            SystemKind::Fermions { .. } => self.constraints.iter().map(|c| c.evaluate(lambdas)).collect(),
            SystemKind::Qubits { n } => {
                if lambdas.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: lambdas.len(),
                    });
                }
                Ok(self.constraints.iter().map(|c| c.evaluate_unordered(lambdas)).collect())
            }
        }
    }
}

fn unit(d: usize, entries: &[(usize, i64)]) -> Vec<i64> {
    let mut k = vec![0; d];
    for &(j, v) in entries {
        k[j] = v;
    }
    k
}

fn ordering_constraints(d: usize) -> Vec<LinearConstraint> {
    let mut out: Vec<LinearConstraint> = (0..d - 1)
        .map(|j| LinearConstraint::new(format!("order{}{}", j + 1, j + 2), 0, unit(d, &[(j, 1), (j + 1, -1)])))
        .collect();
    out.push(LinearConstraint::new(format!("nonneg{d}"), 0, unit(d, &[(d - 1, 1)])));
    out
}

/// Name of the single nontrivial inequality in [`borland_dennis_set`].
pub const BORLAND_DENNIS_D: &str = "D";

/// Constraints of the (3,6) setting: ordering, the three equalities
/// `l1+l6 = l2+l5 = l3+l4 = 1` and `D = 2 - (l1+l2+l4) >= 0`.
pub fn borland_dennis_set() -> ConstraintSet {
    let d = 6;
    let mut cs = ordering_constraints(d);
    cs.push(LinearConstraint::equality("E16", -1, unit(d, &[(0, 1), (5, 1)])));
    cs.push(LinearConstraint::equality("E25", -1, unit(d, &[(1, 1), (4, 1)])));
    cs.push(LinearConstraint::equality("E34", -1, unit(d, &[(2, 1), (3, 1)])));
    cs.push(borland_dennis_d());
    ConstraintSet::new("borland-dennis", SystemKind::Fermions { n: 3, d }, cs).expect("consistent catalog")
}

/// `D(lambda) = 2 - (l1 + l2 + l4)`.
pub fn borland_dennis_d() -> LinearConstraint {
    LinearConstraint::new(BORLAND_DENNIS_D, 2, vec![-1, -1, 0, -1, 0, 0])
}

/// Pauli bounds `lambda_i >= 0` and `1 - lambda_i >= 0` for every orbital.
pub fn pauli_set(n: usize, d: usize) -> ConstraintSet {
    let mut cs = Vec::with_capacity(2 * d);
    for i in 0..d {
        cs.push(LinearConstraint::new(format!("upper{}", i + 1), 1, unit(d, &[(i, -1)])));
        cs.push(LinearConstraint::new(format!("lower{}", i + 1), 0, unit(d, &[(i, 1)])));
    }
    ConstraintSet::new("pauli", SystemKind::Fermions { n, d }, cs).expect("consistent catalog")
}

/// Higuchi constraints `D_i = -l_i + sum_{j != i} l_j >= 0` on the smaller local
/// eigenvalues of `n` qubits.
pub fn higuchi_set(n_qubits: usize) -> Result<ConstraintSet> {
    if n_qubits < 2 {
        return Err(Error::InvalidSetting(format!("{n_qubits} qubits; need at least 2")));
    }
    let cs = (0..n_qubits).map(|i| higuchi(n_qubits, i)).collect();
    ConstraintSet::new("higuchi", SystemKind::Qubits { n: n_qubits }, cs)
}

pub fn higuchi(n_qubits: usize, site: usize) -> LinearConstraint {
    let kappa = (0..n_qubits).map(|j| if j == site { -1 } else { 1 }).collect();
    LinearConstraint::new(format!("D{}", site + 1), 0, kappa)
}

/// Collective Pauli constraint `S_{r,s} = sum_{i<=r} (1 - l_i) + sum_{j > d-s} l_j`.
pub fn collective_pauli(r: usize, s: usize, n: usize, d: usize) -> Result<LinearConstraint> {
    if r > n || n > d || s > d - n {
        return Err(Error::InvalidActiveSpace { r, s, n, d });
    }
    let mut kappa = vec![0; d];
    kappa[..r].iter_mut().for_each(|k| *k = -1);
    kappa[d - s..].iter_mut().for_each(|k| *k = 1);
    Ok(LinearConstraint::new(format!("S{r},{s}"), r as i64, kappa))
}

/// l1 distance of a decreasing spectrum to the Hartree-Fock point.
pub fn hf_distance<T: Real>(lambdas: &[T], n: usize) -> Result<T> {
    if let Some(pos) = lambdas.windows(2).position(|w| w[0] < w[1]) {
        return Err(Error::NotDecreasing(pos + 1));
    }
    if n > lambdas.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: lambdas.len(),
        });
    }
    Ok(hf_distance_unordered(lambdas, n))
}

/// Same sum for occupations listed in a fixed (not necessarily sorted) basis order.
pub fn hf_distance_unordered<T: Real>(values: &[T], n: usize) -> T {
    let head = values[..n].iter().fold(T::zero(), |a, &l| a + (T::one() - l));
    let tail = values[n..].iter().fold(T::zero(), |a, &l| a + l);
    head + tail
}

#[derive(Serialize, Deserialize)]
struct FileConstraint {
    kappa0: i64,
    kappa: Vec<i64>,
    equality: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct FileSet {
    name: String,
    #[serde(rename = "N")]
    n: usize,
    d: usize,
    constraints: Vec<FileConstraint>,
}

fn as_int(v: &Value, constraint: usize, field: &str) -> Result<i64> {
    match v {
        Value::Number(num) => {
            if let Some(i) = num.as_i64() {
                Ok(i)
            } else {
                let f = num.as_f64().unwrap_or(f64::NAN);
                if f.fract() == 0.0 && f.abs() < 9.0e15 {
                    Ok(f as i64)
                } else {
                    Err(Error::NonInteger { constraint, value: f })
                }
            }
        }
        other => Err(Error::Schema(format!("constraint {constraint}: `{field}` must be a number, found {other}"))),
    }
}

/// Parses a constraint file from its JSON text.
pub fn parse_constraint_json(text: &str) -> Result<ConstraintSet> {
    let root: Value = serde_json::from_str(text)?;
    let obj = root.as_object().ok_or_else(|| Error::Schema("top level must be an object".into()))?;
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Schema("missing string field `name`".into()))?
        .to_string();
    let count = |key: &str| -> Result<usize> {
        obj.get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| Error::Schema(format!("missing non-negative integer field `{key}`")))
    };
    let n = count("N")?;
    let d = count("d")?;
    if n > d || d == 0 {
        return Err(Error::Schema(format!("invalid setting N = {n}, d = {d}")));
    }
    let list = obj
        .get("constraints")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Schema("missing array field `constraints`".into()))?;
    let mut out = Vec::with_capacity(list.len());
    for (i, entry) in list.iter().enumerate() {
        let e = entry
            .as_object()
            .ok_or_else(|| Error::Schema(format!("constraint {i} must be an object")))?;
        let kappa0 = as_int(
            e.get("kappa0").ok_or_else(|| Error::Schema(format!("constraint {i}: missing `kappa0`")))?,
            i,
            "kappa0",
        )?;
        let raw = e
            .get("kappa")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Schema(format!("constraint {i}: missing array `kappa`")))?;
        let kappa = raw.iter().map(|v| as_int(v, i, "kappa")).collect::<Result<Vec<_>>>()?;
        if kappa.len() != d {
            return Err(Error::LengthMismatch {
                constraint: i,
                expected: d,
                got: kappa.len(),
            });
        }
        let equality = e
            .get("equality")
            .and_then(Value::as_bool)
            .ok_or_else(|| Error::Schema(format!("constraint {i}: missing boolean `equality`")))?;
        let cname = match e.get("name") {
            None => format!("{name}[{i}]"),
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(Error::Schema(format!("constraint {i}: `name` must be a string"))),
        };
        out.push(LinearConstraint {
            name: cname,
            kappa0,
            kappa,
            equality,
        });
    }
    ConstraintSet::new(name, SystemKind::Fermions { n, d }, out)
}

pub fn load_constraint_file(path: impl AsRef<Path>) -> Result<ConstraintSet> {
    let text = std::fs::read_to_string(path)?;
    parse_constraint_json(&text)
}

/// JSON text of a fermionic constraint set.
pub fn constraint_json(set: &ConstraintSet) -> Result<String> {
    let (n, d) = match set.system {
        SystemKind::Fermions { n, d } => (n, d),
        SystemKind::Qubits { .. } => {
            return Err(Error::Schema("the constraint file format describes fermionic settings only".into()))
        }
    };
    let file = FileSet {
        name: set.name.clone(),
        n,
        d,
        constraints: set
            .constraints
            .iter()
            .map(|c| FileConstraint {
                kappa0: c.kappa0,
                kappa: c.kappa.clone(),
                equality: c.equality,
                name: Some(c.name.clone()),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn save_constraint_file(set: &ConstraintSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, constraint_json(set)?)?;
    Ok(())
}
