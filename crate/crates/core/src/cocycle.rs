//! Linear cocycles 𝒜(ω, n) generated by a matrix-valued map A(ω) on ℝ^d.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::admissibility::OrbitFunction;
use crate::base::{BasePoint, BaseSystem};
use crate::error::{LabError, Result};
use crate::linalg::min_singular_value;

/// Entries above this magnitude mark a product as overflowing.
pub const OVERFLOW_THRESHOLD: f64 = 1e300;

type GeneratorFn = dyn Fn(&BaseSystem, &BasePoint) -> DMatrix<f64> + Send + Sync;

/// A cocycle over some base, given by its generator A(ω) = 𝒜(ω, 1).
#[derive(Clone)]
pub struct Cocycle {
    dim: usize,
    generator: Arc<GeneratorFn>,
    invertible: bool,
    descriptor: String,
}

impl fmt::Debug for Cocycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Cocycle")
            .field("dim", &self.dim)
            .field("invertible", &self.invertible)
            .field("descriptor", &self.descriptor)
            .finish()
    }
}

/// 𝒜(ω, n) for a signed length n (negative lengths are inverse products).
#[derive(Clone, Debug)]
pub struct MatrixProduct {
    pub value: DMatrix<f64>,
    pub start: BasePoint,
    pub length: i64,
    /// Set once any entry exceeded [`OVERFLOW_THRESHOLD`]; use log-scaled paths.
    pub overflow: bool,
}

impl MatrixProduct {
    /// 2-norm condition number σ_max/σ_min.
    pub fn condition(&self) -> f64 {
        let sv = self.value.clone().singular_values();
        let max = sv.iter().fold(0.0_f64, |a, &s| a.max(s));
        let min = sv.iter().fold(f64::INFINITY, |a, &s| a.min(s));
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

impl Cocycle {
    pub fn new<F>(dim: usize, invertible: bool, descriptor: impl Into<String>, generator: F) -> Self
    where
        F: Fn(&BaseSystem, &BasePoint) -> DMatrix<f64> + Send + Sync + 'static,
    {
        assert!(dim > 0, "cocycle dimension must be positive");
        Cocycle {
            dim,
            generator: Arc::new(generator),
            invertible,
            descriptor: descriptor.into(),
        }
    }

    /// Constant generator A(ω) ≡ m.
    pub fn constant(m: DMatrix<f64>, descriptor: impl Into<String>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(LabError::InvalidParameter(
                "generator must be square".into(),
            ));
        }
        let invertible = min_singular_value(&m) > 1e-12;
        let dim = m.nrows();
        Ok(Cocycle::new(dim, invertible, descriptor, move |_, _| {
            m.clone()
        }))
    }

    /// Generator chosen from `table` by the base label of ω (the current
    /// symbol on a Bernoulli base, the state on a periodic base).
    pub fn from_table(table: Vec<DMatrix<f64>>, descriptor: impl Into<String>) -> Result<Self> {
        let first = table
            .first()
            .ok_or_else(|| LabError::InvalidParameter("empty generator table".into()))?;
        let dim = first.nrows();
        if table.iter().any(|m| m.nrows() != dim || m.ncols() != dim) || dim == 0 {
            return Err(LabError::InvalidParameter(
                "table matrices must be square of equal size".into(),
            ));
        }
        let invertible = table.iter().all(|m| min_singular_value(m) > 1e-12);
        let table = Arc::new(table);
        Ok(Cocycle::new(dim, invertible, descriptor, move |base, p| {
            table[base.label(p, table.len())].clone()
        }))
    }

    /// Constant diag(a₁, …, a_d).
    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        if entries.is_empty() {
            return Err(LabError::InvalidParameter("diagonal needs entries".into()));
        }
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(entries));
        Cocycle::constant(m, format!("diagonal{entries:?}"))
    }

    /// Constant unipotent shear [[1,1],[0,1]].
    pub fn shear() -> Self {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        Cocycle::constant(m, "shear").expect("shear is square")
    }

    /// i.i.d. products of SL(2,ℝ) matrices keyed by the Bernoulli symbol.
    pub fn random_sl2(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        for m in &matrices {
            if m.nrows() != 2 || m.ncols() != 2 || (m.determinant() - 1.0).abs() > 1e-9 {
                return Err(LabError::InvalidParameter(
                    "random_sl2 matrices must be 2x2 with determinant 1".into(),
                ));
            }
        }
        Cocycle::from_table(matrices, "random_sl2")
    }

    /// The default pair [[2,1],[1,1]], [[1,1],[1,2]].
    pub fn random_sl2_default() -> Self {
        Cocycle::random_sl2(vec![
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]),
        ])
        .expect("default matrices are in SL(2)")
    }

    /// diag(e^{λ+ε cos 2πθ}, e^{−λ+ε cos 2πθ}) over the phase θ of the base.
    pub fn nonuniform_rotation(lambda: f64, epsilon: f64) -> Self {
        Cocycle::new(
            2,
            true,
            format!("nonuniform_rotation(lambda={lambda}, eps={epsilon})"),
            move |base, p| {
                let c = epsilon * (std::f64::consts::TAU * base.phase(p)).cos();
                DMatrix::from_diagonal(&DVector::from_vec(vec![
                    (lambda + c).exp(),
                    (-lambda + c).exp(),
                ]))
            },
        )
    }

    /// diag(a, 1/a) ⊕ R(2πρ): a hyperbolic block next to an isometric
    /// rotation block carrying the zero exponent (multiplicity 2).
    pub fn block_mixed(expansion: f64, rotation: f64) -> Result<Self> {
        if !(expansion > 0.0) {
            return Err(LabError::InvalidParameter(
                "expansion must be positive".into(),
            ));
        }
        let (s, c) = (std::f64::consts::TAU * rotation).sin_cos();
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = expansion;
        m[(1, 1)] = 1.0 / expansion;
        m[(2, 2)] = c;
        m[(2, 3)] = -s;
        m[(3, 2)] = s;
        m[(3, 3)] = c;
        Cocycle::constant(m, format!("block_mixed(a={expansion}, rho={rotation})"))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_invertible(&self) -> bool {
        self.invertible
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn with_descriptor(mut self, descriptor: impl Into<String>) -> Self {
        self.descriptor = descriptor.into();
        self
    }

    /// A(ω).
    pub fn generator(&self, base: &BaseSystem, omega: &BasePoint) -> DMatrix<f64> {
        (self.generator)(base, omega)
    }

    /// 𝒜(ω, n) = A(σ^{n−1}ω)⋯A(ω).
    pub fn evolve(&self, base: &BaseSystem, omega: &BasePoint, n: usize) -> MatrixProduct {
        let mut value = DMatrix::identity(self.dim, self.dim);
        let mut overflow = false;
        let mut p = *omega;
        for _ in 0..n {
            value = self.generator(base, &p) * value;
            if !overflow && value.iter().any(|x| !(x.abs() <= OVERFLOW_THRESHOLD)) {
                overflow = true;
            }
            p = base.step(&p, 1);
        }
        MatrixProduct {
            value,
            start: *omega,
            length: n as i64,
            overflow,
        }
    }

    /// (𝒜(σ^{−n}ω, n))^{−1} for invertible generators.
    pub fn evolve_back(
        &self,
        base: &BaseSystem,
        omega: &BasePoint,
        n: usize,
    ) -> Result<MatrixProduct> {
        if !self.invertible {
            return Err(LabError::SingularGenerator(format!(
                "{} is flagged non-invertible",
                self.descriptor
            )));
        }
        let mut value: DMatrix<f64> = DMatrix::identity(self.dim, self.dim);
        let mut overflow = false;
        let mut p = *omega;
        for _ in 0..n {
            p = base.step(&p, -1);
            let a = self.generator(base, &p);
            if min_singular_value(&a) <= 1e-12 {
                return Err(LabError::SingularGenerator(p.to_string()));
            }
            let inv = a
                .try_inverse()
                .ok_or_else(|| LabError::SingularGenerator(p.to_string()))?;
            value *= inv;
            if !overflow && value.iter().any(|x| !(x.abs() <= OVERFLOW_THRESHOLD)) {
                overflow = true;
            }
        }
        Ok(MatrixProduct {
            value,
            start: *omega,
            length: -(n as i64),
            overflow,
        })
    }

    /// The vectors v, 𝒜(ω,1)v, …, 𝒜(ω,n)v.
    pub fn orbit_vectors(
        &self,
        base: &BaseSystem,
        omega: &BasePoint,
        v: &DVector<f64>,
        n: usize,
    ) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(v.clone());
        let mut p = *omega;
        let mut w = v.clone();
        for _ in 0..n {
            w = self.generator(base, &p) * w;
            out.push(w.clone());
            p = base.step(&p, 1);
        }
        out
    }

    /// Mather operator: (𝔸f)(σ^kω) = A(σ^{k−1}ω) f(σ^{k−1}ω); the window
    /// loses its leftmost point.
    pub fn mather_apply(&self, base: &BaseSystem, f: &OrbitFunction) -> Result<OrbitFunction> {
        if f.len() < 2 {
            return Err(LabError::WindowUnderflow);
        }
        let values: Vec<DVector<f64>> = f
            .points()
            .iter()
            .zip(f.values())
            .take(f.len() - 1)
            .map(|(p, v)| self.generator(base, p) * v)
            .collect();
        Ok(OrbitFunction::from_parts(
            base,
            *f.anchor(),
            f.first_offset() + 1,
            values,
        ))
    }

    /// The k-step cocycle A(σ^{k−1}ω)⋯A(ω) over the base σ^k.
    pub fn power(&self, base: &BaseSystem, k: usize) -> Result<(Cocycle, BaseSystem)> {
        let new_base = base.power(k as i64)?;
        let parent = self.clone();
        let original = base.clone();
        let c = Cocycle::new(
            self.dim,
            self.invertible,
            format!("({})^{k}", self.descriptor),
            move |_, p| parent.evolve(&original, p, k).value,
        );
        Ok((c, new_base))
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 5] = [
    "diagonal",
    "shear",
    "random_sl2",
    "nonuniform_rotation",
    "block_mixed",
];

/// Look up a named example cocycle.
///
/// Parameters: `diagonal` takes the diagonal entries; `random_sl2` takes
/// row-major 2×2 matrices flattened (default pair when empty);
/// `nonuniform_rotation` takes `[λ, ε]` (default `[0.5, 0.3]`);
/// `block_mixed` takes `[a, ρ]` (default `[2, √2 − 1]`).
pub fn builtin(name: &str, params: &[f64]) -> Result<Cocycle> {
    match name {
        "diagonal" => Cocycle::diagonal(params),
        "shear" => Ok(Cocycle::shear()),
        "random_sl2" => {
            if params.is_empty() {
                return Ok(Cocycle::random_sl2_default());
            }
            if !params.len().is_multiple_of(4) {
                return Err(LabError::InvalidParameter(
                    "random_sl2 expects 4 entries per matrix".into(),
                ));
            }
            Cocycle::random_sl2(
                params
                    .chunks(4)
                    .map(|c| DMatrix::from_row_slice(2, 2, c))
                    .collect(),
            )
        }
        "nonuniform_rotation" => {
            let (l, e) = match params {
                [] => (0.5, 0.3),
                [l, e] => (*l, *e),
                _ => {
                    return Err(LabError::InvalidParameter(
                        "nonuniform_rotation expects [lambda, epsilon]".into(),
                    ))
                }
            };
            Ok(Cocycle::nonuniform_rotation(l, e))
        }
        "block_mixed" => match params {
            [] => Cocycle::block_mixed(2.0, std::f64::consts::SQRT_2 - 1.0),
            [a, r] => Cocycle::block_mixed(*a, *r),
            _ => Err(LabError::InvalidParameter(
                "block_mixed expects [expansion, rotation]".into(),
            )),
        },
        other => Err(LabError::UnknownName(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::BasePoint;

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn shear_squared() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.2);
        let m = Cocycle::shear().evolve(&base, &p, 2);
        assert_eq!(
            m.value,
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])
        );
        assert_eq!(m.length, 2);
    }

    #[test]
    fn diagonal_cubed_and_identity() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.2);
        let c = Cocycle::diagonal(&[2.0, 0.5]).unwrap();
        let m = c.evolve(&base, &p, 3);
        assert!(close(
            &m.value,
            &DMatrix::from_diagonal(&DVector::from_vec(vec![8.0, 0.125])),
            0.0
        ));
        let id = c.evolve(&base, &p, 0);
        assert_eq!(id.value, DMatrix::identity(2, 2));
    }

    #[test]
    fn backward_products() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.7);
        let d = Cocycle::diagonal(&[2.0, 0.5]).unwrap();
        let b = d.evolve_back(&base, &p, 1).unwrap();
        assert!(close(
            &b.value,
            &DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0])),
            1e-15
        ));
        assert_eq!(
            d.evolve_back(&base, &p, 0).unwrap().value,
            DMatrix::identity(2, 2)
        );
        let s = Cocycle::shear().evolve_back(&base, &p, 3).unwrap();
        assert!(close(
            &s.value,
            &DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 0.0, 1.0]),
            1e-14
        ));
    }

    #[test]
    fn singular_generator_cannot_go_back() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.7);
        let c = Cocycle::diagonal(&[2.0, 0.0]).unwrap();
        assert!(!c.is_invertible());
        assert_eq!(
            c.evolve_back(&base, &p, 2).unwrap_err().name(),
            "SingularGenerator"
        );
    }

    #[test]
    fn overflow_is_flagged() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.7);
        let c = Cocycle::diagonal(&[1e200]).unwrap();
        assert!(!c.evolve(&base, &p, 1).overflow);
        assert!(c.evolve(&base, &p, 2).overflow);
    }

    #[test]
    fn builtin_lookup() {
        for name in BUILTIN_NAMES {
            let params: &[f64] = if name == "diagonal" { &[2.0, 0.5] } else { &[] };
            assert!(builtin(name, params).is_ok(), "{name}");
        }
        assert_eq!(builtin("nope", &[]).unwrap_err().name(), "UnknownName");
        assert!(builtin("random_sl2", &[1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn mather_operator_cases() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.1);
        let ones = OrbitFunction::from_fn(&base, p, -3, 3, |_, _| DVector::from_element(1, 1.0));
        let half = Cocycle::diagonal(&[0.5]).unwrap();
        let out = half.mather_apply(&base, &ones).unwrap();
        assert_eq!(out.first_offset(), -2);
        assert!(out.values().iter().all(|v| v[0] == 0.5));

        let ramp =
            OrbitFunction::from_fn(&base, p, -3, 3, |k, _| DVector::from_element(2, k as f64));
        let id = Cocycle::diagonal(&[1.0, 1.0]).unwrap();
        let shifted = id.mather_apply(&base, &ramp).unwrap();
        for k in -2..=3 {
            assert_eq!(shifted.value_at(k).unwrap()[0], (k - 1) as f64);
        }

        let single = OrbitFunction::from_fn(&base, p, 0, 0, |_, _| DVector::zeros(1));
        assert_eq!(
            half.mather_apply(&base, &single).unwrap_err(),
            LabError::WindowUnderflow
        );
    }
}
