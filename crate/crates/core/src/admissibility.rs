//! Orbit functions, weighted sup norms, the Green-series solver for
//! f(ω) − A(σ^{−1}ω)f(σ^{−1}ω) = g(ω), periodic oracles and probes of the
//! bound and uniqueness of the solution operator.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::base::{BasePoint, BaseSystem};
use crate::cocycle::Cocycle;
use crate::dichotomy::{green_constant, DichotomyCertificate, DichotomyFrames};
use crate::error::{LabError, Result};
use crate::linalg::{gaussian_matrix, min_singular_value, random_unit_vector, spectral_norm};

pub const DEFAULT_N_TAIL: usize = 60;

/// Values f(σ^kω) for a contiguous range of offsets k.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitFunction {
    anchor: BasePoint,
    first: i64,
    points: Vec<BasePoint>,
    values: Vec<DVector<f64>>,
}

impl OrbitFunction {
    /// `values[i]` is the value at σ^{first+i}ω.
    pub fn from_parts(
        base: &BaseSystem,
        anchor: BasePoint,
        first: i64,
        values: Vec<DVector<f64>>,
    ) -> Self {
        let points = base.orbit(&anchor, first, values.len());
        OrbitFunction {
            anchor,
            first,
            points,
            values,
        }
    }

    pub fn from_fn<F>(base: &BaseSystem, anchor: BasePoint, lo: i64, hi: i64, mut f: F) -> Self
    where
        F: FnMut(i64, &BasePoint) -> DVector<f64>,
    {
        assert!(hi >= lo, "empty orbit window");
        let points = base.orbit(&anchor, lo, (hi - lo + 1) as usize);
        let values = points.iter().zip(lo..=hi).map(|(p, k)| f(k, p)).collect();
        OrbitFunction {
            anchor,
            first: lo,
            points,
            values,
        }
    }

    pub fn zeros(base: &BaseSystem, anchor: BasePoint, lo: i64, hi: i64, dim: usize) -> Self {
        OrbitFunction::from_fn(base, anchor, lo, hi, |_, _| DVector::zeros(dim))
    }

    pub fn anchor(&self) -> &BasePoint {
        &self.anchor
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first_offset(&self) -> i64 {
        self.first
    }

    pub fn last_offset(&self) -> i64 {
        self.first + self.values.len() as i64 - 1
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn points(&self) -> &[BasePoint] {
        &self.points
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value_at(&self, k: i64) -> Option<&DVector<f64>> {
        if k < self.first {
            return None;
        }
        self.values.get((k - self.first) as usize)
    }

    pub fn point_at(&self, k: i64) -> Option<&BasePoint> {
        if k < self.first {
            return None;
        }
        self.points.get((k - self.first) as usize)
    }

    /// Value at offset k, zero outside the window.
    pub fn value_or_zero(&self, k: i64) -> DVector<f64> {
        self.value_at(k)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.dim()))
    }

    /// Restriction to [lo, hi] (clipped to the window).
    pub fn restrict(&self, lo: i64, hi: i64) -> OrbitFunction {
        let lo = lo.max(self.first);
        let hi = hi.min(self.last_offset());
        let a = (lo - self.first) as usize;
        let b = (hi - self.first) as usize;
        OrbitFunction {
            anchor: self.anchor,
            first: lo,
            points: self.points[a..=b].to_vec(),
            values: self.values[a..=b].to_vec(),
        }
    }

    /// α·self + β·other on the common window.
    pub fn combine(&self, alpha: f64, other: &OrbitFunction, beta: f64) -> OrbitFunction {
        let lo = self.first.max(other.first);
        let hi = self.last_offset().min(other.last_offset());
        let a = self.restrict(lo, hi);
        let values = (lo..=hi)
            .map(|k| self.value_at(k).unwrap() * alpha + other.value_at(k).unwrap() * beta)
            .collect();
        OrbitFunction { values, ..a }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

type WeightFn = dyn Fn(&BaseSystem, &BasePoint) -> f64 + Send + Sync;

/// A positive weight C: Ω → (0, ∞).
#[derive(Clone)]
pub struct WeightModel {
    descriptor: String,
    tempered: bool,
    rule: Arc<WeightFn>,
}

impl fmt::Debug for WeightModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WeightModel({})", self.descriptor)
    }
}

impl WeightModel {
    pub fn new<F>(descriptor: impl Into<String>, tempered: bool, rule: F) -> Self
    where
        F: Fn(&BaseSystem, &BasePoint) -> f64 + Send + Sync + 'static,
    {
        WeightModel {
            descriptor: descriptor.into(),
            tempered,
            rule: Arc::new(rule),
        }
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(LabError::InvalidParameter("weight must be positive".into()));
        }
        Ok(WeightModel::new(format!("C ≡ {c}"), true, move |_, _| c))
    }

    pub fn unit() -> Self {
        WeightModel::constant(1.0).expect("1 is positive")
    }

    /// Weight known only at tabulated points (for instance K along an orbit).
    pub fn tabulated(descriptor: impl Into<String>, table: HashMap<BasePoint, f64>) -> Self {
        let table = Arc::new(table);
        WeightModel::new(descriptor, true, move |_, p| {
            *table
                .get(p)
                .unwrap_or_else(|| panic!("weight not tabulated at {p}"))
        })
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn is_tempered(&self) -> bool {
        self.tempered
    }

    pub fn eval(&self, base: &BaseSystem, p: &BasePoint) -> f64 {
        (self.rule)(base, p)
    }

    pub fn along(&self, base: &BaseSystem, f: &OrbitFunction) -> Vec<f64> {
        f.points().iter().map(|p| self.eval(base, p)).collect()
    }
}

/// max_k C(σ^kω)‖f(σ^kω)‖ over the window (C ≡ 1 when `weight` is `None`).
pub fn weighted_norm(base: &BaseSystem, f: &OrbitFunction, weight: Option<&WeightModel>) -> f64 {
    match weight {
        None => f.sup_norm(),
        Some(w) => f
            .points()
            .iter()
            .zip(f.values())
            .fold(0.0_f64, |a, (p, v)| a.max(w.eval(base, p) * v.norm())),
    }
}

/// Weighted norm with explicit per-point weights.
pub fn weighted_norm_with(f: &OrbitFunction, weights: &[f64]) -> f64 {
    assert_eq!(weights.len(), f.len());
    f.values()
        .iter()
        .zip(weights)
        .fold(0.0_f64, |a, (v, w)| a.max(w * v.norm()))
}

/// max_j K(j)e^{−ε|j−k|} over all samples j, for every k.
pub(crate) fn envelope_all(k: &[f64], epsilon: f64) -> Vec<f64> {
    let decay = (-epsilon).exp();
    let mut left = k.to_vec();
    for i in 1..left.len() {
        left[i] = left[i].max(left[i - 1] * decay);
    }
    let mut right = k.to_vec();
    for i in (0..right.len().saturating_sub(1)).rev() {
        right[i] = right[i].max(right[i + 1] * decay);
    }
    left.iter().zip(&right).map(|(a, b)| a.max(*b)).collect()
}

/// Precomputed projections and restricted inverses for repeated solves on
/// the output window [lo, hi] with truncation `n_tail`.
#[derive(Clone, Debug)]
pub struct GreenSolver {
    frames: DichotomyFrames,
    lo: i64,
    hi: i64,
    n_tail: usize,
    lambda: f64,
    k_env: Vec<f64>,
}

impl GreenSolver {
    pub fn new(
        cert: &DichotomyCertificate,
        anchor: &BasePoint,
        lo: i64,
        hi: i64,
        n_tail: usize,
    ) -> Result<Self> {
        if hi < lo {
            return Err(LabError::InvalidParameter("empty output window".into()));
        }
        let n = n_tail as i64;
        let frames = cert.frames_along(anchor, lo - n - 1, hi + n + 1)?;
        let ks = cert.k_along(anchor, lo - n, hi + n)?;
        let env = envelope_all(&ks, cert.lambda / 3.0);
        let k_env = env[n_tail..n_tail + (hi - lo + 1) as usize].to_vec();
        Ok(GreenSolver {
            frames,
            lo,
            hi,
            n_tail,
            lambda: cert.lambda,
            k_env,
        })
    }

    pub fn output_range(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn n_tail(&self) -> usize {
        self.n_tail
    }

    /// K_{λ/3} on the output window.
    pub fn k_envelope(&self) -> &[f64] {
        &self.k_env
    }

    pub fn frames(&self) -> &DichotomyFrames {
        &self.frames
    }

    /// f at output offset k from g given as a lookup (zero where absent).
    fn solve_at<G>(&self, k: i64, g: &G) -> DVector<f64>
    where
        G: Fn(i64) -> DVector<f64>,
    {
        let n = self.n_tail as i64;
        let fr = &self.frames;
        let mut acc = fr.projection_stable(k - n) * g(k - n);
        for m in (k - n + 1)..=k {
            let ps = fr.projection_stable(m);
            acc = ps * (fr.generator(m - 1) * acc + g(m));
        }
        if n == 0 || fr.unstable_dim() == 0 {
            return acc;
        }
        let mut up = fr.projection_unstable(k + n) * g(k + n);
        for m in ((k + 1)..(k + n)).rev() {
            up = fr.restricted_inverse(m) * up + fr.projection_unstable(m) * g(m);
        }
        acc - fr.restricted_inverse(k) * up
    }

    /// Green series on the output window; `g` must cover [lo − n_tail, hi + n_tail]
    /// or is treated as zero outside its window.
    pub fn solve(&self, base: &BaseSystem, g: &OrbitFunction) -> OrbitFunction {
        let lookup = |k: i64| g.value_or_zero(k);
        let values = (self.lo..=self.hi)
            .map(|k| self.solve_at(k, &lookup))
            .collect();
        OrbitFunction::from_parts(base, *self.frames.frames().anchor(), self.lo, values)
    }

    /// Truncation bound 2K_ε(ω̂)‖g‖_∞e^{−(2λ/3)(N+1)}/(1 − e^{−2λ/3}) per output point.
    pub fn tail_bounds(&self, g_sup: f64) -> Vec<f64> {
        let r = 2.0 * self.lambda / 3.0;
        let factor = 2.0 * g_sup * (-r * (self.n_tail as f64 + 1.0)).exp() / (1.0 - (-r).exp());
        self.k_env.iter().map(|k| k * factor).collect()
    }
}

#[derive(Clone, Debug)]
pub struct GreenSolution {
    pub f: OrbitFunction,
    pub tail_bounds: Vec<f64>,
    pub max_tail_bound: f64,
    pub n_tail: usize,
}

/// Green series on the window of `g` shrunk by `n_tail` on each side.
pub fn green_solve(
    cert: &DichotomyCertificate,
    g: &OrbitFunction,
    n_tail: usize,
    tol: Option<f64>,
) -> Result<GreenSolution> {
    let n = n_tail as i64;
    let lo = g.first_offset() + n;
    let hi = g.last_offset() - n;
    if hi < lo {
        return Err(LabError::InvalidParameter(format!(
            "input window of {} points is too short for n_tail = {n_tail}",
            g.len()
        )));
    }
    let solver = GreenSolver::new(cert, g.anchor(), lo, hi, n_tail)?;
    let tail_bounds = solver.tail_bounds(g.sup_norm());
    let max_tail_bound = tail_bounds.iter().fold(0.0_f64, |a, &b| a.max(b));
    if let Some(tol) = tol {
        if max_tail_bound > tol {
            return Err(LabError::TailTooLarge {
                bound: max_tail_bound,
                tol,
            });
        }
    }
    Ok(GreenSolution {
        f: solver.solve(cert.base(), g),
        tail_bounds,
        max_tail_bound,
        n_tail,
    })
}

/// max_k ‖f(σ^kω) − A(σ^{k−1}ω)f(σ^{k−1}ω) − g(σ^kω)‖ over offsets k where
/// f is known at k and k − 1 and g at k.
pub fn residual(c: &Cocycle, base: &BaseSystem, f: &OrbitFunction, g: &OrbitFunction) -> f64 {
    let lo = (f.first_offset() + 1).max(g.first_offset());
    let hi = f.last_offset().min(g.last_offset());
    let mut worst = 0.0_f64;
    for k in lo..=hi {
        let prev = f.point_at(k - 1).unwrap();
        let r = f.value_at(k).unwrap()
            - c.generator(base, prev) * f.value_at(k - 1).unwrap()
            - g.value_at(k).unwrap();
        worst = worst.max(r.norm());
    }
    worst
}

/// Exact solution of f(ω_k) − A(ω_{k−1})f(ω_{k−1}) = g(ω_k) (indices mod p)
/// on the orbit ω_k = σ^k(state 0) of a periodic base, by a dense solve.
pub fn oracle_solve_periodic(
    c: &Cocycle,
    base: &BaseSystem,
    g: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let p = match base {
        BaseSystem::Periodic { period, .. } => *period,
        _ => {
            return Err(LabError::InvalidParameter(
                "the dense oracle needs a periodic base".into(),
            ))
        }
    };
    if g.len() != p {
        return Err(LabError::InvalidParameter(format!(
            "need {p} values, got {}",
            g.len()
        )));
    }
    let d = c.dim();
    let pts = base.orbit(&BasePoint::periodic(0), 0, p);
    let n = p * d;
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for k in 0..p {
        let prev = (k + p - 1) % p;
        let a = c.generator(base, &pts[prev]);
        for i in 0..d {
            for j in 0..d {
                m[(k * d + i, prev * d + j)] -= a[(i, j)];
            }
            rhs[k * d + i] = g[k][i];
        }
    }
    let smin = min_singular_value(&m);
    if smin <= 1e-10 * spectral_norm(&m).max(1.0) {
        return Err(LabError::SingularSystem(smin));
    }
    let sol = m.lu().solve(&rhs).ok_or(LabError::SingularSystem(smin))?;
    Ok((0..p)
        .map(|k| DVector::from_fn(d, |i, _| sol[k * d + i]))
        .collect())
}

/// Floquet exponents (1/p)·log|μ| of the period product from state 0, descending.
pub fn floquet_exponents(c: &Cocycle, base: &BaseSystem) -> Result<Vec<f64>> {
    let p = match base {
        BaseSystem::Periodic { period, .. } => *period,
        _ => {
            return Err(LabError::InvalidParameter(
                "Floquet exponents need a periodic base".into(),
            ))
        }
    };
    let m = c.evolve(base, &BasePoint::periodic(0), p).value;
    let mut ex: Vec<f64> = m
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm().ln() / p as f64)
        .collect();
    ex.sort_by(|a, b| b.total_cmp(a));
    Ok(ex)
}

/// A random periodic base with a generator table whose Floquet exponents
/// all satisfy |λ| ≥ `min_exponent`.
#[derive(Clone, Debug)]
pub struct PeriodicInstance {
    pub base: BaseSystem,
    pub cocycle: Cocycle,
    pub floquet: Vec<f64>,
}

pub fn random_periodic_instance<R: Rng + ?Sized>(
    rng: &mut R,
    max_period: usize,
    max_dim: usize,
    min_exponent: f64,
) -> Result<PeriodicInstance> {
    if max_period == 0 || max_dim == 0 {
        return Err(LabError::InvalidParameter(
            "period and dimension bounds must be positive".into(),
        ));
    }
    for _ in 0..10_000 {
        let p = rng.random_range(1..=max_period);
        let d = rng.random_range(1..=max_dim);
        let table: Vec<DMatrix<f64>> = (0..p).map(|_| gaussian_matrix(rng, d, d)).collect();
        let base = BaseSystem::periodic(p)?;
        let cocycle = Cocycle::from_table(table, format!("random periodic p={p} d={d}"))?;
        let floquet = floquet_exponents(&cocycle, &base)?;
        if floquet
            .iter()
            .all(|l| l.abs() >= min_exponent && l.is_finite())
        {
            return Ok(PeriodicInstance {
                base,
                cocycle,
                floquet,
            });
        }
    }
    Err(LabError::InvalidParameter(format!(
        "no instance with |λ| ≥ {min_exponent} in 10000 draws"
    )))
}

/// max |green_solve − oracle| over one period for a random periodic input.
pub fn compare_with_oracle<R: Rng + ?Sized>(
    inst: &PeriodicInstance,
    rng: &mut R,
    n_tail: usize,
    spectrum_steps: usize,
    options: &crate::dichotomy::CertificateOptions,
) -> Result<f64> {
    let base = &inst.base;
    let c = &inst.cocycle;
    let p = match base {
        BaseSystem::Periodic { period, .. } => *period,
        _ => unreachable!("instances are periodic"),
    };
    let start = BasePoint::periodic(0);
    let spectrum = crate::met::lyapunov_exponents(c, base, &start, spectrum_steps, 10, 0.02)?;
    let cert = crate::dichotomy::build_certificate(c, base, &spectrum, &[start], options)?;
    let gv: Vec<DVector<f64>> = (0..p)
        .map(|_| DVector::from_column_slice(gaussian_matrix(rng, c.dim(), 1).as_slice()))
        .collect();
    let n = n_tail as i64;
    let g = OrbitFunction::from_fn(base, start, -n, p as i64 - 1 + n, |k, _| {
        gv[k.rem_euclid(p as i64) as usize].clone()
    });
    let sol = green_solve(&cert, &g, n_tail, None)?;
    let oracle = oracle_solve_periodic(c, base, &gv)?;
    Ok((0..p)
        .map(|k| (sol.f.value_at(k as i64).unwrap() - &oracle[k]).amax())
        .fold(0.0_f64, f64::max))
}

/// Which side of the pair carries the weight.
///
/// Bound probe: C = K on the input, or 1/K_{λ/3} on the output.
/// Witness: F = {C ≤ M} with target (L+1)M, or F = {C ≥ M} with (L+1)/M.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PairOrientation {
    #[default]
    WeightedInput,
    WeightedOutput,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundProbe {
    pub orientation: PairOrientation,
    pub empirical: f64,
    pub analytic: f64,
    pub trials: usize,
    pub window: usize,
    pub n_tail: usize,
}

/// Empirical operator norm of the solution map between the weighted pair,
/// over random inputs normalised to unit input norm. Even-numbered trials
/// hold one random direction along the whole orbit; odd ones draw i.i.d.
/// directions per point.
pub fn bound_probe<R: Rng + ?Sized>(
    cert: &DichotomyCertificate,
    anchor: &BasePoint,
    orientation: PairOrientation,
    trials: usize,
    window: usize,
    n_tail: usize,
    rng: &mut R,
) -> Result<BoundProbe> {
    let w = window as i64;
    let n = n_tail as i64;
    let base = cert.base();
    let solver = GreenSolver::new(cert, anchor, -w, w, n_tail)?;
    let (in_weight, out_weight, analytic) = match orientation {
        PairOrientation::WeightedInput => (
            cert.k_along(anchor, -w - n, w + n)?,
            vec![1.0; 2 * window + 1],
            green_constant(cert.lambda),
        ),
        PairOrientation::WeightedOutput => (
            vec![1.0; 2 * (window + n_tail) + 1],
            solver.k_envelope().iter().map(|k| 1.0 / k).collect(),
            green_constant(2.0 * cert.lambda / 3.0),
        ),
    };
    let d = cert.dim;
    let mut best = 0.0_f64;
    let mut used = 0;
    for t in 0..trials {
        let fixed = random_unit_vector(rng, d);
        let g = OrbitFunction::from_fn(base, *anchor, -w - n, w + n, |k, _| {
            let u = if t % 2 == 0 {
                fixed.clone()
            } else {
                random_unit_vector(rng, d)
            };
            u / in_weight[(k + w + n) as usize]
        });
        let g_norm = weighted_norm_with(&g, &in_weight);
        if g_norm == 0.0 {
            continue;
        }
        let f = solver.solve(base, &g);
        let ratio = weighted_norm_with(&f, &out_weight) / g_norm;
        best = best.max(ratio);
        used += 1;
    }
    Ok(BoundProbe {
        orientation,
        empirical: best,
        analytic,
        trials: used,
        window,
        n_tail,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    /// ‖𝒜(σ^{−n}ω, n)Π^s(σ^{−n}ω)‖ for n = 0..=window.
    pub stable_decay: Vec<f64>,
    /// ‖𝒜(σ^nω, −n)Π^u(σ^nω)‖ for n = 0..=window.
    pub unstable_decay: Vec<f64>,
    /// K_{λ/3}(ω)e^{−λn/2}.
    pub envelope_bound: Vec<f64>,
    pub final_stable: f64,
    pub final_unstable: f64,
    pub window: usize,
    pub tolerance: f64,
}

/// Propagates the stable part forward from σ^{−n}ω and the unstable part
/// backward from σ^nω; both must fall below `tolerance` by n = `window`.
pub fn uniqueness_probe(
    cert: &DichotomyCertificate,
    omega: &BasePoint,
    window: usize,
    tolerance: f64,
) -> Result<UniquenessReport> {
    let w = window as i64;
    let fr = cert.frames_along(omega, -w - 1, w + 1)?;
    let mut stable = Vec::with_capacity(window + 1);
    let mut unstable = Vec::with_capacity(window + 1);
    let mut worst_s = (0.0, 0usize);
    let mut worst_u = (0.0, 0usize);
    for n in 0..=w {
        let mut m = fr.projection_stable(-n).clone();
        for j in -n..0 {
            m = fr.projection_stable(j + 1) * (fr.generator(j) * m);
        }
        stable.push(spectral_norm(&m));
        if n == w {
            worst_s = column_witness(&m);
        }
        let mut u = fr.projection_unstable(n);
        for j in (0..n).rev() {
            u = fr.restricted_inverse(j) * u;
        }
        unstable.push(spectral_norm(&u));
        if n == w {
            worst_u = column_witness(&u);
        }
    }
    let k_env = {
        let m = cert.n_max as i64;
        let ks = cert.k_along(omega, -m, m)?;
        envelope_all(&ks, cert.lambda / 3.0)[cert.n_max]
    };
    let envelope_bound = (0..=window)
        .map(|n| k_env * (-cert.lambda * n as f64 / 2.0).exp())
        .collect();
    let report = UniquenessReport {
        final_stable: *stable.last().unwrap(),
        final_unstable: *unstable.last().unwrap(),
        stable_decay: stable,
        unstable_decay: unstable,
        envelope_bound,
        window,
        tolerance,
    };
    if report.final_stable > tolerance {
        return Err(LabError::NoDecay {
            residual: report.final_stable,
            direction: worst_s.1,
        });
    }
    if report.final_unstable > tolerance {
        return Err(LabError::NoDecay {
            residual: report.final_unstable,
            direction: worst_u.1,
        });
    }
    Ok(report)
}

fn column_witness(m: &DMatrix<f64>) -> (f64, usize) {
    let mut best = (0.0, 0);
    for j in 0..m.ncols() {
        let n = m.column(j).norm();
        if n > best.0 {
            best = (n, j);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dichotomy::{build_certificate, CertificateOptions};
    use crate::met::lyapunov_exponents;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cert_for(
        c: &Cocycle,
        base: &BaseSystem,
        p: &BasePoint,
        safety: f64,
    ) -> DichotomyCertificate {
        let s = lyapunov_exponents(c, base, p, 2000, 10, 0.02).unwrap();
        let opts = CertificateOptions {
            safety,
            ..CertificateOptions::default()
        };
        build_certificate(c, base, &s, &[*p], &opts).unwrap()
    }

    fn ones(base: &BaseSystem, p: BasePoint, lo: i64, hi: i64) -> OrbitFunction {
        OrbitFunction::from_fn(base, p, lo, hi, |_, _| DVector::from_element(1, 1.0))
    }

    #[test]
    fn weighted_norm_examples() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.3);
        let zero = OrbitFunction::zeros(&base, p, -5, 5, 2);
        assert_eq!(weighted_norm(&base, &zero, None), 0.0);
        let e1 = OrbitFunction::from_fn(&base, p, -5, 5, |_, _| DVector::from_vec(vec![1.0, 0.0]));
        let three = WeightModel::constant(3.0).unwrap();
        assert_eq!(weighted_norm(&base, &e1, Some(&three)), 3.0);
        let decay = OrbitFunction::from_fn(&base, p, -5, 5, |k, _| {
            DVector::from_vec(vec![(-(k.abs() as f64)).exp(), 0.0])
        });
        assert_eq!(weighted_norm(&base, &decay, None), 1.0);
    }

    #[test]
    fn scalar_geometric_series() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.3);
        let half = Cocycle::diagonal(&[0.5]).unwrap();
        let cert = cert_for(&half, &base, &p, 0.25);
        let g = ones(&base, p, -70, 70);
        let sol = green_solve(&cert, &g, 60, None).unwrap();
        for v in sol.f.values() {
            assert!((v[0] - 2.0).abs() <= 2f64.powi(-59));
        }
        let two = Cocycle::diagonal(&[2.0]).unwrap();
        let cert = cert_for(&two, &base, &p, 0.25);
        let sol = green_solve(&cert, &g, 60, None).unwrap();
        for v in sol.f.values() {
            assert!((v[0] + 1.0).abs() <= 2f64.powi(-59));
        }
        assert!(residual(&two, &base, &sol.f, &g) <= 1e-12);
    }

    #[test]
    fn tail_tolerance_is_enforced() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.3);
        let half = Cocycle::diagonal(&[0.5]).unwrap();
        let cert = cert_for(&half, &base, &p, 0.25);
        let g = ones(&base, p, -12, 12);
        let e = green_solve(&cert, &g, 5, Some(1e-12)).unwrap_err();
        assert_eq!(e.name(), "TailTooLarge");
    }

    #[test]
    fn residual_trivial_cases() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.3);
        let id = Cocycle::diagonal(&[1.0, 1.0]).unwrap();
        let z = OrbitFunction::zeros(&base, p, -3, 3, 2);
        assert_eq!(residual(&id, &base, &z, &z), 0.0);
        let e1 = OrbitFunction::from_fn(&base, p, -3, 3, |_, _| DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(residual(&id, &base, &e1, &z), 0.0);
    }

    #[test]
    fn periodic_oracle_cases() {
        let p1 = BaseSystem::periodic(1).unwrap();
        let half = Cocycle::diagonal(&[0.5]).unwrap();
        let f = oracle_solve_periodic(&half, &p1, &[DVector::from_element(1, 1.0)]).unwrap();
        assert!((f[0][0] - 2.0).abs() < 1e-14);
        let e = oracle_solve_periodic(&Cocycle::shear(), &p1, &[DVector::from_vec(vec![0.0, 1.0])])
            .unwrap_err();
        assert_eq!(e.name(), "SingularSystem");
        // diag(3,1/3) then diag(1/3,3): the period product is the identity,
        // so every Floquet multiplier is 1.
        let p2 = BaseSystem::periodic(2).unwrap();
        let alt = Cocycle::from_table(
            vec![
                DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0 / 3.0]),
                DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 0.0, 0.0, 3.0]),
            ],
            "alternating",
        )
        .unwrap();
        let g = vec![DVector::from_vec(vec![1.0, 0.0]); 2];
        assert_eq!(
            oracle_solve_periodic(&alt, &p2, &g).unwrap_err().name(),
            "SingularSystem"
        );
    }

    #[test]
    fn periodic_green_matches_oracle() {
        let base = BaseSystem::periodic(3).unwrap();
        let p = BasePoint::periodic(0);
        let c = Cocycle::diagonal(&[2.0, 0.5]).unwrap();
        let cert = cert_for(&c, &base, &p, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gv: Vec<DVector<f64>> = (0..3).map(|_| random_unit_vector(&mut rng, 2)).collect();
        let g = OrbitFunction::from_fn(&base, p, -80, 82, |k, _| {
            gv[k.rem_euclid(3) as usize].clone()
        });
        let sol = green_solve(&cert, &g, 80, None).unwrap();
        let oracle = oracle_solve_periodic(&c, &base, &gv).unwrap();
        for k in 0..3 {
            assert!((sol.f.value_at(k).unwrap() - &oracle[k as usize]).amax() < 1e-8);
        }
    }

    #[test]
    fn scalar_bound_probe() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.3);
        let half = Cocycle::diagonal(&[0.5]).unwrap();
        let cert = cert_for(&half, &base, &p, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let probe = bound_probe(
            &cert,
            &p,
            PairOrientation::WeightedInput,
            10,
            5,
            60,
            &mut rng,
        )
        .unwrap();
        assert!((probe.analytic - 3.0).abs() < 1e-12);
        assert!((probe.empirical - 2.0).abs() < 1e-12);
    }

    #[test]
    fn uniqueness_decay() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.3);
        let c = Cocycle::diagonal(&[2.0, 0.5]).unwrap();
        let cert = cert_for(&c, &base, &p, 0.25);
        let r = uniqueness_probe(&cert, &p, 60, 1e-6).unwrap();
        assert!(r.final_stable <= 2f64.powi(-60) * (1.0 + 1e-12));
        assert!(r.final_unstable <= 2f64.powi(-60) * (1.0 + 1e-12));
    }
}
