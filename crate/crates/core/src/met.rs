//! Numerical multiplicative ergodic theorem: QR (Benettin) exponents,
//! per-vector exponents and Oseledets splittings from flag sweeps.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::base::{BasePoint, BaseSystem};
use crate::cocycle::Cocycle;
use crate::error::{LabError, Result};
use crate::linalg::{gaussian_matrix, orthogonal_complement, qr_positive, subspace_distance};

pub const DEFAULT_REORTH: usize = 10;
pub const DEFAULT_GAP_TOL: f64 = 0.02;
/// Exponents below this are reported as effectively −∞.
pub const MINUS_INFINITY_THRESHOLD: f64 = -20.0;
/// Minimum transversality between complementary filtrations.
pub const TRANSVERSALITY_TOL: f64 = 1e-8;

const BATCHES: usize = 10;
const TRAJECTORY_POINTS: usize = 200;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LyapunovSpectrum {
    /// Distinct exponents, decreasing, after gap merging.
    pub exponents: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub stderr: Vec<f64>,
    pub steps: usize,
    /// Per-direction estimates before merging, decreasing.
    pub raw: Vec<f64>,
    /// Running estimate of the top exponent: (step, value).
    pub trajectory: Vec<(usize, f64)>,
}

impl LyapunovSpectrum {
    pub fn dim(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    pub fn effectively_minus_infinity(&self) -> Vec<bool> {
        self.exponents
            .iter()
            .map(|&l| l < MINUS_INFINITY_THRESHOLD)
            .collect()
    }

    pub fn min_abs(&self) -> f64 {
        self.exponents
            .iter()
            .fold(f64::INFINITY, |a, &l| a.min(l.abs()))
    }

    /// Dimension of the sum of Oseledets spaces with negative exponent.
    pub fn stable_dim(&self) -> usize {
        self.exponents
            .iter()
            .zip(&self.multiplicities)
            .filter(|(l, _)| **l < 0.0)
            .map(|(_, m)| m)
            .sum()
    }

    pub fn unstable_dim(&self) -> usize {
        self.dim() - self.stable_dim()
    }

    /// Smallest gap between consecutive distinct exponents (∞ if only one).
    pub fn min_gap(&self) -> f64 {
        self.exponents
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min)
    }

    /// Σ mᵢλᵢ.
    pub fn trace(&self) -> f64 {
        self.raw.iter().sum()
    }

    /// Cumulative dimensions e_i = m₁ + … + m_i.
    pub fn cumulative_dims(&self) -> Vec<usize> {
        self.multiplicities
            .iter()
            .scan(0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }

    /// Splitting window with e^{gap·W} well above 1e6; at least 20.
    pub fn default_window(&self) -> usize {
        let gap = self.min_gap().min(self.min_abs().max(1e-3) * 2.0);
        if gap.is_finite() {
            ((32.0 / gap).ceil() as usize).clamp(20, 20_000)
        } else {
            20
        }
    }

    /// The same exponents re-merged with a different tolerance.
    pub fn remerge(&self, gap_tol: f64) -> LyapunovSpectrum {
        let stderr_raw = self.expand_stderr();
        let (exponents, multiplicities, stderr) = merge(&self.raw, &stderr_raw, gap_tol);
        LyapunovSpectrum {
            exponents,
            multiplicities,
            stderr,
            ..self.clone()
        }
    }

    fn expand_stderr(&self) -> Vec<f64> {
        self.stderr
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(s, &m)| std::iter::repeat_n(*s, m))
            .collect()
    }
}

fn merge(raw: &[f64], stderr: &[f64], gap_tol: f64) -> (Vec<f64>, Vec<usize>, Vec<f64>) {
    let mut exps = Vec::new();
    let mut mults = Vec::new();
    let mut errs = Vec::new();
    let mut i = 0;
    while i < raw.len() {
        let mut j = i + 1;
        while j < raw.len() && raw[j - 1] - raw[j] < gap_tol {
            j += 1;
        }
        let group = &raw[i..j];
        exps.push(group.iter().sum::<f64>() / group.len() as f64);
        mults.push(j - i);
        errs.push(stderr[i..j].iter().fold(0.0_f64, |a, &b| a.max(b)));
        i = j;
    }
    (exps, mults, errs)
}

/// QR deflation over an arbitrary stream of generators.
///
/// The frame starts at the identity and is re-orthonormalised every
/// `reorth` steps; R_ii = 0 is floored at 1e-300.
pub fn spectrum_from_generators<I>(
    dim: usize,
    generators: I,
    steps: usize,
    reorth: usize,
    gap_tol: f64,
) -> Result<LyapunovSpectrum>
where
    I: IntoIterator<Item = DMatrix<f64>>,
{
    if steps < 100 {
        return Err(LabError::InvalidParameter("need at least 100 steps".into()));
    }
    if reorth == 0 {
        return Err(LabError::InvalidParameter(
            "reorth period must be positive".into(),
        ));
    }
    if !(gap_tol > 0.0) {
        return Err(LabError::InvalidParameter(
            "gap_tol must be positive".into(),
        ));
    }
    let mut frame = DMatrix::<f64>::identity(dim, dim);
    let mut totals = vec![0.0_f64; dim];
    let mut batch_sums = vec![vec![0.0_f64; dim]; BATCHES];
    let mut batch_len = [0usize; BATCHES];
    let mut trajectory = Vec::new();
    let traj_every = (steps / TRAJECTORY_POINTS).max(reorth);
    let mut next_traj = traj_every;

    let mut gens = generators.into_iter();
    let mut done = 0;
    while done < steps {
        let block = reorth.min(steps - done);
        for _ in 0..block {
            let a = gens
                .next()
                .ok_or_else(|| LabError::InvalidParameter("generator stream ended early".into()))?;
            frame = a * frame;
        }
        let batch = (done * BATCHES / steps).min(BATCHES - 1);
        let (q, r) = qr_positive(frame);
        for i in 0..dim {
            let rii = r[(i, i)];
            if !rii.is_finite() {
                return Err(LabError::Degenerate { step: done + block });
            }
            let l = rii.max(1e-300).ln();
            totals[i] += l;
            batch_sums[batch][i] += l;
        }
        batch_len[batch] += block;
        frame = q;
        done += block;
        if done >= next_traj || done == steps {
            let top = totals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            trajectory.push((done, top / done as f64));
            next_traj += traj_every;
        }
    }

    let n = steps as f64;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]));
    let raw: Vec<f64> = order.iter().map(|&i| totals[i] / n).collect();
    let stderr_raw: Vec<f64> = order
        .iter()
        .map(|&i| {
            let means: Vec<f64> = (0..BATCHES)
                .filter(|&b| batch_len[b] > 0)
                .map(|b| batch_sums[b][i] / batch_len[b] as f64)
                .collect();
            let k = means.len() as f64;
            if k < 2.0 {
                return 0.0;
            }
            let mu = means.iter().sum::<f64>() / k;
            let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        })
        .collect();
    let (exponents, multiplicities, stderr) = merge(&raw, &stderr_raw, gap_tol);
    Ok(LyapunovSpectrum {
        exponents,
        multiplicities,
        stderr,
        steps,
        raw,
        trajectory,
    })
}

/// Generators A(ω), A(σω), A(σ²ω), … as an iterator.
pub fn generator_stream<'a>(
    c: &'a Cocycle,
    base: &'a BaseSystem,
    omega: &BasePoint,
) -> impl Iterator<Item = DMatrix<f64>> + 'a {
    let mut p = *omega;
    std::iter::from_fn(move || {
        let a = c.generator(base, &p);
        p = base.step(&p, 1);
        Some(a)
    })
}

pub fn lyapunov_exponents(
    c: &Cocycle,
    base: &BaseSystem,
    omega: &BasePoint,
    steps: usize,
    reorth: usize,
    gap_tol: f64,
) -> Result<LyapunovSpectrum> {
    spectrum_from_generators(
        c.dim(),
        generator_stream(c, base, omega),
        steps,
        reorth,
        gap_tol,
    )
}

/// (1/n) log‖𝒜(ω,n)v‖, accumulated in log scale.
pub fn vector_exponent(
    c: &Cocycle,
    base: &BaseSystem,
    omega: &BasePoint,
    v: &DVector<f64>,
    steps: usize,
) -> Result<f64> {
    let norm = v.norm();
    if !(norm > 0.0) {
        return Err(LabError::InvalidParameter("vector must be nonzero".into()));
    }
    if steps == 0 {
        return Err(LabError::InvalidParameter("steps must be positive".into()));
    }
    let mut w = v / norm;
    let mut log_growth = 0.0;
    let mut p = *omega;
    for _ in 0..steps {
        w = c.generator(base, &p) * w;
        let s = w.norm();
        if s == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_growth += s.ln();
        w /= s;
        p = base.step(&p, 1);
    }
    Ok(log_growth / steps as f64)
}

/// A fixed, generic orthonormal start frame for the flag sweeps.
fn start_frame(dim: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_F1A6 ^ dim as u64);
    qr_positive(gaussian_matrix(&mut rng, dim, dim)).0
}

/// Forward and adjoint QR frames along a stretch of orbit.
///
/// At offset k the first e columns of the forward frame span the fastest
/// e-dimensional equivariant subspace (E₁ ⊕ … ⊕ E_i when e = e_i); the first
/// e columns of the adjoint frame span the orthogonal complement of the
/// slowest (d − e)-dimensional filtration space.
#[derive(Clone, Debug)]
pub struct OrbitFrames {
    anchor: BasePoint,
    lo: i64,
    points: Vec<BasePoint>,
    generators: Vec<DMatrix<f64>>,
    forward: Vec<DMatrix<f64>>,
    adjoint: Vec<DMatrix<f64>>,
}

impl OrbitFrames {
    /// Frames at σ^k ω for lo ≤ k ≤ hi, each sweep run over `window`
    /// extra steps.
    pub fn compute(
        c: &Cocycle,
        base: &BaseSystem,
        anchor: &BasePoint,
        lo: i64,
        hi: i64,
        window: usize,
    ) -> Result<Self> {
        if hi < lo {
            return Err(LabError::InvalidParameter("empty frame range".into()));
        }
        let d = c.dim();
        let len = (hi - lo + 1) as usize;
        let w = window as i64;
        let points = base.orbit(anchor, lo, len);
        let generators: Vec<DMatrix<f64>> = points.iter().map(|p| c.generator(base, p)).collect();

        let mut forward = Vec::with_capacity(len);
        let mut q = start_frame(d);
        let mut p = base.step(anchor, lo - w);
        for step in 0..(w as usize) {
            let (nq, r) = qr_positive(c.generator(base, &p) * q);
            check_finite(&r, step)?;
            q = nq;
            p = base.step(&p, 1);
        }
        for (i, a) in generators.iter().enumerate() {
            forward.push(q.clone());
            if i + 1 < len {
                let (nq, r) = qr_positive(a * &q);
                check_finite(&r, window + i)?;
                q = nq;
            }
        }

        let mut adjoint = vec![DMatrix::zeros(0, 0); len];
        let mut q = start_frame(d);
        let mut p = base.step(anchor, hi + w);
        for step in 0..(w as usize) {
            p = base.step(&p, -1);
            let (nq, r) = qr_positive(c.generator(base, &p).transpose() * q);
            check_finite(&r, step)?;
            q = nq;
        }
        for i in (0..len).rev() {
            if i + 1 < len {
                let (nq, r) = qr_positive(generators[i].transpose() * &q);
                check_finite(&r, window + len - i)?;
                q = nq;
            }
            adjoint[i] = q.clone();
        }
        Ok(OrbitFrames {
            anchor: *anchor,
            lo,
            points,
            generators,
            forward,
            adjoint,
        })
    }

    pub fn anchor(&self) -> &BasePoint {
        &self.anchor
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.points.len() as i64 - 1
    }

    fn idx(&self, k: i64) -> usize {
        assert!(
            k >= self.lo && k <= self.hi(),
            "offset {k} outside frame range"
        );
        (k - self.lo) as usize
    }

    pub fn point(&self, k: i64) -> &BasePoint {
        &self.points[self.idx(k)]
    }

    pub fn generator(&self, k: i64) -> &DMatrix<f64> {
        &self.generators[self.idx(k)]
    }

    /// Orthonormal basis of the fastest `dim`-dimensional subspace at σ^k ω.
    pub fn fast_flag(&self, k: i64, dim: usize) -> DMatrix<f64> {
        self.forward[self.idx(k)].columns(0, dim).into_owned()
    }

    /// Orthonormal basis of the slowest subspace of codimension `codim`.
    pub fn slow_space(&self, k: i64, codim: usize) -> DMatrix<f64> {
        orthogonal_complement(&self.adjoint[self.idx(k)].columns(0, codim).into_owned())
    }

    /// Oseledets block between cumulative dimensions `prev` < `upto`:
    /// the fast flag of dimension `upto` intersected with the slow space of
    /// codimension `prev`. Returns the basis and the transversality.
    pub fn block(&self, k: i64, prev: usize, upto: usize) -> Result<(DMatrix<f64>, f64)> {
        let d = self.generators[0].nrows();
        if prev == 0 && upto == d {
            return Ok((DMatrix::identity(d, d), 1.0));
        }
        let fast = self.fast_flag(k, upto);
        if prev == 0 {
            return Ok((fast, 1.0));
        }
        let adj = self.adjoint[self.idx(k)].columns(0, prev).into_owned();
        let m = adj.transpose() * &fast;
        let svd = m.svd(false, true);
        let transversality = svd
            .singular_values
            .iter()
            .fold(f64::INFINITY, |a, &s| a.min(s));
        if transversality < TRANSVERSALITY_TOL {
            return Err(LabError::IllConditioned { transversality });
        }
        let row_space = svd.v_t.expect("v_t requested").transpose();
        let coeffs = orthogonal_complement(&row_space);
        Ok((fast * coeffs, transversality))
    }

    /// Stable space at σ^k ω when the top `unstable` directions expand.
    pub fn stable_space(&self, k: i64, unstable: usize) -> DMatrix<f64> {
        self.slow_space(k, unstable)
    }

    pub fn unstable_space(&self, k: i64, unstable: usize) -> DMatrix<f64> {
        self.fast_flag(k, unstable)
    }
}

fn check_finite(r: &DMatrix<f64>, step: usize) -> Result<()> {
    if r.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LabError::Degenerate { step })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OseledetsSplitting {
    pub point: BasePoint,
    pub window: usize,
    pub exponents: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// E_i(ω) as orthonormal columns; empty for non-invertible generators.
    #[serde(skip)]
    pub blocks: Vec<DMatrix<f64>>,
    /// Slow filtration V_i(ω) = E_i ⊕ … ⊕ E_k as orthonormal columns.
    #[serde(skip)]
    pub filtration: Vec<DMatrix<f64>>,
    /// Principal-angle defect between A(ω)E_i(ω) and E_i(σω).
    pub equivariance_defect: Vec<f64>,
    pub transversality: f64,
}

impl OseledetsSplitting {
    /// Index of the block whose exponent is closest to zero.
    pub fn zero_block_index(&self) -> usize {
        let mut best = 0;
        for (i, l) in self.exponents.iter().enumerate() {
            if l.abs() < self.exponents[best].abs() {
                best = i;
            }
        }
        best
    }
}

pub fn oseledets_splitting(
    c: &Cocycle,
    base: &BaseSystem,
    omega: &BasePoint,
    window: usize,
    spectrum: &LyapunovSpectrum,
) -> Result<OseledetsSplitting> {
    if spectrum.dim() != c.dim() {
        return Err(LabError::InvalidParameter(
            "spectrum dimension mismatch".into(),
        ));
    }
    let frames = OrbitFrames::compute(c, base, omega, 0, 1, window)?;
    let cum = spectrum.cumulative_dims();
    let mut filtration = Vec::with_capacity(cum.len());
    let mut prev = 0;
    for &e in &cum {
        filtration.push(frames.slow_space(0, prev));
        prev = e;
    }

    let mut blocks = Vec::new();
    let mut defects = Vec::new();
    let mut transversality = 1.0_f64;
    if c.is_invertible() {
        let mut prev = 0;
        for &e in &cum {
            let (here, t0) = frames.block(0, prev, e)?;
            let (next, t1) = frames.block(1, prev, e)?;
            transversality = transversality.min(t0).min(t1);
            let pushed = frames.generator(0) * &here;
            defects.push(subspace_distance(&pushed, &next));
            blocks.push(here);
            prev = e;
        }
    }
    Ok(OseledetsSplitting {
        point: *omega,
        window,
        exponents: spectrum.exponents.clone(),
        multiplicities: spectrum.multiplicities.clone(),
        blocks,
        filtration,
        equivariance_defect: defects,
        transversality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> (BaseSystem, BasePoint) {
        (BaseSystem::golden_rotation(), BasePoint::rotation(0.25))
    }

    #[test]
    fn diagonal_exponents_exact() {
        let (base, p) = golden();
        let c = Cocycle::diagonal(&[2.0, 0.5]).unwrap();
        let s = lyapunov_exponents(&c, &base, &p, 10_000, 10, 0.02).unwrap();
        assert_eq!(s.multiplicities, vec![1, 1]);
        assert!((s.exponents[0] - 2f64.ln()).abs() < 1e-12);
        assert!((s.exponents[1] + 2f64.ln()).abs() < 1e-12);
        assert_eq!(s.stable_dim(), 1);
    }

    #[test]
    fn shear_merges_to_zero() {
        let (base, p) = golden();
        let s = lyapunov_exponents(&Cocycle::shear(), &base, &p, 10_000, 10, 0.02).unwrap();
        assert_eq!(s.multiplicities, vec![2]);
        assert!(s.exponents[0].abs() <= 5e-3);
    }

    #[test]
    fn zero_entries_are_effectively_minus_infinity() {
        let (base, p) = golden();
        let c = Cocycle::diagonal(&[2.0, 0.0]).unwrap();
        let s = lyapunov_exponents(&c, &base, &p, 1000, 10, 0.02).unwrap();
        assert_eq!(s.effectively_minus_infinity(), vec![false, true]);
    }

    #[test]
    fn rejects_short_runs() {
        let (base, p) = golden();
        let c = Cocycle::shear();
        assert!(lyapunov_exponents(&c, &base, &p, 50, 10, 0.02).is_err());
        assert!(lyapunov_exponents(&c, &base, &p, 500, 10, 0.0).is_err());
    }

    #[test]
    fn vector_exponents_closed_form() {
        let (base, p) = golden();
        let d = Cocycle::diagonal(&[2.0, 0.5]).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        assert!((vector_exponent(&d, &base, &p, &e1, 500).unwrap() - 2f64.ln()).abs() < 1e-9);
        let s = Cocycle::shear();
        assert_eq!(vector_exponent(&s, &base, &p, &e1, 10_000).unwrap(), 0.0);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        let n = 10_000.0_f64;
        let expect = (n * n + 1.0).sqrt().ln() / n;
        assert!((vector_exponent(&s, &base, &p, &e2, 10_000).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn diagonal_splitting_is_coordinate() {
        let (base, p) = golden();
        for c in [
            Cocycle::diagonal(&[2.0, 0.5]).unwrap(),
            Cocycle::diagonal(&[0.5, 2.0]).unwrap(),
            Cocycle::nonuniform_rotation(0.5, 0.3),
        ] {
            let s = lyapunov_exponents(&c, &base, &p, 2000, 10, 0.02).unwrap();
            let sp = oseledets_splitting(&c, &base, &p, s.default_window(), &s).unwrap();
            let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
            let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
            let (fast, slow) = if c.generator(&base, &p)[(0, 0)] > 1.0 {
                (e1, e2)
            } else {
                (e2, e1)
            };
            assert!(
                subspace_distance(&sp.blocks[0], &fast) < 1e-12,
                "{}",
                c.descriptor()
            );
            assert!(subspace_distance(&sp.blocks[1], &slow) < 1e-12);
            assert!(sp.equivariance_defect.iter().all(|&x| x < 1e-12));
        }
    }

    #[test]
    fn full_block_is_identity() {
        let (base, p) = golden();
        let c = Cocycle::shear();
        let s = lyapunov_exponents(&c, &base, &p, 2000, 10, 0.02).unwrap();
        let sp = oseledets_splitting(&c, &base, &p, 20, &s).unwrap();
        assert_eq!(sp.blocks[0], DMatrix::identity(2, 2));
    }

    #[test]
    fn frames_are_equivariant() {
        let base = BaseSystem::bernoulli(vec![0.5, 0.5]).unwrap();
        let p = BasePoint::bernoulli(9);
        let c = Cocycle::random_sl2_default();
        let f = OrbitFrames::compute(&c, &base, &p, -5, 5, 60).unwrap();
        for k in -5..5 {
            let u = f.fast_flag(k, 1);
            let pushed = f.generator(k) * u;
            assert!(subspace_distance(&pushed, &f.fast_flag(k + 1, 1)) < 1e-12);
            let s = f.stable_space(k, 1);
            let pushed = f.generator(k) * s;
            assert!(subspace_distance(&pushed, &f.stable_space(k + 1, 1)) < 1e-9);
        }
    }
}
