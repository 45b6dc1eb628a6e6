//! Zero-exponent machinery: Birkhoff recurrence, recurrent vectors, Mañé
//! sequences, induced cocycles, interpolation to parent time and the
//! tower-supported witness that admissibility fails.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admissibility::{PairOrientation, WeightModel};
use crate::base::{
    birkhoff_sum, mix64, return_times, rokhlin_base, BasePoint, BaseSystem, Observable, Region,
};
use crate::cocycle::Cocycle;
use crate::dichotomy::{classify, Classification};
use crate::error::{LabError, Result};
use crate::linalg::{random_unit_vector, spectral_norm};
use crate::met::{lyapunov_exponents, spectrum_from_generators, LyapunovSpectrum, OrbitFrames};

pub const DEFAULT_GRID_2D: usize = 720;
pub const DEFAULT_GRID_HIGH: usize = 10_000;
/// Search results with a larger defect are rejected.
pub const MAX_DEFECT: f64 = 0.5;

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct BirkhoffExtrema {
    pub min: f64,
    pub max: f64,
    pub horizon: usize,
}

impl BirkhoffExtrema {
    /// min ≤ 0 ≤ max.
    pub fn straddles_zero(&self) -> bool {
        self.min <= 0.0 && self.max >= 0.0
    }
}

/// min and max of S_nφ(ω) over 1 ≤ n ≤ horizon.
pub fn birkhoff_extrema(
    base: &BaseSystem,
    phi: &Observable,
    omega: &BasePoint,
    horizon: usize,
) -> Result<BirkhoffExtrema> {
    if phi.declared_mean() != Some(0.0) {
        return Err(LabError::InvalidParameter(format!(
            "observable {} must declare mean zero",
            phi.name()
        )));
    }
    if horizon == 0 {
        return Err(LabError::InvalidParameter(
            "horizon must be positive".into(),
        ));
    }
    let mut s = 0.0;
    let mut comp = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut p = *omega;
    for _ in 0..horizon {
        // Neumaier summation, as in birkhoff_sum.
        let x = phi.eval(base, &p);
        let t = s + x;
        if s.abs() >= x.abs() {
            comp += (s - t) + x;
        } else {
            comp += (x - t) + s;
        }
        s = t;
        let v = s + comp;
        lo = lo.min(v);
        hi = hi.max(v);
        p = base.step(&p, 1);
    }
    Ok(BirkhoffExtrema {
        min: lo,
        max: hi,
        horizon,
    })
}

/// (n, S_nφ(ω)) every `stride` steps up to `horizon`.
pub fn birkhoff_trajectory(
    base: &BaseSystem,
    phi: &Observable,
    omega: &BasePoint,
    horizon: usize,
    stride: usize,
) -> Vec<(usize, f64)> {
    let stride = stride.max(1);
    let mut out = vec![(0, 0.0)];
    let mut p = *omega;
    let mut done = 0;
    let mut s = 0.0;
    while done + stride <= horizon {
        s += birkhoff_sum(base, phi, &p, stride);
        p = base.step(&p, stride as i64);
        done += stride;
        out.push((done, s));
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct RecurrentVector {
    #[serde(skip)]
    pub v: DVector<f64>,
    pub defect: f64,
    /// min and max of ‖𝒜(ω,n)v‖ over the tail window [H/2, H].
    pub min_norm: f64,
    pub max_norm: f64,
    pub horizon: usize,
    pub candidates: usize,
}

/// Grid directions in the unit sphere of ℝ^m.
fn grid_directions(m: usize, grid: usize, rng: &mut impl Rng) -> Vec<DVector<f64>> {
    match m {
        0 => Vec::new(),
        1 => vec![DVector::from_element(1, 1.0)],
        2 => (0..grid)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / grid as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        _ => {
            let mut dirs: Vec<DVector<f64>> = (0..m)
                .map(|i| DVector::from_fn(m, |r, _| if r == i { 1.0 } else { 0.0 }))
                .collect();
            while dirs.len() < grid.max(m) {
                dirs.push(random_unit_vector(rng, m));
            }
            dirs
        }
    }
}

/// Search for a unit v in span(`e0`) with liminf ≤ 1 ≤ limsup of ‖𝒜(ω,n)v‖,
/// measured on the tail window n ∈ [H/2, H] of the given generators.
///
/// Among equal defects the first grid direction wins.
pub fn recurrent_search_from_generators(
    e0: &DMatrix<f64>,
    generators: &[DMatrix<f64>],
    grid: usize,
    rng: &mut impl Rng,
) -> Result<RecurrentVector> {
    let h = generators.len();
    if h < 2 {
        return Err(LabError::InvalidParameter(
            "search horizon must be at least 2".into(),
        ));
    }
    let m = e0.ncols();
    if m == 0 {
        return Err(LabError::InvalidParameter("empty zero block".into()));
    }
    let dirs = grid_directions(m, grid, rng);
    let mut basis = e0.clone();
    let mut grams = Vec::with_capacity(h / 2 + 1);
    for (n, a) in generators.iter().enumerate() {
        basis = a * basis;
        if n + 1 >= h / 2 {
            grams.push(basis.transpose() * &basis);
        }
    }
    let mut best: Option<RecurrentVector> = None;
    for c in &dirs {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for g in &grams {
            let mut q = 0.0;
            for j in 0..m {
                let mut row = 0.0;
                for i in 0..m {
                    row += g[(i, j)] * c[i];
                }
                q += c[j] * row;
            }
            let q = q.max(0.0).sqrt();
            lo = lo.min(q);
            hi = hi.max(q);
        }
        let defect = (lo - 1.0).max(0.0) + (1.0 - hi).max(0.0);
        if best.as_ref().is_none_or(|b| defect < b.defect) {
            best = Some(RecurrentVector {
                v: e0 * c,
                defect,
                min_norm: lo,
                max_norm: hi,
                horizon: h,
                candidates: dirs.len(),
            });
            if defect == 0.0 {
                // Later directions can only tie.
                break;
            }
        }
    }
    let best = best.expect("at least one direction");
    if best.defect > MAX_DEFECT {
        return Err(LabError::NoCandidate(best.defect));
    }
    Ok(best)
}

pub fn recurrent_vector_search(
    c: &Cocycle,
    base: &BaseSystem,
    omega: &BasePoint,
    e0: &DMatrix<f64>,
    horizon: usize,
    grid: usize,
    rng: &mut impl Rng,
) -> Result<RecurrentVector> {
    let gens: Vec<DMatrix<f64>> = base
        .orbit(omega, 0, horizon)
        .iter()
        .map(|p| c.generator(base, p))
        .collect();
    recurrent_search_from_generators(e0, &gens, grid, rng)
}

/// Default grid size for a zero block of dimension m.
pub fn default_grid(m: usize) -> usize {
    if m <= 2 {
        DEFAULT_GRID_2D
    } else {
        DEFAULT_GRID_HIGH
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ManeSequencePair {
    pub anchor: BasePoint,
    #[serde(skip)]
    pub v: DVector<f64>,
    #[serde(skip)]
    pub x: Vec<DVector<f64>>,
    #[serde(skip)]
    pub y: Vec<DVector<f64>>,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    /// ‖𝒜(ω,n)v‖ for 0 ≤ n ≤ N.
    pub w_norms: Vec<f64>,
    pub n_star: usize,
    pub n_cut: usize,
    pub target: f64,
    /// Generators A(σ^nω) for n < N.
    #[serde(skip)]
    pub generators: Vec<DMatrix<f64>>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ManeCheck {
    /// ‖x(0) − y(0)‖.
    pub initial: f64,
    /// max_n ‖x(n+1) − A(σ^nω)x(n) − y(n+1)‖ for n < N, plus the step past N.
    pub recurrence: f64,
    pub max_x: f64,
    pub max_y: f64,
    pub alpha_final: f64,
    pub beta_max: f64,
    /// max_n |‖x(n)‖ − |α(n)|‖𝒜(ω,n)v‖|.
    pub telescoping: f64,
}

impl ManeCheck {
    pub fn holds(&self, tol: f64, target: f64) -> bool {
        self.initial <= tol
            && self.recurrence <= tol
            && self.max_x >= target
            && self.max_y <= 1.0 + tol
            && self.alpha_final.abs() <= tol
            && self.beta_max <= 1.0 + tol
    }
}

impl ManeSequencePair {
    /// x(n), zero for n > N.
    pub fn x_at(&self, n: usize) -> DVector<f64> {
        self.x
            .get(n)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.v.len()))
    }

    pub fn y_at(&self, n: usize) -> DVector<f64> {
        self.y
            .get(n)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.v.len()))
    }

    pub fn check(&self) -> ManeCheck {
        let initial = (&self.x[0] - &self.y[0]).norm();
        let mut recurrence = 0.0_f64;
        for n in 0..self.n_cut {
            let r = &self.x[n + 1] - &self.generators[n] * &self.x[n] - &self.y[n + 1];
            recurrence = recurrence.max(r.norm());
        }
        // x(N+1) = y(N+1) = 0, so the step past N needs A x(N) = 0.
        if let Some(a) = self.generators.last() {
            recurrence = recurrence.max((a * &self.x[self.n_cut]).norm());
        }
        let telescoping = self
            .x
            .iter()
            .zip(&self.alpha)
            .zip(&self.w_norms)
            .map(|((x, a), w)| (x.norm() - a.abs() * w).abs())
            .fold(0.0_f64, f64::max);
        ManeCheck {
            initial,
            recurrence,
            max_x: self.x.iter().fold(0.0_f64, |a, v| a.max(v.norm())),
            max_y: self.y.iter().fold(0.0_f64, |a, v| a.max(v.norm())),
            alpha_final: self.alpha[self.n_cut],
            beta_max: self.beta.iter().fold(0.0_f64, |a, b| a.max(b.abs())),
            telescoping,
        }
    }
}

/// Mañé pair along a stream of generators A(ω), A(σω), … .
///
/// β = +1 until N*, the first n with ‖x(n)‖ ≥ target, then −1 until the
/// partial sums of 1/‖w_m‖ after N* reach α(N*); the last β is scaled so
/// that α(N) = 0.
pub fn mane_from_generators<F>(
    anchor: BasePoint,
    v: &DVector<f64>,
    target: f64,
    horizon: usize,
    mut next_generator: F,
) -> Result<ManeSequencePair>
where
    F: FnMut() -> Result<DMatrix<f64>>,
{
    if !(target >= 0.0) {
        return Err(LabError::InvalidParameter(
            "target must be non-negative".into(),
        ));
    }
    let norm = v.norm();
    if !(norm > 0.0) {
        return Err(LabError::InvalidParameter("vector must be nonzero".into()));
    }
    let v = v / norm;
    let mut w = vec![v.clone()];
    let mut w_norms = vec![1.0];
    let mut beta = vec![1.0];
    let mut alpha = vec![1.0];
    let mut generators = Vec::new();
    let exhausted = |found| LabError::HorizonExhausted {
        wanted: 1,
        found,
        horizon,
    };
    let mut advance = |w: &mut Vec<DVector<f64>>,
                       w_norms: &mut Vec<f64>,
                       gens: &mut Vec<DMatrix<f64>>|
     -> Result<f64> {
        let a = next_generator()?;
        let next = &a * w.last().unwrap();
        let s = next.norm();
        if !(s > 0.0) || !s.is_finite() {
            return Err(LabError::Degenerate { step: w.len() });
        }
        gens.push(a);
        w.push(next);
        w_norms.push(s);
        Ok(s)
    };

    let mut n = 0;
    while alpha[n] * w_norms[n] < target {
        if n >= horizon {
            return Err(exhausted(0));
        }
        let s = advance(&mut w, &mut w_norms, &mut generators)?;
        n += 1;
        beta.push(1.0);
        alpha.push(alpha[n - 1] + 1.0 / s);
    }
    let n_star = n;
    let peak = alpha[n_star];
    let mut acc = 0.0;
    loop {
        if n >= horizon {
            return Err(exhausted(1));
        }
        let s = advance(&mut w, &mut w_norms, &mut generators)?;
        n += 1;
        if acc + 1.0 / s >= peak {
            beta.push(-(peak - acc) * s);
            alpha.push(0.0);
            break;
        }
        acc += 1.0 / s;
        beta.push(-1.0);
        alpha.push(peak - acc);
    }
    let n_cut = n;
    let x = w.iter().zip(&alpha).map(|(wn, a)| wn * *a).collect();
    let y = w
        .iter()
        .zip(&w_norms)
        .zip(&beta)
        .map(|((wn, s), b)| wn * (*b / *s))
        .collect();
    Ok(ManeSequencePair {
        anchor,
        v,
        x,
        y,
        beta,
        alpha,
        w_norms,
        n_star,
        n_cut,
        target,
        generators,
    })
}

pub fn mane_sequences(
    c: &Cocycle,
    base: &BaseSystem,
    omega: &BasePoint,
    v: &DVector<f64>,
    target: f64,
    horizon: usize,
) -> Result<ManeSequencePair> {
    let mut p = *omega;
    mane_from_generators(*omega, v, target, horizon, || {
        let a = c.generator(base, &p);
        p = base.step(&p, 1);
        Ok(a)
    })
}

/// The return-map cocycle Ā(ω) = 𝒜(ω, τ_F(ω)) over σ̄ = σ^{τ_F}.
#[derive(Clone, Debug)]
pub struct InducedCocycle {
    parent: Cocycle,
    base: BaseSystem,
    set: Region,
    pub measure: f64,
    pub horizon: usize,
    /// Sample mean of log⁺‖Ā‖ over sampled points of F.
    pub log_plus_mean: f64,
    /// Sample mean of the first return time.
    pub mean_return: f64,
}

impl InducedCocycle {
    pub fn parent(&self) -> &Cocycle {
        &self.parent
    }

    pub fn base(&self) -> &BaseSystem {
        &self.base
    }

    pub fn set(&self) -> &Region {
        &self.set
    }

    pub fn return_time(&self, omega: &BasePoint) -> Result<usize> {
        Ok(return_times(&self.base, &self.set, omega, 1, self.horizon)?[1])
    }

    /// Ā(ω) and τ_F(ω).
    pub fn generator(&self, omega: &BasePoint) -> Result<(DMatrix<f64>, usize)> {
        let t = self.return_time(omega)?;
        Ok((self.parent.evolve(&self.base, omega, t).value, t))
    }

    /// Visit times τ_F(ω, m), 0 ≤ m ≤ count.
    pub fn return_times(&self, omega: &BasePoint, count: usize) -> Result<Vec<usize>> {
        return_times(
            &self.base,
            &self.set,
            omega,
            count,
            self.horizon.saturating_mul(count.max(1)),
        )
    }

    /// Stream of (Ā(σ̄^mω), σ̄^mω) for m = 0, 1, … .
    pub fn stream(
        &self,
        omega: &BasePoint,
    ) -> impl FnMut() -> Result<(DMatrix<f64>, BasePoint)> + '_ {
        let mut p = *omega;
        move || {
            let (a, t) = self.generator(&p)?;
            let here = p;
            p = self.base.step(&p, t as i64);
            Ok((a, here))
        }
    }

    pub fn generators(&self, omega: &BasePoint, count: usize) -> Result<Vec<DMatrix<f64>>> {
        let mut next = self.stream(omega);
        (0..count).map(|_| next().map(|(a, _)| a)).collect()
    }

    pub fn spectrum(
        &self,
        omega: &BasePoint,
        steps: usize,
        reorth: usize,
        gap_tol: f64,
    ) -> Result<LyapunovSpectrum> {
        let gens = self.generators(omega, steps)?;
        spectrum_from_generators(self.parent.dim(), gens, steps, reorth, gap_tol)
    }

    pub fn mane(
        &self,
        omega: &BasePoint,
        v: &DVector<f64>,
        target: f64,
        horizon: usize,
    ) -> Result<ManeSequencePair> {
        let mut next = self.stream(omega);
        mane_from_generators(*omega, v, target, horizon, || next().map(|(a, _)| a))
    }
}

pub fn induce(
    c: &Cocycle,
    base: &BaseSystem,
    set: &Region,
    samples: &[BasePoint],
    horizon: usize,
) -> Result<InducedCocycle> {
    if !base.is_aperiodic() {
        return Err(LabError::NonAperiodicBase(base.descriptor()));
    }
    let inside: Vec<&BasePoint> = samples.iter().filter(|p| set.contains(base, p)).collect();
    if inside.is_empty() {
        return Err(LabError::InvalidParameter(format!(
            "{} has zero empirical measure",
            set.label()
        )));
    }
    let mut ind = InducedCocycle {
        parent: c.clone(),
        base: base.clone(),
        set: set.clone(),
        measure: inside.len() as f64 / samples.len() as f64,
        horizon,
        log_plus_mean: 0.0,
        mean_return: 0.0,
    };
    let mut log_plus = 0.0;
    let mut ret = 0.0;
    for p in &inside {
        let (a, t) = ind.generator(p)?;
        log_plus += spectral_norm(&a).ln().max(0.0);
        ret += t as f64;
    }
    ind.log_plus_mean = log_plus / inside.len() as f64;
    ind.mean_return = ret / inside.len() as f64;
    Ok(ind)
}

/// Parent-time sequences built from an induced Mañé pair.
#[derive(Clone, Debug)]
pub struct InterpolatedSequences {
    pub anchor: BasePoint,
    /// x(n), y(n) for 0 ≤ n ≤ τ_F(ω, N); both vanish afterwards.
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    /// τ_F(ω, m) for 0 ≤ m ≤ N.
    pub times: Vec<usize>,
    pub support_end: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct InterpolationCheck {
    pub recurrence: f64,
    pub max_x: f64,
    pub max_y: f64,
    /// y vanishes off F.
    pub support_in_set: bool,
}

impl InterpolatedSequences {
    pub fn x_at(&self, n: usize) -> DVector<f64> {
        self.x
            .get(n)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.x[0].len()))
    }

    pub fn y_at(&self, n: usize) -> DVector<f64> {
        self.y
            .get(n)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.y[0].len()))
    }

    pub fn check(&self, ind: &InducedCocycle) -> InterpolationCheck {
        let base = ind.base();
        let pts = base.orbit(&self.anchor, 0, self.support_end + 2);
        let mut recurrence = 0.0_f64;
        for n in 0..=self.support_end {
            let a = ind.parent().generator(base, &pts[n]);
            let r = self.x_at(n + 1) - a * self.x_at(n) - self.y_at(n + 1);
            recurrence = recurrence.max(r.norm());
        }
        let support_in_set = self
            .y
            .iter()
            .zip(&pts)
            .all(|(y, p)| y.norm() == 0.0 || ind.set().contains(base, p));
        InterpolationCheck {
            recurrence,
            max_x: self.x.iter().fold(0.0_f64, |a, v| a.max(v.norm())),
            max_y: self.y.iter().fold(0.0_f64, |a, v| a.max(v.norm())),
            support_in_set,
        }
    }
}

/// x(n) = 𝒜(σ^{τ_m}ω, n − τ_m)x̄(m) for τ_m ≤ n < τ_{m+1}; y(n) = ȳ(m) at
/// n = τ_m and 0 elsewhere.
pub fn interpolate_sequences(
    ind: &InducedCocycle,
    pair: &ManeSequencePair,
    omega: &BasePoint,
) -> Result<InterpolatedSequences> {
    let times = ind.return_times(omega, pair.n_cut)?;
    let base = ind.base();
    let end = times[pair.n_cut];
    let d = pair.v.len();
    let mut x = vec![DVector::zeros(d); end + 1];
    let mut y = vec![DVector::zeros(d); end + 1];
    let pts = base.orbit(omega, 0, end + 1);
    for m in 0..pair.n_cut {
        x[times[m]] = pair.x[m].clone();
        y[times[m]] = pair.y[m].clone();
        for n in times[m] + 1..times[m + 1] {
            x[n] = ind.parent().generator(base, &pts[n - 1]) * &x[n - 1];
        }
    }
    x[end] = pair.x[pair.n_cut].clone();
    y[end] = pair.y[pair.n_cut].clone();
    Ok(InterpolatedSequences {
        anchor: *omega,
        x,
        y,
        times,
        support_end: end,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct WitnessBudgets {
    /// Base points sampled for the percentile of C and for the tower base.
    pub samples: usize,
    /// Points of F used to choose the tower height.
    pub height_samples: usize,
    /// Horizon for return times and Mañé construction (induced steps).
    pub horizon: usize,
    /// Horizon of the recurrent-vector search (induced steps).
    pub search_horizon: usize,
    /// Grid size for the search; 0 picks the default for the block size.
    pub grid: usize,
    /// Fraction of F-samples whose support must fit below the tower height.
    pub coverage: f64,
    /// Percentile of C defining M.
    pub percentile: f64,
    pub spectrum_steps: usize,
    pub zero_tol: f64,
    pub gap_tol: f64,
    /// Tower bases on which (f, g) is evaluated.
    pub max_towers: usize,
}

impl Default for WitnessBudgets {
    fn default() -> Self {
        WitnessBudgets {
            samples: 4000,
            height_samples: 200,
            horizon: 2000,
            search_horizon: 100,
            grid: 0,
            coverage: 0.25,
            percentile: 0.5,
            spectrum_steps: 10_000,
            zero_tol: 0.05,
            gap_tol: 0.02,
            max_towers: 8,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TowerRow {
    /// Offset from the tower base point; −1 and N+1, N+2 lie off the tower.
    pub offset: i64,
    pub f_norm: f64,
    pub g_norm: f64,
    pub weight: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TowerTrace {
    pub base_point: BasePoint,
    pub rows: Vec<TowerRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ViolationWitness {
    pub orientation: PairOrientation,
    pub target_ratio: f64,
    pub level: f64,
    pub mane_target: f64,
    pub height: usize,
    pub base_set: String,
    pub tower_measure: f64,
    pub f_measure: f64,
    pub towers: Vec<TowerTrace>,
    pub f_norm: f64,
    pub g_norm: f64,
    pub ratio: f64,
    pub max_residual: f64,
    pub g_supported_in_f: bool,
    pub budgets: WitnessBudgets,
}

type Memo = Arc<Mutex<HashMap<BasePoint, Option<Arc<InterpolatedSequences>>>>>;

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * p.clamp(0.0, 1.0)).floor() as usize;
    sorted[idx]
}

/// Zero-block basis E₀(ω): the Oseledets block whose exponent is nearest 0.
pub fn zero_block_basis(
    c: &Cocycle,
    base: &BaseSystem,
    omega: &BasePoint,
    spectrum: &LyapunovSpectrum,
) -> Result<DMatrix<f64>> {
    let d = c.dim();
    let cum = spectrum.cumulative_dims();
    let idx = spectrum
        .exponents
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap();
    let prev = if idx == 0 { 0 } else { cum[idx - 1] };
    if prev == 0 && cum[idx] == d {
        return Ok(DMatrix::identity(d, d));
    }
    let frames = OrbitFrames::compute(c, base, omega, 0, 0, spectrum.default_window())?;
    Ok(frames.block(0, prev, cum[idx])?.0)
}

/// Assemble (f, g) on a Rokhlin tower such that f − 𝔸f = g while the
/// ratio of norms exceeds `target_ratio`.
pub fn violation_witness<R: Rng + ?Sized>(
    c: &Cocycle,
    base: &BaseSystem,
    weight: &WeightModel,
    target_ratio: f64,
    orientation: PairOrientation,
    budgets: &WitnessBudgets,
    rng: &mut R,
) -> Result<ViolationWitness> {
    if !base.is_aperiodic() {
        return Err(LabError::NonAperiodicBase(base.descriptor()));
    }
    if !(target_ratio > 0.0) {
        return Err(LabError::InvalidParameter(
            "target ratio must be positive".into(),
        ));
    }
    let samples = base.sample_points(rng, budgets.samples.max(1));
    let spectrum = lyapunov_exponents(
        c,
        base,
        &samples[0],
        budgets.spectrum_steps,
        10,
        budgets.gap_tol,
    )?;
    if classify(&spectrum, budgets.zero_tol)? == Classification::Hyperbolic {
        return Err(LabError::NotDegenerate);
    }

    let mut weights: Vec<f64> = samples.iter().map(|p| weight.eval(base, p)).collect();
    weights.sort_by(f64::total_cmp);
    let level = quantile(&weights, budgets.percentile);
    let w_rule = weight.clone();
    let (set, mane_target) = match orientation {
        PairOrientation::WeightedInput => (
            Region::predicate(format!("{{C ≤ {level}}}"), move |b, p| {
                w_rule.eval(b, p) <= level
            }),
            (target_ratio + 1.0) * level,
        ),
        PairOrientation::WeightedOutput => (
            Region::predicate(format!("{{C ≥ {level}}}"), move |b, p| {
                w_rule.eval(b, p) >= level
            }),
            (target_ratio + 1.0) / level,
        ),
    };
    let ind = Arc::new(induce(c, base, &set, &samples, budgets.horizon)?);
    let f_measure = ind.measure;

    let memo: Memo = Arc::new(Mutex::new(HashMap::new()));
    let pair_at = {
        let ind = ind.clone();
        let memo = memo.clone();
        let spectrum = spectrum.clone();
        let budgets = budgets.clone();
        move |p: &BasePoint| -> Option<Arc<InterpolatedSequences>> {
            if let Some(hit) = memo.lock().unwrap().get(p) {
                return hit.clone();
            }
            let built = (|| -> Result<InterpolatedSequences> {
                let e0 = zero_block_basis(ind.parent(), ind.base(), p, &spectrum)?;
                let grid = if budgets.grid == 0 {
                    default_grid(e0.ncols())
                } else {
                    budgets.grid
                };
                let gens = ind.generators(p, budgets.search_horizon)?;
                let mut local = ChaCha8Rng::seed_from_u64(point_seed(p));
                let rv = recurrent_search_from_generators(&e0, &gens, grid, &mut local)?;
                let pair = ind.mane(p, &rv.v, mane_target, budgets.horizon)?;
                interpolate_sequences(&ind, &pair, p)
            })()
            .ok()
            .map(Arc::new);
            memo.lock().unwrap().insert(*p, built.clone());
            built
        }
    };

    let in_f: Vec<&BasePoint> = samples
        .iter()
        .filter(|p| set.contains(base, p))
        .take(budgets.height_samples.max(1))
        .collect();
    let mut ends: Vec<usize> = in_f
        .iter()
        .filter_map(|p| pair_at(p).map(|s| s.support_end))
        .collect();
    ends.sort_unstable();
    let need = ((budgets.coverage * in_f.len() as f64).ceil() as usize).max(1);
    if ends.len() < need {
        return Err(LabError::HorizonExhausted {
            wanted: need,
            found: ends.len(),
            horizon: budgets.horizon,
        });
    }
    let height = ends[need - 1];

    let f_n = {
        let set = set.clone();
        let pair_at = pair_at.clone();
        Region::predicate(format!("F_{height}"), move |b, p| {
            set.contains(b, p) && pair_at(p).is_some_and(|s| s.support_end <= height)
        })
    };
    let tower = rokhlin_base(base, &f_n, height, budgets.samples, rng)?;

    let b_set = tower.base_set.clone();
    let eval = |p: &BasePoint| -> (DVector<f64>, DVector<f64>) {
        let mut f = DVector::zeros(c.dim());
        let mut g = DVector::zeros(c.dim());
        for n in 0..=height {
            let q = base.step(p, -(n as i64));
            if b_set.contains(base, &q) {
                if let Some(s) = pair_at(&q) {
                    f += s.x_at(n);
                    g += s.y_at(n);
                }
            }
        }
        (f, g)
    };

    let mut towers = Vec::new();
    let mut f_norm = 0.0_f64;
    let mut g_norm = 0.0_f64;
    let mut max_residual = 0.0_f64;
    let mut supported = true;
    for b in tower.hits.iter().take(budgets.max_towers.max(1)) {
        let mut rows = Vec::new();
        let mut prev = eval(&base.step(b, -2));
        for k in -1..=(height as i64 + 2) {
            let p = base.step(b, k);
            let cur = eval(&p);
            let a = c.generator(base, &base.step(&p, -1));
            let r = (&cur.0 - a * &prev.0 - &cur.1).norm();
            let cw = weight.eval(base, &p);
            let (fn_, gn) = match orientation {
                PairOrientation::WeightedInput => (cur.0.norm(), cw * cur.1.norm()),
                PairOrientation::WeightedOutput => (cw * cur.0.norm(), cur.1.norm()),
            };
            f_norm = f_norm.max(fn_);
            g_norm = g_norm.max(gn);
            max_residual = max_residual.max(r);
            if cur.1.norm() > 0.0 && !set.contains(base, &p) {
                supported = false;
            }
            rows.push(TowerRow {
                offset: k,
                f_norm: cur.0.norm(),
                g_norm: cur.1.norm(),
                weight: cw,
                residual: r,
            });
            prev = cur;
        }
        towers.push(TowerTrace {
            base_point: *b,
            rows,
        });
    }
    let ratio = if g_norm > 0.0 {
        f_norm / g_norm
    } else {
        f64::INFINITY
    };
    let witness = ViolationWitness {
        orientation,
        target_ratio,
        level,
        mane_target,
        height,
        base_set: tower.base_set.label().to_string(),
        tower_measure: tower.measure_estimate,
        f_measure,
        towers,
        f_norm,
        g_norm,
        ratio,
        max_residual,
        g_supported_in_f: supported,
        budgets: budgets.clone(),
    };
    if !(witness.ratio > target_ratio) {
        return Err(LabError::RatioNotAchieved {
            achieved: witness.ratio,
            target: target_ratio,
        });
    }
    Ok(witness)
}

/// Deterministic per-point seed.
pub fn point_seed(p: &BasePoint) -> u64 {
    match p {
        BasePoint::Rotation { angle } => mix64(*angle ^ 0x1),
        BasePoint::Bernoulli { seed, cursor } => mix64(seed ^ mix64(*cursor as u64 ^ 0x2)),
        BasePoint::Periodic { state } => mix64(*state as u64 ^ 0x3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot() -> (BaseSystem, BasePoint) {
        (BaseSystem::golden_rotation(), BasePoint::rotation(0.2))
    }

    #[test]
    fn birkhoff_extrema_cases() {
        let (base, p) = rot();
        let zero = Observable::constant(0.0);
        let e = birkhoff_extrema(&base, &zero, &p, 100).unwrap();
        assert_eq!((e.min, e.max), (0.0, 0.0));
        let cos = Observable::cosine();
        assert!(birkhoff_extrema(&base, &cos, &p, 100_000)
            .unwrap()
            .straddles_zero());
        let planted = Observable::constant(1.0).with_declared_mean(Some(0.0));
        let e = birkhoff_extrema(&base, &planted, &p, 100).unwrap();
        assert_eq!(e.min, 1.0);
        assert!(!e.straddles_zero());
    }

    #[test]
    fn shear_search_picks_fixed_vector() {
        let (base, p) = rot();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rv = recurrent_vector_search(
            &Cocycle::shear(),
            &base,
            &p,
            &DMatrix::identity(2, 2),
            200,
            720,
            &mut rng,
        )
        .unwrap();
        assert_eq!(rv.defect, 0.0);
        assert!((rv.v[0].abs() - 1.0).abs() < 1e-15 && rv.v[1] == 0.0);
    }

    #[test]
    fn vertical_shear_direction_has_positive_defect() {
        let (base, p) = rot();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let gens = vec![Cocycle::shear().generator(&base, &p); 4];
        // Tail norms are √5, √10, √17.
        match recurrent_search_from_generators(&e, &gens, 720, &mut rng) {
            Err(LabError::NoCandidate(d)) => assert!((d - (5f64.sqrt() - 1.0)).abs() < 1e-12),
            other => panic!("expected NoCandidate, got {other:?}"),
        }
    }

    #[test]
    fn shear_mane_closed_form() {
        let (base, p) = rot();
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let pair = mane_sequences(&Cocycle::shear(), &base, &p, &v, 3.0, 100).unwrap();
        assert_eq!(pair.n_star, 2);
        assert_eq!(pair.n_cut, 5);
        assert_eq!(pair.alpha, vec![1.0, 2.0, 3.0, 2.0, 1.0, 0.0]);
        assert_eq!(pair.beta[5], -1.0);
        let chk = pair.check();
        assert!(chk.holds(0.0, 3.0), "{chk:?}");

        let pair = mane_sequences(&Cocycle::shear(), &base, &p, &v, 0.0, 100).unwrap();
        assert_eq!((pair.n_star, pair.n_cut), (0, 1));
        assert_eq!(pair.x[1], DVector::zeros(2));
    }

    #[test]
    fn mane_horizon_is_reported() {
        let (base, p) = rot();
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let e = mane_sequences(&Cocycle::shear(), &base, &p, &v, 50.0, 10).unwrap_err();
        assert_eq!(e.name(), "HorizonExhausted");
    }

    #[test]
    fn induce_on_everything_is_parent() {
        let (base, p) = rot();
        let c = Cocycle::shear();
        let ind = induce(&c, &base, &Region::everything(), &[p], 10).unwrap();
        assert_eq!(ind.measure, 1.0);
        let (a, t) = ind.generator(&p).unwrap();
        assert_eq!(t, 1);
        assert_eq!(a, c.generator(&base, &p));
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let pair = ind.mane(&p, &v, 3.0, 100).unwrap();
        let s = interpolate_sequences(&ind, &pair, &p).unwrap();
        assert_eq!(s.x, pair.x);
        assert_eq!(s.y, pair.y);
    }

    #[test]
    fn interpolation_over_half_arc() {
        let (base, _) = rot();
        let c = Cocycle::shear();
        let set = Region::arc(0.0, 0.5);
        let samples = base.sample_points(&mut ChaCha8Rng::seed_from_u64(3), 500);
        let ind = induce(&c, &base, &set, &samples, 100).unwrap();
        let start = BasePoint::rotation(0.1);
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let pair = ind.mane(&start, &v, 5.0, 200).unwrap();
        let s = interpolate_sequences(&ind, &pair, &start).unwrap();
        let chk = s.check(&ind);
        assert!(chk.recurrence <= 1e-10);
        assert!(chk.max_x >= 5.0 && chk.max_y <= 1.0 + 1e-12);
        assert!(chk.support_in_set);
        for n in 0..s.support_end {
            if !s.times.contains(&n) {
                assert_eq!(s.y[n].norm(), 0.0);
            }
        }
    }

    #[test]
    fn witness_refuses_hyperbolic() {
        let base = BaseSystem::bernoulli(vec![0.5, 0.5]).unwrap();
        let c = Cocycle::diagonal(&[2.0, 0.5]).unwrap();
        let budgets = WitnessBudgets {
            samples: 50,
            ..WitnessBudgets::default()
        };
        let e = violation_witness(
            &c,
            &base,
            &WeightModel::unit(),
            10.0,
            PairOrientation::WeightedInput,
            &budgets,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap_err();
        assert_eq!(e, LabError::NotDegenerate);
    }
}
