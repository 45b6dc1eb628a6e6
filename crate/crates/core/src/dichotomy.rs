//! Tempered exponential dichotomies: classification, certificates
//! (projections, rate, tempered bound K) and the tempered envelope K_ε.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::base::{BasePoint, BaseSystem};
use crate::cocycle::Cocycle;
use crate::error::{LabError, Result};
use crate::linalg::{min_singular_value, oblique_projection, pseudo_inverse, spectral_norm};
use crate::met::{LyapunovSpectrum, OrbitFrames};

pub const DEFAULT_SAFETY: f64 = 0.25;
pub const DEFAULT_N_MAX: usize = 200;
/// Relative rounding allowance when checking the envelope growth law.
pub const ENVELOPE_ROUNDING: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    Hyperbolic,
    HasZeroExponent,
}

/// Hyperbolic iff every |λ_i| exceeds `zero_tol`. Exponents whose size is
/// within [zero_tol/2, zero_tol], or whose 3-sigma band contains
/// `zero_tol`, make the verdict inconclusive.
pub fn classify(spectrum: &LyapunovSpectrum, zero_tol: f64) -> Result<Classification> {
    if !(zero_tol > 0.0) {
        return Err(LabError::InvalidParameter(
            "zero_tol must be positive".into(),
        ));
    }
    let mut hyperbolic = true;
    for (&l, &se) in spectrum.exponents.iter().zip(&spectrum.stderr) {
        let a = l.abs();
        let straddles = a - 3.0 * se <= zero_tol && zero_tol <= a + 3.0 * se;
        if (a >= zero_tol / 2.0 && a <= zero_tol) || straddles {
            return Err(LabError::Inconclusive {
                exponent: l,
                stderr: se,
                zero_tol,
            });
        }
        if a <= zero_tol {
            hyperbolic = false;
        }
    }
    Ok(if hyperbolic {
        Classification::Hyperbolic
    } else {
        Classification::HasZeroExponent
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateOptions {
    /// λ = (1 − safety)·min|λ_i|.
    pub safety: f64,
    pub n_max: usize,
    /// Sweep window for the splitting; derived from the spectral gap if `None`.
    pub window: Option<usize>,
    pub zero_tol: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions {
            safety: DEFAULT_SAFETY,
            n_max: DEFAULT_N_MAX,
            window: None,
            zero_tol: 0.05,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateSample {
    pub point: BasePoint,
    #[serde(skip)]
    pub projection: DMatrix<f64>,
    pub k: f64,
}

/// Π^s, λ and K(ω) on a sample of base points, together with the rule that
/// evaluates them at any other point.
#[derive(Clone, Debug)]
pub struct DichotomyCertificate {
    cocycle: Cocycle,
    base: BaseSystem,
    pub lambda: f64,
    /// Rate at which K was fitted; stays fixed if λ is overridden.
    pub k_lambda: f64,
    pub stable_dim: usize,
    pub dim: usize,
    pub n_max: usize,
    pub window: usize,
    pub samples: Vec<CertificateSample>,
}

/// Frames, projections and restricted inverses along an orbit stretch.
#[derive(Clone, Debug)]
pub struct DichotomyFrames {
    frames: OrbitFrames,
    unstable_dim: usize,
    proj_s: Vec<DMatrix<f64>>,
    /// U_j (A_j U_j)⁺: the inverse of A(σ^jω) on the unstable bundle.
    restricted_inverse: Vec<DMatrix<f64>>,
}

impl DichotomyFrames {
    pub fn compute(
        c: &Cocycle,
        base: &BaseSystem,
        anchor: &BasePoint,
        lo: i64,
        hi: i64,
        window: usize,
        stable_dim: usize,
    ) -> Result<Self> {
        let frames = OrbitFrames::compute(c, base, anchor, lo, hi, window)?;
        let d = c.dim();
        let u = d - stable_dim;
        let mut proj_s = Vec::with_capacity((hi - lo + 1) as usize);
        let mut restricted_inverse = Vec::with_capacity(proj_s.capacity());
        for k in lo..=hi {
            let es = frames.stable_space(k, u);
            let eu = frames.unstable_space(k, u);
            let p = oblique_projection(&es, &eu).ok_or(LabError::IllConditioned {
                transversality: 0.0,
            })?;
            proj_s.push(p);
            if u == 0 {
                restricted_inverse.push(DMatrix::zeros(d, d));
            } else {
                let au = frames.generator(k) * &eu;
                let smin = min_singular_value(&au);
                if smin <= 1e-12 * spectral_norm(frames.generator(k)).max(1.0) {
                    return Err(LabError::UnstableNotInvertible(smin));
                }
                let inv = &eu * pseudo_inverse(&au);
                restricted_inverse.push(inv);
            }
        }
        Ok(DichotomyFrames {
            frames,
            unstable_dim: u,
            proj_s,
            restricted_inverse,
        })
    }

    pub fn frames(&self) -> &OrbitFrames {
        &self.frames
    }

    pub fn lo(&self) -> i64 {
        self.frames.lo()
    }

    pub fn hi(&self) -> i64 {
        self.frames.hi()
    }

    pub fn unstable_dim(&self) -> usize {
        self.unstable_dim
    }

    fn idx(&self, k: i64) -> usize {
        assert!(
            k >= self.lo() && k <= self.hi(),
            "offset {k} outside frames"
        );
        (k - self.lo()) as usize
    }

    pub fn point(&self, k: i64) -> &BasePoint {
        self.frames.point(k)
    }

    pub fn generator(&self, k: i64) -> &DMatrix<f64> {
        self.frames.generator(k)
    }

    /// Π^s(σ^k ω).
    pub fn projection_stable(&self, k: i64) -> &DMatrix<f64> {
        &self.proj_s[self.idx(k)]
    }

    /// Π^u(σ^k ω) = Id − Π^s(σ^k ω).
    pub fn projection_unstable(&self, k: i64) -> DMatrix<f64> {
        let p = self.projection_stable(k);
        DMatrix::identity(p.nrows(), p.ncols()) - p
    }

    /// Maps the unstable fiber at σ^{k+1}ω back to σ^kω.
    pub fn restricted_inverse(&self, k: i64) -> &DMatrix<f64> {
        &self.restricted_inverse[self.idx(k)]
    }

    /// ‖𝒜(σ^kω, n)Π^s‖ and ‖𝒜(σ^kω, −n)Π^u‖ for n = 0..=n_max.
    ///
    /// Needs frames on [k − n_max, k + n_max].
    pub fn norm_profiles(&self, k: i64, n_max: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.proj_s[0].nrows();
        let s = d - self.unstable_dim;
        let u = self.unstable_dim;
        let mut stable = vec![0.0; n_max + 1];
        let mut unstable = vec![0.0; n_max + 1];
        let ps = self.projection_stable(k);
        if s > 0 {
            let mut z = ps.clone();
            for (n, slot) in stable.iter_mut().enumerate() {
                *slot = spectral_norm(&z);
                if n < n_max {
                    // Re-projecting is exact in theory and stops unstable drift.
                    let m = k + n as i64;
                    z = self.projection_stable(m + 1) * (self.generator(m) * z);
                }
            }
        }
        if u > 0 {
            let mut z = self.projection_unstable(k);
            for (n, slot) in unstable.iter_mut().enumerate() {
                *slot = spectral_norm(&z);
                if n < n_max {
                    z = self.restricted_inverse(k - 1 - n as i64) * z;
                }
            }
        }
        (stable, unstable)
    }

    /// K(σ^kω) = max_n max(‖𝒜(n)Π^s‖, ‖𝒜(−n)Π^u‖)·e^{λn}.
    pub fn k_value(&self, k: i64, lambda: f64, n_max: usize) -> f64 {
        let (s, u) = self.norm_profiles(k, n_max);
        let mut best = 0.0_f64;
        for n in 0..=n_max {
            let g = (lambda * n as f64).exp();
            best = best.max(s[n] * g).max(u[n] * g);
        }
        best
    }
}

impl DichotomyCertificate {
    pub fn cocycle(&self) -> &Cocycle {
        &self.cocycle
    }

    pub fn base(&self) -> &BaseSystem {
        &self.base
    }

    pub fn unstable_dim(&self) -> usize {
        self.dim - self.stable_dim
    }

    /// The same certificate claiming a different rate (K unchanged).
    pub fn with_rate(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Frames on [lo, hi] for this certificate's cocycle.
    pub fn frames_along(&self, anchor: &BasePoint, lo: i64, hi: i64) -> Result<DichotomyFrames> {
        DichotomyFrames::compute(
            &self.cocycle,
            &self.base,
            anchor,
            lo,
            hi,
            self.window,
            self.stable_dim,
        )
    }

    /// K(σ^kω) for lo ≤ k ≤ hi in one sweep.
    pub fn k_along(&self, anchor: &BasePoint, lo: i64, hi: i64) -> Result<Vec<f64>> {
        let m = self.n_max as i64;
        let frames = self.frames_along(anchor, lo - m - 1, hi + m)?;
        Ok((lo..=hi)
            .map(|k| frames.k_value(k, self.k_lambda, self.n_max))
            .collect())
    }

    pub fn k_at(&self, omega: &BasePoint) -> Result<f64> {
        Ok(self.k_along(omega, 0, 0)?[0])
    }

    pub fn projection_at(&self, omega: &BasePoint) -> Result<DMatrix<f64>> {
        Ok(self.frames_along(omega, 0, 0)?.projection_stable(0).clone())
    }

    /// Analytic constant (1 + e^{−λ})/(1 − e^{−λ}).
    pub fn green_constant(&self) -> f64 {
        green_constant(self.lambda)
    }
}

/// (1 + e^{−λ})/(1 − e^{−λ}).
pub fn green_constant(lambda: f64) -> f64 {
    let q = (-lambda).exp();
    (1.0 + q) / (1.0 - q)
}

pub fn build_certificate(
    c: &Cocycle,
    base: &BaseSystem,
    spectrum: &LyapunovSpectrum,
    samples: &[BasePoint],
    options: &CertificateOptions,
) -> Result<DichotomyCertificate> {
    if !(0.0..1.0).contains(&options.safety) {
        return Err(LabError::InvalidParameter(
            "safety must lie in [0, 1)".into(),
        ));
    }
    if spectrum.dim() != c.dim() {
        return Err(LabError::InvalidParameter(
            "spectrum dimension mismatch".into(),
        ));
    }
    if classify(spectrum, options.zero_tol)? != Classification::Hyperbolic {
        return Err(LabError::NotHyperbolic(spectrum.min_abs()));
    }
    let lambda = (1.0 - options.safety) * spectrum.min_abs();
    let window = options.window.unwrap_or_else(|| spectrum.default_window());
    let mut cert = DichotomyCertificate {
        cocycle: c.clone(),
        base: base.clone(),
        lambda,
        k_lambda: lambda,
        stable_dim: spectrum.stable_dim(),
        dim: c.dim(),
        n_max: options.n_max,
        window,
        samples: Vec::new(),
    };
    let built: Result<Vec<CertificateSample>> = samples
        .par_iter()
        .map(|p| {
            let m = cert.n_max as i64;
            let frames = cert.frames_along(p, -m - 1, m)?;
            Ok(CertificateSample {
                point: *p,
                projection: frames.projection_stable(0).clone(),
                k: frames.k_value(0, lambda, cert.n_max),
            })
        })
        .collect();
    cert.samples = built?;
    Ok(cert)
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub worst_ratio: f64,
    pub worst_sample: usize,
    pub worst_n: usize,
    pub checked: usize,
    pub horizon: usize,
    pub slack: f64,
}

/// Checks both dichotomy inequalities for n ≤ `n_max` on `fresh` points,
/// with K evaluated by the certificate's rule.
pub fn verify_certificate(
    cert: &DichotomyCertificate,
    fresh: &[BasePoint],
    n_max: usize,
    slack: f64,
) -> Result<VerificationReport> {
    // Per point: worst (ratio, n) and the first n exceeding the slack.
    // Per point: worst (ratio, n) and the first (n, ratio) over the slack.
    type PointOutcome = ((f64, usize), Option<(usize, f64)>);
    let per_point: Result<Vec<PointOutcome>> = fresh
        .par_iter()
        .map(|p| {
            let m = n_max.max(cert.n_max) as i64;
            let frames = cert.frames_along(p, -m - 1, m)?;
            let k = frames.k_value(0, cert.k_lambda, cert.n_max);
            let (s, u) = frames.norm_profiles(0, n_max);
            let mut worst = (0.0_f64, 0usize);
            let mut first = None;
            for n in 0..=n_max {
                let bound = k * (-cert.lambda * n as f64).exp();
                let r = s[n].max(u[n]) / bound;
                if r > worst.0 {
                    worst = (r, n);
                }
                if first.is_none() && r > slack {
                    first = Some((n, r));
                }
            }
            Ok((worst, first))
        })
        .collect();
    let per_point = per_point?;
    if let Some((sample, (n, ratio))) = per_point
        .iter()
        .enumerate()
        .find_map(|(i, (_, f))| f.map(|f| (i, f)))
    {
        return Err(LabError::Violation { sample, n, ratio });
    }
    let mut report = VerificationReport {
        worst_ratio: 0.0,
        worst_sample: 0,
        worst_n: 0,
        checked: fresh.len(),
        horizon: n_max,
        slack,
    };
    for (i, &((r, n), _)) in per_point.iter().enumerate() {
        if r > report.worst_ratio {
            report.worst_ratio = r;
            report.worst_sample = i;
            report.worst_n = n;
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct TemperednessReport {
    /// (signed horizon n, (1/|n|)(log K(σ^nω) − log K(ω))).
    pub slopes: Vec<(i64, f64)>,
    pub max_horizon_slope: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Growth slopes of log K along an orbit. `k` holds K(σ^jω) for
/// −W ≤ j ≤ W (odd length, centred).
pub fn temperedness_diagnostic(
    k: &[f64],
    horizons: &[usize],
    tolerance: f64,
) -> Result<TemperednessReport> {
    if k.len().is_multiple_of(2) || k.is_empty() {
        return Err(LabError::InvalidParameter(
            "K samples must be centred (odd length)".into(),
        ));
    }
    let w = (k.len() - 1) / 2;
    let centre = k[w].ln();
    let mut slopes = Vec::new();
    let mut hs: Vec<usize> = horizons
        .iter()
        .copied()
        .filter(|&h| h > 0 && h <= w)
        .collect();
    hs.sort_unstable();
    hs.dedup();
    let mut max_slope = 0.0_f64;
    for &h in &hs {
        for sign in [1_i64, -1] {
            let j = (w as i64 + sign * h as i64) as usize;
            let s = (k[j].ln() - centre) / h as f64;
            slopes.push((sign * h as i64, s));
            if Some(&h) == hs.last() {
                max_slope = max_slope.max(s.abs());
            }
        }
    }
    Ok(TemperednessReport {
        slopes,
        max_horizon_slope: max_slope,
        tolerance,
        passed: max_slope <= tolerance,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TemperedEnvelope {
    pub epsilon: f64,
    pub window: usize,
    /// K_ε(σ^kω) for −W ≤ k ≤ W.
    pub values: Vec<f64>,
    /// The K samples used, for −W ≤ k ≤ W.
    pub k: Vec<f64>,
}

impl TemperedEnvelope {
    pub fn at(&self, k: i64) -> f64 {
        self.values[(k + self.window as i64) as usize]
    }

    /// Largest violation of K ≤ K_ε (≤ 0 means the law holds).
    pub fn domination_defect(&self) -> f64 {
        self.k
            .iter()
            .zip(&self.values)
            .map(|(k, e)| k - e)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest relative excess of K_ε(σ^{k+n}ω)/(K_ε(σ^kω)e^{ε|n|}) − 1 over
    /// all window pairs.
    pub fn growth_defect(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        let len = self.values.len();
        for a in 0..len {
            for b in 0..len {
                let n = (a as f64 - b as f64).abs();
                let r = self.values[b] / (self.values[a] * (self.epsilon * n).exp()) - 1.0;
                worst = worst.max(r);
            }
        }
        worst
    }

    pub fn satisfies_laws(&self) -> bool {
        self.domination_defect() <= 0.0 && self.growth_defect() <= ENVELOPE_ROUNDING
    }
}

/// K_ε(σ^kω) = max_j K(σ^jω)e^{−ε|j−k|} over every available sample j.
/// `k` holds K(σ^jω) centred on ω; at least 2W samples per side are needed.
pub fn tempered_envelope(k: &[f64], epsilon: f64, window: usize) -> Result<TemperedEnvelope> {
    if !(epsilon > 0.0) {
        return Err(LabError::InvalidParameter(
            "epsilon must be positive".into(),
        ));
    }
    let needed = 4 * window + 1;
    if k.len().is_multiple_of(2) || k.len() < needed {
        return Err(LabError::WindowTooSmall {
            needed,
            available: k.len(),
        });
    }
    let decay = (-epsilon).exp();
    let len = k.len();
    let mut left = k.to_vec();
    for i in 1..len {
        left[i] = left[i].max(left[i - 1] * decay);
    }
    let mut right = k.to_vec();
    for i in (0..len - 1).rev() {
        right[i] = right[i].max(right[i + 1] * decay);
    }
    let centre = (len - 1) / 2;
    let lo = centre - window;
    let hi = centre + window;
    Ok(TemperedEnvelope {
        epsilon,
        window,
        values: (lo..=hi).map(|i| left[i].max(right[i])).collect(),
        k: k[lo..=hi].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::met::lyapunov_exponents;

    fn spectrum(c: &Cocycle, base: &BaseSystem, p: &BasePoint) -> LyapunovSpectrum {
        lyapunov_exponents(c, base, p, 10_000, 10, 0.02).unwrap()
    }

    #[test]
    fn classification() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.1);
        let d = Cocycle::diagonal(&[2.0, 0.5]).unwrap();
        assert_eq!(
            classify(&spectrum(&d, &base, &p), 0.05).unwrap(),
            Classification::Hyperbolic
        );
        let s = Cocycle::shear();
        assert_eq!(
            classify(&spectrum(&s, &base, &p), 0.05).unwrap(),
            Classification::HasZeroExponent
        );
        let n = Cocycle::nonuniform_rotation(0.5, 0.3);
        assert_eq!(
            classify(&spectrum(&n, &base, &p), 0.05).unwrap(),
            Classification::Hyperbolic
        );
        let near = Cocycle::diagonal(&[0.04f64.exp(), 1.0]).unwrap();
        assert_eq!(
            classify(&spectrum(&near, &base, &p), 0.05)
                .unwrap_err()
                .name(),
            "Inconclusive"
        );
    }

    #[test]
    fn diagonal_certificate() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.1);
        let d = Cocycle::diagonal(&[2.0, 0.5]).unwrap();
        let s = spectrum(&d, &base, &p);
        let cert = build_certificate(&d, &base, &s, &[p], &CertificateOptions::default()).unwrap();
        assert!((cert.lambda - 0.75 * 2f64.ln()).abs() < 1e-12);
        let ps = &cert.samples[0].projection;
        assert!(
            (ps - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0]))).norm()
                < 1e-12
        );
        assert!(
            (cert.samples[0].k - 1.0).abs() < 1e-12,
            "{:?}",
            cert.samples[0]
        );
        let rep = verify_certificate(&cert, &[BasePoint::rotation(0.77)], 100, 1.0 + 1e-9).unwrap();
        assert!((rep.worst_ratio - 1.0).abs() < 1e-12);

        let doubled = cert.clone().with_rate(2.0 * cert.lambda);
        match verify_certificate(&doubled, &[BasePoint::rotation(0.3)], 50, 1.0 + 1e-9) {
            Err(LabError::Violation { n, .. }) => assert!(n <= 2),
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn shear_has_no_certificate() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.1);
        let c = Cocycle::shear();
        let s = spectrum(&c, &base, &p);
        let e = build_certificate(&c, &base, &s, &[p], &CertificateOptions::default()).unwrap_err();
        assert_eq!(e.name(), "NotHyperbolic");
    }

    #[test]
    fn envelope_of_constant_and_spike() {
        let k = vec![5.0; 41];
        let env = tempered_envelope(&k, 0.1, 10).unwrap();
        assert!(env.values.iter().all(|&v| v == 5.0));

        let mut k = vec![1.0; 81];
        k[40] = 100.0;
        let env = tempered_envelope(&k, 0.5, 20).unwrap();
        for j in -20..=20_i64 {
            let expect = (100.0 * (-0.5 * j.abs() as f64).exp()).max(1.0);
            assert!((env.at(j) - expect).abs() <= 1e-12 * expect);
        }
        assert!(env.satisfies_laws());
        assert_eq!(
            tempered_envelope(&k, 0.5, 30).unwrap_err().name(),
            "WindowTooSmall"
        );
    }

    #[test]
    fn temperedness_slopes() {
        let k = vec![3.0; 201];
        let r = temperedness_diagnostic(&k, &[10, 100], 0.05).unwrap();
        assert!(r.slopes.iter().all(|(_, s)| *s == 0.0));
        assert!(r.passed);
        let planted: Vec<f64> = (-100..=100_i64)
            .map(|n| (0.1 * n.abs() as f64).exp())
            .collect();
        let r = temperedness_diagnostic(&planted, &[100], 0.05).unwrap();
        assert!((r.max_horizon_slope - 0.1).abs() < 1e-12);
        assert!(!r.passed);
    }
}
