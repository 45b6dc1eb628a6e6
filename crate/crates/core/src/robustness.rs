//! Perturbations inside the dichotomy budget: the fixed-point solve for the
//! perturbed cocycle and a spectrum check of random admissible perturbations.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::admissibility::{residual, GreenSolver, OrbitFunction};
use crate::base::{mix64, BasePoint, BaseSystem};
use crate::cocycle::Cocycle;
use crate::degeneracy::point_seed;
use crate::dichotomy::{classify, green_constant, Classification, DichotomyCertificate};
use crate::error::{LabError, Result};
use crate::linalg::{gaussian_matrix, spectral_norm};
use crate::met::lyapunov_exponents;

/// Perturbations stay strictly inside the budget by this factor.
pub const BUDGET_SHRINK: f64 = 1.0 - 1e-6;

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct PerturbationBudget {
    pub lambda: f64,
    pub safety: f64,
    /// ‖B(ω) − A(ω)‖ ≤ d/K(σω).
    pub d: f64,
    /// Contraction factor d·(1 + e^{−λ})/(1 − e^{−λ}).
    pub q: f64,
}

impl PerturbationBudget {
    /// c(ω) = d/K(σω), given K(σω).
    pub fn allowance(&self, k_next: f64) -> f64 {
        self.d / k_next
    }
}

pub fn budget(cert: &DichotomyCertificate, safety: f64) -> Result<PerturbationBudget> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(LabError::InvalidParameter(
            "safety must lie in (0, 1)".into(),
        ));
    }
    let d = safety / green_constant(cert.lambda);
    Ok(PerturbationBudget {
        lambda: cert.lambda,
        safety,
        d,
        q: d * green_constant(cert.lambda),
    })
}

#[derive(Clone, Debug)]
pub struct ContractionResult {
    /// Solution of f − 𝔹f = g on the output window.
    pub f: OrbitFunction,
    pub iterations: usize,
    /// ‖f_{j+1} − f_j‖_∞ per iteration.
    pub steps: Vec<f64>,
    /// Largest ratio of successive steps, ignoring steps below 1e-13.
    pub contraction_ratio: f64,
    /// ‖T(f) − f‖_∞ at the returned iterate.
    pub fixed_point_residual: f64,
    /// Residual of f − 𝔹f = g at points at least `margin` from the edges.
    pub interior_residual: f64,
    pub margin: usize,
    /// Largest ‖B − A‖·K(σ·)/d seen on the window.
    pub budget_usage: f64,
    /// Largest ‖B − A‖ on the window.
    pub perturbation_norm: f64,
}

/// Solves f − 𝔹f = g on [−radius, radius] by iterating f ↦ 𝔾(Δf(σ^{−1}·) + g),
/// with 𝔾 the Green operator of the certified cocycle and f = 0 off the window.
#[allow(clippy::too_many_arguments)]
pub fn contraction_solve(
    perturbed: &Cocycle,
    cert: &DichotomyCertificate,
    budget: &PerturbationBudget,
    g: &OrbitFunction,
    n_tail: usize,
    margin: usize,
    tol: f64,
    max_iters: usize,
) -> Result<ContractionResult> {
    let base = cert.base();
    if perturbed.dim() != cert.dim {
        return Err(LabError::InvalidParameter(
            "perturbation dimension mismatch".into(),
        ));
    }
    let lo = g.first_offset();
    let hi = g.last_offset();
    if hi - lo < 2 * margin as i64 {
        return Err(LabError::InvalidParameter(
            "window shorter than twice the margin".into(),
        ));
    }
    let anchor = *g.anchor();
    let solver = GreenSolver::new(cert, &anchor, lo, hi, n_tail)?;
    let frames = solver.frames();

    // Δ(σ^kω) for k in [lo − 1, hi − 1], checked against d/K(σ^{k+1}ω).
    let ks = cert.k_along(&anchor, lo, hi)?;
    let mut deltas = Vec::with_capacity((hi - lo + 1) as usize);
    let mut usage = 0.0_f64;
    let mut largest = 0.0_f64;
    for k in (lo - 1)..hi {
        let p = frames.point(k);
        let delta = perturbed.generator(base, p) - frames.generator(k);
        let norm = spectral_norm(&delta);
        let allowed = budget.allowance(ks[(k + 1 - lo) as usize]);
        usage = usage.max(norm / allowed);
        largest = largest.max(norm);
        if norm > allowed {
            return Err(LabError::BudgetViolated {
                offset: k,
                norm,
                budget: allowed,
            });
        }
        deltas.push(delta);
    }

    let dim = cert.dim;
    let apply = |f: &OrbitFunction| -> OrbitFunction {
        let values = (lo..=hi)
            .map(|k| {
                let prev = if k > lo {
                    f.value_at(k - 1).unwrap().clone()
                } else {
                    DVector::zeros(dim)
                };
                &deltas[(k - lo) as usize] * prev + g.value_at(k).unwrap()
            })
            .collect();
        let h = OrbitFunction::from_parts(base, anchor, lo, values);
        solver.solve(base, &h)
    };

    let mut f = solver.solve(base, g);
    let mut steps = Vec::new();
    let mut ratio = 0.0_f64;
    let mut converged = false;
    for _ in 0..max_iters {
        let next = apply(&f);
        let step = next.combine(1.0, &f, -1.0).sup_norm();
        if let Some(&last) = steps.last() {
            if last >= 1e-13 && step >= 1e-13 {
                ratio = ratio.max(step / last);
            }
        }
        steps.push(step);
        f = next;
        if step <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LabError::NoConvergence {
            iterations: steps.len(),
            last_step: steps.last().copied().unwrap_or(f64::NAN),
        });
    }
    let fixed_point_residual = apply(&f).combine(1.0, &f, -1.0).sup_norm();
    let m = margin as i64;
    let interior = f.restrict(lo + m, hi - m);
    let interior_residual = residual(perturbed, base, &interior, g);
    Ok(ContractionResult {
        f,
        iterations: steps.len(),
        steps,
        contraction_ratio: ratio,
        fixed_point_residual,
        interior_residual,
        margin,
        budget_usage: usage,
        perturbation_norm: largest,
    })
}

/// B = A + Δ with ‖Δ(ω)‖ = (1 − 10⁻⁶)·c(ω) in a direction drawn from
/// `trial_seed` and the point. K(σω) is read from `k_table` when present.
pub fn random_perturbation(
    cert: &DichotomyCertificate,
    budget: &PerturbationBudget,
    trial_seed: u64,
    k_table: Arc<HashMap<BasePoint, f64>>,
) -> Cocycle {
    let a = cert.cocycle().clone();
    let cert = cert.clone();
    let b = *budget;
    let dim = a.dim();
    let desc = format!(
        "{} + in-budget perturbation #{trial_seed:x}",
        a.descriptor()
    );
    Cocycle::new(dim, a.is_invertible(), desc, move |base, p| {
        let next = base.step(p, 1);
        let k = match k_table.get(&next) {
            Some(&k) => k,
            None => cert.k_at(&next).unwrap_or(f64::INFINITY),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(trial_seed ^ point_seed(p)));
        let g: DMatrix<f64> = gaussian_matrix(&mut rng, dim, dim);
        let scale = BUDGET_SHRINK * b.allowance(k) / spectral_norm(&g);
        a.generator(base, p) + g * scale
    })
}

/// K(σ^kω) for lo ≤ k ≤ hi keyed by point.
pub fn k_table(
    cert: &DichotomyCertificate,
    anchor: &BasePoint,
    lo: i64,
    hi: i64,
) -> Result<HashMap<BasePoint, f64>> {
    let ks = cert.k_along(anchor, lo, hi)?;
    let pts = cert.base().orbit(anchor, lo, ks.len());
    Ok(pts.into_iter().zip(ks).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbedSpectrum {
    pub trial: usize,
    pub exponents: Vec<f64>,
    pub classification: Option<Classification>,
    /// min |λ_i| of the perturbed spectrum.
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RobustnessTrial {
    pub trial: usize,
    pub contraction_ratio: f64,
    pub fixed_point_residual: f64,
    pub interior_residual: f64,
    pub iterations: usize,
    pub budget_usage: f64,
    pub perturbation_norm: f64,
    /// ‖f_{j+1} − f_j‖_∞ per iteration.
    pub steps: Vec<f64>,
    pub spectrum: PerturbedSpectrum,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RobustnessOptions {
    pub trials: usize,
    pub radius: usize,
    pub n_tail: usize,
    pub margin: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub spectrum_steps: usize,
    pub zero_tol: f64,
}

impl Default for RobustnessOptions {
    fn default() -> Self {
        RobustnessOptions {
            trials: 20,
            radius: 80,
            n_tail: 60,
            margin: 30,
            tol: 1e-12,
            max_iters: 200,
            spectrum_steps: 2000,
            zero_tol: 0.05,
        }
    }
}

/// Spectrum of `perturbed` from `omega` and its classification.
pub fn perturbed_check(
    perturbed: &Cocycle,
    base: &BaseSystem,
    omega: &BasePoint,
    steps: usize,
    zero_tol: f64,
    trial: usize,
) -> Result<PerturbedSpectrum> {
    let s = lyapunov_exponents(
        perturbed,
        base,
        omega,
        steps,
        10,
        crate::met::DEFAULT_GAP_TOL,
    )?;
    Ok(PerturbedSpectrum {
        trial,
        margin: s.min_abs(),
        classification: classify(&s, zero_tol).ok(),
        exponents: s.exponents,
    })
}

/// Random in-budget perturbations: fixed-point solve with a random g and the
/// perturbed spectrum, one trial per seed.
pub fn robustness_trials(
    cert: &DichotomyCertificate,
    budget: &PerturbationBudget,
    anchor: &BasePoint,
    seed: u64,
    options: &RobustnessOptions,
) -> Result<Vec<RobustnessTrial>> {
    let base = cert.base();
    let r = options.radius as i64;
    let table = Arc::new(k_table(
        cert,
        anchor,
        -r - 1,
        (options.spectrum_steps as i64).max(r) + 1,
    )?);
    let dim = cert.dim;
    (0..options.trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = mix64(seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let b = random_perturbation(cert, budget, trial_seed, table.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(trial_seed ^ 0x67));
            let g = OrbitFunction::from_fn(base, *anchor, -r, r, |_, _| {
                let v = gaussian_matrix(&mut rng, dim, 1);
                DVector::from_column_slice(v.as_slice())
            });
            let sol = contraction_solve(
                &b,
                cert,
                budget,
                &g,
                options.n_tail,
                options.margin,
                options.tol,
                options.max_iters,
            )?;
            let spectrum = perturbed_check(
                &b,
                base,
                anchor,
                options.spectrum_steps,
                options.zero_tol,
                t,
            )?;
            Ok(RobustnessTrial {
                trial: t,
                contraction_ratio: sol.contraction_ratio,
                fixed_point_residual: sol.fixed_point_residual,
                interior_residual: sol.interior_residual,
                iterations: sol.iterations,
                budget_usage: sol.budget_usage,
                perturbation_norm: sol.perturbation_norm,
                steps: sol.steps,
                spectrum,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dichotomy::{build_certificate, CertificateOptions};

    fn diag_cert() -> (DichotomyCertificate, BasePoint) {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.4);
        let c = Cocycle::diagonal(&[2.0, 0.5]).unwrap();
        let s = lyapunov_exponents(&c, &base, &p, 1000, 10, 0.02).unwrap();
        let opts = CertificateOptions {
            safety: 0.0,
            ..CertificateOptions::default()
        };
        (build_certificate(&c, &base, &s, &[p], &opts).unwrap(), p)
    }

    #[test]
    fn budget_values() {
        let (cert, _) = diag_cert();
        let b = budget(&cert, 0.5).unwrap();
        assert!((b.d - 1.0 / 6.0).abs() < 1e-12);
        assert!((b.q - 0.5).abs() < 1e-12);
        assert!(budget(&cert, 1.0).is_err());
        assert!(budget(&cert, 0.0).is_err());
    }

    #[test]
    fn zero_perturbation_is_green_solution() {
        let (cert, p) = diag_cert();
        let b = budget(&cert, 0.5).unwrap();
        let base = cert.base().clone();
        let g = OrbitFunction::from_fn(&base, p, -40, 40, |k, _| {
            DVector::from_vec(vec![(k as f64).sin(), 1.0])
        });
        let sol = contraction_solve(cert.cocycle(), &cert, &b, &g, 50, 15, 1e-13, 10).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.interior_residual < 1e-9);
    }

    #[test]
    fn over_budget_is_rejected() {
        let (cert, p) = diag_cert();
        let b = budget(&cert, 0.5).unwrap();
        let base = cert.base().clone();
        let big =
            Cocycle::constant(DMatrix::from_row_slice(2, 2, &[2.0, 0.2, 0.0, 0.5]), "big").unwrap();
        let g = OrbitFunction::zeros(&base, p, -20, 20, 2);
        let e = contraction_solve(&big, &cert, &b, &g, 30, 5, 1e-12, 10).unwrap_err();
        assert_eq!(e.name(), "BudgetViolated");
    }

    #[test]
    fn constant_perturbation_converges() {
        let (cert, p) = diag_cert();
        let b = budget(&cert, 0.5).unwrap();
        let base = cert.base().clone();
        let pert = Cocycle::constant(DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 0.5]), "near")
            .unwrap();
        let g =
            OrbitFunction::from_fn(&base, p, -60, 60, |_, _| DVector::from_vec(vec![1.0, -1.0]));
        let sol = contraction_solve(&pert, &cert, &b, &g, 50, 30, 1e-12, 100).unwrap();
        assert!(sol.contraction_ratio <= b.q + 0.05);
        assert!(sol.interior_residual < 1e-8, "{}", sol.interior_residual);
    }
}
