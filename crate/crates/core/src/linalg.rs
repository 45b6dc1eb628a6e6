//! Small dense linear-algebra helpers shared by the numerical modules.
//!
//! Everything works on `nalgebra` dynamic matrices; dimensions in this crate
//! are desk-scale (d ≤ 8 in practice).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Spectral (operator 2-) norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.ncols() == 1 {
        return m.column(0).norm();
    }
    if m.nrows() == 1 {
        return m.row(0).norm();
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Smallest singular value.
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(f64::INFINITY, |acc, &s| acc.min(s))
}

/// Thin QR with the diagonal of `R` made non-negative.
pub fn qr_positive(m: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..r.nrows().min(r.ncols()) {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    (q, r)
}

/// Orthonormal basis of the orthogonal complement of the column span of
/// `basis` (assumed orthonormal).
pub fn orthogonal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let d = basis.nrows();
    let k = basis.ncols();
    if k == 0 {
        return DMatrix::identity(d, d);
    }
    if k >= d {
        return DMatrix::zeros(d, 0);
    }
    // Pivoted Gram-Schmidt over the standard basis, two projection passes.
    // An SVD of I - BBᵀ is not reliable here: the 2x2 path can return wrong
    // singular vectors for the exactly rank-deficient projector.
    let mut span = basis.clone();
    let mut out = DMatrix::zeros(d, d - k);
    for c in 0..(d - k) {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..d {
            let mut v = DVector::zeros(d);
            v[i] = 1.0;
            for _ in 0..2 {
                let coeff = span.transpose() * &v;
                v -= &span * coeff;
            }
            let n = v.norm();
            if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
                best = Some((n, v));
            }
        }
        let (n, v) = best.expect("d > 0");
        let v = v / n;
        out.set_column(c, &v);
        span = DMatrix::from_fn(d, span.ncols() + 1, |r, j| {
            if j < span.ncols() {
                span[(r, j)]
            } else {
                v[r]
            }
        });
    }
    out
}

/// Moore-Penrose pseudo-inverse via SVD.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let tol = 1e-14
        * svd
            .singular_values
            .iter()
            .fold(0.0_f64, |acc, &s| acc.max(s))
        * m.nrows().max(m.ncols()) as f64;
    svd.pseudo_inverse(tol)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// Oblique projection onto span(`onto`) along span(`along`).
///
/// The two bases must together span the whole space.
pub fn oblique_projection(onto: &DMatrix<f64>, along: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = onto.nrows();
    let s = onto.ncols();
    let frame = DMatrix::from_fn(d, d, |r, c| {
        if c < s {
            onto[(r, c)]
        } else {
            along[(r, c - s)]
        }
    });
    let inv = frame.clone().try_inverse()?;
    let mut sel = DMatrix::zeros(d, d);
    for i in 0..s {
        sel[(i, i)] = 1.0;
    }
    Some(&frame * sel * inv)
}

/// Sine of the largest principal angle between the column spans of two
/// orthonormal bases of equal dimension. Zero means identical subspaces.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 && b.ncols() == 0 {
        return 0.0;
    }
    let (qa, _) = qr_positive(a.clone());
    let (qb, _) = qr_positive(b.clone());
    // ‖(I - P_b) Q_a‖ is the sine of the largest principal angle.
    let resid = &qa - &qb * (qb.transpose() * &qa);
    spectral_norm(&resid)
}

/// Orthonormalise the columns of `m`.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    qr_positive(m.clone()).0
}

/// Gaussian random matrix.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Uniformly distributed unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

/// Haar-distributed orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    qr_positive(gaussian_matrix(rng, d, d)).0
}
