//! Dense kernels for the small (3x3 and 5x5) real and complex matrices that
//! arise from modal reduction.
//!
//! Eigenvalues come from a real Schur form, singular values from a complex
//! SVD, and the exponential from scaling and squaring; all three are backed
//! by `nalgebra`. Linear solves run LU on a row-equilibrated system followed
//! by iterative refinement, which matters for the badly scaled resolvent
//! systems at large spectral values.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type RVec = DVector<f64>;
pub type CVec = DVector<Complex64>;

const MAX_ITER: usize = 10_000;

fn check_square<T: nalgebra::Scalar>(m: &DMatrix<T>, routine: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::numerical(
            routine,
            format!("expected a non-empty square matrix, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

fn check_finite_r(m: &RMat, routine: &'static str) -> Result<()> {
    check_square(m, routine)?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical(routine, "non-finite entry"));
    }
    Ok(())
}

fn check_finite_c(m: &CMat, routine: &'static str) -> Result<()> {
    check_square(m, routine)?;
    if m.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::numerical(routine, "non-finite entry"));
    }
    Ok(())
}

/// Promotes a real matrix to complex.
pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Eigenvalues with multiplicity, sorted by (real part, imaginary part).
pub fn eigenvalues(m: &RMat) -> Result<Vec<Complex64>> {
    check_finite_r(m, "eigenvalues")?;
    let schur = Schur::try_new(m.clone(), f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::numerical("eigenvalues", "Schur iteration did not converge"))?;
    let mut ev: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(ev)
}

/// Largest real part over the spectrum of `m`.
pub fn spectral_abscissa(m: &RMat) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Eigenvalues of the symmetric part `(m + m^T) / 2`, ascending.
pub fn symmetric_eigenvalues(m: &RMat) -> Result<Vec<f64>> {
    check_finite_r(m, "symmetric_eigenvalues")?;
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::numerical("symmetric_eigenvalues", "iteration did not converge"))?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Singular values of a complex matrix, descending.
pub fn singular_values_c(m: &CMat) -> Result<Vec<f64>> {
    check_finite_c(m, "singular_values")?;
    let svd = SVD::try_new(m.clone(), false, false, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::numerical("singular_values", "SVD did not converge"))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Singular values of a real matrix, descending.
pub fn singular_values(m: &RMat) -> Result<Vec<f64>> {
    check_finite_r(m, "singular_values")?;
    let svd = SVD::try_new(m.clone(), false, false, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::numerical("singular_values", "SVD did not converge"))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

pub fn smallest_singular_value(m: &CMat) -> Result<f64> {
    Ok(*singular_values_c(m)?.last().expect("non-empty"))
}

/// Spectral norm (largest singular value).
pub fn operator_norm(m: &RMat) -> Result<f64> {
    Ok(singular_values(m)?[0])
}

pub fn operator_norm_c(m: &CMat) -> Result<f64> {
    Ok(singular_values_c(m)?[0])
}

/// Solves `m x = rhs` for complex `m`.
///
/// Rejects systems with `sigma_min(m) <= 1e-14 ||m||`.
pub fn solve(m: &CMat, rhs: &CVec) -> Result<CVec> {
    check_finite_c(m, "solve")?;
    if rhs.len() != m.nrows() {
        return Err(Error::numerical("solve", "dimension mismatch"));
    }
    let s = singular_values_c(m)?;
    let (norm, smin) = (s[0], *s.last().expect("non-empty"));
    if !(smin > 1e-14 * norm) {
        return Err(Error::Singular {
            sigma_min: smin,
            norm,
        });
    }
    // Row equilibration: scale each row by its largest modulus.
    let n = m.nrows();
    let mut scaled = m.clone();
    let mut b = rhs.clone();
    for i in 0..n {
        let r = (0..n).map(|j| m[(i, j)].norm()).fold(0.0, f64::max);
        if r > 0.0 {
            let inv = 1.0 / r;
            for j in 0..n {
                scaled[(i, j)] *= inv;
            }
            b[i] *= inv;
        }
    }
    let lu = scaled.clone().lu();
    let mut x = lu
        .solve(&b)
        .ok_or_else(|| Error::numerical("solve", "LU factorization is singular"))?;
    for _ in 0..3 {
        let r = &b - &scaled * &x;
        match lu.solve(&r) {
            Some(dx) => x += dx,
            None => break,
        }
    }
    Ok(x)
}

/// Real counterpart of [`solve`].
pub fn solve_real(m: &RMat, rhs: &RVec) -> Result<RVec> {
    let x = solve(&to_complex(m), &rhs.map(|v| Complex64::new(v, 0.0)))?;
    Ok(x.map(|z| z.re))
}

/// Largest eigenvalue of the symmetric part `(m + m^T) / 2` (logarithmic norm).
pub fn log_norm(m: &RMat) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `exp(t m)` by scaling and squaring with a Padé approximant.
///
/// Fails with [`Error::Overflow`] when `t * abscissa(m) > 700`.
pub fn expm(m: &RMat, t: f64) -> Result<RMat> {
    check_finite_r(m, "expm")?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::numerical("expm", format!("time must be finite and >= 0, got {t}")));
    }
    let n = m.nrows();
    if t == 0.0 {
        return Ok(RMat::identity(n, n));
    }
    if t * log_norm(m) > 700.0 {
        let growth = t * spectral_abscissa(m)?;
        if growth > 700.0 {
            return Err(Error::Overflow(growth));
        }
    }
    let scaled = m * t;
    let e = scaled.exp();
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("expm", "non-finite result"));
    }
    Ok(e)
}
