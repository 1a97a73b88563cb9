//! Dense complex kernels: Hermitian eigendecomposition, null vectors by
//! inverse iteration, and a Schur-based fallback for general spectra.
//!
//! Matrices are small (a few hundred rows at most), so everything is dense.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Default tolerance for null-vector extraction.
pub const NULL_TOL: f64 = 1e-10;
/// Default tolerance for eigenvector orthogonality.
pub const EIG_TOL: f64 = 1e-8;
/// Eigenvalues closer than this are treated as one degenerate level.
pub const DEGENERACY_TOL: f64 = 1e-7;

const MAX_INVERSE_ITERS: usize = 500;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn adjoint(a: &CMatrix) -> CMatrix {
    a.adjoint()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

/// `|u><v|`
pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    frobenius(&(a - a.adjoint()))
}

pub fn is_finite_matrix(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn is_finite_vector(v: &CVector) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn ensure_finite(a: &CMatrix, what: &str) -> Result<()> {
    if is_finite_matrix(a) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{what} has non-finite entries")))
    }
}

fn ensure_square(a: &CMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Err(Error::InvalidParams("empty matrix".into()));
    }
    Ok(a.nrows())
}

pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    ensure_square(a)?;
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParams("matrix is singular".into()))
}

#[derive(Debug, Clone)]
pub struct EigResult {
    /// Sorted by real part, ascending.
    pub eigenvalues: Vec<Complex64>,
    /// Right eigenvectors as unit-norm columns, in eigenvalue order.
    pub vectors: CMatrix,
    pub residual_norms: Vec<f64>,
}

impl EigResult {
    pub fn real_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|z| z.re).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_norms.iter().cloned().fold(0.0, f64::max)
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Inputs whose anti-Hermitian part exceeds `10 * tol * ||A||_F` are
/// rejected. The Hermitian part is decomposed and residuals are measured
/// against it.
pub fn hermitian_eig(a: &CMatrix, tol: f64) -> Result<EigResult> {
    let n = ensure_square(a)?;
    ensure_finite(a, "input")?;
    let defect = hermiticity_defect(a);
    let allowed = 10.0 * tol * frobenius(a);
    if defect > allowed {
        return Err(Error::NonHermitianInput { defect, allowed });
    }
    let h = (a + a.adjoint()).scale(0.5);
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 100 * n * n + 1000)
        .ok_or_else(|| Error::ConvergenceFailure("Hermitian eigensolver".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut vectors = CMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    let mut residual_norms = Vec::with_capacity(n);
    for (k, &src) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[src];
        let mut v = eig.eigenvectors.column(src).into_owned();
        let norm = v.norm();
        v /= c(norm);
        let r = (&h * &v - v.scale(lambda)).norm();
        if r > tol.max(f64::EPSILON * 100.0) {
            return Err(Error::ConvergenceFailure(format!(
                "eigenpair {k} residual {r:.3e} exceeds {tol:.3e}"
            )));
        }
        vectors.set_column(k, &v);
        eigenvalues.push(c(lambda));
        residual_norms.push(r);
    }
    Ok(EigResult {
        eigenvalues,
        vectors,
        residual_norms,
    })
}

/// `exp(-i h dt)` for Hermitian `h`, through its eigendecomposition.
pub fn unitary_propagator(h: &CMatrix, dt: f64) -> Result<CMatrix> {
    let eig = hermitian_eig(h, EIG_TOL)?;
    let n = h.nrows();
    let phases = CMatrix::from_diagonal(&CVector::from_iterator(
        n,
        eig.eigenvalues.iter().map(|l| (-I * l.re * dt).exp()),
    ));
    Ok(&eig.vectors * phases * eig.vectors.adjoint())
}

/// Groups indices of an ascending list into runs whose neighbours differ by
/// at most `tol`.
pub fn group_degenerate(sorted: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (x - sorted[*g.last().unwrap()]).abs() <= tol => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Smallest `want` singular values of `a`, ascending, with their right
/// singular vectors as columns.
fn smallest_singular(a: &CMatrix, want: usize) -> Result<(CMatrix, Vec<f64>)> {
    let n = a.nrows();
    let want = want.min(n);
    let svd = a
        .clone()
        .try_svd(false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::ConvergenceFailure("SVD did not converge".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::ConvergenceFailure("SVD returned no right vectors".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let q = CMatrix::from_fn(n, want, |i, j| v_t[(order[j], i)].conj());
    let sigmas = order[..want].iter().map(|&i| svd.singular_values[i]).collect();
    Ok((q, sigmas))
}

/// Unit vector minimizing `||A v||`, with the attained value.
///
/// If the second smallest singular value lies within `10 * tol` of the first
/// the null space is reported as degenerate.
pub fn near_null_vector(a: &CMatrix, tol: f64) -> Result<(CVector, f64)> {
    let n = ensure_square(a)?;
    ensure_finite(a, "input")?;
    if n == 1 {
        return Ok((CVector::from_element(1, ONE), a[(0, 0)].norm()));
    }
    let (q, sigmas) = smallest_singular(a, 2)?;
    if sigmas[1] - sigmas[0] <= 10.0 * tol {
        return Err(Error::DegenerateNullSpace {
            sigma_min: sigmas[0],
            sigma_next: sigmas[1],
        });
    }
    Ok((q.column(0).into_owned(), sigmas[0]))
}

/// `k` orthonormal vectors with `||A v|| <= tol`.
pub fn null_space_basis(a: &CMatrix, k: usize, tol: f64) -> Result<Vec<CVector>> {
    let n = ensure_square(a)?;
    ensure_finite(a, "input")?;
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::RankMismatch {
            requested: k,
            found: n,
        });
    }
    let (q, sigmas) = smallest_singular(a, (k + 2).min(n))?;
    let found = sigmas.iter().take_while(|&&s| s <= tol).count();
    if found < k {
        return Err(Error::RankMismatch { requested: k, found });
    }
    Ok((0..k).map(|j| q.column(j).into_owned()).collect())
}

/// All eigenvalues of a general square matrix from its complex Schur form,
/// sorted by real part.
pub fn general_eigenvalues(a: &CMatrix) -> Result<Vec<Complex64>> {
    let n = ensure_square(a)?;
    ensure_finite(a, "input")?;
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 1000 * n + 1000)
        .ok_or_else(|| Error::ConvergenceFailure("Schur decomposition".into()))?;
    let mut vals: Vec<Complex64> = schur
        .eigenvalues()
        .ok_or_else(|| Error::ConvergenceFailure("Schur form not triangular".into()))?
        .iter()
        .cloned()
        .collect();
    vals.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(vals)
}

/// Eigenpair with the smallest real part of a general matrix.
///
/// The eigenvalue is located from the Schur form and then refined by shifted
/// inverse iteration, which also yields the right eigenvector.
pub fn lowest_eigenpair(a: &CMatrix, tol: f64) -> Result<(Complex64, CVector)> {
    let n = ensure_square(a)?;
    if n == 1 {
        return Ok((a[(0, 0)], CVector::from_element(1, ONE)));
    }
    let shift = general_eigenvalues(a)?[0];
    let scale = 1.0 + frobenius(a);
    let mut m = a - CMatrix::identity(n, n).scale_shift(shift);
    let mut lu = m.clone().lu();
    if lu.solve(&CVector::from_element(n, ONE)).is_none() {
        m += CMatrix::identity(n, n).scale(1e-14 * scale);
        lu = m.lu();
    }
    let mut v = CVector::from_fn(n, |i, _| {
        let x = (i as f64 + 1.0) * 0.754_877_666;
        Complex64::new(x.sin() + 0.1, (1.7 * x).cos())
    });
    v /= c(v.norm());
    for _ in 0..MAX_INVERSE_ITERS {
        let y = lu
            .solve(&v)
            .ok_or_else(|| Error::ConvergenceFailure("LU solve failed".into()))?;
        v = &y / c(y.norm());
        let av = a * &v;
        let lambda = v.dotc(&av);
        let r = (&av - v.scale_c(lambda)).norm();
        if r <= tol * scale {
            return Ok((lambda, v));
        }
    }
    Err(Error::ConvergenceFailure(
        "shifted inverse iteration for lowest eigenpair".into(),
    ))
}

trait ScaleShift {
    fn scale_shift(self, s: Complex64) -> CMatrix;
}

impl ScaleShift for CMatrix {
    fn scale_shift(self, s: Complex64) -> CMatrix {
        self.map(|z| z * s)
    }
}

trait ScaleC {
    fn scale_c(&self, s: Complex64) -> CVector;
}

impl ScaleC for CVector {
    fn scale_c(&self, s: Complex64) -> CVector {
        self.map(|z| z * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(entries: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(
            entries.len(),
            entries.iter().map(|&x| c(x)),
        ))
    }

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = CMatrix::from_fn(n, n, |_, _| Complex64::new(next(), next()));
        (&m + m.adjoint()).scale(0.5)
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let r = hermitian_eig(&CMatrix::identity(2, 2), EIG_TOL).unwrap();
        assert_eq!(r.real_eigenvalues(), vec![1.0, 1.0]);
        let g = r.vectors.adjoint() * &r.vectors;
        assert!(frobenius(&(g - CMatrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn pauli_z_sorted() {
        let r = hermitian_eig(&diag(&[1.0, -1.0]), EIG_TOL).unwrap();
        assert_eq!(r.real_eigenvalues(), vec![-1.0, 1.0]);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = ONE;
        assert!(matches!(
            hermitian_eig(&m, EIG_TOL),
            Err(Error::NonHermitianInput { .. })
        ));
    }

    #[test]
    fn random_hermitian_orthonormal_and_residuals() {
        for (n, seed) in [(5, 1), (40, 2), (200, 3)] {
            let a = random_hermitian(n, seed);
            let r = hermitian_eig(&a, EIG_TOL).unwrap();
            let g = r.vectors.adjoint() * &r.vectors;
            assert!(frobenius(&(g - CMatrix::identity(n, n))) <= 1e-8);
            assert!(r.max_residual() <= EIG_TOL);
            let vals = r.real_eigenvalues();
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn null_vector_of_diagonal() {
        let (v, s) = near_null_vector(&diag(&[0.0, 1.0, 2.0]), NULL_TOL).unwrap();
        assert!(s < 1e-14);
        assert!((v[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_vector_of_scalar() {
        let m = CMatrix::from_element(1, 1, c(3.0));
        let (v, s) = near_null_vector(&m, NULL_TOL).unwrap();
        assert_eq!(v[0], ONE);
        assert_eq!(s, 3.0);
    }

    #[test]
    fn null_vector_flags_degeneracy() {
        let r = near_null_vector(&diag(&[0.0, 0.0, 5.0]), NULL_TOL);
        assert!(matches!(r, Err(Error::DegenerateNullSpace { .. })));
    }

    #[test]
    fn null_space_of_zero_matrix() {
        let basis = null_space_basis(&CMatrix::zeros(2, 2), 2, NULL_TOL).unwrap();
        assert_eq!(basis.len(), 2);
        assert!((basis[0].dotc(&basis[1])).norm() < 1e-12);
        for v in &basis {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn null_space_rank_mismatch() {
        let r = null_space_basis(&diag(&[0.0, 0.0, 5.0]), 3, NULL_TOL);
        assert!(matches!(
            r,
            Err(Error::RankMismatch {
                requested: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn null_vector_agrees_with_eig_on_psd() {
        let b = random_hermitian(30, 9);
        let a = &b * &b;
        let (v, s) = near_null_vector(&a, NULL_TOL).unwrap();
        let lam = hermitian_eig(&a, EIG_TOL).unwrap().eigenvalues[0].re;
        assert!((s - lam).abs() < 1e-8);
        assert!(((&a * &v).norm() - s).abs() <= NULL_TOL);
    }

    #[test]
    fn unitary_propagator_matches_closed_form() {
        let u = unitary_propagator(&diag(&[0.0, 1.0]), 0.3).unwrap();
        assert!((u[(0, 0)] - ONE).norm() < 1e-14);
        assert!((u[(1, 1)] - (-I * 0.3).exp()).norm() < 1e-14);
        assert!(u[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn general_spectrum_of_triangular() {
        let mut m = diag(&[3.0, 1.0, 2.0]);
        m[(0, 1)] = c(5.0);
        let vals = general_eigenvalues(&m).unwrap();
        let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
        for (a, b) in re.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let (lam, v) = lowest_eigenpair(&m, 1e-12).unwrap();
        assert!((lam - ONE).norm() < 1e-10);
        assert!((&m * &v - v.map(|z| z * lam)).norm() < 1e-10);
    }

    #[test]
    fn grouping() {
        let g = group_degenerate(&[0.0, 1e-9, 1.0, 2.0, 2.0 + 5e-8], DEGENERACY_TOL);
        assert_eq!(g, vec![vec![0, 1], vec![2], vec![3, 4]]);
    }
}
