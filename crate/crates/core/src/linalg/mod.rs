//! Dense complex-matrix primitives and the matrix-free superoperator toolkit.
//!
//! Matrices are `ndarray` arrays of `Complex64`. All D×D objects (Q, R, V, W,
//! Y and the fixed points l, r) live here; superoperators acting on them are
//! never materialized outside of the `dense` helpers.

pub mod dense;
pub mod eigs;
pub mod fixed_point;
pub mod krylov;
pub mod transfer;

use nalgebra::DMatrix;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = Array2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn zeros(d: usize) -> ComplexMatrix {
    Array2::zeros((d, d))
}

pub fn eye(d: usize) -> ComplexMatrix {
    Array2::eye(d)
}

pub fn scalar(z: C64) -> ComplexMatrix {
    Array2::from_elem((1, 1), z)
}

/// Conjugate transpose, returned in standard (row-major) layout.
pub fn dagger(a: &ComplexMatrix) -> ComplexMatrix {
    let (n, m) = a.dim();
    Array2::from_shape_fn((m, n), |(i, j)| a[(j, i)].conj())
}

pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.dot(b)
}

/// `c <- alpha * a * b + c`
#[inline]
pub fn gemm_acc(alpha: C64, a: &ComplexMatrix, b: &ComplexMatrix, c: &mut ComplexMatrix) {
    general_mat_mul(alpha, a, b, ONE, c);
}

pub fn mul3(a: &ComplexMatrix, b: &ComplexMatrix, c: &ComplexMatrix) -> ComplexMatrix {
    a.dot(b).dot(c)
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.dot(b) - b.dot(a)
}

pub fn trace(a: &ComplexMatrix) -> C64 {
    a.diag().iter().sum()
}

/// `Tr(a b)` without forming the product.
pub fn trace_prod(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    let mut s = ZERO;
    for ((i, j), x) in a.indexed_iter() {
        s += x * b[(j, i)];
    }
    s
}

/// Trace inner product `Tr(a† b)`.
pub fn inner(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    let mut s = ZERO;
    Zip::from(a).and(b).for_each(|x, y| s += x.conj() * y);
    s
}

pub fn norm(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `y <- y + alpha x`
pub fn axpy(alpha: C64, x: &ComplexMatrix, y: &mut ComplexMatrix) {
    Zip::from(y).and(x).for_each(|y, &x| *y += alpha * x);
}

pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + &dagger(a)).mapv(|z| z * 0.5)
}

/// ‖a − a†‖ / max(‖a‖, tiny)
pub fn hermiticity_defect(a: &ComplexMatrix) -> f64 {
    norm(&(a - &dagger(a))) / norm(a).max(f64::MIN_POSITIVE)
}

pub fn all_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn check_square(a: &ComplexMatrix, d: usize, name: &str) -> Result<()> {
    if a.dim() != (d, d) {
        return Err(Error::DimensionMismatch(format!(
            "{name} is {:?}, expected {d}x{d}",
            a.dim()
        )));
    }
    Ok(())
}

/// Matrix with i.i.d. complex Gaussian entries of variance `scale²`.
pub fn random_matrix<R: Rng + ?Sized>(d: usize, scale: f64, rng: &mut R) -> ComplexMatrix {
    Array2::from_shape_fn((d, d), |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * (scale / std::f64::consts::SQRT_2)
    })
}

pub fn random_hermitian<R: Rng + ?Sized>(d: usize, scale: f64, rng: &mut R) -> ComplexMatrix {
    hermitian_part(&random_matrix(d, scale, rng))
}

pub fn to_nalgebra(a: &ComplexMatrix) -> DMatrix<C64> {
    let (n, m) = a.dim();
    DMatrix::from_fn(n, m, |i, j| a[(i, j)])
}

pub fn from_nalgebra(a: &DMatrix<C64>) -> ComplexMatrix {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

/// Eigendecomposition of a hermitian matrix, eigenvalues ascending.
pub fn herm_eig(a: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let eig = nalgebra::SymmetricEigen::new(to_nalgebra(&hermitian_part(a)));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let n = order.len();
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

/// `f(a)` for hermitian `a` through its spectral decomposition.
pub fn herm_apply(a: &ComplexMatrix, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let (vals, u) = herm_eig(a);
    let mut scaled = u.clone();
    for (j, &v) in vals.iter().enumerate() {
        let fv = f(v);
        scaled.column_mut(j).mapv_inplace(|z| z * fv);
    }
    scaled.dot(&dagger(&u))
}

/// Square root and inverse square root of a hermitian positive-definite matrix.
#[derive(Clone, Debug)]
pub struct HermSqrt {
    pub sqrt: ComplexMatrix,
    pub inv_sqrt: ComplexMatrix,
    pub inv: ComplexMatrix,
    pub min_eig: f64,
    pub cond: f64,
}

/// Fails with [`Error::RankDeficient`] once the condition number exceeds `max_cond`;
/// no regularization is attempted.
pub fn herm_sqrt(a: &ComplexMatrix, max_cond: f64) -> Result<HermSqrt> {
    let (vals, u) = herm_eig(a);
    let min = vals[0];
    let max = *vals.last().unwrap();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(min > 0.0) || cond > max_cond {
        return Err(Error::RankDeficient { min_eig: min, cond });
    }
    let ud = dagger(&u);
    let build = |f: &dyn Fn(f64) -> f64| {
        let mut s = u.clone();
        for (j, &v) in vals.iter().enumerate() {
            let fv = f(v);
            s.column_mut(j).mapv_inplace(|z| z * fv);
        }
        s.dot(&ud)
    };
    Ok(HermSqrt {
        sqrt: build(&|v| v.sqrt()),
        inv_sqrt: build(&|v| 1.0 / v.sqrt()),
        inv: build(&|v| 1.0 / v),
        min_eig: min,
        cond,
    })
}

/// Dense LU inverse.
pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    to_nalgebra(a)
        .try_inverse()
        .map(|m| from_nalgebra(&m))
        .ok_or_else(|| Error::InvalidParameter("singular matrix".into()))
}

pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let mut m: f64 = 0.0;
    Zip::from(a).and(b).for_each(|x, y| m = m.max((x - y).norm()));
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trace_prod_matches_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(5, 1.0, &mut rng);
        let b = random_matrix(5, 1.0, &mut rng);
        assert!((trace_prod(&a, &b) - trace(&a.dot(&b))).norm() < 1e-12);
        assert!((inner(&a, &b) - trace(&dagger(&a).dot(&b))).norm() < 1e-12);
    }

    #[test]
    fn sqrt_and_inverse_sqrt() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(4, 1.0, &mut rng);
        let a = x.dot(&dagger(&x)) + eye(4);
        let s = herm_sqrt(&a, 1e12).unwrap();
        assert!(max_abs_diff(&s.sqrt.dot(&s.sqrt), &a) < 1e-12);
        assert!(max_abs_diff(&s.inv_sqrt.dot(&a).dot(&s.inv_sqrt), &eye(4)) < 1e-12);
        assert!(max_abs_diff(&s.inv.dot(&a), &eye(4)) < 1e-12);
    }

    #[test]
    fn singular_sqrt_is_refused() {
        let mut a = eye(3);
        a[(2, 2)] = C64::new(1e-20, 0.0);
        assert!(matches!(herm_sqrt(&a, 1e14), Err(Error::RankDeficient { .. })));
    }
}
