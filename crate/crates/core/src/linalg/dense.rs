//! Dense D²×D² builds of superoperators, used for small-D fallbacks and as
//! independent reference paths. Vectorization is row-major: `vec(X)[i*D+j] = X[i,j]`,
//! so `A⊗B̄` (ordinary Kronecker product) acts as `X ↦ A X B†`.

use nalgebra::{DMatrix, DVector, Schur};
use ndarray::{Array1, Array2};

use super::{from_nalgebra, to_nalgebra, ComplexMatrix, C64, ONE, ZERO};

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (n, m) = a.dim();
    let (p, q) = b.dim();
    Array2::from_shape_fn((n * p, m * q), |(i, j)| a[(i / p, j / q)] * b[(i % p, j % q)])
}

pub fn vectorize(x: &ComplexMatrix) -> Array1<C64> {
    Array1::from_iter(x.iter().cloned())
}

pub fn unvectorize(v: &Array1<C64>, d: usize) -> ComplexMatrix {
    Array2::from_shape_fn((d, d), |(i, j)| v[i * d + j])
}

pub fn unit_matrix(d: usize, k: usize) -> ComplexMatrix {
    let mut e = Array2::zeros((d, d));
    e[(k / d, k % d)] = ONE;
    e
}

/// Materializes a linear map on D×D matrices as a D²×D² matrix.
pub fn dense_operator(d: usize, mut f: impl FnMut(&ComplexMatrix) -> ComplexMatrix) -> ComplexMatrix {
    let n = d * d;
    let mut m = Array2::zeros((n, n));
    for k in 0..n {
        let col = f(&unit_matrix(d, k));
        for (i, z) in col.iter().enumerate() {
            m[(i, k)] = *z;
        }
    }
    m
}

/// Eigenvalues and right eigenvectors (columns, unit norm) of a general complex matrix,
/// through a complex Schur form and triangular back-substitution.
pub fn eig_general(a: &ComplexMatrix) -> (Vec<C64>, ComplexMatrix) {
    let n = a.nrows();
    let schur = Schur::new(to_nalgebra(a));
    let (u, t) = schur.unpack();
    let vals: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let mut vecs = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let mut y = DVector::<C64>::zeros(n);
        y[k] = ONE;
        for i in (0..k).rev() {
            let mut s = ZERO;
            for j in i + 1..=k {
                s += t[(i, j)] * y[j];
            }
            let mut den = t[(i, i)] - vals[k];
            if den.norm() < 1e-14 * scale {
                den = C64::new(1e-14 * scale, 0.0);
            }
            y[i] = -s / den;
        }
        let x = &u * y;
        let nrm = x.norm();
        vecs.set_column(k, &(x / C64::new(nrm, 0.0)));
    }
    (vals, from_nalgebra(&vecs))
}

pub fn eigenvalues_general(a: &ComplexMatrix) -> Vec<C64> {
    Schur::new(to_nalgebra(a))
        .eigenvalues()
        .map(|v| v.iter().cloned().collect())
        .unwrap_or_else(|| eig_general(a).0)
}

/// Unit vector spanning the (numerical) null space of `a`: the right singular vector of
/// the smallest singular value. Returns it with that singular value.
pub fn null_vector(a: &ComplexMatrix) -> (Array1<C64>, f64) {
    let n = a.ncols();
    let svd = to_nalgebra(a).svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (k, s) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(k, s)| (k, *s))
        .unwrap();
    let v = Array1::from_shape_fn(n, |j| v_t[(k, j)].conj());
    (v, s)
}

pub fn dense_solve(a: &ComplexMatrix, b: &Array1<C64>) -> Option<Array1<C64>> {
    let lu = to_nalgebra(a).lu();
    let rhs = DVector::from_iterator(b.len(), b.iter().cloned());
    lu.solve(&rhs).map(|x| Array1::from_iter(x.iter().cloned()))
}
