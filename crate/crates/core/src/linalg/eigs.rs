//! Lowest eigenpairs of a hermitian linear map on D×D matrices.
//!
//! Thick-restart Lanczos with full reorthogonalization. The projected matrix is
//! recomputed from inner products with the stored images, so restarts keep Ritz
//! vectors exactly and the final residuals are measured, not estimated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dense::{dense_operator, unvectorize};
use super::{axpy, herm_eig, inner, norm, random_matrix, ComplexMatrix, C64, ZERO};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct EigOptions {
    /// Convergence: `‖op(Y) − E Y‖ ≤ tol · max(1, |E|)` for unit `Y`.
    pub tol: f64,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Problems with at most this many unknowns are diagonalized densely.
    pub dense_max: usize,
    /// Fail when the projected matrix has a relative antihermitian part above this.
    pub hermiticity_tol: f64,
    pub seed: u64,
    /// Optional starting direction mixed into the random start.
    pub start: Option<ComplexMatrix>,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            krylov_dim: 0,
            max_restarts: 400,
            dense_max: 100,
            hermiticity_tol: 1e-4,
            seed: 0x5eed,
            start: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: ComplexMatrix,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct EigResult {
    pub pairs: Vec<EigenPair>,
    pub applications: usize,
    /// Relative antihermitian part of the last projected matrix.
    pub hermiticity_defect: f64,
    /// Residual accepted in place of the tolerance when rounding makes the operator
    /// measurably non-hermitian (zero when the tolerance itself was met).
    pub residual_floor: f64,
    /// Indices `i` with `E_{i+1} − E_i` below the tolerance scale.
    pub degenerate: Vec<usize>,
}

fn converged(res: f64, val: f64, tol: f64, floor: f64) -> bool {
    res <= (tol * val.abs().max(1.0)).max(floor)
}

fn mark_degenerate(pairs: &[EigenPair], tol: f64) -> Vec<usize> {
    pairs
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1].value - w[0].value).abs() <= 10.0 * tol * w[0].value.abs().max(1.0))
        .map(|(i, _)| i)
        .collect()
}

/// Dense Rayleigh-Ritz of a small basis: hermitized `G_ij = ⟨v_i, A v_j⟩`.
/// Also returns the relative antihermitian part `‖G − G†‖/‖G‖` and the residual floor it
/// implies, `10‖G − G†‖`: rounding in an ill-conditioned operator shows up there first.
fn projected(basis: &[ComplexMatrix], images: &[ComplexMatrix]) -> (Vec<f64>, ComplexMatrix, f64, f64) {
    let m = basis.len();
    let mut g = ComplexMatrix::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            g[(i, j)] = inner(&basis[i], &images[j]);
        }
    }
    let gnorm = norm(&g).max(f64::MIN_POSITIVE);
    let anti = norm(&(&g - &super::dagger(&g)));
    let (vals, vecs) = herm_eig(&g);
    (vals, vecs, anti / gnorm, 10.0 * anti)
}

fn combine(coeffs: ndarray::ArrayView1<C64>, mats: &[ComplexMatrix]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(mats[0].raw_dim());
    for (c, m) in coeffs.iter().zip(mats) {
        if *c != ZERO {
            axpy(*c, m, &mut out);
        }
    }
    out
}

/// Orthogonalizes `w` against `basis` (twice) and normalizes; `None` if it collapses.
fn orthonormalize(mut w: ComplexMatrix, basis: &[ComplexMatrix]) -> Option<ComplexMatrix> {
    let n0 = norm(&w);
    if n0 == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for v in basis {
            let c = inner(v, &w);
            axpy(-c, v, &mut w);
        }
    }
    let n = norm(&w);
    if n <= 1e-12 * n0 {
        return None;
    }
    Some(w.mapv(|z| z / n))
}

/// The `k` smallest eigenvalues (ascending) of the hermitian map `op` on d×d matrices,
/// with orthonormal eigenvectors under `Tr(A†B)`.
pub fn lowest_eigenpairs(
    op: &(dyn Fn(&ComplexMatrix) -> Result<ComplexMatrix> + Sync),
    d: usize,
    k: usize,
    opts: &EigOptions,
) -> Result<EigResult> {
    let n = d * d;
    if k == 0 {
        return Ok(EigResult {
            pairs: vec![],
            applications: 0,
            hermiticity_defect: 0.0,
            residual_floor: 0.0,
            degenerate: vec![],
        });
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("requested {k} eigenpairs of a {n}-dimensional operator")));
    }
    if n <= opts.dense_max {
        return dense_eigenpairs(op, d, k, opts);
    }
    let m = if opts.krylov_dim > 0 { opts.krylov_dim } else { (2 * k + 20).max(40) }.min(n);
    let keep = (k + (m - k) / 2).min(m - 1).max(k);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start = random_matrix(d, 1.0, &mut rng);
    if let Some(s) = &opts.start {
        let scale = norm(&start) / norm(s).max(f64::MIN_POSITIVE);
        start = start.mapv(|z| z * 1e-3) + s.mapv(|z| z * scale);
    }
    let mut basis: Vec<ComplexMatrix> = vec![start.mapv(|z| z / norm(&start))];
    let mut images: Vec<ComplexMatrix> = Vec::new();
    let mut applications = 0;
    let mut defect: f64;
    let mut floor: f64;
    // values accepted in the previous cycle; convergence must survive one cycle
    // started from a fresh random direction, which exposes missed degenerate copies
    let mut accepted: Option<Vec<f64>> = None;
    for _restart in 0..opts.max_restarts {
        // expand to m vectors
        while images.len() < basis.len() {
            let img = op(basis.last().unwrap())?;
            applications += 1;
            images.push(img);
            if basis.len() == m {
                break;
            }
            let w = images.last().unwrap().clone();
            match orthonormalize(w, &basis) {
                Some(v) => basis.push(v),
                None => {
                    // invariant subspace: continue with a fresh random direction
                    match orthonormalize(random_matrix(d, 1.0, &mut rng), &basis) {
                        Some(v) => basis.push(v),
                        None => break,
                    }
                }
            }
        }
        let (vals, vecs, def, floor_now) = projected(&basis, &images);
        defect = def;
        floor = floor_now;
        if defect > opts.hermiticity_tol {
            return Err(Error::NotHermitian(defect));
        }
        let mut ritz = Vec::with_capacity(basis.len());
        let mut all = true;
        let mut first_unconverged: Option<ComplexMatrix> = None;
        for j in 0..basis.len().min(keep.max(k)) {
            let y = combine(vecs.column(j), &basis);
            let ay = combine(vecs.column(j), &images);
            if j < k {
                let res_vec = &ay - &y.mapv(|z| z * vals[j]);
                let res = norm(&res_vec);
                if !converged(res, vals[j], opts.tol, floor) {
                    all = false;
                    if first_unconverged.is_none() {
                        first_unconverged = Some(res_vec);
                    }
                }
                ritz.push((vals[j], y, ay, res));
            } else {
                ritz.push((vals[j], y, ay, f64::NAN));
            }
        }
        let mut next = first_unconverged;
        if all && basis.len() >= k {
            let vals_now: Vec<f64> = ritz.iter().take(k).map(|x| x.0).collect();
            let stable = accepted.as_ref().is_some_and(|prev| {
                prev.iter()
                    .zip(&vals_now)
                    .all(|(a, b)| (a - b).abs() <= opts.tol * a.abs().max(1.0))
            });
            if !stable && basis.len() < n {
                accepted = Some(vals_now);
                next = Some(random_matrix(d, 1.0, &mut rng));
            }
        }
        if all && next.is_none() && basis.len() >= k {
            let mut pairs: Vec<EigenPair> = ritz
                .into_iter()
                .take(k)
                .map(|(value, vector, _, residual)| EigenPair { value, vector, residual })
                .collect();
            pairs.sort_by(|a, b| a.value.total_cmp(&b.value));
            return Ok(EigResult {
                degenerate: mark_degenerate(&pairs, opts.tol),
                residual_floor: if pairs.iter().all(|p| converged(p.residual, p.value, opts.tol, 0.0)) {
                    0.0
                } else {
                    floor
                },
                pairs,
                applications,
                hermiticity_defect: defect,
            });
        }
        if basis.len() == n {
            break;
        }
        // thick restart: keep the lowest Ritz vectors with their images
        let next = next.unwrap_or_else(|| random_matrix(d, 1.0, &mut rng));
        let mut new_basis = Vec::with_capacity(m);
        let mut new_images = Vec::with_capacity(m);
        for (_, y, ay, _) in ritz.into_iter() {
            new_basis.push(y);
            new_images.push(ay);
        }
        basis = new_basis;
        images = new_images;
        match orthonormalize(next, &basis) {
            Some(v) => basis.push(v),
            None => match orthonormalize(random_matrix(d, 1.0, &mut rng), &basis) {
                Some(v) => basis.push(v),
                None => break,
            },
        }
    }

    Err(Error::NotConverged {
        what: "lanczos",
        iterations: applications,
        residual: f64::NAN,
    })
}

/// The eigenpair with the largest overlap with `reference`, for states buried in the
/// interior of the spectrum. Krylov space grown from `reference`; at every restart the
/// Ritz vector with the largest `|⟨reference, y⟩|` is the target and the Ritz vectors
/// closest to it in energy are kept.
pub fn max_overlap_eigenpair(
    op: &(dyn Fn(&ComplexMatrix) -> Result<ComplexMatrix> + Sync),
    reference: &ComplexMatrix,
    opts: &EigOptions,
) -> Result<(EigenPair, f64)> {
    let d = reference.nrows();
    let n = d * d;
    let rn = norm(reference);
    if rn == 0.0 {
        return Err(Error::InvalidParameter("zero reference vector".into()));
    }
    let reference = reference.mapv(|z| z / rn);
    let m = if opts.krylov_dim > 0 { opts.krylov_dim } else { 240 }.min(n);
    let keep = (m / 3).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis = vec![reference.clone()];
    let mut images: Vec<ComplexMatrix> = Vec::new();
    let mut applications = 0;
    let mut last_res = f64::NAN;
    for _ in 0..opts.max_restarts {
        while images.len() < basis.len() {
            let img = op(basis.last().unwrap())?;
            applications += 1;
            images.push(img);
            if basis.len() == m {
                break;
            }
            let w = images.last().unwrap().clone();
            match orthonormalize(w, &basis).or_else(|| orthonormalize(random_matrix(d, 1.0, &mut rng), &basis)) {
                Some(v) => basis.push(v),
                None => break,
            }
        }
        let (vals, vecs, defect, floor) = projected(&basis, &images);
        if defect > opts.hermiticity_tol {
            return Err(Error::NotHermitian(defect));
        }
        let ritz: Vec<(f64, ComplexMatrix, ComplexMatrix, f64)> = (0..basis.len())
            .map(|j| {
                let y = combine(vecs.column(j), &basis);
                let ov = inner(&reference, &y).norm();
                let ay = combine(vecs.column(j), &images);
                (vals[j], y, ay, ov)
            })
            .collect();
        let target = (0..ritz.len()).max_by(|&a, &b| ritz[a].3.total_cmp(&ritz[b].3)).unwrap();
        let (val, y, ay, ov) = &ritz[target];
        let res_vec = ay - &y.mapv(|z| z * val);
        last_res = norm(&res_vec);
        if converged(last_res, *val, opts.tol, floor) || basis.len() == n {
            return Ok((
                EigenPair {
                    value: *val,
                    vector: y.clone(),
                    residual: last_res,
                },
                *ov,
            ));
        }
        let mut order: Vec<usize> = (0..ritz.len()).collect();
        order.sort_by(|&a, &b| (ritz[a].0 - val).abs().total_cmp(&(ritz[b].0 - val).abs()));
        let mut new_basis = Vec::with_capacity(m);
        let mut new_images = Vec::with_capacity(m);
        for &j in order.iter().take(keep) {
            new_basis.push(ritz[j].1.clone());
            new_images.push(ritz[j].2.clone());
        }
        basis = new_basis;
        images = new_images;
        match orthonormalize(res_vec, &basis).or_else(|| orthonormalize(random_matrix(d, 1.0, &mut rng), &basis)) {
            Some(v) => basis.push(v),
            None => break,
        }
    }
    Err(Error::NotConverged {
        what: "max-overlap lanczos",
        iterations: applications,
        residual: last_res,
    })
}

/// Ritz values of an `m`-step Arnoldi factorization of a general map started at `v0`.
pub fn arnoldi_ritz_values(
    op: &dyn Fn(&ComplexMatrix) -> Result<ComplexMatrix>,
    v0: &ComplexMatrix,
    m: usize,
) -> Result<Vec<C64>> {
    let mut basis = vec![v0.mapv(|z| z / norm(v0))];
    let mut h = ComplexMatrix::zeros((m, m));
    let mut size = m;
    for j in 0..m {
        let mut w = op(&basis[j])?;
        for _ in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = inner(v, &w);
                h[(i, j)] += c;
                axpy(-c, v, &mut w);
            }
        }
        let wn = norm(&w);
        if j + 1 == m {
            break;
        }
        if wn < 1e-13 {
            size = j + 1;
            break;
        }
        h[(j + 1, j)] = C64::new(wn, 0.0);
        basis.push(w.mapv(|z| z / wn));
    }
    let hs = h.slice(ndarray::s![..size, ..size]).to_owned();
    Ok(super::dense::eigenvalues_general(&hs))
}

fn dense_eigenpairs(
    op: &(dyn Fn(&ComplexMatrix) -> Result<ComplexMatrix> + Sync),
    d: usize,
    k: usize,
    opts: &EigOptions,
) -> Result<EigResult> {
    let n = d * d;
    let mut failure = None;
    let h = dense_operator(d, |x| match op(x) {
        Ok(y) => y,
        Err(e) => {
            failure.get_or_insert(e);
            ComplexMatrix::zeros((d, d))
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let hn = norm(&h).max(f64::MIN_POSITIVE);
    let defect = norm(&(&h - &super::dagger(&h))) / hn;
    if defect > opts.hermiticity_tol {
        return Err(Error::NotHermitian(defect));
    }
    let (vals, vecs) = herm_eig(&h);
    let mut pairs = Vec::with_capacity(k);
    for j in 0..k {
        let y = unvectorize(&vecs.column(j).to_owned(), d);
        let res = norm(&(op(&y)? - y.mapv(|z| z * vals[j])));
        pairs.push(EigenPair {
            value: vals[j],
            vector: y,
            residual: res,
        });
    }
    Ok(EigResult {
        degenerate: mark_degenerate(&pairs, opts.tol),
        pairs,
        applications: n + k,
        hermiticity_defect: defect,
        residual_floor: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense::vectorize;
    use crate::linalg::random_hermitian;

    fn check_orthonormal(pairs: &[EigenPair]) {
        for (i, a) in pairs.iter().enumerate() {
            for (j, b) in pairs.iter().enumerate() {
                let g = inner(&a.vector, &b.vector);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - C64::new(expect, 0.0)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn identity_map() {
        let op = |y: &ComplexMatrix| Ok(y.clone());
        let res = lowest_eigenpairs(&op, 3, 3, &EigOptions::default()).unwrap();
        for p in &res.pairs {
            assert!((p.value - 1.0).abs() < 1e-12);
        }
        check_orthonormal(&res.pairs);
    }

    #[test]
    fn left_multiplication_has_degenerate_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let d = 12;
        let a = random_hermitian(d, 1.0, &mut rng);
        let (evals, _) = herm_eig(&a);
        let op = |y: &ComplexMatrix| Ok(a.dot(y));
        let opts = EigOptions {
            dense_max: 0,
            ..Default::default()
        };
        let k = d + 2;
        let res = lowest_eigenpairs(&op, d, k, &opts).unwrap();
        for (j, p) in res.pairs.iter().enumerate() {
            let expect = evals[j / d];
            assert!((p.value - expect).abs() < 1e-8, "{j}: {} vs {expect}", p.value);
            assert!(p.residual < 1e-8 * expect.abs().max(1.0));
        }
        check_orthonormal(&res.pairs);
        assert!(!res.degenerate.is_empty());
    }

    #[test]
    fn random_dense_operator_matches_full_diagonalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let d = 3;
        let h = random_hermitian(d * d, 1.0, &mut rng);
        let (evals, _) = herm_eig(&h);
        let op = |y: &ComplexMatrix| Ok(unvectorize(&h.dot(&vectorize(y)), d));
        for dense_max in [100, 0] {
            let opts = EigOptions {
                dense_max,
                tol: 1e-11,
                ..Default::default()
            };
            let res = lowest_eigenpairs(&op, d, 5, &opts).unwrap();
            for (j, p) in res.pairs.iter().enumerate() {
                assert!((p.value - evals[j]).abs() < 1e-10);
            }
            check_orthonormal(&res.pairs);
        }
    }

    #[test]
    fn larger_sparse_spectrum_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let d = 16;
        let a = random_hermitian(d, 1.0, &mut rng);
        let b = random_hermitian(d, 1.0, &mut rng);
        // Y -> A Y + Y B has eigenvalues a_i + b_j
        let op = |y: &ComplexMatrix| Ok(a.dot(y) + y.dot(&b));
        let (ea, _) = herm_eig(&a);
        let (eb, _) = herm_eig(&b);
        let mut all: Vec<f64> = ea.iter().flat_map(|x| eb.iter().map(move |y| x + y)).collect();
        all.sort_by(f64::total_cmp);
        let res = lowest_eigenpairs(&op, d, 4, &EigOptions::default()).unwrap();
        for (j, p) in res.pairs.iter().enumerate() {
            assert!((p.value - all[j]).abs() < 1e-7, "{} vs {}", p.value, all[j]);
        }
    }

    #[test]
    fn max_overlap_finds_interior_eigenvector() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let d = 10;
        let a = random_hermitian(d * d, 1.0, &mut rng);
        let (evals, evecs) = herm_eig(&a);
        let op = |y: &ComplexMatrix| Ok(unvectorize(&a.dot(&vectorize(y)), d));
        let target = 57;
        let noise = random_matrix(d, 0.02, &mut rng);
        let reference = unvectorize(&evecs.column(target).to_owned(), d) + noise;
        let (pair, ov) = max_overlap_eigenpair(&op, &reference, &EigOptions::default()).unwrap();
        assert!((pair.value - evals[target]).abs() < 1e-8);
        assert!(ov > 0.9);
    }

    #[test]
    fn non_hermitian_operator_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let a = random_matrix(3, 1.0, &mut rng);
        let op = |y: &ComplexMatrix| Ok(a.dot(y));
        assert!(matches!(
            lowest_eigenpairs(&op, 3, 2, &EigOptions::default()),
            Err(Error::NotHermitian(_))
        ));
    }
}
