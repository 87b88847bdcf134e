//! Dense reference evaluation of excitation matrix elements.
//!
//! Everything is materialized: transfer blocks as D²×D² Kronecker sums, gaps between
//! insertions as spectral (pseudo-)inverses, and every relative placement of the ket
//! insertion K, bra insertion B and local operator O is enumerated, including the ones
//! the gauge condition removes. The form is evaluated on the full unconstrained
//! `(V, W)` space and only afterwards restricted to the gauge slice.
#![allow(dead_code)]

use cmps::cmps::{CmpsState, LocalTerm, TermKind};
use cmps::linalg::dense::{eig_general, kron};
use cmps::linalg::{dagger, eye, herm_sqrt, inverse, ComplexMatrix, C64};
use ndarray::{Array1, Array2};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

fn conj(m: &ComplexMatrix) -> ComplexMatrix {
    m.mapv(|z| z.conj())
}

fn vec_row(m: &ComplexMatrix) -> Array1<C64> {
    Array1::from_iter(m.iter().cloned())
}

fn unit(d: usize, k: usize) -> ComplexMatrix {
    let mut e = Array2::zeros((d, d));
    e[(k / d, k % d)] = ONE;
    e
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Obj {
    K,
    B,
    O,
}

/// The 13 ordered set partitions of {K, B, O}.
fn placements() -> Vec<Vec<Vec<Obj>>> {
    use Obj::*;
    let mut out = Vec::new();
    for perm in [[K, B, O], [K, O, B], [B, K, O], [B, O, K], [O, K, B], [O, B, K]] {
        out.push(perm.iter().map(|o| vec![*o]).collect());
    }
    for (pair, single) in [([K, B], O), ([K, O], B), ([B, O], K)] {
        out.push(vec![pair.to_vec(), vec![single]]);
        out.push(vec![vec![single], pair.to_vec()]);
    }
    out.push(vec![vec![K, B, O]]);
    out
}

struct Side {
    q: ComplexMatrix,
    r: ComplexMatrix,
}

pub struct DenseOracle {
    pub d: usize,
    /// Hamiltonian form on `[vec V; vec W]` (bra index first)
    pub h: Array2<C64>,
    /// norm form on `[vec V; vec W]`
    pub n: Array2<C64>,
    /// columns: `[vec V; vec W]` of the gauge map applied to unit `Y`
    pub m: Array2<C64>,
    q1: ComplexMatrix,
    r1: ComplexMatrix,
    q2: ComplexMatrix,
    r2: ComplexMatrix,
    p: f64,
}

struct Ctx<'a> {
    d: usize,
    st: [Side; 2],
    l1: Array1<C64>,
    r1: Array1<C64>,
    r2: Array1<C64>,
    p: f64,
    gaps: &'a [[Array2<C64>; 2]; 2],
}

impl Ctx<'_> {
    /// `coeff·⟨l₁|A⊗B̄|r₁⟩` of the left ground state.
    fn term_density(&self, t: &LocalTerm) -> C64 {
        let (a, b) = term_ops(t.kind, &self.st[0], self.d);
        let op = kron(&a, &conj(&b));
        t.coeff * self.l1.dot(&op.dot(&self.r1))
    }
}

fn transfer(a: &Side, b: &Side, d: usize) -> Array2<C64> {
    kron(&a.q, &eye(d)) + kron(&eye(d), &conj(&b.q)) + kron(&a.r, &conj(&b.r))
}

/// `∫₀^∞ e^{s(T + iφ)} ds` with the zero-mode contribution dropped when `φ = 0`.
fn gap(t: &Array2<C64>, phi: f64) -> Array2<C64> {
    let n = t.nrows();
    let (vals, vecs) = eig_general(t);
    let winv = inverse(&vecs).unwrap();
    let mut g = Array2::zeros((n, n));
    for k in 0..n {
        let lam = vals[k] + C64::new(0.0, phi);
        if lam.norm() < 1e-9 {
            continue;
        }
        let coef = -ONE / lam;
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] += coef * vecs[(i, k)] * winv[(k, j)];
            }
        }
    }
    g
}

fn term_ops(kind: TermKind, s: &Side, d: usize) -> (ComplexMatrix, ComplexMatrix) {
    let r2 = s.r.dot(&s.r);
    match kind {
        TermKind::Kinetic => {
            let c = s.q.dot(&s.r) - s.r.dot(&s.q);
            (c.clone(), c)
        }
        TermKind::Density => (s.r.clone(), s.r.clone()),
        TermKind::Interaction => (r2.clone(), r2),
        TermKind::PairCreate => (eye(d), r2),
        TermKind::PairAnnihilate => (r2, eye(d)),
    }
}

/// The operator acting at the insertion point on the excited side (ket or bra).
fn contact(kind: TermKind, ctx: &Ctx, v: &ComplexMatrix, w: &ComplexMatrix) -> Option<ComplexMatrix> {
    let (s1, s2) = (&ctx.st[0], &ctx.st[1]);
    match kind {
        TermKind::Kinetic => Some(
            s1.q.dot(w) - w.dot(&s2.q) + v.dot(&s2.r) - s1.r.dot(v) + w.mapv(|z| z * C64::new(0.0, ctx.p)),
        ),
        TermKind::Density => Some(w.clone()),
        TermKind::Interaction => Some(s1.r.dot(w) + w.dot(&s2.r)),
        TermKind::PairCreate => None,
        TermKind::PairAnnihilate => Some(s1.r.dot(w) + w.dot(&s2.r)),
    }
}

/// Bra-side factor of a term: the ket-like matrix whose conjugate enters the Kronecker product.
fn bra_factor(kind: TermKind, ctx: &Ctx, v: &ComplexMatrix, w: &ComplexMatrix) -> Option<ComplexMatrix> {
    // the bra of ψ†ψ† carries R² and therefore a contact like the ket of ψψ
    let swapped = match kind {
        TermKind::PairCreate => TermKind::PairAnnihilate,
        TermKind::PairAnnihilate => TermKind::PairCreate,
        k => k,
    };
    contact(swapped, ctx, v, w)
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    ctx: &Ctx,
    placement: &[Vec<Obj>],
    term: Option<&LocalTerm>,
    (v, w): (&ComplexMatrix, &ComplexMatrix),
    (vb, wb): (&ComplexMatrix, &ComplexMatrix),
) -> C64 {
    let d = ctx.d;
    let id = eye(d);
    let mut x = ctx.l1.clone();
    let (mut ket, mut bra) = (0usize, 0usize);
    for (gi, group) in placement.iter().enumerate() {
        let has = |o: Obj| group.contains(&o);
        let op: Array2<C64> = match (has(Obj::K), has(Obj::B), has(Obj::O)) {
            (true, false, false) => kron(v, &id) + kron(w, &conj(&ctx.st[bra].r)),
            (false, true, false) => kron(&id, &conj(vb)) + kron(&ctx.st[ket].r, &conj(wb)),
            (false, false, true) => {
                // H − E₀ = ∫(h − e): the ground-state density is subtracted as e·𝟙; in the
                // outer regions this is what discarding the zero mode of the gap amounts to
                let t = term.unwrap();
                let (a, _) = term_ops(t.kind, &ctx.st[ket], d);
                let (_, b) = term_ops(t.kind, &ctx.st[bra], d);
                let e = ctx.term_density(t);
                kron(&a, &conj(&b)).mapv(|z| z * t.coeff) - eye(d * d).mapv(|z| z * e)
            }
            (true, true, false) => kron(w, &conj(wb)),
            (true, false, true) => {
                let t = term.unwrap();
                let (_, b) = term_ops(t.kind, &ctx.st[bra], d);
                match contact(t.kind, ctx, v, w) {
                    Some(ca) => kron(&ca, &conj(&b)).mapv(|z| z * t.coeff),
                    None => return ZERO,
                }
            }
            (false, true, true) => {
                let t = term.unwrap();
                let (a, _) = term_ops(t.kind, &ctx.st[ket], d);
                match bra_factor(t.kind, ctx, vb, wb) {
                    Some(cb) => kron(&a, &conj(&cb)).mapv(|z| z * t.coeff),
                    None => return ZERO,
                }
            }
            (true, true, true) => {
                let t = term.unwrap();
                match (contact(t.kind, ctx, v, w), bra_factor(t.kind, ctx, vb, wb)) {
                    (Some(ca), Some(cb)) => kron(&ca, &conj(&cb)).mapv(|z| z * t.coeff),
                    _ => return ZERO,
                }
            }
            _ => unreachable!(),
        };
        x = op.t().dot(&x);
        if has(Obj::K) {
            ket = 1;
        }
        if has(Obj::B) {
            bra = 1;
        }
        if gi + 1 < placement.len() {
            x = ctx.gaps[ket][bra].t().dot(&x);
        }
    }
    x.dot(&ctx.r2)
}

impl DenseOracle {
    pub fn new(left: &CmpsState, right: &CmpsState, terms: &[LocalTerm], p: f64) -> Self {
        let d = left.dim();
        let n = d * d;
        let st = [
            Side {
                q: left.q().clone(),
                r: left.r().clone(),
            },
            Side {
                q: right.q().clone(),
                r: right.r().clone(),
            },
        ];
        // region label [ket][bra]: 0 before the insertion, 1 after
        let phase = |k: usize, b: usize| match (k, b) {
            (1, 0) => -p,
            (0, 1) => p,
            _ => 0.0,
        };
        let gaps = [
            [
                gap(&transfer(&st[0], &st[0], d), phase(0, 0)),
                gap(&transfer(&st[0], &st[1], d), phase(0, 1)),
            ],
            [
                gap(&transfer(&st[1], &st[0], d), phase(1, 0)),
                gap(&transfer(&st[1], &st[1], d), phase(1, 1)),
            ],
        ];
        // ⟨l₁| pairs as vec(lᵀ)
        let l1 = vec_row(&eye(d).t().to_owned());
        let r1 = vec_row(left.r_fp());
        let r2 = vec_row(right.r_fp());
        let ctx = Ctx {
            d,
            st,
            l1,
            r1,
            r2,
            p,
            gaps: &gaps,
        };
        let basis: Vec<(ComplexMatrix, ComplexMatrix)> = (0..2 * n)
            .map(|k| {
                if k < n {
                    (unit(d, k), Array2::zeros((d, d)))
                } else {
                    (Array2::zeros((d, d)), unit(d, k - n))
                }
            })
            .collect();
        let places = placements();
        let mut h = Array2::zeros((2 * n, 2 * n));
        let mut nn = Array2::zeros((2 * n, 2 * n));
        for (j, (v, w)) in basis.iter().enumerate() {
            for (i, (vb, wb)) in basis.iter().enumerate() {
                for pl in &places {
                    let has_o = pl.iter().any(|g| g.contains(&Obj::O));
                    if has_o {
                        for t in terms {
                            h[(i, j)] += evaluate(&ctx, pl, Some(t), (v, w), (vb, wb));
                        }
                    }
                }
                // norm form: K and B only
                for pl in [
                    vec![vec![Obj::K], vec![Obj::B]],
                    vec![vec![Obj::B], vec![Obj::K]],
                    vec![vec![Obj::K, Obj::B]],
                ] {
                    nn[(i, j)] += evaluate(&ctx, &pl, None, (v, w), (vb, wb));
                }
            }
        }
        // gauge map Y ↦ (V, W) = (−R₁† Y r₂^{−1/2}, Y r₂^{−1/2})
        let s = herm_sqrt(right.r_fp(), 1e14).unwrap();
        let mut m = Array2::zeros((2 * n, n));
        for k in 0..n {
            let y = unit(d, k);
            let w = y.dot(&s.inv_sqrt);
            let v = dagger(left.r()).dot(&w).mapv(|z| -z);
            for (i, z) in v.iter().chain(w.iter()).enumerate() {
                m[(i, k)] = *z;
            }
        }
        Self {
            d,
            h,
            n: nn,
            m,
            q1: left.q().clone(),
            r1: left.r().clone(),
            q2: right.q().clone(),
            r2: right.r().clone(),
            p,
        }
    }

    pub fn h_y(&self) -> Array2<C64> {
        dagger(&self.m).dot(&self.h).dot(&self.m)
    }

    pub fn n_y(&self) -> Array2<C64> {
        dagger(&self.m).dot(&self.n).dot(&self.m)
    }

    /// `[vec V; vec W]` of the gauge direction `(Q₁X − XQ₂ + ipX, R₁X − XR₂)`.
    pub fn gauge_vector(&self, x: &ComplexMatrix) -> Array1<C64> {
        let v = self.q1.dot(x) - x.dot(&self.q2) + x.mapv(|z| z * C64::new(0.0, self.p));
        let w = self.r1.dot(x) - x.dot(&self.r2);
        v.iter().chain(w.iter()).cloned().collect()
    }
}

pub fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_vec(a: &Array1<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
