use std::f64::consts::PI;

use cmps::bethe::BetheOptions;
use cmps::cmps::io::StateRecord;
use cmps::cmps::{CmpsState, ModelParams};
use cmps::excitation::spectrum::{parity_defect, solve_spectrum};
use cmps::excitation::{gauge_residual, y_to_vw, EffectiveOperator, ExcitationOptions, ExcitationSector, SpectrumOptions};
use cmps::ground::OptimizerConfig;
use cmps::linalg::dense::dense_operator;
use cmps::linalg::{dagger, herm_eig, norm, random_matrix, ComplexMatrix, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(pairing: bool) -> ModelParams {
    if pairing {
        ModelParams::pairing(1.2, 0.9, C64::new(0.5, 0.2))
    } else {
        ModelParams::lieb_liniger(1.2, 0.9)
    }
}

fn sector(state: &CmpsState, topological: bool, p: f64) -> ExcitationSector {
    if topological {
        ExcitationSector::topological(state, PI, p).unwrap()
    } else {
        ExcitationSector::trivial(state, p)
    }
}

fn real_state(d: usize, rng: &mut ChaCha8Rng) -> CmpsState {
    let r = ComplexMatrix::from_shape_fn((d, d), |_| C64::new(rng.random_range(-0.6..0.6), 0.0));
    let a = ComplexMatrix::from_shape_fn((d, d), |_| C64::new(rng.random_range(-1.0..1.0), 0.0));
    let k = (&a - &a.t()).mapv(|z| z * C64::new(0.0, 0.5));
    CmpsState::from_kr(&k, r, None).unwrap()
}

fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn spec(k: usize) -> SpectrumOptions {
    SpectrumOptions {
        k,
        excitation: ExcitationOptions::default(),
        overlaps: false,
        delta_n: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn effective_operator_is_hermitian(seed in 0u64..10_000, d in 2usize..=3, p in -2.0f64..2.0,
                                       pairing: bool, topo: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = CmpsState::random(d, 0.8, &mut rng).unwrap();
        let op = EffectiveOperator::new(&sector(&state, topo, p), &model(pairing), &ExcitationOptions::default()).unwrap();
        let h = dense_operator(d, |y| op.apply(y).unwrap());
        let defect = max_abs(&(&h - &dagger(&h))) / max_abs(&h);
        prop_assert!(defect < 1e-9, "{defect:e}");
    }

    #[test]
    fn real_states_have_even_dispersion(seed in 0u64..10_000, p in 0.1f64..2.0, pairing: bool, topo: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = real_state(3, &mut rng);
        // time reversal needs a real pairing amplitude as well
        let params = if pairing { ModelParams::pairing(1.2, 0.9, C64::new(0.5, 0.0)) } else { model(false) };
        let a = solve_spectrum(&sector(&state, topo, p), &params, &spec(3)).unwrap();
        let b = solve_spectrum(&sector(&state, topo, -p), &params, &spec(3)).unwrap();
        prop_assert!(parity_defect(&a, &b) < 1e-8);
    }

    #[test]
    fn eigenpairs_have_small_residuals(seed in 0u64..10_000, p in -2.0f64..2.0, pairing: bool, topo: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = CmpsState::random(3, 0.8, &mut rng).unwrap();
        let sec = sector(&state, topo, p);
        let params = model(pairing);
        let sp = solve_spectrum(&sec, &params, &spec(2)).unwrap();
        let op = EffectiveOperator::new(&sec, &params, &ExcitationOptions::default()).unwrap();
        for (e, y) in sp.energies.iter().zip(&sp.eigvecs) {
            let hy = op.apply(y).unwrap();
            let res = norm(&(&hy - &y.mapv(|z| z * *e)));
            prop_assert!(res < 1e-7 * e.abs().max(1.0), "E {e}: residual {res:e}");
            prop_assert!((norm(y) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn gauge_map_lands_on_the_gauge_slice(seed in 0u64..10_000, d in 1usize..=5, p in -2.0f64..2.0, topo: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = CmpsState::random(d, 0.8, &mut rng).unwrap();
        if topo && d == 1 {
            return Ok(());
        }
        let sec = sector(&state, topo, p);
        let y = random_matrix(d, 1.0, &mut rng);
        let (v, w) = y_to_vw(&y, &sec, 1e13).unwrap();
        prop_assert!(gauge_residual(&state, &v, &w) < 1e-10 * (1.0 + norm(&w)));
    }

    #[test]
    fn state_json_round_trip_is_exact(seed in 0u64..10_000, d in 1usize..=6, pairing: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = CmpsState::random(d, 0.8, &mut rng).unwrap();
        let params = model(pairing);
        let rec = StateRecord::from_state(&state, Some(&params));
        let back = StateRecord::from_json(&rec.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.params, Some(params));
        let s2 = back.to_state().unwrap();
        prop_assert!(s2.q() == state.q() && s2.r() == state.r());
    }

    #[test]
    fn option_records_round_trip(n in 16usize..1024, tol in 1e-16f64..1e-6, grad in 1e-12f64..1e-3, seed: u64) {
        let b = BetheOptions { n_quad: n, tol, doubling_tol: 0.0 };
        let b2: BetheOptions = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        prop_assert_eq!((b2.n_quad, b2.tol), (n, tol));
        let c = OptimizerConfig { grad_tol: grad, seed, ..OptimizerConfig::default() };
        let c2: OptimizerConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!((c2.grad_tol, c2.seed), (grad, seed));
    }
}

#[test]
fn truncated_space_levels_are_upper_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let state = CmpsState::random(4, 0.8, &mut rng).unwrap();
    let (vals, _) = herm_eig(state.r_fp());
    let ratio = (vals[0] * vals[1]).sqrt() / vals[3];
    let params = model(true);
    for topo in [false, true] {
        let sec = sector(&state, topo, 0.6);
        let full = solve_spectrum(&sec, &params, &spec(3)).unwrap();
        let mut o = spec(3);
        o.excitation.min_schmidt_ratio = ratio;
        let cut = solve_spectrum(&sec, &params, &o).unwrap();
        let op = EffectiveOperator::new(&sec, &params, &o.excitation).unwrap();
        assert_eq!(op.kept_rank(), Some(3));
        for (a, b) in full.energies.iter().zip(&cut.energies) {
            assert!(b >= &(a - 1e-9), "truncated {b} below full {a}");
        }
    }
    let untouched = ExcitationOptions {
        min_schmidt_ratio: 1e-30,
        ..ExcitationOptions::default()
    };
    let op = EffectiveOperator::new(&ExcitationSector::trivial(&state, 0.3), &params, &untouched).unwrap();
    assert_eq!(op.kept_rank(), None);
}
