use nalgebra::DVector;
use proptest::prelude::*;

use tapreg::model::project_to_sphere;
use tapreg::replica::e_delta_closed_form;
use tapreg::ridge::ridge_solve;
use tapreg::tap::{f_tap, gap, grad_f_tap, h_family, hessian_quadratic_form};
use tapreg::{generate_instance, ModelParams, ProblemInstance};

fn instance(p: usize, alpha: f64, delta: f64, seed: u64) -> ProblemInstance {
    generate_instance(&ModelParams::new(p, alpha, delta, seed).unwrap(), 0).unwrap()
}

fn point(raw: &[f64], q: f64) -> DVector<f64> {
    let v = DVector::from_row_slice(raw);
    let p = raw.len() as f64;
    &v * ((p * q).sqrt() / v.norm())
}

fn value(a: &DVector<f64>, inst: &ProblemInstance) -> f64 {
    f_tap(a, inst).unwrap().value.to_f64()
}

fn rel_err(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(1e-3)
}

/// Instance shape, overlap, and raw direction data.
fn case() -> impl Strategy<Value = (usize, f64, f64, u64, f64, Vec<f64>, Vec<f64>)> {
    (4usize..24, 0.5f64..4.0, 0.1f64..2.0, any::<u64>(), 0.02f64..0.9).prop_flat_map(
        |(p, alpha, delta, seed, q)| {
            let dir = prop::collection::vec(-1.0f64..1.0, p)
                .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3);
            (Just(p), Just(alpha), Just(delta), Just(seed), Just(q), dir.clone(), dir)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_central_differences((p, alpha, delta, seed, q, ra, rv) in case()) {
        let inst = instance(p, alpha, delta, seed);
        let a = point(&ra, q);
        let v = DVector::from_row_slice(&rv).normalize();
        let h = 1e-6 * (p as f64).sqrt();
        let fd = (value(&(&a + h * &v), &inst) - value(&(&a - h * &v), &inst)) / (2.0 * h);
        let an = grad_f_tap(&a, &inst).unwrap().dot(&v);
        prop_assert!(rel_err(fd, an) < 1e-5, "fd {fd} analytic {an}");
    }

    #[test]
    fn hessian_matches_second_differences((p, alpha, delta, seed, q, ra, rv) in case()) {
        let inst = instance(p, alpha, delta, seed);
        let a = point(&ra, q);
        let v = DVector::from_row_slice(&rv).normalize();
        let h = 1e-3;
        let fd = (value(&(&a + h * &v), &inst) - 2.0 * value(&a, &inst) + value(&(&a - h * &v), &inst)) / (h * h);
        let an = hessian_quadratic_form(&a, &v, &inst).unwrap();
        prop_assert!(rel_err(fd, an) < 1e-4, "fd {fd} analytic {an}");
    }

    #[test]
    fn value_is_sum_of_terms((p, alpha, delta, seed, q, ra, _rv) in case()) {
        let inst = instance(p, alpha, delta, seed);
        let ev = f_tap(&point(&ra, q), &inst).unwrap();
        let sum = ev.residual_term + ev.onsager_term + ev.entropy_term;
        prop_assert!((ev.value.to_f64() - sum).abs() <= 1e-12 * sum.abs().max(1.0));
    }

    #[test]
    fn hessian_rank_one_term_vanishes_off_axis((p, alpha, delta, seed, q, ra, rv) in case()) {
        let inst = instance(p, alpha, delta, seed);
        let a = point(&ra, q);
        let raw = DVector::from_row_slice(&rv);
        let v = &raw - &a * (raw.dot(&a) / a.norm_squared());
        prop_assume!(v.norm() > 1e-6);
        let hf = h_family(q, alpha, delta).unwrap();
        let pf = p as f64;
        let expected = -(2.0 * hf.h1 * v.norm_squared() + (inst.x() * &v).norm_squared() / delta) / pf;
        let got = hessian_quadratic_form(&a, &v, &inst).unwrap();
        prop_assert!((got - expected).abs() <= 1e-10 * expected.abs().max(1.0));
    }

    #[test]
    fn gap_is_nonnegative(q in 0.0f64..0.999, alpha in 0.25f64..8.0, delta in 0.25f64..8.0) {
        prop_assert!(gap(q, alpha, delta).unwrap() >= -1e-12);
    }

    #[test]
    fn stationarity_identity(alpha in 0.25f64..8.0, delta in 0.25f64..8.0) {
        let q = 1.0 - e_delta_closed_form(alpha, delta);
        prop_assert!((h_family(q, alpha, delta).unwrap().h1 - 0.5).abs() <= 1e-10);
    }

    #[test]
    fn projection_is_idempotent(raw in prop::collection::vec(-10.0f64..10.0, 1..20), r in 0.1f64..50.0) {
        let v = DVector::from_row_slice(&raw);
        prop_assume!(v.norm() > 1e-6);
        let once = project_to_sphere(&v, r).unwrap();
        let twice = project_to_sphere(&once, r).unwrap();
        prop_assert!((&once - &twice).norm() <= 1e-12 * r);
        prop_assert!((once.norm() - r).abs() <= 1e-12 * r);
    }

    #[test]
    fn reconstruction_holds(p in 1usize..40, alpha in 0.3f64..4.0, delta in 0.01f64..3.0, seed in any::<u64>(), tag in any::<u64>()) {
        let params = ModelParams::new(p, alpha, delta, seed);
        // N = round(αp) may be zero for tiny p
        prop_assume!(params.is_ok());
        let inst = generate_instance(&params.unwrap(), tag).unwrap();
        let n = inst.n() as f64;
        prop_assert!(inst.reconstruction_error() <= 1e-9 * n.sqrt());
        prop_assert!((inst.beta0().norm_squared() - p as f64).abs() <= 1e-9 * p as f64);
    }
}

#[test]
fn gradient_at_ridge_is_parallel_to_ridge() {
    for seed in 0..3 {
        let inst = instance(50, 2.0, 0.5, seed);
        let sol = ridge_solve(&inst).unwrap();
        let q = sol.norm_sq_over_p;
        let h1 = h_family(q, 2.0, 0.5).unwrap().h1;
        let expected = &sol.a_delta * ((1.0 - 2.0 * h1) / 50.0);
        let g = grad_f_tap(&sol.a_delta, &inst).unwrap();
        assert!((g - &expected).norm() <= 1e-10 * expected.norm().max(1e-12));
    }
}
