use ftl_core::appendix::{domination_search, multi_indices, random_nonneg_poly, sampled_minimum};
use ftl_core::bergman::star_volume_with;
use ftl_core::coords::{adapted_coords, ball_membership, PseudoBall};
use ftl_core::homog::{gamma, FrameProvider};
use ftl_core::localization::{bump_derivatives, LocalizedDomain};
use ftl_core::parse::{parse_expr, pretty_print};
use ftl_core::weights::{check_balpha, eb1_from_lists, Combination, FrameLists};
use ftl_core::{CPoly, ModelDomain, Point, C64};
use proptest::prelude::*;

fn cplx() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b))
}

fn domain() -> impl Strategy<Value = ModelDomain> {
    (0usize..5).prop_map(|k| ModelDomain::catalog()[k].clone())
}

/// Domain, boundary point near the origin and a tangent direction.
fn case() -> impl Strategy<Value = (ModelDomain, Point, Vec<C64>)> {
    (domain(), proptest::collection::vec(cplx(), 2), -0.2f64..0.2, proptest::collection::vec(cplx(), 2)).prop_map(
        |(d, zt, t, a)| {
            let zt: Vec<C64> = zt.into_iter().map(|z| z * 0.3).collect();
            let p = d.boundary_point(&zt, t);
            (d, p, a)
        },
    )
}

fn log_delta() -> impl Strategy<Value = f64> {
    (-6.0f64..-1.0).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn weight_is_quadratic_in_the_field((d, p, a) in case(), k in cplx(), delta in log_delta()) {
        prop_assume!(k.norm() > 1e-3);
        let fl = FrameLists::compute(&d.tangent_frame(), &p, d.m).unwrap();
        let l = Combination::tangent(a);
        let f = fl.direction(&l).weight(delta);
        let fk = fl.direction(&l.scale(k)).weight(delta);
        prop_assert!((fk - k.norm_sqr() * f).abs() <= 1e-10 * fk.max(f * k.norm_sqr()));
    }

    #[test]
    fn weight_grows_as_delta_shrinks((d, p, a) in case(), delta in log_delta(), lam in 1.0f64..16.0) {
        let fl = FrameLists::compute(&d.tangent_frame(), &p, d.m).unwrap();
        let dl = fl.direction(&Combination::tangent(a));
        let f = dl.weight(delta);
        let g = dl.weight(lam * delta);
        prop_assert!(g <= lam.powf(-2.0 / d.m as f64) * f * (1.0 + 1e-12));
        prop_assert!(g >= f / lam * (1.0 - 1e-12));
    }

    #[test]
    fn extremality_estimates_respect_their_ranges((d, p, _a) in case(), delta in log_delta(), seed in 0u64..1000) {
        let frame = d.tangent_frame();
        let fl = FrameLists::compute(&frame, &p, d.m).unwrap();
        let k = eb1_from_lists(&fl, delta, 64, seed).estimate;
        prop_assert!(k >= 1.0 - 1e-12 || !k.is_finite());
        prop_assert!(check_balpha(&frame, &p, delta, d.m).unwrap().estimate >= 0.0);
    }

    #[test]
    fn adapted_chart_round_trips((d, p, _a) in case(), pts in proptest::collection::vec(proptest::collection::vec(cplx(), 3), 4)) {
        let map = adapted_coords(&d.tangent_frame(), &d, &p, d.m).unwrap();
        let pts: Vec<Point> = pts.into_iter().map(|q| q.iter().zip(&p).map(|(u, v)| v + u * 0.05).collect()).collect();
        prop_assert!(map.round_trip_residual(&pts) <= 1e-10);
        let zero = map.apply(&p);
        prop_assert!(zero.iter().all(|z| z.norm() <= 1e-12));
    }

    #[test]
    fn ball_contains_its_center((d, p, _a) in case(), delta in log_delta(), c in 0.1f64..2.0) {
        let b = PseudoBall::polydisc(&d.tangent_frame(), &d, &p, delta, c).unwrap();
        prop_assert!(ball_membership(&p, &b));
    }

    #[test]
    fn bump_is_nonnegative_and_increasing(x in 0.0f64..1.0, mu in 0.05f64..0.5, k0 in 0.5f64..64.0) {
        let f0 = bump_derivatives(mu, k0, x, 0).unwrap();
        let f1 = bump_derivatives(mu, k0, x, 1).unwrap();
        prop_assert!(f0 >= 0.0 && f1 >= 0.0);
        if x <= mu * mu {
            prop_assert_eq!(f0, 0.0);
        }
        prop_assert!(bump_derivatives(mu, k0, x, 5).is_err());
    }

    #[test]
    fn isotropic_star_volume_scales(f0 in 0.1f64..10.0, lam in 0.5f64..4.0, n in 2usize..5, seed in 0u64..100) {
        let a = star_volume_with(n, |_| f0, 1.0, 64, seed);
        let b = star_volume_with(n, |_| lam * f0, 1.0, 64, seed);
        prop_assert!((b.value * lam.powi(n as i32) / a.value - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn generated_polynomials_are_nonnegative(seed in 0u64..10_000, half in 1usize..4, j in 1usize..3) {
        let np = random_nonneg_poly(seed, 2 * half, j).unwrap();
        prop_assert!(np.g.is_real_valued(1e-12));
        prop_assert!(sampled_minimum(&np.g, 200, seed) >= -1e-12);
    }

    #[test]
    fn every_nonzero_target_is_dominated(seed in 0u64..10_000) {
        let np = random_nonneg_poly(seed, 6, 1).unwrap();
        for ab in multi_indices(2, 3) {
            let (alpha, beta) = (&ab[..1], &ab[1..]);
            if alpha[0] + beta[0] == 0 {
                continue;
            }
            let r = domination_search(&np.g, alpha, beta);
            prop_assert!(!r.violated(), "{r:?}");
        }
    }

    #[test]
    fn polynomial_products_evaluate_pointwise(a in proptest::collection::vec(cplx(), 4), z in proptest::collection::vec(cplx(), 2)) {
        let x = CPoly::var(2, 0, false);
        let y = CPoly::var(2, 1, true);
        let p = x.scale(a[0]).add(&y.scale(a[1])).add(&CPoly::constant(2, a[2]));
        let q = x.mul(&y).scale(a[3]).add(&CPoly::one(2));
        let lhs = p.mul(&q).eval(&z);
        let rhs = p.eval(&z) * q.eval(&z);
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        prop_assert!((p.conj().eval(&z) - p.eval(&z).conj()).norm() <= 1e-12);
    }

    #[test]
    fn expressions_survive_pretty_printing(c1 in 1u32..9, c2 in 1u32..9, e in 1u32..4) {
        let src = format!("Re(z3) + {c1}*|z1|^{} + |z2|^2*{c2}", 2 * e);
        let a = parse_expr(&src).unwrap();
        prop_assert_eq!(parse_expr(&pretty_print(&a)).unwrap(), a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn gamma_vanishes_on_the_diagonal((d, p, _a) in case()) {
        prop_assert_eq!(gamma(&d, FrameProvider::Canonical, &p, &p, 0.5, 1e-3).unwrap().value, 0.0);
    }

    #[test]
    fn localized_defining_function_agrees_with_rho_inside(w in proptest::collection::vec(cplx(), 3), s in 0.0f64..1.0) {
        let ld = LocalizedDomain::with_parameters(ModelDomain::siegel(), 0.2, 0.3, 1.0, 0.0).unwrap();
        let nrm = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt().max(1e-9);
        let z: Point = w.iter().map(|x| x * (s * ld.mu / nrm)).collect();
        prop_assert_eq!(ld.eval_r(&z), ld.eval_rho(&z));
    }
}
