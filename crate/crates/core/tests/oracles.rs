//! Independent closed forms and two-route cross-checks.

use std::f64::consts::PI;

use ftl_core::appendix::{derivative_at_zero, iterated_laplacian_at_zero};
use ftl_core::bergman::{bergman_oracle_reinhardt, star_ball_volume};
use ftl_core::coords::{ball_volume, PseudoBall};
use ftl_core::homog::{doubling_constant, FrameProvider};
use ftl_core::localization::{
    base_frame_at, build_local_frame, bump_derivatives, fphi_tilde, fphi_weight, project_field, straddle_points, LocalizedDomain,
};
use ftl_core::weights::{field_lists, field_lists_symbolic, lemma1_sides, weight, Combination, FrameLists};
use ftl_core::{CPoly, ModelDomain, Point, C64};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn origin() -> Point {
    vec![c(0.0); 3]
}

/// Lanczos approximation, g = 7, n = 9.
fn gamma_fn(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = G[0];
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

#[test]
fn lanczos_reference_values() {
    assert!((gamma_fn(0.5) - PI.sqrt()).abs() < 1e-13);
    assert!((gamma_fn(5.0) - 24.0).abs() < 1e-11);
}

#[test]
fn siegel_kernel_matches_the_ball_formula() {
    let d = ModelDomain::siegel();
    for dl in [1e-1, 1e-3, 1e-5] {
        let o = bergman_oracle_reinhardt(&d, dl, 1e-10).unwrap();
        let exact = 3.0 / (2.0 * PI.powi(3) * dl.powi(4));
        assert!((o.value / exact - 1.0).abs() < 1e-8, "δ={dl}: {} vs {exact}", o.value);
    }
}

#[test]
fn decoupled_kernel_matches_the_gamma_formula() {
    // K = 2^a Γ(2+a) / (π³Γ(3/2)Γ(4/3)(2δ)^{2+a}), a = 1/2 + 1/3; a = 2 with unit Γ factors gives the ball
    let d = ModelDomain::decoupled();
    let a = 0.5 + 1.0 / 3.0;
    for dl in [1e-1, 1e-3, 1e-5] {
        let o = bergman_oracle_reinhardt(&d, dl, 1e-10).unwrap();
        let exact = 2f64.powf(a) * gamma_fn(2.0 + a) / (PI.powi(3) * gamma_fn(1.5) * gamma_fn(4.0 / 3.0) * (2.0 * dl).powf(2.0 + a));
        assert!((o.value / exact - 1.0).abs() < 1e-8, "δ={dl}: {} vs {exact}", o.value);
    }
}

#[test]
fn herbort_weights_at_the_origin() {
    let d = ModelDomain::herbort();
    let frame = d.tangent_frame();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let dl = 1e-4;
    let f2 = weight(&Combination::slot(2, 0), &frame, &origin(), dl, d.m).unwrap().value;
    assert!((f2 - 853.654_393_077_615).abs() < 1e-9, "{f2}");
    let fs = weight(&Combination::tangent(vec![c(h), c(h)]), &frame, &origin(), dl, d.m).unwrap().value;
    let exact = 4.0 / dl.sqrt() + 12.0 * 9f64.cbrt() / dl.cbrt();
    assert!((fs / exact - 1.0).abs() < 1e-12, "{fs} vs {exact}");
}

#[test]
fn siegel_weight_is_two_over_delta() {
    let d = ModelDomain::siegel();
    for dl in [1e-1, 1e-4, 1e-9] {
        let f = weight(&Combination::slot(2, 1), &d.tangent_frame(), &origin(), dl, d.m).unwrap().value;
        assert!((f * dl / 2.0 - 1.0).abs() < 1e-14);
        let n = weight(&Combination::normal(2), &d.tangent_frame(), &origin(), dl, d.m).unwrap().value;
        assert!((n * dl * dl - 1.0).abs() < 1e-14);
    }
}

#[test]
fn list_values_agree_between_jets_and_symbolic_brackets() {
    for d in ModelDomain::catalog() {
        let p = d.boundary_point(&[C64::new(0.12, -0.05), C64::new(-0.07, 0.09)], 0.02);
        let l = &d.tangent_frame().tangents[0];
        let m = d.m.min(4);
        let a = field_lists(l, &d.rho, &p, m).unwrap();
        let b = field_lists_symbolic(l, &d.rho, &p, m).unwrap();
        assert_eq!(a.values.len(), b.values.len());
        for (spec, v) in &a.values {
            let w = b.values.iter().find(|(s, _)| s == spec).map(|x| x.1).unwrap();
            assert!((v - w).norm() <= 1e-10 * (1.0 + w.norm()), "{} {spec}: {v} vs {w}", d.name);
        }
    }
}

#[test]
fn frame_lists_agree_with_field_lists() {
    let d = ModelDomain::herbort();
    let p = d.boundary_point(&[C64::new(0.1, 0.02), C64::new(0.03, -0.08)], 0.0);
    let frame = d.tangent_frame();
    let fl = FrameLists::compute(&frame, &p, d.m).unwrap();
    let a = fl.direction(&Combination::slot(2, 1));
    let b = field_lists(&frame.tangents[1], &d.rho, &p, d.m).unwrap();
    for (spec, v) in &b.values {
        let w = a.values.iter().find(|(s, _)| s == spec).map(|x| x.1).unwrap();
        assert!((v - w).norm() <= 1e-10 * (1.0 + w.norm()), "{spec}: {v} vs {w}");
    }
}

#[test]
fn bracket_identity_holds_on_the_catalog() {
    for d in ModelDomain::catalog() {
        let p = d.boundary_point(&[C64::new(0.13, -0.07), C64::new(-0.05, 0.11)], 0.03);
        for (i, j, k) in [(0, 1, 0), (1, 0, 1), (0, 1, 1)] {
            let (l, r) = lemma1_sides(&d.tangent_frame(), &p, i, j, k).unwrap();
            assert!((l - r).norm() <= 1e-10 * (1.0 + l.norm()), "{} {i}{j}{k}: {l} vs {r}", d.name);
        }
    }
}

#[test]
fn siegel_polydisc_volume_and_doubling() {
    let d = ModelDomain::siegel();
    let (dl, cc) = (1e-4, 0.5);
    let b = PseudoBall::polydisc(&d.tangent_frame(), &d, &origin(), dl, cc).unwrap();
    let v = ball_volume(&b, 1000, 1).value;
    // radii c(δ/2)^{1/2} twice and cδ
    let exact = PI.powi(3) * (cc * cc * dl / 2.0).powi(2) * (cc * dl).powi(2);
    assert!((v / exact - 1.0).abs() < 1e-12, "{v} vs {exact}");
    assert!((v - 1.211_182_682_824_2e-17).abs() < 1e-28);
    let r = doubling_constant(&d, FrameProvider::Canonical, &origin(), 1e-3, cc, 1000, 1).unwrap().ratio;
    assert!((r - 16.0).abs() < 1e-9);
}

#[test]
fn siegel_star_ball_has_zero_variance() {
    let d = ModelDomain::siegel();
    let (dl, cc) = (1e-3, 0.5);
    let v = star_ball_volume(&d.tangent_frame(), &origin(), dl, cc, d.m, 500, 3).unwrap();
    let exact = PI.powi(3) * cc.powi(6) * dl * dl * (dl / 2.0).powi(2) / 6.0;
    assert!((v.value / exact - 1.0).abs() < 1e-12);
    assert!(v.std_error <= 1e-12 * exact);
}

#[test]
fn bump_second_derivative_asymptotics() {
    // φ = e^{−1/t}: φ''t⁴/φ = 1 − 2t
    let (mu, t) = (0.3, 0.01);
    let x = mu * mu + t;
    let f = bump_derivatives(mu, 1.0, x, 0).unwrap();
    let f2 = bump_derivatives(mu, 1.0, x, 2).unwrap();
    let r = f2 * t.powi(4) / f;
    assert!((r - 1.0).abs() < 0.1);
    assert!((r - (1.0 - 2.0 * t)).abs() < 1e-10);
    let f1 = bump_derivatives(mu, 3.0, x, 1).unwrap();
    assert!((f1 * t * t / (3.0 * f) - 1.0).abs() < 1e-12);
}

#[test]
fn full_and_three_term_bump_weights_agree_deep_down() {
    let ld = LocalizedDomain::with_parameters(ModelDomain::herbort(), 0.2, 0.3, 1.0, 0.0).unwrap();
    let n = ld.n();
    let u: Vec<C64> = vec![C64::new(0.6, 0.1), C64::new(-0.3, 0.5), C64::new(0.2, -0.4)];
    let nu = u.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let lrho: Vec<C64> = vec![C64::new(0.0, 0.8), c(0.6), c(0.0)];
    let mut worst = 1.0f64;
    for delta in [1e-40f64, 1e-80, 1e-160, 1e-250] {
        for e in [1e-2, 1e-1, 1.0, 1e1, 1e2] {
            // e^{−1/t} = eδ
            let t = -1.0 / (e * delta).ln();
            let rad = (ld.mu * ld.mu + t).sqrt();
            let z: Point = (0..n).map(|k| u[k] * (rad / nu)).collect();
            let a = fphi_weight(&ld, &lrho, &z, delta, ld.base.m);
            let b = fphi_tilde(&ld, &lrho, &z, delta, ld.base.m);
            worst = worst.max(a / b).max(b / a);
        }
    }
    assert!(worst <= 4.0, "{worst}");
}

#[test]
fn siegel_localized_frames_stay_ordered() {
    let ld = LocalizedDomain::new(ModelDomain::siegel(), 0.2, 0.0, 100, 3).unwrap();
    let pts = straddle_points(&ld, &[0.5, 1.1, 1.3, 1.6]).unwrap();
    for (k, p) in pts.iter().enumerate() {
        let omega = base_frame_at(&ld, p, 1e-3).unwrap();
        let lf = build_local_frame(&ld, p, 1e-3, &omega, k as u64).unwrap();
        assert!(lf.report.k_prime() <= 16.0, "{}", lf.report.k_prime());
    }
}

#[test]
fn projection_coefficient_matches_its_formula() {
    let ld = LocalizedDomain::new(ModelDomain::herbort(), 0.2, 0.0, 100, 5).unwrap();
    let p = &straddle_points(&ld, &[1.3]).unwrap()[0];
    let dr = ld.dr(p);
    let a = vec![dr[2], c(0.0), -dr[0]];
    let fw = project_field(&ld, p, &a).unwrap();
    assert!((fw.beta / fw.beta_formula.norm() - 1.0).abs() < 0.02, "{} vs {}", fw.beta, fw.beta_formula.norm());
}

#[test]
fn laplacian_values_of_simple_moduli() {
    let z = CPoly::var(1, 0, false);
    let abs2 = z.mul(&z.conj());
    let abs4 = abs2.mul(&abs2);
    assert_eq!(derivative_at_zero(&abs4, &[2], &[2]), c(4.0));
    assert_eq!(iterated_laplacian_at_zero(&abs4, &[2]), 4.0);
    assert_eq!(iterated_laplacian_at_zero(&abs2, &[1]), 1.0);
}
