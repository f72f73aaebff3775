use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ftl_core::appendix::{domination_search, random_nonneg_poly};
use ftl_core::bergman::{bergman_oracle_reinhardt, star_ball_volume};
use ftl_core::coords::{adapted_coords, ball_volume, PseudoBall};
use ftl_core::homog::{gamma, FrameProvider};
use ftl_core::weights::{check_eb1, Combination, FrameLists};
use ftl_core::{ModelDomain, C64};

fn origin(n: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); n]
}

fn lists(c: &mut Criterion) {
    let mut g = c.benchmark_group("frame_lists");
    for d in [ModelDomain::siegel(), ModelDomain::decoupled(), ModelDomain::herbort()] {
        let p = d.boundary_point(&[C64::new(0.1, 0.05), C64::new(-0.07, 0.02)], 0.0);
        let frame = d.tangent_frame();
        g.bench_with_input(BenchmarkId::from_parameter(&d.name), &d, |b, d| {
            b.iter(|| FrameLists::compute(&frame, black_box(&p), d.m).unwrap())
        });
    }
    g.finish();
}

fn weights(c: &mut Criterion) {
    let d = ModelDomain::herbort();
    let p = origin(3);
    let fl = FrameLists::compute(&d.tangent_frame(), &p, d.m).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let dir = Combination::tangent(vec![C64::new(h, 0.0), C64::new(h, 0.0)]);
    c.bench_function("weight_from_lists/herbort", |b| b.iter(|| fl.direction(&dir).weight(black_box(1e-4))));
    c.bench_function("eb1/herbort_2000", |b| {
        b.iter(|| check_eb1(&d.tangent_frame(), &p, black_box(1e-4), d.m, 2000, 7).unwrap())
    });
}

fn balls(c: &mut Criterion) {
    let d = ModelDomain::decoupled();
    let p = origin(3);
    let frame = d.tangent_frame();
    c.bench_function("adapted_coords/decoupled", |b| b.iter(|| adapted_coords(&frame, &d, black_box(&p), d.m).unwrap()));
    let ball = PseudoBall::polydisc(&frame, &d, &p, 1e-3, 0.5).unwrap();
    c.bench_function("ball_volume/decoupled_5000", |b| b.iter(|| ball_volume(&ball, 5000, black_box(7))));
    let q = d.boundary_point(&[C64::new(0.05, 0.0), C64::new(0.0, 0.03)], 0.0);
    c.bench_function("gamma/decoupled", |b| {
        b.iter(|| gamma(&d, FrameProvider::Canonical, &p, black_box(&q), 0.5, 1e-3).unwrap())
    });
}

fn kernel(c: &mut Criterion) {
    let mut g = c.benchmark_group("bergman_oracle");
    g.sample_size(10);
    for d in [ModelDomain::siegel(), ModelDomain::herbort()] {
        g.bench_with_input(BenchmarkId::from_parameter(&d.name), &d, |b, d| {
            b.iter(|| bergman_oracle_reinhardt(d, black_box(1e-4), 1e-10).unwrap())
        });
    }
    g.finish();
    let d = ModelDomain::herbort();
    let p = d.interior_point(&[C64::new(0.0, 0.0), C64::new(0.0, 0.0)], 0.0, 1e-4);
    let frame = d.tangent_frame();
    c.bench_function("star_ball_volume/herbort_4000", |b| {
        b.iter(|| star_ball_volume(&frame, &p, black_box(1e-4), 0.5, d.m, 4000, 7).unwrap())
    });
}

fn appendix(c: &mut Criterion) {
    let polys: Vec<_> = (0..16).map(|k| random_nonneg_poly(k, 6, 2).unwrap()).collect();
    c.bench_function("domination_search/16_polys", |b| {
        b.iter(|| {
            for np in &polys {
                black_box(domination_search(&np.g, &[1, 0], &[1, 0]));
            }
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = lists, weights, balls, kernel, appendix
}
criterion_main!(benches);
