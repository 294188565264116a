use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use onsager_core::curvature::lattice3::sweep;
use onsager_core::validation::{random_chain, random_model, random_point, random_potential, rng};
use onsager_core::{
    chart_curvature, geodesic_ivp, ChartOptions, LocalGeometry, MConvention, MobilityModel, ReversibleChain,
    SimplexPoint, TensorCache,
};

fn frame_tensor(c: &mut Criterion) {
    let mut r = rng(11);
    let chain = random_chain(&mut r, 5);
    let model = random_model(&mut r, 0);
    let p = random_point(&mut r, 5);
    let geo = LocalGeometry::new(&chain, &model, p.clone()).unwrap();
    let phis = geo.onsager.frame_potentials();
    c.bench_function("frame tensor n=5", |b| {
        b.iter(|| TensorCache::new(black_box(&geo), &phis, MConvention::Symmetrized).full_tensor())
    });
    c.bench_function("chart oracle n=5", |b| {
        b.iter(|| chart_curvature(&chain, &model, black_box(&p), &ChartOptions::default()).unwrap())
    });
}

fn geodesic(c: &mut Criterion) {
    let chain = ReversibleChain::triangle_reaction();
    let model = MobilityModel::kl();
    let p0 = SimplexPoint::from_slice(&[0.5, 0.3, 0.2]).unwrap();
    let phi0 = random_potential(&mut rng(3), 3) * 0.3;
    c.bench_function("geodesic ivp 1000 steps", |b| {
        b.iter(|| geodesic_ivp(&chain, &model, black_box(&p0), &phi0, 1.0, 1e-3).unwrap())
    });
}

fn lattice_sweep(c: &mut Criterion) {
    let chain = ReversibleChain::lattice3();
    let model = MobilityModel::geometric(0.5).unwrap();
    c.bench_function("lattice sweep 20x20", |b| {
        b.iter(|| sweep(&chain, &model, black_box(20), &ChartOptions::default()).unwrap())
    });
}

criterion_group!(benches, frame_tensor, geodesic, lattice_sweep);
criterion_main!(benches);
