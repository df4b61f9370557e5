use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use thermofsi_core::forcing::{BodyForce, Envelope, ForcingSpec, HeatSource};
use thermofsi_core::geometry::{build_geometry, Layout, MediumGeometry};
use thermofsi_core::integrator::{Backend, State, Stepper};
use thermofsi_core::{build_system, DimensionlessParams};

const DT: f64 = 0.01;

fn meshes() -> Vec<(String, MediumGeometry)> {
    [(2, 16, 8), (2, 32, 16), (3, 6, 3)]
        .into_iter()
        .map(|(dim, n, k)| (format!("{dim}d_n{n}"), build_geometry(dim, n, Layout::SolidSlab(k)).unwrap()))
        .collect()
}

fn forcing() -> ForcingSpec {
    ForcingSpec {
        body: BodyForce::Gravity {
            g: 1.0,
            envelope: Envelope::SmoothRamp { duration: 0.3 },
        },
        heat: HeatSource::Bump {
            center: [0.3, 0.6, 0.5],
            width: 0.3,
            amplitude: 2.0,
            envelope: Envelope::Constant,
        },
    }
}

fn assembly(c: &mut Criterion) {
    let d = DimensionlessParams::unit();
    let mut group = c.benchmark_group("assembly");
    for (name, g) in meshes() {
        group.bench_with_input(BenchmarkId::from_parameter(&name), &g, |b, g| b.iter(|| build_system(g, &d)));
    }
    group.finish();
}

fn factorization(c: &mut Criterion) {
    let d = DimensionlessParams::unit();
    let mut group = c.benchmark_group("factorization");
    for (name, g) in meshes() {
        let sys = build_system(&g, &d);
        group.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| Stepper::new(&sys, DT, Backend::Direct).unwrap())
        });
    }
    group.finish();
}

fn cn_step(c: &mut Criterion) {
    let d = DimensionlessParams::unit();
    let f = forcing();
    let mut group = c.benchmark_group("cn_step");
    for (name, g) in meshes() {
        let sys = build_system(&g, &d);
        let stepper = Stepper::new(&sys, DT, Backend::Direct).unwrap();
        let s0 = State::zeros(sys.n_w(), sys.n_theta());
        group.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| stepper.step(black_box(&s0), &f).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, assembly, factorization, cn_step);
criterion_main!(benches);
