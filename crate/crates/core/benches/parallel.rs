use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use prestrain_core::ansatz::{energy3d, kirchhoff_curved_ansatz, CurvedData};
use prestrain_core::effective::effective_model;
use prestrain_core::elastic::{builtin_dist_law, ElasticLaw, IsotropicLaw, Q3Field};
use prestrain_core::midsurface::{Cylinder, Grid};
use prestrain_core::par::with_threads;
use prestrain_core::prestrain::{BSpec, Prestrain, PrestrainField, PrestrainSpec};
use prestrain_core::quadrature::ThicknessQuadrature;
use prestrain_core::{SymMat2, SymMat3};

fn bench_energy3d(c: &mut Criterion) {
    let prestrain: Arc<dyn Prestrain> = Arc::new(PrestrainSpec::flat(BSpec::Constant {
        value: SymMat3::new(0.2, -0.1, 0.05, 0.1, 0.03, 0.07),
    }));
    let law: Arc<dyn ElasticLaw> = Arc::new(builtin_dist_law());
    let quad = ThicknessQuadrature::gauss(16);
    let grid = Grid::unit(32, 32);
    let ansatz = kirchhoff_curved_ansatz(
        Arc::new(Cylinder { rho: 2.0 }),
        CurvedData::from_membrane(&SymMat2::zero()),
        prestrain.clone(),
        law.clone(),
        1e-2,
        &quad.nodes,
    )
    .expect("valid ansatz");
    let mut group = c.benchmark_group("energy3d_32x32x16");
    for (label, threads) in [("sequential", 1), ("parallel", 0)] {
        group.bench_function(label, |b| {
            b.iter(|| {
                with_threads(threads, || {
                    black_box(energy3d(&ansatz, prestrain.as_ref(), law.as_ref(), &grid, &quad).unwrap())
                })
            })
        });
    }
    group.finish();
}

fn bench_effective(c: &mut Criterion) {
    let law = IsotropicLaw::new(1.0, 0.5).unwrap();
    let quad = ThicknessQuadrature::gauss(16);
    let points = Grid::unit(48, 48).points();
    let spec = PrestrainSpec::flat(BSpec::Polynomial {
        coefficients: vec![
            SymMat3::new(0.1, 0.0, 0.0, 0.0, 0.0, 0.1),
            SymMat3::new(0.3, -0.2, 0.1, 0.0, 0.0, 0.05),
            SymMat3::new(0.0, 0.4, 0.0, 0.1, 0.0, 0.0),
        ],
    });
    let field = PrestrainField::sample(&spec, &points, &quad);
    let q3 = Q3Field::from_law(&law, &points, &quad.nodes).unwrap();
    let mut group = c.benchmark_group("effective_model_48x48x16");
    for (label, threads) in [("sequential", 1), ("parallel", 0)] {
        group.bench_function(label, |b| {
            b.iter(|| with_threads(threads, || black_box(effective_model(&field, &q3, &quad).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_energy3d, bench_effective);
criterion_main!(benches);
