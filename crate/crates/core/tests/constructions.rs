use std::sync::Arc;

use prestrain_core::ansatz::{
    energy3d, gradient_check, h_sweep, kirchhoff_curved_ansatz, wrinkled_flat_ansatz, AnsatzError, CurvedData,
    Deformation3D, WrinkleParams,
};
use prestrain_core::elastic::{builtin_dist_law, ElasticLaw};
use prestrain_core::midsurface::{Cylinder, Grid, Plane};
use prestrain_core::prestrain::{BSpec, Prestrain, PrestrainSpec};
use prestrain_core::quadrature::ThicknessQuadrature;
use prestrain_core::regimes::{
    beating_rotation, example_cylinder, nearest_rotation_gap, order_h_diagnostic, CylinderFamily,
};
use prestrain_core::{sampling, SymMat2, SymMat3, Vec2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn probes() -> Vec<(Vec2, f64)> {
    (0..12)
        .map(|i| {
            let a = i as f64;
            (Vec2::new(0.05 + 0.07 * a, 0.8 - 0.06 * a), -0.45 + 0.08 * a)
        })
        .collect()
}

#[test]
fn wrinkled_ansatz_gradient_and_identity() {
    let prestrain: Arc<dyn Prestrain> = Arc::new(PrestrainSpec::flat(BSpec::Polynomial {
        coefficients: vec![SymMat3::zero(), SymMat3::identity()],
    }));
    let law: Arc<dyn ElasticLaw> = Arc::new(builtin_dist_law());
    let quad = ThicknessQuadrature::gauss(8);
    let params = WrinkleParams {
        s: SymMat2::diag(0.5, 0.0),
        k: 1.0,
        gamma: 0.4,
    };
    let a = wrinkled_flat_ansatz(Arc::new(Plane::default()), params, prestrain, law, 1e-2, &quad.nodes).unwrap();
    assert!(gradient_check(&a, &probes(), 1e-6) <= 1e-6);
    let worst = probes()
        .iter()
        .map(|(x, _)| a.corrugation().residual(*x))
        .fold(0.0, f64::max);
    assert!(worst <= 1e-12);
}

#[test]
fn wrinkled_ansatz_rejects_curved_base() {
    let prestrain: Arc<dyn Prestrain> = Arc::new(PrestrainSpec::flat(BSpec::Zero));
    let params = WrinkleParams {
        s: SymMat2::diag(0.5, 0.0),
        k: 1.0,
        gamma: 0.4,
    };
    let r = wrinkled_flat_ansatz(
        Arc::new(Cylinder { rho: 2.0 }),
        params,
        prestrain,
        Arc::new(builtin_dist_law()),
        1e-2,
        &[0.0],
    );
    assert!(matches!(r, Err(AnsatzError::PreconditionII { .. })));
}

#[test]
fn flat_zero_prestrain_sweep_is_identically_zero() {
    let prestrain: Arc<dyn Prestrain> = Arc::new(PrestrainSpec::flat(BSpec::Zero));
    let law: Arc<dyn ElasticLaw> = Arc::new(builtin_dist_law());
    let quad = ThicknessQuadrature::gauss(4);
    let grid = Grid::unit(9, 9);
    let table = h_sweep(&[1e-1, 1e-2, 1e-3], 0.0, |h| {
        let a = kirchhoff_curved_ansatz(
            Arc::new(Plane::default()),
            CurvedData::from_membrane(&SymMat2::zero()),
            prestrain.clone(),
            law.clone(),
            h,
            &quad.nodes,
        )?;
        energy3d(&a, prestrain.as_ref(), law.as_ref(), &grid, &quad)
    })
    .unwrap();
    assert!(table.rows.iter().all(|r| r.value.abs() <= 1e-20));
}

#[test]
fn curved_ansatz_descriptor_names_the_surface() {
    let prestrain: Arc<dyn Prestrain> = Arc::new(PrestrainSpec::flat(BSpec::Zero));
    let a = kirchhoff_curved_ansatz(
        Arc::new(Cylinder { rho: 2.0 }),
        CurvedData::from_membrane(&SymMat2::zero()),
        prestrain,
        Arc::new(builtin_dist_law()),
        1e-2,
        &[0.0],
    )
    .unwrap();
    assert!(a.descriptor().contains("cylinder"));
}

#[test]
fn cylinder_example_family_metric_exponent() {
    // ‖(Aʰ)ᵀAʰ − Id‖_{L¹} has a linear part ~ h^{2−α} and a quadratic part ~ h^{3−2α}
    for (alpha, h_list, want) in [(0.5, [1e-2, 1e-3, 1e-4], 1.5), (2.0, [1e-2, 1e-3, 1e-4], -1.0)] {
        let r = order_h_diagnostic(&CylinderFamily { alpha }, &h_list).unwrap();
        let e = r.l1_exponent.exponent().unwrap();
        assert!((e - want).abs() < 0.05, "{alpha}: {e}");
        assert!(!r.h2_consistent);
        assert!(r.rows.iter().all(|row| row.max_integrand.unwrap() <= 1e-12));
    }
}

#[test]
fn cylinder_example_deviation_norm() {
    // ‖Aʰ − Id‖²_{L²(Ωʰ)} = ∫z²/h^{2α} = h^{3−2α}/12
    let quad = ThicknessQuadrature::gauss(4);
    for (h, alpha) in [(1e-2, 0.5), (1e-3, 1.0)] {
        let r = example_cylinder(h, alpha, &Grid::unit(5, 5), &quad).unwrap();
        let want = h.powf(3.0 - 2.0 * alpha) / 12.0;
        assert!((r.l2_sq_deviation / want - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn commuting_pairs_never_beaten(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = sampling::random_rotation(&mut rng);
        let diag = |rng: &mut ChaCha8Rng| {
            nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(
                sampling::uniform(rng, 0.3, 3.0),
                sampling::uniform(rng, 0.3, 3.0),
                sampling::uniform(rng, 0.3, 3.0),
            ))
        };
        let a = SymMat3::sym_of(&(q * diag(&mut rng) * q.transpose()));
        let m = SymMat3::sym_of(&(q * diag(&mut rng) * q.transpose()));
        let r = nearest_rotation_gap(&a, &m, 300, &mut rng).unwrap();
        prop_assert!(r.violation <= 1e-12);
    }

    #[test]
    fn optimal_rotation_is_never_worse_than_identity(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sampling::random_spd3(&mut rng, 0.2);
        let m = sampling::random_spd3(&mut rng, 0.2);
        let b = beating_rotation(&a, &m).unwrap();
        prop_assert!(b.value <= b.identity_value + 1e-12);
    }
}
