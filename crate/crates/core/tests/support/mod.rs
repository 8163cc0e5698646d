//! Independent reference computations shared by integration tests.
//!
//! Nothing here calls into the reduction pipeline: forms are evaluated on
//! plain matrices and minimizations are done by brute force or by a Gram
//! system over an explicit basis.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3};
use prestrain_core::{QuadForm2, QuadForm3, SymMat2, SymMat3};

/// `Q₃(Ā⁻¹ (X + sym(c⊗e₃)) Ā⁻¹)` assembled entrywise.
pub fn q3_with_column(q3: &QuadForm3, abar: &Matrix3<f64>, x: &SymMat2, c: [f64; 3]) -> f64 {
    let mut m = Matrix3::zeros();
    m[(0, 0)] = x.a11;
    m[(1, 1)] = x.a22;
    m[(0, 1)] = x.a12;
    m[(1, 0)] = x.a12;
    m[(0, 2)] += 0.5 * c[0];
    m[(2, 0)] += 0.5 * c[0];
    m[(1, 2)] += 0.5 * c[1];
    m[(2, 1)] += 0.5 * c[1];
    m[(2, 2)] += c[2];
    let p = abar.try_inverse().expect("invertible Ā");
    q3.apply(&(p * m * p))
}

/// Brute-force `min_c` over a cube of half-width `radius`, refined once
/// around the coarse optimum. Returns `(value, c, final step)`.
pub fn grid_search_relaxation(
    q3: &QuadForm3,
    abar: &Matrix3<f64>,
    x: &SymMat2,
    radius: f64,
    n: usize,
) -> (f64, [f64; 3], f64) {
    let search = |center: [f64; 3], half: f64| {
        let step = 2.0 * half / (n - 1) as f64;
        let mut best = (f64::INFINITY, center);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let c = [
                        center[0] - half + i as f64 * step,
                        center[1] - half + j as f64 * step,
                        center[2] - half + k as f64 * step,
                    ];
                    let v = q3_with_column(q3, abar, x, c);
                    if v < best.0 {
                        best = (v, c);
                    }
                }
            }
        }
        (best.0, best.1, step)
    };
    let (_, c0, step0) = search([0.0; 3], radius);
    search(c0, 2.0 * step0)
}

/// `min` over affine fields `a + t·b` of `Σ_k w_k Q₂ₖ(β_k − a − t_k b)`, by
/// the 6×6 Gram system of the basis `{E_i, t·E_i}`.
pub fn gram_residual(l2: &[QuadForm2], beta: &[SymMat2], nodes: &[f64], weights: &[f64]) -> f64 {
    let basis = |i: usize, t: f64| -> SymMat2 {
        let e = match i % 3 {
            0 => SymMat2::new(1.0, 0.0, 0.0),
            1 => SymMat2::new(0.0, 1.0, 0.0),
            _ => SymMat2::new(0.0, 0.0, 1.0),
        };
        if i < 3 {
            e
        } else {
            e.scale(t)
        }
    };
    let mut g = DMatrix::<f64>::zeros(6, 6);
    let mut r = DVector::<f64>::zeros(6);
    let mut total = 0.0;
    for k in 0..nodes.len() {
        let (t, w) = (nodes[k], weights[k]);
        for i in 0..6 {
            r[i] += w * l2[k].bilinear(&beta[k], &basis(i, t));
            for j in 0..6 {
                g[(i, j)] += w * l2[k].bilinear(&basis(i, t), &basis(j, t));
            }
        }
        total += w * l2[k].eval(&beta[k]);
    }
    let sol = g.clone().lu().solve(&r).expect("Gram matrix is invertible");
    total - r.dot(&sol)
}

/// `sym(ĀB)` restricted to the in-plane block, from plain matrix products.
pub fn inplane_prestrain(abar: &SymMat3, b: &SymMat3) -> SymMat2 {
    let m = abar.to_matrix() * b.to_matrix();
    SymMat2::new(m[(0, 0)], m[(1, 1)], 0.5 * (m[(0, 1)] + m[(1, 0)]))
}

/// Isotropic plane-stress form `2μ|X|² + (2μλ/(2μ+λ))(tr X)²` as an operator
/// on orthonormal coordinates.
pub fn isotropic_plane_stress(mu: f64, lambda: f64) -> Matrix3<f64> {
    let k = 2.0 * mu * lambda / (2.0 * mu + lambda);
    let mut m = Matrix3::identity() * (2.0 * mu);
    for i in 0..2 {
        for j in 0..2 {
            m[(i, j)] += k;
        }
    }
    m
}
