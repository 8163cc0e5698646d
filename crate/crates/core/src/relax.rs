//! Plane-stress relaxation of a 3D quadratic form.
//!
//! For a 2×2 strain `X` the out-of-plane column is chosen to minimize
//! `Q₃(Ā⁻¹[X + c⊗e₃]Ā⁻¹)` over `c ∈ R³`. The minimizer is linear in `X`, so
//! the relaxed energy is again a quadratic form.

use nalgebra::{Matrix3, Matrix6x3, Vector3};
use thiserror::Error;

use crate::symalg::{out_of_plane_map, QuadForm2, QuadForm3, SymMat2, SymMat3, Vec3, IN_PLANE, OUT_OF_PLANE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxError {
    #[error("reference metric factor is not symmetric positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    SingularAbar { min_eigenvalue: f64 },
    #[error("out-of-plane stationarity system is singular")]
    SingularStationaritySystem,
}

/// Relaxed form together with its minimizing out-of-plane map.
#[derive(Clone, Copy, Debug)]
pub struct RelaxedForm {
    q2: QuadForm2,
    /// `c = c_map · coords(X)`.
    c_map: Matrix3<f64>,
    abar: SymMat3,
    pulled: QuadForm3,
    q3: QuadForm3,
}

/// Coordinates of `ι(X)` in the 6-space, as a 6×3 matrix acting on 2×2 coordinates.
fn embedding() -> Matrix6x3<f64> {
    let mut j = Matrix6x3::zeros();
    for (col, &row) in IN_PLANE.iter().enumerate() {
        j[(row, col)] = 1.0;
    }
    j
}

/// Coordinates of `sym(c⊗e₃)` as a 6×3 matrix acting on `c`.
fn out_of_plane() -> Matrix6x3<f64> {
    let t = out_of_plane_map();
    let mut m = Matrix6x3::zeros();
    for (r, &row) in OUT_OF_PLANE.iter().enumerate() {
        for c in 0..3 {
            m[(row, c)] = t[(r, c)];
        }
    }
    m
}

pub fn relax(q3: &QuadForm3, abar: &SymMat3) -> Result<RelaxedForm, RelaxError> {
    let min_eigenvalue = abar.min_eigenvalue();
    if !(min_eigenvalue > 0.0) {
        return Err(RelaxError::SingularAbar { min_eigenvalue });
    }
    let p = abar
        .inverse()
        .map_err(|_| RelaxError::SingularAbar { min_eigenvalue })?;
    let pulled = q3.pulled_back(&p);
    let l = pulled.operator();
    let j = embedding();
    let t = out_of_plane();
    let a = t.transpose() * l * t;
    let chol = a.cholesky().ok_or(RelaxError::SingularStationaritySystem)?;
    let c_map = -chol.solve(&(t.transpose() * l * j));
    let lift = j + t * c_map;
    let q2 = QuadForm2::new(lift.transpose() * l * lift);
    Ok(RelaxedForm {
        q2,
        c_map,
        abar: *abar,
        pulled,
        q3: *q3,
    })
}

impl RelaxedForm {
    pub fn q2(&self) -> &QuadForm2 {
        &self.q2
    }

    pub fn abar(&self) -> &SymMat3 {
        &self.abar
    }

    pub fn q3(&self) -> &QuadForm3 {
        &self.q3
    }

    /// `X ↦ Q₃(Ā⁻¹ X Ā⁻¹)` on symmetric 3×3 inputs.
    pub fn pulled_back(&self) -> &QuadForm3 {
        &self.pulled
    }

    /// Minimizing out-of-plane vector for `X`.
    pub fn c_of(&self, x: &SymMat2) -> Vec3 {
        self.c_map * x.coords()
    }

    pub fn c_map(&self) -> &Matrix3<f64> {
        &self.c_map
    }

    /// `sym(ι(X) + c_of(X)⊗e₃)`.
    pub fn relaxed_lift(&self, x: &SymMat2) -> SymMat3 {
        x.embed() + SymMat3::sym_outer_e3(&self.c_of(x))
    }

    /// Stationarity residual of the out-of-plane entries for `X`.
    pub fn stationarity_residual(&self, x: &SymMat2) -> f64 {
        let g = self.pulled.operator() * self.relaxed_lift(x).coords();
        Vector3::new(g[OUT_OF_PLANE[0]], g[OUT_OF_PLANE[1]], g[OUT_OF_PLANE[2]]).norm()
    }

    /// `C/c + 1` for the extreme eigenvalues of the conjugated 3D form.
    pub fn lift_bound_factor(&self) -> f64 {
        let ev = self.pulled.eigenvalues();
        ev.max() / ev.min() + 1.0
    }
}

/// Complete a full symmetric target `Y` so that the out-of-plane part of
/// `Y + sym(d⊗e₃)` matches the relaxed lift of `Y₂ₓ₂`.
pub fn completion_vector(rf: &RelaxedForm, y: &SymMat3) -> Vec3 {
    let c = rf.c_of(&y.block2());
    Vec3::new(c[0] - 2.0 * y.xz, c[1] - 2.0 * y.yz, c[2] - y.zz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn isotropic_closed_form() {
        let (mu, lambda) = (1.3, 0.7);
        let rf = relax(&QuadForm3::isotropic(mu, lambda), &SymMat3::identity()).unwrap();
        let oracle = QuadForm2::isotropic(mu, 2.0 * mu * lambda / (2.0 * mu + lambda));
        assert!(rf.q2().max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn lift_of_identity() {
        let rf = relax(&QuadForm3::isotropic(1.0, 1.0), &SymMat3::identity()).unwrap();
        let c = rf.c_of(&SymMat2::identity());
        assert!(c[0].abs() < 1e-14 && c[1].abs() < 1e-14);
        assert!((c[2] + 2.0 / 3.0).abs() < 1e-14);
        let c = rf.c_of(&SymMat2::new(1.0, -1.0, 0.0));
        assert!(c.norm() < 1e-14);
        assert_eq!(rf.c_of(&SymMat2::zero()), Vec3::zeros());
    }

    #[test]
    fn singular_inputs() {
        assert!(matches!(
            relax(&QuadForm3::identity(), &SymMat3::diag(1.0, 1.0, 0.0)),
            Err(RelaxError::SingularAbar { .. })
        ));
        // a form blind to the 33 entry cannot fix c₃
        let mut op = *QuadForm3::identity().operator();
        op[(2, 2)] = 0.0;
        assert!(matches!(
            relax(&QuadForm3::new(op), &SymMat3::identity()),
            Err(RelaxError::SingularStationaritySystem)
        ));
    }

    #[test]
    fn lift_realizes_relaxed_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let q3 = sampling::random_spd_form3(&mut rng, 0.2);
            let abar = sampling::random_spd3(&mut rng, 0.3);
            let rf = relax(&q3, &abar).unwrap();
            let x = sampling::random_sym2(&mut rng);
            let lift = rf.relaxed_lift(&x);
            let p = abar.inverse().unwrap();
            let direct = q3.eval_sym(&lift.congruence(&p));
            let scale = 1.0 + direct.abs();
            assert!((direct - rf.q2().eval(&x)).abs() < 1e-10 * scale);
            assert!(rf.stationarity_residual(&x) < 1e-10 * (1.0 + x.norm()));
            let unrelaxed = q3.eval_sym(&x.embed().congruence(&p));
            assert!(rf.q2().eval(&x) <= unrelaxed + 1e-12 * scale);
            assert!(rf.c_of(&x).norm() <= rf.lift_bound_factor() * x.norm());
        }
    }

    #[test]
    fn completion_matches_lift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rf = relax(&sampling::random_spd_form3(&mut rng, 0.2), &SymMat3::identity()).unwrap();
        let y = sampling::random_sym3(&mut rng);
        let d = completion_vector(&rf, &y);
        let full = y + SymMat3::sym_outer_e3(&d);
        assert!(full.max_abs_diff(&rf.relaxed_lift(&y.block2())) < 1e-13);
    }
}
