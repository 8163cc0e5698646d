//! Random test objects: rotations, symmetric and SPD matrices, forms.

use nalgebra::{Matrix3, Matrix6, Quaternion, UnitQuaternion};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::symalg::{Mat3, QuadForm2, QuadForm3, SymMat2, SymMat3};

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Haar-uniform rotation from a normalized Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    let q = Quaternion::new(normal(rng), normal(rng), normal(rng), normal(rng));
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

/// Matrix with i.i.d. standard normal entries.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    Matrix3::from_fn(|_, _| normal(rng))
}

pub fn random_sym3<R: Rng + ?Sized>(rng: &mut R) -> SymMat3 {
    SymMat3::sym_of(&random_matrix(rng))
}

pub fn random_sym2<R: Rng + ?Sized>(rng: &mut R) -> SymMat2 {
    SymMat2::new(normal(rng), normal(rng), normal(rng))
}

/// SPD 3×3 matrix `Id + ε·S` style: `GᵀG/3 + floor·Id`.
pub fn random_spd3<R: Rng + ?Sized>(rng: &mut R, floor: f64) -> SymMat3 {
    let g = random_matrix(rng);
    SymMat3::sym_of(&(g.transpose() * g / 3.0 + Mat3::identity() * floor))
}

/// Positive-definite form with smallest eigenvalue at least `floor`.
pub fn random_spd_form3<R: Rng + ?Sized>(rng: &mut R, floor: f64) -> QuadForm3 {
    let g = Matrix6::from_fn(|_, _| normal(rng));
    QuadForm3::new(g.transpose() * g / 6.0 + Matrix6::identity() * floor)
}

pub fn random_spd_form2<R: Rng + ?Sized>(rng: &mut R, floor: f64) -> QuadForm2 {
    let g = Matrix3::from_fn(|_, _| normal(rng));
    QuadForm2::new(g.transpose() * g / 3.0 + Matrix3::identity() * floor)
}

/// Uniform sample in `[lo, hi)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rotations_are_proper() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let r = random_rotation(&mut rng);
            assert!((r.transpose() * r - Mat3::identity()).norm() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            assert!(random_spd_form3(&mut rng, 0.2).min_eigenvalue() >= 0.2 - 1e-12);
            assert!(random_spd3(&mut rng, 0.1).min_eigenvalue() >= 0.1 - 1e-12);
        }
    }
}
