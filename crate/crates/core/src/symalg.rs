//! Value-semantic small-matrix algebra.
//!
//! Symmetric matrices are carried in an orthonormal coordinate system where
//! off-diagonal entries are scaled by √2, so that the Frobenius inner product
//! of two matrices equals the Euclidean dot product of their coordinate
//! vectors. Quadratic forms on symmetric matrices are then plain symmetric
//! matrices acting on those coordinates.
//!
//! Coordinate order:
//! * 3×3: `(m11, m22, m33, √2·m23, √2·m13, √2·m12)`
//! * 2×2: `(m11, m22, √2·m12)`

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Matrix6, SymmetricEigen, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Mat3 = Matrix3<f64>;
pub type Mat32 = Matrix3x2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

pub(crate) const SQRT_2: f64 = std::f64::consts::SQRT_2;
pub(crate) const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Default tolerance for orthogonality checks on assembled frames.
pub const DEFAULT_FRAME_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymalgError {
    #[error("frame deviates from O(3): |QᵀQ - Id| = {deviation:.3e} exceeds {tolerance:.3e}")]
    FrameNotOrthogonal { deviation: f64, tolerance: f64 },
    #[error("matrix is singular or not positive definite")]
    NotPositiveDefinite,
}

/// Symmetric 2×2 matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SymMat2 {
    pub a11: f64,
    pub a22: f64,
    pub a12: f64,
}

impl SymMat2 {
    pub const fn new(a11: f64, a22: f64, a12: f64) -> Self {
        Self { a11, a22, a12 }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 1.0, 0.0)
    }

    pub fn diag(a11: f64, a22: f64) -> Self {
        Self::new(a11, a22, 0.0)
    }

    pub fn coords(&self) -> Vector3<f64> {
        Vector3::new(self.a11, self.a22, SQRT_2 * self.a12)
    }

    pub fn from_coords(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2] * FRAC_1_SQRT_2)
    }

    /// Symmetric part of an arbitrary 2×2 matrix.
    pub fn sym_of(m: &Matrix2<f64>) -> Self {
        Self::new(m[(0, 0)], m[(1, 1)], 0.5 * (m[(0, 1)] + m[(1, 0)]))
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.a11, self.a12, self.a12, self.a22)
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.a11 * other.a11 + self.a22 * other.a22 + 2.0 * self.a12 * other.a12
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(s * self.a11, s * self.a22, s * self.a12)
    }

    /// Inclusion into the top-left block of a 3×3 matrix.
    pub fn embed(&self) -> SymMat3 {
        SymMat3 {
            xx: self.a11,
            yy: self.a22,
            xy: self.a12,
            ..SymMat3::zero()
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.a11 - other.a11)
            .abs()
            .max((self.a22 - other.a22).abs())
            .max((self.a12 - other.a12).abs())
    }

    /// Orthonormal basis element `a` (0..3).
    pub fn basis(a: usize) -> Self {
        let mut v = Vector3::zeros();
        v[a] = 1.0;
        Self::from_coords(&v)
    }
}

impl Add for SymMat2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.a11 + o.a11, self.a22 + o.a22, self.a12 + o.a12)
    }
}

impl Sub for SymMat2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.a11 - o.a11, self.a22 - o.a22, self.a12 - o.a12)
    }
}

impl Neg for SymMat2 {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul<SymMat2> for f64 {
    type Output = SymMat2;
    fn mul(self, m: SymMat2) -> SymMat2 {
        m.scale(self)
    }
}

/// Symmetric 3×3 matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SymMat3 {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub yz: f64,
    pub xz: f64,
    pub xy: f64,
}

impl SymMat3 {
    pub const fn new(xx: f64, yy: f64, zz: f64, yz: f64, xz: f64, xy: f64) -> Self {
        Self { xx, yy, zz, yz, xz, xy }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0)
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Self::new(a, b, c, 0.0, 0.0, 0.0)
    }

    pub fn coords(&self) -> Vector6<f64> {
        Vector6::new(
            self.xx,
            self.yy,
            self.zz,
            SQRT_2 * self.yz,
            SQRT_2 * self.xz,
            SQRT_2 * self.xy,
        )
    }

    pub fn from_coords(v: &Vector6<f64>) -> Self {
        Self::new(
            v[0],
            v[1],
            v[2],
            v[3] * FRAC_1_SQRT_2,
            v[4] * FRAC_1_SQRT_2,
            v[5] * FRAC_1_SQRT_2,
        )
    }

    /// Symmetric part of an arbitrary 3×3 matrix.
    pub fn sym_of(m: &Mat3) -> Self {
        Self::new(
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            0.5 * (m[(1, 2)] + m[(2, 1)]),
            0.5 * (m[(0, 2)] + m[(2, 0)]),
            0.5 * (m[(0, 1)] + m[(1, 0)]),
        )
    }

    pub fn to_matrix(&self) -> Mat3 {
        Mat3::new(
            self.xx, self.xy, self.xz, //
            self.xy, self.yy, self.yz, //
            self.xz, self.yz, self.zz,
        )
    }

    /// `sym(c ⊗ e₃)`: fills the third row and column.
    pub fn sym_outer_e3(c: &Vec3) -> Self {
        Self::new(0.0, 0.0, c[2], 0.5 * c[1], 0.5 * c[0], 0.0)
    }

    /// In-plane 2×2 block.
    pub fn block2(&self) -> SymMat2 {
        SymMat2::new(self.xx, self.yy, self.xy)
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn dot(&self, o: &Self) -> f64 {
        self.coords().dot(&o.coords())
    }

    pub fn norm(&self) -> f64 {
        self.coords().norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_coords(&(self.coords() * s))
    }

    /// `P · self · P`.
    pub fn congruence(&self, p: &SymMat3) -> Self {
        let pm = p.to_matrix();
        Self::sym_of(&(pm * self.to_matrix() * pm))
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        (self.coords() - o.coords()).amax()
    }

    /// Orthonormal basis element `a` (0..6).
    pub fn basis(a: usize) -> Self {
        let mut v = Vector6::zeros();
        v[a] = 1.0;
        Self::from_coords(&v)
    }

    pub fn eigen(&self) -> (Vector3<f64>, Mat3) {
        let e = SymmetricEigen::new(self.to_matrix());
        (e.eigenvalues, e.eigenvectors)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().0.min()
    }

    pub fn is_spd(&self) -> bool {
        self.min_eigenvalue() > 0.0
    }

    pub fn inverse(&self) -> Result<Self, SymalgError> {
        let m = self.to_matrix();
        let inv = m.try_inverse().ok_or(SymalgError::NotPositiveDefinite)?;
        Ok(Self::sym_of(&inv))
    }

    /// Apply `f` to the eigenvalues.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Self {
        let (vals, vecs) = self.eigen();
        let d = Mat3::from_diagonal(&vals.map(f));
        Self::sym_of(&(vecs * d * vecs.transpose()))
    }

    /// Positive square root of an SPD matrix.
    pub fn sqrt(&self) -> Self {
        self.spectral_map(|x| x.max(0.0).sqrt())
    }
}

impl Add for SymMat3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::from_coords(&(self.coords() + o.coords()))
    }
}

impl Sub for SymMat3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::from_coords(&(self.coords() - o.coords()))
    }
}

impl Neg for SymMat3 {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul<SymMat3> for f64 {
    type Output = SymMat3;
    fn mul(self, m: SymMat3) -> SymMat3 {
        m.scale(self)
    }
}

/// Coordinate indices of the in-plane block `(11, 22, 12)` inside the 6-vector.
pub(crate) const IN_PLANE: [usize; 3] = [0, 1, 5];
/// Coordinate indices of the out-of-plane entries `(33, 23, 13)`.
pub(crate) const OUT_OF_PLANE: [usize; 3] = [2, 3, 4];

/// Quadratic form on symmetric 3×3 matrices, `F ↦ ⟨L sym F, sym F⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadForm3 {
    op: Matrix6<f64>,
}

impl QuadForm3 {
    /// Wraps an operator in orthonormal coordinates; the symmetric part is kept.
    pub fn new(op: Matrix6<f64>) -> Self {
        Self {
            op: 0.5 * (op + op.transpose()),
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix6::identity())
    }

    /// `2μ|sym F|² + λ (tr F)²`.
    pub fn isotropic(mu: f64, lambda: f64) -> Self {
        let mut op = Matrix6::identity() * (2.0 * mu);
        for i in 0..3 {
            for j in 0..3 {
                op[(i, j)] += lambda;
            }
        }
        Self::new(op)
    }

    pub fn operator(&self) -> &Matrix6<f64> {
        &self.op
    }

    pub fn eval_sym(&self, m: &SymMat3) -> f64 {
        let v = m.coords();
        v.dot(&(self.op * v))
    }

    /// `⟨L sym f, sym f⟩`; the antisymmetric part of `f` is ignored.
    pub fn apply(&self, f: &Mat3) -> f64 {
        self.eval_sym(&SymMat3::sym_of(f))
    }

    pub fn bilinear(&self, a: &SymMat3, b: &SymMat3) -> f64 {
        a.coords().dot(&(self.op * b.coords()))
    }

    pub fn act(&self, m: &SymMat3) -> SymMat3 {
        SymMat3::from_coords(&(self.op * m.coords()))
    }

    /// The form `X ↦ Q(P X P)`.
    pub fn pulled_back(&self, p: &SymMat3) -> Self {
        let k = congruence_operator(p);
        Self::new(k.transpose() * self.op * k)
    }

    pub fn eigenvalues(&self) -> Vector6<f64> {
        SymmetricEigen::new(self.op).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().max()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { op: self.op * s }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.op - other.op).amax()
    }
}

/// Quadratic form on symmetric 2×2 matrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadForm2 {
    op: Matrix3<f64>,
}

impl QuadForm2 {
    pub fn new(op: Matrix3<f64>) -> Self {
        Self {
            op: 0.5 * (op + op.transpose()),
        }
    }

    pub fn zero() -> Self {
        Self::new(Matrix3::zeros())
    }

    /// `2μ|X|² + λ' (tr X)²`.
    pub fn isotropic(mu: f64, lambda: f64) -> Self {
        let mut op = Matrix3::identity() * (2.0 * mu);
        for i in 0..2 {
            for j in 0..2 {
                op[(i, j)] += lambda;
            }
        }
        Self::new(op)
    }

    pub fn operator(&self) -> &Matrix3<f64> {
        &self.op
    }

    pub fn eval(&self, x: &SymMat2) -> f64 {
        let v = x.coords();
        v.dot(&(self.op * v))
    }

    pub fn bilinear(&self, a: &SymMat2, b: &SymMat2) -> f64 {
        a.coords().dot(&(self.op * b.coords()))
    }

    pub fn act(&self, x: &SymMat2) -> SymMat2 {
        SymMat2::from_coords(&(self.op * x.coords()))
    }

    pub fn eigenvalues(&self) -> Vector3<f64> {
        SymmetricEigen::new(self.op).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.op - other.op).amax()
    }

    /// Upper-triangular entries `(00, 01, 02, 11, 12, 22)` of the operator.
    pub fn upper_entries(&self) -> [f64; 6] {
        let o = &self.op;
        [o[(0, 0)], o[(0, 1)], o[(0, 2)], o[(1, 1)], o[(1, 2)], o[(2, 2)]]
    }
}

/// Matrix of `Y ↦ P Y P` on orthonormal 6-coordinates.
pub fn congruence_operator(p: &SymMat3) -> Matrix6<f64> {
    let mut k = Matrix6::zeros();
    for a in 0..6 {
        let col = SymMat3::basis(a).congruence(p).coords();
        k.set_column(a, &col);
    }
    k
}

/// Coordinates of `sym(c ⊗ e₃)` are `T c` restricted to the out-of-plane slots.
pub(crate) fn out_of_plane_map() -> Matrix3<f64> {
    // rows: (33, 23, 13) coordinates; columns: c1, c2, c3
    Matrix3::new(
        0.0,
        0.0,
        1.0, //
        0.0,
        FRAC_1_SQRT_2,
        0.0, //
        FRAC_1_SQRT_2,
        0.0,
        0.0,
    )
}

/// Assemble `[∇y | ν]` and check that it lies in O(3).
pub fn frame_of(grad_y: &Mat32, nu: &Vec3, tol: f64) -> Result<Mat3, SymalgError> {
    let q = Mat3::from_columns(&[grad_y.column(0).into_owned(), grad_y.column(1).into_owned(), *nu]);
    let deviation = (q.transpose() * q - Mat3::identity()).norm();
    if !(deviation <= tol) {
        return Err(SymalgError::FrameNotOrthogonal {
            deviation,
            tolerance: tol,
        });
    }
    Ok(q)
}

/// `√(FᵀF) − Id`, accurate when `F` is close to a rotation.
///
/// Works from `E = FᵀF − Id = D + Dᵀ + DᵀD` with `D = F − Id`, and maps each
/// eigenvalue `e` of `E` to `√(1+e) − 1 = e / (√(1+e) + 1)`.
pub fn stretch_minus_identity(f: &Mat3) -> SymMat3 {
    let (vals, vecs) = stretch_deviations(f);
    SymMat3::sym_of(&(vecs * Mat3::from_diagonal(&vals) * vecs.transpose()))
}

/// Principal stretch deviations `σᵢ − 1` with their eigenvectors.
pub fn stretch_deviations(f: &Mat3) -> (Vector3<f64>, Mat3) {
    let d = f - Mat3::identity();
    let e = SymMat3::sym_of(&(d + d.transpose() + d.transpose() * d));
    let (vals, vecs) = e.eigen();
    let dev = vals.map(|e| if e <= -1.0 { -1.0 } else { e / ((1.0 + e).sqrt() + 1.0) });
    (dev, vecs)
}

/// Squared Frobenius distance from `F` to SO(3).
///
/// For `det F < 0` the smallest singular value is reflected.
pub fn dist_so3_squared(f: &Mat3) -> f64 {
    let (dev, _) = stretch_deviations(f);
    let mut sum: f64 = dev.iter().map(|d| d * d).sum();
    if f.determinant() < 0.0 {
        // σ_min = 1 + dev_min; swap (σ−1)² for (σ+1)²
        let dmin = dev.min();
        sum += (dmin + 2.0).powi(2) - dmin * dmin;
    }
    sum
}

/// Polar decomposition `F = R U` with `U = √(FᵀF)`.
///
/// `R = W Vᵀ` from the SVD stays orthogonal to rounding even when the
/// stretches cluster, where `F U⁻¹` would inherit the eigenvector error.
pub fn polar(f: &Mat3) -> Result<(Mat3, SymMat3), SymalgError> {
    let svd = f.svd(true, true);
    if svd.singular_values.min() <= 0.0 || !svd.singular_values.iter().all(|s| s.is_finite()) {
        return Err(SymalgError::NotPositiveDefinite);
    }
    let (w, vt) = match (svd.u, svd.v_t) {
        (Some(w), Some(vt)) => (w, vt),
        _ => return Err(SymalgError::NotPositiveDefinite),
    };
    let r = w * vt;
    Ok((r, SymMat3::sym_of(&(r.transpose() * f))))
}
