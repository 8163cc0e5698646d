//! Discrete midsurfaces and the limiting plate energy.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::effective::{beta_of, PlateModel};
use crate::elastic::Q3Field;
use crate::prestrain::PrestrainField;
use crate::quadrature::ThicknessQuadrature;
use crate::relax::RelaxError;
use crate::symalg::{Mat3, Mat32, SymMat2, SymMat3, Vec2, Vec3, IN_PLANE, OUT_OF_PLANE};

/// Default tolerance on `‖∇yᵀ∇y − G₂ₓ₂‖` for the isometry gate.
pub const DEFAULT_ISOMETRY_TOL: f64 = 1e-3;
const DEGENERATE_TOL: f64 = 1e-10;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MidsurfaceError {
    #[error("surface is degenerate at node {node}: |∂₁y × ∂₂y| = {area:.3e}")]
    DegenerateSurface { node: usize, area: f64 },
    #[error("grid must be at least 3×3, got {n1}×{n2}")]
    GridTooSmall { n1: usize, n2: usize },
    #[error("metric mismatch {deviation:.3e} exceeds {tolerance:.1e}")]
    MetricMismatch { deviation: f64, tolerance: f64 },
    #[error("isometry residual {residual:.3e} exceeds {tolerance:.1e}: energy is infinite")]
    InfiniteEnergy { residual: f64, tolerance: f64 },
    #[error("field has {got} entries, grid has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("direct minimization system is singular at node {node}")]
    SingularDirectSystem { node: usize },
    #[error(transparent)]
    Relax(#[from] RelaxError),
}

/// Rectangular lattice on `[lo, hi]`, `x₁` index outermost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n1: usize,
    pub n2: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Grid {
    pub fn unit(n1: usize, n2: usize) -> Self {
        Self {
            n1,
            n2,
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> (f64, f64) {
        (
            (self.hi[0] - self.lo[0]) / (self.n1.max(2) - 1) as f64,
            (self.hi[1] - self.lo[1]) / (self.n2.max(2) - 1) as f64,
        )
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        let (d1, d2) = self.spacing();
        Vec2::new(self.lo[0] + i as f64 * d1, self.lo[1] + j as f64 * d2)
    }

    pub fn points(&self) -> Vec<Vec2> {
        (0..self.n1)
            .flat_map(|i| (0..self.n2).map(move |j| (i, j)))
            .map(|(i, j)| self.point(i, j))
            .collect()
    }

    /// Tensor trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let (d1, d2) = self.spacing();
        let w1 = |i: usize, n: usize| if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
        (0..self.n1)
            .flat_map(|i| (0..self.n2).map(move |j| (i, j)))
            .map(|(i, j)| w1(i, self.n1) * w1(j, self.n2) * d1 * d2)
            .collect()
    }

    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    fn check(&self) -> Result<(), MidsurfaceError> {
        if self.n1 < 3 || self.n2 < 3 {
            return Err(MidsurfaceError::GridTooSmall {
                n1: self.n1,
                n2: self.n2,
            });
        }
        Ok(())
    }
}

/// A smooth parametrized surface `y: Ω → R³`.
///
/// Derivatives default to central differences of `position`; analytic
/// surfaces override them.
pub trait ParametricSurface: Send + Sync {
    fn position(&self, x: Vec2) -> Vec3;

    fn jacobian(&self, x: Vec2) -> Mat32 {
        let h = FD_STEP;
        let d1 = (self.position(x + Vec2::new(h, 0.0)) - self.position(x - Vec2::new(h, 0.0))) / (2.0 * h);
        let d2 = (self.position(x + Vec2::new(0.0, h)) - self.position(x - Vec2::new(0.0, h))) / (2.0 * h);
        Mat32::from_columns(&[d1, d2])
    }

    /// `[∂₁∇y, ∂₂∇y]`.
    fn second_derivatives(&self, x: Vec2) -> [Mat32; 2] {
        let h = FD_STEP;
        let e = [Vec2::new(h, 0.0), Vec2::new(0.0, h)];
        e.map(|ej| (self.jacobian(x + ej) - self.jacobian(x - ej)) / (2.0 * h))
    }

    fn normal(&self, x: Vec2) -> Vec3 {
        let j = self.jacobian(x);
        j.column(0).cross(&j.column(1)).normalize()
    }

    fn normal_jacobian(&self, x: Vec2) -> Mat32 {
        let h = FD_STEP;
        let d1 = (self.normal(x + Vec2::new(h, 0.0)) - self.normal(x - Vec2::new(h, 0.0))) / (2.0 * h);
        let d2 = (self.normal(x + Vec2::new(0.0, h)) - self.normal(x - Vec2::new(0.0, h))) / (2.0 * h);
        Mat32::from_columns(&[d1, d2])
    }

    fn name(&self) -> String;
}

/// `y = (a·x₁, b·x₂, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub stretch: [f64; 2],
}

impl Default for Plane {
    fn default() -> Self {
        Self { stretch: [1.0, 1.0] }
    }
}

impl ParametricSurface for Plane {
    fn position(&self, x: Vec2) -> Vec3 {
        Vec3::new(self.stretch[0] * x[0], self.stretch[1] * x[1], 0.0)
    }
    fn jacobian(&self, _x: Vec2) -> Mat32 {
        Mat32::new(self.stretch[0], 0.0, 0.0, self.stretch[1], 0.0, 0.0)
    }
    fn second_derivatives(&self, _x: Vec2) -> [Mat32; 2] {
        [Mat32::zeros(), Mat32::zeros()]
    }
    fn normal(&self, _x: Vec2) -> Vec3 {
        Vec3::z()
    }
    fn normal_jacobian(&self, _x: Vec2) -> Mat32 {
        Mat32::zeros()
    }
    fn name(&self) -> String {
        "plane".into()
    }
}

/// `y = (ρ cos(x₁/ρ), ρ sin(x₁/ρ), x₂)`, outward normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cylinder {
    pub rho: f64,
}

impl ParametricSurface for Cylinder {
    fn position(&self, x: Vec2) -> Vec3 {
        let th = x[0] / self.rho;
        Vec3::new(self.rho * th.cos(), self.rho * th.sin(), x[1])
    }
    fn jacobian(&self, x: Vec2) -> Mat32 {
        let th = x[0] / self.rho;
        Mat32::new(-th.sin(), 0.0, th.cos(), 0.0, 0.0, 1.0)
    }
    fn second_derivatives(&self, x: Vec2) -> [Mat32; 2] {
        let th = x[0] / self.rho;
        let k = 1.0 / self.rho;
        [
            Mat32::new(-k * th.cos(), 0.0, -k * th.sin(), 0.0, 0.0, 0.0),
            Mat32::zeros(),
        ]
    }
    fn normal(&self, x: Vec2) -> Vec3 {
        let th = x[0] / self.rho;
        Vec3::new(th.cos(), th.sin(), 0.0)
    }
    fn normal_jacobian(&self, x: Vec2) -> Mat32 {
        let th = x[0] / self.rho;
        let k = 1.0 / self.rho;
        Mat32::new(-k * th.sin(), 0.0, k * th.cos(), 0.0, 0.0, 0.0)
    }
    fn name(&self) -> String {
        format!("cylinder(rho={})", self.rho)
    }
}

/// Latitude–longitude patch of a sphere of radius `ρ`; not isometric to the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpherePatch {
    pub rho: f64,
}

impl ParametricSurface for SpherePatch {
    fn position(&self, x: Vec2) -> Vec3 {
        let (a, b) = (x[0] / self.rho, x[1] / self.rho);
        self.rho * Vec3::new(a.sin() * b.cos(), b.sin(), a.cos() * b.cos())
    }
    fn name(&self) -> String {
        format!("sphere(rho={})", self.rho)
    }
}

/// Rigid motion `x ↦ R·y(x) + c` of another surface.
#[derive(Clone)]
pub struct Rigid {
    pub inner: Arc<dyn ParametricSurface>,
    pub rotation: Mat3,
    pub shift: Vec3,
}

impl ParametricSurface for Rigid {
    fn position(&self, x: Vec2) -> Vec3 {
        self.rotation * self.inner.position(x) + self.shift
    }
    fn jacobian(&self, x: Vec2) -> Mat32 {
        self.rotation * self.inner.jacobian(x)
    }
    fn second_derivatives(&self, x: Vec2) -> [Mat32; 2] {
        self.inner.second_derivatives(x).map(|m| self.rotation * m)
    }
    fn normal(&self, x: Vec2) -> Vec3 {
        self.rotation.determinant().signum() * (self.rotation * self.inner.normal(x))
    }
    fn normal_jacobian(&self, x: Vec2) -> Mat32 {
        self.rotation.determinant().signum() * (self.rotation * self.inner.normal_jacobian(x))
    }
    fn name(&self) -> String {
        format!("rigid({})", self.inner.name())
    }
}

/// Serializable surface choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceSpec {
    Plane,
    StretchedPlane { a: f64, b: f64 },
    Cylinder { rho: f64 },
    Sphere { rho: f64 },
}

impl SurfaceSpec {
    pub fn build(&self) -> Arc<dyn ParametricSurface> {
        match self {
            SurfaceSpec::Plane => Arc::new(Plane::default()),
            SurfaceSpec::StretchedPlane { a, b } => Arc::new(Plane { stretch: [*a, *b] }),
            SurfaceSpec::Cylinder { rho } => Arc::new(Cylinder { rho: *rho }),
            SurfaceSpec::Sphere { rho } => Arc::new(SpherePatch { rho: *rho }),
        }
    }

    /// Whether the surface has constant second fundamental form.
    pub fn has_constant_curvature_form(&self) -> bool {
        matches!(
            self,
            SurfaceSpec::Plane | SurfaceSpec::StretchedPlane { .. } | SurfaceSpec::Cylinder { .. }
        )
    }
}

/// Sampled surface with derived geometry.
#[derive(Clone, Debug)]
pub struct Midsurface {
    pub grid: Grid,
    pub y: Vec<Vec3>,
    pub grad_y: Vec<Mat32>,
    pub nu: Vec<Vec3>,
    pub grad_nu: Vec<Mat32>,
    /// Cosserat director; equals `nu` for the flat reference metric.
    pub b: Vec<Vec3>,
    pub grad_b: Vec<Mat32>,
    /// `sym(∇yᵀ∇ν)`.
    pub second_form: Vec<SymMat2>,
    /// `sym(∇yᵀ∇b)`; equals `second_form` when `b = ν`.
    pub curvature: Vec<SymMat2>,
}

fn grid_derivative(grid: &Grid, f: &[Vec3]) -> Vec<Mat32> {
    let (d1, d2) = grid.spacing();
    let (n1, n2) = (grid.n1, grid.n2);
    let diff = |get: &dyn Fn(usize) -> Vec3, k: usize, n: usize, h: f64| -> Vec3 {
        if k == 0 {
            (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h)
        } else if k + 1 == n {
            (3.0 * get(n - 1) - 4.0 * get(n - 2) + get(n - 3)) / (2.0 * h)
        } else {
            (get(k + 1) - get(k - 1)) / (2.0 * h)
        }
    };
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..n1 {
        for j in 0..n2 {
            let c1 = diff(&|k| f[grid.index(k, j)], i, n1, d1);
            let c2 = diff(&|k| f[grid.index(i, k)], j, n2, d2);
            out.push(Mat32::from_columns(&[c1, c2]));
        }
    }
    out
}

fn sym_product(a: &Mat32, b: &Mat32) -> SymMat2 {
    SymMat2::sym_of(&(a.transpose() * b))
}

pub fn build_surface(surface: &dyn ParametricSurface, grid: Grid) -> Result<Midsurface, MidsurfaceError> {
    grid.check()?;
    let y: Vec<Vec3> = grid.points().iter().map(|x| surface.position(*x)).collect();
    let grad_y = grid_derivative(&grid, &y);
    let mut nu = Vec::with_capacity(grid.len());
    for (node, g) in grad_y.iter().enumerate() {
        let c = g.column(0).cross(&g.column(1));
        let area = c.norm();
        if !(area >= DEGENERATE_TOL) {
            return Err(MidsurfaceError::DegenerateSurface { node, area });
        }
        nu.push(c / area);
    }
    let grad_nu = grid_derivative(&grid, &nu);
    let second_form: Vec<SymMat2> = grad_y.iter().zip(&grad_nu).map(|(a, b)| sym_product(a, b)).collect();
    Ok(Midsurface {
        grid,
        y,
        grad_y,
        b: nu.clone(),
        grad_b: grad_nu.clone(),
        curvature: second_form.clone(),
        nu,
        grad_nu,
        second_form,
    })
}

/// `b = ∇y(G₂ₓ₂)⁻¹(G₁₃, G₂₃) + √(det G / det G₂ₓ₂)·ν`, without checks.
fn cosserat_raw(grad_y: &Mat32, nu: &Vec3, g: &SymMat3) -> Vec3 {
    let g2 = g.block2().to_matrix();
    let det2 = g2.determinant();
    let v = nalgebra::Vector2::new(g.xz, g.yz);
    let a = g2.try_inverse().unwrap_or_else(nalgebra::Matrix2::zeros) * v;
    let det = g.to_matrix().determinant();
    grad_y * a + (det / det2).max(0.0).sqrt() * nu
}

/// Cosserat director for metric `G`, checked against `(∇y|b)ᵀ(∇y|b) = G`.
pub fn cosserat(grad_y: &Mat32, g: &SymMat3, tol: f64) -> Result<Vec3, MidsurfaceError> {
    let first = SymMat2::sym_of(&(grad_y.transpose() * grad_y));
    let pre = (first - g.block2()).norm();
    if !(pre <= tol) {
        return Err(MidsurfaceError::MetricMismatch {
            deviation: pre,
            tolerance: tol,
        });
    }
    let cross = grad_y.column(0).cross(&grad_y.column(1));
    let nu = cross / cross.norm();
    let b = cosserat_raw(grad_y, &nu, g);
    let frame = Mat3::from_columns(&[grad_y.column(0).into_owned(), grad_y.column(1).into_owned(), b]);
    let post = (frame.transpose() * frame - g.to_matrix()).norm();
    if !(post <= tol) {
        return Err(MidsurfaceError::MetricMismatch {
            deviation: post,
            tolerance: tol,
        });
    }
    Ok(b)
}

impl Midsurface {
    /// Replace the director by the Cosserat vector of `Ā(x′)²` per node.
    pub fn with_metric(mut self, abar: &[SymMat3]) -> Result<Self, MidsurfaceError> {
        if abar.len() != self.grid.len() {
            return Err(MidsurfaceError::SizeMismatch {
                expected: self.grid.len(),
                got: abar.len(),
            });
        }
        self.b = (0..self.grid.len())
            .map(|p| {
                let a = abar[p].to_matrix();
                cosserat_raw(&self.grad_y[p], &self.nu[p], &SymMat3::sym_of(&(a * a)))
            })
            .collect();
        self.grad_b = grid_derivative(&self.grid, &self.b);
        self.curvature = self
            .grad_y
            .iter()
            .zip(&self.grad_b)
            .map(|(a, b)| sym_product(a, b))
            .collect();
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Per-node `‖∇yᵀ∇y − G₂ₓ₂‖_F` and its maximum.
pub fn isometry_residual(surface: &Midsurface, g2: &[SymMat2]) -> (Vec<f64>, f64) {
    let r: Vec<f64> = surface
        .grad_y
        .iter()
        .zip(g2)
        .map(|(g, target)| (SymMat2::sym_of(&(g.transpose() * g)) - *target).norm())
        .collect();
    let max = r.iter().copied().fold(0.0, f64::max);
    (r, max)
}

fn metric_targets(abar: impl Iterator<Item = SymMat3>) -> Vec<SymMat2> {
    abar.map(|a| {
        let m = a.to_matrix();
        SymMat3::sym_of(&(m * m)).block2()
    })
    .collect()
}

fn gate(surface: &Midsurface, g2: &[SymMat2], tol: f64) -> Result<(), MidsurfaceError> {
    let (_, max) = isometry_residual(surface, g2);
    if !(max <= tol) {
        return Err(MidsurfaceError::InfiniteEnergy {
            residual: max,
            tolerance: tol,
        });
    }
    Ok(())
}

/// Total energy with its per-node density.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub total: f64,
    pub density: Vec<f64>,
}

fn integrate(grid: &Grid, density: Vec<f64>) -> EnergyReport {
    let w = grid.trapezoid_weights();
    let terms: Vec<f64> = w.iter().zip(&density).map(|(a, b)| a * b).collect();
    EnergyReport {
        total: crate::par::pairwise_sum(&terms),
        density,
    }
}

/// `∫ ½⟨T₂*(H − n*), H − n*⟩ + ½R` by trapezoid quadrature.
pub fn gamma_energy(surface: &Midsurface, model: &PlateModel, tol: f64) -> Result<EnergyReport, MidsurfaceError> {
    if model.len() != surface.len() {
        return Err(MidsurfaceError::SizeMismatch {
            expected: surface.len(),
            got: model.len(),
        });
    }
    gate(surface, &metric_targets(model.points.iter().map(|p| p.abar)), tol)?;
    let density = crate::par::map_range(surface.len(), |p| {
        0.5 * model.points[p].energy_density(&surface.curvature[p])
    });
    Ok(integrate(&surface.grid, density))
}

/// Per-node minimum of `∫Q₃(Ā⁻¹[s + tH − ĀB + sym(d⊗e₃)]Ā⁻¹)` over symmetric
/// `s` and node values of `d`, by dense normal equations.
///
/// Returns `(value, s)`.
pub fn direct_point_minimum(
    abar: &SymMat3,
    h: &SymMat2,
    b_nodes: &[SymMat3],
    q3_nodes: &[crate::symalg::QuadForm3],
    quad: &ThicknessQuadrature,
) -> Result<(f64, SymMat2), MidsurfaceError> {
    let n = quad.len();
    let p = abar.inverse().map_err(|_| RelaxError::SingularAbar {
        min_eigenvalue: abar.min_eigenvalue(),
    })?;
    let dim = 3 + 3 * n;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    let mut forms = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    for k in 0..n {
        let l = *q3_nodes[k].pulled_back(&p).operator();
        let w = quad.weights[k];
        let full_beta = SymMat3::sym_of(&(abar.to_matrix() * b_nodes[k].to_matrix()));
        let r = (h.embed().scale(quad.nodes[k]) - full_beta).coords();
        // variable map: 6-coords = S·s + D·d_k + r with S, D selection matrices
        let mut sel = nalgebra::SMatrix::<f64, 6, 6>::zeros();
        for (c, &row) in IN_PLANE.iter().enumerate() {
            sel[(row, c)] = 1.0;
        }
        let oop = crate::symalg::out_of_plane_map();
        for (rr, &row) in OUT_OF_PLANE.iter().enumerate() {
            for c in 0..3 {
                sel[(row, 3 + c)] = oop[(rr, c)];
            }
        }
        let block = sel.transpose() * l * sel * w;
        let g = sel.transpose() * l * r * w;
        let idx = |a: usize| if a < 3 { a } else { 3 + 3 * k + (a - 3) };
        for a in 0..6 {
            rhs[idx(a)] -= g[a];
            for b in 0..6 {
                m[(idx(a), idx(b))] += block[(a, b)];
            }
        }
        forms.push((l, sel, r, w));
        offsets.push(k);
    }
    let sol = m
        .clone()
        .cholesky()
        .ok_or(MidsurfaceError::SingularDirectSystem { node: 0 })?
        .solve(&rhs);
    let s = SymMat2::from_coords(&nalgebra::Vector3::new(sol[0], sol[1], sol[2]));
    let mut value = 0.0;
    for (k, (l, sel, r, w)) in forms.iter().enumerate() {
        let u = nalgebra::Vector6::new(sol[0], sol[1], sol[2], sol[3 + 3 * k], sol[4 + 3 * k], sol[5 + 3 * k]);
        let v = sel * u + r;
        value += w * v.dot(&(l * v));
    }
    Ok((value, s))
}

/// Limiting energy computed by direct minimization at every node.
pub fn gamma_energy_direct(
    surface: &Midsurface,
    prestrain: &PrestrainField,
    q3: &Q3Field,
    quad: &ThicknessQuadrature,
    tol: f64,
) -> Result<EnergyReport, MidsurfaceError> {
    if prestrain.n_points() != surface.len() {
        return Err(MidsurfaceError::SizeMismatch {
            expected: surface.len(),
            got: prestrain.n_points(),
        });
    }
    gate(
        surface,
        &metric_targets((0..prestrain.n_points()).map(|p| *prestrain.abar(p))),
        tol,
    )?;
    let density = crate::par::try_map_range(surface.len(), |p| {
        direct_point_minimum(
            prestrain.abar(p),
            &surface.curvature[p],
            prestrain.b_at(p),
            q3.point(p),
            quad,
        )
        .map(|(v, _)| 0.5 * v)
        .map_err(|e| match e {
            MidsurfaceError::SingularDirectSystem { .. } => MidsurfaceError::SingularDirectSystem { node: p },
            other => other,
        })
    })?;
    Ok(integrate(&surface.grid, density))
}

/// `sym(ĀB)₂ₓ₂` samples, exposed for diagnostics.
pub fn beta_samples(prestrain: &PrestrainField, point: usize) -> Vec<SymMat2> {
    prestrain
        .b_at(point)
        .iter()
        .map(|b| beta_of(prestrain.abar(point), b))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::effective_model;
    use crate::prestrain::{BSpec, PrestrainSpec};
    use crate::sampling;
    use crate::symalg::QuadForm3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plane_geometry() {
        let s = build_surface(&Plane::default(), Grid::unit(5, 5)).unwrap();
        assert!(s.second_form.iter().all(|h| *h == SymMat2::zero()));
        assert!(s.nu.iter().all(|n| *n == Vec3::z()));
    }

    #[test]
    fn cylinder_curvature() {
        let s = build_surface(&Cylinder { rho: 2.0 }, Grid::unit(64, 64)).unwrap();
        for h in &s.second_form {
            assert!(h.max_abs_diff(&SymMat2::diag(0.5, 0.0)) < 1e-3);
        }
        let (_, max) = isometry_residual(&s, &vec![SymMat2::identity(); s.len()]);
        assert!(max < 1e-3);
    }

    #[test]
    fn stretched_plane_residual() {
        let s = build_surface(&Plane { stretch: [2.0, 1.0] }, Grid::unit(4, 4)).unwrap();
        let (_, max) = isometry_residual(&s, &vec![SymMat2::identity(); s.len()]);
        assert!((max - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_is_not_isometric() {
        let s = build_surface(&SpherePatch { rho: 1.0 }, Grid::unit(8, 8)).unwrap();
        let (_, max) = isometry_residual(&s, &vec![SymMat2::identity(); s.len()]);
        assert!(max > 1e-2);
    }

    #[test]
    fn small_grid_rejected() {
        assert!(matches!(
            build_surface(&Plane::default(), Grid::unit(2, 5)),
            Err(MidsurfaceError::GridTooSmall { .. })
        ));
    }

    #[test]
    fn degenerate_surface_rejected() {
        let flat = Plane { stretch: [1.0, 0.0] };
        assert!(matches!(
            build_surface(&flat, Grid::unit(4, 4)),
            Err(MidsurfaceError::DegenerateSurface { .. })
        ));
    }

    #[test]
    fn cosserat_examples() {
        let g = Mat32::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        let b = cosserat(&g, &SymMat3::identity(), 1e-10).unwrap();
        assert!((b - Vec3::z()).norm() < 1e-15);
        let b = cosserat(&g, &SymMat3::diag(1.0, 1.0, 4.0), 1e-10).unwrap();
        assert!((b - 2.0 * Vec3::z()).norm() < 1e-15);
        let cyl = Cylinder { rho: 2.0 };
        let x = Vec2::new(0.3, 0.1);
        let b = cosserat(&cyl.jacobian(x), &SymMat3::identity(), 1e-8).unwrap();
        assert!((b - cyl.normal(x)).norm() < 1e-12);
        let skewed = Mat32::new(1.0, 0.0, 0.0, 2.0, 0.0, 0.0);
        assert!(matches!(
            cosserat(&skewed, &SymMat3::identity(), 1e-8),
            Err(MidsurfaceError::MetricMismatch { .. })
        ));
    }

    fn linear_setup(grid: Grid, b1: SymMat3) -> (PrestrainField, Q3Field, ThicknessQuadrature) {
        let quad = ThicknessQuadrature::gauss(8);
        let spec = PrestrainSpec::flat(BSpec::Polynomial {
            coefficients: vec![SymMat3::zero(), b1],
        });
        let pts = grid.points();
        let field = PrestrainField::sample(&spec, &pts, &quad);
        let q3 = Q3Field::uniform(QuadForm3::isotropic(1.0, 0.5), pts.len(), quad.len());
        (field, q3, quad)
    }

    #[test]
    fn plane_linear_prestrain_energy() {
        let grid = Grid::unit(5, 5);
        let b1 = SymMat3::new(0.3, -0.2, 0.1, 0.0, 0.05, 0.1);
        let (field, q3, quad) = linear_setup(grid, b1);
        let s = build_surface(&Plane::default(), grid).unwrap();
        let model = effective_model(&field, &q3, &quad).unwrap();
        let e = gamma_energy(&s, &model, DEFAULT_ISOMETRY_TOL).unwrap();
        let l2 = model.points[0].l2[0];
        let want = 0.5 * l2.eval(&b1.block2()) / 12.0;
        assert!((e.total - want).abs() < 1e-12);
        let d = gamma_energy_direct(&s, &field, &q3, &quad, DEFAULT_ISOMETRY_TOL).unwrap();
        assert!((d.total - want).abs() < 1e-10 * want);
    }

    #[test]
    fn matched_cylinder_has_zero_energy() {
        let grid = Grid::unit(33, 9);
        let rho = 2.0;
        let b1 = SymMat3::diag(1.0 / rho, 0.0, 0.0);
        let (field, q3, quad) = linear_setup(grid, b1);
        let s = build_surface(&Cylinder { rho }, grid).unwrap();
        let model = effective_model(&field, &q3, &quad).unwrap();
        let e = gamma_energy(&s, &model, DEFAULT_ISOMETRY_TOL).unwrap();
        assert!(e.total < 1e-6);
    }

    #[test]
    fn non_isometric_surface_is_gated() {
        let grid = Grid::unit(5, 5);
        let (field, q3, quad) = linear_setup(grid, SymMat3::zero());
        let s = build_surface(&Plane { stretch: [2.0, 1.0] }, grid).unwrap();
        let model = effective_model(&field, &q3, &quad).unwrap();
        assert!(matches!(
            gamma_energy(&s, &model, DEFAULT_ISOMETRY_TOL),
            Err(MidsurfaceError::InfiniteEnergy { .. })
        ));
    }

    #[test]
    fn rigid_motion_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = Grid::unit(33, 9);
        let b1 = SymMat3::new(0.3, -0.2, 0.1, 0.0, 0.05, 0.1);
        let (field, q3, quad) = linear_setup(grid, b1);
        let model = effective_model(&field, &q3, &quad).unwrap();
        let base: Arc<dyn ParametricSurface> = Arc::new(Cylinder { rho: 1.5 });
        let moved = Rigid {
            inner: base.clone(),
            rotation: sampling::random_rotation(&mut rng),
            shift: Vec3::new(1.0, -2.0, 0.5),
        };
        let e0 = gamma_energy(
            &build_surface(base.as_ref(), grid).unwrap(),
            &model,
            DEFAULT_ISOMETRY_TOL,
        )
        .unwrap();
        let e1 = gamma_energy(&build_surface(&moved, grid).unwrap(), &model, DEFAULT_ISOMETRY_TOL).unwrap();
        assert!((e0.total - e1.total).abs() < 1e-10);
    }

    #[test]
    fn cosserat_metric_on_grid() {
        let grid = Grid::unit(33, 5);
        let g = SymMat3::new(1.0, 1.0, 1.5, 0.2, -0.1, 0.0);
        let abar = g.sqrt();
        let s = build_surface(&Cylinder { rho: 2.0 }, grid)
            .unwrap()
            .with_metric(&vec![abar; grid.len()])
            .unwrap();
        for p in 0..s.len() {
            let gy = s.grad_y[p];
            let f = Mat3::from_columns(&[gy.column(0).into_owned(), gy.column(1).into_owned(), s.b[p]]);
            assert!((f.transpose() * f - g.to_matrix()).norm() < 1e-3);
        }
    }
}
