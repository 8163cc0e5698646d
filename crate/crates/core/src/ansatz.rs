//! Recovery sequences and direct 3D energy quadrature.
//!
//! Two families are built: a curved Kirchhoff-type ansatz on a surface with
//! constant second fundamental form, and a flat wrinkled ansatz driven by a
//! single-mode corrugation. Both carry analytic rescaled gradients
//! `∇ʰyʰ = (∇′yʰ, h⁻¹∂₃yʰ)`.

use std::sync::Arc;

use nalgebra::{Matrix2, Matrix3x2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elastic::{q3_at, ElasticError, ElasticLaw};
use crate::midsurface::{Grid, ParametricSurface};
use crate::prestrain::Prestrain;
use crate::quadrature::ThicknessQuadrature;
use crate::relax::{completion_vector, relax, RelaxError, RelaxedForm};
use crate::symalg::{Mat3, Mat32, SymMat2, SymMat3, Vec2, Vec3};

const PROBE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnsatzError {
    #[error("corrugation target needs a positive (1,1) entry, got {a11}")]
    BadTarget { a11: f64 },
    #[error("wrinkled ansatz needs a flat base surface, |∇ν| reaches {curvature:.3e}")]
    PreconditionII { curvature: f64 },
    #[error("base surface is not isometric: residual {residual:.3e}")]
    NotIsometric { residual: f64 },
    #[error("curved ansatz needs a constant second fundamental form, variation {variation:.3e}")]
    VaryingCurvature { variation: f64 },
    #[error("prestrain Ā + hB is singular at x′ = ({x1}, {x2}), t = {t}")]
    SingularPrestrain { x1: f64, x2: f64, t: f64 },
    #[error("thickness must be positive, got {h}")]
    BadThickness { h: f64 },
    #[error("energy is not finite at x′ = ({x1}, {x2}), t = {t}")]
    NonFiniteEnergy { x1: f64, x2: f64, t: f64 },
    #[error(transparent)]
    Elastic(#[from] ElasticError),
    #[error(transparent)]
    Relax(#[from] RelaxError),
}

/// A deformation of the rescaled slab `Ω × (−½, ½)` at thickness `h`.
pub trait Deformation3D: Send + Sync {
    fn h(&self) -> f64;
    fn eval(&self, x: Vec2, x3: f64) -> Vec3;
    /// `(∂₁y, ∂₂y, h⁻¹∂₃y)`.
    fn grad(&self, x: Vec2, x3: f64) -> Mat3;
    fn descriptor(&self) -> String;
}

/// Single-mode realization of `½∇v⊗∇v + ∇_sym w = A` for constant `A`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrugationFields {
    pub target: SymMat2,
    pub lambda: f64,
}

pub fn corrugation_fields(target: SymMat2, lambda: f64) -> Result<CorrugationFields, AnsatzError> {
    if !(target.a11 > 0.0) && target != SymMat2::zero() {
        return Err(AnsatzError::BadTarget { a11: target.a11 });
    }
    Ok(CorrugationFields { target, lambda })
}

impl CorrugationFields {
    fn amp(&self) -> f64 {
        (2.0 * self.target.a11).sqrt()
    }

    pub fn v(&self, x: Vec2) -> f64 {
        self.amp() / self.lambda * (self.lambda * x[0]).sin()
    }

    pub fn grad_v(&self, x: Vec2) -> Vec2 {
        Vec2::new(self.amp() * (self.lambda * x[0]).cos(), 0.0)
    }

    pub fn hess_v(&self, x: Vec2) -> Matrix2<f64> {
        Matrix2::new(-self.amp() * self.lambda * (self.lambda * x[0]).sin(), 0.0, 0.0, 0.0)
    }

    pub fn w(&self, x: Vec2) -> Vec2 {
        let a = &self.target;
        let l = self.lambda;
        Vec2::new(
            a.a11 * (0.5 * x[0] - (2.0 * l * x[0]).sin() / (4.0 * l)),
            2.0 * a.a12 * x[0] + a.a22 * x[1],
        )
    }

    /// `∇w`, rows are components.
    pub fn grad_w(&self, x: Vec2) -> Matrix2<f64> {
        let a = &self.target;
        let s = (self.lambda * x[0]).sin();
        Matrix2::new(a.a11 * s * s, 0.0, 2.0 * a.a12, a.a22)
    }

    /// `|½∇v⊗∇v + ∇_sym w − A|`.
    pub fn residual(&self, x: Vec2) -> f64 {
        let g = self.grad_v(x);
        let realized = SymMat2::sym_of(&(0.5 * g * g.transpose() + self.grad_w(x)));
        (realized - self.target).norm()
    }
}

/// Out-of-plane correction `d(t)` and its primitive `D(t) = ∫₀ᵗ d`,
/// tabulated at chosen thickness nodes with on-demand fallback.
#[derive(Clone)]
struct ThicknessLift {
    d_of: Arc<dyn Fn(f64) -> Vec3 + Send + Sync>,
    table: Vec<(u64, Vec3, Vec3)>,
}

impl ThicknessLift {
    fn new(d_of: Arc<dyn Fn(f64) -> Vec3 + Send + Sync>, nodes: &[f64]) -> Self {
        let mut lift = Self {
            d_of,
            table: Vec::new(),
        };
        let table = nodes
            .iter()
            .map(|&t| (t.to_bits(), (lift.d_of)(t), lift.primitive_raw(t)))
            .collect();
        lift.table = table;
        lift
    }

    fn primitive_raw(&self, t: f64) -> Vec3 {
        if t == 0.0 {
            return Vec3::zeros();
        }
        let q = ThicknessQuadrature::gauss_on(12, 0.0, t);
        q.nodes
            .iter()
            .zip(&q.weights)
            .fold(Vec3::zeros(), |acc, (s, w)| acc + *w * (self.d_of)(*s))
    }

    fn lookup(&self, t: f64) -> Option<&(u64, Vec3, Vec3)> {
        let key = t.to_bits();
        self.table.iter().find(|e| e.0 == key)
    }

    fn d(&self, t: f64) -> Vec3 {
        self.lookup(t).map(|e| e.1).unwrap_or_else(|| (self.d_of)(t))
    }

    fn primitive(&self, t: f64) -> Vec3 {
        self.lookup(t).map(|e| e.2).unwrap_or_else(|| self.primitive_raw(t))
    }
}

/// Relaxed forms of the law at a fixed midplane point as a function of `t`.
fn relaxed_profile(law: Arc<dyn ElasticLaw>, x: Vec2) -> impl Fn(f64) -> Result<RelaxedForm, AnsatzError> {
    move |t| {
        let q = q3_at(law.as_ref(), x, t)?;
        Ok(relax(&q, &SymMat3::identity())?)
    }
}

/// Check every thickness needed by a lift up front so later lookups cannot fail.
fn prevalidate(profile: &dyn Fn(f64) -> Result<RelaxedForm, AnsatzError>, nodes: &[f64]) -> Result<(), AnsatzError> {
    for &t in nodes.iter().chain([-0.5, 0.0, 0.5].iter()) {
        profile(t)?;
    }
    Ok(())
}

fn frame(grad_y: &Mat32, nu: &Vec3) -> Mat3 {
    Mat3::from_columns(&[grad_y.column(0).into_owned(), grad_y.column(1).into_owned(), *nu])
}

fn probe_points() -> [Vec2; 5] {
    [
        Vec2::new(0.1, 0.2),
        Vec2::new(0.9, 0.1),
        Vec2::new(0.5, 0.5),
        Vec2::new(0.2, 0.8),
        Vec2::new(0.7, 0.9),
    ]
}

fn isometry_probe(surface: &dyn ParametricSurface) -> f64 {
    probe_points()
        .iter()
        .map(|x| {
            let g = surface.jacobian(*x);
            (g.transpose() * g - Matrix2::identity()).norm()
        })
        .fold(0.0, f64::max)
}

fn second_form_at(surface: &dyn ParametricSurface, x: Vec2) -> SymMat2 {
    SymMat2::sym_of(&(surface.jacobian(x).transpose() * surface.normal_jacobian(x)))
}

/// Inputs of the curved ansatz beyond the surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvedData {
    /// In-plane part of `g` is `g′(x′) = G x′`.
    pub g_lin: Matrix2<f64>,
    /// Constant normal part `g₃`.
    pub g3: f64,
}

impl CurvedData {
    /// `g′ = s·x′`, `g₃ = 0`, realizing membrane strain `s`.
    pub fn from_membrane(s: &SymMat2) -> Self {
        Self {
            g_lin: s.to_matrix(),
            g3: 0.0,
        }
    }

    /// `s = ∇_sym g′ + g₃ II`.
    pub fn membrane(&self, ii: &SymMat2) -> SymMat2 {
        SymMat2::sym_of(&self.g_lin) + ii.scale(self.g3)
    }
}

/// `y + h[x₃ν + Qg] + h²QD` on a surface with constant `II`.
#[derive(Clone)]
pub struct CurvedAnsatz {
    surface: Arc<dyn ParametricSurface>,
    data: CurvedData,
    ii: SymMat2,
    h: f64,
    lift: ThicknessLift,
}

/// Build the curved ansatz. `B` and the law must not depend on `x′`; they are
/// read at `x_ref`. `nodes` are thickness nodes to tabulate.
pub fn kirchhoff_curved_ansatz(
    surface: Arc<dyn ParametricSurface>,
    data: CurvedData,
    prestrain: Arc<dyn Prestrain>,
    law: Arc<dyn ElasticLaw>,
    h: f64,
    nodes: &[f64],
) -> Result<CurvedAnsatz, AnsatzError> {
    if !(h > 0.0) {
        return Err(AnsatzError::BadThickness { h });
    }
    let residual = isometry_probe(surface.as_ref());
    if residual > PROBE_TOL {
        return Err(AnsatzError::NotIsometric { residual });
    }
    let probes = probe_points();
    let ii = second_form_at(surface.as_ref(), probes[0]);
    let variation = probes
        .iter()
        .map(|x| (second_form_at(surface.as_ref(), *x) - ii).norm())
        .fold(0.0, f64::max);
    if variation > PROBE_TOL {
        return Err(AnsatzError::VaryingCurvature { variation });
    }
    let x_ref = probes[2];
    let profile = relaxed_profile(law, x_ref);
    prevalidate(&profile, nodes)?;
    let s = data.membrane(&ii);
    let d_of = Arc::new(move |t: f64| {
        let rf = profile(t).expect("validated thickness profile");
        let y = (s + ii.scale(t)).embed() - prestrain.b(x_ref, t);
        completion_vector(&rf, &y)
    });
    Ok(CurvedAnsatz {
        surface,
        data,
        ii,
        h,
        lift: ThicknessLift::new(d_of, nodes),
    })
}

impl CurvedAnsatz {
    fn g(&self, x: Vec2) -> Vec3 {
        let gp = self.data.g_lin * x;
        Vec3::new(gp[0], gp[1], self.data.g3)
    }

    /// `(II·g′(x′), 0)`: the `x′`-dependent part of `d`.
    fn d_shift(&self, x: Vec2) -> Vec3 {
        let v = self.ii.to_matrix() * (self.data.g_lin * x);
        Vec3::new(v[0], v[1], 0.0)
    }

    pub fn d(&self, x: Vec2, x3: f64) -> Vec3 {
        self.lift.d(x3) + self.d_shift(x)
    }

    fn big_d(&self, x: Vec2, x3: f64) -> Vec3 {
        self.lift.primitive(x3) + x3 * self.d_shift(x)
    }

    pub fn second_form(&self) -> SymMat2 {
        self.ii
    }
}

impl Deformation3D for CurvedAnsatz {
    fn h(&self) -> f64 {
        self.h
    }

    fn eval(&self, x: Vec2, x3: f64) -> Vec3 {
        let s = self.surface.as_ref();
        let q = frame(&s.jacobian(x), &s.normal(x));
        let h = self.h;
        s.position(x) + h * (x3 * s.normal(x) + q * self.g(x)) + h * h * q * self.big_d(x, x3)
    }

    fn grad(&self, x: Vec2, x3: f64) -> Mat3 {
        let s = self.surface.as_ref();
        let h = self.h;
        let gy = s.jacobian(x);
        let nu = s.normal(x);
        let gnu = s.normal_jacobian(x);
        let second = s.second_derivatives(x);
        let q = frame(&gy, &nu);
        let g = self.g(x);
        let big_d = self.big_d(x, x3);
        let dshift_grad = {
            let m = self.ii.to_matrix() * self.data.g_lin;
            Matrix3x2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)], 0.0, 0.0)
        };
        let mut out = Mat3::zeros();
        for (j, sj) in second.iter().enumerate() {
            // ∂ⱼQ = [∂ⱼ∂₁y, ∂ⱼ∂₂y, ∂ⱼν]
            let dq = Mat3::from_columns(&[
                sj.column(0).into_owned(),
                sj.column(1).into_owned(),
                gnu.column(j).into_owned(),
            ]);
            let dg = Vec3::new(self.data.g_lin[(0, j)], self.data.g_lin[(1, j)], 0.0);
            let dd = x3 * dshift_grad.column(j).into_owned();
            let col = gy.column(j).into_owned()
                + h * (x3 * gnu.column(j).into_owned() + dq * g + q * dg)
                + h * h * (dq * big_d + q * dd);
            out.set_column(j, &col);
        }
        out.set_column(2, &(nu + h * q * self.d(x, x3)));
        out
    }

    fn descriptor(&self) -> String {
        format!(
            "curved(surface={}, h={}, g3={}, g_lin={:?})",
            self.surface.name(),
            self.h,
            self.data.g3,
            self.data.g_lin.as_slice()
        )
    }
}

/// Wrinkled ansatz on a flat isometric base surface.
#[derive(Clone)]
pub struct WrinkledAnsatz {
    surface: Arc<dyn ParametricSurface>,
    frame: Mat3,
    k: f64,
    h: f64,
    corrugation: CorrugationFields,
    lift: ThicknessLift,
}

/// Parameters of the wrinkled ansatz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WrinkleParams {
    pub s: SymMat2,
    pub k: f64,
    pub gamma: f64,
}

pub fn wrinkled_flat_ansatz(
    surface: Arc<dyn ParametricSurface>,
    params: WrinkleParams,
    prestrain: Arc<dyn Prestrain>,
    law: Arc<dyn ElasticLaw>,
    h: f64,
    nodes: &[f64],
) -> Result<WrinkledAnsatz, AnsatzError> {
    if !(h > 0.0) {
        return Err(AnsatzError::BadThickness { h });
    }
    let probes = probe_points();
    let curvature = probes
        .iter()
        .map(|x| surface.normal_jacobian(*x).norm())
        .fold(0.0, f64::max);
    if curvature > PROBE_TOL {
        return Err(AnsatzError::PreconditionII { curvature });
    }
    let residual = isometry_probe(surface.as_ref());
    if residual > PROBE_TOL {
        return Err(AnsatzError::NotIsometric { residual });
    }
    let target = params.s + SymMat2::identity().scale(params.k);
    let corrugation = corrugation_fields(target, h.powf(-params.gamma))?;
    let x_ref = probes[2];
    let frame = self::frame(&surface.jacobian(x_ref), &surface.normal(x_ref));
    let profile = relaxed_profile(law, x_ref);
    prevalidate(&profile, nodes)?;
    let (s, k) = (params.s, params.k);
    let d_of = Arc::new(move |t: f64| {
        let rf = profile(t).expect("validated thickness profile");
        let y = s.embed() - SymMat3::diag(0.0, 0.0, k) - prestrain.b(x_ref, t);
        completion_vector(&rf, &y)
    });
    Ok(WrinkledAnsatz {
        surface,
        frame,
        k,
        h,
        corrugation,
        lift: ThicknessLift::new(d_of, nodes),
    })
}

impl WrinkledAnsatz {
    pub fn corrugation(&self) -> &CorrugationFields {
        &self.corrugation
    }
}

impl Deformation3D for WrinkledAnsatz {
    fn h(&self) -> f64 {
        self.h
    }

    fn eval(&self, x: Vec2, x3: f64) -> Vec3 {
        let (h, k) = (self.h, self.k);
        let c = &self.corrugation;
        let w = c.w(x);
        let gv = c.grad_v(x);
        let local = Vec3::new(h * w[0], h * w[1], 0.0)
            + h * h * self.lift.primitive(x3)
            + Vec3::new(0.0, 0.0, h.sqrt() * c.v(x))
            - h.powf(1.5) * x3 * Vec3::new(gv[0], gv[1], 0.0)
            - Vec3::new(0.0, 0.0, 0.5 * h * h * x3 * gv.norm_squared());
        (1.0 - h * k) * self.surface.position(x) + h * x3 * (1.0 - k * h) * self.frame.column(2) + self.frame * local
    }

    fn grad(&self, x: Vec2, x3: f64) -> Mat3 {
        let (h, k) = (self.h, self.k);
        let c = &self.corrugation;
        let gw = c.grad_w(x);
        let gv = c.grad_v(x);
        let hv = c.hess_v(x);
        // ∂ⱼ|∇v|² = 2 (∇²v ∇v)ⱼ
        let d_sq = 2.0 * hv * gv;
        let mut local = Mat3::zeros();
        for j in 0..2 {
            let col = Vec3::new(
                (1.0 - h * k) * if j == 0 { 1.0 } else { 0.0 } + h * gw[(0, j)] - h.powf(1.5) * x3 * hv[(0, j)],
                (1.0 - h * k) * if j == 1 { 1.0 } else { 0.0 } + h * gw[(1, j)] - h.powf(1.5) * x3 * hv[(1, j)],
                h.sqrt() * gv[j] - 0.5 * h * h * x3 * d_sq[j],
            );
            local.set_column(j, &col);
        }
        let third = Vec3::new(0.0, 0.0, 1.0 - k * h) + h * self.lift.d(x3)
            - h.sqrt() * Vec3::new(gv[0], gv[1], 0.0)
            - Vec3::new(0.0, 0.0, 0.5 * h * gv.norm_squared());
        local.set_column(2, &third);
        self.frame * local
    }

    fn descriptor(&self) -> String {
        format!(
            "wrinkled(surface={}, h={}, K={}, lambda={})",
            self.surface.name(),
            self.h,
            self.k,
            self.corrugation.lambda
        )
    }
}

/// Any deformation given by closures, with an analytic gradient.
#[derive(Clone)]
pub struct FnDeformation {
    pub h: f64,
    pub name: String,
    #[allow(clippy::type_complexity)]
    pub eval: Arc<dyn Fn(Vec2, f64) -> Vec3 + Send + Sync>,
    #[allow(clippy::type_complexity)]
    pub grad: Arc<dyn Fn(Vec2, f64) -> Mat3 + Send + Sync>,
}

impl Deformation3D for FnDeformation {
    fn h(&self) -> f64 {
        self.h
    }
    fn eval(&self, x: Vec2, x3: f64) -> Vec3 {
        (self.eval)(x, x3)
    }
    fn grad(&self, x: Vec2, x3: f64) -> Mat3 {
        (self.grad)(x, x3)
    }
    fn descriptor(&self) -> String {
        self.name.clone()
    }
}

/// Largest relative deviation between the analytic gradient and central
/// differences of `eval` at the given probes.
pub fn gradient_check(def: &dyn Deformation3D, probes: &[(Vec2, f64)], step: f64) -> f64 {
    probes
        .iter()
        .map(|&(x, x3)| {
            let e1 = Vec2::new(step, 0.0);
            let e2 = Vec2::new(0.0, step);
            let c1 = (def.eval(x + e1, x3) - def.eval(x - e1, x3)) / (2.0 * step);
            let c2 = (def.eval(x + e2, x3) - def.eval(x - e2, x3)) / (2.0 * step);
            let c3 = (def.eval(x, x3 + step) - def.eval(x, x3 - step)) / (2.0 * step * def.h());
            let fd = Mat3::from_columns(&[c1, c2, c3]);
            let an = def.grad(x, x3);
            (an - fd).norm() / an.norm().max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Scaled energy together with the largest integrand value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energy3D {
    /// `E/h²`.
    pub value: f64,
    /// `max W` over quadrature points.
    pub max_integrand: f64,
}

/// `E/h²` with the full 3D integrand: `h⁻²∫∫ W(x′, t, ∇ʰy (A(x′,t))⁻¹)`.
///
/// `metric` gives the prestrain at each point; the slab is rescaled to
/// unit thickness.
pub fn energy3d_with(
    def: &dyn Deformation3D,
    metric: &(dyn Fn(Vec2, f64) -> Mat3 + Sync),
    law: &dyn ElasticLaw,
    grid: &Grid,
    quad: &ThicknessQuadrature,
) -> Result<Energy3D, AnsatzError> {
    let h = def.h();
    if !(h > 0.0) {
        return Err(AnsatzError::BadThickness { h });
    }
    let points = grid.points();
    let weights = grid.trapezoid_weights();
    let per_point = crate::par::try_map_range(points.len(), |p| {
        let x = points[p];
        let mut acc = 0.0;
        let mut peak = 0.0f64;
        for (t, w) in quad.nodes.iter().zip(&quad.weights) {
            let a = metric(x, *t);
            let lu = a.transpose().lu();
            // F A⁻¹ = (A⁻ᵀ Fᵀ)ᵀ
            let f = def.grad(x, *t);
            let sol = lu
                .solve(&f.transpose())
                .filter(|_| a.determinant().abs() > 1e-300)
                .ok_or(AnsatzError::SingularPrestrain {
                    x1: x[0],
                    x2: x[1],
                    t: *t,
                })?;
            let e = law.energy(x, *t, &sol.transpose());
            if !e.is_finite() {
                return Err(AnsatzError::NonFiniteEnergy {
                    x1: x[0],
                    x2: x[1],
                    t: *t,
                });
            }
            acc += w * e;
            peak = peak.max(e);
        }
        Ok((weights[p] * acc, peak))
    })?;
    let terms: Vec<f64> = per_point.iter().map(|v| v.0).collect();
    Ok(Energy3D {
        value: crate::par::pairwise_sum(&terms) / (h * h),
        max_integrand: per_point.iter().map(|v| v.1).fold(0.0, f64::max),
    })
}

/// [`energy3d_with`] for a prestrain `Ā + hB`.
pub fn energy3d(
    def: &dyn Deformation3D,
    prestrain: &dyn Prestrain,
    law: &dyn ElasticLaw,
    grid: &Grid,
    quad: &ThicknessQuadrature,
) -> Result<f64, AnsatzError> {
    let h = def.h();
    let metric = |x: Vec2, t: f64| (prestrain.abar(x) + prestrain.b(x, t).scale(h)).to_matrix();
    energy3d_with(def, &metric, law, grid, quad).map(|e| e.value)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub h: f64,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RateFit {
    /// `error ≈ C·h^rate`.
    Fitted {
        rate: f64,
        log_constant: f64,
    },
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub target: f64,
    pub rows: Vec<SweepRow>,
    pub rate: RateFit,
    /// Errors over the last three rows are non-increasing.
    pub monotone_tail: bool,
}

impl SweepTable {
    pub fn final_relative_error(&self) -> f64 {
        let last = self.rows.last().map(|r| r.error).unwrap_or(f64::NAN);
        last / self.target.abs().max(f64::MIN_POSITIVE)
    }
}

/// Least-squares slope of `log error` against `log h`, ignoring errors at
/// round-off level.
pub fn fit_rate(rows: &[SweepRow], scale: f64) -> RateFit {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.error > 1e-13 * scale.max(1.0))
        .map(|r| (r.h.ln(), r.error.ln()))
        .collect();
    if pts.len() < 2 {
        return RateFit::NotApplicable;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return RateFit::NotApplicable;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let rate = sxy / sxx;
    RateFit::Fitted {
        rate,
        log_constant: my - rate * mx,
    }
}

/// Evaluate `value(h)` along `h_list` and compare with `target`.
pub fn h_sweep<E>(h_list: &[f64], target: f64, mut value: impl FnMut(f64) -> Result<f64, E>) -> Result<SweepTable, E> {
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let v = value(h)?;
        rows.push(SweepRow {
            h,
            value: v,
            error: (v - target).abs(),
        });
    }
    let tail = &rows[rows.len().saturating_sub(3)..];
    let floor = 1e-13 * target.abs().max(1.0);
    let monotone_tail = tail.windows(2).all(|w| w[1].error <= w[0].error || w[1].error <= floor);
    Ok(SweepTable {
        target,
        rate: fit_rate(&rows, target.abs()),
        monotone_tail,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::effective_model;
    use crate::elastic::{builtin_dist_law, IsotropicLaw, Q3Field};
    use crate::midsurface::{build_surface, gamma_energy, Cylinder, Plane, SpherePatch, DEFAULT_ISOMETRY_TOL};
    use crate::prestrain::{BSpec, PrestrainField, PrestrainSpec};

    fn probes() -> Vec<(Vec2, f64)> {
        (0..20)
            .map(|i| {
                let a = i as f64;
                (Vec2::new(0.1 + 0.037 * a, 0.9 - 0.041 * a), -0.45 + 0.047 * a)
            })
            .collect()
    }

    #[test]
    fn corrugation_identity() {
        let c = corrugation_fields(SymMat2::new(1.0, 0.5, 0.3), 10.0).unwrap();
        for (x, _) in probes() {
            assert!(c.residual(x) < 1e-12);
            assert!(c.grad_v(x).norm() <= 2f64.sqrt() + 1e-15);
        }
        let z = corrugation_fields(SymMat2::zero(), 10.0).unwrap();
        assert_eq!(z.v(Vec2::new(0.3, 0.2)), 0.0);
        assert_eq!(z.w(Vec2::new(0.3, 0.2)), Vec2::zeros());
        assert!(matches!(
            corrugation_fields(SymMat2::diag(-1.0, 1.0), 3.0),
            Err(AnsatzError::BadTarget { .. })
        ));
    }

    fn constant_b() -> Arc<dyn Prestrain> {
        Arc::new(PrestrainSpec::flat(BSpec::Constant {
            value: SymMat3::new(0.2, -0.1, 0.05, 0.1, 0.03, 0.07),
        }))
    }

    #[test]
    fn curved_gradient_matches_fd() {
        let law: Arc<dyn ElasticLaw> = Arc::new(builtin_dist_law());
        let a = kirchhoff_curved_ansatz(
            Arc::new(Cylinder { rho: 2.0 }),
            CurvedData {
                g_lin: Matrix2::new(0.2, 0.1, -0.3, 0.4),
                g3: 0.3,
            },
            constant_b(),
            law,
            0.05,
            &ThicknessQuadrature::gauss(4).nodes,
        )
        .unwrap();
        assert!(gradient_check(&a, &probes(), 1e-5) < 1e-6);
    }

    #[test]
    fn wrinkled_gradient_matches_fd() {
        let law: Arc<dyn ElasticLaw> = Arc::new(builtin_dist_law());
        let b: Arc<dyn Prestrain> = Arc::new(PrestrainSpec::flat(BSpec::Polynomial {
            coefficients: vec![SymMat3::zero(), SymMat3::identity()],
        }));
        let p = WrinkleParams {
            s: SymMat2::diag(0.5, 0.0),
            k: 1.0,
            gamma: 0.4,
        };
        let a = wrinkled_flat_ansatz(Arc::new(Plane::default()), p, b, law, 0.01, &[]).unwrap();
        assert!(gradient_check(&a, &probes(), 1e-6) < 1e-6);
    }

    #[test]
    fn wrinkled_rejects_curved_base() {
        let law: Arc<dyn ElasticLaw> = Arc::new(builtin_dist_law());
        let p = WrinkleParams {
            s: SymMat2::zero(),
            k: 1.0,
            gamma: 0.4,
        };
        let r = wrinkled_flat_ansatz(Arc::new(Cylinder { rho: 2.0 }), p, constant_b(), law, 0.01, &[]);
        assert!(matches!(r, Err(AnsatzError::PreconditionII { .. })));
    }

    #[test]
    fn curved_rejects_non_isometric() {
        let law: Arc<dyn ElasticLaw> = Arc::new(builtin_dist_law());
        let data = CurvedData::from_membrane(&SymMat2::zero());
        let r = kirchhoff_curved_ansatz(Arc::new(SpherePatch { rho: 1.0 }), data, constant_b(), law, 0.1, &[]);
        assert!(matches!(r, Err(AnsatzError::NotIsometric { .. })));
    }

    #[test]
    fn identity_has_zero_energy() {
        let def = FnDeformation {
            h: 0.1,
            name: "identity".into(),
            eval: Arc::new(|x: Vec2, x3| Vec3::new(x[0], x[1], 0.1 * x3)),
            grad: Arc::new(|_, _| Mat3::identity()),
        };
        let law = builtin_dist_law();
        let e = energy3d(
            &def,
            &PrestrainSpec::flat(BSpec::Zero),
            &law,
            &Grid::unit(4, 4),
            &ThicknessQuadrature::gauss(3),
        )
        .unwrap();
        assert_eq!(e, 0.0);
        assert!(gradient_check(&def, &probes(), 1e-5) < 1e-9);
    }

    #[test]
    fn singular_prestrain_reported() {
        let def = FnDeformation {
            h: 1.0,
            name: "identity".into(),
            eval: Arc::new(|x: Vec2, x3| Vec3::new(x[0], x[1], x3)),
            grad: Arc::new(|_, _| Mat3::identity()),
        };
        let spec = PrestrainSpec::flat(BSpec::Constant {
            value: SymMat3::diag(0.0, 0.0, -1.0),
        });
        let r = energy3d(
            &def,
            &spec,
            &builtin_dist_law(),
            &Grid::unit(3, 3),
            &ThicknessQuadrature::gauss(2),
        );
        assert!(matches!(r, Err(AnsatzError::SingularPrestrain { .. })));
    }

    #[test]
    fn curved_metric_defect_converges_to_lift() {
        let law: Arc<dyn ElasticLaw> = Arc::new(IsotropicLaw::new(1.0, 0.5).unwrap());
        let prestrain = constant_b();
        let s = SymMat2::new(0.1, -0.2, 0.05);
        let rf = relax(&q3_at(law.as_ref(), Vec2::zeros(), 0.0).unwrap(), &SymMat3::identity()).unwrap();
        let (x, t) = (Vec2::new(0.4, 0.6), 0.3);
        let mut errs = Vec::new();
        for h in [1e-2, 1e-3] {
            let a = kirchhoff_curved_ansatz(
                Arc::new(Cylinder { rho: 2.0 }),
                CurvedData::from_membrane(&s),
                prestrain.clone(),
                law.clone(),
                h,
                &[],
            )
            .unwrap();
            let f = a.grad(x, t);
            let defect = SymMat3::sym_of(&(f.transpose() * f - Mat3::identity())).scale(0.5 / h);
            let want =
                rf.relaxed_lift(&(s + a.second_form().scale(t) - prestrain.b(x, t).block2())) + prestrain.b(x, t);
            errs.push(defect.max_abs_diff(&want));
        }
        assert!(errs[1] < 0.2 * errs[0] && errs[1] < 1e-2, "{errs:?}");
    }

    #[test]
    fn curved_energy_approaches_limit() {
        let law: Arc<dyn ElasticLaw> = Arc::new(builtin_dist_law());
        let prestrain = constant_b();
        let grid = Grid::unit(33, 5);
        let quad = ThicknessQuadrature::gauss(8);
        let pts = grid.points();
        let field = PrestrainField::sample(prestrain.as_ref(), &pts, &quad);
        let q3 = Q3Field::from_law(law.as_ref(), &pts, &quad.nodes).unwrap();
        let model = effective_model(&field, &q3, &quad).unwrap();
        let cyl = Arc::new(Cylinder { rho: 2.0 });
        let target = gamma_energy(
            &build_surface(cyl.as_ref(), grid).unwrap(),
            &model,
            DEFAULT_ISOMETRY_TOL,
        )
        .unwrap()
        .total;
        let ii = SymMat2::diag(0.5, 0.0);
        let s_star = model.points[0].optimal_membrane(&ii);
        let table = h_sweep(&[1e-1, 1e-2, 1e-3], target, |h| {
            let a = kirchhoff_curved_ansatz(
                cyl.clone(),
                CurvedData::from_membrane(&s_star),
                prestrain.clone(),
                law.clone(),
                h,
                &quad.nodes,
            )?;
            energy3d(&a, prestrain.as_ref(), law.as_ref(), &grid, &quad)
        })
        .unwrap();
        assert!(table.final_relative_error() < 1e-2, "{table:?}");
        assert!(table.monotone_tail);
        match table.rate {
            RateFit::Fitted { rate, .. } => assert!(rate > 0.5, "{rate}"),
            RateFit::NotApplicable => panic!("no rate"),
        }
    }

    #[test]
    fn rate_fit_recovers_power() {
        let rows: Vec<SweepRow> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&h: &f64| SweepRow {
                h,
                value: 1.0 + 3.0 * h.powf(0.7),
                error: 3.0 * h.powf(0.7),
            })
            .collect();
        match fit_rate(&rows, 1.0) {
            RateFit::Fitted { rate, log_constant } => {
                assert!((rate - 0.7).abs() < 1e-12);
                assert!((log_constant - 3f64.ln()).abs() < 1e-12);
            }
            RateFit::NotApplicable => panic!(),
        }
        let zero: Vec<SweepRow> = rows.iter().map(|r| SweepRow { error: 0.0, ..*r }).collect();
        assert_eq!(fit_rate(&zero, 1.0), RateFit::NotApplicable);
    }
}
