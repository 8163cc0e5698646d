//! Elastic energy densities, their Hessian at the identity, and sampled
//! checks of the structural hypotheses (frame indifference, minimum on
//! rotations, quadratic growth near SO(3)).

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix6;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampling;
use crate::symalg::{dist_so3_squared, stretch_deviations, stretch_minus_identity, Mat3, QuadForm3, SymMat3, Vec2};

/// Default step for finite-difference Hessians.
pub const DEFAULT_HESSIAN_STEP: f64 = 1e-4;
/// Tolerance (relative to the largest eigenvalue) below which a Hessian is
/// declared indefinite.
pub const DEFAULT_PSD_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElasticError {
    #[error("deformation gradient has det F = {det:.3e} <= 0")]
    SingularDeformation { det: f64 },
    #[error("moduli mu = {mu}, lambda = {lambda} violate mu > 0, 3 lambda + 2 mu > 0")]
    BadModuli { mu: f64, lambda: f64 },
    #[error("Hessian at the identity has eigenvalue {min_eigenvalue:.3e} below -{tolerance:.1e}")]
    HessianNotPSD { min_eigenvalue: f64, tolerance: f64 },
    #[error("finite-difference step {step:e} is too small or not finite")]
    StepTooSmall { step: f64 },
}

/// Serializable description of a built-in law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LawDescriptor {
    /// `‖√(FᵀF) − Id‖²`.
    Dist,
    /// `μ|U − Id|² + ½λ(tr(U − Id))²` with `U = √(FᵀF)`.
    Isotropic { mu: f64, lambda: f64 },
    /// Isotropic with moduli scaled by `1 + slope·t`.
    GradedIsotropic { mu: f64, lambda: f64, slope: f64 },
    /// `½⟨L(U − Id), U − Id⟩` for an arbitrary symmetric `L` (upper triangle, row-major, 21 entries).
    Quadratic { upper: Vec<f64> },
    /// User-supplied evaluator.
    Custom { name: String },
}

impl fmt::Display for LawDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LawDescriptor::Dist => write!(f, "dist"),
            LawDescriptor::Isotropic { mu, lambda } => write!(f, "isotropic(mu={mu}, lambda={lambda})"),
            LawDescriptor::GradedIsotropic { mu, lambda, slope } => {
                write!(f, "graded_isotropic(mu={mu}, lambda={lambda}, slope={slope})")
            }
            LawDescriptor::Quadratic { .. } => write!(f, "quadratic"),
            LawDescriptor::Custom { name } => write!(f, "custom({name})"),
        }
    }
}

/// An energy density `W(x′, t, F)`.
///
/// Implementations must be pure so that evaluation can be spread over threads.
pub trait ElasticLaw: Send + Sync {
    fn energy(&self, x: Vec2, t: f64, f: &Mat3) -> f64;

    fn descriptor(&self) -> LawDescriptor;

    /// Exact `D²W(x′, t, Id)` when known.
    fn closed_form_hessian(&self, _x: Vec2, _t: f64) -> Option<QuadForm3> {
        None
    }

    /// True when `W` does not depend on `t`.
    fn is_thickness_uniform(&self) -> bool {
        false
    }
}

/// `F ↦ ‖√(FᵀF) − Id‖²_F`.
#[derive(Clone, Copy, Debug, Default)]
pub struct DistLaw;

impl DistLaw {
    /// Energy, flagging orientation-reversing `F`.
    pub fn checked_energy(&self, f: &Mat3) -> Result<f64, ElasticError> {
        let det = f.determinant();
        if !(det > 0.0) {
            return Err(ElasticError::SingularDeformation { det });
        }
        Ok(self.energy(Vec2::zeros(), 0.0, f))
    }
}

impl ElasticLaw for DistLaw {
    fn energy(&self, _x: Vec2, _t: f64, f: &Mat3) -> f64 {
        let (dev, _) = stretch_deviations(f);
        dev.iter().map(|d| d * d).sum()
    }

    fn descriptor(&self) -> LawDescriptor {
        LawDescriptor::Dist
    }

    fn closed_form_hessian(&self, _x: Vec2, _t: f64) -> Option<QuadForm3> {
        Some(QuadForm3::isotropic(1.0, 0.0))
    }

    fn is_thickness_uniform(&self) -> bool {
        true
    }
}

pub fn builtin_dist_law() -> DistLaw {
    DistLaw
}

/// Isotropic law quadratic in the stretch `U − Id`.
#[derive(Clone, Copy, Debug)]
pub struct IsotropicLaw {
    mu: f64,
    lambda: f64,
}

impl IsotropicLaw {
    pub fn new(mu: f64, lambda: f64) -> Result<Self, ElasticError> {
        if !(mu > 0.0 && 3.0 * lambda + 2.0 * mu > 0.0) || !mu.is_finite() || !lambda.is_finite() {
            return Err(ElasticError::BadModuli { mu, lambda });
        }
        Ok(Self { mu, lambda })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn eval(mu: f64, lambda: f64, f: &Mat3) -> f64 {
        let e = stretch_minus_identity(f);
        let tr = e.trace();
        mu * e.dot(&e) + 0.5 * lambda * tr * tr
    }
}

impl ElasticLaw for IsotropicLaw {
    fn energy(&self, _x: Vec2, _t: f64, f: &Mat3) -> f64 {
        Self::eval(self.mu, self.lambda, f)
    }

    fn descriptor(&self) -> LawDescriptor {
        LawDescriptor::Isotropic {
            mu: self.mu,
            lambda: self.lambda,
        }
    }

    fn closed_form_hessian(&self, _x: Vec2, _t: f64) -> Option<QuadForm3> {
        Some(QuadForm3::isotropic(self.mu, self.lambda))
    }

    fn is_thickness_uniform(&self) -> bool {
        true
    }
}

pub fn builtin_isotropic_quadratic(mu: f64, lambda: f64) -> Result<IsotropicLaw, ElasticError> {
    IsotropicLaw::new(mu, lambda)
}

/// Isotropic law whose moduli vary linearly through the thickness.
#[derive(Clone, Copy, Debug)]
pub struct GradedIsotropicLaw {
    base: IsotropicLaw,
    slope: f64,
}

impl GradedIsotropicLaw {
    /// Requires `1 + slope·t > 0` on `[−½, ½]`.
    pub fn new(mu: f64, lambda: f64, slope: f64) -> Result<Self, ElasticError> {
        let base = IsotropicLaw::new(mu, lambda)?;
        if !(slope.abs() < 2.0) {
            return Err(ElasticError::BadModuli {
                mu: mu * (1.0 - 0.5 * slope.abs()),
                lambda,
            });
        }
        Ok(Self { base, slope })
    }

    fn factor(&self, t: f64) -> f64 {
        1.0 + self.slope * t
    }
}

impl ElasticLaw for GradedIsotropicLaw {
    fn energy(&self, _x: Vec2, t: f64, f: &Mat3) -> f64 {
        self.factor(t) * IsotropicLaw::eval(self.base.mu, self.base.lambda, f)
    }

    fn descriptor(&self) -> LawDescriptor {
        LawDescriptor::GradedIsotropic {
            mu: self.base.mu,
            lambda: self.base.lambda,
            slope: self.slope,
        }
    }

    fn closed_form_hessian(&self, _x: Vec2, t: f64) -> Option<QuadForm3> {
        Some(QuadForm3::isotropic(self.base.mu, self.base.lambda).scale(self.factor(t)))
    }
}

/// `½⟨L(U − Id), U − Id⟩`; `L` need not be positive.
#[derive(Clone, Copy, Debug)]
pub struct QuadraticLaw {
    form: QuadForm3,
}

impl QuadraticLaw {
    pub fn new(form: QuadForm3) -> Self {
        Self { form }
    }

    /// From the 21 upper-triangular entries, row-major.
    pub fn from_upper(upper: &[f64]) -> Option<Self> {
        if upper.len() != 21 {
            return None;
        }
        let mut m = Matrix6::zeros();
        let mut k = 0;
        for i in 0..6 {
            for j in i..6 {
                m[(i, j)] = upper[k];
                m[(j, i)] = upper[k];
                k += 1;
            }
        }
        Some(Self::new(QuadForm3::new(m)))
    }

    pub fn upper(&self) -> Vec<f64> {
        let m = self.form.operator();
        let mut out = Vec::with_capacity(21);
        for i in 0..6 {
            for j in i..6 {
                out.push(m[(i, j)]);
            }
        }
        out
    }
}

impl ElasticLaw for QuadraticLaw {
    fn energy(&self, _x: Vec2, _t: f64, f: &Mat3) -> f64 {
        0.5 * self.form.eval_sym(&stretch_minus_identity(f))
    }

    fn descriptor(&self) -> LawDescriptor {
        LawDescriptor::Quadratic { upper: self.upper() }
    }

    fn closed_form_hessian(&self, _x: Vec2, _t: f64) -> Option<QuadForm3> {
        Some(self.form)
    }

    fn is_thickness_uniform(&self) -> bool {
        true
    }
}

type EnergyFn = dyn Fn(Vec2, f64, &Mat3) -> f64 + Send + Sync;

/// Law given by a closure.
#[derive(Clone)]
pub struct FnLaw {
    name: String,
    f: Arc<EnergyFn>,
}

impl FnLaw {
    pub fn new(name: impl Into<String>, f: impl Fn(Vec2, f64, &Mat3) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }
}

impl ElasticLaw for FnLaw {
    fn energy(&self, x: Vec2, t: f64, f: &Mat3) -> f64 {
        (self.f)(x, t, f)
    }

    fn descriptor(&self) -> LawDescriptor {
        LawDescriptor::Custom {
            name: self.name.clone(),
        }
    }
}

/// Build a law from its descriptor. Custom descriptors cannot be rebuilt.
pub fn law_from_descriptor(d: &LawDescriptor) -> Result<Arc<dyn ElasticLaw>, ElasticError> {
    Ok(match d {
        LawDescriptor::Dist => Arc::new(DistLaw),
        LawDescriptor::Isotropic { mu, lambda } => Arc::new(IsotropicLaw::new(*mu, *lambda)?),
        LawDescriptor::GradedIsotropic { mu, lambda, slope } => {
            Arc::new(GradedIsotropicLaw::new(*mu, *lambda, *slope)?)
        }
        LawDescriptor::Quadratic { upper } => {
            Arc::new(QuadraticLaw::from_upper(upper).ok_or(ElasticError::BadModuli {
                mu: f64::NAN,
                lambda: f64::NAN,
            })?)
        }
        LawDescriptor::Custom { .. } => {
            return Err(ElasticError::BadModuli {
                mu: f64::NAN,
                lambda: f64::NAN,
            })
        }
    })
}

/// Central second differences of `W(x′, t, Id + ·)` on the orthonormal
/// symmetric basis, symmetrized, then checked for positivity.
pub fn hessian_at_identity(law: &dyn ElasticLaw, x: Vec2, t: f64, step: f64) -> Result<QuadForm3, ElasticError> {
    let q = raw_hessian(law, x, t, step)?;
    check_psd(&q, DEFAULT_PSD_TOL)?;
    Ok(q)
}

/// Same as [`hessian_at_identity`] without the positivity gate.
pub fn raw_hessian(law: &dyn ElasticLaw, x: Vec2, t: f64, step: f64) -> Result<QuadForm3, ElasticError> {
    if !step.is_finite() || step <= 0.0 || step * step <= f64::EPSILON {
        return Err(ElasticError::StepTooSmall { step });
    }
    let basis: Vec<Mat3> = (0..6).map(|a| SymMat3::basis(a).to_matrix()).collect();
    let id = Mat3::identity();
    let w = |m: Mat3| law.energy(x, t, &(id + m));
    let mut op = Matrix6::zeros();
    let h = step;
    for a in 0..6 {
        let ea = basis[a] * h;
        op[(a, a)] = (w(ea * 2.0) - 2.0 * w(Mat3::zeros()) + w(-ea * 2.0)) / (4.0 * h * h);
        for b in (a + 1)..6 {
            let eb = basis[b] * h;
            let v = (w(ea + eb) - w(ea - eb) - w(-ea + eb) + w(-ea - eb)) / (4.0 * h * h);
            op[(a, b)] = v;
            op[(b, a)] = v;
        }
    }
    if op.iter().any(|v| !v.is_finite()) {
        return Err(ElasticError::StepTooSmall { step });
    }
    Ok(QuadForm3::new(op))
}

fn check_psd(q: &QuadForm3, rel_tol: f64) -> Result<(), ElasticError> {
    let ev = q.eigenvalues();
    let scale = ev.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = rel_tol * scale;
    let min = ev.min();
    if min < -tol {
        return Err(ElasticError::HessianNotPSD {
            min_eigenvalue: min,
            tolerance: tol,
        });
    }
    Ok(())
}

/// Hessian used downstream: the closed form when the law has one, otherwise
/// finite differences at the default step. Both are positivity-checked.
pub fn q3_at(law: &dyn ElasticLaw, x: Vec2, t: f64) -> Result<QuadForm3, ElasticError> {
    match law.closed_form_hessian(x, t) {
        Some(q) => {
            check_psd(&q, DEFAULT_PSD_TOL)?;
            Ok(q)
        }
        None => hessian_at_identity(law, x, t, DEFAULT_HESSIAN_STEP),
    }
}

/// One row of a Taylor-ratio table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorRow {
    pub h: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaylorReport {
    /// Ratios `W(Id + hF) / (h²·½Q₃(F))` and `|ratio − 1|` at the last `h`.
    Table { rows: Vec<TaylorRow>, final_deviation: f64 },
    /// `Q₃(F) = 0`, so the ratio is undefined.
    NotApplicable,
}

pub fn taylor_ratio_check(
    law: &dyn ElasticLaw,
    x: Vec2,
    t: f64,
    f: &Mat3,
    h_list: &[f64],
) -> Result<TaylorReport, ElasticError> {
    let q = q3_at(law, x, t)?;
    let half_q = 0.5 * q.apply(f);
    if half_q <= 1e-14 * f.norm_squared().max(1e-300) {
        return Ok(TaylorReport::NotApplicable);
    }
    let rows: Vec<TaylorRow> = h_list
        .iter()
        .map(|&h| TaylorRow {
            h,
            ratio: law.energy(x, t, &(Mat3::identity() + f * h)) / (h * h * half_q),
        })
        .collect();
    let final_deviation = rows.last().map(|r| (r.ratio - 1.0).abs()).unwrap_or(f64::NAN);
    Ok(TaylorReport::Table { rows, final_deviation })
}

/// Maximum of `|W(RF) − W(F)| / (1 + W(F))` over random pairs.
pub fn frame_indifference_violation<R: Rng + ?Sized>(law: &dyn ElasticLaw, rng: &mut R, samples: usize) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let f = Mat3::identity() + sampling::random_matrix(rng) * 0.3;
        let r = sampling::random_rotation(rng);
        let x = Vec2::new(sampling::uniform(rng, 0.0, 1.0), sampling::uniform(rng, 0.0, 1.0));
        let t = sampling::uniform(rng, -0.5, 0.5);
        let w = law.energy(x, t, &f);
        let wr = law.energy(x, t, &(r * f));
        worst = worst.max((w - wr).abs() / (1.0 + w.abs()));
    }
    worst
}

/// Maximum of `|W(R)|` over random rotations.
pub fn rotation_minimum_violation<R: Rng + ?Sized>(law: &dyn ElasticLaw, rng: &mut R, samples: usize) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let r = sampling::random_rotation(rng);
        let x = Vec2::new(sampling::uniform(rng, 0.0, 1.0), sampling::uniform(rng, 0.0, 1.0));
        let t = sampling::uniform(rng, -0.5, 0.5);
        worst = worst.max(law.energy(x, t, &r).abs());
    }
    worst
}

/// Observed range of `W(F) / dist²(F, SO(3))` for `F` within `radius` of SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SandwichBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn sandwich_bounds<R: Rng + ?Sized>(
    law: &dyn ElasticLaw,
    rng: &mut R,
    samples: usize,
    radius: f64,
) -> SandwichBounds {
    let mut lower = f64::INFINITY;
    let mut upper = 0.0f64;
    let mut taken = 0;
    while taken < samples {
        let r = sampling::random_rotation(rng);
        let p = sampling::random_sym3(rng);
        let scale = sampling::uniform(rng, 0.05, 1.0) * radius / p.norm().max(1e-12);
        // R·(Id + P) is at distance |P| from SO(3) when Id + P is SPD
        let u = SymMat3::identity() + p.scale(scale);
        if !u.is_spd() {
            continue;
        }
        let f = r * u.to_matrix();
        let d2 = dist_so3_squared(&f);
        if d2 < 1e-12 {
            continue;
        }
        let x = Vec2::new(sampling::uniform(rng, 0.0, 1.0), sampling::uniform(rng, 0.0, 1.0));
        let t = sampling::uniform(rng, -0.5, 0.5);
        let ratio = law.energy(x, t, &f) / d2;
        lower = lower.min(ratio);
        upper = upper.max(ratio);
        taken += 1;
    }
    SandwichBounds { lower, upper }
}

/// Hessians of a law on a set of midplane points × thickness nodes.
///
/// Storage is point-major: entry `p * n_nodes + k`.
#[derive(Clone, Debug)]
pub struct Q3Field {
    n_points: usize,
    n_nodes: usize,
    forms: Vec<QuadForm3>,
}

impl Q3Field {
    pub fn new(n_points: usize, n_nodes: usize, forms: Vec<QuadForm3>) -> Self {
        assert_eq!(forms.len(), n_points * n_nodes, "Q3Field size mismatch");
        Self {
            n_points,
            n_nodes,
            forms,
        }
    }

    pub fn from_law(law: &dyn ElasticLaw, points: &[Vec2], nodes: &[f64]) -> Result<Self, ElasticError> {
        let n_nodes = nodes.len();
        let forms = crate::par::try_map_range(points.len() * n_nodes, |i| {
            q3_at(law, points[i / n_nodes], nodes[i % n_nodes])
        })?;
        Ok(Self::new(points.len(), n_nodes, forms))
    }

    /// Same form at every point and node.
    pub fn uniform(form: QuadForm3, n_points: usize, n_nodes: usize) -> Self {
        Self::new(n_points, n_nodes, vec![form; n_points * n_nodes])
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn at(&self, point: usize, node: usize) -> &QuadForm3 {
        &self.forms[point * self.n_nodes + node]
    }

    pub fn point(&self, point: usize) -> &[QuadForm3] {
        &self.forms[point * self.n_nodes..(point + 1) * self.n_nodes]
    }

    /// Smallest eigenvalue over the whole field.
    pub fn min_eigenvalue(&self) -> f64 {
        self.forms
            .iter()
            .map(|q| q.min_eigenvalue())
            .fold(f64::INFINITY, f64::min)
    }
}
