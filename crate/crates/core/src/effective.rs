//! Thickness moments of the relaxed form and the effective plate model.
//!
//! With `L₂(t)` the relaxed elasticity and `β(t) = sym(ĀB(t))₂ₓ₂`:
//!
//! * `L₂* = ∫L₂`, `φ₁ = (L₂*)⁻¹∫tL₂`, `φ(X) = (L₂*)⁻¹∫L₂X`
//! * `N₁ = β − φ(β)`, `V₂ = t·Id − φ₁`, `T₂* = ∫V₂ᵀL₂V₂`
//! * `n* = (T₂*)⁻¹∫V₂ᵀL₂N₁`, `R = ∫⟨L₂N₁,N₁⟩ − ⟨T₂*n*, n*⟩`
//!
//! All operators are 3×3 matrices in orthonormal 2×2 coordinates. Adjoints
//! are transposes in that basis.

use nalgebra::{Cholesky, Matrix3, Vector3, U3};
use thiserror::Error;

use crate::elastic::Q3Field;
use crate::prestrain::PrestrainField;
use crate::quadrature::ThicknessQuadrature;
use crate::relax::{relax, RelaxError, RelaxedForm};
use crate::symalg::{QuadForm2, QuadForm3, SymMat2, SymMat3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EffectiveError {
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error("integrated relaxed form is singular")]
    SingularL2Star,
    #[error("effective bending tensor is singular")]
    SingularT2Star,
    #[error("expected {expected} thickness samples, got {got}")]
    SampleCount { expected: usize, got: usize },
}

/// Moments of a sampled relaxed form.
#[derive(Clone, Debug)]
pub struct MomentOperators {
    l2_star: Matrix3<f64>,
    first_moment: Matrix3<f64>,
    phi1: Matrix3<f64>,
    chol: Cholesky<f64, U3>,
}

pub fn moments(l2: &[QuadForm2], quad: &ThicknessQuadrature) -> Result<MomentOperators, EffectiveError> {
    if l2.len() != quad.len() {
        return Err(EffectiveError::SampleCount {
            expected: quad.len(),
            got: l2.len(),
        });
    }
    let mut l2_star = Matrix3::zeros();
    let mut first_moment = Matrix3::zeros();
    for ((q, t), w) in l2.iter().zip(&quad.nodes).zip(&quad.weights) {
        l2_star += q.operator() * *w;
        first_moment += q.operator() * (w * t);
    }
    let chol = Cholesky::new(l2_star).ok_or(EffectiveError::SingularL2Star)?;
    let phi1 = chol.solve(&first_moment);
    Ok(MomentOperators {
        l2_star,
        first_moment,
        phi1,
        chol,
    })
}

impl MomentOperators {
    pub fn l2_star(&self) -> QuadForm2 {
        QuadForm2::new(self.l2_star)
    }

    pub fn first_moment(&self) -> &Matrix3<f64> {
        &self.first_moment
    }

    /// `φ₁` as a matrix on 2×2 coordinates.
    pub fn phi1(&self) -> &Matrix3<f64> {
        &self.phi1
    }

    pub fn apply_phi1(&self, x: &SymMat2) -> SymMat2 {
        SymMat2::from_coords(&(self.phi1 * x.coords()))
    }

    /// `φ` applied to per-node samples.
    pub fn phi(&self, l2: &[QuadForm2], samples: &[SymMat2], quad: &ThicknessQuadrature) -> SymMat2 {
        let mut acc = Vector3::zeros();
        for ((q, x), w) in l2.iter().zip(samples).zip(&quad.weights) {
            acc += q.operator() * x.coords() * *w;
        }
        SymMat2::from_coords(&self.chol.solve(&acc))
    }
}

/// Effective quantities at one midplane point.
#[derive(Clone, Debug)]
pub struct PointModel {
    pub abar: SymMat3,
    pub l2: Vec<QuadForm2>,
    pub relaxed: Vec<RelaxedForm>,
    pub l2_star: QuadForm2,
    pub phi1: Matrix3<f64>,
    /// `β(t) = sym(ĀB(t))₂ₓ₂` at the nodes.
    pub beta: Vec<SymMat2>,
    /// `φ(β)`.
    pub phi_beta: SymMat2,
    pub n1: Vec<SymMat2>,
    pub t2_star: QuadForm2,
    pub n_star: SymMat2,
    pub residue: f64,
}

impl PointModel {
    /// Optimal in-plane strain for a midsurface with curvature `H`.
    pub fn optimal_membrane(&self, h: &SymMat2) -> SymMat2 {
        self.phi_beta - SymMat2::from_coords(&(self.phi1 * h.coords()))
    }

    /// `⟨T₂*(H − n*), H − n*⟩ + R`.
    pub fn energy_density(&self, h: &SymMat2) -> f64 {
        let e = *h - self.n_star;
        self.t2_star.eval(&e) + self.residue
    }
}

/// Effective model on a set of midplane points.
#[derive(Clone, Debug)]
pub struct PlateModel {
    pub points: Vec<PointModel>,
}

impl PlateModel {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min_t2_eigenvalue(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.t2_star.min_eigenvalue())
            .fold(f64::INFINITY, f64::min)
    }
}

/// `sym(ĀB)₂ₓ₂`.
pub fn beta_of(abar: &SymMat3, b: &SymMat3) -> SymMat2 {
    SymMat3::sym_of(&(abar.to_matrix() * b.to_matrix())).block2()
}

pub fn effective_point(
    abar: &SymMat3,
    b_nodes: &[SymMat3],
    q3_nodes: &[QuadForm3],
    quad: &ThicknessQuadrature,
) -> Result<PointModel, EffectiveError> {
    let n = quad.len();
    if b_nodes.len() != n || q3_nodes.len() != n {
        return Err(EffectiveError::SampleCount {
            expected: n,
            got: b_nodes.len().min(q3_nodes.len()),
        });
    }
    let relaxed = q3_nodes.iter().map(|q| relax(q, abar)).collect::<Result<Vec<_>, _>>()?;
    let l2: Vec<QuadForm2> = relaxed.iter().map(|r| *r.q2()).collect();
    let mom = moments(&l2, quad)?;
    let beta: Vec<SymMat2> = b_nodes.iter().map(|b| beta_of(abar, b)).collect();
    let phi_beta = mom.phi(&l2, &beta, quad);
    let n1: Vec<SymMat2> = beta.iter().map(|b| *b - phi_beta).collect();

    let mut t2 = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    let mut n1_energy = 0.0;
    for k in 0..n {
        let (t, w) = (quad.nodes[k], quad.weights[k]);
        let v2 = Matrix3::identity() * t - mom.phi1;
        let l = l2[k].operator();
        let ln1 = l * n1[k].coords();
        t2 += v2.transpose() * l * v2 * w;
        rhs += v2.transpose() * ln1 * w;
        n1_energy += w * n1[k].coords().dot(&ln1);
    }
    let t2 = 0.5 * (t2 + t2.transpose());
    let chol = Cholesky::new(t2).ok_or(EffectiveError::SingularT2Star)?;
    let n_star_c = chol.solve(&rhs);
    let residue = n1_energy - n_star_c.dot(&(t2 * n_star_c));
    Ok(PointModel {
        abar: *abar,
        l2,
        relaxed,
        l2_star: mom.l2_star(),
        phi1: mom.phi1,
        beta,
        phi_beta,
        n1,
        t2_star: QuadForm2::new(t2),
        n_star: SymMat2::from_coords(&n_star_c),
        residue,
    })
}

/// Per-point reduction; points are processed independently.
pub fn effective_model(
    prestrain: &PrestrainField,
    q3: &Q3Field,
    quad: &ThicknessQuadrature,
) -> Result<PlateModel, EffectiveError> {
    let points = crate::par::try_map_range(prestrain.n_points(), |p| {
        effective_point(prestrain.abar(p), prestrain.b_at(p), q3.point(p), quad)
    })?;
    Ok(PlateModel { points })
}

/// Violations of the projection identities behind the residue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidueCertificate {
    /// `|R − (‖β‖² − ‖φ(β)‖²_{L₂*} − ‖tn* − φ(tn*)‖²)|`.
    pub decomposition: f64,
    /// `max_a |⟨⟨tXₐ − φ(tXₐ), eₐ'⟩⟩|` over basis pairs.
    pub orthogonality: f64,
}

impl ResidueCertificate {
    pub fn max_violation(&self) -> f64 {
        self.decomposition.max(self.orthogonality)
    }
}

/// Check the residue against its projection form using the weighted
/// inner product `⟨⟨X, Y⟩⟩ = ∫⟨L₂X, Y⟩dt`.
pub fn residue_certificate(model: &PointModel, quad: &ThicknessQuadrature) -> ResidueCertificate {
    let inner = |a: &[SymMat2], b: &[SymMat2]| -> f64 {
        (0..quad.len())
            .map(|k| quad.weights[k] * model.l2[k].bilinear(&a[k], &b[k]))
            .sum()
    };
    let n = quad.len();
    let beta_sq = inner(&model.beta, &model.beta);
    let phi_sq = model.l2_star.eval(&model.phi_beta);
    let v2n: Vec<SymMat2> = (0..n)
        .map(|k| {
            let t = quad.nodes[k];
            SymMat2::from_coords(&(model.n_star.coords() * t - model.phi1 * model.n_star.coords()))
        })
        .collect();
    let v2n_sq = inner(&v2n, &v2n);
    let decomposition = (model.residue - (beta_sq - phi_sq - v2n_sq)).abs();

    let mut orthogonality = 0.0f64;
    for a in 0..3 {
        let xa = SymMat2::basis(a);
        let field: Vec<SymMat2> = (0..n)
            .map(|k| SymMat2::from_coords(&(xa.coords() * quad.nodes[k] - model.phi1 * xa.coords())))
            .collect();
        for b in 0..3 {
            let c = vec![SymMat2::basis(b); n];
            orthogonality = orthogonality.max(inner(&field, &c).abs());
        }
    }
    ResidueCertificate {
        decomposition,
        orthogonality,
    }
}
