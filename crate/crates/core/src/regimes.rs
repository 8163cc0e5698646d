//! Prestrains that are not of order `h`.
//!
//! Covers the gap between gradient-restricted and free membrane strains,
//! the three explicit zero-energy constructions with large prestrain, the
//! nearest-rotation check, and metric diagnostics along families of `Aʰ`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::effective::{effective_model, EffectiveError};
use crate::elastic::{builtin_dist_law, ElasticError, ElasticLaw, Q3Field};
use crate::midsurface::Grid;
use crate::prestrain::{Prestrain, PrestrainField};
use crate::quadrature::ThicknessQuadrature;
use crate::sampling;
use crate::symalg::{polar, stretch_minus_identity, Mat3, SymMat2, SymMat3, SymalgError, Vec2, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegimesError {
    #[error("conjugate gradient stalled after {iterations} iterations (residual {residual:.3e})")]
    SolverStall { iterations: usize, residual: f64 },
    #[error("corner construction does not fit: radius {radius:.3e}, {reason}")]
    GeometryOverlap { radius: f64, reason: &'static str },
    #[error("exponents alpha = {alpha}, beta = {beta} are outside the example's range: {reason}")]
    BadExponents {
        alpha: f64,
        beta: f64,
        reason: &'static str,
    },
    #[error("matrices do not commute: |AM − MA| = {commutator:.3e}")]
    NotCommuting { commutator: f64 },
    #[error("gap computation needs Ā = Id, deviation {deviation:.3e}")]
    NonIdentityAbar { deviation: f64 },
    #[error("thickness must be positive, got {h}")]
    BadThickness { h: f64 },
    #[error("need at least {needed} thickness values, got {got}")]
    TooFewThicknesses { needed: usize, got: usize },
    #[error(transparent)]
    Effective(#[from] EffectiveError),
    #[error(transparent)]
    Elastic(#[from] ElasticError),
    #[error(transparent)]
    Symalg(#[from] SymalgError),
}

/// Least-squares power law `value ≈ C·h^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExponentFit {
    Fitted {
        exponent: f64,
        log_constant: f64,
        /// RMS of the log residuals.
        residual: f64,
        /// Exponent after dropping the largest `h`, when at least three points remain usable.
        exponent_without_largest: Option<f64>,
    },
    /// All values sit at round-off level.
    BelowNoise,
}

impl ExponentFit {
    pub fn exponent(&self) -> Option<f64> {
        match self {
            ExponentFit::Fitted { exponent, .. } => Some(*exponent),
            ExponentFit::BelowNoise => None,
        }
    }

    /// Dropping the largest `h` moves the exponent by at most `tol`.
    pub fn is_stable(&self, tol: f64) -> bool {
        match self {
            ExponentFit::Fitted {
                exponent,
                exponent_without_largest,
                ..
            } => exponent_without_largest.is_none_or(|e| (e - exponent).abs() <= tol),
            ExponentFit::BelowNoise => true,
        }
    }
}

fn ls_slope(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let c = my - slope * mx;
    let rms = (pts.iter().map(|p| (p.1 - c - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Some((slope, c, rms))
}

/// Fit `value ≈ C·h^p` over pairs `(h, value)`, skipping values at or below `floor`.
pub fn fit_exponent(data: &[(f64, f64)], floor: f64) -> ExponentFit {
    let mut pts: Vec<(f64, f64)> = data
        .iter()
        .filter(|(h, v)| *h > 0.0 && v.abs() > floor)
        .map(|(h, v)| (h.ln(), v.abs().ln()))
        .collect();
    match ls_slope(&pts) {
        None => ExponentFit::BelowNoise,
        Some((exponent, log_constant, residual)) => {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let without = if pts.len() >= 3 {
                ls_slope(&pts[..pts.len() - 1]).map(|f| f.0)
            } else {
                None
            };
            ExponentFit::Fitted {
                exponent,
                log_constant,
                residual,
                exponent_without_largest: without,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient-restricted membrane strains

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub max_iterations: usize,
    /// Relative residual target for conjugate gradient.
    pub tolerance: f64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub restricted: f64,
    pub unrestricted: f64,
    pub gap: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    /// Minimizing in-plane displacement per grid node.
    pub g: Vec<Vec2>,
}

/// Symmetric-gradient operator on one cell: 3 strain coordinates from the
/// 8 displacement values of its corners, ordered (i,j), (i+1,j), (i,j+1), (i+1,j+1).
fn cell_operator(d1: f64, d2: f64) -> [[f64; 8]; 3] {
    // ∂₁f and ∂₂f at the cell centre from corner values
    let dx = [-1.0, 1.0, -1.0, 1.0].map(|v| v / (2.0 * d1));
    let dy = [-1.0, -1.0, 1.0, 1.0].map(|v| v / (2.0 * d2));
    let mut m = [[0.0; 8]; 3];
    for c in 0..4 {
        m[0][2 * c] = dx[c];
        m[1][2 * c + 1] = dy[c];
        m[2][2 * c] = std::f64::consts::FRAC_1_SQRT_2 * dy[c];
        m[2][2 * c + 1] = std::f64::consts::FRAC_1_SQRT_2 * dx[c];
    }
    m
}

struct GradientProblem {
    grid: Grid,
    op: [[f64; 8]; 3],
    area: f64,
    forms: Vec<nalgebra::Matrix3<f64>>,
    pinned: [usize; 3],
}

impl GradientProblem {
    fn cell_dofs(&self, ci: usize, cj: usize) -> [usize; 8] {
        let g = &self.grid;
        let nodes = [
            g.index(ci, cj),
            g.index(ci + 1, cj),
            g.index(ci, cj + 1),
            g.index(ci + 1, cj + 1),
        ];
        let mut out = [0; 8];
        for (k, n) in nodes.iter().enumerate() {
            out[2 * k] = 2 * n;
            out[2 * k + 1] = 2 * n + 1;
        }
        out
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let n2c = self.grid.n2 - 1;
        (0..self.grid.n1 - 1).flat_map(move |i| (0..n2c).map(move |j| (i * n2c + j, i, j)))
    }

    fn strain(&self, g: &[f64], ci: usize, cj: usize) -> nalgebra::Vector3<f64> {
        let dofs = self.cell_dofs(ci, cj);
        let mut s = nalgebra::Vector3::zeros();
        for r in 0..3 {
            s[r] = (0..8).map(|k| self.op[r][k] * g[dofs[k]]).sum();
        }
        s
    }

    fn scatter(&self, out: &mut [f64], stress: &nalgebra::Vector3<f64>, ci: usize, cj: usize) {
        let dofs = self.cell_dofs(ci, cj);
        for k in 0..8 {
            out[dofs[k]] += (0..3).map(|r| self.op[r][k] * stress[r]).sum::<f64>();
        }
    }

    fn apply(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.len()];
        for (c, i, j) in self.cells() {
            let stress = self.area * (self.forms[c] * self.strain(g, i, j));
            self.scatter(&mut out, &stress, i, j);
        }
        for &p in &self.pinned {
            out[p] = g[p];
        }
        out
    }

    fn diagonal(&self, n: usize) -> Vec<f64> {
        let mut diag = vec![0.0; n];
        for (c, i, j) in self.cells() {
            let dofs = self.cell_dofs(i, j);
            for k in 0..8 {
                let col = nalgebra::Vector3::new(self.op[0][k], self.op[1][k], self.op[2][k]);
                diag[dofs[k]] += self.area * col.dot(&(self.forms[c] * col));
            }
        }
        for &p in &self.pinned {
            diag[p] = 1.0;
        }
        diag.iter().map(|d| if *d > 0.0 { *d } else { 1.0 }).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradient. Returns `(x, iterations, relative residual)`.
fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    diag: &[f64],
    b: &[f64],
    cfg: &GapConfig,
) -> Result<(Vec<f64>, usize, f64), RegimesError> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=cfg.max_iterations {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            let res = dot(&r, &r).sqrt() / bnorm;
            return if res <= cfg.tolerance {
                Ok((x, it, res))
            } else {
                Err(RegimesError::SolverStall {
                    iterations: it,
                    residual: res,
                })
            };
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let res = dot(&r, &r).sqrt() / bnorm;
        if res <= cfg.tolerance {
            return Ok((x, it, res));
        }
        z = r.iter().zip(diag).map(|(a, d)| a / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(RegimesError::SolverStall {
        iterations: cfg.max_iterations,
        residual: dot(&r, &r).sqrt() / bnorm,
    })
}

/// Compare `min_g ∫Q₂(−B₂ₓ₂ + ∇_sym g)` with the pointwise minimum over free `s`.
///
/// Strains live at cell centres and are formed from corner displacements.
/// One node is pinned and one rotation is fixed; remaining checkerboard
/// modes are harmless because the right-hand side is orthogonal to them.
pub fn restricted_gap(
    prestrain: &dyn Prestrain,
    law: &dyn ElasticLaw,
    grid: &Grid,
    quad: &ThicknessQuadrature,
    cfg: &GapConfig,
) -> Result<GapReport, RegimesError> {
    let (d1, d2) = grid.spacing();
    let centers: Vec<Vec2> = (0..grid.n1 - 1)
        .flat_map(|i| (0..grid.n2 - 1).map(move |j| (i, j)))
        .map(|(i, j)| grid.point(i, j) + Vec2::new(0.5 * d1, 0.5 * d2))
        .collect();
    let deviation = centers
        .iter()
        .map(|x| prestrain.abar(*x).max_abs_diff(&SymMat3::identity()))
        .fold(0.0, f64::max);
    if deviation > 1e-12 {
        return Err(RegimesError::NonIdentityAbar { deviation });
    }
    let field = PrestrainField::sample(prestrain, &centers, quad);
    let q3 = Q3Field::from_law(law, &centers, &quad.nodes)?;
    let model = effective_model(&field, &q3, quad)?;
    let area = d1 * d2;

    // ∫Q₂(s − β(t)) dt on one cell, evaluated from the definition
    let cell_objective = |c: usize, s: &SymMat2| -> f64 {
        let p = &model.points[c];
        (0..quad.len())
            .map(|k| quad.weights[k] * p.l2[k].eval(&(*s - p.beta[k])))
            .sum()
    };
    let unrestricted_terms: Vec<f64> = (0..centers.len())
        .map(|c| area * cell_objective(c, &model.points[c].phi_beta))
        .collect();
    let unrestricted = crate::par::pairwise_sum(&unrestricted_terms);

    let problem = GradientProblem {
        grid: *grid,
        op: cell_operator(d1, d2),
        area,
        forms: model.points.iter().map(|p| *p.l2_star.operator()).collect(),
        pinned: [0, 1, 2 * grid.index(grid.n1 - 1, 0) + 1],
    };
    let n = 2 * grid.len();
    let mut rhs = vec![0.0; n];
    for (c, i, j) in problem.cells() {
        let stress = area * (problem.forms[c] * model.points[c].phi_beta.coords());
        problem.scatter(&mut rhs, &stress, i, j);
    }
    for &p in &problem.pinned {
        rhs[p] = 0.0;
    }
    let diag = problem.diagonal(n);
    let (g, iterations, relative_residual) = pcg(|v| problem.apply(v), &diag, &rhs, cfg)?;
    let restricted_terms: Vec<f64> = problem
        .cells()
        .map(|(c, i, j)| area * cell_objective(c, &SymMat2::from_coords(&problem.strain(&g, i, j))))
        .collect();
    let restricted = crate::par::pairwise_sum(&restricted_terms);
    Ok(GapReport {
        restricted,
        unrestricted,
        gap: restricted - unrestricted,
        iterations,
        relative_residual,
        g: g.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect(),
    })
}

// ---------------------------------------------------------------------------
// Zero-energy constructions

/// Integrand values of `W(∇u (Aʰ)⁻¹)`; errors if `Aʰ` is singular.
fn dist_integrand(grad: &Mat3, a: &Mat3) -> Option<f64> {
    let inv = a.try_inverse()?;
    Some(builtin_dist_law().energy(Vec2::zeros(), 0.0, &(grad * inv)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderReport {
    pub h: f64,
    pub alpha: f64,
    /// `E/h²`.
    pub energy: f64,
    pub max_integrand: f64,
    /// `z/h^α` at `z = h/2`.
    pub amplitude_at_half: f64,
    /// `‖Aʰ − Id‖_{L∞}/h`.
    pub amplitude_over_h: f64,
    /// `‖Aʰ − Id‖²_{L²(Ωʰ)}`.
    pub l2_sq_deviation: f64,
    /// `Aʰ` changes sign inside the slab.
    pub sign_change: bool,
}

fn cylinder_frame(lambda: f64, x: f64) -> (Vec3, Vec3) {
    let (s, c) = (lambda * x).sin_cos();
    (Vec3::new(-s, c, 0.0), Vec3::new(c, s, 0.0))
}

/// Example with `Aʰ = Id + (z/h^α) e₁⊗e₁` realized by a rolled-up sheet.
pub fn example_cylinder(
    h: f64,
    alpha: f64,
    grid: &Grid,
    quad: &ThicknessQuadrature,
) -> Result<CylinderReport, RegimesError> {
    if !(h > 0.0) {
        return Err(RegimesError::BadThickness { h });
    }
    let lambda = h.powf(-alpha);
    let points = grid.points();
    let weights = grid.trapezoid_weights();
    let per_point = crate::par::try_map_range(points.len(), |p| {
        let x = points[p];
        let (tau, nu) = cylinder_frame(lambda, x[0]);
        let mut acc = 0.0;
        let mut peak = 0.0f64;
        let mut l2 = 0.0;
        for (t, w) in quad.nodes.iter().zip(&quad.weights) {
            let z = h * t;
            let stretch = 1.0 + z * lambda;
            let grad = Mat3::from_columns(&[stretch * tau, Vec3::z(), nu]);
            let a = Mat3::from_diagonal(&Vec3::new(stretch, 1.0, 1.0));
            let e = dist_integrand(&grad, &a).ok_or(RegimesError::BadThickness { h })?;
            acc += w * e;
            peak = peak.max(e);
            l2 += w * h * (z * lambda).powi(2);
        }
        Ok::<_, RegimesError>((weights[p] * acc, peak, weights[p] * l2))
    })?;
    let energy = crate::par::pairwise_sum(&per_point.iter().map(|v| v.0).collect::<Vec<_>>()) / (h * h);
    Ok(CylinderReport {
        h,
        alpha,
        energy,
        max_integrand: per_point.iter().map(|v| v.1).fold(0.0, f64::max),
        amplitude_at_half: 0.5 * h * lambda,
        amplitude_over_h: 0.5 * lambda,
        l2_sq_deviation: crate::par::pairwise_sum(&per_point.iter().map(|v| v.2).collect::<Vec<_>>()),
        sign_change: 0.5 * h * lambda > 1.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerReport {
    pub h: f64,
    pub radius: f64,
    pub max_integrand: f64,
    /// `sup |(Aʰ)ᵀAʰ − Id|` over the slab.
    pub sup_metric_defect: f64,
    /// `∫_{Ω¹} |(Aʰ)ᵀAʰ − Id|` on the rescaled slab.
    pub l1_metric_defect: f64,
    /// `|∂ₓν|` on the arc, `1/r`.
    pub curvature: f64,
    /// Difference-quotient estimate of `|∂ₓν|` across the arc.
    pub curvature_fd: f64,
    /// Metric defect on the midplane `z = 0`.
    pub midplane_defect: f64,
}

struct Corner {
    r: f64,
    x_minus: f64,
    x_plus: f64,
}

impl Corner {
    fn theta(&self, x: f64) -> f64 {
        ((x - self.x_minus) / self.r).clamp(0.0, std::f64::consts::FRAC_PI_2)
    }

    fn normal(&self, x: f64) -> Vec3 {
        let th = self.theta(x);
        Vec3::new(-th.sin(), 0.0, th.cos())
    }

    fn grad(&self, x: f64, z: f64) -> Mat3 {
        let th = self.theta(x);
        let on_arc = x > self.x_minus && x < self.x_plus;
        let stretch = if on_arc { 1.0 - z / self.r } else { 1.0 };
        let tau = Vec3::new(th.cos(), 0.0, th.sin());
        Mat3::from_columns(&[stretch * tau, Vec3::y(), self.normal(x)])
    }
}

/// Flat–quarter-cylinder–flat sheet with radius `r = λh`.
pub fn example_corner(h: f64, lambda: f64, quad: &ThicknessQuadrature) -> Result<CornerReport, RegimesError> {
    if !(h > 0.0) {
        return Err(RegimesError::BadThickness { h });
    }
    let r = lambda * h;
    if !(r < 0.25) {
        return Err(RegimesError::GeometryOverlap {
            radius: r,
            reason: "radius must stay below 1/4",
        });
    }
    if !(r > 0.5 * h) {
        return Err(RegimesError::GeometryOverlap {
            radius: r,
            reason: "radius must exceed half the thickness",
        });
    }
    let arc = std::f64::consts::FRAC_PI_2 * r;
    let corner = Corner {
        r,
        x_minus: 0.5 * (1.0 - arc),
        x_plus: 0.5 * (1.0 + arc),
    };
    let xs = ThicknessQuadrature::gauss_on(8, 0.0, corner.x_minus)
        .nodes
        .into_iter()
        .zip(ThicknessQuadrature::gauss_on(8, 0.0, corner.x_minus).weights)
        .chain({
            let q = ThicknessQuadrature::composite(8, &[]);
            // arc: map (−½, ½) to (x₋, x₊)
            q.nodes
                .into_iter()
                .zip(q.weights)
                .map(|(t, w)| (corner.x_minus + (t + 0.5) * arc, w * arc))
                .collect::<Vec<_>>()
        })
        .chain({
            let q = ThicknessQuadrature::gauss_on(8, corner.x_plus, 1.0);
            q.nodes.into_iter().zip(q.weights).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>();
    let mut peak = 0.0f64;
    let mut sup = 0.0f64;
    let mut l1 = 0.0;
    let mut midplane = 0.0f64;
    let mut z_nodes: Vec<(f64, f64)> = quad.nodes.iter().copied().zip(quad.weights.iter().copied()).collect();
    z_nodes.push((0.5, 0.0));
    z_nodes.push((-0.5, 0.0));
    z_nodes.push((0.0, 0.0));
    for &(x, wx) in &xs {
        for &(t, wt) in &z_nodes {
            let grad = corner.grad(x, h * t);
            let (_, a) = polar(&grad)?;
            let a = a.to_matrix();
            let e = dist_integrand(&grad, &a).ok_or(RegimesError::BadThickness { h })?;
            peak = peak.max(e);
            let defect = (a.transpose() * a - Mat3::identity()).norm();
            sup = sup.max(defect);
            l1 += wx * wt * defect;
            if t == 0.0 {
                midplane = midplane.max(defect);
            }
        }
    }
    let step = r / 8.0;
    let curvature_fd = (0..8)
        .map(|k| {
            let x = corner.x_minus + (k as f64 + 0.5) * step * arc / r;
            ((corner.normal(x + 0.5 * step) - corner.normal(x - 0.5 * step)) / step).norm()
        })
        .fold(0.0, f64::max);
    Ok(CornerReport {
        h,
        radius: r,
        max_integrand: peak,
        sup_metric_defect: sup,
        l1_metric_defect: l1,
        curvature: 1.0 / r,
        curvature_fd,
        midplane_defect: midplane,
    })
}

/// Nodes and weights for `∫₀¹ f(x) dx` where `f` has period `period`:
/// one period carries the weight of all full periods, then the remainder.
pub fn periodic_rule(period: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let full = (1.0 / period).floor();
    let mut out = Vec::new();
    let mut push_interval = |a: f64, b: f64, scale: f64| {
        if b <= a {
            return;
        }
        let len = (b - a) / panels as f64;
        for k in 0..panels {
            let q = ThicknessQuadrature::gauss_on(order, a + k as f64 * len, a + (k + 1) as f64 * len);
            out.extend(q.nodes.into_iter().zip(q.weights.into_iter().map(|w| w * scale)));
        }
    };
    if full >= 1.0 {
        push_interval(0.0, period, full);
    }
    push_interval(full * period, 1.0, 1.0);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OscillationRegime {
    /// `α − 2β < 0`: the scaled norm blows up.
    Divergent,
    NoDivergence,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationRow {
    pub h: f64,
    pub max_integrand: f64,
    /// `‖Aʰ − Id‖²_{L²(Ωʰ)} / h³`.
    pub scaled_deviation: f64,
    /// `h⁻³ ∫_{Ωʰ} W(∇uʰ)`.
    pub scaled_bending: f64,
    /// `‖(Aʰ)ᵀAʰ − Id‖_{L²(Ω¹)}`.
    pub metric_l2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub alpha: f64,
    pub beta: f64,
    pub regime: OscillationRegime,
    pub rows: Vec<OscillationRow>,
    /// Fit of `scaled_deviation` against `h`.
    pub exponent: ExponentFit,
    /// `2(α − 2β)`.
    pub predicted_exponent: f64,
    pub metric_exponent: ExponentFit,
}

fn oscillation_grad(h: f64, alpha: f64, beta: f64, x: f64, z: f64) -> Mat3 {
    let k = h.powf(-beta);
    let (s, c) = (k * x).sin_cos();
    let p = h.powf(alpha - beta) * c;
    let dp = -h.powf(alpha - 2.0 * beta) * s;
    let root = (1.0 + p * p).sqrt();
    let nu = Vec3::new(-p, 0.0, 1.0) / root;
    let dnu = -dp / root.powi(3) * Vec3::new(1.0, 0.0, p);
    Mat3::from_columns(&[Vec3::new(1.0, 0.0, p) + z * dnu, Vec3::y(), nu])
}

/// Oscillating sheet `(x, y, h^α sin(h^{−β}x)) + zν̂` with `Aʰ = √(∇uᵀ∇u)`.
pub fn example_oscillation(h_list: &[f64], alpha: f64, beta: f64) -> Result<OscillationReport, RegimesError> {
    let bad = |reason| RegimesError::BadExponents { alpha, beta, reason };
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(bad("alpha and beta must be positive"));
    }
    if !(alpha - beta > 0.0) {
        return Err(bad("alpha - beta must be positive"));
    }
    if !(alpha - 2.0 * beta > -1.0) {
        return Err(bad("alpha - 2 beta must exceed -1"));
    }
    if !(2.0 * alpha - 3.0 * beta > -1.0) {
        return Err(bad("2 alpha - 3 beta must exceed -1"));
    }
    if h_list.len() < 2 {
        return Err(RegimesError::TooFewThicknesses {
            needed: 2,
            got: h_list.len(),
        });
    }
    let regime = if alpha - 2.0 * beta < 0.0 {
        OscillationRegime::Divergent
    } else {
        OscillationRegime::NoDivergence
    };
    let law = builtin_dist_law();
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        if !(h > 0.0 && h < 1.0) {
            return Err(RegimesError::BadThickness { h });
        }
        let period = 2.0 * std::f64::consts::PI * h.powf(beta);
        let xs = periodic_rule(period, 16, 6);
        let zq = ThicknessQuadrature::gauss_on(6, -0.5 * h, 0.5 * h);
        let per_x = crate::par::try_map_range(xs.len(), |i| {
            let (x, wx) = xs[i];
            let mut out = [0.0f64; 4];
            for (z, wz) in zq.nodes.iter().zip(&zq.weights) {
                let grad = oscillation_grad(h, alpha, beta, x, *z);
                let dev = stretch_minus_identity(&grad);
                let a = (dev + SymMat3::identity()).to_matrix();
                let e = dist_integrand(&grad, &a).ok_or(RegimesError::BadThickness { h })?;
                out[0] = out[0].max(e);
                out[1] += wx * wz * dev.norm().powi(2);
                out[2] += wx * wz * law.energy(Vec2::zeros(), 0.0, &grad);
                out[3] += wx * wz * (grad.transpose() * grad - Mat3::identity()).norm_squared();
            }
            Ok::<_, RegimesError>(out)
        })?;
        let col = |k: usize| crate::par::pairwise_sum(&per_x.iter().map(|v| v[k]).collect::<Vec<_>>());
        rows.push(OscillationRow {
            h,
            max_integrand: per_x.iter().map(|v| v[0]).fold(0.0, f64::max),
            scaled_deviation: col(1) / h.powi(3),
            scaled_bending: col(2) / h.powi(3),
            metric_l2: (col(3) / h).sqrt(),
        });
    }
    let exponent = fit_exponent(&rows.iter().map(|r| (r.h, r.scaled_deviation)).collect::<Vec<_>>(), 0.0);
    let metric_exponent = fit_exponent(&rows.iter().map(|r| (r.h, r.metric_l2)).collect::<Vec<_>>(), 1e-300);
    Ok(OscillationReport {
        alpha,
        beta,
        regime,
        rows,
        exponent,
        predicted_exponent: 2.0 * (alpha - 2.0 * beta),
        metric_exponent,
    })
}

// ---------------------------------------------------------------------------
// Nearest rotation

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationGap {
    /// `min ‖A − QM‖` over the sampled rotations and `Q = Id`.
    pub sampled_min: f64,
    /// `‖A − M‖`.
    pub identity_value: f64,
    /// `max(0, ‖A − M‖ − sampled_min)`.
    pub violation: f64,
}

fn commutator(a: &SymMat3, m: &SymMat3) -> f64 {
    let (a, m) = (a.to_matrix(), m.to_matrix());
    (a * m - m * a).norm()
}

/// Sample rotations and check none beats `Q = Id` for commuting SPD `A`, `M`.
pub fn nearest_rotation_gap<R: Rng + ?Sized>(
    a: &SymMat3,
    m: &SymMat3,
    n_samples: usize,
    rng: &mut R,
) -> Result<RotationGap, RegimesError> {
    let c = commutator(a, m);
    let scale = (a.norm() * m.norm()).max(1.0);
    if c > 1e-12 * scale {
        return Err(RegimesError::NotCommuting { commutator: c });
    }
    let (am, mm) = (a.to_matrix(), m.to_matrix());
    let identity_value = (am - mm).norm();
    let mut best = identity_value;
    for _ in 0..n_samples {
        let q = sampling::random_rotation(rng);
        best = best.min((am - q * mm).norm());
    }
    Ok(RotationGap {
        sampled_min: best,
        identity_value,
        violation: (identity_value - best).max(0.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeatingRotation {
    pub rotation: Mat3,
    /// `‖A − Q*M‖`.
    pub value: f64,
    /// `‖A − M‖`.
    pub identity_value: f64,
}

/// Optimal rotation for `‖A − QM‖` from the polar factor of `MA`.
///
/// For non-commuting pairs it strictly beats the identity.
pub fn beating_rotation(a: &SymMat3, m: &SymMat3) -> Result<BeatingRotation, RegimesError> {
    let (am, mm) = (a.to_matrix(), m.to_matrix());
    let (r, _) = polar(&(mm * am))?;
    let q = r.transpose();
    Ok(BeatingRotation {
        rotation: q,
        value: (am - q * mm).norm(),
        identity_value: (am - mm).norm(),
    })
}

// ---------------------------------------------------------------------------
// Metric diagnostics along families

/// A family `h ↦ Aʰ` with optional deformations, against a limit `Ā(x′)`.
pub trait MetricFamily: Sync {
    fn name(&self) -> String;
    fn abar(&self, x: Vec2) -> Mat3;
    /// `Aʰ` at physical thickness coordinate `z ∈ (−h/2, h/2)`.
    fn a_h(&self, h: f64, x: Vec2, z: f64) -> Mat3;
    fn grad_u(&self, _h: f64, _x: Vec2, _z: f64) -> Option<Mat3> {
        None
    }
    /// Nodes and weights on `Ω`.
    fn midplane_rule(&self, _h: f64) -> Vec<(Vec2, f64)> {
        let grid = Grid::unit(9, 9);
        grid.points().into_iter().zip(grid.trapezoid_weights()).collect()
    }
}

/// `Id + (z/h^α) e₁⊗e₁` with the rolled-up sheet.
pub struct CylinderFamily {
    pub alpha: f64,
}

impl MetricFamily for CylinderFamily {
    fn name(&self) -> String {
        format!("cylinder(alpha={})", self.alpha)
    }
    fn abar(&self, _x: Vec2) -> Mat3 {
        Mat3::identity()
    }
    fn a_h(&self, h: f64, _x: Vec2, z: f64) -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(1.0 + z * h.powf(-self.alpha), 1.0, 1.0))
    }
    fn grad_u(&self, h: f64, x: Vec2, z: f64) -> Option<Mat3> {
        let lambda = h.powf(-self.alpha);
        let (tau, nu) = cylinder_frame(lambda, x[0]);
        Some(Mat3::from_columns(&[(1.0 + z * lambda) * tau, Vec3::z(), nu]))
    }
}

/// `Ā + hB` with constant `Ā`, `B`, realized by `u = (Ā + hB)x`.
pub struct AffineFamily {
    pub abar: SymMat3,
    pub b: SymMat3,
}

impl MetricFamily for AffineFamily {
    fn name(&self) -> String {
        "affine".into()
    }
    fn abar(&self, _x: Vec2) -> Mat3 {
        self.abar.to_matrix()
    }
    fn a_h(&self, h: f64, _x: Vec2, _z: f64) -> Mat3 {
        (self.abar + self.b.scale(h)).to_matrix()
    }
    fn grad_u(&self, h: f64, x: Vec2, z: f64) -> Option<Mat3> {
        Some(self.a_h(h, x, z))
    }
}

/// `u = x + z h^α sin(h^{−β}x) sin(h^{−β}y) e₃` with `Aʰ = √(∇uᵀ∇u)`.
pub struct DoublyOscillatingFamily {
    pub alpha: f64,
    pub beta: f64,
}

impl MetricFamily for DoublyOscillatingFamily {
    fn name(&self) -> String {
        format!("doubly_oscillating(alpha={}, beta={})", self.alpha, self.beta)
    }
    fn abar(&self, _x: Vec2) -> Mat3 {
        Mat3::identity()
    }
    fn a_h(&self, h: f64, x: Vec2, z: f64) -> Mat3 {
        let g = self.grad_u(h, x, z).expect("gradient defined");
        (stretch_minus_identity(&g) + SymMat3::identity()).to_matrix()
    }
    fn grad_u(&self, h: f64, x: Vec2, z: f64) -> Option<Mat3> {
        let k = h.powf(-self.beta);
        let a = h.powf(self.alpha);
        let (s1, c1) = (k * x[0]).sin_cos();
        let (s2, c2) = (k * x[1]).sin_cos();
        let mut g = Mat3::identity();
        g[(2, 0)] = z * a * k * c1 * s2;
        g[(2, 1)] = z * a * k * s1 * c2;
        g[(2, 2)] = 1.0 + a * s1 * s2;
        Some(g)
    }
    fn midplane_rule(&self, h: f64) -> Vec<(Vec2, f64)> {
        let line = periodic_rule(2.0 * std::f64::consts::PI * h.powf(self.beta), 8, 4);
        line.iter()
            .flat_map(|&(x, wx)| line.iter().map(move |&(y, wy)| (Vec2::new(x, y), wx * wy)))
            .collect()
    }
}

/// `Aʰ = Id` below the midplane and `diag(1, 1, 2)` above, realized by
/// stretching the upper half.
pub struct SplitThicknessFamily;

impl MetricFamily for SplitThicknessFamily {
    fn name(&self) -> String {
        "split_thickness".into()
    }
    fn abar(&self, _x: Vec2) -> Mat3 {
        Mat3::identity()
    }
    fn a_h(&self, _h: f64, _x: Vec2, z: f64) -> Mat3 {
        if z < 0.0 {
            Mat3::identity()
        } else {
            Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 2.0))
        }
    }
    fn grad_u(&self, h: f64, x: Vec2, z: f64) -> Option<Mat3> {
        Some(self.a_h(h, x, z))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub h: f64,
    /// `‖Aʰ − Ā‖²_{L²(Ωʰ)}`.
    pub l2_sq_deviation: f64,
    /// `‖(Aʰ)ᵀAʰ − ĀᵀĀ‖_{L¹(Ωʰ)}`.
    pub l1_metric: f64,
    /// Same, in-plane block only.
    pub l1_metric_inplane: f64,
    /// Largest through-thickness spread of `((Aʰ)ᵀAʰ)₂ₓ₂`.
    pub inplane_thickness_variation: f64,
    /// Largest through-thickness spread of `(Aʰ)ᵀAʰ`.
    pub thickness_variation: f64,
    /// `‖∇u Ā⁻¹ − R‖²_{L²(Ωʰ)}`, `R` the polar factor of the thickness average.
    pub pointwise_rotation_sq: Option<f64>,
    /// `‖(avg ∇u) Ā⁻¹ − R‖²_{L²(Ωʰ)}`.
    pub averaged_rotation_sq: Option<f64>,
    /// `max W(∇u (Aʰ)⁻¹)`.
    pub max_integrand: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSequenceReport {
    pub family: String,
    pub rows: Vec<MetricRow>,
    pub l1_exponent: ExponentFit,
    pub l2_exponent: ExponentFit,
    pub pointwise_rotation_exponent: Option<ExponentFit>,
    pub averaged_rotation_exponent: Option<ExponentFit>,
    /// The `L¹` metric deviation decays at least like `h²` (within 0.05) or is at round-off.
    pub h2_consistent: bool,
}

const NOISE: f64 = 1e-24;

fn metric_row(family: &dyn MetricFamily, h: f64) -> Result<MetricRow, RegimesError> {
    let rule = family.midplane_rule(h);
    let zq = ThicknessQuadrature::composite(6, &[0.0]);
    let has_grad = family.grad_u(h, Vec2::zeros(), 0.0).is_some();
    let per = crate::par::try_map_range(rule.len(), |i| {
        let (x, wx) = rule[i];
        let abar = family.abar(x);
        let abar_inv = abar
            .try_inverse()
            .ok_or(RegimesError::NonIdentityAbar { deviation: f64::NAN })?;
        let g0 = abar.transpose() * abar;
        let mut out = [0.0f64; 8];
        let mut lo = [f64::INFINITY; 6];
        let mut hi = [f64::NEG_INFINITY; 6];
        let mut avg = Mat3::zeros();
        let mut grads = Vec::with_capacity(zq.len());
        for (t, wt) in zq.nodes.iter().zip(&zq.weights) {
            let z = h * t;
            let w = wx * wt * h;
            let a = family.a_h(h, x, z);
            let m = a.transpose() * a;
            out[0] += w * (a - abar).norm_squared();
            out[1] += w * (m - g0).norm();
            out[2] += w * (m.fixed_view::<2, 2>(0, 0) - g0.fixed_view::<2, 2>(0, 0)).norm();
            let c = SymMat3::sym_of(&m).coords();
            for k in 0..6 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
            if let Some(g) = family.grad_u(h, x, z) {
                avg += *wt * g;
                out[5] = out[5].max(dist_integrand(&g, &a).ok_or(RegimesError::BadThickness { h })?);
                grads.push((w, g));
            }
        }
        out[3] = [0, 1, 5].iter().map(|&k| hi[k] - lo[k]).fold(0.0, f64::max);
        out[4] = (0..6).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        if !grads.is_empty() {
            let (r, _) = polar(&(avg * abar_inv))?;
            for (w, g) in &grads {
                out[6] += w * (g * abar_inv - r).norm_squared();
            }
            out[7] = h * wx * (avg * abar_inv - r).norm_squared();
        }
        Ok::<_, RegimesError>(out)
    })?;
    let sum = |k: usize| crate::par::pairwise_sum(&per.iter().map(|v| v[k]).collect::<Vec<_>>());
    let max = |k: usize| per.iter().map(|v| v[k]).fold(0.0, f64::max);
    Ok(MetricRow {
        h,
        l2_sq_deviation: sum(0),
        l1_metric: sum(1),
        l1_metric_inplane: sum(2),
        inplane_thickness_variation: max(3),
        thickness_variation: max(4),
        pointwise_rotation_sq: has_grad.then(|| sum(6)),
        averaged_rotation_sq: has_grad.then(|| sum(7)),
        max_integrand: has_grad.then(|| max(5)),
    })
}

/// Norms of `Aʰ − Ā` along a family and their fitted decay exponents.
pub fn order_h_diagnostic(family: &dyn MetricFamily, h_list: &[f64]) -> Result<MetricSequenceReport, RegimesError> {
    if h_list.len() < 2 {
        return Err(RegimesError::TooFewThicknesses {
            needed: 2,
            got: h_list.len(),
        });
    }
    let rows = h_list
        .iter()
        .map(|&h| {
            if !(h > 0.0) {
                return Err(RegimesError::BadThickness { h });
            }
            metric_row(family, h)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fit =
        |f: &dyn Fn(&MetricRow) -> f64| fit_exponent(&rows.iter().map(|r| (r.h, f(r))).collect::<Vec<_>>(), NOISE);
    let l1_exponent = fit(&|r| r.l1_metric);
    let has_grad = rows[0].pointwise_rotation_sq.is_some();
    let h2_consistent = match l1_exponent {
        ExponentFit::BelowNoise => true,
        ExponentFit::Fitted { exponent, .. } => exponent >= 2.0 - 0.05,
    };
    Ok(MetricSequenceReport {
        family: family.name(),
        l2_exponent: fit(&|r| r.l2_sq_deviation),
        pointwise_rotation_exponent: has_grad.then(|| fit(&|r| r.pointwise_rotation_sq.unwrap_or(0.0))),
        averaged_rotation_exponent: has_grad.then(|| fit(&|r| r.averaged_rotation_sq.unwrap_or(0.0))),
        l1_exponent,
        h2_consistent,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elastic::IsotropicLaw;
    use crate::prestrain::{BSpec, FnPrestrain, PrestrainSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exponent_fit_exact_power() {
        let data: Vec<(f64, f64)> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&h: &f64| (h, 2.0 * h.powf(1.5)))
            .collect();
        let f = fit_exponent(&data, 0.0);
        assert!((f.exponent().unwrap() - 1.5).abs() < 1e-12);
        assert!(f.is_stable(1e-12));
        assert_eq!(fit_exponent(&[(0.1, 0.0), (0.01, 0.0)], 0.0), ExponentFit::BelowNoise);
    }

    #[test]
    fn periodic_rule_integrates_sine_squared() {
        let period = 2.0 * std::f64::consts::PI * 1e-4;
        let rule = periodic_rule(period, 8, 6);
        let k = 2.0 * std::f64::consts::PI / period;
        let v: f64 = rule.iter().map(|(x, w)| w * (k * x).sin().powi(2)).sum();
        let exact = 0.5 - (2.0 * k).sin() / (4.0 * k);
        assert!((v - exact).abs() < 1e-12);
        let total: f64 = rule.iter().map(|r| r.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    fn iso() -> IsotropicLaw {
        IsotropicLaw::new(1.0, 0.5).unwrap()
    }

    #[test]
    fn zero_prestrain_has_no_gap() {
        let r = restricted_gap(
            &PrestrainSpec::flat(BSpec::Zero),
            &iso(),
            &Grid::unit(5, 5),
            &ThicknessQuadrature::gauss(4),
            &GapConfig::default(),
        )
        .unwrap();
        assert_eq!(r.restricted, 0.0);
        assert_eq!(r.unrestricted, 0.0);
        assert_eq!(r.gap, 0.0);
    }

    #[test]
    fn gradient_prestrain_has_no_gap() {
        // ∇_sym g₀ for g₀ = (0.1x₁² + 0.05x₂, 0.2x₁x₂), plus an odd-in-t part
        let p = FnPrestrain::flat(|x, t| {
            let e11 = 0.2 * x[0];
            let e22 = 0.2 * x[0];
            let e12 = 0.5 * (0.05 + 0.2 * x[1]);
            SymMat3::new(e11 + 0.3 * t, e22, 0.1, 0.0, 0.0, e12 - 0.1 * t)
        });
        let r = restricted_gap(
            &p,
            &iso(),
            &Grid::unit(9, 9),
            &ThicknessQuadrature::gauss(4),
            &GapConfig::default(),
        )
        .unwrap();
        assert!(r.gap.abs() <= 1e-8, "{r:?}");
        assert!(r.relative_residual <= 1e-10);
    }

    #[test]
    fn incompatible_prestrain_has_gap() {
        let p = FnPrestrain::flat(|x, _| SymMat3::new(x[1] * x[1], 0.0, 0.0, 0.0, 0.0, 0.0));
        let r = restricted_gap(
            &p,
            &iso(),
            &Grid::unit(9, 9),
            &ThicknessQuadrature::gauss(4),
            &GapConfig::default(),
        )
        .unwrap();
        assert!(r.gap > 1e-6, "{r:?}");
        assert!(r.restricted >= r.unrestricted - 1e-10);
    }

    #[test]
    fn stall_is_reported() {
        let p = FnPrestrain::flat(|x, _| SymMat3::new(x[1] * x[1], 0.0, 0.0, 0.0, 0.0, 0.0));
        let cfg = GapConfig {
            max_iterations: 2,
            tolerance: 1e-14,
        };
        let r = restricted_gap(&p, &iso(), &Grid::unit(9, 9), &ThicknessQuadrature::gauss(2), &cfg);
        assert!(matches!(r, Err(RegimesError::SolverStall { .. })));
    }

    #[test]
    fn cylinder_example_has_zero_energy() {
        let grid = Grid::unit(5, 3);
        let quad = ThicknessQuadrature::gauss(4);
        for h in [1e-1, 1e-2] {
            for alpha in [0.0, 0.5, 2.0] {
                let r = example_cylinder(h, alpha, &grid, &quad).unwrap();
                assert!(r.max_integrand <= 1e-12, "{r:?}");
            }
        }
        let r = example_cylinder(1e-3, 1.0, &grid, &quad).unwrap();
        assert!((r.amplitude_at_half - 0.5).abs() < 1e-12);
        assert!(!r.sign_change);
        assert!(example_cylinder(1e-2, 2.0, &grid, &quad).unwrap().sign_change);
    }

    #[test]
    fn corner_example() {
        let quad = ThicknessQuadrature::gauss(4);
        let r = example_corner(1e-2, 1.0, &quad).unwrap();
        assert!(r.max_integrand <= 1e-12);
        assert!(r.midplane_defect <= 1e-12);
        assert!((r.curvature - 100.0).abs() < 1e-9);
        assert!((r.curvature_fd / r.curvature - 1.0).abs() < 1e-2);
        let coarse = example_corner(1e-1, 1.0, &quad).unwrap();
        assert!(r.l1_metric_defect < 0.2 * coarse.l1_metric_defect);
        assert!(matches!(
            example_corner(0.1, 3.0, &quad),
            Err(RegimesError::GeometryOverlap { .. })
        ));
        assert!(matches!(
            example_corner(0.01, 0.4, &quad),
            Err(RegimesError::GeometryOverlap { .. })
        ));
    }

    #[test]
    fn oscillation_exponent() {
        let r = example_oscillation(&[1e-2, 1e-3, 1e-4], 2.3, 1.2).unwrap();
        assert_eq!(r.regime, OscillationRegime::Divergent);
        let e = r.exponent.exponent().unwrap();
        assert!((e - r.predicted_exponent).abs() < 0.05, "{r:?}");
        for row in &r.rows {
            assert!(row.max_integrand <= 1e-12);
            assert!((row.scaled_bending / row.scaled_deviation - 1.0).abs() < 1e-6);
        }
        assert!(r.metric_exponent.exponent().unwrap() > 0.0);
        let calm = example_oscillation(&[1e-1, 1e-2], 2.0, 0.5).unwrap();
        assert_eq!(calm.regime, OscillationRegime::NoDivergence);
        assert!(matches!(
            example_oscillation(&[1e-1, 1e-2], 1.0, 1.5),
            Err(RegimesError::BadExponents { .. })
        ));
    }

    #[test]
    fn commuting_pairs_keep_identity_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = SymMat3::diag(2.0, 1.0, 1.0);
        let r = nearest_rotation_gap(&a, &SymMat3::identity(), 2000, &mut rng).unwrap();
        assert!((r.identity_value - 1.0).abs() < 1e-15);
        assert_eq!(r.violation, 0.0);
        let id = nearest_rotation_gap(&SymMat3::identity(), &SymMat3::identity(), 10, &mut rng).unwrap();
        assert_eq!(id.identity_value, 0.0);
    }

    #[test]
    fn non_commuting_pair_is_beaten() {
        let a = SymMat3::new(2.0, 1.0, 1.0, 0.0, 0.0, 0.5);
        let m = SymMat3::diag(1.0, 3.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            nearest_rotation_gap(&a, &m, 10, &mut rng),
            Err(RegimesError::NotCommuting { .. })
        ));
        let b = beating_rotation(&a, &m).unwrap();
        assert!(b.value < b.identity_value - 1e-6);
        assert!((b.rotation.determinant() - 1.0).abs() < 1e-12);
        // nothing sampled beats the optimum
        for _ in 0..500 {
            let q = sampling::random_rotation(&mut rng);
            assert!((a.to_matrix() - q * m.to_matrix()).norm() >= b.value - 1e-12);
        }
    }

    #[test]
    fn affine_family_decays_like_h_squared() {
        let fam = AffineFamily {
            abar: SymMat3::diag(1.0, 1.2, 0.9),
            b: SymMat3::new(0.3, -0.2, 0.1, 0.05, 0.0, 0.1),
        };
        let r = order_h_diagnostic(&fam, &[1e-1, 1e-2, 1e-3]).unwrap();
        assert!(r.h2_consistent);
        assert!((r.l1_exponent.exponent().unwrap() - 2.0).abs() < 0.05);
        assert!(r.rows.iter().all(|row| row.max_integrand.unwrap() < 1e-12));
    }

    #[test]
    fn doubly_oscillating_family_contrast() {
        let fam = DoublyOscillatingFamily { alpha: 2.0, beta: 3.0 };
        let r = order_h_diagnostic(&fam, &[1e-1, 3e-2, 1e-2]).unwrap();
        assert!(!r.h2_consistent, "{r:?}");
        let avg = r.averaged_rotation_exponent.unwrap().exponent().unwrap();
        let pw = r.pointwise_rotation_exponent.unwrap().exponent().unwrap();
        assert!(avg >= 3.0 && pw < 3.0, "{avg} {pw}");
    }

    #[test]
    fn split_family_keeps_inplane_block() {
        let r = order_h_diagnostic(&SplitThicknessFamily, &[1e-1, 1e-2]).unwrap();
        for row in &r.rows {
            assert_eq!(row.inplane_thickness_variation, 0.0);
            assert!((row.thickness_variation - 3.0).abs() < 1e-12);
            assert_eq!(row.max_integrand, Some(0.0));
        }
    }
}
