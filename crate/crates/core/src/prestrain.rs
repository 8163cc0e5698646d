//! Prestrain descriptions `Ā(x′) + h B(x′, t)` and their samples.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::quadrature::ThicknessQuadrature;
use crate::symalg::{SymMat3, Vec2};

/// A prestrain: leading-order factor `Ā(x′)` and thickness profile `B(x′, t)`.
pub trait Prestrain: Send + Sync {
    fn abar(&self, x: Vec2) -> SymMat3;
    fn b(&self, x: Vec2, t: f64) -> SymMat3;
    /// Interior points of `(−½, ½)` where `B` may jump.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbarSpec {
    #[default]
    Identity,
    Constant {
        value: SymMat3,
    },
}

impl AbarSpec {
    pub fn eval(&self) -> SymMat3 {
        match self {
            AbarSpec::Identity => SymMat3::identity(),
            AbarSpec::Constant { value } => *value,
        }
    }
}

/// Thickness profile of `B`, constant in `x′`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BSpec {
    #[default]
    Zero,
    Constant {
        value: SymMat3,
    },
    /// `Σ_k t^k · coefficients[k]`.
    Polynomial {
        coefficients: Vec<SymMat3>,
    },
    /// Piecewise constant: `values[i]` on the `i`-th interval cut by `breaks`.
    Layers {
        breaks: Vec<f64>,
        values: Vec<SymMat3>,
    },
}

impl BSpec {
    pub fn eval(&self, t: f64) -> SymMat3 {
        match self {
            BSpec::Zero => SymMat3::zero(),
            BSpec::Constant { value } => *value,
            BSpec::Polynomial { coefficients } => {
                // Horner
                coefficients
                    .iter()
                    .rev()
                    .fold(SymMat3::zero(), |acc, c| acc.scale(t) + *c)
            }
            BSpec::Layers { breaks, values } => {
                let idx = breaks.iter().filter(|b| t >= **b).count();
                values.get(idx).copied().unwrap_or_else(SymMat3::zero)
            }
        }
    }

    /// Highest power of `t`, or `None` for piecewise profiles.
    pub fn degree(&self) -> Option<usize> {
        match self {
            BSpec::Zero | BSpec::Constant { .. } => Some(0),
            BSpec::Polynomial { coefficients } => Some(coefficients.len().saturating_sub(1)),
            BSpec::Layers { .. } => None,
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            BSpec::Layers { breaks, .. } => breaks.clone(),
            _ => Vec::new(),
        }
    }

    /// `(a, b)` with `B(t) = a + t·b` when the profile is affine.
    pub fn affine_parts(&self) -> Option<(SymMat3, SymMat3)> {
        match self {
            BSpec::Zero => Some((SymMat3::zero(), SymMat3::zero())),
            BSpec::Constant { value } => Some((*value, SymMat3::zero())),
            BSpec::Polynomial { coefficients } if coefficients.len() <= 2 => Some((
                coefficients.first().copied().unwrap_or_default(),
                coefficients.get(1).copied().unwrap_or_default(),
            )),
            _ => None,
        }
    }
}

/// Prestrain constant in `x′`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrestrainSpec {
    pub abar: AbarSpec,
    pub b: BSpec,
}

impl PrestrainSpec {
    pub fn flat(b: BSpec) -> Self {
        Self {
            abar: AbarSpec::Identity,
            b,
        }
    }
}

impl Prestrain for PrestrainSpec {
    fn abar(&self, _x: Vec2) -> SymMat3 {
        self.abar.eval()
    }

    fn b(&self, _x: Vec2, t: f64) -> SymMat3 {
        self.b.eval(t)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.b.breakpoints()
    }
}

type AbarFn = dyn Fn(Vec2) -> SymMat3 + Send + Sync;
type BFn = dyn Fn(Vec2, f64) -> SymMat3 + Send + Sync;

/// Prestrain given by closures.
#[derive(Clone)]
pub struct FnPrestrain {
    abar: Arc<AbarFn>,
    b: Arc<BFn>,
    breaks: Vec<f64>,
}

impl FnPrestrain {
    pub fn new(
        abar: impl Fn(Vec2) -> SymMat3 + Send + Sync + 'static,
        b: impl Fn(Vec2, f64) -> SymMat3 + Send + Sync + 'static,
    ) -> Self {
        Self {
            abar: Arc::new(abar),
            b: Arc::new(b),
            breaks: Vec::new(),
        }
    }

    /// Flat reference metric with the given `B`.
    pub fn flat(b: impl Fn(Vec2, f64) -> SymMat3 + Send + Sync + 'static) -> Self {
        Self::new(|_| SymMat3::identity(), b)
    }

    pub fn with_breakpoints(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        self
    }
}

impl Prestrain for FnPrestrain {
    fn abar(&self, x: Vec2) -> SymMat3 {
        (self.abar)(x)
    }

    fn b(&self, x: Vec2, t: f64) -> SymMat3 {
        (self.b)(x, t)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breaks.clone()
    }
}

/// `Ā` per point and `B` per (point, thickness node), point-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PrestrainField {
    abar: Vec<SymMat3>,
    b: Vec<SymMat3>,
    n_nodes: usize,
}

impl PrestrainField {
    pub fn new(abar: Vec<SymMat3>, b: Vec<SymMat3>, n_nodes: usize) -> Self {
        assert_eq!(b.len(), abar.len() * n_nodes, "PrestrainField size mismatch");
        Self { abar, b, n_nodes }
    }

    pub fn sample(p: &dyn Prestrain, points: &[Vec2], quad: &ThicknessQuadrature) -> Self {
        let n_nodes = quad.len();
        let abar = points.iter().map(|x| p.abar(*x)).collect();
        let b = points
            .iter()
            .flat_map(|x| quad.nodes.iter().map(move |t| p.b(*x, *t)))
            .collect();
        Self::new(abar, b, n_nodes)
    }

    pub fn n_points(&self) -> usize {
        self.abar.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn abar(&self, point: usize) -> &SymMat3 {
        &self.abar[point]
    }

    pub fn b_at(&self, point: usize) -> &[SymMat3] {
        &self.b[point * self.n_nodes..(point + 1) * self.n_nodes]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_profile() {
        let b1 = SymMat3::diag(1.0, 2.0, 3.0);
        let b2 = SymMat3::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let spec = BSpec::Polynomial {
            coefficients: vec![SymMat3::zero(), b1, b2],
        };
        let t = 0.3;
        let want = b1.scale(t) + b2.scale(t * t);
        assert!(spec.eval(t).max_abs_diff(&want) < 1e-15);
        assert_eq!(spec.degree(), Some(2));
        assert!(spec.affine_parts().is_none());
    }

    #[test]
    fn layers_profile() {
        let spec = BSpec::Layers {
            breaks: vec![0.0],
            values: vec![SymMat3::identity().scale(-1.0), SymMat3::identity()],
        };
        assert_eq!(spec.eval(-0.2), SymMat3::identity().scale(-1.0));
        assert_eq!(spec.eval(0.2), SymMat3::identity());
        assert_eq!(spec.breakpoints(), vec![0.0]);
    }

    #[test]
    fn sampling_layout() {
        let spec = PrestrainSpec::flat(BSpec::Polynomial {
            coefficients: vec![SymMat3::zero(), SymMat3::identity()],
        });
        let quad = ThicknessQuadrature::gauss(3);
        let pts = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        let f = PrestrainField::sample(&spec, &pts, &quad);
        assert_eq!(f.n_points(), 2);
        for (k, t) in quad.nodes.iter().enumerate() {
            assert!((f.b_at(1)[k].xx - t).abs() < 1e-15);
        }
    }
}
