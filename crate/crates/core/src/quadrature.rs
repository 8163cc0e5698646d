//! Gauss–Legendre rules on the thickness interval `(−½, ½)`.

use serde::{Deserialize, Serialize};

/// Nodes and weights on `(−½, ½)`; weights sum to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThicknessQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre_ref(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "quadrature needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

impl ThicknessQuadrature {
    /// `n`-point rule on `(−½, ½)`.
    pub fn gauss(n: usize) -> Self {
        Self::gauss_on(n, -0.5, 0.5)
    }

    /// `n`-point rule on `(a, b)` with weights summing to `b − a`.
    pub fn gauss_on(n: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre_ref(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Self {
            nodes: x.iter().map(|xi| mid + half * xi).collect(),
            weights: w.iter().map(|wi| half * wi).collect(),
        }
    }

    /// Composite rule with `n` nodes on each sub-interval between breakpoints.
    ///
    /// `breaks` are interior points of `(−½, ½)`; they are sorted and deduplicated.
    pub fn composite(n: usize, breaks: &[f64]) -> Self {
        let mut pts: Vec<f64> = breaks.iter().copied().filter(|b| *b > -0.5 && *b < 0.5).collect();
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        let mut edges = vec![-0.5];
        edges.extend(pts);
        edges.push(0.5);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for win in edges.windows(2) {
            let q = Self::gauss_on(n, win[0], win[1]);
            nodes.extend(q.nodes);
            weights.extend(q.weights);
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(t, w)| w * f(*t)).sum()
    }
}
