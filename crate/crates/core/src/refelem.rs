//! One-dimensional Gauss–Lobatto–Legendre quadrature and the nodal/edge
//! basis pair that generates the tensor-product spaces.
//!
//! The edge basis is built from cumulative nodal derivatives,
//! `e_j = -Σ_{k<j} l_k'`, which makes `l_k' = e_k - e_{k+1}` hold exactly and
//! turns the strong gradient/divergence maps into pure ±1 incidence matrices.

use crate::error::{Result, SweError};

/// Gauss–Lobatto–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature1D {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature1D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `f` over `[-1, 1]`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Integrates `f` over `[a, b]` with the affinely mapped rule.
    pub fn integrate_on(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self.integrate(|x| f(mid + half * x))
    }
}

/// Legendre polynomial `P_n(x)` and `P_{n-1}(x)` by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut p_prev, mut p) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// Returns the `n_q`-point GLL rule: the endpoints plus the roots of
/// `P'_{n_q-1}`, found by Newton iteration from Chebyshev–Lobatto guesses.
pub fn gll_rule(n_q: usize) -> Result<Quadrature1D> {
    if n_q < 2 {
        return Err(SweError::InvalidArgument(format!(
            "GLL rule needs at least 2 points, got {n_q}"
        )));
    }
    let n = n_q - 1;
    let nf = n as f64;
    let mut points: Vec<f64> = (0..=n)
        .map(|k| -(std::f64::consts::PI * k as f64 / nf).cos())
        .collect();
    for x in points.iter_mut().take(n).skip(1) {
        for _ in 0..100 {
            let (pn, pn1) = legendre_pair(n, *x);
            let dx = (*x * pn - pn1) / ((nf + 1.0) * pn);
            *x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
    }
    points[0] = -1.0;
    points[n] = 1.0;
    // Symmetrise so the rule is exactly odd about zero.
    for k in 0..n_q / 2 {
        let m = 0.5 * (points[n - k] - points[k]);
        points[k] = -m;
        points[n - k] = m;
    }
    if n_q % 2 == 1 {
        points[n / 2] = 0.0;
    }
    let weights = points
        .iter()
        .map(|&x| {
            let (pn, _) = legendre_pair(n, x);
            2.0 / (nf * (nf + 1.0) * pn * pn)
        })
        .collect();
    Ok(Quadrature1D { points, weights })
}

/// Lagrange basis of degree `p` on the GLL nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalBasis1D {
    p: usize,
    nodes: Vec<f64>,
    bary: Vec<f64>,
}

impl NodalBasis1D {
    pub fn new(p: usize) -> Result<Self> {
        if p < 1 {
            return Err(SweError::InvalidArgument(format!(
                "polynomial degree must be at least 1, got {p}"
            )));
        }
        let nodes = gll_rule(p + 1)?.points;
        let bary = (0..=p)
            .map(|j| {
                let prod: f64 = (0..=p)
                    .filter(|&k| k != j)
                    .map(|k| nodes[j] - nodes[k])
                    .product();
                1.0 / prod
            })
            .collect();
        Ok(Self { p, nodes, bary })
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Values of all `p+1` Lagrange polynomials at `xi`. Points outside
    /// `[-1, 1]` evaluate the polynomial extension.
    pub fn eval(&self, xi: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.p + 1];
        self.eval_into(xi, &mut out);
        out
    }

    pub fn eval_into(&self, xi: f64, out: &mut [f64]) {
        if let Some(j) = self.nodes.iter().position(|&x| x == xi) {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j] = 1.0;
            return;
        }
        // First barycentric form: stable outside the element too.
        let ell: f64 = self.nodes.iter().map(|x| xi - x).product();
        for j in 0..=self.p {
            out[j] = ell * self.bary[j] / (xi - self.nodes[j]);
        }
    }

    /// First derivatives of all Lagrange polynomials at `xi`.
    pub fn eval_deriv(&self, xi: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.p + 1];
        self.eval_deriv_into(xi, &mut out);
        out
    }

    pub fn eval_deriv_into(&self, xi: f64, out: &mut [f64]) {
        let n = self.p + 1;
        for i in 0..n {
            let mut sum = 0.0;
            for m in 0..n {
                if m == i {
                    continue;
                }
                let mut prod = 1.0 / (self.nodes[i] - self.nodes[m]);
                for k in 0..n {
                    if k != i && k != m {
                        prod *= (xi - self.nodes[k]) / (self.nodes[i] - self.nodes[k]);
                    }
                }
                sum += prod;
            }
            out[i] = sum;
        }
    }

    /// Values at the displaced coordinate `xi - delta`. No clamping.
    pub fn eval_shifted(&self, xi: f64, delta: f64) -> Vec<f64> {
        self.eval(xi - delta)
    }
}

/// Histopolation (edge) basis of `p` functions paired with a nodal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBasis1D {
    nodal: NodalBasis1D,
}

impl EdgeBasis1D {
    pub fn new(nodal: NodalBasis1D) -> Self {
        Self { nodal }
    }

    pub fn degree(&self) -> usize {
        self.nodal.p
    }

    pub fn nodal(&self) -> &NodalBasis1D {
        &self.nodal
    }

    /// Values `e_1..e_p` at `xi` (returned 0-based).
    pub fn eval(&self, xi: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.nodal.p];
        self.eval_into(xi, &mut out);
        out
    }

    pub fn eval_into(&self, xi: f64, out: &mut [f64]) {
        let d = self.nodal.eval_deriv(xi);
        let mut acc = 0.0;
        for (j, o) in out.iter_mut().enumerate() {
            acc -= d[j];
            *o = acc;
        }
    }
}

/// Evaluation tables of the reference element at the quadrature points.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub p: usize,
    pub quad: Quadrature1D,
    pub nodal: NodalBasis1D,
    pub edge: EdgeBasis1D,
    /// `nodal_at_q[q * (p+1) + i] = l_i(ξ_q)`
    pub nodal_at_q: Vec<f64>,
    /// `nodal_deriv_at_q[q * (p+1) + i] = l_i'(ξ_q)`
    pub nodal_deriv_at_q: Vec<f64>,
    /// `edge_at_q[q * p + j] = e_j(ξ_q)`
    pub edge_at_q: Vec<f64>,
}

impl ReferenceElement {
    pub fn new(p: usize, n_q: usize) -> Result<Self> {
        let nodal = NodalBasis1D::new(p)?;
        let edge = EdgeBasis1D::new(nodal.clone());
        let quad = gll_rule(n_q)?;
        let mut nodal_at_q = Vec::with_capacity(n_q * (p + 1));
        let mut nodal_deriv_at_q = Vec::with_capacity(n_q * (p + 1));
        let mut edge_at_q = Vec::with_capacity(n_q * p);
        for &x in &quad.points {
            nodal_at_q.extend(nodal.eval(x));
            nodal_deriv_at_q.extend(nodal.eval_deriv(x));
            edge_at_q.extend(edge.eval(x));
        }
        Ok(Self {
            p,
            quad,
            nodal,
            edge,
            nodal_at_q,
            nodal_deriv_at_q,
            edge_at_q,
        })
    }

    pub fn n_q(&self) -> usize {
        self.quad.len()
    }

    #[inline]
    pub fn l(&self, q: usize, i: usize) -> f64 {
        self.nodal_at_q[q * (self.p + 1) + i]
    }

    #[inline]
    pub fn dl(&self, q: usize, i: usize) -> f64 {
        self.nodal_deriv_at_q[q * (self.p + 1) + i]
    }

    #[inline]
    pub fn e(&self, q: usize, j: usize) -> f64 {
        self.edge_at_q[q * self.p + j]
    }
}
