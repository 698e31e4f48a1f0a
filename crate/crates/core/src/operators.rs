//! Mass matrices, weak and strong differential operators, and the nonlinear
//! forms `C`, `H0` and `Q`.
//!
//! All integrands are polynomial on the affine mesh, so with `n_q ≥ p + 2`
//! the bilinear forms are integrated exactly. Element matrices of the linear
//! operators are identical on every element and computed once.
//!
//! Reference-to-physical conventions (`|J| = ΔxΔy/4`):
//! V0 by composition, V1 by the contravariant Piola map, V2 by `1/|J|`.

use rayon::prelude::*;

use crate::error::{Result, SweError};
use crate::mesh::{DofMaps, PeriodicQuadMesh, Space};
use crate::refelem::ReferenceElement;
use crate::sparse::{CsrMatrix, ScatterPattern, SparseFactor};

/// Per-element, per-quadrature-point scalar values. Index `e * n_qp + q`
/// with `q = qy * n_q + qx`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureField {
    pub n_qp: usize,
    pub values: Vec<f64>,
}

impl QuadratureField {
    pub fn zeros(n_elements: usize, n_qp: usize) -> Self {
        Self {
            n_qp,
            values: vec![0.0; n_elements * n_qp],
        }
    }

    pub fn constant(n_elements: usize, n_qp: usize, v: f64) -> Self {
        Self {
            n_qp,
            values: vec![v; n_elements * n_qp],
        }
    }

    pub fn element(&self, e: usize) -> &[f64] {
        &self.values[e * self.n_qp..(e + 1) * self.n_qp]
    }

    pub fn max_abs_diff(&self, other: &QuadratureField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Physical vector values at quadrature points.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureVector {
    pub x: QuadratureField,
    pub y: QuadratureField,
}

/// Trial-side V0 basis values evaluated at displaced reference points, one
/// `(p+1)²` block per quadrature point.
#[derive(Debug, Clone)]
pub struct ShiftedBasis {
    pub n_local: usize,
    pub values: Vec<f64>,
}

/// Assembled linear operators of the discrete complex.
#[derive(Debug, Clone)]
pub struct DeRhamOperators {
    pub m0: CsrMatrix,
    pub m1: CsrMatrix,
    pub m2: CsrMatrix,
    /// Weak divergence `⟨∇·v, φ⟩`, V1 → V2'.
    pub d: CsrMatrix,
    /// Weak perp-gradient `⟨∇⊥ψ, v⟩`, V0 → V1'.
    pub r: CsrMatrix,
    /// Strong `∇⊥` on coefficients, V0 → V1.
    pub perp: CsrMatrix,
    /// Strong `∇·` on coefficients, V1 → V2.
    pub div: CsrMatrix,
}

/// Mesh, reference tables, operators and cached mass factorisations.
/// One tensor-product block of a local basis: `A[q_x, i] · B[q_y, j]` with
/// coefficients ordered `j * ni + i`.
#[derive(Clone, Copy)]
struct Factor<'t> {
    a: &'t [f64],
    ni: usize,
    b: &'t [f64],
    nj: usize,
}

/// Scratch size for the intermediate `nj × nq` sums.
const SCRATCH: usize = 128;

impl Factor<'_> {
    /// `out[q_y * nq + q_x] += scale · Σ_ij A[q_x, i] B[q_y, j] c[j * ni + i]`.
    fn eval(&self, nq: usize, c: &[f64], out: &mut [f64], scale: f64) {
        let (ni, nj) = (self.ni, self.nj);
        let mut tmp = [0.0f64; SCRATCH];
        for j in 0..nj {
            let cj = &c[j * ni..(j + 1) * ni];
            for qx in 0..nq {
                let row = &self.a[qx * ni..(qx + 1) * ni];
                tmp[j * nq + qx] = row.iter().zip(cj).map(|(x, y)| x * y).sum();
            }
        }
        for qy in 0..nq {
            let brow = &self.b[qy * nj..(qy + 1) * nj];
            let o = &mut out[qy * nq..(qy + 1) * nq];
            for (j, &bj) in brow.iter().enumerate() {
                let bj = scale * bj;
                for (ov, t) in o.iter_mut().zip(&tmp[j * nq..(j + 1) * nq]) {
                    *ov += bj * t;
                }
            }
        }
    }

    /// `out[j * ni + i] += Σ_q A[q_x, i] B[q_y, j] s[q_y * nq + q_x]`.
    fn integrate(&self, nq: usize, s: &[f64], out: &mut [f64]) {
        let (ni, nj) = (self.ni, self.nj);
        let mut tmp = [0.0f64; SCRATCH];
        for qy in 0..nq {
            let brow = &self.b[qy * nj..(qy + 1) * nj];
            let srow = &s[qy * nq..(qy + 1) * nq];
            for (j, &bj) in brow.iter().enumerate() {
                for (t, sv) in tmp[j * nq..(j + 1) * nq].iter_mut().zip(srow) {
                    *t += bj * sv;
                }
            }
        }
        for j in 0..nj {
            let tj = &tmp[j * nq..(j + 1) * nq];
            for (qx, &t) in tj.iter().enumerate() {
                let row = &self.a[qx * ni..(qx + 1) * ni];
                for (o, x) in out[j * ni..(j + 1) * ni].iter_mut().zip(row) {
                    *o += x * t;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Discretisation {
    pub mesh: PeriodicQuadMesh,
    pub dofs: DofMaps,
    pub reference: ReferenceElement,
    pub ops: DeRhamOperators,
    /// Tensor quadrature weights `w_qx · w_qy`.
    pub weights: Vec<f64>,
    /// Reference quadrature coordinates `(ξ, η)`.
    pub points: Vec<[f64; 2]>,
    m0_factor: SparseFactor,
    m1_factor: SparseFactor,
    m2_factor: SparseFactor,
    v0v0: ScatterPattern,
    v1v1: ScatterPattern,
    // Local basis tables at 2D quadrature points, `[q * n_local + a]`.
    t0: Vec<f64>,
    t0_dxi: Vec<f64>,
    t0_deta: Vec<f64>,
    t1_x: Vec<f64>,
    t1_y: Vec<f64>,
    t1_div: Vec<f64>,
    t2: Vec<f64>,
}

impl Discretisation {
    pub fn new(mesh: PeriodicQuadMesh, n_q: usize) -> Result<Self> {
        let p = mesh.p;
        if n_q < p + 2 {
            return Err(SweError::InvalidArgument(format!(
                "quadrature with {n_q} points cannot integrate degree-2p mass integrands for p = {p}"
            )));
        }
        if 2 * p * (p + 1) > 64 || n_q * n_q > SCRATCH {
            return Err(SweError::InvalidArgument(format!(
                "degree {p} with {n_q} quadrature points exceeds the local kernel size"
            )));
        }
        let reference = ReferenceElement::new(p, n_q)?;
        let dofs = DofMaps::new(&mesh);
        let nq = n_q;
        let n_qp = nq * nq;
        let (n0, n1, n2) = ((p + 1) * (p + 1), 2 * p * (p + 1), p * p);
        let nx1 = p * (p + 1);

        let mut weights = Vec::with_capacity(n_qp);
        let mut points = Vec::with_capacity(n_qp);
        let mut t0 = vec![0.0; n_qp * n0];
        let mut t0_dxi = vec![0.0; n_qp * n0];
        let mut t0_deta = vec![0.0; n_qp * n0];
        let mut t1_x = vec![0.0; n_qp * n1];
        let mut t1_y = vec![0.0; n_qp * n1];
        let mut t1_div = vec![0.0; n_qp * n1];
        let mut t2 = vec![0.0; n_qp * n2];
        let r = &reference;
        for qy in 0..nq {
            for qx in 0..nq {
                let q = qy * nq + qx;
                weights.push(r.quad.weights[qx] * r.quad.weights[qy]);
                points.push([r.quad.points[qx], r.quad.points[qy]]);
                for j in 0..=p {
                    for i in 0..=p {
                        let a = j * (p + 1) + i;
                        t0[q * n0 + a] = r.l(qx, i) * r.l(qy, j);
                        t0_dxi[q * n0 + a] = r.dl(qx, i) * r.l(qy, j);
                        t0_deta[q * n0 + a] = r.l(qx, i) * r.dl(qy, j);
                    }
                }
                for j in 0..p {
                    for i in 0..=p {
                        let a = j * (p + 1) + i;
                        t1_x[q * n1 + a] = r.l(qx, i) * r.e(qy, j);
                        t1_div[q * n1 + a] = r.dl(qx, i) * r.e(qy, j);
                    }
                }
                for j in 0..=p {
                    for i in 0..p {
                        let a = nx1 + j * p + i;
                        t1_y[q * n1 + a] = r.e(qx, i) * r.l(qy, j);
                        t1_div[q * n1 + a] = r.e(qx, i) * r.dl(qy, j);
                    }
                }
                for j in 0..p {
                    for i in 0..p {
                        t2[q * n2 + j * p + i] = r.e(qx, i) * r.e(qy, j);
                    }
                }
            }
        }

        let dim0 = dofs.dim(Space::V0);
        let dim1 = dofs.dim(Space::V1);
        let dim2 = dofs.dim(Space::V2);
        let v0v0 = ScatterPattern::new(dim0, dim0, &dofs.v0, &dofs.v0);
        let v1v1 = ScatterPattern::new(dim1, dim1, &dofs.v1, &dofs.v1);
        let v2v2 = ScatterPattern::new(dim2, dim2, &dofs.v2, &dofs.v2);
        let v2v1 = ScatterPattern::new(dim2, dim1, &dofs.v2, &dofs.v1);
        let v1v0 = ScatterPattern::new(dim1, dim0, &dofs.v1, &dofs.v0);

        let jd = mesh.jac_det();
        let (hx, hy) = (0.5 * mesh.dx(), 0.5 * mesh.dy());
        let local = |nr: usize, nc: usize, f: &dyn Fn(usize, usize, usize) -> f64| {
            let mut out = vec![0.0; nr * nc];
            for q in 0..n_qp {
                for a in 0..nr {
                    for b in 0..nc {
                        out[a * nc + b] += weights[q] * f(q, a, b);
                    }
                }
            }
            out
        };
        let m0_loc = local(n0, n0, &|q, a, b| t0[q * n0 + a] * t0[q * n0 + b] * jd);
        let m1_loc = local(n1, n1, &|q, a, b| {
            (hx * hx * t1_x[q * n1 + a] * t1_x[q * n1 + b]
                + hy * hy * t1_y[q * n1 + a] * t1_y[q * n1 + b])
                / jd
        });
        let m2_loc = local(n2, n2, &|q, a, b| t2[q * n2 + a] * t2[q * n2 + b] / jd);
        let d_loc = local(n2, n1, &|q, a, b| t2[q * n2 + a] * t1_div[q * n1 + b] / jd);
        let r_loc = local(n1, n0, &|q, a, b| {
            -(hx / hy) * t1_x[q * n1 + a] * t0_deta[q * n0 + b]
                + (hy / hx) * t1_y[q * n1 + a] * t0_dxi[q * n0 + b]
        });

        let m0 = v0v0.assemble_uniform(&m0_loc);
        let m1 = v1v1.assemble_uniform(&m1_loc);
        let m2 = v2v2.assemble_uniform(&m2_loc);
        let d = v2v1.assemble_uniform(&d_loc);
        let r_op = v1v0.assemble_uniform(&r_loc);
        let (perp, div) = incidence_maps(&dofs);

        let m0_factor = SparseFactor::cholesky(&m0)
            .map_err(|e| SweError::Assembly(format!("M0 not positive definite: {e}")))?;
        let m1_factor = SparseFactor::cholesky(&m1)
            .map_err(|e| SweError::Assembly(format!("M1 not positive definite: {e}")))?;
        let m2_factor = SparseFactor::cholesky(&m2)
            .map_err(|e| SweError::Assembly(format!("M2 not positive definite: {e}")))?;

        Ok(Self {
            mesh,
            dofs,
            reference,
            ops: DeRhamOperators {
                m0,
                m1,
                m2,
                d,
                r: r_op,
                perp,
                div,
            },
            weights,
            points,
            m0_factor,
            m1_factor,
            m2_factor,
            v0v0,
            v1v1,
            t0,
            t0_dxi,
            t0_deta,
            t1_x,
            t1_y,
            t1_div,
            t2,
        })
    }

    pub fn p(&self) -> usize {
        self.mesh.p
    }

    pub fn n_qp(&self) -> usize {
        self.weights.len()
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    pub fn dim(&self, space: Space) -> usize {
        self.dofs.dim(space)
    }

    pub fn local_dim(&self, space: Space) -> usize {
        let p = self.p();
        match space {
            Space::V0 => (p + 1) * (p + 1),
            Space::V1 => 2 * p * (p + 1),
            Space::V2 => p * p,
        }
    }

    pub fn mass(&self, space: Space) -> &CsrMatrix {
        match space {
            Space::V0 => &self.ops.m0,
            Space::V1 => &self.ops.m1,
            Space::V2 => &self.ops.m2,
        }
    }

    /// Solves `M x = b` with the cached factorisation.
    pub fn mass_solve(&self, space: Space, b: &[f64]) -> Vec<f64> {
        match space {
            Space::V0 => self.m0_factor.solve(b),
            Space::V1 => self.m1_factor.solve(b),
            Space::V2 => self.m2_factor.solve(b),
        }
    }

    /// Reference 2D basis tables: V0 values, V0 ξ/η derivatives.
    pub fn v0_tables(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.t0, &self.t0_dxi, &self.t0_deta)
    }

    /// Reference V1 x/y components and reference divergence.
    pub fn v1_tables(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.t1_x, &self.t1_y, &self.t1_div)
    }

    pub fn v2_table(&self) -> &[f64] {
        &self.t2
    }

    pub fn zero_qfield(&self) -> QuadratureField {
        QuadratureField::zeros(self.n_elements(), self.n_qp())
    }

    /// Physical coordinates of every quadrature point.
    pub fn quadrature_coordinates(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.n_elements() * self.n_qp());
        for e in 0..self.n_elements() {
            for pt in &self.points {
                out.push(self.mesh.to_physical(e, pt[0], pt[1]));
            }
        }
        out
    }

    fn nq(&self) -> usize {
        self.reference.quad.points.len()
    }

    fn factor<'t>(&'t self, a: &'t [f64], ni: usize, b: &'t [f64], nj: usize) -> Factor<'t> {
        Factor { a, ni, b, nj }
    }

    /// Factors of the V0 basis: values, ξ-derivative, η-derivative.
    fn v0_factors(&self) -> [Factor<'_>; 3] {
        let r = &self.reference;
        let n = self.p() + 1;
        [
            self.factor(&r.nodal_at_q, n, &r.nodal_at_q, n),
            self.factor(&r.nodal_deriv_at_q, n, &r.nodal_at_q, n),
            self.factor(&r.nodal_at_q, n, &r.nodal_deriv_at_q, n),
        ]
    }

    /// Factors of the V1 basis: x block, y block and their reference divergences.
    fn v1_factors(&self) -> [Factor<'_>; 4] {
        let r = &self.reference;
        let p = self.p();
        [
            self.factor(&r.nodal_at_q, p + 1, &r.edge_at_q, p),
            self.factor(&r.edge_at_q, p, &r.nodal_at_q, p + 1),
            self.factor(&r.nodal_deriv_at_q, p + 1, &r.edge_at_q, p),
            self.factor(&r.edge_at_q, p, &r.nodal_deriv_at_q, p + 1),
        ]
    }

    fn v2_factor(&self) -> Factor<'_> {
        let r = &self.reference;
        self.factor(&r.edge_at_q, self.p(), &r.edge_at_q, self.p())
    }

    /// Evaluates `Σ scale · part` over `(factor, local offset)` parts.
    fn eval_factored(&self, map: &[Vec<usize>], parts: &[(Factor<'_>, usize)], scale: f64, c: &[f64]) -> QuadratureField {
        let (n_qp, nq) = (self.n_qp(), self.nq());
        let mut out = self.zero_qfield();
        out.values
            .par_chunks_mut(n_qp)
            .enumerate()
            .for_each(|(e, vals)| {
                let mut loc = [0.0f64; 64];
                for (a, &g) in map[e].iter().enumerate() {
                    loc[a] = c[g];
                }
                for (f, off) in parts {
                    f.eval(nq, &loc[*off..], vals, scale);
                }
            });
        out
    }

    /// V0 field values at quadrature points.
    pub fn eval_v0(&self, c: &[f64]) -> QuadratureField {
        self.eval_factored(&self.dofs.v0, &[(self.v0_factors()[0], 0)], 1.0, c)
    }

    /// Physical gradient of a V0 field at quadrature points.
    pub fn eval_v0_grad(&self, c: &[f64]) -> QuadratureVector {
        let [_, fx, fy] = self.v0_factors();
        QuadratureVector {
            x: self.eval_factored(&self.dofs.v0, &[(fx, 0)], 2.0 / self.mesh.dx(), c),
            y: self.eval_factored(&self.dofs.v0, &[(fy, 0)], 2.0 / self.mesh.dy(), c),
        }
    }

    /// Evaluates a V0 field with a per-point shifted trial basis.
    pub fn eval_v0_shifted(&self, c: &[f64], shifted: &ShiftedBasis) -> QuadratureField {
        let n_qp = self.n_qp();
        let n0 = shifted.n_local;
        let mut out = self.zero_qfield();
        out.values
            .par_chunks_mut(n_qp)
            .enumerate()
            .for_each(|(e, vals)| {
                let mut loc = [0.0f64; 64];
                for (a, &g) in self.dofs.v0[e].iter().enumerate() {
                    loc[a] = c[g];
                }
                let rows = shifted.values[e * n_qp * n0..(e + 1) * n_qp * n0].chunks_exact(n0);
                for (v, row) in vals.iter_mut().zip(rows) {
                    *v = row.iter().zip(&loc[..n0]).map(|(t, l)| t * l).sum();
                }
            });
        out
    }

    /// Physical velocity components of a V1 field at quadrature points.
    pub fn eval_v1(&self, c: &[f64]) -> QuadratureVector {
        let [fx, fy, _, _] = self.v1_factors();
        let nx1 = self.p() * (self.p() + 1);
        QuadratureVector {
            x: self.eval_factored(&self.dofs.v1, &[(fx, 0)], 2.0 / self.mesh.dy(), c),
            y: self.eval_factored(&self.dofs.v1, &[(fy, nx1)], 2.0 / self.mesh.dx(), c),
        }
    }

    /// Physical divergence of a V1 field at quadrature points.
    pub fn eval_v1_div(&self, c: &[f64]) -> QuadratureField {
        let [_, _, dx, dy] = self.v1_factors();
        let nx1 = self.p() * (self.p() + 1);
        self.eval_factored(&self.dofs.v1, &[(dx, 0), (dy, nx1)], 1.0 / self.mesh.jac_det(), c)
    }

    /// Physical values of a V2 field at quadrature points.
    pub fn eval_v2(&self, c: &[f64]) -> QuadratureField {
        self.eval_factored(&self.dofs.v2, &[(self.v2_factor(), 0)], 1.0 / self.mesh.jac_det(), c)
    }

    fn scatter_local(&self, map: &[Vec<usize>], n_loc: usize, dim: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Vec<f64> {
        let mut local = vec![0.0; self.n_elements() * n_loc];
        local
            .par_chunks_mut(n_loc)
            .enumerate()
            .for_each(|(e, out)| f(e, out));
        let mut global = vec![0.0; dim];
        for (e, m) in map.iter().enumerate() {
            for (a, &g) in m.iter().enumerate() {
                global[g] += local[e * n_loc + a];
            }
        }
        global
    }

    /// `⟨ψ, s⟩` for every V0 test function, with `s` given at quadrature points.
    pub fn integrate_v0(&self, s: &QuadratureField) -> Vec<f64> {
        let n0 = self.local_dim(Space::V0);
        let jd = self.mesh.jac_det();
        let (f, nq) = (self.v0_factors()[0], self.nq());
        self.scatter_local(&self.dofs.v0, n0, self.dim(Space::V0), |e, out| {
            let mut ws = [0.0f64; SCRATCH];
            for ((o, &w), &v) in ws.iter_mut().zip(&self.weights).zip(s.element(e)) {
                *o = w * v * jd;
            }
            f.integrate(nq, &ws, out);
        })
    }

    /// `⟨v, s⟩` for every V1 test function, `s` a physical vector field.
    pub fn integrate_v1(&self, s: &QuadratureVector) -> Vec<f64> {
        let n1 = self.local_dim(Space::V1);
        let nx1 = self.p() * (self.p() + 1);
        let (hx, hy) = (0.5 * self.mesh.dx(), 0.5 * self.mesh.dy());
        let [fx, fy, _, _] = self.v1_factors();
        let nq = self.nq();
        self.scatter_local(&self.dofs.v1, n1, self.dim(Space::V1), |e, out| {
            let (sx, sy) = (s.x.element(e), s.y.element(e));
            let mut wx = [0.0f64; SCRATCH];
            let mut wy = [0.0f64; SCRATCH];
            for q in 0..self.weights.len() {
                wx[q] = self.weights[q] * hx * sx[q];
                wy[q] = self.weights[q] * hy * sy[q];
            }
            let (ox, oy) = out.split_at_mut(nx1);
            fx.integrate(nq, &wx, ox);
            fy.integrate(nq, &wy, oy);
        })
    }

    /// `⟨φ, s⟩` for every V2 test function.
    pub fn integrate_v2(&self, s: &QuadratureField) -> Vec<f64> {
        let n2 = self.local_dim(Space::V2);
        let (f, nq) = (self.v2_factor(), self.nq());
        self.scatter_local(&self.dofs.v2, n2, self.dim(Space::V2), |e, out| {
            let mut ws = [0.0f64; SCRATCH];
            for ((o, &w), &v) in ws.iter_mut().zip(&self.weights).zip(s.element(e)) {
                *o = w * v;
            }
            f.integrate(nq, &ws, out);
        })
    }

    /// Integral over the domain of a quadrature-point field.
    pub fn integrate(&self, s: &QuadratureField) -> f64 {
        let jd = self.mesh.jac_det();
        s.values
            .chunks(self.n_qp())
            .map(|vals| vals.iter().zip(&self.weights).map(|(v, w)| v * w).sum::<f64>())
            .sum::<f64>()
            * jd
    }

    /// Rotational form `C_ab = ∫ q v_a · (k × v_b)` with PV given at
    /// quadrature points. Antisymmetric for any `qval`.
    pub fn assemble_c(&self, qval: &QuadratureField) -> CsrMatrix {
        let n1 = self.local_dim(Space::V1);
        let mut blocks = vec![0.0; self.n_elements() * n1 * n1];
        blocks
            .par_chunks_mut(n1 * n1)
            .enumerate()
            .for_each(|(e, out)| {
                let qv = qval.element(e);
                for q in 0..self.weights.len() {
                    let wq = self.weights[q] * qv[q];
                    if wq == 0.0 {
                        continue;
                    }
                    let tx = &self.t1_x[q * n1..(q + 1) * n1];
                    let ty = &self.t1_y[q * n1..(q + 1) * n1];
                    for a in 0..n1 {
                        for b in 0..n1 {
                            out[a * n1 + b] += wq * (ty[a] * tx[b] - tx[a] * ty[b]);
                        }
                    }
                }
            });
        self.v1v1.assemble(&blocks)
    }

    /// Matrix-free `C(qval) · f` for a V1 coefficient vector `f`.
    pub fn apply_c(&self, qval: &QuadratureField, f: &[f64]) -> Vec<f64> {
        let n1 = self.local_dim(Space::V1);
        let nx1 = self.p() * (self.p() + 1);
        let [bx, by, _, _] = self.v1_factors();
        let nq = self.nq();
        self.scatter_local(&self.dofs.v1, n1, self.dim(Space::V1), |e, out| {
            let qv = qval.element(e);
            let mut loc = [0.0f64; 64];
            for (a, &g) in self.dofs.v1[e].iter().enumerate() {
                loc[a] = f[g];
            }
            let mut fx = [0.0f64; SCRATCH];
            let mut fy = [0.0f64; SCRATCH];
            bx.eval(nq, &loc, &mut fx, 1.0);
            by.eval(nq, &loc[nx1..], &mut fy, 1.0);
            for q in 0..self.weights.len() {
                let wq = self.weights[q] * qv[q];
                let (x, y) = (fx[q], fy[q]);
                fx[q] = wq * y;
                fy[q] = wq * x;
            }
            for v in fx.iter_mut() {
                *v = -*v;
            }
            let (ox, oy) = out.split_at_mut(nx1);
            bx.integrate(nq, &fx, ox);
            by.integrate(nq, &fy, oy);
        })
    }

    /// Depth-weighted V0 mass `H0(·, h)_ab = ∫ h ψ_a φ_b`. With `shifted`,
    /// the trial functions `φ_b` are evaluated at displaced points.
    pub fn assemble_h0(&self, h: &[f64], shifted: Option<&ShiftedBasis>) -> CsrMatrix {
        let hq = self.eval_v2(h);
        self.assemble_h0_q(&hq, shifted)
    }

    /// As [`Self::assemble_h0`], refusing non-positive depths.
    pub fn assemble_h0_checked(&self, h: &[f64], shifted: Option<&ShiftedBasis>) -> Result<CsrMatrix> {
        let hq = self.eval_v2(h);
        check_depth(&hq)?;
        Ok(self.assemble_h0_q(&hq, shifted))
    }

    /// H0 with the depth already evaluated at quadrature points.
    pub fn assemble_h0_q(&self, hq: &QuadratureField, shifted: Option<&ShiftedBasis>) -> CsrMatrix {
        let n0 = self.local_dim(Space::V0);
        let n_qp = self.n_qp();
        let jd = self.mesh.jac_det();
        let mut blocks = vec![0.0; self.n_elements() * n0 * n0];
        blocks
            .par_chunks_mut(n0 * n0)
            .enumerate()
            .for_each(|(e, out)| {
                let hv = hq.element(e);
                for q in 0..n_qp {
                    let wq = self.weights[q] * hv[q] * jd;
                    let test = &self.t0[q * n0..(q + 1) * n0];
                    let trial = match shifted {
                        Some(s) => &s.values[(e * n_qp + q) * n0..(e * n_qp + q + 1) * n0],
                        None => test,
                    };
                    for a in 0..n0 {
                        let wa = wq * test[a];
                        for b in 0..n0 {
                            out[a * n0 + b] += wa * trial[b];
                        }
                    }
                }
            });
        self.v0v0.assemble(&blocks)
    }

    /// `Q(q, q)`: pairings `⟨q², φ⟩` for all V2 test functions.
    pub fn assemble_q(&self, q: &[f64]) -> Vec<f64> {
        let mut qq = self.eval_v0(q);
        qq.values.iter_mut().for_each(|v| *v *= *v);
        self.integrate_v2(&qq)
    }

    /// Builds trial-basis tables displaced by `deltas` (one reference
    /// displacement per quadrature point, index `e * n_qp + q`).
    pub fn shifted_basis(&self, deltas: &[[f64; 2]]) -> ShiftedBasis {
        let p = self.p();
        let n0 = (p + 1) * (p + 1);
        let n_qp = self.n_qp();
        assert_eq!(deltas.len(), self.n_elements() * n_qp);
        let nodal = &self.reference.nodal;
        let mut values = vec![0.0; deltas.len() * n0];
        values
            .par_chunks_mut(n0)
            .enumerate()
            .for_each(|(k, out)| {
                let q = k % n_qp;
                let [xi, eta] = self.points[q];
                let [dx, dy] = deltas[k];
                let mut lx = [0.0f64; 16];
                let mut ly = [0.0f64; 16];
                nodal.eval_into(xi - dx, &mut lx[..=p]);
                nodal.eval_into(eta - dy, &mut ly[..=p]);
                for j in 0..=p {
                    for i in 0..=p {
                        out[j * (p + 1) + i] = lx[i] * ly[j];
                    }
                }
            });
        ShiftedBasis { n_local: n0, values }
    }
}

/// Fails if any quadrature value is non-positive.
pub fn check_depth(hq: &QuadratureField) -> Result<()> {
    if let Some(k) = hq.values.iter().position(|&v| !(v > 0.0)) {
        return Err(SweError::DepthPositivity {
            element: k / hq.n_qp,
            point: k % hq.n_qp,
            value: hq.values[k],
        });
    }
    Ok(())
}

/// Strong coefficient maps `PERP: V0 → V1` and `DIV: V1 → V2` on the global
/// node lattice. Entries are ±1 differences, so `DIV·PERP = 0` exactly.
fn incidence_maps(dofs: &DofMaps) -> (CsrMatrix, CsrMatrix) {
    let (nx, ny) = (dofs.n_nodes_x, dofs.n_nodes_y);
    let n = nx * ny;
    let v0 = |i: usize, j: usize| (j % ny) * nx + (i % nx);
    let v1x = |i: usize, k: usize| (k % ny) * nx + (i % nx);
    let v1y = |k: usize, j: usize| n + (j % ny) * nx + (k % nx);
    let v2 = |k: usize, l: usize| l * nx + k;

    let mut perp = Vec::with_capacity(4 * n);
    for k in 0..ny {
        for i in 0..nx {
            // x-flux of ∇⊥ψ = -∂ψ/∂y through the y-interval k at node column i
            perp.push((v1x(i, k), v0(i, k + 1), -1.0));
            perp.push((v1x(i, k), v0(i, k), 1.0));
        }
    }
    for j in 0..ny {
        for k in 0..nx {
            perp.push((v1y(k, j), v0(k + 1, j), 1.0));
            perp.push((v1y(k, j), v0(k, j), -1.0));
        }
    }
    let mut div = Vec::with_capacity(4 * n);
    for l in 0..ny {
        for k in 0..nx {
            div.push((v2(k, l), v1x(k + 1, l), 1.0));
            div.push((v2(k, l), v1x(k, l), -1.0));
            div.push((v2(k, l), v1y(k, l + 1), 1.0));
            div.push((v2(k, l), v1y(k, l), -1.0));
        }
    }
    (
        CsrMatrix::from_triplets(2 * n, n, &perp),
        CsrMatrix::from_triplets(n, 2 * n, &div),
    )
}
