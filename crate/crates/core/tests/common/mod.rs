//! Shared fixtures and pointwise oracles that evaluate fields straight from
//! the 1D bases, bypassing the tabulated kernels.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swe_core::mesh::{build_mesh, Space};
use swe_core::operators::Discretisation;

pub fn disc(nx: usize, ny: usize, lx: f64, ly: f64, p: usize) -> Discretisation {
    let (mesh, _) = build_mesh(nx, ny, lx, ly, p).unwrap();
    Discretisation::new(mesh, p + 4).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_field(rng: &mut ChaCha8Rng, d: &Discretisation, s: Space) -> Vec<f64> {
    random_vec(rng, d.dim(s))
}

/// Depth coefficients of `base + amp·noise`, positive for `amp < base`.
pub fn positive_depth(rng: &mut ChaCha8Rng, d: &Discretisation, base: f64, amp: f64) -> Vec<f64> {
    let unit = d.mass_solve(
        Space::V2,
        &d.integrate_v2(&swe_core::operators::QuadratureField::constant(d.n_elements(), d.n_qp(), 1.0)),
    );
    let noise = random_field(rng, d, Space::V2);
    unit.iter().zip(&noise).map(|(u, n)| base * u + amp * n * u).collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Value and physical gradient of a V0 field at reference point `(ξ, η)`
/// of element `e`.
pub fn v0_at(d: &Discretisation, c: &[f64], e: usize, xi: f64, eta: f64) -> (f64, f64, f64) {
    let p = d.p();
    let b = &d.reference.nodal;
    let (lx, ly, dx, dy) = (b.eval(xi), b.eval(eta), b.eval_deriv(xi), b.eval_deriv(eta));
    let map = &d.dofs.v0[e];
    let (sx, sy) = (2.0 / d.mesh.dx(), 2.0 / d.mesh.dy());
    let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
    for j in 0..=p {
        for i in 0..=p {
            let ci = c[map[j * (p + 1) + i]];
            v += ci * lx[i] * ly[j];
            gx += ci * dx[i] * ly[j] * sx;
            gy += ci * lx[i] * dy[j] * sy;
        }
    }
    (v, gx, gy)
}

/// Physical velocity and divergence of a V1 field.
pub fn v1_at(d: &Discretisation, c: &[f64], e: usize, xi: f64, eta: f64) -> (f64, f64, f64) {
    let p = d.p();
    let (n, ed) = (&d.reference.nodal, &d.reference.edge);
    let (lx, ly) = (n.eval(xi), n.eval(eta));
    let (dlx, dly) = (n.eval_deriv(xi), n.eval_deriv(eta));
    let (ex, ey) = (ed.eval(xi), ed.eval(eta));
    let map = &d.dofs.v1[e];
    let nx1 = p * (p + 1);
    let (mut ux, mut uy, mut dv) = (0.0, 0.0, 0.0);
    for j in 0..p {
        for i in 0..=p {
            let ci = c[map[j * (p + 1) + i]];
            ux += ci * lx[i] * ey[j];
            dv += ci * dlx[i] * ey[j];
        }
    }
    for j in 0..=p {
        for i in 0..p {
            let ci = c[map[nx1 + j * p + i]];
            uy += ci * ex[i] * ly[j];
            dv += ci * ex[i] * dly[j];
        }
    }
    let jd = d.mesh.jac_det();
    (ux * 2.0 / d.mesh.dy(), uy * 2.0 / d.mesh.dx(), dv / jd)
}

/// Physical value of a V2 field.
pub fn v2_at(d: &Discretisation, c: &[f64], e: usize, xi: f64, eta: f64) -> f64 {
    let p = d.p();
    let ed = &d.reference.edge;
    let (ex, ey) = (ed.eval(xi), ed.eval(eta));
    let map = &d.dofs.v2[e];
    let mut v = 0.0;
    for j in 0..p {
        for i in 0..p {
            v += c[map[j * p + i]] * ex[i] * ey[j];
        }
    }
    v / d.mesh.jac_det()
}

/// `∫ f` by looping over elements and quadrature points.
pub fn integrate(d: &Discretisation, f: impl Fn(usize, f64, f64) -> f64) -> f64 {
    let jd = d.mesh.jac_det();
    let mut s = 0.0;
    for e in 0..d.n_elements() {
        for (w, pt) in d.weights.iter().zip(&d.points) {
            s += w * jd * f(e, pt[0], pt[1]);
        }
    }
    s
}
