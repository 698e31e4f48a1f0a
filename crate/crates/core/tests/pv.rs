mod common;

use common::*;
use proptest::prelude::*;
use swe_core::mesh::Space;
use swe_core::pv::{project_constant_v0, simpson_enstrophy, Level, PvMode, PvSolver};
use swe_core::sparse::CsrMatrix;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

struct Pair {
    un: Vec<f64>,
    uk: Vec<f64>,
    hn: Vec<f64>,
    hk: Vec<f64>,
}

fn random_pair(seed: u64, d: &swe_core::operators::Discretisation) -> Pair {
    let mut r = rng(seed);
    Pair {
        un: random_field(&mut r, d, Space::V1),
        uk: random_field(&mut r, d, Space::V1),
        hn: positive_depth(&mut r, d, 3.0, 0.4),
        hk: positive_depth(&mut r, d, 2.5, 0.4),
    }
}

#[test]
fn rest_state_and_zero_state() {
    let d = disc(3, 3, 1.0, 1.0, 3);
    let mut pv = PvSolver::f_plane(&d, 2.0);
    let h = positive_depth(&mut rng(0), &d, 4.0, 0.0);
    let u = vec![0.0; d.dim(Space::V1)];
    let q = pv.diagnose(&d, Level { u: &u, h: &h }, None).unwrap();
    assert!(q.iter().all(|v| (v - 0.5).abs() <= 1e-12));
    let mut pv0 = PvSolver::f_plane(&d, 0.0);
    let q0 = pv0.diagnose(&d, Level { u: &u, h: &h }, None).unwrap();
    assert!(max_abs(&q0) <= 1e-14);
}

#[test]
fn shear_flow_pv_matches_dense_oracle() {
    let (lx, ly, hh) = (2.0, 2.0, 3.0);
    let d = disc(2, 2, lx, ly, 2);
    let tau = std::f64::consts::TAU;
    let coords = d.quadrature_coordinates();
    let mut uq = swe_core::operators::QuadratureVector { x: d.zero_qfield(), y: d.zero_qfield() };
    for (i, &(_, y)) in coords.iter().enumerate() {
        uq.x.values[i] = (tau * y / ly).sin();
    }
    let u = d.mass_solve(Space::V1, &d.integrate_v1(&uq));
    let h: Vec<f64> = positive_depth(&mut rng(0), &d, hh, 0.0);
    let mut pv = PvSolver::f_plane(&d, 0.0);
    let q = pv.diagnose(&d, Level { u: &u, h: &h }, None).unwrap();

    let n0 = d.dim(Space::V0);
    let unit = |i: usize| {
        let mut v = vec![0.0; n0];
        v[i] = 1.0;
        v
    };
    let mut m = vec![vec![0.0; n0]; n0];
    let mut b = vec![0.0; n0];
    for i in 0..n0 {
        let ei = unit(i);
        for (j, row) in m.iter_mut().enumerate().take(n0) {
            let ej = unit(j);
            row[i] = hh * integrate(&d, |e, xi, eta| v0_at(&d, &ei, e, xi, eta).0 * v0_at(&d, &ej, e, xi, eta).0);
        }
        b[i] = -integrate(&d, |e, xi, eta| {
            let (_, gx, gy) = v0_at(&d, &ei, e, xi, eta);
            let (ux, uy, _) = v1_at(&d, &u, e, xi, eta);
            -gy * ux + gx * uy
        });
    }
    let want = dense_solve(m, b);
    assert!(max_diff(&q, &want) <= 1e-10, "{}", max_diff(&q, &want));
}

#[test]
fn modes_agree_on_a_steady_pair() {
    let d = disc(3, 2, 1.0, 1.0, 3);
    let s = random_pair(3, &d);
    let lvl = Level { u: &s.un, h: &s.hn };
    let mut pv = PvSolver::f_plane(&d, 1.5);
    let q = pv.diagnose(&d, lvl, None).unwrap();
    for mode in PvMode::ALL {
        let sol = pv.diagnose_mode(&d, mode, lvl, lvl, None, None).unwrap();
        assert!(max_diff(&sol.qbar, &q) <= 1e-12, "{mode}");
        if let Some((a, b)) = sol.endpoints {
            assert!(max_diff(&a, &q) <= 1e-12 && max_diff(&b, &q) <= 1e-12);
        }
    }
}

#[test]
fn midpoint_is_mean_of_levels() {
    let d = disc(2, 3, 1.0, 1.0, 3);
    let s = random_pair(4, &d);
    let mut pv = PvSolver::f_plane(&d, 1.0);
    let (n, k) = (Level { u: &s.un, h: &s.hn }, Level { u: &s.uk, h: &s.hk });
    let qn = pv.diagnose(&d, n, None).unwrap();
    let qk = pv.diagnose(&d, k, None).unwrap();
    let mid = pv.diagnose_midpoint(&d, n, k, None).unwrap();
    let mean: Vec<f64> = qn.iter().zip(&qk).map(|(a, b)| 0.5 * (a + b)).collect();
    assert!(max_diff(&mid.qbar, &mean) <= 1e-14 * (1.0 + max_abs(&mean)));
}

#[test]
fn exact_linear_energy_form_identity() {
    let d = disc(3, 3, 1.0, 1.0, 3);
    let s = random_pair(5, &d);
    let mut pv = PvSolver::f_plane(&d, 1.2);
    let f = pv.coriolis().to_vec();
    let sol = pv
        .diagnose_exact_linear(&d, Level { u: &s.un, h: &s.hn }, Level { u: &s.uk, h: &s.hk }, None)
        .unwrap();
    let (qn, qk) = sol.endpoints.unwrap();
    let z = simpson_enstrophy(&d, &s.hn, &s.hk, &qn, &qk);
    let lin = |a: f64, b: f64| -> Vec<f64> { s.un.iter().zip(&s.uk).map(|(x, y)| a * x + b * y).collect() };
    let (rqn, rqk) = (d.ops.r.matvec(&qn), d.ops.r.matvec(&qk));
    let m0f = d.ops.m0.matvec(&f);
    let rhs = -dot(&rqn, &lin(2.0, 1.0)) / 3.0 - dot(&rqk, &lin(1.0, 2.0)) / 3.0 + dot(&qn, &m0f) + dot(&qk, &m0f);
    // Testing both block rows with their own PV gives 4Z on the left.
    assert!((4.0 * z - rhs).abs() <= 1e-11 * z.abs(), "{} {}", 4.0 * z, rhs);
}

#[test]
fn exact_constant_energy_form_identity() {
    let d = disc(3, 3, 1.0, 1.0, 3);
    let s = random_pair(6, &d);
    let mut pv = PvSolver::f_plane(&d, 0.8);
    let f = pv.coriolis().to_vec();
    let sol = pv
        .diagnose_exact_constant(&d, Level { u: &s.un, h: &s.hn }, Level { u: &s.uk, h: &s.hk }, None)
        .unwrap();
    let q = &sol.qbar;
    let hs: Vec<f64> = s.hn.iter().zip(&s.hk).map(|(a, b)| a + b).collect();
    let lhs = swe_core::diagnostics::enstrophy(&d, &hs, q) * 2.0;
    let us: Vec<f64> = s.un.iter().zip(&s.uk).map(|(a, b)| a + b).collect();
    let rhs = -dot(&d.ops.r.matvec(q), &us) + 2.0 * dot(q, &d.ops.m0.matvec(&f));
    assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs());
}

#[test]
fn exact_modes_on_rest_states() {
    let d = disc(2, 2, 1.0, 1.0, 3);
    let (h1, h2, f0) = (2.0, 3.0, 0.7);
    let u = vec![0.0; d.dim(Space::V1)];
    let a = positive_depth(&mut rng(0), &d, h1, 0.0);
    let b = positive_depth(&mut rng(0), &d, h2, 0.0);
    let mut pv = PvSolver::f_plane(&d, f0);
    let c = pv.diagnose_exact_constant(&d, Level { u: &u, h: &a }, Level { u: &u, h: &b }, None).unwrap();
    assert!(c.qbar.iter().all(|q| (q - 2.0 * f0 / (h1 + h2)).abs() <= 1e-12));
    let l = pv.diagnose_exact_linear(&d, Level { u: &u, h: &a }, Level { u: &u, h: &a }, None).unwrap();
    assert!(l.qbar.iter().all(|q| (q - f0 / h1).abs() <= 1e-12));
}

#[test]
fn exact_linear_block_matrix_is_spd() {
    let d = disc(2, 2, 1.0, 1.0, 2);
    let s = random_pair(8, &d);
    let (hn, hk) = (d.eval_v2(&s.hn), d.eval_v2(&s.hk));
    let w = |a: f64, b: f64| {
        let mut f = hn.clone();
        for (v, k) in f.values.iter_mut().zip(&hk.values) {
            *v = (a * *v + b * k) / 6.0;
        }
        d.assemble_h0_q(&f, None)
    };
    let (a11, a12, a22) = (w(3.0, 1.0), w(1.0, 1.0), w(1.0, 3.0));
    let block = CsrMatrix::block2x2(&a11, &a12, &a12, &a22);
    assert!(block.asymmetry() <= 1e-15 * block.max_abs());
    assert!(swe_core::sparse::SparseFactor::cholesky(&block).is_ok());
}

#[test]
fn simpson_enstrophy_of_linear_in_time_pv() {
    let d = disc(2, 2, 1.0, 1.0, 2);
    let hh = 2.0;
    let h = positive_depth(&mut rng(0), &d, hh, 0.0);
    let (a, b) = (0.3, -1.1);
    let qa = project_constant_v0(&d, a);
    let qb = project_constant_v0(&d, b);
    let z = simpson_enstrophy(&d, &h, &h, &qa, &qb);
    // Time mean of ½H(a + (b-a)t)² over the unit area.
    let want = hh * (a * a + a * b + b * b) / 6.0;
    assert!((z - want).abs() <= 1e-13);
    let zero = vec![0.0; qa.len()];
    assert_eq!(simpson_enstrophy(&d, &h, &h, &zero, &zero), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn vorticity_is_mode_independent(seed in any::<u64>()) {
        let d = disc(3, 2, 1.0, 1.0, 2);
        let s = random_pair(seed, &d);
        let mut pv = PvSolver::f_plane(&d, 1.3);
        let f = pv.coriolis().to_vec();
        let ones = vec![1.0; d.dim(Space::V0)];
        let fint = dot(&ones, &d.ops.m0.matvec(&f));
        let (n, k) = (Level { u: &s.un, h: &s.hn }, Level { u: &s.uk, h: &s.hk });
        let hq = |h: &[f64], q: &[f64]| dot(&ones, &d.assemble_h0(h, None).matvec(q));
        let comb = |a: f64, b: f64| -> Vec<f64> { s.hn.iter().zip(&s.hk).map(|(x, y)| a * x + b * y).collect() };
        let mut w = Vec::new();
        let mid = pv.diagnose_midpoint(&d, n, k, None).unwrap();
        let (qn, qk) = mid.endpoints.unwrap();
        w.push(0.5 * (hq(&s.hn, &qn) + hq(&s.hk, &qk)));
        let c = pv.diagnose_centred(&d, n, k, None).unwrap();
        w.push(hq(&comb(0.5, 0.5), &c.qbar));
        let l = pv.diagnose_exact_linear(&d, n, k, None).unwrap();
        let (ln, lk) = l.endpoints.unwrap();
        w.push(0.5 * (hq(&comb(2.0 / 3.0, 1.0 / 3.0), &ln) + hq(&comb(1.0 / 3.0, 2.0 / 3.0), &lk)));
        let x = pv.diagnose_exact_constant(&d, n, k, None).unwrap();
        w.push(hq(&comb(0.5, 0.5), &x.qbar));
        for v in w {
            prop_assert!((v - fint).abs() <= 1e-11 * fint.abs());
        }
    }
}
