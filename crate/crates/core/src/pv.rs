//! Potential vorticity diagnosis in the four temporal modes.
//!
//! Every mode solves a depth-weighted V0 system whose right-hand side is
//! `-Rᵀu + M0 f` (suitably time-weighted). With a [`ShiftedBasis`] the trial
//! side of `H0` is displaced, which yields downwinded PV coefficients.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SweError};
use crate::mesh::Space;
use crate::operators::{check_depth, Discretisation, QuadratureField, ShiftedBasis};
use crate::sparse::{CsrMatrix, FactorKind, SparseFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PvMode {
    /// PV of the time-centred state.
    #[default]
    Instantaneous,
    /// Mean of the PVs diagnosed at both time levels.
    Midpoint,
    /// PV linear in time, coupled solve for both levels.
    ExactLinear,
    /// PV constant over the time level.
    ExactConstant,
}

impl PvMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PvMode::Instantaneous => "instantaneous",
            PvMode::Midpoint => "midpoint",
            PvMode::ExactLinear => "exact_linear",
            PvMode::ExactConstant => "exact_constant",
        }
    }

    pub const ALL: [PvMode; 4] = [
        PvMode::Instantaneous,
        PvMode::Midpoint,
        PvMode::ExactLinear,
        PvMode::ExactConstant,
    ];
}

impl fmt::Display for PvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PvMode {
    type Err = SweError;
    fn from_str(s: &str) -> Result<Self> {
        PvMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| SweError::Configuration(format!("unknown PV mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    pub g: f64,
    pub f0: f64,
    /// Mean depth, used by the approximate Jacobian.
    pub h_mean: f64,
    pub dt: f64,
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0) || !(self.h_mean > 0.0) || !(self.dt > 0.0) || !self.f0.is_finite() {
            return Err(SweError::InvalidArgument(format!(
                "physics requires g > 0, H > 0, dt > 0 (got g={}, H={}, dt={})",
                self.g, self.h_mean, self.dt
            )));
        }
        Ok(())
    }
}

/// Velocity and depth coefficients at one time level.
#[derive(Debug, Clone, Copy)]
pub struct Level<'a> {
    pub u: &'a [f64],
    pub h: &'a [f64],
}

/// Result of a diagnosis: the PV entering the rotational term and, where the
/// mode defines them, the PVs attached to each time level.
#[derive(Debug, Clone, PartialEq)]
pub struct PvSolution {
    pub qbar: Vec<f64>,
    pub endpoints: Option<(Vec<f64>, Vec<f64>)>,
}

/// Diagnoses PV. Factorisations are kept between calls and reused as
/// preconditioners for iterative refinement against the matrix-free
/// operator; a factor is rebuilt only when refinement stops contracting.
#[derive(Debug, Clone)]
pub struct PvSolver {
    f: Vec<f64>,
    m0f: Vec<f64>,
    single: [Slot; 2],
    block: [Slot; 2],
}

/// A kept factorisation and whether the next solve should rebuild it.
#[derive(Debug, Clone, Default)]
struct Slot {
    factor: Option<SparseFactor>,
    stale: bool,
    /// Last solution, the starting point of the next refinement.
    last: Option<Vec<f64>>,
}

/// Relative residual accepted from refinement.
const SOLVE_TOL: f64 = 1e-14;
/// Relative residual below which stagnation is accepted as the rounding floor.
const SOLVE_FLOOR: f64 = 1e-12;
const MAX_SWEEPS: usize = 12;
/// Solves needing more sweeps than this rebuild the factor on the next call;
/// LU rebuilds cost several times a Cholesky one.
const fn refresh_sweeps(kind: FactorKind) -> usize {
    match kind {
        FactorKind::Cholesky => 4,
        FactorKind::Lu => 9,
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `A x = b` given `apply = A·` and a factor of a nearby matrix.
fn refined_solve(
    slot: &mut Slot,
    kind: FactorKind,
    b: &[f64],
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    assemble: &dyn Fn() -> CsrMatrix,
) -> Result<Vec<f64>> {
    let bn = norm(b);
    if bn == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let mut fresh = false;
    match slot.factor.as_mut() {
        None => {
            slot.factor = Some(SparseFactor::new(&assemble(), kind)?);
            fresh = true;
        }
        Some(f) if slot.stale => {
            f.refactor(&assemble())?;
            fresh = true;
        }
        Some(_) => {}
    }
    slot.stale = false;
    loop {
        let factor = slot.factor.as_mut().expect("factor present");
        let mut x = match slot.last.take() {
            Some(x) if x.len() == b.len() => x,
            _ => factor.solve(b),
        };
        let mut prev = f64::INFINITY;
        let mut sweeps = 0;
        let mut ok = false;
        while sweeps < MAX_SWEEPS {
            sweeps += 1;
            let ax = apply(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let rn = norm(&r) / bn;
            if rn <= SOLVE_TOL || (rn <= SOLVE_FLOOR && rn > 0.5 * prev) {
                ok = true;
                break;
            }
            if rn > 0.2 * prev {
                break;
            }
            prev = rn;
            let dx = factor.solve(&r);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
        }
        if ok {
            slot.stale = sweeps > refresh_sweeps(kind);
            slot.last = Some(x.clone());
            return Ok(x);
        }
        if fresh {
            return Err(SweError::Solver(format!(
                "refinement failed to reach relative residual {SOLVE_FLOOR:e} with a fresh factorisation"
            )));
        }
        factor.refactor(&assemble())?;
        fresh = true;
    }
}

/// `∫ w ψ_a Σ_b x_b φ_b` for all test functions, trial side optionally shifted.
fn apply_weighted(disc: &Discretisation, w: &QuadratureField, x: &[f64], shift: Option<&ShiftedBasis>) -> Vec<f64> {
    let mut v = match shift {
        Some(s) => disc.eval_v0_shifted(x, s),
        None => disc.eval_v0(x),
    };
    for (vi, wi) in v.values.iter_mut().zip(&w.values) {
        *vi *= wi;
    }
    disc.integrate_v0(&v)
}

impl PvSolver {
    /// `f` is the Coriolis parameter as V0 coefficients.
    pub fn new(disc: &Discretisation, f: Vec<f64>) -> Self {
        let m0f = disc.ops.m0.matvec(&f);
        Self {
            f,
            m0f,
            single: Default::default(),
            block: Default::default(),
        }
    }

    /// Constant Coriolis parameter projected into V0.
    pub fn f_plane(disc: &Discretisation, f0: f64) -> Self {
        Self::new(disc, project_constant_v0(disc, f0))
    }

    pub fn coriolis(&self) -> &[f64] {
        &self.f
    }

    /// `-a Rᵀu + b M0 f`.
    fn rhs(&self, disc: &Discretisation, u: &[f64], a: f64, b: f64) -> Vec<f64> {
        let mut r = disc.ops.r.tmatvec(u);
        for (ri, mf) in r.iter_mut().zip(&self.m0f) {
            *ri = -a * *ri + b * mf;
        }
        r
    }

    fn factor_kind(shift: Option<&ShiftedBasis>) -> (usize, FactorKind) {
        match shift {
            None => (0, FactorKind::Cholesky),
            Some(_) => (1, FactorKind::Lu),
        }
    }

    /// Solves `H0(q, w) q = b` for a depth weight `w` at quadrature points.
    fn solve_weighted(
        &mut self,
        disc: &Discretisation,
        w: &QuadratureField,
        b: &[f64],
        shift: Option<&ShiftedBasis>,
    ) -> Result<Vec<f64>> {
        check_depth(w)?;
        let (slot, kind) = Self::factor_kind(shift);
        refined_solve(
            &mut self.single[slot],
            kind,
            b,
            &|x| apply_weighted(disc, w, x, shift),
            &|| disc.assemble_h0_q(w, shift),
        )
    }

    /// Solves `H0(q, h) = -Rᵀu + M0 f`.
    pub fn diagnose(&mut self, disc: &Discretisation, level: Level<'_>, shift: Option<&ShiftedBasis>) -> Result<Vec<f64>> {
        let w = disc.eval_v2(level.h);
        let rhs = self.rhs(disc, level.u, 1.0, 1.0);
        self.solve_weighted(disc, &w, &rhs, shift)
    }

    /// Mean of the two single-level diagnoses.
    pub fn diagnose_midpoint(
        &mut self,
        disc: &Discretisation,
        n: Level<'_>,
        k: Level<'_>,
        shift: Option<&ShiftedBasis>,
    ) -> Result<PvSolution> {
        let qn = self.diagnose(disc, n, shift)?;
        let qk = self.diagnose(disc, k, shift)?;
        Ok(midpoint_solution(qn, qk))
    }

    /// Coupled solve for the PV at both time levels when PV is linear in time.
    pub fn diagnose_exact_linear(
        &mut self,
        disc: &Discretisation,
        n: Level<'_>,
        k: Level<'_>,
        shift: Option<&ShiftedBasis>,
    ) -> Result<PvSolution> {
        let (hn, hk) = (disc.eval_v2(n.h), disc.eval_v2(k.h));
        check_depth(&hn)?;
        check_depth(&hk)?;
        let combo = |a: f64, b: f64| QuadratureField {
            n_qp: hn.n_qp,
            values: hn.values.iter().zip(&hk.values).map(|(x, y)| (a * x + b * y) / 6.0).collect(),
        };
        let (w11, w12, w22) = (combo(3.0, 1.0), combo(1.0, 1.0), combo(1.0, 3.0));
        let uw = |a: f64, b: f64| -> Vec<f64> { n.u.iter().zip(k.u).map(|(x, y)| a * x + b * y).collect() };
        let mut rhs = self.rhs(disc, &uw(2.0, 1.0), 1.0 / 3.0, 1.0);
        rhs.extend(self.rhs(disc, &uw(1.0, 2.0), 1.0 / 3.0, 1.0));
        let n0 = disc.dim(Space::V0);
        let eval = |x: &[f64]| match shift {
            Some(s) => disc.eval_v0_shifted(x, s),
            None => disc.eval_v0(x),
        };
        let apply = |x: &[f64]| -> Vec<f64> {
            let (x1, x2) = x.split_at(n0);
            let (mut v1, mut v2) = (eval(x1), eval(x2));
            for i in 0..v1.values.len() {
                let (a, b) = (v1.values[i], v2.values[i]);
                v1.values[i] = w11.values[i] * a + w12.values[i] * b;
                v2.values[i] = w12.values[i] * a + w22.values[i] * b;
            }
            let mut y = disc.integrate_v0(&v1);
            y.extend(disc.integrate_v0(&v2));
            y
        };
        let assemble = || {
            let a11 = disc.assemble_h0_q(&w11, shift);
            let a12 = disc.assemble_h0_q(&w12, shift);
            let a22 = disc.assemble_h0_q(&w22, shift);
            CsrMatrix::block2x2(&a11, &a12, &a12, &a22)
        };
        let (slot, kind) = Self::factor_kind(shift);
        let mut sol = refined_solve(&mut self.block[slot], kind, &rhs, &apply, &assemble)?;
        let qk = sol.split_off(n0);
        Ok(midpoint_solution(sol, qk))
    }

    /// Solves `H0(q̄, hⁿ + hᵏ) = -Rᵀ(uⁿ + uᵏ) + 2 M0 f`.
    pub fn diagnose_exact_constant(
        &mut self,
        disc: &Discretisation,
        n: Level<'_>,
        k: Level<'_>,
        shift: Option<&ShiftedBasis>,
    ) -> Result<PvSolution> {
        let h: Vec<f64> = n.h.iter().zip(k.h).map(|(a, b)| a + b).collect();
        let u: Vec<f64> = n.u.iter().zip(k.u).map(|(a, b)| a + b).collect();
        let w = disc.eval_v2(&h);
        let rhs = self.rhs(disc, &u, 1.0, 2.0);
        Ok(PvSolution {
            qbar: self.solve_weighted(disc, &w, &rhs, shift)?,
            endpoints: None,
        })
    }

    /// PV of the time-centred state.
    pub fn diagnose_centred(
        &mut self,
        disc: &Discretisation,
        n: Level<'_>,
        k: Level<'_>,
        shift: Option<&ShiftedBasis>,
    ) -> Result<PvSolution> {
        let h: Vec<f64> = n.h.iter().zip(k.h).map(|(a, b)| 0.5 * (a + b)).collect();
        let u: Vec<f64> = n.u.iter().zip(k.u).map(|(a, b)| 0.5 * (a + b)).collect();
        Ok(PvSolution {
            qbar: self.diagnose(disc, Level { u: &u, h: &h }, shift)?,
            endpoints: None,
        })
    }

    /// Dispatches on the mode. `cached_qn` short-circuits the level-n solve
    /// of the midpoint mode when it is already known for this shift.
    pub fn diagnose_mode(
        &mut self,
        disc: &Discretisation,
        mode: PvMode,
        n: Level<'_>,
        k: Level<'_>,
        shift: Option<&ShiftedBasis>,
        cached_qn: Option<&[f64]>,
    ) -> Result<PvSolution> {
        match mode {
            PvMode::Instantaneous => self.diagnose_centred(disc, n, k, shift),
            PvMode::Midpoint => {
                let qn = match cached_qn {
                    Some(q) => q.to_vec(),
                    None => self.diagnose(disc, n, shift)?,
                };
                let qk = self.diagnose(disc, k, shift)?;
                Ok(midpoint_solution(qn, qk))
            }
            PvMode::ExactLinear => self.diagnose_exact_linear(disc, n, k, shift),
            PvMode::ExactConstant => self.diagnose_exact_constant(disc, n, k, shift),
        }
    }
}

fn midpoint_solution(qn: Vec<f64>, qk: Vec<f64>) -> PvSolution {
    let qbar = qn.iter().zip(&qk).map(|(a, b)| 0.5 * (a + b)).collect();
    PvSolution {
        qbar,
        endpoints: Some((qn, qk)),
    }
}

/// L2 projection of a constant into V0.
pub fn project_constant_v0(disc: &Discretisation, c: f64) -> Vec<f64> {
    let rhs = disc.integrate_v0(&QuadratureField::constant(disc.n_elements(), disc.n_qp(), c));
    disc.mass_solve(Space::V0, &rhs)
}

/// Potential enstrophy with PV linear in time, integrated exactly in time.
pub fn simpson_enstrophy(disc: &Discretisation, hn: &[f64], hk: &[f64], qn: &[f64], qk: &[f64]) -> f64 {
    let (hn, hk) = (disc.eval_v2(hn), disc.eval_v2(hk));
    let (qn, qk) = (disc.eval_v0(qn), disc.eval_v0(qk));
    let mut integrand = disc.zero_qfield();
    for (i, v) in integrand.values.iter_mut().enumerate() {
        let (a, b, x, y) = (hn.values[i], hk.values[i], qn.values[i], qk.values[i]);
        *v = (1.5 * a * x * x + 0.5 * a * y * y + (a + b) * x * y + 0.5 * b * x * x + 1.5 * b * y * y) / 12.0;
    }
    disc.integrate(&integrand)
}
