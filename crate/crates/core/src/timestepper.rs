//! Energy-conserving implicit time stepping: exact time-integrated
//! variational derivatives, residuals, and a Newton iteration with a
//! constant approximate Jacobian.

use std::collections::VecDeque;

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Result, SweError};
use crate::mesh::{FieldVec, Space};
use crate::operators::{Discretisation, QuadratureField, QuadratureVector, ShiftedBasis};
use crate::pv::{Level, PhysicsParams, PvMode, PvSolution, PvSolver};
use crate::sparse::SparseFactor;
use crate::upwinding::{self, PvInputs, Scheme, UpwindConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct MixedState {
    pub u: FieldVec,
    pub h: FieldVec,
    pub t: f64,
}

impl MixedState {
    pub fn new(u: Vec<f64>, h: Vec<f64>, t: f64) -> Self {
        Self {
            u: FieldVec::new(Space::V1, u),
            h: FieldVec::new(Space::V2, h),
            t,
        }
    }

    pub fn level(&self) -> Level<'_> {
        Level { u: &self.u, h: &self.h }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.h.is_finite() && self.t.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IterationMode {
    /// Iterate until the stacked residual norm drops below `tol` relative to
    /// the first residual of the first step.
    Converge { tol: f64 },
    /// Exactly this many residual evaluations and updates.
    Fixed { iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub mode: IterationMode,
    pub pv_mode: PvMode,
    pub upwind: UpwindConfig,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: IterationMode::Converge { tol: 1e-14 },
            pv_mode: PvMode::Midpoint,
            upwind: UpwindConfig::none(),
            max_iterations: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            IterationMode::Converge { tol } if !(tol > 0.0) => {
                return Err(SweError::Configuration(format!("tolerance must be > 0, got {tol}")))
            }
            IterationMode::Fixed { iterations: 0 } => {
                return Err(SweError::Configuration("fixed iteration count must be >= 1".into()))
            }
            _ => {}
        }
        if self.max_iterations == 0 {
            return Err(SweError::Configuration("max_iterations must be >= 1".into()));
        }
        self.upwind.validate()
    }
}

/// The approximate Jacobian `[[M1 + ½Δt C(·,f), -½Δt g Dᵀ], [½Δt H D, M2]]`.
///
/// With `D = M2·DIV` the depth block eliminates exactly, leaving the
/// velocity system `(M1 + ½Δt C(·,f) + ¼Δt² g H DIVᵀ M2 DIV) δu = -r_u - ½Δt g DIVᵀ r_h`
/// followed by `δh = -M2⁻¹ r_h - ½Δt H DIV δu`. Only that system is factorised.
#[derive(Debug, Clone)]
pub struct ConstantJacobian {
    factor: SparseFactor,
    half_dt_g: f64,
    half_dt_h: f64,
}

impl ConstantJacobian {
    pub fn new(disc: &Discretisation, f: &[f64], phys: &PhysicsParams) -> Result<Self> {
        let dt = phys.dt;
        let c = disc.assemble_c(&disc.eval_v0(f));
        let div = &disc.ops.div;
        let grad_div = div.transpose().matmul(&disc.ops.m2).matmul(div);
        let s = disc
            .ops
            .m1
            .linear_combination(1.0, &c, 0.5 * dt)
            .linear_combination(1.0, &grad_div, 0.25 * dt * dt * phys.g * phys.h_mean);
        Ok(Self {
            factor: SparseFactor::lu(&s)?,
            half_dt_g: 0.5 * dt * phys.g,
            half_dt_h: 0.5 * dt * phys.h_mean,
        })
    }

    /// Returns `(δu, δh)` with `J [δu; δh] = -[r_u; r_h]`.
    pub fn solve(&self, disc: &Discretisation, r_u: &[f64], r_h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let gr = disc.ops.div.tmatvec(r_h);
        let mut du: Vec<f64> = r_u.iter().zip(&gr).map(|(a, b)| -a - self.half_dt_g * b).collect();
        self.factor.solve_in_place(&mut du);
        let mut dh = disc.mass_solve(Space::V2, r_h);
        let dd = disc.ops.div.matvec(&du);
        for (h, d) in dh.iter_mut().zip(&dd) {
            *h = -*h - self.half_dt_h * d;
        }
        (du, dh)
    }
}

/// Velocity and depth of one time level at quadrature points.
#[derive(Debug, Clone)]
pub struct LevelValues {
    pub u: QuadratureVector,
    pub h: QuadratureField,
}

impl LevelValues {
    pub fn new(disc: &Discretisation, u: &[f64], h: &[f64]) -> Self {
        Self {
            u: disc.eval_v1(u),
            h: disc.eval_v2(h),
        }
    }
}

fn flux_pairing_values(disc: &Discretisation, n: &LevelValues, k: &LevelValues) -> Vec<f64> {
    let mut s = k.u.clone();
    for i in 0..s.x.values.len() {
        let (bn, bk) = (n.h.values[i], k.h.values[i]);
        let wk = (2.0 * bk + bn) / 6.0;
        let wn = (bk + 2.0 * bn) / 6.0;
        s.x.values[i] = k.u.x.values[i] * wk + n.u.x.values[i] * wn;
        s.y.values[i] = k.u.y.values[i] * wk + n.u.y.values[i] * wn;
    }
    disc.integrate_v1(&s)
}

fn bernoulli_pairing_values(
    disc: &Discretisation,
    n: &LevelValues,
    k: &LevelValues,
    hn: &[f64],
    hk: &[f64],
    g: f64,
) -> Vec<f64> {
    let mut s = disc.zero_qfield();
    for (i, v) in s.values.iter_mut().enumerate() {
        let (kx, ky) = (k.u.x.values[i], k.u.y.values[i]);
        let (nx, ny) = (n.u.x.values[i], n.u.y.values[i]);
        *v = (kx * kx + ky * ky + kx * nx + ky * ny + nx * nx + ny * ny) / 6.0;
    }
    let mut rhs = disc.integrate_v2(&s);
    // ⟨φ, h⟩ = M2 h exactly for h in V2.
    let hs: Vec<f64> = hn.iter().zip(hk).map(|(a, b)| a + b).collect();
    let mh = disc.ops.m2.matvec(&hs);
    for (r, m) in rhs.iter_mut().zip(&mh) {
        *r += 0.5 * g * m;
    }
    rhs
}

/// `(1/6)⟨v, uᵏ(2hᵏ + hⁿ) + uⁿ(hᵏ + 2hⁿ)⟩`.
pub fn flux_pairing(disc: &Discretisation, un: &[f64], uk: &[f64], hn: &[f64], hk: &[f64]) -> Vec<f64> {
    flux_pairing_values(disc, &LevelValues::new(disc, un, hn), &LevelValues::new(disc, uk, hk))
}

/// `(1/6)⟨φ, uᵏ·uᵏ + uᵏ·uⁿ + uⁿ·uⁿ⟩ + (g/2)⟨φ, hᵏ + hⁿ⟩`.
pub fn bernoulli_pairing(disc: &Discretisation, un: &[f64], uk: &[f64], hn: &[f64], hk: &[f64], g: f64) -> Vec<f64> {
    let (n, k) = (LevelValues::new(disc, un, hn), LevelValues::new(disc, uk, hk));
    bernoulli_pairing_values(disc, &n, &k, hn, hk, g)
}

/// Time-integrated mass flux `F̄`.
pub fn time_integrated_flux(disc: &Discretisation, un: &[f64], uk: &[f64], hn: &[f64], hk: &[f64]) -> Vec<f64> {
    disc.mass_solve(Space::V1, &flux_pairing(disc, un, uk, hn, hk))
}

/// Time-integrated Bernoulli potential `P̄`.
pub fn time_integrated_bernoulli(
    disc: &Discretisation,
    un: &[f64],
    uk: &[f64],
    hn: &[f64],
    hk: &[f64],
    g: f64,
) -> Vec<f64> {
    disc.mass_solve(Space::V2, &bernoulli_pairing(disc, un, uk, hn, hk, g))
}

/// Residual vectors of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub u: Vec<f64>,
    pub h: Vec<f64>,
}

/// Momentum and continuity residuals
/// `M1(uᵏ-uⁿ) + Δt C(F̄, q*) - Δt Dᵀ P̄` and `M2(hᵏ-hⁿ) + Δt D F̄`.
///
/// The weak divergence is applied as `M2·DIV`, so `Dᵀ P̄ = DIVᵀ (M2 P̄)`.
pub fn residuals(
    disc: &Discretisation,
    n: &MixedState,
    k: &MixedState,
    fbar: &[f64],
    pbar: &[f64],
    qstar: &QuadratureField,
    dt: f64,
) -> Residuals {
    let bern = disc.ops.m2.matvec(pbar);
    let cf = disc.apply_c(qstar, fbar);
    let du: Vec<f64> = k.u.iter().zip(n.u.iter()).map(|(a, b)| a - b).collect();
    let dh: Vec<f64> = k.h.iter().zip(n.h.iter()).map(|(a, b)| a - b).collect();
    assemble_residuals(disc, &disc.ops.m1.matvec(&du), &dh, fbar, &bern, &cf, dt)
}

fn assemble_residuals(
    disc: &Discretisation,
    m1_du: &[f64],
    dh: &[f64],
    fbar: &[f64],
    bern: &[f64],
    cf: &[f64],
    dt: f64,
) -> Residuals {
    let grad = disc.ops.div.tmatvec(bern);
    let ru = (0..m1_du.len()).map(|i| m1_du[i] + dt * cf[i] - dt * grad[i]).collect();
    let divf = disc.ops.div.matvec(fbar);
    let dh: Vec<f64> = (0..divf.len()).map(|i| dh[i] + dt * divf[i]).collect();
    Residuals {
        u: ru,
        h: disc.ops.m2.matvec(&dh),
    }
}

/// What happened during one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    pub residual_u: f64,
    pub residual_h: f64,
}

/// Quantities produced by evaluating one iterate.
struct Evaluation {
    res: Residuals,
    /// Rounding scale of the summed residual terms.
    scale_u: f64,
    scale_h: f64,
}

/// Level-n data that stay fixed over a step.
struct StepCache {
    values: LevelValues,
    m1_u: Vec<f64>,
    m2_h: Vec<f64>,
    /// Level-n PV, valid while the trial basis is unshifted.
    qn: Option<Vec<f64>>,
}

/// Anderson mixing of the preconditioned update `x ↦ x + J⁻¹(-r(x))`.
///
/// The constant Jacobian leaves a few slowly contracting modes; mixing the
/// last `depth` updates removes them without touching the converged state.
struct Anderson {
    depth: usize,
    /// Per-entry weights of the least-squares norm.
    weights: Vec<f64>,
    last: Option<(Vec<f64>, Vec<f64>)>,
    dx: VecDeque<Vec<f64>>,
    df: VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize, weights: Vec<f64>) -> Self {
        Self {
            depth,
            weights,
            last: None,
            dx: VecDeque::new(),
            df: VecDeque::new(),
        }
    }

    /// Next iterate from the current one and its update.
    fn next(&mut self, x: &[f64], f: &[f64]) -> Vec<f64> {
        if let Some((xp, fp)) = self.last.take() {
            self.dx.push_back(x.iter().zip(&xp).map(|(a, b)| a - b).collect());
            self.df.push_back(f.iter().zip(&fp).map(|(a, b)| a - b).collect());
            if self.dx.len() > self.depth {
                self.dx.pop_front();
                self.df.pop_front();
            }
        }
        self.last = Some((x.to_vec(), f.to_vec()));
        let mut out: Vec<f64> = x.iter().zip(f).map(|(a, b)| a + b).collect();
        let m = self.df.len();
        if m == 0 {
            return out;
        }
        let w = &self.weights;
        let a = Mat::from_fn(x.len(), m, |i, j| w[i] * self.df[j][i]);
        let b = Mat::from_fn(x.len(), 1, |i, _| w[i] * f[i]);
        let gamma = a.col_piv_qr().solve_lstsq(&b);
        for j in 0..m {
            let g = gamma[(j, 0)];
            if !g.is_finite() {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o -= g * (self.dx[j][i] + self.df[j][i]);
            }
        }
        out
    }
}

/// Number of past updates mixed by the converge mode.
const MIXING_DEPTH: usize = 5;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Iterates below this multiple of the rounding scale are treated as exact.
const ROUNDOFF_FACTOR: f64 = 256.0 * f64::EPSILON;
/// Relative residual at which stagnation is accepted as convergence.
const STAGNATION_TOL: f64 = 1e-10;

/// Time integrator for one discretisation and configuration.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    pub disc: &'a Discretisation,
    pub phys: PhysicsParams,
    pub cfg: SolverConfig,
    pv: PvSolver,
    jacobian: ConstantJacobian,
    /// Stacked residual norm of the first iterate of the first step, the
    /// reference of the stopping rule.
    reference: Option<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(disc: &'a Discretisation, phys: PhysicsParams, cfg: SolverConfig) -> Result<Self> {
        phys.validate()?;
        cfg.validate()?;
        let pv = PvSolver::f_plane(disc, phys.f0);
        let jacobian = ConstantJacobian::new(disc, pv.coriolis(), &phys)?;
        Ok(Self {
            disc,
            phys,
            cfg,
            pv,
            jacobian,
            reference: None,
        })
    }

    pub fn coriolis(&self) -> &[f64] {
        self.pv.coriolis()
    }

    pub fn pv_solver(&mut self) -> &mut PvSolver {
        &mut self.pv
    }

    pub fn jacobian(&self) -> &ConstantJacobian {
        &self.jacobian
    }

    /// Residual norms the stopping rule is measured against, once set.
    pub fn reference_residual(&self) -> Option<f64> {
        self.reference
    }

    /// Forgets the reference residual so the next step sets it afresh.
    pub fn reset_reference(&mut self) {
        self.reference = None;
    }

    fn tau_at(&self, uq: &QuadratureVector) -> QuadratureField {
        if self.cfg.upwind.scheme == Scheme::None {
            self.disc.zero_qfield()
        } else {
            upwinding::tau_field(self.disc, self.cfg.upwind.tau_policy, uq, self.phys.dt)
        }
    }

    /// Downwinded trial tables for a velocity at quadrature points, if the
    /// scheme needs them.
    fn shift_for(&self, uq: &QuadratureVector) -> Option<ShiftedBasis> {
        (self.cfg.upwind.scheme == Scheme::Downwind).then(|| {
            let tau = self.tau_at(uq);
            upwinding::downwind_basis(self.disc, uq, &tau, self.cfg.upwind.clamp_limit)
        })
    }

    /// PV entering the rotational term for the pair `(n, k)`. `cached_qn`
    /// carries the level-n PV across iterations while it cannot change.
    pub fn pv_for_assembly(
        &mut self,
        n: &MixedState,
        k: &MixedState,
        cached_qn: &mut Option<Vec<f64>>,
    ) -> Result<(QuadratureField, PvSolution)> {
        let (un, uk) = (self.disc.eval_v1(&n.u), self.disc.eval_v1(&k.u));
        self.pv_for_assembly_at(n, k, &un, &uk, cached_qn)
    }

    fn pv_for_assembly_at(
        &mut self,
        n: &MixedState,
        k: &MixedState,
        un_q: &QuadratureVector,
        uk_q: &QuadratureVector,
        cached_qn: &mut Option<Vec<f64>>,
    ) -> Result<(QuadratureField, PvSolution)> {
        let disc = self.disc;
        let mut uq = uk_q.clone();
        for (a, b) in uq.x.values.iter_mut().zip(&un_q.x.values) {
            *a = 0.5 * (*a + b);
        }
        for (a, b) in uq.y.values.iter_mut().zip(&un_q.y.values) {
            *a = 0.5 * (*a + b);
        }
        let scheme = self.cfg.upwind.scheme;
        let tau = self.tau_at(&uq);
        let shifted = (scheme == Scheme::Downwind)
            .then(|| upwinding::downwind_basis(disc, &uq, &tau, self.cfg.upwind.clamp_limit));
        let needs_qn = self.cfg.pv_mode == PvMode::Midpoint
            || (scheme == Scheme::Supg && matches!(self.cfg.pv_mode, PvMode::Instantaneous | PvMode::ExactConstant));
        if needs_qn && (cached_qn.is_none() || shifted.is_some()) {
            *cached_qn = Some(self.pv.diagnose(disc, n.level(), shifted.as_ref())?);
        }
        let sol = self.pv.diagnose_mode(
            disc,
            self.cfg.pv_mode,
            n.level(),
            k.level(),
            shifted.as_ref(),
            cached_qn.as_deref(),
        )?;
        let extra_qk;
        let endpoints = match (&sol.endpoints, scheme) {
            (Some((a, b)), _) => Some((a.as_slice(), b.as_slice())),
            (None, Scheme::Supg) => {
                extra_qk = self.pv.diagnose(disc, k.level(), shifted.as_ref())?;
                Some((cached_qn.as_deref().expect("level-n PV cached"), extra_qk.as_slice()))
            }
            (None, _) => None,
        };
        let qstar = upwinding::pv_field_for_assembly(
            disc,
            scheme,
            &PvInputs {
                qbar: &sol.qbar,
                endpoints,
                u: &uq,
                tau: &tau,
                shifted: shifted.as_ref(),
                dt: self.phys.dt,
            },
        )?;
        Ok((qstar, sol))
    }

    fn step_cache(&self, n: &MixedState) -> StepCache {
        StepCache {
            values: LevelValues::new(self.disc, &n.u, &n.h),
            m1_u: self.disc.ops.m1.matvec(&n.u),
            m2_h: self.disc.ops.m2.matvec(&n.h),
            qn: None,
        }
    }

    fn evaluate(&mut self, n: &MixedState, k: &MixedState, cache: &mut StepCache) -> Result<Evaluation> {
        let disc = self.disc;
        let dt = self.phys.dt;
        let kv = LevelValues::new(disc, &k.u, &k.h);
        let (qstar, _) = self.pv_for_assembly_at(n, k, &cache.values.u, &kv.u, &mut cache.qn)?;
        let fbar = disc.mass_solve(Space::V1, &flux_pairing_values(disc, &cache.values, &kv));
        let bern = bernoulli_pairing_values(disc, &cache.values, &kv, &n.h, &k.h, self.phys.g);
        let cf = disc.apply_c(&qstar, &fbar);
        let m1_uk = disc.ops.m1.matvec(&k.u);
        let m1_du: Vec<f64> = m1_uk.iter().zip(&cache.m1_u).map(|(a, b)| a - b).collect();
        let dh: Vec<f64> = k.h.iter().zip(n.h.iter()).map(|(a, b)| a - b).collect();
        let res = assemble_residuals(disc, &m1_du, &dh, &fbar, &bern, &cf, dt);
        let grad = disc.ops.div.tmatvec(&bern);
        // Rounding bound of the cancelling gradient sum.
        let cancel = norm2(&disc.ops.div.abs_tmatvec(&bern)) / 32.0;
        let scale_u = norm2(&m1_uk) + norm2(&cache.m1_u) + dt * (norm2(&cf) + norm2(&grad) + cancel);
        let m2_hk = disc.ops.m2.matvec(&k.h);
        let divf = disc.ops.m2.matvec(&disc.ops.div.matvec(&fbar));
        let scale_h = norm2(&m2_hk) + norm2(&cache.m2_h) + dt * norm2(&divf);
        Ok(Evaluation { res, scale_u, scale_h })
    }

    /// `(‖r_u‖, ‖r_h‖)` in the `M⁻¹`-weighted Euclidean norms.
    pub fn residual_norms(&self, r: &Residuals) -> (f64, f64) {
        let wu = self.disc.mass_solve(Space::V1, &r.u);
        let wh = self.disc.mass_solve(Space::V2, &r.h);
        let nu: f64 = r.u.iter().zip(&wu).map(|(a, b)| a * b).sum();
        let nh: f64 = r.h.iter().zip(&wh).map(|(a, b)| a * b).sum();
        (nu.max(0.0).sqrt(), nh.max(0.0).sqrt())
    }

    /// Residuals of the pair `(n, k)` as the iteration sees them.
    pub fn residuals_of(&mut self, n: &MixedState, k: &MixedState) -> Result<Residuals> {
        let mut cache = self.step_cache(n);
        Ok(self.evaluate(n, k, &mut cache)?.res)
    }

    /// Advances one step from `n`.
    ///
    /// In converge mode the iteration count includes the evaluation that met
    /// the stopping rule, so an exact initial guess counts as one iteration.
    /// In fixed mode every iteration applies an update and the report holds
    /// the residual of the last iterate before its update.
    pub fn step(&mut self, n: &MixedState) -> Result<(MixedState, StepReport)> {
        let mut k = n.clone();
        k.t = n.t + self.phys.dt;
        let mut cache = self.step_cache(n);
        let mut prev = f64::INFINITY;
        let limit = match self.cfg.mode {
            IterationMode::Fixed { iterations } => iterations,
            IterationMode::Converge { .. } => self.cfg.max_iterations,
        };
        let mut mixer = match self.cfg.mode {
            IterationMode::Converge { .. } => {
                // Energy-norm weights: depth scaled by sqrt(g/H) against velocity.
                let wh = (self.phys.g / self.phys.h_mean).sqrt();
                let weights = std::iter::repeat(1.0).take(n.u.len()).chain(std::iter::repeat(wh).take(n.h.len())).collect();
                Some(Anderson::new(MIXING_DEPTH, weights))
            }
            IterationMode::Fixed { .. } => None,
        };
        let mut last = (0.0, 0.0);
        let mut first = None;
        for it in 1..=limit {
            let ev = self.evaluate(n, &k, &mut cache)?;
            let (ru, rh) = self.residual_norms(&ev.res);
            last = (ru, rh);
            let total = ru.hypot(rh);
            let r0 = *self.reference.get_or_insert(total);
            let step_r0 = *first.get_or_insert(total);
            if let IterationMode::Converge { tol } = self.cfg.mode {
                let relative = if r0 > 0.0 { total / r0 } else { total };
                let e_u = norm2(&ev.res.u);
                let e_h = norm2(&ev.res.h);
                let at_floor = e_u <= ROUNDOFF_FACTOR * ev.scale_u && e_h <= ROUNDOFF_FACTOR * ev.scale_h;
                let stalled = relative <= STAGNATION_TOL && total >= prev;
                if relative <= tol || at_floor || stalled {
                    return Ok((k, StepReport { iterations: it, residual_u: ru, residual_h: rh }));
                }
                if !total.is_finite() || total > 10.0 * step_r0 {
                    return Err(SweError::NonConvergence {
                        iterations: it,
                        residual_u: ru,
                        residual_h: rh,
                        reason: "residual grew tenfold".into(),
                    });
                }
                prev = total;
            }
            let (du, dh) = self.jacobian.solve(self.disc, &ev.res.u, &ev.res.h);
            match mixer.as_mut() {
                Some(mix) => {
                    let x: Vec<f64> = k.u.iter().chain(k.h.iter()).copied().collect();
                    let f: Vec<f64> = du.into_iter().chain(dh).collect();
                    let next = mix.next(&x, &f);
                    let nu = k.u.len();
                    k.u.copy_from_slice(&next[..nu]);
                    k.h.copy_from_slice(&next[nu..]);
                }
                None => {
                    for (a, d) in k.u.iter_mut().zip(&du) {
                        *a += d;
                    }
                    for (a, d) in k.h.iter_mut().zip(&dh) {
                        *a += d;
                    }
                }
            }
        }
        match self.cfg.mode {
            IterationMode::Fixed { iterations } => Ok((
                k,
                StepReport {
                    iterations,
                    residual_u: last.0,
                    residual_h: last.1,
                },
            )),
            IterationMode::Converge { .. } => Err(SweError::NonConvergence {
                iterations: limit,
                residual_u: last.0,
                residual_h: last.1,
                reason: "iteration limit reached".into(),
            }),
        }
    }

    /// PV of a single state at quadrature points, downwinded along the
    /// state's own velocity when the scheme calls for it.
    pub fn state_pv_values(&mut self, s: &MixedState) -> Result<QuadratureField> {
        let shifted = self.shift_for(&self.disc.eval_v1(&s.u));
        let q = self.pv.diagnose(self.disc, s.level(), shifted.as_ref())?;
        Ok(match &shifted {
            Some(b) => self.disc.eval_v0_shifted(&q, b),
            None => self.disc.eval_v0(&q),
        })
    }

    /// Enstrophy attached to the step `n → k` under the configured PV mode,
    /// given the PV values of `k`.
    fn step_enstrophy_with(&mut self, n: &MixedState, k: &MixedState, q_k: &QuadratureField) -> Result<f64> {
        let disc = self.disc;
        Ok(match self.cfg.pv_mode {
            PvMode::Instantaneous | PvMode::Midpoint => diagnostics::enstrophy_from_values(disc, &k.h, q_k),
            PvMode::ExactLinear => {
                let s = self.pv.diagnose_exact_linear(disc, n.level(), k.level(), None)?;
                let (qn, qk) = s.endpoints.expect("exact linear mode yields both levels");
                crate::pv::simpson_enstrophy(disc, &n.h, &k.h, &qn, &qk)
            }
            PvMode::ExactConstant => {
                let s = self.pv.diagnose_exact_constant(disc, n.level(), k.level(), None)?;
                diagnostics::constant_in_time_enstrophy(disc, &n.h, &k.h, &s.qbar)
            }
        })
    }

    /// Enstrophy attached to the step `n → k` under the configured PV mode.
    pub fn step_enstrophy(&mut self, n: &MixedState, k: &MixedState) -> Result<f64> {
        let q = self.state_pv_values(k)?;
        self.step_enstrophy_with(n, k, &q)
    }

    /// Diagnostics for the step that produced `k` from `n`.
    pub fn record(&mut self, step: usize, n: &MixedState, k: &MixedState, report: &StepReport) -> Result<DiagnosticsRecord> {
        let disc = self.disc;
        let q = self.state_pv_values(k)?;
        let f = self.pv.coriolis().to_vec();
        Ok(DiagnosticsRecord {
            step,
            t: k.t,
            energy: diagnostics::energy(disc, &k.u, &k.h, self.phys.g),
            enstrophy: self.step_enstrophy_with(n, k, &q)?,
            mass: diagnostics::mass(&k.h),
            vorticity: diagnostics::total_vorticity_from_values(disc, &k.h, &q, &f),
            newton_iters: report.iterations,
            residual_u: report.residual_u,
            residual_h: report.residual_h,
            scheme: self.cfg.upwind.scheme,
        })
    }

    /// Advances `n_steps`, passing one record per step (plus the initial
    /// one) and the state it describes to `sink`.
    pub fn run(
        &mut self,
        initial: MixedState,
        n_steps: usize,
        sink: &mut dyn FnMut(&DiagnosticsRecord, &MixedState) -> Result<()>,
    ) -> Result<MixedState> {
        let zero = StepReport {
            iterations: 0,
            residual_u: 0.0,
            residual_h: 0.0,
        };
        let rec = self.record(0, &initial, &initial, &zero)?;
        sink(&rec, &initial)?;
        let mut state = initial;
        for step in 1..=n_steps {
            let (next, report) = self.step(&state)?;
            if !next.is_finite() {
                return Err(SweError::NonConvergence {
                    iterations: report.iterations,
                    residual_u: report.residual_u,
                    residual_h: report.residual_h,
                    reason: format!("non-finite state at step {step}"),
                });
            }
            let rec = self.record(step, &state, &next, &report)?;
            sink(&rec, &next)?;
            state = next;
        }
        Ok(state)
    }
}
