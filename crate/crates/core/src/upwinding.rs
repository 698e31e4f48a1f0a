//! PV stabilisation: APVM, SUPG and downwinded trial functions.
//!
//! Each scheme produces the PV values at quadrature points that enter the
//! rotational form `C`. Since `C` is antisymmetric for any such values, none
//! of them affects energy conservation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SweError};
use crate::operators::{Discretisation, QuadratureField, QuadratureVector, ShiftedBasis};

/// PV values per element and quadrature point.
pub type QuadraturePvField = QuadratureField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    None,
    Apvm,
    Supg,
    Downwind,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::None, Scheme::Apvm, Scheme::Supg, Scheme::Downwind];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::Apvm => "apvm",
            Scheme::Supg => "supg",
            Scheme::Downwind => "downwind",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = SweError;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| SweError::Configuration(format!("unknown upwinding scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauPolicy {
    /// Fixed timescale in seconds.
    Constant(f64),
    /// `(2/Δt + |u|/(2√|J|))⁻¹`.
    VelocityScaled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpwindConfig {
    pub scheme: Scheme,
    pub tau_policy: TauPolicy,
    /// Largest reference displacement per axis for downwinding.
    pub clamp_limit: f64,
}

impl UpwindConfig {
    pub fn new(scheme: Scheme, tau_policy: TauPolicy) -> Self {
        Self {
            scheme,
            tau_policy,
            clamp_limit: 1.0,
        }
    }

    pub fn none() -> Self {
        Self::new(Scheme::None, TauPolicy::Constant(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if let TauPolicy::Constant(t) = self.tau_policy {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(SweError::Configuration(format!("tau must be >= 0, got {t}")));
            }
        }
        if !(self.clamp_limit > 0.0 && self.clamp_limit <= 1.0) {
            return Err(SweError::Configuration(format!(
                "clamp limit must lie in (0, 1], got {}",
                self.clamp_limit
            )));
        }
        Ok(())
    }
}

/// Upwinding timescale at a point with speed `speed`.
pub fn tau_value(policy: TauPolicy, speed: f64, jac_det: f64, dt: f64) -> f64 {
    match policy {
        TauPolicy::Constant(t) => t,
        TauPolicy::VelocityScaled => 1.0 / (2.0 / dt + speed / (2.0 * jac_det.sqrt())),
    }
}

/// τ at every quadrature point for the velocity `u`.
pub fn tau_field(disc: &Discretisation, policy: TauPolicy, u: &QuadratureVector, dt: f64) -> QuadratureField {
    let jd = disc.mesh.jac_det();
    let values = u
        .x
        .values
        .iter()
        .zip(&u.y.values)
        .map(|(x, y)| tau_value(policy, x.hypot(*y), jd, dt))
        .collect();
    QuadratureField {
        n_qp: u.x.n_qp,
        values,
    }
}

fn advective_derivative(disc: &Discretisation, q: &[f64], u: &QuadratureVector) -> QuadratureField {
    let g = disc.eval_v0_grad(q);
    let values = (0..g.x.values.len())
        .map(|i| u.x.values[i] * g.x.values[i] + u.y.values[i] * g.y.values[i])
        .collect();
    QuadratureField {
        n_qp: g.x.n_qp,
        values,
    }
}

/// `q - τ u·∇q` at quadrature points.
pub fn apvm_pv(disc: &Discretisation, q: &[f64], u: &QuadratureVector, tau: &QuadratureField) -> QuadraturePvField {
    let mut out = disc.eval_v0(q);
    let adv = advective_derivative(disc, q, u);
    for ((o, a), t) in out.values.iter_mut().zip(&adv.values).zip(&tau.values) {
        *o -= t * a;
    }
    out
}

/// `q̄ - τ((qᵏ - qⁿ)/Δt + u·∇q̄)` at quadrature points.
pub fn supg_pv(
    disc: &Discretisation,
    qbar: &[f64],
    qn: &[f64],
    qk: &[f64],
    u: &QuadratureVector,
    dt: f64,
    tau: &QuadratureField,
) -> QuadraturePvField {
    let mut out = disc.eval_v0(qbar);
    let adv = advective_derivative(disc, qbar, u);
    let dq: Vec<f64> = qk.iter().zip(qn).map(|(a, b)| (a - b) / dt).collect();
    let dqq = disc.eval_v0(&dq);
    for i in 0..out.values.len() {
        out.values[i] -= tau.values[i] * (dqq.values[i] + adv.values[i]);
    }
    out
}

fn clamp_axis(d: f64, xi: f64, limit: f64) -> f64 {
    if d > 0.0 {
        d.min(limit).min(xi + 1.0)
    } else if d < 0.0 {
        d.max(-limit.min(1.0 - xi))
    } else {
        0.0
    }
}

/// Reference displacement `τ û/|J|` for a point at reference coordinate `xi`,
/// clamped per axis so the displaced point `xi - δ` stays in the element and
/// `|δ| ≤ clamp_limit`.
pub fn downwind_shift(u_hat: [f64; 2], jac_det: f64, tau: f64, clamp_limit: f64, xi: [f64; 2]) -> [f64; 2] {
    let raw = [tau * u_hat[0] / jac_det, tau * u_hat[1] / jac_det];
    [
        clamp_axis(raw[0], xi[0], clamp_limit),
        clamp_axis(raw[1], xi[1], clamp_limit),
    ]
}

/// Displacements at every quadrature point, using the velocity evaluated at
/// the unshifted point.
pub fn downwind_shifts(
    disc: &Discretisation,
    u: &QuadratureVector,
    tau: &QuadratureField,
    clamp_limit: f64,
) -> Vec<[f64; 2]> {
    let (hx, hy) = (0.5 * disc.mesh.dx(), 0.5 * disc.mesh.dy());
    let jd = disc.mesh.jac_det();
    let n_qp = disc.n_qp();
    (0..u.x.values.len())
        .map(|k| {
            // Reference components of the Piola pullback.
            let u_hat = [hy * u.x.values[k], hx * u.y.values[k]];
            downwind_shift(u_hat, jd, tau.values[k], clamp_limit, disc.points[k % n_qp])
        })
        .collect()
}

/// Shifted trial-basis tables for the downwind scheme.
pub fn downwind_basis(disc: &Discretisation, u: &QuadratureVector, tau: &QuadratureField, clamp_limit: f64) -> ShiftedBasis {
    disc.shifted_basis(&downwind_shifts(disc, u, tau, clamp_limit))
}

/// `q^d` at quadrature points: the V0 coefficients contracted against the
/// downwinded trial basis.
pub fn downwind_pv_values(
    disc: &Discretisation,
    q: &[f64],
    u: &QuadratureVector,
    tau: &QuadratureField,
    clamp_limit: f64,
) -> QuadraturePvField {
    disc.eval_v0_shifted(q, &downwind_basis(disc, u, tau, clamp_limit))
}

/// Everything a scheme may need to build its PV field.
#[derive(Debug, Clone, Copy)]
pub struct PvInputs<'a> {
    pub qbar: &'a [f64],
    /// PV at time levels n and k.
    pub endpoints: Option<(&'a [f64], &'a [f64])>,
    /// Velocity at quadrature points used by the corrections.
    pub u: &'a QuadratureVector,
    pub tau: &'a QuadratureField,
    pub shifted: Option<&'a ShiftedBasis>,
    pub dt: f64,
}

/// The PV values injected into the rotational form for `scheme`.
pub fn pv_field_for_assembly(disc: &Discretisation, scheme: Scheme, inp: &PvInputs<'_>) -> Result<QuadraturePvField> {
    Ok(match scheme {
        Scheme::None => disc.eval_v0(inp.qbar),
        Scheme::Apvm => apvm_pv(disc, inp.qbar, inp.u, inp.tau),
        Scheme::Supg => {
            let (qn, qk) = inp
                .endpoints
                .ok_or_else(|| SweError::Configuration("SUPG requires PV at both time levels".into()))?;
            supg_pv(disc, inp.qbar, qn, qk, inp.u, inp.dt, inp.tau)
        }
        Scheme::Downwind => {
            let s = inp
                .shifted
                .ok_or_else(|| SweError::Configuration("downwinding requires shifted basis tables".into()))?;
            disc.eval_v0_shifted(inp.qbar, s)
        }
    })
}
