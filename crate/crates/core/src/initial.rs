//! Balanced zonal jet on the doubly periodic plane with a depth perturbation
//! that triggers barotropic instability.
//!
//! A uniform return flow `ū = 2UL·tanh(Ly/2L)/Ly` makes the zonal velocity
//! integrate to zero over a period, so the geostrophic depth
//!
//! ```text
//! u(y) = U sech²(s) - ū,     s = (y - y0)/L
//! h(x, y) = H - (f0/g)[U L tanh(s) - ū (y - y0)] + ĥ cos(2πkx/Lx) exp(-s²)
//! ```
//!
//! is periodic in `y` on `[y0 - Ly/2, y0 + Ly/2)`.

use crate::error::{Result, SweError};
use crate::mesh::Space;
use crate::operators::{Discretisation, QuadratureVector};
use crate::timestepper::MixedState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JetIc {
    /// Peak jet speed (m/s).
    pub speed: f64,
    /// Jet half-width (m).
    pub half_width: f64,
    /// Jet axis; `None` places it mid-domain.
    pub centre: Option<f64>,
    /// Depth perturbation amplitude (m).
    pub amplitude: f64,
    /// Number of perturbation wavelengths across the domain.
    pub wavenumber: u32,
}

impl Default for JetIc {
    fn default() -> Self {
        Self {
            speed: 50.0,
            half_width: 150e3,
            centre: None,
            amplitude: 120.0,
            wavenumber: 2,
        }
    }
}

impl JetIc {
    pub fn validate(&self, f0: f64, g: f64, h_mean: f64) -> Result<()> {
        if !(self.half_width > 0.0) {
            return Err(SweError::Configuration(format!(
                "jet half-width must be > 0, got {}",
                self.half_width
            )));
        }
        let swing = (f0 * self.speed * self.half_width / g).abs();
        if !(h_mean - 2.0 * swing - self.amplitude.abs() > 0.0) {
            return Err(SweError::Configuration(format!(
                "jet depth anomaly {swing:.3e} m with perturbation {:.3e} m leaves non-positive depth for H = {h_mean}",
                self.amplitude
            )));
        }
        Ok(())
    }

    fn return_flow(&self, ly: f64) -> f64 {
        let l = self.half_width;
        2.0 * self.speed * l * (0.5 * ly / l).tanh() / ly
    }

    /// Offset `y - y0` wrapped into `[-Ly/2, Ly/2)`.
    fn offset(&self, y: f64, ly: f64) -> f64 {
        let y0 = self.centre.unwrap_or(0.5 * ly);
        (y - y0 + 0.5 * ly).rem_euclid(ly) - 0.5 * ly
    }

    /// Analytic velocity at a point.
    pub fn velocity(&self, y: f64, ly: f64) -> [f64; 2] {
        let s = self.offset(y, ly) / self.half_width;
        let sech = 1.0 / s.cosh();
        [self.speed * sech * sech - self.return_flow(ly), 0.0]
    }

    /// Analytic depth at a point.
    pub fn depth(&self, x: f64, y: f64, lx: f64, ly: f64, f0: f64, g: f64, h_mean: f64) -> f64 {
        let dy = self.offset(y, ly);
        let s = dy / self.half_width;
        let balanced = (f0 / g) * (self.speed * self.half_width * s.tanh() - self.return_flow(ly) * dy);
        let bump = self.amplitude
            * (2.0 * std::f64::consts::PI * self.wavenumber as f64 * x / lx).cos()
            * (-s * s).exp();
        h_mean - balanced + bump
    }
}

/// L2 projections of the jet into V1 and V2.
pub fn build_jet_ic(disc: &Discretisation, jet: &JetIc, f0: f64, g: f64, h_mean: f64) -> Result<MixedState> {
    jet.validate(f0, g, h_mean)?;
    let (lx, ly) = (disc.mesh.lx, disc.mesh.ly);
    let coords = disc.quadrature_coordinates();
    let mut uq = QuadratureVector {
        x: disc.zero_qfield(),
        y: disc.zero_qfield(),
    };
    let mut hq = disc.zero_qfield();
    for (i, &(x, y)) in coords.iter().enumerate() {
        let v = jet.velocity(y, ly);
        uq.x.values[i] = v[0];
        uq.y.values[i] = v[1];
        hq.values[i] = jet.depth(x, y, lx, ly, f0, g, h_mean);
    }
    let u = disc.mass_solve(Space::V1, &disc.integrate_v1(&uq));
    let h = disc.mass_solve(Space::V2, &disc.integrate_v2(&hq));
    crate::operators::check_depth(&disc.eval_v2(&h))
        .map_err(|e| SweError::Configuration(format!("initial depth: {e}")))?;
    Ok(MixedState::new(u, h, 0.0))
}
