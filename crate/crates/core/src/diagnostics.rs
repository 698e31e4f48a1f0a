//! Conserved functionals, enstrophy budget terms and kinetic energy spectra.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Result, SweError};
use crate::operators::{Discretisation, QuadratureField};
use crate::upwinding::Scheme;

/// Per-step scalar diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub mass: f64,
    pub vorticity: f64,
    pub newton_iters: usize,
    pub residual_u: f64,
    pub residual_h: f64,
    pub scheme: Scheme,
}

impl DiagnosticsRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.energy,
            self.enstrophy,
            self.mass,
            self.vorticity,
            self.residual_u,
            self.residual_h,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Ring-binned kinetic energy: `energy[k]` holds wavenumber ring `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRecord {
    pub k: Vec<f64>,
    pub energy: Vec<f64>,
    /// Kinetic energy of the sampled grid field.
    pub grid_energy: f64,
}

impl SpectrumRecord {
    pub fn total(&self) -> f64 {
        self.energy.iter().sum()
    }

    /// Least-squares slope of `log E` against `log k` over `k_lo..=k_hi`,
    /// skipping empty bins.
    pub fn loglog_slope(&self, k_lo: usize, k_hi: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> = (k_lo..=k_hi.min(self.energy.len().saturating_sub(1)))
            .filter(|&k| k > 0 && self.energy[k] > 0.0)
            .map(|k| ((k as f64).ln(), self.energy[k].ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

/// `∫ ½ h u·u + ½ g h²`.
pub fn energy(disc: &Discretisation, u: &[f64], h: &[f64], g: f64) -> f64 {
    let uq = disc.eval_v1(u);
    let hq = disc.eval_v2(h);
    let mut dens = disc.zero_qfield();
    for (i, d) in dens.values.iter_mut().enumerate() {
        let (ux, uy, hh) = (uq.x.values[i], uq.y.values[i], hq.values[i]);
        *d = 0.5 * hh * (ux * ux + uy * uy) + 0.5 * g * hh * hh;
    }
    disc.integrate(&dens)
}

/// `∫ h q²/2` with PV given at quadrature points.
pub fn enstrophy_from_values(disc: &Discretisation, h: &[f64], q: &QuadratureField) -> f64 {
    let mut hq = disc.eval_v2(h);
    for (d, qv) in hq.values.iter_mut().zip(&q.values) {
        *d *= 0.5 * qv * qv;
    }
    disc.integrate(&hq)
}

/// `∫ h q²/2` for V0 coefficients `q`.
pub fn enstrophy(disc: &Discretisation, h: &[f64], q: &[f64]) -> f64 {
    enstrophy_from_values(disc, h, &disc.eval_v0(q))
}

/// `¼ ∫ (hⁿ + hⁿ⁺¹) q̄²`, the enstrophy of PV constant over the step.
pub fn constant_in_time_enstrophy(disc: &Discretisation, hn: &[f64], hk: &[f64], qbar: &[f64]) -> f64 {
    let hs: Vec<f64> = hn.iter().zip(hk).map(|(a, b)| 0.5 * (a + b)).collect();
    enstrophy(disc, &hs, qbar)
}

/// `⟨1, h⟩`.
pub fn mass(h: &[f64]) -> f64 {
    // Every V2 basis function integrates to one.
    h.iter().sum()
}

/// `⟨1, h q⟩ - ⟨1, f⟩` with PV at quadrature points.
pub fn total_vorticity_from_values(disc: &Discretisation, h: &[f64], q: &QuadratureField, f: &[f64]) -> f64 {
    let mut hq = disc.eval_v2(h);
    for (d, qv) in hq.values.iter_mut().zip(&q.values) {
        *d *= qv;
    }
    disc.integrate(&hq) - disc.integrate(&disc.eval_v0(f))
}

/// `⟨1, h q⟩ - ⟨1, f⟩` for V0 coefficients `q`.
pub fn total_vorticity(disc: &Discretisation, q: &[f64], h: &[f64], f: &[f64]) -> f64 {
    total_vorticity_from_values(disc, h, &disc.eval_v0(q), f)
}

/// Semi-discrete enstrophy correction of a scheme, evaluated by quadrature.
#[derive(Debug, Clone, Copy)]
pub struct BudgetInputs<'a> {
    pub h: &'a [f64],
    pub u: &'a [f64],
    /// PV at the mid level and at both ends of the step.
    pub q: &'a [f64],
    pub qn: &'a [f64],
    pub qk: &'a [f64],
    /// Downwind correction `q' = q^d - q` at quadrature points at both
    /// levels, and `u·∇q'` at the mid level. Only read for
    /// [`Scheme::Downwind`].
    pub q_prime: Option<(&'a QuadratureField, &'a QuadratureField, &'a QuadratureField)>,
    pub dt: f64,
    pub tau: f64,
}

/// Enstrophy budget term of each scheme:
///
/// * APVM: `∫ τ h (u·∇q)²`
/// * SUPG: `∫ τ h (∂q/∂t + u·∇q)(u·∇q)`
/// * downwind: `∫ h q (∂q'/∂t + u·∇q')`, with `u·∇q'` supplied by the caller
///   at quadrature points.
pub fn enstrophy_budget_terms(disc: &Discretisation, scheme: Scheme, inp: &BudgetInputs<'_>) -> Result<f64> {
    let hq = disc.eval_v2(inp.h);
    let uq = disc.eval_v1(inp.u);
    let gq = disc.eval_v0_grad(inp.q);
    let adv: Vec<f64> = (0..hq.values.len())
        .map(|i| uq.x.values[i] * gq.x.values[i] + uq.y.values[i] * gq.y.values[i])
        .collect();
    let mut dens = disc.zero_qfield();
    match scheme {
        Scheme::None => {}
        Scheme::Apvm => {
            for (i, d) in dens.values.iter_mut().enumerate() {
                *d = inp.tau * hq.values[i] * adv[i] * adv[i];
            }
        }
        Scheme::Supg => {
            let dq: Vec<f64> = inp.qk.iter().zip(inp.qn).map(|(a, b)| (a - b) / inp.dt).collect();
            let dqq = disc.eval_v0(&dq);
            for (i, d) in dens.values.iter_mut().enumerate() {
                *d = inp.tau * hq.values[i] * (dqq.values[i] + adv[i]) * adv[i];
            }
        }
        Scheme::Downwind => {
            let (pn, pk, pmid_adv) = inp.q_prime.ok_or_else(|| {
                SweError::Configuration("downwind budget requires the q' fields".into())
            })?;
            let qv = disc.eval_v0(inp.q);
            for (i, d) in dens.values.iter_mut().enumerate() {
                let dt_term = (pk.values[i] - pn.values[i]) / inp.dt;
                *d = hq.values[i] * qv.values[i] * (dt_term + pmid_adv.values[i]);
            }
        }
    }
    Ok(disc.integrate(&dens))
}

/// Samples `u` on a uniform `n × n` grid (cell corners), returning the two
/// physical components in row-major order (`y` slowest).
pub fn sample_velocity(disc: &Discretisation, u: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mesh = &disc.mesh;
    let p = disc.p();
    let nodal = &disc.reference.nodal;
    let edge = &disc.reference.edge;
    let n1 = disc.local_dim(crate::mesh::Space::V1);
    let nx1 = p * (p + 1);
    let (sx, sy) = (2.0 / mesh.dy(), 2.0 / mesh.dx());
    let mut ux = vec![0.0; n * n];
    let mut uy = vec![0.0; n * n];
    let mut lx = vec![0.0; p + 1];
    let mut ly = vec![0.0; p + 1];
    let mut ex = vec![0.0; p];
    let mut ey = vec![0.0; p];
    for j in 0..n {
        for i in 0..n {
            let x = (i as f64 + 0.5) * mesh.lx / n as f64;
            let y = (j as f64 + 0.5) * mesh.ly / n as f64;
            let (e, xi, eta) = mesh.locate(x, y);
            nodal.eval_into(xi, &mut lx);
            nodal.eval_into(eta, &mut ly);
            edge.eval_into(xi, &mut ex);
            edge.eval_into(eta, &mut ey);
            let m = &disc.dofs.v1[e];
            debug_assert_eq!(m.len(), n1);
            let (mut vx, mut vy) = (0.0, 0.0);
            for b in 0..p {
                for a in 0..=p {
                    vx += u[m[b * (p + 1) + a]] * lx[a] * ey[b];
                }
            }
            for b in 0..=p {
                for a in 0..p {
                    vy += u[m[nx1 + b * p + a]] * ex[a] * ly[b];
                }
            }
            ux[j * n + i] = sx * vx;
            uy[j * n + i] = sy * vy;
        }
    }
    (ux, uy)
}

/// Ring-binned kinetic energy spectrum from sampled velocity components.
pub fn spectrum_from_samples(ux: &[f64], uy: &[f64], n: usize, lx: f64, ly: f64) -> SpectrumRecord {
    let area = lx * ly;
    let nn = (n * n) as f64;
    let grid_energy = area / nn * ux.iter().zip(uy).map(|(a, b)| 0.5 * (a * a + b * b)).sum::<f64>();
    let fx = fft2(ux, n);
    let fy = fft2(uy, n);
    let n_bins = (std::f64::consts::SQRT_2 * (n / 2) as f64).round() as usize + 1;
    let mut energy = vec![0.0; n_bins];
    let norm = area / (nn * nn);
    for j in 0..n {
        let ky = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        for i in 0..n {
            let kx = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            let bin = (kx * kx + ky * ky).sqrt().round() as usize;
            let idx = j * n + i;
            energy[bin] += 0.5 * (fx[idx].norm_sqr() + fy[idx].norm_sqr()) * norm;
        }
    }
    SpectrumRecord {
        k: (0..n_bins).map(|k| k as f64).collect(),
        energy,
        grid_energy,
    }
}

/// Kinetic energy spectrum of `u` sampled on a `sample_n × sample_n` grid.
pub fn ke_spectrum(disc: &Discretisation, u: &[f64], sample_n: usize) -> Result<SpectrumRecord> {
    let need = 2 * disc.mesh.nx.max(disc.mesh.ny) * disc.p();
    if !sample_n.is_power_of_two() || sample_n < need {
        return Err(SweError::InvalidArgument(format!(
            "spectrum sample size must be a power of two >= {need}, got {sample_n}"
        )));
    }
    let (ux, uy) = sample_velocity(disc, u, sample_n);
    Ok(spectrum_from_samples(&ux, &uy, sample_n, disc.mesh.lx, disc.mesh.ly))
}

fn fft2(data: &[f64], n: usize) -> Vec<Complex<f64>> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = data.iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in buf.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for i in 0..n {
        for j in 0..n {
            col[j] = buf[j * n + i];
        }
        fft.process(&mut col);
        for j in 0..n {
            buf[j * n + i] = col[j];
        }
    }
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_spectrum() {
        let n = 32;
        let (lx, ly) = (4.0, 2.0);
        let a = 3.0;
        let mut ux = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let x = (i as f64 + 0.5) * lx / n as f64;
                ux[j * n + i] = a * (2.0 * std::f64::consts::PI * x / lx).cos();
            }
        }
        let uy = vec![0.0; n * n];
        let s = spectrum_from_samples(&ux, &uy, n, lx, ly);
        assert!((s.energy[1] - a * a / 4.0 * lx * ly).abs() < 1e-12);
        let rest: f64 = s.energy.iter().enumerate().filter(|(k, _)| *k != 1).map(|(_, e)| e).sum();
        assert!(rest < 1e-20);
        assert!((s.total() - s.grid_energy).abs() <= 1e-12 * s.grid_energy);
    }

    #[test]
    fn slope_of_power_law() {
        let energy: Vec<f64> = (0..20).map(|k| if k == 0 { 0.0 } else { (k as f64).powf(-3.0) }).collect();
        let s = SpectrumRecord {
            k: (0..20).map(|k| k as f64).collect(),
            energy,
            grid_energy: 0.0,
        };
        assert!((s.loglog_slope(2, 15).unwrap() + 3.0).abs() < 1e-12);
    }
}
