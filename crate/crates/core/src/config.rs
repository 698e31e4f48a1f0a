//! Run configuration: `key=value` lines with `#` comments.
//!
//! Every key is optional. Unknown keys, malformed values and constraint
//! violations are reported with the offending line and key.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Result, SweError};
use crate::initial::JetIc;
use crate::pv::{PhysicsParams, PvMode};
use crate::timestepper::{IterationMode, SolverConfig};
use crate::upwinding::{Scheme, TauPolicy, UpwindConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub p: usize,
    /// Quadrature points per axis; `None` means `p + 4`.
    pub n_q: Option<usize>,
}

impl MeshConfig {
    pub fn quadrature_points(&self) -> usize {
        self.n_q.unwrap_or(self.p + 4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    Converge,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub mode: SolverMode,
    pub tol: f64,
    pub k_max: usize,
    /// Iteration cap of converge mode.
    pub max_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauKind {
    Constant,
    VelocityScaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpwindSection {
    pub scheme: Scheme,
    pub tau_policy: TauKind,
    /// Constant timescale; `None` means `Δt/2`.
    pub tau: Option<f64>,
    pub clamp_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Steps between diagnostics rows.
    pub cadence: usize,
    /// Steps between velocity snapshots; 0 keeps only the final state.
    pub snapshot_cadence: usize,
    /// Spectrum sampling grid; `None` picks the smallest adequate power of two.
    pub spectrum_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub g: f64,
    pub f0: f64,
    pub h_mean: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub solver: SolverSection,
    pub pv_mode: PvMode,
    pub upwind: UpwindSection,
    pub jet: JetIc,
    /// Reserved for optional noise; unused by the analytic perturbation.
    pub seed: u64,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh: MeshConfig {
                nx: 16,
                ny: 16,
                lx: 2.0e6,
                ly: 2.0e6,
                p: 3,
                n_q: None,
            },
            g: 9.80616,
            f0: 1.0e-4,
            h_mean: 1.0e4,
            dt: 360.0,
            n_steps: 500,
            solver: SolverSection {
                mode: SolverMode::Converge,
                tol: 1e-14,
                k_max: 2,
                max_iterations: 50,
            },
            pv_mode: PvMode::Midpoint,
            upwind: UpwindSection {
                scheme: Scheme::Apvm,
                tau_policy: TauKind::Constant,
                tau: None,
                clamp_limit: 1.0,
            },
            jet: JetIc::default(),
            seed: 0,
            output: OutputSection {
                directory: PathBuf::from("out"),
                cadence: 1,
                snapshot_cadence: 0,
                spectrum_n: None,
            },
        }
    }
}

/// All recognised keys, in serialisation order.
pub const KEYS: &[&str] = &[
    "mesh.nx",
    "mesh.ny",
    "mesh.lx",
    "mesh.ly",
    "mesh.p",
    "mesh.n_q",
    "physics.g",
    "physics.f0",
    "physics.h",
    "time.dt",
    "time.n_steps",
    "solver.mode",
    "solver.tol",
    "solver.k_max",
    "solver.max_iterations",
    "pv_mode",
    "upwind.scheme",
    "upwind.tau_policy",
    "upwind.tau",
    "upwind.clamp_limit",
    "ic.speed",
    "ic.half_width",
    "ic.centre",
    "ic.amplitude",
    "ic.wavenumber",
    "ic.seed",
    "output.directory",
    "output.cadence",
    "output.snapshot_cadence",
    "output.spectrum_n",
];

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| SweError::Parse {
        line,
        key: key.to_string(),
        message: format!("cannot parse `{value}`: {e}"),
    })
}

impl RunConfig {
    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        let bad = |message: String| SweError::Parse {
            line,
            key: key.to_string(),
            message,
        };
        macro_rules! v {
            () => {
                parse_value(line, key, value)?
            };
        }
        match key {
            "mesh.nx" => self.mesh.nx = v!(),
            "mesh.ny" => self.mesh.ny = v!(),
            "mesh.lx" => self.mesh.lx = v!(),
            "mesh.ly" => self.mesh.ly = v!(),
            "mesh.p" => self.mesh.p = v!(),
            "mesh.n_q" => self.mesh.n_q = Some(v!()),
            "physics.g" => self.g = v!(),
            "physics.f0" => self.f0 = v!(),
            "physics.h" => self.h_mean = v!(),
            "time.dt" => self.dt = v!(),
            "time.n_steps" => self.n_steps = v!(),
            "solver.mode" => {
                self.solver.mode = match value {
                    "converge" => SolverMode::Converge,
                    "fixed" => SolverMode::Fixed,
                    _ => return Err(bad(format!("expected `converge` or `fixed`, got `{value}`"))),
                }
            }
            "solver.tol" => self.solver.tol = v!(),
            "solver.k_max" => self.solver.k_max = v!(),
            "solver.max_iterations" => self.solver.max_iterations = v!(),
            "pv_mode" => self.pv_mode = value.parse().map_err(|e: SweError| bad(e.to_string()))?,
            "upwind.scheme" => self.upwind.scheme = value.parse().map_err(|e: SweError| bad(e.to_string()))?,
            "upwind.tau_policy" => {
                self.upwind.tau_policy = match value {
                    "constant" => TauKind::Constant,
                    "velocity_scaled" => TauKind::VelocityScaled,
                    _ => {
                        return Err(bad(format!(
                            "expected `constant` or `velocity_scaled`, got `{value}`"
                        )))
                    }
                }
            }
            "upwind.tau" => self.upwind.tau = Some(v!()),
            "upwind.clamp_limit" => self.upwind.clamp_limit = v!(),
            "ic.speed" => self.jet.speed = v!(),
            "ic.half_width" => self.jet.half_width = v!(),
            "ic.centre" => self.jet.centre = Some(v!()),
            "ic.amplitude" => self.jet.amplitude = v!(),
            "ic.wavenumber" => self.jet.wavenumber = v!(),
            "ic.seed" => self.seed = v!(),
            "output.directory" => self.output.directory = PathBuf::from(value),
            "output.cadence" => self.output.cadence = v!(),
            "output.snapshot_cadence" => self.output.snapshot_cadence = v!(),
            "output.spectrum_n" => self.output.spectrum_n = Some(v!()),
            _ => return Err(bad("unknown key".into())),
        }
        Ok(())
    }

    /// Parses and validates a configuration.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut lines = std::collections::HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| SweError::Parse {
                line,
                key: content.to_string(),
                message: "expected `key=value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(prev) = lines.insert(key.to_string(), line) {
                return Err(SweError::Parse {
                    line,
                    key: key.to_string(),
                    message: format!("duplicate key, first set on line {prev}"),
                });
            }
            cfg.set(line, key, value)?;
        }
        cfg.validate_keys(&|key| lines.get(key).copied().unwrap_or(0))?;
        Ok(cfg)
    }

    /// Checks every constraint; errors carry the key and, through `line_of`,
    /// the line that set it (0 for defaults).
    fn validate_keys(&self, line_of: &dyn Fn(&str) -> usize) -> Result<()> {
        let check = |ok: bool, key: &str, message: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(SweError::Parse {
                    line: line_of(key),
                    key: key.to_string(),
                    message: message.to_string(),
                })
            }
        };
        let m = &self.mesh;
        check(m.nx >= 1, "mesh.nx", "nx must be >= 1")?;
        check(m.ny >= 1, "mesh.ny", "ny must be >= 1")?;
        check(m.lx > 0.0 && m.lx.is_finite(), "mesh.lx", "Lx must be > 0")?;
        check(m.ly > 0.0 && m.ly.is_finite(), "mesh.ly", "Ly must be > 0")?;
        check(m.p >= 1, "mesh.p", "p must be >= 1")?;
        check(m.p <= 5, "mesh.p", "p must be <= 5")?;
        check(
            m.quadrature_points() >= m.p + 2 && m.quadrature_points() <= 11,
            "mesh.n_q",
            "n_q must lie in [p + 2, 11]",
        )?;
        check(self.g > 0.0 && self.g.is_finite(), "physics.g", "g must be > 0")?;
        check(self.f0.is_finite(), "physics.f0", "f0 must be finite")?;
        check(self.h_mean > 0.0 && self.h_mean.is_finite(), "physics.h", "H must be > 0")?;
        check(self.dt > 0.0 && self.dt.is_finite(), "time.dt", "dt must be > 0")?;
        check(self.solver.tol > 0.0, "solver.tol", "tol must be > 0")?;
        check(self.solver.k_max >= 1, "solver.k_max", "k_max must be >= 1")?;
        check(
            self.solver.max_iterations >= 1,
            "solver.max_iterations",
            "max_iterations must be >= 1",
        )?;
        if let Some(t) = self.upwind.tau {
            check(t >= 0.0 && t.is_finite(), "upwind.tau", "tau must be >= 0")?;
        }
        check(
            self.upwind.clamp_limit > 0.0 && self.upwind.clamp_limit <= 1.0,
            "upwind.clamp_limit",
            "clamp_limit must lie in (0, 1]",
        )?;
        check(self.jet.half_width > 0.0, "ic.half_width", "half-width must be > 0")?;
        if let Err(e) = self.jet.validate(self.f0, self.g, self.h_mean) {
            check(false, "ic.speed", &e.to_string())?;
        }
        check(self.output.cadence >= 1, "output.cadence", "cadence must be >= 1")?;
        if let Some(n) = self.output.spectrum_n {
            check(n.is_power_of_two() && n >= 2, "output.spectrum_n", "spectrum_n must be a power of two")?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_keys(&|_| 0)
    }

    /// Serialises every set key; parsing the result yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        let m = &self.mesh;
        put("mesh.nx", m.nx.to_string());
        put("mesh.ny", m.ny.to_string());
        put("mesh.lx", format!("{:?}", m.lx));
        put("mesh.ly", format!("{:?}", m.ly));
        put("mesh.p", m.p.to_string());
        if let Some(n) = m.n_q {
            put("mesh.n_q", n.to_string());
        }
        put("physics.g", format!("{:?}", self.g));
        put("physics.f0", format!("{:?}", self.f0));
        put("physics.h", format!("{:?}", self.h_mean));
        put("time.dt", format!("{:?}", self.dt));
        put("time.n_steps", self.n_steps.to_string());
        put(
            "solver.mode",
            match self.solver.mode {
                SolverMode::Converge => "converge",
                SolverMode::Fixed => "fixed",
            }
            .into(),
        );
        put("solver.tol", format!("{:?}", self.solver.tol));
        put("solver.k_max", self.solver.k_max.to_string());
        put("solver.max_iterations", self.solver.max_iterations.to_string());
        put("pv_mode", self.pv_mode.to_string());
        put("upwind.scheme", self.upwind.scheme.to_string());
        put(
            "upwind.tau_policy",
            match self.upwind.tau_policy {
                TauKind::Constant => "constant",
                TauKind::VelocityScaled => "velocity_scaled",
            }
            .into(),
        );
        if let Some(t) = self.upwind.tau {
            put("upwind.tau", format!("{t:?}"));
        }
        put("upwind.clamp_limit", format!("{:?}", self.upwind.clamp_limit));
        put("ic.speed", format!("{:?}", self.jet.speed));
        put("ic.half_width", format!("{:?}", self.jet.half_width));
        if let Some(c) = self.jet.centre {
            put("ic.centre", format!("{c:?}"));
        }
        put("ic.amplitude", format!("{:?}", self.jet.amplitude));
        put("ic.wavenumber", self.jet.wavenumber.to_string());
        put("ic.seed", self.seed.to_string());
        put("output.directory", self.output.directory.display().to_string());
        put("output.cadence", self.output.cadence.to_string());
        put("output.snapshot_cadence", self.output.snapshot_cadence.to_string());
        if let Some(n) = self.output.spectrum_n {
            put("output.spectrum_n", n.to_string());
        }
        s
    }

    pub fn tau(&self) -> f64 {
        self.upwind.tau.unwrap_or(0.5 * self.dt)
    }

    pub fn upwind_config(&self) -> UpwindConfig {
        let policy = match self.upwind.tau_policy {
            TauKind::Constant => TauPolicy::Constant(self.tau()),
            TauKind::VelocityScaled => TauPolicy::VelocityScaled,
        };
        UpwindConfig {
            clamp_limit: self.upwind.clamp_limit,
            ..UpwindConfig::new(self.upwind.scheme, policy)
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            mode: match self.solver.mode {
                SolverMode::Converge => IterationMode::Converge { tol: self.solver.tol },
                SolverMode::Fixed => IterationMode::Fixed {
                    iterations: self.solver.k_max,
                },
            },
            pv_mode: self.pv_mode,
            upwind: self.upwind_config(),
            max_iterations: self.solver.max_iterations,
        }
    }

    /// Physics with the Jacobian depth set to `h_mean`.
    pub fn physics(&self, h_mean: f64) -> PhysicsParams {
        PhysicsParams {
            g: self.g,
            f0: self.f0,
            h_mean,
            dt: self.dt,
        }
    }
}
