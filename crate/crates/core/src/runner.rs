//! End-to-end runs driven by a [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::diagnostics::{self, DiagnosticsRecord, SpectrumRecord};
use crate::error::{Result, SweError};
use crate::initial::build_jet_ic;
use crate::mesh::build_mesh;
use crate::operators::Discretisation;
use crate::output::{self, DiagnosticsWriter, Snapshot, SnapshotManifest};
use crate::timestepper::{MixedState, Stepper};

pub fn discretisation(cfg: &RunConfig) -> Result<Discretisation> {
    let m = &cfg.mesh;
    let (mesh, _) = build_mesh(m.nx, m.ny, m.lx, m.ly, m.p)?;
    Discretisation::new(mesh, m.quadrature_points())
}

/// Smallest power of two resolving every element with `2p` samples.
pub fn default_spectrum_size(nx: usize, ny: usize, p: usize) -> usize {
    (2 * nx.max(ny) * p).next_power_of_two()
}

pub fn spectrum_size(cfg: &RunConfig) -> usize {
    cfg.output
        .spectrum_n
        .unwrap_or_else(|| default_spectrum_size(cfg.mesh.nx, cfg.mesh.ny, cfg.mesh.p))
}

/// Area mean of the depth of `state`.
pub fn mean_depth(disc: &Discretisation, state: &MixedState) -> f64 {
    diagnostics::mass(&state.h) / (disc.mesh.lx * disc.mesh.ly)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: MixedState,
    pub spectrum: SpectrumRecord,
    pub snapshots: Vec<PathBuf>,
    pub config_hash: String,
}

fn snapshot_of(cfg: &RunConfig, hash: &str, step: usize, s: &MixedState) -> Snapshot {
    let (u_file, h_file) = output::snapshot_file_names(step);
    Snapshot {
        manifest: SnapshotManifest {
            nx: cfg.mesh.nx,
            ny: cfg.mesh.ny,
            lx: cfg.mesh.lx,
            ly: cfg.mesh.ly,
            p: cfg.mesh.p,
            n_q: cfg.mesh.quadrature_points(),
            step,
            t: s.t,
            config_hash: hash.to_string(),
            u_file,
            h_file,
        },
        u: s.u.to_vec(),
        h: s.h.to_vec(),
    }
}

/// Runs the jet experiment and writes `config.txt`, `diagnostics.csv`,
/// `spectrum.csv` and snapshots into `out_dir`.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| SweError::io(out_dir, e))?;
    let text = cfg.to_text();
    let hash = output::config_hash(&text);
    let cfg_path = out_dir.join("config.txt");
    fs::write(&cfg_path, &text).map_err(|e| SweError::io(&cfg_path, e))?;

    let disc = discretisation(cfg)?;
    let initial = build_jet_ic(&disc, &cfg.jet, cfg.f0, cfg.g, cfg.h_mean)?;
    let phys = cfg.physics(mean_depth(&disc, &initial));
    let mut stepper = Stepper::new(&disc, phys, cfg.solver_config())?;

    let mut writer = DiagnosticsWriter::create(out_dir.join("diagnostics.csv"))?;
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let (n_steps, cadence, snap_cadence) = (cfg.n_steps, cfg.output.cadence, cfg.output.snapshot_cadence);
    let final_state = stepper.run(initial, n_steps, &mut |rec, state| {
        if rec.step % cadence == 0 || rec.step == n_steps {
            writer.write(rec)?;
        }
        let snap_due = snap_cadence > 0 && rec.step % snap_cadence == 0;
        if snap_due || rec.step == n_steps {
            snapshots.push(output::write_snapshot(out_dir, &snapshot_of(cfg, &hash, rec.step, state))?);
        }
        records.push(rec.clone());
        Ok(())
    })?;
    writer.finish()?;

    let spectrum = diagnostics::ke_spectrum(&disc, &final_state.u, spectrum_size(cfg))?;
    output::write_spectrum(&out_dir.join("spectrum.csv"), &spectrum)?;
    Ok(RunSummary {
        records,
        final_state,
        spectrum,
        snapshots,
        config_hash: hash,
    })
}

/// Spectrum of the velocity stored in a snapshot.
pub fn snapshot_spectrum(manifest_path: &Path, sample_n: Option<usize>) -> Result<SpectrumRecord> {
    let snap = output::read_snapshot(manifest_path)?;
    let m = &snap.manifest;
    let (mesh, _) = build_mesh(m.nx, m.ny, m.lx, m.ly, m.p)?;
    let disc = Discretisation::new(mesh, m.n_q)?;
    if snap.u.len() != disc.dim(crate::mesh::Space::V1) {
        return Err(SweError::InvalidArgument(format!(
            "snapshot has {} velocity coefficients, mesh expects {}",
            snap.u.len(),
            disc.dim(crate::mesh::Space::V1)
        )));
    }
    let n = sample_n.unwrap_or_else(|| default_spectrum_size(m.nx, m.ny, m.p));
    diagnostics::ke_spectrum(&disc, &snap.u, n)
}
