//! CSV outputs, snapshots and their manifests.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which reads back
//! to the identical `f64`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::diagnostics::{DiagnosticsRecord, SpectrumRecord};
use crate::error::{Result, SweError};

pub const DIAGNOSTICS_HEADER: &str = "step,t,energy,enstrophy,mass,vorticity,newton_iters,residual_u,residual_h";
pub const SPECTRUM_HEADER: &str = "k,energy";

/// Full-precision decimal form of `v`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// SHA-256 of the serialised configuration, hex encoded.
pub fn config_hash(config_text: &str) -> String {
    hex::encode(Sha256::digest(config_text.as_bytes()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| SweError::io(dir, e))?;
        }
    }
    let f = fs::File::create(path).map_err(|e| SweError::io(path, e))?;
    Ok(BufWriter::new(f))
}

/// Streams diagnostics rows to a CSV file.
pub struct DiagnosticsWriter {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl DiagnosticsWriter {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut out = create(&path)?;
        writeln!(out, "{DIAGNOSTICS_HEADER}").map_err(|e| SweError::io(&path, e))?;
        Ok(Self { path, out })
    }

    pub fn write(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.out, "{}", diagnostics_row(r)).map_err(|e| SweError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| SweError::io(&self.path, e))
    }
}

pub fn diagnostics_row(r: &DiagnosticsRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.step,
        fmt_f64(r.t),
        fmt_f64(r.energy),
        fmt_f64(r.enstrophy),
        fmt_f64(r.mass),
        fmt_f64(r.vorticity),
        r.newton_iters,
        fmt_f64(r.residual_u),
        fmt_f64(r.residual_h),
    )
}

/// One parsed diagnostics row; the scheme is not part of the file.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub mass: f64,
    pub vorticity: f64,
    pub newton_iters: usize,
    pub residual_u: f64,
    pub residual_h: f64,
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: Option<&str>) -> Result<T> {
    s.and_then(|s| s.trim().parse().ok()).ok_or_else(|| SweError::Parse {
        line,
        key: name.to_string(),
        message: format!("bad or missing value in {}", path.display()),
    })
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    let text = fs::read_to_string(path).map_err(|e| SweError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(DIAGNOSTICS_HEADER) {
        return Err(SweError::Parse {
            line: 1,
            key: "header".into(),
            message: format!("{} does not start with the diagnostics header", path.display()),
        });
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let line = i + 2;
            let mut it = l.split(',');
            let mut f = |name: &str| it.next().map(str::to_owned).ok_or_else(|| SweError::Parse {
                line,
                key: name.into(),
                message: "missing column".into(),
            });
            let cols: Vec<String> = [
                "step", "t", "energy", "enstrophy", "mass", "vorticity", "newton_iters", "residual_u", "residual_h",
            ]
            .iter()
            .map(|n| f(n))
            .collect::<Result<_>>()?;
            let g = |i: usize, n: &str| parse_field::<f64>(path, line, n, Some(&cols[i]));
            Ok(DiagnosticsRow {
                step: parse_field(path, line, "step", Some(&cols[0]))?,
                t: g(1, "t")?,
                energy: g(2, "energy")?,
                enstrophy: g(3, "enstrophy")?,
                mass: g(4, "mass")?,
                vorticity: g(5, "vorticity")?,
                newton_iters: parse_field(path, line, "newton_iters", Some(&cols[6]))?,
                residual_u: g(7, "residual_u")?,
                residual_h: g(8, "residual_h")?,
            })
        })
        .collect()
}

pub fn write_spectrum(path: &Path, s: &SpectrumRecord) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| SweError::io(path, e);
    writeln!(out, "{SPECTRUM_HEADER}").map_err(io)?;
    for (k, e) in s.k.iter().zip(&s.energy) {
        writeln!(out, "{},{}", fmt_f64(*k), fmt_f64(*e)).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| SweError::io(path, e);
    writeln!(out, "index,value").map_err(io)?;
    for (i, x) in v.iter().enumerate() {
        writeln!(out, "{i},{}", fmt_f64(*x)).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| SweError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "index,value")) => {}
        _ => {
            return Err(SweError::Parse {
                line: 1,
                key: "header".into(),
                message: format!("{} is not a coefficient file", path.display()),
            })
        }
    }
    lines
        .map(|(i, l)| {
            let (idx, val) = l.split_once(',').unwrap_or((l, ""));
            let idx: usize = parse_field(path, i + 1, "index", Some(idx))?;
            if idx != i - 1 {
                return Err(SweError::Parse {
                    line: i + 1,
                    key: "index".into(),
                    message: format!("expected index {}, got {idx}", i - 1),
                });
            }
            parse_field(path, i + 1, "value", Some(val))
        })
        .collect()
}

/// Identifying data of a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotManifest {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub p: usize,
    pub n_q: usize,
    pub step: usize,
    pub t: f64,
    pub config_hash: String,
    /// Coefficient files, relative to the manifest.
    pub u_file: String,
    pub h_file: String,
}

impl SnapshotManifest {
    pub fn to_text(&self) -> String {
        format!(
            "nx={}\nny={}\nlx={}\nly={}\np={}\nn_q={}\nstep={}\nt={}\nconfig_hash={}\nu_file={}\nh_file={}\n",
            self.nx,
            self.ny,
            fmt_f64(self.lx),
            fmt_f64(self.ly),
            self.p,
            self.n_q,
            self.step,
            fmt_f64(self.t),
            self.config_hash,
            self.u_file,
            self.h_file
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for (i, l) in text.lines().enumerate() {
            let l = l.trim();
            if l.is_empty() {
                continue;
            }
            let (k, v) = l.split_once('=').ok_or_else(|| SweError::Parse {
                line: i + 1,
                key: l.to_string(),
                message: "expected `key=value`".into(),
            })?;
            map.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        fn get<T: std::str::FromStr>(
            map: &std::collections::HashMap<String, (usize, String)>,
            key: &str,
        ) -> Result<T> {
            let (line, v) = map.get(key).ok_or_else(|| SweError::Parse {
                line: 0,
                key: key.to_string(),
                message: "missing from manifest".into(),
            })?;
            v.parse().map_err(|_| SweError::Parse {
                line: *line,
                key: key.to_string(),
                message: format!("cannot parse `{v}`"),
            })
        }
        Ok(Self {
            nx: get(&map, "nx")?,
            ny: get(&map, "ny")?,
            lx: get(&map, "lx")?,
            ly: get(&map, "ly")?,
            p: get(&map, "p")?,
            n_q: get(&map, "n_q")?,
            step: get(&map, "step")?,
            t: get(&map, "t")?,
            config_hash: get(&map, "config_hash")?,
            u_file: get(&map, "u_file")?,
            h_file: get(&map, "h_file")?,
        })
    }
}

/// A saved state together with its manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub manifest: SnapshotManifest,
    pub u: Vec<f64>,
    pub h: Vec<f64>,
}

/// Writes `snapshot_<step>.manifest` plus `.u.csv` and `.h.csv` into `dir`
/// and returns the manifest path.
pub fn write_snapshot(dir: &Path, snap: &Snapshot) -> Result<PathBuf> {
    let m = &snap.manifest;
    write_vector(&dir.join(&m.u_file), &snap.u)?;
    write_vector(&dir.join(&m.h_file), &snap.h)?;
    let path = dir.join(format!("snapshot_{:06}.manifest", m.step));
    let mut out = create(&path)?;
    out.write_all(m.to_text().as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| SweError::io(&path, e))?;
    Ok(path)
}

pub fn snapshot_file_names(step: usize) -> (String, String) {
    (format!("snapshot_{step:06}.u.csv"), format!("snapshot_{step:06}.h.csv"))
}

pub fn read_snapshot(manifest_path: &Path) -> Result<Snapshot> {
    let text = fs::read_to_string(manifest_path).map_err(|e| SweError::io(manifest_path, e))?;
    let manifest = SnapshotManifest::parse(&text)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let u = read_vector(&dir.join(&manifest.u_file))?;
    let h = read_vector(&dir.join(&manifest.h_file))?;
    Ok(Snapshot { manifest, u, h })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, -0.0, 1.0 / 3.0, 6.02214076e23, f64::MIN_POSITIVE, -1.2345678901234567e-300] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn hash_is_stable_hex() {
        let h = config_hash("mesh.nx=4\n");
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash("mesh.nx=4\n"));
        assert_ne!(h, config_hash("mesh.nx=5\n"));
    }
}
