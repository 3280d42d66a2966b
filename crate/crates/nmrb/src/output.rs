//! Reproducible result files: 17-significant-digit CSV, JSON sidecars with
//! config hashes, atomic writes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::asf::ASFCurve;
use crate::error::{NmrbError, Result};

/// Round-trip-safe decimal rendering of a double (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Content hash of the canonical (serialized) config, git-object style.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let canonical = serde_json::to_string(config)?;
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    Ok(format!("sha256:{:x}", hasher.finalize()))
}

/// Write atomically: temp file in the target directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        // NamedTempFile starts at 0600; result files are ordinary artifacts
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path)
        .map_err(|e| NmrbError::Io(e.error))?;
    Ok(())
}

fn csv_field(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// The main ASF result table. Engine columns that were not run stay empty.
pub struct AsfTable {
    pub m_values: Vec<usize>,
    pub analytical: Option<ASFCurve>,
    pub markovianized: Option<ASFCurve>,
    pub monte_carlo: Option<ASFCurve>,
}

impl AsfTable {
    fn column(curve: &Option<ASFCurve>, m: usize) -> Option<f64> {
        curve
            .as_ref()
            .and_then(|c| c.points.iter().find(|p| p.m == m))
            .map(|p| p.value)
    }

    fn stderr_column(curve: &Option<ASFCurve>, m: usize) -> Option<f64> {
        curve
            .as_ref()
            .and_then(|c| c.points.iter().find(|p| p.m == m))
            .and_then(|p| p.stderr)
    }

    pub fn to_csv(&self, hash: &str, seed: u64) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config_hash={hash} seed={seed}\n"));
        out.push_str("m,analytical,markovianized,mc_mean,mc_stderr\n");
        for &m in &self.m_values {
            out.push_str(&format!(
                "{m},{},{},{},{}\n",
                csv_field(Self::column(&self.analytical, m)),
                csv_field(Self::column(&self.markovianized, m)),
                csv_field(Self::column(&self.monte_carlo, m)),
                csv_field(Self::stderr_column(&self.monte_carlo, m)),
            ));
        }
        out
    }
}

/// Per-pattern scan curves as long-form CSV.
pub fn scan_csv(curves: &BTreeMap<usize, ASFCurve>, hash: &str, seed: u64) -> String {
    let mut out = String::new();
    out.push_str(&format!("# config_hash={hash} seed={seed}\n"));
    out.push_str("k,m,value\n");
    for (k, curve) in curves {
        for p in &curve.points {
            out.push_str(&format!("{k},{},{}\n", p.m, fmt_f64(p.value)));
        }
    }
    out
}

/// JSON artifact wrapper carrying provenance next to the payload.
#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub command: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
    pub config: &'a crate::config::ExperimentConfig,
    pub result: T,
}

pub fn write_json<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}
