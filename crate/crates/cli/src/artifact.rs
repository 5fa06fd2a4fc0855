//! On-disk run artifacts. Every file starts with (or, for JSON, contains)
//! the configuration hash; see FORMATS.md.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use obstacle_core::solver::Trajectory;
use serde::{Deserialize, Serialize};

/// Environment variable overriding the configured output directory.
pub const OUT_ENV: &str = "OBSTACLE_SIM_OUT";

/// `--out`, then the environment, then the config, then `runs/<hash prefix>`.
pub fn output_dir(flag: Option<&Path>, configured: Option<&Path>, hash: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    configured.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("runs").join(&hash[..12]))
}

/// Writes `contents` to `path` through a temporary file and a rename, so a
/// crash never leaves a truncated file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {}", tmp.display()))?;
    Ok(())
}

/// A numeric table written as CSV under a `# config_hash=` line.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, hash: &str) -> String {
        let mut s = format!("# config_hash={hash}\n{}\n", self.header.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Per-member results of an ensemble, stored so interrupted runs resume.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub config_hash: String,
    pub member: usize,
    pub scalars: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Vec<f64>>,
}

/// `members/member_NNNNN.json` under an output directory.
#[derive(Clone, Debug)]
pub struct MemberStore {
    dir: PathBuf,
    hash: String,
}

impl MemberStore {
    pub fn new(out: &Path, hash: &str) -> Self {
        Self { dir: out.join("members"), hash: hash.into() }
    }

    fn path(&self, member: usize) -> PathBuf {
        self.dir.join(format!("member_{member:05}.json"))
    }

    /// A stored record of this configuration, if any.
    pub fn load(&self, member: usize) -> Option<MemberRecord> {
        let text = fs::read_to_string(self.path(member)).ok()?;
        let rec: MemberRecord = serde_json::from_str(&text).ok()?;
        (rec.config_hash == self.hash && rec.member == member).then_some(rec)
    }

    pub fn store(&self, rec: &MemberRecord) -> Result<()> {
        write_atomic(&self.path(rec.member), serde_json::to_string_pretty(rec)?.as_bytes())
    }

    /// The stored record, or `compute` stored on success.
    pub fn get_or_compute(&self, member: usize, compute: impl FnOnce() -> Result<MemberRecord>) -> Result<MemberRecord> {
        if let Some(rec) = self.load(member) {
            return Ok(rec);
        }
        let mut rec = compute()?;
        rec.config_hash = self.hash.clone();
        rec.member = member;
        self.store(&rec)?;
        Ok(rec)
    }
}

/// Non-deterministic run facts kept apart from the summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub workers: usize,
    pub wall_time_seconds: f64,
    pub members_resumed: usize,
}

pub fn save_trajectory(out: &Path, name: &str, traj: &Trajectory, hash: &str) -> Result<()> {
    traj.save(&out.join("trajectories").join(name), hash)?;
    Ok(())
}

/// Stored trajectory directories in name order.
pub fn stored_trajectories(out: &Path) -> Result<Vec<PathBuf>> {
    let dir = out.join("trajectories");
    let mut dirs: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(entries) => entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect(),
        Err(_) => Vec::new(),
    };
    dirs.sort();
    Ok(dirs)
}

/// Writes a text file whose first line is `# config_hash=…`.
pub fn write_with_header(path: &Path, hash: &str, body: &str) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "# config_hash={hash}")?;
    buf.extend_from_slice(body.as_bytes());
    write_atomic(path, &buf)
}
