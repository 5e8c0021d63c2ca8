use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use nls_msol::field::{read_dump, write_dump};
use nls_msol::Trajectory;
use serde::Serialize;
use serde_json::Value;

/// Run constants every output carries.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Constants {
    pub e0: f64,
    pub eta0: f64,
    pub sigma0: f64,
    pub gamma: f64,
}

pub struct Output {
    dir: PathBuf,
    hash: String,
    constants: Constants,
}

/// 17 significant digits, enough to round-trip any f64.
pub fn num(x: f64) -> String {
    // fold -0.0 into 0.0 so all-zero columns read as such
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

impl Output {
    pub fn create(dir: PathBuf, hash: String, constants: Constants) -> anyhow::Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output { dir, hash, constants })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv(&self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> anyhow::Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            if row.len() != header.len() {
                bail!("{name}: row of {} values under {} columns", row.len(), header.len());
            }
            let cells: Vec<String> = row.into_iter().map(num).collect();
            writeln!(text, "{}", cells.join(",")).expect("writing to a String");
        }
        fs::write(self.path(name), text).with_context(|| format!("writing {name}"))
    }

    /// Writes `body` wrapped with the config hash and constants.
    pub fn manifest(&self, name: &str, command: &str, body: Value) -> anyhow::Result<()> {
        let doc = serde_json::json!({
            "command": command,
            "config_hash": self.hash,
            "constants": self.constants,
            "result": body,
        });
        let text = serde_json::to_string_pretty(&doc)?;
        fs::write(self.path(name), text + "\n").with_context(|| format!("writing {name}"))
    }

    pub fn trajectory(&self, name: &str, traj: &Trajectory) -> anyhow::Result<()> {
        write_trajectory(&self.path(name), traj)
    }
}

fn snapshot_name(i: usize) -> String {
    format!("snap_{i:05}.bin")
}

/// A trajectory directory: one dump per snapshot plus `times.csv`.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut index = String::from("index,t\n");
    for (i, (t, u)) in traj.times.iter().zip(&traj.snapshots).enumerate() {
        write_dump(&dir.join(snapshot_name(i)), u, *t)?;
        writeln!(index, "{i},{}", num(*t)).expect("writing to a String");
    }
    fs::write(dir.join("times.csv"), index)?;
    Ok(())
}

pub fn read_trajectory(dir: &Path, p: f64) -> anyhow::Result<Trajectory> {
    let index = fs::read_to_string(dir.join("times.csv")).with_context(|| format!("reading {}/times.csv", dir.display()))?;
    let mut traj = Trajectory::default();
    for (n, line) in index.lines().skip(1).enumerate() {
        let (i, t) = line.split_once(',').with_context(|| format!("times.csv line {}", n + 2))?;
        let i: usize = i.parse()?;
        let t: f64 = t.parse()?;
        let (u, stored) = read_dump(&dir.join(snapshot_name(i)))?;
        if stored.to_bits() != t.to_bits() {
            bail!("snapshot {i} is stamped t = {stored}, index says {t}");
        }
        traj.push(t, u, p);
    }
    if traj.is_empty() {
        bail!("{} holds no snapshots", dir.display());
    }
    Ok(traj)
}
