use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;

/// Writes `bytes` through a temporary file in the same directory, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Run facts that would break byte-reproducibility of the main output.
#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    version: &'a str,
    started_unix: f64,
    elapsed_seconds: f64,
    jobs: usize,
}

pub struct RunClock {
    command: &'static str,
    started: Instant,
    started_unix: f64,
}

impl RunClock {
    pub fn start(command: &'static str) -> Self {
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        Self { command, started: Instant::now(), started_unix }
    }

    /// Writes `<out>.meta.json` next to `out`.
    pub fn write_sidecar(&self, out: &Path) -> anyhow::Result<()> {
        let meta = Meta {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            started_unix: self.started_unix,
            elapsed_seconds: self.started.elapsed().as_secs_f64(),
            jobs: rayon::current_num_threads(),
        };
        let mut name = out.as_os_str().to_owned();
        name.push(".meta.json");
        write_atomic(&PathBuf::from(name), serde_json::to_string_pretty(&meta)?.as_bytes())
    }
}
