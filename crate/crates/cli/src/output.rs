use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::Resolved;
use crate::Failure;

pub struct OutDir {
    dir: PathBuf,
    header: String,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn new(dir: &Path, resolved: &Resolved) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            header: format!(
                "# spindiff {} profile={} config_sha256={} seed={}",
                env!("CARGO_PKG_VERSION"),
                resolved.profile,
                resolved.hash(),
                resolved.seed()
            ),
            written: Vec::new(),
        })
    }

    /// Creates `name` (never overwriting), writes the provenance line and
    /// hands the writer to `body`.
    pub fn write<F>(&mut self, name: &str, body: F) -> Result<(), Failure>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        let file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Failure::Io(format!("{} already exists; outputs are never overwritten", path.display()))
            } else {
                Failure::Io(format!("{}: {e}", path.display()))
            }
        })?;
        let mut w = BufWriter::new(file);
        let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", path.display()));
        writeln!(w, "{}", self.header).map_err(io)?;
        body(&mut w).map_err(io)?;
        w.flush().map_err(io)?;
        self.written.push(path);
        Ok(())
    }
}
