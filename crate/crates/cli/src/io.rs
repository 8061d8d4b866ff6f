use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Output directory of a command.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: impl AsRef<Path>) -> CliResult<Self> {
        fs::create_dir_all(root.as_ref())?;
        Ok(Self { root: root.as_ref().to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn sub(&self, name: &str) -> CliResult<Self> {
        Self::create(self.root.join(name))
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, v: &T) -> CliResult<PathBuf> {
        let path = self.join(name);
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        fs::write(&path, s)?;
        Ok(path)
    }

    pub fn write_with<F>(&self, name: &str, f: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        Ok(path)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let s = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&s).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
