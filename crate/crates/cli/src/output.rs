//! Output directory handling, CSV writing and the artifact manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliError;

/// Overrides the configured output root (but not `--out`).
pub const OUT_ENV: &str = "BATCHLAB_OUT";

/// `--out` wins, then `$BATCHLAB_OUT`, then the config's `[output] dir`.
pub fn resolve_root(cli_out: Option<&Path>, configured: &str) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(configured),
    }
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Files produced by one subcommand inside one experiment directory.
#[derive(Debug)]
pub struct OutputDir {
    path: PathBuf,
    produced: Vec<String>,
}

impl OutputDir {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self, CliError> {
        let path = path.into();
        fs::create_dir_all(&path).map_err(|e| io_err(&path, e))?;
        Ok(OutputDir {
            path,
            produced: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn produced(&self) -> &[String] {
        &self.produced
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        self.produced.push(name.to_string());
        Ok(path)
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.path.join(name);
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.produced.push(name.to_string());
        Ok(path)
    }

    /// Writes `<command>_manifest.txt` with one `sha256  file` line per artifact.
    pub fn write_manifest(&self, command: &str) -> Result<PathBuf, CliError> {
        let mut names = self.produced.clone();
        names.sort();
        let mut out = String::new();
        for name in &names {
            let path = self.path.join(name);
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            let digest = Sha256::digest(&bytes);
            for byte in digest.iter() {
                let _ = write!(out, "{byte:02x}");
            }
            let _ = writeln!(out, "  {name}");
        }
        let path = self.path.join(format!("{command}_manifest.txt"));
        fs::write(&path, out).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-7, 1e30, 2.0, -0.0, 123456.789] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1e-7), "1e-7");
    }

    #[test]
    fn manifest_lists_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path().join("x")).unwrap();
        out.csv("b.csv", &["a", "b"], vec![vec!["1".into(), "2".into()]]).unwrap();
        out.text("a.txt", "hello").unwrap();
        let m = fs::read_to_string(out.write_manifest("cmd").unwrap()).unwrap();
        let lines: Vec<&str> = m.lines().collect();
        assert_eq!(lines.len(), 2);
        // sha256("hello")
        assert_eq!(
            lines[0],
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824  a.txt"
        );
        assert!(lines[1].ends_with("  b.csv"));
        assert_eq!(fs::read_to_string(out.path().join("b.csv")).unwrap(), "a,b\n1,2\n");
    }

    #[test]
    fn cli_flag_beats_everything() {
        assert_eq!(resolve_root(Some(Path::new("/x")), "cfg"), PathBuf::from("/x"));
    }
}
