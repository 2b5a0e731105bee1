//! Writing artifacts: CSV with a one-line version header, JSON, atomic files.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

pub const CSV_HEADER_PREFIX: &str = "# xcavity";

/// CSV table under construction.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(task: &str, columns: &[&str]) -> Self {
        let mut text = format!("{CSV_HEADER_PREFIX} {} {task}\n", env!("CARGO_PKG_VERSION"));
        text.push_str(&columns.join(","));
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, cells: &[&dyn std::fmt::Display]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            let _ = write!(self.text, "{c}");
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// `dir/name.ext` → `dir/name.<infix>.ext`.
pub fn derived_path(base: &Path, infix: &str, ext: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    base.with_file_name(format!("{stem}.{infix}.{ext}"))
}

/// Destination of one artifact: a file (written atomically) or stdout.
pub fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| Error::Io { path: "<stdout>".into(), source })
        }
        Some(p) => write_atomic(p, content),
    }
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let io = |source| Error::Io { path: path.display().to_string(), source };
    let name = path.file_name().ok_or_else(|| Error::validation("out", "path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io(e)
    })
}

pub fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut c = Csv::new("demo", &["a", "b"]);
        c.row(&[&1, &2.5]);
        let t = c.finish();
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with(CSV_HEADER_PREFIX));
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines[2], "1,2.5");
    }

    #[test]
    fn derived_names() {
        assert_eq!(derived_path(Path::new("x/h.csv"), "rabi", "csv"), PathBuf::from("x/h.rabi.csv"));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.csv");
        emit(Some(&p), "one").unwrap();
        emit(Some(&p), "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn unwritable_destination_is_io_error() {
        let err = emit(Some(Path::new("/nonexistent-dir/x.csv")), "z").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
