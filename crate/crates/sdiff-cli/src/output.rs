//! File writers. Floats in CSV files use 17 significant digits so values
//! round-trip exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{CliError, CliResult};

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Input(format!("cannot serialise {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

/// CSV with a header and float rows.
pub fn csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Collects the files of one run and the optional long-format plot data.
pub struct Sink {
    dir: PathBuf,
    pub files: Vec<String>,
    plot: Option<String>,
}

impl Sink {
    pub fn new(dir: &Path, plot: bool) -> Self {
        Sink {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            plot: plot.then(|| String::from("series,x,y,value\n")),
        }
    }

    pub fn text(&mut self, name: &str, text: &str) -> CliResult<()> {
        write_text(&self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        write_json(&self.dir.join(name), value)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// One plot row; `y = None` for curves.
    pub fn plot(&mut self, series: &str, x: f64, y: Option<f64>, value: f64) {
        if let Some(p) = self.plot.as_mut() {
            let y = y.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(p, "{series},{},{y},{}", fmt_f64(x), fmt_f64(value));
        }
    }

    pub fn finish(mut self) -> CliResult<Vec<String>> {
        if let Some(p) = self.plot.take() {
            self.text("plot_data.csv", &p)?;
        }
        Ok(self.files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(csv(&["a", "b"], &[vec![1.0, 2.0]]), "a,b\n1.00000000000000000e0,2.00000000000000000e0\n");
    }
}
