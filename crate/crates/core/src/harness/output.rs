use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Provenance stamped into every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub tool_version: String,
    pub config_hash: String,
    pub master_seed: u64,
}

impl Meta {
    pub fn new(config_hash: String, master_seed: u64) -> Self {
        Meta {
            tool_version: crate::TOOL_VERSION.to_string(),
            config_hash,
            master_seed,
        }
    }

    pub fn header_line(&self) -> String {
        format!(
            "# curlgff {} config_hash={} seed={}",
            self.tool_version, self.config_hash, self.master_seed
        )
    }
}

/// Shortest round-trip decimal, switching to exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// CSV with one `#` provenance line before the header row.
pub fn write_csv(path: &Path, meta: &Meta, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", meta.header_line())?;
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(&mut out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Doc<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON object with a `meta` block next to the fields of `body`.
pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, body: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&Doc { meta, body })?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
