//! Deterministic artifact rendering.
//!
//! Every experiment produces its outputs as in-memory artifacts that are
//! written only after the whole run succeeds (or, for numerical failures,
//! as a diagnostic payload).  Numbers are rendered with the shortest
//! round-trip decimal form, `.` decimal separator, and `\n` line endings,
//! so identical runs produce byte-identical files.

use std::fmt::Write as _;

use num_complex::Complex64;

/// A named output file, rendered but not yet written.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn text(name: &str, contents: String) -> Artifact {
        Artifact {
            name: name.to_string(),
            bytes: contents.into_bytes(),
        }
    }
}

/// Shortest round-trip rendering of a float (`.` decimal, no locale).
pub fn num(value: f64) -> String {
    format!("{value}")
}

/// Scientific rendering for report fields, easier to scan for residuals.
pub fn sci(value: f64) -> String {
    format!("{value:e}")
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// CSV accumulator with a required header row.
#[derive(Debug, Clone)]
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        let mut buf = header.join(",");
        buf.push('\n');
        Csv {
            buf,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.columns, "ragged CSV row");
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn into_artifact(self, name: &str) -> Artifact {
        Artifact::text(name, self.buf)
    }
}

/// CSV of a complex trajectory set: one row per (observable, node).
pub fn trajectory_csv(
    name: &str,
    grid: &quadflow_core::grid::TimeGrid,
    observables: usize,
    value: impl Fn(usize, usize) -> Complex64,
) -> Artifact {
    let mut csv = Csv::new(&["t", "observable_index", "value_re", "value_im"]);
    for obs in 0..observables {
        for (node, t) in grid.nodes().enumerate() {
            let v = value(obs, node);
            csv.row(&[num(t), obs.to_string(), num(v.re), num(v.im)]);
        }
    }
    csv.into_artifact(name)
}

// ---------------------------------------------------------------------------
// structured text reports
// ---------------------------------------------------------------------------

/// `name = value` report accumulator.
#[derive(Debug, Clone)]
pub struct TextReport {
    buf: String,
}

impl TextReport {
    pub fn new(title: &str) -> TextReport {
        TextReport {
            buf: format!("{title}\n"),
        }
    }

    pub fn field(&mut self, name: &str, value: impl std::fmt::Display) {
        writeln!(self.buf, "{name} = {value}").expect("string writes cannot fail");
    }

    pub fn float(&mut self, name: &str, value: f64) {
        self.field(name, sci(value));
    }

    pub fn into_artifact(self, name: &str) -> Artifact {
        Artifact::text(name, self.buf)
    }
}

// ---------------------------------------------------------------------------
// run manifest
// ---------------------------------------------------------------------------

/// The run manifest accompanying every output set: the echoed configuration,
/// the toolkit version, the produced files, and the wall time.  The wall
/// time is the one intentionally non-reproducible field, so the manifest is
/// excluded from byte-identity comparisons.
pub fn manifest(
    kind: &str,
    description: &str,
    config_echo: &serde_json::Value,
    outputs: &[String],
    wall_time_seconds: f64,
) -> Artifact {
    let doc = serde_json::json!({
        "kind": kind,
        "description": description,
        "toolkit_version": env!("CARGO_PKG_VERSION"),
        "wall_time_seconds": wall_time_seconds,
        "outputs": outputs,
        "config": config_echo,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("manifest serialization");
    text.push('\n');
    Artifact::text("manifest.json", text)
}
