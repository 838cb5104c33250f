//! Provenance headers and deterministic output formatting.

use serde::Serialize;
use vacuum_unlock::csv::{fmt_sig, row};

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Effective arguments after config merging.
    pub command: Vec<String>,
    pub seed: Option<u64>,
    pub cutoffs: Option<Vec<usize>>,
    pub omegas: Option<Vec<f64>>,
}

impl Provenance {
    pub fn new(command: &[String]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.to_vec(),
            seed: None,
            cutoffs: None,
            omegas: None,
        }
    }

    /// `# key: value` comment lines for CSV output.
    pub fn csv_header(&self) -> String {
        let mut out = format!("# {} {}\n# command: {}\n", self.tool, self.version, self.command.join(" "));
        if let Some(s) = self.seed {
            out.push_str(&format!("# seed: {s}\n"));
        }
        if let Some(c) = &self.cutoffs {
            out.push_str(&format!("# cutoffs: {}\n", list(c.iter().map(|x| x.to_string()))));
        }
        if let Some(w) = &self.omegas {
            out.push_str(&format!("# omegas: {}\n", list(w.iter().map(|&x| fmt_sig(x)))));
        }
        out
    }
}

/// Space-separated list, used inside single CSV fields.
pub fn list(items: impl IntoIterator<Item = String>) -> String {
    items.into_iter().collect::<Vec<_>>().join(" ")
}

/// Document with the provenance object first.
#[derive(Serialize)]
pub struct Document<'a, T: Serialize> {
    pub schema: &'a str,
    pub provenance: &'a Provenance,
    #[serde(flatten)]
    pub body: T,
}

pub fn json<T: Serialize>(schema: &str, provenance: &Provenance, body: T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(&Document { schema, provenance, body })?;
    s.push('\n');
    Ok(s)
}

/// CSV line from already-formatted fields.
pub fn line(fields: impl IntoIterator<Item = String>) -> String {
    let mut s = row(fields);
    s.push('\n');
    s
}
