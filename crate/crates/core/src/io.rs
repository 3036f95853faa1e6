//! Instance documents, family shorthands, CSV formatting and atomic writes.
//!
//! A document is JSON:
//!
//! ```json
//! {
//!   "alphabets": { "U": ["a", "b"], "V": ["a", "b"] },
//!   "joint":   [["0.45", "0.05"], ["0.05", "0.45"]],
//!   "channel": [["0.9", "0.1"], ["0.1", "0.9"]],
//!   "encoder": [["1", "0"], ["0", "1"]],
//!   "n": 4
//! }
//! ```
//!
//! Probabilities may be decimal strings or JSON numbers; strings are
//! preferred since they round-trip without any float formatting step.
//! Every field is optional; each command asks for the ones it needs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probcore::{bec, bsc, dsbs, Alphabet, CondPmf, JointPmf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Text(String),
    Value(f64),
}

impl Number {
    pub fn value(&self) -> Result<f64> {
        let v = match self {
            Number::Value(v) => *v,
            Number::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Document(format!("not a decimal number: {s:?}")))?,
        };
        if !v.is_finite() {
            return Err(Error::Document(format!("non-finite number {v}")));
        }
        Ok(v)
    }
}

pub type Matrix = Vec<Vec<Number>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub alphabets: BTreeMap<String, Vec<String>>,
    /// `P_UV`, rows indexed by `u`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<Matrix>,
    /// `P_Y|X`, rows indexed by `x`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<Matrix>,
    /// `P_X|U`, rows indexed by `u`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

fn numbers(m: &Matrix, what: &str) -> Result<(usize, usize, Vec<f64>)> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || m.iter().any(|r| r.len() != cols) {
        return Err(Error::Document(format!("{what} must be a non-empty rectangular matrix")));
    }
    let vals = m.iter().flatten().map(Number::value).collect::<Result<Vec<_>>>()?;
    Ok((rows, cols, vals))
}

fn alphabet(labels: Option<&Vec<String>>, size: usize, name: &str) -> Result<Alphabet> {
    match labels {
        None => Alphabet::new(size),
        Some(l) if l.len() == size => Alphabet::with_labels(l.clone()),
        Some(l) => Err(Error::Document(format!(
            "alphabet {name} has {} labels but the matrix needs {size}",
            l.len()
        ))),
    }
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Document(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn labels(&self, name: &str) -> Option<&Vec<String>> {
        self.alphabets.get(name)
    }

    pub fn source(&self) -> Result<JointPmf> {
        let m = self.joint.as_ref().ok_or_else(|| Error::Document("missing \"joint\"".into()))?;
        let (r, c, v) = numbers(m, "joint")?;
        JointPmf::with_alphabets(alphabet(self.labels("U"), r, "U")?, alphabet(self.labels("V"), c, "V")?, v)
    }

    pub fn channel(&self) -> Result<CondPmf> {
        let m = self.channel.as_ref().ok_or_else(|| Error::Document("missing \"channel\"".into()))?;
        let (r, c, v) = numbers(m, "channel")?;
        CondPmf::with_alphabets(alphabet(self.labels("X"), r, "X")?, alphabet(self.labels("Y"), c, "Y")?, v)
    }

    /// The encoder map, or the identity when absent and `|U| = |X|`.
    pub fn encoder(&self, nu: usize, nx: usize) -> Result<CondPmf> {
        match &self.encoder {
            Some(m) => {
                let (r, c, v) = numbers(m, "encoder")?;
                CondPmf::new(r, c, v)
            }
            None if nu == nx => CondPmf::identity(nu),
            None => Err(Error::Document(format!(
                "no \"encoder\" given and |U| = {nu} differs from |X| = {nx}"
            ))),
        }
    }
}

/// `x` as a decimal string with 17 significant digits.
pub fn fmt_exact(x: f64) -> String {
    format!("{x:.16e}")
}

fn matrix(rows: usize, cols: usize, values: &[f64]) -> Matrix {
    (0..rows)
        .map(|r| (0..cols).map(|c| Number::Text(fmt_exact(values[r * cols + c]))).collect())
        .collect()
}

fn labels_of(a: &Alphabet) -> Option<Vec<String>> {
    a.labels().map(<[String]>::to_vec)
}

impl Document {
    pub fn with_source(mut self, source: &JointPmf) -> Self {
        self.joint = Some(matrix(source.n_rows(), source.n_cols(), source.as_slice()));
        if let Some(l) = labels_of(source.row_alphabet()) {
            self.alphabets.insert("U".into(), l);
        }
        if let Some(l) = labels_of(source.col_alphabet()) {
            self.alphabets.insert("V".into(), l);
        }
        self
    }

    pub fn with_channel(mut self, channel: &CondPmf) -> Self {
        self.channel = Some(matrix(channel.n_inputs(), channel.n_outputs(), channel.as_slice()));
        if let Some(l) = labels_of(channel.input_alphabet()) {
            self.alphabets.insert("X".into(), l);
        }
        if let Some(l) = labels_of(channel.output_alphabet()) {
            self.alphabets.insert("Y".into(), l);
        }
        self
    }

    pub fn with_encoder(mut self, encoder: &CondPmf) -> Self {
        self.encoder = Some(matrix(encoder.n_inputs(), encoder.n_outputs(), encoder.as_slice()));
        self
    }

    /// Deterministic pretty JSON, newline terminated.
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents always serialize");
        s.push('\n');
        s
    }
}

fn family(spec: &str) -> Option<(&str, Result<f64>)> {
    let (name, arg) = spec.split_once(':')?;
    let v = Number::Text(arg.to_string()).value();
    Some((name, v))
}

fn looks_like_family(spec: &str) -> bool {
    matches!(spec.split_once(':'), Some((n, _)) if ["dsbs", "bsc", "bec"].contains(&n))
}

/// `dsbs:<p>` or a document path.
pub fn resolve_source(spec: &str) -> Result<JointPmf> {
    if looks_like_family(spec) {
        match family(spec) {
            Some(("dsbs", p)) => return dsbs(p?),
            _ => return Err(Error::Document(format!("{spec:?} is not a source family"))),
        }
    }
    Document::load(Path::new(spec))?.source()
}

/// `bsc:<p>`, `bec:<e>` or a document path.
pub fn resolve_channel(spec: &str) -> Result<CondPmf> {
    if looks_like_family(spec) {
        match family(spec) {
            Some(("bsc", p)) => return bsc(p?),
            Some(("bec", e)) => return bec(e?),
            _ => return Err(Error::Document(format!("{spec:?} is not a channel family"))),
        }
    }
    Document::load(Path::new(spec))?.channel()
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

/// Header-first CSV with `.` as the decimal separator.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self {
            text,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.columns);
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
