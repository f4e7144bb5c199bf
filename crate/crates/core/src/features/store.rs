//! Feature store file: a header line `id,256`, then one row per sample with
//! the id and 256 decimal values. Values are written with 17 significant
//! digits, enough for a lossless f64 round trip, so pipelines that go
//! through the file agree bit for bit with ones that keep vectors in memory.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{FeatureVector, FEATURE_LEN};

const HEADER: &str = "id,256";

#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    entries: Vec<(String, FeatureVector)>,
    index: HashMap<String, usize>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry; ids must be unique.
    pub fn push(&mut self, id: impl Into<String>, vector: FeatureVector) -> Result<()> {
        let id = id.into();
        if self.index.contains_key(&id) {
            return Err(Error::InvalidId {
                id,
                reason: "already present in the store",
            });
        }
        self.index.insert(id.clone(), self.entries.len());
        self.entries.push((id, vector));
        Ok(())
    }

    pub fn entries(&self) -> &[(String, FeatureVector)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&FeatureVector> {
        self.index.get(id).map(|&i| &self.entries[i].1)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut out = String::with_capacity(self.entries.len() * FEATURE_LEN * 12);
        out.push_str(HEADER);
        out.push('\n');
        for (id, vector) in &self.entries {
            out.push_str(id);
            for v in vector.as_slice() {
                // 16 fractional digits of the scientific mantissa = 17
                // significant digits, the f64 round-trip guarantee.
                write!(out, ",{v:.16e}").expect("string write");
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::TableParse {
            path: path.to_path_buf(),
            line,
            message,
        };

        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == HEADER => {}
            Some((_, header)) => {
                return Err(parse_err(
                    1,
                    format!("expected header {HEADER:?}, found {header:?}"),
                ))
            }
            None => return Err(parse_err(1, "missing header".to_string())),
        }

        let mut store = Self::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let id = fields.next().unwrap_or_default().to_string();
            if id.is_empty() {
                return Err(parse_err(line_no, "empty id".to_string()));
            }
            let mut vector = FeatureVector::zeros();
            let mut count = 0;
            for field in fields {
                if count == FEATURE_LEN {
                    count += 1;
                    break;
                }
                let value: f64 = field
                    .parse()
                    .map_err(|e| parse_err(line_no, format!("value {}: {e}", count + 1)))?;
                if !value.is_finite() || value < 0.0 {
                    return Err(parse_err(
                        line_no,
                        format!("value {} out of range: {value}", count + 1),
                    ));
                }
                vector.0[count] = value;
                count += 1;
            }
            if count != FEATURE_LEN {
                return Err(parse_err(
                    line_no,
                    format!("expected {FEATURE_LEN} values, found {count}"),
                ));
            }
            store
                .push(id, vector)
                .map_err(|e| parse_err(line_no, e.to_string()))?;
        }
        Ok(store)
    }
}
