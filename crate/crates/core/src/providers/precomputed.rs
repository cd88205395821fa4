//! Tab-separated precomputed embeddings:
//!
//! ```text
//! id<TAB>dense<TAB>v1,v2,...
//! id<TAB>mv<TAB>r1v1,r1v2,...;r2v1,r2v2,...
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EmbedInput, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::vector::{l2_norm, DenseEmbedding, MultiVectorEmbedding};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Dense,
    MultiVector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingPayload {
    Dense(DenseEmbedding),
    MultiVector(MultiVectorEmbedding),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub payload: EmbeddingPayload,
}

impl EmbeddingRecord {
    pub fn kind(&self) -> RecordKind {
        match self.payload {
            EmbeddingPayload::Dense(_) => RecordKind::Dense,
            EmbeddingPayload::MultiVector(_) => RecordKind::MultiVector,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.payload {
            EmbeddingPayload::Dense(d) => d.dim(),
            EmbeddingPayload::MultiVector(m) => m.dim(),
        }
    }

    /// Renders the record as one line of the precomputed format (no newline).
    pub fn to_line(&self) -> String {
        let join = |v: &[f32]| {
            let mut s = String::new();
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                write!(s, "{x}").expect("write to string");
            }
            s
        };
        match &self.payload {
            EmbeddingPayload::Dense(d) => format!("{}\tdense\t{}", self.id, join(d.values())),
            EmbeddingPayload::MultiVector(m) => {
                let rows: Vec<String> = m.rows().map(join).collect();
                format!("{}\tmv\t{}", self.id, rows.join(";"))
            }
        }
    }
}

fn parse_row(text: &str, file: &str, line: usize) -> Result<Vec<f32>> {
    let row = text
        .split(',')
        .map(|t| {
            let v: f32 = t
                .trim()
                .parse()
                .map_err(|_| Error::parse(file, line, format!("not a number: `{t}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(file, line, "non-finite value"))
            }
        })
        .collect::<Result<Vec<f32>>>()?;
    if l2_norm(&row) == 0.0 {
        return Err(Error::parse(file, line, "zero-norm vector"));
    }
    Ok(row)
}

fn parse_line(text: &str, file: &str, line: usize) -> Result<EmbeddingRecord> {
    let mut fields = text.split('\t');
    let (Some(id), Some(kind), Some(values), None) = (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(Error::parse(file, line, "expected 3 tab-separated fields"));
    };
    if id.is_empty() {
        return Err(Error::parse(file, line, "empty id"));
    }
    let payload = match kind {
        "dense" => EmbeddingPayload::Dense(DenseEmbedding::new(parse_row(values, file, line)?)?),
        "mv" => {
            let rows = values
                .split(';')
                .map(|r| parse_row(r, file, line))
                .collect::<Result<Vec<_>>>()?;
            let m = MultiVectorEmbedding::from_rows(rows).map_err(|e| Error::parse(file, line, e.to_string()))?;
            EmbeddingPayload::MultiVector(m)
        }
        other => return Err(Error::parse(file, line, format!("unknown kind `{other}`"))),
    };
    Ok(EmbeddingRecord {
        id: id.to_string(),
        payload,
    })
}

/// Reads and validates a precomputed embedding file. All records must share
/// one kind and one dimension.
pub fn load_precomputed(path: &Path) -> Result<BTreeMap<String, EmbeddingRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut out = BTreeMap::new();
    let mut shape: Option<(RecordKind, usize)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec = parse_line(raw, &file, line)?;
        match shape {
            None => shape = Some((rec.kind(), rec.dim())),
            Some((kind, _)) if kind != rec.kind() => {
                return Err(Error::parse(&file, line, "mixed dense and multi-vector records"));
            }
            Some((_, dim)) if dim != rec.dim() => {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: rec.dim(),
                });
            }
            _ => {}
        }
        if out.contains_key(&rec.id) {
            return Err(Error::DuplicateId(rec.id));
        }
        out.insert(rec.id.clone(), rec);
    }
    Ok(out)
}

pub fn write_precomputed<'a>(path: &Path, records: impl IntoIterator<Item = &'a EmbeddingRecord>) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Looks embeddings up by [`EmbedInput::key`].
#[derive(Debug, Clone)]
pub struct PrecomputedProvider {
    records: BTreeMap<String, EmbeddingRecord>,
}

impl PrecomputedProvider {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            records: load_precomputed(path)?,
        })
    }

    pub fn from_records(records: BTreeMap<String, EmbeddingRecord>) -> Self {
        Self { records }
    }

    fn get(&self, key: &str) -> Result<&EmbeddingRecord> {
        self.records
            .get(key)
            .ok_or_else(|| Error::InvalidData(format!("no precomputed embedding for `{key}`")))
    }
}

impl EmbeddingProvider for PrecomputedProvider {
    fn embed_dense(&self, input: &EmbedInput<'_>) -> Result<DenseEmbedding> {
        match &self.get(input.key)?.payload {
            EmbeddingPayload::Dense(d) => d.normalize(),
            EmbeddingPayload::MultiVector(_) => Err(Error::InvalidData(format!(
                "`{}` is a multi-vector record, dense requested",
                input.key
            ))),
        }
    }

    fn embed_multivector(&self, input: &EmbedInput<'_>, max_tokens: usize) -> Result<MultiVectorEmbedding> {
        match &self.get(input.key)?.payload {
            EmbeddingPayload::MultiVector(m) => {
                let m = m.normalize_rows()?;
                if m.n_tokens() <= max_tokens {
                    Ok(m)
                } else {
                    MultiVectorEmbedding::from_flat(m.as_flat()[..max_tokens * m.dim()].to_vec(), max_tokens, m.dim())
                }
            }
            EmbeddingPayload::Dense(_) => Err(Error::InvalidData(format!(
                "`{}` is a dense record, multi-vector requested",
                input.key
            ))),
        }
    }

    fn dim(&self) -> Option<usize> {
        self.records.values().next().map(EmbeddingRecord::dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), content).unwrap();
        f
    }

    #[test]
    fn one_dense_record() {
        let f = file("d1\tdense\t1,0,0,0\n");
        let m = load_precomputed(f.path()).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m["d1"].dim(), 4);
    }

    #[test]
    fn multivector_record() {
        let f = file("q\tmv\t1,0;0,1;0.6,0.8\n");
        let m = load_precomputed(f.path()).unwrap();
        let EmbeddingPayload::MultiVector(mv) = &m["q"].payload else {
            panic!()
        };
        assert_eq!(mv.n_tokens(), 3);
    }

    #[test]
    fn mixed_dims_rejected() {
        let f = file("a\tdense\t1,0,0,0\nb\tdense\t1,0,0,0,0,0,0,0\n");
        assert!(matches!(
            load_precomputed(f.path()),
            Err(Error::DimMismatch { expected: 4, actual: 8 })
        ));
    }

    #[test]
    fn duplicate_rejected() {
        let f = file("a\tdense\t1,0\na\tdense\t0,1\n");
        assert!(matches!(load_precomputed(f.path()), Err(Error::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn parse_error_carries_line() {
        let f = file("a\tdense\t1,0\n\nb\tdense\t1,x\n");
        match load_precomputed(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = file("a\tdense\t0,0\n");
        assert!(matches!(load_precomputed(f.path()), Err(Error::Parse { line: 1, .. })));
        let f = file("a\tdense\t1,0\nb\tmv\t1,0\n");
        assert!(matches!(load_precomputed(f.path()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn line_round_trip() {
        let f = file("a\tmv\t0.25,-1.5;3,4\n");
        let m = load_precomputed(f.path()).unwrap();
        assert_eq!(m["a"].to_line(), "a\tmv\t0.25,-1.5;3,4");
    }

    #[test]
    fn provider_normalizes_lookups() {
        let f = file("a\tdense\t3,4\n");
        let p = PrecomputedProvider::open(f.path()).unwrap();
        let e = p.embed_dense(&EmbedInput { key: "a", text: "" }).unwrap();
        assert_eq!(e.values(), &[0.6, 0.8]);
        assert!(p.embed_dense(&EmbedInput { key: "zz", text: "" }).is_err());
        assert!(p.embed_multivector(&EmbedInput { key: "a", text: "" }, 4).is_err());
    }
}
