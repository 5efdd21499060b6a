//! Text file of precomputed embeddings: a `dim=<d>` header line, then one record per
//! line as `label,v1,...,vd` in decimal.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::Path;

use super::{EmbeddingVector, IngestError, LabeledExample};

/// Streaming reader; dimension is checked record by record.
pub struct EmbeddingRecords<R> {
    lines: Lines<R>,
    dimension: usize,
    index: usize,
    line_no: usize,
}

impl<R: BufRead> EmbeddingRecords<R> {
    pub fn from_reader(input: R, expected_dim: usize) -> Result<Self, IngestError> {
        let mut lines = input.lines();
        let header = match lines.next() {
            Some(line) => line.map_err(IngestError::Read)?,
            None => return Err(IngestError::Format { line: 1, message: "missing `dim=` header".into() }),
        };
        let dimension: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| IngestError::Format { line: 1, message: format!("bad header {header:?}") })?;
        if dimension != expected_dim {
            return Err(IngestError::DimensionMismatch { record: None, expected: expected_dim, found: dimension });
        }
        Ok(Self { lines, dimension, index: 0, line_no: 1 })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    fn parse(&self, line: &str) -> Result<LabeledExample, IngestError> {
        let format_err = |message: String| IngestError::Format { line: self.line_no, message };
        let mut fields = line.split(',');
        let label = match fields.next().map(str::trim) {
            Some("0") => 0,
            Some("1") => 1,
            other => return Err(format_err(format!("label must be 0 or 1, got {other:?}"))),
        };
        let values = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format_err(e.to_string()))?;
        if values.len() != self.dimension {
            return Err(IngestError::DimensionMismatch {
                record: Some(self.index),
                expected: self.dimension,
                found: values.len(),
            });
        }
        let embedding = EmbeddingVector::from_values(values).map_err(|_| format_err("non-finite value".into()))?;
        Ok(LabeledExample { embedding, label })
    }
}

impl<R: BufRead> Iterator for EmbeddingRecords<R> {
    type Item = Result<LabeledExample, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(IngestError::Read(e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let record = self.parse(&line);
            self.index += 1;
            return Some(record);
        }
    }
}

pub fn load_embeddings(
    path: impl AsRef<Path>,
    expected_dim: usize,
) -> Result<EmbeddingRecords<BufReader<File>>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    EmbeddingRecords::from_reader(BufReader::new(file), expected_dim)
}

/// Writes examples in the layout `load_embeddings` reads. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_embeddings<W: Write>(out: W, examples: &[LabeledExample], dimension: usize) -> Result<(), IngestError> {
    let mut out = BufWriter::new(out);
    writeln!(out, "dim={dimension}").map_err(IngestError::Read)?;
    for (i, ex) in examples.iter().enumerate() {
        if ex.embedding.dimension() != dimension {
            return Err(IngestError::DimensionMismatch {
                record: Some(i),
                expected: dimension,
                found: ex.embedding.dimension(),
            });
        }
        write!(out, "{}", ex.label).map_err(IngestError::Read)?;
        for v in ex.embedding.values() {
            write!(out, ",{v:?}").map_err(IngestError::Read)?;
        }
        writeln!(out).map_err(IngestError::Read)?;
    }
    out.flush().map_err(IngestError::Read)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, dim: usize) -> Result<Vec<LabeledExample>, IngestError> {
        EmbeddingRecords::from_reader(text.as_bytes(), dim)?.collect()
    }

    #[test]
    fn single_zero_record() {
        let got = load("dim=4\n1,0,0,0,0\n", 4).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].label, 1);
        assert_eq!(got[0].embedding.values(), &[0.0; 4]);
    }

    #[test]
    fn record_dimension_mismatch_names_record() {
        let text = "dim=4\n0,1,2,3,4,5,6,7,8\n";
        match load(text, 4) {
            Err(IngestError::DimensionMismatch { record: Some(0), expected: 4, found: 8 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_dimension_mismatch() {
        assert!(matches!(
            load("dim=8\n", 4),
            Err(IngestError::DimensionMismatch { record: None, expected: 4, found: 8 })
        ));
    }

    #[test]
    fn bad_label_and_missing_header() {
        assert!(matches!(load("dim=1\n3,0.5\n", 1), Err(IngestError::Format { line: 2, .. })));
        assert!(matches!(load("", 1), Err(IngestError::Format { line: 1, .. })));
    }
}
