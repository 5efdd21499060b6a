//! Streaming reader for labeled tweet CSV files in the six-field Sentiment140 layout
//! (`label, id, date, query, user, text`), with configurable columns and label mapping.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sentiment {
    Negative,
    Positive,
}

impl Sentiment {
    /// 0 for negative, 1 for positive.
    pub fn as_label(self) -> u8 {
        match self {
            Sentiment::Negative => 0,
            Sentiment::Positive => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: u64,
    pub label: Sentiment,
    pub raw_text: String,
}

/// What a raw label value maps to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelAction {
    Keep(Sentiment),
    /// Neutral rows: dropped and counted.
    Drop,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TextEncoding {
    /// UTF-8, invalid sequences replaced with U+FFFD.
    #[default]
    Utf8Lossy,
    /// ISO-8859-1, one byte per code point.
    Latin1,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Zero-based column holding the label.
    pub label_column: usize,
    /// Zero-based column holding the text.
    pub text_column: usize,
    /// Zero-based column holding a numeric id; the row ordinal is used when `None`.
    pub id_column: Option<usize>,
    pub label_map: BTreeMap<String, LabelAction>,
    pub delimiter: u8,
    pub quote: u8,
    pub has_header: bool,
    pub encoding: TextEncoding,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self::sentiment140()
    }
}

impl CsvSchema {
    pub fn sentiment140() -> Self {
        let label_map = [
            ("0".to_owned(), LabelAction::Keep(Sentiment::Negative)),
            ("2".to_owned(), LabelAction::Drop),
            ("4".to_owned(), LabelAction::Keep(Sentiment::Positive)),
        ]
        .into_iter()
        .collect();
        Self {
            label_column: 0,
            text_column: 5,
            id_column: Some(1),
            label_map,
            delimiter: b',',
            quote: b'"',
            has_header: false,
            encoding: TextEncoding::Utf8Lossy,
        }
    }

    fn min_fields(&self) -> usize {
        self.label_column.max(self.text_column).max(self.id_column.unwrap_or(0)) + 1
    }

    fn decode(&self, bytes: &[u8]) -> String {
        match self.encoding {
            TextEncoding::Utf8Lossy => String::from_utf8_lossy(bytes).into_owned(),
            TextEncoding::Latin1 => bytes.iter().map(|&b| char::from(b)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadCounts {
    pub retained: u64,
    pub dropped_neutral: u64,
    pub malformed: u64,
}

impl ReadCounts {
    pub fn total(&self) -> u64 {
        self.retained + self.dropped_neutral + self.malformed
    }
}

/// Iterator over the retained documents of a CSV source.
///
/// Malformed rows are skipped and counted. Only I/O failures surface as `Err`, after
/// which the stream ends.
pub struct CsvDocuments<R> {
    reader: csv::Reader<R>,
    schema: CsvSchema,
    record: csv::ByteRecord,
    counts: ReadCounts,
    row: u64,
    done: bool,
}

impl<R: Read> CsvDocuments<R> {
    pub fn from_reader(input: R, schema: CsvSchema) -> Self {
        let reader = csv::ReaderBuilder::new()
            .has_headers(schema.has_header)
            .delimiter(schema.delimiter)
            .quote(schema.quote)
            .flexible(true)
            .from_reader(input);
        Self {
            reader,
            schema,
            record: csv::ByteRecord::new(),
            counts: ReadCounts::default(),
            row: 0,
            done: false,
        }
    }

    pub fn counts(&self) -> ReadCounts {
        self.counts
    }

    /// Drains the stream, returning documents and final counts.
    pub fn collect_all(mut self) -> Result<(Vec<Document>, ReadCounts), IngestError> {
        let mut docs = Vec::new();
        for doc in &mut self {
            docs.push(doc?);
        }
        Ok((docs, self.counts))
    }

    fn parse_row(&self, ordinal: u64) -> Row {
        let rec = &self.record;
        if rec.len() < self.schema.min_fields() {
            return Row::Malformed;
        }
        let label = match std::str::from_utf8(&rec[self.schema.label_column])
            .ok()
            .and_then(|l| self.schema.label_map.get(l.trim()))
        {
            Some(LabelAction::Keep(s)) => *s,
            Some(LabelAction::Drop) => return Row::Neutral,
            None => return Row::Malformed,
        };
        let id = match self.schema.id_column {
            Some(col) => match std::str::from_utf8(&rec[col]).ok().and_then(|s| s.trim().parse().ok()) {
                Some(id) => id,
                None => return Row::Malformed,
            },
            None => ordinal,
        };
        let raw_text = self.schema.decode(&rec[self.schema.text_column]);
        Row::Doc(Document { id, label, raw_text })
    }
}

enum Row {
    Doc(Document),
    Neutral,
    Malformed,
}

impl<R: Read> Iterator for CsvDocuments<R> {
    type Item = Result<Document, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            match self.reader.read_byte_record(&mut self.record) {
                Ok(false) => self.done = true,
                Ok(true) => {
                    let ordinal = self.row;
                    self.row += 1;
                    match self.parse_row(ordinal) {
                        Row::Doc(doc) => {
                            self.counts.retained += 1;
                            return Some(Ok(doc));
                        }
                        Row::Neutral => self.counts.dropped_neutral += 1,
                        Row::Malformed => self.counts.malformed += 1,
                    }
                }
                Err(e) => {
                    if let csv::ErrorKind::Io(_) = e.kind() {
                        self.done = true;
                        return Some(Err(IngestError::Csv(e)));
                    }
                    self.row += 1;
                    self.counts.malformed += 1;
                }
            }
        }
        None
    }
}

/// Opens `path` and streams its documents.
pub fn read_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<CsvDocuments<File>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(CsvDocuments::from_reader(file, schema.clone()))
}
