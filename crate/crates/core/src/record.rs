use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::ensure_finite;

/// One stored object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: Option<String>,
    pub response: Option<f64>,
    pub payload: Option<Vec<u8>>,
    /// Number of original objects this record stands for. Plain records have
    /// weight 1; generalized prototypes carry their group size.
    pub weight: u32,
}

impl Record {
    pub fn new(id: u64, features: Vec<f64>) -> Self {
        Record {
            id,
            features,
            label: None,
            response: None,
            payload: None,
            weight: 1,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_response(mut self, response: f64) -> Self {
        self.response = Some(response);
        self
    }

    pub fn with_payload(mut self, payload: impl Into<Vec<u8>>) -> Self {
        self.payload = Some(payload.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

impl AsRef<[f64]> for Record {
    fn as_ref(&self) -> &[f64] {
        &self.features
    }
}

/// A ranked search hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub record_id: u64,
    pub distance: f64,
    pub similarity: f64,
}

/// Checks the dataset invariants and returns the common dimension.
pub fn validate_records(records: &[Record]) -> Result<usize> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let dim = first.dim();
    if dim == 0 {
        return Err(Error::InvalidParameter("records must have at least one feature".into()));
    }
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if r.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.dim(),
            });
        }
        ensure_finite(&r.features)?;
        if r.response.is_some_and(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if r.weight == 0 {
            return Err(Error::InvalidParameter(format!("record {} has zero weight", r.id)));
        }
        if !seen.insert(r.id) {
            return Err(Error::DuplicateId(r.id));
        }
    }
    Ok(dim)
}

pub(crate) fn check_query(query: &[f64], dim: usize) -> Result<()> {
    if query.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: query.len(),
        });
    }
    ensure_finite(query)
}

/// Reads the comma-separated interchange format: `id,label,response,f1,...,fn`
/// with empty label/response fields for absent values and `#` comment lines.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Record>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() < 4 {
            return Err(Error::Parse(format!(
                "row {}: expected id,label,response and at least one feature",
                line + 1
            )));
        }
        let id = row[0]
            .parse::<u64>()
            .map_err(|e| Error::Parse(format!("row {}: bad id {:?}: {e}", line + 1, &row[0])))?;
        let label = (!row[1].is_empty()).then(|| row[1].to_string());
        let response = if row[2].is_empty() {
            None
        } else {
            Some(
                row[2]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: bad response {:?}: {e}", line + 1, &row[2])))?,
            )
        };
        let features = row
            .iter()
            .skip(3)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: bad feature {f:?}: {e}", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(Record {
            id,
            features,
            label,
            response,
            payload: None,
            weight: 1,
        });
    }
    validate_records(&records)?;
    Ok(records)
}

pub fn write_csv<W: Write>(writer: W, records: &[Record]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_writer(writer);
    for r in records {
        let mut row = Vec::with_capacity(3 + r.features.len());
        row.push(r.id.to_string());
        row.push(r.label.clone().unwrap_or_default());
        row.push(r.response.map(|v| v.to_string()).unwrap_or_default());
        row.extend(r.features.iter().map(|f| f.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parses_optional_fields_and_comments() {
        let text = "# header comment\n0,cat,,1.0,2.0\n1,,3.5,4,5\n";
        let recs = read_csv(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].label.as_deref(), Some("cat"));
        assert_eq!(recs[0].response, None);
        assert_eq!(recs[1].label, None);
        assert_eq!(recs[1].response, Some(3.5));
        assert_eq!(recs[1].features, vec![4.0, 5.0]);
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![
            Record::new(3, vec![0.25, -1.0]).with_label("a,b"),
            Record::new(9, vec![1e-300, 7.0]).with_response(-2.5),
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &recs).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn validation_rejects_bad_datasets() {
        assert!(matches!(validate_records(&[]), Err(Error::EmptyDataset)));
        let dup = [Record::new(1, vec![0.0]), Record::new(1, vec![1.0])];
        assert!(matches!(validate_records(&dup), Err(Error::DuplicateId(1))));
        let ragged = [Record::new(1, vec![0.0]), Record::new(2, vec![1.0, 2.0])];
        assert!(matches!(
            validate_records(&ragged),
            Err(Error::DimensionMismatch { .. })
        ));
        let nan = [Record::new(1, vec![f64::NAN])];
        assert!(matches!(validate_records(&nan), Err(Error::NonFinite)));
        assert!(read_csv("x,,,1\n".as_bytes()).is_err());
        assert!(read_csv("1,,\n".as_bytes()).is_err());
    }
}
