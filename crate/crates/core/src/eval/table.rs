//! Prediction-table files: optional `# key=value` lines, a header
//! `id,label,p0,...,p{K-1}`, then one row per sample.

use std::fs;
use std::path::Path;

use super::{PredictionRow, PredictionTable};
use crate::error::{Error, Result};
use crate::loss::{Label, ProbVector};
use crate::scalar::Scalar;
use crate::textfile::{self, Metadata};

#[derive(Clone, Debug, PartialEq)]
pub struct TableFile<T> {
    pub table: PredictionTable<T>,
    pub fingerprint: Option<String>,
}

pub fn write_prediction_table<T: Scalar>(path: &Path, table: &PredictionTable<T>, fingerprint: Option<&str>) -> Result<()> {
    let mut out = String::new();
    textfile::write_metadata(&mut out, fingerprint);
    out.push_str("id,label");
    for j in 0..table.num_classes() {
        out.push_str(&format!(",p{j}"));
    }
    out.push('\n');
    for row in table.rows() {
        textfile::check_id(&row.id)?;
        out.push_str(&row.id);
        out.push(',');
        out.push_str(&row.label.index().to_string());
        for p in row.probs.as_slice() {
            out.push(',');
            out.push_str(&format!("{p:?}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_prediction_table<T: Scalar>(path: &Path) -> Result<TableFile<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let (Metadata { fingerprint }, mut lines) = textfile::split_metadata(&text);
    let Some((header_line, header)) = lines.next() else {
        return Err(parse_err(1, "missing header".into()));
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "id" || cols[1] != "label" {
        return Err(parse_err(header_line, "header must be `id,label,p0,...`".into()));
    }
    let k = cols.len() - 2;
    for (j, c) in cols[2..].iter().enumerate() {
        if *c != format!("p{j}") {
            return Err(parse_err(header_line, format!("expected column p{j}, found `{c}`")));
        }
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != k + 2 {
            return Err(parse_err(line_no, format!("expected {} fields, found {}", k + 2, fields.len())));
        }
        let label: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad label `{}`", fields[1])))?;
        let label = Label::checked(label, k).map_err(|e| parse_err(line_no, e.to_string()))?;
        let probs = fields[2..]
            .iter()
            .map(|f| f.parse::<T>().map_err(|_| parse_err(line_no, format!("bad probability `{f}`"))))
            .collect::<Result<Vec<T>>>()?;
        let probs = ProbVector::new(probs).map_err(|e| parse_err(line_no, e.to_string()))?;
        rows.push(PredictionRow {
            id: fields[0].to_string(),
            label,
            probs,
        });
    }
    let table = PredictionTable::new(k, rows).map_err(|e| parse_err(0, e.to_string()))?;
    Ok(TableFile { table, fingerprint })
}
