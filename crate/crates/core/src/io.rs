//! File formats: dataset and noise CSVs, float formatting.
//!
//! All floats are written with 17 significant digits so every file
//! round-trips bit-exactly through its own loader.

use crate::error::{Error, Result};
use crate::scm::LabeledDataset;

/// 17 significant digits; round-trips any f64 exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad float {field:?}")))
}

fn parse_i64(field: &str, line: usize) -> Result<i64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad integer {field:?}")))
}

/// Dataset CSV: `x_1..x_d,y,pattern_id,root_cause,y_abnormal`.
pub fn dataset_to_csv(data: &LabeledDataset) -> String {
    let d = data.dim();
    let mut out = String::new();
    for j in 1..=d {
        out.push_str(&format!("x_{j},"));
    }
    out.push_str("y,pattern_id,root_cause,y_abnormal\n");
    for i in 0..data.len() {
        for v in &data.x[i] {
            out.push_str(&format_float(*v));
            out.push(',');
        }
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_float(data.y[i]),
            data.pattern_id[i],
            data.root_cause[i],
            u8::from(data.y_abnormal[i]),
        ));
    }
    out
}

/// Parse a dataset CSV; the noise matrix is loaded separately and left empty.
pub fn dataset_from_csv(text: &str) -> Result<LabeledDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[cols.len() - 4] != "y" {
        return Err(Error::Parse(format!("unexpected dataset header {header:?}")));
    }
    let d = cols.len() - 4;
    let mut data = LabeledDataset {
        x: Vec::new(),
        y: Vec::new(),
        z_true: Vec::new(),
        pattern_id: Vec::new(),
        root_cause: Vec::new(),
        y_abnormal: Vec::new(),
    };
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse(format!("line {lineno}: expected {} fields", cols.len())));
        }
        let mut x = Vec::with_capacity(d);
        for f in &fields[..d] {
            x.push(parse_f64(f, lineno)?);
        }
        data.x.push(x);
        data.y.push(parse_f64(fields[d], lineno)?);
        data.pattern_id.push(parse_i64(fields[d + 1], lineno)?);
        data.root_cause.push(parse_i64(fields[d + 2], lineno)?);
        data.y_abnormal.push(parse_i64(fields[d + 3], lineno)? != 0);
    }
    Ok(data)
}

/// Companion noise CSV: `z_1..z_{d+1}` in node order.
pub fn noise_to_csv(data: &LabeledDataset) -> String {
    let width = data.z_true.first().map_or(0, Vec::len);
    let mut out = String::new();
    let header: Vec<String> = (1..=width).map(|j| format!("z_{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in &data.z_true {
        let fields: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn noise_from_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty noise file".into()))?;
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse(format!("line {lineno}: expected {width} fields")));
        }
        let mut row = Vec::with_capacity(width);
        for f in fields {
            row.push(parse_f64(f, lineno)?);
        }
        out.push(row);
    }
    Ok(out)
}

/// Dataset CSV with the cluster label appended as a final column.
pub fn labeled_to_csv(data: &LabeledDataset, labels: &[usize]) -> String {
    assert_eq!(labels.len(), data.len());
    let base = dataset_to_csv(data);
    let mut lines = base.lines();
    let mut out = String::new();
    out.push_str(lines.next().unwrap());
    out.push_str(",cluster_label\n");
    for (line, &label) in lines.zip(labels) {
        out.push_str(line);
        out.push_str(&format!(",{label}\n"));
    }
    out
}

/// Parse a labeled dataset CSV back into the dataset and its label column.
pub fn labeled_from_csv(text: &str) -> Result<(LabeledDataset, Vec<usize>)> {
    let mut stripped = String::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (rest, last) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::Parse(format!("line {lineno}: missing label column")))?;
        if lineno == 0 {
            if last != "cluster_label" {
                return Err(Error::Parse(format!("unexpected label header {last:?}")));
            }
        } else {
            labels.push(
                last.trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {lineno}: bad label {last:?}")))?,
            );
        }
        stripped.push_str(rest);
        stripped.push('\n');
    }
    let data = dataset_from_csv(&stripped)?;
    Ok((data, labels))
}
