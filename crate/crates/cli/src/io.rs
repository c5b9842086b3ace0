use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use lcda::LabeledDataset;
use nalgebra::DVector;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub struct LoadedData {
    pub dataset: LabeledDataset,
    /// `sha256:` digest of the raw input bytes.
    pub fingerprint: String,
    pub feature_names: Vec<String>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn fingerprint(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

fn parse_value(field: &str, line: u64, col: &str) -> Result<f64, CliError> {
    field.trim().parse::<f64>().map_err(|_| {
        CliError::Input(format!("line {line}: column `{col}` has non-numeric value `{field}`"))
    })
}

/// Labeled CSV: header row, class id in the first column, numeric features
/// after it. With `group_mean`, rows sharing a class and a value of that
/// column are averaged into one observation and the column is dropped.
pub fn read_labeled(path: &Path, group_mean: Option<&str>) -> Result<LoadedData, CliError> {
    let bytes = read_bytes(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(bytes.as_slice());
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 {
        return Err(CliError::Input(format!(
            "{}: need a class column and at least one feature column",
            path.display()
        )));
    }
    let group_col = match group_mean {
        None => None,
        Some(name) => match headers.iter().position(|h| h.trim() == name) {
            Some(0) => return Err(CliError::Input("the group column cannot be the class column".into())),
            Some(i) => Some(i),
            None => return Err(CliError::Input(format!("no column named `{name}` for --group-mean"))),
        },
    };
    let feature_cols: Vec<usize> = (1..headers.len()).filter(|&c| Some(c) != group_col).collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| headers[c].trim().to_string()).collect();
    let p = feature_cols.len();
    if p == 0 {
        return Err(CliError::Input("no feature columns left".into()));
    }

    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut groups: HashMap<(String, String), (usize, usize)> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(CliError::Input(format!(
                "line {line}: expected {} columns, found {}",
                headers.len(),
                rec.len()
            )));
        }
        let class = rec[0].trim().to_string();
        if class.is_empty() {
            return Err(CliError::Input(format!("line {line}: empty class id")));
        }
        let vals = feature_cols
            .iter()
            .map(|&c| parse_value(&rec[c], line, &headers[c]))
            .collect::<Result<Vec<f64>, _>>()?;
        match group_col {
            None => rows.push((class, vals)),
            Some(g) => {
                let key = (class.clone(), rec[g].trim().to_string());
                match groups.get_mut(&key) {
                    Some((idx, count)) => {
                        for (acc, v) in rows[*idx].1.iter_mut().zip(&vals) {
                            *acc += v;
                        }
                        *count += 1;
                    }
                    None => {
                        groups.insert(key, (rows.len(), 1));
                        rows.push((class, vals));
                    }
                }
            }
        }
    }
    if group_col.is_some() {
        for &(idx, count) in groups.values() {
            rows[idx].1.iter_mut().for_each(|v| *v /= count as f64);
        }
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    let dataset = LabeledDataset::from_labeled_rows(p, &rows)?;
    Ok(LoadedData {
        dataset,
        fingerprint: fingerprint(&bytes),
        feature_names,
    })
}

/// Query CSV with a header and either `p` feature columns or an id column
/// followed by `p` features. Without ids, queries are numbered from 1.
pub fn read_queries(path: &Path, p: usize) -> Result<Vec<(String, DVector<f64>)>, CliError> {
    let bytes = read_bytes(path)?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(bytes.as_slice());
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    let has_id = match headers.len() {
        w if w == p => false,
        w if w == p + 1 => true,
        w => {
            return Err(CliError::Input(format!(
                "query file has {w} columns; the model expects {p} features (plus an optional id)"
            )))
        }
    };
    let offset = has_id as usize;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(CliError::Input(format!(
                "line {line}: expected {} columns, found {}",
                headers.len(),
                rec.len()
            )));
        }
        let id = if has_id {
            rec[0].trim().to_string()
        } else {
            (i + 1).to_string()
        };
        let vals = (0..p)
            .map(|c| parse_value(&rec[c + offset], line, &headers[c + offset]))
            .collect::<Result<Vec<f64>, _>>()?;
        out.push((id, DVector::from_vec(vals)));
    }
    Ok(out)
}

/// Writer to a file, or to stdout when `path` is `None` or `-`.
pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) if p != Path::new("-") => {
            let f = fs::File::create(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            Ok(Box::new(std::io::BufWriter::new(f)))
        }
        _ => Ok(Box::new(std::io::stdout().lock())),
    }
}

/// Full-precision decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x:?}")
    }
}

pub fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| "NA".into(), |v| v.to_string())
}

pub fn fmt_opt_f64(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), fmt_f64)
}
