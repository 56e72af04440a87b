//! Input parsing: numeric CSV matrices and plain-text PGM images.
//!
//! Every parse failure names the file, the 1-based line, and where it helps,
//! the column. Non-finite values are rejected: a monitoring pipeline must
//! never impute silently.

use std::path::Path;

use nalgebra::DMatrix;

use crate::CliError;

/// A parsed observation matrix: rows are observations, columns are streams.
pub struct Table {
    pub data: DMatrix<f64>,
    /// Column names when the file had a header row.
    pub names: Option<Vec<String>>,
}

fn parse_cell(path: &Path, line_no: usize, col: usize, raw: &str) -> Result<f64, CliError> {
    let trimmed = raw.trim();
    let value: f64 = trimmed.parse().map_err(|_| {
        CliError::data(format!(
            "{}: line {line_no}, column {col}: cannot parse {trimmed:?} as a number",
            path.display()
        ))
    })?;
    if !value.is_finite() {
        return Err(CliError::data(format!(
            "{}: line {line_no}, column {col}: non-finite value {trimmed:?} rejected",
            path.display()
        )));
    }
    Ok(value)
}

/// Read a CSV of numbers, one observation per row. With `header` the first
/// line supplies column names; every data row must match its width.
pub fn read_matrix_csv(path: &Path, header: bool) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let names = if header {
        let (_, first) = lines.next().ok_or_else(|| {
            CliError::data(format!("{}: empty file cannot hold a header", path.display()))
        })?;
        Some(first.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>())
    } else {
        None
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = names.as_ref().map(Vec::len);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let mut row = Vec::with_capacity(width.unwrap_or(8));
        for (c, cell) in line.split(',').enumerate() {
            row.push(parse_cell(path, line_no, c + 1, cell)?);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(CliError::data(format!(
                    "{}: line {line_no}: expected {w} fields, found {}",
                    path.display(),
                    row.len()
                )));
            }
            Some(_) => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{}: no data rows", path.display())));
    }
    let p = rows[0].len();
    let data = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    Ok(Table { data, names })
}

/// Read an image as an observation matrix: plain-text PGM (P2) when the file
/// starts with its magic, otherwise a headerless CSV of pixel intensities.
/// Each image row is one observation.
pub fn read_image_matrix(path: &Path) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    if !text.trim_start().starts_with("P2") {
        return read_matrix_csv(path, false);
    }
    // P2 grammar: magic, width, height, maxval, then width*height samples,
    // all whitespace separated; '#' starts a comment to end of line
    let mut tokens = Vec::new();
    for line in text.lines() {
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(str::to_string));
    }
    if tokens.first().map(String::as_str) != Some("P2") {
        return Err(CliError::data(format!("{}: not a P2 image", path.display())));
    }
    let header: Vec<usize> = tokens[1..]
        .iter()
        .take(3)
        .map(|t| {
            t.parse::<usize>().map_err(|_| {
                CliError::data(format!("{}: bad image dimension {t:?}", path.display()))
            })
        })
        .collect::<Result<_, _>>()?;
    let [width, height, _maxval] = header[..] else {
        return Err(CliError::data(format!("{}: truncated image header", path.display())));
    };
    if width == 0 || height == 0 {
        return Err(CliError::data(format!("{}: empty image", path.display())));
    }
    let samples = &tokens[4..];
    if samples.len() != width * height {
        return Err(CliError::data(format!(
            "{}: expected {} samples, found {}",
            path.display(),
            width * height,
            samples.len()
        )));
    }
    let mut data = DMatrix::zeros(height, width);
    for (k, tok) in samples.iter().enumerate() {
        let value: f64 = tok.parse().map_err(|_| {
            CliError::data(format!("{}: bad pixel value {tok:?}", path.display()))
        })?;
        if !value.is_finite() {
            return Err(CliError::data(format!(
                "{}: non-finite pixel value {tok:?}",
                path.display()
            )));
        }
        data[(k / width, k % width)] = value;
    }
    Ok(Table { data, names: None })
}
