// SPDX-License-Identifier: Apache-2.0

//! Plain-text matrices: a `rows cols` header followed by the entries in
//! row-major order, separated by any whitespace. Entries are real numbers or
//! `re,im` pairs. Text after `#` on a line is ignored.

use std::path::Path;

use chernoff_core::{DenseMatrix, C64};

use crate::error::{KitError, KitResult};

pub fn parse_matrix(text: &str) -> Result<DenseMatrix, String> {
    let mut tokens = text.lines().flat_map(|line| line.split('#').next().unwrap_or("").split_whitespace());
    let mut header = |what: &str| -> Result<usize, String> {
        let tok = tokens.next().ok_or_else(|| format!("missing {what} in header"))?;
        tok.parse().map_err(|_| format!("invalid {what} {tok:?}"))
    };
    let rows = header("row count")?;
    let cols = header("column count")?;
    let data = tokens
        .enumerate()
        .map(|(i, tok)| parse_entry(tok).ok_or_else(|| format!("entry {i}: cannot parse {tok:?}")))
        .collect::<Result<Vec<C64>, String>>()?;
    if data.len() != rows * cols {
        return Err(format!("expected {} entries for a {rows}x{cols} matrix, found {}", rows * cols, data.len()));
    }
    if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err("entries must be finite".to_string());
    }
    DenseMatrix::from_row_major(rows, cols, data).map_err(|e| e.to_string())
}

fn parse_entry(tok: &str) -> Option<C64> {
    match tok.split_once(',') {
        Some((re, im)) => Some(C64::new(re.parse().ok()?, im.parse().ok()?)),
        None => Some(C64::new(tok.parse().ok()?, 0.0)),
    }
}

pub fn read_matrix_file(path: &Path) -> KitResult<DenseMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| KitError::io(path, e))?;
    parse_matrix(&text).map_err(|message| KitError::Format { path: path.to_path_buf(), message })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_real_and_complex_entries() {
        let m = parse_matrix("2 2 # header\n-1 0\n0,1 -2.5\n").unwrap();
        assert_eq!(m[(0, 0)], C64::new(-1.0, 0.0));
        assert_eq!(m[(1, 0)], C64::new(0.0, 1.0));
        assert_eq!(m[(1, 1)], C64::new(-2.5, 0.0));
    }

    #[test]
    fn rejects_wrong_counts_and_garbage() {
        assert!(parse_matrix("2 2\n1 2 3").unwrap_err().contains("expected 4"));
        assert!(parse_matrix("2 x").is_err());
        assert!(parse_matrix("1 1\nabc").unwrap_err().contains("abc"));
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("1 1\nNaN").is_err());
    }
}
