//! Text loaders and writers: edge TSV, numeric tables, feature batches.
//!
//! Edge lists hold one `child<TAB>parent` pair per line; `#`-prefixed lines
//! are comments. Tables start with a `<rows> <cols>` header followed by one
//! `<id> <v1> ... <vcols>` line per row.

use std::fs;
use std::path::Path;

use super::DataError;
use crate::sparse::DenseMatrix;
use crate::taxonomy::TaxonomyDag;
use crate::zeroshot::FeatureBatch;

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), DataError> {
    fs::write(path, contents).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// 17 significant digits; parses back to the identical 64-bit float.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(path: &str, line: usize, token: &str) -> Result<f64, DataError> {
    let v: f64 = token.parse().map_err(|_| DataError::BadNumber {
        path: path.to_string(),
        line,
        token: token.to_string(),
    })?;
    if !v.is_finite() {
        return Err(DataError::BadNumber {
            path: path.to_string(),
            line,
            token: token.to_string(),
        });
    }
    Ok(v)
}

/// Loads `(child_id, parent_id)` pairs in file order.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Vec<(String, String)>, DataError> {
    let path = path.as_ref();
    let text = read(path)?;
    let display = path.display().to_string();
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.starts_with('#') {
            continue;
        }
        let mut fields = raw.split('\t');
        let (child, parent) = match (fields.next(), fields.next(), fields.next()) {
            (Some(c), Some(p), None) if !c.is_empty() && !p.is_empty() => (c, p),
            _ => {
                return Err(DataError::MalformedLine {
                    path: display,
                    line: line_no,
                    reason: "expected child<TAB>parent".into(),
                })
            }
        };
        pairs.push((child.to_string(), parent.to_string()));
    }
    if pairs.is_empty() {
        return Err(DataError::EmptyFile { path: display });
    }
    Ok(pairs)
}

pub fn save_edge_list(
    path: impl AsRef<Path>,
    pairs: &[(String, String)],
) -> Result<(), DataError> {
    let mut out = String::new();
    for (child, parent) in pairs {
        out.push_str(child);
        out.push('\t');
        out.push_str(parent);
        out.push('\n');
    }
    write(path.as_ref(), &out)
}

/// Loads a table with unique row identifiers.
pub fn load_table(path: impl AsRef<Path>) -> Result<(Vec<String>, DenseMatrix), DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let (ids, matrix) = load_table_inner(path, &display, true)?;
    Ok((ids, matrix))
}

fn load_table_inner(
    path: &Path,
    display: &str,
    unique_ids: bool,
) -> Result<(Vec<String>, DenseMatrix), DataError> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| DataError::EmptyFile {
        path: display.to_string(),
    })?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(DataError::MalformedLine {
            path: display.to_string(),
            line: 1,
            reason: "expected header `<rows> <cols>`".into(),
        });
    }
    let parse_dim = |tok: &str| -> Result<usize, DataError> {
        tok.parse().map_err(|_| DataError::MalformedLine {
            path: display.to_string(),
            line: 1,
            reason: format!("bad dimension {tok:?}"),
        })
    };
    let n_rows = parse_dim(dims[0])?;
    let n_cols = parse_dim(dims[1])?;

    let mut ids = Vec::with_capacity(n_rows);
    let mut data = Vec::with_capacity(n_rows * n_cols);
    let mut seen = std::collections::HashSet::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let mut tokens = raw.split_whitespace();
        let id = tokens.next().ok_or_else(|| DataError::MalformedLine {
            path: display.to_string(),
            line: line_no,
            reason: "missing identifier".into(),
        })?;
        if unique_ids && !seen.insert(id.to_string()) {
            return Err(DataError::DuplicateId {
                path: display.to_string(),
                line: line_no,
                id: id.to_string(),
            });
        }
        let mut count = 0;
        for token in tokens {
            data.push(parse_f64(display, line_no, token)?);
            count += 1;
        }
        if count != n_cols {
            return Err(DataError::WrongArity {
                path: display.to_string(),
                line: line_no,
                expected: n_cols,
                found: count,
            });
        }
        ids.push(id.to_string());
    }
    if ids.len() != n_rows {
        return Err(DataError::RowCountMismatch {
            path: display.to_string(),
            declared: n_rows,
            found: ids.len(),
        });
    }
    Ok((ids, DenseMatrix::from_vec(n_rows, n_cols, data)))
}

pub fn save_table(
    path: impl AsRef<Path>,
    ids: &[String],
    matrix: &DenseMatrix,
) -> Result<(), DataError> {
    assert_eq!(ids.len(), matrix.n_rows(), "one identifier per row");
    let mut out = format!("{} {}\n", matrix.n_rows(), matrix.n_cols());
    for (id, r) in ids.iter().zip(0..matrix.n_rows()) {
        out.push_str(id);
        for &v in matrix.row(r) {
            out.push(' ');
            out.push_str(&format_f64(v));
        }
        out.push('\n');
    }
    write(path.as_ref(), &out)
}

/// Loads a feature table whose row identifiers are class ids (repeats
/// allowed) and maps them to graph node indices as labels.
pub fn load_features(
    path: impl AsRef<Path>,
    dag: &TaxonomyDag,
) -> Result<FeatureBatch, DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let (ids, matrix) = load_table_inner(path, &display, false)?;
    let mut labels = Vec::with_capacity(ids.len());
    for (row, id) in ids.iter().enumerate() {
        let node = dag.index_of(id).ok_or_else(|| DataError::UnknownId {
            path: display.clone(),
            line: row + 2,
            id: id.clone(),
        })?;
        labels.push(node);
    }
    FeatureBatch::new(matrix, labels)
        .map_err(|e| DataError::IdMismatch(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn edge_list_minimal() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("edges.tsv");
        std::fs::write(&path, "b\ta\n").unwrap();
        let pairs = load_edge_list(&path).unwrap();
        assert_eq!(pairs, vec![("b".to_string(), "a".to_string())]);
    }

    #[test]
    fn comment_only_file_is_empty() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("edges.tsv");
        std::fs::write(&path, "# nothing here\n# still nothing\n").unwrap();
        assert!(matches!(
            load_edge_list(&path),
            Err(DataError::EmptyFile { .. })
        ));
    }

    #[test]
    fn malformed_edge_carries_line_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("edges.tsv");
        std::fs::write(&path, "b\ta\nno-tab-here\n").unwrap();
        match load_edge_list(&path) {
            Err(DataError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed-line error, got {other:?}"),
        }
    }

    #[test]
    fn table_minimal() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.tbl");
        std::fs::write(&path, "1 2\na 0 1\n").unwrap();
        let (ids, m) = load_table(&path).unwrap();
        assert_eq!(ids, vec!["a".to_string()]);
        assert_eq!(m.row(0), &[0.0, 1.0]);
    }

    #[test]
    fn wrong_arity_names_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.tbl");
        std::fs::write(&path, "2 2\na 0 1\nb 0\n").unwrap();
        match load_table(&path) {
            Err(DataError::WrongArity { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected arity error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.tbl");
        std::fs::write(&path, "2 1\na 0\na 1\n").unwrap();
        assert!(matches!(load_table(&path), Err(DataError::DuplicateId { .. })));
    }

    #[test]
    fn non_finite_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.tbl");
        std::fs::write(&path, "1 1\na NaN\n").unwrap();
        assert!(matches!(load_table(&path), Err(DataError::BadNumber { .. })));
    }

    #[test]
    fn table_roundtrip_is_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.tbl");
        let ids: Vec<String> = (0..7).map(|i| format!("id{i}")).collect();
        let values: Vec<f64> = (0..21)
            .map(|i| (i as f64 * 0.123456789).sin() * 1e3_f64.powf((i % 5) as f64 - 2.0))
            .collect();
        let m = DenseMatrix::from_vec(7, 3, values);
        save_table(&path, &ids, &m).unwrap();
        let (ids2, m2) = load_table(&path).unwrap();
        assert_eq!(ids, ids2);
        assert_eq!(m.data(), m2.data());
    }
}
