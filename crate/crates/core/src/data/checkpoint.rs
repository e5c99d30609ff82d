//! Versioned text checkpoints.
//!
//! Line 1 is the magic `DGPCKPT 1`. Line 2 describes the model kind and its
//! dimensions and flags. Every following line is one parameter tensor:
//! name, shape, then the entries with 17 significant digits.

use std::fs;
use std::path::Path;

use super::io::format_f64;
use super::DataError;
use crate::propagation::{DgpModel, GcnStack, Normalization};
use crate::sparse::DenseMatrix;
use crate::training::Model;

const MAGIC: &str = "DGPCKPT 1";

/// Writes the model plus the graph flags needed to rebuild its operators.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &Model,
    two_phase: bool,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = String::from(MAGIC);
    out.push('\n');
    match model {
        Model::Dgp(m) => {
            out.push_str(&format!(
                "dgp S={} F={} P={} K={} weighted={} two_phase={} slope={} dropout={}\n",
                m.input_dim(),
                m.hidden_dim(),
                m.output_dim(),
                m.hop_cap(),
                u8::from(m.weighted()),
                u8::from(two_phase),
                m.negative_slope(),
                m.dropout_rate(),
            ));
            push_matrix(&mut out, "theta_d", &m.theta_d);
            push_matrix(&mut out, "theta_a", &m.theta_a);
            push_vector(&mut out, "w_d", &m.w_d);
            push_vector(&mut out, "w_a", &m.w_a);
        }
        Model::Gcn(stack) => {
            let mut dims: Vec<String> = vec![stack.input_dim().to_string()];
            for layer in stack.layers() {
                dims.push(layer.n_cols().to_string());
            }
            out.push_str(&format!(
                "gcn dims={} norm={} slope={} dropout={}\n",
                dims.join(","),
                stack.normalization().as_str(),
                stack.negative_slope(),
                stack.dropout_rate(),
            ));
            for (i, layer) in stack.layers().iter().enumerate() {
                push_matrix(&mut out, &format!("theta_{i}"), layer);
            }
        }
    }
    fs::write(path, out).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn push_matrix(out: &mut String, name: &str, m: &DenseMatrix) {
    out.push_str(&format!("{name} {} {}", m.n_rows(), m.n_cols()));
    for &v in m.data() {
        out.push(' ');
        out.push_str(&format_f64(v));
    }
    out.push('\n');
}

fn push_vector(out: &mut String, name: &str, v: &[f64]) {
    out.push_str(&format!("{name} {}", v.len()));
    for &x in v {
        out.push(' ');
        out.push_str(&format_f64(x));
    }
    out.push('\n');
}

/// Reads a checkpoint back. Returns the model and the two-phase flag.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, bool), DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: display.clone(),
        source,
    })?;
    let mut lines = text.lines().enumerate();

    let (_, magic) = lines.next().ok_or_else(|| DataError::EmptyFile {
        path: display.clone(),
    })?;
    if magic != MAGIC {
        return Err(DataError::MalformedLine {
            path: display,
            line: 1,
            reason: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let (_, header) = lines.next().ok_or_else(|| DataError::MalformedLine {
        path: display.clone(),
        line: 2,
        reason: "missing model line".into(),
    })?;
    let mut tokens = header.split_whitespace();
    let kind = tokens.next().unwrap_or_default();
    let mut fields = std::collections::HashMap::new();
    for token in tokens {
        let (key, value) = token.split_once('=').ok_or_else(|| DataError::MalformedLine {
            path: display.clone(),
            line: 2,
            reason: format!("expected key=value, got {token:?}"),
        })?;
        fields.insert(key.to_string(), value.to_string());
    }
    let field = |key: &str| -> Result<String, DataError> {
        fields.get(key).cloned().ok_or_else(|| DataError::MalformedLine {
            path: display.clone(),
            line: 2,
            reason: format!("missing field {key:?}"),
        })
    };
    let parse_usize = |key: &str| -> Result<usize, DataError> {
        field(key)?.parse().map_err(|_| DataError::MalformedLine {
            path: display.clone(),
            line: 2,
            reason: format!("bad integer for {key:?}"),
        })
    };
    let parse_f64_field = |key: &str| -> Result<f64, DataError> {
        field(key)?.parse().map_err(|_| DataError::MalformedLine {
            path: display.clone(),
            line: 2,
            reason: format!("bad number for {key:?}"),
        })
    };

    let mut tensors = std::collections::HashMap::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let mut parts = raw.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| DataError::MalformedLine {
                path: display.clone(),
                line: line_no,
                reason: "missing tensor name".into(),
            })?
            .to_string();
        let rest: Vec<&str> = parts.collect();
        tensors.insert(name, (line_no, rest.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
    }

    let take_matrix =
        |tensors: &std::collections::HashMap<String, (usize, Vec<String>)>,
         name: &str|
         -> Result<DenseMatrix, DataError> {
            let (line, tokens) = tensors.get(name).ok_or_else(|| DataError::MalformedLine {
                path: display.clone(),
                line: 0,
                reason: format!("missing tensor {name:?}"),
            })?;
            if tokens.len() < 2 {
                return Err(DataError::MalformedLine {
                    path: display.clone(),
                    line: *line,
                    reason: "missing shape".into(),
                });
            }
            let rows: usize = tokens[0].parse().map_err(|_| DataError::MalformedLine {
                path: display.clone(),
                line: *line,
                reason: "bad row count".into(),
            })?;
            let cols: usize = tokens[1].parse().map_err(|_| DataError::MalformedLine {
                path: display.clone(),
                line: *line,
                reason: "bad column count".into(),
            })?;
            if tokens.len() != 2 + rows * cols {
                return Err(DataError::WrongArity {
                    path: display.clone(),
                    line: *line,
                    expected: rows * cols,
                    found: tokens.len() - 2,
                });
            }
            let mut data = Vec::with_capacity(rows * cols);
            for token in &tokens[2..] {
                data.push(token.parse::<f64>().map_err(|_| DataError::BadNumber {
                    path: display.clone(),
                    line: *line,
                    token: token.clone(),
                })?);
            }
            Ok(DenseMatrix::from_vec(rows, cols, data))
        };
    let take_vector = |tensors: &std::collections::HashMap<String, (usize, Vec<String>)>,
                       name: &str|
     -> Result<Vec<f64>, DataError> {
        let (line, tokens) = tensors.get(name).ok_or_else(|| DataError::MalformedLine {
            path: display.clone(),
            line: 0,
            reason: format!("missing tensor {name:?}"),
        })?;
        if tokens.is_empty() {
            return Err(DataError::MalformedLine {
                path: display.clone(),
                line: *line,
                reason: "missing length".into(),
            });
        }
        let len: usize = tokens[0].parse().map_err(|_| DataError::MalformedLine {
            path: display.clone(),
            line: *line,
            reason: "bad length".into(),
        })?;
        if tokens.len() != 1 + len {
            return Err(DataError::WrongArity {
                path: display.clone(),
                line: *line,
                expected: len,
                found: tokens.len() - 1,
            });
        }
        tokens[1..]
            .iter()
            .map(|t| {
                t.parse::<f64>().map_err(|_| DataError::BadNumber {
                    path: display.clone(),
                    line: *line,
                    token: t.clone(),
                })
            })
            .collect()
    };

    match kind {
        "dgp" => {
            let slope = parse_f64_field("slope")?;
            let dropout = parse_f64_field("dropout")?;
            let weighted = parse_usize("weighted")? != 0;
            let two_phase = parse_usize("two_phase")? != 0;
            let theta_d = take_matrix(&tensors, "theta_d")?;
            let theta_a = take_matrix(&tensors, "theta_a")?;
            let w_d = take_vector(&tensors, "w_d")?;
            let w_a = take_vector(&tensors, "w_a")?;
            let expect = (
                parse_usize("S")?,
                parse_usize("F")?,
                parse_usize("P")?,
                parse_usize("K")?,
            );
            let found = (theta_d.n_rows(), theta_d.n_cols(), theta_a.n_cols(), w_d.len() - 1);
            if expect != found {
                return Err(DataError::MalformedLine {
                    path: display.clone(),
                    line: 2,
                    reason: format!("declared dims {expect:?} do not match tensors {found:?}"),
                });
            }
            let model = DgpModel::new(theta_d, theta_a, w_d, w_a, slope, dropout, weighted)
                .map_err(|e| DataError::MalformedLine {
                    path: display.clone(),
                    line: 2,
                    reason: e.to_string(),
                })?;
            Ok((Model::Dgp(model), two_phase))
        }
        "gcn" => {
            let slope = parse_f64_field("slope")?;
            let dropout = parse_f64_field("dropout")?;
            let norm = Normalization::parse(&field("norm")?).ok_or_else(|| {
                DataError::MalformedLine {
                    path: display.clone(),
                    line: 2,
                    reason: "bad normalization".into(),
                }
            })?;
            let dims: Vec<usize> = field("dims")?
                .split(',')
                .map(|d| {
                    d.parse().map_err(|_| DataError::MalformedLine {
                        path: display.clone(),
                        line: 2,
                        reason: format!("bad dims entry {d:?}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            let mut layers = Vec::with_capacity(dims.len().saturating_sub(1));
            for i in 0..dims.len().saturating_sub(1) {
                layers.push(take_matrix(&tensors, &format!("theta_{i}"))?);
            }
            let stack = GcnStack::new(layers, norm, slope, dropout).map_err(|e| {
                DataError::MalformedLine {
                    path: display.clone(),
                    line: 2,
                    reason: e.to_string(),
                }
            })?;
            Ok((Model::Gcn(stack), true))
        }
        other => Err(DataError::MalformedLine {
            path: display,
            line: 2,
            reason: format!("unknown model kind {other:?}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    #[test]
    fn dgp_roundtrip_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut model = DgpModel::glorot(6, 8, 5, 3, true, 0.2, 0.5, &mut rng);
        model.w_d = vec![0.1, -0.2, 0.3, 1.0 / 3.0];
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &Model::Dgp(model.clone()), false).unwrap();
        let (loaded, two_phase) = load_checkpoint(&path).unwrap();
        assert!(!two_phase);
        match loaded {
            Model::Dgp(m) => {
                assert_eq!(m.theta_d.data(), model.theta_d.data());
                assert_eq!(m.theta_a.data(), model.theta_a.data());
                assert_eq!(m.w_d, model.w_d);
                assert_eq!(m.w_a, model.w_a);
                assert!(m.weighted());
            }
            _ => panic!("expected a dgp checkpoint"),
        }
    }

    #[test]
    fn gcn_roundtrip_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let stack = GcnStack::glorot(&[4, 6, 6, 3], Normalization::Sym, 0.2, 0.5, &mut rng).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &Model::Gcn(stack.clone()), true).unwrap();
        let (loaded, _) = load_checkpoint(&path).unwrap();
        match loaded {
            Model::Gcn(s) => {
                assert_eq!(s.layers().len(), 3);
                for (a, b) in s.layers().iter().zip(stack.layers()) {
                    assert_eq!(a.data(), b.data());
                }
                assert_eq!(s.normalization(), Normalization::Sym);
            }
            _ => panic!("expected a gcn checkpoint"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        std::fs::write(&path, "NOTACKPT 1\n").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(DataError::MalformedLine { line: 1, .. })
        ));
    }
}
