//! Serialization helpers: matrices as row-major nested arrays, JSON files with
//! field-path error messages, and deterministic number formatting.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Row-major nested arrays into a matrix; rows must share a length.
pub fn from_rows(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(format!("row {i} has {} entries, expected {cols}", r.len()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// `DMatrix` as `[[row 0], [row 1], ...]`.
pub mod matrix_rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub mod matrix_rows_opt {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<DMatrix<f64>>, D::Error> {
        match Option::<Vec<Vec<f64>>>::deserialize(d)? {
            None => Ok(None),
            Some(rows) => from_rows(&rows).map(Some).map_err(serde::de::Error::custom),
        }
    }
}

pub mod matrix_rows_vec {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
        ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<DMatrix<f64>>, D::Error> {
        Vec::<Vec<Vec<f64>>>::deserialize(d)?
            .iter()
            .enumerate()
            .map(|(k, rows)| from_rows(rows).map_err(|e| serde::de::Error::custom(format!("matrix {k}: {e}"))))
            .collect()
    }
}

/// `DVector` as a flat array.
pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Parse JSON text, reporting the path of the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Config(format!(
            "{source}: field `{path}`: {inner} (line {}, column {})",
            inner.line(),
            inner.column()
        ))
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_json(&text, &path.display().to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Shortest round-trip scientific notation, used for all CSV output.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Holder {
        #[serde(with = "matrix_rows")]
        m: DMatrix<f64>,
    }

    #[test]
    fn matrix_round_trip() {
        let h = Holder {
            m: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        };
        let text = serde_json::to_string(&h).unwrap();
        assert_eq!(text, r#"{"m":[[1.0,2.0,3.0],[4.0,5.0,6.0]]}"#);
        let back: Holder = parse_json(&text, "test").unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn ragged_rows_name_the_field() {
        let err = parse_json::<Holder>(r#"{"m": [[1, 2], [3]]}"#, "cfg").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`m`"), "{msg}");
        assert!(msg.contains("row 1 has 1 entries, expected 2"), "{msg}");
    }
}
