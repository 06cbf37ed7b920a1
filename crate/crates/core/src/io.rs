//! JSON formats.
//!
//! Matrices: `{"rows": R, "cols": C, "data": [[re, im], ...]}` in row-major
//! order. Density matrices may carry `"dims": [m, n]`. Isometry tuples are
//! JSON arrays of matrices.

use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stiefel::IsometryTuple;
use crate::tensor::{ComplexMatrix, ComplexVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 2]>,
}

impl MatrixJson {
    pub fn with_dims(mut self, m: usize, n: usize) -> Self {
        self.dims = Some([m, n]);
        self
    }
}

impl From<&ComplexMatrix> for MatrixJson {
    fn from(a: &ComplexMatrix) -> Self {
        let mut data = Vec::with_capacity(a.len());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let z = a[(i, j)];
                data.push([z.re, z.im]);
            }
        }
        Self {
            rows: a.nrows(),
            cols: a.ncols(),
            data,
            dims: None,
        }
    }
}

impl From<&ComplexVector> for MatrixJson {
    fn from(v: &ComplexVector) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.iter().map(|z| [z.re, z.im]).collect(),
            dims: None,
        }
    }
}

impl TryFrom<MatrixJson> for ComplexMatrix {
    type Error = Error;

    fn try_from(json: MatrixJson) -> Result<Self> {
        let expected = json.rows.checked_mul(json.cols).ok_or_else(|| Error::Parse("matrix too large".into()))?;
        if json.data.len() != expected {
            return Err(Error::Parse(format!(
                "{}x{} matrix needs {expected} entries, found {}",
                json.rows,
                json.cols,
                json.data.len()
            )));
        }
        if let Some(k) = json.data.iter().position(|[re, im]| !re.is_finite() || !im.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(ComplexMatrix::from_fn(json.rows, json.cols, |i, j| {
            let [re, im] = json.data[i * json.cols + j];
            Complex64::new(re, im)
        }))
    }
}

impl TryFrom<Vec<MatrixJson>> for IsometryTuple {
    type Error = Error;

    fn try_from(list: Vec<MatrixJson>) -> Result<Self> {
        let components = list.into_iter().map(ComplexMatrix::try_from).collect::<Result<Vec<_>>>()?;
        IsometryTuple::new(components)
    }
}

impl From<IsometryTuple> for Vec<MatrixJson> {
    fn from(v: IsometryTuple) -> Self {
        v.components().iter().map(MatrixJson::from).collect()
    }
}

/// Parses a column vector, accepting either an `N×1` or a `1×N` matrix.
pub fn vector_from_json(json: MatrixJson) -> Result<ComplexVector> {
    let a = ComplexMatrix::try_from(json)?;
    if a.ncols() == 1 {
        Ok(a.column(0).into_owned())
    } else if a.nrows() == 1 {
        Ok(a.row(0).transpose())
    } else {
        Err(Error::Shape(format!("expected a vector, got {}x{}", a.nrows(), a.ncols())))
    }
}

pub fn parse_matrix(text: &str) -> Result<ComplexMatrix> {
    ComplexMatrix::try_from(serde_json::from_str::<MatrixJson>(text)?)
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_layout_is_row_major() {
        let a = ComplexMatrix::from_fn(2, 3, |i, j| Complex64::new((3 * i + j) as f64, -(i as f64)));
        let json = serde_json::to_string(&MatrixJson::from(&a)).unwrap();
        assert!(json.starts_with(r#"{"rows":2,"cols":3,"data":[[0.0,-0.0],[1.0,-0.0],[2.0,-0.0],[3.0,-1.0]"#));
        assert_eq!(parse_matrix(&json).unwrap(), a);
    }

    #[test]
    fn rejects_length_mismatch_and_non_finite() {
        assert!(matches!(
            parse_matrix(r#"{"rows":2,"cols":2,"data":[[1,0],[0,0],[0,0]]}"#),
            Err(Error::Parse(_))
        ));
        let json = MatrixJson {
            rows: 1,
            cols: 2,
            data: vec![[1.0, 0.0], [f64::NAN, 0.0]],
            dims: None,
        };
        assert!(matches!(ComplexMatrix::try_from(json), Err(Error::NonFinite(1))));
        // JSON has no NaN literal; overflowing numbers are rejected by the reader
        assert!(parse_matrix(r#"{"rows":1,"cols":1,"data":[[1e999,0]]}"#).is_err());
    }

    #[test]
    fn tuple_round_trip() {
        let v = IsometryTuple::new(vec![ComplexMatrix::identity(2, 2)]).unwrap();
        let text = serde_json::to_string(&v).unwrap();
        assert!(text.starts_with('['));
        let back: IsometryTuple = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<IsometryTuple>(r#"[{"rows":1,"cols":1,"data":[[0.5,0]]}]"#).is_err());
    }
}
