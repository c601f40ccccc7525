//! JSON encodings shared by every serialized type: complex scalars as
//! `[re, im]`, matrices as arrays of rows, and content digests.

use crate::linalg::{matrix_from_rows, ComplexMatrix};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

/// Serde adapter for a complex scalar stored as `[re, im]`.
pub mod complex_pair {
    use super::*;

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

/// Serde adapter for a complex matrix stored as rows of `[re, im]` pairs.
pub mod matrix_rows {
    use super::*;

    pub fn to_rows(m: &ComplexMatrix) -> Vec<Vec<[f64; 2]>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect()
    }

    pub fn from_rows(rows: Vec<Vec<[f64; 2]>>) -> Result<ComplexMatrix, String> {
        let rows: Vec<Vec<Complex64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
            .collect();
        matrix_from_rows(&rows).map_err(|e| e.to_string())
    }

    pub fn serialize<S: Serializer>(m: &ComplexMatrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ComplexMatrix, D::Error> {
        from_rows(Vec::deserialize(d)?).map_err(D::Error::custom)
    }
}

/// Serde adapter for a list of matrices.
pub mod matrix_list {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[ComplexMatrix], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(matrix_rows::to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<ComplexMatrix>, D::Error> {
        let raw: Vec<Vec<Vec<[f64; 2]>>> = Vec::deserialize(d)?;
        raw.into_iter().map(|r| matrix_rows::from_rows(r).map_err(D::Error::custom)).collect()
    }
}

/// Serde adapter for an optional list of matrices.
pub mod opt_matrix_list {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &Option<Vec<ComplexMatrix>>, s: S) -> Result<S::Ok, S::Error> {
        ms.as_ref()
            .map(|v| v.iter().map(matrix_rows::to_rows).collect::<Vec<_>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<ComplexMatrix>>, D::Error> {
        let raw: Option<Vec<Vec<Vec<[f64; 2]>>>> = Option::deserialize(d)?;
        raw.map(|v| {
            v.into_iter()
                .map(|r| matrix_rows::from_rows(r).map_err(D::Error::custom))
                .collect()
        })
        .transpose()
    }
}

/// Serde adapter for an optional matrix.
pub mod opt_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<ComplexMatrix>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(matrix_rows::to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ComplexMatrix>, D::Error> {
        let raw: Option<Vec<Vec<[f64; 2]>>> = Option::deserialize(d)?;
        raw.map(|r| matrix_rows::from_rows(r).map_err(D::Error::custom)).transpose()
    }
}

/// Hex SHA-256 of a serializable value's canonical JSON text.
pub fn digest<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("serializable value");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Wrap {
        #[serde(with = "matrix_rows")]
        m: ComplexMatrix,
        #[serde(with = "complex_pair")]
        z: Complex64,
    }

    #[test]
    fn round_trip() {
        let w = Wrap {
            m: ComplexMatrix::from_row_slice(1, 2, &[c64(1.0, -2.0), c64(0.5, 0.0)]),
            z: c64(3.0, 4.0),
        };
        let text = serde_json::to_string(&w).unwrap();
        assert_eq!(text, r#"{"m":[[[1.0,-2.0],[0.5,0.0]]],"z":[3.0,4.0]}"#);
        let back: Wrap = serde_json::from_str(&text).unwrap();
        assert_eq!(back, w);
        assert_eq!(digest(&w), digest(&back));
    }

    #[test]
    fn ragged_matrix_rejected() {
        let err = serde_json::from_str::<Wrap>(r#"{"m":[[[1,0]],[]],"z":[0,0]}"#);
        assert!(err.is_err());
    }
}
