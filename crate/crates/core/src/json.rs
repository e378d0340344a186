//! Complex matrices on the wire: entries are `[re, im]` pairs, rows outermost.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat};

pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

pub fn to_json(m: &CMat) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Parse a row-major matrix; `cols` is needed for zero-row matrices.
pub fn from_json(rows: &JsonMatrix, cols_hint: usize) -> Result<CMat> {
    let r = rows.len();
    let cols = rows.first().map(|row| row.len()).unwrap_or(cols_hint);
    if rows.iter().any(|row| row.len() != cols) {
        return Err(Error::Invalid("ragged matrix rows".into()));
    }
    Ok(CMat::from_fn(r, cols, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

pub mod cmat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_json(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
        let rows = JsonMatrix::deserialize(d)?;
        from_json(&rows, 0).map_err(serde::de::Error::custom)
    }
}

pub mod cmat_vec {
    use super::*;

    pub fn serialize<S: Serializer>(m: &[CMat], s: S) -> std::result::Result<S::Ok, S::Error> {
        m.iter().map(to_json).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<CMat>, D::Error> {
        let all = Vec::<JsonMatrix>::deserialize(d)?;
        all.iter()
            .map(|rows| from_json(rows, 0).map_err(serde::de::Error::custom))
            .collect()
    }
}

pub mod opt_cmat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<CMat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(to_json).serialize(s)
    }
}
