//! JSON model files.
//!
//! ```json
//! {
//!   "format": "dlmpc-model/1",
//!   "dt": 0.2,
//!   "state_dims": [2, 2],
//!   "input_dims": [1, 1],
//!   "a": [[[a00 row-major...], [a01 ...]], [[a10 ...], [a11 ...]]],
//!   "b": [[[b00 ...], [b01 ...]], [[b10 ...], [b11 ...]]]
//! }
//! ```
//!
//! `a[i][j]` holds block `(i, j)` of `A` in row-major order (`n_i * n_j`
//! numbers), likewise `b[i][j]` with `n_i * p_j` numbers. Floats are written
//! in shortest round-trip form, so binary64 values survive a write/read
//! cycle bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{SubsystemPartition, SystemModel};
use crate::error::{Error, Result};
use crate::Scalar;

pub const MODEL_FORMAT: &str = "dlmpc-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ModelFile<T: Scalar> {
    pub format: String,
    pub dt: f64,
    pub state_dims: Vec<usize>,
    pub input_dims: Vec<usize>,
    pub a: Vec<Vec<Vec<T>>>,
    pub b: Vec<Vec<Vec<T>>>,
}

fn row_major<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    m.transpose().as_slice().to_vec()
}

impl<T: Scalar> ModelFile<T> {
    pub fn from_model(model: &SystemModel<T>) -> Self {
        let count = model.count();
        let blocks = |get: fn(&SystemModel<T>, usize, usize) -> &DMatrix<T>| -> Vec<Vec<Vec<T>>> {
            (0..count).map(|i| (0..count).map(|j| row_major(get(model, i, j))).collect()).collect()
        };
        Self {
            format: MODEL_FORMAT.to_string(),
            dt: model.dt(),
            state_dims: model.partition().state_dims().to_vec(),
            input_dims: model.partition().input_dims().to_vec(),
            a: blocks(SystemModel::a_block),
            b: blocks(SystemModel::b_block),
        }
    }

    pub fn into_model(self) -> Result<SystemModel<T>> {
        if self.format != MODEL_FORMAT {
            return Err(Error::InvalidArgument(format!("unknown model format {:?}", self.format)));
        }
        let partition = SubsystemPartition::new(self.state_dims, self.input_dims)?;
        let count = partition.count();
        let unpack = |blocks: Vec<Vec<Vec<T>>>, cols: &dyn Fn(usize) -> usize, what: &str| {
            if blocks.len() != count || blocks.iter().any(|r| r.len() != count) {
                return Err(Error::Dimension(format!("{what} must hold {count}x{count} blocks")));
            }
            let mut out = Vec::with_capacity(count * count);
            for (i, row) in blocks.into_iter().enumerate() {
                for (j, values) in row.into_iter().enumerate() {
                    let (r, c) = (partition.state_dim(i), cols(j));
                    if values.len() != r * c {
                        return Err(Error::Dimension(format!(
                            "{what} block ({i},{j}) has {} entries, expected {}",
                            values.len(),
                            r * c
                        )));
                    }
                    out.push(DMatrix::from_row_slice(r, c, &values));
                }
            }
            Ok(out)
        };
        let a = unpack(self.a, &|j| partition.state_dim(j), "A")?;
        let b = unpack(self.b, &|j| partition.input_dim(j), "B")?;
        SystemModel::from_blocks(partition, a, b, self.dt)
    }
}

impl<T: Scalar> SystemModel<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile<T>>(text)?.into_model()
    }
}

pub fn write_model<T: Scalar>(path: impl AsRef<Path>, model: &SystemModel<T>) -> Result<()> {
    fs::write(path, model.to_json()?)?;
    Ok(())
}

pub fn read_model<T: Scalar>(path: impl AsRef<Path>) -> Result<SystemModel<T>> {
    SystemModel::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_pendulum_chain, PendulumParams};
    use proptest::prelude::*;

    #[test]
    fn file_round_trip() {
        let m = build_pendulum_chain::<f64>(3, PendulumParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        write_model(&path, &m).unwrap();
        assert_eq!(read_model::<f64>(&path).unwrap(), m);
    }

    #[test]
    fn rejects_malformed_blocks() {
        let m = build_pendulum_chain::<f64>(2, PendulumParams::default()).unwrap();
        let mut file = ModelFile::from_model(&m);
        file.a[0][1].pop();
        assert!(matches!(file.into_model(), Err(Error::Dimension(_))));
        let mut file = ModelFile::from_model(&m);
        file.format = "other".into();
        assert!(file.into_model().is_err());
    }

    proptest! {
        #[test]
        fn binary64_values_survive_bit_exact(values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 8)) {
            let part = SubsystemPartition::uniform(2, 1, 1).unwrap();
            let a = DMatrix::from_row_slice(2, 2, &values[..4]);
            let b = DMatrix::from_row_slice(2, 2, &values[4..]);
            let m = SystemModel::from_dense(part, &a, &b, 0.3).unwrap();
            let back = SystemModel::<f64>::from_json(&m.to_json().unwrap()).unwrap();
            for (x, y) in m.dense_a().iter().chain(m.dense_b().iter()).zip(back.dense_a().iter().chain(back.dense_b().iter())) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
