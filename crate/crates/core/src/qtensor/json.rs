//! JSON encodings.
//!
//! A state is `{"dims":[..], "amps":[[re,im],..]}`. An operator is
//! `{"factors":[F1, F2, ..]}` where each factor is a row-major list of
//! `[re,im]` pairs. Nested rows and bare reals are accepted on input.

use serde::{Deserialize, Serialize};

use super::linalg::{c, CMat, C64};
use super::{LocalOperator, PureState};
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexRepr {
    Pair([f64; 2]),
    Real(f64),
}

impl From<ComplexRepr> for C64 {
    fn from(v: ComplexRepr) -> Self {
        match v {
            ComplexRepr::Pair([re, im]) => c(re, im),
            ComplexRepr::Real(re) => c(re, 0.0),
        }
    }
}

impl From<C64> for ComplexRepr {
    fn from(z: C64) -> Self {
        ComplexRepr::Pair([z.re, z.im])
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum MatrixRepr {
    Flat(Vec<ComplexRepr>),
    Nested(Vec<Vec<ComplexRepr>>),
}

fn is_perfect_square(n: usize) -> bool {
    let d = (n as f64).sqrt().round() as usize;
    d * d == n && n > 0
}

impl<'de> Deserialize<'de> for MatrixRepr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        // Flat pairs first; a non-square flat list falls back to nested rows.
        if let Ok(flat) = serde_json::from_value::<Vec<ComplexRepr>>(v.clone()) {
            if is_perfect_square(flat.len()) {
                return Ok(MatrixRepr::Flat(flat));
            }
        }
        serde_json::from_value::<Vec<Vec<ComplexRepr>>>(v)
            .map(MatrixRepr::Nested)
            .map_err(serde::de::Error::custom)
    }
}

impl MatrixRepr {
    pub fn into_square(self) -> Result<CMat> {
        match self {
            MatrixRepr::Flat(v) => {
                let d = (v.len() as f64).sqrt().round() as usize;
                if !is_perfect_square(v.len()) {
                    return Err(Error::Parse(format!("{} entries do not form a square matrix", v.len())));
                }
                let data: Vec<C64> = v.into_iter().map(C64::from).collect();
                Ok(CMat::from_row_slice(d, d, &data))
            }
            MatrixRepr::Nested(rows) => {
                let r = rows.len();
                if r == 0 || rows.iter().any(|row| row.len() != r) {
                    return Err(Error::Parse("nested matrix must be square".into()));
                }
                let data: Vec<C64> = rows.into_iter().flatten().map(C64::from).collect();
                Ok(CMat::from_row_slice(r, r, &data))
            }
        }
    }
}

impl From<&CMat> for MatrixRepr {
    fn from(m: &CMat) -> Self {
        let mut flat = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                flat.push(m[(i, j)].into());
            }
        }
        MatrixRepr::Flat(flat)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateRepr {
    pub dims: Vec<usize>,
    pub amps: Vec<ComplexRepr>,
}

impl TryFrom<StateRepr> for PureState {
    type Error = Error;
    fn try_from(r: StateRepr) -> Result<Self> {
        PureState::new(r.dims, r.amps.into_iter().map(C64::from).collect())
    }
}

impl From<PureState> for StateRepr {
    fn from(s: PureState) -> Self {
        StateRepr { dims: s.dims().to_vec(), amps: s.amps().iter().map(|&z| z.into()).collect() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorRepr {
    pub factors: Vec<MatrixRepr>,
}

impl TryFrom<OperatorRepr> for LocalOperator {
    type Error = Error;
    fn try_from(r: OperatorRepr) -> Result<Self> {
        let factors = r.factors.into_iter().map(MatrixRepr::into_square).collect::<Result<Vec<_>>>()?;
        LocalOperator::new(factors)
    }
}

impl From<LocalOperator> for OperatorRepr {
    fn from(op: LocalOperator) -> Self {
        OperatorRepr { factors: op.factors().iter().map(MatrixRepr::from).collect() }
    }
}

impl Serialize for PureState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateRepr::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PureState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = StateRepr::deserialize(d)?;
        PureState::try_from(r).map_err(serde::de::Error::custom)
    }
}

impl Serialize for LocalOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorRepr::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for LocalOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = OperatorRepr::deserialize(d)?;
        LocalOperator::try_from(r).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for square complex matrices.
pub mod matrix {
    use super::*;

    pub fn serialize<S: serde::Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
        MatrixRepr::deserialize(d)?.into_square().map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for lists of square complex matrices.
pub mod matrix_list {
    use super::*;

    pub fn serialize<S: serde::Serializer>(m: &[CMat], s: S) -> std::result::Result<S::Ok, S::Error> {
        m.iter().map(MatrixRepr::from).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<CMat>, D::Error> {
        Vec::<MatrixRepr>::deserialize(d)?
            .into_iter()
            .map(|r| r.into_square().map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Serde adapter for complex scalars as `[re, im]`.
pub mod complex {
    use super::*;

    pub fn serialize<S: serde::Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<C64, D::Error> {
        Ok(ComplexRepr::deserialize(d)?.into())
    }
}

pub fn matrix_to_value(m: &CMat) -> serde_json::Value {
    serde_json::to_value(MatrixRepr::from(m)).expect("plain data")
}
