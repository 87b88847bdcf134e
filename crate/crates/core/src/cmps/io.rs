//! JSON record of a state: `{D, Q, R, params}` with matrices as row-major `[re, im]` pairs.
//! Floats are written in shortest round-trip form, so the record is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{canonicalize, CmpsState, ModelParams, CANONICAL_TOL};
use crate::error::{Error, Result};
use crate::linalg::{norm, ComplexMatrix, C64};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateRecord {
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "Q")]
    pub q: Vec<[f64; 2]>,
    #[serde(rename = "R")]
    pub r: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelParams>,
}

fn flatten(m: &ComplexMatrix) -> Vec<[f64; 2]> {
    m.iter().map(|z| [z.re, z.im]).collect()
}

fn unflatten(v: &[[f64; 2]], d: usize, name: &str) -> Result<ComplexMatrix> {
    if v.len() != d * d {
        return Err(Error::Serialization(format!("{name} has {} entries, expected {}", v.len(), d * d)));
    }
    if v.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Serialization(format!("{name} has non-finite entries")));
    }
    Ok(ComplexMatrix::from_shape_fn((d, d), |(i, j)| {
        let p = v[i * d + j];
        C64::new(p[0], p[1])
    }))
}

impl StateRecord {
    pub fn from_state(state: &CmpsState, params: Option<&ModelParams>) -> Self {
        Self {
            d: state.dim(),
            q: flatten(state.q()),
            r: flatten(state.r()),
            params: params.copied(),
        }
    }

    pub fn matrices(&self) -> Result<(ComplexMatrix, ComplexMatrix)> {
        Ok((unflatten(&self.q, self.d, "Q")?, unflatten(&self.r, self.d, "R")?))
    }

    /// Rebuilds the state; canonical inputs keep their matrices bit-for-bit.
    pub fn to_state(&self) -> Result<CmpsState> {
        let (q, r) = self.matrices()?;
        if super::canonical_defect(&q, &r) <= CANONICAL_TOL * (1.0 + norm(&q)) {
            CmpsState::from_canonical(q, r, None)
        } else {
            canonicalize(&q, &r)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let s = CmpsState::random(3, 0.7, &mut rng).unwrap();
        let p = ModelParams::pairing(1.0, 1.0, C64::new(1.0, 0.0));
        let rec = StateRecord::from_state(&s, Some(&p));
        let back = StateRecord::from_json(&rec.to_json().unwrap()).unwrap();
        let t = back.to_state().unwrap();
        assert_eq!(t.q(), s.q());
        assert_eq!(t.r(), s.r());
        assert_eq!(back.params, Some(p));
    }

    #[test]
    fn malformed_records_are_rejected() {
        let bad = r#"{"D": 2, "Q": [[0.0, 0.0]], "R": [[0.0, 0.0]]}"#;
        let rec = StateRecord::from_json(bad).unwrap();
        assert!(rec.to_state().is_err());
        assert!(StateRecord::from_json("{").is_err());
    }
}
