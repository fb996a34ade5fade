//! Versioned binary model format and ensemble manifests.
//!
//! Model layout (all integers `u64`, all reals `f64`, little-endian):
//!
//! ```text
//! "DDRM" version:u32 kind:u8
//! kind 1 (linear): m, weights[m], intercept
//! kind 2 (ka):     m, n, q_in, q_out, target_lo, target_hi, outer_share,
//!                  slope_floor, outer domains [n x (lo, hi)],
//!                  inner nodes [n x m x q_in], outer nodes [n x q_out]
//! ```
//!
//! A model bundle is `"DDRE" version:u32 count` followed by `count`
//! length-prefixed model blobs. Round trips are bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnRange, NormalizationMaps};
use crate::ddr::{DivisionSchedule, SlidingWindowSpec, StepReport};
use crate::error::{Error, Result};
use crate::ka::{KaModel, PiecewiseLinear};
use crate::learner::{LearnerSpec, LinearModel, Model};

pub const FORMAT_VERSION: u32 = 1;

const MODEL_MAGIC: &[u8; 4] = b"DDRM";
const BUNDLE_MAGIC: &[u8; 4] = b"DDRE";

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format("unexpected end of data".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format(format!("count {v} too large")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n > self.buf.len() / 8 {
            return Err(Error::Format("unexpected end of data".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Format("bad magic".into()));
        }
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {v}")));
        }
        Ok(())
    }
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    match model {
        Model::Linear(m) => {
            w.0.push(1);
            w.u64(m.weights.len());
            m.weights.iter().for_each(|&v| w.f64(v));
            w.f64(m.intercept);
        }
        Model::KolmogorovArnold(m) => {
            w.0.push(2);
            let q_in = m.inner[0].nodes().len();
            let q_out = m.outer[0].nodes().len();
            for v in [m.dim, m.addends, q_in, q_out] {
                w.u64(v);
            }
            w.f64(m.target.lo);
            w.f64(m.target.hi);
            w.f64(m.outer_share);
            w.f64(m.slope_floor);
            for f in &m.outer {
                let (lo, hi) = f.domain();
                w.f64(lo);
                w.f64(hi);
            }
            for f in m.inner.iter().chain(&m.outer) {
                f.nodes().iter().for_each(|&v| w.f64(v));
            }
        }
    }
    w.0
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes };
    r.header(MODEL_MAGIC)?;
    let kind = r.take(1)?[0];
    let model = match kind {
        1 => {
            let m = r.u64()?;
            let weights = r.f64s(m)?;
            let intercept = r.f64()?;
            Model::Linear(LinearModel { weights, intercept })
        }
        2 => {
            let (dim, n, q_in, q_out) = (r.u64()?, r.u64()?, r.u64()?, r.u64()?);
            let target = ColumnRange {
                lo: r.f64()?,
                hi: r.f64()?,
            };
            let share = r.f64()?;
            let floor = r.f64()?;
            let domains: Vec<(f64, f64)> = (0..n)
                .map(|_| Ok((r.f64()?, r.f64()?)))
                .collect::<Result<_>>()?;
            let inner = (0..n.saturating_mul(dim))
                .map(|_| PiecewiseLinear::new(0.0, 1.0, r.f64s(q_in)?))
                .collect::<Result<Vec<_>>>()?;
            let outer = domains
                .iter()
                .map(|&(lo, hi)| PiecewiseLinear::new(lo, hi, r.f64s(q_out)?))
                .collect::<Result<Vec<_>>>()?;
            Model::KolmogorovArnold(
                KaModel::from_parts(dim, inner, outer, target)?
                    .with_outer_share(share)
                    .with_slope_floor(floor),
            )
        }
        k => return Err(Error::Format(format!("unknown model kind {k}"))),
    };
    if !r.buf.is_empty() {
        return Err(Error::Format("trailing bytes after model".into()));
    }
    Ok(model)
}

pub fn encode_bundle(models: &[Model]) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(BUNDLE_MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    w.u64(models.len());
    for m in models {
        let blob = encode_model(m);
        w.u64(blob.len());
        w.0.extend_from_slice(&blob);
    }
    w.0
}

pub fn decode_bundle(bytes: &[u8]) -> Result<Vec<Model>> {
    let mut r = Reader { buf: bytes };
    r.header(BUNDLE_MAGIC)?;
    let count = r.u64()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u64()?;
        out.push(decode_model(r.take(len)?)?);
    }
    if !r.buf.is_empty() {
        return Err(Error::Format("trailing bytes after bundle".into()));
    }
    Ok(out)
}

pub fn save_models(path: &Path, models: &[Model]) -> Result<()> {
    std::fs::write(path, encode_bundle(models)).map_err(|e| Error::io(path, e))
}

pub fn load_models(path: &Path) -> Result<Vec<Model>> {
    decode_bundle(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    Ddr,
    RandomDisjoint,
}

/// Everything needed to reload an ensemble for inference and to re-run
/// its training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format_version: u32,
    pub kind: EnsembleKind,
    pub schedule: DivisionSchedule,
    pub learner: LearnerSpec,
    pub seed: u64,
    pub input_dim: usize,
    pub records: usize,
    /// Hex FNV-1a fingerprint of the training data.
    pub dataset_fingerprint: String,
    /// Applied to raw inputs before evaluation; outputs are in raw units.
    pub normalization: Option<NormalizationMaps>,
    pub models_file: String,
    pub sliding_window: Option<SlidingWindowSpec>,
    pub sliding_models_file: Option<String>,
    pub steps: Vec<StepReport>,
}

impl EnsembleManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SyntheticSpec;
    use crate::ka::KaSpec;
    use crate::learner::{fit_all, Regressor};
    use proptest::prelude::*;

    fn ka_model() -> Model {
        let ds = SyntheticSpec::default().generate(300).unwrap();
        Model::KolmogorovArnold(fit_all(&KaSpec::default(), &ds, 3).unwrap().0)
    }

    #[test]
    fn ka_round_trip_is_bit_exact() {
        let m = ka_model();
        let back = decode_model(&encode_model(&m)).unwrap();
        assert_eq!(back, m);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(
            back.predict(&x).unwrap().to_bits(),
            m.predict(&x).unwrap().to_bits()
        );
    }

    #[test]
    fn bundle_round_trip_and_corruption() {
        let models = vec![
            ka_model(),
            Model::Linear(LinearModel::new(vec![1.5, -2.0], 0.25)),
        ];
        let bytes = encode_bundle(&models);
        assert_eq!(decode_bundle(&bytes).unwrap(), models);
        assert!(decode_bundle(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_bundle(&bad).is_err());
        let mut newer = bytes;
        newer[4] = 9;
        assert!(matches!(decode_bundle(&newer), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn linear_round_trip(w in prop::collection::vec(any::<f64>(), 0..12), b in any::<f64>()) {
            let m = Model::Linear(LinearModel::new(w, b));
            let back = decode_model(&encode_model(&m)).unwrap();
            // compare bits so NaN payloads count too
            prop_assert_eq!(encode_model(&back), encode_model(&m));
        }
    }
}
