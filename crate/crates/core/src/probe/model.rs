use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{EmbeddingArchive, Label};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Numerically safe logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Scales `x` to unit L2 norm; zero vectors are returned unchanged.
pub fn l2_normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub logit: f64,
    pub score: f64,
    pub label: Label,
}

/// A trained linear head over one backbone's pooled features.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    pub weights: Vec<f32>,
    pub bias: f32,
    pub backbone_id: String,
    pub normalize_input: bool,
    /// Scores strictly above this are labeled fake.
    pub threshold: f64,
    pub train_log_digest: Option<String>,
}

impl ProbeModel {
    pub fn new(weights: Vec<f32>, bias: f32, backbone_id: impl Into<String>) -> Self {
        Self {
            weights,
            bias,
            backbone_id: backbone_id.into(),
            normalize_input: false,
            threshold: DEFAULT_THRESHOLD,
            train_log_digest: None,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, x: &[f32]) -> Result<f64> {
        if x.len() != self.feature_dim() {
            return Err(Error::Dimension {
                expected: self.feature_dim(),
                found: x.len(),
            });
        }
        let mut xs: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        if self.normalize_input {
            l2_normalize(&mut xs);
        }
        Ok(self.logit_prepared(&xs))
    }

    /// Logit for an input already converted (and normalized if required).
    pub(crate) fn logit_prepared(&self, x: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(x)
            .map(|(&w, &v)| f64::from(w) * v)
            .sum::<f64>()
            + f64::from(self.bias)
    }

    pub fn label_for_score(&self, score: f64) -> Label {
        if score > self.threshold {
            Label::Fake
        } else {
            Label::Real
        }
    }

    pub fn predict(&self, x: &[f32]) -> Result<Prediction> {
        let logit = self.logit(x)?;
        let score = sigmoid(logit);
        Ok(Prediction {
            logit,
            score,
            label: self.label_for_score(score),
        })
    }

    /// Refuses archives from another backbone or of another width.
    pub fn check_compatible(&self, archive: &EmbeddingArchive) -> Result<()> {
        if archive.backbone_id() != self.backbone_id {
            return Err(Error::Compatibility(format!(
                "model was trained on `{}` features but archive holds `{}`",
                self.backbone_id,
                archive.backbone_id()
            )));
        }
        self.check_dim(archive)
    }

    pub fn check_dim(&self, archive: &EmbeddingArchive) -> Result<()> {
        if archive.feature_dim() != self.feature_dim() {
            return Err(Error::Dimension {
                expected: self.feature_dim(),
                found: archive.feature_dim(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut bytes = Vec::with_capacity(self.weights.len() * 4);
        for w in &self.weights {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            backbone_id: self.backbone_id.clone(),
            feature_dim: self.feature_dim(),
            normalize_input: self.normalize_input,
            threshold: self.threshold,
            bias: self.bias,
            weights_b64_f32le: B64.encode(bytes),
            train_log_digest: self.train_log_digest.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Compatibility(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        let bytes = B64
            .decode(file.weights_b64_f32le.as_bytes())
            .map_err(|e| Error::Format(format!("weights_b64_f32le: {e}")))?;
        if bytes.len() != file.feature_dim * 4 {
            return Err(Error::Dimension {
                expected: file.feature_dim * 4,
                found: bytes.len(),
            });
        }
        let weights = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if !(file.threshold > 0.0 && file.threshold < 1.0) {
            return Err(Error::Format(format!(
                "threshold {} not in (0, 1)",
                file.threshold
            )));
        }
        Ok(Self {
            weights,
            bias: file.bias,
            backbone_id: file.backbone_id,
            normalize_input: file.normalize_input,
            threshold: file.threshold,
            train_log_digest: file.train_log_digest,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    backbone_id: String,
    feature_dim: usize,
    normalize_input: bool,
    threshold: f64,
    bias: f32,
    weights_b64_f32le: String,
    #[serde(default)]
    train_log_digest: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_ties_to_real() {
        let m = ProbeModel::new(vec![0.0; 3], 0.0, "toy");
        let p = m.predict(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(p.score, 0.5);
        assert_eq!(p.label, Label::Real);
    }

    #[test]
    fn inverse_sigmoid_point() {
        let m = ProbeModel::new(vec![1.0, 0.0], 0.0, "toy");
        let p = m.predict(&[2.197_224_6, 0.0]).unwrap();
        assert!((p.score - 0.9).abs() < 1e-6, "{}", p.score);
        assert_eq!(p.label, Label::Fake);
    }

    #[test]
    fn deep_negative_logit() {
        let s = sigmoid(-30.0);
        assert!(s > 0.0 && s < 1e-12, "{s}");
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn dim_mismatch() {
        let m = ProbeModel::new(vec![0.0; 3], 0.0, "toy");
        assert!(matches!(
            m.predict(&[1.0]),
            Err(Error::Dimension {
                expected: 3,
                found: 1
            })
        ));
    }

    #[test]
    fn normalize_input_changes_geometry() {
        let mut m = ProbeModel::new(vec![1.0, 0.0], 0.0, "toy");
        m.normalize_input = true;
        let p = m.predict(&[3.0, 4.0]).unwrap();
        assert!((p.logit - 0.6).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let weights: Vec<f32> = (0..16).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut m = ProbeModel::new(weights, 0.123_456_79, "dinov3-vit7b16");
        m.threshold = 0.37;
        m.train_log_digest = Some("abc".into());
        let back = ProbeModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        for _ in 0..100 {
            let x: Vec<f32> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(
                m.predict(&x).unwrap().logit.to_bits(),
                back.predict(&x).unwrap().logit.to_bits()
            );
        }
    }

    #[test]
    fn truncated_file() {
        let json = ProbeModel::new(vec![1.0; 4], 0.0, "toy").to_json();
        let err = ProbeModel::from_json(&json[..json.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn version_mismatch() {
        let json = ProbeModel::new(vec![1.0; 4], 0.0, "toy")
            .to_json()
            .replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(
            ProbeModel::from_json(&json),
            Err(Error::Compatibility(_))
        ));
    }
}
