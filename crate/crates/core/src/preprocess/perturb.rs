//! Perturbation chains and the perturbed-corpus emitter.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_blur, apply_jpeg, ImageBuffer};
use crate::error::{Error, Result};
use crate::store::{DatasetManifest, ManifestEntry};

/// JPEG qualities used in the robustness sweep.
pub const JPEG_SWEEP: [u8; 4] = [95, 85, 75, 65];
/// Gaussian blur sigmas used in the robustness sweep.
pub const BLUR_SWEEP: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PerturbStep {
    Jpeg { jpeg_quality: u8 },
    Blur { blur_sigma: f64 },
}

/// Ordered chain of pixel-space perturbations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub steps: Vec<PerturbStep>,
}

impl PerturbationSpec {
    pub fn jpeg(quality: u8) -> Self {
        Self {
            steps: vec![PerturbStep::Jpeg {
                jpeg_quality: quality,
            }],
        }
    }

    pub fn blur(sigma: f64) -> Self {
        Self {
            steps: vec![PerturbStep::Blur { blur_sigma: sigma }],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for step in &self.steps {
            match *step {
                PerturbStep::Jpeg { jpeg_quality } if !(1..=100).contains(&jpeg_quality) => {
                    return Err(Error::Parameter(format!(
                        "jpeg quality {jpeg_quality} not in [1, 100]"
                    )))
                }
                PerturbStep::Blur { blur_sigma }
                    if !(blur_sigma > 0.0 && blur_sigma.is_finite()) =>
                {
                    return Err(Error::Parameter(format!(
                        "blur sigma must be positive, got {blur_sigma}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Applies the chain to an 8-bit image.
    pub fn apply(&self, image: &ImageBuffer) -> Result<ImageBuffer> {
        self.validate()?;
        let mut current = image.to_u8();
        for step in &self.steps {
            current = match *step {
                PerturbStep::Jpeg { jpeg_quality } => apply_jpeg(&current, jpeg_quality)?,
                PerturbStep::Blur { blur_sigma } => apply_blur(&current, blur_sigma)?,
            };
        }
        Ok(current)
    }

    /// Short tag such as `jpeg75+blur1` for directory and report names.
    pub fn tag(&self) -> String {
        if self.steps.is_empty() {
            return "none".into();
        }
        self.steps
            .iter()
            .map(|s| match s {
                PerturbStep::Jpeg { jpeg_quality } => format!("jpeg{jpeg_quality}"),
                PerturbStep::Blur { blur_sigma } => format!("blur{blur_sigma}"),
            })
            .collect::<Vec<_>>()
            .join("+")
    }
}

pub const DERIVED_MANIFEST: &str = "manifest.csv";
pub const SPEC_FILE: &str = "perturbation.json";

/// Writes a mirrored tree of perturbed PNGs under `out_dir`, plus a derived
/// manifest (same ids, new root) and the spec that produced it.
///
/// Output paths keep the source layout with a `.png` extension. Nothing is
/// written outside `out_dir`.
pub fn emit_perturbed_corpus(
    manifest: &DatasetManifest,
    source_root: &Path,
    spec: &PerturbationSpec,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    spec.validate()?;
    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let rel = PathBuf::from(&e.relative_path).with_extension("png");
        let rel = rel.to_string_lossy().replace('\\', "/");
        if !seen.insert(rel.clone()) {
            return Err(Error::Integrity(format!(
                "perturbed output path `{rel}` collides for entry `{}`",
                e.id
            )));
        }
        entries.push(ManifestEntry::new(
            &e.id,
            rel,
            e.label,
            &e.generator,
            e.split,
        )?);
    }

    std::fs::create_dir_all(out_dir).map_err(|err| Error::file(out_dir, err))?;
    manifest
        .entries
        .par_iter()
        .zip(entries.par_iter())
        .try_for_each(|(src, dst)| -> Result<()> {
            let image = ImageBuffer::open(source_root.join(&src.relative_path))?;
            let out = spec.apply(&image)?;
            let path = out_dir.join(&dst.relative_path);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|err| Error::file(parent, err))?;
            }
            out.save_png(&path)
        })?;

    let derived = DatasetManifest::new(manifest.name.clone(), out_dir, entries)?;
    derived.write(out_dir.join(DERIVED_MANIFEST))?;
    let json = serde_json::to_vec_pretty(spec).map_err(|e| Error::Format(e.to_string()))?;
    let spec_path = out_dir.join(SPEC_FILE);
    std::fs::write(&spec_path, json).map_err(|err| Error::file(spec_path, err))?;
    Ok(derived)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{Label, Split};

    #[test]
    fn serde_shape() {
        let spec = PerturbationSpec {
            steps: vec![
                PerturbStep::Jpeg { jpeg_quality: 75 },
                PerturbStep::Blur { blur_sigma: 1.5 },
            ],
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            json,
            r#"{"steps":[{"kind":"jpeg","jpeg_quality":75},{"kind":"blur","blur_sigma":1.5}]}"#
        );
        assert_eq!(
            serde_json::from_str::<PerturbationSpec>(&json).unwrap(),
            spec
        );
        assert_eq!(spec.tag(), "jpeg75+blur1.5");
    }

    #[test]
    fn mismatched_fields_rejected() {
        let bad = r#"{"steps":[{"kind":"jpeg","blur_sigma":1.0}]}"#;
        assert!(serde_json::from_str::<PerturbationSpec>(bad).is_err());
        let bad = r#"{"steps":[{"kind":"blur","blur_sigma":1.0,"jpeg_quality":3}]}"#;
        assert!(serde_json::from_str::<PerturbationSpec>(bad).is_err());
    }

    #[test]
    fn validation() {
        assert!(PerturbationSpec::jpeg(0).validate().is_err());
        assert!(PerturbationSpec::blur(-0.5).validate().is_err());
        assert!(PerturbationSpec::default().validate().is_ok());
    }

    #[test]
    fn corpus_is_deterministic() {
        let src = tempfile::tempdir().unwrap();
        let mut entries = Vec::new();
        for (i, name) in ["a/x.jpg", "b/y.png"].iter().enumerate() {
            let data: Vec<u8> = (0..16 * 12 * 3)
                .map(|k| ((k * (i + 3)) % 251) as u8)
                .collect();
            let img = ImageBuffer::from_u8(16, 12, data).unwrap();
            let p = src.path().join(name);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            img.save_png(&p).unwrap();
            let label = if i == 0 { Label::Real } else { Label::Fake };
            entries.push(
                ManifestEntry::new(format!("id{i}"), *name, label, "g", Split::Test).unwrap(),
            );
        }
        let m = DatasetManifest::new("m", src.path(), entries).unwrap();
        let spec = PerturbationSpec {
            steps: vec![
                PerturbStep::Jpeg { jpeg_quality: 75 },
                PerturbStep::Blur { blur_sigma: 1.0 },
            ],
        };
        let out1 = tempfile::tempdir().unwrap();
        let out2 = tempfile::tempdir().unwrap();
        let d1 = emit_perturbed_corpus(&m, src.path(), &spec, out1.path()).unwrap();
        emit_perturbed_corpus(&m, src.path(), &spec, out2.path()).unwrap();
        assert_eq!(d1.entries[0].relative_path, "a/x.png");
        assert_eq!(d1.entries[1].id, "id1");
        for f in ["a/x.png", "b/y.png", DERIVED_MANIFEST, SPEC_FILE] {
            assert_eq!(
                std::fs::read(out1.path().join(f)).unwrap(),
                std::fs::read(out2.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn colliding_outputs() {
        let entries = vec![
            ManifestEntry::new("a", "x.jpg", Label::Real, "g", Split::Test).unwrap(),
            ManifestEntry::new("b", "x.png", Label::Real, "g", Split::Test).unwrap(),
        ];
        let m = DatasetManifest::new("m", ".", entries).unwrap();
        let out = tempfile::tempdir().unwrap();
        let err =
            emit_perturbed_corpus(&m, Path::new("."), &PerturbationSpec::jpeg(90), out.path());
        assert!(matches!(err, Err(Error::Integrity(_))));
    }
}
