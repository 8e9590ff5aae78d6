#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use probeforge::preprocess::ImageBuffer;
use probeforge::store::{
    DatasetManifest, EmbeddingArchive, Label, ManifestEntry, PreprocessRecord, Split,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const GENERATORS: [&str; 4] = ["ADM", "BigGAN", "Midjourney", "VQDM"];

pub fn probeforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probeforge"))
        .args(args)
        .env_remove("PROBEFORGE_CACHE_DIR")
        .output()
        .expect("spawn probeforge")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// A small unregistered-backbone archive shaped like a per-generator
/// benchmark: every generator has real and fake rows in both splits. Fake
/// rows are shifted along the first coordinates.
pub fn benchmark_fixture(dir: &Path, per_cell: usize, dim: usize) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut archive = EmbeddingArchive::new(
        "toy-vit",
        dim,
        PreprocessRecord::for_backbone("toy-vit"),
        false,
    )
    .unwrap();
    let mut entries = Vec::new();
    for g in GENERATORS {
        for split in [Split::Train, Split::Test] {
            for label in [Label::Real, Label::Fake] {
                for i in 0..per_cell {
                    let id = format!("{g}-{split}-{label}-{i}");
                    let shift = if label == Label::Fake { 1.5 } else { -1.5 };
                    let row: Vec<f32> = (0..dim)
                        .map(|d| {
                            let n: f64 = StandardNormal.sample(&mut rng);
                            (if d < 4 { shift + n } else { n * 0.3 }) as f32
                        })
                        .collect();
                    archive.push(&id, label.as_i8(), g, &row).unwrap();
                    entries.push(
                        ManifestEntry::new(&id, format!("{g}/{id}.png"), label, g, split).unwrap(),
                    );
                }
            }
        }
    }
    let archive_path = dir.join("bench.vfme");
    archive.write(&archive_path).unwrap();
    let manifest_path = dir.join("bench.csv");
    DatasetManifest::new("bench", dir, entries)
        .unwrap()
        .write(&manifest_path)
        .unwrap();
    (archive_path, manifest_path)
}

/// Smooth random RGB images on disk plus a manifest pointing at them.
pub fn image_corpus(dir: &Path, n: usize, size: u32) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut entries = Vec::new();
    for i in 0..n {
        let img = smooth_image(&mut rng, size, size);
        let gen = GENERATORS[i % GENERATORS.len()];
        let rel = format!("{gen}/img{i}.png");
        std::fs::create_dir_all(dir.join(gen)).unwrap();
        img.save_png(dir.join(&rel)).unwrap();
        let label = if i % 2 == 0 { Label::Real } else { Label::Fake };
        entries.push(ManifestEntry::new(format!("img{i}"), rel, label, gen, Split::Test).unwrap());
    }
    let path = dir.join("images.csv");
    DatasetManifest::new("images", dir, entries)
        .unwrap()
        .write(&path)
        .unwrap();
    path
}

/// Sum of a few low-frequency sinusoids per channel, quantized to 8 bits.
pub fn smooth_image(rng: &mut impl Rng, w: u32, h: u32) -> ImageBuffer {
    let mut waves = Vec::new();
    for _ in 0..3 {
        let terms: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.5..3.0) * std::f64::consts::TAU / f64::from(w),
                    rng.random_range(0.5..3.0) * std::f64::consts::TAU / f64::from(h),
                    rng.random_range(0.0..std::f64::consts::TAU),
                    rng.random_range(10.0..40.0),
                )
            })
            .collect();
        waves.push((rng.random_range(80.0..170.0), terms));
    }
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            for (base, terms) in &waves {
                let v: f64 = base
                    + terms
                        .iter()
                        .map(|(fx, fy, ph, amp)| {
                            amp * (fx * f64::from(x) + fy * f64::from(y) + ph).sin()
                        })
                        .sum::<f64>();
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageBuffer::from_u8(w, h, data).unwrap()
}
