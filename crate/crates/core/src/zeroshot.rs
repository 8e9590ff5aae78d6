//! Text-image alignment probing with a categorized concept pool.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{format_3dp, ReportFormat};
use crate::registry;
use crate::store::{EmbeddingArchive, Label};

const DEFAULT_POOL_JSON: &str = include_str!("../data/default_text_pool.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Forgery,
    Content,
    Source,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Forgery => "forgery",
            Category::Content => "content",
            Category::Source => "source",
        })
    }
}

/// A concept term without an embedding, as listed in the default pool file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolTerm {
    pub text: String,
    pub category: Category,
}

/// The shipped concept list: six forgery, six content and five source terms.
pub fn default_pool_terms() -> Vec<PoolTerm> {
    #[derive(Deserialize)]
    struct Terms {
        entries: Vec<PoolTerm>,
    }
    serde_json::from_str::<Terms>(DEFAULT_POOL_JSON)
        .expect("bundled pool file parses")
        .entries
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextEntry {
    pub text: String,
    pub category: Category,
    pub embedding: Vec<f32>,
}

/// Embedded concept prompts of one backbone's text tower.
#[derive(Debug, Clone, PartialEq)]
pub struct TextPool {
    backbone_id: String,
    dim: usize,
    entries: Vec<TextEntry>,
}

impl TextPool {
    /// Checks that texts are unique and embeddings share one width and are
    /// finite and nonzero.
    pub fn new(backbone_id: impl Into<String>, entries: Vec<TextEntry>) -> Result<Self> {
        let backbone_id = backbone_id.into();
        let dim = entries.first().map_or(0, |e| e.embedding.len());
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.text.as_str()) {
                return Err(Error::Integrity(format!(
                    "duplicate pool text `{}`",
                    e.text
                )));
            }
            if e.embedding.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: e.embedding.len(),
                });
            }
            if e.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integrity(format!(
                    "non-finite embedding for `{}`",
                    e.text
                )));
            }
            if e.embedding.iter().all(|&v| v == 0.0) {
                return Err(Error::Integrity(format!("zero embedding for `{}`", e.text)));
            }
        }
        Ok(Self {
            backbone_id,
            dim,
            entries,
        })
    }

    pub fn backbone_id(&self) -> &str {
        &self.backbone_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[TextEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = PoolFile {
            backbone_id: self.backbone_id.clone(),
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|e| PoolFileEntry {
                    text: e.text.clone(),
                    category: e.category,
                    embedding_b64_f32le: B64.encode(
                        e.embedding
                            .iter()
                            .flat_map(|v| v.to_le_bytes())
                            .collect::<Vec<u8>>(),
                    ),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("pool serializes")
    }

    /// Parses a pool file. Pools of known backbones must come from a model
    /// with a text tower and match its image feature width.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: PoolFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let mut entries = Vec::with_capacity(file.entries.len());
        for e in file.entries {
            let bytes = B64
                .decode(e.embedding_b64_f32le.as_bytes())
                .map_err(|err| Error::Format(format!("embedding of `{}`: {err}", e.text)))?;
            if bytes.len() != file.dim * 4 {
                return Err(Error::Dimension {
                    expected: file.dim,
                    found: bytes.len() / 4,
                });
            }
            let embedding = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            entries.push(TextEntry {
                text: e.text,
                category: e.category,
                embedding,
            });
        }
        if let Some(spec) = registry::lookup(&file.backbone_id) {
            if !spec.has_text_tower {
                return Err(Error::Compatibility(format!(
                    "backbone `{}` has no text tower",
                    file.backbone_id
                )));
            }
            if spec.feature_dim != file.dim {
                return Err(Error::Registry {
                    backbone_id: file.backbone_id,
                    expected: spec.feature_dim,
                    found: file.dim,
                });
            }
        }
        let mut pool = Self::new(file.backbone_id, entries)?;
        pool.dim = file.dim;
        Ok(pool)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::file(path, e))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolFile {
    backbone_id: String,
    dim: usize,
    entries: Vec<PoolFileEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolFileEntry {
    text: String,
    category: Category,
    embedding_b64_f32le: String,
}

/// Cosine similarity computed in `f64` and clamped to [-1, 1].
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (mut dot, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (f64::from(a), f64::from(b));
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextMatch {
    /// Position in the pool.
    pub index: usize,
    pub text: String,
    pub category: Category,
    pub similarity: f64,
}

fn similarities(image: &[f32], pool: &TextPool) -> Result<Vec<f64>> {
    if image.len() != pool.dim {
        return Err(Error::Dimension {
            expected: pool.dim,
            found: image.len(),
        });
    }
    pool.entries
        .iter()
        .map(|e| cosine(image, &e.embedding))
        .collect()
}

/// Pool indices by descending similarity; ties keep pool order.
fn ranking(sims: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sims.len()).collect();
    order.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap_or(Ordering::Equal));
    order
}

/// The `k` pool texts closest to `image` (the whole pool if `k` is larger).
pub fn rank_texts(image: &[f32], pool: &TextPool, k: usize) -> Result<Vec<TextMatch>> {
    let sims = similarities(image, pool)?;
    Ok(ranking(&sims)
        .into_iter()
        .take(k)
        .map(|i| TextMatch {
            index: i,
            text: pool.entries[i].text.clone(),
            category: pool.entries[i].category,
            similarity: sims[i],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedText {
    pub text: String,
    pub category: Category,
    /// Mean cosine of this text over all images.
    pub mean_similarity: f64,
    /// Fraction of images that ranked this text first (or, for slot
    /// entries, at that slot's rank).
    pub vote_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub dataset: String,
    pub n_images: usize,
    /// Texts ordered by top-1 vote fraction, then mean similarity; the
    /// first entry is the dataset's matched text.
    pub top_k: Vec<AlignedText>,
    /// For each rank `r < k`, the text most often ranked `r`-th.
    pub slots: Vec<AlignedText>,
}

/// Dataset-level alignment over fake-labeled and unlabeled rows.
pub fn aggregate_alignment(
    dataset: impl Into<String>,
    archive: &EmbeddingArchive,
    pool: &TextPool,
    k: usize,
) -> Result<AlignmentResult> {
    let rows: Vec<usize> = (0..archive.len())
        .filter(|&i| Label::from_i8(archive.labels()[i]) != Some(Label::Real))
        .collect();
    let images: Vec<&[f32]> = rows.iter().map(|&i| archive.row(i)).collect();
    aggregate_rows(dataset, &images, pool, k)
}

/// [`aggregate_alignment`] over raw image embeddings.
pub fn aggregate_rows(
    dataset: impl Into<String>,
    images: &[&[f32]],
    pool: &TextPool,
    k: usize,
) -> Result<AlignmentResult> {
    if images.is_empty() {
        return Err(Error::Input("no fake or unlabeled rows to align".into()));
    }
    if pool.is_empty() {
        return Err(Error::Input("text pool is empty".into()));
    }
    let per_image: Vec<(Vec<f64>, Vec<usize>)> = images
        .par_iter()
        .map(|img| {
            let sims = similarities(img, pool)?;
            let order = ranking(&sims);
            Ok((sims, order))
        })
        .collect::<Result<_>>()?;

    let n = images.len() as f64;
    let m = pool.len();
    let mut mean = vec![0.0f64; m];
    for (sims, _) in &per_image {
        for (acc, s) in mean.iter_mut().zip(sims) {
            *acc += s;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mean: Vec<f64> = mean.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();

    let votes_at = |rank: usize| -> Vec<f64> {
        let mut votes = vec![0usize; m];
        for (_, order) in &per_image {
            votes[order[rank]] += 1;
        }
        votes.into_iter().map(|c| c as f64 / n).collect()
    };
    let ordered = |votes: &[f64]| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &b| {
            votes[b]
                .partial_cmp(&votes[a])
                .unwrap_or(Ordering::Equal)
                .then(mean[b].partial_cmp(&mean[a]).unwrap_or(Ordering::Equal))
        });
        idx
    };
    let entry = |i: usize, vote_fraction: f64| AlignedText {
        text: pool.entries[i].text.clone(),
        category: pool.entries[i].category,
        mean_similarity: mean[i],
        vote_fraction,
    };

    let first = votes_at(0);
    let top_k = ordered(&first)
        .into_iter()
        .take(k)
        .map(|i| entry(i, first[i]))
        .collect();
    let slots = (0..k.min(m))
        .map(|r| {
            let votes = votes_at(r);
            let winner = ordered(&votes)[0];
            entry(winner, votes[winner])
        })
        .collect();
    Ok(AlignmentResult {
        dataset: dataset.into(),
        n_images: images.len(),
        top_k,
        slots,
    })
}

/// Markdown: one table of per-rank winners, then the top-1 vote ranking.
/// CSV: `section,rank,text,category,mean_similarity,vote_fraction`.
pub fn render_alignment(result: &AlignmentResult, format: ReportFormat) -> String {
    let sections = [("slot", &result.slots), ("top", &result.top_k)];
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(result).expect("alignment serializes") + "\n"
        }
        ReportFormat::Markdown => {
            let mut out = format!(
                "Dataset: {} ({} images)\n\n",
                result.dataset, result.n_images
            );
            for (title, rows) in sections {
                let _ = writeln!(
                    out,
                    "| {} | Matched Text | Category | Similarity Score | Votes |\n|---:|---|---|---:|---:|",
                    if title == "slot" { "Top-k" } else { "Rank" }
                );
                for (i, t) in rows.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {} | {} |",
                        i + 1,
                        t.text,
                        t.category,
                        format_3dp(t.mean_similarity),
                        format_3dp(t.vote_fraction)
                    );
                }
                out.push('\n');
            }
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record([
                "section",
                "rank",
                "text",
                "category",
                "mean_similarity",
                "vote_fraction",
            ])
            .expect("in-memory write");
            for (title, rows) in sections {
                for (i, t) in rows.iter().enumerate() {
                    w.write_record([
                        title.to_string(),
                        (i + 1).to_string(),
                        t.text.clone(),
                        t.category.to_string(),
                        format!("{}", t.mean_similarity),
                        format!("{}", t.vote_fraction),
                    ])
                    .expect("in-memory write");
                }
            }
            String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 cells")
        }
    }
}
