//! Video-level scores from per-frame probe logits.

use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{sigmoid, ProbeModel};
use crate::store::{EmbeddingArchive, Label};

pub const DEFAULT_MAX_FRAMES: usize = 8;
pub const VIDEO_CSV_HEADER: [&str; 5] = ["video_id", "n_frames_used", "logit", "score", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// The first `max_frames` frames.
    #[default]
    ContiguousPrefix,
    /// `max_frames` evenly spaced frames.
    Uniform,
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contiguous_prefix" | "prefix" => Ok(Self::ContiguousPrefix),
            "uniform" => Ok(Self::Uniform),
            _ => Err(Error::Parameter(format!(
                "unknown sampling `{s}` (contiguous_prefix|uniform)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoConfig {
    pub max_frames: usize,
    pub sampling: Sampling,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            max_frames: DEFAULT_MAX_FRAMES,
            sampling: Sampling::default(),
        }
    }
}

impl VideoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_frames == 0 {
            return Err(Error::Parameter("max_frames must be at least 1".into()));
        }
        Ok(())
    }
}

/// Frame indices to score, sorted and without repeats.
pub fn select_frames(frame_count: usize, cfg: &VideoConfig) -> Vec<usize> {
    let s = cfg.max_frames.max(1);
    match cfg.sampling {
        Sampling::ContiguousPrefix => (0..frame_count.min(s)).collect(),
        Sampling::Uniform => {
            let mut idx: Vec<usize> = (0..s).map(|i| i * frame_count / s).collect();
            idx.dedup();
            idx.retain(|&i| i < frame_count);
            idx
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoPrediction {
    pub logit: f64,
    pub score: f64,
    pub label: Label,
    pub n_frames_used: usize,
}

/// Mean of the selected frame logits; fake iff its sigmoid exceeds
/// `threshold`.
pub fn aggregate_video(
    frame_logits: &[f64],
    cfg: &VideoConfig,
    threshold: f64,
) -> Result<VideoPrediction> {
    cfg.validate()?;
    if frame_logits.is_empty() {
        return Err(Error::Input("video has no frames".into()));
    }
    let used = select_frames(frame_logits.len(), cfg);
    // running mean: constant inputs come back bit-exact
    let mut logit = 0.0f64;
    for (k, &i) in used.iter().enumerate() {
        logit += (frame_logits[i] - logit) / (k + 1) as f64;
    }
    let score = sigmoid(logit);
    let label = if score > threshold {
        Label::Fake
    } else {
        Label::Real
    };
    Ok(VideoPrediction {
        logit,
        score,
        label,
        n_frames_used: used.len(),
    })
}

/// `clip7#0003`.
pub fn frame_id(video_id: &str, index: usize) -> String {
    format!("{video_id}#{index:04}")
}

/// Splits `video#NNNN` at the last `#`.
pub fn parse_frame_id(id: &str) -> Option<(&str, usize)> {
    let (video, idx) = id.rsplit_once('#')?;
    if video.is_empty() || idx.is_empty() || !idx.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((video, idx.parse().ok()?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoResult {
    pub video_id: String,
    pub n_frames_used: usize,
    pub logit: f64,
    pub score: f64,
    pub label: Label,
}

/// Scores every video in a per-frame archive. Frames are ordered by their
/// index, not by archive position; videos are reported by id.
pub fn score_videos(
    model: &ProbeModel,
    archive: &EmbeddingArchive,
    cfg: &VideoConfig,
) -> Result<Vec<VideoResult>> {
    cfg.validate()?;
    model.check_compatible(archive)?;
    let mut videos: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
    for (row, id) in archive.ids().iter().enumerate() {
        let (video, idx) = parse_frame_id(id).ok_or_else(|| {
            Error::Format(format!("frame id `{id}` is not of the form video#NNNN"))
        })?;
        if videos.entry(video).or_default().insert(idx, row).is_some() {
            return Err(Error::Integrity(format!(
                "frame {idx} of `{video}` appears twice"
            )));
        }
    }
    let videos: Vec<_> = videos.into_iter().collect();
    videos
        .par_iter()
        .map(|(video, frames)| {
            let logits = frames
                .values()
                .map(|&row| model.logit(archive.row(row)))
                .collect::<Result<Vec<f64>>>()?;
            let p = aggregate_video(&logits, cfg, model.threshold)?;
            Ok(VideoResult {
                video_id: video.to_string(),
                n_frames_used: p.n_frames_used,
                logit: p.logit,
                score: p.score,
                label: p.label,
            })
        })
        .collect()
}

pub fn render_video_csv(results: &[VideoResult]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(VIDEO_CSV_HEADER).expect("in-memory write");
    for r in results {
        w.write_record([
            r.video_id.clone(),
            r.n_frames_used.to_string(),
            format!("{}", r.logit),
            format!("{}", r.score),
            r.label.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 cells")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::PreprocessRecord;

    const CFG: VideoConfig = VideoConfig {
        max_frames: 8,
        sampling: Sampling::ContiguousPrefix,
    };

    #[test]
    fn identity_and_symmetry() {
        assert_eq!(aggregate_video(&[2.0], &CFG, 0.5).unwrap().logit, 2.0);
        let p = aggregate_video(&[1.0, -1.0], &CFG, 0.5).unwrap();
        assert_eq!((p.logit, p.score, p.label), (0.0, 0.5, Label::Real));
    }

    #[test]
    fn prefix_of_ten() {
        let logits: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let p = aggregate_video(&logits, &CFG, 0.5).unwrap();
        assert_eq!(p.n_frames_used, 8);
        assert_eq!(p.logit, 3.5);
    }

    #[test]
    fn empty_and_bad_config() {
        assert!(matches!(
            aggregate_video(&[], &CFG, 0.5),
            Err(Error::Input(_))
        ));
        let bad = VideoConfig {
            max_frames: 0,
            ..CFG
        };
        assert!(matches!(
            aggregate_video(&[1.0], &bad, 0.5),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn frame_selection() {
        assert_eq!(select_frames(5, &CFG), vec![0, 1, 2, 3, 4]);
        assert_eq!(select_frames(100, &CFG), (0..8).collect::<Vec<_>>());
        let uni = VideoConfig {
            max_frames: 4,
            sampling: Sampling::Uniform,
        };
        assert_eq!(select_frames(100, &uni), vec![0, 25, 50, 75]);
        assert_eq!(select_frames(3, &uni), vec![0, 1, 2]);
        assert_eq!(select_frames(1, &uni), vec![0]);
    }

    #[test]
    fn frame_ids() {
        assert_eq!(frame_id("clip", 3), "clip#0003");
        assert_eq!(parse_frame_id("a#b#0012"), Some(("a#b", 12)));
        assert_eq!(parse_frame_id("clip"), None);
        assert_eq!(parse_frame_id("clip#x1"), None);
        assert_eq!(parse_frame_id("#0001"), None);
    }

    #[test]
    fn score_archive_videos() {
        let bb = "siglip-large16";
        let mut a =
            EmbeddingArchive::new(bb, 1024, PreprocessRecord::for_backbone(bb), false).unwrap();
        let mut push = |id: String, x: f32| {
            let mut row = vec![0.0f32; 1024];
            row[0] = x;
            a.push(id, -1, "", &row).unwrap();
        };
        // stored out of order; frame 9 is past the prefix
        push(frame_id("v2", 1), -3.0);
        push(frame_id("v1", 9), 100.0);
        for i in 0..8 {
            push(frame_id("v1", i), i as f32);
        }
        push(frame_id("v2", 0), -1.0);
        let mut w = vec![0.0f32; 1024];
        w[0] = 1.0;
        let model = ProbeModel::new(w, 0.0, bb);
        let out = score_videos(&model, &a, &CFG).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(
            (out[0].video_id.as_str(), out[0].n_frames_used, out[0].logit),
            ("v1", 8, 3.5)
        );
        assert_eq!((out[1].logit, out[1].label), (-2.0, Label::Real));
        let csv = render_video_csv(&out);
        assert!(csv.starts_with("video_id,n_frames_used,logit,score,label\nv1,8,3.5,"));
    }
}
