//! Embedding archive, the `VFME` v1 container.
//!
//! Layout, all integers little-endian and no padding anywhere:
//!
//! ```text
//! b"VFME" | u32 version = 1 | u64 header_len | header JSON (header_len bytes)
//!        | count * feature_dim f32 values, row-major
//! ```
//!
//! The JSON header carries `backbone_id, feature_dim, count, dtype ("f32"),
//! normalized, preprocessing, ids, labels, groups`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::PerturbationSpec;
use crate::registry;

pub const MAGIC: &[u8; 4] = b"VFME";
pub const FORMAT_VERSION: u32 = 1;

/// Tolerance on the L2 norm of rows in archives flagged `normalized`.
pub const NORM_TOLERANCE: f64 = 1e-4;

/// Label value for rows without ground truth.
pub const UNLABELED: i8 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Bicubic,
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Crop {
    Center,
}

/// How pixels were standardized before the backbone saw them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecord {
    pub input_size: u32,
    pub interpolation: Interpolation,
    pub crop: Crop,
    pub channel_mean: [f32; 3],
    pub channel_std: [f32; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
}

impl PreprocessRecord {
    /// Bicubic resize + center crop with the given statistics.
    pub fn new(input_size: u32, channel_mean: [f32; 3], channel_std: [f32; 3]) -> Self {
        Self {
            input_size,
            interpolation: Interpolation::Bicubic,
            crop: Crop::Center,
            channel_mean,
            channel_std,
            perturbation: None,
        }
    }

    /// Record matching a registered backbone's input size, with ImageNet
    /// statistics as placeholders for callers that do not care.
    pub fn for_backbone(backbone_id: &str) -> Self {
        let size = registry::lookup(backbone_id).map_or(224, |b| b.input_size);
        Self::new(size, [0.485, 0.456, 0.406], [0.229, 0.224, 0.225])
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::Integrity(
                "preprocessing input_size must be positive".into(),
            ));
        }
        if let Some(bad) = self.channel_std.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Integrity(format!(
                "preprocessing channel_std must be strictly positive, found {bad}"
            )));
        }
        if let Some(p) = &self.perturbation {
            p.validate()
                .map_err(|e| Error::Integrity(format!("preprocessing perturbation: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    backbone_id: String,
    feature_dim: usize,
    count: usize,
    dtype: String,
    normalized: bool,
    preprocessing: PreprocessRecord,
    ids: Vec<String>,
    labels: Vec<i8>,
    groups: Vec<String>,
}

/// Frozen pooled embeddings plus the metadata needed to train and evaluate
/// probes on them. Immutable once loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingArchive {
    backbone_id: String,
    feature_dim: usize,
    normalized: bool,
    preprocessing: PreprocessRecord,
    ids: Vec<String>,
    labels: Vec<i8>,
    groups: Vec<String>,
    rows: Vec<f32>,
    seen: HashSet<String>,
}

impl EmbeddingArchive {
    /// Starts an empty archive. Registered backbones must use their
    /// registered dimension.
    pub fn new(
        backbone_id: impl Into<String>,
        feature_dim: usize,
        preprocessing: PreprocessRecord,
        normalized: bool,
    ) -> Result<Self> {
        let backbone_id = backbone_id.into();
        if feature_dim == 0 {
            return Err(Error::Integrity("feature_dim must be positive".into()));
        }
        check_registry(&backbone_id, feature_dim)?;
        preprocessing.validate()?;
        Ok(Self {
            backbone_id,
            feature_dim,
            normalized,
            preprocessing,
            ids: Vec::new(),
            labels: Vec::new(),
            groups: Vec::new(),
            rows: Vec::new(),
            seen: HashSet::new(),
        })
    }

    /// Builds an archive from records, inferring the dimension from the
    /// first row (or the registry when there are no rows).
    pub fn from_records<I>(
        backbone_id: impl Into<String>,
        preprocessing: PreprocessRecord,
        normalized: bool,
        records: I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = ArchiveRecord>,
    {
        let backbone_id = backbone_id.into();
        let mut records = records.into_iter().peekable();
        let feature_dim = match records.peek() {
            Some(r) => r.row.len(),
            None => registry::lookup(&backbone_id)
                .map(|b| b.feature_dim)
                .ok_or_else(|| {
                    Error::Input(format!(
                        "cannot infer feature_dim for empty archive of unknown backbone `{backbone_id}`"
                    ))
                })?,
        };
        let mut archive = Self::new(backbone_id, feature_dim, preprocessing, normalized)?;
        for r in records {
            archive.push(r.id, r.label, r.group, &r.row)?;
        }
        Ok(archive)
    }

    pub fn push(
        &mut self,
        id: impl Into<String>,
        label: i8,
        group: impl Into<String>,
        row: &[f32],
    ) -> Result<()> {
        let id = id.into();
        if row.len() != self.feature_dim {
            return Err(Error::Dimension {
                expected: self.feature_dim,
                found: row.len(),
            });
        }
        if !(-1..=1).contains(&label) {
            return Err(Error::Integrity(format!(
                "label {label} for `{id}` not in {{-1,0,1}}"
            )));
        }
        if self.normalized {
            check_unit_norm(&id, row)?;
        }
        if !self.seen.insert(id.clone()) {
            return Err(Error::Integrity(format!("duplicate id `{id}`")));
        }
        self.ids.push(id);
        self.labels.push(label);
        self.groups.push(group.into());
        self.rows.extend_from_slice(row);
        Ok(())
    }

    pub fn backbone_id(&self) -> &str {
        &self.backbone_id
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn preprocessing(&self) -> &PreprocessRecord {
        &self.preprocessing
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.rows.chunks_exact(self.feature_dim)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            backbone_id: self.backbone_id.clone(),
            feature_dim: self.feature_dim,
            count: self.len(),
            dtype: "f32".into(),
            normalized: self.normalized,
            preprocessing: self.preprocessing.clone(),
            ids: self.ids.clone(),
            labels: self.labels.clone(),
            groups: self.groups.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut payload = Vec::with_capacity(self.rows.len() * 4);
        for v in &self.rows {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&payload)?;
        w.flush()?;
        Ok(())
    }

    /// Parses and fully validates an archive. Trailing bytes are rejected.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected VFME")));
        }
        let mut u32buf = [0u8; 4];
        read_exact(&mut r, &mut u32buf, "version")?;
        let version = u32::from_le_bytes(u32buf);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported archive version {version}"
            )));
        }
        let mut u64buf = [0u8; 8];
        read_exact(&mut r, &mut u64buf, "header length")?;
        let header_len = usize::try_from(u64::from_le_bytes(u64buf))
            .map_err(|_| Error::Format("header length overflows".into()))?;
        let mut json = Vec::new();
        (&mut r).take(header_len as u64).read_to_end(&mut json)?;
        if json.len() != header_len {
            return Err(Error::Format("truncated header".into()));
        }
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| Error::Format(format!("header: {e}")))?;
        if header.dtype != "f32" {
            return Err(Error::Format(format!(
                "unsupported dtype `{}`",
                header.dtype
            )));
        }
        if header.ids.len() != header.count
            || header.labels.len() != header.count
            || header.groups.len() != header.count
        {
            return Err(Error::Integrity(format!(
                "count {} disagrees with ids/labels/groups lengths {}/{}/{}",
                header.count,
                header.ids.len(),
                header.labels.len(),
                header.groups.len()
            )));
        }

        let values = header
            .count
            .checked_mul(header.feature_dim)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let mut payload = Vec::new();
        (&mut r).take(values as u64 * 4).read_to_end(&mut payload)?;
        if payload.len() != values * 4 {
            return Err(Error::Format(format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                values * 4
            )));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }

        let mut archive = Self::new(
            header.backbone_id,
            header.feature_dim,
            header.preprocessing,
            header.normalized,
        )?;
        archive.rows.reserve_exact(values);
        let mut rows = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        let mut row = Vec::with_capacity(archive.feature_dim);
        for ((id, label), group) in header.ids.into_iter().zip(header.labels).zip(header.groups) {
            row.clear();
            row.extend(rows.by_ref().take(archive.feature_dim));
            archive.push(id, label, group, &row)?;
        }
        Ok(archive)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        self.write_to(BufWriter::new(file))
    }
}

/// One row destined for an archive.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveRecord {
    pub id: String,
    pub label: i8,
    pub group: String,
    pub row: Vec<f32>,
}

impl ArchiveRecord {
    pub fn new(id: impl Into<String>, label: i8, group: impl Into<String>, row: Vec<f32>) -> Self {
        Self {
            id: id.into(),
            label,
            group: group.into(),
            row,
        }
    }
}

pub fn write_archive<I>(
    path: impl AsRef<Path>,
    records: I,
    backbone_id: &str,
    preprocessing: PreprocessRecord,
    normalized: bool,
) -> Result<EmbeddingArchive>
where
    I: IntoIterator<Item = ArchiveRecord>,
{
    let archive = EmbeddingArchive::from_records(backbone_id, preprocessing, normalized, records)?;
    archive.write(path)?;
    Ok(archive)
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<EmbeddingArchive> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    EmbeddingArchive::read_from(BufReader::new(file))
}

fn check_registry(backbone_id: &str, feature_dim: usize) -> Result<()> {
    match registry::lookup(backbone_id) {
        Some(spec) if spec.feature_dim != feature_dim => Err(Error::Registry {
            backbone_id: backbone_id.to_string(),
            expected: spec.feature_dim,
            found: feature_dim,
        }),
        _ => Ok(()),
    }
}

fn check_unit_norm(id: &str, row: &[f32]) -> Result<()> {
    let norm = row
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt();
    if (norm - 1.0).abs() <= NORM_TOLERANCE {
        Ok(())
    } else {
        Err(Error::Integrity(format!(
            "row `{id}` has L2 norm {norm} but archive is flagged normalized"
        )))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec() -> PreprocessRecord {
        PreprocessRecord::for_backbone("dinov3-vit7b16")
    }

    fn bytes(a: &EmbeddingArchive) -> Vec<u8> {
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        buf
    }

    #[test]
    fn two_rows_roundtrip() {
        let a = EmbeddingArchive::from_records(
            "toy",
            PreprocessRecord::new(4, [0.5; 3], [0.5; 3]),
            false,
            vec![
                ArchiveRecord::new("a", 0, "real", vec![0.1, -2.0, f32::MIN_POSITIVE, 3.5]),
                ArchiveRecord::new("b", 1, "ADM", vec![1e-30, 0.0, -0.0, 7.25]),
            ],
        )
        .unwrap();
        let buf = bytes(&a);
        let b = EmbeddingArchive::read_from(&buf[..]).unwrap();
        assert_eq!(a.ids(), b.ids());
        assert_eq!(a.labels(), b.labels());
        let bits =
            |x: &EmbeddingArchive| x.rows().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(buf, bytes(&b));
    }

    #[test]
    fn empty_archive_is_valid() {
        let a = EmbeddingArchive::from_records("dinov3-vit7b16", rec(), false, vec![]).unwrap();
        assert_eq!(a.len(), 0);
        assert_eq!(a.feature_dim(), 1664);
        let b = EmbeddingArchive::read_from(&bytes(&a)[..]).unwrap();
        assert_eq!(b.len(), 0);
        assert_eq!(b.feature_dim(), 1664);
    }

    #[test]
    fn ragged_rows() {
        let err = EmbeddingArchive::from_records(
            "toy",
            rec(),
            false,
            vec![
                ArchiveRecord::new("a", 0, "g", vec![0.0; 4]),
                ArchiveRecord::new("b", 1, "g", vec![0.0; 5]),
            ],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::Dimension {
                expected: 4,
                found: 5
            }
        ));
    }

    #[test]
    fn duplicate_ids() {
        let err = EmbeddingArchive::from_records(
            "toy",
            rec(),
            false,
            vec![
                ArchiveRecord::new("a", 0, "g", vec![0.0; 2]),
                ArchiveRecord::new("a", 1, "g", vec![0.0; 2]),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Integrity(ref m) if m.contains("`a`")));
    }

    #[test]
    fn registry_dim_enforced_on_load() {
        let good = EmbeddingArchive::new("dinov3-vit7b16", 1664, rec(), false).unwrap();
        assert!(EmbeddingArchive::read_from(&bytes(&good)[..]).is_ok());

        // Same id with a 1536-wide payload: forge the header by hand.
        let mut forged = EmbeddingArchive::new("unregistered", 1536, rec(), false).unwrap();
        forged.push("x", 1, "g", &vec![0.0; 1536]).unwrap();
        let buf = bytes(&forged);
        let buf = rewrite_header(&buf, |h| h["backbone_id"] = "dinov3-vit7b16".into());
        let err = EmbeddingArchive::read_from(&buf[..]).unwrap_err();
        assert!(matches!(
            err,
            Error::Registry {
                expected: 1664,
                found: 1536,
                ..
            }
        ));
    }

    #[test]
    fn norm_violation_on_load() {
        let mut a = EmbeddingArchive::new("toy", 2, rec(), false).unwrap();
        a.push("x", 1, "g", &[2.0, 0.0]).unwrap();
        let buf = rewrite_header(&bytes(&a), |h| h["normalized"] = true.into());
        let err = EmbeddingArchive::read_from(&buf[..]).unwrap_err();
        assert!(matches!(err, Error::Integrity(ref m) if m.contains("norm")));
    }

    #[test]
    fn normalized_push_accepts_unit_rows() {
        let mut a = EmbeddingArchive::new("toy", 2, rec(), true).unwrap();
        a.push("x", 0, "g", &[0.6, 0.8]).unwrap();
        assert!(a.push("y", 0, "g", &[0.6, 0.9]).is_err());
    }

    #[test]
    fn bad_magic_version_and_truncation() {
        let a = EmbeddingArchive::from_records(
            "toy",
            rec(),
            false,
            vec![ArchiveRecord::new("a", 0, "g", vec![1.0, 2.0])],
        )
        .unwrap();
        let buf = bytes(&a);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            EmbeddingArchive::read_from(&bad[..]),
            Err(Error::Format(_))
        ));

        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(
            EmbeddingArchive::read_from(&bad[..]),
            Err(Error::Format(_))
        ));

        let short = &buf[..buf.len() - 1];
        assert!(matches!(
            EmbeddingArchive::read_from(short),
            Err(Error::Format(_))
        ));

        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(
            EmbeddingArchive::read_from(&long[..]),
            Err(Error::Format(_))
        ));

        assert!(matches!(
            EmbeddingArchive::read_from(&buf[..3]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn layout_is_bit_exact() {
        let a = EmbeddingArchive::from_records(
            "toy",
            rec(),
            false,
            vec![ArchiveRecord::new("a", -1, "g", vec![1.0, -2.0])],
        )
        .unwrap();
        let buf = bytes(&a);
        assert_eq!(&buf[..4], b"VFME");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        let hlen = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&buf[16..16 + hlen]).unwrap();
        assert_eq!(header["dtype"], "f32");
        assert_eq!(header["count"], 1);
        assert_eq!(header["labels"][0], -1);
        assert_eq!(&buf[16 + hlen..], &[0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0]);
    }

    #[test]
    fn bad_label_and_std() {
        let mut a = EmbeddingArchive::new("toy", 1, rec(), false).unwrap();
        assert!(a.push("x", 2, "g", &[0.0]).is_err());
        let mut p = rec();
        p.channel_std[1] = 0.0;
        assert!(matches!(
            EmbeddingArchive::new("toy", 1, p, false),
            Err(Error::Integrity(_))
        ));
    }

    fn rewrite_header(buf: &[u8], f: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
        let hlen = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        let mut header: serde_json::Value = serde_json::from_slice(&buf[16..16 + hlen]).unwrap();
        f(&mut header);
        let json = serde_json::to_vec(&header).unwrap();
        let mut out = buf[..8].to_vec();
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&buf[16 + hlen..]);
        out
    }
}
