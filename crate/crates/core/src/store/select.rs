use std::collections::HashMap;

use super::{DatasetManifest, EmbeddingArchive, Label, Split};
use crate::error::{Error, Result};

/// An archive row chosen for training or evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selected {
    pub index: usize,
    pub label: Label,
    pub group: String,
}

/// Picks labeled archive rows, in archive order.
///
/// With a manifest, only rows whose id appears in the requested split are
/// used; labels and groups come from the manifest and must agree with any
/// label already stored in the archive. Every manifest entry of the split
/// must have a row. Without a manifest every row is used and must carry a
/// label.
pub fn select_rows(
    archive: &EmbeddingArchive,
    manifest: Option<&DatasetManifest>,
    split: Split,
) -> Result<Vec<Selected>> {
    let Some(manifest) = manifest else {
        return archive
            .labels()
            .iter()
            .zip(archive.groups())
            .enumerate()
            .map(|(index, (&l, group))| {
                let label = Label::from_i8(l).ok_or_else(|| {
                    Error::Input(format!(
                        "row `{}` is unlabeled; supply a manifest or a labeled archive",
                        archive.ids()[index]
                    ))
                })?;
                Ok(Selected {
                    index,
                    label,
                    group: group.clone(),
                })
            })
            .collect();
    };

    let wanted: HashMap<&str, _> = manifest.split(split).map(|e| (e.id.as_str(), e)).collect();
    let mut out = Vec::with_capacity(wanted.len());
    for (index, id) in archive.ids().iter().enumerate() {
        let Some(entry) = wanted.get(id.as_str()) else {
            continue;
        };
        let stored = archive.labels()[index];
        if stored >= 0 && stored != entry.label.as_i8() {
            return Err(Error::Integrity(format!(
                "row `{id}` is labeled {stored} in the archive but {} in the manifest",
                entry.label
            )));
        }
        out.push(Selected {
            index,
            label: entry.label,
            group: entry.generator.clone(),
        });
    }
    if out.len() != wanted.len() {
        let mut missing: Vec<_> = wanted
            .keys()
            .filter(|id| archive.index_of(id).is_none())
            .copied()
            .collect();
        missing.sort_unstable();
        missing.truncate(10);
        return Err(Error::Integrity(format!(
            "{} {split} entries of manifest `{}` have no archive row (e.g. {})",
            wanted.len() - out.len(),
            manifest.name,
            missing.join(", ")
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{ManifestEntry, PreprocessRecord};

    fn archive() -> EmbeddingArchive {
        let mut a =
            EmbeddingArchive::new("toy", 1, PreprocessRecord::for_backbone("toy"), false).unwrap();
        a.push("a", 0, "x", &[0.0]).unwrap();
        a.push("b", -1, "x", &[1.0]).unwrap();
        a.push("c", 1, "x", &[2.0]).unwrap();
        a
    }

    fn manifest(b_label: Label) -> DatasetManifest {
        DatasetManifest::new(
            "m",
            ".",
            vec![
                ManifestEntry::new("a", "a.png", Label::Real, "ADM", Split::Train).unwrap(),
                ManifestEntry::new("b", "b.png", b_label, "VQDM", Split::Test).unwrap(),
                ManifestEntry::new("c", "c.png", Label::Fake, "ADM", Split::Test).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn split_filter_uses_manifest_labels() {
        let m = manifest(Label::Fake);
        let test = select_rows(&archive(), Some(&m), Split::Test).unwrap();
        assert_eq!(test.iter().map(|s| s.index).collect::<Vec<_>>(), [1, 2]);
        assert_eq!(test[0].label, Label::Fake);
        assert_eq!(test[0].group, "VQDM");
        let train = select_rows(&archive(), Some(&m), Split::Train).unwrap();
        assert_eq!(train.len(), 1);
    }

    #[test]
    fn label_conflict() {
        let mut a = archive();
        a = {
            let mut b = EmbeddingArchive::new("toy", 1, a.preprocessing().clone(), false).unwrap();
            b.push("a", 0, "x", &[0.0]).unwrap();
            b.push("b", 1, "x", &[0.0]).unwrap();
            b.push("c", 1, "x", &[0.0]).unwrap();
            b
        };
        let err = select_rows(&a, Some(&manifest(Label::Real)), Split::Test).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn unlabeled_without_manifest() {
        assert!(matches!(
            select_rows(&archive(), None, Split::Test),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn missing_rows() {
        let mut a =
            EmbeddingArchive::new("toy", 1, PreprocessRecord::for_backbone("toy"), false).unwrap();
        a.push("c", 1, "x", &[2.0]).unwrap();
        let err = select_rows(&a, Some(&manifest(Label::Fake)), Split::Test).unwrap_err();
        assert!(matches!(err, Error::Integrity(ref m) if m.contains('b')));
    }
}
