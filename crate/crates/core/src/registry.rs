//! Known frozen backbones and their pooled-feature geometry.
//!
//! Archives produced for a registered `backbone_id` must carry exactly the
//! feature dimension listed here. Unknown ids are accepted without checks so
//! new encoders can be probed before they are registered.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneFamily {
    Clip,
    Dino,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BackboneSpec {
    pub id: &'static str,
    /// Name of the probe built on this backbone in result tables.
    pub detector: &'static str,
    pub family: BackboneFamily,
    pub model: &'static str,
    pub feature_dim: usize,
    /// Square input resolution in pixels.
    pub input_size: u32,
    pub training_data: &'static str,
    /// Whether the backbone ships a text tower (needed for text pools).
    pub has_text_tower: bool,
}

pub const BACKBONES: &[BackboneSpec] = &[
    BackboneSpec {
        id: "metaclip-h14",
        detector: "MetaCLIP-Linear",
        family: BackboneFamily::Clip,
        model: "MetaCLIP-H/14-2.5B",
        feature_dim: 1280,
        input_size: 224,
        training_data: "MetaCLIP 400M",
        has_text_tower: true,
    },
    BackboneSpec {
        id: "metaclip2-worldwide-giant",
        detector: "MetaCLIP2-Linear",
        family: BackboneFamily::Clip,
        model: "MetaCLIP-2 Worldwide Giant",
        feature_dim: 1664,
        input_size: 224,
        training_data: "Common Crawl (Curated)",
        has_text_tower: true,
    },
    BackboneSpec {
        id: "siglip-large16",
        detector: "SigLIP-Linear",
        family: BackboneFamily::Clip,
        model: "SigLIP-Large/16",
        feature_dim: 1024,
        input_size: 384,
        training_data: "WebLI",
        has_text_tower: true,
    },
    BackboneSpec {
        id: "siglip2-giant16",
        detector: "SigLIP2-Linear",
        family: BackboneFamily::Clip,
        model: "SigLIP-2 Giant/16",
        feature_dim: 1536,
        input_size: 384,
        training_data: "WebLI",
        has_text_tower: true,
    },
    BackboneSpec {
        id: "pe-core-l14",
        detector: "PE-CLIP-Linear",
        family: BackboneFamily::Clip,
        model: "PE-Core-L/14",
        feature_dim: 1024,
        input_size: 336,
        training_data: "MetaCLIP Images + 22M Videos",
        has_text_tower: true,
    },
    BackboneSpec {
        id: "dinov2-giant",
        detector: "DINOv2-Linear",
        family: BackboneFamily::Dino,
        model: "DINOv2-giant",
        feature_dim: 1536,
        input_size: 224,
        training_data: "LVD-142M",
        has_text_tower: false,
    },
    BackboneSpec {
        id: "dinov3-vit7b16",
        detector: "DINOv3-Linear",
        family: BackboneFamily::Dino,
        model: "DINOv3-ViT-7B/16",
        feature_dim: 1664,
        input_size: 224,
        training_data: "LVD-1689M",
        has_text_tower: false,
    },
    // Same architecture pre-trained on satellite imagery only.
    BackboneSpec {
        id: "dinov3-vit7b16-sat",
        detector: "DINOv3-Sat-Linear",
        family: BackboneFamily::Dino,
        model: "DINOv3-ViT-7B/16",
        feature_dim: 1664,
        input_size: 224,
        training_data: "Sat-493M",
        has_text_tower: false,
    },
];

pub fn lookup(backbone_id: &str) -> Option<&'static BackboneSpec> {
    BACKBONES.iter().find(|b| b.id == backbone_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_dims_and_input_sizes() {
        let expected = [
            ("metaclip-h14", 1280, 224),
            ("metaclip2-worldwide-giant", 1664, 224),
            ("siglip-large16", 1024, 384),
            ("siglip2-giant16", 1536, 384),
            ("pe-core-l14", 1024, 336),
            ("dinov2-giant", 1536, 224),
            ("dinov3-vit7b16", 1664, 224),
            ("dinov3-vit7b16-sat", 1664, 224),
        ];
        assert_eq!(expected.len(), BACKBONES.len());
        for (id, dim, size) in expected {
            let spec = lookup(id).unwrap();
            assert_eq!(spec.feature_dim, dim, "{id}");
            assert_eq!(spec.input_size, size, "{id}");
        }
    }

    #[test]
    fn ids_are_unique() {
        let mut ids: Vec<_> = BACKBONES.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), BACKBONES.len());
    }

    #[test]
    fn unknown_id() {
        assert!(lookup("my-new-vfm").is_none());
    }
}
