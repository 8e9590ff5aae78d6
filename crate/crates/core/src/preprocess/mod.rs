//! Pixel-space operations: standardization ahead of feature extraction and
//! the JPEG / Gaussian-blur perturbations used in robustness sweeps.
//!
//! Perturbations act on 8-bit pixels before standardization.

mod blur;
mod image;
mod jpeg;
mod perturb;
mod standardize;

pub use self::image::{ImageBuffer, Pixels};
pub use blur::{apply_blur, gaussian_kernel, reflect_index};
pub use jpeg::{apply_jpeg, decode_jpeg, encode_jpeg, psnr};
pub use perturb::{
    emit_perturbed_corpus, PerturbStep, PerturbationSpec, BLUR_SWEEP, DERIVED_MANIFEST, JPEG_SWEEP,
    SPEC_FILE,
};
pub use standardize::{resized_dims, standardize, Standardized};
