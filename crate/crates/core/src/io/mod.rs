//! Image files, corpus manifests and the synthetic corpus generator.

pub mod manifest;
pub mod ppm;
pub mod synth;

pub use manifest::{read_manifest, write_manifest, ManifestRow};
pub use ppm::{decode_ppm, encode_ppm, load_image, save_image};
pub use synth::{gen_synthetic_corpus, pristine_image, SyntheticCorpus};
