//! On-disk contract with the activation extractor: FTEN tensors and
//! dataset manifests.

mod ften;
mod manifest;

pub use ften::{
    read_ften, read_tensor, write_ften, write_tensor, FeatureTensor, Ften, DTYPE_F32, MAGIC, VERSION,
};
pub use manifest::{
    read_manifest, write_manifest, Manifest, ManifestRecord, SampleLabel, MANIFEST_HEADER,
};
