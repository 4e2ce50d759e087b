//! Files, datasets, image quality metrics and the linear-interpolation
//! baseline.

mod dataset;
mod li;
mod metrics;
mod parallel;
mod png;
mod raw;

pub use dataset::{
    build_dataset, checksums, CaseImages, CaseRecord, Dataset, DatasetManifest, DatasetSpec,
    Split, CHECKSUM_FILE, MANIFEST_FILE,
};
pub use li::li_baseline;
pub use metrics::{psnr, ssim, METRIC_RANGE_HU, PSNR_CAP_DB};
pub use parallel::{parallel_map, worker_count, THREADS_ENV};
pub use png::{export_png, hu_from_gray, render_gray, DISPLAY_WINDOW_HU, METAL_GRAY};
pub use raw::{
    decode_tensor, encode_tensor, load_metadata, load_tensor, save_tensor, sidecar_path, Metadata,
};
