//! Image buffers, PNG I/O, synthetic degradations and paired patch sampling.

mod dataset;
mod degrade;
mod image;

pub use self::image::{load_image, save_image, ImageBuffer};
pub use dataset::{
    read_manifest, write_manifest, Batch, DatasetIndex, ImagePair, PairedDataset, PatchPair,
};
pub use degrade::{add_awgn, blur, gaussian_kernel, BlurKernel, KernelPool};
