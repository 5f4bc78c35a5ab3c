//! Frequency-domain tools and the learned high-pass loss.

mod fft;
mod phi;

pub use fft::{fft2, high_pass_filter, high_pass_plane, high_pass_tensor, ifft2, HighPassSpec, Spectrum};
pub use phi::{hf_loss, oracle_mse, train_phi, PhiActivations, PhiConfig, PhiNetwork, PhiReport, PhiTrainConfig};
