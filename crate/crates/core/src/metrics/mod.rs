//! Full-reference similarity metrics and the evaluator's pseudo-labels.

pub mod fsim;
mod labels;
mod psnr;
mod ssim;

pub use fsim::{fsim, fsim_luma, FsimScore, PcParams};
pub use labels::{patch_pseudo_labels, PatchLabel};
pub use psnr::psnr;
pub use ssim::{ssim, ssim_luma, WINDOW};
