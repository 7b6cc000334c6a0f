//! IS, FID, SSIM, moment gaps, the probe classifier and linear evaluation.
//!
//! IS and FID are computed on a small classifier trained in-repo, so their
//! absolute values are only comparable between runs sharing a probe hash.

mod fid;
mod moments;
mod probe;
mod report;
mod score;
mod ssim;

pub use fid::{fid, Fid, GaussianMoments};
pub use moments::{mean_std, moment_distance, MomentGap, MIN_MOMENT_SAMPLES};
pub use probe::{linear_evaluation, train_probe_classifier, ProbeClassifier, ProbeConfig};
pub use report::{MetricReport, Role, CSV_HEADER};
pub use score::inception_score;
pub use ssim::{mean_best_match_ssim, ssim, SSIM_WINDOW};
