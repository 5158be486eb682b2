//! Segmentation metrics, adversarial and segmentation losses, and the
//! per-image metrics report.

mod losses;
mod metrics;
mod report;

pub use losses::{
    bce_loss, cycle_loss, dice_loss, lsgan_losses, minimax_value, ClassTargets, SegLoss,
};
pub use metrics::{cl_dice, dice, hausdorff, precision_recall, soft_dice, SOFT_DICE_EPS};
pub use report::{MetricsReport, MetricsSummary, Stat};

pub use crate::skeleton::skeletonize;
