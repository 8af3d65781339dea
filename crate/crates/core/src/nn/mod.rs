//! Desk-scale hiding and reveal networks.
//!
//! Both networks are small convolutional U-Nets ([`unet`]) whose bottleneck is
//! the bridge. The hiding network encodes cover ‖ secret, transports every
//! bottleneck channel onto Gaussian noise and decodes the stego image; the
//! reveal network reorders its own bottleneck through the key produced by the
//! hiding pass before decoding the recovery. Backpropagation is written out
//! by hand and checked against finite differences in [`gradcheck`].

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod optim;
pub mod probe;
pub mod train;
pub mod unet;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use model::{
    loss_hiding, loss_reveal, loss_total, BridgeGrad, BridgeSource, HideOutput, LossBreakdown, LossForm, LossOptions,
    LossWeights, NetConfig, StegoModel,
};
pub use optim::{cosine_lr, AdamW};
pub use probe::{key_probe, perturb_stego, robustness_probe, KeyProbe, Perturbation, RobustnessProbe};
pub use train::{
    load_dataset_dir, metrics_csv, run_ablation, train, AblationReport, AblationRun, EpochMetrics, NoiseMode, TrainConfig,
    TrainOutcome,
};
pub use unet::{Resample, StageSpec, UNet};
