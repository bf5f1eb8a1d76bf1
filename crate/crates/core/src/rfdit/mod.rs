//! Toy generative core: a frozen linear latent codec, five-condition
//! fusion, a small diffusion transformer with a zero-initialized control
//! block and view attention, rectified-flow training and sampling, and the
//! three-term loss. Gradients come from the reverse-mode engine in
//! [`tape`].

pub mod checkpoint;
pub mod codec;
pub mod flow;
pub mod losses;
pub mod model;
pub mod schedule;
pub mod tape;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use codec::{Codec, Latent, LatentShape};
pub use flow::{cfg_combine, rf_pair, rf_sample, VelocityField};
pub use losses::{loss_diffusion, loss_mask, loss_perceptual, loss_total, LossParts, LossWeights};
pub use model::{ConditionSet, ToyConfig, ToyModel};
pub use schedule::{forward_noising, NoiseSchedule};
pub use train::{train_toy, TrainConfig};
