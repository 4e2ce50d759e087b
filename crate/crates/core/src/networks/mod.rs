//! The learned estimators and discriminators.
//!
//! All three estimators are U-Nets with leaky-ReLU activations, no
//! normalization layers and a zero-initialized output layer, so the whole
//! pipeline starts at the identity mapping.

mod estimators;
mod layers;
mod set;
mod unet;

pub use estimators::{Discriminator, INet, PNet, SNet, TraceGate, INET_INPUT_RANGE, METAL_PROJ_SCALE};
pub use layers::{conv, conv_leaky, max_pool, stack_planes, Initializer, LEAKY_SLOPE};
pub use set::{NetworkConfig, NetworkSet};
pub use unet::{UNet, UNetSpec};
