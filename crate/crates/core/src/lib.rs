//! Multi-objective pruning of LeNet-class CNNs with a microbial genetic
//! algorithm. A genome is a set of per-layer weights plus binary masks;
//! evolution minimizes `λ₁·error + λ₂·remaining_flops + λ₃·(1 − sparsity)`.

pub mod error;
pub mod ga;
pub mod genome;
pub mod metrics;
pub mod mnist;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use ga::{GaConfig, Objective};
pub use genome::Genome;
pub use metrics::{FitnessWeights, Metrics};
