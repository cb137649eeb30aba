//! The two-pathway predictive-coding model: layer graph, parameters, latent
//! state, energies, settling and training.

mod blocks;
pub mod energy;
pub mod latent;
pub mod params;
pub mod settle;
pub mod spec;
pub mod train;

pub use energy::{compute_energy, compute_energy_per_example, energy_gradients, Condition, EnergyBreakdown, EnergyConfig};
pub use latent::{feedforward_init, LatentState};
pub use params::{build_tinyconv, ModelParams, ParamGrads};
pub use settle::{settle, Settled};
pub use spec::{Activation, LayerKind, ModelSpec, ParamId};
pub use train::{train, Dataset, EpochLog, TrainConfig};
