pub mod bounds;
pub mod error;
pub mod fbsde;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod schedule;
pub mod simulate;
pub mod target;

pub use bounds::{BoundReport, BoundTerm, Verdict};
pub use error::{LabError, Result};
pub use grid::{Axis, GridSpec};
pub use rng::PathStream;
pub use schedule::{BandCheck, BridgeCoefficients, NoiseSchedule};
pub use simulate::{
    ddpm_sample, ddpm_terminal, forward_chain, h2_clip, reverse_sde, reverse_transition_density, ClipVariant,
    Direction, Retention, ReverseKernel, ReverseOptions, ScoreMode, ScoreModel, StepVisitor, TrajectoryBatch,
};
pub use target::{GaussianMixture, H1Constants, MarginalLaw, MixtureTarget};
