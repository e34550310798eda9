//! Adaptivity on both scales.

mod active;
mod micro;

pub use active::{distance_update, ActiveSet, PairMatrix, Snapshot};
pub use micro::{
    adapted_mesh, coarse_means, coarse_ranges, mark_band, micro_adapt, refine_band, Adapted, MarkRule, MicroAdaptConfig,
};
