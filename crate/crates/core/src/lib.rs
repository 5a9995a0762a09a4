//! Gradient flows, desingularizing functions, level-set profiles, semicontinuous
//! envelopes and mapping-cylinder charts for nonnegative scalar fields.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`). The `*64`
//! and `*32` aliases name the common instantiations.

pub mod cylinder;
pub mod desing;
pub mod envelope;
pub mod field;
pub mod flow;
pub mod levelset;
pub mod linalg;
pub mod quad;
pub mod region;
pub mod scalar;

pub use region::BoxRegion;
pub use scalar::Real;

pub type ScalarField64 = field::ScalarField<f64>;
pub type ScalarField32 = field::ScalarField<f32>;
pub type Trajectory64 = flow::Trajectory<f64>;
pub type Trajectory32 = flow::Trajectory<f32>;
pub type KLCertificate64 = desing::KLCertificate<f64>;
pub type KLCertificate32 = desing::KLCertificate<f32>;
pub type LevelSetProfile64 = levelset::LevelSetProfile<f64>;
pub type LevelSetProfile32 = levelset::LevelSetProfile<f32>;
pub type BoxRegion64 = region::BoxRegion<f64>;
