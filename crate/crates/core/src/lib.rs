//! Context-aware visual policy captioning.

pub mod attention;
pub mod cavp;
pub mod data;
pub mod error;
pub mod language;
pub mod model;
pub mod scalar;
pub mod substrate;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = substrate::Tensor<f64>;
pub type Tensor32 = substrate::Tensor<f32>;
pub type ParamStore64 = substrate::ParamStore<f64>;
pub type ParamStore32 = substrate::ParamStore<f32>;
pub type Model64 = model::CaptionModel<f64>;
pub type Model32 = model::CaptionModel<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type RegionFeatures64 = cavp::RegionFeatureSet<f64>;
pub type RegionFeatures32 = cavp::RegionFeatureSet<f32>;
