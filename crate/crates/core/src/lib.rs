pub mod annotation;
pub mod corpus;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod iaa;
pub mod mst;
pub mod scalar;
pub mod seed;
pub mod sst;
pub mod synthetic;
pub mod tensor;
pub mod tokenize;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type EncoderF32 = encoder::Encoder<f32>;
pub type EncoderF64 = encoder::Encoder<f64>;
pub type SstModelF32 = sst::SstModel<f32>;
pub type SstModelF64 = sst::SstModel<f64>;
pub type MstModelF32 = mst::MstModel<f32>;
pub type MstModelF64 = mst::MstModel<f64>;
pub type TaggerF32 = graph::Tagger<f32>;
