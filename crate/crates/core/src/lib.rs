//! Sentence-level cross-lingual alignment on top of frozen multilingual
//! encoder features: a learned layer-combining extraction head, cycle-mapped
//! adversarial or supervised training, and margin-based parallel mining.

pub mod backprop;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod feature_store;
pub mod losses;
pub mod miner;
pub mod model;
pub mod optim;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use feature_store::{read_features, write_features, FeatureSet, SentenceFeatures};
pub use model::{AblationFlags, AlignmentModel, TrainingMode};
