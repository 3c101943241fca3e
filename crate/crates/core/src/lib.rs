//! Block-level imputation of floor space index (FSI) and ground space index
//! (GSI) from land use, site area and location.

pub mod classifier;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod hybrid;
pub mod imputer;
pub mod io;
pub mod model;
pub mod morphology;
pub mod rng;
pub mod sm;
pub mod smvnmf;
pub mod spatial;
pub mod stats;
pub mod synth;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use imputer::{ImputeContext, Imputer, ImputerRegistry, STANDARD_METHODS};
pub use model::{BlockRecord, BlockTable, Feature, Imputation, LandUse, TargetPair};
