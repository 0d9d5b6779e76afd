pub mod autodiff;
pub mod error;
pub mod rng;
pub mod tensor;
pub mod config;
pub mod corpus;
pub mod dualvae;
pub mod losses;
pub mod decoding;
pub mod optim;
pub mod metrics;
pub mod oracle;
pub mod selftrain;
pub mod experiment;
