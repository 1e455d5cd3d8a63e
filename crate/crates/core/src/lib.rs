//! Rice yield prediction: a one-hot multiple linear regression over
//! (area, state, season), a small dense network mapping sensor readings to
//! expected yield, and a convolutional leaf-disease classifier, all built on
//! the in-crate [`nnet`] engine.

pub mod data;
pub mod disease;
pub mod nnet;
pub mod regression;
pub mod yield_model;
