//! Ego-centric sigma-point perception.
//!
//! A target surface is summarized by seven sigma points (weighted centroid
//! plus ± offsets along its principal axes). A bank of camera-frame Kalman
//! filters, compensated by visual-odometry ego-motion, upsamples slow and
//! late observations to the control rate. The crate also carries the
//! training-side models (drift, randomization, reward, curriculum) and a
//! deterministic scenario simulator that scores the filter against
//! baselines.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod app;
pub mod config;
pub mod estimator;
pub mod geometry;
pub mod perturbation;
pub mod sim;
pub mod tasklogic;
