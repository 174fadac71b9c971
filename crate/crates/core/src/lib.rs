//! Tactile grasp, in-hand reorientation and classification of small objects
//! (5 to 25 mm) with an 8-DOF two-finger gripper carrying hemispherical
//! visuotactile fingertips.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`kinematics`]: finger forward kinematics, Jacobians and the damped
//!   pseudoinverse.
//! - [`perception`]: deformation thresholding, DBSCAN segmentation and the
//!   contact estimate.
//! - [`grasp_planner`]: top-k elevation grasp point and wrist angle.
//! - [`controller`]: tactile alignment controller with null-space joint
//!   centering.
//! - [`classifier`]: PCA crop normalisation, features, weighted logistic
//!   regression and confusion-matrix evaluation.
//! - [`simworld`]: quasi-static bowl, height map, grasp and tactile renderer.
//! - [`fsm`]: episode state machine tying the stages together.
//! - [`formats`]: on-disk containers shared with the command-line tool.

pub mod classifier;
pub mod controller;
pub mod error;
pub mod formats;
pub mod fsm;
pub mod grasp_planner;
pub mod kinematics;
pub mod perception;
pub mod rng;
pub mod simworld;

pub use error::{Error, Result};
