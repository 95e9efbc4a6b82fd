//! Question-conditioned region-of-interest tooling for vision-language
//! models.
//!
//! The pipeline scores detected image regions against a question by
//! propagating gradient-weighted attention relevance ([`relevance`]),
//! turns the scores into one quantized box ([`roi`]), renders the two-turn
//! locate/answer conversation ([`prompt`]) and writes training records
//! ([`dataset`]). At inference time [`inference`] drives the same two
//! steps against an external model, cropping the predicted region with
//! [`geometry`]. [`stats`] summarizes where ROIs land.

pub mod dataset;
pub mod geometry;
pub mod inference;
pub mod prompt;
pub mod relevance;
pub mod roi;
pub mod stats;
pub mod synthetic;
