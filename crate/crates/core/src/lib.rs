//! Numerical laboratory for metric Sturm-Liouville inequalities in two dimensions.
//!
//! The crate measures, on discretized tori, squares and the round sphere, the
//! quantities that enter the uncertainty principle between the Wasserstein
//! distance of the positive and negative parts of a function and the length of
//! its zero set:
//!
//! * [`domain`]: geometries, grids, quadrature and norms.
//! * [`spectral`]: eigenbases of `-div(a grad)`, high-frequency projection, heat flow.
//! * [`nodal`]: zero-set extraction, nodal length and sign components.
//! * [`transport`]: exact and entropic optimal transport, W1 dual certificates.
//! * [`lemma`]: epsilon-enlargement areas of planar shapes.
//! * [`harness`]: end-to-end inequality reports and exponent fits.
//! * [`design`]: point sets on the sphere and their heat-smeared measures.
//! * [`report`]: CSV, JSON and SVG writers.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod domain;
pub mod error;
pub mod harness;
pub mod lemma;
pub mod nodal;
pub mod par;
pub mod report;
pub mod spectral;
pub mod transport;
mod union_find;

pub use error::{Error, Result};
