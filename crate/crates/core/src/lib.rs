//! Spectral design and frequency analysis of graph convolutions, and a
//! small dense engine for multi-support and depthwise separable graph
//! convolution networks.
//!
//! The pipeline is: [`graph::Graph`] → [`graph::build_laplacian`] →
//! [`spectral::decompose`] → supports from [`kernels`] (designed from
//! [`filter::FilterDesign`] responses, Chebyshev, GCN or sampled attention)
//! → profiles in [`analysis`] or training in [`nn`].

pub mod analysis;
pub mod error;
pub mod filter;
pub mod graph;
pub mod io;
pub mod kernels;
pub mod nn;
pub mod spectral;

pub use error::{Error, Result};
