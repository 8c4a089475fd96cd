//! Stroke-based painting for a brush-holding robot arm.
//!
//! A grayscale target is approximated by a greedy sequence of quadratic
//! Bezier brushstrokes ([`sbr`]), snapped to a small paint and brush palette
//! ([`quantize`]) and turned into a text program of arm poses ([`program`]).
//! [`data`] ingests motion-capture recordings and scanned stroke sheets, and
//! [`vae`] trains a convolutional VAE on stroke images.
//!
//! ```
//! use robopaint::canvas::Canvas;
//! use robopaint::sbr::{paint, SbrConfig};
//!
//! let target = Canvas::filled(16, 16, 0.2).unwrap();
//! let cfg = SbrConfig { budget: 5, proposals_per_step: 8, seed: 1, ..SbrConfig::default() };
//! let res = paint(&target, &cfg).unwrap();
//! assert!(res.trace.last().unwrap() < &res.initial_mse);
//! ```

pub mod canvas;
pub mod cli;
pub mod data;
pub mod error;
pub mod kmeans;
pub mod program;
pub mod quantize;
pub mod sbr;
pub mod stroke;
pub mod vae;

pub use error::{Error, Result};
