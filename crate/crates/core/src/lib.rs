//! Log-Gaussian Cox process models on triangulated planar and spherical
//! domains. The latent field is a Gaussian Markov random field built from
//! a finite element discretization of the Matérn SPDE, fitted with a Laplace
//! approximation and an explored grid over its two hyperparameters.

pub mod cli;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod quadrature;
pub mod simulate;
pub mod sparse;

pub use error::{Error, Result};
