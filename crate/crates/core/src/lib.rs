//! Variational and weak KAM tools for N-body problems with homogeneous
//! potentials `U = sum m_i m_j / r_ij^(2 kappa)`.

pub mod action;
pub mod catalog;
pub mod central;
pub mod cli;
pub mod ejection;
pub mod error;
pub mod flow;
pub mod io;
pub mod mesh;
pub mod parallel;
pub mod space;
pub mod spherehj;
pub mod weakkam;

pub use error::{Error, Result};
pub use space::{Configuration, MassSystem};
