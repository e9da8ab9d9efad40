pub mod embed;
pub mod error;
pub mod fragment;
pub mod identities;
pub mod lincone;
pub mod ncpoly;
pub mod optim;
pub mod robustify;
pub mod scenarios;
pub mod tomo;

pub use error::{Error, Result};
