pub mod assignment;
pub mod builtin;
pub mod conjugacy;
pub mod domain;
pub mod dual;
pub mod error;
pub mod exec;
pub mod factorize;
pub mod io;
pub mod matching;
pub mod primal;
pub mod transport;
mod vecops;

pub use error::{Error, Result};
