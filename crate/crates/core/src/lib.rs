pub mod cli;
pub mod criteria;
pub mod error;
pub mod expr;
pub mod flows;
pub mod geodesic;
pub mod geometry;
pub mod hodograph;
pub mod output;
pub mod registry;
pub mod sampling;

pub use error::{Error, EvalError, ParseError, Result};
pub use expr::Expr;
