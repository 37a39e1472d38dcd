pub mod chart;
pub mod classify;
pub mod error;
pub mod expr;
pub mod geodesics;
pub mod geom;

pub mod navigation;
pub mod spray;

pub use chart::Chart;
pub use error::{Error, Result};
