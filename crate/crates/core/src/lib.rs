//! City transportation typology prediction from Wikipedia page text.

pub mod corpus;
pub mod embedding;
pub mod feasibility;
pub mod keyline;
pub mod model;
pub mod pipeline;
pub mod synthetic;
pub mod typology;

pub use typology::{LabelTask, Stage, Typology};
