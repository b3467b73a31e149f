//! Document layout toolkit: a normalized layout model, token serialization
//! with a regular element grammar, five conditional task regimes,
//! coarse-to-fine taxonomies, layout metrics, a grammar-constrained n-gram
//! generator and a streaming corpus pipeline.

pub mod dataset;
pub mod error;
pub mod generator;
pub mod layout;
pub mod metrics;
pub mod render;
pub mod serialization;
pub mod synth;
pub mod tasks;
pub mod taxonomy;

pub use error::{Error, Result};
pub use layout::{BBox, CategoryId, DocType, Element, Layout, Page, QBBox};
pub use taxonomy::{LabelMap, Taxonomy};
