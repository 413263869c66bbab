pub mod error;
pub mod normalize;
pub mod ontology;
pub mod tsv;
pub mod variants;
pub mod matcher;
pub mod analyzer;
pub mod annotation;

pub use error::{Error, Result};
pub use normalize::normalize_term;
pub use ontology::{Concept, ConceptId, OntologySnapshot};
