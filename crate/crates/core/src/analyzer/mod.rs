//! Prior and empirical recall/precision under term variability and ambiguity.
//!
//! Variability (many spellings per concept) bounds recall by
//! `1 / variants` and ambiguity (many concepts per spelling) bounds precision
//! by `1 / concepts`, both under a uniform prior.

mod report;

use std::collections::{BTreeMap, BTreeSet};

pub use report::{
    ambiguity_report, uncertainty_report, variability_report, AmbiguityRow, HistogramBin, Homograph,
    RetrievalPoint, UncertaintyReport, VariabilityRow,
};

use crate::error::{Error, Result};
use crate::matcher::Occurrence;
use crate::normalize::normalize_term;
use crate::ontology::{ConceptId, OntologySnapshot};
use crate::variants::{Provenance, VariantCatalog};

/// Smallest expected recall when a concept has `n_variants` spellings.
pub fn prior_recall(n_variants: u64) -> Result<f64> {
    if n_variants < 1 {
        return Err(Error::Domain("prior recall needs at least one variant".into()));
    }
    Ok(1.0 / n_variants as f64)
}

/// Smallest expected precision when `n_concepts_sharing` concepts share a spelling.
pub fn prior_precision(n_concepts_sharing: u64) -> Result<f64> {
    if n_concepts_sharing < 1 {
        return Err(Error::Domain("prior precision needs at least one concept".into()));
    }
    Ok(1.0 / n_concepts_sharing as f64)
}

/// Mean of `total` over `n_ids` concepts; `None` for an empty ontology.
pub fn per_concept(total: u64, n_ids: u64) -> Option<f64> {
    (n_ids > 0).then(|| total as f64 / n_ids as f64)
}

/// Recall and precision bounds when variability and ambiguity act together.
///
/// Ambiguity does not lower recall and variability does not lower precision,
/// so each bound is its single-factor prior times one.
pub fn combined_priors(n_variants: u64, n_concepts_sharing: u64) -> Result<(f64, f64)> {
    const AMBIGUITY_RECALL: f64 = 1.0;
    const VARIABILITY_PRECISION: f64 = 1.0;
    Ok((
        prior_recall(n_variants)? * AMBIGUITY_RECALL,
        prior_precision(n_concepts_sharing)? * VARIABILITY_PRECISION,
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetrievalOutcome {
    pub retrieved: BTreeSet<String>,
    pub relevant: BTreeSet<String>,
}

impl RetrievalOutcome {
    pub fn new(retrieved: BTreeSet<String>, relevant: BTreeSet<String>) -> Self {
        RetrievalOutcome { retrieved, relevant }
    }

    pub fn retrieved_relevant(&self) -> BTreeSet<&String> {
        self.retrieved.intersection(&self.relevant).collect()
    }
}

pub fn empirical_recall(outcome: &RetrievalOutcome) -> Result<f64> {
    if outcome.relevant.is_empty() {
        return Err(Error::UndefinedMetric("recall with no relevant documents"));
    }
    Ok(outcome.retrieved_relevant().len() as f64 / outcome.relevant.len() as f64)
}

pub fn empirical_precision(outcome: &RetrievalOutcome) -> Result<f64> {
    if outcome.retrieved.is_empty() {
        return Err(Error::UndefinedMetric("precision with no retrieved documents"));
    }
    Ok(outcome.retrieved_relevant().len() as f64 / outcome.retrieved.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    pub terms: Vec<String>,
    pub target_concept: Option<ConceptId>,
}

impl QuerySpec {
    pub fn new(terms: Vec<String>, target_concept: Option<ConceptId>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Validation("a query needs at least one term".into()));
        }
        for t in &terms {
            normalize_term(t)?;
        }
        Ok(QuerySpec { terms, target_concept })
    }

    /// The query a searcher would issue for `concept` in the given mode.
    pub fn for_concept(
        snapshot: &OntologySnapshot,
        catalog: &VariantCatalog,
        concept: &ConceptId,
        mode: SearchMode,
    ) -> Result<Self> {
        let c = snapshot
            .get(concept)
            .ok_or_else(|| Error::NotFound(format!("unknown concept {concept}")))?;
        let terms: Vec<String> = match mode {
            SearchMode::PrimaryName => vec![c.primary_name.clone()],
            SearchMode::OriginalSynonyms => c.names().map(str::to_owned).collect(),
            SearchMode::AllVariants => {
                let mut t: Vec<String> = c.names().map(str::to_owned).collect();
                t.extend(
                    catalog
                        .variants_of(concept)
                        .iter()
                        .filter(|v| v.provenance == Provenance::Generated)
                        .map(|v| v.surface.clone()),
                );
                t
            }
        };
        QuerySpec::new(terms, Some(concept.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SearchMode {
    PrimaryName,
    OriginalSynonyms,
    AllVariants,
}

impl SearchMode {
    pub const ALL: [SearchMode; 3] = [SearchMode::PrimaryName, SearchMode::OriginalSynonyms, SearchMode::AllVariants];

    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::PrimaryName => "primary",
            SearchMode::OriginalSynonyms => "synonyms",
            SearchMode::AllVariants => "variants",
        }
    }
}

/// Inverted index from normalized key to the documents containing it.
#[derive(Debug, Clone, Default)]
pub struct RetrievalIndex {
    postings: BTreeMap<String, BTreeSet<String>>,
}

impl RetrievalIndex {
    pub fn from_occurrences<'a>(occurrences: impl IntoIterator<Item = &'a Occurrence>) -> Self {
        let mut postings: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for occ in occurrences {
            postings.entry(occ.normalized_key.clone()).or_default().insert(occ.doc_id.clone());
        }
        RetrievalIndex { postings }
    }

    pub fn docs_for_key(&self, key: &str) -> BTreeSet<String> {
        self.postings.get(key).cloned().unwrap_or_default()
    }

    /// Documents containing any query term.
    pub fn retrieve(&self, query: &QuerySpec) -> BTreeSet<String> {
        let keys: BTreeSet<String> = query.terms.iter().filter_map(|t| normalize_term(t).ok()).collect();
        keys.iter().flat_map(|k| self.docs_for_key(k)).collect()
    }

    /// Documents in which the matcher offered `concept` as a candidate.
    pub fn docs_mentioning(&self, catalog: &VariantCatalog, concept: &ConceptId) -> BTreeSet<String> {
        catalog
            .variants_of(concept)
            .iter()
            .flat_map(|v| self.docs_for_key(&v.normalized_key))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn round4(x: f64) -> f64 {
        (x * 10_000.0).round() / 10_000.0
    }

    #[test]
    fn averages() {
        assert_eq!(round4(per_concept(1018837, 553667).unwrap()), 1.8402);
        assert_eq!(per_concept(7, 2), Some(3.5));
        assert_eq!(per_concept(3, 0), None);
    }

    #[test]
    fn priors() {
        assert_eq!(round4(prior_recall(84).unwrap()), 0.0119);
        assert_eq!(round4(prior_recall(19).unwrap()), 0.0526);
        assert_eq!(prior_recall(1).unwrap(), 1.0);
        assert_eq!(round4(prior_precision(17).unwrap()), 0.0588);
        assert_eq!(round4(prior_precision(6).unwrap()), 0.1667);
        assert!(matches!(prior_recall(0), Err(Error::Domain(_))));
        assert!(matches!(prior_precision(0), Err(Error::Domain(_))));
    }

    #[test]
    fn combined() {
        assert_eq!(combined_priors(1, 1).unwrap(), (1.0, 1.0));
        let (r, p) = combined_priors(5, 7).unwrap();
        assert_eq!(r, 0.2);
        assert_eq!(p, 1.0 / 7.0);
        let (r, p) = combined_priors(84, 17).unwrap();
        assert_eq!((round4(r), round4(p)), (0.0119, 0.0588));
    }

    #[test]
    fn empirical_metrics() {
        let o = RetrievalOutcome::new(docs(&["d1", "d9"]), docs(&["d1", "d2", "d3", "d4"]));
        assert_eq!(empirical_recall(&o).unwrap(), 0.25);
        assert_eq!(empirical_precision(&o).unwrap(), 0.5);
        let o = RetrievalOutcome::new(docs(&["a", "b", "c", "x", "y"]), docs(&["a", "b", "c"]));
        assert_eq!(empirical_precision(&o).unwrap(), 0.6);
        let empty = RetrievalOutcome::default();
        assert!(matches!(empirical_recall(&empty), Err(Error::UndefinedMetric(_))));
        assert!(matches!(empirical_precision(&empty), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn query_validation() {
        assert!(matches!(QuerySpec::new(vec![], None), Err(Error::Validation(_))));
        assert!(matches!(QuerySpec::new(vec![" - ".into()], None), Err(Error::Validation(_))));
    }

    proptest::proptest! {
        #[test]
        fn priors_nonincreasing(a in 1u64..100_000, b in 1u64..100_000) {
            let (lo, hi) = (a.min(b), a.max(b));
            proptest::prop_assert!(prior_recall(hi).unwrap() <= prior_recall(lo).unwrap());
            proptest::prop_assert!(prior_precision(hi).unwrap() <= prior_precision(lo).unwrap());
            proptest::prop_assert_eq!(prior_recall(a).unwrap() == 1.0, a == 1);
        }
    }
}
