use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::{per_concept, prior_precision, prior_recall, SearchMode};
use crate::error::{Error, Result};
use crate::matcher::FoundStats;
use crate::ontology::{ConceptId, OntologySnapshot};
use crate::variants::{Provenance, VariantCatalog};

/// Per-ontology variability figures.
#[derive(Debug, Clone, PartialEq)]
pub struct VariabilityRow {
    pub ontology: String,
    pub n_ids: u64,
    pub n_synonyms: u64,
    pub avg_synonyms: f64,
    pub n_synonyms_found: u64,
    pub n_variants: u64,
    pub avg_variants: f64,
    pub n_variants_found: u64,
    pub max_found_variants_per_concept: u64,
    /// `None` when no variant of the ontology was found.
    pub smallest_expected_recall: Option<f64>,
}

/// Per-ontology ambiguity figures.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityRow {
    pub ontology: String,
    pub n_ids: u64,
    /// Objects whose primary name is spelled exactly like another object's in the same ontology.
    pub n_names_same_spelling_within: u64,
    /// Objects sharing a variant key with another object of the same ontology.
    pub n_same_spelling_within: u64,
    /// Objects sharing keys only with objects of other ontologies.
    pub n_same_spelling_across: u64,
    pub n_same_spelling_total: u64,
    /// Most concepts, from any ontology, sharing one key held by this ontology.
    pub max_objects_per_spelling: u64,
    pub smallest_expected_precision: f64,
}

/// One spelling shared by several concepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Homograph {
    pub key: String,
    pub concepts: Vec<ConceptId>,
}

impl Homograph {
    pub fn within(&self, ontology: &str) -> usize {
        self.concepts.iter().filter(|c| c.ontology() == ontology).count()
    }
}

/// Number of concepts of an ontology having `count` names in a series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramBin {
    pub count: u64,
    pub series: String,
    pub n_objects: u64,
}

/// Documents retrieved under a search mode relative to searching all variants.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalPoint {
    pub ontology: String,
    pub mode: SearchMode,
    pub documents: u64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub variability: Vec<VariabilityRow>,
    pub ambiguity: Vec<AmbiguityRow>,
    pub homographs: Vec<Homograph>,
    pub histogram: Vec<HistogramBin>,
    pub retrieval: Vec<RetrievalPoint>,
}

fn key_owners(catalog: &VariantCatalog) -> HashMap<&str, BTreeSet<&ConceptId>> {
    let mut owners: HashMap<&str, BTreeSet<&ConceptId>> = HashMap::new();
    for v in catalog.iter() {
        owners.entry(v.normalized_key.as_str()).or_default().insert(&v.concept);
    }
    owners
}

/// Table-2-shaped ambiguity figures plus every shared spelling.
pub fn ambiguity_report(snapshot: &OntologySnapshot, catalog: &VariantCatalog) -> (Vec<AmbiguityRow>, Vec<Homograph>) {
    let owners = key_owners(catalog);
    let mut rows = Vec::new();
    for descriptor in snapshot.ontologies() {
        let name = descriptor.name.as_str();
        let mut primary_spellings: HashMap<&str, u64> = HashMap::new();
        for c in snapshot.concepts_of(name) {
            *primary_spellings.entry(c.primary_name.as_str()).or_default() += 1;
        }
        let mut row = AmbiguityRow {
            ontology: name.to_owned(),
            n_ids: 0,
            n_names_same_spelling_within: 0,
            n_same_spelling_within: 0,
            n_same_spelling_across: 0,
            n_same_spelling_total: 0,
            max_objects_per_spelling: 1,
            smallest_expected_precision: 1.0,
        };
        for c in snapshot.concepts_of(name) {
            row.n_ids += 1;
            if primary_spellings[c.primary_name.as_str()] > 1 {
                row.n_names_same_spelling_within += 1;
            }
            let (mut within, mut across) = (false, false);
            for v in catalog.variants_of(&c.id) {
                let sharing = &owners[v.normalized_key.as_str()];
                row.max_objects_per_spelling = row.max_objects_per_spelling.max(sharing.len() as u64);
                for other in sharing.iter().filter(|o| ***o != c.id) {
                    if other.ontology() == name {
                        within = true;
                    } else {
                        across = true;
                    }
                }
            }
            if within {
                row.n_same_spelling_within += 1;
            } else if across {
                row.n_same_spelling_across += 1;
            }
        }
        row.n_same_spelling_total = row.n_same_spelling_within + row.n_same_spelling_across;
        row.smallest_expected_precision =
            prior_precision(row.max_objects_per_spelling).expect("max is at least one");
        rows.push(row);
    }
    let mut homographs: Vec<Homograph> = owners
        .into_iter()
        .filter(|(_, set)| set.len() > 1)
        .map(|(key, set)| Homograph {
            key: key.to_owned(),
            concepts: set.into_iter().cloned().collect(),
        })
        .collect();
    homographs.sort_by(|a, b| b.concepts.len().cmp(&a.concepts.len()).then_with(|| a.key.cmp(&b.key)));
    (rows, homographs)
}

/// Table-1-shaped variability figures, the variability histogram and the
/// per-mode retrieval series.
pub fn variability_report(
    snapshot: &OntologySnapshot,
    catalog: &VariantCatalog,
    found: &FoundStats,
) -> Result<(Vec<VariabilityRow>, Vec<HistogramBin>, Vec<RetrievalPoint>)> {
    for v in catalog.iter() {
        if !found.keys.contains_key(&v.normalized_key) {
            return Err(Error::Consistency(format!(
                "found statistics lack the indexed key {:?} of {}",
                v.normalized_key, v.concept
            )));
        }
    }
    let mut rows = Vec::new();
    let mut histogram = Vec::new();
    let mut retrieval = Vec::new();
    for descriptor in snapshot.ontologies() {
        let name = descriptor.name.as_str();
        let mut row = VariabilityRow {
            ontology: name.to_owned(),
            n_ids: 0,
            n_synonyms: 0,
            avg_synonyms: 0.0,
            n_synonyms_found: 0,
            n_variants: 0,
            avg_variants: 0.0,
            n_variants_found: 0,
            max_found_variants_per_concept: 0,
            smallest_expected_recall: None,
        };
        let mut bins: [BTreeMap<u64, u64>; 3] = Default::default();
        let mut docs = [0u64; 3];
        for c in snapshot.concepts_of(name) {
            let variants = catalog.variants_of(&c.id);
            let found_variants = variants.iter().filter(|v| found.is_found(&v.normalized_key));
            let n_found = found_variants.clone().count() as u64;
            let n_original_found =
                found_variants.filter(|v| v.provenance == Provenance::Original).count() as u64;
            row.n_ids += 1;
            row.n_synonyms += c.name_count() as u64;
            row.n_synonyms_found += n_original_found;
            row.n_variants += variants.len() as u64;
            row.n_variants_found += n_found;
            row.max_found_variants_per_concept = row.max_found_variants_per_concept.max(n_found);
            for (bin, count) in bins.iter_mut().zip([c.name_count() as u64, variants.len() as u64, n_found]) {
                *bin.entry(count).or_default() += 1;
            }
            if let Some(s) = found.concepts.get(&c.id) {
                docs[0] += s.docs_primary;
                docs[1] += s.docs_original;
                docs[2] += s.docs_any;
            }
        }
        row.avg_synonyms = per_concept(row.n_synonyms, row.n_ids).unwrap_or(0.0);
        row.avg_variants = per_concept(row.n_variants, row.n_ids).unwrap_or(0.0);
        row.smallest_expected_recall = prior_recall(row.max_found_variants_per_concept).ok();
        for (series, bin) in ["original", "generated", "found"].into_iter().zip(bins) {
            histogram.extend(bin.into_iter().map(|(count, n_objects)| HistogramBin {
                count,
                series: format!("{name}/{series}"),
                n_objects,
            }));
        }
        for (mode, documents) in SearchMode::ALL.into_iter().zip(docs) {
            retrieval.push(RetrievalPoint {
                ontology: name.to_owned(),
                mode,
                documents,
                ratio: (docs[2] > 0).then(|| documents as f64 / docs[2] as f64),
            });
        }
        rows.push(row);
    }
    Ok((rows, histogram, retrieval))
}

pub fn uncertainty_report(
    snapshot: &OntologySnapshot,
    catalog: &VariantCatalog,
    found: &FoundStats,
) -> Result<UncertaintyReport> {
    let (variability, histogram, retrieval) = variability_report(snapshot, catalog, found)?;
    let (ambiguity, homographs) = ambiguity_report(snapshot, catalog);
    Ok(UncertaintyReport {
        variability,
        ambiguity,
        homographs,
        histogram,
        retrieval,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_owned(), |v| v.to_string())
}

fn opt4(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_owned(), |v| format!("{v:.4}"))
}

pub const TABLE1_HEADER: &str = "ontology,n_ids,n_synonyms,avg_synonyms,n_synonyms_found,n_variants,avg_variants,n_variants_found,max_found_variants_per_concept,smallest_expected_recall";
pub const TABLE2_HEADER: &str = "ontology,n_ids,n_names_same_spelling_within,n_same_spelling_within,n_same_spelling_across,n_same_spelling_total,max_objects_per_spelling,smallest_expected_precision";
pub const TABLE3_HEADER: &str = "key,n_objects,ontologies,concepts";

impl UncertaintyReport {
    pub fn table1_csv(&self) -> String {
        let mut out = format!("{TABLE1_HEADER}\n");
        for r in &self.variability {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                csv_field(&r.ontology),
                r.n_ids,
                r.n_synonyms,
                r.avg_synonyms,
                r.n_synonyms_found,
                r.n_variants,
                r.avg_variants,
                r.n_variants_found,
                r.max_found_variants_per_concept,
                opt(r.smallest_expected_recall)
            );
        }
        out
    }

    pub fn table2_csv(&self) -> String {
        let mut out = format!("{TABLE2_HEADER}\n");
        for r in &self.ambiguity {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                csv_field(&r.ontology),
                r.n_ids,
                r.n_names_same_spelling_within,
                r.n_same_spelling_within,
                r.n_same_spelling_across,
                r.n_same_spelling_total,
                r.max_objects_per_spelling,
                r.smallest_expected_precision
            );
        }
        out
    }

    pub fn table3_csv(&self) -> String {
        let mut out = format!("{TABLE3_HEADER}\n");
        for h in &self.homographs {
            let ontologies: BTreeSet<&str> = h.concepts.iter().map(ConceptId::ontology).collect();
            let concepts: Vec<String> = h.concepts.iter().map(ToString::to_string).collect();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                csv_field(&h.key),
                h.concepts.len(),
                csv_field(&ontologies.into_iter().collect::<Vec<_>>().join(" ")),
                csv_field(&concepts.join(" "))
            );
        }
        out
    }

    /// `<count>\t<ontology>/<series>\t<n_objects>`
    pub fn fig2_tsv(&self) -> String {
        let mut out = String::new();
        for b in &self.histogram {
            let _ = writeln!(out, "{}\t{}\t{}", b.count, b.series, b.n_objects);
        }
        out
    }

    /// `<mode>\t<ontology>\t<ratio to all-variants retrieval>`
    pub fn fig1_tsv(&self) -> String {
        let mut out = String::new();
        for p in &self.retrieval {
            let _ = writeln!(out, "{}\t{}\t{}", p.mode.as_str(), p.ontology, opt(p.ratio));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::from("Variability and recall\n");
        for r in &self.variability {
            let _ = writeln!(
                out,
                "  {}: {} concepts, {:.4} names and {:.4} variants per concept, {} of {} variants found, \
                 at most {} per concept, smallest expected recall {}",
                r.ontology,
                r.n_ids,
                r.avg_synonyms,
                r.avg_variants,
                r.n_variants_found,
                r.n_variants,
                r.max_found_variants_per_concept,
                opt4(r.smallest_expected_recall)
            );
        }
        out.push_str("\nAmbiguity and precision\n");
        for r in &self.ambiguity {
            let _ = writeln!(
                out,
                "  {}: {} objects share a spelling ({} within, {} across), at most {} objects per spelling, \
                 smallest expected precision {:.4}",
                r.ontology,
                r.n_same_spelling_total,
                r.n_same_spelling_within,
                r.n_same_spelling_across,
                r.max_objects_per_spelling,
                r.smallest_expected_precision
            );
        }
        let _ = writeln!(out, "\nShared spellings: {}", self.homographs.len());
        for h in self.homographs.iter().take(10) {
            let _ = writeln!(out, "  {:?}: {} objects", h.key, h.concepts.len());
        }
        out
    }

    /// Writes `table1.csv`, `table2.csv`, `table3.csv`, `fig1.tsv`, `fig2.tsv` and `summary.txt`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("table1.csv", self.table1_csv()),
            ("table2.csv", self.table2_csv()),
            ("table3.csv", self.table3_csv()),
            ("fig1.tsv", self.fig1_tsv()),
            ("fig2.tsv", self.fig2_tsv()),
            ("summary.txt", self.summary()),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
