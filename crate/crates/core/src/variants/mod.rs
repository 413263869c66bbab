//! Spelling-variant generation.
//!
//! Variants of a concept are the closure of its original names under the
//! enabled rewrite rules. Exploration is breadth-first and deterministic;
//! surfaces that share a skeleton are expanded once, and the output keeps
//! one surface per normalized key, the first one derived.

mod rules;
mod surface;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use rules::{Direction, Rule, RuleGroupId, RuleSet};

use crate::error::{Error, Result};
use crate::normalize::{normalize_lossy, skeleton};
use crate::ontology::{Concept, ConceptId, OntologySnapshot};
use crate::tsv;

pub const DEFAULT_BUDGET: usize = 10_000;

/// Skeletons explored per unit of budget before the closure gives up.
const EXPLORATION_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Generated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::Generated => "generated",
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Provenance::Original),
            "generated" => Ok(Provenance::Generated),
            other => Err(Error::Validation(format!("unknown provenance {other:?}"))),
        }
    }
}

/// One rewrite in a derivation: the rule and which of its outputs was taken.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleStep {
    pub rule: String,
    pub choice: usize,
}

impl fmt::Display for RuleStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.rule, self.choice)
    }
}

impl FromStr for RuleStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (rule, choice) = s
            .rsplit_once('#')
            .ok_or_else(|| Error::Validation(format!("rule step {s:?} lacks '#'")))?;
        let choice = choice
            .parse()
            .map_err(|_| Error::Validation(format!("rule step {s:?} has a bad choice index")))?;
        if rule.is_empty() {
            return Err(Error::Validation(format!("rule step {s:?} has no rule id")));
        }
        Ok(RuleStep {
            rule: rule.to_owned(),
            choice,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermVariant {
    pub surface: String,
    pub normalized_key: String,
    pub concept: ConceptId,
    pub provenance: Provenance,
    /// Empty for original names.
    pub rule_trace: Vec<RuleStep>,
}

fn trace_to_string(trace: &[RuleStep]) -> String {
    trace.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RuleSet {
    /// Replays a derivation from `seed`; `None` when a step does not apply.
    pub fn replay(&self, seed: &str, trace: &[RuleStep]) -> Option<String> {
        let mut current = seed.to_owned();
        for step in trace {
            let rule = self.rule(&step.rule)?;
            current = rule.apply(&current).into_iter().nth(step.choice)?;
        }
        Some(current)
    }
}

/// Generates the variant closure of one concept, original names first.
///
/// Fails with a configuration error if `budget` cannot hold the original
/// names. Generation stops once `budget` distinct keys exist.
pub fn generate_variants(concept: &Concept, rules: &RuleSet, budget: usize) -> Result<Vec<TermVariant>> {
    if budget < concept.name_count() {
        return Err(Error::Config(format!(
            "variant budget {budget} is smaller than the {} original names of {}",
            concept.name_count(),
            concept.id
        )));
    }
    let mut out: Vec<TermVariant> = Vec::new();
    let mut keys: HashSet<String> = HashSet::new();
    let mut explored: HashSet<String> = HashSet::new();
    let mut frontier: VecDeque<(String, Vec<RuleStep>)> = VecDeque::new();

    for name in concept.names() {
        let key = normalize_lossy(name);
        if key.is_empty() {
            continue;
        }
        if keys.insert(key.clone()) {
            out.push(TermVariant {
                surface: name.to_owned(),
                normalized_key: key,
                concept: concept.id.clone(),
                provenance: Provenance::Original,
                rule_trace: Vec::new(),
            });
        }
        if explored.insert(skeleton(name)) {
            frontier.push_back((name.to_owned(), Vec::new()));
        }
    }

    let exploration_cap = budget.saturating_mul(EXPLORATION_FACTOR);
    'closure: while let Some((surface, trace)) = frontier.pop_front() {
        for rule in rules.active_rules() {
            for (choice, next) in rule.apply(&surface).into_iter().enumerate() {
                if out.len() >= budget || explored.len() >= exploration_cap {
                    break 'closure;
                }
                if !explored.insert(skeleton(&next)) {
                    continue;
                }
                let mut next_trace = trace.clone();
                next_trace.push(RuleStep {
                    rule: rule.id().to_owned(),
                    choice,
                });
                let key = normalize_lossy(&next);
                if !key.is_empty() && keys.insert(key.clone()) {
                    out.push(TermVariant {
                        surface: next.clone(),
                        normalized_key: key,
                        concept: concept.id.clone(),
                        provenance: Provenance::Generated,
                        rule_trace: next_trace.clone(),
                    });
                }
                frontier.push_back((next, next_trace));
            }
        }
    }
    Ok(out)
}

/// Variants of every concept in a snapshot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VariantCatalog {
    by_concept: BTreeMap<ConceptId, Vec<TermVariant>>,
}

impl VariantCatalog {
    /// Generates variants for all concepts in parallel; the result does not
    /// depend on thread scheduling.
    pub fn generate(snapshot: &OntologySnapshot, rules: &RuleSet, budget: usize) -> Result<Self> {
        let concepts: Vec<&Concept> = snapshot.concepts().collect();
        let generated: Vec<Vec<TermVariant>> = concepts
            .par_iter()
            .map(|c| generate_variants(c, rules, budget))
            .collect::<Result<_>>()?;
        let by_concept = concepts.iter().map(|c| c.id.clone()).zip(generated).collect();
        Ok(VariantCatalog { by_concept })
    }

    pub fn from_variants(variants: impl IntoIterator<Item = TermVariant>) -> Result<Self> {
        let mut by_concept: BTreeMap<ConceptId, Vec<TermVariant>> = BTreeMap::new();
        let mut seen: HashSet<(ConceptId, String)> = HashSet::new();
        for v in variants {
            if !seen.insert((v.concept.clone(), v.normalized_key.clone())) {
                return Err(Error::Consistency(format!(
                    "{} has two variants with key {:?}",
                    v.concept, v.normalized_key
                )));
            }
            by_concept.entry(v.concept.clone()).or_default().push(v);
        }
        Ok(VariantCatalog { by_concept })
    }

    pub fn concepts(&self) -> impl Iterator<Item = &ConceptId> {
        self.by_concept.keys()
    }

    pub fn variants_of(&self, id: &ConceptId) -> &[TermVariant] {
        self.by_concept.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = &TermVariant> {
        self.by_concept.values().flatten()
    }

    /// Number of distinct keys for a concept, original names included.
    pub fn variant_count(&self, id: &ConceptId) -> Result<usize> {
        self.by_concept
            .get(id)
            .map(Vec::len)
            .ok_or_else(|| Error::NotFound(format!("no variants for {id}")))
    }

    pub fn len(&self) -> usize {
        self.by_concept.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Key of each concept's primary name, when it has one.
    pub fn primary_keys(&self, snapshot: &OntologySnapshot) -> HashMap<ConceptId, String> {
        snapshot
            .concepts()
            .map(|c| (c.id.clone(), normalize_lossy(&c.primary_name)))
            .filter(|(_, k)| !k.is_empty())
            .collect()
    }

    /// `<ontology>\t<local_id>\t<surface>\t<provenance>\t<trace>` per line, the
    /// trace comma-joined.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in self.iter() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                tsv::escape_field(v.concept.ontology()),
                tsv::escape_field(v.concept.local_id()),
                tsv::escape_field(&v.surface),
                v.provenance.as_str(),
                trace_to_string(&v.rule_trace)
            )?;
        }
        Ok(())
    }

    /// Reads a dump written by [`write_to`](Self::write_to). Keys are recomputed.
    pub fn read_from<R: BufRead>(source: R) -> Result<Self> {
        let mut variants = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [ontology, local_id, surface, provenance, trace] = fields.as_slice() else {
                return Err(Error::parse(line_no, format!("expected 5 fields, found {}", fields.len())));
            };
            let concept = ConceptId::new(tsv::unescape_field(ontology), tsv::unescape_field(local_id))
                .map_err(|e| Error::parse(line_no, e.to_string()))?;
            let surface = tsv::unescape_field(surface);
            let provenance: Provenance = provenance.parse().map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
            let rule_trace = trace
                .split(',')
                .filter(|s| !s.is_empty())
                .map(RuleStep::from_str)
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::parse(line_no, e.to_string()))?;
            let normalized_key = normalize_lossy(&surface);
            if normalized_key.is_empty() {
                return Err(Error::parse(line_no, "surface is empty after normalization"));
            }
            variants.push(TermVariant {
                surface,
                normalized_key,
                concept,
                provenance,
                rule_trace,
            });
        }
        VariantCatalog::from_variants(variants)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn concept(ontology: &str, id: &str, primary: &str, synonyms: &[&str]) -> Concept {
        Concept::new(
            ConceptId::new(ontology, id).unwrap(),
            primary,
            synonyms.iter().map(|s| s.to_string()),
        )
        .unwrap()
    }

    fn keys(variants: &[TermVariant]) -> BTreeSet<String> {
        variants.iter().map(|v| v.normalized_key.clone()).collect()
    }

    #[test]
    fn carbon_monoxide_by_hand() {
        let c = concept("ChEBI", "17245", "carbon monoxide", &["CO"]);
        let v = generate_variants(&c, &RuleSet::standard(), DEFAULT_BUDGET).unwrap();
        let expected: BTreeSet<String> =
            ["carbon monoxide", "carbon monoxides", "CO"].iter().map(|s| s.to_string()).collect();
        assert_eq!(keys(&v), expected);
        assert_eq!(v[0].provenance, Provenance::Original);
        assert_eq!(v[1].surface, "CO");
        assert_eq!(v[2].rule_trace, vec![RuleStep { rule: "infl.plural".into(), choice: 0 }]);
    }

    #[test]
    fn helium_with_and_without_rules() {
        let c = concept("ChEBI", "30217", "helium", &[]);
        let all = generate_variants(&c, &RuleSet::standard(), DEFAULT_BUDGET).unwrap();
        assert_eq!(keys(&all), BTreeSet::from(["helium".to_owned(), "heliums".to_owned()]));
        let none = generate_variants(&c, &RuleSet::standard().only(&[]), DEFAULT_BUDGET).unwrap();
        assert_eq!(none.len(), 1);
        assert_eq!(none[0].provenance, Provenance::Original);
    }

    #[test]
    fn budget_below_original_count_is_a_config_error() {
        let c = concept("GO", "1", "a b", &["c d", "e f"]);
        assert!(matches!(generate_variants(&c, &RuleSet::standard(), 2), Err(Error::Config(_))));
        assert_eq!(generate_variants(&c, &RuleSet::standard(), 3).unwrap().len(), 3);
    }

    #[test]
    fn tnf_alpha_family() {
        let c = concept("UniProt", "P01375", "tumor necrosis factor alpha", &["TNF-alpha"]);
        let v = generate_variants(&c, &RuleSet::standard(), DEFAULT_BUDGET).unwrap();
        let k = keys(&v);
        for expected in ["tnf alpha", "TNFa", "tnfalpha", "tnf a", "tumour necrosis factor alpha"] {
            assert!(k.contains(expected), "missing {expected}: {k:?}");
        }
        let tnfa = v.iter().find(|x| x.normalized_key == "TNFa").unwrap();
        assert_eq!(tnfa.provenance, Provenance::Generated);
    }

    #[test]
    fn dump_round_trip() {
        let c = concept("MeSH", "D002248", "Carbon Monoxide", &["CO"]);
        let mut builder = crate::ontology::SnapshotBuilder::new();
        builder.add_source("mesh.tsv", vec![c]).unwrap();
        let snapshot = builder.build(chrono::Utc::now());
        let catalog = VariantCatalog::generate(&snapshot, &RuleSet::standard(), 50).unwrap();
        let mut buf = Vec::new();
        catalog.write_to(&mut buf).unwrap();
        let back = VariantCatalog::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, catalog);
        let id = ConceptId::new("MeSH", "D002248").unwrap();
        assert_eq!(back.variant_count(&id).unwrap(), catalog.variants_of(&id).len());
        assert!(matches!(back.variant_count(&ConceptId::new("MeSH", "x").unwrap()), Err(Error::NotFound(_))));
    }

    #[test]
    fn dump_with_colliding_keys_is_inconsistent() {
        let dump = "GO\t1\tcarbon monoxide\toriginal\t\nGO\t1\tcarbon-monoxide\tgenerated\tortho.space-to-hyphen#0\n";
        assert!(matches!(VariantCatalog::read_from(dump.as_bytes()), Err(Error::Consistency(_))));
    }

    fn name_strategy() -> impl Strategy<Value = String> {
        let token = prop_oneof![
            "[a-z]{2,9}",
            "[A-Z]{2,4}",
            "[0-9]{1,2}",
            Just("alpha".to_owned()),
            Just("β".to_owned()),
            Just("II".to_owned()),
            Just("tumour".to_owned()),
            Just("interleukin".to_owned()),
            Just("receptor".to_owned()),
        ];
        let sep = prop_oneof![Just(" "), Just("-")];
        (proptest::collection::vec((token, sep), 1..4)).prop_map(|parts| {
            let mut s = String::new();
            for (i, (t, sep)) in parts.iter().enumerate() {
                if i > 0 {
                    s.push_str(sep);
                }
                s.push_str(t);
            }
            s
        })
    }

    fn group_subset() -> impl Strategy<Value = Vec<RuleGroupId>> {
        proptest::sample::subsequence(RuleGroupId::ALL.to_vec(), 0..=5)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn closure_properties(primary in name_strategy(), synonym in name_strategy(), groups in group_subset()) {
            let c = concept("T", "1", &primary, &[synonym.as_str()]);
            let rules = RuleSet::standard().only(&groups);
            let v = generate_variants(&c, &rules, DEFAULT_BUDGET).unwrap();

            // original names are included
            let k = keys(&v);
            for name in c.names() {
                prop_assert!(k.contains(&normalize_lossy(name)));
            }
            // one surface per key
            prop_assert_eq!(k.len(), v.len());
            // deterministic
            prop_assert_eq!(&generate_variants(&c, &rules, DEFAULT_BUDGET).unwrap(), &v);
            // every generated surface replays from some original name
            for variant in v.iter().filter(|x| x.provenance == Provenance::Generated) {
                let replayed = c.names().any(|seed| rules.replay(seed, &variant.rule_trace).as_deref() == Some(variant.surface.as_str()));
                prop_assert!(replayed, "{:?} does not replay", variant);
            }
            // fixpoint: no enabled rule adds a new key to a complete closure
            if v.len() < DEFAULT_BUDGET {
                for variant in &v {
                    for rule in rules.active_rules() {
                        for next in rule.apply(&variant.surface) {
                            let nk = normalize_lossy(&next);
                            prop_assert!(nk.is_empty() || k.contains(&nk), "{} -> {} via {}", variant.surface, next, rule.id());
                        }
                    }
                }
            }
        }

        #[test]
        fn more_groups_never_lose_keys(primary in name_strategy(), groups in group_subset(), extra in 0usize..5) {
            let c = concept("T", "1", &primary, &[]);
            let small = RuleSet::standard().only(&groups);
            let mut wider = groups.clone();
            wider.push(RuleGroupId::ALL[extra]);
            let large = RuleSet::standard().only(&wider);
            let a = keys(&generate_variants(&c, &small, DEFAULT_BUDGET).unwrap());
            let b = keys(&generate_variants(&c, &large, DEFAULT_BUDGET).unwrap());
            prop_assert!(a.is_subset(&b), "{:?} not within {:?}", a, b);
        }

        #[test]
        fn budget_caps_output(primary in name_strategy(), budget in 1usize..6) {
            let c = concept("T", "1", &primary, &[]);
            let v = generate_variants(&c, &RuleSet::standard(), budget).unwrap();
            prop_assert!(v.len() <= budget);
        }
    }
}
