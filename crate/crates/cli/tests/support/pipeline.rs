//! Runs the batch subcommands on the mini fixtures and compares with the golden files.
//!
//! `SEMLABEL_BLESS=1 cargo test -p semlabel-cli --test cli` rewrites the
//! golden files and the annotation store they were made from.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use chrono::{DateTime, TimeDelta, Utc};
use tempfile::TempDir;

use semlabel_core::annotation::{Action, AnnotationService, ManualClock};
use semlabel_core::matcher::{read_corpus, TermIndex};
use semlabel_core::variants::VariantCatalog;

pub const CREATED_AT: &str = "2018-04-20T00:00:00Z";
pub const REPORT_FILES: [&str; 6] = ["table1.csv", "table2.csv", "table3.csv", "fig1.tsv", "fig2.tsv", "summary.txt"];
pub const EXPORTED_DOC: &str = "PMID100000";
const STORED_DOCS: usize = 3;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn mini() -> PathBuf {
    fixtures().join("mini")
}

pub fn semlabel<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    Command::new(env!("CARGO_BIN_EXE_semlabel"))
        .args(args.into_iter().map(Into::into))
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn checked(step: &str, out: Output) -> Result<(), String> {
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{step} exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)))
    }
}

fn ontology_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .expect("fixture directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    files.sort();
    files
}

/// Outputs of one pipeline run, kept alive with their directory.
pub struct Run {
    pub dir: TempDir,
}

impl Run {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.dir.path().join("report").join(name)
    }
}

/// ingest, variants, scan, analyze and export, in that order.
pub fn run_pipeline(workers: usize) -> Result<Run, String> {
    let run = run_report(workers)?;
    let p = |n: &str| run.path(n).into_os_string();
    checked(
        "export",
        semlabel([
            OsString::from("export"),
            "--data-dir".into(),
            mini().join("store").into(),
            "--doc".into(),
            EXPORTED_DOC.into(),
            "--out".into(),
            p("export.xml"),
        ]),
    )?;
    Ok(run)
}

fn run_report(workers: usize) -> Result<Run, String> {
    let run = Run { dir: TempDir::new().map_err(|e| e.to_string())? };
    let p = |n: &str| run.path(n).into_os_string();

    let mut ingest: Vec<OsString> = vec!["ingest".into(), "--created-at".into(), CREATED_AT.into(), "--out".into(), p("snapshot.tsv")];
    ingest.extend(ontology_files(&mini().join("ontology")).into_iter().map(Into::into));
    checked("ingest", semlabel(ingest))?;

    checked(
        "variants",
        semlabel([OsString::from("variants"), "--snapshot".into(), p("snapshot.tsv"), "--out".into(), p("variants.tsv")]),
    )?;
    checked(
        "scan",
        semlabel([
            OsString::from("scan"),
            "--variants".into(),
            p("variants.tsv"),
            "--corpus".into(),
            mini().join("corpus.tsv").into(),
            "--out-found".into(),
            p("found.tsv"),
            "--out-occurrences".into(),
            p("occurrences.tsv"),
            "--workers".into(),
            workers.to_string().into(),
        ]),
    )?;
    checked(
        "analyze",
        semlabel([
            OsString::from("analyze"),
            "--snapshot".into(),
            p("snapshot.tsv"),
            "--variants".into(),
            p("variants.tsv"),
            "--found".into(),
            p("found.tsv"),
            "--out".into(),
            p("report"),
        ]),
    )?;
    Ok(run)
}

/// Every golden file paired with the file the run produced.
pub fn golden_pairs(run: &Run) -> Vec<(PathBuf, PathBuf)> {
    let golden = mini().join("golden");
    let mut pairs: Vec<_> = REPORT_FILES.iter().map(|f| (golden.join(f), run.report(f))).collect();
    pairs.push((golden.join("export.xml"), run.path("export.xml")));
    pairs
}

pub fn compare_golden(run: &Run) -> Result<usize, String> {
    let pairs = golden_pairs(run);
    for (golden, produced) in &pairs {
        let want = fs::read(golden).map_err(|e| format!("{}: {e}", golden.display()))?;
        let got = fs::read(produced).map_err(|e| format!("{}: {e}", produced.display()))?;
        if want != got {
            return Err(format!("{} differs from the golden file", produced.display()));
        }
    }
    Ok(pairs.len())
}

/// Contents of every file below `dir`, for checking that nothing was modified.
pub fn tree_contents(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(tree_contents(&path));
        } else {
            out.insert(path.clone(), fs::read(&path).unwrap());
        }
    }
    out
}

/// Rebuilds the annotation store from the run's variants, then the golden files.
pub fn bless() -> Result<(), String> {
    let run = run_report(1)?;
    let catalog = VariantCatalog::read_from(fs::read(run.path("variants.tsv")).unwrap().as_slice()).map_err(|e| e.to_string())?;
    write_store(&mini().join("store"), Arc::new(TermIndex::from_catalog(&catalog).unwrap()))?;
    let run = run_pipeline(1)?;
    let golden = mini().join("golden");
    fs::create_dir_all(&golden).unwrap();
    for (want, produced) in golden_pairs(&run) {
        fs::copy(&produced, &want).map_err(|e| format!("{}: {e}", want.display()))?;
    }
    Ok(())
}

fn write_store(dir: &Path, index: Arc<TermIndex>) -> Result<(), String> {
    if dir.exists() {
        fs::remove_dir_all(dir).unwrap();
    }
    let start: DateTime<Utc> = CREATED_AT.parse().unwrap();
    let clock = Arc::new(ManualClock::new(start));
    let service = AnnotationService::open(dir, index, Box::new(Shared(clock.clone()))).map_err(|e| e.to_string())?;
    let corpus = fs::read(mini().join("corpus.tsv")).unwrap();
    for doc in read_corpus(corpus.as_slice()).take(STORED_DOCS) {
        let doc = doc.map_err(|e| e.to_string())?;
        let (id, records) = service.submit_document(&doc.text, Some(&doc.doc_id)).map_err(|e| e.to_string())?;
        // a fixed pattern of decisions so the export shows every status
        for (i, r) in records.iter().enumerate() {
            clock.advance(TimeDelta::seconds(1));
            let first = r.candidate_states.keys().next();
            let (action, target) = match i % 4 {
                0 => (Action::ConfirmCandidate, first),
                1 => (Action::RejectCandidate, first),
                2 => (Action::MarkNotBio, None),
                _ => continue,
            };
            service.record_decision(&r.annotation_id, action, target, "curator").map_err(|e| format!("{id}: {e}"))?;
        }
    }
    Ok(())
}

struct Shared(Arc<ManualClock>);

impl semlabel_core::annotation::Clock for Shared {
    fn now(&self) -> DateTime<Utc> {
        self.0.now()
    }
}
