//! The `semlabel` command line: a file-based batch pipeline plus the annotation server.
//!
//! ```text
//! ingest   ontology files         -> snapshot
//! variants snapshot               -> variant dump
//! scan     variants + corpus      -> occurrences + found-stats
//! analyze  snapshot + variants + found-stats -> report directory
//! serve    snapshot + variants    -> HTTP annotation service
//! export   annotation store       -> XML
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use semlabel_core::analyzer::uncertainty_report;
use semlabel_core::annotation::{AnnotationService, SystemClock};
use semlabel_core::matcher::{format_occurrence, read_corpus, scan_corpus, FoundStats, TermIndex};
use semlabel_core::ontology::{ingest_ontology, Format, SnapshotBuilder};
use semlabel_core::variants::{RuleGroupId, RuleSet, VariantCatalog, DEFAULT_BUDGET};
use semlabel_core::{Error, OntologySnapshot};

#[derive(Debug, Parser)]
#[command(name = "semlabel", version, about = "Ontology term variants, corpus matching and supervised labeling")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a concept snapshot from ontology files.
    Ingest(IngestArgs),
    /// Expand every concept into its spelling variants.
    Variants(VariantsArgs),
    /// Match a corpus against the variant dictionary.
    Scan(ScanArgs),
    /// Write the variability and ambiguity report.
    Analyze(AnalyzeArgs),
    /// Run the annotation HTTP service.
    Serve(ServeArgs),
    /// Export one annotated document as XML.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, default_value = "normalized")]
    pub format: String,
    /// Snapshot output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Snapshot timestamp (RFC 3339). Defaults to SOURCE_DATE_EPOCH, else the newest input mtime.
    #[arg(long)]
    pub created_at: Option<DateTime<Utc>>,
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VariantsArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Lexicon file replacing the built-in acronym and spelling rules.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Rule groups to switch off, e.g. `--disable acronym`.
    #[arg(long, value_delimiter = ',')]
    pub disable: Vec<RuleGroupId>,
    /// Maximum variants per concept.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub variants: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_found: PathBuf,
    #[arg(long)]
    pub out_occurrences: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub variants: PathBuf,
    #[arg(long)]
    pub found: PathBuf,
    /// Report directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub variants: PathBuf,
    /// Where documents and the decision log are kept. In memory when absent.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub bind: IpAddr,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub doc: String,
    /// XML output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 2,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Variants(a) => variants(a),
        Command::Scan(a) => scan(a),
        Command::Analyze(a) => analyze(a),
        Command::Serve(a) => serve(a),
        Command::Export(a) => export(a),
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e).into())
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e).into())
}

/// Writes to `path`, or stdout when `None`.
fn write_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> CliResult {
    let result = match path {
        Some(p) => {
            let mut w = create(p)?;
            body(&mut w).and_then(|_| w.flush())
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            body(&mut w).and_then(|_| w.flush())
        }
    };
    result.map_err(|e| Error::io(path.unwrap_or(Path::new("<stdout>")), e).into())
}

fn with_context<T>(path: &Path, r: semlabel_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        Error::Io { .. } | Error::Config(_) => e.into(),
        other => CliError {
            code: 1,
            message: format!("{}: {other}", path.display()),
        },
    })
}

fn load_snapshot(path: &Path) -> CliResult<OntologySnapshot> {
    with_context(path, OntologySnapshot::read_from(open(path)?))
}

fn load_catalog(path: &Path) -> CliResult<VariantCatalog> {
    with_context(path, VariantCatalog::read_from(open(path)?))
}

fn default_created_at(files: &[PathBuf]) -> CliResult<DateTime<Utc>> {
    if let Ok(v) = std::env::var("SOURCE_DATE_EPOCH") {
        let secs: i64 = v.trim().parse().map_err(|_| usage(format!("SOURCE_DATE_EPOCH is not an integer: {v:?}")))?;
        return DateTime::from_timestamp(secs, 0).ok_or_else(|| usage("SOURCE_DATE_EPOCH out of range"));
    }
    let mut newest = DateTime::UNIX_EPOCH;
    for f in files {
        let modified = std::fs::metadata(f).and_then(|m| m.modified()).map_err(|e| Error::io(f, e))?;
        newest = newest.max(DateTime::<Utc>::from(modified));
    }
    Ok(newest)
}

fn ingest(a: IngestArgs) -> CliResult {
    let format: Format = a.format.parse()?;
    let readers = a.files.iter().map(|f| open(f)).collect::<CliResult<Vec<_>>>()?;
    let created_at = match a.created_at {
        Some(t) => t,
        None => default_created_at(&a.files)?,
    };
    let mut builder = SnapshotBuilder::new();
    for (path, reader) in a.files.iter().zip(readers) {
        let concepts = with_context(path, ingest_ontology(reader, format))?;
        log::info!("{}: {} concepts", path.display(), concepts.len());
        with_context(path, builder.add_source(&path.to_string_lossy(), concepts).map(|_| ()))?;
    }
    let snapshot = builder.build(created_at);
    write_output(a.out.as_deref(), |w| snapshot.write_to(w))
}

fn variants(a: VariantsArgs) -> CliResult {
    let mut rules = match &a.rules {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            with_context(path, RuleSet::with_lexicon(&text))?
        }
        None => RuleSet::standard(),
    };
    for g in &a.disable {
        rules = rules.without(*g);
    }
    let snapshot = load_snapshot(&a.snapshot)?;
    let catalog = VariantCatalog::generate(&snapshot, &rules, a.budget)?;
    log::info!("{} variants for {} concepts", catalog.len(), snapshot.len());
    write_output(Some(&a.out), |w| catalog.write_to(w))
}

fn scan(a: ScanArgs) -> CliResult {
    if a.workers == Some(0) {
        return Err(usage("--workers must be at least 1"));
    }
    let catalog = load_catalog(&a.variants)?;
    let corpus = open(&a.corpus)?;
    let index = TermIndex::from_catalog(&catalog)?;
    let mut occ_out = a.out_occurrences.as_deref().map(create).transpose()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = a.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| usage(format!("cannot start workers: {e}")))?;
    let occ_path = a.out_occurrences.clone().unwrap_or_default();
    let stats = pool.install(|| {
        scan_corpus(&index, read_corpus(corpus), |_, occurrences| {
            if let Some(w) = occ_out.as_mut() {
                for o in occurrences {
                    writeln!(w, "{}", format_occurrence(o)).map_err(|e| Error::io(&occ_path, e))?;
                }
            }
            Ok(())
        })
    });
    let stats = with_context(&a.corpus, stats)?;
    if let Some(w) = occ_out {
        w.into_inner().map_err(|e| Error::io(&occ_path, e.into_error()))?;
    }
    log::info!("{} documents scanned, {} duplicates skipped", stats.documents, stats.skipped_duplicates);
    write_output(Some(&a.out_found), |w| stats.write_to(w))
}

fn analyze(a: AnalyzeArgs) -> CliResult {
    let snapshot = load_snapshot(&a.snapshot)?;
    let catalog = load_catalog(&a.variants)?;
    let found = with_context(&a.found, FoundStats::read_from(open(&a.found)?))?;
    let report = uncertainty_report(&snapshot, &catalog, &found)?;
    report.write_dir(&a.out)?;
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    let snapshot = load_snapshot(&a.snapshot)?;
    let catalog = load_catalog(&a.variants)?;
    let index = Arc::new(TermIndex::from_catalog(&catalog)?);
    let service = match &a.data_dir {
        Some(dir) => AnnotationService::open(dir, index, Box::new(SystemClock))?,
        None => AnnotationService::in_memory(index, Box::new(SystemClock)),
    };
    let state = semlabel_server::AppState::new(Arc::new(service)).with_names(&snapshot);
    let addr = SocketAddr::new(a.bind, a.port);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError {
            code: 1,
            message: format!("cannot start runtime: {e}"),
        })?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError {
            code: 1,
            message: format!("cannot listen on {addr}: {e}"),
        })?;
        log::info!("listening on {addr}");
        semlabel_server::serve(listener, state).await.map_err(|e| CliError {
            code: 1,
            message: format!("server failed: {e}"),
        })
    })
}

fn export(a: ExportArgs) -> CliResult {
    if !a.data_dir.is_dir() {
        return Err(Error::io(&a.data_dir, std::io::ErrorKind::NotFound.into()).into());
    }
    let service = AnnotationService::open(&a.data_dir, Arc::new(TermIndex::empty()), Box::new(SystemClock))?;
    let xml = service.export_xml(&a.doc)?;
    write_output(a.out.as_deref(), |w| w.write_all(xml.as_bytes()))
}
