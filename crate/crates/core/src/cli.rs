//! Command-line front end. Exit codes: 0 success, 1 usage, 2 data, 3 backend.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::assignment::{
    build_topk, load_matrix_ids, load_topk, select_matched_subset, solve_sparse_assignment, store_topk,
    MatrixIds, DEFAULT_K,
};
use crate::embedding::{load_embeddings, EmbeddingSet};
use crate::filter::{dedup_by_caption, filter_pairs, pair_similarities, FilterConfig, IdKey};
use crate::manifest::{compose_datasets, read_manifest, write_manifest, CompositionArm, CompositionSpec, Manifest};
use crate::scoring::report::{build_report, ScoreReport};
use crate::scoring::tasks::{score_task_file, SlotEmbeddings, TaskKind};
use crate::scoring::MeteorConfig;
use crate::transfer::{
    run_transfer, write_rejections, Backend, BackendPolicy, HttpBackend, HttpConfig, MockBackend, PromptTemplate,
    TransferError,
};

#[derive(Debug, Parser)]
#[command(name = "curabench", version, propagate_version = true, about = "Dataset curation and benchmark scoring over embedding files")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random choice that has no seed of its own.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Keep pairs whose image/caption cosine is strictly above a threshold.
    Filter(FilterArgs),
    /// Keep the most similar pair per normalized caption.
    Dedup(DedupArgs),
    /// Rewrite captions through a generation backend.
    Transfer(TransferArgs),
    /// Build the sparse top-k anchor/candidate similarity matrix.
    Topk(TopkArgs),
    /// Select candidates by one-to-one matching on a top-k matrix.
    Match(MatchArgs),
    /// Union seeded subsamples of several manifests.
    Compose(ComposeArgs),
    /// Score one benchmark task file into a partial report.
    Score(ScoreArgs),
    /// Merge partial reports into one.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct EmbeddingPair {
    /// Image embeddings (EMB1).
    #[arg(long)]
    img: Option<PathBuf>,
    /// Caption embeddings (EMB1).
    #[arg(long)]
    txt: Option<PathBuf>,
    /// Record field naming the image embedding.
    #[arg(long, default_value = "pair_id", value_parser = parse_key)]
    image_key: IdKey,
    /// Record field naming the caption embedding.
    #[arg(long, default_value = "pair_id", value_parser = parse_key)]
    text_key: IdKey,
}

fn parse_key(s: &str) -> Result<IdKey, String> {
    s.parse()
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Input manifest.
    #[arg(long)]
    pairs: PathBuf,
    #[command(flatten)]
    emb: EmbeddingPair,
    /// Pairs at or below this cosine are dropped.
    #[arg(long, default_value_t = crate::filter::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Output manifest.
    #[arg(long)]
    out: PathBuf,
    /// Also write a JSON note describing how the output was produced.
    #[arg(long)]
    provenance_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DedupArgs {
    /// Input manifest.
    #[arg(long)]
    pairs: PathBuf,
    /// Fill in missing similarities from these embeddings.
    #[command(flatten)]
    emb: EmbeddingPair,
    /// Output manifest.
    #[arg(long)]
    out: PathBuf,
    /// Also write a JSON note describing how the output was produced.
    #[arg(long)]
    provenance_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Args)]
struct TransferArgs {
    /// Manifest whose captions are rewritten.
    #[arg(long)]
    pairs: PathBuf,
    /// Manifest of feasible rewritten records.
    #[arg(long)]
    out: PathBuf,
    /// Line-delimited log of infeasible and failed records.
    #[arg(long)]
    rejections: PathBuf,
    /// Deterministic offline mock or an HTTP generation service.
    #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
    backend: BackendKind,
    /// HTTP endpoint; the bearer token is read from TRANSFER_BACKEND_TOKEN.
    #[arg(long, required_if_eq("backend", "http"))]
    endpoint: Option<String>,
    /// Request body field carrying the prompt.
    #[arg(long, default_value = "prompt")]
    prompt_field: String,
    /// JSON pointer to the generated text in the HTTP response.
    #[arg(long)]
    response_pointer: Option<String>,
    /// Prompt template file with one `{}` placeholder.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Text prepended to every prompt.
    #[arg(long)]
    few_shot: Option<PathBuf>,
    /// Answer field holding the rewritten caption.
    #[arg(long, default_value = "caption")]
    caption_field: String,
    /// Answer field holding the infeasibility flag.
    #[arg(long, default_value = "infeasible")]
    infeasible_field: String,
    /// Mock backend only: share of prompts answered as infeasible.
    #[arg(long, default_value_t = 0.1)]
    infeasible_rate: f64,
    /// Requests sent concurrently.
    #[arg(long, default_value_t = 8)]
    max_in_flight: usize,
    /// Extra attempts per record after the first.
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    /// Base delay of the exponential retry backoff.
    #[arg(long, default_value_t = 500)]
    backoff_ms: u64,
    /// Per-request timeout.
    #[arg(long, default_value_t = 60)]
    timeout_s: u64,
    /// Also write a JSON note describing how the output was produced.
    #[arg(long)]
    provenance_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TopkArgs {
    /// Anchor image embeddings.
    #[arg(long)]
    anchors_emb: PathBuf,
    /// Candidate image embeddings.
    #[arg(long)]
    candidates_emb: PathBuf,
    /// Restrict rows to these anchor pair_ids, in manifest order.
    #[arg(long)]
    anchors: Option<PathBuf>,
    /// Restrict columns to these candidate pair_ids, in manifest order.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Entries kept per anchor row.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Output matrix (STK1); ids go to `<out>.ids`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MatchArgs {
    /// Top-k matrix with its `.ids` sidecar.
    #[arg(long)]
    topk: PathBuf,
    /// Candidate manifest the matrix columns refer to.
    #[arg(long)]
    candidates: PathBuf,
    /// Leave anchors unmatched instead of failing when no full matching exists.
    #[arg(long)]
    allow_unmatched: bool,
    /// Manifest of the matched candidates.
    #[arg(long)]
    out: PathBuf,
    /// Also write a JSON note describing how the output was produced.
    #[arg(long)]
    provenance_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ComposeArgs {
    /// PATH[:FRACTION[:SEED]]; fraction defaults to 1, seed to --seed.
    #[arg(long = "arm", required = true)]
    arms: Vec<String>,
    /// Composed manifest.
    #[arg(long)]
    out: PathBuf,
    /// Also write a JSON note describing how the output was produced.
    #[arg(long)]
    provenance_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// labeled_s, vtwt, winoground or caption.
    #[arg(long, value_parser = parse_task)]
    task: TaskKind,
    /// Line-delimited task records.
    #[arg(long)]
    input: PathBuf,
    /// Image embeddings for records that name ids instead of scores.
    #[arg(long, requires = "txt")]
    img: Option<PathBuf>,
    /// Text embeddings for records that name ids instead of scores.
    #[arg(long, requires = "img")]
    txt: Option<PathBuf>,
    /// Partial report.
    #[arg(long)]
    out: PathBuf,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse()
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Partial report from `score`; repeat for each task.
    #[arg(long = "part", required = true)]
    parts: Vec<PathBuf>,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Backend(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Backend(m) => m,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn check_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<(), CliError> {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::Usage(format!("input file {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn check_outputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<(), CliError> {
    for p in paths {
        if p.is_dir() {
            return Err(CliError::Usage(format!("output {} is a directory", p.display())));
        }
        match p.parent() {
            Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
                return Err(CliError::Usage(format!("output directory {} does not exist", d.display())))
            }
            _ => {}
        }
    }
    Ok(())
}

fn write_provenance(path: Option<&Path>, command: &str, m: &Manifest) -> Result<(), CliError> {
    let Some(path) = path else { return Ok(()) };
    let doc = serde_json::json!({
        "command": command,
        "records": m.len(),
        "provenance": m.provenance,
    });
    std::fs::write(path, format!("{doc:#}\n")).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load_pair(emb: &EmbeddingPair) -> Result<Option<(EmbeddingSet, EmbeddingSet)>, CliError> {
    match (&emb.img, &emb.txt) {
        (Some(i), Some(t)) => Ok(Some((load_embeddings(i).map_err(data)?, load_embeddings(t).map_err(data)?))),
        (None, None) => Ok(None),
        _ => Err(CliError::Usage("--img and --txt must be given together".into())),
    }
}

fn filter_config(emb: &EmbeddingPair, threshold: f64) -> FilterConfig {
    FilterConfig {
        threshold,
        image_key: emb.image_key,
        text_key: emb.text_key,
    }
}

fn cmd_filter(a: FilterArgs) -> Result<(), CliError> {
    let (Some(img), Some(txt)) = (&a.emb.img, &a.emb.txt) else {
        return Err(CliError::Usage("filter needs --img and --txt".into()));
    };
    if !(-1.0..=1.0).contains(&a.threshold) {
        return Err(CliError::Usage(format!("--threshold {} outside [-1, 1]", a.threshold)));
    }
    check_inputs([a.pairs.as_path(), img, txt])?;
    check_outputs([Some(a.out.as_path()), a.provenance_out.as_deref()].into_iter().flatten())?;
    let m = read_manifest(&a.pairs).map_err(data)?;
    let (img, txt) = load_pair(&a.emb)?.expect("both given");
    let out = filter_pairs(&m, &img, &txt, &filter_config(&a.emb, a.threshold)).map_err(data)?;
    write_manifest(&out, &a.out).map_err(data)?;
    write_provenance(a.provenance_out.as_deref(), "filter", &out)
}

fn cmd_dedup(a: DedupArgs) -> Result<(), CliError> {
    check_inputs([Some(a.pairs.as_path()), a.emb.img.as_deref(), a.emb.txt.as_deref()].into_iter().flatten())?;
    check_outputs([Some(a.out.as_path()), a.provenance_out.as_deref()].into_iter().flatten())?;
    let mut m = read_manifest(&a.pairs).map_err(data)?;
    if let Some((img, txt)) = load_pair(&a.emb)? {
        let sims = pair_similarities(&m, &img, &txt, &filter_config(&a.emb, 0.0)).map_err(data)?;
        for (r, s) in m.records.iter_mut().zip(sims) {
            r.similarity.get_or_insert(s);
        }
    }
    let out = dedup_by_caption(&m).map_err(data)?;
    write_manifest(&out, &a.out).map_err(data)?;
    write_provenance(a.provenance_out.as_deref(), "dedup", &out)
}

fn cmd_transfer(a: TransferArgs, seed: u64) -> Result<(), CliError> {
    if a.max_in_flight == 0 {
        return Err(CliError::Usage("--max-in-flight must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&a.infeasible_rate) {
        return Err(CliError::Usage("--infeasible-rate outside [0, 1]".into()));
    }
    check_inputs([Some(a.pairs.as_path()), a.template.as_deref(), a.few_shot.as_deref()].into_iter().flatten())?;
    check_outputs([Some(a.out.as_path()), Some(a.rejections.as_path()), a.provenance_out.as_deref()].into_iter().flatten())?;
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| data(format!("{}: {e}", p.display())));
    let mut template = match &a.template {
        Some(p) => PromptTemplate::new(read(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => PromptTemplate::default(),
    };
    if let Some(p) = &a.few_shot {
        template = template.with_few_shot(read(p)?.trim_end());
    }
    template.fields.caption = a.caption_field.clone();
    template.fields.infeasible = a.infeasible_field.clone();
    let policy = BackendPolicy {
        max_in_flight: a.max_in_flight,
        max_retries: a.max_retries,
        backoff_base: Duration::from_millis(a.backoff_ms),
        timeout: Duration::from_secs(a.timeout_s),
        seed,
    };
    let m = read_manifest(&a.pairs).map_err(data)?;
    let backend: Box<dyn Backend> = match a.backend {
        BackendKind::Mock => {
            let mut b = MockBackend::new(seed, a.infeasible_rate);
            b.caption_field = a.caption_field.clone();
            b.infeasible_field = a.infeasible_field.clone();
            Box::new(b)
        }
        BackendKind::Http => {
            let mut cfg = HttpConfig::new(a.endpoint.clone().expect("required by clap"), policy.timeout).with_env_token();
            cfg.prompt_field = a.prompt_field.clone();
            cfg.response_pointer = a.response_pointer.clone();
            Box::new(HttpBackend::new(cfg))
        }
    };
    let out = match run_transfer(&m, backend.as_ref(), &template, &policy) {
        Ok(o) => o,
        Err(e @ TransferError::BackendUnavailable { .. }) => return Err(CliError::Backend(e.to_string())),
        Err(e) => return Err(data(e)),
    };
    write_manifest(&out.manifest, &a.out).map_err(data)?;
    write_rejections(&out.rejections, &a.rejections).map_err(data)?;
    write_provenance(a.provenance_out.as_deref(), "transfer", &out.manifest)
}

fn ids_of(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(read_manifest(path).map_err(data)?.ids().map(str::to_owned).collect())
}

fn cmd_topk(a: TopkArgs) -> Result<(), CliError> {
    if a.k == 0 {
        return Err(CliError::Usage("--k must be positive".into()));
    }
    check_inputs(
        [Some(a.anchors_emb.as_path()), Some(a.candidates_emb.as_path()), a.anchors.as_deref(), a.candidates.as_deref()]
            .into_iter()
            .flatten(),
    )?;
    check_outputs([a.out.as_path()])?;
    let mut anchors = load_embeddings(&a.anchors_emb).map_err(data)?;
    let mut candidates = load_embeddings(&a.candidates_emb).map_err(data)?;
    if let Some(p) = &a.anchors {
        anchors = anchors.subset(&ids_of(p)?).map_err(data)?;
    }
    if let Some(p) = &a.candidates {
        candidates = candidates.subset(&ids_of(p)?).map_err(data)?;
    }
    let m = build_topk(&anchors, &candidates, a.k).map_err(data)?;
    let ids = MatrixIds {
        rows: anchors.ids().to_vec(),
        cols: candidates.ids().to_vec(),
    };
    store_topk(&m, Some(&ids), &a.out).map_err(data)
}

fn cmd_match(a: MatchArgs) -> Result<(), CliError> {
    let sidecar = crate::assignment::sidecar_path(&a.topk);
    check_inputs([a.topk.as_path(), sidecar.as_path(), a.candidates.as_path()])?;
    check_outputs([Some(a.out.as_path()), a.provenance_out.as_deref()].into_iter().flatten())?;
    let m = load_topk(&a.topk).map_err(data)?;
    let ids = load_matrix_ids(&a.topk).map_err(data)?;
    let candidates = read_manifest(&a.candidates).map_err(data)?;
    let assignment = solve_sparse_assignment(&m, a.allow_unmatched).map_err(data)?;
    if !assignment.unmatched.is_empty() {
        log::warn!("{} anchors left unmatched", assignment.unmatched.len());
    }
    let out = select_matched_subset(&candidates, &assignment, &ids.cols).map_err(data)?;
    write_manifest(&out, &a.out).map_err(data)?;
    write_provenance(a.provenance_out.as_deref(), "match", &out)
}

/// Whether an arm string ends in an explicit `:FRACTION:SEED`.
fn arm_has_seed(s: &str) -> bool {
    let parts: Vec<&str> = s.rsplitn(3, ':').collect();
    parts.len() == 3 && parts[0].parse::<u64>().is_ok() && parts[1].parse::<f64>().is_ok()
}

fn cmd_compose(a: ComposeArgs, seed: u64) -> Result<(), CliError> {
    let mut arms = Vec::with_capacity(a.arms.len());
    for s in &a.arms {
        let mut arm: CompositionArm = s.parse().map_err(|e| CliError::Usage(format!("--arm {s}: {e}")))?;
        if !arm_has_seed(s) {
            arm.seed = seed;
        }
        arms.push(arm);
    }
    let spec = CompositionSpec::new(arms).map_err(|e| CliError::Usage(e.to_string()))?;
    check_inputs(spec.arms.iter().map(|a| a.path.as_path()))?;
    check_outputs([Some(a.out.as_path()), a.provenance_out.as_deref()].into_iter().flatten())?;
    let out = compose_datasets(&spec).map_err(data)?;
    write_manifest(&out, &a.out).map_err(data)?;
    write_provenance(a.provenance_out.as_deref(), "compose", &out)
}

fn cmd_score(a: ScoreArgs) -> Result<(), CliError> {
    check_inputs([Some(a.input.as_path()), a.img.as_deref(), a.txt.as_deref()].into_iter().flatten())?;
    check_outputs([a.out.as_path()])?;
    let emb = match (&a.img, &a.txt) {
        (Some(i), Some(t)) => Some((load_embeddings(i).map_err(data)?, load_embeddings(t).map_err(data)?)),
        _ => None,
    };
    let slots = emb.as_ref().map(|(img, txt)| SlotEmbeddings { img, txt });
    let outputs = score_task_file(a.task, &a.input, slots, &MeteorConfig::default()).map_err(data)?;
    build_report(&outputs).map_err(data)?.write(&a.out).map_err(data)
}

fn cmd_report(a: ReportArgs) -> Result<(), CliError> {
    check_inputs(a.parts.iter().map(PathBuf::as_path))?;
    check_outputs(a.out.as_deref())?;
    let mut merged = ScoreReport::default();
    for p in &a.parts {
        merged = merged.merge(ScoreReport::read(p).map_err(data)?).map_err(data)?;
    }
    match &a.out {
        Some(p) => merged.write(p).map_err(data),
        None => {
            print!("{}", merged.to_json());
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Filter(a) => cmd_filter(a),
        Command::Dedup(a) => cmd_dedup(a),
        Command::Transfer(a) => cmd_transfer(a, cli.seed),
        Command::Topk(a) => cmd_topk(a),
        Command::Match(a) => cmd_match(a),
        Command::Compose(a) => cmd_compose(a, cli.seed),
        Command::Score(a) => cmd_score(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("curabench: {}", e.message());
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_seed_detection() {
        assert!(arm_has_seed("a.jsonl:0.5:3"));
        assert!(!arm_has_seed("a.jsonl:0.5"));
        assert!(!arm_has_seed("a.jsonl"));
        assert!(arm_has_seed("c:/x/a.jsonl:1:0"));
    }

    #[test]
    fn usage_and_help_codes() {
        assert_eq!(run(["curabench", "--bogus"]), 1);
        assert_eq!(run(["curabench", "filter", "--help"]), 0);
        assert_eq!(run(["curabench", "--version"]), 0);
        assert_eq!(run(["curabench"]), 1);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
