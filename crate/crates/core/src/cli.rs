//! The `relimp` command line.
//!
//! ```text
//! relimp ingest triples.tsv --out corpus.bin
//! relimp augment corpus.bin --out augmented.bin
//! relimp train --corpus corpus.bin --model distmult --k 8 --seed 1 --out-dir run/
//! relimp score --corpus corpus.bin --rules rules.tsv --models dirt,cover,binc,probe --out scored.tsv
//! relimp eval --scores scored.tsv --labels labels.tsv --model binc --out-dir report/
//! relimp mrr --corpus corpus.bin --checkpoint run/model.ckpt --test heldout.tsv --filtered
//! ```
//!
//! Training settings resolve as flag, then `RELIMP_*` environment variable,
//! then `--config` file (`key=value` lines), then the built-in default.
//! Failures print one JSON line on stderr and exit with 1 (usage or config),
//! 2 (data) or 3 (numeric).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, Cursor};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::corpus::{Corpus, Triple};
use crate::error::Error;
use crate::eval::{self, Label, RuleKey};
use crate::linkpred::{EmbeddingState, ModelKind};
use crate::probscore::{Estimator, ProbModel};
use crate::setscore::{FeatureRep, ImplicationRule, SetMeasure, SetScorer, WeightScheme};
use crate::trainer::{self, LossKind, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "relimp", version, about = "Score relational implication rules over triple corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read a relation/subject/object TSV into a corpus snapshot.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also add the argument-reversed copy of every relation.
        #[arg(long)]
        augment: bool,
    },
    /// Add argument-reversed relations to a corpus snapshot.
    Augment {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train link-prediction embeddings.
    Train(TrainArgs),
    /// Score implication rules with one or more models.
    Score(ScoreArgs),
    /// Evaluate one score column against labelled rules.
    Eval(EvalArgs),
    /// Mean reciprocal rank of held-out triples.
    Mrr(MrrArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// `key=value` settings file, overridden by flags and environment.
    #[arg(long, env = "RELIMP_CONFIG")]
    config: Option<PathBuf>,
    /// matrixfact, transe, transe-l1, distmult or complex.
    #[arg(long, env = "RELIMP_MODEL")]
    model: Option<String>,
    /// Embedding dimension (complex dimensions for Complex).
    #[arg(long, env = "RELIMP_K")]
    k: Option<usize>,
    #[arg(long, env = "RELIMP_SEED")]
    seed: Option<u64>,
    /// bce, margin or absolute.
    #[arg(long, env = "RELIMP_LOSS")]
    loss: Option<String>,
    #[arg(long, env = "RELIMP_MARGIN")]
    margin: Option<f64>,
    #[arg(long, env = "RELIMP_LR")]
    lr: Option<f64>,
    #[arg(long, env = "RELIMP_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "RELIMP_BATCH_SIZE")]
    batch_size: Option<usize>,
    /// Negatives per positive.
    #[arg(long, env = "RELIMP_NEGATIVES")]
    negatives: Option<usize>,
    /// Convergence threshold on the per-epoch max parameter change, or `none`.
    #[arg(long, env = "RELIMP_THRESHOLD")]
    threshold: Option<String>,
    /// Batch-producer threads. More than 1 is not reproducible.
    #[arg(long, env = "RELIMP_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Rules as `antecedent consequent [reversed]` TSV or the labelled format.
    #[arg(long)]
    rules: PathBuf,
    /// Comma-separated: dirt, cover, binc, probe, probel, probl, cosine.
    #[arg(long, default_value = "dirt,cover,binc,probe", value_delimiter = ',')]
    models: Vec<String>,
    /// Embedding checkpoint for probel, probl and cosine.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// tuple, slot or unary features for the set measures.
    #[arg(long, default_value = "tuple")]
    rep: String,
    /// unit or pmi feature weights.
    #[arg(long, default_value = "unit")]
    weights: String,
    /// Honour reversed-argument rules, augmenting the corpus if needed.
    #[arg(long)]
    order_sensitive: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Score column to evaluate. Defaults to the first one.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct MrrArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Held-out `relation subject object` TSV.
    #[arg(long)]
    test: PathBuf,
    /// Skip corruptions that are observed in the corpus.
    #[arg(long)]
    filtered: bool,
}

/// A failure with its exit status.
#[derive(Debug)]
struct Failure {
    code: i32,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            kind: "usage",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match e {
            Error::InvalidConfig(_) => (1, "config"),
            Error::NonFinite { .. } | Error::ZeroNorm(_) | Error::UndefinedConditional => (3, "numeric"),
            Error::Io(_) => (2, "io"),
            _ => (2, "data"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            report(&Failure::usage(first));
            return 1;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            report(&f);
            f.code
        }
    }
}

fn report(f: &Failure) {
    let line = serde_json::json!({ "error": f.kind, "exit": f.code, "message": f.message });
    eprintln!("{line}");
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Ingest { input, out, augment } => {
            let file = File::open(&input).map_err(|e| io_failure(&input, e))?;
            let mut corpus = Corpus::ingest(BufReader::new(file))?;
            if augment {
                corpus = corpus.augment_reversed()?;
            }
            let mut staged = Staged::default();
            staged.put(&out, corpus.to_snapshot_bytes())?;
            staged.commit()?;
            println!(
                "{} observations, {} relations, {} arguments",
                corpus.len(),
                corpus.num_relations(),
                corpus.num_arguments()
            );
            Ok(())
        }
        Command::Augment { corpus, out } => {
            let corpus = load_corpus(&corpus)?.augment_reversed()?;
            let mut staged = Staged::default();
            staged.put(&out, corpus.to_snapshot_bytes())?;
            staged.commit()?;
            println!("{} observations, {} relations", corpus.len(), corpus.num_relations());
            Ok(())
        }
        Command::Train(args) => train(args),
        Command::Score(args) => score(args),
        Command::Eval(args) => evaluate(args),
        Command::Mrr(args) => mrr(args),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        kind: "io",
        message: format!("{}: {e}", path.display()),
    }
}

fn load_corpus(path: &Path) -> CliResult<Corpus> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    Ok(Corpus::read_snapshot(BufReader::new(file))?)
}

fn load_state(path: &Path) -> CliResult<EmbeddingState> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    Ok(EmbeddingState::read_checkpoint(BufReader::new(file))?)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

/// Outputs written to temporary siblings and renamed into place together.
/// Anything not committed is removed on drop.
#[derive(Default)]
struct Staged {
    files: Vec<(PathBuf, PathBuf)>,
}

impl Staged {
    fn put(&mut self, path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        }
        let mut name = path.file_name().map(OsString::from).unwrap_or_default();
        name.push(format!(".tmp{}", std::process::id()));
        let tmp = path.with_file_name(name);
        self.files.push((tmp.clone(), path.to_path_buf()));
        fs::write(&tmp, bytes).map_err(|e| io_failure(&tmp, e))
    }

    fn commit(mut self) -> CliResult<()> {
        let files = std::mem::take(&mut self.files);
        for (i, (tmp, dest)) in files.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, dest) {
                for (_, done) in &files[..i] {
                    let _ = fs::remove_file(done);
                }
                self.files = files[i..].to_vec();
                return Err(io_failure(dest, e));
            }
        }
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        for (tmp, _) in &self.files {
            let _ = fs::remove_file(tmp);
        }
    }
}

// ---------------------------------------------------------------- train

const CONFIG_KEYS: [&str; 11] = [
    "model",
    "k",
    "seed",
    "loss",
    "margin",
    "lr",
    "epochs",
    "batch_size",
    "negatives",
    "threshold",
    "workers",
];

fn parse_config_file(text: &str) -> CliResult<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Failure::usage(format!("config line {}: expected key=value", i + 1)));
        };
        let key = k.trim().replace('-', "_");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Failure::usage(format!("config line {}: unknown key `{}`", i + 1, k.trim())));
        }
        out.insert(key, v.trim().to_owned());
    }
    Ok(out)
}

/// Effective training settings after merging all sources.
#[derive(Debug, Clone, PartialEq)]
struct TrainSettings {
    model: ModelKind,
    k: usize,
    config: TrainConfig,
}

fn pick<T: std::str::FromStr>(flag: Option<T>, file: &HashMap<String, String>, key: &str, default: T) -> CliResult<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(raw) => raw
            .parse()
            .map_err(|_| Failure::usage(format!("config: invalid value `{raw}` for `{key}`"))),
        None => Ok(default),
    }
}

fn parse_loss(name: &str, margin: f64) -> CliResult<LossKind> {
    Ok(match name.to_ascii_lowercase().as_str() {
        "bce" | "binary-cross-entropy" => LossKind::BinaryCrossEntropy,
        "margin" | "pairwise-margin" => LossKind::PairwiseMargin(margin),
        "absolute" | "pairwise-absolute" => LossKind::PairwiseAbsolute,
        other => return Err(Failure::usage(format!("unknown loss `{other}`"))),
    })
}

fn loss_name(loss: LossKind) -> &'static str {
    match loss {
        LossKind::BinaryCrossEntropy => "bce",
        LossKind::PairwiseMargin(_) => "margin",
        LossKind::PairwiseAbsolute => "absolute",
    }
}

fn resolve_train(args: &TrainArgs) -> CliResult<TrainSettings> {
    let file = match &args.config {
        Some(path) => parse_config_file(&read_text(path)?)?,
        None => HashMap::new(),
    };
    let defaults = TrainConfig::default();
    let model_name: String = pick(args.model.clone(), &file, "model", "distmult".to_owned())?;
    let model: ModelKind = model_name.parse()?;
    let k = pick(args.k, &file, "k", model.default_dim())?;
    let margin = pick(args.margin, &file, "margin", 1.0)?;
    let loss_raw: String = pick(args.loss.clone(), &file, "loss", "margin".to_owned())?;
    let threshold_raw: String = pick(
        args.threshold.clone(),
        &file,
        "threshold",
        defaults.convergence_threshold.map_or("none".to_owned(), |t| t.to_string()),
    )?;
    let convergence_threshold = match threshold_raw.to_ascii_lowercase().as_str() {
        "none" | "off" => None,
        raw => Some(
            raw.parse::<f64>()
                .map_err(|_| Failure::usage(format!("invalid threshold `{raw}`")))?,
        ),
    };
    let config = TrainConfig {
        loss: parse_loss(&loss_raw, margin)?,
        negatives_per_positive: pick(args.negatives, &file, "negatives", defaults.negatives_per_positive)?,
        learning_rate: pick(args.lr, &file, "lr", defaults.learning_rate)?,
        batch_size: pick(args.batch_size, &file, "batch_size", defaults.batch_size)?,
        epochs: pick(args.epochs, &file, "epochs", defaults.epochs)?,
        convergence_threshold,
        seed: pick(args.seed, &file, "seed", defaults.seed)?,
        workers: pick(args.workers, &file, "workers", defaults.workers)?,
    };
    if k == 0 {
        return Err(Failure::usage("k must be at least 1"));
    }
    config.validate()?;
    Ok(TrainSettings { model, k, config })
}

fn settings_echo(s: &TrainSettings, corpus: &Corpus) -> String {
    let c = &s.config;
    let margin = match c.loss {
        LossKind::PairwiseMargin(m) => m,
        _ => 1.0,
    };
    let mut out = String::new();
    let _ = writeln!(out, "model={}", s.model);
    let _ = writeln!(out, "k={}", s.k);
    let _ = writeln!(out, "seed={}", c.seed);
    let _ = writeln!(out, "loss={}", loss_name(c.loss));
    let _ = writeln!(out, "margin={margin}");
    let _ = writeln!(out, "lr={}", c.learning_rate);
    let _ = writeln!(out, "epochs={}", c.epochs);
    let _ = writeln!(out, "batch_size={}", c.batch_size);
    let _ = writeln!(out, "negatives={}", c.negatives_per_positive);
    let _ = writeln!(
        out,
        "threshold={}",
        c.convergence_threshold.map_or("none".to_owned(), |t| t.to_string())
    );
    let _ = writeln!(out, "workers={}", c.workers);
    let _ = writeln!(out, "# corpus: {} observations, {} relations, {} arguments", corpus.len(), corpus.num_base_relations(), corpus.num_arguments());
    out
}

fn train(args: TrainArgs) -> CliResult<()> {
    let settings = resolve_train(&args)?;
    let corpus = load_corpus(&args.corpus)?;
    if settings.config.workers > 1 {
        eprintln!("note: {} workers, results are not reproducible", settings.config.workers);
    }
    let state = EmbeddingState::init_random(
        settings.model,
        settings.k,
        corpus.num_base_relations(),
        corpus.num_arguments(),
        settings.config.seed,
    )?;
    let report = trainer::train_state(state, &corpus, &settings.config, |_| {})?;

    let mut csv = String::from("epoch,mean_loss,wall_ms\n");
    for e in &report.history {
        let _ = writeln!(csv, "{},{},{}", e.epoch, e.mean_loss, e.wall_ms);
    }
    let mut staged = Staged::default();
    staged.put(&args.out_dir.join("model.ckpt"), report.state.to_checkpoint_bytes())?;
    staged.put(&args.out_dir.join("loss.csv"), csv)?;
    staged.put(&args.out_dir.join("config.txt"), settings_echo(&settings, &corpus))?;
    staged.commit()?;
    let last = report.history.last().map_or(f64::NAN, |e| e.mean_loss);
    println!(
        "trained {} k={} for {} epochs (converged: {}), final mean loss {last}",
        settings.model,
        settings.k,
        report.history.len(),
        report.converged
    );
    Ok(())
}

// ---------------------------------------------------------------- score

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScoreModel {
    Set(SetMeasure),
    ProbE,
    ProbEL,
    ProbL,
    Cosine,
}

impl ScoreModel {
    fn parse(name: &str) -> CliResult<Self> {
        Ok(match name.trim().to_ascii_lowercase().as_str() {
            "dirt" => ScoreModel::Set(SetMeasure::Dirt),
            "cover" => ScoreModel::Set(SetMeasure::Cover),
            "binc" => ScoreModel::Set(SetMeasure::BInc),
            "probe" => ScoreModel::ProbE,
            "probel" => ScoreModel::ProbEL,
            "probl" => ScoreModel::ProbL,
            "cosine" => ScoreModel::Cosine,
            other => return Err(Failure::usage(format!("unknown score model `{other}`"))),
        })
    }

    fn name(self) -> &'static str {
        match self {
            ScoreModel::Set(SetMeasure::Dirt) => "dirt",
            ScoreModel::Set(SetMeasure::Cover) => "cover",
            ScoreModel::Set(SetMeasure::BInc) => "binc",
            ScoreModel::ProbE => "probe",
            ScoreModel::ProbEL => "probel",
            ScoreModel::ProbL => "probl",
            ScoreModel::Cosine => "cosine",
        }
    }

    fn needs_embeddings(self) -> bool {
        matches!(self, ScoreModel::ProbEL | ScoreModel::ProbL | ScoreModel::Cosine)
    }
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "reversed" => Some(true),
        "0" | "false" | "no" | "" => Some(false),
        _ => None,
    }
}

/// Rules to score, in first-appearance order without duplicates.
fn read_rules(text: &str) -> CliResult<Vec<RuleKey>> {
    let labelled = text.lines().any(|l| l.split('\t').count() == 7);
    let mut keys = Vec::new();
    if labelled {
        for row in eval::read_labelled(Cursor::new(text))? {
            keys.push(row.rule.clone());
            if matches!(row.label, Label::Directional(_)) {
                keys.push(row.rule.converse());
            }
        }
    } else {
        for (i, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() || (i == 0 && line.starts_with("antecedent")) {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let parse_err = |message: String| Failure::from(Error::Parse { line: i + 1, message });
            if !(2..=3).contains(&f.len()) || f[0].is_empty() || f[1].is_empty() {
                return Err(parse_err(format!("expected `antecedent<TAB>consequent[<TAB>reversed]`, found {} fields", f.len())));
            }
            let reversed = match f.get(2) {
                Some(raw) => parse_flag(raw).ok_or_else(|| parse_err(format!("invalid reversed flag `{raw}`")))?,
                None => false,
            };
            keys.push(RuleKey::new(f[0], f[1], reversed));
        }
        if keys.is_empty() {
            return Err(Error::EmptyInput("rule file has no rows").into());
        }
    }
    let mut seen = HashSet::new();
    keys.retain(|k| seen.insert(k.clone()));
    Ok(keys)
}

fn fmt_score(v: f64) -> String {
    format!("{v:?}")
}

fn score(args: ScoreArgs) -> CliResult<()> {
    let models = args
        .models
        .iter()
        .filter(|m| !m.trim().is_empty())
        .map(|m| ScoreModel::parse(m))
        .collect::<CliResult<Vec<_>>>()?;
    if models.is_empty() {
        return Err(Failure::usage("no score models given"));
    }
    let rep = match args.rep.to_ascii_lowercase().as_str() {
        "tuple" | "argument-tuple" => FeatureRep::ArgumentTuple,
        "slot" | "slot-independent" => FeatureRep::SlotIndependent,
        "unary" => FeatureRep::Unary,
        other => return Err(Failure::usage(format!("unknown feature representation `{other}`"))),
    };
    let weights = match args.weights.to_ascii_lowercase().as_str() {
        "unit" => WeightScheme::Unit,
        "pmi" => WeightScheme::Pmi,
        other => return Err(Failure::usage(format!("unknown weighting `{other}`"))),
    };
    let state = if models.iter().any(|m| m.needs_embeddings()) {
        let path = args
            .checkpoint
            .as_ref()
            .ok_or_else(|| Failure::usage("probel, probl and cosine need --checkpoint"))?;
        Some(load_state(path)?)
    } else {
        None
    };
    let rules = read_rules(&read_text(&args.rules)?)?;

    let mut corpus = load_corpus(&args.corpus)?;
    if args.order_sensitive && !corpus.is_augmented() {
        corpus = corpus.augment_reversed()?;
    }
    let honour_reversal = corpus.is_augmented();

    let set_scorer = SetScorer::new(&corpus, weights, rep);
    let empirical = ProbModel::empirical(&corpus)?;
    let (full, observed) = match &state {
        Some(s) => (
            Some(ProbModel::new(&corpus, Estimator::LinkFull(s))?),
            Some(ProbModel::new(&corpus, Estimator::LinkObserved(s))?),
        ),
        None => (None, None),
    };

    let mut out = String::from("antecedent\tconsequent\treversed");
    for m in &models {
        out.push('\t');
        out.push_str(m.name());
    }
    out.push_str("\toov\n");
    let mut oov = 0usize;
    for key in &rules {
        let ids = corpus.relation_id(&key.antecedent).zip(corpus.relation_id(&key.consequent));
        let _ = write!(out, "{}\t{}\t{}", key.antecedent, key.consequent, u8::from(key.reversed));
        match ids {
            None => {
                oov += 1;
                for _ in &models {
                    out.push_str("\t0.0");
                }
                out.push_str("\t1\n");
            }
            Some((p, q)) => {
                let rule = ImplicationRule::with_reversal(p, q, key.reversed && honour_reversal);
                for m in &models {
                    let value = match m {
                        ScoreModel::Set(measure) => set_scorer.score(*measure, &rule),
                        ScoreModel::ProbE => empirical.implication(&rule),
                        ScoreModel::ProbEL => observed.as_ref().expect("state loaded").implication(&rule),
                        ScoreModel::ProbL => full.as_ref().expect("state loaded").implication(&rule),
                        ScoreModel::Cosine => cosine(&corpus, state.as_ref().expect("state loaded"), &rule),
                    };
                    let value = match value {
                        Ok(v) => v,
                        Err(Error::UndefinedConditional | Error::ZeroNorm(_)) => 0.0,
                        Err(e) => return Err(e.into()),
                    };
                    if !value.is_finite() {
                        return Err(Failure {
                            code: 3,
                            kind: "numeric",
                            message: format!("{} is not finite for {} -> {}", m.name(), key.antecedent, key.consequent),
                        });
                    }
                    out.push('\t');
                    out.push_str(&fmt_score(value));
                }
                out.push_str("\t0\n");
            }
        }
    }
    let mut staged = Staged::default();
    staged.put(&args.out, out)?;
    staged.commit()?;
    println!(
        "scored {} rules ({oov} out of vocabulary, {} clamped slot scores)",
        rules.len(),
        set_scorer.clamped()
    );
    Ok(())
}

fn cosine(corpus: &Corpus, state: &EmbeddingState, rule: &ImplicationRule) -> crate::Result<f64> {
    let (p, q) = rule.resolve(corpus)?;
    let (p, _) = corpus.base_relation(p);
    let (q, _) = corpus.base_relation(q);
    state.cosine_similarity(p, q)
}

// ---------------------------------------------------------------- eval

fn read_scores(text: &str, model: Option<&str>) -> CliResult<(String, HashMap<RuleKey, f64>)> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l.strip_suffix('\r').unwrap_or(l),
            None => return Err(Error::EmptyInput("score file is empty").into()),
        }
    };
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 4 || cols[0] != "antecedent" || cols[1] != "consequent" || cols[2] != "reversed" {
        return Err(Error::Format("score file header must start with antecedent, consequent, reversed".into()).into());
    }
    let candidates: Vec<&str> = cols[3..].iter().copied().filter(|&c| c != "oov").collect();
    let name = match model {
        Some(m) => m.to_owned(),
        None => candidates
            .first()
            .map(|s| s.to_string())
            .ok_or_else(|| Failure::from(Error::Format("score file has no score columns".into())))?,
    };
    let col = cols
        .iter()
        .position(|&c| c == name && c != "oov")
        .filter(|&i| i >= 3)
        .ok_or_else(|| Failure::usage(format!("score file has no column `{name}`")))?;
    let oov_col = cols.iter().position(|&c| c == "oov");

    let mut scores = HashMap::new();
    for (i, line) in lines {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let parse_err = |message: String| Failure::from(Error::Parse { line: i + 1, message });
        if f.len() != cols.len() {
            return Err(parse_err(format!("expected {} fields, found {}", cols.len(), f.len())));
        }
        // out-of-vocabulary rows stay missing so that eval counts them
        if oov_col.is_some_and(|c| f[c].trim() == "1") {
            continue;
        }
        let reversed = parse_flag(f[2]).ok_or_else(|| parse_err(format!("invalid reversed flag `{}`", f[2])))?;
        let value: f64 = f[col]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("invalid score `{}`", f[col])))?;
        scores.insert(RuleKey::new(f[0], f[1], reversed), value);
    }
    Ok((name, scores))
}

fn evaluate(args: EvalArgs) -> CliResult<()> {
    let (model, scores) = read_scores(&read_text(&args.scores)?, args.model.as_deref())?;
    let labels = eval::read_labelled(Cursor::new(read_text(&args.labels)?))?;
    let report = eval::evaluate(&model, &labels, &scores)?;
    let json = report.to_json();
    let mut staged = Staged::default();
    staged.put(&args.out_dir.join("report.json"), &json)?;
    staged.put(&args.out_dir.join("pr.csv"), report.pr_csv())?;
    staged.commit()?;
    print!("{json}");
    Ok(())
}

// ---------------------------------------------------------------- mrr

fn mrr(args: MrrArgs) -> CliResult<()> {
    let corpus = load_corpus(&args.corpus)?;
    let state = load_state(&args.checkpoint)?;
    let text = read_text(&args.test)?;
    let mut test = Vec::new();
    let mut skipped = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 3 tab-separated fields, found {}", f.len()),
            }
            .into());
        }
        match (corpus.relation_id(f[0]), corpus.argument_id(f[1]), corpus.argument_id(f[2])) {
            (Some(r), Some(s), Some(o)) => test.push(Triple::new(r, s, o)),
            _ => skipped += 1,
        }
    }
    if test.is_empty() {
        return Err(Error::EmptyInput("no test triple is in the corpus vocabulary").into());
    }
    let base: Vec<Triple> = test
        .iter()
        .map(|t| {
            let (r, flipped) = corpus.base_relation(t.relation);
            if flipped {
                Triple::new(r, t.object, t.subject)
            } else {
                Triple::new(r, t.subject, t.object)
            }
        })
        .collect();
    let value = trainer::mrr(&state, &base, &corpus, args.filtered)?;
    let mut out = BTreeMap::new();
    out.insert("mrr", serde_json::json!(value));
    out.insert("filtered", serde_json::json!(args.filtered));
    out.insert("triples", serde_json::json!(test.len()));
    out.insert("skipped", serde_json::json!(skipped));
    println!("{}", serde_json::Value::from_iter(out.into_iter().map(|(k, v)| (k.to_owned(), v))));
    Ok(())
}
