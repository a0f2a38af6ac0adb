use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;

use emrseg::corpus::{
    compose, generate_notes, label_notes, make_sample, read_jsonl, split_train_test, to_jsonl, CorpusKind, LabeledNote,
    SampleType, SectionGrammar,
};
use emrseg::embeddings::{load_embeddings, save_embeddings, save_word2vec_text, train_on_corpus};
use emrseg::normalize::{Normalizer, RawNote};
use emrseg::pipeline::{bytes_hash, evaluate, file_hash, reproduce, train_segmenter, PipelineConfig, Segmenter};
use emrseg::sif::EncoderMode;
use emrseg::Error;

#[derive(Parser)]
#[command(name = "emrseg", version, about = "Section segmentation of clinical discharge notes")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run on a single worker thread.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override one configuration key, e.g. `--set tagger.hidden=64`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingFormat {
    Bin,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic discharge notes as labeled JSON Lines.
    Synth {
        /// Number of notes.
        #[arg(long)]
        notes: usize,
        /// Section grammar (TOML); the built-in grammar by default.
        #[arg(long)]
        grammar: Option<PathBuf>,
        /// Labeled output (original headings).
        #[arg(long)]
        out: PathBuf,
        /// Also write raw note text, one `<note_id>.txt` per note.
        #[arg(long)]
        raw_dir: Option<PathBuf>,
    },
    /// Label raw notes by their headings, split, and write train/test corpora.
    Prep {
        /// Directory of `.txt` notes, or JSON Lines of `{note_id, text}`.
        #[arg(long)]
        input: PathBuf,
        /// Training corpus kind (default from config: mixed).
        #[arg(long, value_parser = ["headings-only", "no-headings", "mixed"])]
        kind: Option<String>,
        #[arg(long)]
        train_out: PathBuf,
        /// Test notes, each written in all four sample types.
        #[arg(long)]
        test_out: PathBuf,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Train skip-gram word vectors on a labeled corpus.
    TrainEmbeddings {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "bin")]
        format: EmbeddingFormat,
    },
    /// Train a segmenter on a labeled corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Pretrained embeddings; trained on the corpus when absent.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training log (JSON); defaults to `<out>.log.json`.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, value_parser = ["sif", "ave"])]
        encoder: Option<String>,
    },
    /// Label every sentence of raw notes; writes JSON Lines.
    Segment {
        #[arg(long)]
        model: PathBuf,
        /// Note text files; `-` reads standard input.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sentence accuracy of a model on a labeled corpus, per sample type.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Machine-readable report.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Full synthetic experiment: three training corpora × four test types.
    Reproduce {
        #[arg(long)]
        notes: Option<usize>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = error.downcast_ref::<Error>().map_or(1, exit_code);
        Failure { code, error }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UnknownHeader
        | Error::VersionMismatch { .. }
        | Error::ChecksumMismatch { .. }
        | Error::MissingTensor(_)
        | Error::ShapeMismatch { .. }
        | Error::VocabularyHashMismatch => 2,
        Error::Encoding(_)
        | Error::EmptyNote { .. }
        | Error::EmptyCorpus
        | Error::EmptySequence
        | Error::NoAnchorSection { .. }
        | Error::Parse { .. }
        | Error::UnknownLabel(_) => 3,
        _ => 1,
    }
}

fn model_failure(e: Error) -> Failure {
    Failure {
        code: 2,
        error: e.into(),
    }
}

fn input_failure(msg: String) -> Failure {
    Failure {
        code: 3,
        error: anyhow!(msg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {o:?}"))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth {
            notes,
            grammar,
            out,
            raw_dir,
        } => synth(&cfg, notes, grammar.or(cfg.grammar.clone()), &out, raw_dir.as_deref()),
        Command::Prep {
            input,
            kind,
            train_out,
            test_out,
            train_fraction,
        } => {
            let kind = match kind {
                Some(k) => CorpusKind::parse(&k)?,
                None => cfg.corpus,
            };
            prep(&cfg, &input, kind, &train_out, &test_out, train_fraction.unwrap_or(cfg.train_fraction))
        }
        Command::TrainEmbeddings { corpus, out, format } => train_embeddings(&cfg, &corpus, &out, format),
        Command::Train {
            corpus,
            embeddings,
            out,
            log,
            encoder,
        } => {
            let mode = match encoder {
                Some(e) => EncoderMode::parse(&e)?,
                None => cfg.encoder,
            };
            let log = log.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".log.json");
                PathBuf::from(p)
            });
            train(&cfg, &corpus, embeddings.as_deref(), &out, &log, mode)
        }
        Command::Segment { model, input, out } => segment(&model, &input, out.as_deref()),
        Command::Eval { model, corpus, json } => eval(&cfg, &model, &corpus, json.as_deref()),
        Command::Reproduce { notes, json } => {
            let mut cfg = cfg;
            if let Some(n) = notes {
                cfg.notes = n;
            }
            run_reproduce(&cfg, json.as_deref())
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn synth(
    cfg: &PipelineConfig,
    n: usize,
    grammar: Option<PathBuf>,
    out: &Path,
    raw_dir: Option<&Path>,
) -> Result<(), Failure> {
    let grammar = match grammar {
        Some(p) => SectionGrammar::from_file(&p)?,
        None => SectionGrammar::default(),
    };
    if n == 0 {
        warn!("generating zero notes");
    }
    let normalizer = Normalizer::default().with_max_sentence_tokens(cfg.max_sentence_tokens);
    let raw = generate_notes(&grammar, n, cfg.stage_seed("synth"));
    let labeled = label_notes(&normalizer, &raw);
    if labeled.len() != raw.len() {
        return Err(anyhow!("{} generated notes could not be labeled", raw.len() - labeled.len()).into());
    }
    write_file(out, to_jsonl(&labeled).as_bytes())?;
    if let Some(dir) = raw_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for note in &raw {
            write_file(&dir.join(format!("{}.txt", note.note_id)), note.text.as_bytes())?;
        }
    }
    info!("wrote {} notes to {}", labeled.len(), out.display());
    Ok(())
}

fn read_raw_notes(input: &Path) -> Result<Vec<RawNote>, Failure> {
    if input.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(input)
            .with_context(|| format!("reading {}", input.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        let mut notes = Vec::with_capacity(paths.len());
        for p in paths {
            let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
            let text = std::str::from_utf8(&bytes).map_err(Error::from)?;
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            notes.push(RawNote::new(id, text));
        }
        return Ok(notes);
    }
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let mut notes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let note: RawNote = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("expected {{\"note_id\", \"text\"}}: {e}"),
        })?;
        notes.push(note);
    }
    Ok(notes)
}

fn prep(
    cfg: &PipelineConfig,
    input: &Path,
    kind: CorpusKind,
    train_out: &Path,
    test_out: &Path,
    fraction: f64,
) -> Result<(), Failure> {
    let raw = read_raw_notes(input)?;
    let normalizer = Normalizer::default().with_max_sentence_tokens(cfg.max_sentence_tokens);
    let labeled = label_notes(&normalizer, &raw);
    if labeled.len() < raw.len() {
        warn!("{} of {} notes skipped", raw.len() - labeled.len(), raw.len());
    }
    let (train, test) = split_train_test(&labeled, fraction, cfg.stage_seed("split"))?;
    let train = compose(&train, kind, cfg.stage_seed("compose"));
    let test: Vec<LabeledNote> = test
        .iter()
        .flat_map(|n| SampleType::ALL.map(|t| make_sample(n, t)))
        .collect();
    write_file(train_out, to_jsonl(&train).as_bytes())?;
    write_file(test_out, to_jsonl(&test).as_bytes())?;
    info!("{} train notes ({}), {} test records", train.len(), kind.name(), test.len());
    Ok(())
}

fn read_corpus(path: &Path) -> Result<Vec<LabeledNote>, Failure> {
    let notes = read_jsonl(path)?;
    if notes.is_empty() {
        return Err(input_failure(format!("{} contains no notes", path.display())));
    }
    Ok(notes)
}

fn train_embeddings(cfg: &PipelineConfig, corpus: &Path, out: &Path, format: EmbeddingFormat) -> Result<(), Failure> {
    let notes = read_corpus(corpus)?;
    let (vocab, emb, losses) = train_on_corpus(&notes, &cfg.skipgram_config())?;
    match format {
        EmbeddingFormat::Bin => save_embeddings(out, &vocab, &emb)?,
        EmbeddingFormat::Text => save_word2vec_text(out, &vocab, &emb)?,
    }
    info!("vocabulary {}, epoch losses {losses:?}", vocab.len());
    Ok(())
}

fn train(
    cfg: &PipelineConfig,
    corpus: &Path,
    embeddings: Option<&Path>,
    out: &Path,
    log_path: &Path,
    mode: EncoderMode,
) -> Result<(), Failure> {
    let notes = read_corpus(corpus)?;
    let (vocab, emb) = match embeddings {
        Some(p) => load_embeddings(p).map_err(model_failure)?,
        None => {
            let (v, e, _) = train_on_corpus(&notes, &cfg.skipgram_config())?;
            (v, e)
        }
    };
    let (mut seg, outcome) = train_segmenter(&notes, &vocab, &emb, mode, &cfg.sif, &cfg.tagger_config())?;
    seg.max_sentence_tokens = cfg.max_sentence_tokens;
    let bytes = seg.to_container().to_bytes();
    write_file(out, &bytes)?;
    let log = json!({
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "corpus_hash": file_hash(corpus)?,
        "model_hash": bytes_hash(&bytes),
        "encoder": mode.name(),
        "best_epoch": outcome.best_epoch,
        "epochs": outcome.history,
    });
    write_file(log_path, format!("{}\n", serde_json::to_string_pretty(&log)?).as_bytes())?;
    info!("model written to {} (best epoch {})", out.display(), outcome.best_epoch);
    Ok(())
}

fn segment(model: &Path, inputs: &[PathBuf], out: Option<&Path>) -> Result<(), Failure> {
    let seg = Segmenter::load(model).map_err(model_failure)?;
    let normalizer = seg.normalizer();
    let mut lines = String::new();
    for input in inputs {
        let (id, bytes) = if input.as_os_str() == "-" {
            let mut buf = Vec::new();
            io::stdin().read_to_end(&mut buf).context("reading standard input")?;
            ("stdin".to_string(), buf)
        } else {
            let id = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (id, fs::read(input).with_context(|| format!("reading {}", input.display()))?)
        };
        let text = std::str::from_utf8(&bytes).map_err(Error::from)?;
        if text.trim().is_empty() {
            return Err(input_failure(format!("note {id:?} is empty")));
        }
        for rec in seg.segment(&normalizer, &RawNote::new(id, text))? {
            lines.push_str(&serde_json::to_string(&rec)?);
            lines.push('\n');
        }
    }
    match out {
        Some(p) => write_file(p, lines.as_bytes()),
        None => {
            io::stdout().write_all(lines.as_bytes()).context("writing output")?;
            Ok(())
        }
    }
}

fn eval(cfg: &PipelineConfig, model: &Path, corpus: &Path, json_out: Option<&Path>) -> Result<(), Failure> {
    let seg = Segmenter::load(model).map_err(model_failure)?;
    let notes = read_corpus(corpus)?;
    let mut report = evaluate(&seg, &notes)?;
    report.hashes.insert("model".into(), file_hash(model)?);
    report.hashes.insert("corpus".into(), file_hash(corpus)?);
    report.hashes.insert("config".into(), cfg.hash());
    report.hashes.insert("seed".into(), cfg.seed.to_string());
    print!("{}", report.to_table());
    if let Some(p) = json_out {
        write_file(p, format!("{}\n", serde_json::to_string_pretty(&report)?).as_bytes())?;
    }
    Ok(())
}

fn run_reproduce(cfg: &PipelineConfig, json_out: Option<&Path>) -> Result<(), Failure> {
    let report = reproduce(cfg)?;
    print!("{}", report.to_table());
    if let Some(p) = json_out {
        write_file(p, format!("{}\n", serde_json::to_string_pretty(&report)?).as_bytes())?;
    }
    Ok(())
}
