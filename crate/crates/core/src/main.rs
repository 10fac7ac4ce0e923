use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crossqa::aggregation::{aggregate, AggregationPolicy, DEFAULT_CROSS_K, DEFAULT_MONO_K, DEFAULT_PER_LANG};
use crossqa::as2::{build_as2_dataset, rank_candidates, As2Record, Scorer};
use crossqa::backends::conformance::{run_conformance, ConformanceTargets};
use crossqa::backends::mock::{MockServer, ReferenceBehavior};
use crossqa::backends::{BackendClient, BackendConfig, Role};
use crossqa::corpus_store::{ingest_corpus, load_questions, DocStore, IngestOptions, Question};
use crossqa::evaluation::{bleu, fleiss_kappa, rouge_l, spearman, vote_accuracy, BleuMode, VoteRecord};
use crossqa::generation::{generate_answer, GenerationSettings, DEFAULT_MAX_NEW_CHARS, DEFAULT_PROMPT_BUDGET};
use crossqa::pipeline::service::serve;
use crossqa::pipeline::{run_batch, AnswerOptions, Engine, PipelineConfig, Setting};
use crossqa::retrieval::{hit_at_n, Bm25Params, Index, MissingGold, DEFAULT_TOP_N};
use crossqa::segmentation::{Candidate, Segmenter};
use crossqa::{Lang, LanguageSet};

type Fatal = Box<dyn std::error::Error + Send + Sync>;

/// Exit codes: 0 success, 1 some items failed, 2 fatal error.
const EXIT_ITEM_FAILURES: u8 = 1;
const EXIT_FATAL: u8 = 2;

#[derive(Parser)]
#[command(name = "crossqa", version, about = "Cross-lingual retrieval-based generative QA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Mono,
    TopK,
    TopPerLang,
}

#[derive(clap::Args)]
struct PolicyArgs {
    #[arg(long, value_enum, default_value = "top-per-lang")]
    policy: PolicyKind,
    /// Set size for mono and top-k.
    #[arg(long)]
    k: Option<usize>,
    /// Quota for top-per-lang.
    #[arg(long)]
    per_lang: Option<usize>,
}

impl PolicyArgs {
    fn policy(&self) -> AggregationPolicy {
        match self.policy {
            PolicyKind::Mono => AggregationPolicy::MonoTopK {
                k: self.k.unwrap_or(DEFAULT_MONO_K),
            },
            PolicyKind::TopK => AggregationPolicy::CrossTopK {
                k: self.k.unwrap_or(DEFAULT_CROSS_K),
            },
            PolicyKind::TopPerLang => AggregationPolicy::CrossTopPerLang {
                per_lang: self.per_lang.unwrap_or(DEFAULT_PER_LANG),
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerKind {
    Lexical,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Accuracy,
    Kappa,
    Bleu,
    Rouge,
    Spearman,
}

#[derive(Subcommand)]
enum Command {
    /// Load a JSON-lines corpus into the document store.
    Ingest {
        #[arg(long)]
        lang: Lang,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        skip_errors: bool,
    },
    /// Build the BM25 index of one language.
    Index {
        #[arg(long)]
        lang: Lang,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.2)]
        k1: f64,
        #[arg(long, default_value_t = 0.75)]
        b: f64,
    },
    /// Query an index; prints JSON-lines of scored documents.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = DEFAULT_TOP_N)]
        n: usize,
    },
    /// Hit@N of an index over questions in its language.
    EvalRetrieval {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_N)]
        n: usize,
        /// Fail on a question without a gold title instead of excluding it.
        #[arg(long)]
        require_gold: bool,
    },
    /// Split a text file into sentences; prints JSON-lines.
    Segment {
        #[arg(long)]
        lang: Lang,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        abbreviations: Option<PathBuf>,
    },
    /// Build the labeled answer-sentence-selection dataset.
    BuildAs2 {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score and sort a candidate pool (JSON-lines of candidates).
    Rank {
        #[arg(long, value_enum, default_value = "lexical")]
        scorer: ScorerKind,
        #[arg(long, env = "CROSSQA_SCORE_URL")]
        endpoint: Option<String>,
        #[arg(long)]
        question: String,
        /// Question language; defaults to the pool's language.
        #[arg(long)]
        lang: Option<Lang>,
        #[arg(long)]
        pool: PathBuf,
    },
    /// Merge ranked pools (`<lang>.jsonl` files in a directory) into M.
    Aggregate {
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        pools: PathBuf,
        /// Question language; defaults to the first pool.
        #[arg(long)]
        lang: Option<Lang>,
    },
    /// Aggregate scored candidates and ask the generator.
    Generate {
        #[arg(long)]
        question: String,
        #[arg(long)]
        lang: Lang,
        /// JSON-lines of scored candidates in any languages.
        #[arg(long)]
        candidates: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, env = "CROSSQA_GENERATE_URL")]
        endpoint: String,
        #[arg(long, default_value_t = DEFAULT_PROMPT_BUDGET)]
        budget: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_NEW_CHARS)]
        max_new_chars: usize,
    },
    /// Compute an answer-quality metric over a JSON-lines file.
    Evaluate {
        #[arg(long, value_enum)]
        metric: Metric,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "corpus")]
        bleu_mode: BleuModeArg,
    },
    /// Answer one question and print its trace.
    Answer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long)]
        lang: Lang,
        #[arg(long, default_value = "cli")]
        q_id: String,
        #[arg(long)]
        setting: Option<Setting>,
        /// Also persist the trace here.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Answer every question of a file; writes traces and summary.jsonl.
    RunBatch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Run the HTTP answer service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
    /// Check a backend server against the wire protocol.
    Conformance {
        #[arg(long)]
        translate_url: Option<String>,
        #[arg(long)]
        score_url: Option<String>,
        #[arg(long)]
        generate_url: Option<String>,
        /// Also check the deterministic reference behaviors.
        #[arg(long)]
        reference: bool,
    },
    /// Serve the in-process reference backend on all three routes.
    MockBackend {
        #[arg(long, default_value = "127.0.0.1:8700")]
        bind: String,
        #[arg(long)]
        translate_map: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BleuModeArg {
    Corpus,
    Sentence,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Fatal> {
    let file = std::io::BufReader::new(std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn print_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<(), Fatal> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn print_json<T: Serialize>(item: &T) -> Result<(), Fatal> {
    println!("{}", serde_json::to_string_pretty(item)?);
    Ok(())
}

#[derive(Deserialize)]
struct PairedText {
    #[allow(dead_code)]
    item_id: String,
    hypothesis: String,
    reference: String,
    lang: Lang,
}

#[derive(Deserialize)]
struct PairedScore {
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct MetricOutput {
    metric: &'static str,
    value: f64,
    items: usize,
}

fn evaluate(metric: Metric, input: &Path, mode: BleuModeArg) -> Result<MetricOutput, Fatal> {
    let out = match metric {
        Metric::Accuracy | Metric::Kappa => {
            let votes: Vec<VoteRecord> = read_jsonl(input)?;
            let (name, value) = match metric {
                Metric::Accuracy => ("accuracy", vote_accuracy(&votes)?),
                _ => ("kappa", fleiss_kappa(&votes)?),
            };
            MetricOutput {
                metric: name,
                value,
                items: votes.len(),
            }
        }
        Metric::Bleu | Metric::Rouge => {
            let pairs: Vec<PairedText> = read_jsonl(input)?;
            let Some(first) = pairs.first() else {
                return Err("no records to evaluate".into());
            };
            if let Some(other) = pairs.iter().find(|p| p.lang != first.lang) {
                return Err(format!("mixed languages {} and {}; evaluate one language at a time", first.lang, other.lang).into());
            }
            let lang = first.lang.clone();
            let value = if let Metric::Bleu = metric {
                let hyps: Vec<&str> = pairs.iter().map(|p| p.hypothesis.as_str()).collect();
                let refs: Vec<&str> = pairs.iter().map(|p| p.reference.as_str()).collect();
                let mode = match mode {
                    BleuModeArg::Corpus => BleuMode::Corpus,
                    BleuModeArg::Sentence => BleuMode::Sentence,
                };
                bleu(&hyps, &refs, &lang, mode)?
            } else {
                pairs.iter().map(|p| rouge_l(&p.hypothesis, &p.reference, &lang).f).sum::<f64>() / pairs.len() as f64
            };
            MetricOutput {
                metric: if let Metric::Bleu = metric { "bleu" } else { "rouge-l" },
                value,
                items: pairs.len(),
            }
        }
        Metric::Spearman => {
            let pairs: Vec<PairedScore> = read_jsonl(input)?;
            let xs: Vec<f64> = pairs.iter().map(|p| p.x).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.y).collect();
            MetricOutput {
                metric: "spearman",
                value: spearman(&xs, &ys)?,
                items: pairs.len(),
            }
        }
    };
    Ok(out)
}

fn group_by_lang(candidates: Vec<Candidate>) -> BTreeMap<Lang, Vec<Candidate>> {
    let mut pools: BTreeMap<Lang, Vec<Candidate>> = BTreeMap::new();
    for c in candidates {
        pools.entry(c.lang.clone()).or_default().push(c);
    }
    pools
}

async fn run(cli: Cli) -> Result<u8, Fatal> {
    match cli.command {
        Command::Ingest {
            lang,
            input,
            store,
            skip_errors,
        } => {
            let opts = IngestOptions {
                skip_errors,
                languages: LanguageSet::new([lang.clone()]),
            };
            let report = ingest_corpus(&input, &lang, &store, &opts)?;
            for m in &report.skipped_malformed {
                eprintln!("skipped {m}");
            }
            if report.skipped_empty_title > 0 {
                eprintln!("skipped {} records with an empty title", report.skipped_empty_title);
            }
            print_json(&report.stats)?;
        }
        Command::Index { lang, store, out, k1, b } => {
            let docs = DocStore::open(&store, &lang)?;
            let index = Index::build(&docs, Bm25Params::new(k1, b)?)?;
            index.save(&out)?;
            eprintln!("indexed {} {lang} documents into {}", index.n_docs(), out.display());
        }
        Command::Search { index, query, n } => {
            let index = Index::load(&index)?;
            print_jsonl(index.search(&query, n)?)?;
        }
        Command::EvalRetrieval {
            index,
            questions,
            n,
            require_gold,
        } => {
            let index = Index::load(&index)?;
            let languages = LanguageSet::new(LanguageSet::default().iter().chain([index.lang()]).cloned());
            let all = load_questions(&questions, &languages)?;
            let qs: Vec<&Question> = all.iter().filter(|q| &q.lang == index.lang()).collect();
            let mut results = Vec::with_capacity(qs.len());
            for q in &qs {
                let docs = index.search(&q.text, n)?;
                results.push(docs.into_iter().map(|d| d.title).collect::<Vec<_>>());
            }
            let gold: Vec<Option<String>> = qs.iter().map(|q| q.gold_doc_title.clone()).collect();
            let ids: Vec<String> = qs.iter().map(|q| q.q_id.clone()).collect();
            let missing = if require_gold {
                MissingGold::Fatal
            } else {
                MissingGold::Exclude
            };
            print_json(&hit_at_n(&results, &gold, &ids, n, missing)?)?;
        }
        Command::Segment {
            lang,
            input,
            abbreviations,
        } => {
            let text = std::fs::read_to_string(&input).map_err(|e| format!("{}: {e}", input.display()))?;
            let seg = match abbreviations {
                Some(dir) => Segmenter::default().with_abbreviation_dir(&dir)?,
                None => Segmenter::default(),
            };
            print_jsonl(seg.split(&text, &lang))?;
        }
        Command::BuildAs2 { questions, store, out } => {
            let qs = load_questions(&questions, &LanguageSet::default())?;
            let mut stores = std::collections::HashMap::new();
            for lang in qs.iter().map(|q| q.lang.clone()).collect::<std::collections::BTreeSet<_>>() {
                match DocStore::open(&store, &lang) {
                    Ok(s) => {
                        stores.insert(lang, s);
                    }
                    Err(e) => eprintln!("no {lang} store ({e}); its questions will be unresolved"),
                }
            }
            let (pairs, report) = build_as2_dataset(&qs, &stores)?;
            let mut buf = Vec::new();
            for p in &pairs {
                serde_json::to_writer(&mut buf, &As2Record::from(p))?;
                buf.push(b'\n');
            }
            std::fs::write(&out, buf).map_err(|e| format!("{}: {e}", out.display()))?;
            print_json(&report)?;
        }
        Command::Rank {
            scorer,
            endpoint,
            question,
            lang,
            pool,
        } => {
            let pool: Vec<Candidate> = read_jsonl(&pool)?;
            let lang = match (lang, pool.first()) {
                (Some(l), _) => l,
                (None, Some(c)) => c.lang.clone(),
                (None, None) => return Ok(0),
            };
            let scorer = match scorer {
                ScorerKind::Lexical => Scorer::Lexical,
                ScorerKind::Remote => {
                    let endpoint = endpoint.ok_or("--scorer remote needs --endpoint or CROSSQA_SCORE_URL")?;
                    Scorer::Remote(BackendClient::new(BackendConfig::new(Role::Score, endpoint))?)
                }
            };
            let q = Question {
                q_id: "cli".into(),
                text: question,
                lang,
                gold_doc_title: None,
                gold_passage: None,
                gold_span: None,
                reference_answer: None,
            };
            print_jsonl(rank_candidates(&q, pool, &scorer).await?)?;
        }
        Command::Aggregate { policy, pools, lang } => {
            let mut by_lang = BTreeMap::new();
            let mut entries: Vec<PathBuf> = std::fs::read_dir(&pools)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            entries.sort();
            for path in entries.into_iter().filter(|p| p.is_file()) {
                for c in read_jsonl::<Candidate>(&path)? {
                    by_lang.entry(c.lang.clone()).or_insert_with(Vec::new).push(c);
                }
            }
            let lang = lang
                .or_else(|| by_lang.keys().next().cloned())
                .ok_or("no candidate pools found")?;
            let m = aggregate(&by_lang, &lang, policy.policy())?;
            print_jsonl(&m.candidates)?;
        }
        Command::Generate {
            question,
            lang,
            candidates,
            policy,
            endpoint,
            budget,
            max_new_chars,
        } => {
            let pools = group_by_lang(read_jsonl(&candidates)?);
            let m = if pools.is_empty() {
                crossqa::aggregation::MultilingualCandidateSet {
                    question_lang: lang.clone(),
                    candidates: Vec::new(),
                    policy: policy.policy(),
                }
            } else {
                aggregate(&pools, &lang, policy.policy())?
            };
            let mut cfg = BackendConfig::new(Role::Generate, endpoint);
            cfg.apply_env();
            let client = BackendClient::new(cfg)?;
            let q = Question {
                q_id: "cli".into(),
                text: question,
                lang,
                gold_doc_title: None,
                gold_passage: None,
                gold_span: None,
                reference_answer: None,
            };
            let settings = GenerationSettings {
                prompt_budget: budget,
                max_new_chars,
                ..Default::default()
            };
            let (prompt, answer) = generate_answer(&q, &m, &client, &settings).await?;
            print_json(&serde_json::json!({
                "answer": answer.text,
                "closed_book": answer.closed_book,
                "prompt": prompt.text,
                "truncated": prompt.truncated,
            }))?;
        }
        Command::Evaluate {
            metric,
            input,
            bleu_mode,
        } => print_json(&evaluate(metric, &input, bleu_mode)?)?,
        Command::Answer {
            config,
            question,
            lang,
            q_id,
            setting,
            trace_dir,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let engine = tokio::task::spawn_blocking(move || Engine::load(cfg)).await??;
            let q = Question {
                q_id,
                text: question,
                lang,
                gold_doc_title: None,
                gold_passage: None,
                gold_span: None,
                reference_answer: None,
            };
            let opts = AnswerOptions { setting, policy: None };
            match engine.answer_with(&q, opts).await {
                Ok(answered) => {
                    if let Some(dir) = &trace_dir {
                        answered.trace.persist(dir)?;
                    }
                    print_json(&answered.trace)?;
                }
                Err(e) => {
                    if let (Some(dir), Some(t)) = (&trace_dir, e.trace()) {
                        t.persist(dir)?;
                    }
                    eprintln!("error: {e}");
                    return Ok(EXIT_ITEM_FAILURES);
                }
            }
        }
        Command::RunBatch {
            config,
            questions,
            out,
            parallelism,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let parallelism = parallelism.unwrap_or(cfg.parallelism);
            let languages = LanguageSet::new(LanguageSet::default().iter().chain(cfg.languages.iter()).cloned());
            let qs = load_questions(&questions, &languages)?;
            let engine = Arc::new(tokio::task::spawn_blocking(move || Engine::load(cfg)).await??);
            let report = run_batch(engine, &qs, &out, parallelism).await?;
            eprintln!(
                "{} answered, {} failed; summary in {}",
                report.answered,
                report.failed,
                report.summary_path.display()
            );
            return Ok(report.exit_code() as u8);
        }
        Command::Serve { config, bind } => {
            let cfg = PipelineConfig::load(&config)?;
            let listener = tokio::net::TcpListener::bind(&bind).await?;
            eprintln!("listening on {}", listener.local_addr()?);
            serve(cfg, listener).await?;
        }
        Command::Conformance {
            translate_url,
            score_url,
            generate_url,
            reference,
        } => {
            let targets = ConformanceTargets {
                translate: translate_url.or_else(|| std::env::var(Role::Translate.env_var()).ok()),
                score: score_url.or_else(|| std::env::var(Role::Score.env_var()).ok()),
                generate: generate_url.or_else(|| std::env::var(Role::Generate.env_var()).ok()),
            };
            let report = run_conformance(&targets, reference).await;
            for c in &report.checks {
                println!("{} {}{}", if c.passed { "PASS" } else { "FAIL" }, c.name, if c.detail.is_empty() { String::new() } else { format!(": {}", c.detail) });
            }
            if !report.passed() {
                return Ok(EXIT_ITEM_FAILURES);
            }
        }
        Command::MockBackend { bind, translate_map } => {
            let behavior = match translate_map {
                Some(p) => ReferenceBehavior::from_map_file(&p)?,
                None => ReferenceBehavior::default(),
            };
            let server = MockServer::bind(&bind, behavior).await?;
            eprintln!("reference backend on {}", server.url());
            server.wait().await;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("CROSSQA_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FATAL);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FATAL)
        }
    }
}
