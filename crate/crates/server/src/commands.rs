//! Subcommand implementations.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use chatrank_core::corpus::{load_pairs, load_triples, write_pairs, write_triples, FilterConfig};
use chatrank_core::eval::{aggregate_judgments, format_report, load_judgments, run_eval, EvalConfig, System};
use chatrank_core::features::write_feature_tsv;
use chatrank_core::index::FetchParams;
use chatrank_core::pipeline::{response_pool, train_system};
use chatrank_core::ranker::build_training_set;
use chatrank_core::service::{Engine, ServiceConfig, Session};
use chatrank_core::synth::desk_corpus;
use chatrank_core::{train_cdssm, CdssmConfig, CdssmModel, InvertedIndex, MartConfig, MartEnsemble};

use crate::api::{router, spawn_session_gc, AppState};
use crate::cli::*;

pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const TRAIN_FILE: &str = "train_triples.jsonl";
pub const HELDOUT_FILE: &str = "heldout_triples.jsonl";

/// File name of a system's ensemble inside a ranker directory.
pub fn ensemble_file(system: System) -> String {
    format!("{}.mart", system.name())
}

fn filter_config(args: &FilterArgs) -> Result<FilterConfig> {
    let cfg = FilterConfig::default();
    Ok(match &args.blocklist {
        Some(path) => cfg.load_blocklist(path)?,
        None => cfg,
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus(a) => gen_corpus(&a),
        Command::BuildIndex(a) => build_index(&a),
        Command::TrainCdssm(a) => train_cdssm_cmd(&a),
        Command::TrainRanker(a) => train_ranker(&a),
        Command::Eval(a) => eval(&a),
        Command::Chat(a) => chat(&a),
        Command::Serve(a) => serve(&a),
    }
}

pub fn gen_corpus(a: &GenCorpusArgs) -> Result<()> {
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let corpus = desk_corpus(a.seed, a.pairs, a.train, a.heldout);
    write_pairs(a.out_dir.join(PAIRS_FILE), &corpus.pairs)?;
    write_triples(a.out_dir.join(TRAIN_FILE), &corpus.train_triples)?;
    write_triples(a.out_dir.join(HELDOUT_FILE), &corpus.heldout_triples)?;
    println!(
        "wrote {} pairs, {} training triples, {} held-out triples to {}",
        corpus.pairs.len(),
        corpus.train_triples.len(),
        corpus.heldout_triples.len(),
        a.out_dir.display()
    );
    Ok(())
}

pub fn build_index(a: &BuildIndexArgs) -> Result<()> {
    let loaded = load_pairs(&a.pairs, &filter_config(&a.filter)?)?;
    println!("loaded {} pairs ({} rejected)", loaded.records.len(), loaded.rejected);
    let index = InvertedIndex::build(loaded.records)?;
    index.save(&a.out)?;
    println!("indexed {} documents, {} terms -> {}", index.doc_count(), index.terms().len(), a.out.display());
    Ok(())
}

fn cdssm_config(a: &TrainCdssmArgs) -> CdssmConfig {
    let d = CdssmConfig::default();
    CdssmConfig {
        vocab_max: a.vocab_max.unwrap_or(d.vocab_max),
        conv_window: a.conv_window.unwrap_or(d.conv_window),
        conv_dim: a.conv_dim.unwrap_or(d.conv_dim),
        sem_dim: a.sem_dim.unwrap_or(d.sem_dim),
        gamma: a.gamma.unwrap_or(d.gamma),
        neg_per_pos: a.neg_per_pos.unwrap_or(d.neg_per_pos),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        epochs: a.epochs.unwrap_or(d.epochs),
        minibatch: a.minibatch.unwrap_or(d.minibatch),
        seed: a.seed.unwrap_or(d.seed),
    }
}

pub fn train_cdssm_cmd(a: &TrainCdssmArgs) -> Result<()> {
    let loaded = load_pairs(&a.pairs, &filter_config(&a.filter)?)?;
    let cfg = cdssm_config(a);
    let started = Instant::now();
    let (model, report) = train_cdssm(&loaded.records, &cfg)?;
    for (e, loss) in report.epoch_losses.iter().enumerate() {
        println!("epoch {e}\tloss {loss:.6}");
    }
    model.save(&a.out)?;
    println!(
        "trained on {} pairs in {:.1}s ({} trigrams, {} steps) -> {}",
        loaded.records.len(),
        started.elapsed().as_secs_f64(),
        model.vocab.len(),
        report.steps,
        a.out.display()
    );
    Ok(())
}

fn mart_config(a: &TrainRankerArgs) -> MartConfig {
    let d = MartConfig::default();
    MartConfig {
        num_trees: a.trees.unwrap_or(d.num_trees),
        max_depth: a.max_depth.unwrap_or(d.max_depth),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        min_samples_leaf: a.min_samples_leaf.unwrap_or(d.min_samples_leaf),
        seed: a.seed,
        ..d
    }
}

pub fn train_ranker(a: &TrainRankerArgs) -> Result<()> {
    let systems: Vec<System> = if a.system == "all" {
        System::ALL.into_iter().filter(|s| s.needs_ensemble()).collect()
    } else {
        let s: System = a.system.parse()?;
        if !s.needs_ensemble() {
            bail!("{s} has no ensemble to train");
        }
        vec![s]
    };
    let triples = load_triples(&a.triples, &filter_config(&a.filter)?)?;
    println!("loaded {} triples ({} rejected)", triples.records.len(), triples.rejected);
    let model = CdssmModel::load(&a.cdssm)?;
    let pool = response_pool(&triples.records);
    let samples = build_training_set(&model, &triples.records, &pool, a.negatives, a.seed)?;
    if let Some(path) = &a.features_tsv {
        let tsv = write_feature_tsv(samples.iter().map(|s| (s.qid, s.label, &s.features)));
        fs::write(path, tsv).with_context(|| format!("writing {}", path.display()))?;
    }
    let base = mart_config(a);
    let to_dir = a.system == "all";
    if to_dir {
        fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    }
    for sys in systems {
        let ens = train_system(&samples, sys, &base)?.expect("system has features");
        let path = if to_dir { a.out.join(ensemble_file(sys)) } else { a.out.clone() };
        ens.save(&path)?;
        println!("{sys}: {} trees on {} samples -> {}", ens.trees.len(), samples.len(), path.display());
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let systems = System::parse_list(&a.systems)?;
    let heldout = load_triples(&a.heldout, &filter_config(&a.filter)?)?;
    let index = InvertedIndex::load(&a.index)?;
    let model = CdssmModel::load(&a.cdssm)?;
    let mut ensembles = HashMap::new();
    for &sys in systems.iter().filter(|s| s.needs_ensemble()) {
        let Some(dir) = &a.ranker_dir else {
            bail!("--ranker-dir is required to evaluate {sys}");
        };
        ensembles.insert(sys, MartEnsemble::load(dir.join(ensemble_file(sys)))?);
    }
    let cfg = EvalConfig {
        distractors_per_query: a.distractors,
        systems,
        seed: a.seed,
    };
    let metrics = run_eval(&cfg, &heldout.records, &index, &model, &ensembles)?;
    let judgments = match &a.judgments {
        Some(path) => Some(aggregate_judgments(&load_judgments(path)?)?),
        None => None,
    };
    let report = format_report(&metrics, judgments.as_ref());
    print!("{report}");
    if let Some(path) = &a.report {
        fs::write(path, &report).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn load_engine(a: &EngineArgs) -> Result<Engine> {
    let index = InvertedIndex::load(&a.index)?;
    let model = CdssmModel::load(&a.cdssm)?;
    let ensemble = MartEnsemble::load(&a.ranker)?;
    let config = ServiceConfig {
        fetch: FetchParams {
            k: a.k,
            short_query_len: a.short_query_len,
        },
        context_turns: a.context_turns,
        fallback: a.fallback.clone(),
        ..ServiceConfig::default()
    };
    Ok(Engine::new(index, model, ensemble, config))
}

pub fn chat(a: &ChatArgs) -> Result<()> {
    let engine = load_engine(&a.engine)?;
    let interactive = io::stdin().is_terminal();
    let mut session = Session::new("terminal", Instant::now());
    let mut debug = a.debug;
    let mut out = io::stdout().lock();
    if interactive {
        writeln!(out, "commands: /reset /debug /quit")?;
    }
    let mut lines = io::stdin().lock().lines();
    loop {
        if interactive {
            write!(out, "you> ")?;
            out.flush()?;
        }
        let Some(line) = lines.next() else { break };
        let line = line?;
        match line.trim() {
            "" => continue,
            "/quit" => break,
            "/reset" => {
                session = Session::new("terminal", Instant::now());
                continue;
            }
            "/debug" => {
                debug = !debug;
                continue;
            }
            _ => {}
        }
        match engine.respond(&mut session, &line, Instant::now()) {
            Ok((reply, trace)) => {
                writeln!(out, "bot> {reply}")?;
                if debug {
                    for (i, c) in trace.candidates.iter().enumerate() {
                        let f: Vec<String> = c.features.iter().map(|x| format!("{x:.4}")).collect();
                        writeln!(out, "  {i}\t{:.4}\t{}\t[{}]", c.score, c.response, f.join(" "))?;
                    }
                }
            }
            Err(e) => writeln!(out, "error: {e}")?,
        }
    }
    Ok(())
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let engine = load_engine(&a.engine)?;
    if a.session_ttl == 0 {
        bail!("--session-ttl must be positive");
    }
    let static_dir: Option<PathBuf> = match &a.static_dir {
        Some(d) if !d.is_dir() => bail!("static dir {} does not exist", d.display()),
        other => other.clone(),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let state = AppState::new(engine);
        spawn_session_gc(state.sessions.clone(), Duration::from_secs(a.session_ttl));
        let app = router(state, static_dir);
        let listener = tokio::net::TcpListener::bind(SocketAddr::new(a.host, a.port)).await?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        io::stdout().flush()?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

/// Paths of the bundled corpus files under `dir`.
pub fn corpus_paths(dir: &Path) -> [PathBuf; 3] {
    [dir.join(PAIRS_FILE), dir.join(TRAIN_FILE), dir.join(HELDOUT_FILE)]
}
