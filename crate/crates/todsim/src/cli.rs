//! Command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use todsim_core::action::{build_supervised_pairs, CorpusTurn, Dialogue, Features, Speaker};
use todsim_core::generator::protocol::Fallback;
use todsim_core::generator::{realize, PolicyParameters, TemplateSpeaker, TemplateTable};
use todsim_core::harness::{cross_eval, summarize, CrossEvalTable, Transcript, Understanding};
use todsim_core::metrics::{corpus_bleu, self_bleu, semantic_prf, ser, NlgSample, SemanticEvalPair, SerLexicon};
use todsim_core::rl::{self, default_reward_columns, reward_table_tsv, RewardRow, TrainResult};
use todsim_core::Ontology;

use crate::batch::run_batch;
use crate::config::{NamedUser, RunConfig};
use crate::error::CliError;
use crate::io::{self, JsonlSink, Provenance};
use crate::users::{as_closure, load_checkpoint, GeneratorSpec, UserFactory};

/// Added to a seed to get the stream used for evaluating trained users, so
/// evaluation goals differ from training goals.
pub const EVAL_SEED_OFFSET: u64 = 1_000_003;

pub const SUPERVISED_STAND_IN: &str = "Supervised (rule stand-in)";

#[derive(Parser, Debug)]
#[command(name = "todsim", version, about = "Task-oriented dialogue user simulation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated seeds for multi-seed experiments.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long, env = "TODSIM_OUT_DIR", default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct DialogueFlags {
    #[arg(long)]
    pub dialogues: Option<usize>,
    /// rule, rule-single, stochastic[:<checkpoint>] or external:<exec:cmd|tcp:host:port>
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub max_turns: Option<usize>,
    #[arg(long)]
    pub max_actions: Option<usize>,
    #[arg(long)]
    pub p_understand: Option<f64>,
    #[arg(long)]
    pub failure_rate: Option<f64>,
    #[arg(long)]
    pub request_depth: Option<usize>,
    /// Understand informs only when their value is spotted in the text.
    #[arg(long)]
    pub keyword_understanding: bool,
    /// Reply timeout for external generators.
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// What to do when an external generator fails: rule or fail.
    #[arg(long)]
    pub fallback: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainFlags {
    /// r1, r2 or r1_prose.
    #[arg(long)]
    pub reward: Option<String>,
    /// Read r1 as -5 + m instead of -5 m.
    #[arg(long)]
    pub r1_prose_reading: bool,
    #[arg(long)]
    pub updates: Option<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Ontology utilities.
    Ontology {
        #[command(subcommand)]
        command: OntologyCommand,
    },
    /// Run dialogues between a user generator and the scripted system.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dialogue: DialogueFlags,
    },
    /// Train the stochastic user policy with PPO.
    TrainUser {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dialogue: DialogueFlags,
        #[command(flatten)]
        train: TrainFlags,
        /// Initial checkpoint; defaults to the built-in weights.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Train users under r1 and r2 and evaluate each under both rewards.
    CrossReward {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dialogue: DialogueFlags,
        #[command(flatten)]
        train: TrainFlags,
        /// Skip training User 1 and use this checkpoint.
        #[arg(long)]
        user1: Option<PathBuf>,
        /// Skip training User 2 and use this checkpoint.
        #[arg(long)]
        user2: Option<PathBuf>,
    },
    /// Success rate of every scripted system under every user.
    CrossEval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dialogue: DialogueFlags,
        /// name=generator, repeatable; replaces the configured users.
        #[arg(long = "user")]
        users: Vec<String>,
    },
    /// SER, BLEU and self-BLEU of user utterances in a corpus.
    EvalNlg {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        /// One candidate utterance per user turn; defaults to template output.
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Precision, recall, F1 and turn accuracy of user actions.
    EvalSemantic {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        golden: PathBuf,
        /// Defaults to the golden corpus.
        #[arg(long)]
        predicted: Option<PathBuf>,
    },
    /// Supervised (input, output) pairs from a corpus.
    MakePairs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        /// full, no_history or no_goal_no_history.
        #[arg(long, default_value = "full")]
        features: String,
        /// Output file; defaults to <out-dir>/pairs_<features>.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic corpus of simulated dialogues.
    GenCorpus {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dialogue: DialogueFlags,
        /// Output file; defaults to <out-dir>/corpus.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum OntologyCommand {
    /// Load, check and summarize an ontology file.
    Validate { path: PathBuf },
}

/// Parses the arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => crate::error::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve(common: &Common, dialogue: Option<&DialogueFlags>, train: Option<&TrainFlags>) -> Result<RunConfig, CliError> {
    let mut c = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.ontology {
        c.ontology = o.clone();
    }
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(s) = &common.seeds {
        c.seeds = s.clone();
    }
    if let Some(t) = common.threads {
        c.threads = t;
    }
    if let Some(d) = dialogue {
        if let Some(n) = d.dialogues {
            c.dialogues = n;
        }
        if let Some(g) = &d.generator {
            c.generator = g.clone();
        }
        if let Some(n) = d.max_turns {
            c.max_turns = n;
        }
        if let Some(n) = d.max_actions {
            c.max_actions = n;
        }
        if let Some(p) = d.p_understand {
            c.system.p_understand = p;
        }
        if let Some(p) = d.failure_rate {
            c.system.failure_rate = p;
        }
        if let Some(n) = d.request_depth {
            c.system.request_depth = n;
        }
        if d.keyword_understanding {
            c.system.understanding = Understanding::Keyword;
        }
        if let Some(t) = d.timeout_ms {
            c.external_timeout_ms = t;
        }
        if let Some(f) = &d.fallback {
            c.fallback = match f.as_str() {
                "rule" => Fallback::Rule,
                "fail" => Fallback::Fail,
                _ => return Err(CliError::input(format!("unknown fallback {f:?}; expected rule or fail"))),
            };
        }
    }
    if let Some(t) = train {
        if let Some(r) = &t.reward {
            c.reward = r.clone();
        }
        if t.r1_prose_reading {
            c.r1_prose_reading = true;
        }
        if let Some(n) = t.updates {
            c.ppo.updates = n;
        }
        if let Some(n) = t.episodes {
            c.ppo.episodes_per_update = n;
        }
        if let Some(x) = t.learning_rate {
            c.ppo.learning_rate = x;
        }
        if let Some(x) = t.gamma {
            c.ppo.gamma = x;
        }
    }
    c.validate()?;
    Ok(c)
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json<T: Serialize>(v: &T) {
    emit(&(serde_json::to_string_pretty(v).expect("serializes") + "\n"));
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Ontology {
            command: OntologyCommand::Validate { path },
        } => cmd_ontology_validate(&path),
        Command::Simulate { common, dialogue } => {
            let cfg = resolve(&common, Some(&dialogue), None)?;
            cmd_simulate(&cfg, &common.out_dir)
        }
        Command::TrainUser {
            common,
            dialogue,
            train,
            init,
        } => {
            let cfg = resolve(&common, Some(&dialogue), Some(&train))?;
            cmd_train_user(&cfg, init.as_deref(), &common.out_dir)
        }
        Command::CrossReward {
            common,
            dialogue,
            train,
            user1,
            user2,
        } => {
            let cfg = resolve(&common, Some(&dialogue), Some(&train))?;
            cmd_cross_reward(&cfg, user1.as_deref(), user2.as_deref(), &common.out_dir)
        }
        Command::CrossEval { common, dialogue, users } => {
            let mut cfg = resolve(&common, Some(&dialogue), None)?;
            if !users.is_empty() {
                cfg.users = users
                    .iter()
                    .map(|u| {
                        u.split_once('=')
                            .map(|(n, g)| NamedUser {
                                name: n.into(),
                                generator: g.into(),
                            })
                            .ok_or_else(|| CliError::input(format!("--user expects name=generator, got {u:?}")))
                    })
                    .collect::<Result<_, _>>()?;
            }
            cmd_cross_eval(&cfg, &common.out_dir)
        }
        Command::EvalNlg {
            common,
            corpus,
            candidates,
        } => {
            let cfg = resolve(&common, None, None)?;
            cmd_eval_nlg(&cfg, &corpus, candidates.as_deref(), &common.out_dir)
        }
        Command::EvalSemantic {
            common,
            golden,
            predicted,
        } => {
            let cfg = resolve(&common, None, None)?;
            cmd_eval_semantic(&cfg, &golden, predicted.as_deref().unwrap_or(&golden), &common.out_dir)
        }
        Command::MakePairs {
            common,
            corpus,
            features,
            out,
        } => {
            let cfg = resolve(&common, None, None)?;
            let f = Features::parse(&features)
                .ok_or_else(|| CliError::input(format!("unknown features {features:?}; expected full, no_history or no_goal_no_history")))?;
            let out = match out {
                Some(p) => p,
                None => io::out_path(&common.out_dir, &format!("pairs_{features}.jsonl"))?,
            };
            cmd_make_pairs(&cfg, &corpus, f, &out)
        }
        Command::GenCorpus { common, dialogue, out } => {
            let cfg = resolve(&common, Some(&dialogue), None)?;
            let out = match out {
                Some(p) => p,
                None => io::out_path(&common.out_dir, "corpus.jsonl")?,
            };
            cmd_gen_corpus(&cfg, &out)
        }
    }
}

#[derive(Serialize)]
pub struct OntologyReport {
    pub name: String,
    pub domains: usize,
    pub user_intents: usize,
    pub system_intents: usize,
    pub slots: usize,
    pub values: usize,
}

pub fn ontology_report(o: &Ontology) -> OntologyReport {
    OntologyReport {
        name: o.name().into(),
        domains: o.domains().len(),
        user_intents: o.user_intent_count(),
        system_intents: o.system_intents().len(),
        slots: o.slot_count(),
        values: o.value_count(),
    }
}

pub fn cmd_ontology_validate(path: &Path) -> Result<(), CliError> {
    let o = io::load_ontology(path)?;
    let r = ontology_report(&o);
    emit(&format!(
        "{}: {} domains, {} user intents, {} system intents, {} slots, {} values\n",
        r.name, r.domains, r.user_intents, r.system_intents, r.slots, r.values
    ));
    Ok(())
}

fn user_factory(cfg: &RunConfig, spec: &str) -> Result<UserFactory, CliError> {
    UserFactory::new(GeneratorSpec::parse(spec)?, cfg.external_timeout_ms, cfg.fallback)
}

fn harness_err(e: impl std::fmt::Display) -> CliError {
    CliError::runtime(e.to_string())
}

pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let o = io::load_ontology(&cfg.ontology)?;
    let users = user_factory(cfg, &cfg.generator)?;
    let ts = run_batch(&o, &cfg.batch(&cfg.system, cfg.seed), &users, cfg.dialogues, cfg.threads).map_err(harness_err)?;
    let prov = Provenance::new("simulate", cfg);
    let mut sink = JsonlSink::create(&io::out_path(out_dir, "transcripts.jsonl")?, &prov)?;
    for t in &ts {
        sink.write(t)?;
    }
    sink.finish()?;
    let summary = summarize(&ts);
    io::write_json(&io::out_path(out_dir, "summary.json")?, &prov, &summary)?;
    print_json(&summary);
    Ok(())
}

fn initial_params(init: Option<&Path>) -> Result<PolicyParameters, CliError> {
    match init {
        Some(p) => load_checkpoint(p),
        None => Ok(PolicyParameters::rule_like()),
    }
}

fn train_one(cfg: &RunConfig, o: &Ontology, init: PolicyParameters, reward: &str, seed: u64) -> Result<TrainResult, CliError> {
    let mut ppo = cfg.ppo.clone();
    ppo.reward = cfg.reward_config(reward)?;
    rl::train(o, init, &ppo, &cfg.batch(&cfg.system, seed), |_| {}).map_err(harness_err)
}

fn curve_tsv(r: &TrainResult) -> String {
    let mut s = String::from("update\tmean_return\tsuccess_rate\tavg_actions\tavg_turns\tsurrogate\n");
    for p in &r.curve {
        s.push_str(&format!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.6}\n",
            p.update, p.mean_return, p.success_rate, p.avg_actions, p.avg_turns, p.surrogate
        ));
    }
    s
}

fn write_checkpoint(path: &Path, prov: &Provenance, p: &PolicyParameters) -> Result<(), CliError> {
    let body: serde_json::Value = serde_json::from_str(&p.to_checkpoint_json()).expect("checkpoint is json");
    io::write_json(path, prov, &body)
}

pub fn cmd_train_user(cfg: &RunConfig, init: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let o = io::load_ontology(&cfg.ontology)?;
    let res = train_one(cfg, &o, initial_params(init)?, &cfg.reward, cfg.seed)?;
    let prov = Provenance::new("train-user", cfg);
    write_checkpoint(&io::out_path(out_dir, "checkpoint.json")?, &prov, &res.best_params)?;
    write_checkpoint(&io::out_path(out_dir, "checkpoint_final.json")?, &prov, &res.final_params)?;
    io::write_tsv(&io::out_path(out_dir, "curve.tsv")?, &prov, &curve_tsv(&res))?;
    io::write_json(&io::out_path(out_dir, "curve.json")?, &prov, &serde_json::json!({ "curve": res.curve }))?;
    if let Some(last) = res.curve.last() {
        eprintln!(
            "trained {} updates: mean return {:.2}, success {:.3}, actions/turn {:.2}",
            res.curve.len(),
            last.mean_return,
            last.success_rate,
            last.avg_actions
        );
    }
    Ok(())
}

/// Users trained under r1 and r2 on every seed, evaluated on held-out
/// dialogues together with the rule stand-in for the supervised model.
pub fn cross_reward_rows(
    cfg: &RunConfig,
    o: &Ontology,
    user1: Option<PolicyParameters>,
    user2: Option<PolicyParameters>,
) -> Result<Vec<RewardRow>, CliError> {
    let init = PolicyParameters::rule_like();
    let jobs: Vec<(usize, u64)> = cfg.seeds.iter().flat_map(|s| [(0usize, *s), (1, *s)]).collect();
    let trained: Vec<(usize, u64, PolicyParameters)> = jobs
        .par_iter()
        .map(|&(which, seed)| {
            let fixed = if which == 0 { &user1 } else { &user2 };
            let p = match fixed {
                Some(p) => p.clone(),
                None => train_one(cfg, o, init.clone(), if which == 0 { "r1" } else { "r2" }, seed)?.best_params,
            };
            Ok((which, seed, p))
        })
        .collect::<Result<_, CliError>>()?;
    let mut rewards = default_reward_columns();
    if cfg.r1_prose_reading {
        rewards[0] = ("R_1".into(), cfg.reward_config("r1")?);
    }
    let eval = |users: &UserFactory, seed: u64| -> Result<Vec<Transcript>, CliError> {
        let batch = cfg.batch(&cfg.system, seed.wrapping_add(EVAL_SEED_OFFSET));
        run_batch(o, &batch, users, cfg.dialogues, cfg.threads).map_err(harness_err)
    };
    let mut rows = Vec::new();
    for (which, name) in [(0usize, "User 1"), (1, "User 2")] {
        let mut ts = Vec::new();
        for (_, seed, p) in trained.iter().filter(|(w, _, _)| *w == which) {
            ts.extend(eval(&UserFactory::from_params(p.clone()), *seed)?);
        }
        rows.push(RewardRow::from_transcripts(name, &ts, &rewards));
    }
    let rule = user_factory(cfg, "rule")?;
    let mut ts = Vec::new();
    for seed in &cfg.seeds {
        ts.extend(eval(&rule, *seed)?);
    }
    rows.push(RewardRow::from_transcripts(SUPERVISED_STAND_IN, &ts, &rewards));
    Ok(rows)
}

pub fn cmd_cross_reward(cfg: &RunConfig, user1: Option<&Path>, user2: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let o = io::load_ontology(&cfg.ontology)?;
    let u1 = user1.map(load_checkpoint).transpose()?;
    let u2 = user2.map(load_checkpoint).transpose()?;
    let rows = cross_reward_rows(cfg, &o, u1, u2)?;
    let prov = Provenance::new("cross-reward", cfg);
    let tsv = reward_table_tsv(&rows);
    io::write_tsv(&io::out_path(out_dir, "cross_reward.tsv")?, &prov, &tsv)?;
    io::write_json(&io::out_path(out_dir, "cross_reward.json")?, &prov, &serde_json::json!({ "rows": rows }))?;
    emit(&tsv);
    Ok(())
}

pub fn cross_eval_table(cfg: &RunConfig, o: &Ontology) -> Result<CrossEvalTable, CliError> {
    let factories: Vec<(String, UserFactory)> = cfg
        .users
        .iter()
        .map(|u| Ok((u.name.clone(), user_factory(cfg, &u.generator)?)))
        .collect::<Result<_, CliError>>()?;
    let closures: Vec<(String, _)> = factories.iter().map(|(n, f)| (n.clone(), as_closure(f))).collect();
    let users: Vec<(String, todsim_core::harness::GeneratorFactory<'_>)> =
        closures.iter().map(|(n, c)| (n.clone(), c as todsim_core::harness::GeneratorFactory<'_>)).collect();
    let systems: Vec<(String, _)> = cfg.systems.iter().map(|s| (s.name.clone(), s.config.clone())).collect();
    cross_eval(&systems, &users, cfg.dialogues, &cfg.seeds, o, &cfg.batch(&cfg.system, cfg.seed))
        .map_err(|e| CliError::input(e.to_string()))
}

pub fn cmd_cross_eval(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let o = io::load_ontology(&cfg.ontology)?;
    let table = cross_eval_table(cfg, &o)?;
    let prov = Provenance::new("cross-eval", cfg);
    io::write_tsv(&io::out_path(out_dir, "cross_eval.tsv")?, &prov, &table.to_tsv())?;
    io::write_json(&io::out_path(out_dir, "cross_eval.json")?, &prov, &table)?;
    emit(&table.to_tsv());
    Ok(())
}

fn user_turns(corpus: &[Dialogue]) -> Vec<&CorpusTurn> {
    corpus
        .iter()
        .flat_map(|d| d.turns.iter().filter(|t| t.speaker == Speaker::Usr))
        .collect()
}

#[derive(Serialize)]
pub struct NlgReport {
    pub utterances: usize,
    pub ser: todsim_core::metrics::SerReport,
    pub bleu: Option<f64>,
    pub self_bleu: Option<f64>,
}

pub fn eval_nlg(o: &Ontology, corpus: &[Dialogue], candidates: Option<Vec<String>>) -> Result<NlgReport, CliError> {
    let turns = user_turns(corpus);
    let templates = TemplateTable::builtin();
    let candidates = match candidates {
        Some(c) if c.len() != turns.len() => {
            return Err(CliError::input(format!(
                "{} candidates for {} user turns",
                c.len(),
                turns.len()
            )))
        }
        Some(c) => c,
        None => turns
            .iter()
            .map(|t| realize(&templates, &t.action, TemplateSpeaker::User, o))
            .collect(),
    };
    let samples: Vec<NlgSample> = turns
        .iter()
        .zip(&candidates)
        .map(|(t, c)| NlgSample {
            actions: t.action.clone(),
            utterance: c.clone(),
        })
        .collect();
    let refs: Vec<Vec<String>> = turns.iter().map(|t| vec![t.text.clone()]).collect();
    Ok(NlgReport {
        utterances: samples.len(),
        ser: ser(&samples, &SerLexicon::from_ontology(o)),
        bleu: corpus_bleu(&candidates, &refs).ok(),
        self_bleu: self_bleu(&candidates).ok(),
    })
}

pub fn cmd_eval_nlg(cfg: &RunConfig, corpus: &Path, candidates: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let o = io::load_ontology(&cfg.ontology)?;
    let corpus = io::load_corpus(corpus)?;
    let cands = candidates
        .map(|p| io::read_text(p).map(|t| t.lines().map(str::to_string).collect::<Vec<_>>()))
        .transpose()?;
    let report = eval_nlg(&o, &corpus, cands)?;
    io::write_json(&io::out_path(out_dir, "eval_nlg.json")?, &Provenance::new("eval-nlg", cfg), &report)?;
    print_json(&report);
    Ok(())
}

pub fn semantic_pairs(golden: &[Dialogue], predicted: &[Dialogue]) -> Result<Vec<SemanticEvalPair>, CliError> {
    let g = user_turns(golden);
    let p = user_turns(predicted);
    if g.len() != p.len() {
        return Err(CliError::input(format!(
            "predicted corpus has {} user turns, golden has {}",
            p.len(),
            g.len()
        )));
    }
    Ok(g.iter()
        .zip(&p)
        .map(|(g, p)| SemanticEvalPair {
            predicted: p.action.clone(),
            golden: g.action.clone(),
        })
        .collect())
}

pub fn cmd_eval_semantic(cfg: &RunConfig, golden: &Path, predicted: &Path, out_dir: &Path) -> Result<(), CliError> {
    let g = io::load_corpus(golden)?;
    let p = io::load_corpus(predicted)?;
    let report = semantic_prf(&semantic_pairs(&g, &p)?);
    io::write_json(&io::out_path(out_dir, "eval_semantic.json")?, &Provenance::new("eval-semantic", cfg), &report)?;
    print_json(&report);
    Ok(())
}

#[derive(Serialize)]
struct Pair<'a> {
    input: &'a str,
    output: &'a str,
}

pub fn cmd_make_pairs(cfg: &RunConfig, corpus: &Path, features: Features, out: &Path) -> Result<(), CliError> {
    let o = io::load_ontology(&cfg.ontology)?;
    let corpus = io::load_corpus(corpus)?;
    let pairs = build_supervised_pairs(&corpus, features, &o);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut sink = JsonlSink::create(out, &Provenance::new("make-pairs", cfg))?;
    for (input, output) in &pairs {
        sink.write(&Pair { input, output })?;
    }
    sink.finish()?;
    eprintln!("wrote {} pairs to {}", pairs.len(), out.display());
    Ok(())
}

/// A transcript as a corpus dialogue: its initial goal and alternating
/// system and user turns.
pub fn transcript_to_dialogue(t: &Transcript) -> Dialogue {
    let mut turns = Vec::new();
    for r in &t.turns {
        turns.push(CorpusTurn {
            speaker: Speaker::Sys,
            action: r.system.clone(),
            text: r.system_text.clone(),
        });
        turns.push(CorpusTurn {
            speaker: Speaker::Usr,
            action: r.user.clone(),
            text: r.user_text.clone(),
        });
    }
    Dialogue {
        goal: t.initial_goal.clone(),
        turns,
    }
}

pub fn cmd_gen_corpus(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let o = io::load_ontology(&cfg.ontology)?;
    let users = user_factory(cfg, &cfg.generator)?;
    let ts = run_batch(&o, &cfg.batch(&cfg.system, cfg.seed), &users, cfg.dialogues, cfg.threads).map_err(harness_err)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut sink = JsonlSink::create(out, &Provenance::new("gen-corpus", cfg))?;
    for t in &ts {
        sink.write(&transcript_to_dialogue(t))?;
    }
    sink.finish()?;
    eprintln!("wrote {} dialogues to {}", ts.len(), out.display());
    Ok(())
}
