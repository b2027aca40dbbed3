use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use contextbias::config::RunConfig;
use contextbias::error::{Error, Result};
use contextbias::io::{self, ScoredReport};
use contextbias::pipeline::{self, BiasingRun, Mode};
use contextbias_core::data::generate_corpus;
use contextbias_core::decode::{greedy_decode, ModelScorer};
use contextbias_core::text::{perturb_utterance, BiasingList, CharVocab, SpellingRuleSet};
use contextbias_core::train::StepReport;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "contextbias", version, about = "Contextual biasing for character transducers on a synthetic homophone corpus")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the run seed and the corpus seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving every artifact (created if missing).
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic corpus, rare-word list and evaluation lists.
    GenData(Common),
    /// Train the transducer without adapters.
    TrainBase {
        #[command(flatten)]
        common: Common,
        /// Directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
    },
    /// Train context encoder and adapters on a frozen base checkpoint.
    TrainBiasing {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        base: PathBuf,
        /// Comma-separated 1-based injection layers, overriding the config.
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
        /// Overrides biasing.perturb_prob.
        #[arg(long)]
        perturb_prob: Option<f64>,
    },
    /// Beam-search a split and write its n-best list.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value = "test")]
        split: String,
        /// Fusion bonus for sf; defaults to decode.fusion_lambda.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Score an n-best file against a split.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        nbest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Time non-contextual against neural-biasing decoding.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Contextual checkpoint; its base parameters give the NO run.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 500)]
        distractors: usize,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Perturb a transcript, treating the given words as rare.
    Perturb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        text: String,
        /// Rare words; every word of the text when omitted.
        #[arg(long, value_delimiter = ',')]
        rare: Option<Vec<String>>,
        #[arg(long, default_value_t = 1.0)]
        prob: f64,
        /// Rules TSV; the built-in English rules when omitted.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Validate a spelling-rules TSV file.
    RulesCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rules: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    No,
    Sf,
    Nb,
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
        cfg.data.seed = s;
    }
    cfg.validate()?;
    io::write_text(&c.out_dir.join("config.toml"), &cfg.to_toml())?;
    Ok(cfg)
}

fn split_manifest(data: &Path, split: &str) -> PathBuf {
    data.join(format!("{split}.jsonl"))
}

fn split_lists(data: &Path, split: &str) -> PathBuf {
    data.join(format!("{split}.lists.jsonl"))
}

fn write_loss_log(path: &Path, reports: &[StepReport]) -> Result<()> {
    let mut s = String::from("step\tloss\tlr\tgrad_norm\n");
    for r in reports {
        s.push_str(&format!("{}\t{:.6}\t{:.6e}\t{:.4}\n", r.step, r.loss, r.lr, r.grad_norm));
    }
    io::write_text(path, &s)
}

fn progress(tag: &'static str, every: usize) -> impl FnMut(&StepReport) {
    move |r| {
        if r.step % every == 0 {
            eprintln!("{tag} step {} loss {:.4} lr {:.2e}", r.step, r.loss, r.lr);
        }
    }
}

fn rules_from(path: Option<&Path>) -> Result<SpellingRuleSet> {
    match path {
        Some(p) => Ok(SpellingRuleSet::new(io::read_rule_pairs(p)?)?),
        None => Ok(SpellingRuleSet::english()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData(c) => {
            let cfg = load_config(&c)?;
            let corpus = generate_corpus(&cfg.data)?;
            let out = &c.out_dir;
            for (name, split) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
                io::write_manifest(out, name, split)?;
            }
            let rare =
                pipeline::rare_vocabulary(&corpus.train, corpus.dev.iter().chain(&corpus.test), cfg.data.lexicon_common);
            io::write_words(&out.join("rare.txt"), &rare)?;
            let pool = pipeline::distractor_pool(&rare, &corpus.lexicon.distractors);
            io::write_words(&out.join("pool.txt"), &pool)?;
            io::write_json(&out.join("lexicon.json"), &corpus.lexicon)?;
            let n = cfg.biasing.n_distractors_eval;
            for (i, (name, split)) in [("dev", &corpus.dev), ("test", &corpus.test)].into_iter().enumerate() {
                let lists = pipeline::eval_lists(split, &rare, &pool, n, cfg.biasing.eval_list_seed + i as u64);
                io::write_lists(&split_lists(out, name), &lists)?;
            }
            println!(
                "train {} dev {} test {} utterances, {} rare words -> {}",
                corpus.train.len(),
                corpus.dev.len(),
                corpus.test.len(),
                rare.len(),
                out.display()
            );
        }
        Cmd::TrainBase { common, data } => {
            let cfg = load_config(&common)?;
            let train = io::read_manifest(&split_manifest(&data, "train"))?;
            let dev = io::read_manifest(&split_manifest(&data, "dev"))?;
            let (model, reports) = pipeline::train_base_model(&cfg, &train, progress("base", 100))?;
            io::save_checkpoint(&common.out_dir.join("base.ckpt"), &model)?;
            write_loss_log(&common.out_dir.join("base_loss.tsv"), &reports)?;
            let mut hyps = BTreeMap::new();
            for u in &dev {
                let s = ModelScorer::new(&model, &u.features, None, None)?;
                hyps.insert(u.id.clone(), CharVocab.decode(&greedy_decode(&s, cfg.decode.max_symbols)?));
            }
            let none: BTreeMap<String, BiasingList> = dev.iter().map(|u| (u.id.clone(), BiasingList::empty())).collect();
            let report = ScoredReport::new("greedy-dev", pipeline::score_set(&dev, &hyps, &none)?, 0.0);
            io::write_json(&common.out_dir.join("base_dev_report.json"), &report)?;
            let wer = report.wer.unwrap_or(0.0);
            println!(
                "final loss {:.4}, greedy dev WER {:.2}% (threshold {:.2}%: {})",
                reports.last().map_or(f64::NAN, |r| r.loss),
                100.0 * wer,
                100.0 * cfg.decode.base_wer_threshold,
                if wer < cfg.decode.base_wer_threshold { "below" } else { "NOT below" }
            );
        }
        Cmd::TrainBiasing { common, data, base, layers, perturb_prob } => {
            let cfg = load_config(&common)?;
            let base = io::load_checkpoint(&base)?;
            let train = io::read_manifest(&split_manifest(&data, "train"))?;
            let rare = io::read_words(&data.join("rare.txt"))?.into_iter().collect();
            let pool = io::read_words(&data.join("pool.txt"))?.into_iter().collect();
            let run = BiasingRun {
                injection_layers: layers.unwrap_or_else(|| cfg.model.injection_layers.clone()),
                perturb_prob: perturb_prob.unwrap_or(cfg.biasing.perturb_prob),
            };
            if !(0.0..=1.0).contains(&run.perturb_prob) {
                return Err(Error::Config(format!("perturb_prob {} outside [0, 1]", run.perturb_prob)));
            }
            let (model, reports) = pipeline::train_biasing_model(&cfg, &base, &train, &rare, &pool, &run, progress("biasing", 50))?;
            io::save_checkpoint(&common.out_dir.join("biasing.ckpt"), &model)?;
            write_loss_log(&common.out_dir.join("biasing_loss.tsv"), &reports)?;
            println!("final loss {:.4}", reports.last().map_or(f64::NAN, |r| r.loss));
        }
        Cmd::Decode { common, data, checkpoint, mode, split, lambda } => {
            let cfg = load_config(&common)?;
            let model = io::load_checkpoint(&checkpoint)?;
            let utts = io::read_manifest(&split_manifest(&data, &split))?;
            let lists = io::read_lists(&split_lists(&data, &split))?;
            let (model, mode) = match mode {
                ModeArg::No => (model.base_model()?, Mode::No),
                ModeArg::Sf => (model.base_model()?, Mode::Sf(lambda.unwrap_or(cfg.decode.fusion_lambda))),
                ModeArg::Nb => (model, Mode::Nb),
            };
            let (decoded, secs) = pipeline::timed_decode(&model, &utts, &lists, mode, &cfg.decode)?;
            let tag = match mode {
                Mode::No => "no",
                Mode::Sf(_) => "sf",
                Mode::Nb => "nb",
            };
            let records: Vec<_> = decoded.iter().map(|d| d.to_record()).collect();
            let path = common.out_dir.join(format!("{split}.{tag}.nbest.jsonl"));
            io::write_nbest(&path, &records)?;
            println!("{} utterances in {secs:.2}s -> {}", records.len(), path.display());
        }
        Cmd::Score { common, data, nbest, split } => {
            load_config(&common)?;
            let utts = io::read_manifest(&split_manifest(&data, &split))?;
            let lists = io::read_lists(&split_lists(&data, &split))?;
            let hyps: BTreeMap<String, String> = io::read_nbest(&nbest)?
                .into_iter()
                .map(|r| (r.id, r.hypotheses.into_iter().next().map(|h| h.text).unwrap_or_default()))
                .collect();
            let name = nbest.file_name().and_then(|n| n.to_str()).unwrap_or("nbest").trim_end_matches(".nbest.jsonl");
            let report = ScoredReport::new(name, pipeline::score_set(&utts, &hyps, &lists)?, 0.0);
            io::write_json(&common.out_dir.join(format!("{name}.report.json")), &report)?;
            let table = io::format_table(std::slice::from_ref(&report));
            io::write_text(&common.out_dir.join(format!("{name}.report.txt")), &table)?;
            print!("{table}");
        }
        Cmd::Bench { common, data, checkpoint, distractors, split } => {
            let cfg = load_config(&common)?;
            let nb = io::load_checkpoint(&checkpoint)?;
            let base = nb.base_model()?;
            let utts = io::read_manifest(&split_manifest(&data, &split))?;
            let rare = io::read_words(&data.join("rare.txt"))?.into_iter().collect();
            let pool = io::read_words(&data.join("pool.txt"))?.into_iter().collect();
            let lists = pipeline::eval_lists(&utts, &rare, &pool, distractors, cfg.biasing.eval_list_seed ^ distractors as u64);
            let bench = pipeline::bench(&base, &nb, &utts, &lists, &cfg.decode)?;
            io::write_json(&common.out_dir.join("bench.json"), &bench)?;
            println!(
                "NO {:.2}s, NB {:.2}s, ratio {:.3} over {} utterances with {distractors} distractors",
                bench.no_seconds,
                bench.nb_seconds,
                bench.ratio,
                utts.len()
            );
        }
        Cmd::Perturb { common, text, rare, prob, rules } => {
            let cfg = load_config(&common)?;
            let rules = rules_from(rules.as_deref())?;
            let text = contextbias_core::text::normalize(&text);
            let rare = rare.unwrap_or_else(|| text.split_whitespace().map(String::from).collect());
            let list = BiasingList::dedup(rare.iter().cloned());
            let rare = rare.into_iter().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (out, list) = perturb_utterance(&text, &list, &rare, prob, &rules, &mut rng)?;
            println!("{out}");
            println!("list: {}", list.entries().join(" "));
        }
        Cmd::RulesCheck { common, rules } => {
            load_config(&common)?;
            let pairs = match &rules {
                Some(p) => io::read_rule_pairs(p)?,
                None => SpellingRuleSet::english().pairs().to_vec(),
            };
            let report = SpellingRuleSet::check(&pairs)?;
            for &i in &report.duplicates {
                println!("warning: duplicate pair {} -> {}", pairs[i].0, pairs[i].1);
            }
            for &i in &report.cycles {
                println!("warning: pair {} -> {} closes a cycle", pairs[i].0, pairs[i].1);
            }
            if report.missing_letters.is_empty() {
                println!("coverage: all 26 letters ({} pairs)", report.pairs);
            } else {
                let missing: String = report.missing_letters.iter().collect();
                return Err(Error::Config(format!("rule coverage missing letters: {missing}")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage msg={}", serde_json::to_string(first).expect("string"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} msg={}", e.kind(), serde_json::to_string(&e.to_string()).expect("string"));
            ExitCode::FAILURE
        }
    }
}
