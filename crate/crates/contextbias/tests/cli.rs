use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contextbias"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = r#"
seed = 3

[model]
d_model = 8
num_encoder_layers = 2
num_heads = 2
ff_dim = 8
adapter_dim = 4
injection_layers = [1, 2]
context_embed_dim = 4
predictor_embed_dim = 4
joiner_dim = 8

[data]
lexicon_common = 8
lexicon_rare = 12
homophone_pairs = 3
distractor_words = 10
train_utterances = 12
dev_utterances = 3
test_utterances = 4
max_words = 3

[base_training]
steps = 3
batch_size = 2

[biasing_training]
steps = 2
batch_size = 2

[biasing]
n_distractors_train = 3
n_distractors_eval = 3

[decode]
beam = 2
"#;

fn write_config(dir: &Path) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, TINY).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn full_pipeline_through_the_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let d = |s: &str| tmp.path().join(s).to_str().unwrap().to_string();
    let data = d("data");

    let o = run(&["gen-data", "--config", &cfg, "--out-dir", &data]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["train.jsonl", "test.jsonl", "test.lists.jsonl", "rare.txt", "pool.txt", "config.toml"] {
        assert!(tmp.path().join("data").join(f).exists(), "{f}");
    }

    let o = run(&["train-base", "--config", &cfg, "--data", &data, "--out-dir", &d("base")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("greedy dev WER"));

    let base = d("base/base.ckpt");
    let o = run(&["train-biasing", "--config", &cfg, "--data", &data, "--base", &base, "--out-dir", &d("nb")]);
    assert!(o.status.success(), "{}", stderr(&o));

    let nb = d("nb/biasing.ckpt");
    for mode in ["no", "sf", "nb"] {
        let ck = if mode == "nb" { &nb } else { &base };
        let o = run(&["decode", "--config", &cfg, "--data", &data, "--checkpoint", ck, "--mode", mode, "--out-dir", &d("dec")]);
        assert!(o.status.success(), "{mode}: {}", stderr(&o));
        let nbest = d(&format!("dec/test.{mode}.nbest.jsonl"));
        let o = run(&["score", "--config", &cfg, "--data", &data, "--nbest", &nbest, "--out-dir", &d("dec")]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("B-WER"));
    }
    assert!(tmp.path().join("dec/test.nb.report.json").exists());

    let o = run(&["bench", "--config", &cfg, "--data", &data, "--checkpoint", &nb, "--distractors", "5", "--out-dir", &d("bench")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ratio"));
}

#[test]
fn same_seed_same_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let data = tmp.path().join(name);
        let o = run(&["gen-data", "--config", &cfg, "--out-dir", data.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let o = run(&["train-base", "--config", &cfg, "--data", data.to_str().unwrap(), "--out-dir", data.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        outs.push((
            std::fs::read(data.join("test.lists.jsonl")).unwrap(),
            std::fs::read(data.join("base.ckpt")).unwrap(),
        ));
    }
    assert!(outs[0] == outs[1]);
}

#[test]
fn errors_are_one_line_and_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nno_such_key = 1\n").unwrap();
    let out = tmp.path().join("o");
    let o = run(&["gen-data", "--config", bad.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert_eq!(e.lines().count(), 1, "{e}");
    assert!(e.starts_with("error kind=config "), "{e}");

    std::fs::write(&bad, "[model]\ninjection_layers = [7]\n").unwrap();
    let o = run(&["gen-data", "--config", bad.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(stderr(&o).starts_with("error kind=config "));

    let o = run(&["decode", "--data", "nowhere", "--checkpoint", "missing.ckpt", "--mode", "nb", "--out-dir", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error kind=io "), "{}", stderr(&o));

    let o = run(&["frobnicate"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error kind=usage "));
}

#[test]
fn rules_check_and_perturb() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    let o = run(&["rules-check", "--out-dir", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("all 26 letters"));

    let rules = tmp.path().join("r.tsv");
    let text: String = contextbias_core::text::ENGLISH_RULES
        .iter()
        .filter(|(p, q)| !p.contains('q') && !q.contains('q'))
        .map(|(p, q)| format!("{p}\t{q}\n"))
        .collect();
    std::fs::write(&rules, format!("{text}ein\tane\n")).unwrap();
    let o = run(&["rules-check", "--rules", rules.to_str().unwrap(), "--out-dir", out]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("duplicate pair ein -> ane"), "{}", stdout(&o));
    assert!(stderr(&o).contains("missing letters: q"), "{}", stderr(&o));

    std::fs::write(&rules, "ein\tane\nbroken\n").unwrap();
    let o = run(&["rules-check", "--rules", rules.to_str().unwrap(), "--out-dir", out]);
    assert!(stderr(&o).contains(":2:"), "{}", stderr(&o));

    std::fs::write(&rules, "ein\tane\n").unwrap();
    let o = run(&["perturb", "--text", "Klein", "--rules", rules.to_str().unwrap(), "--out-dir", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().next(), Some("klane"));
}
