use std::collections::BTreeMap;

use contextbias::io::*;
use contextbias_core::data::{generate_corpus, SynthConfig};
use contextbias_core::model::{ModelConfig, Transducer};
use contextbias_core::numkit::Tensor;
use contextbias_core::text::BiasingList;

fn tiny_corpus() -> contextbias_core::data::Corpus {
    generate_corpus(&SynthConfig {
        lexicon_common: 10,
        lexicon_rare: 20,
        homophone_pairs: 4,
        train_utterances: 6,
        dev_utterances: 2,
        test_utterances: 3,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny_corpus();
    let path = write_manifest(dir.path(), "test", &c.test).unwrap();
    assert_eq!(read_manifest(&path).unwrap(), c.test);
}

#[test]
fn empty_manifest_is_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    assert!(read_manifest(&path).unwrap().is_empty());
}

#[test]
fn malformed_manifest_line_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny_corpus();
    let path = write_manifest(dir.path(), "dev", &c.dev).unwrap();
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"id\": 3}\n");
    std::fs::write(&path, text).unwrap();
    let err = read_manifest(&path).unwrap_err().to_string();
    assert!(err.contains(":3:"), "{err}");
}

#[test]
fn truncated_feature_file_is_shape_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.feat");
    let x = Tensor::from_fn(&[5, 3], |i| i as f64 * 0.5);
    write_features(&path, &x).unwrap();
    assert_eq!(read_features(&path).unwrap(), x);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    let err = read_features(&path).unwrap_err();
    assert!(matches!(err, contextbias::Error::Core(contextbias_core::Error::Shape { .. })), "{err}");
    std::fs::write(&path, b"CXFTq\0\0\0\0\0\0\0\0").unwrap();
    assert!(read_features(&path).is_err());
}

fn small_model(layers: Vec<usize>) -> ModelConfig {
    ModelConfig {
        d_feat: 16,
        d_model: 8,
        num_encoder_layers: 2,
        num_heads: 2,
        ff_dim: 8,
        adapter_dim: 4,
        injection_layers: layers,
        context_embed_dim: 4,
        predictor_embed_dim: 4,
        joiner_dim: 8,
        ..Default::default()
    }
}

#[test]
fn checkpoint_round_trip_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let m = Transducer::new(small_model(vec![1, 2]), 3).unwrap();
    save_checkpoint(&path, &m).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.config(), m.config());
    for ((_, a, x), (_, b, y)) in m.params().iter().zip(back.params().iter()) {
        assert_eq!((a, x.data()), (b, y.data()));
    }
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    assert!(load_checkpoint(&path).is_err());

    // Header naming a parameter the architecture lacks.
    let text = String::from_utf8_lossy(&bytes).replace("join.out.w", "join.xxx.w");
    std::fs::write(&path, text.as_bytes()).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn lists_and_nbest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut lists = BTreeMap::new();
    lists.insert("a".to_string(), BiasingList::new(vec!["klein".into(), "zorb".into()]).unwrap());
    lists.insert("b".to_string(), BiasingList::empty());
    let p = dir.path().join("l.jsonl");
    write_lists(&p, &lists).unwrap();
    assert_eq!(read_lists(&p).unwrap(), lists);

    let nb = vec![NbestRecord {
        id: "a".into(),
        hypotheses: vec![NbestEntry { text: "klein".into(), score: -1.5, base_score: -2.0 }],
    }];
    let p = dir.path().join("n.jsonl");
    write_nbest(&p, &nb).unwrap();
    assert_eq!(read_nbest(&p).unwrap(), nb);
}

#[test]
fn rules_tsv_parsing() {
    assert_eq!(
        parse_rule_pairs("# comment\nein\tane\n\nlee\tli\n").unwrap(),
        vec![("ein".to_string(), "ane".to_string()), ("lee".to_string(), "li".to_string())]
    );
    assert_eq!(parse_rule_pairs("ein\tane\nbad line\n").unwrap_err().0, 2);
    assert_eq!(parse_rule_pairs("a\tA\n").unwrap_err().0, 1);
    assert_eq!(parse_rule_pairs("x\tx\n").unwrap_err().0, 1);
    let pairs = vec![("c".to_string(), "k".to_string())];
    assert_eq!(parse_rule_pairs(&format_rule_pairs(&pairs)).unwrap(), pairs);
}
