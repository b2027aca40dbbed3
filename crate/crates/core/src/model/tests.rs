use super::*;
use crate::numkit::{finite_diff_check_params, Graph, Record};
use rand::Rng;

pub(crate) fn tiny_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 6,
        d_feat: 3,
        d_model: 8,
        num_encoder_layers: 2,
        num_heads: 2,
        ff_dim: 8,
        adapter_dim: 4,
        injection_layers: vec![1, 2],
        bias_predictor: false,
        context_layers: 2,
        context_embed_dim: 3,
        predictor_context: 2,
        predictor_embed_dim: 3,
        joiner_dim: 6,
    }
}

fn features(rng: &mut ChaCha8Rng, t: usize, f: usize) -> Tensor {
    Tensor::from_fn(&[t, f], |_| rng.gen_range(-1.0..1.0))
}

fn entries(rng: &mut ChaCha8Rng, n: usize, v: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|_| (0..rng.gen_range(1..5)).map(|_| rng.gen_range(1..v)).collect())
        .collect()
}

/// Randomizes the zero-initialized adapter output projections.
fn wake_adapters(m: &mut Transducer, rng: &mut ChaCha8Rng) {
    let ids: Vec<ParamId> = m
        .params
        .iter()
        .filter(|(_, n, _)| n.starts_with("adapter.") && n.ends_with(".o"))
        .map(|(id, _, _)| id)
        .collect();
    for id in ids {
        for x in m.params.get_mut(id).data_mut() {
            *x = rng.gen_range(-0.5..0.5);
        }
    }
}

#[test]
fn identity_at_init() {
    let cfg = tiny_config();
    let m = Transducer::new(cfg, 5).unwrap();
    let base = m.base_model().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let t = rng.gen_range(1..7);
        let x = features(&mut rng, t, 3);
        let target: Vec<usize> = (0..rng.gen_range(0..4)).map(|_| rng.gen_range(1..6)).collect();
        let n = rng.gen_range(0..5);
        let list = entries(&mut rng, n, 6);
        let be = m.eval();
        let ctx = m.context(&be, &list).unwrap();
        let (a, ..) = m.lattice(&be, &x, &target, Some(&ctx)).unwrap();
        let bbe = base.eval();
        let (b, ..) = base.lattice(&bbe, &x, &target, None).unwrap();
        assert_eq!(a.data(), b.data());
    }
}

#[test]
fn base_init_ignores_adapters() {
    let m = Transducer::new(tiny_config(), 5).unwrap();
    let plain = Transducer::new(tiny_config().without_adapters(), 5).unwrap();
    for (_, name, t) in plain.params.iter() {
        let id = m.params.id(name).unwrap();
        assert_eq!(m.params.get(id).data(), t.data(), "{name}");
    }
}

#[test]
fn no_bias_fallback_and_attention_rows() {
    let mut m = Transducer::new(tiny_config(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    wake_adapters(&mut m, &mut rng);
    let be = m.eval();
    let x = features(&mut rng, 5, 3);
    let empty = m.context(&be, &[]).unwrap();
    assert_eq!(empty.embeddings.data(), &[0.0; 4]);
    let with = m.encode(&be, &x, Some(&empty)).unwrap();
    let without = m.encode(&be, &x, None).unwrap();
    assert!(with.h.max_abs_diff(&without.h) <= 1e-12);
    for (_, w) in &with.attn {
        assert!(w.data().iter().all(|&p| p == 1.0));
    }

    let ctx = m.context(&be, &entries(&mut rng, 4, 6)).unwrap();
    let out = m.encode(&be, &x, Some(&ctx)).unwrap();
    assert_eq!(out.attn.len(), 2);
    for (_, w) in &out.attn {
        assert_eq!(w.shape(), &[3, 5]);
        for r in 0..3 {
            assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    assert!(out.h.max_abs_diff(&without.h) > 0.0);
}

#[test]
fn zero_projection_adapter_is_identity() {
    let m = Transducer::new(tiny_config(), 3).unwrap();
    let be = m.eval();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = be.constant(features(&mut rng, 4, 8));
    let ctx = m.context(&be, &entries(&mut rng, 3, 6)).unwrap();
    let (hh, w) = m.apply_adapter(&be, 1, &h, &ctx).unwrap();
    assert_eq!(hh.data(), h.data());
    assert_eq!(w.shape(), &[4, 4]);
}

#[test]
fn context_embeddings() {
    let m = Transducer::new(tiny_config(), 3).unwrap();
    let be = m.eval();
    let list = vec![vec![1, 2, 3], vec![4], vec![2, 2, 2], vec![5, 1]];
    let a = m.encode_contexts(&be, &list).unwrap();
    assert_eq!(a.shape(), &[5, 4]);
    assert!(a.row(0).iter().all(|&x| x == 0.0));
    assert_eq!(a, m.encode_contexts(&be, &list).unwrap());
    // Each entry is embedded independently of the rest of the list.
    let alone = m.encode_contexts(&be, &list[2..3]).unwrap();
    assert_eq!(alone.row(1), a.row(3));
    match m.encode_contexts(&be, &[vec![1], vec![2, 9]]) {
        Err(Error::OutOfVocab { index: 1, token: 9, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn predictor_is_stateless() {
    let cfg = ModelConfig { bias_predictor: false, ..tiny_config() };
    let m = Transducer::new(cfg, 3).unwrap();
    let be = m.eval();
    let a = m.predict(&be, &[1, 2, 3, 4], None).unwrap();
    let b = m.predict(&be, &[5, 5, 3, 4], None).unwrap();
    assert_eq!(a, b);
    let e = m.predict(&be, &[], None).unwrap();
    assert_eq!(e, m.predict_histories(&be, &[vec![0, 0]], None).unwrap());
    let ctx = m.context(&be, &[vec![1, 2]]).unwrap();
    assert_eq!(a, m.predict(&be, &[1, 2, 3, 4], Some(&ctx)).unwrap());
}

#[test]
fn joiner_shapes_and_finiteness() {
    let m = Transducer::new(tiny_config(), 3).unwrap();
    let be = m.eval();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = features(&mut rng, 5, 3);
    let (lp, frames, _) = m.lattice(&be, &x, &[1, 2], None).unwrap();
    assert_eq!(frames, 3);
    assert_eq!(lp.shape(), &[3 * 3, 6]);
    assert!(lp.all_finite());
    let lattice = crate::rnnt::EmissionLattice::new((*lp).clone().reshape(&[3, 3, 6]).unwrap(), vec![1, 2]);
    assert!(lattice.is_ok());
    let h = m.encode(&be, &x, None).unwrap().h;
    let p = m.predict(&be, &[1], None).unwrap();
    let logits = m.join(&be, &be.gather_rows(&h, &[0]).unwrap(), &p).unwrap();
    assert_eq!(logits.shape(), &[1, 6]);
    assert_eq!(logits, m.join(&be, &be.gather_rows(&h, &[0]).unwrap(), &p).unwrap());
}

#[test]
fn partition_properties() {
    let m = Transducer::new(tiny_config(), 0).unwrap();
    let p = m.partition();
    assert_eq!(p.base.len() + p.biasing.len(), m.params.len());
    assert!(p.base.iter().all(|id| !p.biasing.contains(id)));
    let with_pred = Transducer::new(ModelConfig { bias_predictor: true, ..tiny_config() }, 0).unwrap();
    let extra = with_pred.params.count_scalars(&with_pred.partition().biasing) - m.params.count_scalars(&p.biasing);
    let c = tiny_config();
    let one_adapter = 2 * c.d_model + c.d_model * c.adapter_dim + c.adapter_dim * 2 * c.adapter_dim + c.adapter_dim * c.d_model;
    assert_eq!(extra, one_adapter);
    assert!(Transducer::new(tiny_config().without_adapters(), 0).unwrap().partition().biasing.is_empty());
}

#[test]
fn analytic_counts_match_store() {
    for cfg in [tiny_config(), ModelConfig { bias_predictor: true, ..tiny_config() }, tiny_config().without_adapters()] {
        let m = Transducer::new(cfg.clone(), 0).unwrap();
        let p = m.partition();
        let counts = cfg.parameter_counts();
        assert_eq!(counts.base, m.params.count_scalars(&p.base));
        assert_eq!(counts.biasing, m.params.count_scalars(&p.biasing));
    }
}

#[test]
fn with_base_copies_and_from_named_round_trips() {
    let base = Transducer::new(tiny_config().without_adapters(), 11).unwrap();
    let m = Transducer::with_base(&base, tiny_config(), 4).unwrap();
    for (_, name, t) in base.params.iter() {
        assert_eq!(m.params.get(m.params.id(name).unwrap()).data(), t.data());
    }
    let named: Vec<(String, Tensor)> = m.params.iter().map(|(_, n, t)| (n.into(), t.clone())).collect();
    let back = Transducer::from_named(tiny_config(), named.clone()).unwrap();
    assert_eq!(back.params.len(), m.params.len());
    assert!(Transducer::from_named(tiny_config(), named[1..].to_vec()).is_err());
    let mut bad = named;
    bad[0].1 = Tensor::zeros(&[1]);
    assert!(Transducer::from_named(tiny_config(), bad).is_err());
}

#[test]
fn gradient_check_through_everything() {
    let cfg = ModelConfig { bias_predictor: true, ..tiny_config() };
    let mut m = Transducer::new(cfg, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    wake_adapters(&mut m, &mut rng);
    let x = features(&mut rng, 6, 3);
    let target = vec![2, 5, 1];
    let list = vec![vec![1, 2], vec![3, 4, 5], vec![2]];
    let err = finite_diff_check_params(
        |rec: &Record<'_>| {
            let ctx = m.context(rec, &list)?;
            m.loss(rec, &x, &target, Some(&ctx))
        },
        m.params(),
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn record_and_eval_agree() {
    let mut m = Transducer::new(tiny_config(), 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    wake_adapters(&mut m, &mut rng);
    let x = features(&mut rng, 4, 3);
    let list = entries(&mut rng, 3, 6);
    let be = m.eval();
    let ctx = m.context(&be, &list).unwrap();
    let e = m.loss(&be, &x, &[3, 1], Some(&ctx)).unwrap();
    let g = Graph::new();
    let rec = Record::new(&g, m.params());
    let ctx = m.context(&rec, &list).unwrap();
    let r = m.loss(&rec, &x, &[3, 1], Some(&ctx)).unwrap();
    assert_eq!(e.item().unwrap(), r.item().unwrap());
}

#[test]
fn indexed_context_rows_match_on_both_backends() {
    let cfg = ModelConfig { bias_predictor: true, ..tiny_config() };
    let mut m = Transducer::new(cfg, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    wake_adapters(&mut m, &mut rng);
    let x = features(&mut rng, 5, 3);
    let table = entries(&mut rng, 6, 6);
    let pick = [4usize, 1, 6];
    let list: Vec<Vec<usize>> = pick.iter().map(|&r| table[r - 1].clone()).collect();
    let rows: Arc<[usize]> = [0].iter().chain(&pick).copied().collect::<Vec<_>>().into();

    let be = m.eval();
    let direct = m.loss(&be, &x, &[2, 4], Some(&m.context(&be, &list).unwrap())).unwrap();
    let indexed = Context { rows: Some(rows.clone()), ..m.context(&be, &table).unwrap() };
    assert_eq!(direct.item().unwrap(), m.loss(&be, &x, &[2, 4], Some(&indexed)).unwrap().item().unwrap());

    let g = Graph::new();
    let rec = Record::new(&g, m.params());
    let indexed = Context { rows: Some(rows), ..m.context(&rec, &table).unwrap() };
    assert_eq!(direct.item().unwrap(), m.loss(&rec, &x, &[2, 4], Some(&indexed)).unwrap().item().unwrap());
}
