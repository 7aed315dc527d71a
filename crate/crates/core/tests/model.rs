mod common;

use proptest::prelude::*;
use rstparse::model::{
    encode_tokens, window_starts, EmbeddingBackbone, Hyperparams, LabelVocab, ParamStore, Parser,
    PretrainedBackbone, Tape,
};
use rstparse::oracle::tree_to_trace;
use rstparse::synthetic::{sample_labels, TOY_VOCAB};

use common::*;

#[test]
fn gradients_match_finite_differences() {
    for seed in 100..104 {
        let (mut parser, doc, trace) = gradient_case(seed);
        for (name, err) in gradient_errors(&mut parser, &doc, &trace, 1e-5) {
            assert!(err < 1e-4, "seed {seed}: {name} relative error {err:e}");
        }
    }
}

fn vectors_file(dir: &std::path::Path, dim: usize) -> std::path::PathBuf {
    let path = dir.join("vectors.txt");
    let mut text = format!("{} {dim}\n", TOY_VOCAB.len());
    for (i, w) in TOY_VOCAB.iter().enumerate() {
        let v: Vec<String> = (0..dim).map(|k| format!("{:.4}", ((i * 7 + k * 3) as f64).sin() * 0.5)).collect();
        text.push_str(&format!("{w} {}\n", v.join(" ")));
    }
    std::fs::write(&path, text).unwrap();
    path
}

fn pretrained_parser(dir: &std::path::Path, seed: u64) -> (Parser, rstparse::treebank::Record) {
    let rec = toy_corpus(1, 4..=4, seed)[0].clone();
    let backbone = PretrainedBackbone::load(&vectors_file(dir, 8), 2).unwrap();
    let hp = Hyperparams {
        d_emb: 8,
        d_hidden: 8,
        d_label: 8,
        init_range: 0.5,
        weight_decay: 1e-3,
        ..Hyperparams::toy()
    };
    let labels = LabelVocab::new(sample_labels()).unwrap();
    (Parser::new(hp, Box::new(backbone), labels, Vec::new(), seed).unwrap(), rec)
}

#[test]
fn pretrained_adapter_gradients() {
    let dir = tempfile::tempdir().unwrap();
    let (mut parser, rec) = pretrained_parser(dir.path(), 3);
    assert_eq!(parser.backbone.layer_policy().trainable_last, 2);
    // Move the adapters off their identity initialization.
    for t in 0..parser.params.len() {
        if parser.params.get(t).name.starts_with("backbone.adapter") {
            let data = &mut parser.params.get_mut(t).data;
            for (i, x) in data.iter_mut().enumerate() {
                *x = ((i as f64) * 0.37).sin() * 0.3;
            }
        }
    }
    let trace = tree_to_trace(rec.gold().unwrap(), "d").unwrap();
    for (name, err) in gradient_errors(&mut parser, &rec.doc, &trace, 1e-5) {
        assert!(err < 1e-4, "{name} relative error {err:e}");
    }
}

#[test]
fn pretrained_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (parser, rec) = pretrained_parser(dir.path(), 4);
    let path = dir.path().join("ckpt/model.json");
    parser.save(&path).unwrap();
    let loaded = Parser::load(&path).unwrap();
    assert_eq!(loaded.params, parser.params);
    assert_eq!(loaded.parse(&rec.doc).unwrap(), parser.parse(&rec.doc).unwrap());
}

#[test]
fn toy_checkpoint_round_trip_is_exact() {
    let corpus = toy_corpus(3, 2..=9, 11);
    let parser = toy_parser(Hyperparams::toy(), &corpus, sample_labels(), 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    parser.save(&path).unwrap();
    let loaded = Parser::load(&path).unwrap();
    for r in &corpus {
        let (a, b) = (parser.decode(&r.doc).unwrap(), loaded.decode(&r.doc).unwrap());
        assert_eq!(a.pointer_probs, b.pointer_probs);
        assert_eq!(a.label_probs, b.label_probs);
    }
}

#[test]
fn truncated_checkpoint_fails() {
    let corpus = toy_corpus(1, 3..=3, 1);
    let parser = toy_parser(Hyperparams::toy(), &corpus, sample_labels(), 1);
    let json = parser.to_checkpoint_json().unwrap();
    assert!(Parser::from_checkpoint_json(&json[..json.len() / 2]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decoded_distributions_are_normalized(seed in any::<u64>(), m in 1usize..25) {
        let corpus = toy_corpus(1, m..=m, seed);
        let parser = toy_parser(Hyperparams::toy(), &corpus, sample_labels(), seed);
        let d = parser.decode(&corpus[0].doc).unwrap();
        prop_assert_eq!(d.trace.len(), m - 1);
        for (step, p) in d.trace.steps.iter().zip(&d.pointer_probs) {
            let (i, j) = step.span;
            prop_assert_eq!(p.len(), j - i);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            prop_assert!(i <= step.split_at && step.split_at < j);
        }
        for p in &d.label_probs {
            prop_assert_eq!(p.len(), sample_labels().len());
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
        let tree = parser.parse(&corpus[0].doc).unwrap();
        prop_assert!(tree.validate(m).is_ok());
    }

    #[test]
    fn short_inputs_are_encoded_in_one_pass(seed in any::<u64>(), n in 1usize..=500) {
        let params = ParamStore::new();
        let tokens = random_tokens(n, &mut rng(seed));
        let mut tape = Tape::new(&params);
        let single = ContextBackbone.embed(&mut tape, &tokens);
        let single: Vec<Vec<f64>> = single.iter().map(|v| tape.value(*v).to_vec()).collect();
        let windowed = encode_tokens(&mut tape, &ContextBackbone, &tokens, 500, 200);
        for (v, s) in windowed.iter().zip(&single) {
            prop_assert_eq!(tape.value(*v), s.as_slice());
        }
    }

    #[test]
    fn long_inputs_average_covering_windows(seed in any::<u64>(), n in 501usize..=1100) {
        let params = ParamStore::new();
        let tokens = random_tokens(n, &mut rng(seed));
        let mut tape = Tape::new(&params);
        let starts = window_starts(n, 500, 200);
        let mut sums = vec![vec![0.0; CONTEXT_DIM]; n];
        let mut cover = vec![0usize; n];
        for &s in &starts {
            let end = (s + 500).min(n);
            let out = ContextBackbone.embed(&mut tape, &tokens[s..end]);
            for (p, v) in (s..end).zip(out) {
                for (acc, x) in sums[p].iter_mut().zip(tape.value(v)) {
                    *acc += x;
                }
                cover[p] += 1;
            }
        }
        let windowed = encode_tokens(&mut tape, &ContextBackbone, &tokens, 500, 200);
        prop_assert_eq!(windowed.len(), n);
        for p in 0..n {
            prop_assert!(cover[p] >= 1);
            for (g, s) in tape.value(windowed[p]).iter().zip(&sums[p]) {
                prop_assert!((g - s / cover[p] as f64).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn window_size_does_not_matter_for_short_documents() {
    for seed in 0..5 {
        let corpus = toy_corpus(1, 5..=15, 900 + seed);
        let small = toy_parser(Hyperparams::toy(), &corpus, sample_labels(), seed);
        let wide = toy_parser(
            Hyperparams {
                window: 10_000,
                stride: 5_000,
                ..Hyperparams::toy()
            },
            &corpus,
            sample_labels(),
            seed,
        );
        let (a, b) = (small.decode(&corpus[0].doc).unwrap(), wide.decode(&corpus[0].doc).unwrap());
        assert_eq!(a.pointer_probs, b.pointer_probs);
        assert_eq!(a.label_probs, b.label_probs);
    }
}

#[test]
fn long_document_uses_several_windows() {
    let mut r = rng(77);
    let edus: Vec<String> = (0..40).map(|_| random_tokens(30, &mut r).join(" ")).collect();
    let doc = rstparse::treebank::Document::from_edus(
        "long",
        "en",
        &edus,
        "t",
        &rstparse::treebank::WhitespaceTokenizer,
    )
    .unwrap();
    assert_eq!(doc.token_count(), 1200);
    let corpus = toy_corpus(1, 3..=3, 1);
    let mut hp = Hyperparams::toy();
    hp.window = 500;
    let parser = toy_parser(hp, &corpus, sample_labels(), 1);
    let tree = parser.parse(&doc).unwrap();
    assert!(tree.validate(40).is_ok());
}
