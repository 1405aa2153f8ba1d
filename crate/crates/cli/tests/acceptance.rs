//! Runs every acceptance criterion and prints one PASS/FAIL line for each.
//! Criteria can be selected by number: `cargo test --test acceptance -- 1 3`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use forumtag::agreement::{build_dataset, positive_specific_agreement, AgreementCounts, MergePolicy};
use forumtag::corpus::{
    bio_decode, bio_encode, AnnotatedMention, Group, ResourceType, Sentence, Span, Tag, TaggedCorpus,
};
use forumtag::crf::{brute_force_oracle, log_partition, viterbi_decode, EmissionScores, TransitionMatrix};
use forumtag::encoders::{PretrainedVectors, Vocabulary};
use forumtag::evaluation::{categorize_prediction, micro_prf, oov_report, span_token_recall, ErrorCategory, Prf};
use forumtag::numerics::GradCheckConfig;
use forumtag::synth::{synth_gen, MentionKind, Perturbation, SynthSpec};
use forumtag::tagger::{train, NeuralTagger, TaggerConfig, Variant};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let spent = start.elapsed();
    (spent < limit, format!("{:.1}s of {}s", spent.as_secs_f64(), limit.as_secs()))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rows = [
        ("Assessments", 8047, 8520, 5451, 11116, 0.658),
        ("Exams", 1891, 3624, 1146, 4369, 0.416),
        ("Videos", 1852, 3037, 1236, 3653, 0.506),
        ("Coursewares", 3281, 4286, 1557, 6010, 0.412),
        ("Total", 15071, 19467, 9390, 25148, 0.544),
    ];
    let mut bad = Vec::new();
    for (name, g1, g2, inter, union, printed) in rows {
        let c = AgreementCounts::from_totals(g1, g2, inter).unwrap();
        let p = positive_specific_agreement(&c).unwrap();
        if (p - printed).abs() > 0.001 || c.union() != union {
            bad.push(format!("{name}: P_pos {p:.4} union {}", c.union()));
        }
    }
    let (fast, time) = within(Duration::from_secs(1), start);
    outcome(bad.is_empty() && fast, format!("5 rows, {} mismatches {bad:?}, {time}", bad.len()))
}

fn tags(s: &str) -> Vec<Tag> {
    s.split_whitespace().map(|t| t.parse().unwrap()).collect()
}

fn criterion_2() -> Outcome {
    // Hand-counted: tp 4, fp 3 (V_I for A_I, E_B on O, C_B on O), fn 2 (A_I, missed E_B).
    let gold = vec![
        tags("Assessments_B Assessments_I O Videos_B"),
        tags("Exams_B O Coursewares_B Coursewares_I"),
    ];
    let pred = vec![
        tags("Assessments_B Videos_I Exams_B Videos_B"),
        tags("O Coursewares_B Coursewares_B Coursewares_I"),
    ];
    let got = micro_prf(&gold, &pred).unwrap();
    let want = Prf::from_counts(4, 3, 2);
    let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
    let exact = got == want && close(got.precision, 4.0 / 7.0) && close(got.recall, 2.0 / 3.0) && close(got.f1, 8.0 / 13.0);
    let empty = micro_prf(&[tags("O O")], &[tags("O O")]).unwrap() == Prf::from_counts(0, 0, 0);
    let perfect = micro_prf(&gold, &gold).unwrap().f1 == 1.0;
    let table = Prf::from_pr(0.7291, 0.7920).f1 * 100.0;
    let ok = exact && empty && perfect && (table - 75.92).abs() <= 0.05;
    outcome(ok, format!("hand-computed counts {exact}, identities {}, table F1 {table:.3}", empty && perfect))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut viterbi_misses) = (0.0f64, 0);
    for _ in 0..200 {
        let t = rng.gen_range(1..=5);
        let k = rng.gen_range(1..=5);
        let e = EmissionScores::new(t, k, (0..t * k).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let n = (k + 2) * (k + 2);
        let a = TransitionMatrix::from_values(k, (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let oracle = brute_force_oracle(&e, &a).unwrap();
        worst = worst.max((log_partition(&e, &a).unwrap() - oracle.log_partition).abs());
        viterbi_misses += usize::from(viterbi_decode(&e, &a).unwrap().0 != oracle.best);
    }
    let (fast, time) = within(Duration::from_secs(30), start);
    outcome(
        worst <= 1e-8 && viterbi_misses == 0 && fast,
        format!("200 instances, max |log Z error| {worst:.2e}, viterbi mismatches {viterbi_misses}, {time}"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let config = TaggerConfig {
        variant: Variant::BlstmCrfCeCa,
        word_dim: 6,
        char_dim: 4,
        char_hidden: 3,
        hidden: 5,
        context_hidden: 4,
        attention_dim: 4,
        min_word_count: 1,
        seed: 4,
        ..Default::default()
    };
    let c1 = Sentence::from_words(&["I", "watched", "lecture", "3", "video", "."], 0, 0);
    let c2 = Sentence::from_words(&["the", "quiz", "is", "hard", "."], 1, 1);
    let s = Sentence::from_words(&["this", "video", "helps"], 2, 2);
    let vocab = Vocabulary::build([&c1, &c2, &s].iter().flat_map(|s| s.words()), 1, true, |_| false);
    let (model, _) = NeuralTagger::new(config, vocab, None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let gold = [Tag::B(ResourceType::Videos), Tag::I(ResourceType::Videos), Tag::O];
    let ex = model.encode(&s, &[&c1, &c2], Some(&gold));
    let report = model.grad_check(&ex, GradCheckConfig::default()).unwrap();
    let (fast, time) = within(Duration::from_secs(60), start);
    let ok = report.max_rel_error < 1e-4 && report.checked == model.param_count() && ex.context.len() == 2 && fast;
    outcome(
        ok,
        format!("{} coordinates, max relative error {:.2e}, {time}", report.checked, report.max_rel_error),
    )
}

/// Form-M corpora for both synthetic splits.
fn synth_corpora(spec: &SynthSpec) -> (forumtag::synth::SynthCorpus, TaggedCorpus, TaggedCorpus) {
    let c = synth_gen(spec).unwrap();
    let build = |s: &forumtag::synth::SynthSplit| {
        build_dataset(&s.threads, &s.group1, &s.group2, MergePolicy::IntersectionM).unwrap().corpus
    };
    let (tr, te) = (build(&c.train), build(&c.test));
    (c, tr, te)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec {
        seed: 5,
        train_sentences: 50,
        test_sentences: 0,
        vector_dim: 8,
        perturbation: Perturbation::none(),
        ..Default::default()
    };
    let (_, corpus, _) = synth_corpora(&spec);
    let gold: Vec<Vec<Tag>> = corpus.sentences.iter().map(|s| s.tags.clone()).collect();
    let mut ok = corpus.len() == 50;
    let mut parts = Vec::new();
    for variant in Variant::ALL {
        let config = TaggerConfig {
            variant,
            word_dim: 16,
            char_dim: 8,
            char_hidden: 8,
            hidden: 16,
            context_hidden: 12,
            attention_dim: 12,
            min_word_count: 1,
            validation_fraction: 0.0,
            max_epochs: 200,
            patience: Some(200),
            seed: 5,
            ..Default::default()
        };
        let a = train(&corpus, &config, None).unwrap();
        let b = train(&corpus, &config, None).unwrap();
        let same = a.model.to_checkpoint().to_bytes() == b.model.to_checkpoint().to_bytes();
        let pred: Vec<Vec<Tag>> = a.model.tag_corpus(&corpus).unwrap().into_iter().map(|p| p.tags).collect();
        let f1 = micro_prf(&gold, &pred).unwrap().f1;
        ok &= f1 >= 0.99 && same && a.log.len() <= 200;
        parts.push(format!("{} F1 {f1:.3} in {} epochs{}", variant.name(), a.log.len(), if same { "" } else { " (NOT reproducible)" }));
    }
    let (fast, time) = within(Duration::from_secs(600), start);
    outcome(ok && fast, format!("{}; {time}", parts.join(", ")))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec {
        seed: 6,
        train_sentences: 2000,
        test_sentences: 400,
        oov_rate: 0.3,
        anaphora_rate: 0.3,
        vector_dim: 50,
        perturbation: Perturbation::none(),
        ..Default::default()
    };
    let (synth, train_corpus, test) = synth_corpora(&spec);
    let vectors = PretrainedVectors::read_from(synth.vectors.as_bytes(), "vectors.txt").unwrap();
    let position = |thread: &str, sentence: usize| {
        test.sentences
            .iter()
            .position(|s| s.thread_id == thread && s.sentence.sentence_index == sentence)
            .unwrap()
    };
    let anaphoric: Vec<(usize, Span)> = synth
        .test
        .gold
        .iter()
        .filter(|g| g.valid && g.kind == MentionKind::Anaphoric)
        .map(|g| (position(&g.thread_id, g.sentence_index), g.span()))
        .collect();
    let gold: Vec<Vec<Tag>> = test.sentences.iter().map(|s| s.tags.clone()).collect();
    let mut scores = Vec::new();
    for variant in [Variant::BlstmCrf, Variant::BlstmCrfCe, Variant::BlstmCrfCeCa] {
        let config = TaggerConfig {
            variant,
            word_dim: 50,
            char_dim: 16,
            char_hidden: 25,
            hidden: 64,
            context_hidden: 64,
            attention_dim: 64,
            max_epochs: 10,
            patience: Some(3),
            seed: 6,
            ..Default::default()
        };
        let model = train(&train_corpus, &config, Some(&vectors)).unwrap().model;
        let pred: Vec<Vec<Tag>> = model.tag_corpus(&test).unwrap().into_iter().map(|p| p.tags).collect();
        let categorized: Vec<_> = test
            .sentences
            .iter()
            .zip(&pred)
            .map(|(s, p)| categorize_prediction(&bio_decode(&s.tags, 0).0, &bio_decode(p, 0).0))
            .collect();
        let oov = oov_report(
            test.sentences.iter().zip(&categorized).map(|(s, c)| (&s.sentence, c.as_slice())),
            |w| !vectors.contains(w),
        )
        .oov;
        let recall = span_token_recall(&gold, &pred, &anaphoric).unwrap();
        scores.push((variant, oov, recall));
    }
    let (base, ce, ca) = (&scores[0], &scores[1], &scores[2]);
    let gain_a = 100.0 * (ce.1.ratio - base.1.ratio);
    let gain_b = 100.0 * (ca.2.ratio - ce.2.ratio);
    let (fast, time) = within(Duration::from_secs(3600), start);
    let detail = format!(
        "(a) OOV exactly-correct {:.1} -> {:.1} (+{gain_a:.1}, n={}); (b) anaphoric recall {:.1} -> {:.1} (+{gain_b:.1}, n={}); {time}",
        100.0 * base.1.ratio,
        100.0 * ce.1.ratio,
        ce.1.total,
        100.0 * ce.2.ratio,
        100.0 * ca.2.ratio,
        ca.2.total,
    );
    outcome(gain_a >= 5.0 && gain_b >= 5.0 && ce.1.total > 0 && ca.2.total > 0 && fast, detail)
}

fn mention_lists(len: usize) -> impl Strategy<Value = Vec<AnnotatedMention>> {
    proptest::collection::vec((0..len.max(1), 1..4usize, 0..4usize), 0..6).prop_map(move |raw| {
        let mut taken = vec![false; len];
        let mut out = Vec::new();
        for (start, width, t) in raw {
            let end = (start + width).min(len);
            if start >= end || taken[start..end].iter().any(|x| *x) {
                continue;
            }
            taken[start..end].iter_mut().for_each(|x| *x = true);
            out.push(AnnotatedMention::new(Span::new(0, start, end), ResourceType::ALL[t], Group::Agreed));
        }
        out.sort_by_key(|m| m.span.start);
        out
    })
}

fn criterion_7() -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 10_000,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let roundtrip = runner.run(&(0..30usize).prop_flat_map(|n| (Just(n), mention_lists(n))), |(n, mentions)| {
        let tags = bio_encode(n, &mentions).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let (back, warnings) = bio_decode(&tags, 0);
        prop_assert!(warnings.is_empty());
        prop_assert_eq!(back.len(), mentions.len());
        for (a, b) in back.iter().zip(&mentions) {
            prop_assert_eq!(a.span, b.span);
            prop_assert_eq!(a.rtype.coarse(), b.rtype.coarse());
        }
        Ok(())
    });
    let partition = runner.run(&(1..30usize).prop_flat_map(|n| (mention_lists(n), mention_lists(n))), |(g, p)| {
        let pairs = categorize_prediction(&g, &p);
        let mut gold_seen = vec![0; g.len()];
        let mut pred_seen = vec![0; p.len()];
        for pair in &pairs {
            let expected = match (&pair.gold, &pair.pred) {
                (Some(a), Some(b)) => ErrorCategory::of_pair(a, b),
                (Some(_), None) => ErrorCategory::Missing,
                (None, Some(_)) => ErrorCategory::WronglyExtracted,
                (None, None) => return Err(TestCaseError::fail("empty pair")),
            };
            prop_assert_eq!(pair.category, expected);
            if let Some(a) = &pair.gold {
                gold_seen[g.iter().position(|m| m == a).unwrap()] += 1;
            }
            if let Some(b) = &pair.pred {
                pred_seen[p.iter().position(|m| m == b).unwrap()] += 1;
                if let Some(a) = &pair.gold {
                    prop_assert!(a.span.overlaps(&b.span));
                }
            }
        }
        prop_assert!(gold_seen.iter().chain(&pred_seen).all(|c| *c == 1));
        Ok(())
    });
    let (roundtrip, partition) = (roundtrip.map_err(|e| e.to_string()), partition.map_err(|e| e.to_string()));
    outcome(
        roundtrip.is_ok() && partition.is_ok(),
        format!("10000 roundtrip cases {}, 10000 partition cases {}", describe(&roundtrip), describe(&partition)),
    )
}

fn describe(r: &Result<(), String>) -> String {
    match r {
        Ok(()) => "ok".to_string(),
        Err(e) => e.clone(),
    }
}

fn forumtag(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_forumtag"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn pipeline(dir: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    std::fs::write(
        dir.join("model.json"),
        r#"{"variant": "blstm-crf-ce-ca", "word_dim": 16, "char_dim": 8, "char_hidden": 8, "hidden": 16,
            "context_hidden": 12, "attention_dim": 12, "max_epochs": 4, "batch_size": 8}"#,
    )
    .map_err(|e| e.to_string())?;
    let steps: [&[&str]; 5] = [
        &["synth-gen", "--out-dir", "syn", "--seed", "8", "--train-sentences", "200", "--test-sentences", "60", "--vector-dim", "16"],
        &["dataset-build", "form-m", "--threads", "syn/train.threads.jsonl", "--g1", "syn/train.g1.tsv", "--g2", "syn/train.g2.tsv", "--out", "train.conll"],
        &["dataset-build", "form-l", "--threads", "syn/test.threads.jsonl", "--g1", "syn/test.g1.tsv", "--g2", "syn/test.g2.tsv", "--out", "test.conll"],
        &["train", "--config", "model.json", "--corpus", "train.conll", "--vectors", "syn/vectors.txt", "--out", "model.ckpt", "--seed", "8"],
        &["evaluate", "--model", "model.ckpt", "--corpus", "test.conll", "--vectors", "syn/vectors.txt", "--json", "--out", "report.json"],
    ];
    for step in steps {
        forumtag(dir, step)?;
    }
    let read = |f: &str| std::fs::read(dir.join(f)).map_err(|e| e.to_string());
    Ok((read("report.json")?, read("model.ckpt")?))
}

fn criterion_8() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (pipeline(a.path()), pipeline(b.path())) {
        (Ok((ra, ma)), Ok((rb, mb))) => outcome(
            ra == rb && ma == mb && !ra.is_empty(),
            format!("reports identical {} ({} bytes), checkpoints identical {}", ra == rb, ra.len(), ma == mb),
        ),
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("agreement reproduction", criterion_1),
        ("metric identities", criterion_2),
        ("CRF oracle equivalence", criterion_3),
        ("gradient correctness", criterion_4),
        ("overfit oracle", criterion_5),
        ("direction of effect on synthetic data", criterion_6),
        ("BIO roundtrip and taxonomy partition", criterion_7),
        ("end-to-end determinism", criterion_8),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| outcome(false, "panicked"));
        failed += usize::from(!result.passed);
        let verdict = if result.passed { "PASS" } else { "FAIL" };
        println!("criterion {n} {verdict}: {name}: {}", result.detail);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
