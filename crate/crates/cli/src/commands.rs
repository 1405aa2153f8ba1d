use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use forumtag::agreement::{agreement_table, build_dataset, read_standoff, AgreementCounts, AgreementReport, AgreementTable, MergePolicy};
use forumtag::corpus::{
    bio_decode, read_tagged_corpus, read_threads, split_sentences, unfold_thread, write_tagged_corpus,
    write_threads, Group, ResourceType, Sentence, Tag, TaggedCorpus, TaggedSentence, Thread,
};
use forumtag::encoders::{PretrainedVectors, Vocabulary};
use forumtag::evaluation::{categorize_prediction, evaluate, ErrorCategory, EvaluationReport};
use forumtag::numerics::GradCheckConfig;
use forumtag::synth::{synth_gen, write_synth, SynthSpec};
use forumtag::tagger::{cross_validate, train, FeatureCrf, LexiconPosTagger, Model, NeuralTagger, TaggerConfig, Variant};

use crate::args::{self, Cli, Command, Common, Form, TaggerFlags};
use crate::config::overlay;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Gradient checks at or above this relative error fail.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn run(cli: Cli, extra: Map<String, Value>) -> Result<()> {
    let common = cli.common;
    let takes_settings = matches!(cli.command, Command::Train(_) | Command::Gradcheck(_) | Command::SynthGen(_));
    if !takes_settings {
        if let Some(key) = extra.keys().next() {
            return Err(CliError::invalid(format!("unknown config key '{key}' for this command")));
        }
    }
    match cli.command {
        Command::CorpusBuild(a) => corpus_build(&common, a),
        Command::Agreement(a) => agreement(&common, a),
        Command::DatasetBuild(a) => dataset_build(&common, a),
        Command::Train(a) => train_cmd(&common, a, &extra),
        Command::Evaluate(a) => evaluate_cmd(&common, a),
        Command::Tag(a) => tag(&common, a),
        Command::AnalyzeErrors(a) => analyze_errors(&common, a),
        Command::Gradcheck(a) => gradcheck(&common, a, &extra),
        Command::SynthGen(a) => synth(&common, a, &extra),
    }
}

fn emit(common: &Common, value: &Value, text: String) {
    if common.json {
        println!("{}", serde_json::to_string_pretty(value).expect("json serializes"));
    } else {
        print!("{text}");
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))
}

fn read_vectors(path: Option<&Path>) -> Result<Option<PretrainedVectors>> {
    Ok(path.map(PretrainedVectors::read).transpose()?)
}

fn corpus_build(common: &Common, a: args::CorpusBuild) -> Result<()> {
    let file = fs::File::open(&a.input).map_err(|e| CliError::invalid(format!("cannot open {}: {e}", a.input.display())))?;
    let mut threads = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::invalid(format!("cannot read {}: {e}", a.input.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}:{}", a.input.display(), i + 1);
        let v: Value = serde_json::from_str(&line).map_err(|e| CliError::invalid(format!("{}: {e}", at())))?;
        let id = v.get("thread_id").and_then(Value::as_str);
        let posts = v.get("posts").and_then(Value::as_array);
        let (Some(id), Some(posts)) = (id, posts) else {
            return Err(CliError::invalid(format!("{}: expected 'thread_id' and 'posts'", at())));
        };
        let posts = posts
            .iter()
            .map(|p| p.as_str().map(split_sentences))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| CliError::invalid(format!("{}: every post must be a string", at())))?;
        threads.push(Thread {
            thread_id: id.to_string(),
            course_id: v.get("course_id").and_then(Value::as_str).unwrap_or_default().to_string(),
            posts,
        });
    }
    write_threads(&a.out, &threads)?;
    let corpus = untagged(&threads);
    if let Some(path) = &a.columns {
        write_tagged_corpus(path, &corpus)?;
    }
    let posts: usize = threads.iter().map(|t| t.posts.len()).sum();
    let value = json!({
        "threads": threads.len(),
        "posts": posts,
        "sentences": corpus.len(),
        "tokens": corpus.total_tokens(),
    });
    let text = format!(
        "threads {}  posts {}  sentences {}  tokens {}\n",
        threads.len(),
        posts,
        corpus.len(),
        corpus.total_tokens()
    );
    emit(common, &value, text);
    Ok(())
}

fn untagged(threads: &[Thread]) -> TaggedCorpus {
    TaggedCorpus::new(
        threads
            .iter()
            .flat_map(|t| {
                unfold_thread(t).into_iter().map(|s| TaggedSentence {
                    thread_id: t.thread_id.clone(),
                    tags: vec![Tag::O; s.len()],
                    sentence: s,
                })
            })
            .collect(),
    )
}

fn agreement_text(r: &AgreementReport) -> String {
    let mut s = String::new();
    writeln!(s, "{:<14}{:>8}{:>8}{:>8}{:>8}{:>8}", "type", "G1", "G2", "AG", "union", "P_pos").unwrap();
    let rows = r.per_type.iter().map(|(k, v)| (k.as_str(), v)).chain([("total", &r.total)]);
    for (name, row) in rows {
        let p = row.p_pos.map_or("n/a".to_string(), |p| format!("{p:.3}"));
        writeln!(
            s,
            "{name:<14}{:>8}{:>8}{:>8}{:>8}{p:>8}",
            row.g1_total, row.g2_total, row.counts.ag, row.union
        )
        .unwrap();
    }
    s
}

fn agreement(common: &Common, a: args::Agreement) -> Result<()> {
    let table = match (&a.g1, &a.g2, &a.counts) {
        (Some(g1), Some(g2), None) => {
            let g1 = read_standoff(g1, Group::Group1)?;
            let g2 = read_standoff(g2, Group::Group2)?;
            agreement_table(&g1, &g2)
        }
        (None, None, Some(path)) => table_from_counts(path)?,
        _ => return Err(CliError::invalid("give either --g1 and --g2, or --counts")),
    };
    let report = table.report();
    let value = serde_json::to_value(&report).expect("report serializes");
    if let Some(out) = &a.out {
        write_file(out, &(serde_json::to_string_pretty(&value).expect("json") + "\n"))?;
    }
    emit(common, &value, agreement_text(&report));
    Ok(())
}

fn table_from_counts(path: &Path) -> Result<AgreementTable> {
    let object = crate::config::read_object(path)?;
    let mut table = AgreementTable::default();
    for (key, v) in object {
        let t = ResourceType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(&key))
            .ok_or_else(|| CliError::invalid(format!("{}: unknown resource type '{key}'", path.display())))?;
        let nums: Option<Vec<u64>> = v.as_array().map(|a| a.iter().filter_map(Value::as_u64).collect());
        let Some([g1, g2, inter]) = nums.as_deref().map(|n| <[u64; 3]>::try_from(n).ok()).flatten() else {
            return Err(CliError::invalid(format!(
                "{}: '{key}' must be [group1, group2, intersection]",
                path.display()
            )));
        };
        let c = AgreementCounts::from_totals(g1, g2, inter)?;
        table.per_type.insert(t, c);
        table.total.ag += c.ag;
        table.total.g1_only += c.g1_only;
        table.total.g2_only += c.g2_only;
    }
    Ok(table)
}

fn dataset_build(common: &Common, a: args::DatasetBuild) -> Result<()> {
    let threads = read_threads(&a.threads)?;
    let g1 = read_standoff(&a.g1, Group::Group1)?;
    let g2 = read_standoff(&a.g2, Group::Group2)?;
    let policy = match a.form {
        Form::FormM => MergePolicy::IntersectionM,
        Form::FormL => MergePolicy::UnionL,
    };
    let built = build_dataset(&threads, &g1, &g2, policy)?;
    write_tagged_corpus(&a.out, &built.corpus)?;
    let report = built.agreement.report();
    if let Some(path) = &a.agreement_out {
        write_file(path, &(serde_json::to_string_pretty(&report).expect("json") + "\n"))?;
    }
    for w in &built.warnings {
        eprintln!("warning: {w}");
    }
    let value = json!({
        "sentences": built.corpus.len(),
        "tokens": built.corpus.total_tokens(),
        "mentions": built.mention_count(),
        "warnings": built.warnings.len(),
        "agreement": report,
    });
    let text = format!(
        "sentences {}  tokens {}  mentions {}  warnings {}\n\n{}",
        built.corpus.len(),
        built.corpus.total_tokens(),
        built.mention_count(),
        built.warnings.len(),
        agreement_text(&report)
    );
    emit(common, &value, text);
    Ok(())
}

/// Defaults for the variant, then config-file settings, then flags.
fn tagger_config(base: TaggerConfig, common: &Common, flags: &TaggerFlags, extra: &Map<String, Value>) -> Result<TaggerConfig> {
    let variant = match &flags.variant {
        Some(v) => v.parse::<Variant>()?,
        None => base.variant,
    };
    let mut value = serde_json::to_value(TaggerConfig { variant, ..base }).expect("config serializes");
    overlay(&mut value, extra);
    let mut top = Map::new();
    let mut set = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            top.insert(k.to_string(), v);
        }
    };
    set("variant", Some(json!(variant)));
    set("seed", common.seed.map(Value::from));
    set("max_epochs", flags.max_epochs.map(Value::from));
    set("learning_rate", flags.learning_rate.map(Value::from));
    set("batch_size", flags.batch_size.map(Value::from));
    set("patience", flags.patience.map(Value::from));
    set("word_dim", flags.word_dim.map(Value::from));
    set("hidden", flags.hidden.map(Value::from));
    set("validation_fraction", flags.validation_fraction.map(Value::from));
    overlay(&mut value, &top);
    let config: TaggerConfig =
        serde_json::from_value(value).map_err(|e| CliError::invalid(format!("invalid tagger config: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn train_cmd(common: &Common, a: args::Train, extra: &Map<String, Value>) -> Result<()> {
    let config = tagger_config(TaggerConfig::default(), common, &a.tagger, extra)?;
    let corpus = read_tagged_corpus(&a.corpus)?;
    let vectors = read_vectors(a.vectors.as_deref())?;
    if let Some(path) = &a.save_config {
        write_file(path, &(config.to_json() + "\n"))?;
    }
    let mut value = json!({ "config": config });
    let mut text = String::new();
    if let Some(k) = a.folds {
        let cv = cross_validate(&corpus, &config, vectors.as_ref(), k)?;
        writeln!(text, "{:<6}{:>8}{:>8}{:>8}", "fold", "P", "R", "F1").unwrap();
        let rows = cv.folds.iter().enumerate().map(|(i, p)| ((i + 1).to_string(), p)).chain([("mean".to_string(), &cv.mean)]);
        for (name, p) in rows {
            let pct = |v: f64| format!("{:.2}", 100.0 * v);
            writeln!(text, "{name:<6}{:>8}{:>8}{:>8}", pct(p.precision), pct(p.recall), pct(p.f1)).unwrap();
        }
        value["cross_validation"] = json!({ "folds": cv.folds, "mean": cv.mean });
    }
    if a.out.is_some() || a.folds.is_none() {
        let outcome = train(&corpus, &config, vectors.as_ref())?;
        if let Some(path) = &a.log {
            write_file(path, &outcome.log_jsonl())?;
        }
        if let Some(path) = &a.out {
            outcome.model.save(path)?;
        }
        let best = &outcome.log[outcome.best_epoch - 1];
        writeln!(
            text,
            "variant {}  parameters {}  epochs {}  best epoch {}  {} F1 {:.2}",
            config.variant.name(),
            outcome.model.param_count(),
            outcome.log.len(),
            outcome.best_epoch,
            best.selection,
            100.0 * best.f1
        )
        .unwrap();
        if let Some(c) = &outcome.coverage {
            writeln!(text, "vocabulary {}  with vectors {}  without {}", c.vocab_size, c.covered, c.oov).unwrap();
            value["coverage"] = c.to_json();
        }
        value["parameters"] = json!(outcome.model.param_count());
        value["epochs"] = json!(outcome.log.len());
        value["best_epoch"] = json!(outcome.best_epoch);
        value["best"] = serde_json::to_value(best).expect("log serializes");
    }
    emit(common, &value, text);
    Ok(())
}

fn predictions(model: &Model, corpus: &TaggedCorpus) -> Result<Vec<Vec<Tag>>> {
    Ok(model.tag_corpus(corpus)?.into_iter().map(|p| p.tags).collect())
}

fn oov_predicate(vectors: &Option<PretrainedVectors>) -> Option<impl Fn(&str) -> bool + '_> {
    vectors.as_ref().map(|v| move |w: &str| !v.contains(w))
}

fn evaluate_cmd(common: &Common, a: args::Evaluate) -> Result<()> {
    let model = Model::load(&a.model)?;
    let corpus = read_tagged_corpus(&a.corpus)?;
    let vectors = read_vectors(a.vectors.as_deref())?;
    let pred = predictions(&model, &corpus)?;
    let is_oov = oov_predicate(&vectors);
    let report = evaluate(
        &corpus,
        &pred,
        &model.config().to_json(),
        is_oov.as_ref().map(|f| f as &dyn Fn(&str) -> bool),
    )?;
    let rendered = if common.json { report.to_json() + "\n" } else { report.to_text() };
    if let Some(path) = &a.out {
        write_file(path, &rendered)?;
    }
    print!("{rendered}");
    Ok(())
}

fn tag(common: &Common, a: args::Tag) -> Result<()> {
    let model = Model::load(&a.model)?;
    let threads = read_threads(&a.input)?;
    let mut corpus = untagged(&threads);
    let preds = model.tag_corpus(&corpus)?;
    let mut attention = String::new();
    for (i, (s, p)) in corpus.sentences.iter_mut().zip(&preds).enumerate() {
        s.tags = p.tags.clone();
        if let Some(trace) = &p.attention {
            let line = json!({
                "thread_id": s.thread_id,
                "sentence_index": s.sentence.sentence_index,
                "corpus_index": i,
                "forward": trace.forward,
                "backward": trace.backward,
            });
            attention.push_str(&line.to_string());
            attention.push('\n');
        }
    }
    write_tagged_corpus(&a.out, &corpus)?;
    if let Some(path) = &a.attention {
        write_file(path, &attention)?;
    }
    let mentions: usize = corpus.sentences.iter().map(|s| bio_decode(&s.tags, 0).0.len()).sum();
    let value = json!({ "sentences": corpus.len(), "mentions": mentions });
    emit(common, &value, format!("sentences {}  mentions {}\n", corpus.len(), mentions));
    Ok(())
}

fn analyze_errors(common: &Common, a: args::AnalyzeErrors) -> Result<()> {
    let gold = read_tagged_corpus(&a.gold)?;
    let pred = read_tagged_corpus(&a.pred)?;
    if gold.len() != pred.len() {
        return Err(CliError::invalid(format!(
            "{} has {} sentences but {} has {}",
            a.gold.display(),
            gold.len(),
            a.pred.display(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.sentences.iter().zip(&pred.sentences).enumerate() {
        if !g.sentence.words().eq(p.sentence.words()) {
            return Err(CliError::invalid(format!("sentence {} differs between the gold and predicted files", i + 1)));
        }
    }
    let vectors = read_vectors(a.vectors.as_deref())?;
    let pred_tags: Vec<Vec<Tag>> = pred.sentences.iter().map(|s| s.tags.clone()).collect();
    let is_oov = oov_predicate(&vectors);
    let report = evaluate(&gold, &pred_tags, "", is_oov.as_ref().map(|f| f as &dyn Fn(&str) -> bool))?;

    let mut examples: BTreeMap<ErrorCategory, Vec<Value>> = BTreeMap::new();
    for (s, p) in gold.sentences.iter().zip(&pred_tags) {
        let (gm, _) = bio_decode(&s.tags, 0);
        let (pm, _) = bio_decode(p, 0);
        for pair in categorize_prediction(&gm, &pm) {
            let list = examples.entry(pair.category).or_default();
            if pair.category == ErrorCategory::ExactlyCorrect || list.len() >= a.examples {
                continue;
            }
            let words: Vec<&str> = s.sentence.words().collect();
            let show = |m: &Option<forumtag::corpus::AnnotatedMention>| {
                m.as_ref().map(|m| json!({
                    "text": words[m.span.start..m.span.end].join(" "),
                    "type": m.rtype.coarse().name(),
                }))
            };
            list.push(json!({
                "thread_id": s.thread_id,
                "sentence": words.join(" "),
                "gold": show(&pair.gold),
                "pred": show(&pair.pred),
            }));
        }
    }
    let value = json!({
        "errors": report.errors,
        "mention_level": report.mention_level,
        "oov": report.oov,
        "examples": examples.iter().map(|(c, v)| (c.name().to_string(), Value::from(v.clone()))).collect::<Map<_, _>>(),
    });
    let mut text = errors_text(&report);
    for (c, list) in &examples {
        for e in list {
            let m = |k: &str| match &e[k] {
                Value::Null => "-".to_string(),
                v => format!("[{}] {}", v["type"].as_str().unwrap_or(""), v["text"].as_str().unwrap_or("")),
            };
            writeln!(text, "{:<24} gold {}  pred {}\n{:<24} {}", c.name(), m("gold"), m("pred"), "", e["sentence"].as_str().unwrap_or("")).unwrap();
        }
    }
    emit(common, &value, text);
    Ok(())
}

fn errors_text(report: &EvaluationReport) -> String {
    let full = report.to_text();
    let start = full.find("type ").unwrap_or(0);
    full[start..].to_string() + "\n"
}

fn gradcheck(common: &Common, a: args::Gradcheck, extra: &Map<String, Value>) -> Result<()> {
    let base = TaggerConfig {
        variant: Variant::BlstmCrfCeCa,
        word_dim: 6,
        char_dim: 4,
        char_hidden: 3,
        hidden: 5,
        context_hidden: 4,
        attention_dim: 4,
        min_word_count: 1,
        validation_fraction: 0.0,
        ..Default::default()
    };
    let config = tagger_config(base, common, &a.tagger, extra)?;
    let context = [
        Sentence::from_words(&["I", "watched", "lecture", "3", "video", "."], 0, 0),
        Sentence::from_words(&["the", "quiz", "is", "hard", "."], 1, 1),
    ];
    let sentence = Sentence::from_words(&["this", "video", "rocks"], 2, 2);
    let gold = [Tag::B(ResourceType::Videos), Tag::I(ResourceType::Videos), Tag::O];
    let check = GradCheckConfig {
        h: a.step.unwrap_or(GradCheckConfig::default().h),
        sample_per_param: a.sample,
        seed: config.seed,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let report = if config.variant.is_neural() {
        let words = context.iter().chain([&sentence]).flat_map(|s| s.words());
        let vocab = Vocabulary::build(words, 1, config.lowercase, |_| false);
        let (model, _) = NeuralTagger::new(config.clone(), vocab, None, &mut rng)?;
        let ex = model.encode(&sentence, &[&context[0], &context[1]], Some(&gold));
        model.grad_check(&ex, check)?
    } else {
        let model = FeatureCrf::new(config.clone(), &[&context[0], &context[1], &sentence], Arc::new(LexiconPosTagger))?;
        model.grad_check(&model.encode(&sentence, Some(&gold)), check)?
    };
    let value = json!({
        "variant": config.variant.name(),
        "max_rel_error": report.max_rel_error,
        "checked": report.checked,
        "worst": report.worst.as_ref().map(|(name, i, analytic, numeric)| json!({
            "param": name, "index": i, "analytic": analytic, "numeric": numeric,
        })),
        "tolerance": GRADCHECK_TOLERANCE,
        "passed": report.max_rel_error < GRADCHECK_TOLERANCE,
    });
    let text = format!(
        "variant {}  coordinates {}  max relative error {:.3e}\n",
        config.variant.name(),
        report.checked,
        report.max_rel_error
    );
    emit(common, &value, text);
    if report.max_rel_error >= GRADCHECK_TOLERANCE {
        return Err(CliError::internal(format!(
            "gradient check failed: max relative error {:.3e} is not below {GRADCHECK_TOLERANCE:e}",
            report.max_rel_error
        )));
    }
    Ok(())
}

fn synth(common: &Common, a: args::SynthGen, extra: &Map<String, Value>) -> Result<()> {
    let mut value = serde_json::to_value(SynthSpec::default()).expect("spec serializes");
    overlay(&mut value, extra);
    let mut top = Map::new();
    let mut set = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            top.insert(k.to_string(), v);
        }
    };
    set("seed", common.seed.map(Value::from));
    set("train_sentences", a.train_sentences.map(Value::from));
    set("test_sentences", a.test_sentences.map(Value::from));
    set("oov_rate", a.oov_rate.map(Value::from));
    set("anaphora_rate", a.anaphora_rate.map(Value::from));
    set("distractor_ratio", a.distractor_ratio.map(Value::from));
    set("context_window", a.context_window.map(Value::from));
    set("vector_dim", a.vector_dim.map(Value::from));
    set(
        "perturbation",
        a.perturbation.map(|r| json!({ "drop": r, "span": r, "retype": r, "spurious": r / 2.0 })),
    );
    overlay(&mut value, &top);
    let spec: SynthSpec =
        serde_json::from_value(value).map_err(|e| CliError::invalid(format!("invalid synth spec: {e}")))?;
    let corpus = synth_gen(&spec)?;
    let files = write_synth(&a.out_dir, &corpus)?;
    let spec_path = a.out_dir.join("spec.json");
    write_file(&spec_path, &(serde_json::to_string_pretty(&spec).expect("json") + "\n"))?;
    let names: Vec<String> = files.iter().chain([&spec_path]).map(|p| p.display().to_string()).collect();
    let out = json!({
        "train_sentences": corpus.train.sentence_count(),
        "test_sentences": corpus.test.sentence_count(),
        "train_mentions": corpus.train.group1.len(),
        "test_mentions": corpus.test.group1.len(),
        "files": names,
    });
    let text = format!(
        "train {} sentences, {} mentions; test {} sentences, {} mentions\n{}\n",
        corpus.train.sentence_count(),
        corpus.train.group1.len(),
        corpus.test.sentence_count(),
        corpus.test.group1.len(),
        names.join("\n")
    );
    emit(common, &out, text);
    Ok(())
}
