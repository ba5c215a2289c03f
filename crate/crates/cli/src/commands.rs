use std::collections::{BTreeMap, HashMap};
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use revclean_core::bleu::{self, bleu_report, IdText, StopwordMode, Stopwords};
use revclean_core::cleaning::{apply_clean, sample_controlled, sample_controlled_per_split, valid_ratio, CleanReport};
use revclean_core::corpus::{dataset_stats, parse_dataset, write_dataset, write_rejects, FieldMapping};
use revclean_core::metrics::{confusion, ClassificationReport};
use revclean_core::prediction::{read_predictions, write_predictions, ErrorHandling};
use revclean_core::topics::{annotation_template, build_topic_model, propagate_scores, AnnotationRecord, TopicModel};
use revclean_core::{Dataset, Label, Prediction, Split};
use revclean_gateway::{Backend, BatchOptions, Gateway, HttpBackend, MockBackend, ResponseCache};

use crate::config::{BackendKind, RunConfig};
use crate::manifest::Run;
use crate::{annotate, BackendArgs, Command};

pub(crate) fn dispatch(command: Command, mut cfg: RunConfig, trace: bool) -> Result<()> {
    match command {
        Command::Ingest { input } => ingest(&cfg, &input),
        Command::Classify {
            dataset,
            split,
            instruction,
            input_mode,
            checkpoint,
            stop_after,
            backend,
        } => {
            if let Some(i) = instruction {
                cfg.prompt.instruction = i;
            }
            if let Some(m) = input_mode {
                cfg.prompt.input_mode = m;
            }
            apply_backend_args(&mut cfg, &backend);
            classify(&cfg, &dataset, split, checkpoint, stop_after, trace)
        }
        Command::Clean {
            dataset,
            predictions,
            error_handling,
        } => {
            if let Some(h) = error_handling {
                cfg.error_handling = h;
            }
            clean(&cfg, &dataset, &predictions)
        }
        Command::Control { dataset, clean_report } => control(&cfg, &dataset, &clean_report),
        Command::EvalClassify {
            dataset,
            predictions,
            error_handling,
        } => {
            if let Some(h) = error_handling {
                cfg.error_handling = h;
            }
            eval_classify(&cfg, &dataset, &predictions)
        }
        Command::EvalBleu {
            generations,
            references,
            labels,
            baseline,
            drop_stopwords,
        } => eval_bleu(
            &cfg,
            &generations,
            &references,
            labels.as_deref(),
            baseline.as_deref(),
            drop_stopwords,
        ),
        Command::Cluster {
            generations,
            k,
            min_coherence,
            backend,
        } => {
            if let Some(k) = k {
                cfg.topics.k = k;
            }
            apply_backend_args(&mut cfg, &backend);
            cluster(&cfg, &generations, min_coherence, trace)
        }
        Command::QualityReport { model, annotations } => quality_report(&cfg, &model, &annotations),
        Command::Annotate {
            dataset,
            output,
            split,
            compare_with,
        } => annotate::command(&cfg, &dataset, &output, split, compare_with.as_deref()),
        Command::Sample { dataset, size, split } => sample(&cfg, &dataset, size, split),
    }
}

fn apply_backend_args(cfg: &mut RunConfig, args: &BackendArgs) {
    if let Some(m) = &args.mock {
        cfg.backend = BackendKind::Mock;
        cfg.mock_rules = Some(m.clone());
    }
    if let Some(m) = &args.model {
        cfg.model.model = m.clone();
    }
    if let Some(e) = &args.endpoint {
        cfg.model.endpoint = e.clone();
    }
}

fn start(command: &str, cfg: &RunConfig) -> Result<Run> {
    Run::new(command, &cfg.out, cfg.seed, cfg.manifest_view())
}

pub(crate) fn load_dataset(run: &mut Run, path: &Path, fields: &FieldMapping) -> Result<Dataset> {
    let bytes = run.read_input(path)?;
    let outcome = parse_dataset(Cursor::new(bytes), fields)?;
    if !outcome.rejects.is_empty() {
        log::warn!(
            "{}: {} record(s) rejected; run `ingest` to see them",
            path.display(),
            outcome.rejects.len()
        );
    }
    Ok(outcome.dataset)
}

fn select_split(dataset: Dataset, split: Option<Split>) -> Dataset {
    match split {
        Some(s) => dataset.split(s),
        None => dataset,
    }
}

fn dataset_bytes(dataset: &Dataset, fields: &FieldMapping) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_dataset(dataset, &mut buf, fields)?;
    Ok(buf)
}

fn load_predictions(run: &mut Run, path: &Path) -> Result<Vec<Prediction>> {
    let bytes = run.read_input(path)?;
    read_predictions(Cursor::new(bytes)).with_context(|| format!("reading {}", path.display()))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(bytes: &[u8], what: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in String::from_utf8_lossy(bytes).lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).with_context(|| format!("{} line {}", what.display(), i + 1))?);
    }
    Ok(out)
}

fn jsonl_bytes<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn ingest(cfg: &RunConfig, input: &Path) -> Result<()> {
    let mut run = start("ingest", cfg)?;
    let bytes = run.read_input(input)?;
    let outcome = parse_dataset(Cursor::new(bytes), &cfg.fields)?;
    let stats = dataset_stats(&outcome.dataset);
    run.write_output("dataset.jsonl", &dataset_bytes(&outcome.dataset, &cfg.fields)?)?;
    let mut rejects = Vec::new();
    write_rejects(&outcome.rejects, &mut rejects)?;
    run.write_output("rejects.jsonl", &rejects)?;
    run.param("defaulted_lang", outcome.defaulted_lang);
    run.param("defaulted_split", outcome.defaulted_split);
    run.write_json("stats.json", &stats)?;
    run.write_output("stats.txt", stats.to_string().as_bytes())?;
    run.finish()?;
    println!("accepted {} record(s), rejected {}", outcome.dataset.len(), outcome.rejects.len());
    print!("{stats}");
    Ok(())
}

fn make_backend(cfg: &RunConfig, run: &mut Run, trace: bool) -> Result<Arc<dyn Backend>> {
    Ok(match cfg.backend {
        BackendKind::Mock => {
            let path = cfg
                .mock_rules
                .as_ref()
                .context("the mock backend needs a rule file (`--mock` or `mock_rules`)")?;
            let bytes = run.read_input(path)?;
            let text = String::from_utf8(bytes).context("mock rules must be UTF-8")?;
            Arc::new(MockBackend::from_json(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        BackendKind::Http => Arc::new(HttpBackend::new(cfg.model.clone(), trace)?),
    })
}

fn make_gateway(cfg: &RunConfig, run: &mut Run, trace: bool) -> Result<Gateway> {
    let backend = make_backend(cfg, run, trace)?;
    let cache_path = cfg.cache.clone().unwrap_or_else(|| run.path("cache.jsonl"));
    let cache = ResponseCache::open(&cache_path).with_context(|| format!("opening cache {}", cache_path.display()))?;
    Ok(Gateway::new(backend, cache, cfg.model.clone())?)
}

#[derive(Serialize)]
struct ClassifySummary {
    total: usize,
    valid: usize,
    noisy: usize,
    errors: usize,
    model: String,
    prompt_variant: String,
}

fn classify(
    cfg: &RunConfig,
    dataset: &Path,
    split: Option<Split>,
    checkpoint: Option<PathBuf>,
    stop_after: Option<usize>,
    trace: bool,
) -> Result<()> {
    let mut run = start("classify", cfg)?;
    let prompt = cfg.prompt_config()?;
    let ds = select_split(load_dataset(&mut run, dataset, &cfg.fields)?, split);
    let gateway = make_gateway(cfg, &mut run, trace)?;
    let checkpoint = checkpoint.unwrap_or_else(|| run.path("checkpoint.jsonl"));
    run.param("split", split);
    run.param("prompt_variant", prompt.variant_name());

    let outcome = gateway.classify_batch(
        &ds,
        &prompt,
        &BatchOptions {
            parallelism: cfg.parallelism,
            checkpoint: Some(checkpoint.clone()),
            stop_after,
        },
    )?;
    eprintln!(
        "classified {}/{} (resumed {}, new {}); requests issued: {}",
        outcome.predictions.len(),
        ds.len(),
        outcome.resumed,
        outcome.completed_now,
        gateway.requests()
    );
    if !outcome.complete {
        println!(
            "stopped early; progress saved in {}, rerun the same command to resume",
            checkpoint.display()
        );
        return Ok(());
    }

    let preds = outcome.predictions;
    let mut buf = Vec::new();
    write_predictions(&preds, &mut buf)?;
    run.write_output("predictions.jsonl", &buf)?;
    let summary = ClassifySummary {
        total: preds.len(),
        valid: preds.iter().filter(|p| p.label == Some(Label::Valid)).count(),
        noisy: preds.iter().filter(|p| p.label == Some(Label::Noisy)).count(),
        errors: preds.iter().filter(|p| p.is_error()).count(),
        model: cfg.model.model.clone(),
        prompt_variant: prompt.variant_name(),
    };
    run.write_json("classify_summary.json", &summary)?;
    run.finish()?;
    println!(
        "{} predictions: {} valid, {} noisy, {} error-marked",
        summary.total, summary.valid, summary.noisy, summary.errors
    );
    Ok(())
}

fn clean(cfg: &RunConfig, dataset: &Path, predictions: &Path) -> Result<()> {
    let mut run = start("clean", cfg)?;
    let ds = load_dataset(&mut run, dataset, &cfg.fields)?;
    let preds = load_predictions(&mut run, predictions)?;
    let (cleaned, report) = apply_clean(&ds, &preds, cfg.error_handling)?;
    run.write_output("cleaned.jsonl", &dataset_bytes(&cleaned, &cfg.fields)?)?;
    run.write_json("clean_report.json", &report)?;
    run.write_output("clean_report.txt", report.to_string().as_bytes())?;
    run.finish()?;
    print!("{report}");
    Ok(())
}

fn split_report(input: &Dataset, kept: &Dataset, model: &str, variant: &str, seed: Option<u64>) -> CleanReport {
    let mut per_split = BTreeMap::new();
    for s in [Split::Train, Split::Validation, Split::Test] {
        let n_in = input.split(s).len();
        if n_in == 0 {
            continue;
        }
        let n_kept = kept.split(s).len();
        per_split.insert(
            s,
            revclean_core::cleaning::SplitCounts {
                input: n_in,
                retained: n_kept,
                removed: n_in - n_kept,
            },
        );
    }
    CleanReport {
        input: input.len(),
        retained: kept.len(),
        removed: input.len() - kept.len(),
        retained_ratio: if input.is_empty() {
            0.0
        } else {
            kept.len() as f64 / input.len() as f64
        },
        per_split,
        error_marked: 0,
        error_handling: ErrorHandling::default(),
        model: model.to_string(),
        prompt_variant: variant.to_string(),
        seed,
    }
}

fn control(cfg: &RunConfig, dataset: &Path, clean_report: &Path) -> Result<()> {
    let mut run = start("control", cfg)?;
    let ds = load_dataset(&mut run, dataset, &cfg.fields)?;
    let report: CleanReport = serde_json::from_slice(&run.read_input(clean_report)?)
        .with_context(|| format!("parsing {}", clean_report.display()))?;
    let targets: BTreeMap<Split, usize> = report.per_split.iter().map(|(s, c)| (*s, c.retained)).collect();
    run.param("targets", &targets);
    let controlled = sample_controlled_per_split(&ds, &targets, cfg.seed)?;
    let name = format!("controlled-seed{}.jsonl", cfg.seed);
    run.write_output(&name, &dataset_bytes(&controlled, &cfg.fields)?)?;
    let summary = split_report(&ds, &controlled, "random", "controlled", Some(cfg.seed));
    run.write_json("control_report.json", &summary)?;
    run.finish()?;
    print!("{summary}");
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    file: String,
    report: ClassificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    valid_ratio: Option<revclean_core::cleaning::ValidRatio>,
}

fn eval_classify(cfg: &RunConfig, dataset: &Path, prediction_files: &[PathBuf]) -> Result<()> {
    let mut run = start("eval-classify", cfg)?;
    let ds = load_dataset(&mut run, dataset, &cfg.fields)?;
    let gold: Vec<(&str, Label)> = ds.iter().filter_map(|i| i.gold_label.map(|l| (i.id.as_str(), l))).collect();
    if gold.is_empty() {
        bail!("{} has no gold labels", dataset.display());
    }
    if gold.len() < ds.len() {
        log::warn!("{} instance(s) without gold labels ignored", ds.len() - gold.len());
    }

    let gold_labels: Vec<Label> = gold.iter().map(|(_, l)| *l).collect();
    let baseline = ClassificationReport::new("Baseline", confusion(&gold_labels, &vec![Label::Valid; gold.len()])?);
    let mut rows = vec![EvalRow {
        file: String::new(),
        report: baseline,
        valid_ratio: None,
    }];

    for path in prediction_files {
        let preds = load_predictions(&mut run, path)?;
        let by_id: HashMap<&str, &Prediction> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
        let mut g = Vec::with_capacity(gold.len());
        let mut p = Vec::with_capacity(gold.len());
        let mut excluded = 0;
        for (id, label) in &gold {
            let pred = by_id
                .get(id)
                .with_context(|| format!("{} has no prediction for `{id}`", path.display()))?;
            match pred.resolved(cfg.error_handling) {
                Some(l) => {
                    g.push(*label);
                    p.push(l);
                }
                None => excluded += 1,
            }
        }
        let name = preds
            .first()
            .map(|p| format!("{} {}", p.model, p.prompt_variant))
            .unwrap_or_default();
        let mut report = ClassificationReport::new(name, confusion(&g, &p)?);
        report.excluded = excluded;
        rows.push(EvalRow {
            file: path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            valid_ratio: valid_ratio(&p, &g).ok(),
            report,
        });
    }

    let mut table = String::new();
    table.push_str(&format!(
        "{:<20} | {:^17} | {:^22} | {:^22}\n",
        "", "Overall", "Valid", "Noisy"
    ));
    table.push_str(&ClassificationReport::header());
    table.push('\n');
    for r in &rows {
        table.push_str(&r.report.to_string());
        table.push('\n');
    }
    for r in rows.iter().filter(|r| r.valid_ratio.is_some()) {
        let v = r.valid_ratio.expect("filtered");
        table.push_str(&format!(
            "valid ratio {}: {:.1}% vs {:.1}% ({:+.1} points)\n",
            r.report.name,
            v.ratio * 100.0,
            v.baseline * 100.0,
            v.delta * 100.0
        ));
    }
    run.write_json("eval_classify.json", &rows)?;
    run.write_output("eval_classify.txt", table.as_bytes())?;
    run.finish()?;
    print!("{table}");
    Ok(())
}

fn eval_bleu(
    cfg: &RunConfig,
    generations: &Path,
    references: &Path,
    labels: Option<&Path>,
    baseline: Option<&Path>,
    drop_stopwords: bool,
) -> Result<()> {
    let mut run = start("eval-bleu", cfg)?;
    let mode = if drop_stopwords {
        StopwordMode::DropStopwords
    } else {
        StopwordMode::KeepStopwords
    };
    run.param("mode", mode);
    let stopwords = Stopwords::default();
    let gens = bleu::read_generations(Cursor::new(run.read_input(generations)?))?;
    let refs = bleu::read_generations(Cursor::new(run.read_input(references)?))?;
    let subset_labels = match labels {
        Some(p) => bleu::read_subset_labels(Cursor::new(run.read_input(p)?))?,
        None => Vec::new(),
    };
    let base = match baseline {
        Some(p) => {
            let b: Vec<IdText> = bleu::read_generations(Cursor::new(run.read_input(p)?))?;
            Some(bleu_report(&b, &refs, &subset_labels, None, mode, &stopwords)?)
        }
        None => None,
    };
    let report = bleu_report(&gens, &refs, &subset_labels, base.as_ref(), mode, &stopwords)?;
    run.write_json("bleu_report.json", &report)?;
    run.write_output("bleu_report.txt", report.to_string().as_bytes())?;
    run.finish()?;
    print!("{report}");
    Ok(())
}

fn cluster(cfg: &RunConfig, generations: &Path, min_coherence: f64, trace: bool) -> Result<()> {
    let mut run = start("cluster", cfg)?;
    run.param("min_coherence", min_coherence);
    let gens = bleu::read_generations(Cursor::new(run.read_input(generations)?))?;
    let gateway = make_gateway(cfg, &mut run, trace)?;
    let ids: Vec<String> = gens.iter().map(|g| g.id.clone()).collect();
    let texts: Vec<String> = gens.iter().map(|g| g.text.clone()).collect();
    let embeddings = gateway.embed_texts(&texts)?;
    let model = build_topic_model(&ids, &texts, &embeddings, cfg.topics.k, &Stopwords::default())?;

    let by_id: HashMap<String, String> = gens.into_iter().map(|g| (g.id, g.text)).collect();
    let template = annotation_template(&model, &by_id);
    run.write_json("topic_model.json", &model)?;
    run.write_output("annotations_template.jsonl", &jsonl_bytes(&template)?)?;

    let mut summary = String::new();
    summary.push_str(&format!("{:>7} {:>6} {:>9}  top terms\n", "cluster", "size", "coherence"));
    for t in &model.topics {
        let coh = t.coherence.map_or("n/a".to_string(), |c| format!("{c:.3}"));
        summary.push_str(&format!(
            "{:>7} {:>6} {:>9}  {}\n",
            t.cluster,
            t.size,
            coh,
            t.top_terms.join(" ")
        ));
    }
    match model.mean_coherence {
        Some(m) => summary.push_str(&format!(
            "mean coherence {m:.3} ({} threshold {min_coherence})\n",
            if m >= min_coherence { "meets" } else { "below" }
        )),
        None => summary.push_str("mean coherence n/a (no cluster had two weighted terms)\n"),
    }
    run.write_output("topics.txt", summary.as_bytes())?;
    run.finish()?;
    print!("{summary}");
    Ok(())
}

fn quality_report(cfg: &RunConfig, model: &Path, annotations: &Path) -> Result<()> {
    let mut run = start("quality-report", cfg)?;
    let topic_model: TopicModel = serde_json::from_slice(&run.read_input(model)?)
        .with_context(|| format!("parsing {}", model.display()))?;
    let records: Vec<AnnotationRecord> = read_jsonl(&run.read_input(annotations)?, annotations)?;
    let scores = propagate_scores(&topic_model, &records)?;
    run.write_json("quality.json", &scores)?;
    run.write_output("quality.txt", scores.to_string().as_bytes())?;
    run.finish()?;
    print!("{scores}");
    Ok(())
}

fn sample(cfg: &RunConfig, dataset: &Path, size: usize, split: Option<Split>) -> Result<()> {
    let mut run = start("sample", cfg)?;
    run.param("size", size);
    run.param("split", split);
    let ds = select_split(load_dataset(&mut run, dataset, &cfg.fields)?, split);
    let picked = sample_controlled(&ds, size, cfg.seed)?;
    let name = format!("sample-seed{}.jsonl", cfg.seed);
    run.write_output(&name, &dataset_bytes(&picked, &cfg.fields)?)?;
    run.finish()?;
    println!("sampled {} of {} instance(s) into {name}", picked.len(), ds.len());
    Ok(())
}
