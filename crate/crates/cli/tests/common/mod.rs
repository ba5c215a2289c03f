#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use revclean_core::corpus::{write_dataset, FieldMapping};
use revclean_core::fixtures::{eval_mock_rules, ConfusionSpec};
use revclean_core::Dataset;
use revclean_gateway::{MockRule, MockSpec};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_revclean"));
    // any accidental HTTP use fails fast instead of reaching a network
    c.env_remove("LLM_API_KEY");
    c.env("NO_PROXY", "*");
    c
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "revclean {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn write_ds(path: &Path, ds: &Dataset) {
    let mut buf = Vec::new();
    write_dataset(ds, &mut buf, &FieldMapping::default()).unwrap();
    fs::write(path, buf).unwrap();
}

pub fn write_mock(path: &Path, spec: &ConfusionSpec) {
    let rules = eval_mock_rules(spec)
        .into_iter()
        .map(|(contains, response)| MockRule { contains, response })
        .collect();
    let spec = MockSpec {
        rules,
        default: "I cannot tell.".into(),
    };
    fs::write(path, serde_json::to_vec(&spec).unwrap()).unwrap();
}

/// `requests issued: N` from a classify run's stderr.
pub fn requests_issued(out: &Output) -> usize {
    let err = String::from_utf8_lossy(&out.stderr);
    let tail = err
        .split("requests issued: ")
        .nth(1)
        .unwrap_or_else(|| panic!("no request count in:\n{err}"));
    tail.split_whitespace().next().unwrap().parse().unwrap()
}

/// Relative path to contents for every file under `dir`.
pub fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// classify → clean → eval-classify under `root`. Returns the request
/// count of the classify step. The cache and checkpoint live in `root/work`.
pub fn pipeline(root: &Path, dataset: &Path, mock: &Path, parallelism: usize) -> usize {
    let work = root.join("work");
    let classify = root.join("artifacts/classify");
    let clean = root.join("artifacts/clean");
    let eval = root.join("artifacts/eval");
    let par = parallelism.to_string();
    let out = run_ok(&[
        "classify",
        "--dataset",
        s(dataset),
        "--mock",
        s(mock),
        "--out",
        s(&classify),
        "--parallelism",
        &par,
        "--checkpoint",
        s(&work.join("checkpoint.jsonl")),
        "--config",
        s(&cache_config(root, &work)),
    ]);
    let preds = classify.join("predictions.jsonl");
    run_ok(&["clean", "--dataset", s(dataset), "--predictions", s(&preds), "--out", s(&clean)]);
    run_ok(&["eval-classify", "--dataset", s(dataset), "--predictions", s(&preds), "--out", s(&eval)]);
    requests_issued(&out)
}

fn cache_config(root: &Path, work: &Path) -> PathBuf {
    fs::create_dir_all(work).unwrap();
    let path = root.join("run.toml");
    fs::write(
        &path,
        format!(
            "cache = {:?}\n[model]\nendpoint = \"http://127.0.0.1:9/v1\"\n",
            s(&work.join("cache.jsonl"))
        ),
    )
    .unwrap();
    path
}
