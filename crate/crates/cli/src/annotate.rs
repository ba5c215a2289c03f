//! Manual labeling session with resumable decision files.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, BufRead, IsTerminal, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use revclean_core::metrics::cohens_kappa;
use revclean_core::{Dataset, Label, ReviewInstance, Split};

use crate::config::RunConfig;
use crate::manifest::{write_atomic, Run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Valid,
    Noisy,
    Skip,
}

impl Decision {
    pub fn label(self) -> Option<Label> {
        match self {
            Decision::Valid => Some(Label::Valid),
            Decision::Noisy => Some(Label::Noisy),
            Decision::Skip => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub id: String,
    pub label: Decision,
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("decision file {path} cannot be resumed: {reason}")]
    ResumeCorrupt { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Key {
    Valid,
    Noisy,
    Skip,
    Back,
    Quit,
}

impl Key {
    fn from_char(c: char) -> Option<Key> {
        match c.to_ascii_lowercase() {
            'v' => Some(Key::Valid),
            'n' => Some(Key::Noisy),
            's' => Some(Key::Skip),
            'b' => Some(Key::Back),
            'q' => Some(Key::Quit),
            _ => None,
        }
    }
}

/// Source of annotator keystrokes. `None` means input ended.
pub trait KeySource {
    fn next_key(&mut self) -> io::Result<Option<Key>>;
}

/// Reads one command per line; unknown lines are ignored.
pub struct LineKeys<R>(pub R);

impl<R: BufRead> KeySource for LineKeys<R> {
    fn next_key(&mut self) -> io::Result<Option<Key>> {
        loop {
            let mut line = String::new();
            if self.0.read_line(&mut line)? == 0 {
                return Ok(None);
            }
            if let Some(k) = line.trim().chars().next().and_then(Key::from_char) {
                return Ok(Some(k));
            }
        }
    }
}

/// Single keystrokes from a terminal in raw mode.
pub struct TerminalKeys;

impl KeySource for TerminalKeys {
    fn next_key(&mut self) -> io::Result<Option<Key>> {
        use crossterm::event::{read, Event, KeyCode, KeyEventKind, KeyModifiers};
        crossterm::terminal::enable_raw_mode()?;
        let result = loop {
            match read() {
                Ok(Event::Key(ev)) if ev.kind == KeyEventKind::Press => {
                    if ev.modifiers.contains(KeyModifiers::CONTROL) && ev.code == KeyCode::Char('c') {
                        break Ok(Some(Key::Quit));
                    }
                    if let KeyCode::Char(c) = ev.code {
                        if let Some(k) = Key::from_char(c) {
                            break Ok(Some(k));
                        }
                    }
                }
                Ok(_) => {}
                Err(e) => break Err(e),
            }
        };
        crossterm::terminal::disable_raw_mode()?;
        result
    }
}

/// Reads a decision file. Missing file means no decisions yet.
pub fn load_decisions(path: &Path, dataset: &Dataset) -> Result<Vec<DecisionRecord>, AnnotateError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let corrupt = |reason: String| AnnotateError::ResumeCorrupt {
        path: path.display().to_string(),
        reason,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DecisionRecord =
            serde_json::from_str(line).map_err(|e| corrupt(format!("line {}: {e}", i + 1)))?;
        if !dataset.contains(&rec.id) {
            return Err(corrupt(format!("line {}: unknown id `{}`", i + 1, rec.id)));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(corrupt(format!("line {}: duplicate id `{}`", i + 1, rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

fn save(path: &Path, dataset: &Dataset, decisions: &BTreeMap<String, Decision>) -> Result<()> {
    let mut buf = Vec::new();
    for inst in dataset {
        if let Some(d) = decisions.get(&inst.id) {
            serde_json::to_writer(
                &mut buf,
                &DecisionRecord {
                    id: inst.id.clone(),
                    label: *d,
                },
            )?;
            buf.push(b'\n');
        }
    }
    write_atomic(path, &buf)
}

fn show(out: &mut dyn Write, inst: &ReviewInstance, pos: usize, total: usize) -> io::Result<()> {
    writeln!(out, "\n[{}/{}] {} ({}, {})", pos + 1, total, inst.id, inst.lang, inst.split)?;
    writeln!(out, "{}", inst.patch)?;
    writeln!(out, "comment: {}", inst.comment)?;
    write!(out, "v=valid n=noisy s=skip b=back q=quit > ")?;
    out.flush()
}

/// Runs a session and returns the number of decided instances.
pub fn session(
    dataset: &Dataset,
    path: &Path,
    keys: &mut dyn KeySource,
    out: &mut dyn Write,
) -> Result<usize> {
    let mut decisions: BTreeMap<String, Decision> = load_decisions(path, dataset)?
        .into_iter()
        .map(|r| (r.id, r.label))
        .collect();
    let instances = dataset.instances();
    let mut pos = instances
        .iter()
        .position(|i| !decisions.contains_key(&i.id))
        .unwrap_or(instances.len());
    if pos > 0 {
        writeln!(out, "resuming at {} of {}", pos + 1, instances.len())?;
    }
    while pos < instances.len() {
        let inst = &instances[pos];
        show(out, inst, pos, instances.len())?;
        let decision = match keys.next_key()? {
            None | Some(Key::Quit) => break,
            Some(Key::Back) => {
                pos = pos.saturating_sub(1);
                continue;
            }
            Some(Key::Valid) => Decision::Valid,
            Some(Key::Noisy) => Decision::Noisy,
            Some(Key::Skip) => Decision::Skip,
        };
        decisions.insert(inst.id.clone(), decision);
        save(path, dataset, &decisions)?;
        pos += 1;
        while pos < instances.len() && decisions.contains_key(&instances[pos].id) {
            pos += 1;
        }
    }
    writeln!(out, "\n{} of {} decided", decisions.len(), instances.len())?;
    Ok(decisions.len())
}

#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    pub compared: usize,
    pub agreed: usize,
    pub kappa: f64,
}

/// Cohen's kappa over instances both annotators labeled valid or noisy.
pub fn agreement(a: &[DecisionRecord], b: &[DecisionRecord]) -> Result<AgreementReport> {
    let other: BTreeMap<&str, Decision> = b.iter().map(|r| (r.id.as_str(), r.label)).collect();
    let mut la = Vec::new();
    let mut lb = Vec::new();
    for r in a {
        if let (Some(x), Some(y)) = (r.label.label(), other.get(r.id.as_str()).and_then(|d| d.label())) {
            la.push(x);
            lb.push(y);
        }
    }
    let kappa = cohens_kappa(&la, &lb)?;
    Ok(AgreementReport {
        compared: la.len(),
        agreed: la.iter().zip(&lb).filter(|(x, y)| x == y).count(),
        kappa,
    })
}

pub(crate) fn command(
    cfg: &RunConfig,
    dataset: &Path,
    output: &Path,
    split: Option<Split>,
    compare_with: Option<&Path>,
) -> Result<()> {
    let mut run = Run::new("annotate", &cfg.out, cfg.seed, cfg.manifest_view())?;
    let ds = crate::commands::load_dataset(&mut run, dataset, &cfg.fields)?;
    let ds = match split {
        Some(s) => ds.split(s),
        None => ds,
    };

    if let Some(other) = compare_with {
        let a = load_decisions(output, &ds)?;
        let b = load_decisions(other, &ds)?;
        let report = agreement(&a, &b).context("computing agreement")?;
        run.read_input(output)?;
        run.read_input(other)?;
        run.write_json("agreement.json", &report)?;
        run.finish()?;
        println!(
            "kappa {:.3} over {} shared label(s), {} agreed",
            report.kappa, report.compared, report.agreed
        );
        return Ok(());
    }

    let stdin = io::stdin();
    let mut stdout = io::stdout();
    if stdin.is_terminal() {
        session(&ds, output, &mut TerminalKeys, &mut stdout)?;
    } else {
        session(&ds, output, &mut LineKeys(stdin.lock()), &mut stdout)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(n: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| ReviewInstance::new(format!("a{i}"), "@@ -1 +1 @@\n-x\n+y\n", format!("comment {i}")))
                .collect(),
        )
        .unwrap()
    }

    fn keys(s: &str) -> LineKeys<&[u8]> {
        LineKeys(s.as_bytes())
    }

    #[test]
    fn quit_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = dataset(6);
        let mut sink = Vec::new();
        assert_eq!(session(&ds, &path, &mut keys("v\nn\ns\nq\n"), &mut sink).unwrap(), 3);
        let saved = load_decisions(&path, &ds).unwrap();
        assert_eq!(saved.len(), 3);
        assert_eq!(saved[2].label, Decision::Skip);

        let mut sink = Vec::new();
        session(&ds, &path, &mut keys("v\nq\n"), &mut sink).unwrap();
        let text = String::from_utf8(sink).unwrap();
        assert!(text.contains("resuming at 4 of 6"));
        assert!(text.contains("[4/6] a3"));
        let saved = load_decisions(&path, &ds).unwrap();
        assert_eq!(saved.len(), 4);
        assert_eq!(saved[3].id, "a3");
    }

    #[test]
    fn back_revises_previous() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = dataset(3);
        session(&ds, &path, &mut keys("v\nb\nn\nv\nv\n"), &mut Vec::new()).unwrap();
        let saved = load_decisions(&path, &ds).unwrap();
        let labels: Vec<Decision> = saved.iter().map(|r| r.label).collect();
        assert_eq!(labels, vec![Decision::Noisy, Decision::Valid, Decision::Valid]);
    }

    #[test]
    fn corrupt_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = dataset(2);
        std::fs::write(&path, "{\"id\":\"zz\",\"label\":\"valid\"}\n").unwrap();
        assert!(matches!(load_decisions(&path, &ds), Err(AnnotateError::ResumeCorrupt { .. })));
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(load_decisions(&path, &ds), Err(AnnotateError::ResumeCorrupt { .. })));
    }

    #[test]
    fn identical_files_agree_perfectly() {
        let recs: Vec<DecisionRecord> = [Decision::Valid, Decision::Noisy, Decision::Skip, Decision::Valid]
            .iter()
            .enumerate()
            .map(|(i, d)| DecisionRecord {
                id: format!("a{i}"),
                label: *d,
            })
            .collect();
        let r = agreement(&recs, &recs).unwrap();
        assert_eq!(r.compared, 3);
        assert_eq!(r.kappa, 1.0);
    }
}
