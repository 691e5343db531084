//! Evaluation runs: fan requests out to a model source, log every response,
//! then score the log against the manifest.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use log::{info, warn};
use pointcount_core::metrics::{score, MetricReport, MetricTally, DEFAULT_TAU};
use pointcount_core::prompt::GenerationBudget;
use pointcount_core::{Approach, ParsedResponse};
use serde::{Deserialize, Serialize};

use crate::manifest::{read_jsonl, write_jsonl, ManifestRecord};
use crate::report::{write_cell_csv, write_count_csv, write_summary_csv, SummaryRow};
use crate::source::{responder, ModelSpec, Offline, Request};
use crate::Error;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const META_FILE: &str = "run.json";

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub manifest: PathBuf,
    /// Directory that image paths are relative to.
    pub root: PathBuf,
    pub model: ModelSpec,
    pub approach: Approach,
    pub finetuned: bool,
    pub max_tokens: Option<u32>,
    pub concurrency: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub tau: f64,
    pub limit: Option<usize>,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, model: ModelSpec, approach: Approach, out: impl Into<PathBuf>) -> Self {
        let manifest = manifest.into();
        let root = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig {
            manifest,
            root,
            model,
            approach,
            finetuned: false,
            max_tokens: None,
            concurrency: 1,
            out: out.into(),
            seed: 0,
            tau: DEFAULT_TAU,
            limit: None,
        }
    }

    fn budget(&self) -> u32 {
        self.max_tokens.unwrap_or_else(|| GenerationBudget::STANDARD.max_new_tokens(self.approach, self.finetuned))
    }

    pub fn split_name(&self) -> String {
        self.manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("split").to_owned()
    }
}

/// One logged request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub request_digest: String,
    /// Model output after any prefill.
    pub response: String,
    pub parsed: ParsedResponse,
    pub latency_ms: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub split: String,
    pub manifest: String,
    pub model: String,
    pub approach: Approach,
    pub seed: u64,
    pub tau: f64,
    pub max_tokens: u32,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: MetricReport,
    pub requested: usize,
    pub resumed: usize,
    pub errors: usize,
}

fn read_log(path: &Path) -> Result<Vec<RunRecord>, Error> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        // A torn final line from an interrupted run is dropped and redone.
        match serde_json::from_str::<RunRecord>(&line) {
            Ok(r) => out.push(r),
            Err(_) if !line.trim().is_empty() => warn!("skipping unreadable log line in {}", path.display()),
            Err(_) => {}
        }
    }
    Ok(out)
}

/// Drops a torn final line so appended records start on a fresh line.
fn repair_log(path: &Path) -> Result<(), Error> {
    let Ok(bytes) = std::fs::read(path) else { return Ok(()) };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
    f.set_len(keep as u64).map_err(|e| Error::io(path, e))
}

fn full_text(rec: &ManifestRecord, response: &str) -> String {
    match &rec.prefill {
        Some(p) => format!("{p}{response}"),
        None => response.to_owned(),
    }
}

/// Runs (or resumes) an evaluation and writes its report files into `cfg.out`.
pub fn evaluate(cfg: &RunConfig) -> Result<RunOutcome, Error> {
    let mut records: Vec<ManifestRecord> = read_jsonl(&cfg.manifest)?;
    if let Some(n) = cfg.limit {
        records.truncate(n);
    }
    if let ModelSpec::Offline(path) = &cfg.model {
        if let Some(id) = Offline::load(path)?.first_missing(&records) {
            return Err(Error::OfflineMissingResponse(id));
        }
    }
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let log_path = cfg.out.join(RECORDS_FILE);
    repair_log(&log_path)?;
    let done: HashSet<String> = read_log(&log_path)?.into_iter().map(|r| r.id).collect();
    let pending: Vec<&ManifestRecord> = records.iter().filter(|r| !done.contains(&r.id)).collect();
    let resumed = records.len() - pending.len();
    if resumed > 0 {
        info!("resuming: {resumed} samples already logged");
    }

    let model_name = cfg.model.name();
    let budget = cfg.budget();
    let source = responder(&cfg.model, &cfg.root, cfg.seed)?;
    let source = source.as_ref();
    let log_file = OpenOptions::new().create(true).append(true).open(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(log_file);
    let next = AtomicUsize::new(0);
    let workers = cfg.concurrency.max(1).min(pending.len().max(1));
    let (tx, rx) = mpsc::sync_channel::<RunRecord>(workers * 4);
    let mut errors = 0;

    thread::scope(|scope| -> Result<(), Error> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (pending, next, model_name) = (&pending, &next, &model_name);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(rec) = pending.get(i) else { break };
                let req = Request::new(rec, cfg.approach, budget);
                let start = Instant::now();
                let result = source.respond(&req);
                let latency_ms = start.elapsed().as_secs_f64() * 1e3;
                let (response, error) = match result {
                    Ok(text) => (text, None),
                    Err(e) => (String::new(), Some(e.to_string())),
                };
                let parsed = ParsedResponse::parse(&full_text(rec, &response), cfg.approach);
                let run = RunRecord { id: rec.id.clone(), request_digest: req.digest(model_name), response, parsed, latency_ms, error };
                if tx.send(run).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for run in rx {
            errors += usize::from(run.error.is_some());
            serde_json::to_writer(&mut log, &run).map_err(|e| Error::Manifest(e.to_string()))?;
            log.write_all(b"\n").map_err(|e| Error::io(&log_path, e))?;
            log.flush().map_err(|e| Error::io(&log_path, e))?;
        }
        Ok(())
    })?;
    drop(log);

    let report = score_run(cfg, &records)?;
    let meta = RunMeta {
        split: cfg.split_name(),
        manifest: cfg.manifest.display().to_string(),
        model: model_name,
        approach: cfg.approach,
        seed: cfg.seed,
        tau: cfg.tau,
        max_tokens: budget,
    };
    write_outputs(&cfg.out, &meta, &report)?;
    Ok(RunOutcome { report, requested: pending.len(), resumed, errors })
}

/// Scores the logged responses in manifest order.
pub fn score_run(cfg: &RunConfig, records: &[ManifestRecord]) -> Result<MetricReport, Error> {
    let mut by_id: BTreeMap<String, RunRecord> = BTreeMap::new();
    for r in read_log(&cfg.out.join(RECORDS_FILE))? {
        by_id.entry(r.id.clone()).or_insert(r);
    }
    let mut tally = MetricTally::new();
    for rec in records {
        let Some(run) = by_id.get(&rec.id) else {
            return Err(Error::Manifest(format!("no logged response for {}", rec.id)));
        };
        tally.add(&score(&rec.eval_item()?, &run.parsed, cfg.approach, cfg.tau));
    }
    Ok(tally.report())
}

pub fn write_outputs(out: &Path, meta: &RunMeta, report: &MetricReport) -> Result<(), Error> {
    let write = |name: &str, v: &dyn erased::Json| -> Result<(), Error> {
        let path = out.join(name);
        std::fs::write(&path, v.pretty()).map_err(|e| Error::io(&path, e))
    };
    write(META_FILE, meta)?;
    write(REPORT_FILE, report)?;
    let run_name = out.file_name().and_then(|s| s.to_str()).unwrap_or("run").to_owned();
    let row = SummaryRow::new(&run_name, meta, report);
    write_summary_csv(&out.join("summary.csv"), std::slice::from_ref(&row))?;
    write_count_csv(&out.join("per_count.csv"), &[(run_name.clone(), report.clone())])?;
    if let Some(dims) = report.dims {
        write_cell_csv(&out.join("cell_f1.csv"), &report.cell_f1, dims)?;
    }
    Ok(())
}

mod erased {
    pub trait Json {
        fn pretty(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn pretty(&self) -> String {
            serde_json::to_string_pretty(self).unwrap_or_default() + "\n"
        }
    }
}

/// Loads a finished run directory.
pub fn load_run(dir: &Path) -> Result<(RunMeta, MetricReport), Error> {
    let read = |name: &str| -> Result<String, Error> {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let meta = serde_json::from_str(&read(META_FILE)?).map_err(|e| Error::Manifest(e.to_string()))?;
    let report = serde_json::from_str(&read(REPORT_FILE)?).map_err(|e| Error::Manifest(e.to_string()))?;
    Ok((meta, report))
}

/// Writes `{id, response_text}` lines from a run log, the offline input format.
pub fn export_responses(run_dir: &Path, path: &Path) -> Result<usize, Error> {
    #[derive(Serialize)]
    struct Line<'a> {
        id: &'a str,
        response_text: &'a str,
    }
    let log = read_log(&run_dir.join(RECORDS_FILE))?;
    let lines: Vec<Line> = log.iter().map(|r| Line { id: &r.id, response_text: &r.response }).collect();
    write_jsonl(path, &lines)
}
