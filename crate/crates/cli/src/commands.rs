use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lensforge::data::{filter_contains_human, load_manifest, save_manifest, DatasetManifest, ImageRecord, SplitSelector};
use lensforge::eval::{score_traces, suite_report, EvalReport};
use lensforge::icl::SelectionStrategy;
use lensforge::optimize::write_history;
use lensforge::pipeline::{
    compile_program, index_records, load_program_checked, predict, predict_one, save_program, with_pool,
    CompileConfig, CompiledProgram, PredictOptions, PredictionTrace, Providers, SpecialistReport,
};
use lensforge::providers::RetryPolicy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Resolved;

pub const PROGRAM_FILE: &str = "program.json";
pub const COMPILE_REPORT_FILE: &str = "compile_report.json";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const EVAL_TRACES_FILE: &str = "eval_traces.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const FILTERED_MANIFEST_FILE: &str = "manifest.filtered.jsonl";
pub const HISTORY_DIR: &str = "history";

/// How a command finished when it did not fail outright.
#[derive(Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Some images failed; outputs cover the rest.
    Partial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

impl From<SplitArg> for SplitSelector {
    fn from(value: SplitArg) -> Self {
        match value {
            SplitArg::Train => SplitSelector::Train,
            SplitArg::Test => SplitSelector::Test,
            SplitArg::All => SplitSelector::All,
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write_traces(path: &Path, traces: &[PredictionTrace]) -> Result<()> {
    let mut out = String::new();
    for t in traces {
        out.push_str(&serde_json::to_string(t).expect("serializable"));
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn prepare(r: &Resolved, max_in_flight: usize) -> Result<Status> {
    let manifest = r.manifest()?;
    let services = r.providers(&manifest, None, max_in_flight)?;
    let retry = RetryPolicy::default();
    let verdicts: Vec<_> = with_pool(max_in_flight, || {
        manifest
            .records
            .par_iter()
            .map(|rec| filter_contains_human(services.vlm.as_ref(), rec, &retry))
            .collect()
    })?;
    let mut kept = Vec::new();
    let mut failures = 0;
    for (rec, v) in manifest.records.iter().zip(verdicts) {
        match v {
            Ok(1) => kept.push(rec.clone()),
            Ok(_) => {}
            Err(e) => {
                failures += 1;
                eprintln!("{}: {e}", rec.id);
            }
        }
    }
    let dropped = manifest.records.len() - kept.len() - failures;
    let filtered = DatasetManifest {
        records: kept,
        ..manifest
    };
    create_dir(&r.output_dir)?;
    let path = r.output_dir.join(FILTERED_MANIFEST_FILE);
    save_manifest(&filtered, &path)?;
    println!(
        "kept {}, dropped {dropped}, failed {failures}; wrote {}",
        filtered.records.len(),
        path.display()
    );
    Ok(if failures > 0 { Status::Partial } else { Status::Ok })
}

/// Compile summary per specialist; the candidate history goes to its own file.
#[derive(Debug, Serialize, Deserialize)]
pub struct CompileSummary {
    pub sublabel_id: String,
    pub train_size: usize,
    pub val_size: usize,
    pub seed_val_f1: Option<f64>,
    pub best_val_f1: Option<f64>,
    pub icl_scores: Vec<f64>,
    pub instruction: String,
    pub fallback: bool,
    pub warning: Option<String>,
}

fn summarize(program: &CompiledProgram, reports: &[SpecialistReport]) -> Vec<CompileSummary> {
    reports
        .iter()
        .map(|rep| {
            let s = program
                .specialists
                .iter()
                .find(|s| s.spec.sublabel_id == rep.sublabel_id)
                .expect("one specialist per report");
            CompileSummary {
                sublabel_id: rep.sublabel_id.clone(),
                train_size: rep.train_size,
                val_size: rep.val_size,
                seed_val_f1: rep.seed_val_f1,
                best_val_f1: rep.best_val_f1,
                icl_scores: rep.icl_scores.clone(),
                instruction: s.instruction.clone(),
                fallback: s.fallback,
                warning: rep.warning.clone(),
            }
        })
        .collect()
}

pub fn optimize(r: &Resolved, max_in_flight: usize, created: String) -> Result<Status> {
    let manifest = r.manifest()?;
    let store = r.embeddings()?;
    let c = &r.config;
    if c.selection.strategy == SelectionStrategy::DynamicFewShot && store.is_none() {
        bail!(
            "selection.strategy = \"dynamic_few_shot\" retrieves demonstrations by embedding similarity; \
             set `embeddings` in the config or pick another strategy"
        );
    }
    let services = r.providers(&manifest, store.clone(), max_in_flight)?;
    let mut providers = Providers::new(services.vlm.as_ref(), services.detector.as_ref());
    providers.embeddings = store.as_deref();
    providers.temperature = services.temperature;
    let config = CompileConfig {
        selection: c.selection.clone(),
        optimizer: c.optimizer.clone(),
        budgets: c.budgets,
        seed: r.seed,
        specs: r.specs(&manifest)?,
        max_in_flight,
    };
    let outcome = compile_program(&manifest, &config, &providers, Some(services.generator.as_ref()))
        .context("compilation failed")?;
    for w in outcome.warnings() {
        eprintln!("warning: {w}");
    }
    let mut program = outcome.program;
    program.created = Some(created);

    create_dir(&r.output_dir)?;
    let history_dir = r.output_dir.join(HISTORY_DIR);
    create_dir(&history_dir)?;
    let program_path = r.output_dir.join(PROGRAM_FILE);
    save_program(&program, &program_path)?;
    for rep in &outcome.reports {
        let path = history_dir.join(format!("{}.jsonl", rep.sublabel_id));
        let mut buf = Vec::new();
        write_history(&rep.history, &mut buf)?;
        fs::write(&path, buf).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let summary = summarize(&program, &outcome.reports);
    write_file(&r.output_dir.join(COMPILE_REPORT_FILE), &pretty(&summary))?;
    for s in &summary {
        println!(
            "{}: train {}, val {}, seed F1 {}, best F1 {}",
            s.sublabel_id,
            s.train_size,
            s.val_size,
            fmt_opt(s.seed_val_f1),
            fmt_opt(s.best_val_f1)
        );
    }
    println!("wrote {}", program_path.display());
    Ok(Status::Ok)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn program_path(r: &Resolved, program: Option<&Path>) -> PathBuf {
    program.map_or_else(|| r.output_dir.join(PROGRAM_FILE), Path::to_owned)
}

struct Loaded {
    manifest: DatasetManifest,
    program: CompiledProgram,
    store: Option<std::sync::Arc<lensforge::data::EmbeddingStore>>,
}

fn load_for_inference(r: &Resolved, program: Option<&Path>) -> Result<Loaded> {
    let manifest = r.manifest()?;
    let path = program_path(r, program);
    let program = load_program_checked(&path, &manifest)
        .with_context(|| format!("cannot load program {}", path.display()))?;
    let store = r.embeddings()?;
    if store.is_none() && program.specialists.iter().any(|s| s.icl.plan.needs_embeddings()) {
        bail!("the program retrieves demonstrations by embedding; set `embeddings` in the config");
    }
    Ok(Loaded {
        manifest,
        program,
        store,
    })
}

fn load_extra(paths: &[PathBuf]) -> Result<Vec<DatasetManifest>> {
    paths
        .iter()
        .map(|p| load_manifest(p).with_context(|| format!("cannot load manifest {}", p.display())))
        .collect()
}

fn all_records(base: &DatasetManifest, extra: &[DatasetManifest]) -> HashMap<String, ImageRecord> {
    let mut records = index_records(base);
    for m in extra {
        records.extend(index_records(m));
    }
    records
}

pub fn evaluate(
    r: &Resolved,
    max_in_flight: usize,
    program: Option<&Path>,
    split: SplitArg,
    manifests: &[PathBuf],
) -> Result<Status> {
    let loaded = load_for_inference(r, program)?;
    let extra = load_extra(manifests)?;
    let records = all_records(&loaded.manifest, &extra);
    let targets: Vec<&DatasetManifest> = if extra.is_empty() {
        vec![&loaded.manifest]
    } else {
        extra.iter().collect()
    };
    let services = r.providers(&loaded.manifest, loaded.store.clone(), max_in_flight)?;
    let mut providers = Providers::new(services.vlm.as_ref(), services.detector.as_ref());
    providers.embeddings = loaded.store.as_deref();
    providers.temperature = services.temperature;

    let mut reports = Vec::new();
    let mut all_traces = Vec::new();
    let (mut skipped, mut total) = (0u64, 0u64);
    for m in targets {
        let images: Vec<ImageRecord> = m.records_in(split.into()).cloned().collect();
        if images.is_empty() {
            bail!("manifest {:?} has no images in the {split:?} split", m.name);
        }
        let traces = predict(
            &loaded.program,
            &providers,
            &images,
            Some(&records),
            PredictOptions {
                max_in_flight,
                trace: true,
            },
        )?;
        for t in traces.iter().filter(|t| t.error.is_some()) {
            eprintln!("{}: {}", t.image_id, t.error.as_deref().unwrap_or_default());
        }
        let labels: HashMap<String, u8> = images.iter().map(|i| (i.id.clone(), i.label())).collect();
        let (report, s) = score_traces(&m.name, &traces, &labels)
            .with_context(|| format!("cannot score manifest {:?}", m.name))?;
        skipped += s;
        total += traces.len() as u64;
        reports.push(report);
        all_traces.extend(traces);
    }
    let suite = suite_report(&reports)?;
    let report = EvalReport::new(&suite, skipped);
    create_dir(&r.output_dir)?;
    write_file(&r.output_dir.join(EVAL_REPORT_FILE), &pretty(&report))?;
    write_traces(&r.output_dir.join(EVAL_TRACES_FILE), &all_traces)?;
    print!("{}", render_eval(&report));
    Ok(if skipped * 10 > total { Status::Partial } else { Status::Ok })
}

pub fn predict_cmd(
    r: &Resolved,
    max_in_flight: usize,
    program: Option<&Path>,
    image: Option<&str>,
    split: SplitArg,
    manifests: &[PathBuf],
) -> Result<Status> {
    let loaded = load_for_inference(r, program)?;
    let extra = load_extra(manifests)?;
    let records = all_records(&loaded.manifest, &extra);
    let services = r.providers(&loaded.manifest, loaded.store.clone(), max_in_flight)?;
    let mut providers = Providers::new(services.vlm.as_ref(), services.detector.as_ref());
    providers.embeddings = loaded.store.as_deref();
    providers.temperature = services.temperature;

    if let Some(id) = image {
        let Some(record) = records.get(id) else {
            bail!("image {id:?} is not in the manifest");
        };
        let trace = predict_one(&loaded.program, &providers, record, Some(&records), true);
        if let Some(e) = &trace.error {
            eprintln!("{id}: {e}");
            return Ok(Status::Partial);
        }
        println!("{}", trace.y);
        return Ok(Status::Ok);
    }

    let sources: Vec<&DatasetManifest> = if extra.is_empty() {
        vec![&loaded.manifest]
    } else {
        extra.iter().collect()
    };
    let images: Vec<ImageRecord> = sources
        .iter()
        .flat_map(|m| m.records_in(split.into()).cloned())
        .collect();
    let traces = predict(
        &loaded.program,
        &providers,
        &images,
        Some(&records),
        PredictOptions {
            max_in_flight,
            trace: true,
        },
    )?;
    create_dir(&r.output_dir)?;
    let path = r.output_dir.join(PREDICTIONS_FILE);
    write_traces(&path, &traces)?;
    let failed = traces.iter().filter(|t| t.error.is_some()).count();
    for t in traces.iter().filter(|t| t.error.is_some()) {
        eprintln!("{}: {}", t.image_id, t.error.as_deref().unwrap_or_default());
    }
    let positive = traces.iter().filter(|t| t.error.is_none() && t.y == 1).count();
    println!(
        "{} images, {positive} flagged, {failed} failed; wrote {}",
        traces.len(),
        path.display()
    );
    Ok(if failed > 0 { Status::Partial } else { Status::Ok })
}

pub fn render_eval(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>6} {:>6} {:>6} {:>6} {:>9} {:>7} {:>7}\n",
        "benchmark", "tp", "fp", "fn", "tn", "precision", "recall", "f1"
    ));
    for b in &report.benchmarks {
        out.push_str(&format!(
            "{:<24} {:>6} {:>6} {:>6} {:>6} {:>9.4} {:>7.4} {:>7.4}\n",
            b.name, b.tp, b.fp, b.fn_, b.tn, b.precision, b.recall, b.f1
        ));
    }
    out.push_str(&format!(
        "{:<24} {:>6} {:>6} {:>6} {:>6} {:>9.4} {:>7.4} {:>7.4}\n",
        "suite (macro)", "", "", "", "", report.suite.precision, report.suite.recall, report.suite.f1
    ));
    out.push_str(&format!("errors skipped: {}\n", report.errors_skipped));
    out
}

pub fn report(r: &Resolved, out: &mut impl Write) -> Result<Status> {
    let compile_path = r.output_dir.join(COMPILE_REPORT_FILE);
    let eval_path = r.output_dir.join(EVAL_REPORT_FILE);
    if !compile_path.exists() && !eval_path.exists() {
        bail!(
            "nothing to report in {}; run `optimize` or `evaluate` first",
            r.output_dir.display()
        );
    }
    if compile_path.exists() {
        let text = fs::read_to_string(&compile_path).with_context(|| format!("cannot read {}", compile_path.display()))?;
        let summary: Vec<CompileSummary> =
            serde_json::from_str(&text).with_context(|| format!("invalid {}", compile_path.display()))?;
        writeln!(out, "{:<16} {:>6} {:>6} {:>8} {:>8}  instruction", "specialist", "train", "val", "seed f1", "best f1")?;
        for s in &summary {
            writeln!(
                out,
                "{:<16} {:>6} {:>6} {:>8} {:>8}  {}",
                s.sublabel_id,
                s.train_size,
                s.val_size,
                fmt_opt(s.seed_val_f1),
                fmt_opt(s.best_val_f1),
                s.instruction
            )?;
            if let Some(w) = &s.warning {
                writeln!(out, "  warning: {w}")?;
            }
        }
    }
    if eval_path.exists() {
        let text = fs::read_to_string(&eval_path).with_context(|| format!("cannot read {}", eval_path.display()))?;
        let report: EvalReport =
            serde_json::from_str(&text).with_context(|| format!("invalid {}", eval_path.display()))?;
        if compile_path.exists() {
            writeln!(out)?;
        }
        write!(out, "{}", render_eval(&report))?;
    }
    Ok(Status::Ok)
}
