#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use lensforge::data::{load_embeddings, load_manifest, DatasetManifest, EmbeddingStore, SplitSelector};
use lensforge::eval::{f1_score, score_traces};
use lensforge::icl::{SelectionConfig, SelectionStrategy};
use lensforge::optimize::{CandidatePool, OptimizerConfig, SeedSignature};
use lensforge::pipeline::{
    compile_program, index_records, predict, Budgets, CompileConfig, CompileOutcome, CompiledProgram, IclConfig,
    IclPlan, PredictOptions, PredictionTrace, ProgramSpecialist, Providers, SpecialistSpec,
};
use lensforge::providers::{load_latents, SimulatedDetector, SimulatedGenerator, SimulatedOracleConfig, SimulatedVlm};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic")
}

pub struct Fixture {
    pub manifest: DatasetManifest,
    pub store: Arc<EmbeddingStore>,
    pub oracle: SimulatedOracleConfig,
}

pub fn load_fixture() -> Fixture {
    let dir = fixture_dir();
    Fixture {
        manifest: load_manifest(dir.join("manifest.jsonl")).unwrap(),
        store: Arc::new(load_embeddings(dir.join("embeddings.jsonl")).unwrap()),
        oracle: load_latents(dir.join("latents.jsonl")).unwrap(),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunSpec {
    pub seed: u64,
    pub train_cap: usize,
    pub val_size: usize,
    pub pool: CandidatePool,
    pub max_in_flight: usize,
}

pub struct RunResult {
    pub outcome: CompileOutcome,
    pub traces: Vec<PredictionTrace>,
    pub test_f1: f64,
    pub report_json: String,
}

pub fn zero_shot_program(manifest: &DatasetManifest) -> CompiledProgram {
    CompiledProgram::new(
        0,
        manifest
            .taxonomy
            .sublabels()
            .iter()
            .map(|s| ProgramSpecialist {
                spec: SpecialistSpec::for_sublabel(s),
                instruction: SeedSignature::for_sublabel(s).render().unwrap(),
                icl: IclConfig {
                    selection: SelectionConfig {
                        strategy: SelectionStrategy::ZeroShot,
                        ..Default::default()
                    },
                    plan: IclPlan::ZeroShot,
                },
                fallback: false,
            })
            .collect(),
    )
}

pub fn test_labels(manifest: &DatasetManifest) -> HashMap<String, u8> {
    manifest.records_in(SplitSelector::Test).map(|r| (r.id.clone(), r.label())).collect()
}

pub fn evaluate(fx: &Fixture, program: &CompiledProgram, seed: u64, max_in_flight: usize) -> (Vec<PredictionTrace>, f64, String) {
    let vlm = SimulatedVlm::new(SimulatedOracleConfig { seed, ..fx.oracle.clone() }, fx.store.clone()).unwrap();
    let detector = SimulatedDetector::new(seed);
    let providers = Providers::new(&vlm, &detector).with_embeddings(&fx.store);
    let test: Vec<_> = fx.manifest.records_in(SplitSelector::Test).cloned().collect();
    let records = index_records(&fx.manifest);
    let traces = predict(
        program,
        &providers,
        &test,
        Some(&records),
        PredictOptions { max_in_flight, trace: true },
    )
    .unwrap();
    let labels = test_labels(&fx.manifest);
    let (report, skipped) = score_traces(&fx.manifest.name, &traces, &labels).unwrap();
    let preds: Vec<u8> = traces.iter().map(|t| t.y).collect();
    let truth: Vec<u8> = traces.iter().map(|t| labels[&t.image_id]).collect();
    assert_eq!(skipped, 0);
    let f1 = f1_score(&preds, &truth).unwrap();
    (traces, f1, serde_json::to_string(&report).unwrap())
}

pub fn compile_and_evaluate(fx: &Fixture, run: RunSpec) -> RunResult {
    let vlm = SimulatedVlm::new(SimulatedOracleConfig { seed: run.seed, ..fx.oracle.clone() }, fx.store.clone()).unwrap();
    let detector = SimulatedDetector::new(run.seed);
    let generator = SimulatedGenerator::new(run.seed);
    let providers = Providers::new(&vlm, &detector).with_embeddings(&fx.store);
    let config = CompileConfig {
        selection: SelectionConfig {
            strategy: SelectionStrategy::DynamicFewShot,
            m: 10,
            counterfactual: true,
            seed: run.seed,
            ..Default::default()
        },
        optimizer: OptimizerConfig {
            pool: run.pool,
            seed: run.seed,
            ..Default::default()
        },
        budgets: Budgets {
            train_cap: run.train_cap,
            val_size: run.val_size,
        },
        seed: run.seed,
        specs: Vec::new(),
        max_in_flight: run.max_in_flight,
    };
    let outcome = compile_program(&fx.manifest, &config, &providers, Some(&generator)).unwrap();
    let (traces, test_f1, report_json) = evaluate(fx, &outcome.program, run.seed, run.max_in_flight);
    RunResult {
        outcome,
        traces,
        test_f1,
        report_json,
    }
}
