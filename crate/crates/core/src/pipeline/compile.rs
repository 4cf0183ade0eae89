use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    index_records, run_specialist, with_pool, CompiledProgram, DemoCache, IclConfig, IclPlan, PipelineError,
    ProgramSpecialist, Providers, SpecialistRun, SpecialistSpec,
};
use crate::data::{cap_dataset, derive_sublabel_dataset, DatasetManifest, ImageRecord, SplitSelector, SublabelDataset};
use crate::eval::f1_score;
use crate::icl::{select_lfs_random_search, select_static, BoxError, DemoImages, SelectionConfig, SelectionStrategy};
use crate::optimize::{optimize_instruction, CandidateInstruction, CandidateScorer, OptimizerConfig, SeedSignature};
use crate::providers::VlmProvider;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub train_cap: usize,
    pub val_size: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            train_cap: 5000,
            val_size: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompileConfig {
    pub selection: SelectionConfig,
    pub optimizer: OptimizerConfig,
    pub budgets: Budgets,
    pub seed: u64,
    /// Replaces the default spec of the matching sublabel.
    pub specs: Vec<SpecialistSpec>,
    pub max_in_flight: usize,
}

impl Default for CompileConfig {
    fn default() -> Self {
        Self {
            selection: SelectionConfig::default(),
            optimizer: OptimizerConfig::default(),
            budgets: Budgets::default(),
            seed: 0,
            specs: Vec::new(),
            max_in_flight: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecialistReport {
    pub sublabel_id: String,
    pub train_size: usize,
    pub val_size: usize,
    pub seed_val_f1: Option<f64>,
    pub best_val_f1: Option<f64>,
    /// Validation scores of the random-search demonstration sets.
    pub icl_scores: Vec<f64>,
    pub history: Vec<CandidateInstruction>,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompileOutcome {
    pub program: CompiledProgram,
    pub reports: Vec<SpecialistReport>,
}

impl CompileOutcome {
    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.reports.iter().filter_map(|r| r.warning.as_deref())
    }
}

/// Scores instructions by positive-class F1 of one specialist over a
/// validation split.
pub struct SpecialistScorer<'a> {
    pub spec: &'a SpecialistSpec,
    pub plan: &'a IclPlan,
    pub demo_images: DemoImages,
    pub providers: Providers<'a>,
    pub records: &'a HashMap<String, ImageRecord>,
    pub val: &'a SublabelDataset,
    pub cache: Option<&'a DemoCache>,
}

impl SpecialistScorer<'_> {
    /// Predictions for every validation item, in order.
    pub fn predictions(&self, instruction: &str) -> Result<Vec<u8>, PipelineError> {
        let run = SpecialistRun {
            spec: self.spec,
            instruction,
            plan: self.plan,
            demo_images: self.demo_images,
            records: Some(self.records),
            cache: self.cache,
        };
        self.val
            .items
            .par_iter()
            .map(|item| {
                let image = self
                    .records
                    .get(&item.image_id)
                    .ok_or_else(|| PipelineError::UnknownImage(item.image_id.clone()))?;
                run_specialist(&run, &self.providers, image, false)
                    .map(|t| t.y_spec)
                    .map_err(|f| f.error)
            })
            .collect()
    }

    pub fn score_candidate(&self, instruction: &str) -> Result<f64, PipelineError> {
        if self.val.count_positive() == 0 {
            return Err(PipelineError::Metric(crate::eval::MetricError::UndefinedMetric));
        }
        let predictions = self.predictions(instruction)?;
        let labels: Vec<u8> = self.val.items.iter().map(|i| i.label).collect();
        Ok(f1_score(&predictions, &labels)?)
    }
}

impl CandidateScorer for SpecialistScorer<'_> {
    fn score(&self, instruction: &str) -> Result<f64, BoxError> {
        self.score_candidate(instruction).map_err(Into::into)
    }
}

fn fallback(spec: SpecialistSpec, selection: &SelectionConfig, warning: String) -> (ProgramSpecialist, SpecialistReport) {
    log::warn!("{warning}");
    let signature = SeedSignature {
        label_name: spec.label_name.clone(),
        description: spec.description.clone(),
        instruction_template: super::SINGLE_SUBLABEL_TEMPLATE.to_owned(),
    };
    let report = SpecialistReport {
        sublabel_id: spec.sublabel_id.clone(),
        train_size: 0,
        val_size: 0,
        seed_val_f1: None,
        best_val_f1: None,
        icl_scores: Vec::new(),
        history: Vec::new(),
        warning: Some(warning),
    };
    let program = ProgramSpecialist {
        instruction: signature.render().expect("built-in template renders"),
        icl: IclConfig {
            selection: SelectionConfig {
                strategy: SelectionStrategy::ZeroShot,
                ..selection.clone()
            },
            plan: IclPlan::ZeroShot,
        },
        fallback: true,
        spec,
    };
    (program, report)
}

/// Compiles one specialist per taxonomy sublabel, independently.
///
/// For each sublabel: derive its train-split dataset, sample `val_size` for
/// validation, cap the remainder at `train_cap`, choose demonstrations, then
/// search the instruction with the demonstrations frozen. Sublabels without
/// usable data fall back to the seed instruction, zero-shot.
pub fn compile_program(
    manifest: &DatasetManifest,
    config: &CompileConfig,
    providers: &Providers<'_>,
    generator: Option<&dyn VlmProvider>,
) -> Result<CompileOutcome, PipelineError> {
    config.selection.validate()?;
    config.optimizer.validate()?;
    let needs_store = config.selection.strategy == SelectionStrategy::DynamicFewShot
        || (config.selection.counterfactual
            && matches!(
                config.selection.strategy,
                SelectionStrategy::LabeledFewShot | SelectionStrategy::LfsRandomSearch
            ));
    if needs_store && providers.embeddings.is_none() {
        return Err(PipelineError::MissingEmbeddings(format!(
            "{:?} selection",
            config.selection.strategy
        )));
    }
    let records = index_records(manifest);
    let mut specialists = Vec::new();
    let mut reports = Vec::new();

    for sublabel in manifest.taxonomy.sublabels() {
        let spec = config
            .specs
            .iter()
            .find(|s| s.sublabel_id == sublabel.id)
            .cloned()
            .unwrap_or_else(|| SpecialistSpec::for_sublabel(sublabel));
        spec.validate()?;
        let sub_seed = seed::named_seed(config.seed, &sublabel.id);

        let derived = derive_sublabel_dataset(manifest, &sublabel.id, SplitSelector::Train)?;
        if derived.count_positive() == 0 {
            let (p, r) = fallback(
                spec,
                &config.selection,
                format!("sublabel {:?} has no training positives; using the seed instruction zero-shot", sublabel.id),
            );
            specialists.push(p);
            reports.push(r);
            continue;
        }
        if derived.len() <= config.budgets.val_size {
            let (p, r) = fallback(
                spec,
                &config.selection,
                format!(
                    "sublabel {:?} has {} items, too few for a validation split of {}; using the seed instruction zero-shot",
                    sublabel.id,
                    derived.len(),
                    config.budgets.val_size
                ),
            );
            specialists.push(p);
            reports.push(r);
            continue;
        }
        let (train, val) = crate::data::split_train_val(&derived, config.budgets.val_size, seed::sub_seed(sub_seed, 1))?;
        let train = cap_dataset(&train, config.budgets.train_cap, seed::sub_seed(sub_seed, 2));
        if val.count_positive() == 0 {
            let (p, r) = fallback(
                spec,
                &config.selection,
                format!("validation split of {:?} has no positives; using the seed instruction zero-shot", sublabel.id),
            );
            specialists.push(p);
            reports.push(r);
            continue;
        }

        let signature = SeedSignature::for_sublabel(sublabel);
        let seed_text = signature.render()?;
        let selection = SelectionConfig {
            seed: seed::sub_seed(sub_seed, 3),
            ..config.selection.clone()
        };
        let (plan, icl_scores) = with_pool(config.max_in_flight, || -> Result<_, PipelineError> {
            choose_demos(&spec, &selection, providers, &records, &train, &val, &seed_text)
        })??;

        let cache = DemoCache::new();
        let scorer = SpecialistScorer {
            spec: &spec,
            plan: &plan,
            demo_images: selection.demo_images,
            providers: *providers,
            records: &records,
            val: &val,
            cache: Some(&cache),
        };
        let optimizer = OptimizerConfig {
            seed: seed::sub_seed(sub_seed, 4),
            ..config.optimizer.clone()
        };
        let outcome = with_pool(config.max_in_flight, || optimize_instruction(&optimizer, &signature, generator, &scorer))??;
        log::info!(
            "{}: seed val F1 {:.4}, best {:.4}",
            sublabel.id,
            outcome.seed_score(),
            outcome.best.val_score.unwrap_or(0.0)
        );
        reports.push(SpecialistReport {
            sublabel_id: sublabel.id.clone(),
            train_size: train.len(),
            val_size: val.len(),
            seed_val_f1: Some(outcome.seed_score()),
            best_val_f1: outcome.best.val_score,
            icl_scores,
            history: outcome.history,
            warning: None,
        });
        specialists.push(ProgramSpecialist {
            spec,
            instruction: outcome.best.text,
            icl: IclConfig { selection, plan },
            fallback: false,
        });
    }

    Ok(CompileOutcome {
        program: CompiledProgram::new(config.selection.m, specialists),
        reports,
    })
}

fn choose_demos(
    spec: &SpecialistSpec,
    selection: &SelectionConfig,
    providers: &Providers<'_>,
    records: &HashMap<String, ImageRecord>,
    train: &SublabelDataset,
    val: &SublabelDataset,
    seed_text: &str,
) -> Result<(IclPlan, Vec<f64>), PipelineError> {
    Ok(match selection.strategy {
        SelectionStrategy::ZeroShot => (IclPlan::ZeroShot, Vec::new()),
        SelectionStrategy::LabeledFewShot => {
            let demos = select_static(train, selection, providers.embeddings, selection.seed)?;
            (IclPlan::Static { demos }, Vec::new())
        }
        SelectionStrategy::LfsRandomSearch => {
            let (demos, scores) = select_lfs_random_search(train, val, selection, providers.embeddings, |_, demos| {
                let plan = IclPlan::Static { demos: demos.to_vec() };
                SpecialistScorer {
                    spec,
                    plan: &plan,
                    demo_images: selection.demo_images,
                    providers: *providers,
                    records,
                    val,
                    cache: None,
                }
                .score_candidate(seed_text)
            })?;
            (IclPlan::Static { demos }, scores)
        }
        SelectionStrategy::DynamicFewShot => (
            IclPlan::Dynamic {
                m: selection.m,
                counterfactual: selection.counterfactual,
                retrieve_on: selection.retrieve_on,
                corpus: train.clone(),
            },
            Vec::new(),
        ),
    })
}
