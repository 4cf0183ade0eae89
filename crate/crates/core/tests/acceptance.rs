//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{compile_and_evaluate, evaluate, load_fixture, zero_shot_program, Fixture, RunResult, RunSpec};
use lensforge::data::{
    derive_sublabel_dataset, EmbeddingStore, ImageRecord, LabeledItem, Split, SplitSelector, SublabelDataset,
};
use lensforge::eval::{cohens_kappa, confusion, prf1, ConfusionCounts, MetricError};
use lensforge::icl::{
    pair_counterfactual, select_dynamic_few_shot, DemoImages, Demonstration, PairSource, RetrieveOn, SelectionConfig,
    SelectionStrategy,
};
use lensforge::optimize::{sample_threshold_hints, CandidatePool, HintCategory};
use lensforge::pipeline::{
    aggregate, crop_with_padding, load_program, predict, save_program, CompiledProgram, IclConfig, IclPlan,
    PredictOptions, ProgramSpecialist, Providers, SpecialistSpec,
};
use lensforge::providers::scripted::{FnDetector, FnVlm};
use lensforge::providers::{Bbox, ImageRef, PixelBox, PromptPart, RawDetection};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(id: u8, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let (pass, detail) = match result {
        Ok(d) => match limit {
            Some(l) if elapsed > l => (false, format!("{d}; over the {l:?} budget")),
            _ => (true, d),
        },
        Err(d) => (false, d),
    };
    println!(
        "criterion {id:>2} {} {name}: {detail} [{:.2}s]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    pass
}

// 1

fn aggregate_truth_table() -> Result<u64, String> {
    let mut combos = 0;
    for k in 1..=4usize {
        for l in 1..=4usize {
            for bits in 0u32..(1 << (k * l)) {
                let mut per_specialist = Vec::with_capacity(k);
                for i in 0..k {
                    let crops: Vec<u8> = (0..l).map(|j| ((bits >> (i * l + j)) & 1) as u8).collect();
                    let y = aggregate(&crops).map_err(|e| e.to_string())?;
                    let row = (bits >> (i * l)) & ((1 << l) - 1);
                    ensure(u32::from(y) == u32::from(row != 0), || format!("k={k} l={l} bits={bits:b}: specialist {i}"))?;
                    per_specialist.push(y);
                }
                let y = aggregate(&per_specialist).map_err(|e| e.to_string())?;
                ensure(u32::from(y) == u32::from(bits != 0), || format!("k={k} l={l} bits={bits:b}: image"))?;
                combos += 1;
            }
        }
    }
    Ok(combos)
}

/// The same table through `predict` with scripted providers.
fn pipeline_truth_table() -> Result<u64, String> {
    // the verdict pattern is encoded in the image id
    let image = |bits: u32| ImageRecord {
        id: bits.to_string(),
        uri: format!("{bits}.png"),
        width: 1000,
        height: 1000,
        split: Split::Test,
        sublabels: Default::default(),
    };
    let mut combos = 0u64;
    for k in 1..=4usize {
        let specialists: Vec<ProgramSpecialist> = (0..k)
            .map(|i| ProgramSpecialist {
                spec: SpecialistSpec {
                    sublabel_id: format!("s{i}"),
                    label_name: format!("art_{i}"),
                    description: format!("artifact {i}"),
                    detection_query: format!("q{i}"),
                    padding_fraction: 0.0,
                    score_threshold: 0.3,
                    max_regions: 8,
                },
                instruction: format!("Return art_{i}=1 or art_{i}=0."),
                icl: IclConfig {
                    selection: SelectionConfig {
                        strategy: SelectionStrategy::ZeroShot,
                        ..Default::default()
                    },
                    plan: IclPlan::ZeroShot,
                },
                fallback: false,
            })
            .collect();
        let program = CompiledProgram::new(0, specialists);
        for l in 1..=4usize {
            let detector = FnDetector(move |_: &ImageRecord, _: &str| {
                Ok((0..l)
                    .map(|j| RawDetection {
                        bbox: Bbox {
                            x0: 100.0 * j as f64 + 10.0,
                            y0: 10.0,
                            x1: 100.0 * j as f64 + 60.0,
                            y1: 60.0,
                        },
                        score: 0.9 - 0.1 * j as f64,
                    })
                    .collect())
            });
            let vlm = FnVlm(move |req: &lensforge::providers::VlmRequest| {
                let i: usize = req.label_name.trim_start_matches("art_").parse().unwrap();
                let (bits, j) = req
                    .parts
                    .iter()
                    .find_map(|p| match p {
                        PromptPart::Image(ImageRef::Crop { id, region }) => {
                            Some((id.parse::<u32>().unwrap(), region.x0 as usize / 100))
                        }
                        _ => None,
                    })
                    .expect("crop part");
                let v = (bits >> (i * l + j)) & 1;
                Ok(format!("{{\"{}\": {v}}}", req.label_name))
            });
            let providers = Providers::new(&vlm, &detector);
            let images: Vec<ImageRecord> = (0u32..(1 << (k * l))).map(image).collect();
            let traces = predict(&program, &providers, &images, None, PredictOptions { max_in_flight: 8, trace: true })
                .map_err(|e| e.to_string())?;
            for (bits, trace) in (0u32..).zip(&traces) {
                ensure(trace.error.is_none(), || format!("k={k} l={l} bits={bits:b}: {:?}", trace.error))?;
                for i in 0..k {
                    let row = (bits >> (i * l)) & ((1 << l) - 1);
                    let spec = &trace.per_specialist[i];
                    ensure(spec.crops.len() == l, || format!("k={k} l={l}: {} crops", spec.crops.len()))?;
                    ensure(u32::from(spec.y_spec) == u32::from(row != 0), || {
                        format!("k={k} l={l} bits={bits:b}: specialist {i} gave {}", spec.y_spec)
                    })?;
                }
                ensure(u32::from(trace.y) == u32::from(bits != 0), || {
                    format!("k={k} l={l} bits={bits:b}: image verdict {}", trace.y)
                })?;
                combos += 1;
            }
        }
    }
    Ok(combos)
}

fn aggregation_truth_table() -> Check {
    let start = Instant::now();
    let combos = aggregate_truth_table()?;
    let direct = start.elapsed();
    let start = Instant::now();
    let through_pipeline = pipeline_truth_table()?;
    let piped = start.elapsed();
    let detail = format!(
        "{combos} verdict combinations agree with OR in {:.3}s; {through_pipeline} also through the pipeline in {:.2}s",
        direct.as_secs_f64(),
        piped.as_secs_f64()
    );
    ensure(direct <= Duration::from_secs(1), || format!("{detail}; over the 1s budget"))?;
    Ok(detail)
}

// 2

struct Brute {
    tp: u64,
    fp: u64,
    fn_: u64,
    tn: u64,
}

fn brute_counts(p: &[u8], l: &[u8]) -> Brute {
    let mut b = Brute { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for i in 0..p.len() {
        match (p[i], l[i]) {
            (1, 1) => b.tp += 1,
            (1, 0) => b.fp += 1,
            (0, 1) => b.fn_ += 1,
            _ => b.tn += 1,
        }
    }
    b
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut undefined = 0;
    for case in 0..1000 {
        let n = rng.random_range(1..=64);
        let density: f64 = rng.random();
        let pred: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < density)).collect();
        let truth: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < density)).collect();
        let b = brute_counts(&pred, &truth);
        let c = confusion(&pred, &truth).map_err(|e| e.to_string())?;
        ensure((c.tp, c.fp, c.fn_, c.tn) == (b.tp, b.fp, b.fn_, b.tn), || format!("case {case}: counts {c:?}"))?;
        let report = prf1(&c);
        if b.tp + b.fn_ == 0 {
            ensure(matches!(report, Err(MetricError::UndefinedMetric)), || {
                format!("case {case}: expected undefined, got {report:?}")
            })?;
            undefined += 1;
            continue;
        }
        let r = report.map_err(|e| format!("case {case}: {e}"))?;
        let precision = if b.tp + b.fp > 0 { b.tp as f64 / (b.tp + b.fp) as f64 } else { 0.0 };
        let recall = b.tp as f64 / (b.tp + b.fn_) as f64;
        let f1 = 2.0 * b.tp as f64 / (2 * b.tp + b.fp + b.fn_) as f64;
        for (what, got, want) in [("precision", r.precision, precision), ("recall", r.recall, recall), ("f1", r.f1, f1)] {
            ensure((got - want).abs() <= 1e-12, || format!("case {case}: {what} {got} vs {want}"))?;
        }
    }
    let worked = prf1(&ConfusionCounts { tp: 3, fp: 1, fn_: 2, tn: 0 }).map_err(|e| e.to_string())?;
    ensure((worked.f1 - 2.0 / 3.0).abs() <= 1e-9, || format!("worked example F1 {}", worked.f1))?;
    ensure(format!("{:.4}", worked.f1) == "0.6667", || format!("worked example F1 {}", worked.f1))?;
    Ok(format!(
        "1000 vectors match ({undefined} without positives rejected); worked example F1 {:.4}",
        worked.f1
    ))
}

// 3

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Picks the `take` best items of one class by repeated linear scans.
fn oracle_nearest(query: &[f64], items: &[(String, Vec<f64>)], take: usize) -> Vec<String> {
    let mut used = vec![false; items.len()];
    let mut out = Vec::new();
    for _ in 0..take {
        let mut best: Option<usize> = None;
        for (j, (id, v)) in items.iter().enumerate() {
            if used[j] {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let (s, sb) = (oracle_cosine(query, v), oracle_cosine(query, &items[b].1));
                    s > sb || (s == sb && *id < items[b].0)
                }
            };
            if better {
                best = Some(j);
            }
        }
        let b = best.expect("enough items");
        used[b] = true;
        out.push(items[b].0.clone());
    }
    out
}

fn retrieval_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 8;
    let gauss = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
    };
    // few distinct vectors so that many items tie exactly
    let bases: Vec<Vec<f64>> = (0..40).map(|_| gauss(&mut rng)).collect();
    let ids: Vec<usize> = index::sample(&mut rng, 500, 500).into_vec();
    let mut store = EmbeddingStore::new(dim);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut items = Vec::new();
    for &n in &ids {
        let id = format!("c{n:03}");
        let v = bases[rng.random_range(0..bases.len())].clone();
        let label = u8::from(rng.random::<bool>());
        store.insert(id.clone(), v.clone()).map_err(|e| e.to_string())?;
        items.push(LabeledItem::new(id.clone(), label));
        if label == 1 { &mut pos } else { &mut neg }.push((id, v));
    }
    let corpus = SublabelDataset {
        sublabel_id: "x".into(),
        items,
    };
    let mut ties = 0;
    for q in 0..50 {
        let query = if q % 5 == 0 { bases[q % bases.len()].clone() } else { gauss(&mut rng) };
        let m = 2 * (1 + q % 10);
        let half = m / 2;
        let got = select_dynamic_few_shot(&query, &corpus, &store, m).map_err(|e| e.to_string())?;
        let p = oracle_nearest(&query, &pos, half);
        let n = oracle_nearest(&query, &neg, half);
        let mut want = Vec::new();
        for i in 0..half {
            want.push(Demonstration::new(n[i].clone(), 0));
            want.push(Demonstration::new(p[i].clone(), 1));
        }
        ensure(got == want, || format!("query {q} (m={m}) differs from the exhaustive scan"))?;
        ties += got
            .windows(2)
            .filter(|w| w[0].label == w[1].label)
            .count();
        let shared = |list: &[(String, Vec<f64>)], chosen: &[String]| {
            chosen
                .windows(2)
                .filter(|w| {
                    let v = |id: &String| &list.iter().find(|(i, _)| i == id).unwrap().1;
                    v(&w[0]) == v(&w[1])
                })
                .count()
        };
        ties += shared(&pos, &p) + shared(&neg, &n);
    }
    ensure(ties > 0, || "no ties were exercised".into())?;
    Ok(format!("50 queries over 500 items agree; {ties} adjacent exact ties resolved by id"))
}

// 4

fn counterfactual_pairs(fx: &Fixture) -> Check {
    let corpus = derive_sublabel_dataset(&fx.manifest, "hand", SplitSelector::Train).map_err(|e| e.to_string())?;
    let test: Vec<&ImageRecord> = fx.manifest.records_in(SplitSelector::Test).collect();
    let positives: Vec<&LabeledItem> = corpus.positives().collect();
    let negatives: Vec<&LabeledItem> = corpus.negatives().collect();
    let store = &fx.store;
    let sim = |a: &str, b: &str| store.similarity(a, b).unwrap();
    let m = 10;
    let mut margin_sum = 0.0;
    let mut pairs_checked = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let query = store.get(&test[rng.random_range(0..test.len())].id).map_err(|e| e.to_string())?;
        let mut means = Vec::new();
        for source in [PairSource::Retrieval { query }, PairSource::Random { seed }] {
            let demos = pair_counterfactual(source, &corpus, store, m).map_err(|e| e.to_string())?;
            ensure(demos.len() == m, || format!("seed {seed}: {} demos", demos.len()))?;
            let mut total = 0.0;
            for pair in demos.chunks(2) {
                ensure(
                    pair[0].pair_id.is_some() && pair[0].pair_id == pair[1].pair_id && pair[0].label != pair[1].label,
                    || format!("seed {seed}: bad pair {pair:?}"),
                )?;
                total += sim(&pair[0].image_id, &pair[1].image_id);
                pairs_checked += 1;
            }
            means.push(total / (m / 2) as f64);
        }
        let p = index::sample(&mut rng, positives.len(), m / 2);
        let n = index::sample(&mut rng, negatives.len(), m / 2);
        let random: f64 = p
            .iter()
            .zip(n.iter())
            .map(|(i, j)| sim(&positives[i].image_id, &negatives[j].image_id))
            .sum::<f64>()
            / (m / 2) as f64;
        margin_sum += means[0] - random;
    }
    let margin = margin_sum / 20.0;
    ensure(margin >= 0.05, || format!("mean cosine margin {margin:.4} < 0.05"))?;
    Ok(format!("{pairs_checked} pairs have opposite labels; mean cosine margin over random pairing {margin:.4}"))
}

// 5

fn hint_distribution() -> Check {
    let hints = sample_threshold_hints(10_000, 5);
    let freq = |c: HintCategory| hints.iter().filter(|h| h.category == c).count() as f64 / hints.len() as f64;
    let observed = [
        (HintCategory::Recall, freq(HintCategory::Recall), 0.297),
        (HintCategory::Balanced, freq(HintCategory::Balanced), 0.406),
        (HintCategory::Precision, freq(HintCategory::Precision), 0.297),
    ];
    for (c, f, want) in observed {
        ensure((f - want).abs() <= 0.02, || format!("{} frequency {f:.4} vs {want}", c.as_str()))?;
    }
    for (t, want) in [
        (29, HintCategory::Recall),
        (30, HintCategory::Balanced),
        (70, HintCategory::Balanced),
        (71, HintCategory::Precision),
    ] {
        ensure(HintCategory::for_threshold(t) == want, || format!("threshold {t} misclassified"))?;
    }
    Ok(format!(
        "recall {:.4}, balanced {:.4}, precision {:.4}; 30 and 70 are balanced",
        observed[0].1, observed[1].1, observed[2].1
    ))
}

// 6

fn crop_geometry() -> Check {
    let b = |x0, y0, x1, y1| Bbox { x0, y0, x1, y1 };
    let px = |x0, y0, x1, y1| PixelBox { x0, y0, x1, y1 };
    let cases = [
        (1000, 1000, b(100.0, 100.0, 200.0, 200.0), 0.15, px(85, 85, 215, 215)),
        // touching the top-left corner
        (1000, 1000, b(0.0, 0.0, 100.0, 100.0), 0.15, px(0, 0, 115, 115)),
        // touching the bottom-right corner
        (1000, 1000, b(900.0, 900.0, 1000.0, 1000.0), 0.15, px(885, 885, 1000, 1000)),
        // fractional box rounds outward
        (100, 100, b(10.4, 20.6, 50.2, 60.8), 0.0, px(10, 20, 51, 61)),
        // padding is per axis
        (640, 480, b(100.0, 100.0, 300.0, 200.0), 0.1, px(80, 90, 320, 210)),
        // padding larger than the image
        (1000, 1000, b(400.0, 400.0, 600.0, 600.0), 5.0, px(0, 0, 1000, 1000)),
        // box partly outside the image
        (500, 500, b(-50.0, -50.0, 100.0, 100.0), 0.0, px(0, 0, 100, 100)),
        // fractional padding on an odd width
        (1000, 1000, b(100.0, 100.0, 201.0, 201.0), 0.15, px(84, 84, 217, 217)),
        // float noise around integer coordinates
        (10, 10, b(0.999_999_999_999_999_9, 1.0, 3.000_000_000_000_000_4, 4.0), 0.0, px(1, 1, 3, 4)),
        // wide image, bottom-right edge
        (2000, 500, b(1900.0, 400.0, 2000.0, 500.0), 0.2, px(1880, 380, 2000, 500)),
    ];
    for (i, (w, h, bbox, p, want)) in cases.iter().enumerate() {
        let got = crop_with_padding(*w, *h, bbox, *p).map_err(|e| format!("case {i}: {e}"))?;
        ensure(got == *want, || format!("case {i}: got {got:?}, want {want:?}"))?;
    }
    Ok(format!("{} cases exact", cases.len()))
}

// 7-9, 11

struct EndToEnd {
    zero_shot: Vec<f64>,
    full_500: Vec<RunResult>,
    full_400: Vec<RunResult>,
    plain_500: Vec<RunResult>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn spec(seed: u64, train_cap: usize, pool: CandidatePool, max_in_flight: usize) -> RunSpec {
    RunSpec {
        seed,
        train_cap,
        val_size: 200,
        pool,
        max_in_flight,
    }
}

fn end_to_end(fx: &Fixture, train_cap: usize, with_plain: bool, max_in_flight: usize) -> EndToEnd {
    let mut out = EndToEnd {
        zero_shot: Vec::new(),
        full_500: Vec::new(),
        full_400: Vec::new(),
        plain_500: Vec::new(),
    };
    for seed in SEEDS {
        let zs = zero_shot_program(&fx.manifest);
        out.zero_shot.push(evaluate(fx, &zs, seed, max_in_flight).1);
        let full = compile_and_evaluate(fx, spec(seed, train_cap, CandidatePool::FullSpectrum, max_in_flight));
        if train_cap == 500 {
            out.full_500.push(full);
        } else {
            out.full_400.push(full);
        }
        if with_plain {
            out.plain_500
                .push(compile_and_evaluate(fx, spec(seed, train_cap, CandidatePool::Plain, max_in_flight)));
        }
    }
    out
}

fn best_val(r: &RunResult) -> impl Iterator<Item = f64> + '_ {
    r.outcome.reports.iter().filter_map(|s| s.best_val_f1)
}

fn simulated_end_to_end(e: &EndToEnd) -> Check {
    let zs = mean(e.zero_shot.iter().copied());
    let opt = mean(e.full_500.iter().map(|r| r.test_f1));
    let full_val = mean(e.full_500.iter().flat_map(best_val));
    let plain_val = mean(e.plain_500.iter().flat_map(best_val));
    let detail = format!(
        "zero-shot test F1 {zs:.4} (<= 0.35), optimized test F1 {opt:.4} (>= 0.75), best val F1 full-spectrum {full_val:.4} vs no-hint {plain_val:.4} (margin >= 0.05)"
    );
    ensure(zs <= 0.35 && opt >= 0.75 && full_val - plain_val >= 0.05, || detail.clone())?;
    Ok(detail)
}

fn data_efficiency(e: &EndToEnd, small: &EndToEnd) -> Check {
    let big = mean(e.full_500.iter().map(|r| r.test_f1));
    let less = mean(small.full_400.iter().map(|r| r.test_f1));
    let detail = format!("test F1 500/200 {big:.4} vs 400/200 {less:.4} (|diff| <= 0.08)");
    ensure((big - less).abs() <= 0.08, || detail.clone())?;
    Ok(detail)
}

fn monotone(runs: &[&RunResult]) -> Check {
    let mut n = 0;
    for r in runs {
        for s in &r.outcome.reports {
            let (Some(seed), Some(best)) = (s.seed_val_f1, s.best_val_f1) else {
                return Err(format!("{}: optimizer did not run ({:?})", s.sublabel_id, s.warning));
            };
            ensure(best >= seed, || format!("{}: best {best} < seed {seed}", s.sublabel_id))?;
            ensure(s.history.iter().any(|c| c.round == 0 && c.index == 0), || {
                format!("{}: seed instruction missing from history", s.sublabel_id)
            })?;
            n += 1;
        }
    }
    Ok(format!("{n} optimizer runs never end below the seed instruction"))
}

fn fingerprint(r: &RunResult) -> String {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("program.json");
    save_program(&r.outcome.program, &path).unwrap();
    let program = std::fs::read_to_string(&path).unwrap();
    format!(
        "{program}\n{}\n{}\n{}",
        r.report_json,
        serde_json::to_string(&r.outcome.reports).unwrap(),
        serde_json::to_string(&r.traces).unwrap()
    )
}

fn determinism(fx: &Fixture, a: &EndToEnd, a_small: &EndToEnd) -> (Check, Duration) {
    let start = Instant::now();
    let b = end_to_end(fx, 500, true, 1);
    let single_threaded = start.elapsed();
    let b_small = end_to_end(fx, 400, false, 1);
    let again = compile_and_evaluate(fx, spec(SEEDS[0], 500, CandidatePool::FullSpectrum, 8));
    let check = || -> Check {
        let pairs = a
            .full_500
            .iter()
            .zip(&b.full_500)
            .chain(a.plain_500.iter().zip(&b.plain_500))
            .chain(a_small.full_400.iter().zip(&b_small.full_400))
            .chain(std::iter::once((&a.full_500[0], &again)));
        let mut n = 0;
        for (x, y) in pairs {
            ensure(fingerprint(x) == fingerprint(y), || format!("run {n} differs between reruns"))?;
            n += 1;
        }
        ensure(a.zero_shot == b.zero_shot, || "zero-shot scores differ".into())?;
        Ok(format!("{n} reruns byte-identical across max_in_flight 1 and 8"))
    };
    (check(), single_threaded)
}

// 10

fn kappa_oracle() -> Check {
    let a = [1, 1, 1, 1, 1, 0, 0, 0, 1, 0];
    let b = [1, 1, 1, 1, 1, 0, 0, 0, 0, 1];
    let k = cohens_kappa(&a, &b).map_err(|e| e.to_string())?;
    ensure((k - 0.583_333_333_333_333_4).abs() <= 1e-9, || format!("hand case {k}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..100 {
        let n = rng.random_range(1..=64);
        let v: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
        let kk = cohens_kappa(&v, &v).map_err(|e| e.to_string())?;
        ensure(kk == 1.0, || format!("vector {i}: kappa(a, a) = {kk}"))?;
    }
    Ok(format!("hand case {k:.9}; kappa(a, a) = 1 on 100 vectors"))
}

// 12

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 8] = ["hand", " ", "face", "\"quoted\"", "ünïcode", "{x}", "line\nbreak", "%"];
    let n = rng.random_range(1..6);
    (0..n).map(|_| PIECES[rng.random_range(0..PIECES.len())]).collect::<String>() + "z"
}

fn random_program(rng: &mut ChaCha8Rng) -> CompiledProgram {
    let k = rng.random_range(1..5);
    let specialists = (0..k)
        .map(|i| {
            let m = 2 * rng.random_range(1..6);
            let demos: Vec<Demonstration> = (0..m)
                .map(|d| Demonstration {
                    image_id: format!("img-{}", rng.random_range(0..1000)),
                    label: (d % 2) as u8,
                    pair_id: rng.random::<bool>().then_some((d / 2) as u32),
                })
                .collect();
            let plan = match rng.random_range(0..3) {
                0 => IclPlan::ZeroShot,
                1 => IclPlan::Static { demos },
                _ => IclPlan::Dynamic {
                    m,
                    counterfactual: rng.random(),
                    retrieve_on: if rng.random() { RetrieveOn::Image } else { RetrieveOn::Crop },
                    corpus: SublabelDataset {
                        sublabel_id: format!("s{i}"),
                        items: demos.iter().map(|d| LabeledItem::new(d.image_id.clone(), d.label)).collect(),
                    },
                },
            };
            let strategy = [
                SelectionStrategy::ZeroShot,
                SelectionStrategy::LabeledFewShot,
                SelectionStrategy::LfsRandomSearch,
                SelectionStrategy::DynamicFewShot,
            ][rng.random_range(0..4)];
            ProgramSpecialist {
                spec: SpecialistSpec {
                    sublabel_id: format!("s{i}"),
                    label_name: format!("label_{i}"),
                    description: random_text(rng),
                    detection_query: random_text(rng),
                    padding_fraction: rng.random::<f64>(),
                    score_threshold: rng.random::<f64>(),
                    max_regions: rng.random_range(1..20),
                },
                instruction: random_text(rng),
                icl: IclConfig {
                    selection: SelectionConfig {
                        strategy,
                        m,
                        counterfactual: rng.random(),
                        n_sets: rng.random_range(1..10),
                        seed: rng.random(),
                        retrieve_on: RetrieveOn::Image,
                        demo_images: if rng.random() { DemoImages::Full } else { DemoImages::Crop },
                    },
                    plan,
                },
                fallback: rng.random(),
            }
        })
        .collect();
    let mut program = CompiledProgram::new(rng.random_range(0..20), specialists);
    if rng.random() {
        program.created = Some("2026-01-02T03:04:05+00:00".into());
    }
    program
}

fn round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for i in 0..50 {
        let program = random_program(&mut rng);
        let path = dir.path().join(format!("p{i}.json"));
        save_program(&program, &path).map_err(|e| format!("program {i}: {e}"))?;
        let back = load_program(&path).map_err(|e| format!("program {i}: {e}"))?;
        ensure(back == program, || format!("program {i} changed on reload"))?;
    }
    Ok("50 random programs reload unchanged".into())
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    let secs = Duration::from_secs;
    results.push(run(1, "OR aggregation", None, aggregation_truth_table));
    results.push(run(2, "metric oracle", Some(secs(1)), metric_oracle));
    results.push(run(3, "retrieval oracle", Some(secs(5)), retrieval_oracle));
    let fx = load_fixture();
    results.push(run(4, "counterfactual pairs", Some(secs(10)), || counterfactual_pairs(&fx)));
    results.push(run(5, "hint distribution", Some(secs(1)), hint_distribution));
    results.push(run(6, "crop geometry", None, crop_geometry));

    let e2e = end_to_end(&fx, 500, true, 8);
    let small = end_to_end(&fx, 400, false, 8);
    let (det, single_threaded) = determinism(&fx, &e2e, &small);
    results.push(run(7, "simulated end-to-end", None, || {
        let d = simulated_end_to_end(&e2e)?;
        ensure(single_threaded <= secs(120), || {
            format!("{d}; single-threaded run took {single_threaded:?}")
        })?;
        Ok(format!("{d}; single-threaded {:.1}s", single_threaded.as_secs_f64()))
    }));
    results.push(run(8, "data efficiency", None, || data_efficiency(&e2e, &small)));
    results.push(run(9, "monotone improvement", None, || {
        let runs: Vec<&RunResult> = e2e.full_500.iter().chain(&e2e.plain_500).chain(&small.full_400).collect();
        monotone(&runs)
    }));
    results.push(run(10, "kappa oracle", None, kappa_oracle));
    results.push(run(11, "determinism", None, || det));
    results.push(run(12, "program round-trip", None, round_trip));

    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
