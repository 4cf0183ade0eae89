//! A seeded synthetic benchmark for offline runs.
//!
//! Two sublabels (`hand`, `face`). The train split holds equal numbers of
//! hand-only, face-only and clean images, and so does the test split.
//! Embeddings are noisy draws around a fixed set of unit cluster centres,
//! independent of the labels. Oracle latents for the positive sublabel come
//! from Beta(6, 5), all other latents from Beta(2, 7).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde_json::json;

use crate::data::{
    write_manifest, DataError, DatasetManifest, EmbeddingStore, ImageRecord, Split, Sublabel, SublabelTaxonomy,
};
use crate::providers::SimulatedOracleConfig;
use crate::seed;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const LATENTS_FILE: &str = "latents.jsonl";

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    /// Images per group (hand-only, face-only, clean) in the train split.
    pub train_per_group: usize,
    pub test_per_group: usize,
    pub dim: usize,
    pub clusters: usize,
    /// Per-coordinate standard deviation around the cluster centre.
    pub cluster_spread: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            train_per_group: 350,
            test_per_group: 150,
            dim: 8,
            clusters: 12,
            cluster_spread: 0.15,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticBenchmark {
    pub manifest: DatasetManifest,
    /// Raw (unnormalized) vectors in record order.
    pub embeddings: Vec<(String, Vec<f64>)>,
    /// Latent score per record and sublabel, in record order.
    pub latents: Vec<(String, BTreeMap<String, f64>)>,
}

pub fn taxonomy() -> SublabelTaxonomy {
    SublabelTaxonomy::new(vec![
        Sublabel {
            id: "hand".into(),
            label_name: "deformed_hand".into(),
            description: "a deformed hand".into(),
        },
        Sublabel {
            id: "face".into(),
            label_name: "deformed_face".into(),
            description: "a deformed face".into(),
        },
    ])
    .expect("static taxonomy is valid")
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn round_to(x: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (x * f).round() / f
}

pub fn generate(config: &SyntheticConfig) -> SyntheticBenchmark {
    let mut rng = seed::rng(seed::named_seed(config.seed, "synthetic"));
    let centres: Vec<Vec<f64>> = (0..config.clusters)
        .map(|_| unit((0..config.dim).map(|_| rng.sample(StandardNormal)).collect()))
        .collect();
    let positive = Beta::new(6.0, 5.0).unwrap();
    let negative = Beta::new(2.0, 7.0).unwrap();
    let sizes = [512u32, 768, 1024];

    let mut records = Vec::new();
    let mut embeddings = Vec::new();
    let mut latents = Vec::new();
    for (split, per_group) in [(Split::Train, config.train_per_group), (Split::Test, config.test_per_group)] {
        for group in ["hand", "face", "clean"] {
            for _ in 0..per_group {
                let id = format!("syn-{:05}", records.len());
                let sublabels: BTreeMap<String, u8> = ["hand", "face"]
                    .iter()
                    .map(|&s| (s.to_owned(), u8::from(s == group)))
                    .collect();
                let scores: BTreeMap<String, f64> = ["hand", "face"]
                    .iter()
                    .map(|&s| {
                        let draw = if s == group {
                            positive.sample(&mut rng)
                        } else {
                            negative.sample(&mut rng)
                        };
                        (s.to_owned(), round_to(draw, 4))
                    })
                    .collect();
                let centre = &centres[rng.random_range(0..config.clusters)];
                let v: Vec<f64> = centre
                    .iter()
                    .map(|c| {
                        let z: f64 = rng.sample(StandardNormal);
                        round_to(c + config.cluster_spread * z, 6)
                    })
                    .collect();
                let width = sizes[rng.random_range(0..sizes.len())];
                let height = sizes[rng.random_range(0..sizes.len())];
                records.push(ImageRecord {
                    id: id.clone(),
                    uri: format!("images/{id}.png"),
                    width,
                    height,
                    split,
                    sublabels,
                });
                embeddings.push((id.clone(), v));
                latents.push((id, scores));
            }
        }
    }
    SyntheticBenchmark {
        manifest: DatasetManifest {
            name: "synthetic-humans".into(),
            taxonomy: taxonomy(),
            records,
        },
        embeddings,
        latents,
    }
}

impl SyntheticBenchmark {
    pub fn store(&self) -> EmbeddingStore {
        let mut store = EmbeddingStore::new(self.embeddings.first().map_or(1, |(_, v)| v.len()));
        for (id, v) in &self.embeddings {
            store.insert(id.clone(), v.clone()).expect("generated embeddings are valid");
        }
        store
    }

    /// Oracle with default constants and these latents; every image contains
    /// a human.
    pub fn oracle_config(&self) -> SimulatedOracleConfig {
        let mut config = SimulatedOracleConfig::default();
        for (id, scores) in &self.latents {
            config.latent_scores.insert(id.clone(), scores.clone());
            config.human_present.insert(id.clone(), 1);
        }
        config
    }

    pub fn manifest_jsonl(&self) -> String {
        let mut buf = Vec::new();
        write_manifest(&self.manifest, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("manifest is UTF-8")
    }

    pub fn embeddings_jsonl(&self) -> String {
        let dim = self.embeddings.first().map_or(0, |(_, v)| v.len());
        let mut out = format!("{}\n", json!({ "dim": dim }));
        for (id, v) in &self.embeddings {
            out.push_str(&json!({ "id": id, "v": v }).to_string());
            out.push('\n');
        }
        out
    }

    pub fn latents_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, scores) in &self.latents {
            out.push_str(&json!({ "id": id, "scores": scores, "human_present": 1 }).to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<(), DataError> {
        let dir = dir.as_ref();
        for (name, text) in [
            (MANIFEST_FILE, self.manifest_jsonl()),
            (EMBEDDINGS_FILE, self.embeddings_jsonl()),
            (LATENTS_FILE, self.latents_jsonl()),
        ] {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|source| DataError::Io { path, source })?;
        }
        Ok(())
    }
}
