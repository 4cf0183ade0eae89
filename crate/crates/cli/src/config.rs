//! Run configuration file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use lensforge::data::{load_embeddings, load_manifest, DatasetManifest, EmbeddingStore};
use lensforge::icl::SelectionConfig;
use lensforge::optimize::OptimizerConfig;
use lensforge::pipeline::{Budgets, SpecialistSpec};
use lensforge::providers::remote::{FileImageSource, HttpClient, RemoteDetector, RemoteEndpoints, RemoteGenerator, RemoteVlm};
use lensforge::providers::{
    load_latents, RegionProvider, SimulatedDetector, SimulatedGenerator, SimulatedOracleConfig, SimulatedVlm,
    VlmProvider,
};
use serde::Deserialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Simulated,
    Remote,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Simulated: oracle latents file.
    pub latents: Option<PathBuf>,
    pub default_threshold: Option<f64>,
    pub demo_bonus_weight: Option<f64>,
    pub balance_bonus_weight: Option<f64>,
    pub noise_scale: Option<f64>,
    /// Remote: model names sent to the VLM endpoint.
    #[serde(default = "default_model")]
    pub vlm_model: String,
    #[serde(default = "default_model")]
    pub generator_model: String,
    #[serde(default)]
    pub temperature: f64,
}

fn default_model() -> String {
    "default".into()
}

/// Per-sublabel settings layered over the defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecialistOverride {
    pub sublabel_id: String,
    pub detection_query: Option<String>,
    pub padding_fraction: Option<f64>,
    pub score_threshold: Option<f64>,
    pub max_regions: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub provider: ProviderConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub specialists: Vec<SpecialistOverride>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Values given on the command line win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub provider: Option<ProviderKind>,
    pub output_dir: Option<PathBuf>,
}

/// A loaded config with paths resolved against the config file's directory.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: RunConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_owned()
    } else {
        base.join(p)
    }
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Resolved> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let mut config: RunConfig = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    config.manifest = resolve(base, &config.manifest);
    config.embeddings = config.embeddings.map(|p| resolve(base, &p));
    config.provider.latents = config.provider.latents.map(|p| resolve(base, &p));
    if let Some(kind) = overrides.provider {
        config.provider.kind = kind;
    }
    let Some(seed) = overrides.seed.or(config.seed) else {
        bail!("no seed: set `seed` in {} or pass --seed", path.display());
    };
    let output_dir = match (&overrides.output_dir, &config.output_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => resolve(base, p),
        (None, None) => bail!("no output directory: set `output_dir` in {} or pass --output-dir", path.display()),
    };
    config.selection.validate()?;
    config.optimizer.validate()?;
    for p in [Some(&config.manifest), config.embeddings.as_ref()].into_iter().flatten() {
        if !p.exists() {
            bail!("{} does not exist", p.display());
        }
    }
    if config.provider.kind == ProviderKind::Simulated {
        match &config.provider.latents {
            None => bail!("the simulated provider needs `provider.latents`"),
            Some(p) if !p.exists() => bail!("{} does not exist", p.display()),
            Some(_) => {}
        }
    }
    Ok(Resolved {
        config,
        seed,
        output_dir,
    })
}

impl Resolved {
    pub fn manifest(&self) -> Result<DatasetManifest> {
        let path = &self.config.manifest;
        load_manifest(path).with_context(|| format!("cannot load manifest {}", path.display()))
    }

    pub fn embeddings(&self) -> Result<Option<Arc<EmbeddingStore>>> {
        self.config
            .embeddings
            .as_ref()
            .map(|p| {
                load_embeddings(p)
                    .map(Arc::new)
                    .with_context(|| format!("cannot load embeddings {}", p.display()))
            })
            .transpose()
    }

    /// Default specs with the config's per-sublabel overrides applied.
    pub fn specs(&self, manifest: &DatasetManifest) -> Result<Vec<SpecialistSpec>> {
        let mut out = Vec::new();
        for o in &self.config.specialists {
            let Some(sublabel) = manifest.taxonomy.get(&o.sublabel_id) else {
                bail!("specialist override for unknown sublabel {:?}", o.sublabel_id);
            };
            let mut spec = SpecialistSpec::for_sublabel(sublabel);
            if let Some(q) = &o.detection_query {
                spec.detection_query = q.clone();
            }
            if let Some(p) = o.padding_fraction {
                spec.padding_fraction = p;
            }
            if let Some(t) = o.score_threshold {
                spec.score_threshold = t;
            }
            if let Some(n) = o.max_regions {
                spec.max_regions = n;
            }
            spec.validate()?;
            out.push(spec);
        }
        Ok(out)
    }

    pub fn providers(&self, manifest: &DatasetManifest, store: Option<Arc<EmbeddingStore>>, max_in_flight: usize) -> Result<Services> {
        let p = &self.config.provider;
        match p.kind {
            ProviderKind::Simulated => {
                let latents = p.latents.as_ref().expect("checked at load");
                let mut oracle = load_latents(latents)
                    .with_context(|| format!("cannot load latents {}", latents.display()))?;
                let defaults = SimulatedOracleConfig::default();
                oracle.default_threshold = p.default_threshold.unwrap_or(defaults.default_threshold);
                oracle.demo_bonus_weight = p.demo_bonus_weight.unwrap_or(defaults.demo_bonus_weight);
                oracle.balance_bonus_weight = p.balance_bonus_weight.unwrap_or(defaults.balance_bonus_weight);
                oracle.noise_scale = p.noise_scale.unwrap_or(defaults.noise_scale);
                oracle.seed = self.seed;
                let store = store.unwrap_or_else(|| Arc::new(EmbeddingStore::new(1)));
                Ok(Services {
                    vlm: Box::new(SimulatedVlm::new(oracle, store)?),
                    detector: Box::new(SimulatedDetector::new(self.seed)),
                    generator: Box::new(SimulatedGenerator::new(self.seed)),
                    temperature: 0.0,
                })
            }
            ProviderKind::Remote => {
                let env = RemoteEndpoints::from_env();
                let Some(vlm_url) = env.vlm_url else {
                    bail!("the remote provider needs LENSFORGE_VLM_URL");
                };
                let Some(detector_url) = env.detector_url else {
                    bail!("the remote provider needs LENSFORGE_DETECTOR_URL");
                };
                let http = HttpClient::new(env.vlm_key, max_in_flight);
                let images = Arc::new(FileImageSource::from_manifest(manifest));
                Ok(Services {
                    vlm: Box::new(RemoteVlm::new(&vlm_url, &p.vlm_model, http.clone(), images.clone())),
                    detector: Box::new(RemoteDetector::new(detector_url, http.clone(), images)),
                    generator: Box::new(RemoteGenerator::new(vlm_url, &p.generator_model, http)),
                    temperature: p.temperature,
                })
            }
        }
    }
}

pub struct Services {
    pub vlm: Box<dyn VlmProvider>,
    pub detector: Box<dyn RegionProvider>,
    pub generator: Box<dyn VlmProvider>,
    pub temperature: f64,
}
