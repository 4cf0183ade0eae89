use rand::seq::index;

use super::{pair_counterfactual, BoxError, Demonstration, PairSource, SelectError, SelectionConfig};
use crate::data::{EmbeddingStore, SublabelDataset};
use crate::seed;

/// `m` demonstrations drawn uniformly without replacement.
pub fn select_labeled_few_shot(
    train: &SublabelDataset,
    m: usize,
    seed: u64,
) -> Result<Vec<Demonstration>, SelectError> {
    if train.len() < m {
        return Err(SelectError::Insufficient {
            requested: m,
            available: train.len(),
        });
    }
    Ok(index::sample(&mut seed::rng(seed), train.len(), m)
        .into_iter()
        .map(|i| {
            let item = &train.items[i];
            Demonstration::new(&item.image_id, item.label)
        })
        .collect())
}

/// One random demonstration set: plain sampling, or randomly anchored
/// counterfactual pairs when `config.counterfactual` is set.
pub fn select_static(
    train: &SublabelDataset,
    config: &SelectionConfig,
    store: Option<&EmbeddingStore>,
    seed: u64,
) -> Result<Vec<Demonstration>, SelectError> {
    if config.counterfactual {
        let store = store.ok_or_else(|| {
            SelectError::InvalidConfig("counterfactual pairing needs embeddings".into())
        })?;
        pair_counterfactual(PairSource::Random { seed }, train, store, config.m)
    } else {
        select_labeled_few_shot(train, config.m, seed)
    }
}

/// Draws `config.n_sets` candidate sets and keeps the one `evaluator` scores
/// highest; ties go to the lower index. Candidate 0 uses `config.seed`
/// itself, so `n_sets = 1` reduces to a single random draw.
///
/// Returns the winning set and every candidate's score.
pub fn select_lfs_random_search<F, E>(
    train: &SublabelDataset,
    val: &SublabelDataset,
    config: &SelectionConfig,
    store: Option<&EmbeddingStore>,
    mut evaluator: F,
) -> Result<(Vec<Demonstration>, Vec<f64>), SelectError>
where
    F: FnMut(usize, &[Demonstration]) -> Result<f64, E>,
    E: Into<BoxError>,
{
    config.validate()?;
    if val.is_empty() {
        return Err(SelectError::InvalidConfig("validation set is empty".into()));
    }
    let mut best: Option<(usize, Vec<Demonstration>)> = None;
    let mut scores = Vec::with_capacity(config.n_sets);
    for index in 0..config.n_sets {
        let set_seed = if index == 0 {
            config.seed
        } else {
            seed::sub_seed(config.seed, index as u64)
        };
        let demos = select_static(train, config, store, set_seed)?;
        let score = evaluator(index, &demos).map_err(|e| SelectError::Evaluator {
            index,
            source: e.into(),
        })?;
        let better = match &best {
            None => true,
            Some((b, _)) => score > scores[*b],
        };
        scores.push(score);
        if better {
            best = Some((index, demos));
        }
    }
    let (_, demos) = best.expect("n_sets >= 1");
    Ok((demos, scores))
}
