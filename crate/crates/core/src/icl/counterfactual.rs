use rand::seq::index;

use super::{rank_by_similarity, Demonstration, SelectError};
use crate::data::{cosine, EmbeddingStore, LabeledItem, SublabelDataset};
use crate::seed;

/// How the positive anchors of counterfactual pairs are chosen.
#[derive(Clone, Copy, Debug)]
pub enum PairSource<'a> {
    /// The positives nearest to this query embedding.
    Retrieval { query: &'a [f64] },
    /// Positives sampled uniformly under a seed.
    Random { seed: u64 },
}

/// Builds `m/2` (negative, positive) pairs of visually similar images.
///
/// Each anchor positive, in order, is greedily matched to the most similar
/// negative not yet used (ties by image id). Pair ids run `0..m/2`.
pub fn pair_counterfactual(
    source: PairSource<'_>,
    corpus: &SublabelDataset,
    store: &EmbeddingStore,
    m: usize,
) -> Result<Vec<Demonstration>, SelectError> {
    if !m.is_multiple_of(2) || m == 0 {
        return Err(SelectError::InvalidConfig(format!("m = {m} must be even and positive")));
    }
    let half = m / 2;
    let positives: Vec<&LabeledItem> = corpus.positives().collect();
    let negatives: Vec<&LabeledItem> = corpus.negatives().collect();
    for (label, available) in [(1, positives.len()), (0, negatives.len())] {
        if available < half {
            return Err(SelectError::ClassExhausted {
                label,
                needed: half,
                available,
            });
        }
    }

    let anchors: Vec<&LabeledItem> = match source {
        PairSource::Retrieval { query } => rank_by_similarity(query, positives.iter().copied(), store)?
            .into_iter()
            .take(half)
            .map(|(_, item)| item)
            .collect(),
        PairSource::Random { seed } => index::sample(&mut seed::rng(seed), positives.len(), half)
            .into_iter()
            .map(|i| positives[i])
            .collect(),
    };

    let negative_vecs = negatives
        .iter()
        .map(|n| store.get(&n.image_id))
        .collect::<Result<Vec<_>, _>>()?;
    let mut used = vec![false; negatives.len()];
    let mut out = Vec::with_capacity(m);
    for (pair, anchor) in anchors.into_iter().enumerate() {
        let anchor_vec = store.get(&anchor.image_id)?;
        let mut best: Option<(f64, usize)> = None;
        for (j, v) in negative_vecs.iter().enumerate() {
            if used[j] {
                continue;
            }
            let sim = cosine(anchor_vec, v);
            let better = match best {
                None => true,
                Some((s, b)) => {
                    sim > s || (sim == s && negatives[j].image_id < negatives[b].image_id)
                }
            };
            if better {
                best = Some((sim, j));
            }
        }
        let (_, j) = best.expect("enough negatives checked above");
        used[j] = true;
        let pair_id = Some(pair as u32);
        out.push(Demonstration {
            image_id: negatives[j].image_id.clone(),
            label: 0,
            pair_id,
        });
        out.push(Demonstration {
            image_id: anchor.image_id.clone(),
            label: 1,
            pair_id,
        });
    }
    Ok(out)
}
