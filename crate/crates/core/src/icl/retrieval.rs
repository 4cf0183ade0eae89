use super::{Demonstration, SelectError};
use crate::data::{cosine, EmbeddingStore, LabeledItem, SublabelDataset};

/// Items of one class sorted by cosine similarity to `query`, most similar
/// first; equal similarities fall back to image id order.
pub fn rank_by_similarity<'a, I>(
    query: &[f64],
    items: I,
    store: &EmbeddingStore,
) -> Result<Vec<(f64, &'a LabeledItem)>, SelectError>
where
    I: IntoIterator<Item = &'a LabeledItem>,
{
    let mut ranked = items
        .into_iter()
        .map(|item| Ok((cosine(query, store.get(&item.image_id)?), item)))
        .collect::<Result<Vec<_>, SelectError>>()?;
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.image_id.cmp(&b.1.image_id)));
    Ok(ranked)
}

/// The `m/2` nearest positives and `m/2` nearest negatives to the query.
///
/// When one class has fewer than `m/2` items all of it is used and the other
/// class fills the remainder. Output alternates negative, positive in
/// descending similarity; leftovers of the larger class follow.
pub fn select_dynamic_few_shot(
    query: &[f64],
    corpus: &SublabelDataset,
    store: &EmbeddingStore,
    m: usize,
) -> Result<Vec<Demonstration>, SelectError> {
    if !m.is_multiple_of(2) {
        return Err(SelectError::InvalidConfig(format!("m = {m} must be even")));
    }
    if corpus.len() < m {
        return Err(SelectError::Insufficient {
            requested: m,
            available: corpus.len(),
        });
    }
    let positives = rank_by_similarity(query, corpus.positives(), store)?;
    let negatives = rank_by_similarity(query, corpus.negatives(), store)?;
    let half = m / 2;
    let n_pos = if positives.len() < half {
        positives.len()
    } else if negatives.len() < half {
        m - negatives.len()
    } else {
        half
    };
    let n_neg = m - n_pos;

    let mut pos = positives.into_iter().take(n_pos);
    let mut neg = negatives.into_iter().take(n_neg);
    let mut out = Vec::with_capacity(m);
    loop {
        let n = neg.next();
        let p = pos.next();
        if n.is_none() && p.is_none() {
            break;
        }
        out.extend(n.map(|(_, i)| Demonstration::new(&i.image_id, 0)));
        out.extend(p.map(|(_, i)| Demonstration::new(&i.image_id, 1)));
    }
    Ok(out)
}
