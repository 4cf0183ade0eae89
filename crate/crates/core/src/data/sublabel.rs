use rand::seq::index;

use super::{DataError, DatasetManifest, LabeledItem, SplitSelector, SublabelDataset};
use crate::seed;

/// Builds the binary dataset for one specialist.
///
/// A record is a positive when `sublabel_id` is set, and a negative only when
/// every sublabel is 0. Records carrying a different error type are dropped.
pub fn derive_sublabel_dataset(
    manifest: &DatasetManifest,
    sublabel_id: &str,
    split: SplitSelector,
) -> Result<SublabelDataset, DataError> {
    if !manifest.taxonomy.contains(sublabel_id) {
        return Err(DataError::UnknownSublabel {
            sublabel: sublabel_id.to_owned(),
            line: None,
        });
    }
    let items = manifest
        .records_in(split)
        .filter_map(|r| {
            if r.sublabel(sublabel_id) == 1 {
                Some(LabeledItem::new(&r.id, 1))
            } else if r.label() == 0 {
                Some(LabeledItem::new(&r.id, 0))
            } else {
                None
            }
        })
        .collect();
    Ok(SublabelDataset {
        sublabel_id: sublabel_id.to_owned(),
        items,
    })
}

/// Samples `val_size` items for validation; the rest form the train split.
/// Both halves keep the source order.
pub fn split_train_val(
    dataset: &SublabelDataset,
    val_size: usize,
    seed: u64,
) -> Result<(SublabelDataset, SublabelDataset), DataError> {
    if val_size >= dataset.len() {
        return Err(DataError::InsufficientItems {
            requested: val_size + 1,
            available: dataset.len(),
        });
    }
    let mut in_val = vec![false; dataset.len()];
    for i in index::sample(&mut seed::rng(seed), dataset.len(), val_size) {
        in_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = dataset
        .items
        .iter()
        .cloned()
        .zip(in_val)
        .partition(|(_, v)| *v);
    let strip = |v: Vec<(LabeledItem, bool)>| SublabelDataset {
        sublabel_id: dataset.sublabel_id.clone(),
        items: v.into_iter().map(|(item, _)| item).collect(),
    };
    Ok((strip(train), strip(val)))
}

/// Uniformly subsamples to at most `cap` items, preserving order.
pub fn cap_dataset(dataset: &SublabelDataset, cap: usize, seed: u64) -> SublabelDataset {
    if dataset.len() <= cap {
        return dataset.clone();
    }
    let mut keep = index::sample(&mut seed::rng(seed), dataset.len(), cap).into_vec();
    keep.sort_unstable();
    SublabelDataset {
        sublabel_id: dataset.sublabel_id.clone(),
        items: keep.into_iter().map(|i| dataset.items[i].clone()).collect(),
    }
}
