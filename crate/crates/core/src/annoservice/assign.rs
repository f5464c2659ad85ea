use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnnotationError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub annotator_id: String,
    pub group_ids: Vec<String>,
}

/// Gives every group to `per_group` distinct annotators with loads that differ
/// by at most one.
///
/// Groups and annotators are shuffled, then the `groups * per_group` slots are
/// dealt cyclically over the annotators; consecutive slots of one group land on
/// consecutive annotators, which are distinct because `per_group <= annotators`.
/// Each annotator's list is shuffled again so no two see the same order.
pub fn create_assignments(
    group_ids: &[String],
    annotator_ids: &[String],
    per_group: usize,
    seed: u64,
) -> Result<Vec<Assignment>, AnnotationError> {
    if per_group == 0 || annotator_ids.len() < per_group {
        return Err(AnnotationError::TooFewAnnotators {
            needed: per_group.max(1),
            have: annotator_ids.len(),
        });
    }
    check_unique(annotator_ids)?;
    check_unique(group_ids)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut group_order: Vec<usize> = (0..group_ids.len()).collect();
    group_order.shuffle(&mut rng);
    let mut ann_order: Vec<usize> = (0..annotator_ids.len()).collect();
    ann_order.shuffle(&mut rng);

    let a = annotator_ids.len();
    let mut lists: Vec<Vec<String>> = vec![Vec::new(); a];
    let mut slot = 0usize;
    for &g in &group_order {
        for _ in 0..per_group {
            lists[ann_order[slot % a]].push(group_ids[g].clone());
            slot += 1;
        }
    }
    for list in &mut lists {
        list.shuffle(&mut rng);
    }
    Ok(annotator_ids
        .iter()
        .zip(lists)
        .map(|(id, group_ids)| Assignment {
            annotator_id: id.clone(),
            group_ids,
        })
        .collect())
}

fn check_unique(ids: &[String]) -> Result<(), AnnotationError> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(AnnotationError::DuplicateId(id.clone()));
        }
    }
    Ok(())
}
