//! The annotation campaign: static assignment of groups to annotators,
//! task serving with randomized variant order, and an append-only record log.

mod assign;
mod campaign;
mod log;

pub use assign::{create_assignments, Assignment};
pub use campaign::{
    display_permutation, patch_id, Ack, Campaign, CampaignConfig, GroupEntry, PatchKind, Progress, Task,
    TaskVariant,
};
pub use log::{read_record_log, FileLog, MemorySink, RecordSink};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Three-way quality judgment of an enhanced patch against its original.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Similar,
    Negative,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Positive, Label::Similar, Label::Negative];

    /// Position in [`Label::ALL`].
    pub fn index(self) -> usize {
        match self {
            Label::Positive => 0,
            Label::Similar => 1,
            Label::Negative => 2,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Positive => "Positive",
            Label::Similar => "Similar",
            Label::Negative => "Negative",
        })
    }
}

/// One annotator's label for one variant of one group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub group_id: String,
    /// Enhancement model id, 1..=4.
    pub variant_id: u8,
    pub annotator_id: String,
    pub label: Label,
    /// Time spent on the whole group.
    pub elapsed_ms: u64,
    /// Variant ids in the slot order they were shown.
    pub display_order: [u8; 4],
    /// Wall-clock submission time (ms since the Unix epoch, or a simulated clock).
    pub submitted_at_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AnnotationError {
    #[error("unknown annotator {0:?}")]
    UnknownAnnotator(String),
    #[error("unknown group {0:?}")]
    UnknownGroup(String),
    #[error("group {group:?} is not assigned to {annotator:?}")]
    NotAssigned { annotator: String, group: String },
    #[error("group {group:?} is not the pending task of {annotator:?}")]
    NotPending { annotator: String, group: String },
    #[error("{annotator:?} already labeled group {group:?}")]
    Duplicate { annotator: String, group: String },
    #[error("labels must cover variants 1..=4 exactly once: {0}")]
    IncompleteLabels(String),
    #[error("need at least {needed} annotators, have {have}")]
    TooFewAnnotators { needed: usize, have: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("record log inconsistent with campaign: {0}")]
    Replay(String),
}
