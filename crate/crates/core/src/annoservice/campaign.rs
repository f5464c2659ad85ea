use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assign::create_assignments;
use super::{AnnotationError, AnnotationRecord, Label, RecordSink};
use crate::error::{Error, Result};
use crate::manifest::{load_groups, GroupRecord};

/// Campaign setup as stored on disk (TOML).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    /// Group manifest, relative to the config file's directory.
    pub groups_manifest: PathBuf,
    /// Opaque annotator tokens.
    pub annotators: Vec<String>,
    #[serde(default = "default_per_group")]
    pub per_group: usize,
    pub seed: u64,
}

fn default_per_group() -> usize {
    3
}

impl CampaignConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<CampaignConfig> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: CampaignConfig = toml::from_str(&src).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.groups_manifest.is_relative() {
            cfg.groups_manifest = crate::manifest::manifest_dir(path).join(&cfg.groups_manifest);
        }
        Ok(cfg)
    }
}

/// What the campaign needs to know about a group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupEntry {
    pub group_id: String,
    pub original: PathBuf,
    /// `(model id, path)`, exactly four.
    pub variants: Vec<(u8, PathBuf)>,
}

impl From<&GroupRecord> for GroupEntry {
    fn from(g: &GroupRecord) -> Self {
        GroupEntry {
            group_id: g.group_id.clone(),
            original: PathBuf::from(&g.original),
            variants: g
                .model_ids
                .iter()
                .zip(&g.variants)
                .map(|(&m, p)| (m, PathBuf::from(p)))
                .collect(),
        }
    }
}

impl GroupEntry {
    /// A group with no backing files (simulation).
    pub fn synthetic(group_id: impl Into<String>) -> Self {
        GroupEntry {
            group_id: group_id.into(),
            original: PathBuf::new(),
            variants: (1..=4).map(|m| (m, PathBuf::new())).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchKind {
    Original,
    Variant(u8),
}

/// Patch id used in image URLs: `{group}_orig` or `{group}_v{model}`.
pub fn patch_id(group_id: &str, kind: PatchKind) -> String {
    match kind {
        PatchKind::Original => format!("{group_id}_orig"),
        PatchKind::Variant(m) => format!("{group_id}_v{m}"),
    }
}

fn parse_patch_id(id: &str) -> Option<(&str, PatchKind)> {
    let (group, tail) = id.rsplit_once('_')?;
    let kind = match tail {
        "orig" => PatchKind::Original,
        t => PatchKind::Variant(t.strip_prefix('v')?.parse().ok()?),
    };
    Some((group, kind))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskVariant {
    pub slot: usize,
    pub variant_id: u8,
    pub patch_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub group_id: String,
    pub original_patch_id: String,
    /// In display (slot) order.
    pub variants: Vec<TaskVariant>,
    pub display_order: [u8; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub labeled: usize,
    pub remaining: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub labeled: usize,
    pub remaining: usize,
    /// Mean per-group annotation time; `None` before the first submission.
    pub mean_elapsed_ms: Option<f64>,
}

/// Slot order of the four variants for one (annotator, group) pair.
///
/// Drawn from a ChaCha stream keyed by the campaign seed and both indices, so
/// it is independent of model id, differs between annotators, and survives
/// restarts unchanged.
pub fn display_permutation(seed: u64, annotator: usize, group: usize) -> [u8; 4] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(annotator as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(group as u64).to_le_bytes());
    key[24..].copy_from_slice(b"slotperm");
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut order = [1u8, 2, 3, 4];
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Default, Clone)]
struct AnnotatorState {
    /// Indices into `Campaign::groups`, in serving order.
    queue: Vec<usize>,
    /// Position of the first unlabeled entry in `queue`.
    cursor: usize,
    pending: Option<usize>,
    elapsed_sum: u64,
}

/// Campaign state plus its record sink. Not internally synchronized; wrap in
/// a mutex to share between sessions.
pub struct Campaign<S: RecordSink> {
    seed: u64,
    per_group: usize,
    groups: Vec<GroupEntry>,
    group_index: HashMap<String, usize>,
    annotators: Vec<String>,
    annotator_index: HashMap<String, usize>,
    state: Vec<AnnotatorState>,
    done: HashSet<(usize, usize)>,
    sink: S,
}

impl<S: RecordSink> Campaign<S> {
    pub fn new(
        groups: Vec<GroupEntry>,
        annotators: Vec<String>,
        per_group: usize,
        seed: u64,
        sink: S,
    ) -> Result<Self> {
        for g in &groups {
            let mut ids: Vec<u8> = g.variants.iter().map(|(m, _)| *m).collect();
            ids.sort_unstable();
            if ids != [1, 2, 3, 4] {
                return Err(Error::Config(format!(
                    "group {} must have variants 1..=4, has {:?}",
                    g.group_id, ids
                )));
            }
        }
        let group_ids: Vec<String> = groups.iter().map(|g| g.group_id.clone()).collect();
        let assignments = create_assignments(&group_ids, &annotators, per_group, seed)?;
        let group_index: HashMap<String, usize> =
            group_ids.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
        let state = assignments
            .iter()
            .map(|a| AnnotatorState {
                queue: a.group_ids.iter().map(|g| group_index[g]).collect(),
                ..Default::default()
            })
            .collect();
        Ok(Self {
            seed,
            per_group,
            groups,
            group_index,
            annotator_index: annotators.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect(),
            annotators,
            state,
            done: HashSet::new(),
            sink,
        })
    }

    /// Builds the campaign described by `cfg`, replays `committed` records and
    /// appends future batches to `sink`.
    pub fn from_config(cfg: &CampaignConfig, sink: S, committed: &[AnnotationRecord]) -> Result<Self> {
        let groups = load_groups(&cfg.groups_manifest)?;
        let entries = groups.iter().map(GroupEntry::from).collect();
        let mut c = Campaign::new(entries, cfg.annotators.clone(), cfg.per_group, cfg.seed, sink)?;
        c.replay(committed)?;
        Ok(c)
    }

    /// Re-applies records from a log without writing them again.
    pub fn replay(&mut self, records: &[AnnotationRecord]) -> Result<()> {
        for batch in records.chunks(4) {
            let first = &batch[0];
            let (a, g) = self.lookup(&first.annotator_id, &first.group_id)?;
            let st = &self.state[a];
            let pos = st.queue.iter().position(|&q| q == g).ok_or_else(|| {
                AnnotationError::NotAssigned {
                    annotator: first.annotator_id.clone(),
                    group: first.group_id.clone(),
                }
            })?;
            if batch.len() != 4 || batch.iter().any(|r| r.annotator_id != first.annotator_id || r.group_id != first.group_id) {
                return Err(AnnotationError::Replay(format!("malformed batch at {}", first.group_id)).into());
            }
            if pos != st.cursor {
                return Err(AnnotationError::Replay(format!(
                    "{} labeled {} out of order",
                    first.annotator_id, first.group_id
                ))
                .into());
            }
            let st = &mut self.state[a];
            st.cursor += 1;
            st.elapsed_sum += first.elapsed_ms;
            st.pending = None;
            self.done.insert((a, g));
        }
        Ok(())
    }

    fn lookup(&self, annotator: &str, group: &str) -> Result<(usize, usize), AnnotationError> {
        let a = *self
            .annotator_index
            .get(annotator)
            .ok_or_else(|| AnnotationError::UnknownAnnotator(annotator.to_owned()))?;
        let g = *self
            .group_index
            .get(group)
            .ok_or_else(|| AnnotationError::UnknownGroup(group.to_owned()))?;
        Ok((a, g))
    }

    fn annotator(&self, annotator: &str) -> Result<usize, AnnotationError> {
        self.annotator_index
            .get(annotator)
            .copied()
            .ok_or_else(|| AnnotationError::UnknownAnnotator(annotator.to_owned()))
    }

    /// The annotator's current task, or `None` when their list is exhausted.
    /// Repeated calls without a submission return the same task.
    pub fn next_task(&mut self, annotator: &str) -> Result<Option<Task>, AnnotationError> {
        let a = self.annotator(annotator)?;
        let st = &mut self.state[a];
        let Some(&g) = st.queue.get(st.cursor) else {
            st.pending = None;
            return Ok(None);
        };
        st.pending = Some(g);
        Ok(Some(self.task_for(a, g)))
    }

    fn task_for(&self, a: usize, g: usize) -> Task {
        let group = &self.groups[g];
        let order = display_permutation(self.seed, a, g);
        Task {
            group_id: group.group_id.clone(),
            original_patch_id: patch_id(&group.group_id, PatchKind::Original),
            variants: order
                .iter()
                .enumerate()
                .map(|(slot, &m)| TaskVariant {
                    slot,
                    variant_id: m,
                    patch_id: patch_id(&group.group_id, PatchKind::Variant(m)),
                })
                .collect(),
            display_order: order,
        }
    }

    /// Commits four labels for the annotator's pending group.
    pub fn submit_labels(
        &mut self,
        annotator: &str,
        group: &str,
        labels: &[(u8, Label)],
        elapsed_ms: u64,
        submitted_at_ms: u64,
    ) -> Result<Ack> {
        let (a, g) = self.lookup(annotator, group)?;
        let not = |kind: fn(String, String) -> AnnotationError| kind(annotator.to_owned(), group.to_owned());
        let st = &self.state[a];
        if !st.queue.contains(&g) {
            return Err(not(|annotator, group| AnnotationError::NotAssigned { annotator, group }).into());
        }
        if self.done.contains(&(a, g)) {
            return Err(not(|annotator, group| AnnotationError::Duplicate { annotator, group }).into());
        }
        if st.pending != Some(g) {
            return Err(not(|annotator, group| AnnotationError::NotPending { annotator, group }).into());
        }
        let mut by_variant: [Option<Label>; 4] = [None; 4];
        for &(v, l) in labels {
            match by_variant.get_mut((v as usize).wrapping_sub(1)) {
                Some(slot @ None) => *slot = Some(l),
                _ => {
                    return Err(AnnotationError::IncompleteLabels(format!(
                        "bad or repeated variant id {v}"
                    ))
                    .into())
                }
            }
        }
        if labels.len() != 4 {
            return Err(AnnotationError::IncompleteLabels(format!("{} labels given", labels.len())).into());
        }

        let order = display_permutation(self.seed, a, g);
        let batch: Vec<AnnotationRecord> = by_variant
            .iter()
            .enumerate()
            .map(|(i, l)| AnnotationRecord {
                group_id: group.to_owned(),
                variant_id: i as u8 + 1,
                annotator_id: annotator.to_owned(),
                label: l.expect("all four present"),
                elapsed_ms,
                display_order: order,
                submitted_at_ms,
            })
            .collect();
        self.sink.append_batch(&batch)?;

        let st = &mut self.state[a];
        st.cursor += 1;
        st.pending = None;
        st.elapsed_sum += elapsed_ms;
        self.done.insert((a, g));
        Ok(Ack {
            labeled: st.cursor,
            remaining: st.queue.len() - st.cursor,
        })
    }

    pub fn progress(&self, annotator: Option<&str>) -> Result<Progress, AnnotationError> {
        let (labeled, total, elapsed) = match annotator {
            Some(id) => {
                let st = &self.state[self.annotator(id)?];
                (st.cursor, st.queue.len(), st.elapsed_sum)
            }
            None => self.state.iter().fold((0, 0, 0), |(l, t, e), st| {
                (l + st.cursor, t + st.queue.len(), e + st.elapsed_sum)
            }),
        };
        Ok(Progress {
            labeled,
            remaining: total - labeled,
            mean_elapsed_ms: (labeled > 0).then(|| elapsed as f64 / labeled as f64),
        })
    }

    pub fn is_complete(&self) -> bool {
        self.state.iter().all(|s| s.cursor == s.queue.len())
    }

    /// File backing a patch id, if the id names a known group.
    pub fn patch_path(&self, id: &str) -> Option<&Path> {
        let (group, kind) = parse_patch_id(id)?;
        let g = &self.groups[*self.group_index.get(group)?];
        match kind {
            PatchKind::Original => Some(&g.original),
            PatchKind::Variant(m) => g.variants.iter().find(|(v, _)| *v == m).map(|(_, p)| p.as_path()),
        }
    }

    pub fn annotators(&self) -> &[String] {
        &self.annotators
    }

    pub fn groups(&self) -> &[GroupEntry] {
        &self.groups
    }

    pub fn per_group(&self) -> usize {
        self.per_group
    }

    /// Group ids assigned to `annotator`, in serving order.
    pub fn assignment(&self, annotator: &str) -> Result<Vec<&str>, AnnotationError> {
        let st = &self.state[self.annotator(annotator)?];
        Ok(st.queue.iter().map(|&g| self.groups[g].group_id.as_str()).collect())
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn into_sink(self) -> S {
        self.sink
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annoservice::MemorySink;

    fn campaign(groups: usize, anns: usize) -> Campaign<MemorySink> {
        let g = (0..groups).map(|i| GroupEntry::synthetic(format!("g{i}"))).collect();
        let a = (0..anns).map(|i| format!("a{i}")).collect();
        Campaign::new(g, a, 3, 11, MemorySink::default()).unwrap()
    }

    fn all(label: Label) -> Vec<(u8, Label)> {
        (1..=4).map(|v| (v, label)).collect()
    }

    #[test]
    fn pending_task_is_idempotent() {
        let mut c = campaign(5, 3);
        let t1 = c.next_task("a0").unwrap().unwrap();
        let t2 = c.next_task("a0").unwrap().unwrap();
        assert_eq!(t1, t2);
        let mut ids: Vec<u8> = t1.variants.iter().map(|v| v.variant_id).collect();
        assert_eq!(ids, t1.display_order);
        ids.sort();
        assert_eq!(ids, [1, 2, 3, 4]);
    }

    #[test]
    fn submission_flow_and_errors() {
        let mut c = campaign(2, 3);
        assert!(matches!(c.next_task("zz"), Err(AnnotationError::UnknownAnnotator(_))));
        let t = c.next_task("a0").unwrap().unwrap();
        let other = c.assignment("a0").unwrap()[1].to_owned();

        // not yet served
        let e = c.submit_labels("a0", &other, &all(Label::Positive), 10, 0).unwrap_err();
        assert!(matches!(e, Error::Annotation(AnnotationError::NotPending { .. })));
        // partial
        let e = c.submit_labels("a0", &t.group_id, &all(Label::Positive)[..3], 10, 0).unwrap_err();
        assert!(matches!(e, Error::Annotation(AnnotationError::IncompleteLabels(_))));
        let mut dup = all(Label::Positive);
        dup[3].0 = 1;
        assert!(c.submit_labels("a0", &t.group_id, &dup, 10, 0).is_err());
        assert!(c.sink().records.is_empty());

        let ack = c.submit_labels("a0", &t.group_id, &all(Label::Similar), 2000, 5).unwrap();
        assert_eq!(ack, Ack { labeled: 1, remaining: 1 });
        assert_eq!(c.sink().records.len(), 4);
        for r in &c.sink().records {
            assert_eq!(r.display_order, t.display_order);
        }
        let e = c.submit_labels("a0", &t.group_id, &all(Label::Similar), 2000, 5).unwrap_err();
        assert!(matches!(e, Error::Annotation(AnnotationError::Duplicate { .. })));

        let p = c.progress(Some("a0")).unwrap();
        assert_eq!((p.labeled, p.remaining, p.mean_elapsed_ms), (1, 1, Some(2000.0)));
        let p = c.progress(None).unwrap();
        assert_eq!((p.labeled, p.remaining), (1, 5));
    }

    #[test]
    fn unassigned_group_rejected() {
        let mut c = campaign(3, 4);
        let mine: Vec<String> = c.assignment("a0").unwrap().iter().map(|s| s.to_string()).collect();
        let foreign = (0..3).map(|i| format!("g{i}")).find(|g| !mine.contains(g)).unwrap();
        let e = c.submit_labels("a0", &foreign, &all(Label::Positive), 1, 0).unwrap_err();
        assert!(matches!(e, Error::Annotation(AnnotationError::NotAssigned { .. })));
    }

    #[test]
    fn exhausted_annotator_is_done_and_progress_is_fresh() {
        let mut c = campaign(1, 3);
        assert_eq!(c.progress(None).unwrap().labeled, 0);
        assert_eq!(c.progress(None).unwrap().mean_elapsed_ms, None);
        for a in ["a0", "a1", "a2"] {
            let t = c.next_task(a).unwrap().unwrap();
            c.submit_labels(a, &t.group_id, &all(Label::Negative), 1, 0).unwrap();
            assert_eq!(c.next_task(a).unwrap(), None);
        }
        assert!(c.is_complete());
        assert_eq!(c.sink().records.len(), 12);
    }

    #[test]
    fn replay_reconstructs_state() {
        let mut c = campaign(6, 4);
        for a in ["a0", "a1", "a2", "a3"] {
            let t = c.next_task(a).unwrap().unwrap();
            c.submit_labels(a, &t.group_id, &all(Label::Positive), 1500, 0).unwrap();
        }
        let records = c.sink().records.clone();
        let mut fresh = campaign(6, 4);
        fresh.replay(&records).unwrap();
        for a in ["a0", "a1", "a2", "a3"] {
            assert_eq!(fresh.progress(Some(a)).unwrap(), c.progress(Some(a)).unwrap());
            assert_eq!(fresh.next_task(a).unwrap(), c.next_task(a).unwrap());
        }
    }

    #[test]
    fn patch_ids_round_trip() {
        let c = campaign(2, 3);
        assert!(c.patch_path("g1_orig").is_some());
        assert!(c.patch_path("g1_v3").is_some());
        assert!(c.patch_path("g1_v9").is_none());
        assert!(c.patch_path("nope_orig").is_none());
        assert_eq!(parse_patch_id("img_a-p001_v2"), Some(("img_a-p001", PatchKind::Variant(2))));
    }
}
