//! Majority-vote final labels, campaign statistics, and export of training
//! pairs and test sets.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annoservice::{AnnotationRecord, Label};
use crate::degrade::DegradationRecipe;
use crate::error::{Error, Result};
use crate::manifest::GroupRecord;

/// Majority of three votes; a three-way split is `Similar`.
pub fn final_label(votes: &[Label]) -> Result<Label> {
    if votes.len() != 3 {
        return Err(Error::InvalidParam(format!("{} votes, expected 3", votes.len())));
    }
    let mut counts = [0usize; 3];
    for v in votes {
        counts[v.index()] += 1;
    }
    Ok(Label::ALL
        .into_iter()
        .find(|l| counts[l.index()] >= 2)
        .unwrap_or(Label::Similar))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteBreakdown {
    pub n_pos: u32,
    pub n_sim: u32,
    pub n_neg: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalLabel {
    pub group_id: String,
    pub variant_id: u8,
    pub label: Label,
    pub votes: VoteBreakdown,
}

/// Final labels for every (group, variant) holding exactly three votes, sorted
/// by group id then variant. Keys with fewer votes are skipped (partial
/// campaigns); more than three is an error.
pub fn compute_finals(records: &[AnnotationRecord]) -> Result<Vec<FinalLabel>> {
    let mut votes: BTreeMap<(&str, u8), Vec<Label>> = BTreeMap::new();
    for r in records {
        votes.entry((&r.group_id, r.variant_id)).or_default().push(r.label);
    }
    let mut out = Vec::with_capacity(votes.len());
    for ((group, variant), vs) in votes {
        if vs.len() > 3 {
            return Err(Error::InvalidParam(format!(
                "{group}/{variant} has {} votes",
                vs.len()
            )));
        }
        if vs.len() < 3 {
            continue;
        }
        let mut b = VoteBreakdown::default();
        for v in &vs {
            match v {
                Label::Positive => b.n_pos += 1,
                Label::Similar => b.n_sim += 1,
                Label::Negative => b.n_neg += 1,
            }
        }
        out.push(FinalLabel {
            group_id: group.to_owned(),
            variant_id: variant,
            label: final_label(&vs)?,
            votes: b,
        });
    }
    Ok(out)
}

/// Label counts indexed `[Positive, Similar, Negative]`.
pub type LabelCounts = [u64; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reports {
    /// Per model id (1..=4): raw annotation counts.
    pub annotations: BTreeMap<u8, LabelCounts>,
    /// Per model id: final-label counts.
    pub finals: BTreeMap<u8, LabelCounts>,
    /// `positive_histogram[k]` = groups with exactly `k` positive finals
    /// (groups with all four variants finalized).
    pub positive_histogram: [u64; 5],
    /// Mean per-group annotation time over distinct (annotator, group) submissions.
    pub mean_elapsed_ms: Option<f64>,
    pub record_count: u64,
}

impl Reports {
    pub fn annotation_totals(&self) -> LabelCounts {
        sum_counts(self.annotations.values())
    }

    pub fn final_totals(&self) -> LabelCounts {
        sum_counts(self.finals.values())
    }

    pub fn histogram_groups(&self) -> u64 {
        self.positive_histogram.iter().sum()
    }

    /// `sum_k k * groups_k`, which must equal the positive final total.
    pub fn histogram_positives(&self) -> u64 {
        self.positive_histogram
            .iter()
            .enumerate()
            .map(|(k, &n)| k as u64 * n)
            .sum()
    }

    /// Machine-readable rows, one JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |v: serde_json::Value| {
            out.push_str(&v.to_string());
            out.push('\n');
        };
        for (table, rows) in [("annotations", &self.annotations), ("finals", &self.finals)] {
            for (model, c) in rows {
                push(serde_json::json!({
                    "table": table, "model": model,
                    "positive": c[0], "similar": c[1], "negative": c[2],
                    "total": c.iter().sum::<u64>(),
                }));
            }
            let t = sum_counts(rows.values());
            push(serde_json::json!({
                "table": table, "model": "total",
                "positive": t[0], "similar": t[1], "negative": t[2],
                "total": t.iter().sum::<u64>(),
            }));
        }
        for (k, n) in self.positive_histogram.iter().enumerate() {
            push(serde_json::json!({"table": "positive_histogram", "positives": k, "groups": n}));
        }
        push(serde_json::json!({
            "table": "summary",
            "records": self.record_count,
            "groups": self.histogram_groups(),
            "mean_elapsed_ms": self.mean_elapsed_ms,
        }));
        out
    }

    /// Aligned plain-text tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (title, rows) in [
            ("Annotations per model", &self.annotations),
            ("Final labels per model", &self.finals),
        ] {
            let _ = writeln!(s, "{title}");
            let _ = write!(s, "{:<10}", "Label");
            for m in rows.keys() {
                let _ = write!(s, "{:>10}", format!("model {m}"));
            }
            let _ = writeln!(s, "{:>10}", "Total");
            for l in Label::ALL {
                let _ = write!(s, "{:<10}", l.to_string());
                for c in rows.values() {
                    let _ = write!(s, "{:>10}", c[l.index()]);
                }
                let t = sum_counts(rows.values());
                let _ = writeln!(s, "{:>10}", t[l.index()]);
            }
            let _ = write!(s, "{:<10}", "Total");
            for c in rows.values() {
                let _ = write!(s, "{:>10}", c.iter().sum::<u64>());
            }
            let _ = writeln!(s, "{:>10}\n", sum_counts(rows.values()).iter().sum::<u64>());
        }
        let _ = writeln!(s, "Positive finals per group");
        let _ = write!(s, "{:<10}", "Count");
        for k in 0..5 {
            let _ = write!(s, "{k:>8}");
        }
        let _ = writeln!(s, "{:>8}", "Total");
        let _ = write!(s, "{:<10}", "Groups");
        for n in self.positive_histogram {
            let _ = write!(s, "{n:>8}");
        }
        let _ = writeln!(s, "{:>8}\n", self.histogram_groups());
        match self.mean_elapsed_ms {
            Some(ms) => {
                let _ = writeln!(s, "Mean annotation time per group: {:.2}s", ms / 1000.0);
            }
            None => {
                let _ = writeln!(s, "Mean annotation time per group: n/a");
            }
        }
        s
    }
}

fn sum_counts<'a>(rows: impl Iterator<Item = &'a LabelCounts>) -> LabelCounts {
    rows.fold([0; 3], |mut acc, c| {
        for i in 0..3 {
            acc[i] += c[i];
        }
        acc
    })
}

pub fn build_reports(records: &[AnnotationRecord]) -> Result<Reports> {
    let mut annotations: BTreeMap<u8, LabelCounts> = BTreeMap::new();
    let mut elapsed: HashMap<(&str, &str), u64> = HashMap::new();
    for r in records {
        annotations.entry(r.variant_id).or_default()[r.label.index()] += 1;
        elapsed.insert((&r.annotator_id, &r.group_id), r.elapsed_ms);
    }
    let finals_list = compute_finals(records)?;
    let mut finals: BTreeMap<u8, LabelCounts> = BTreeMap::new();
    let mut per_group: BTreeMap<&str, (u32, u32)> = BTreeMap::new(); // (finalized variants, positives)
    for f in &finals_list {
        finals.entry(f.variant_id).or_default()[f.label.index()] += 1;
        let e = per_group.entry(&f.group_id).or_default();
        e.0 += 1;
        e.1 += u32::from(f.label == Label::Positive);
    }
    let mut positive_histogram = [0u64; 5];
    for (n, pos) in per_group.values() {
        if *n == 4 {
            positive_histogram[*pos as usize] += 1;
        }
    }
    let mean_elapsed_ms = (!elapsed.is_empty())
        .then(|| elapsed.values().sum::<u64>() as f64 / elapsed.len() as f64);
    Ok(Reports {
        annotations,
        finals,
        positive_histogram,
        mean_elapsed_ms,
        record_count: records.len() as u64,
    })
}

/// Final labels of one group, keyed by variant id.
pub fn finals_by_group(finals: &[FinalLabel]) -> HashMap<&str, BTreeMap<u8, Label>> {
    let mut out: HashMap<&str, BTreeMap<u8, Label>> = HashMap::new();
    for f in finals {
        out.entry(&f.group_id).or_default().insert(f.variant_id, f.label);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportMode {
    PositiveOnly,
    PositiveAndNegative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// The low-resolution input generated for a group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrRef {
    pub path: String,
    pub recipe: DegradationRecipe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub lr: String,
    pub gt: String,
    pub polarity: Polarity,
    pub group_id: String,
    pub variant_id: u8,
    pub original_hr: String,
    pub recipe: DegradationRecipe,
}

/// Groups that survive `mode`, in manifest order.
pub fn exported_groups<'a>(
    groups: &'a [GroupRecord],
    finals: &[FinalLabel],
    mode: ExportMode,
) -> Vec<&'a GroupRecord> {
    let by_group = finals_by_group(finals);
    groups
        .iter()
        .filter(|g| {
            by_group.get(g.group_id.as_str()).is_some_and(|labels| {
                let has = |l| labels.values().any(|&x| x == l);
                match mode {
                    ExportMode::PositiveOnly => has(Label::Positive),
                    ExportMode::PositiveAndNegative => has(Label::Positive) || has(Label::Negative),
                }
            })
        })
        .collect()
}

/// Training pairs for every Positive (and, in `PositiveAndNegative` mode,
/// Negative) variant. Similar variants are never exported. `lr_for` supplies
/// the LR input of a group; it is only called for groups that are kept.
pub fn export_pairs(
    groups: &[GroupRecord],
    finals: &[FinalLabel],
    mode: ExportMode,
    mut lr_for: impl FnMut(&GroupRecord) -> Result<Option<LrRef>>,
) -> Result<Vec<TrainingPair>> {
    let by_group = finals_by_group(finals);
    let mut out = Vec::new();
    for g in exported_groups(groups, finals, mode) {
        let lr = lr_for(g)?.ok_or_else(|| Error::MissingLr(g.group_id.clone()))?;
        for (&variant, &label) in &by_group[g.group_id.as_str()] {
            let polarity = match (label, mode) {
                (Label::Positive, _) => Polarity::Positive,
                (Label::Negative, ExportMode::PositiveAndNegative) => Polarity::Negative,
                _ => continue,
            };
            let gt = g
                .variant_path(variant)
                .ok_or_else(|| Error::Config(format!("group {} has no variant {variant}", g.group_id)))?;
            out.push(TrainingPair {
                lr: lr.path.clone(),
                gt: gt.to_owned(),
                polarity,
                group_id: g.group_id.clone(),
                variant_id: variant,
                original_hr: g.original.clone(),
                recipe: lr.recipe,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestItem {
    pub item_id: String,
    pub lr: String,
    pub original_hr: String,
    /// Every positive GT of the group.
    pub gts: Vec<String>,
    pub variant_ids: Vec<u8>,
    pub recipe: DegradationRecipe,
}

/// Groups with at least `min_positive` positive finals, in manifest order.
pub fn qualifying_groups<'a>(
    groups: &'a [GroupRecord],
    finals: &[FinalLabel],
    min_positive: usize,
) -> Vec<&'a GroupRecord> {
    let by_group = finals_by_group(finals);
    groups
        .iter()
        .filter(|g| {
            by_group.get(g.group_id.as_str()).is_some_and(|labels| {
                labels.values().filter(|&&l| l == Label::Positive).count() >= min_positive
            })
        })
        .collect()
}

/// Seeded sample of `count` qualifying groups (kept in manifest order), each
/// with its LR and all of its positive GTs.
pub fn build_testset(
    groups: &[GroupRecord],
    finals: &[FinalLabel],
    min_positive: usize,
    count: usize,
    seed: u64,
    mut lr_for: impl FnMut(&GroupRecord) -> Result<Option<LrRef>>,
) -> Result<Vec<TestItem>> {
    let qualifying = qualifying_groups(groups, finals, min_positive);
    if qualifying.len() < count {
        return Err(Error::NotEnoughGroups {
            wanted: count,
            available: qualifying.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = (0..qualifying.len()).collect();
    let mut chosen: Vec<usize> = indices.choose_multiple(&mut rng, count).copied().collect();
    chosen.sort_unstable();

    let by_group = finals_by_group(finals);
    chosen
        .into_iter()
        .map(|i| {
            let g = qualifying[i];
            let lr = lr_for(g)?.ok_or_else(|| Error::MissingLr(g.group_id.clone()))?;
            let positives: Vec<u8> = by_group[g.group_id.as_str()]
                .iter()
                .filter(|(_, &l)| l == Label::Positive)
                .map(|(&v, _)| v)
                .collect();
            let gts = positives
                .iter()
                .map(|&v| {
                    g.variant_path(v)
                        .map(str::to_owned)
                        .ok_or_else(|| Error::Config(format!("group {} has no variant {v}", g.group_id)))
                })
                .collect::<Result<_>>()?;
            Ok(TestItem {
                item_id: g.group_id.clone(),
                lr: lr.path,
                original_hr: g.original.clone(),
                gts,
                variant_ids: positives,
                recipe: lr.recipe,
            })
        })
        .collect()
}
