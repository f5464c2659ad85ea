//! loss-check and eval.

use std::path::Path;

use anyhow::{bail, Context};
use gtcurate_core::aggregate::TestItem;
use gtcurate_core::evalmetrics::{metric_by_name, multi_gt_score, Metric, MetricScore};
use gtcurate_core::imgcore::ImageBuffer;
use gtcurate_core::losskernel::{
    indication_map, l1_loss, negative_loss, residual_variance_map, total_loss, LossBreakdown, LossWeights,
    DEFAULT_EXPONENT,
};
use gtcurate_core::manifest::{manifest_dir, read_jsonl, resolve, write_jsonl};
use serde::{Deserialize, Serialize};

use crate::{EvalArgs, LossCheckArgs, PipelineConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub exponent: f64,
    pub weights: LossWeights,
    /// Pixels where the negative map is strictly above the positive one.
    pub gate_active: usize,
    pub gate_total: usize,
    pub loss: LossBreakdown,
}

/// Scales maps by their shared maximum so they stay comparable as 8-bit PNGs.
fn save_maps(dir: &Path, maps: &[(&str, &ImageBuffer)]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let max = maps
        .iter()
        .flat_map(|(_, m)| m.samples().iter().copied())
        .fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    for (name, m) in maps {
        m.map(|v| v * scale).save_png(dir.join(format!("{name}.png")))?;
    }
    Ok(())
}

pub fn loss_check_cmd(args: &LossCheckArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let load = |p: &Path| ImageBuffer::load(p).with_context(|| format!("loading {}", p.display()));
    let (pos, neg, hr, sr) = (load(&args.pos)?, load(&args.neg)?, load(&args.hr)?, load(&args.sr)?);
    let exponent = args.a.or(cfg.loss.a).unwrap_or(DEFAULT_EXPONENT);
    let weights = match &args.weights {
        Some(s) => s.parse::<LossWeights>()?,
        None => cfg.loss_weights()?.unwrap_or_default(),
    };

    let m_pos = residual_variance_map(&pos, &hr, exponent)?;
    let m_neg = residual_variance_map(&neg, &hr, exponent)?;
    let gate = indication_map(&m_neg, &m_pos)?;
    let l1 = l1_loss(&sr, &pos)?;
    let ln = negative_loss(&neg, &sr, &gate)?;
    let loss = total_loss(l1.value, args.perceptual, args.adversarial, ln.value, &weights)?;
    let report = LossReport {
        exponent,
        weights,
        gate_active: gate.active(),
        gate_total: gate.values.len(),
        loss,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(dir) = &args.dump {
        save_maps(dir, &[("m_pos", &m_pos.values), ("m_neg", &m_neg.values), ("m_ind", &gate.values)])?;
        std::fs::write(dir.join("loss.json"), format!("{json}\n"))
            .with_context(|| format!("writing {}", dir.display()))?;
    }
    println!("{json}");
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_id: String,
    pub scores: Vec<MetricScore>,
}

pub fn eval_cmd(args: &EvalArgs) -> anyhow::Result<()> {
    let metrics: Vec<Box<dyn Metric>> = args
        .metrics
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(metric_by_name)
        .collect::<Result<_, _>>()?;
    if metrics.is_empty() {
        bail!("no metrics requested");
    }
    let items: Vec<TestItem> = read_jsonl(&args.testset)?;
    let base = manifest_dir(&args.testset);

    let mut records = Vec::with_capacity(items.len());
    for item in &items {
        let sr_path = args.sr.join(format!("{}.png", item.item_id));
        let sr = ImageBuffer::load(&sr_path).with_context(|| format!("SR output for {}", item.item_id))?;
        let gts = item
            .gts
            .iter()
            .map(|g| ImageBuffer::load(resolve(&base, g)))
            .collect::<Result<Vec<_>, _>>()?;
        let scores = metrics
            .iter()
            .map(|m| multi_gt_score(&sr, &gts, m.as_ref()))
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("scoring {}", item.item_id))?;
        records.push(EvalRecord {
            item_id: item.item_id.clone(),
            scores,
        });
    }
    write_jsonl(&args.report, &records)?;
    for (i, m) in metrics.iter().enumerate() {
        let mean = records.iter().map(|r| r.scores[i].value).sum::<f64>() / records.len().max(1) as f64;
        println!("{}: {mean:.4} over {} items", m.name(), records.len());
    }
    Ok(())
}
