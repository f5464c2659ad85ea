//! Campaign subcommands: serve-annotation, simulate-campaign, aggregate.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use gtcurate_core::aggregate::{build_reports, compute_finals};
use gtcurate_core::annoservice::{
    read_record_log, AnnotationRecord, Campaign, CampaignConfig, FileLog, GroupEntry, Label, MemorySink,
};
use gtcurate_core::manifest::{load_groups, write_jsonl};
use gtcurate_server::{serve, system_clock, AppState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{AggregateArgs, LabelPolicy, PipelineConfig, ServeArgs, SimulateArgs};

pub fn serve_cmd(args: &ServeArgs) -> anyhow::Result<()> {
    let cfg = CampaignConfig::load(&args.campaign)?;
    let (log, committed) = FileLog::open(&args.log)?;
    let campaign = Campaign::from_config(&cfg, log, &committed)?;
    let progress = campaign.progress(None)?;
    println!(
        "{} groups, {} annotators, {} labeled, {} remaining; listening on http://{}",
        campaign.groups().len(),
        campaign.annotators().len(),
        progress.labeled,
        progress.remaining,
        args.bind
    );
    let state = AppState::new(campaign, system_clock());
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting runtime")?;
    rt.block_on(serve(state, args.bind))
        .with_context(|| format!("serving on {}", args.bind))
}

/// Label counts per model (Positive, Similar, Negative) of the reference campaign.
pub const REFERENCE_COUNTS: [[u64; 3]; 4] = [
    [42_362, 14_623, 3_594],
    [39_031, 17_615, 3_933],
    [47_251, 10_259, 3_069],
    [47_398, 8_407, 4_774],
];

/// Start of the simulated clock (ms since the Unix epoch).
pub const SIM_EPOCH_MS: u64 = 1_700_000_000_000;

/// Simulated per-group annotation time bounds; the mean is 22.79 s.
pub const SIM_ELAPSED_MS: (u64, u64) = (10_000, 35_580);

fn draw_label(policy: LabelPolicy, model_id: u8, rng: &mut ChaCha8Rng) -> Label {
    match policy {
        LabelPolicy::AllPositive => Label::Positive,
        LabelPolicy::Uniform => Label::ALL[rng.random_range(0..3)],
        LabelPolicy::Reference => {
            let counts = REFERENCE_COUNTS[(model_id as usize).clamp(1, 4) - 1];
            let total: u64 = counts.iter().sum();
            let mut u = rng.random_range(0..total);
            for (l, c) in Label::ALL.into_iter().zip(counts) {
                if u < c {
                    return l;
                }
                u -= c;
            }
            unreachable!("u < total")
        }
    }
}

/// Runs a campaign to completion with scripted annotators who take turns in
/// a fixed order. Deterministic in all inputs, including the clock.
pub fn simulate(
    groups: Vec<GroupEntry>,
    annotators: usize,
    per_group: usize,
    seed: u64,
    policy: LabelPolicy,
) -> anyhow::Result<Vec<AnnotationRecord>> {
    if annotators < per_group.max(3) {
        bail!("need at least {} annotators, got {annotators}", per_group.max(3));
    }
    let ids: Vec<String> = (0..annotators).map(|i| format!("ann{i:02}")).collect();
    let mut campaign = Campaign::new(groups, ids.clone(), per_group, seed, MemorySink::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5349_4d55_4c41_5445);
    let mut clock = SIM_EPOCH_MS;
    loop {
        let mut progressed = false;
        for a in &ids {
            let Some(task) = campaign.next_task(a)? else {
                continue;
            };
            let labels: Vec<(u8, Label)> = task
                .variants
                .iter()
                .map(|v| (v.variant_id, draw_label(policy, v.variant_id, &mut rng)))
                .collect();
            let elapsed = rng.random_range(SIM_ELAPSED_MS.0..=SIM_ELAPSED_MS.1);
            clock += elapsed;
            campaign.submit_labels(a, &task.group_id, &labels, elapsed, clock)?;
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    debug_assert!(campaign.is_complete());
    Ok(campaign.into_sink().records)
}

pub fn simulate_cmd(args: &SimulateArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let groups: Vec<GroupEntry> = match (&args.groups, &args.groups_manifest) {
        (Some(n), None) => (0..*n).map(|g| GroupEntry::synthetic(format!("sim-g{g:05}"))).collect(),
        (None, Some(path)) => load_groups(path)?.iter().map(GroupEntry::from).collect(),
        _ => bail!("pass exactly one of --groups or --groups-manifest"),
    };
    let annotators = args.annotators.or(cfg.campaign.annotators).unwrap_or(3);
    let per_group = args.per_group.or(cfg.campaign.per_group).unwrap_or(3);
    let seed = args.seed.or(cfg.campaign.seed).or(cfg.seed).unwrap_or(0);
    let n_groups = groups.len();
    let records = simulate(groups, annotators, per_group, seed, args.policy)?;
    write_jsonl(&args.out, &records)?;
    println!("{} records for {n_groups} groups -> {}", records.len(), args.out.display());
    Ok(())
}

fn text_path(report: &Path) -> PathBuf {
    report.with_extension("txt")
}

pub fn aggregate_cmd(args: &AggregateArgs) -> anyhow::Result<()> {
    let records = read_record_log(&args.records)?;
    let reports = build_reports(&records)?;
    let mut text = reports.to_text();
    if let Some(path) = &args.groups {
        let groups = load_groups(path)?;
        let finals = compute_finals(&records)?;
        let mut complete = std::collections::HashMap::<&str, usize>::new();
        for f in &finals {
            *complete.entry(f.group_id.as_str()).or_default() += 1;
        }
        let missing = groups
            .iter()
            .filter(|g| complete.get(g.group_id.as_str()).copied().unwrap_or(0) < g.variants.len())
            .count();
        text.push_str(&format!(
            "Groups in manifest: {}, without complete final labels: {missing}\n",
            groups.len()
        ));
    }
    if let Some(dir) = args.report.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&args.report, reports.to_jsonl())
        .with_context(|| format!("writing {}", args.report.display()))?;
    let txt = text_path(&args.report);
    std::fs::write(&txt, &text).with_context(|| format!("writing {}", txt.display()))?;
    if let Some(path) = &args.finals {
        write_jsonl(path, &compute_finals(&records)?)?;
    }
    print!("{text}");
    Ok(())
}
