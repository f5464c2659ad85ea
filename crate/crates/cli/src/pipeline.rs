//! Image-producing subcommands: degrade, make-groups, export-pairs,
//! build-testset.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use gtcurate_core::aggregate::{build_testset, compute_finals, export_pairs, ExportMode, LrRef};
use gtcurate_core::annoservice::read_record_log;
use gtcurate_core::degrade::{degrade, degrade_to_lr, sample_recipe, upsample_back, DegradationRecipe, SeverityProfile};
use gtcurate_core::imgcore::ImageBuffer;
use gtcurate_core::manifest::{load_groups, manifest_dir, relative_to, write_jsonl, GroupRecord, GroupScores};
use gtcurate_core::patchsel::{select_groups, SelectParams, DEFAULT_MAX_OVERLAP, DEFAULT_PATCH_SIZE, DEFAULT_PYRAMID_LEVELS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{DegradeArgs, ExportArgs, ExportModeArg, LrArgs, MakeGroupsArgs, PipelineConfig, TestsetArgs};

pub const DEFAULT_PROFILE: &str = "single-stage-moderate";

/// Independent per-item seed: the first 8 bytes of `sha256(seed || label)`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// PNG and JPEG files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> anyhow::Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .with_context(|| format!("non-UTF-8 file name {}", path.display()))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn profile(flag: &Option<String>, cfg: &PipelineConfig) -> anyhow::Result<SeverityProfile> {
    let name = flag.as_deref().or(cfg.profile.as_deref()).unwrap_or(DEFAULT_PROFILE);
    SeverityProfile::resolve(name).with_context(|| format!("loading profile {name:?}"))
}

/// One line of the degrade manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeRecord {
    pub source: String,
    pub output: String,
    /// HR region used, `[height, width]`; smaller than the source when it had
    /// to be cropped to a multiple of the scale.
    pub hr_size: [usize; 2],
    pub scale: usize,
    pub recipe: DegradationRecipe,
}

pub fn degrade_cmd(args: &DegradeArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let input = args
        .input
        .as_ref()
        .or(cfg.paths.originals.as_ref())
        .context("no input directory: pass --in or set paths.originals")?;
    if args.scale == 0 {
        bail!("--scale must be at least 1");
    }
    let profile = profile(&args.profile, cfg)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    create_dir(&args.out)?;
    let base = manifest_dir(&args.manifest);

    let mut records = Vec::new();
    for path in list_images(input)? {
        let name = stem(&path)?;
        let hr = ImageBuffer::load(&path)?;
        let recipe = sample_recipe(&profile, derive_seed(seed, &name));
        let (lq, hr_size) = if args.scale == 1 {
            let lq = degrade(&hr, &recipe)?;
            (upsample_back(&lq, hr.height(), hr.width())?, [hr.height(), hr.width()])
        } else {
            let h = hr.height() / args.scale * args.scale;
            let w = hr.width() / args.scale * args.scale;
            let hr = hr.crop(0, 0, h, w)?;
            (degrade_to_lr(&hr, &recipe, args.scale)?, [h, w])
        };
        let out = args.out.join(format!("{name}.png"));
        lq.save_png(&out)?;
        records.push(DegradeRecord {
            source: relative_to(&path, &base),
            output: relative_to(&out, &base),
            hr_size,
            scale: args.scale,
            recipe,
        });
    }
    write_jsonl(&args.manifest, &records)?;
    println!("degraded {} images -> {}", records.len(), args.manifest.display());
    Ok(())
}

/// The file in `dir` with the given stem, trying `.png` then `.jpg` and `.jpeg`.
fn find_by_stem(dir: &Path, stem: &str) -> anyhow::Result<PathBuf> {
    ["png", "jpg", "jpeg"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
        .with_context(|| format!("no enhanced image for {stem} in {}", dir.display()))
}

pub fn make_groups_cmd(args: &MakeGroupsArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let orig_dir = args
        .orig
        .as_ref()
        .or(cfg.paths.originals.as_ref())
        .context("no originals: pass --orig or set paths.originals")?;
    let enhanced = args
        .enhanced
        .as_ref()
        .or(cfg.paths.enhanced.as_ref())
        .context("no enhanced directories: pass --enhanced x4 or set paths.enhanced")?;
    if enhanced.len() != 4 {
        bail!("need exactly four enhanced directories");
    }
    let pc = &cfg.patchsel;
    let defaults = cfg.patchsel.thresholds();
    let thresholds = gtcurate_core::patchsel::Thresholds {
        min_std_image: args.min_std_image.unwrap_or(defaults.min_std_image),
        min_std_highfreq: args.min_std_highfreq.unwrap_or(defaults.min_std_highfreq),
        min_diff: args.min_diff.unwrap_or(defaults.min_diff),
    };
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let base_params = SelectParams {
        size: args.size.or(pc.size).unwrap_or(DEFAULT_PATCH_SIZE),
        max_overlap_fraction: args.max_overlap.or(pc.max_overlap).unwrap_or(DEFAULT_MAX_OVERLAP),
        pyramid_levels: args.pyramid_levels.or(pc.pyramid_levels).unwrap_or(DEFAULT_PYRAMID_LEVELS),
        thresholds,
        want: args.want.or(pc.want).unwrap_or(SelectParams::default().want),
        seed,
    };
    create_dir(&args.out)?;
    let base = manifest_dir(&args.manifest);

    let mut records = Vec::new();
    let mut skipped = 0usize;
    for path in list_images(orig_dir)? {
        let name = stem(&path)?;
        let orig = ImageBuffer::load(&path)?;
        let mut variants = Vec::with_capacity(4);
        for dir in enhanced {
            let p = find_by_stem(dir, &name)?;
            variants.push(ImageBuffer::load(&p)?);
        }
        let variants: [ImageBuffer; 4] = variants.try_into().expect("four variants");
        if orig.height() < base_params.size || orig.width() < base_params.size {
            eprintln!("skipping {name}: smaller than a {} px patch", base_params.size);
            skipped += 1;
            continue;
        }
        let params = SelectParams {
            seed: derive_seed(seed, &name),
            ..base_params.clone()
        };
        let groups = select_groups(&name, &orig, &variants, &params)
            .with_context(|| format!("selecting patches of {}", path.display()))?;
        for g in groups {
            let orig_path = args.out.join(format!("{}_orig.png", g.group_id));
            g.original.save_png(&orig_path)?;
            let mut variant_paths = Vec::with_capacity(4);
            for v in &g.variants {
                let p = args.out.join(format!("{}_v{}.png", g.group_id, v.model_id));
                v.image.save_png(&p)?;
                variant_paths.push(relative_to(&p, &base));
            }
            records.push(GroupRecord {
                source: relative_to(&path, &base),
                x: g.spec.x,
                y: g.spec.y,
                size: g.spec.size,
                original: relative_to(&orig_path, &base),
                variants: variant_paths,
                model_ids: g.variants.iter().map(|v| v.model_id).collect(),
                scores: GroupScores {
                    std_image: g.score.std_image,
                    std_highfreq: g.score.std_highfreq,
                    differences: g.variants.iter().map(|v| v.difference).collect(),
                },
                group_id: g.group_id,
            });
        }
    }
    write_jsonl(&args.manifest, &records)?;
    println!(
        "{} groups -> {}{}",
        records.len(),
        args.manifest.display(),
        if skipped > 0 { format!(" ({skipped} images skipped)") } else { String::new() }
    );
    Ok(())
}

/// Generates (or regenerates) the LR input of a group from its original HR
/// patch. The recipe is seeded by the group id, so export-pairs and
/// build-testset agree on the LR of every group.
pub struct LrMaker {
    profile: SeverityProfile,
    seed: u64,
    scale: usize,
    dir: PathBuf,
    base: PathBuf,
}

impl LrMaker {
    pub fn new(args: &LrArgs, cfg: &PipelineConfig, out_manifest: &Path) -> anyhow::Result<Self> {
        if args.scale == 0 {
            bail!("--scale must be at least 1");
        }
        let base = manifest_dir(out_manifest);
        let dir = args.lr_dir.clone().unwrap_or_else(|| base.join("lr"));
        create_dir(&dir)?;
        Ok(Self {
            profile: profile(&args.profile, cfg)?,
            seed: args.seed.or(cfg.seed).unwrap_or(0),
            scale: args.scale,
            dir,
            base,
        })
    }

    pub fn lr_for(&self, g: &GroupRecord) -> gtcurate_core::Result<Option<LrRef>> {
        let hr = ImageBuffer::load(&g.original)?;
        let recipe = sample_recipe(&self.profile, derive_seed(self.seed, &g.group_id));
        let lr = degrade_to_lr(&hr, &recipe, self.scale)?;
        let path = self.dir.join(format!("{}.png", g.group_id));
        lr.save_png(&path)?;
        Ok(Some(LrRef {
            path: relative_to(&path, &self.base),
            recipe,
        }))
    }

    /// A manifest path re-expressed relative to the output manifest.
    pub fn rel(&self, p: &str) -> String {
        relative_to(Path::new(p), &self.base)
    }
}

fn load_labeled(args: &LrArgs) -> anyhow::Result<(Vec<GroupRecord>, Vec<gtcurate_core::aggregate::FinalLabel>)> {
    let groups = load_groups(&args.groups)?;
    let records = read_record_log(&args.records)?;
    let finals = compute_finals(&records)?;
    Ok((groups, finals))
}

pub fn export_pairs_cmd(args: &ExportArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let (groups, finals) = load_labeled(&args.lr)?;
    let lr = LrMaker::new(&args.lr, cfg, &args.out)?;
    let mode = match args.mode {
        ExportModeArg::Pos => ExportMode::PositiveOnly,
        ExportModeArg::Posneg => ExportMode::PositiveAndNegative,
    };
    let mut pairs = export_pairs(&groups, &finals, mode, |g| lr.lr_for(g))?;
    for p in &mut pairs {
        p.gt = lr.rel(&p.gt);
        p.original_hr = lr.rel(&p.original_hr);
    }
    write_jsonl(&args.out, &pairs)?;
    let groups_out: std::collections::BTreeSet<&str> = pairs.iter().map(|p| p.group_id.as_str()).collect();
    println!("{} pairs from {} groups -> {}", pairs.len(), groups_out.len(), args.out.display());
    Ok(())
}

pub fn build_testset_cmd(args: &TestsetArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let (groups, finals) = load_labeled(&args.lr)?;
    let lr = LrMaker::new(&args.lr, cfg, &args.out)?;
    let seed = args.lr.seed.or(cfg.seed).unwrap_or(0);
    let mut items = build_testset(&groups, &finals, args.min_positive, args.count, seed, |g| lr.lr_for(g))?;
    for it in &mut items {
        it.original_hr = lr.rel(&it.original_hr);
        for gt in &mut it.gts {
            *gt = lr.rel(gt);
        }
    }
    write_jsonl(&args.out, &items)?;
    println!("{} test items -> {}", items.len(), args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
    }

    #[test]
    fn lists_only_images_sorted() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["b.png", "a.JPG", "c.txt", "d.jpeg"] {
            std::fs::write(dir.path().join(f), b"x").unwrap();
        }
        let names: Vec<_> = list_images(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["a.JPG", "b.png", "d.jpeg"]);
    }
}
