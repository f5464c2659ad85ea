//! Shared pipeline configuration. Every field is optional; command-line flags
//! take precedence over values read from the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use gtcurate_core::losskernel::LossWeights;
use gtcurate_core::patchsel::Thresholds;
use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub paths: PathsConfig,
    /// Severity profile name or path.
    pub profile: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub patchsel: PatchselConfig,
    #[serde(default)]
    pub campaign: CampaignSection,
    #[serde(default)]
    pub loss: LossSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub originals: Option<PathBuf>,
    pub enhanced: Option<Vec<PathBuf>>,
    pub work_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchselConfig {
    pub size: Option<usize>,
    pub want: Option<usize>,
    pub max_overlap: Option<f64>,
    pub pyramid_levels: Option<usize>,
    pub min_std_image: Option<f64>,
    pub min_std_highfreq: Option<f64>,
    pub min_diff: Option<f64>,
}

impl PatchselConfig {
    pub fn thresholds(&self) -> Thresholds {
        let d = Thresholds::default();
        Thresholds {
            min_std_image: self.min_std_image.unwrap_or(d.min_std_image),
            min_std_highfreq: self.min_std_highfreq.unwrap_or(d.min_std_highfreq),
            min_diff: self.min_diff.unwrap_or(d.min_diff),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub annotators: Option<usize>,
    pub per_group: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    /// `[alpha, beta, gamma, delta]`
    pub weights: Option<[f64; 4]>,
    pub a: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&src).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve_against(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for p in self.paths.originals.iter().chain(self.paths.enhanced.iter().flatten()) {
            if !p.exists() {
                bail!("configured path {} does not exist", p.display());
            }
        }
        if let Some(e) = &self.paths.enhanced {
            if e.len() != 4 {
                bail!("paths.enhanced must list four directories, got {}", e.len());
            }
        }
        self.loss_weights()?;
        if let Some(a) = self.loss.a {
            if !(a.is_finite() && a > 0.0) {
                bail!("loss.a must be positive, got {a}");
            }
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> anyhow::Result<Option<LossWeights>> {
        self.loss
            .weights
            .map(|[a, b, g, d]| LossWeights::new(a, b, g, d))
            .transpose()
            .context("loss.weights")
    }
}

impl PathsConfig {
    fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.originals.iter_mut().for_each(fix);
        self.work_dir.iter_mut().for_each(fix);
        self.enhanced.iter_mut().flatten().for_each(fix);
    }
}
