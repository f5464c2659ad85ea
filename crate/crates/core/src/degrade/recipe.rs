use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::BlurMode;
use crate::error::{Error, Result};
use crate::imgcore::ResizeFilter;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurParams {
    pub mode: BlurMode,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Radians.
    pub theta: f64,
    pub ksize: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResizeParams {
    /// Output size as a fraction of the input, `0 < scale <= 1`.
    pub scale: f64,
    pub filter: ResizeFilter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    Poisson,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub kind: NoiseKind,
    /// Gaussian standard deviation in `[0, 1]` sample units; 0 disables.
    pub sigma: f64,
    /// Poisson photon scale: samples are `Poisson(x * 255 * level) / (255 * level)`.
    pub level: f64,
    /// Share one noise draw across channels.
    pub gray: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JpegParams {
    pub quality: u8,
    pub enabled: bool,
}

/// Every parameter of one blur -> resize -> noise -> JPEG degradation,
/// including the seed that drives the noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecipe {
    pub blur: BlurParams,
    pub resize: ResizeParams,
    pub noise: NoiseParams,
    pub jpeg: JpegParams,
    pub seed: u64,
}

impl DegradationRecipe {
    /// No blur, no resize, no noise, no JPEG.
    pub fn identity(seed: u64) -> Self {
        Self {
            blur: BlurParams {
                mode: BlurMode::Iso,
                sigma_x: 1.0,
                sigma_y: 1.0,
                theta: 0.0,
                ksize: 1,
            },
            resize: ResizeParams {
                scale: 1.0,
                filter: ResizeFilter::Bicubic,
            },
            noise: NoiseParams {
                kind: NoiseKind::Gaussian,
                sigma: 0.0,
                level: 1.0,
                gray: false,
            },
            jpeg: JpegParams {
                quality: 95,
                enabled: false,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.blur;
        if !(b.sigma_x > 0.0 && b.sigma_y > 0.0) {
            return Err(Error::InvalidParam("blur sigmas must be positive".into()));
        }
        if b.ksize.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!("blur ksize {} is not odd", b.ksize)));
        }
        if !(self.resize.scale > 0.0 && self.resize.scale <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "resize scale {} outside (0, 1]",
                self.resize.scale
            )));
        }
        let n = &self.noise;
        if !(n.sigma >= 0.0 && n.sigma.is_finite()) {
            return Err(Error::InvalidParam("noise sigma must be >= 0".into()));
        }
        if n.kind == NoiseKind::Poisson && !(n.level > 0.0 && n.level.is_finite()) {
            return Err(Error::InvalidParam("poisson level must be > 0".into()));
        }
        if !(1..=100).contains(&self.jpeg.quality) {
            return Err(Error::InvalidParam(format!(
                "jpeg quality {} outside [1, 100]",
                self.jpeg.quality
            )));
        }
        Ok(())
    }
}

/// Closed interval, written `[min, max]` in profile files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span(pub f64, pub f64);

impl Span {
    pub fn min(self) -> f64 {
        self.0
    }

    pub fn max(self) -> f64 {
        self.1
    }

    fn lerp(self, u: f64) -> f64 {
        self.0 + (self.1 - self.0) * u
    }

    fn check(self, what: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite() && self.0 <= self.1) {
            return Err(Error::Config(format!("{what}: bad range [{}, {}]", self.0, self.1)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlurRanges {
    pub sigma: Span,
    /// Odd kernel side lengths, inclusive.
    pub ksize: [usize; 2],
    pub prob_aniso: f64,
    pub theta: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResizeRanges {
    pub scale: Span,
    #[serde(default)]
    pub filter: ResizeFilter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRanges {
    pub prob_poisson: f64,
    /// Gaussian sigma in 8-bit levels (divided by 255 when sampled).
    pub gaussian_sigma_255: Span,
    pub poisson_level: Span,
    pub prob_gray: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JpegRanges {
    pub prob_enabled: f64,
    pub quality: [u8; 2],
}

/// Named parameter bounds from which recipes are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeverityProfile {
    pub name: String,
    pub blur: BlurRanges,
    pub resize: ResizeRanges,
    pub noise: NoiseRanges,
    pub jpeg: JpegRanges,
}

const BUILTIN: [(&str, &str); 3] = [
    ("noise-heavy", include_str!("../../profiles/noise-heavy.toml")),
    ("blur-heavy", include_str!("../../profiles/blur-heavy.toml")),
    (
        "single-stage-moderate",
        include_str!("../../profiles/single-stage-moderate.toml"),
    ),
];

impl SeverityProfile {
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    pub fn builtin(name: &str) -> Option<SeverityProfile> {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, src)| Self::from_toml_str(src).expect("shipped profile is valid"))
    }

    pub fn from_toml_str(src: &str) -> Result<SeverityProfile> {
        let p: SeverityProfile = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// A built-in name, or a path to a TOML profile.
    pub fn resolve(name_or_path: &str) -> Result<SeverityProfile> {
        if let Some(p) = Self::builtin(name_or_path) {
            return Ok(p);
        }
        let path = Path::new(name_or_path);
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&src)
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64, what: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{what}: probability {p} outside [0, 1]")))
            }
        };
        self.blur.sigma.check("blur.sigma")?;
        if self.blur.sigma.min() <= 0.0 {
            return Err(Error::Config("blur.sigma must be positive".into()));
        }
        let [k0, k1] = self.blur.ksize;
        if k0 % 2 == 0 || k1 % 2 == 0 || k0 > k1 {
            return Err(Error::Config(format!("blur.ksize [{k0}, {k1}] must be odd and ordered")));
        }
        prob(self.blur.prob_aniso, "blur.prob_aniso")?;
        self.blur.theta.check("blur.theta")?;
        self.resize.scale.check("resize.scale")?;
        if self.resize.scale.min() <= 0.0 || self.resize.scale.max() > 1.0 {
            return Err(Error::Config("resize.scale must lie in (0, 1]".into()));
        }
        prob(self.noise.prob_poisson, "noise.prob_poisson")?;
        self.noise.gaussian_sigma_255.check("noise.gaussian_sigma_255")?;
        if self.noise.gaussian_sigma_255.min() < 0.0 {
            return Err(Error::Config("noise.gaussian_sigma_255 must be >= 0".into()));
        }
        self.noise.poisson_level.check("noise.poisson_level")?;
        if self.noise.poisson_level.min() <= 0.0 {
            return Err(Error::Config("noise.poisson_level must be positive".into()));
        }
        prob(self.noise.prob_gray, "noise.prob_gray")?;
        prob(self.jpeg.prob_enabled, "jpeg.prob_enabled")?;
        let [q0, q1] = self.jpeg.quality;
        if q0 == 0 || q1 > 100 || q0 > q1 {
            return Err(Error::Config(format!("jpeg.quality [{q0}, {q1}] must lie in [1, 100]")));
        }
        Ok(())
    }
}

fn pick_int(lo: usize, hi: usize, step: usize, u: f64) -> usize {
    let count = (hi - lo) / step + 1;
    lo + step * ((u * count as f64) as usize).min(count - 1)
}

/// Draws a recipe uniformly from `profile`. Every field is drawn in a fixed
/// order whether or not it ends up used, so the stream stays aligned across
/// branches. The profile must have passed [`SeverityProfile::validate`].
pub fn sample_recipe(profile: &SeverityProfile, seed: u64) -> DegradationRecipe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = || rng.random::<f64>();

    let aniso = u() < profile.blur.prob_aniso;
    let sigma_x = profile.blur.sigma.lerp(u());
    let sigma_y = profile.blur.sigma.lerp(u());
    let theta = profile.blur.theta.lerp(u());
    let [k0, k1] = profile.blur.ksize;
    let ksize = pick_int(k0, k1, 2, u());
    let scale = profile.resize.scale.lerp(u());
    let poisson = u() < profile.noise.prob_poisson;
    let sigma = profile.noise.gaussian_sigma_255.lerp(u()) / 255.0;
    let level = profile.noise.poisson_level.lerp(u());
    let gray = u() < profile.noise.prob_gray;
    let jpeg_on = u() < profile.jpeg.prob_enabled;
    let [q0, q1] = profile.jpeg.quality;
    let quality = pick_int(q0 as usize, q1 as usize, 1, u()) as u8;

    let blur = if aniso {
        BlurParams {
            mode: BlurMode::Aniso,
            sigma_x,
            sigma_y,
            theta,
            ksize,
        }
    } else {
        BlurParams {
            mode: BlurMode::Iso,
            sigma_x,
            sigma_y: sigma_x,
            theta: 0.0,
            ksize,
        }
    };
    DegradationRecipe {
        blur,
        resize: ResizeParams {
            scale,
            filter: profile.resize.filter,
        },
        noise: NoiseParams {
            kind: if poisson { NoiseKind::Poisson } else { NoiseKind::Gaussian },
            sigma,
            level,
            gray,
        },
        jpeg: JpegParams {
            quality,
            enabled: jpeg_on,
        },
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degenerate() -> SeverityProfile {
        SeverityProfile {
            name: "fixed".into(),
            blur: BlurRanges {
                sigma: Span(1.2, 1.2),
                ksize: [7, 7],
                prob_aniso: 0.0,
                theta: Span(0.0, 0.0),
            },
            resize: ResizeRanges {
                scale: Span(0.5, 0.5),
                filter: ResizeFilter::Bicubic,
            },
            noise: NoiseRanges {
                prob_poisson: 0.0,
                gaussian_sigma_255: Span(5.1, 5.1),
                poisson_level: Span(2.0, 2.0),
                prob_gray: 1.0,
            },
            jpeg: JpegRanges {
                prob_enabled: 1.0,
                quality: [80, 80],
            },
        }
    }

    #[test]
    fn builtin_profiles_parse_and_validate() {
        let names: Vec<_> = SeverityProfile::builtin_names().collect();
        assert_eq!(names, ["noise-heavy", "blur-heavy", "single-stage-moderate"]);
        for n in names {
            let p = SeverityProfile::builtin(n).unwrap();
            assert_eq!(p.name, n);
        }
        let nh = SeverityProfile::builtin("noise-heavy").unwrap();
        assert_eq!(nh.noise.gaussian_sigma_255, Span(2.0, 15.0));
        assert_eq!(nh.blur.sigma, Span(0.2, 1.5));
        let bh = SeverityProfile::builtin("blur-heavy").unwrap();
        assert_eq!(bh.blur.sigma, Span(0.5, 3.0));
        assert_eq!(bh.noise.gaussian_sigma_255, Span(1.0, 8.0));
        let ss = SeverityProfile::builtin("single-stage-moderate").unwrap();
        assert_eq!(ss.blur.sigma, Span(0.2, 2.0));
        assert_eq!(ss.noise.gaussian_sigma_255, Span(1.0, 10.0));
        assert_eq!(ss.jpeg.quality, [60, 95]);
        assert_eq!(ss.jpeg.prob_enabled, 0.75);
    }

    #[test]
    fn same_seed_same_recipe() {
        let p = SeverityProfile::builtin("single-stage-moderate").unwrap();
        assert_eq!(sample_recipe(&p, 99), sample_recipe(&p, 99));
        assert_ne!(sample_recipe(&p, 99), sample_recipe(&p, 100));
        assert_eq!(sample_recipe(&p, 99).seed, 99);
    }

    #[test]
    fn degenerate_ranges_give_the_single_recipe() {
        let p = degenerate();
        let r = sample_recipe(&p, 12345);
        assert_eq!(r.blur.mode, BlurMode::Iso);
        assert_eq!((r.blur.sigma_x, r.blur.sigma_y, r.blur.ksize), (1.2, 1.2, 7));
        assert_eq!(r.resize.scale, 0.5);
        assert_eq!(r.noise.kind, NoiseKind::Gaussian);
        assert!((r.noise.sigma - 5.1 / 255.0).abs() < 1e-15);
        assert!(r.noise.gray);
        assert_eq!(r.jpeg, JpegParams { quality: 80, enabled: true });
        for s in 0..50 {
            let mut o = sample_recipe(&p, s);
            o.seed = r.seed;
            assert_eq!(o, r);
        }
    }

    #[test]
    fn uniform_sigma_statistics() {
        let mut p = degenerate();
        p.blur.sigma = Span(0.2, 3.0);
        let xs: Vec<f64> = (0..10_000).map(|s| sample_recipe(&p, s).blur.sigma_x).collect();
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(min >= 0.2 && max <= 3.0);
        assert!((mean - 1.6).abs() <= 0.05 * 1.6, "mean {mean}");
    }

    #[test]
    fn sampled_recipes_validate_and_stay_in_bounds() {
        for name in SeverityProfile::builtin_names() {
            let p = SeverityProfile::builtin(name).unwrap();
            for s in 0..500 {
                let r = sample_recipe(&p, s);
                r.validate().unwrap();
                assert!(r.blur.ksize >= p.blur.ksize[0] && r.blur.ksize <= p.blur.ksize[1]);
                assert!(r.jpeg.quality >= p.jpeg.quality[0] && r.jpeg.quality <= p.jpeg.quality[1]);
                assert!(r.noise.sigma * 255.0 <= p.noise.gaussian_sigma_255.max() + 1e-9);
            }
        }
    }

    #[test]
    fn invalid_profiles_rejected() {
        let mut p = degenerate();
        p.blur.sigma = Span(2.0, 1.0);
        assert!(p.validate().is_err());
        let mut p = degenerate();
        p.jpeg.prob_enabled = 1.5;
        assert!(p.validate().is_err());
        let mut p = degenerate();
        p.blur.ksize = [4, 9];
        assert!(p.validate().is_err());
        assert!(SeverityProfile::from_toml_str("name = 'x'").is_err());
    }

    #[test]
    fn recipe_validation() {
        let mut r = DegradationRecipe::identity(0);
        r.validate().unwrap();
        r.jpeg.quality = 0;
        assert!(r.validate().is_err());
        let mut r = DegradationRecipe::identity(0);
        r.resize.scale = 1.5;
        assert!(r.validate().is_err());
        let mut r = DegradationRecipe::identity(0);
        r.blur.ksize = 2;
        assert!(r.validate().is_err());
    }
}
