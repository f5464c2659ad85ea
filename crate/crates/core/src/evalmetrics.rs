//! Full-reference quality metrics and multi-GT averaging.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{to_luma, ImageBuffer};
use crate::par;

/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSpace {
    #[default]
    Rgb,
    Luma,
}

pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, peak: f64) -> Result<f64> {
    a.ensure_same_dims(b)?;
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::InvalidParam(format!("peak {peak} must be positive")));
    }
    let sse: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let mse = sse / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

pub fn psnr_in(a: &ImageBuffer, b: &ImageBuffer, peak: f64, space: ColorSpace) -> Result<f64> {
    match space {
        ColorSpace::Rgb => psnr(a, b, peak),
        ColorSpace::Luma => {
            a.ensure_same_dims(b)?;
            psnr(&to_luma(a), &to_luma(b), peak)
        }
    }
}

fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows of the
/// luminance images, with dynamic range 1.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.ensure_same_dims(b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::Geometry(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let (la, lb) = (to_luma(a), to_luma(b));
    let (x, y) = (la.samples(), lb.samples());
    let (h, w) = (a.height(), a.width());
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);

    // horizontal pass: five moments per valid column
    let horiz = par::map_range(h, |r| {
        let row = |v: &[f64], i: usize| v[r * w + i];
        let mut out = vec![[0.0f64; 5]; ow];
        for (ox, acc) in out.iter_mut().enumerate() {
            for (k, t) in taps.iter().enumerate() {
                let (p, q) = (row(x, ox + k), row(y, ox + k));
                acc[0] += t * p;
                acc[1] += t * q;
                acc[2] += t * (p * p);
                acc[3] += t * (q * q);
                acc[4] += t * (p * q);
            }
        }
        out
    });
    let rows = par::map_range(oh, |oy| {
        (0..ow)
            .map(|ox| {
                let mut m = [0.0f64; 5];
                for (k, t) in taps.iter().enumerate() {
                    for (acc, hm) in m.iter_mut().zip(&horiz[oy + k][ox]) {
                        *acc += t * hm;
                    }
                }
                let (mx, my) = (m[0], m[1]);
                let vx = m[2] - mx * mx;
                let vy = m[3] - my * my;
                let cxy = m[4] - mx * my;
                ((2.0 * (mx * my) + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
            })
            .sum::<f64>()
    });
    Ok(rows.iter().sum::<f64>() / (oh * ow) as f64)
}

/// A full-reference metric.
pub trait Metric: Send + Sync {
    fn name(&self) -> &str;

    fn score(&self, sr: &ImageBuffer, gt: &ImageBuffer) -> Result<f64>;

    /// Scores two image files. The default loads both and calls `score`.
    fn score_files(&self, sr: &Path, gt: &Path) -> Result<f64> {
        self.score(&ImageBuffer::load(sr)?, &ImageBuffer::load(gt)?)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Psnr {
    pub space: ColorSpace,
}

impl Metric for Psnr {
    fn name(&self) -> &str {
        "psnr"
    }

    fn score(&self, sr: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
        psnr_in(sr, gt, 1.0, self.space)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Ssim;

impl Metric for Ssim {
    fn name(&self) -> &str {
        "ssim"
    }

    fn score(&self, sr: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
        ssim(sr, gt)
    }
}

/// A metric computed by an external program.
///
/// For each pair the program is started with the configured arguments and
/// receives one line `<sr path>\t<gt path>\n` on stdin; it must print the
/// score as the first line of stdout and exit with status 0.
#[derive(Clone, Debug)]
pub struct ExternalScorer {
    pub name: String,
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl ExternalScorer {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Scorer {
            program: self.program.display().to_string(),
            message: message.into(),
        }
    }
}

impl Metric for ExternalScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, sr: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
        use std::sync::atomic::{AtomicU64, Ordering};
        static NEXT: AtomicU64 = AtomicU64::new(0);
        let n = NEXT.fetch_add(1, Ordering::Relaxed);
        let dir = std::env::temp_dir();
        let stem = format!("gtcurate-score-{}-{n}", std::process::id());
        let sr_path = dir.join(format!("{stem}-sr.png"));
        let gt_path = dir.join(format!("{stem}-gt.png"));
        let result = sr
            .save_png(&sr_path)
            .and_then(|_| gt.save_png(&gt_path))
            .and_then(|_| self.score_files(&sr_path, &gt_path));
        let _ = std::fs::remove_file(&sr_path);
        let _ = std::fs::remove_file(&gt_path);
        result
    }

    fn score_files(&self, sr: &Path, gt: &Path) -> Result<f64> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| self.fail(format!("spawn: {e}")))?;
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            writeln!(stdin, "{}\t{}", sr.display(), gt.display())
                .map_err(|e| self.fail(format!("write: {e}")))?;
        }
        let out = child
            .wait_with_output()
            .map_err(|e| self.fail(format!("wait: {e}")))?;
        if !out.status.success() {
            return Err(self.fail(format!(
                "exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        let line = stdout.lines().next().unwrap_or("").trim();
        let v: f64 = line
            .parse()
            .map_err(|_| self.fail(format!("unparseable score {line:?}")))?;
        if !v.is_finite() {
            return Err(self.fail(format!("non-finite score {v}")));
        }
        Ok(v)
    }
}

/// Resolves a metric by name: `psnr`, `psnr-y`, `ssim`, or
/// `name=program` for an external scorer.
pub fn metric_by_name(spec: &str) -> Result<Box<dyn Metric>> {
    match spec.trim() {
        "psnr" | "psnr-rgb" => Ok(Box::new(Psnr::default())),
        "psnr-y" => Ok(Box::new(Psnr {
            space: ColorSpace::Luma,
        })),
        "ssim" => Ok(Box::new(Ssim)),
        other => match other.split_once('=') {
            Some((name, program)) if !name.is_empty() && !program.is_empty() => {
                let mut parts = program.split_whitespace();
                let program = parts.next().unwrap_or_default();
                Ok(Box::new(ExternalScorer {
                    name: name.to_string(),
                    program: program.into(),
                    args: parts.map(String::from).collect(),
                }))
            }
            _ => Err(Error::InvalidParam(format!("unknown metric {other:?}"))),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub name: String,
    /// Arithmetic mean of `per_gt`.
    pub value: f64,
    pub per_gt: Vec<f64>,
}

impl MetricScore {
    pub fn from_per_gt(name: impl Into<String>, per_gt: Vec<f64>) -> Result<Self> {
        if per_gt.is_empty() {
            return Err(Error::InvalidParam("no GT scores to average".into()));
        }
        let value = per_gt.iter().sum::<f64>() / per_gt.len() as f64;
        Ok(Self {
            name: name.into(),
            value,
            per_gt,
        })
    }
}

pub fn multi_gt_score(sr: &ImageBuffer, gts: &[ImageBuffer], metric: &dyn Metric) -> Result<MetricScore> {
    if gts.is_empty() {
        return Err(Error::InvalidParam("empty GT list".into()));
    }
    let per_gt = gts.iter().map(|gt| metric.score(sr, gt)).collect::<Result<Vec<_>>>()?;
    MetricScore::from_per_gt(metric.name(), per_gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(h: usize, w: usize, c: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(h, w, c, |_, _, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn psnr_closed_form() {
        let a = noise(16, 16, 3, 1).map(|v| v * 0.5);
        let b = a.map(|v| v + 16.0 / 255.0);
        let expected = 20.0 * (255.0f64 / 16.0).log10();
        assert!((psnr(&a, &b, 1.0).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 24.048404).abs() < 1e-6);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        assert!(psnr(&a, &noise(16, 15, 3, 1), 1.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_error() {
        let a = ImageBuffer::filled(8, 8, 3, 0.2).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..40 {
            let p = psnr(&a, &a.map(|v| v + k as f64 * 0.01), 1.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn luma_psnr_ignores_chroma_balanced_change() {
        let a = ImageBuffer::filled(4, 4, 3, 0.5).unwrap();
        // shifts red up and blue down so luma is unchanged
        let b = ImageBuffer::from_fn(4, 4, 3, |_, _, c| match c {
            0 => 0.5 + 0.114 * 0.1,
            2 => 0.5 - 0.299 * 0.1,
            _ => 0.5,
        })
        .unwrap();
        assert!(psnr_in(&a, &b, 1.0, ColorSpace::Luma).unwrap() > 99.0);
        assert!(psnr_in(&a, &b, 1.0, ColorSpace::Rgb).unwrap() < 60.0);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = noise(24, 20, 3, 2);
        let b = noise(24, 20, 3, 3);
        for seed in 0..40 {
            let x = noise(11 + seed as usize % 17, 11 + seed as usize % 13, 3, 100 + seed);
            assert_eq!(ssim(&x, &x).unwrap(), 1.0, "seed {seed}");
        }
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        let s = ssim(&a, &b).unwrap();
        assert!((-1.0..1.0).contains(&s));
    }

    #[test]
    fn ssim_constant_closed_form() {
        let a = ImageBuffer::filled(16, 16, 1, 0.5).unwrap();
        let b = ImageBuffer::filled(16, 16, 1, 0.6).unwrap();
        let c1 = 0.01f64 * 0.01;
        let expected = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn ssim_transpose_invariant() {
        let a = noise(20, 14, 1, 4);
        let b = noise(20, 14, 1, 5);
        let s = ssim(&a, &b).unwrap();
        let t = ssim(&a.transpose(), &b.transpose()).unwrap();
        assert!((s - t).abs() < 1e-12);
    }

    #[test]
    fn ssim_too_small() {
        let a = noise(10, 30, 1, 1);
        assert!(matches!(ssim(&a, &a), Err(Error::Geometry(_))));
    }

    struct Fixed(Vec<f64>, std::sync::atomic::AtomicUsize);
    impl Metric for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn score(&self, _: &ImageBuffer, _: &ImageBuffer) -> Result<f64> {
            let i = self.1.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(self.0[i])
        }
    }

    #[test]
    fn multi_gt_mean() {
        let x = noise(12, 12, 3, 1);
        let m = Fixed(vec![20.0, 22.0], Default::default());
        let s = multi_gt_score(&x, &[x.clone(), x.clone()], &m).unwrap();
        assert_eq!(s.value, 21.0);
        assert_eq!(s.per_gt, vec![20.0, 22.0]);
        assert!(multi_gt_score(&x, &[], &Psnr::default()).is_err());

        let gts: Vec<_> = (0..3).map(|i| noise(12, 12, 3, 10 + i)).collect();
        let single = multi_gt_score(&x, &gts[..1], &Psnr::default()).unwrap();
        assert_eq!(single.value, psnr(&x, &gts[0], 1.0).unwrap());
        let mut brute = 0.0;
        for g in &gts {
            brute += psnr(&x, g, 1.0).unwrap();
        }
        let s = multi_gt_score(&x, &gts, &Psnr::default()).unwrap();
        assert_eq!(s.value, brute / 3.0);
        let rev: Vec<_> = gts.iter().rev().cloned().collect();
        let r = multi_gt_score(&x, &rev, &Psnr::default()).unwrap();
        assert!((r.value - s.value).abs() < 1e-12);
    }

    #[test]
    fn metric_names() {
        assert_eq!(metric_by_name("psnr").unwrap().name(), "psnr");
        assert_eq!(metric_by_name("ssim").unwrap().name(), "ssim");
        assert_eq!(metric_by_name("lpips=/bin/score --net alex").unwrap().name(), "lpips");
        assert!(metric_by_name("fid").is_err());
    }

    #[cfg(unix)]
    #[test]
    fn external_scorer_protocol() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("score.sh");
        std::fs::write(&script, "#!/bin/sh\nread line\ncase \"$line\" in *\"\t\"*) echo 0.25;; *) exit 3;; esac\n").unwrap();
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let m = ExternalScorer {
            name: "ext".into(),
            program: script.clone(),
            args: vec![],
        };
        let x = noise(12, 12, 3, 1);
        assert_eq!(m.score(&x, &x).unwrap(), 0.25);

        let bad = dir.path().join("bad.sh");
        std::fs::write(&bad, "#!/bin/sh\necho nope\n").unwrap();
        std::fs::set_permissions(&bad, std::fs::Permissions::from_mode(0o755)).unwrap();
        let m = ExternalScorer {
            name: "ext".into(),
            program: bad,
            args: vec![],
        };
        assert!(matches!(m.score(&x, &x), Err(Error::Scorer { .. })));
    }
}
