#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gtcurate_core::imgcore::{convolve2d, BorderPolicy, ImageBuffer, KernelMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gtcurate"))
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn gtcurate");
    assert!(
        out.status.success(),
        "gtcurate {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Smooth gradients, a few sinusoids and fine noise.
pub fn textured(h: usize, w: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..0.6)).collect();
    let ph: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    ImageBuffer::from_fn(h, w, 3, |y, x, c| {
        let (yf, xf) = (y as f64, x as f64);
        let v = 0.5
            + 0.2 * (f[0] * xf + f[1] * yf + ph[c]).sin()
            + 0.1 * (f[2] * xf - f[3] * yf).cos()
            + 0.08 * (f[4] * (xf + yf) + f[5] * yf).sin()
            + 0.1 * (rng.random::<f64>() - 0.5);
        v.clamp(0.0, 1.0)
    })
    .unwrap()
}

/// Four visibly different "enhancements" of `img`.
pub fn enhancements(img: &ImageBuffer, seed: u64) -> [ImageBuffer; 4] {
    let blur = convolve2d(img, &KernelMatrix::boxed(3).unwrap(), BorderPolicy::Replicate).unwrap();
    let sharp = img.with_each(&blur, |o, b| (o + 1.5 * (o - b)).clamp(0.0, 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, c) = img.dims();
    let noisy = ImageBuffer::from_fn(h, w, c, |y, x, ch| {
        (img.get(y, x, ch) + 0.08 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)
    })
    .unwrap();
    let contrast = img.map(|v| ((v - 0.5) * 1.3 + 0.5).clamp(0.0, 1.0));
    [sharp, blur, noisy, contrast]
}

trait Zip {
    fn with_each(&self, other: &ImageBuffer, f: impl Fn(f64, f64) -> f64) -> ImageBuffer;
}

impl Zip for ImageBuffer {
    fn with_each(&self, other: &ImageBuffer, f: impl Fn(f64, f64) -> f64) -> ImageBuffer {
        let (h, w, c) = self.dims();
        ImageBuffer::from_fn(h, w, c, |y, x, ch| f(self.get(y, x, ch), other.get(y, x, ch))).unwrap()
    }
}

pub struct Fixture {
    pub root: PathBuf,
    pub orig: PathBuf,
    pub enhanced: Vec<PathBuf>,
}

/// `n` originals of `side` x `side` px plus their four enhanced versions.
pub fn write_fixture(root: &Path, n: usize, side: usize) -> Fixture {
    let orig = root.join("orig");
    let enhanced: Vec<PathBuf> = (1..=4).map(|m| root.join(format!("enh{m}"))).collect();
    for d in std::iter::once(&orig).chain(&enhanced) {
        std::fs::create_dir_all(d).unwrap();
    }
    for i in 0..n {
        let img = textured(side, side, i as u64);
        let name = format!("img{i:02}.png");
        img.save_png(orig.join(&name)).unwrap();
        for (dir, e) in enhanced.iter().zip(enhancements(&img, 100 + i as u64)) {
            e.save_png(dir.join(&name)).unwrap();
        }
    }
    Fixture {
        root: root.to_path_buf(),
        orig,
        enhanced,
    }
}

/// Every regular file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = Default::default();
    walk(dir, dir, &mut out);
    out
}

/// Runs every seeded stage with seed 7; all outputs land under `run`.
pub fn run_pipeline(fx: &Fixture, run: &Path, patch: usize, want: usize, testset_count: usize) {
    std::fs::create_dir_all(run).unwrap();
    run_ok(&[
        "degrade", "--profile", "single-stage-moderate", "--seed", "7", "--scale", "4",
        "--in", p(&fx.orig), "--out", p(&run.join("lq")), "--manifest", p(&run.join("degrade.jsonl")),
    ]);
    let (size, want) = (patch.to_string(), want.to_string());
    let (groups_dir, groups_manifest) = (run.join("groups"), run.join("groups.jsonl"));
    let mut mg = vec![
        "make-groups", "--orig", p(&fx.orig), "--out", p(&groups_dir),
        "--manifest", p(&groups_manifest), "--seed", "7", "--size", &size, "--want", &want,
        "--min-std-image", "0.02", "--min-std-highfreq", "0.005", "--min-diff", "0.002",
        "--enhanced",
    ];
    let enh: Vec<&str> = fx.enhanced.iter().map(|e| p(e)).collect();
    mg.extend(enh);
    run_ok(&mg);
    run_ok(&[
        "simulate-campaign", "--groups-manifest", p(&run.join("groups.jsonl")), "--annotators", "6",
        "--seed", "7", "--policy", "reference", "--out", p(&run.join("records.jsonl")),
    ]);
    run_ok(&[
        "export-pairs", "--groups", p(&run.join("groups.jsonl")), "--records", p(&run.join("records.jsonl")),
        "--mode", "posneg", "--profile", "single-stage-moderate", "--seed", "7",
        "--out", p(&run.join("pairs.jsonl")),
    ]);
    let count = testset_count.to_string();
    run_ok(&[
        "build-testset", "--groups", p(&run.join("groups.jsonl")), "--records", p(&run.join("records.jsonl")),
        "--min-positive", "2", "--count", &count, "--seed", "7", "--out", p(&run.join("test.jsonl")),
    ]);
}
