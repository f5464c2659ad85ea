use gtcurate_core::degrade::{degrade, sample_recipe, upsample_back, SeverityProfile};
use gtcurate_core::evalmetrics::{psnr, ssim};
use gtcurate_core::imgcore::{cubic_keys, laplacian_pyramid, reconstruct_pyramid, ImageBuffer};
use gtcurate_core::losskernel::{
    indication_map, negative_loss, residual_variance_map, IndicationMap, ResidualVarianceMap,
};
use gtcurate_core::patchsel::propose_patches;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(h: usize, w: usize, c: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_fn(h, w, c, |_, _, _| rng.random::<f64>()).unwrap()
}

/// Direct 2-D bicubic evaluation per output pixel, no separable passes.
fn bicubic_direct(img: &ImageBuffer, th: usize, tw: usize) -> ImageBuffer {
    let (h, w, c) = img.dims();
    let ry = h as f64 / th as f64;
    let rx = w as f64 / tw as f64;
    ImageBuffer::from_fn(th, tw, c, |y, x, ch| {
        let sy = (y as f64 + 0.5) * ry - 0.5;
        let sx = (x as f64 + 0.5) * rx - 0.5;
        let (fy, fx) = (sy.floor() as isize, sx.floor() as isize);
        let (mut acc, mut norm) = (0.0, 0.0);
        for i in fy - 1..=fy + 2 {
            for j in fx - 1..=fx + 2 {
                let wt = cubic_keys(i as f64 - sy) * cubic_keys(j as f64 - sx);
                let yy = i.clamp(0, h as isize - 1) as usize;
                let xx = j.clamp(0, w as isize - 1) as usize;
                acc += wt * img.get(yy, xx, ch);
                norm += wt;
            }
        }
        (acc / norm).clamp(0.0, 1.0)
    })
    .unwrap()
}

#[test]
fn upsample_back_matches_direct_bicubic() {
    for (seed, (h, w, th, tw)) in [(9, 13, 36, 52), (16, 16, 64, 64), (7, 11, 20, 33)].into_iter().enumerate() {
        let lq = noise(h, w, 3, seed as u64);
        let fast = upsample_back(&lq, th, tw).unwrap();
        let slow = bicubic_direct(&lq, th, tw);
        assert!(fast.max_abs_diff(&slow).unwrap() < 1e-12);
    }
}

#[test]
fn single_thread_pool_gives_identical_output() {
    let img = noise(64, 48, 3, 3);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    for name in SeverityProfile::builtin_names() {
        let p = SeverityProfile::builtin(name).unwrap();
        for seed in 0..4 {
            let r = sample_recipe(&p, seed);
            let a = one.install(|| degrade(&img, &r).unwrap());
            let b = many.install(|| degrade(&img, &r).unwrap());
            assert_eq!(a, b, "{name} seed {seed}");
        }
    }
    let other = noise(64, 48, 3, 4);
    let s1 = one.install(|| ssim(&img, &other).unwrap());
    let s4 = many.install(|| ssim(&img, &other).unwrap());
    assert_eq!(s1, s4);
}

fn image_strategy() -> impl Strategy<Value = ImageBuffer> {
    (16usize..48, 16usize..48, prop::sample::select(vec![1usize, 3]), any::<u64>())
        .prop_map(|(h, w, c, seed)| noise(h, w, c, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pyramid_round_trip(img in image_strategy(), levels in 1usize..=3) {
        let p = laplacian_pyramid(&img, levels).unwrap();
        let back = reconstruct_pyramid(&p).unwrap();
        prop_assert!(back.max_abs_diff(&img).unwrap() <= 1e-6);
    }

    #[test]
    fn proposals_respect_overlap(h in 64usize..160, w in 64usize..160, seed in any::<u64>()) {
        let size = 32;
        let ps = propose_patches("img", h, w, size, 0.5, 12, seed).unwrap();
        for (i, a) in ps.iter().enumerate() {
            prop_assert!(a.x + size <= w && a.y + size <= h);
            for b in &ps[i + 1..] {
                prop_assert!(2 * a.overlap_area(b) < size * size);
            }
        }
    }

    #[test]
    fn closed_gate_gives_zero_loss(seed in any::<u64>(), scale in 0.0f64..1.0) {
        let pos = noise(12, 12, 1, seed);
        let neg = pos.map(|v| v * scale);
        let m_pos = ResidualVarianceMap { values: pos.clone(), exponent: 0.75 };
        let m_neg = ResidualVarianceMap { values: neg, exponent: 0.75 };
        let gate = indication_map(&m_neg, &m_pos).unwrap();
        prop_assert_eq!(gate.active(), 0);
        let sr = noise(12, 12, 3, seed ^ 1);
        let target = noise(12, 12, 3, seed ^ 2);
        let l = negative_loss(&target, &sr, &gate).unwrap();
        prop_assert_eq!(l.value, 0.0);
        prop_assert!(l.gradient.samples().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn residual_map_grows_with_exponent_above_one(seed in any::<u64>()) {
        let hr = noise(10, 10, 3, seed);
        let v = hr.map(|x| x * 9.0 + 1.0);
        let lo = residual_variance_map(&v, &hr, 0.5).unwrap();
        let hi = residual_variance_map(&v, &hr, 1.0).unwrap();
        for (a, b) in lo.values.samples().iter().zip(hi.values.samples()) {
            if *b >= 1.0 {
                prop_assert!(a <= b);
            } else {
                prop_assert!(a >= b);
            }
        }
    }

    #[test]
    fn psnr_symmetric(a in image_strategy(), seed in any::<u64>()) {
        let (h, w, c) = a.dims();
        let b = noise(h, w, c, seed);
        prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn negative_loss_nonnegative(seed in any::<u64>()) {
        let gate = IndicationMap { values: noise(9, 9, 1, seed) };
        let l = negative_loss(&noise(9, 9, 3, seed ^ 3), &noise(9, 9, 3, seed ^ 4), &gate).unwrap();
        prop_assert!(l.value >= 0.0);
    }
}
