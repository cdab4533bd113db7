use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssvc::codec::{decode_video, encode_video, CodecConfig};
use ssvc::entropy::entropy_models;
use ssvc::frame::{Frame, PixelFormat, Plane};
use ssvc::intercode::{
    block_sad, compress_motion, compress_residual, decode_motion, decode_residual, estimate_motion, motion_compensate,
    motion_estimators, warp, DiamondSearch, ExhaustiveSearch, MotionEstimator, MotionField, SearchParams,
};
use ssvc::transform::transforms;

/// Smooth random texture: bilinear interpolation of a random lattice.
struct Lattice {
    cell: f64,
    size: usize,
    values: Vec<f64>,
}

impl Lattice {
    fn new(rng: &mut ChaCha8Rng, cell: f64, size: usize) -> Self {
        Self { cell, size, values: (0..size * size).map(|_| rng.gen_range(30.0..225.0)).collect() }
    }

    fn at(&self, x: f64, y: f64) -> u8 {
        let (u, v) = (x / self.cell + 4.0, y / self.cell + 4.0);
        let (i, j) = (u.floor() as usize, v.floor() as usize);
        let (fu, fv) = (u - i as f64, v - j as f64);
        let g = |a: usize, b: usize| self.values[(b % self.size) * self.size + a % self.size];
        let top = g(i, j) * (1.0 - fu) + g(i + 1, j) * fu;
        let bottom = g(i, j + 1) * (1.0 - fu) + g(i + 1, j + 1) * fu;
        (top * (1.0 - fv) + bottom * fv).round() as u8
    }

    fn plane(&self, w: usize, h: usize, ox: i32, oy: i32) -> Plane<u8> {
        let mut p = Plane::new(w, h);
        for y in 0..h {
            for x in 0..w {
                p.set(x, y, self.at(x as f64 - ox as f64, y as f64 - oy as f64));
            }
        }
        p
    }
}

fn gray(p: Plane<u8>) -> Frame {
    Frame::from_planes(PixelFormat::Gray, p.width, p.height, vec![p]).unwrap()
}

fn random_frame(rng: &mut ChaCha8Rng, format: PixelFormat, w: usize, h: usize) -> Frame {
    let mut f = Frame::filled(format, w, h, 0);
    for p in &mut f.planes {
        for v in &mut p.data {
            *v = rng.gen();
        }
    }
    f
}

fn cost(cur: &Plane<u8>, reference: &Plane<u8>, p: &SearchParams, bx: usize, by: usize, v: [i32; 2]) -> f64 {
    block_sad(cur, reference, bx, by, p.block, v) + p.lambda * (v[0].abs() + v[1].abs()) as f64
}

#[test]
fn reference_shifted_right_by_three_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let tex = Lattice::new(&mut rng, 3.0, 64);
    let cur = tex.plane(96, 96, 0, 0);
    let reference = tex.plane(96, 96, 3, 0);
    for est in motion_estimators().iter() {
        let f = est.estimate(&cur, &reference, &SearchParams::default());
        for by in 0..f.rows {
            for bx in 0..f.cols - 1 {
                assert_eq!(f.get(by, bx), [12, 0], "{} block ({bx}, {by})", est.name());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn diamond_cost_is_bounded_by_exhaustive_and_its_lattice(
        seed in any::<u64>(),
        dx in -6i32..=6,
        dy in -6i32..=6,
        block in prop::sample::select(vec![4usize, 8, 16]),
        range in 1i32..=10,
        lambda in prop::sample::select(vec![0.0, 2.0, 8.0]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell = rng.gen_range(2.0..6.0);
        let tex = Lattice::new(&mut rng, cell, 64);
        let reference = tex.plane(48, 40, 0, 0);
        let mut cur = tex.plane(48, 40, dx, dy);
        for v in cur.data.iter_mut() {
            *v = v.saturating_add(rng.gen_range(0..4));
        }
        let params = SearchParams { block, range, lambda };
        let diamond = DiamondSearch::default();
        let full = DiamondSearch { lattice: 1 };
        let field = diamond.estimate(&cur, &reference, &params);
        let full_field = full.estimate(&cur, &reference, &params);
        for by in 0..field.rows {
            for bx in 0..field.cols {
                let (_, best) = ExhaustiveSearch.integer_search(&cur, &reference, &params, bx, by);
                let mut brute = f64::INFINITY;
                for y in -range..=range {
                    for x in -range..=range {
                        brute = brute.min(cost(&cur, &reference, &params, bx, by, [4 * x, 4 * y]));
                    }
                }
                prop_assert_eq!(best, brute);

                let (v, c) = diamond.integer_search(&cur, &reference, &params, &field, bx, by);
                prop_assert_eq!(c, cost(&cur, &reference, &params, bx, by, v));
                prop_assert!(c >= best);
                // Slack: no worse than the zero vector or any point of its 4-pixel lattice.
                let lattice: Vec<i32> = (-range..=range).filter(|v| v % 4 == 0).collect();
                for &ly in &lattice {
                    for &lx in &lattice {
                        prop_assert!(c <= cost(&cur, &reference, &params, bx, by, [4 * lx, 4 * ly]));
                    }
                }
                let chosen = cost(&cur, &reference, &params, bx, by, field.get(by, bx));
                prop_assert!(chosen <= c);

                let (_, c_full) = full.integer_search(&cur, &reference, &params, &full_field, bx, by);
                prop_assert_eq!(c_full, best);
            }
        }
    }

    #[test]
    fn warp_matches_scalar_bilinear(seed in any::<u64>(), fmt in 0usize..3, w in 8usize..40, h in 8usize..40, block in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let format = [PixelFormat::Gray, PixelFormat::Yuv420, PixelFormat::Rgb][fmt];
        let reference = random_frame(&mut rng, format, w, h);
        let mut field = MotionField::zeros(w, h, block);
        for v in field.vectors.iter_mut() {
            *v = [rng.gen_range(-40..=40), rng.gen_range(-40..=40)];
        }
        let out = warp(&reference, &field);
        for (pi, (src, dst)) in reference.planes.iter().zip(&out.planes).enumerate() {
            let sub = if format == PixelFormat::Yuv420 && pi > 0 { 2 } else { 1 };
            for y in 0..dst.height {
                for x in 0..dst.width {
                    let row = ((y * sub) / block).min(field.rows - 1);
                    let col = ((x * sub) / block).min(field.cols - 1);
                    let v = field.get(row, col);
                    let fx = x as f64 + v[0] as f64 / (4 * sub) as f64;
                    let fy = y as f64 + v[1] as f64 / (4 * sub) as f64;
                    let (x0, y0) = (fx.floor(), fy.floor());
                    let px = |a: f64, b: f64| {
                        let xi = (a as i64).clamp(0, src.width as i64 - 1) as usize;
                        let yi = (b as i64).clamp(0, src.height as i64 - 1) as usize;
                        src.data[yi * src.width + xi] as f64
                    };
                    let (ax, ay) = (fx - x0, fy - y0);
                    let want = (1.0 - ay) * ((1.0 - ax) * px(x0, y0) + ax * px(x0 + 1.0, y0))
                        + ay * ((1.0 - ax) * px(x0, y0 + 1.0) + ax * px(x0 + 1.0, y0 + 1.0));
                    prop_assert!((dst.get(x, y) - want).abs() < 1e-6, "plane {} ({}, {})", pi, x, y);
                }
            }
        }
    }

    #[test]
    fn motion_fields_roundtrip(seed in any::<u64>(), w in 1usize..120, h in 1usize..90, block in 2usize..16, step in prop::sample::select(vec![1u8, 2, 4, 8])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = MotionField::zeros(w, h, block);
        for v in field.vectors.iter_mut() {
            *v = [rng.gen_range(-200..=200), rng.gen_range(-200..=200)];
        }
        for m in entropy_models().iter() {
            let (chunk, seen) = compress_motion(&field, step, m.as_ref()).unwrap();
            prop_assert_eq!(&decode_motion(&chunk, w, h, block, step, m.as_ref()).unwrap(), &seen);
            let half = (step / 2) as i32;
            for (a, b) in field.vectors.iter().zip(&seen.vectors) {
                prop_assert!((a[0] - b[0]).abs() <= half && (a[1] - b[1]).abs() <= half);
                prop_assert!(b[0] % step as i32 == 0 && b[1] % step as i32 == 0);
            }
            if step == 1 {
                prop_assert_eq!(&seen, &field);
            }
        }
    }
}

#[test]
fn lossy_motion_step_four_errs_by_at_most_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(415);
    let mut field = MotionField::zeros(160, 120, 8);
    for v in field.vectors.iter_mut() {
        *v = [rng.gen_range(-64..=64), rng.gen_range(-64..=64)];
    }
    let model = entropy_models().by_name("gaussian-context").unwrap();
    let (_, seen) = compress_motion(&field, 4, model.as_ref()).unwrap();
    let worst = field.vectors.iter().zip(&seen.vectors).flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()]).max().unwrap();
    assert!(worst <= 2);
}

#[test]
fn translation_at_step_four_keeps_50_db() {
    let mut rng = ChaCha8Rng::seed_from_u64(434);
    let tex = Lattice::new(&mut rng, 4.0, 64);
    let t = transforms().by_name("dct16").unwrap();
    let model = entropy_models().by_name("gaussian-context").unwrap();
    for (dx, dy) in [(2, 0), (0, -3), (1, 1), (-4, 2)] {
        let reference = gray(tex.plane(128, 128, 0, 0));
        let cur = gray(tex.plane(128, 128, dx, dy));
        let field = estimate_motion(&cur, &reference, motion_estimators().by_name("diamond").unwrap().as_ref(), &SearchParams::default()).unwrap();
        let (chunk, seen) = compress_motion(&field, 1, model.as_ref()).unwrap();
        assert_eq!(seen, field);
        let pred = motion_compensate(&reference, &decode_motion(&chunk, 128, 128, 8, 1, model.as_ref()).unwrap());
        let (res, recon) = compress_residual(&cur, &pred, t.as_ref(), model.as_ref(), 4.0).unwrap();
        assert_eq!(decode_residual(&res, &pred, t.as_ref(), model.as_ref(), 4.0).unwrap(), recon);
        let psnr = ssvc::eval::psnr(&[cur], &[recon]).unwrap();
        assert!(psnr >= 50.0, "shift ({dx}, {dy}): {psnr:.2} dB");
    }
}

/// Residual coding error on noise: coefficient error near a twelfth of the
/// squared step, plus integer rounding of the output samples.
#[test]
fn residual_distortion_follows_the_quantizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(435);
    let model = entropy_models().by_name("gaussian-hyper").unwrap();
    for t in transforms().iter() {
        for step in [4.0, 8.0, 16.0, 32.0] {
            let cur = random_frame(&mut rng, PixelFormat::Gray, 96, 96);
            let pred = random_frame(&mut rng, PixelFormat::Gray, 96, 96).to_real(0.0);
            let (_, recon) = compress_residual(&cur, &pred, t.as_ref(), model.as_ref(), step).unwrap();
            let mse = ssvc::codec::frame_mse(&cur, &recon);
            let bound = 1.15 * step * step / 12.0 + 1.0 / 12.0;
            assert!(mse <= bound, "{} step {step}: mse {mse:.3} above {bound:.3}", t.name());
        }
    }
}

#[test]
fn closed_loop_across_strategies() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tex = Lattice::new(&mut rng, 5.0, 64);
    let frames: Vec<Frame> = (0..5).map(|i| gray(tex.plane(40, 32, i, i / 2))).collect();
    for t in transforms().iter() {
        for m in entropy_models().iter() {
            for e in motion_estimators().iter() {
                let cfg = CodecConfig::with_strategies(t.name(), m.name(), e.name()).unwrap();
                let cfg = CodecConfig { gop_size: 3, quality_index: 2, motion_step: 2, ..cfg };
                let enc = encode_video(&frames, None, &cfg).unwrap();
                assert_eq!(decode_video(&enc.bytes).unwrap(), enc.recon, "{}/{}/{}", t.name(), m.name(), e.name());
                let intra: Vec<u32> = enc.stats.iter().filter(|s| s.intra).map(|s| s.frame_index).collect();
                assert_eq!(intra, vec![0, 3]);
            }
        }
    }
}

#[test]
fn twenty_five_frames_in_gops_of_ten() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let tex = Lattice::new(&mut rng, 5.0, 64);
    let frames: Vec<Frame> = (0..25).map(|i| gray(tex.plane(32, 32, i % 7, 0))).collect();
    let enc = encode_video(&frames, None, &CodecConfig::default()).unwrap();
    assert_eq!(enc.header.gops.len(), 3);
    assert_eq!(enc.header.gops.iter().map(|g| g.frame_count).collect::<Vec<_>>(), vec![10, 10, 5]);
    let intra: Vec<u32> = enc.stats.iter().filter(|s| s.intra).map(|s| s.frame_index).collect();
    assert_eq!(intra, vec![0, 10, 20]);
}
