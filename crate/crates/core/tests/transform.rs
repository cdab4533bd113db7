use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssvc::entropy::{dequantize, quantize};
use ssvc::frame::{Frame, PixelFormat};
use ssvc::latent::{CellMask, Grid};
use ssvc::transform::{analyze_frame, synthesize_frame, transforms, QUALITY_STEPS};

const FORMATS: [PixelFormat; 3] = [PixelFormat::Gray, PixelFormat::Yuv420, PixelFormat::Rgb];

fn random_frame(seed: u64, format: PixelFormat, w: usize, h: usize) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Frame::filled(format, w, h, 0);
    for p in &mut f.planes {
        for v in &mut p.data {
            *v = rng.gen();
        }
    }
    f
}

fn energy(g: &Grid<f64>) -> f64 {
    g.data.iter().map(|v| v * v).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lossless_latents_reconstruct_exactly(t_id in 0u8..3, fmt in 0usize..3, w in 1usize..70, h in 1usize..70, seed in any::<u64>()) {
        let t = transforms().by_id(t_id).unwrap();
        let f = random_frame(seed, FORMATS[fmt], w, h);
        let g = analyze_frame(t.as_ref(), &f);
        prop_assert_eq!((g.rows, g.cols), t.grid_dims(w, h));
        prop_assert_eq!(g.channels, t.channels(f.format));
        prop_assert_eq!(synthesize_frame(t.as_ref(), &g, f.format, w, h, None), f);
    }

    #[test]
    fn aligned_input_preserves_energy(t_id in 0u8..3, fmt in 0usize..3, bw in 1usize..4, bh in 1usize..4, seed in any::<u64>()) {
        let t = transforms().by_id(t_id).unwrap();
        let (w, h) = (bw * t.stride(), bh * t.stride());
        let real = random_frame(seed, FORMATS[fmt], w, h).to_real(-128.0);
        let pixel: f64 = real.planes.iter().flat_map(|p| p.data.iter()).map(|v| v * v).sum();
        let g = t.analysis(&real);
        prop_assert!(((pixel - energy(&g)) / pixel.max(1.0)).abs() < 1e-6);
    }

    #[test]
    fn quantization_error_stays_within_half_a_step(t_id in 0u8..3, q in 0usize..4, seed in any::<u64>()) {
        let t = transforms().by_id(t_id).unwrap();
        let step = QUALITY_STEPS[q];
        let f = random_frame(seed, PixelFormat::Gray, 64, 64);
        let g = analyze_frame(t.as_ref(), &f);
        let back = dequantize(&quantize(&g, step, 1 << 14).plane.grid, step);
        let worst = g.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= step / 2.0 + 1e-9);
        // Real-valued reconstruction error equals coefficient error by orthonormality.
        let rec = t.synthesis(&back, f.format, 64, 64, None, 0.0);
        let orig = f.to_real(-128.0);
        let pix: f64 = rec.planes[0].data.iter().zip(&orig.planes[0].data).map(|(a, b)| (a - b).powi(2)).sum();
        let coef: f64 = g.data.iter().zip(&back.data).map(|(a, b)| (a - b).powi(2)).sum();
        prop_assert!((pix - coef).abs() <= 1e-6 * coef.max(1.0));
    }

    #[test]
    fn a_latent_cell_only_touches_its_own_block(t_id in 0u8..3, fmt in 0usize..3, row in 0usize..3, col in 0usize..3, seed in any::<u64>()) {
        let t = transforms().by_id(t_id).unwrap();
        let s = t.stride();
        let f = random_frame(seed, FORMATS[fmt], 3 * s, 3 * s);
        let g = analyze_frame(t.as_ref(), &f);
        let base = t.synthesis(&g, f.format, 3 * s, 3 * s, None, 0.0);
        let mut g2 = g.clone();
        for (i, v) in g2.cell_mut(row, col).iter_mut().enumerate() {
            *v += 5.0 + i as f64;
        }
        let moved = t.synthesis(&g2, f.format, 3 * s, 3 * s, None, 0.0);
        for (p, (a, b)) in base.planes.iter().zip(&moved.planes).enumerate() {
            let n = s >> f.format.plane_shift(p);
            for y in 0..a.height {
                for x in 0..a.width {
                    if y / n != row || x / n != col {
                        prop_assert_eq!(a.get(x, y), b.get(x, y));
                    }
                }
            }
        }
        let mut mask = CellMask::new(3, 3);
        mask.set(row, col, true);
        let part = synthesize_frame(t.as_ref(), &g, f.format, 3 * s, 3 * s, Some(&mask));
        let full = synthesize_frame(t.as_ref(), &g, f.format, 3 * s, 3 * s, None);
        for (p, (a, b)) in part.planes.iter().zip(&full.planes).enumerate() {
            let n = s >> f.format.plane_shift(p);
            for y in 0..a.height {
                for x in 0..a.width {
                    let want = if y / n == row && x / n == col { b.get(x, y) } else { 128 };
                    prop_assert_eq!(a.get(x, y), want);
                }
            }
        }
    }
}

/// Uniform quantization of spread-out coefficients costs about a twelfth of
/// the squared step per coefficient, and coarser steps never cost less.
#[test]
fn distortion_tracks_the_uniform_quantizer() {
    for t in transforms().iter() {
        let f = random_frame(99, PixelFormat::Gray, 128, 128);
        let g = analyze_frame(t.as_ref(), &f);
        let mut prev = 0.0;
        for step in QUALITY_STEPS {
            let back = dequantize(&quantize(&g, step, 1 << 14).plane.grid, step);
            let mse = g.data.iter().zip(&back.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / g.data.len() as f64;
            let model = step * step / 12.0;
            assert!(mse > 0.8 * model && mse < 1.2 * model, "{} step {step}: mse {mse:.3} vs {model:.3}", t.name());
            assert!(mse >= prev);
            prev = mse;
        }
    }
}

#[test]
fn unit_step_keeps_52_db_on_every_transform() {
    for t in transforms().iter() {
        for (i, format) in FORMATS.into_iter().enumerate() {
            let f = random_frame(i as u64, format, 50, 38);
            let g = analyze_frame(t.as_ref(), &f);
            let back = synthesize_frame(t.as_ref(), &dequantize(&quantize(&g, 1.0, 1 << 14).plane.grid, 1.0), format, 50, 38, None);
            let psnr = ssvc::eval::psnr(&[f], &[back]).unwrap();
            assert!(psnr >= 52.0, "{} {format:?}: {psnr:.2} dB", t.name());
        }
    }
}
