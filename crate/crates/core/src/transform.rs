//! Analysis/synthesis transform pairs mapping pixels to the latent grid.
//!
//! Each latent cell covers one `R x R` luma block (and the co-sited chroma
//! blocks); its channels are that block's transform coefficients, plane by
//! plane, in row-major frequency order. Changing one cell therefore changes
//! only its own pixel block.

use std::sync::Arc;

use crate::detmath::cos_pi_ratio;
use crate::frame::{Frame, PixelFormat, Plane, PlaneSet};
use crate::latent::{CellMask, Grid};
use crate::registry::{Registry, Strategy};

/// Quantization step for each quality index (0 = finest).
pub const QUALITY_STEPS: [f64; 4] = [4.0, 8.0, 16.0, 32.0];
/// Rate-distortion multiplier labels matching each quality index.
pub const QUALITY_LAMBDAS: [u32; 4] = [2048, 1024, 512, 256];

pub fn quant_step(quality_index: u8) -> Option<f64> {
    QUALITY_STEPS.get(quality_index as usize).copied()
}

/// Geometry of a transform applied to a given frame layout.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformSpec {
    pub transform_id: u8,
    pub stride: usize,
    pub channels: usize,
    pub step: f64,
}

impl TransformSpec {
    pub fn new(t: &dyn LatentTransform, format: PixelFormat, quality_index: u8) -> Option<Self> {
        Some(Self { transform_id: t.id(), stride: t.stride(), channels: t.channels(format), step: quant_step(quality_index)? })
    }
}

pub trait LatentTransform: Strategy {
    /// Latent stride in luma pixels.
    fn stride(&self) -> usize;

    fn channels(&self, format: PixelFormat) -> usize {
        (0..format.plane_count())
            .map(|p| {
                let b = self.stride() >> format.plane_shift(p);
                b * b
            })
            .sum()
    }

    /// `(rows, cols)` of the latent grid for a `width x height` frame.
    fn grid_dims(&self, width: usize, height: usize) -> (usize, usize) {
        (height.div_ceil(self.stride()), width.div_ceil(self.stride()))
    }

    /// Forward transform. Planes are padded to whole blocks by edge replication.
    fn analysis(&self, planes: &PlaneSet) -> Grid<f64>;

    /// Inverse transform. Cells outside `valid` are not synthesized; their
    /// pixels take `fill`.
    fn synthesis(
        &self,
        latent: &Grid<f64>,
        format: PixelFormat,
        width: usize,
        height: usize,
        valid: Option<&CellMask>,
        fill: f64,
    ) -> PlaneSet;
}

/// Separable orthonormal block transform with a per-size 1-D basis.
pub struct BlockTransform {
    name: &'static str,
    id: u8,
    stride: usize,
    basis: fn(usize) -> Vec<f64>,
}

impl BlockTransform {
    pub const fn new(name: &'static str, id: u8, stride: usize, basis: fn(usize) -> Vec<f64>) -> Self {
        Self { name, id, stride, basis }
    }
}

/// Orthonormal DCT-II basis, `b[k * n + i]`.
pub fn dct_basis(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n * n];
    let a0 = (1.0 / n as f64).sqrt();
    let ak = (2.0 / n as f64).sqrt();
    for k in 0..n {
        for i in 0..n {
            let a = if k == 0 { a0 } else { ak };
            b[k * n + i] = a * cos_pi_ratio(((2 * i + 1) * k) as i64, (2 * n) as i64);
        }
    }
    b
}

/// Orthonormal Walsh-Hadamard basis in sequency order.
pub fn walsh_basis(n: usize) -> Vec<f64> {
    assert!(n.is_power_of_two());
    let scale = 1.0 / (n as f64).sqrt();
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if (i & j).count_ones() % 2 == 0 { scale } else { -scale }).collect())
        .collect();
    rows.sort_by_key(|r| r.windows(2).filter(|w| w[0] != w[1]).count());
    rows.concat()
}

fn forward_block(basis: &[f64], n: usize, block: &[f64], tmp: &mut [f64], out: &mut [f64]) {
    // tmp = block * B^T (transform rows), out = B * tmp (transform columns)
    for y in 0..n {
        for k in 0..n {
            let mut s = 0.0;
            for x in 0..n {
                s += block[y * n + x] * basis[k * n + x];
            }
            tmp[y * n + k] = s;
        }
    }
    for k in 0..n {
        for u in 0..n {
            let mut s = 0.0;
            for y in 0..n {
                s += basis[k * n + y] * tmp[y * n + u];
            }
            out[k * n + u] = s;
        }
    }
}

fn inverse_block(basis: &[f64], n: usize, coeffs: &[f64], tmp: &mut [f64], out: &mut [f64]) {
    for y in 0..n {
        for u in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += basis[k * n + y] * coeffs[k * n + u];
            }
            tmp[y * n + u] = s;
        }
    }
    for y in 0..n {
        for x in 0..n {
            let mut s = 0.0;
            for u in 0..n {
                s += tmp[y * n + u] * basis[u * n + x];
            }
            out[y * n + x] = s;
        }
    }
}

impl Strategy for BlockTransform {
    fn name(&self) -> &'static str {
        self.name
    }
    fn id(&self) -> u8 {
        self.id
    }
}

impl LatentTransform for BlockTransform {
    fn stride(&self) -> usize {
        self.stride
    }

    fn analysis(&self, planes: &PlaneSet) -> Grid<f64> {
        let (rows, cols) = self.grid_dims(planes.width, planes.height);
        let channels = self.channels(planes.format);
        let mut grid = Grid::new(rows, cols, channels);
        let mut ch_base = 0;
        for (p, plane) in planes.planes.iter().enumerate() {
            let n = self.stride >> planes.format.plane_shift(p);
            let basis = (self.basis)(n);
            let padded = plane.padded(cols * n, rows * n);
            let mut block = vec![0.0; n * n];
            let mut tmp = vec![0.0; n * n];
            let mut out = vec![0.0; n * n];
            for r in 0..rows {
                for c in 0..cols {
                    for y in 0..n {
                        let src = &padded.row(r * n + y)[c * n..(c + 1) * n];
                        block[y * n..(y + 1) * n].copy_from_slice(src);
                    }
                    forward_block(&basis, n, &block, &mut tmp, &mut out);
                    grid.cell_mut(r, c)[ch_base..ch_base + n * n].copy_from_slice(&out);
                }
            }
            ch_base += n * n;
        }
        grid
    }

    fn synthesis(
        &self,
        latent: &Grid<f64>,
        format: PixelFormat,
        width: usize,
        height: usize,
        valid: Option<&CellMask>,
        fill: f64,
    ) -> PlaneSet {
        let (rows, cols) = (latent.rows, latent.cols);
        let mut out = PlaneSet::zeros(format, width, height);
        let mut ch_base = 0;
        for (p, plane) in out.planes.iter_mut().enumerate() {
            let n = self.stride >> format.plane_shift(p);
            let basis = (self.basis)(n);
            let mut full = Plane::filled(cols * n, rows * n, fill);
            let mut tmp = vec![0.0; n * n];
            let mut pix = vec![0.0; n * n];
            for r in 0..rows {
                for c in 0..cols {
                    if valid.is_some_and(|m| !m.get(r, c)) {
                        continue;
                    }
                    let coeffs = &latent.cell(r, c)[ch_base..ch_base + n * n];
                    inverse_block(&basis, n, coeffs, &mut tmp, &mut pix);
                    for y in 0..n {
                        let row = (r * n + y) * full.width + c * n;
                        full.data[row..row + n].copy_from_slice(&pix[y * n..(y + 1) * n]);
                    }
                }
            }
            for y in 0..plane.height {
                plane.data[y * plane.width..(y + 1) * plane.width].copy_from_slice(&full.row(y)[..plane.width]);
            }
            ch_base += n * n;
        }
        out
    }
}

pub static DCT16: BlockTransform = BlockTransform::new("dct16", 0, 16, dct_basis);
pub static DCT8: BlockTransform = BlockTransform::new("dct8", 1, 8, dct_basis);
pub static WALSH16: BlockTransform = BlockTransform::new("walsh16", 2, 16, walsh_basis);

/// Built-in transforms; `dct16` is the default.
pub fn transforms() -> Registry<dyn LatentTransform> {
    let mut r: Registry<dyn LatentTransform> = Registry::new("transform");
    r.register(Arc::new(BlockTransform::new("dct16", 0, 16, dct_basis))).unwrap();
    r.register(Arc::new(BlockTransform::new("dct8", 1, 8, dct_basis))).unwrap();
    r.register(Arc::new(BlockTransform::new("walsh16", 2, 16, walsh_basis))).unwrap();
    r
}

/// Forward transform of a frame after centering samples by -128.
pub fn analyze_frame(t: &dyn LatentTransform, frame: &Frame) -> Grid<f64> {
    t.analysis(&frame.to_real(-128.0))
}

/// Inverse of [`analyze_frame`]: cells outside `valid` come out mid-gray (128).
pub fn synthesize_frame(
    t: &dyn LatentTransform,
    latent: &Grid<f64>,
    format: PixelFormat,
    width: usize,
    height: usize,
    valid: Option<&CellMask>,
) -> Frame {
    t.synthesis(latent, format, width, height, valid, 0.0).to_frame(128.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{dequantize, quantize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng, format: PixelFormat, w: usize, h: usize) -> Frame {
        let mut f = Frame::filled(format, w, h, 0);
        for p in &mut f.planes {
            for v in &mut p.data {
                *v = rng.gen();
            }
        }
        f
    }

    fn mse(a: &Frame, b: &Frame) -> f64 {
        let mut s = 0.0;
        let mut n = 0;
        for (pa, pb) in a.planes.iter().zip(&b.planes) {
            for (&x, &y) in pa.data.iter().zip(&pb.data) {
                s += (x as f64 - y as f64).powi(2);
                n += 1;
            }
        }
        s / n as f64
    }

    #[test]
    fn bases_are_orthonormal() {
        for basis in [dct_basis(16), dct_basis(8), walsh_basis(16), dct_basis(4)] {
            let n = (basis.len() as f64).sqrt() as usize;
            for i in 0..n {
                for j in 0..n {
                    let d: f64 = (0..n).map(|k| basis[i * n + k] * basis[j * n + k]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((d - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_plane_has_only_dc() {
        let planes = Frame::filled(PixelFormat::Gray, 32, 32, 128).to_real(0.0);
        let g = DCT16.analysis(&planes);
        assert_eq!(g.channels, 256);
        for r in 0..2 {
            for c in 0..2 {
                let cell = g.cell(r, c);
                assert!((cell[0] - 128.0 * 16.0).abs() < 1e-9);
                assert!(cell[1..].iter().all(|v| v.abs() < 1e-9));
            }
        }
        // Centered analysis of a mid-gray frame is all zero.
        let f = Frame::filled(PixelFormat::Yuv420, 48, 32, 128);
        assert!(analyze_frame(&DCT16, &f).data.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn perfect_reconstruction_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in transforms().iter() {
            for format in [PixelFormat::Gray, PixelFormat::Yuv420, PixelFormat::Rgb] {
                let f = random_frame(&mut rng, format, 64, 64);
                let real = f.to_real(-128.0);
                let g = t.analysis(&real);
                let e_pix: f64 = real.planes.iter().flat_map(|p| p.data.iter()).map(|v| v * v).sum();
                let e_lat: f64 = g.data.iter().map(|v| v * v).sum();
                assert!(((e_pix - e_lat) / e_pix).abs() < 1e-6);
                let back = t.synthesis(&g, format, 64, 64, None, 0.0);
                for (a, b) in real.planes.iter().zip(&back.planes) {
                    for (x, y) in a.data.iter().zip(&b.data) {
                        assert!((x - y).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn odd_sizes_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_frame(&mut rng, PixelFormat::Yuv420, 37, 21);
        let g = analyze_frame(&DCT16, &f);
        assert_eq!((g.rows, g.cols, g.channels), (2, 3, 384));
        let back = synthesize_frame(&DCT16, &g, PixelFormat::Yuv420, 37, 21, None);
        assert_eq!(back, f);
    }

    #[test]
    fn zero_latent_is_mid_gray() {
        let g = Grid::new(2, 2, 384);
        let f = synthesize_frame(&DCT16, &g, PixelFormat::Yuv420, 32, 32, None);
        assert!(f.planes.iter().all(|p| p.data.iter().all(|&v| v == 128)));
    }

    #[test]
    fn unit_step_quantization_psnr() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_frame(&mut rng, PixelFormat::Rgb, 64, 48);
        let g = analyze_frame(&DCT16, &f);
        let q = quantize(&g, 1.0, 1 << 14);
        let back = synthesize_frame(&DCT16, &dequantize(&q.plane.grid, 1.0), f.format, 64, 48, None);
        let psnr = 10.0 * (255.0f64 * 255.0 / mse(&f, &back)).log10();
        assert!(psnr >= 52.0, "{psnr}");
    }

    #[test]
    fn distortion_grows_with_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = random_frame(&mut rng, PixelFormat::Gray, 64, 64);
        let g = analyze_frame(&DCT16, &f);
        let mut prev = -1.0;
        for step in QUALITY_STEPS {
            let q = quantize(&g, step, 1 << 14);
            let back = synthesize_frame(&DCT16, &dequantize(&q.plane.grid, step), f.format, 64, 64, None);
            let m = mse(&f, &back);
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn locality_and_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_frame(&mut rng, PixelFormat::Yuv420, 64, 64);
        let g = analyze_frame(&DCT16, &f);
        let base = synthesize_frame(&DCT16, &g, f.format, 64, 64, None);
        let mut g2 = g.clone();
        for v in g2.cell_mut(1, 2) {
            *v += 10.0;
        }
        let changed = synthesize_frame(&DCT16, &g2, f.format, 64, 64, None);
        for (p, (a, b)) in base.planes.iter().zip(&changed.planes).enumerate() {
            let n = 16 >> f.format.plane_shift(p);
            for y in 0..a.height {
                for x in 0..a.width {
                    if y / n != 1 || x / n != 2 {
                        assert_eq!(a.get(x, y), b.get(x, y));
                    }
                }
            }
        }
        let mut mask = CellMask::new(4, 4);
        mask.set(1, 1, true);
        let part = synthesize_frame(&DCT16, &g, f.format, 64, 64, Some(&mask));
        let luma = &part.planes[0];
        for y in 0..64 {
            for x in 0..64 {
                if (16..32).contains(&x) && (16..32).contains(&y) {
                    assert_eq!(luma.get(x, y), base.planes[0].get(x, y));
                } else {
                    assert_eq!(luma.get(x, y), 128);
                }
            }
        }
    }
}
