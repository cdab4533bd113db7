//! Quality and rate metrics, BD-rate, and the rate-distortion sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::codec::{decode_video, encode_video, frame_mse, CodecConfig, CodecParams};
use crate::container::ChunkKind;
use crate::error::{Error, Result};
use crate::frame::{Frame, Plane};
use crate::partition::region_bit_report;
use crate::semantics::Annotations;
use crate::transform::quant_step;

/// Reported PSNR for identical inputs, and the ceiling of any PSNR in dB.
pub const PSNR_CAP: f64 = 99.0;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_pair(a: &Frame, b: &Frame) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Dimension(format!(
            "{}x{} {} vs {}x{} {}",
            a.width,
            a.height,
            a.format.name(),
            b.width,
            b.height,
            b.format.name()
        )));
    }
    Ok(())
}

fn check_sequences(a: &[Frame], b: &[Frame]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimension(format!("sequences of {} and {} frames", a.len(), b.len())));
    }
    a.iter().zip(b).try_for_each(|(x, y)| check_pair(x, y))
}

pub fn mse_to_psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (255.0 * 255.0 / mse).log10()).min(PSNR_CAP)
}

/// PSNR over all samples of one frame.
pub fn frame_psnr(a: &Frame, b: &Frame) -> Result<f64> {
    check_pair(a, b)?;
    Ok(mse_to_psnr(frame_mse(a, b)))
}

/// Mean of per-frame PSNRs.
pub fn psnr(a: &[Frame], b: &[Frame]) -> Result<f64> {
    check_sequences(a, b)?;
    let per: Vec<f64> = a.iter().zip(b).map(|(x, y)| mse_to_psnr(frame_mse(x, y))).collect();
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

fn gaussian_window() -> Vec<f64> {
    let h = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW).map(|i| (-(i as f64 - h).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering: output is `(w - 10) x (h - 10)`.
fn filter_valid(p: &Plane<f64>, g: &[f64]) -> Plane<f64> {
    let k = g.len();
    let (w, h) = (p.width, p.height);
    let ow = w + 1 - k;
    let oh = h + 1 - k;
    let mut tmp = Plane::<f64>::new(ow, h);
    for y in 0..h {
        let row = p.row(y);
        for x in 0..ow {
            tmp.data[y * ow + x] = g.iter().zip(&row[x..x + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = Plane::<f64>::new(ow, oh);
    for y in 0..oh {
        for x in 0..ow {
            out.data[y * ow + x] = (0..k).map(|i| g[i] * tmp.data[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM luminance term and contrast-structure term of one scale.
fn ssim_terms(a: &Plane<f64>, b: &Plane<f64>, g: &[f64]) -> (f64, f64) {
    let c1 = (SSIM_K1 * 255.0).powi(2);
    let c2 = (SSIM_K2 * 255.0).powi(2);
    let prod = |f: &dyn Fn(f64, f64) -> f64| Plane::from_vec(a.width, a.height, a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect());
    let mu_a = filter_valid(a, g);
    let mu_b = filter_valid(b, g);
    let aa = filter_valid(&prod(&|x, _| x * x), g);
    let bb = filter_valid(&prod(&|_, y| y * y), g);
    let ab = filter_valid(&prod(&|x, y| x * y), g);
    let n = mu_a.data.len() as f64;
    let (mut l_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..mu_a.data.len() {
        let (ma, mb) = (mu_a.data[i], mu_b.data[i]);
        let va = aa.data[i] - ma * ma;
        let vb = bb.data[i] - mb * mb;
        let cov = ab.data[i] - ma * mb;
        l_sum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs_sum += (2.0 * cov + c2) / (va + vb + c2);
    }
    (l_sum / n, cs_sum / n)
}

fn downsample(p: &Plane<f64>) -> Plane<f64> {
    let (w, h) = (p.width / 2, p.height / 2);
    let mut out = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let s = p.get(2 * x, 2 * y) + p.get(2 * x + 1, 2 * y) + p.get(2 * x, 2 * y + 1) + p.get(2 * x + 1, 2 * y + 1);
            out.set(x, y, s / 4.0);
        }
    }
    out
}

/// Number of pyramid scales a `w x h` luma plane supports, at most five.
pub fn ms_ssim_scales(width: usize, height: usize) -> usize {
    let mut s = 0;
    let mut m = width.min(height);
    while s < MS_SSIM_WEIGHTS.len() && m >= SSIM_WINDOW {
        s += 1;
        m /= 2;
    }
    s
}

/// Luma MS-SSIM of one frame pair. Frames under 176 pixels on a side use
/// fewer scales with renormalized weights.
pub fn frame_ms_ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check_pair(a, b)?;
    let scales = ms_ssim_scales(a.width, a.height);
    if scales == 0 {
        return Err(Error::Dimension(format!("{}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window", a.width, a.height)));
    }
    if scales < MS_SSIM_WEIGHTS.len() {
        log::warn!("{}x{} supports only {scales} MS-SSIM scales; using renormalized weights", a.width, a.height);
    }
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let wsum: f64 = weights.iter().sum();
    let g = gaussian_window();
    let mut pa = a.planes[0].map(|v| v as f64);
    let mut pb = b.planes[0].map(|v| v as f64);
    let mut value = 1.0;
    for (j, &w) in weights.iter().enumerate() {
        let (l, cs) = ssim_terms(&pa, &pb, &g);
        let term = if j + 1 == scales { l * cs } else { cs };
        value *= term.max(0.0).powf(w / wsum);
        if j + 1 < scales {
            pa = downsample(&pa);
            pb = downsample(&pb);
        }
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Mean of per-frame MS-SSIM.
pub fn ms_ssim(a: &[Frame], b: &[Frame]) -> Result<f64> {
    check_sequences(a, b)?;
    let per = a.par_iter().zip(b).map(|(x, y)| frame_ms_ssim(x, y)).collect::<Result<Vec<_>>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// MS-SSIM on a decibel scale, `-10 log10(1 - v)`, capped like PSNR.
pub fn ms_ssim_db(v: f64) -> f64 {
    let d = 1.0 - v;
    if d <= 0.0 {
        return PSNR_CAP;
    }
    (-10.0 * d.log10()).min(PSNR_CAP)
}

pub fn bpp(stream_bytes: usize, width: usize, height: usize, frames: usize) -> f64 {
    8.0 * stream_bytes as f64 / (width * height * frames) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdPoint {
    pub label: String,
    pub bpp: f64,
    pub psnr: f64,
    pub msssim: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QualityAxis {
    #[default]
    Psnr,
    /// MS-SSIM in dB, see [`ms_ssim_db`].
    MsSsimDb,
}

impl QualityAxis {
    pub fn of(self, p: &RdPoint) -> f64 {
        match self {
            QualityAxis::Psnr => p.psnr,
            QualityAxis::MsSsimDb => ms_ssim_db(p.msssim),
        }
    }
}

/// Least-squares cubic `c0 + c1 q + c2 q^2 + c3 q^3` through `(q, y)`.
pub fn fit_cubic(q: &[f64], y: &[f64]) -> Result<[f64; 4]> {
    let n = q.len();
    let a = DMatrix::from_fn(n, 4, |i, j| q[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let c = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Input(format!("cubic fit failed: {e}")))?;
    Ok([c[0], c[1], c[2], c[3]])
}

fn cubic_integral(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let prim = |x: f64| c[0] * x + c[1] * x * x / 2.0 + c[2] * x.powi(3) / 3.0 + c[3] * x.powi(4) / 4.0;
    prim(hi) - prim(lo)
}

/// Bjøntegaard delta rate of `b` against `a`, in percent. Negative means
/// `b` needs fewer bits for the same quality.
pub fn bd_rate(a: &[RdPoint], b: &[RdPoint], axis: QualityAxis) -> Result<f64> {
    if a.len() < 4 || b.len() < 4 {
        return Err(Error::Input(format!("BD-rate needs at least 4 points per curve, got {} and {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|p| !(p.bpp > 0.0)) {
        return Err(Error::Input("BD-rate needs positive rates".into()));
    }
    let qa: Vec<f64> = a.iter().map(|p| axis.of(p)).collect();
    let qb: Vec<f64> = b.iter().map(|p| axis.of(p)).collect();
    let span = |q: &[f64]| (q.iter().copied().fold(f64::INFINITY, f64::min), q.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let (alo, ahi) = span(&qa);
    let (blo, bhi) = span(&qb);
    let lo = alo.max(blo);
    let hi = ahi.min(bhi);
    if !(hi > lo) {
        return Err(Error::Input(format!("quality ranges [{alo:.3}, {ahi:.3}] and [{blo:.3}, {bhi:.3}] do not overlap")));
    }
    // Fit on a centred, unit-scaled axis; the mean over [lo, hi] is unchanged.
    let (c, s) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
    let norm = |q: &[f64]| q.iter().map(|v| (v - c) / s).collect::<Vec<_>>();
    let ln_rate = |pts: &[RdPoint]| pts.iter().map(|p| p.bpp.ln()).collect::<Vec<_>>();
    let ca = fit_cubic(&norm(&qa), &ln_rate(a))?;
    let cb = fit_cubic(&norm(&qb), &ln_rate(b))?;
    let avg = (cubic_integral(&cb, -1.0, 1.0) - cubic_integral(&ca, -1.0, 1.0)) / 2.0;
    Ok((avg.exp() - 1.0) * 100.0)
}

/// One rung of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RdRow {
    pub quality_index: u8,
    pub step: f64,
    pub point: RdPoint,
    pub file_bytes: usize,
    pub header_bytes: usize,
    pub kind_bytes: BTreeMap<ChunkKind, usize>,
    pub intra_bpp: f64,
    pub inter_bpp: f64,
    /// `(gop, label, bytes, share)` for every intra region.
    pub regions: Vec<(usize, String, usize, f64)>,
    /// Decoder output equals the encoder's reconstruction on every frame.
    pub closed_loop: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<RdRow>,
}

/// Encodes `frames` at every quality index of `ladder`, decodes each stream
/// fully and measures it. Rungs run in parallel.
pub fn rd_sweep(frames: &[Frame], annotations: Option<&Annotations>, ladder: &[u8], base: &CodecConfig) -> Result<SweepReport> {
    let first = frames.first().ok_or_else(|| Error::Input("no frames".into()))?;
    let (w, h, n) = (first.width, first.height, frames.len());
    let rows = ladder
        .par_iter()
        .map(|&q| {
            let step = quant_step(q).ok_or_else(|| Error::Input(format!("quality index {q} out of range")))?;
            let cfg = CodecConfig { quality_index: q, ..base.clone() };
            let enc = encode_video(frames, annotations, &cfg)?;
            let decoded = decode_video(&enc.bytes)?;
            let closed_loop = decoded == enc.recon;
            let mut kind_bytes = BTreeMap::new();
            for e in enc.header.entries() {
                *kind_bytes.entry(e.kind).or_insert(0) += e.length as usize;
            }
            let p = CodecParams::from_header(&enc.header.global)?;
            let mut regions = Vec::new();
            for (g, sh) in enc.header.gops.iter().enumerate() {
                let layout = p.layout(&sh.objects)?;
                for r in region_bit_report(&layout, &sh.chunks, w, h)? {
                    regions.push((g, r.label, r.bytes, r.share));
                }
            }
            let pix = (w * h) as f64;
            let (mut ib, mut ic, mut pb, mut pc) = (0usize, 0usize, 0usize, 0usize);
            for s in &enc.stats {
                if s.intra {
                    ib += s.bytes;
                    ic += 1;
                } else {
                    pb += s.bytes;
                    pc += 1;
                }
            }
            let avg = |b: usize, c: usize| if c == 0 { 0.0 } else { 8.0 * b as f64 / c as f64 / pix };
            let point = RdPoint {
                label: format!("q{q}"),
                bpp: bpp(enc.bytes.len(), w, h, n),
                psnr: psnr(frames, &decoded)?,
                msssim: ms_ssim(frames, &decoded)?,
            };
            Ok(RdRow {
                quality_index: q,
                step,
                point,
                file_bytes: enc.bytes.len(),
                header_bytes: enc.header.header_len,
                kind_bytes,
                intra_bpp: avg(ib, ic),
                inter_bpp: avg(pb, pc),
                regions,
                closed_loop,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { rows })
}

impl SweepReport {
    pub fn points(&self) -> Vec<RdPoint> {
        self.rows.iter().map(|r| r.point.clone()).collect()
    }

    /// Tab-separated RD table with per-stream byte totals.
    pub fn rd_tsv(&self) -> String {
        let mut s = String::from("label\tquality\tstep\tbpp\tpsnr_db\tmsssim\tmsssim_db\tfile_bytes\theader_bytes");
        for k in ChunkKind::ALL {
            let _ = write!(s, "\t{}_bytes", k.name());
        }
        s.push_str("\tintra_bpp\tinter_bpp\tclosed_loop\n");
        for r in &self.rows {
            let _ = write!(
                s,
                "{}\t{}\t{}\t{:.6}\t{:.4}\t{:.6}\t{:.4}\t{}\t{}",
                r.point.label,
                r.quality_index,
                r.step,
                r.point.bpp,
                r.point.psnr,
                r.point.msssim,
                ms_ssim_db(r.point.msssim),
                r.file_bytes,
                r.header_bytes
            );
            for k in ChunkKind::ALL {
                let _ = write!(s, "\t{}", r.kind_bytes.get(&k).copied().unwrap_or(0));
            }
            let _ = writeln!(s, "\t{:.6}\t{:.6}\t{}", r.intra_bpp, r.inter_bpp, r.closed_loop);
        }
        s
    }

    /// Tab-separated per-region intra breakdown.
    pub fn regions_tsv(&self) -> String {
        let mut s = String::from("label\tgop\tregion\tbytes\tshare\n");
        for r in &self.rows {
            for (g, label, bytes, share) in &r.regions {
                let _ = writeln!(s, "{}\t{g}\t{label}\t{bytes}\t{share:.4}", r.point.label);
            }
        }
        s
    }
}
