//! Video encoder and GoP decoder.
//!
//! Each GoP is closed: its first frame is intra-coded region by region, the
//! rest are predicted from the previous reconstruction.

use std::sync::Arc;

use rayon::prelude::*;

use crate::container::{
    parse_header_only, serialize_stream, ChunkEntry, ChunkKind, EncodedGop, GlobalHeader, ObjectRecord, PayloadChunk,
    SemanticHeader, StreamHeader, VERSION,
};
use crate::entropy::{dequantize, entropy_models, frame_chunk, open_chunk, quantize, LatentEntropyModel, MAX_BOUND};
use crate::error::{Error, Result};
use crate::frame::{Frame, PixelFormat, Plane};
use crate::intercode::{
    compress_motion, compress_residual, decode_motion, decode_residual, estimate_motion, motion_compensate,
    motion_estimators, MotionEstimator, MotionField, SearchParams,
};
use crate::latent::{CellMask, Grid};
use crate::partition::{apply_fill, layout_for_objects, RegionLayout};
use crate::semantics::Annotations;
use crate::transform::{analyze_frame, quant_step, transforms, LatentTransform, QUALITY_LAMBDAS};

/// Encoder settings. Strategies are picked from their registries.
#[derive(Clone)]
pub struct CodecConfig {
    pub transform: Arc<dyn LatentTransform>,
    pub entropy: Arc<dyn LatentEntropyModel>,
    pub estimator: Arc<dyn MotionEstimator>,
    pub quality_index: u8,
    pub gop_size: u8,
    pub search: SearchParams,
    /// Motion quantization step in quarter pels (1 = lossless).
    pub motion_step: u8,
    /// Motion search rate weight; `None` uses twice the quantization step.
    pub motion_lambda: Option<f64>,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            transform: transforms().by_name("dct16").unwrap(),
            entropy: entropy_models().by_name("gaussian-context").unwrap(),
            estimator: motion_estimators().by_name("diamond").unwrap(),
            quality_index: 0,
            gop_size: 10,
            search: SearchParams::default(),
            motion_step: 1,
            motion_lambda: None,
        }
    }
}

impl CodecConfig {
    pub fn with_strategies(transform: &str, entropy: &str, estimator: &str) -> Result<Self> {
        Ok(Self {
            transform: transforms().by_name(transform)?,
            entropy: entropy_models().by_name(entropy)?,
            estimator: motion_estimators().by_name(estimator)?,
            ..Self::default()
        })
    }

    fn validate(&self) -> Result<()> {
        if quant_step(self.quality_index).is_none() {
            return Err(Error::Input(format!("quality index {} out of range 0..=3", self.quality_index)));
        }
        if self.gop_size == 0 {
            return Err(Error::Input("GoP size must be at least 1".into()));
        }
        if self.motion_step == 0 || self.search.block < 2 || self.search.block > 255 || self.search.range < 0 {
            return Err(Error::Input("motion block, step or range out of range".into()));
        }
        Ok(())
    }
}

/// Decoder-side parameters recovered from a global header.
#[derive(Clone)]
pub struct CodecParams {
    pub transform: Arc<dyn LatentTransform>,
    pub entropy: Arc<dyn LatentEntropyModel>,
    pub format: PixelFormat,
    pub width: usize,
    pub height: usize,
    pub step: f64,
    pub motion_block: usize,
    pub motion_step: u8,
}

/// Largest frame area the codec accepts, in luma pixels (an 8K frame fits).
pub const MAX_FRAME_PIXELS: usize = 1 << 26;

impl CodecParams {
    pub fn from_header(g: &GlobalHeader) -> Result<Self> {
        let area = g.width as usize * g.height as usize;
        if area > MAX_FRAME_PIXELS {
            return Err(Error::Capacity(format!("{}x{} frames exceed {MAX_FRAME_PIXELS} pixels", g.width, g.height)));
        }
        Ok(Self {
            transform: transforms().by_id(g.transform_id)?,
            entropy: entropy_models().by_id(g.entropy_model_id)?,
            format: g.pixel_format,
            width: g.width as usize,
            height: g.height as usize,
            step: quant_step(g.quality_index).ok_or_else(|| Error::Input("bad quality index".into()))?,
            motion_block: g.motion_block as usize,
            motion_step: g.motion_step,
        })
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        self.transform.grid_dims(self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.transform.channels(self.format)
    }

    /// Layout of an intra frame from its header object records. The region
    /// index stored in each record must agree with the rebuilt layout.
    pub fn layout(&self, objects: &[ObjectRecord]) -> Result<RegionLayout> {
        let (rows, cols) = self.grid_dims();
        let layout = layout_for_objects(objects, self.transform.stride(), rows, cols)?;
        for (k, o) in objects.iter().enumerate() {
            if layout.object_region[k] != o.region as usize {
                return Err(Error::Layout(format!(
                    "object {k} is recorded in region {} but the layout puts it in region {}",
                    o.region, layout.object_region[k]
                )));
            }
        }
        Ok(layout)
    }
}

/// Per-frame rate and distortion from the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStats {
    pub frame_index: u32,
    pub intra: bool,
    pub bytes: usize,
    pub mse: f64,
}

/// Rate-distortion summary of one GoP: mean rate in bpp, mean distortion
/// as MSE on a unit pixel scale, and `J = R + lambda * D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GopRd {
    pub rate: f64,
    pub distortion: f64,
    pub lambda: f64,
    pub cost: f64,
}

pub fn gop_rd(stats: &[FrameStats], width: usize, height: usize, lambda: f64) -> GopRd {
    let n = stats.len() as f64;
    let rate = stats.iter().map(|s| 8.0 * s.bytes as f64 / (width * height) as f64).sum::<f64>() / n;
    let distortion = stats.iter().map(|s| s.mse / (255.0 * 255.0)).sum::<f64>() / n;
    GopRd { rate, distortion, lambda, cost: rate + lambda * distortion }
}

pub fn frame_mse(a: &Frame, b: &Frame) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for (pa, pb) in a.planes.iter().zip(&b.planes) {
        for (&x, &y) in pa.data.iter().zip(&pb.data) {
            let d = x as f64 - y as f64;
            s += d * d;
        }
        n += pa.data.len();
    }
    s / n as f64
}

/// Result of coding one intra frame.
pub struct IntraEncoding {
    pub objects: Vec<ObjectRecord>,
    pub chunks: Vec<PayloadChunk>,
    pub layout: RegionLayout,
    pub latent: Grid<i32>,
    pub recon: Frame,
}

pub fn encode_intra(frame: &Frame, objects: &[ObjectRecord], frame_index: u32, p: &CodecParams) -> Result<IntraEncoding> {
    let q = quantize(&analyze_frame(p.transform.as_ref(), frame), p.step, MAX_BOUND);
    if q.clamped > 0 {
        log::warn!("frame {frame_index}: {} coefficients clamped to the coder alphabet", q.clamped);
    }
    let latent = q.plane.grid;
    let (rows, cols) = p.grid_dims();
    let layout = layout_for_objects(objects, p.transform.stride(), rows, cols)?;
    let objects: Vec<ObjectRecord> = objects
        .iter()
        .zip(&layout.object_region)
        .map(|(o, &r)| ObjectRecord { region: r as u16, ..*o })
        .collect();
    let chunks = layout
        .regions
        .par_iter()
        .enumerate()
        .map(|(i, region)| {
            let payload = p.entropy.encode_region(&latent, &region.cells)?;
            let (kind, index) = if region.is_background() { (ChunkKind::Background, 0) } else { (ChunkKind::Object, i as u16) };
            Ok(PayloadChunk { kind, index, frame_index, bytes: frame_chunk(&payload) })
        })
        .collect::<Result<Vec<_>>>()?;
    let recon = synthesize_cells(p, &latent, None);
    Ok(IntraEncoding { objects, chunks, layout, latent, recon })
}

fn synthesize_cells(p: &CodecParams, latent: &Grid<i32>, valid: Option<&CellMask>) -> Frame {
    p.transform
        .synthesis(&dequantize(latent, p.step), p.format, p.width, p.height, valid, 0.0)
        .to_frame(128.0)
}

/// Per-cell state of a partially decoded intra frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum CellState {
    Undecoded = 0,
    Decoded = 1,
    Filled = 2,
}

/// A partially decoded intra frame.
pub struct IntraPartial {
    pub latent: Grid<i32>,
    pub states: Vec<CellState>,
    pub frame: Frame,
    /// Luma-resolution mask of [`CellState`] values.
    pub mask: Plane<u8>,
}

/// Decodes the chosen regions of an intra frame. `chunks[i]` holds the framed
/// chunk of region `i` or `None` when that region is skipped.
pub fn decode_intra(p: &CodecParams, layout: &RegionLayout, chunks: &[Option<&[u8]>]) -> Result<IntraPartial> {
    let (rows, cols) = (layout.rows, layout.cols);
    let channels = p.channels();
    let mut latent = Grid::new(rows, cols, channels);
    let mut states = vec![CellState::Undecoded; rows * cols];
    let bg = layout.background_index();
    let decode_region = |i: usize, chunk: &[u8]| -> Result<Grid<i32>> {
        let payload = open_chunk(chunk)?;
        Ok(p.entropy.decode_region(payload, &layout.regions[i].cells, channels)?)
    };
    if let Some(chunk) = chunks[bg] {
        let g = decode_region(bg, chunk)?;
        for &(r, c) in &layout.regions[bg].cells.cells {
            latent.cell_mut(r, c).copy_from_slice(g.cell(r, c));
            states[r * cols + c] = CellState::Decoded;
        }
        apply_fill(layout, &mut latent);
        for &((r, c), _) in &layout.fill {
            states[r * cols + c] = CellState::Filled;
        }
    }
    for (i, chunk) in chunks.iter().enumerate().take(bg) {
        if let Some(chunk) = chunk {
            let g = decode_region(i, chunk)?;
            for &(r, c) in &layout.regions[i].cells.cells {
                latent.cell_mut(r, c).copy_from_slice(g.cell(r, c));
                states[r * cols + c] = CellState::Decoded;
            }
        }
    }
    let mut valid = CellMask::new(rows, cols);
    for (i, s) in states.iter().enumerate() {
        valid.bits[i] = *s != CellState::Undecoded;
    }
    let all = valid.bits.iter().all(|&b| b);
    let frame = synthesize_cells(p, &latent, if all { None } else { Some(&valid) });
    let stride = p.transform.stride();
    let mut mask = Plane::new(p.width, p.height);
    for y in 0..p.height {
        for x in 0..p.width {
            mask.set(x, y, states[(y / stride) * cols + x / stride] as u8);
        }
    }
    Ok(IntraPartial { latent, states, frame, mask })
}

/// Output of [`encode_gop`].
pub struct GopEncoding {
    pub gop: EncodedGop,
    pub recon: Vec<Frame>,
    pub stats: Vec<FrameStats>,
    pub rd: GopRd,
}

/// Codes `frames` as one closed GoP starting at absolute frame `first`.
struct InterCoding {
    motion_chunk: Vec<u8>,
    residual_chunk: Vec<u8>,
    recon: Frame,
    sse: f64,
}

impl InterCoding {
    /// Squared error plus rate, with the high-rate slope of the uniform quantizer.
    fn cost(&self, step: f64) -> f64 {
        let bits = 8.0 * (self.motion_chunk.len() + self.residual_chunk.len()) as f64;
        self.sse + std::f64::consts::LN_2 / 6.0 * step * step * bits
    }
}

fn code_inter(cur: &Frame, reference: &Frame, field: &MotionField, p: &CodecParams) -> Result<InterCoding> {
    let (motion_chunk, decoded_field) = compress_motion(field, p.motion_step, p.entropy.as_ref())?;
    let pred = motion_compensate(reference, &decoded_field);
    let (residual_chunk, recon) = compress_residual(cur, &pred, p.transform.as_ref(), p.entropy.as_ref(), p.step)?;
    let samples: usize = cur.planes.iter().map(|pl| pl.data.len()).sum();
    let sse = frame_mse(cur, &recon) * samples as f64;
    Ok(InterCoding { motion_chunk, residual_chunk, recon, sse })
}

pub fn encode_gop(
    frames: &[Frame],
    first: u32,
    objects: &[ObjectRecord],
    cfg: &CodecConfig,
    p: &CodecParams,
) -> Result<GopEncoding> {
    if frames.is_empty() || frames.len() > cfg.gop_size as usize {
        return Err(Error::Input(format!("GoP of {} frames with GoP size {}", frames.len(), cfg.gop_size)));
    }
    for (i, f) in frames.iter().enumerate() {
        if f.format != p.format || f.width != p.width || f.height != p.height {
            return Err(Error::Dimension(format!("frame {} differs in shape from the stream", first as usize + i)));
        }
    }
    let intra = encode_intra(&frames[0], objects, first, p)?;
    let mut chunks = intra.chunks;
    let mut stats = vec![FrameStats {
        frame_index: first,
        intra: true,
        bytes: chunks.iter().map(|c| c.bytes.len()).sum(),
        mse: frame_mse(&frames[0], &intra.recon),
    }];
    let mut recon = vec![intra.recon];
    let lambda = cfg.motion_lambda.unwrap_or(2.0 * p.step);
    let search = SearchParams { block: p.motion_block, lambda, ..cfg.search };
    for (i, cur) in frames.iter().enumerate().skip(1) {
        let fi = first + i as u32;
        let reference = recon.last().unwrap();
        let field = estimate_motion(cur, reference, cfg.estimator.as_ref(), &search)?;
        let mut best = code_inter(cur, reference, &field, p)?;
        if !field.is_zero() {
            let still = code_inter(cur, reference, &MotionField::zeros(p.width, p.height, field.block), p)?;
            if still.cost(p.step) <= best.cost(p.step) {
                best = still;
            }
        }
        let InterCoding { motion_chunk, residual_chunk, recon: rec, .. } = best;
        stats.push(FrameStats { frame_index: fi, intra: false, bytes: motion_chunk.len() + residual_chunk.len(), mse: frame_mse(cur, &rec) });
        chunks.push(PayloadChunk { kind: ChunkKind::Motion, index: 0, frame_index: fi, bytes: motion_chunk });
        chunks.push(PayloadChunk { kind: ChunkKind::Residual, index: 0, frame_index: fi, bytes: residual_chunk });
        recon.push(rec);
    }
    let lambda = QUALITY_LAMBDAS[cfg.quality_index as usize] as f64;
    let rd = gop_rd(&stats, p.width, p.height, lambda);
    let gop = EncodedGop { frame_count: frames.len() as u8, objects: intra.objects, chunks };
    Ok(GopEncoding { gop, recon, stats, rd })
}

fn chunk_bytes<'a>(bytes: &'a [u8], e: &ChunkEntry) -> Result<&'a [u8]> {
    bytes
        .get(e.range())
        .ok_or_else(|| Error::Input(format!("{} chunk of frame {} extends past end of file", e.kind, e.frame_index)))
}

/// Fully decodes frames `0..=last` (GoP-relative) of GoP `sh`, returning the
/// reconstructions and the chunk entries read.
pub fn decode_gop_prefix(
    p: &CodecParams,
    sh: &SemanticHeader,
    bytes: &[u8],
    last: usize,
) -> Result<(Vec<Frame>, Vec<ChunkEntry>)> {
    let layout = p.layout(&sh.objects)?;
    let mut touched = Vec::new();
    let mut region_chunks = Vec::with_capacity(layout.regions.len());
    for e in sh.chunks.iter().filter(|c| matches!(c.kind, ChunkKind::Object | ChunkKind::Background)) {
        region_chunks.push(Some(chunk_bytes(bytes, e)?));
        touched.push(*e);
    }
    let mut frames = vec![decode_intra(p, &layout, &region_chunks)?.frame];
    let inter: Vec<&ChunkEntry> = sh.chunks.iter().filter(|c| matches!(c.kind, ChunkKind::Motion | ChunkKind::Residual)).collect();
    for pair in inter.chunks_exact(2).take(last) {
        let field = decode_motion(chunk_bytes(bytes, pair[0])?, p.width, p.height, p.motion_block, p.motion_step, p.entropy.as_ref())?;
        let pred = motion_compensate(frames.last().unwrap(), &field);
        frames.push(decode_residual(chunk_bytes(bytes, pair[1])?, &pred, p.transform.as_ref(), p.entropy.as_ref(), p.step)?);
        touched.push(*pair[0]);
        touched.push(*pair[1]);
    }
    Ok((frames, touched))
}

pub fn decode_gop(p: &CodecParams, sh: &SemanticHeader, bytes: &[u8]) -> Result<Vec<Frame>> {
    Ok(decode_gop_prefix(p, sh, bytes, sh.frame_count as usize - 1)?.0)
}

/// Everything the encoder produced for one video.
pub struct EncodedVideo {
    pub bytes: Vec<u8>,
    pub header: StreamHeader,
    pub recon: Vec<Frame>,
    pub stats: Vec<FrameStats>,
    pub gop_rd: Vec<GopRd>,
}

pub fn encode_video(frames: &[Frame], annotations: Option<&Annotations>, cfg: &CodecConfig) -> Result<EncodedVideo> {
    cfg.validate()?;
    let first = frames.first().ok_or_else(|| Error::Input("no frames to encode".into()))?;
    if let Some(i) = frames.iter().position(|f| !f.same_shape(first)) {
        return Err(Error::Dimension(format!("frame {i} differs in shape from frame 0")));
    }
    if first.width > u16::MAX as usize || first.height > u16::MAX as usize {
        return Err(Error::Capacity(format!("{}x{} exceeds 16-bit frame dimensions", first.width, first.height)));
    }
    let frame_count = u32::try_from(frames.len()).map_err(|_| Error::Capacity("too many frames".into()))?;
    let stride = cfg.transform.stride();
    let global = GlobalHeader {
        width: first.width as u16,
        height: first.height as u16,
        frame_count,
        gop_size: cfg.gop_size,
        stride: stride as u8,
        channels: u16::try_from(cfg.transform.channels(first.format)).map_err(|_| Error::Capacity("channel count".into()))?,
        transform_id: cfg.transform.id(),
        entropy_model_id: cfg.entropy.id(),
        quality_index: cfg.quality_index,
        pixel_format: first.format,
        motion_block: cfg.search.block as u8,
        motion_step: cfg.motion_step,
        class_names: annotations.map(|a| a.class_names.iter().map(|(k, v)| (*k, v.clone())).collect()).unwrap_or_default(),
    };
    debug_assert_eq!(VERSION, 1);
    let p = CodecParams::from_header(&global)?;
    let gop = cfg.gop_size as usize;
    let results = frames
        .par_chunks(gop)
        .enumerate()
        .map(|(g, chunk)| {
            let start = (g * gop) as u32;
            let objects = annotations.map(|a| a.objects_for_frame(start, p.width, p.height)).unwrap_or_default();
            encode_gop(chunk, start, &objects, cfg, &p)
        })
        .collect::<Result<Vec<_>>>()?;
    let gops: Vec<EncodedGop> = results.iter().map(|r| r.gop.clone()).collect();
    let bytes = serialize_stream(&global, &gops)?;
    let header = parse_header_only(&bytes)?;
    let mut recon = Vec::with_capacity(frames.len());
    let mut stats = Vec::with_capacity(frames.len());
    let mut gop_rd = Vec::with_capacity(results.len());
    for r in results {
        recon.extend(r.recon);
        stats.extend(r.stats);
        gop_rd.push(r.rd);
    }
    Ok(EncodedVideo { bytes, header, recon, stats, gop_rd })
}

/// Decodes every frame of a stream.
pub fn decode_video(bytes: &[u8]) -> Result<Vec<Frame>> {
    let header = parse_header_only(bytes)?;
    let p = CodecParams::from_header(&header.global)?;
    let per_gop = header.gops.par_iter().map(|sh| decode_gop(&p, sh, bytes)).collect::<Result<Vec<_>>>()?;
    Ok(per_gop.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(n: usize, w: usize, h: usize) -> Vec<Frame> {
        (0..n)
            .map(|t| {
                let mut f = Frame::filled(PixelFormat::Yuv420, w, h, 128);
                for (pi, p) in f.planes.iter_mut().enumerate() {
                    for y in 0..p.height {
                        for x in 0..p.width {
                            let v = 128.0 + 50.0 * ((x + 2 * t) as f64 * 0.2 + pi as f64).sin() * (y as f64 * 0.15).cos();
                            p.set(x, y, v as u8);
                        }
                    }
                }
                f
            })
            .collect()
    }

    #[test]
    fn encode_decode_matches_recon() {
        let frames = clip(5, 48, 40);
        let ann = Annotations::parse("0 1 4 4 20 12 car\n3 0 30 10 10 20\n").unwrap();
        let cfg = CodecConfig { gop_size: 3, ..CodecConfig::default() };
        let v = encode_video(&frames, Some(&ann), &cfg).unwrap();
        assert_eq!(v.header.gops.len(), 2);
        assert_eq!(v.header.gops[0].objects.len(), 1);
        assert_eq!(v.header.gops[1].objects.len(), 1);
        assert_eq!(decode_video(&v.bytes).unwrap(), v.recon);
        assert!(v.stats.iter().all(|s| s.mse < 20.0));
    }

    #[test]
    fn static_gop_p_frames_are_cheap() {
        let mut f = clip(1, 128, 128).remove(0);
        let mut seed = 7u32;
        for p in &mut f.planes {
            for v in &mut p.data {
                seed = seed.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
                *v = v.saturating_add((seed >> 28) as u8);
            }
        }
        let frames = vec![f; 3];
        let cfg = CodecConfig { gop_size: 3, ..CodecConfig::default() };
        let v = encode_video(&frames, None, &cfg).unwrap();
        let i_bytes = v.stats[0].bytes;
        for s in &v.stats[1..] {
            assert!(s.bytes * 10 < i_bytes * 3, "{} vs {i_bytes}", s.bytes);
            assert!(s.mse <= v.stats[0].mse * 1.05);
        }
    }
}
