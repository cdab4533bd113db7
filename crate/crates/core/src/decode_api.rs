//! Partial decoding: answer a request from the smallest set of chunks.
//!
//! | mode            | chunks read per selected GoP                      |
//! |-----------------|---------------------------------------------------|
//! | `Header`        | none                                              |
//! | `Objects(sel)`  | the region chunk of every selected object         |
//! | `Background`    | the background chunk                              |
//! | `Motion`        | motion chunks of the p-frames in range            |
//! | `Residual`      | residual chunks of the p-frames in range          |
//! | `ObjectTube(k)` | object `k`'s region chunk plus the motion chunks  |
//! | `Full`          | everything up to the last frame in range          |
//!
//! A GoP is selected when it overlaps the frame range. Intra outputs always
//! come from the GoP's first frame. Pixels of cells that were not decoded are
//! mid-gray and flagged in the mask.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::codec::{decode_gop_prefix, decode_intra, CellState, CodecParams};
use crate::container::{parse_header_only, ChunkEntry, ChunkKind, ObjectRecord, SemanticHeader, StreamHeader};
use crate::error::{Error, Result};
use crate::frame::{Frame, Plane, PlaneSet};
use crate::intercode::{decode_motion, decode_residual_planes, MotionField};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ObjectSelector {
    /// Object record indices within each selected GoP.
    Indices(Vec<usize>),
    ClassName(String),
    ClassId(u16),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Header,
    Objects(ObjectSelector),
    Background,
    Motion,
    Residual,
    ObjectTube(usize),
    Full,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeRequest {
    pub mode: DecodeMode,
    /// Inclusive absolute frame range; `None` means the whole stream.
    pub frames: Option<RangeInclusive<u32>>,
    /// Keep every `gop_step`-th selected GoP (uniform temporal subsampling of
    /// key frames). `1` keeps all.
    pub gop_step: usize,
}

impl DecodeRequest {
    pub fn new(mode: DecodeMode) -> Self {
        Self { mode, frames: None, gop_step: 1 }
    }

    pub fn frames(mut self, range: RangeInclusive<u32>) -> Self {
        self.frames = Some(range);
        self
    }

    pub fn gop_step(mut self, step: usize) -> Self {
        self.gop_step = step;
        self
    }
}

/// GoP step keeping roughly `fraction` of the key frames.
pub fn gop_step_for_fraction(fraction: f64) -> usize {
    if !(fraction > 0.0) {
        return usize::MAX;
    }
    (1.0 / fraction.min(1.0)).round().max(1.0) as usize
}

/// One object as described by the stream header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectInfo {
    pub gop: usize,
    /// Absolute index of the GoP's key frame.
    pub frame_index: u32,
    /// Record index within the GoP.
    pub index: usize,
    pub record: ObjectRecord,
    pub class_name: Option<String>,
}

/// A decoded frame. `mask` holds [`CellState`] values per luma pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedFrame {
    pub frame_index: u32,
    pub frame: Frame,
    pub mask: Plane<u8>,
}

/// Exact accounting of the bytes a request read.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitReport {
    pub header_bytes: usize,
    pub kind_bytes: BTreeMap<ChunkKind, usize>,
    pub chunks_read: Vec<ChunkEntry>,
    pub file_size: usize,
}

impl BitReport {
    pub fn payload_bytes(&self) -> usize {
        self.kind_bytes.values().sum()
    }

    pub fn bytes_read(&self) -> usize {
        self.header_bytes + self.payload_bytes()
    }

    /// Fraction of the file read.
    pub fn fraction(&self) -> f64 {
        if self.file_size == 0 {
            return 0.0;
        }
        self.bytes_read() as f64 / self.file_size as f64
    }

    fn from_chunks(header_bytes: usize, file_size: usize, mut chunks: Vec<ChunkEntry>) -> Self {
        chunks.sort_by_key(|c| c.offset);
        chunks.dedup();
        let mut kind_bytes = BTreeMap::new();
        for c in &chunks {
            *kind_bytes.entry(c.kind).or_insert(0) += c.length as usize;
        }
        Self { header_bytes, kind_bytes, chunks_read: chunks, file_size }
    }
}

#[derive(Clone, Debug)]
pub struct DecodeResult {
    pub header: StreamHeader,
    pub objects: Vec<ObjectInfo>,
    pub frames: Vec<DecodedFrame>,
    pub motion: Vec<(u32, MotionField)>,
    pub residuals: Vec<(u32, PlaneSet)>,
    pub report: BitReport,
}

/// Pixel box `(x0, y0, x1, y1)`, exclusive ends, covered by the latent cells
/// of an object: the region its chunk reconstructs.
pub fn expanded_box(rec: &ObjectRecord, stride: usize, width: usize, height: usize) -> (usize, usize, usize, usize) {
    let r = rec.bbox_latent(stride, height.div_ceil(stride), width.div_ceil(stride));
    (r.c0 * stride, r.r0 * stride, (r.c1 * stride).min(width), (r.r1 * stride).min(height))
}

fn chunk<'a>(bytes: &'a [u8], e: &ChunkEntry) -> Result<&'a [u8]> {
    bytes
        .get(e.range())
        .ok_or_else(|| Error::Input(format!("{} chunk at offset {} extends past end of file", e.kind, e.offset)))
}

fn object_infos(header: &StreamHeader, gop: usize, indices: &[usize]) -> Vec<ObjectInfo> {
    let sh = &header.gops[gop];
    indices
        .iter()
        .map(|&i| ObjectInfo {
            gop,
            frame_index: header.first_frame(gop),
            index: i,
            record: sh.objects[i],
            class_name: header.global.class_name(sh.objects[i].class_id).map(str::to_string),
        })
        .collect()
}

/// Object indices of one GoP picked by `sel`. Resolved from the header only.
fn resolve(header: &StreamHeader, gop: usize, sel: &ObjectSelector) -> Result<Vec<usize>> {
    let objects = &header.gops[gop].objects;
    match sel {
        ObjectSelector::Indices(ix) => {
            if let Some(&k) = ix.iter().find(|&&k| k >= objects.len()) {
                return Err(Error::NotFound(format!("object {k} in GoP {gop} ({} objects)", objects.len())));
            }
            let mut ix = ix.clone();
            ix.sort_unstable();
            ix.dedup();
            Ok(ix)
        }
        ObjectSelector::ClassId(id) => Ok((0..objects.len()).filter(|&i| objects[i].class_id == *id).collect()),
        ObjectSelector::ClassName(name) => match header.global.class_id(name) {
            Some(id) => resolve(header, gop, &ObjectSelector::ClassId(id)),
            None => Err(Error::NotFound(format!("class '{name}' is not in the stream's class table"))),
        },
    }
}

/// Per-GoP output before merging.
#[derive(Default)]
struct GopOut {
    objects: Vec<ObjectInfo>,
    frames: Vec<DecodedFrame>,
    motion: Vec<(u32, MotionField)>,
    residuals: Vec<(u32, PlaneSet)>,
    touched: Vec<ChunkEntry>,
}

fn full_mask(p: &CodecParams) -> Plane<u8> {
    Plane::filled(p.width, p.height, CellState::Decoded as u8)
}

/// Decodes the intra regions `regions` of GoP `sh`.
fn decode_regions(p: &CodecParams, sh: &SemanticHeader, bytes: &[u8], regions: &[usize], background: bool, out: &mut GopOut) -> Result<DecodedFrame> {
    let layout = p.layout(&sh.objects)?;
    let intra: Vec<&ChunkEntry> = sh.chunks.iter().filter(|c| matches!(c.kind, ChunkKind::Object | ChunkKind::Background)).collect();
    let mut chunks: Vec<Option<&[u8]>> = vec![None; layout.regions.len()];
    let bg = layout.background_index();
    for (i, e) in intra.iter().enumerate() {
        if regions.contains(&i) || (background && i == bg) {
            chunks[i] = Some(chunk(bytes, e)?);
            out.touched.push(**e);
        }
    }
    let partial = decode_intra(p, &layout, &chunks)?;
    Ok(DecodedFrame { frame_index: sh.chunks[0].frame_index, frame: partial.frame, mask: partial.mask })
}

fn inter_pairs(sh: &SemanticHeader) -> Vec<(ChunkEntry, ChunkEntry)> {
    let inter: Vec<&ChunkEntry> = sh.chunks.iter().filter(|c| matches!(c.kind, ChunkKind::Motion | ChunkKind::Residual)).collect();
    inter.chunks_exact(2).map(|p| (*p[0], *p[1])).collect()
}

fn decode_one_gop(
    p: &CodecParams,
    header: &StreamHeader,
    bytes: &[u8],
    gop: usize,
    mode: &DecodeMode,
    range: &RangeInclusive<u32>,
) -> Result<GopOut> {
    let sh = &header.gops[gop];
    let first = header.first_frame(gop);
    let mut out = GopOut::default();
    let in_range = |f: u32| range.contains(&f);
    match mode {
        DecodeMode::Header => {
            let all: Vec<usize> = (0..sh.objects.len()).collect();
            out.objects = object_infos(header, gop, &all);
        }
        DecodeMode::Objects(sel) => {
            let ix = resolve(header, gop, sel)?;
            out.objects = object_infos(header, gop, &ix);
            if !ix.is_empty() {
                let regions: Vec<usize> = ix.iter().map(|&i| sh.objects[i].region as usize).collect();
                let f = decode_regions(p, sh, bytes, &regions, false, &mut out)?;
                out.frames.push(f);
            }
        }
        DecodeMode::Background => {
            let f = decode_regions(p, sh, bytes, &[], true, &mut out)?;
            out.frames.push(f);
        }
        DecodeMode::ObjectTube(k) => {
            let ix = resolve(header, gop, &ObjectSelector::Indices(vec![*k]))?;
            out.objects = object_infos(header, gop, &ix);
            let f = decode_regions(p, sh, bytes, &[sh.objects[*k].region as usize], false, &mut out)?;
            out.frames.push(f);
            decode_motion_chunks(p, sh, bytes, &in_range, &mut out)?;
        }
        DecodeMode::Motion => decode_motion_chunks(p, sh, bytes, &in_range, &mut out)?,
        DecodeMode::Residual => {
            for (_, r) in inter_pairs(sh).into_iter().filter(|(_, r)| in_range(r.frame_index)) {
                let planes = decode_residual_planes(chunk(bytes, &r)?, p.format, p.width, p.height, p.transform.as_ref(), p.entropy.as_ref(), p.step)?;
                out.residuals.push((r.frame_index, planes));
                out.touched.push(r);
            }
        }
        DecodeMode::Full => {
            let all: Vec<usize> = (0..sh.objects.len()).collect();
            out.objects = object_infos(header, gop, &all);
            let last = (*range.end()).min(first + sh.frame_count as u32 - 1) - first;
            let (frames, touched) = decode_gop_prefix(p, sh, bytes, last as usize)?;
            out.touched = touched;
            let mask = full_mask(p);
            out.frames = frames
                .into_iter()
                .enumerate()
                .map(|(i, frame)| DecodedFrame { frame_index: first + i as u32, frame, mask: mask.clone() })
                .filter(|f| in_range(f.frame_index))
                .collect();
        }
    }
    Ok(out)
}

fn decode_motion_chunks(p: &CodecParams, sh: &SemanticHeader, bytes: &[u8], in_range: &dyn Fn(u32) -> bool, out: &mut GopOut) -> Result<()> {
    for (m, _) in inter_pairs(sh).into_iter().filter(|(m, _)| in_range(m.frame_index)) {
        let field = decode_motion(chunk(bytes, &m)?, p.width, p.height, p.motion_block, p.motion_step, p.entropy.as_ref())?;
        out.motion.push((m.frame_index, field));
        out.touched.push(m);
    }
    Ok(())
}

/// GoPs a request touches, in stream order.
pub fn selected_gops(header: &StreamHeader, req: &DecodeRequest) -> Result<Vec<usize>> {
    let n = header.global.frame_count;
    let range = req.frames.clone().unwrap_or(0..=n.saturating_sub(1));
    if range.start() > range.end() || *range.end() >= n {
        return Err(Error::NotFound(format!("frames {}..={} in a stream of {n} frames", range.start(), range.end())));
    }
    if req.gop_step == 0 {
        return Err(Error::Input("gop step must be at least 1".into()));
    }
    let gops = (0..header.gops.len())
        .filter(|&g| {
            let first = header.first_frame(g);
            let last = first + header.gops[g].frame_count as u32 - 1;
            first <= *range.end() && last >= *range.start()
        })
        .collect::<Vec<_>>();
    Ok(gops.into_iter().step_by(req.gop_step).collect())
}

/// Answers `req` from `bytes`, reading only the chunks the mode needs.
pub fn decode(bytes: &[u8], req: &DecodeRequest) -> Result<DecodeResult> {
    let header = parse_header_only(bytes)?;
    let p = CodecParams::from_header(&header.global)?;
    let gops = selected_gops(&header, req)?;
    let range = req.frames.clone().unwrap_or(0..=header.global.frame_count - 1);
    let outs = gops
        .par_iter()
        .map(|&g| decode_one_gop(&p, &header, bytes, g, &req.mode, &range))
        .collect::<Result<Vec<_>>>()?;

    let matched: usize = outs.iter().map(|o| o.objects.len()).sum();
    match &req.mode {
        DecodeMode::Objects(sel) if matched == 0 => {
            return Err(Error::NotFound(format!("no object matches {sel:?} in the selected frames")));
        }
        _ => {}
    }

    let mut result = DecodeResult {
        header: header.clone(),
        objects: Vec::new(),
        frames: Vec::new(),
        motion: Vec::new(),
        residuals: Vec::new(),
        report: BitReport::from_chunks(0, 0, Vec::new()),
    };
    let mut touched = Vec::new();
    for o in outs {
        result.objects.extend(o.objects);
        result.frames.extend(o.frames);
        result.motion.extend(o.motion);
        result.residuals.extend(o.residuals);
        touched.extend(o.touched);
    }
    result.report = BitReport::from_chunks(header.header_len, bytes.len(), touched);
    Ok(result)
}

/// Fraction of the file `req` needs, from the header alone.
pub fn savings_report(bytes: &[u8], req: &DecodeRequest) -> Result<f64> {
    Ok(plan(bytes, req)?.fraction())
}

/// The [`BitReport`] `req` would produce, computed from the chunk table
/// without decoding any payload.
pub fn plan(bytes: &[u8], req: &DecodeRequest) -> Result<BitReport> {
    let header = parse_header_only(bytes)?;
    let n = header.global.frame_count;
    let range = req.frames.clone().unwrap_or(0..=n.saturating_sub(1));
    let mut touched = Vec::new();
    let mut matched = 0;
    for g in selected_gops(&header, req)? {
        let sh = &header.gops[g];
        let region_entry = |region: u16| sh.chunks.iter().find(|c| c.kind == ChunkKind::Object && c.index == region).copied();
        let inter = sh.chunks.iter().filter(|c| c.kind != ChunkKind::Object && c.kind != ChunkKind::Background);
        match &req.mode {
            DecodeMode::Header => {}
            DecodeMode::Objects(sel) => {
                let ix = resolve(&header, g, sel)?;
                matched += ix.len();
                touched.extend(ix.iter().filter_map(|&i| region_entry(sh.objects[i].region)));
            }
            DecodeMode::Background => touched.extend(sh.chunks.iter().filter(|c| c.kind == ChunkKind::Background)),
            DecodeMode::ObjectTube(k) => {
                let ix = resolve(&header, g, &ObjectSelector::Indices(vec![*k]))?;
                touched.extend(region_entry(sh.objects[ix[0]].region));
                touched.extend(inter.filter(|c| c.kind == ChunkKind::Motion && range.contains(&c.frame_index)));
            }
            DecodeMode::Motion => touched.extend(inter.filter(|c| c.kind == ChunkKind::Motion && range.contains(&c.frame_index))),
            DecodeMode::Residual => touched.extend(inter.filter(|c| c.kind == ChunkKind::Residual && range.contains(&c.frame_index))),
            DecodeMode::Full => {
                touched.extend(sh.chunks.iter().filter(|c| c.kind == ChunkKind::Object || c.kind == ChunkKind::Background));
                touched.extend(inter.filter(|c| c.frame_index <= *range.end()));
            }
        }
    }
    if matches!(req.mode, DecodeMode::Objects(_)) && matched == 0 {
        return Err(Error::NotFound("no object matches the selector in the selected frames".into()));
    }
    Ok(BitReport::from_chunks(header.header_len, bytes.len(), touched))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_video, CodecConfig};
    use crate::frame::PixelFormat;
    use crate::semantics::Annotations;

    fn clip() -> Vec<Frame> {
        (0..5)
            .map(|t| {
                let mut f = Frame::filled(PixelFormat::Yuv420, 64, 48, 0);
                for (pi, pl) in f.planes.iter_mut().enumerate() {
                    for y in 0..pl.height {
                        for x in 0..pl.width {
                            let v = 128.0 + 50.0 * ((x as f64 + 2.0 * t as f64) * 0.3 + pi as f64).sin() * (y as f64 * 0.2).cos();
                            pl.set(x, y, v as u8);
                        }
                    }
                }
                f
            })
            .collect()
    }

    fn stream() -> Vec<u8> {
        let ann = Annotations::parse("class 0 person\nclass 1 car\n0 0 8 8 16 16\n0 1 40 24 16 16\n3 1 0 0 8 8\n").unwrap();
        let cfg = CodecConfig { gop_size: 3, ..CodecConfig::default() };
        encode_video(&clip(), Some(&ann), &cfg).unwrap().bytes
    }

    #[test]
    fn header_reads_only_header() {
        let b = stream();
        let r = decode(&b, &DecodeRequest::new(DecodeMode::Header)).unwrap();
        assert_eq!(r.report.bytes_read(), r.header.header_len);
        assert_eq!(r.objects.len(), 3);
        assert_eq!(r.objects[1].class_name.as_deref(), Some("car"));
    }

    #[test]
    fn class_filter_reads_one_region() {
        let b = stream();
        let req = DecodeRequest::new(DecodeMode::Objects(ObjectSelector::ClassName("person".into())));
        let r = decode(&b, &req).unwrap();
        assert_eq!(r.objects.len(), 1);
        assert_eq!(r.report.chunks_read.len(), 1);
        assert_eq!(r.report, plan(&b, &req).unwrap());
        let missing = DecodeRequest::new(DecodeMode::Objects(ObjectSelector::ClassName("dog".into())));
        assert!(matches!(decode(&b, &missing), Err(Error::NotFound(_))));
    }

    #[test]
    fn full_decode_reads_everything() {
        let b = stream();
        let r = decode(&b, &DecodeRequest::new(DecodeMode::Full)).unwrap();
        assert_eq!(r.report.bytes_read(), b.len());
        assert_eq!(savings_report(&b, &DecodeRequest::new(DecodeMode::Full)).unwrap(), 1.0);
        assert_eq!(r.frames.len(), 5);
        let motion = savings_report(&b, &DecodeRequest::new(DecodeMode::Motion)).unwrap();
        assert!(motion < 1.0);
    }

    #[test]
    fn frame_range_bounds() {
        let b = stream();
        assert!(decode(&b, &DecodeRequest::new(DecodeMode::Motion).frames(2..=9)).is_err());
        let r = decode(&b, &DecodeRequest::new(DecodeMode::Full).frames(1..=3)).unwrap();
        assert_eq!(r.frames.iter().map(|f| f.frame_index).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn gop_step_fraction() {
        assert_eq!(gop_step_for_fraction(1.0), 1);
        assert_eq!(gop_step_for_fraction(0.45), 2);
        assert_eq!(gop_step_for_fraction(0.15), 7);
        assert_eq!(gop_step_for_fraction(0.05), 20);
    }
}
