//! The `.ssb` container: a global header, one semantic header per GoP, a
//! header checksum, then every payload chunk back to back.
//!
//! All integers are little-endian and fixed width. Chunk offsets are absolute
//! file offsets, so any chunk can be sliced out with the header alone.

use std::fmt;

use thiserror::Error;

use crate::entropy::CHUNK_HEADER_LEN;
use crate::frame::PixelFormat;
use crate::transform::{transforms, QUALITY_STEPS};

pub const MAGIC: [u8; 4] = *b"SSVC";
pub const VERSION: u8 = 1;

/// Bytes of the fixed part of the global header.
pub const GLOBAL_FIXED_LEN: usize = 23;
pub const OBJECT_RECORD_LEN: usize = 12;
pub const CHUNK_ENTRY_LEN: usize = 15;
pub const HEADER_CRC_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated header: need at least {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("invalid header at offset {offset}: {message}")]
    Invalid { offset: usize, message: String },
    #[error("header checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    HeaderChecksum { stored: u32, computed: u32 },
    #[error("inconsistent chunk table: {0}")]
    Structure(String),
    #[error("file length {actual} does not match the {expected} bytes the header declares")]
    FileLength { expected: usize, actual: usize },
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("chunk not found: {0}")]
    ChunkNotFound(String),
}

fn invalid(offset: usize, message: impl Into<String>) -> FormatError {
    FormatError::Invalid { offset, message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalHeader {
    pub width: u16,
    pub height: u16,
    pub frame_count: u32,
    pub gop_size: u8,
    pub stride: u8,
    pub channels: u16,
    pub transform_id: u8,
    pub entropy_model_id: u8,
    pub quality_index: u8,
    pub pixel_format: PixelFormat,
    /// Motion block size in luma pixels.
    pub motion_block: u8,
    /// Motion quantization step in quarter-pel units (1 = lossless).
    pub motion_step: u8,
    /// Optional human-readable class names, `(class_id, name)`.
    pub class_names: Vec<(u16, String)>,
}

impl GlobalHeader {
    pub fn gop_count(&self) -> usize {
        (self.frame_count as usize).div_ceil(self.gop_size as usize)
    }

    /// Frames in GoP `g` (the last GoP may be short).
    pub fn gop_frames(&self, g: usize) -> usize {
        let start = g * self.gop_size as usize;
        (self.frame_count as usize - start).min(self.gop_size as usize)
    }

    pub fn gop_of_frame(&self, frame: u32) -> usize {
        (frame / self.gop_size as u32) as usize
    }

    /// `(rows, cols)` of the latent grid.
    pub fn grid_dims(&self) -> (usize, usize) {
        let r = self.stride as usize;
        ((self.height as usize).div_ceil(r), (self.width as usize).div_ceil(r))
    }

    pub fn class_name(&self, id: u16) -> Option<&str> {
        self.class_names.iter().find(|(i, _)| *i == id).map(|(_, n)| n.as_str())
    }

    pub fn class_id(&self, name: &str) -> Option<u16> {
        self.class_names.iter().find(|(_, n)| n == name).map(|(i, _)| *i)
    }

    fn encoded_len(&self) -> usize {
        GLOBAL_FIXED_LEN + 2 + self.class_names.iter().map(|(_, n)| 3 + n.len()).sum::<usize>()
    }
}

/// An annotated object: class and pixel box `[a1, a2) x [b1, b2)`, plus the
/// index of the object region chunk that codes it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ObjectRecord {
    pub class_id: u16,
    pub a1: u16,
    pub b1: u16,
    pub a2: u16,
    pub b2: u16,
    pub region: u16,
}

/// Latent-cell rectangle `rows r0..r1`, `cols c0..c1` (exclusive ends).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellRect {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl CellRect {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        (self.r0..self.r1).contains(&r) && (self.c0..self.c1).contains(&c)
    }

    pub fn is_empty(&self) -> bool {
        self.r0 >= self.r1 || self.c0 >= self.c1
    }
}

impl ObjectRecord {
    pub fn new(class_id: u16, a1: u16, b1: u16, a2: u16, b2: u16) -> Self {
        Self { class_id, a1, b1, a2, b2, region: 0 }
    }

    /// Cells covering the box: floor on the near edge, ceil on the far edge,
    /// clipped to the grid.
    pub fn bbox_latent(&self, stride: usize, rows: usize, cols: usize) -> CellRect {
        CellRect {
            r0: (self.b1 as usize / stride).min(rows),
            c0: (self.a1 as usize / stride).min(cols),
            r1: (self.b2 as usize).div_ceil(stride).min(rows),
            c1: (self.a2 as usize).div_ceil(stride).min(cols),
        }
    }

    pub fn area(&self) -> usize {
        (self.a2 - self.a1) as usize * (self.b2 - self.b1) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChunkKind {
    Object,
    Background,
    Motion,
    Residual,
}

impl ChunkKind {
    pub const ALL: [ChunkKind; 4] = [ChunkKind::Object, ChunkKind::Background, ChunkKind::Motion, ChunkKind::Residual];

    pub fn to_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ChunkKind::Object => "object",
            ChunkKind::Background => "background",
            ChunkKind::Motion => "motion",
            ChunkKind::Residual => "residual",
        }
    }
}

impl fmt::Display for ChunkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of a chunk table. `length` covers the whole framed chunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkEntry {
    pub kind: ChunkKind,
    pub index: u16,
    pub frame_index: u32,
    pub offset: u32,
    pub length: u32,
}

impl ChunkEntry {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset as usize..self.offset as usize + self.length as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticHeader {
    pub frame_count: u8,
    pub objects: Vec<ObjectRecord>,
    pub chunks: Vec<ChunkEntry>,
}

impl SemanticHeader {
    pub fn region_count(&self) -> usize {
        self.chunks.iter().filter(|c| c.kind == ChunkKind::Object).count()
    }

    fn encoded_len(&self) -> usize {
        1 + 2 + self.objects.len() * OBJECT_RECORD_LEN + 2 + self.chunks.len() * CHUNK_ENTRY_LEN
    }
}

/// A framed payload chunk before it has a file offset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PayloadChunk {
    pub kind: ChunkKind,
    pub index: u16,
    pub frame_index: u32,
    pub bytes: Vec<u8>,
}

/// Everything one GoP contributes to a stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedGop {
    pub frame_count: u8,
    pub objects: Vec<ObjectRecord>,
    pub chunks: Vec<PayloadChunk>,
}

/// Parsed header block of a stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamHeader {
    pub global: GlobalHeader,
    pub gops: Vec<SemanticHeader>,
    /// Bytes occupied by the header block, checksum included.
    pub header_len: usize,
}

impl StreamHeader {
    pub fn entries(&self) -> impl Iterator<Item = &ChunkEntry> {
        self.gops.iter().flat_map(|g| g.chunks.iter())
    }

    pub fn total_len(&self) -> usize {
        self.header_len + self.entries().map(|c| c.length as usize).sum::<usize>()
    }

    pub fn first_frame(&self, gop: usize) -> u32 {
        (gop * self.global.gop_size as usize) as u32
    }
}

fn header_block_len(global: &GlobalHeader, gops: &[SemanticHeader]) -> usize {
    global.encoded_len() + gops.iter().map(SemanticHeader::encoded_len).sum::<usize>() + HEADER_CRC_LEN
}

fn check_global(g: &GlobalHeader) -> Result<(), FormatError> {
    let at = |o: usize, m: String| Err(invalid(o, m));
    if g.width == 0 || g.height == 0 {
        return at(5, format!("frame size {}x{} must be non-zero", g.width, g.height));
    }
    if g.frame_count == 0 {
        return at(9, "frame count is zero".into());
    }
    if g.gop_size == 0 {
        return at(13, "GoP size is zero".into());
    }
    let t = match transforms().by_id(g.transform_id) {
        Ok(t) => t,
        Err(_) => return at(17, format!("unregistered transform id {}", g.transform_id)),
    };
    if t.stride() != g.stride as usize {
        return at(14, format!("stride {} does not match transform '{}'", g.stride, t.name()));
    }
    if t.channels(g.pixel_format) != g.channels as usize {
        return at(15, format!("{} channels does not match transform '{}'", g.channels, t.name()));
    }
    if crate::entropy::entropy_models().by_id(g.entropy_model_id).is_err() {
        return at(18, format!("unregistered entropy model id {}", g.entropy_model_id));
    }
    if g.quality_index as usize >= QUALITY_STEPS.len() {
        return at(19, format!("quality index {} out of range", g.quality_index));
    }
    if g.motion_block < 2 || g.motion_step == 0 {
        return at(21, format!("motion block {} / step {} out of range", g.motion_block, g.motion_step));
    }
    if g.class_names.len() > u16::MAX as usize {
        return Err(FormatError::Capacity("more than 65535 class names".into()));
    }
    for (_, n) in &g.class_names {
        if n.len() > u8::MAX as usize {
            return Err(FormatError::Capacity(format!("class name '{n}' longer than 255 bytes")));
        }
    }
    Ok(())
}

/// Checks the GoP structure and chunk order, ignoring offsets.
fn check_gops(g: &GlobalHeader, gops: &[SemanticHeader]) -> Result<(), FormatError> {
    let bad = |m: String| Err(FormatError::Structure(m));
    if gops.len() != g.gop_count() {
        return bad(format!("{} GoPs for {} frames at GoP size {}", gops.len(), g.frame_count, g.gop_size));
    }
    for (gi, sh) in gops.iter().enumerate() {
        let first = (gi * g.gop_size as usize) as u32;
        let n = g.gop_frames(gi);
        if sh.frame_count as usize != n {
            return bad(format!("GoP {gi} declares {} frames, expected {n}", sh.frame_count));
        }
        let regions = sh.region_count();
        let mut referenced = vec![false; regions];
        for (k, o) in sh.objects.iter().enumerate() {
            if o.a1 >= o.a2 || o.b1 >= o.b2 || o.a2 > g.width || o.b2 > g.height {
                return bad(format!("GoP {gi} object {k} box {:?} is empty or outside the frame", (o.a1, o.b1, o.a2, o.b2)));
            }
            match referenced.get_mut(o.region as usize) {
                Some(r) => *r = true,
                None => return bad(format!("GoP {gi} object {k} refers to missing region {}", o.region)),
            }
        }
        if let Some(r) = referenced.iter().position(|r| !r) {
            return bad(format!("GoP {gi} region {r} has no objects"));
        }
        let mut expected = Vec::with_capacity(regions + 1 + 2 * n);
        expected.extend((0..regions).map(|r| (ChunkKind::Object, r as u16, first)));
        expected.push((ChunkKind::Background, 0, first));
        for f in 1..n as u32 {
            expected.push((ChunkKind::Motion, 0, first + f));
            expected.push((ChunkKind::Residual, 0, first + f));
        }
        let actual: Vec<_> = sh.chunks.iter().map(|c| (c.kind, c.index, c.frame_index)).collect();
        if actual != expected {
            return bad(format!("GoP {gi} chunk order {actual:?} differs from the required {expected:?}"));
        }
        if let Some(c) = sh.chunks.iter().find(|c| (c.length as usize) < CHUNK_HEADER_LEN) {
            return bad(format!("{} chunk of frame {} is shorter than a chunk header", c.kind, c.frame_index));
        }
    }
    Ok(())
}

fn check_offsets(gops: &[SemanticHeader], header_len: usize) -> Result<(), FormatError> {
    let mut pos = header_len as u64;
    for c in gops.iter().flat_map(|g| &g.chunks) {
        if c.offset as u64 != pos {
            return Err(FormatError::Structure(format!(
                "{} chunk of frame {} starts at {} but the previous chunk ends at {pos}",
                c.kind, c.frame_index, c.offset
            )));
        }
        pos += c.length as u64;
    }
    Ok(())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_header(global: &GlobalHeader, gops: &[SemanticHeader]) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(header_block_len(global, gops)));
    w.0.extend_from_slice(&MAGIC);
    w.u8(VERSION);
    w.u16(global.width);
    w.u16(global.height);
    w.u32(global.frame_count);
    w.u8(global.gop_size);
    w.u8(global.stride);
    w.u16(global.channels);
    w.u8(global.transform_id);
    w.u8(global.entropy_model_id);
    w.u8(global.quality_index);
    w.u8(global.pixel_format.to_u8());
    w.u8(global.motion_block);
    w.u8(global.motion_step);
    w.u16(global.class_names.len() as u16);
    for (id, name) in &global.class_names {
        w.u16(*id);
        w.u8(name.len() as u8);
        w.0.extend_from_slice(name.as_bytes());
    }
    for sh in gops {
        w.u8(sh.frame_count);
        w.u16(sh.objects.len() as u16);
        for o in &sh.objects {
            for v in [o.class_id, o.a1, o.b1, o.a2, o.b2, o.region] {
                w.u16(v);
            }
        }
        w.u16(sh.chunks.len() as u16);
        for c in &sh.chunks {
            w.u8(c.kind.to_u8());
            w.u16(c.index);
            w.u32(c.frame_index);
            w.u32(c.offset);
            w.u32(c.length);
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

/// Lays out headers and payload chunks into one byte buffer.
pub fn serialize_stream(global: &GlobalHeader, gops: &[EncodedGop]) -> Result<Vec<u8>, FormatError> {
    check_global(global)?;
    for (gi, g) in gops.iter().enumerate() {
        if g.objects.len() > u16::MAX as usize || g.chunks.len() > u16::MAX as usize {
            return Err(FormatError::Capacity(format!("GoP {gi} has too many objects or chunks for 16-bit counts")));
        }
    }
    let mut headers: Vec<SemanticHeader> = gops
        .iter()
        .map(|g| SemanticHeader {
            frame_count: g.frame_count,
            objects: g.objects.clone(),
            chunks: g
                .chunks
                .iter()
                .map(|c| ChunkEntry { kind: c.kind, index: c.index, frame_index: c.frame_index, offset: 0, length: 0 })
                .collect(),
        })
        .collect();
    let header_len = header_block_len(global, &headers);
    let mut pos = header_len as u64;
    for (sh, g) in headers.iter_mut().zip(gops) {
        for (e, c) in sh.chunks.iter_mut().zip(&g.chunks) {
            if pos + c.bytes.len() as u64 > u32::MAX as u64 {
                return Err(FormatError::Capacity("stream larger than 4 GiB".into()));
            }
            e.offset = pos as u32;
            e.length = c.bytes.len() as u32;
            pos += c.bytes.len() as u64;
        }
    }
    check_gops(global, &headers)?;
    for c in gops.iter().flat_map(|g| &g.chunks) {
        let declared = c.bytes.get(..4).map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize);
        if declared != Some(c.bytes.len().saturating_sub(CHUNK_HEADER_LEN)) {
            return Err(FormatError::Structure(format!(
                "{} chunk of frame {} is not a framed chunk of its own length",
                c.kind, c.frame_index
            )));
        }
    }
    let mut out = write_header(global, &headers);
    debug_assert_eq!(out.len(), header_len);
    out.reserve(pos as usize - header_len);
    for c in gops.iter().flat_map(|g| &g.chunks) {
        out.extend_from_slice(&c.bytes);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(FormatError::Truncated { needed: end, available: self.bytes.len() });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses the header block from a prefix of a stream. Payload bytes are
/// never inspected; `header_len` in the result is the bytes consumed.
pub fn parse_header_only(bytes: &[u8]) -> Result<StreamHeader, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let width = r.u16()?;
    let height = r.u16()?;
    let frame_count = r.u32()?;
    let gop_size = r.u8()?;
    let stride = r.u8()?;
    let channels = r.u16()?;
    let transform_id = r.u8()?;
    let entropy_model_id = r.u8()?;
    let quality_index = r.u8()?;
    let pf = r.u8()?;
    let pixel_format = PixelFormat::from_u8(pf).ok_or_else(|| invalid(r.pos - 1, format!("unknown pixel format {pf}")))?;
    let motion_block = r.u8()?;
    let motion_step = r.u8()?;
    let n_classes = r.u16()?;
    let mut class_names = Vec::new();
    for _ in 0..n_classes {
        let id = r.u16()?;
        let len = r.u8()? as usize;
        let at = r.pos;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| invalid(at, "class name is not UTF-8"))?;
        class_names.push((id, name.to_owned()));
    }
    let global = GlobalHeader {
        width,
        height,
        frame_count,
        gop_size,
        stride,
        channels,
        transform_id,
        entropy_model_id,
        quality_index,
        pixel_format,
        motion_block,
        motion_step,
        class_names,
    };
    check_global(&global)?;

    let mut gops = Vec::new();
    for _ in 0..global.gop_count() {
        let frame_count = r.u8()?;
        let n_obj = r.u16()? as usize;
        let mut objects = Vec::with_capacity(n_obj.min(4096));
        for _ in 0..n_obj {
            let f = r.take(OBJECT_RECORD_LEN)?;
            let v = |i: usize| u16::from_le_bytes([f[2 * i], f[2 * i + 1]]);
            objects.push(ObjectRecord { class_id: v(0), a1: v(1), b1: v(2), a2: v(3), b2: v(4), region: v(5) });
        }
        let n_chunks = r.u16()? as usize;
        let mut chunks = Vec::with_capacity(n_chunks.min(4096));
        for _ in 0..n_chunks {
            let at = r.pos;
            let k = r.u8()?;
            let kind = ChunkKind::from_u8(k).ok_or_else(|| invalid(at, format!("unknown chunk kind {k}")))?;
            chunks.push(ChunkEntry { kind, index: r.u16()?, frame_index: r.u32()?, offset: r.u32()?, length: r.u32()? });
        }
        gops.push(SemanticHeader { frame_count, objects, chunks });
    }
    let computed = crc32fast::hash(&bytes[..r.pos]);
    let stored = r.u32()?;
    if stored != computed {
        return Err(FormatError::HeaderChecksum { stored, computed });
    }
    check_gops(&global, &gops)?;
    check_offsets(&gops, r.pos)?;
    Ok(StreamHeader { global, gops, header_len: r.pos })
}

/// Parses a complete stream back into the structures it was built from.
pub fn parse(bytes: &[u8]) -> Result<(StreamHeader, Vec<EncodedGop>), FormatError> {
    let header = parse_header_only(bytes)?;
    let expected = header.total_len();
    if expected != bytes.len() {
        return Err(FormatError::FileLength { expected, actual: bytes.len() });
    }
    let gops = header
        .gops
        .iter()
        .map(|sh| EncodedGop {
            frame_count: sh.frame_count,
            objects: sh.objects.clone(),
            chunks: sh
                .chunks
                .iter()
                .map(|c| PayloadChunk {
                    kind: c.kind,
                    index: c.index,
                    frame_index: c.frame_index,
                    bytes: bytes[c.range()].to_vec(),
                })
                .collect(),
        })
        .collect();
    Ok((header, gops))
}

/// Finds a chunk's entry. For [`ChunkKind::Object`], `object` is the index of
/// an object record in the GoP containing `frame_index`; the chunk of the
/// region coding that object is returned.
pub fn locate_chunk(
    header: &StreamHeader,
    kind: ChunkKind,
    frame_index: u32,
    object: Option<usize>,
) -> Result<ChunkEntry, FormatError> {
    let missing = || FormatError::ChunkNotFound(match object {
        Some(k) => format!("{kind} chunk for object {k} at frame {frame_index}"),
        None => format!("{kind} chunk at frame {frame_index}"),
    });
    if frame_index >= header.global.frame_count {
        return Err(missing());
    }
    let gi = header.global.gop_of_frame(frame_index);
    let sh = &header.gops[gi];
    let index = match kind {
        ChunkKind::Object => sh.objects.get(object.ok_or_else(missing)?).ok_or_else(missing)?.region,
        _ => 0,
    };
    sh.chunks
        .iter()
        .find(|c| c.kind == kind && c.frame_index == frame_index && c.index == index)
        .copied()
        .ok_or_else(missing)
}

/// Result of a structural check over a whole file.
#[derive(Clone, Debug)]
pub struct Inspection {
    pub header: Option<StreamHeader>,
    pub file_len: usize,
    /// `(entry, problem)` for each chunk that failed its own check.
    pub bad_chunks: Vec<(ChunkEntry, String)>,
    pub error: Option<FormatError>,
}

impl Inspection {
    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.bad_chunks.is_empty()
    }

    /// Offset of the first byte found to be wrong, if any.
    pub fn first_bad_offset(&self) -> Option<usize> {
        if let Some(e) = &self.error {
            return Some(match e {
                FormatError::BadMagic(_) | FormatError::UnsupportedVersion(_) => 0,
                FormatError::Truncated { available, .. } => *available,
                FormatError::Invalid { offset, .. } => *offset,
                FormatError::FileLength { expected, actual } => (*expected).min(*actual),
                _ => self.header.as_ref().map_or(0, |h| h.header_len),
            });
        }
        self.bad_chunks.first().map(|(c, _)| c.offset as usize)
    }
}

/// Structural verdict for any byte string: header checks, file length, and
/// every chunk's framing and checksum. Never reads outside declared ranges.
pub fn inspect(bytes: &[u8]) -> Inspection {
    let header = match parse_header_only(bytes) {
        Ok(h) => h,
        Err(e) => return Inspection { header: None, file_len: bytes.len(), bad_chunks: Vec::new(), error: Some(e) },
    };
    let mut bad_chunks = Vec::new();
    for c in header.entries() {
        match bytes.get(c.range()) {
            Some(b) => {
                if let Err(e) = crate::entropy::open_chunk(b) {
                    bad_chunks.push((*c, e.to_string()));
                }
            }
            None => bad_chunks.push((*c, "chunk extends past end of file".into())),
        }
    }
    let expected = header.total_len();
    let error = (expected != bytes.len()).then_some(FormatError::FileLength { expected, actual: bytes.len() });
    Inspection { header: Some(header), file_len: bytes.len(), bad_chunks, error }
}
