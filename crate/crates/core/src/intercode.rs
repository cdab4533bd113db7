//! Predicted frames: block motion estimation, motion compression, bilinear
//! motion compensation with boundary smoothing, and residual coding.
//!
//! Vectors are in quarter-pel luma units with `pred(x) = ref(x + v / 4)`.
//! Chroma planes use the same vector scaled to their own resolution.

use std::sync::Arc;

use crate::entropy::{dequantize, frame_chunk, open_chunk, quantize, CellSet, LatentEntropyModel, MAX_BOUND};
use crate::error::{Error, Result};
use crate::frame::{Frame, PixelFormat, Plane, PlaneSet};
use crate::latent::Grid;
use crate::registry::{Registry, Strategy};
use crate::transform::LatentTransform;

pub const DEFAULT_MOTION_BLOCK: usize = 8;
pub const DEFAULT_SEARCH_RANGE: i32 = 16;
pub const DEFAULT_MOTION_LAMBDA: f64 = 8.0;
/// Residual coefficients below this many steps are coded as zero rather than +-1.
pub const ONE_LEVEL_THRESHOLD: f64 = 0.7;

/// One vector per `block x block` luma block, `[dx, dy]` in quarter pels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotionField {
    pub rows: usize,
    pub cols: usize,
    pub block: usize,
    pub vectors: Vec<[i32; 2]>,
}

impl MotionField {
    pub fn zeros(width: usize, height: usize, block: usize) -> Self {
        let rows = height.div_ceil(block);
        let cols = width.div_ceil(block);
        Self { rows, cols, block, vectors: vec![[0, 0]; rows * cols] }
    }

    pub fn get(&self, row: usize, col: usize) -> [i32; 2] {
        self.vectors[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: [i32; 2]) {
        self.vectors[row * self.cols + col] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.vectors.iter().all(|v| *v == [0, 0])
    }

    pub fn to_grid(&self) -> Grid<i32> {
        Grid { rows: self.rows, cols: self.cols, channels: 2, data: self.vectors.iter().flatten().copied().collect() }
    }

    pub fn from_grid(g: &Grid<i32>, block: usize) -> Self {
        let vectors = g.data.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Self { rows: g.rows, cols: g.cols, block, vectors }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchParams {
    pub block: usize,
    /// Search range in whole pixels.
    pub range: i32,
    /// Cost per quarter pel of `|dx| + |dy|`, added to the SAD. Zero gives a
    /// pure SAD search where only exact ties fall back to the zero vector.
    pub lambda: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { block: DEFAULT_MOTION_BLOCK, range: DEFAULT_SEARCH_RANGE, lambda: DEFAULT_MOTION_LAMBDA }
    }
}

/// Bilinear sample of `p` at `(x, y)` with edge clamping.
pub fn sample_bilinear(p: &Plane<u8>, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as isize, y0 as isize);
    let g = |dx: isize, dy: isize| p.get_clamped(xi + dx, yi + dy) as f64;
    let top = g(0, 0) * (1.0 - fx) + g(1, 0) * fx;
    let bottom = g(0, 1) * (1.0 - fx) + g(1, 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Sum of absolute differences between a block of `cur` and its
/// motion-compensated counterpart in `reference`.
pub fn block_sad(cur: &Plane<u8>, reference: &Plane<u8>, bx: usize, by: usize, block: usize, v: [i32; 2]) -> f64 {
    let x_end = (bx * block + block).min(cur.width);
    let y_end = (by * block + block).min(cur.height);
    let mut sad = 0.0;
    if v[0] % 4 == 0 && v[1] % 4 == 0 {
        let (dx, dy) = ((v[0] / 4) as isize, (v[1] / 4) as isize);
        let mut s = 0u32;
        for y in by * block..y_end {
            for x in bx * block..x_end {
                let r = reference.get_clamped(x as isize + dx, y as isize + dy);
                s += (cur.get(x, y) as i32 - r as i32).unsigned_abs();
            }
        }
        return s as f64;
    }
    let (fx, fy) = (v[0] as f64 / 4.0, v[1] as f64 / 4.0);
    for y in by * block..y_end {
        for x in bx * block..x_end {
            sad += (cur.get(x, y) as f64 - sample_bilinear(reference, x as f64 + fx, y as f64 + fy)).abs();
        }
    }
    sad
}

/// Block motion estimator selectable by name.
pub trait MotionEstimator: Strategy {
    /// Estimates motion of `cur` relative to `reference` (luma planes).
    fn estimate(&self, cur: &Plane<u8>, reference: &Plane<u8>, params: &SearchParams) -> MotionField;
}

struct BlockSearch<'a> {
    cur: &'a Plane<u8>,
    reference: &'a Plane<u8>,
    bx: usize,
    by: usize,
    block: usize,
    limit: i32,
    lambda: f64,
    best: [i32; 2],
    best_cost: f64,
}

impl BlockSearch<'_> {
    fn new<'a>(cur: &'a Plane<u8>, reference: &'a Plane<u8>, bx: usize, by: usize, p: &SearchParams) -> BlockSearch<'a> {
        let best_cost = block_sad(cur, reference, bx, by, p.block, [0, 0]);
        BlockSearch { cur, reference, bx, by, block: p.block, limit: 4 * p.range, lambda: p.lambda, best: [0, 0], best_cost }
    }

    fn cost(&self, v: [i32; 2]) -> f64 {
        block_sad(self.cur, self.reference, self.bx, self.by, self.block, v) + self.lambda * (v[0].abs() + v[1].abs()) as f64
    }

    /// Takes `v` only on a strict improvement, so earlier candidates win ties.
    fn try_vector(&mut self, v: [i32; 2]) -> bool {
        if v[0].abs() > self.limit || v[1].abs() > self.limit || v == self.best {
            return false;
        }
        let cost = self.cost(v);
        if cost < self.best_cost {
            self.best = v;
            self.best_cost = cost;
            true
        } else {
            false
        }
    }

    fn pattern(&mut self, offsets: &[[i32; 2]], scale: i32, repeat: bool) {
        loop {
            let center = self.best;
            let mut moved = false;
            for o in offsets {
                moved |= self.try_vector([center[0] + o[0] * scale, center[1] + o[1] * scale]);
            }
            if !moved || !repeat {
                break;
            }
        }
    }

    fn refine_subpel(&mut self) {
        const RING: [[i32; 2]; 8] = [[-1, -1], [0, -1], [1, -1], [-1, 0], [1, 0], [-1, 1], [0, 1], [1, 1]];
        self.pattern(&RING, 2, false);
        self.pattern(&RING, 1, false);
    }
}

const LARGE_DIAMOND: [[i32; 2]; 8] = [[0, -2], [-1, -1], [1, -1], [-2, 0], [2, 0], [-1, 1], [1, 1], [0, 2]];
const SMALL_DIAMOND: [[i32; 2]; 4] = [[0, -1], [-1, 0], [1, 0], [0, 1]];

/// Predictor candidates and a coarse lattice rank the start points; large and
/// small diamond descent runs from the [`DIAMOND_STARTS`] cheapest, then
/// quarter-pel refinement. The integer-stage cost never exceeds the zero-vector
/// cost or the best lattice cost. A lattice spacing of 1 pixel seeds every
/// integer vector, so the integer stage matches exhaustive search in cost.
#[derive(Clone, Copy, Debug)]
pub struct DiamondSearch {
    /// Start lattice spacing in whole pixels.
    pub lattice: i32,
}

/// Number of start points a diamond search descends from.
pub const DIAMOND_STARTS: usize = 4;

impl Default for DiamondSearch {
    fn default() -> Self {
        Self { lattice: 4 }
    }
}

impl Strategy for DiamondSearch {
    fn name(&self) -> &'static str {
        "diamond"
    }
    fn id(&self) -> u8 {
        0
    }
    fn description(&self) -> &'static str {
        "coarse lattice plus multi-start diamond descent, quarter-pel refinement"
    }
}

impl DiamondSearch {
    /// Integer-pel stage for block `(bx, by)`. `field` supplies the already
    /// chosen vectors of the left and upper neighbours.
    pub fn integer_search(
        &self,
        cur: &Plane<u8>,
        reference: &Plane<u8>,
        params: &SearchParams,
        field: &MotionField,
        bx: usize,
        by: usize,
    ) -> ([i32; 2], f64) {
        let spacing = self.lattice.max(1);
        let round = |v: [i32; 2]| [(v[0] as f64 / 4.0).round() as i32 * 4, (v[1] as f64 / 4.0).round() as i32 * 4];
        let base = BlockSearch::new(cur, reference, bx, by, params);
        let mut starts = vec![([0, 0], base.best_cost)];
        let mut add = |v: [i32; 2]| {
            if v[0].abs() <= base.limit && v[1].abs() <= base.limit && !starts.iter().any(|s| s.0 == v) {
                starts.push((v, base.cost(v)));
            }
        };
        if bx > 0 {
            add(round(field.get(by, bx - 1)));
        }
        if by > 0 {
            add(round(field.get(by - 1, bx)));
        }
        let lattice: Vec<i32> = (-params.range..=params.range).filter(|v| v % spacing == 0).collect();
        for &dy in &lattice {
            for &dx in &lattice {
                add([dx * 4, dy * 4]);
            }
        }
        starts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut best: Option<BlockSearch> = None;
        for &(v, cost) in starts.iter().take(DIAMOND_STARTS) {
            let mut s = BlockSearch { best: v, best_cost: cost, ..BlockSearch::new(cur, reference, bx, by, params) };
            s.pattern(&LARGE_DIAMOND, 4, true);
            s.pattern(&SMALL_DIAMOND, 4, false);
            if best.as_ref().map_or(true, |b| s.best_cost < b.best_cost) {
                best = Some(s);
            }
        }
        let s = best.expect("at least one start point");
        (s.best, s.best_cost)
    }
}

impl MotionEstimator for DiamondSearch {
    fn estimate(&self, cur: &Plane<u8>, reference: &Plane<u8>, params: &SearchParams) -> MotionField {
        let mut field = MotionField::zeros(cur.width, cur.height, params.block);
        for by in 0..field.rows {
            for bx in 0..field.cols {
                let (v, cost) = self.integer_search(cur, reference, params, &field, bx, by);
                let mut s = BlockSearch::new(cur, reference, bx, by, params);
                s.best = v;
                s.best_cost = cost;
                s.refine_subpel();
                field.set(by, bx, s.best);
            }
        }
        field
    }
}

/// Full integer search over the range, then quarter-pel refinement.
pub struct ExhaustiveSearch;

impl Strategy for ExhaustiveSearch {
    fn name(&self) -> &'static str {
        "exhaustive"
    }
    fn id(&self) -> u8 {
        1
    }
    fn description(&self) -> &'static str {
        "every integer vector in range, quarter-pel refinement"
    }
}

impl ExhaustiveSearch {
    /// Integer-pel stage only: the best vector and its cost.
    pub fn integer_search(&self, cur: &Plane<u8>, reference: &Plane<u8>, params: &SearchParams, bx: usize, by: usize) -> ([i32; 2], f64) {
        let mut s = BlockSearch::new(cur, reference, bx, by, params);
        for dy in -params.range..=params.range {
            for dx in -params.range..=params.range {
                s.try_vector([dx * 4, dy * 4]);
            }
        }
        (s.best, s.best_cost)
    }
}

impl MotionEstimator for ExhaustiveSearch {
    fn estimate(&self, cur: &Plane<u8>, reference: &Plane<u8>, params: &SearchParams) -> MotionField {
        let mut field = MotionField::zeros(cur.width, cur.height, params.block);
        for by in 0..field.rows {
            for bx in 0..field.cols {
                let (v, cost) = self.integer_search(cur, reference, params, bx, by);
                let mut s = BlockSearch::new(cur, reference, bx, by, params);
                s.best = v;
                s.best_cost = cost;
                s.refine_subpel();
                field.set(by, bx, s.best);
            }
        }
        field
    }
}

/// Built-in motion estimators; `diamond` is the default.
pub fn motion_estimators() -> Registry<dyn MotionEstimator> {
    let mut r: Registry<dyn MotionEstimator> = Registry::new("motion estimator");
    r.register(Arc::new(DiamondSearch::default())).unwrap();
    r.register(Arc::new(ExhaustiveSearch)).unwrap();
    r
}

pub fn estimate_motion(cur: &Frame, reference: &Frame, estimator: &dyn MotionEstimator, params: &SearchParams) -> Result<MotionField> {
    if !cur.same_shape(reference) {
        return Err(Error::Dimension("current and reference frames differ in shape".into()));
    }
    Ok(estimator.estimate(&cur.planes[0], &reference.planes[0], params))
}

/// Codes a field after quantizing each component by `step` quarter pels
/// (1 = lossless). Returns the framed chunk and the field the decoder sees.
/// An all-zero grid is sent as an empty payload.
fn encode_or_empty(g: &Grid<i32>, entropy: &dyn LatentEntropyModel) -> Result<Vec<u8>> {
    if g.data.iter().all(|&v| v == 0) {
        return Ok(Vec::new());
    }
    Ok(entropy.encode_region(g, &CellSet::full(g.rows, g.cols))?)
}

fn decode_or_zero(payload: &[u8], rows: usize, cols: usize, channels: usize, entropy: &dyn LatentEntropyModel) -> Result<Grid<i32>> {
    if payload.is_empty() {
        return Ok(Grid::new(rows, cols, channels));
    }
    Ok(entropy.decode_region(payload, &CellSet::full(rows, cols), channels)?)
}

pub fn compress_motion(field: &MotionField, step: u8, entropy: &dyn LatentEntropyModel) -> Result<(Vec<u8>, MotionField)> {
    let q = quantize(&field.to_grid().map(|v| v as f64), step as f64, MAX_BOUND);
    if q.clamped > 0 {
        return Err(Error::Capacity(format!("{} motion components exceed the coder alphabet", q.clamped)));
    }
    let g = q.plane.grid;
    let payload = encode_or_empty(&g, entropy)?;
    let decoded = MotionField::from_grid(&g.map(|v| v * step as i32), field.block);
    Ok((frame_chunk(&payload), decoded))
}

pub fn decode_motion(
    chunk: &[u8],
    width: usize,
    height: usize,
    block: usize,
    step: u8,
    entropy: &dyn LatentEntropyModel,
) -> Result<MotionField> {
    let payload = open_chunk(chunk)?;
    let shape = MotionField::zeros(width, height, block);
    let g = decode_or_zero(payload, shape.rows, shape.cols, 2, entropy)?;
    Ok(MotionField::from_grid(&g.map(|v| v * step as i32), block))
}

/// Bilinear warp of every plane, without refinement.
pub fn warp(reference: &Frame, field: &MotionField) -> PlaneSet {
    let mut out = PlaneSet::zeros(reference.format, reference.width, reference.height);
    for (pi, (src, dst)) in reference.planes.iter().zip(out.planes.iter_mut()).enumerate() {
        let shift = reference.format.plane_shift(pi);
        let scale = 4.0 * (1u32 << shift) as f64;
        for y in 0..dst.height {
            let br = ((y << shift) / field.block).min(field.rows - 1);
            for x in 0..dst.width {
                let bc = ((x << shift) / field.block).min(field.cols - 1);
                let v = field.get(br, bc);
                let s = sample_bilinear(src, x as f64 + v[0] as f64 / scale, y as f64 + v[1] as f64 / scale);
                dst.set(x, y, s);
            }
        }
    }
    out
}

/// Replaces pixels that touch a boundary between blocks with different
/// vectors by the 3x3 mean of the warped prediction.
pub fn refine(pred: &PlaneSet, field: &MotionField) -> PlaneSet {
    let mut out = pred.clone();
    for (pi, (src, dst)) in pred.planes.iter().zip(out.planes.iter_mut()).enumerate() {
        let shift = pred.format.plane_shift(pi);
        let block_of = |x: usize, y: usize| {
            (((y << shift) / field.block).min(field.rows - 1), ((x << shift) / field.block).min(field.cols - 1))
        };
        for y in 0..src.height {
            for x in 0..src.width {
                let (br, bc) = block_of(x, y);
                let v = field.get(br, bc);
                let mut edge = false;
                for (dx, dy) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx as usize >= src.width || ny as usize >= src.height {
                        continue;
                    }
                    let (nr, nc) = block_of(nx as usize, ny as usize);
                    if (nr, nc) != (br, bc) && field.get(nr, nc) != v {
                        edge = true;
                        break;
                    }
                }
                if edge {
                    let mut s = 0.0;
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            s += src.get_clamped(x as isize + dx, y as isize + dy);
                        }
                    }
                    dst.set(x, y, s / 9.0);
                }
            }
        }
    }
    out
}

/// Motion-compensated prediction: warp then boundary refinement.
pub fn motion_compensate(reference: &Frame, field: &MotionField) -> PlaneSet {
    let w = warp(reference, field);
    if field.is_zero() {
        return w;
    }
    refine(&w, field)
}

fn residual_planes(current: &Frame, pred: &PlaneSet) -> PlaneSet {
    let mut r = pred.clone();
    for (rp, cp) in r.planes.iter_mut().zip(&current.planes) {
        for (v, &c) in rp.data.iter_mut().zip(&cp.data) {
            *v = c as f64 - *v;
        }
    }
    r
}

/// `clamp(round(pred + residual))` per sample.
pub fn reconstruct(pred: &PlaneSet, residual: &PlaneSet) -> Frame {
    let mut sum = pred.clone();
    for (sp, rp) in sum.planes.iter_mut().zip(&residual.planes) {
        for (s, r) in sp.data.iter_mut().zip(&rp.data) {
            *s += r;
        }
    }
    sum.to_frame(0.0)
}

fn synthesize_residual(t: &dyn LatentTransform, q: &Grid<i32>, step: f64, pred: &PlaneSet) -> PlaneSet {
    t.synthesis(&dequantize(q, step), pred.format, pred.width, pred.height, None, 0.0)
}

/// Codes `current - pred` with the transform and entropy stack. Returns the
/// framed chunk and the reconstruction the decoder will produce.
pub fn compress_residual(
    current: &Frame,
    pred: &PlaneSet,
    t: &dyn LatentTransform,
    entropy: &dyn LatentEntropyModel,
    step: f64,
) -> Result<(Vec<u8>, Frame)> {
    if current.format != pred.format || current.width != pred.width || current.height != pred.height {
        return Err(Error::Dimension("residual input and prediction differ in shape".into()));
    }
    let coeffs = t.analysis(&residual_planes(current, pred));
    let mut q = quantize(&coeffs, step, MAX_BOUND).plane.grid;
    for (level, x) in q.data.iter_mut().zip(&coeffs.data) {
        if level.abs() == 1 && x.abs() < ONE_LEVEL_THRESHOLD * step {
            *level = 0;
        }
    }
    let payload = encode_or_empty(&q, entropy)?;
    let recon = reconstruct(pred, &synthesize_residual(t, &q, step, pred));
    Ok((frame_chunk(&payload), recon))
}

pub fn decode_residual(
    chunk: &[u8],
    pred: &PlaneSet,
    t: &dyn LatentTransform,
    entropy: &dyn LatentEntropyModel,
    step: f64,
) -> Result<Frame> {
    let res = decode_residual_planes(chunk, pred.format, pred.width, pred.height, t, entropy, step)?;
    Ok(reconstruct(pred, &res))
}

/// Decodes a residual chunk to its reconstructed residual planes, without a prediction.
pub fn decode_residual_planes(
    chunk: &[u8],
    format: PixelFormat,
    width: usize,
    height: usize,
    t: &dyn LatentTransform,
    entropy: &dyn LatentEntropyModel,
    step: f64,
) -> Result<PlaneSet> {
    let payload = open_chunk(chunk)?;
    let (rows, cols) = t.grid_dims(width, height);
    let q = decode_or_zero(payload, rows, cols, t.channels(format), entropy)?;
    Ok(t.synthesis(&dequantize(&q, step), format, width, height, None, 0.0))
}
