//! Coding a set of latent cells into one self-contained payload.
//!
//! Payload layout inside the range-coded stream:
//!
//! 1. alphabet bound `V` as 16 raw bits (stream ends here when `V == 0`);
//! 2. scale side information, when the model carries it: for every
//!    [`SIDE_INFO_TILE`]-square tile touching the cell set (tile row-major),
//!    one scale index per channel under the static factorized model;
//! 3. the symbols, channel-major, then cell scan order.
//!
//! Causal context only looks at cells of the same set, so a payload decodes
//! from its own bytes plus the cell set.

use std::cell::Cell;
use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use super::context::causal_predict;
use super::model::{CdfModel, CdfTable, FactorizedModel, GaussianConditional, MAX_BOUND, SIGMA_MIN};
use super::range_coder::PROB_TOTAL;
use crate::detmath::normal_cdf;
use super::quant::SymbolPlane;
use super::range_coder::{RangeDecoder, RangeEncoder};
use super::CodingError;
use crate::latent::{CellMask, Grid};
use crate::registry::{Registry, Strategy};

/// Latent tile edge (in cells) that shares one scale index per channel.
pub const SIDE_INFO_TILE: usize = 8;
/// Number of quantized scale levels.
pub const SCALE_LEVELS: usize = 32;

const BOUND_BITS: u32 = 16;

/// `0.05 * 2^(index / 2)`.
pub fn scale_for_index(index: usize) -> f64 {
    assert!(index < SCALE_LEVELS);
    let whole = (1u64 << (index / 2)) as f64;
    let s = super::SIGMA_MIN * whole;
    if index % 2 == 1 {
        s * std::f64::consts::SQRT_2
    } else {
        s
    }
}

/// Scale index whose level is nearest (geometrically) to `sqrt(mean_square)`.
pub fn scale_index_for(mean_square: f64) -> usize {
    // Boundary between level i and i+1 is 0.05^2 * 2^(i + 1/2) in the squared domain.
    let base = super::SIGMA_MIN * super::SIGMA_MIN * std::f64::consts::SQRT_2;
    (0..SCALE_LEVELS - 1).filter(|&i| mean_square > base * (1u64 << i) as f64).count()
}

/// Relative frequencies of each scale index, fitted once on tile statistics
/// of mixed intra and residual content over the whole quality ladder.
const SIDE_INFO_WEIGHTS: [u32; SCALE_LEVELS] = [
    428, 6, 2, 50, 40, 83, 71, 96, 97, 38, 17, 9, 7, 4, 3, 2, 2, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
];

/// The static table used for scale side information.
pub fn side_info_model() -> &'static FactorizedModel {
    static MODEL: OnceLock<FactorizedModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let weights: Vec<f64> = SIDE_INFO_WEIGHTS.iter().map(|&w| w as f64).collect();
        FactorizedModel::new(vec![CdfTable::from_weights(0, &weights)])
    })
}

/// Where a Gaussian symbol's mean comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanSource {
    Zero,
    Causal,
}

/// Where a Gaussian symbol's scale comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum ScaleSource {
    /// One scale for every symbol, known to both sides.
    Fixed(f64),
    /// Per-tile, per-channel scale indices transmitted as side information.
    Tiles,
}

/// Model for coding a whole symbol plane.
#[derive(Clone, Debug, PartialEq)]
pub enum EntropyModel {
    Factorized(FactorizedModel),
    GaussianConditional { mean: MeanSource, scale: ScaleSource },
}

/// Cells coded together, in scan order, with their membership mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellSet {
    pub mask: CellMask,
    pub cells: Vec<(usize, usize)>,
}

impl CellSet {
    pub fn from_mask(mask: CellMask) -> Self {
        let cells = mask.cells();
        Self { mask, cells }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self::from_mask(CellMask::full(rows, cols))
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Tiles touched by a cell set, with a lookup from cell to tile slot.
struct TileMap {
    tile_cols: usize,
    slot: Vec<Option<usize>>,
    count: usize,
}

impl TileMap {
    fn new(cells: &CellSet) -> Self {
        let tile_rows = cells.mask.rows.div_ceil(SIDE_INFO_TILE);
        let tile_cols = cells.mask.cols.div_ceil(SIDE_INFO_TILE);
        let mut present = vec![false; tile_rows * tile_cols];
        for &(r, c) in &cells.cells {
            present[(r / SIDE_INFO_TILE) * tile_cols + c / SIDE_INFO_TILE] = true;
        }
        let mut count = 0;
        let slot = present
            .into_iter()
            .map(|p| {
                p.then(|| {
                    count += 1;
                    count - 1
                })
            })
            .collect();
        Self { tile_cols, slot, count }
    }

    fn slot_of(&self, r: usize, c: usize) -> usize {
        self.slot[(r / SIDE_INFO_TILE) * self.tile_cols + c / SIDE_INFO_TILE].expect("cell outside tile map")
    }
}

fn mean_for(grid: &Grid<i32>, cells: &CellSet, mean: MeanSource, r: usize, c: usize, ch: usize) -> f64 {
    match mean {
        MeanSource::Zero => 0.0,
        MeanSource::Causal => causal_predict(grid, Some(&cells.mask), r, c, ch),
    }
}

/// Gaussian models for means on the half-integer lattice. Every CDF argument
/// is then `m * 0.5 / sigma` for an integer `m`, so normal CDF values are
/// memoised per scale. Other means fall back to [`GaussianConditional`].
struct ModelCache {
    bound: i32,
    tables: HashMap<u64, Vec<Cell<f64>>>,
    fallback: Option<GaussianConditional>,
}

/// Largest bound served from tables; beyond it a table costs more than it saves.
const TABLE_BOUND: i32 = 4096;

impl ModelCache {
    fn new(bound: i32) -> Self {
        Self { bound, tables: HashMap::new(), fallback: None }
    }

    fn with<R>(&mut self, mean: f64, sigma: f64, f: impl FnOnce(&dyn CdfModel, i32) -> R) -> R {
        let b = self.bound;
        let sigma = if sigma.is_nan() { SIGMA_MIN } else { sigma.max(SIGMA_MIN) };
        let mean = mean.clamp(-b as f64, b as f64);
        let mean2 = mean * 2.0;
        if b > TABLE_BOUND || mean2.fract() != 0.0 {
            let m = self.fallback.insert(GaussianConditional::new(mean, sigma, b));
            return f(m, b);
        }
        let len = 8 * b as usize + 3;
        let phi = self
            .tables
            .entry(sigma.to_bits())
            .or_insert_with(|| (0..len).map(|_| Cell::new(f64::NAN)).collect());
        let mut m = HalfGaussian { phi, sigma, bound: b, mean2: mean2 as i64, n: 2 * b as u32 + 1, phi_lo: 0.0, mass: 1.0 };
        m.phi_lo = m.phi_at(-2 * b as i64 - 1);
        m.mass = m.phi_at(2 * b as i64 + 1) - m.phi_lo;
        f(&m, b)
    }
}

struct HalfGaussian<'a> {
    phi: &'a [Cell<f64>],
    sigma: f64,
    bound: i32,
    mean2: i64,
    n: u32,
    phi_lo: f64,
    mass: f64,
}

impl HalfGaussian<'_> {
    /// Normal CDF at the doubled edge `edge2`.
    fn phi_at(&self, edge2: i64) -> f64 {
        let m = edge2 - self.mean2;
        let slot = &self.phi[(m + 4 * self.bound as i64 + 1) as usize];
        let v = slot.get();
        if !v.is_nan() {
            return v;
        }
        let v = normal_cdf(m as f64 * 0.5 / self.sigma);
        slot.set(v);
        v
    }
}

impl CdfModel for HalfGaussian<'_> {
    fn alphabet_size(&self) -> u32 {
        self.n
    }

    fn cdf(&self, index: u32) -> u32 {
        if index == 0 {
            return 0;
        }
        if index >= self.n {
            return PROB_TOTAL;
        }
        let edge2 = 2 * (index as i64 - self.bound as i64) - 1;
        let f = ((self.phi_at(edge2) - self.phi_lo) / self.mass).clamp(0.0, 1.0);
        let spread = (PROB_TOTAL - self.n) as f64;
        (f * spread).floor().min(spread) as u32 + index
    }

    fn guess(&self) -> u32 {
        ((self.mean2 as f64 * 0.5).round() as i32 + self.bound) as u32
    }
}

/// Range-codes the cells of `cells` from `grid` with a Gaussian-conditional model.
pub fn encode_gaussian(
    grid: &Grid<i32>,
    cells: &CellSet,
    mean: MeanSource,
    scale: &ScaleSource,
) -> Result<Vec<u8>, CodingError> {
    if cells.is_empty() {
        return Ok(Vec::new());
    }
    let channels = grid.channels;
    let bound = cells
        .cells
        .iter()
        .flat_map(|&(r, c)| grid.cell(r, c).iter().map(|v| v.abs()))
        .max()
        .unwrap_or(0);
    if bound > MAX_BOUND {
        return Err(CodingError::OutOfRange(format!("symbol magnitude {bound} exceeds {MAX_BOUND}")));
    }
    let mut enc = RangeEncoder::new();
    enc.encode_bits(bound as u32, BOUND_BITS);
    if bound == 0 {
        return Ok(enc.finish());
    }

    let tiles = TileMap::new(cells);
    let scales: Vec<f64> = match scale {
        ScaleSource::Fixed(s) => vec![*s; tiles.count * channels],
        ScaleSource::Tiles => {
            let mut acc = vec![(0.0f64, 0usize); tiles.count * channels];
            for &(r, c) in &cells.cells {
                let t = tiles.slot_of(r, c);
                for ch in 0..channels {
                    let e = grid.get(r, c, ch) as f64 - mean_for(grid, cells, mean, r, c, ch);
                    let a = &mut acc[t * channels + ch];
                    a.0 += e * e;
                    a.1 += 1;
                }
            }
            let side = side_info_model();
            acc.iter()
                .enumerate()
                .map(|(i, &(sq, n))| {
                    let idx = scale_index_for(sq / n as f64);
                    side.table(i % channels).encode(&mut enc, idx as i32);
                    scale_for_index(idx)
                })
                .collect()
        }
    };

    let mut cache = ModelCache::new(bound);
    for ch in 0..channels {
        for &(r, c) in &cells.cells {
            let mu = mean_for(grid, cells, mean, r, c, ch);
            let sigma = scales[tiles.slot_of(r, c) * channels + ch];
            let v = grid.get(r, c, ch);
            cache.with(mu, sigma, |m, b| m.encode_index(&mut enc, (v + b) as u32));
        }
    }
    Ok(enc.finish())
}

/// Inverse of [`encode_gaussian`]. Returns a full-size grid holding the
/// decoded cells and zeros elsewhere.
pub fn decode_gaussian(
    payload: &[u8],
    cells: &CellSet,
    channels: usize,
    mean: MeanSource,
    scale: &ScaleSource,
) -> Result<Grid<i32>, CodingError> {
    let mut grid = Grid::new(cells.mask.rows, cells.mask.cols, channels);
    if cells.is_empty() {
        if !payload.is_empty() {
            return Err(CodingError::Length("payload present for an empty cell set".into()));
        }
        return Ok(grid);
    }
    let mut dec = RangeDecoder::new(payload)?;
    let bound = dec.decode_bits(BOUND_BITS)? as i32;
    if bound > MAX_BOUND {
        return Err(CodingError::Corrupt(format!("alphabet bound {bound} out of range")));
    }
    if bound > 0 {
        let tiles = TileMap::new(cells);
        let scales: Vec<f64> = match scale {
            ScaleSource::Fixed(s) => vec![*s; tiles.count * channels],
            ScaleSource::Tiles => {
                let side = side_info_model();
                (0..tiles.count * channels)
                    .map(|i| side.table(i % channels).decode(&mut dec).map(|idx| scale_for_index(idx as usize)))
                    .collect::<Result<_, _>>()?
            }
        };
        let mut cache = ModelCache::new(bound);
        for ch in 0..channels {
            for &(r, c) in &cells.cells {
                let mu = mean_for(&grid, cells, mean, r, c, ch);
                let sigma = scales[tiles.slot_of(r, c) * channels + ch];
                let v = cache.with(mu, sigma, |m, b| m.decode_index(&mut dec).map(|i| i as i32 - b))?;
                grid.set(r, c, ch, v);
            }
        }
    }
    if !dec.is_exhausted() {
        return Err(CodingError::Length(format!(
            "{} trailing bytes after the last symbol",
            payload.len() - dec.position()
        )));
    }
    Ok(grid)
}

/// Codes every value of `plane` (channel-major, row-major) under `model`.
pub fn range_encode(plane: &SymbolPlane, model: &EntropyModel) -> Result<Vec<u8>, CodingError> {
    let g = &plane.grid;
    if let Some(v) = g.data.iter().find(|v| v.abs() > plane.bound) {
        return Err(CodingError::OutOfRange(format!("value {v} outside declared bound {}", plane.bound)));
    }
    match model {
        EntropyModel::GaussianConditional { mean, scale } => {
            encode_gaussian(g, &CellSet::full(g.rows, g.cols), *mean, scale)
        }
        EntropyModel::Factorized(fm) => {
            if g.data.is_empty() {
                return Ok(Vec::new());
            }
            let mut enc = RangeEncoder::new();
            for ch in 0..g.channels {
                let table = fm.table(ch);
                for r in 0..g.rows {
                    for c in 0..g.cols {
                        let v = g.get(r, c, ch);
                        if v < table.min_value() || v > table.max_value() {
                            return Err(CodingError::OutOfRange(format!(
                                "value {v} outside factorized table [{}, {}]",
                                table.min_value(),
                                table.max_value()
                            )));
                        }
                        table.encode(&mut enc, v);
                    }
                }
            }
            Ok(enc.finish())
        }
    }
}

/// Decodes a `rows x cols x channels` plane coded by [`range_encode`].
pub fn range_decode(
    payload: &[u8],
    model: &EntropyModel,
    rows: usize,
    cols: usize,
    channels: usize,
) -> Result<SymbolPlane, CodingError> {
    match model {
        EntropyModel::GaussianConditional { mean, scale } => {
            let grid = decode_gaussian(payload, &CellSet::full(rows, cols), channels, *mean, scale)?;
            Ok(SymbolPlane::tight(grid))
        }
        EntropyModel::Factorized(fm) => {
            let mut grid = Grid::new(rows, cols, channels);
            if grid.data.is_empty() {
                return Ok(SymbolPlane { grid, bound: 0 });
            }
            let mut dec = RangeDecoder::new(payload)?;
            for ch in 0..channels {
                let table = fm.table(ch);
                for r in 0..rows {
                    for c in 0..cols {
                        grid.set(r, c, ch, table.decode(&mut dec)?);
                    }
                }
            }
            if !dec.is_exhausted() {
                return Err(CodingError::Length("trailing bytes after the last symbol".into()));
            }
            Ok(SymbolPlane::tight(grid))
        }
    }
}

/// A latent entropy model selectable by name or header id.
pub trait LatentEntropyModel: Strategy {
    fn mean_source(&self) -> MeanSource;

    fn encode_region(&self, grid: &Grid<i32>, cells: &CellSet) -> Result<Vec<u8>, CodingError> {
        encode_gaussian(grid, cells, self.mean_source(), &ScaleSource::Tiles)
    }

    fn decode_region(&self, payload: &[u8], cells: &CellSet, channels: usize) -> Result<Grid<i32>, CodingError> {
        decode_gaussian(payload, cells, channels, self.mean_source(), &ScaleSource::Tiles)
    }
}

/// Mean from causal context, scale from side information.
pub struct GaussianContext;

impl Strategy for GaussianContext {
    fn name(&self) -> &'static str {
        "gaussian-context"
    }
    fn id(&self) -> u8 {
        0
    }
    fn description(&self) -> &'static str {
        "Gaussian conditional; mean from left/up context, scale from tile side info"
    }
}

impl LatentEntropyModel for GaussianContext {
    fn mean_source(&self) -> MeanSource {
        MeanSource::Causal
    }
}

/// Zero mean, scale from side information only.
pub struct GaussianHyper;

impl Strategy for GaussianHyper {
    fn name(&self) -> &'static str {
        "gaussian-hyper"
    }
    fn id(&self) -> u8 {
        1
    }
    fn description(&self) -> &'static str {
        "Gaussian conditional; zero mean, scale from tile side info"
    }
}

impl LatentEntropyModel for GaussianHyper {
    fn mean_source(&self) -> MeanSource {
        MeanSource::Zero
    }
}

/// Built-in latent entropy models.
pub fn entropy_models() -> Registry<dyn LatentEntropyModel> {
    let mut r: Registry<dyn LatentEntropyModel> = Registry::new("entropy model");
    r.register(Arc::new(GaussianContext)).unwrap();
    r.register(Arc::new(GaussianHyper)).unwrap();
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_models_match_direct_models() {
        let mut cache = ModelCache::new(37);
        for &(mean, sigma) in &[(0.0, 1.3), (-3.5, 0.2), (12.0, 7.9), (40.0, 2.0), (-0.5, 0.01)] {
            let direct = GaussianConditional::new(mean, sigma, 37);
            for _ in 0..2 {
                cache.with(mean, sigma, |m, _| {
                    for i in 0..=75 {
                        assert_eq!(m.cdf(i), direct.cdf(i), "mean {mean} sigma {sigma} index {i}");
                    }
                    assert_eq!(m.guess(), direct.guess());
                });
            }
        }
    }

    fn random_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize, ch: usize, amp: i32) -> Grid<i32> {
        let mut g = Grid::new(rows, cols, ch);
        for v in &mut g.data {
            *v = rng.gen_range(-amp..=amp);
        }
        g
    }

    #[test]
    fn scale_ladder() {
        assert_eq!(scale_for_index(0), 0.05);
        assert!((scale_for_index(1) - 0.05 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(scale_for_index(4), 0.2);
        assert_eq!(scale_index_for(0.0), 0);
        for i in 0..SCALE_LEVELS {
            let s = scale_for_index(i);
            assert_eq!(scale_index_for(s * s), i);
        }
        assert_eq!(scale_index_for(1e12), SCALE_LEVELS - 1);
    }

    #[test]
    fn region_roundtrip_with_holes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_grid(&mut rng, 13, 17, 6, 9);
        let mut mask = CellMask::new(13, 17);
        for r in 0..13 {
            for c in 0..17 {
                mask.set(r, c, (r * 7 + c * 3) % 5 != 0);
            }
        }
        let cells = CellSet::from_mask(mask);
        for m in entropy_models().iter() {
            let bytes = m.encode_region(&g, &cells).unwrap();
            let back = m.decode_region(&bytes, &cells, 6).unwrap();
            for &(r, c) in &cells.cells {
                assert_eq!(back.cell(r, c), g.cell(r, c));
            }
        }
    }

    #[test]
    fn empty_and_zero_regions() {
        let g = Grid::<i32>::new(4, 4, 3);
        let empty = CellSet::from_mask(CellMask::new(4, 4));
        let bytes = GaussianContext.encode_region(&g, &empty).unwrap();
        assert!(bytes.is_empty());
        assert_eq!(GaussianContext.decode_region(&bytes, &empty, 3).unwrap(), g);
        let full = CellSet::full(4, 4);
        let bytes = GaussianContext.encode_region(&g, &full).unwrap();
        assert!(bytes.len() <= 6);
        assert_eq!(GaussianContext.decode_region(&bytes, &full, 3).unwrap(), g);
    }

    #[test]
    fn factorized_plane_roundtrip_and_range_check() {
        let table = CdfTable::from_weights(-2, &[1.0, 3.0, 8.0, 3.0, 1.0]);
        let model = EntropyModel::Factorized(FactorizedModel::new(vec![table]));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let plane = SymbolPlane::tight(random_grid(&mut rng, 5, 6, 2, 2));
        let bytes = range_encode(&plane, &model).unwrap();
        assert_eq!(range_decode(&bytes, &model, 5, 6, 2).unwrap().grid, plane.grid);
        let bad = SymbolPlane::tight(random_grid(&mut rng, 5, 6, 2, 5));
        assert!(range_encode(&bad, &model).is_err());
    }

    #[test]
    fn corrupted_payload_is_detected_or_differs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = random_grid(&mut rng, 8, 8, 4, 30);
        let cells = CellSet::full(8, 8);
        let mut bytes = GaussianContext.encode_region(&g, &cells).unwrap();
        bytes.truncate(bytes.len() / 2);
        assert!(GaussianContext.decode_region(&bytes, &cells, 4).is_err());
    }
}
