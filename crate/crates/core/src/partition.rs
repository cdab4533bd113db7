//! Region layout of an intra latent grid: merged object groups, then the
//! background with left-boundary fill over object holes.

use crate::container::{ChunkEntry, ChunkKind, ObjectRecord};
use crate::entropy::CellSet;
use crate::error::{Error, Result};
use crate::latent::{CellMask, Grid};

pub use crate::container::CellRect;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegionKind {
    /// Indices of the input objects merged into this region, ascending.
    Object(Vec<usize>),
    Background,
}

/// A maximal run of member cells within one row: `cols c0..c1` of `row`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub row: usize,
    pub c0: usize,
    pub c1: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub kind: RegionKind,
    pub cells: CellSet,
    pub segments: Vec<Segment>,
}

impl Region {
    fn new(kind: RegionKind, mask: CellMask) -> Self {
        let cells = CellSet::from_mask(mask);
        let segments = segments_of(&cells.mask);
        Self { kind, cells, segments }
    }

    pub fn is_background(&self) -> bool {
        self.kind == RegionKind::Background
    }

    pub fn len(&self) -> usize {
        self.cells.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

fn segments_of(mask: &CellMask) -> Vec<Segment> {
    let mut out = Vec::new();
    for row in 0..mask.rows {
        let mut c = 0;
        while c < mask.cols {
            if mask.get(row, c) {
                let c0 = c;
                while c < mask.cols && mask.get(row, c) {
                    c += 1;
                }
                out.push(Segment { row, c0, c1: c });
            } else {
                c += 1;
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionLayout {
    pub rows: usize,
    pub cols: usize,
    /// Object regions in coding order, then the background last.
    pub regions: Vec<Region>,
    /// Background holes: `(cell, source)` in row-major order of `cell`.
    pub fill: Vec<((usize, usize), (usize, usize))>,
    /// Region index of every input object.
    pub object_region: Vec<usize>,
}

impl RegionLayout {
    pub fn object_regions(&self) -> &[Region] {
        &self.regions[..self.regions.len() - 1]
    }

    pub fn background(&self) -> &Region {
        self.regions.last().unwrap()
    }

    pub fn background_index(&self) -> usize {
        self.regions.len() - 1
    }

    pub fn fill_mask(&self) -> CellMask {
        let mut m = CellMask::new(self.rows, self.cols);
        for &((r, c), _) in &self.fill {
            m.set(r, c, true);
        }
        m
    }
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.0[root] != root {
            root = self.0[root];
        }
        let mut j = i;
        while self.0[j] != root {
            let next = self.0[j];
            self.0[j] = root;
            j = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

fn intersects(a: &CellRect, b: &CellRect) -> bool {
    a.r0 < b.r1 && b.r0 < a.r1 && a.c0 < b.c1 && b.c0 < a.c1
}

/// Builds the layout for object rectangles on a `rows x cols` grid.
///
/// Rectangles sharing at least one cell end up in the same region
/// (transitively); a region codes the union of its members' cells. Regions
/// are ordered by their first cell in row-major order.
pub fn build_layout(rects: &[CellRect], rows: usize, cols: usize) -> Result<RegionLayout> {
    for (i, r) in rects.iter().enumerate() {
        if r.is_empty() || r.r1 > rows || r.c1 > cols {
            return Err(Error::Layout(format!("object {i} rectangle {r:?} is empty or outside the {rows}x{cols} grid")));
        }
    }
    let mut ds = DisjointSet((0..rects.len()).collect());
    for i in 0..rects.len() {
        for j in i + 1..rects.len() {
            if intersects(&rects[i], &rects[j]) {
                ds.union(i, j);
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..rects.len() {
        let root = ds.find(i);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, m)) => m.push(i),
            None => groups.push((root, vec![i])),
        }
    }

    let mut covered = CellMask::new(rows, cols);
    let mut objects: Vec<Region> = groups
        .into_iter()
        .map(|(_, members)| {
            let mut mask = CellMask::new(rows, cols);
            for &m in &members {
                let r = &rects[m];
                for row in r.r0..r.r1 {
                    for col in r.c0..r.c1 {
                        mask.set(row, col, true);
                        covered.set(row, col, true);
                    }
                }
            }
            Region::new(RegionKind::Object(members), mask)
        })
        .collect();
    objects.sort_by_key(|r| r.cells.cells[0]);

    let mut object_region = vec![0; rects.len()];
    for (ri, r) in objects.iter().enumerate() {
        if let RegionKind::Object(members) = &r.kind {
            for &m in members {
                object_region[m] = ri;
            }
        }
    }

    let mut bg = CellMask::new(rows, cols);
    let mut fill = Vec::new();
    for row in 0..rows {
        let first = (0..cols).find(|&c| !covered.get(row, c));
        let Some(first) = first else { continue };
        let mut last_bg = None;
        for col in 0..cols {
            if covered.get(row, col) {
                fill.push(((row, col), (row, last_bg.unwrap_or(first))));
            } else {
                bg.set(row, col, true);
                last_bg = Some(col);
            }
        }
    }
    let mut regions = objects;
    regions.push(Region::new(RegionKind::Background, bg));
    Ok(RegionLayout { rows, cols, regions, fill, object_region })
}

/// Layout for header object records on a latent grid of stride `stride`.
pub fn layout_for_objects(objects: &[ObjectRecord], stride: usize, rows: usize, cols: usize) -> Result<RegionLayout> {
    let rects: Vec<CellRect> = objects.iter().map(|o| o.bbox_latent(stride, rows, cols)).collect();
    build_layout(&rects, rows, cols)
}

/// Member cells' channel vectors in segment order.
pub fn gather_region(latent: &Grid<i32>, region: &Region) -> Vec<i32> {
    let mut out = Vec::with_capacity(region.len() * latent.channels);
    for s in &region.segments {
        for col in s.c0..s.c1 {
            out.extend_from_slice(latent.cell(s.row, col));
        }
    }
    out
}

/// Inverse of [`gather_region`]. Scattering the background also copies each
/// fill source into its hole.
pub fn scatter_region(symbols: &[i32], region: &Region, layout: &RegionLayout, grid: &mut Grid<i32>) -> Result<()> {
    let ch = grid.channels;
    if symbols.len() != region.len() * ch {
        return Err(Error::Layout(format!("{} symbols for a region of {} cells x {ch} channels", symbols.len(), region.len())));
    }
    let mut it = symbols.chunks_exact(ch);
    for s in &region.segments {
        for col in s.c0..s.c1 {
            grid.cell_mut(s.row, col).copy_from_slice(it.next().unwrap());
        }
    }
    if region.is_background() {
        apply_fill(layout, grid);
    }
    Ok(())
}

pub fn apply_fill(layout: &RegionLayout, grid: &mut Grid<i32>) {
    for &((r, c), (sr, sc)) in &layout.fill {
        let src = grid.cell(sr, sc).to_vec();
        grid.cell_mut(r, c).copy_from_slice(&src);
    }
}

/// Bits attributed to one region of an intra frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionBits {
    pub label: String,
    pub bytes: usize,
    pub cells: usize,
    pub bpp: f64,
    pub share: f64,
}

/// Per-region byte breakdown of an intra frame from its chunk table entries.
pub fn region_bit_report(layout: &RegionLayout, chunks: &[ChunkEntry], width: usize, height: usize) -> Result<Vec<RegionBits>> {
    let pixels = (width * height) as f64;
    let mut rows = Vec::with_capacity(layout.regions.len());
    for (i, region) in layout.regions.iter().enumerate() {
        let (kind, index) = if region.is_background() { (ChunkKind::Background, 0) } else { (ChunkKind::Object, i as u16) };
        let entry = chunks
            .iter()
            .find(|c| c.kind == kind && c.index == index)
            .ok_or_else(|| Error::NotFound(format!("{kind} chunk {index} for region {i}")))?;
        let label = match &region.kind {
            RegionKind::Object(m) => format!("object-region {i} (objects {m:?})"),
            RegionKind::Background => "background".to_string(),
        };
        rows.push(RegionBits { label, bytes: entry.length as usize, cells: region.len(), bpp: 8.0 * entry.length as f64 / pixels, share: 0.0 });
    }
    let total: usize = rows.iter().map(|r| r.bytes).sum();
    for r in &mut rows {
        r.share = if total == 0 { 0.0 } else { r.bytes as f64 / total as f64 };
    }
    Ok(rows)
}
