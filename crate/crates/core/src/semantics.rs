//! Object parsing: heatmap peaks, box assembly, detector training losses,
//! and the annotation sidecar that supplies objects to the encoder.
//!
//! Heatmaps, size maps and offset maps are [`Grid<f64>`]s indexed
//! `(row, col, channel)`. Size and offset maps carry `(x, y)` in channels 0
//! and 1. Sizes and offsets are in detector-grid units.

use std::collections::BTreeMap;

use crate::container::ObjectRecord;
use crate::error::{Error, Result};
use crate::latent::Grid;

/// Clamp applied to predicted probabilities before taking logs.
pub const FOCAL_EPS: f64 = 1e-7;
pub const DEFAULT_DETECTOR_STRIDE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub x: usize,
    pub y: usize,
    pub class: usize,
    pub score: f64,
}

/// A cell is a peak when no 3x3 neighbour beats it; equal values are won by
/// the smaller row-major index.
pub fn is_peak(hm: &Grid<f64>, row: usize, col: usize, class: usize) -> bool {
    let v = hm.get(row, col, class);
    let own = row * hm.cols + col;
    for r in row.saturating_sub(1)..(row + 2).min(hm.rows) {
        for c in col.saturating_sub(1)..(col + 2).min(hm.cols) {
            let n = hm.get(r, c, class);
            if n > v || (n == v && r * hm.cols + c < own) {
                return false;
            }
        }
    }
    true
}

/// Peaks with score at least `threshold`, at most `top_k` per class, sorted by
/// descending score (then class, then row-major position).
pub fn extract_peaks(hm: &Grid<f64>, threshold: f64, top_k: usize) -> Vec<Peak> {
    let mut out = Vec::new();
    for class in 0..hm.channels {
        let mut found = Vec::new();
        for row in 0..hm.rows {
            for col in 0..hm.cols {
                let score = hm.get(row, col, class);
                if score >= threshold && is_peak(hm, row, col, class) {
                    found.push(Peak { x: col, y: row, class, score });
                }
            }
        }
        found.sort_by(|a, b| b.score.total_cmp(&a.score));
        found.truncate(top_k);
        out.extend(found);
    }
    out.sort_by(|a, b| {
        b.score.total_cmp(&a.score).then(a.class.cmp(&b.class)).then((a.y, a.x).cmp(&(b.y, b.x)))
    });
    out
}

/// Box `(a1, b1, a2, b2)` in pixels before rounding and clipping.
pub fn bbox_real(peak: &Peak, sizes: &Grid<f64>, offsets: &Grid<f64>, stride: usize) -> [f64; 4] {
    let (r, c) = (peak.y, peak.x);
    let cx = c as f64 + offsets.get(r, c, 0);
    let cy = r as f64 + offsets.get(r, c, 1);
    let (w, h) = (sizes.get(r, c, 0), sizes.get(r, c, 1));
    let s = stride as f64;
    [s * (cx - w / 2.0), s * (cy - h / 2.0), s * (cx + w / 2.0), s * (cy + h / 2.0)]
}

/// Integer pixel box with exclusive far edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PixelBox {
    pub a1: u32,
    pub b1: u32,
    pub a2: u32,
    pub b2: u32,
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 { r } else { v }
}

/// Assembles a peak's box, rounded outward and clipped to the frame.
/// Degenerate boxes yield `None`.
pub fn assemble_bbox(
    peak: &Peak,
    sizes: &Grid<f64>,
    offsets: &Grid<f64>,
    stride: usize,
    width: usize,
    height: usize,
) -> Option<PixelBox> {
    let [a1, b1, a2, b2] = bbox_real(peak, sizes, offsets, stride);
    let clip = |v: f64, hi: usize| v.clamp(0.0, hi as f64) as u32;
    let b = PixelBox {
        a1: clip(snap(a1).floor(), width),
        b1: clip(snap(b1).floor(), height),
        a2: clip(snap(a2).ceil(), width),
        b2: clip(snap(b2).ceil(), height),
    };
    if !(a2 > a1 && b2 > b1) || b.a1 >= b.a2 || b.b1 >= b.b2 {
        log::warn!("dropping degenerate box at ({}, {}) class {}", peak.x, peak.y, peak.class);
        return None;
    }
    Some(b)
}

/// Low-resolution cell of a pixel position.
pub fn gt_to_lowres(p: (f64, f64), stride: usize) -> (usize, usize) {
    let s = stride as f64;
    ((p.0 / s).floor() as usize, (p.1 / s).floor() as usize)
}

/// Penalty-reduced pixel-wise focal loss, normalised by the number of
/// cells where `gt` is exactly 1.
pub fn focal_loss(pred: &Grid<f64>, gt: &Grid<f64>, alpha: f64, beta: f64) -> Result<f64> {
    if !pred.same_shape(gt) {
        return Err(Error::Dimension("prediction and target heatmaps differ in shape".into()));
    }
    let n = gt.data.iter().filter(|&&y| y == 1.0).count();
    if n == 0 {
        return Err(Error::Input("focal loss needs at least one positive cell".into()));
    }
    let mut sum = 0.0;
    for (&p, &y) in pred.data.iter().zip(&gt.data) {
        let p = p.clamp(FOCAL_EPS, 1.0 - FOCAL_EPS);
        sum += if y == 1.0 {
            (1.0 - p).powf(alpha) * p.ln()
        } else {
            (1.0 - y).powf(beta) * p.powf(alpha) * (1.0 - p).ln()
        };
    }
    Ok(-sum / n as f64)
}

/// A ground-truth box in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtBox {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl GtBox {
    pub fn center(&self) -> (f64, f64) {
        ((self.a1 + self.a2) / 2.0, (self.b1 + self.b2) / 2.0)
    }

    /// Size in detector-grid units.
    pub fn size(&self, stride: usize) -> (f64, f64) {
        ((self.a2 - self.a1) / stride as f64, (self.b2 - self.b1) / stride as f64)
    }

    /// Sub-cell offset of the centre in detector-grid units.
    pub fn offset(&self, stride: usize) -> (f64, f64) {
        let (x, y) = self.center();
        let (cx, cy) = gt_to_lowres((x, y), stride);
        (x / stride as f64 - cx as f64, y / stride as f64 - cy as f64)
    }
}

/// Mean L1 size and offset losses over the objects, each read at the
/// object's low-resolution centre cell.
pub fn size_offset_losses(sizes: &Grid<f64>, offsets: &Grid<f64>, objects: &[GtBox], stride: usize) -> Result<(f64, f64)> {
    if objects.is_empty() {
        return Err(Error::Input("size/offset losses need at least one object".into()));
    }
    let mut ls = 0.0;
    let mut lo = 0.0;
    for o in objects {
        let (x, y) = gt_to_lowres(o.center(), stride);
        if y >= sizes.rows || x >= sizes.cols || y >= offsets.rows || x >= offsets.cols {
            return Err(Error::Dimension(format!("object centre cell ({x}, {y}) outside the maps")));
        }
        let (sw, sh) = o.size(stride);
        let (ox, oy) = o.offset(stride);
        ls += (sizes.get(y, x, 0) - sw).abs() + (sizes.get(y, x, 1) - sh).abs();
        lo += (offsets.get(y, x, 0) - ox).abs() + (offsets.get(y, x, 1) - oy).abs();
    }
    let n = objects.len() as f64;
    Ok((ls / n, lo / n))
}

/// Weighted sum `l_k + lambda_size * l_size + lambda_off * l_off`.
pub fn total_parsing_loss(l_k: f64, l_size: f64, l_off: f64, lambda_size: f64, lambda_off: f64) -> f64 {
    l_k + lambda_size * l_size + lambda_off * l_off
}

/// Target heatmap with a Gaussian splat per object (element-wise max where
/// splats meet). Centre cells are exactly 1.
pub fn splat_gaussians(rows: usize, cols: usize, classes: usize, centers: &[(usize, usize, usize, f64)]) -> Grid<f64> {
    let mut g = Grid::new(rows, cols, classes);
    for &(x, y, class, sigma) in centers {
        for r in 0..rows {
            for c in 0..cols {
                let d2 = (r as f64 - y as f64).powi(2) + (c as f64 - x as f64).powi(2);
                let v = (-d2 / (2.0 * sigma * sigma)).exp();
                if v > g.get(r, c, class) {
                    g.set(r, c, class, v);
                }
            }
        }
    }
    g
}

/// One sidecar record: an object box on one frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Annotation {
    pub frame: u32,
    pub class_id: u16,
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

/// Parsed sidecar: records plus any class names it declares.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Annotations {
    pub records: Vec<Annotation>,
    pub class_names: BTreeMap<u16, String>,
}

impl Annotations {
    /// Parses the line format
    ///
    /// ```text
    /// # comment
    /// class <id> <name>
    /// <frame> <class_id> <x> <y> <w> <h> [name]
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Annotations::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let err = |message: String| Error::Annotation { line, message };
            if fields[0] == "class" {
                if fields.len() != 3 {
                    return Err(err("expected 'class <id> <name>'".into()));
                }
                let id = fields[1].parse::<u16>().map_err(|_| err(format!("bad class id '{}'", fields[1])))?;
                out.declare(id, fields[2], line)?;
                continue;
            }
            if !(6..=7).contains(&fields.len()) {
                return Err(err(format!("expected 6 or 7 fields, found {}", fields.len())));
            }
            let int = |k: usize, what: &str| fields[k].parse::<i64>().map_err(|_| err(format!("bad {what} '{}'", fields[k])));
            let frame = fields[0].parse::<u32>().map_err(|_| err(format!("bad frame index '{}'", fields[0])))?;
            let class_id = fields[1].parse::<u16>().map_err(|_| err(format!("bad class id '{}'", fields[1])))?;
            let (x, y, w, h) = (int(2, "x")?, int(3, "y")?, int(4, "width")?, int(5, "height")?);
            if w <= 0 || h <= 0 {
                return Err(err(format!("box size {w}x{h} must be positive")));
            }
            if let Some(name) = fields.get(6) {
                out.declare(class_id, name, line)?;
            }
            out.records.push(Annotation { frame, class_id, x, y, w, h });
        }
        Ok(out)
    }

    fn declare(&mut self, id: u16, name: &str, line: usize) -> Result<()> {
        if name.len() > 255 {
            return Err(Error::Annotation { line, message: "class name longer than 255 bytes".into() });
        }
        match self.class_names.get(&id) {
            Some(existing) if existing != name => Err(Error::Annotation {
                line,
                message: format!("class {id} already named '{existing}', not '{name}'"),
            }),
            _ => {
                self.class_names.insert(id, name.to_string());
                Ok(())
            }
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Object records for `frame`, clipped to the frame. Boxes that clip to
    /// nothing are dropped.
    pub fn objects_for_frame(&self, frame: u32, width: usize, height: usize) -> Vec<ObjectRecord> {
        let mut out = Vec::new();
        for a in self.records.iter().filter(|a| a.frame == frame) {
            let a1 = a.x.clamp(0, width as i64);
            let b1 = a.y.clamp(0, height as i64);
            let a2 = (a.x + a.w).clamp(0, width as i64);
            let b2 = (a.y + a.h).clamp(0, height as i64);
            if a1 >= a2 || b1 >= b2 {
                log::warn!("frame {frame}: box {:?} lies outside the {width}x{height} frame, dropped", (a.x, a.y, a.w, a.h));
                continue;
            }
            if (a1, b1, a2, b2) != (a.x, a.y, a.x + a.w, a.y + a.h) {
                log::warn!("frame {frame}: box {:?} clipped to the frame", (a.x, a.y, a.w, a.h));
            }
            out.push(ObjectRecord::new(a.class_id, a1 as u16, b1 as u16, a2 as u16, b2 as u16));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (id, name) in &self.class_names {
            s.push_str(&format!("class {id} {name}\n"));
        }
        for a in &self.records {
            s.push_str(&format!("{} {} {} {} {} {}\n", a.frame, a.class_id, a.x, a.y, a.w, a.h));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_peak() {
        let mut hm = Grid::new(10, 10, 1);
        hm.set(7, 5, 0, 1.0);
        let p = extract_peaks(&hm, 0.5, 10);
        assert_eq!(p, vec![Peak { x: 5, y: 7, class: 0, score: 1.0 }]);
    }

    #[test]
    fn adjacent_cells_suppressed() {
        let mut hm = Grid::new(4, 4, 1);
        hm.set(1, 1, 0, 0.9);
        hm.set(1, 2, 0, 0.8);
        let p = extract_peaks(&hm, 0.5, 10);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].x, p[0].y), (1, 1));
        hm.set(1, 2, 0, 0.9);
        let p = extract_peaks(&hm, 0.5, 10);
        assert_eq!((p.len(), p[0].x), (1, 1));
    }

    #[test]
    fn bbox_examples() {
        let mut s = Grid::new(30, 30, 2);
        let mut o = Grid::new(30, 30, 2);
        s.set(20, 10, 0, 4.0);
        s.set(20, 10, 1, 6.0);
        o.set(20, 10, 0, 0.3);
        o.set(20, 10, 1, -0.2);
        let p = Peak { x: 10, y: 20, class: 0, score: 1.0 };
        let b = bbox_real(&p, &s, &o, 1);
        for (got, want) in b.iter().zip([8.3, 16.8, 12.3, 22.8]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(assemble_bbox(&p, &s, &o, 1, 100, 100), Some(PixelBox { a1: 8, b1: 16, a2: 13, b2: 23 }));

        let mut s = Grid::new(10, 10, 2);
        s.set(5, 5, 0, 2.0);
        s.set(5, 5, 1, 2.0);
        let o = Grid::new(10, 10, 2);
        let p = Peak { x: 5, y: 5, class: 0, score: 1.0 };
        assert_eq!(assemble_bbox(&p, &s, &o, 4, 100, 100), Some(PixelBox { a1: 16, b1: 16, a2: 24, b2: 24 }));
        assert_eq!(assemble_bbox(&p, &Grid::new(10, 10, 2), &o, 4, 100, 100), None);
    }

    #[test]
    fn lowres_mapping() {
        assert_eq!(gt_to_lowres((37.0, 22.0), 4), (9, 5));
        assert_eq!(gt_to_lowres((0.0, 0.0), 4), (0, 0));
    }

    #[test]
    fn focal_examples() {
        let mut y = Grid::new(4, 4, 1);
        y.set(1, 2, 0, 1.0);
        let mut p = Grid::new(4, 4, 1);
        p.set(1, 2, 0, 0.5);
        let l = focal_loss(&p, &y, 2.0, 4.0).unwrap();
        assert!((l - 0.1733).abs() < 5e-5, "{l}");
        p.set(1, 2, 0, 1.0);
        assert!(focal_loss(&p, &y, 2.0, 4.0).unwrap().abs() < 1e-12);
        assert!(focal_loss(&p, &Grid::new(4, 4, 1), 2.0, 4.0).is_err());
    }

    #[test]
    fn size_example() {
        let gt = GtBox { a1: 8.0, b1: 7.0, a2: 12.0, b2: 13.0 };
        let mut s = Grid::new(20, 20, 2);
        let (x, y) = gt_to_lowres(gt.center(), 1);
        s.set(y, x, 0, 5.0);
        s.set(y, x, 1, 5.0);
        let (ls, lo) = size_offset_losses(&s, &Grid::new(20, 20, 2), &[gt], 1).unwrap();
        assert_eq!(ls, 2.0);
        assert_eq!(lo, 0.0);
        assert!(size_offset_losses(&s, &s, &[], 1).is_err());
    }

    #[test]
    fn annotation_parsing() {
        let a = Annotations::parse("# demo\nclass 1 car\n0 0 10 12 30 20 person\n\n3 1 -5 0 20 10 # edge\n").unwrap();
        assert_eq!(a.records.len(), 2);
        assert_eq!(a.class_names.get(&0).map(String::as_str), Some("person"));
        let objs = a.objects_for_frame(3, 64, 64);
        assert_eq!((objs[0].a1, objs[0].a2), (0, 15));
        match Annotations::parse("0 0 1 2 3\n") {
            Err(Error::Annotation { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(Annotations::parse("class 1 a\nclass 1 b\n").is_err());
        assert!(Annotations::parse("0 0 1 1 0 4\n").is_err());
    }
}
