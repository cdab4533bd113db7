use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssvc::latent::Grid;
use ssvc::semantics::{
    assemble_bbox, extract_peaks, focal_loss, gt_to_lowres, size_offset_losses, total_parsing_loss, Annotations, GtBox,
    Peak, PixelBox,
};

/// Peaks by window scan: a cell survives when it is the first maximum, in
/// row-major order, of its clipped 3x3 window.
fn scan_peaks(hm: &Grid<f64>, threshold: f64, top_k: usize) -> Vec<Peak> {
    let mut all = Vec::new();
    for class in 0..hm.channels {
        let mut mine = Vec::new();
        for row in 0..hm.rows {
            for col in 0..hm.cols {
                let mut first_max: Option<(f64, usize, usize)> = None;
                for r in row.saturating_sub(1)..=(row + 1).min(hm.rows - 1) {
                    for c in col.saturating_sub(1)..=(col + 1).min(hm.cols - 1) {
                        let v = hm.get(r, c, class);
                        if first_max.map_or(true, |(m, _, _)| v > m) {
                            first_max = Some((v, r, c));
                        }
                    }
                }
                let (m, r, c) = first_max.unwrap();
                if (r, c) == (row, col) && m >= threshold {
                    mine.push(Peak { x: col, y: row, class, score: m });
                }
            }
        }
        mine.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
        mine.truncate(top_k);
        all.extend(mine);
    }
    all.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.class.cmp(&b.class)).then((a.y, a.x).cmp(&(b.y, b.x))));
    all
}

fn heatmap(seed: u64, rows: usize, cols: usize, classes: usize, levels: u32) -> Grid<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Grid::new(rows, cols, classes);
    for v in g.data.iter_mut() {
        *v = rng.gen_range(0..levels) as f64 / (levels - 1) as f64;
    }
    g
}

fn focal_oracle(pred: &Grid<f64>, gt: &Grid<f64>, alpha: f64, beta: f64) -> f64 {
    let mut total = 0.0;
    let mut positives = 0;
    for r in 0..gt.rows {
        for c in 0..gt.cols {
            for k in 0..gt.channels {
                let y = gt.get(r, c, k);
                let p = pred.get(r, c, k).clamp(1e-7, 1.0 - 1e-7);
                if y == 1.0 {
                    positives += 1;
                    total += (1.0 - p).powf(alpha) * p.ln();
                } else {
                    total += (1.0 - y).powf(beta) * p.powf(alpha) * (1.0 - p).ln();
                }
            }
        }
    }
    -total / positives as f64
}

#[test]
fn sixteen_by_sixteen_maps_match_the_window_scan() {
    for seed in 0..200 {
        let hm = heatmap(seed, 16, 16, 2, if seed % 2 == 0 { 4 } else { 1000 });
        for (threshold, top_k) in [(0.0, 100), (0.5, 100), (0.3, 3)] {
            assert_eq!(extract_peaks(&hm, threshold, top_k), scan_peaks(&hm, threshold, top_k), "seed {seed}");
        }
    }
}

#[test]
fn parsing_loss_weights() {
    assert!((total_parsing_loss(1.0, 2.0, 3.0, 0.1, 1.0) - 4.2).abs() < 1e-12);
    assert_eq!(total_parsing_loss(0.0, 0.0, 0.0, 0.1, 1.0), 0.0);
}

#[test]
fn lowres_mapping_examples() {
    assert_eq!(gt_to_lowres((37.0, 22.0), 4), (9, 5));
    assert_eq!(gt_to_lowres((0.0, 0.0), 4), (0, 0));
}

#[test]
fn annotation_text_roundtrips() {
    let text = "# clip\nclass 0 person\nclass 1 car\n0 0 10 12 30 40\n0 1 -5 8 20 10\n3 1 100 90 7 7\n";
    let a = Annotations::parse(text).unwrap();
    assert_eq!(a.records.len(), 3);
    assert_eq!(Annotations::parse(&a.to_text()).unwrap(), a);
    let objs = a.objects_for_frame(0, 64, 48);
    assert_eq!(objs.len(), 2);
    assert_eq!((objs[1].a1, objs[1].b1, objs[1].a2, objs[1].b2), (0, 8, 15, 18));
    assert!(a.objects_for_frame(3, 64, 48).is_empty());
    assert!(Annotations::parse("0 0 1 1 0 5\n").is_err());
    assert!(Annotations::parse("class 0 a\nclass 0 b\n").is_err());
    assert!(Annotations::parse("0 0 1 1\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn peaks_match_window_scan(seed in any::<u64>(), rows in 1usize..32, cols in 1usize..32, classes in 1usize..3,
                               levels in 2u32..6, threshold in 0.0f64..1.0, top_k in 1usize..20) {
        let hm = heatmap(seed, rows, cols, classes, levels);
        prop_assert_eq!(extract_peaks(&hm, threshold, top_k), scan_peaks(&hm, threshold, top_k));
    }

    #[test]
    fn focal_matches_double_loop(seed in any::<u64>(), rows in 1usize..9, cols in 1usize..9, alpha in 0.5f64..3.0, beta in 1.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pred = Grid::new(rows, cols, 1);
        let mut gt = Grid::new(rows, cols, 1);
        for v in pred.data.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        for v in gt.data.iter_mut() {
            *v = if rng.gen_bool(0.2) { 1.0 } else { rng.gen_range(0.0..1.0) };
        }
        gt.data[rng.gen_range(0..rows * cols)] = 1.0;
        let got = focal_loss(&pred, &gt, alpha, beta).unwrap();
        prop_assert!(got >= 0.0);
        prop_assert!((got - focal_oracle(&pred, &gt, alpha, beta)).abs() <= 1e-10 * got.abs().max(1.0));
        // A perfect prediction (1 at positives, 0 elsewhere) costs nothing up to the log clamp.
        let perfect = gt.map(|y| if y == 1.0 { 1.0 } else { 0.0 });
        prop_assert!(focal_loss(&perfect, &gt, alpha, beta).unwrap() < 1e-6);
    }

    #[test]
    fn boxes_survive_encoding_as_maps(stride in 1usize..9, a1 in 0u32..200, b1 in 0u32..200, w in 1u32..80, h in 1u32..80) {
        let (width, height) = (300usize, 300usize);
        let gt = GtBox { a1: a1 as f64, b1: b1 as f64, a2: (a1 + w) as f64, b2: (b1 + h) as f64 };
        let (rows, cols) = (height.div_ceil(stride), width.div_ceil(stride));
        let (cx, cy) = gt_to_lowres(gt.center(), stride);
        let mut sizes = Grid::new(rows, cols, 2);
        let mut offsets = Grid::new(rows, cols, 2);
        let (sw, sh) = gt.size(stride);
        let (ox, oy) = gt.offset(stride);
        sizes.set(cy, cx, 0, sw);
        sizes.set(cy, cx, 1, sh);
        offsets.set(cy, cx, 0, ox);
        offsets.set(cy, cx, 1, oy);
        let (ls, lo) = size_offset_losses(&sizes, &offsets, &[gt], stride).unwrap();
        prop_assert!(ls.abs() < 1e-12 && lo.abs() < 1e-12);
        let peak = Peak { x: cx, y: cy, class: 0, score: 1.0 };
        let b = assemble_bbox(&peak, &sizes, &offsets, stride, width, height).unwrap();
        prop_assert_eq!(b, PixelBox { a1, b1, a2: a1 + w, b2: b1 + h });
        prop_assert!(0.0 <= ox && ox < 1.0 && 0.0 <= oy && oy < 1.0);
    }

    #[test]
    fn size_and_offset_losses_match_scalar_sums(seed in any::<u64>(), n in 1usize..6, stride in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = (20, 20);
        let mut sizes = Grid::new(rows, cols, 2);
        let mut offsets = Grid::new(rows, cols, 2);
        for v in sizes.data.iter_mut().chain(offsets.data.iter_mut()) {
            *v = rng.gen_range(-3.0..10.0);
        }
        let limit = (rows * stride) as f64;
        let objects: Vec<GtBox> = (0..n)
            .map(|_| {
                let (a1, b1) = (rng.gen_range(0.0..limit - 2.0), rng.gen_range(0.0..limit - 2.0));
                GtBox { a1, b1, a2: rng.gen_range(a1 + 0.5..limit), b2: rng.gen_range(b1 + 0.5..limit) }
            })
            .collect();
        let (mut ls, mut lo) = (0.0, 0.0);
        for o in &objects {
            let (x, y) = ((o.a1 + o.a2) / 2.0 / stride as f64, (o.b1 + o.b2) / 2.0 / stride as f64);
            let (c, r) = (x.floor() as usize, y.floor() as usize);
            ls += (sizes.get(r, c, 0) - (o.a2 - o.a1) / stride as f64).abs() + (sizes.get(r, c, 1) - (o.b2 - o.b1) / stride as f64).abs();
            lo += (offsets.get(r, c, 0) - (x - c as f64)).abs() + (offsets.get(r, c, 1) - (y - r as f64)).abs();
        }
        let (gs, go) = size_offset_losses(&sizes, &offsets, &objects, stride).unwrap();
        prop_assert!((gs - ls / n as f64).abs() < 1e-10);
        prop_assert!((go - lo / n as f64).abs() < 1e-10);
        prop_assert!(gs >= 0.0 && go >= 0.0);
    }

    #[test]
    fn weighted_sum_matches(k in 0.0f64..10.0, s in 0.0f64..10.0, o in 0.0f64..10.0, ls in 0.0f64..2.0, lo in 0.0f64..2.0) {
        prop_assert!((total_parsing_loss(k, s, o, ls, lo) - (k + ls * s + lo * o)).abs() < 1e-12);
    }
}
