use crate::latent::Grid;

/// Integer symbols on a `rows x cols x channels` grid with a declared bound.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolPlane {
    pub grid: Grid<i32>,
    /// Every value lies in `[-bound, bound]`.
    pub bound: i32,
}

impl SymbolPlane {
    /// Wraps `grid`, taking the tightest bound that covers its values.
    pub fn tight(grid: Grid<i32>) -> Self {
        let bound = grid.data.iter().map(|v| v.abs()).max().unwrap_or(0);
        Self { grid, bound }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Quantized {
    pub plane: SymbolPlane,
    /// Number of values that hit the bound.
    pub clamped: usize,
}

/// Element-wise `round(x / step)` (half away from zero), clamped to `[-bound, bound]`.
pub fn quantize(x: &Grid<f64>, step: f64, bound: i32) -> Quantized {
    let mut clamped = 0;
    let data = x
        .data
        .iter()
        .map(|&v| {
            let q = (v / step).round();
            if q > bound as f64 {
                clamped += 1;
                bound
            } else if q < -bound as f64 {
                clamped += 1;
                -bound
            } else {
                q as i32
            }
        })
        .collect();
    Quantized {
        plane: SymbolPlane {
            grid: Grid { rows: x.rows, cols: x.cols, channels: x.channels, data },
            bound,
        },
        clamped,
    }
}

pub fn dequantize(q: &Grid<i32>, step: f64) -> Grid<f64> {
    Grid { rows: q.rows, cols: q.cols, channels: q.channels, data: q.data.iter().map(|&v| v as f64 * step).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn single(v: f64) -> i32 {
        let g = Grid { rows: 1, cols: 1, channels: 1, data: vec![v] };
        quantize(&g, 1.0, 100).plane.grid.data[0]
    }

    #[test]
    fn rounding_definition() {
        assert_eq!(single(0.4), 0);
        assert_eq!(single(0.5), 1);
        assert_eq!(single(-1.5), -2);
        assert_eq!(single(-0.4), 0);
    }

    #[test]
    fn zeros_stay_zero() {
        let g = Grid::<f64>::new(3, 4, 5);
        let q = quantize(&g, 4.0, 8);
        assert!(q.plane.grid.data.iter().all(|&v| v == 0));
        assert_eq!(q.clamped, 0);
    }

    #[test]
    fn matches_scalar_loop_and_reports_clamps() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut g = Grid::<f64>::new(8, 8, 4);
        for v in &mut g.data {
            *v = rng.gen_range(-3.0..3.0);
        }
        let q = quantize(&g, 1.0, 8);
        assert_eq!(q.clamped, 0);
        for (i, &x) in g.data.iter().enumerate() {
            let reference = if x >= 0.0 { (x + 0.5).floor() } else { -((-x + 0.5).floor()) };
            assert_eq!(q.plane.grid.data[i], reference as i32);
        }
        let q = quantize(&g, 0.25, 8);
        let expect = g.data.iter().filter(|&&x| (x / 0.25).round().abs() > 8.0).count();
        assert_eq!(q.clamped, expect);
        assert!(q.plane.grid.data.iter().all(|v| v.abs() <= 8));
    }
}
