use crate::latent::{CellMask, Grid};

/// Mean prediction from the causal neighborhood: the average of the left and
/// upper neighbors in the same channel that are available, or 0 if neither is.
///
/// `available` restricts context to cells coded in the same chunk; pass
/// `None` when every earlier cell of the grid is known.
#[inline]
pub fn causal_predict(plane: &Grid<i32>, available: Option<&CellMask>, row: usize, col: usize, ch: usize) -> f64 {
    let ok = |r: usize, c: usize| available.map_or(true, |m| m.get(r, c));
    let mut sum = 0i64;
    let mut n = 0;
    if col > 0 && ok(row, col - 1) {
        sum += plane.get(row, col - 1, ch) as i64;
        n += 1;
    }
    if row > 0 && ok(row - 1, col) {
        sum += plane.get(row - 1, col, ch) as i64;
        n += 1;
    }
    match n {
        0 => 0.0,
        1 => sum as f64,
        _ => sum as f64 * 0.5,
    }
}
