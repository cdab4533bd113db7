//! Cell grids: `rows x cols` latent cells, each holding `channels` values.

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    /// Cell-major storage: `data[(row * cols + col) * channels + ch]`.
    pub data: Vec<T>,
}

/// Quantized latent coefficients.
pub type LatentGrid = Grid<i32>;

impl<T: Copy + Default> Grid<T> {
    pub fn new(rows: usize, cols: usize, channels: usize) -> Self {
        Self { rows, cols, channels, data: vec![T::default(); rows * cols * channels] }
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.cols + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> T {
        self.data[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: T) {
        let i = self.index(row, col, ch);
        self.data[i] = v;
    }

    pub fn cell(&self, row: usize, col: usize) -> &[T] {
        let i = self.index(row, col, 0);
        &self.data[i..i + self.channels]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [T] {
        let i = self.index(row, col, 0);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.channels == other.channels
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid { rows: self.rows, cols: self.cols, channels: self.channels, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// Per-cell flag map over a `rows x cols` grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellMask {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<bool>,
}

impl CellMask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, bits: vec![false; rows * cols] }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self { rows, cols, bits: vec![true; rows * cols] }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.bits[row * self.cols + col] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Member cells in row-major order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter(|&(r, c)| self.get(r, c))
            .collect()
    }
}
