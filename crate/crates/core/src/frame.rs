//! Planar 8-bit frames and real-valued plane sets.

use crate::error::Error;

/// Sample layout of a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PixelFormat {
    /// Single luma plane.
    Gray,
    /// Luma plus two chroma planes at half resolution in both directions.
    Yuv420,
    /// Three full-resolution planes (RGB or 4:4:4 YUV).
    Rgb,
}

impl PixelFormat {
    pub fn plane_count(self) -> usize {
        match self {
            PixelFormat::Gray => 1,
            PixelFormat::Yuv420 | PixelFormat::Rgb => 3,
        }
    }

    /// Horizontal/vertical subsampling shift of plane `idx`.
    pub fn plane_shift(self, idx: usize) -> u32 {
        match (self, idx) {
            (PixelFormat::Yuv420, 1 | 2) => 1,
            _ => 0,
        }
    }

    /// Dimensions of plane `idx` for a frame of `width` x `height`.
    pub fn plane_dims(self, idx: usize, width: usize, height: usize) -> (usize, usize) {
        let s = self.plane_shift(idx);
        let round = (1usize << s) - 1;
        ((width + round) >> s, (height + round) >> s)
    }

    pub fn to_u8(self) -> u8 {
        match self {
            PixelFormat::Gray => 0,
            PixelFormat::Yuv420 => 1,
            PixelFormat::Rgb => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(PixelFormat::Gray),
            1 => Some(PixelFormat::Yuv420),
            2 => Some(PixelFormat::Rgb),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PixelFormat::Gray => "gray",
            PixelFormat::Yuv420 => "yuv420",
            PixelFormat::Rgb => "rgb",
        }
    }
}

/// A single row-major plane of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy + Default> Plane<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![T::default(); width * height] }
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "plane data length");
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped into the plane.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Edge-replicating resize to `width` x `height` (only grows or crops).
    pub fn padded(&self, width: usize, height: usize) -> Self {
        let mut out = Self::new(width, height);
        for y in 0..height {
            let sy = y.min(self.height - 1);
            for x in 0..width {
                let sx = x.min(self.width - 1);
                out.data[y * width + x] = self.data[sy * self.width + sx];
            }
        }
        out
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Plane<U> {
        Plane { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// An 8-bit planar picture.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub format: PixelFormat,
    pub width: usize,
    pub height: usize,
    pub planes: Vec<Plane<u8>>,
}

impl Frame {
    /// A frame with every sample set to `value`.
    pub fn filled(format: PixelFormat, width: usize, height: usize, value: u8) -> Self {
        let planes = (0..format.plane_count())
            .map(|i| {
                let (w, h) = format.plane_dims(i, width, height);
                Plane::filled(w, h, value)
            })
            .collect();
        Self { format, width, height, planes }
    }

    pub fn from_planes(format: PixelFormat, width: usize, height: usize, planes: Vec<Plane<u8>>) -> Result<Self, Error> {
        if planes.len() != format.plane_count() {
            return Err(Error::Dimension(format!(
                "{} frame needs {} planes, got {}",
                format.name(),
                format.plane_count(),
                planes.len()
            )));
        }
        for (i, p) in planes.iter().enumerate() {
            let (w, h) = format.plane_dims(i, width, height);
            if p.width != w || p.height != h {
                return Err(Error::Dimension(format!(
                    "plane {i} is {}x{}, expected {w}x{h}",
                    p.width, p.height
                )));
            }
        }
        Ok(Self { format, width, height, planes })
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.format == other.format && self.width == other.width && self.height == other.height
    }

    pub fn sample_count(&self) -> usize {
        self.planes.iter().map(|p| p.data.len()).sum()
    }

    /// Copy of the luma box `[x0, x1) x [y0, y1)`; subsampled planes take
    /// the co-sited samples.
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Frame, Error> {
        if x0 >= x1 || y0 >= y1 || x1 > self.width || y1 > self.height {
            return Err(Error::Dimension(format!("crop {x0},{y0}..{x1},{y1} outside {}x{}", self.width, self.height)));
        }
        let (w, h) = (x1 - x0, y1 - y0);
        let planes = self
            .planes
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let s = self.format.plane_shift(i);
                let (pw, ph) = self.format.plane_dims(i, w, h);
                let (ox, oy) = (x0 >> s, y0 >> s);
                let mut out = Plane::new(pw, ph);
                for y in 0..ph {
                    for x in 0..pw {
                        out.set(x, y, p.get((ox + x).min(p.width - 1), (oy + y).min(p.height - 1)));
                    }
                }
                out
            })
            .collect();
        Frame::from_planes(self.format, w, h, planes)
    }

    /// Real-valued copy of the frame with `offset` added to every sample.
    pub fn to_real(&self, offset: f64) -> PlaneSet {
        PlaneSet {
            format: self.format,
            width: self.width,
            height: self.height,
            planes: self.planes.iter().map(|p| p.map(|v| v as f64 + offset)).collect(),
        }
    }
}

/// Real-valued planes sharing a frame geometry: centered pictures, predictions, residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneSet {
    pub format: PixelFormat,
    pub width: usize,
    pub height: usize,
    pub planes: Vec<Plane<f64>>,
}

impl PlaneSet {
    pub fn zeros(format: PixelFormat, width: usize, height: usize) -> Self {
        let planes = (0..format.plane_count())
            .map(|i| {
                let (w, h) = format.plane_dims(i, width, height);
                Plane::new(w, h)
            })
            .collect();
        Self { format, width, height, planes }
    }

    /// Rounds `self + offset` into an 8-bit frame with saturation.
    pub fn to_frame(&self, offset: f64) -> Frame {
        Frame {
            format: self.format,
            width: self.width,
            height: self.height,
            planes: self.planes.iter().map(|p| p.map(|v| clamp_pixel(v + offset))).collect(),
        }
    }
}

/// Round-half-away-from-zero then saturate to `0..=255`.
#[inline]
pub fn clamp_pixel(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
