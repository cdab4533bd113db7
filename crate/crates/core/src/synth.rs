//! Procedural test clips.
//!
//! The bundled clip is a 352x288 4:2:0 sequence: a textured background under
//! a slow horizontal pan, with one textured object crossing it. Everything is
//! derived from a fixed seed, so the clip is identical on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::{Frame, PixelFormat, Plane};
use crate::semantics::{Annotation, Annotations};

pub const BUNDLED_WIDTH: usize = 352;
pub const BUNDLED_HEIGHT: usize = 288;
pub const BUNDLED_FRAMES: usize = 32;
pub const BUNDLED_SEED: u64 = 0x5356_4331;

/// Settings for a generated clip.
#[derive(Clone, Copy, Debug)]
pub struct ClipSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    /// Background pan in quarter pels per frame.
    pub pan: i32,
    /// Object box size in pixels.
    pub object: (usize, usize),
    /// Object motion in whole pixels per frame.
    pub object_velocity: (i32, i32),
    pub noise: u8,
}

impl ClipSpec {
    pub fn bundled() -> Self {
        Self {
            width: BUNDLED_WIDTH,
            height: BUNDLED_HEIGHT,
            frames: BUNDLED_FRAMES,
            seed: BUNDLED_SEED,
            pan: 4,
            object: (80, 112),
            object_velocity: (5, 1),
            noise: 3,
        }
    }
}

/// Smooth pseudo-random texture: a sum of a few sinusoids with seeded
/// frequencies and phases.
struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
    base: f64,
}

impl Texture {
    fn new(rng: &mut ChaCha8Rng, base: f64, amp: f64, n: usize) -> Self {
        let waves = (0..n)
            .map(|_| {
                let a = amp / n as f64 * rng.gen_range(0.6..1.4);
                (rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25), rng.gen_range(0.0..6.28), a)
            })
            .collect();
        Self { waves, base }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.base + self.waves.iter().map(|&(fx, fy, ph, a)| a * (fx * x + fy * y + ph).sin()).sum::<f64>()
    }
}

struct Scene {
    bg: [Texture; 3],
    obj: [Texture; 3],
    blocks: Vec<(f64, f64, f64, f64, [f64; 3])>,
}

impl Scene {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let bg = [Texture::new(rng, 120.0, 90.0, 6), Texture::new(rng, 128.0, 30.0, 3), Texture::new(rng, 128.0, 30.0, 3)];
        let obj = [Texture::new(rng, 150.0, 70.0, 5), Texture::new(rng, 100.0, 25.0, 2), Texture::new(rng, 170.0, 25.0, 2)];
        let blocks = (0..10)
            .map(|_| {
                let x = rng.gen_range(0.0..500.0);
                let y = rng.gen_range(0.0..260.0);
                (x, y, rng.gen_range(20.0..70.0), rng.gen_range(20.0..90.0), [rng.gen_range(-50.0..50.0), rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)])
            })
            .collect();
        Self { bg, obj, blocks }
    }

    /// Background sample of plane `p` at scene position `(x, y)` in luma units.
    fn background(&self, p: usize, x: f64, y: f64) -> f64 {
        let mut v = self.bg[p].at(x, y);
        for &(bx, by, w, h, d) in &self.blocks {
            if x >= bx && x < bx + w && y >= by && y < by + h {
                v += d[p];
            }
        }
        v
    }
}

/// Generates a clip and its per-frame object annotation (class 0, "person").
pub fn generate(spec: &ClipSpec) -> (Vec<Frame>, Annotations) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scene = Scene::new(&mut rng);
    let (ow, oh) = spec.object;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut ann = Annotations::default();
    ann.class_names.insert(0, "person".into());
    for t in 0..spec.frames {
        let pan = spec.pan as f64 * t as f64 / 4.0;
        let ox = (spec.width as i64 / 8 + spec.object_velocity.0 as i64 * t as i64).clamp(0, (spec.width - ow) as i64);
        let oy = (spec.height as i64 / 4 + spec.object_velocity.1 as i64 * t as i64).clamp(0, (spec.height - oh) as i64);
        let mut f = Frame::filled(PixelFormat::Yuv420, spec.width, spec.height, 0);
        for (pi, plane) in f.planes.iter_mut().enumerate() {
            let s = 1usize << PixelFormat::Yuv420.plane_shift(pi);
            fill_plane(plane, s, |x, y| {
                let inside = x >= ox as f64 && x < (ox as usize + ow) as f64 && y >= oy as f64 && y < (oy as usize + oh) as f64;
                if inside {
                    // Rounded-corner silhouette inside the box.
                    let (cx, cy) = ((x - ox as f64) / ow as f64 - 0.5, (y - oy as f64) / oh as f64 - 0.5);
                    if cx * cx + cy * cy < 0.3 {
                        return scene.obj[pi].at(x - ox as f64, y - oy as f64);
                    }
                }
                scene.background(pi, x + pan, y)
            });
            for v in &mut plane.data {
                let n = rng.gen_range(-(spec.noise as i32)..=spec.noise as i32);
                *v = (*v as i32 + n).clamp(0, 255) as u8;
            }
        }
        frames.push(f);
        ann.records.push(Annotation { frame: t as u32, class_id: 0, x: ox, y: oy, w: ow as i64, h: oh as i64 });
    }
    (frames, ann)
}

fn fill_plane(plane: &mut Plane<u8>, scale: usize, f: impl Fn(f64, f64) -> f64) {
    let s = scale as f64;
    for y in 0..plane.height {
        for x in 0..plane.width {
            let v = f((x as f64 + 0.5) * s - 0.5, (y as f64 + 0.5) * s - 0.5);
            plane.set(x, y, v.round().clamp(0.0, 255.0) as u8);
        }
    }
}

/// The bundled 32-frame 352x288 clip with its annotation.
pub fn bundled_clip() -> (Vec<Frame>, Annotations) {
    generate(&ClipSpec::bundled())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_clip_shape() {
        let (frames, ann) = bundled_clip();
        assert_eq!(frames.len(), 32);
        assert_eq!((frames[0].width, frames[0].height), (352, 288));
        let o = &ann.objects_for_frame(0, 352, 288)[0];
        assert!(o.area() * 4 <= 352 * 288);
        assert_ne!(frames[0], frames[1]);
        assert_eq!(generate(&ClipSpec::bundled()).0[5], frames[5]);
    }
}
