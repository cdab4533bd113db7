//! Reading and writing raw video: Y4M, numbered PNG sequences, decode masks
//! and motion-field dumps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::{clamp_pixel, Frame, PixelFormat, Plane};
use crate::intercode::MotionField;

fn y4m_err(e: y4m::Error) -> Error {
    match e {
        y4m::Error::IoError(e) => Error::Io(e),
        other => Error::Input(format!("y4m: {other:?}")),
    }
}

pub fn read_y4m(path: &Path) -> Result<Vec<Frame>> {
    let file = BufReader::new(File::open(path)?);
    let mut dec = y4m::Decoder::new(file).map_err(y4m_err)?;
    let (w, h) = (dec.get_width(), dec.get_height());
    let format = match dec.get_colorspace() {
        y4m::Colorspace::Cmono => PixelFormat::Gray,
        y4m::Colorspace::C420 | y4m::Colorspace::C420jpeg | y4m::Colorspace::C420paldv | y4m::Colorspace::C420mpeg2 => PixelFormat::Yuv420,
        y4m::Colorspace::C444 => PixelFormat::Rgb,
        other => return Err(Error::Input(format!("unsupported y4m colorspace {other:?}; need 8-bit mono, 4:2:0 or 4:4:4"))),
    };
    let mut frames = Vec::new();
    loop {
        let f = match dec.read_frame() {
            Ok(f) => f,
            Err(y4m::Error::EOF) => break,
            Err(e) => return Err(y4m_err(e)),
        };
        let raw = [f.get_y_plane(), f.get_u_plane(), f.get_v_plane()];
        let planes = (0..format.plane_count())
            .map(|i| {
                let (pw, ph) = format.plane_dims(i, w, h);
                Plane::from_vec(pw, ph, raw[i].to_vec())
            })
            .collect();
        frames.push(Frame::from_planes(format, w, h, planes)?);
    }
    if frames.is_empty() {
        return Err(Error::Input(format!("{} holds no frames", path.display())));
    }
    Ok(frames)
}

pub fn write_y4m(path: &Path, frames: &[Frame]) -> Result<()> {
    let first = frames.first().ok_or_else(|| Error::Input("no frames to write".into()))?;
    let cs = match first.format {
        PixelFormat::Gray => y4m::Colorspace::Cmono,
        PixelFormat::Yuv420 => y4m::Colorspace::C420jpeg,
        PixelFormat::Rgb => y4m::Colorspace::C444,
    };
    let out = BufWriter::new(File::create(path)?);
    let mut enc = y4m::EncoderBuilder::new(first.width, first.height, y4m::Ratio::new(25, 1))
        .with_colorspace(cs)
        .write_header(out)
        .map_err(y4m_err)?;
    for f in frames {
        if !f.same_shape(first) {
            return Err(Error::Dimension("frames differ in shape".into()));
        }
        let empty: &[u8] = &[];
        let planes = match f.format {
            PixelFormat::Gray => [&f.planes[0].data[..], empty, empty],
            _ => [&f.planes[0].data[..], &f.planes[1].data[..], &f.planes[2].data[..]],
        };
        enc.write_frame(&y4m::Frame::new(planes, None)).map_err(y4m_err)?;
    }
    Ok(())
}

fn rgb_to_yuv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    (y, 128.0 + 0.564 * (b - y), 128.0 + 0.713 * (r - y))
}

fn yuv_to_rgb(y: f64, u: f64, v: f64) -> [u8; 3] {
    let (u, v) = (u - 128.0, v - 128.0);
    [clamp_pixel(y + 1.403 * v), clamp_pixel(y - 0.344 * u - 0.714 * v), clamp_pixel(y + 1.773 * u)]
}

/// Converts a decoded image to a frame: grayscale images stay single-plane,
/// colour images become 4:2:0 (BT.601, full range, 2x2 chroma averaging).
pub fn image_to_frame(img: &image::DynamicImage) -> Result<Frame> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if matches!(img.color(), image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16) {
        let l = img.to_luma8();
        return Frame::from_planes(PixelFormat::Gray, w, h, vec![Plane::from_vec(w, h, l.into_raw())]);
    }
    let rgb = img.to_rgb8();
    let mut f = Frame::filled(PixelFormat::Yuv420, w, h, 0);
    let (cw, ch) = PixelFormat::Yuv420.plane_dims(1, w, h);
    let mut acc = vec![(0.0, 0.0, 0u32); cw * ch];
    for (x, y, p) in rgb.enumerate_pixels() {
        let (yy, u, v) = rgb_to_yuv(p[0] as f64, p[1] as f64, p[2] as f64);
        f.planes[0].set(x as usize, y as usize, clamp_pixel(yy));
        let a = &mut acc[(y as usize / 2) * cw + x as usize / 2];
        a.0 += u;
        a.1 += v;
        a.2 += 1;
    }
    for (i, (u, v, n)) in acc.into_iter().enumerate() {
        f.planes[1].data[i] = clamp_pixel(u / n as f64);
        f.planes[2].data[i] = clamp_pixel(v / n as f64);
    }
    Ok(f)
}

/// RGB (or luma) image of a frame. 4:2:0 chroma is upsampled by replication;
/// `Rgb` frames are written as-is.
pub fn frame_to_image(f: &Frame) -> image::DynamicImage {
    let (w, h) = (f.width as u32, f.height as u32);
    match f.format {
        PixelFormat::Gray => image::DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, f.planes[0].data.clone()).unwrap()),
        PixelFormat::Rgb => image::DynamicImage::ImageRgb8(image::RgbImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as usize, y as usize);
            image::Rgb([f.planes[0].get(x, y), f.planes[1].get(x, y), f.planes[2].get(x, y)])
        })),
        PixelFormat::Yuv420 => image::DynamicImage::ImageRgb8(image::RgbImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as usize, y as usize);
            image::Rgb(yuv_to_rgb(f.planes[0].get(x, y) as f64, f.planes[1].get(x / 2, y / 2) as f64, f.planes[2].get(x / 2, y / 2) as f64))
        })),
    }
}

fn image_err(e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(e) => Error::Io(e),
        other => Error::Input(other.to_string()),
    }
}

pub fn write_png(path: &Path, f: &Frame) -> Result<()> {
    frame_to_image(f).save_with_format(path, image::ImageFormat::Png).map_err(image_err)
}

/// Writes a decode mask: undecoded 0, decoded 255, filled 128.
pub fn write_mask_png(path: &Path, mask: &Plane<u8>) -> Result<()> {
    let data = mask.data.iter().map(|&s| [0u8, 255, 128].get(s as usize).copied().unwrap_or(0)).collect();
    let img = image::GrayImage::from_raw(mask.width as u32, mask.height as u32, data).unwrap();
    img.save_with_format(path, image::ImageFormat::Png).map_err(image_err)
}

/// Expands a printf-style `%d` / `%0Nd` pattern for index `i`.
fn expand_pattern(pattern: &str, i: usize) -> Option<String> {
    let start = pattern.find('%')?;
    let rest = &pattern[start + 1..];
    let end = rest.find('d')?;
    let spec = &rest[..end];
    let width = if spec.is_empty() { 0 } else { spec.trim_start_matches('0').parse().ok()? };
    Some(format!("{}{:0width$}{}", &pattern[..start], i, &rest[end + 1..], width = width))
}

/// Paths of a numbered sequence: either a directory (all `.png` files in
/// name order) or a `%d`/`%0Nd` pattern counted up from 0 or 1.
pub fn sequence_paths(spec: &str) -> Result<Vec<PathBuf>> {
    let p = Path::new(spec);
    if p.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(p)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|q| q.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect();
        v.sort();
        return Ok(v);
    }
    let first = expand_pattern(spec, 0).ok_or_else(|| Error::Input(format!("'{spec}' is neither a directory nor a %d pattern")))?;
    let start = if Path::new(&first).exists() { 0 } else { 1 };
    let mut v = Vec::new();
    while let Some(q) = expand_pattern(spec, start + v.len()).map(PathBuf::from).filter(|q| q.exists()) {
        v.push(q);
    }
    Ok(v)
}

pub fn read_image_sequence(spec: &str) -> Result<Vec<Frame>> {
    let paths = sequence_paths(spec)?;
    if paths.is_empty() {
        return Err(Error::Input(format!("no images match '{spec}'")));
    }
    let frames = paths
        .iter()
        .map(|p| image_to_frame(&image::open(p).map_err(image_err)?))
        .collect::<Result<Vec<_>>>()?;
    if frames.iter().any(|f| !f.same_shape(&frames[0])) {
        return Err(Error::Dimension("images of the sequence differ in size or colour".into()));
    }
    Ok(frames)
}

/// Loads `.y4m` files directly and anything else as an image sequence.
pub fn load_video(spec: &str) -> Result<Vec<Frame>> {
    if spec.to_ascii_lowercase().ends_with(".y4m") {
        read_y4m(Path::new(spec))
    } else {
        read_image_sequence(spec)
    }
}

pub const MOTION_MAGIC: [u8; 4] = *b"SSMF";

/// Motion-field dump: magic `SSMF`, `u32` field count, then per field a `u32`
/// frame index, `u16` block rows, `u16` block columns, `u8` block size and
/// `rows * cols` pairs of `i16` `(dx, dy)` in quarter pels, row-major.
/// Little-endian throughout.
pub fn write_motion_fields<W: Write>(mut w: W, fields: &[(u32, MotionField)]) -> Result<()> {
    w.write_all(&MOTION_MAGIC)?;
    w.write_all(&(fields.len() as u32).to_le_bytes())?;
    for (fi, f) in fields {
        w.write_all(&fi.to_le_bytes())?;
        let dims = |v: usize| u16::try_from(v).map_err(|_| Error::Capacity(format!("{v} motion blocks")));
        w.write_all(&dims(f.rows)?.to_le_bytes())?;
        w.write_all(&dims(f.cols)?.to_le_bytes())?;
        w.write_all(&[u8::try_from(f.block).map_err(|_| Error::Capacity("motion block size".into()))?])?;
        for v in &f.vectors {
            for c in v {
                let c = i16::try_from(*c).map_err(|_| Error::Capacity(format!("motion component {c}")))?;
                w.write_all(&c.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_motion_fields(bytes: &[u8]) -> Result<Vec<(u32, MotionField)>> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| Error::Input(format!("motion dump truncated at byte {pos}")))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MOTION_MAGIC {
        return Err(Error::Input("not a motion-field dump".into()));
    }
    let n = u32::from_le_bytes(take(4)?.try_into().unwrap());
    let mut out = Vec::new();
    for _ in 0..n {
        let fi = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let rows = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let cols = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let block = take(1)?[0] as usize;
        let raw = take(rows * cols * 4)?;
        let vectors = raw
            .chunks_exact(4)
            .map(|c| [i16::from_le_bytes([c[0], c[1]]) as i32, i16::from_le_bytes([c[2], c[3]]) as i32])
            .collect();
        out.push((fi, MotionField { rows, cols, block, vectors }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_expansion() {
        assert_eq!(expand_pattern("f%04d.png", 7).unwrap(), "f0007.png");
        assert_eq!(expand_pattern("f%d.png", 12).unwrap(), "f12.png");
        assert!(expand_pattern("plain.png", 1).is_none());
    }

    #[test]
    fn motion_dump_roundtrip() {
        let mut f = MotionField::zeros(32, 16, 8);
        f.set(1, 2, [-5, 17]);
        let mut buf = Vec::new();
        write_motion_fields(&mut buf, &[(3, f.clone())]).unwrap();
        assert_eq!(read_motion_fields(&buf).unwrap(), vec![(3, f)]);
        assert!(read_motion_fields(&buf[..buf.len() - 1]).is_err());
    }
}
