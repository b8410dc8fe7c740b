//! PNG and PGM/PPM reading and writing.
//!
//! 8-bit samples map to intensities as `v / 255` on load and
//! `round(v · 255)` on save. Masks are single-channel; a stored value above
//! 127 reads as bit 1.

use std::fs;
use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::{HoleMask, KeepMask};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Png,
    Pnm,
}

fn format_of(path: &Path) -> Result<Format> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("png") => Ok(Format::Png),
        Some("pgm" | "ppm" | "pnm") => Ok(Format::Pnm),
        _ => Err(Error::Format {
            what: "image path",
            reason: format!("{} has no .png/.pgm/.ppm extension", path.display()),
        }),
    }
}

/// Raw 8-bit raster: `(height, width, channels, samples)`.
type Raw8 = (usize, usize, usize, Vec<u8>);

fn read_raw(path: &Path) -> Result<Raw8> {
    match format_of(path)? {
        Format::Png => {
            let img = image::open(path).map_err(|source| Error::Codec {
                path: path.into(),
                source,
            })?;
            Ok(dynamic_to_raw(img))
        }
        Format::Pnm => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_pnm(&bytes)
        }
    }
}

fn dynamic_to_raw(img: DynamicImage) -> Raw8 {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        (h, w, 3, img.into_rgb8().into_raw())
    } else {
        (h, w, 1, img.into_luma8().into_raw())
    }
}

fn write_raw(path: &Path, (h, w, c, data): Raw8) -> Result<()> {
    match format_of(path)? {
        Format::Png => {
            let res = if c == 1 {
                GrayImage::from_raw(w as u32, h as u32, data)
                    .expect("buffer size")
                    .save(path)
            } else {
                RgbImage::from_raw(w as u32, h as u32, data)
                    .expect("buffer size")
                    .save(path)
            };
            res.map_err(|source| Error::Codec {
                path: path.into(),
                source,
            })
        }
        Format::Pnm => {
            let magic = if c == 1 { "P2" } else { "P3" };
            let mut out = format!("{magic}\n{w} {h}\n255\n");
            for row in data.chunks(w * c) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            fs::write(path, out).map_err(|e| Error::io(path, e))
        }
    }
}

/// Parses P2/P3 (ASCII) and P5/P6 (binary) netpbm data.
fn parse_pnm(bytes: &[u8]) -> Result<Raw8> {
    let bad = |reason: String| Error::Format {
        what: "netpbm file",
        reason,
    };
    let mut pos = 0;
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(bad("unexpected end of data".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos)?;
    let (channels, ascii) = match magic.as_str() {
        "P2" => (1, true),
        "P3" => (3, true),
        "P5" => (1, false),
        "P6" => (3, false),
        m => return Err(bad(format!("unsupported magic {m}"))),
    };
    let num = |s: String| s.parse::<usize>().map_err(|_| bad(format!("bad number {s:?}")));
    let w = num(token(&mut pos)?)?;
    let h = num(token(&mut pos)?)?;
    let maxval = num(token(&mut pos)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(bad(format!("unsupported maxval {maxval}")));
    }
    let n = w * h * channels;
    let scale = |v: usize| ((v * 255 + maxval / 2) / maxval) as u8;
    let data = if ascii {
        (0..n)
            .map(|_| {
                let v = num(token(&mut pos)?)?;
                if v > maxval {
                    return Err(bad(format!("sample {v} exceeds maxval")));
                }
                Ok(scale(v))
            })
            .collect::<Result<Vec<u8>>>()?
    } else {
        pos += 1;
        let body = bytes
            .get(pos..pos + n)
            .ok_or_else(|| bad("truncated raster".into()))?;
        body.iter().map(|&v| scale(v as usize)).collect()
    };
    Ok((h, w, channels, data))
}

fn to_u8<T: Scalar>(v: T) -> u8 {
    (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn image_from_u8<T: Scalar>(h: usize, w: usize, c: usize, data: &[u8]) -> Result<Image<T>> {
    Image::new(h, w, c, data.iter().map(|&v| T::of(v as f64 / 255.0)).collect())
}

pub fn image_to_u8<T: Scalar>(img: &Image<T>) -> Vec<u8> {
    img.data().iter().map(|&v| to_u8(v)).collect()
}

pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let (h, w, c, data) = read_raw(path.as_ref())?;
    image_from_u8(h, w, c, &data)
}

pub fn save_image<T: Scalar>(img: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    write_raw(
        path.as_ref(),
        (img.height(), img.width(), img.channels(), image_to_u8(img)),
    )
}

fn load_bits(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let (h, w, c, data) = read_raw(path)?;
    // color files are thresholded on their first channel
    let bits = data.chunks_exact(c).map(|px| px[0] > 127).collect();
    Ok((h, w, bits))
}

pub fn load_hole_mask(path: impl AsRef<Path>) -> Result<HoleMask> {
    let (h, w, bits) = load_bits(path.as_ref())?;
    HoleMask::from_bits(h, w, bits)
}

pub fn load_keep_mask(path: impl AsRef<Path>) -> Result<KeepMask> {
    let (h, w, bits) = load_bits(path.as_ref())?;
    KeepMask::from_bits(h, w, bits)
}

fn save_bits(path: &Path, h: usize, w: usize, bits: &[bool]) -> Result<()> {
    let data = bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_raw(path, (h, w, 1, data))
}

pub fn save_hole_mask(mask: &HoleMask, path: impl AsRef<Path>) -> Result<()> {
    save_bits(path.as_ref(), mask.height(), mask.width(), mask.bits())
}

pub fn save_keep_mask(mask: &KeepMask, path: impl AsRef<Path>) -> Result<()> {
    save_bits(path.as_ref(), mask.height(), mask.width(), mask.bits())
}

/// Writes an 8-bit RGB buffer (used for heatmaps).
pub(crate) fn save_rgb8(path: &Path, h: usize, w: usize, data: Vec<u8>) -> Result<()> {
    write_raw(path, (h, w, 3, data))
}
