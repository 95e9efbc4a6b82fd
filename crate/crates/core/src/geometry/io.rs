//! Raster file I/O: binary PPM/PGM handled here, PNG through the `image` codec.

use std::fs;
use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat};

use super::{GeometryError, Raster};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Writes `P5` for gray rasters and `P6` for RGB, maxval 255.
pub fn encode_ppm(img: &Raster) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, GeometryError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                GeometryError::Format(format!("missing or invalid {what} at byte {start}"))
            })
    }
}

/// Parses a binary `P5`/`P6` image with maxval 255. Bytes after the pixel
/// data are ignored.
pub fn decode_ppm(bytes: &[u8]) -> Result<Raster, GeometryError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(GeometryError::Format("not a binary PGM/PPM (P5/P6)".into())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(GeometryError::Format(format!(
            "maxval {maxval} unsupported (only 255)"
        )));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(GeometryError::Format(
                "header not terminated by whitespace".into(),
            ))
        }
    }
    let len = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(channels))
        .ok_or_else(|| GeometryError::Format("dimensions overflow".into()))?;
    let end = cur
        .pos
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| {
            GeometryError::Format(format!(
                "pixel data truncated: need {len} bytes after offset {}, have {}",
                cur.pos,
                bytes.len() - cur.pos
            ))
        })?;
    Raster::new(width, height, channels, bytes[cur.pos..end].to_vec())
}

fn from_dynamic(img: DynamicImage) -> Result<Raster, GeometryError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::L16 | ColorType::La16 => {
            Raster::new(w, h, 1, img.into_luma8().into_raw())
        }
        _ => Raster::new(w, h, 3, img.into_rgb8().into_raw()),
    }
}

/// Loads a PPM/PGM or PNG file, chosen by content signature.
pub fn read_raster(path: &Path) -> Result<Raster, GeometryError> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_ppm(&bytes)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        from_dynamic(image::load_from_memory_with_format(
            &bytes,
            ImageFormat::Png,
        )?)
    } else {
        Err(GeometryError::Unsupported(path.display().to_string()))
    }
}

/// Saves by extension: `.png`, or `.ppm`/`.pgm`/`.pnm`.
pub fn write_raster(path: &Path, img: &Raster) -> Result<(), GeometryError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => {
            let color = if img.channels() == 1 {
                image::ExtendedColorType::L8
            } else {
                image::ExtendedColorType::Rgb8
            };
            image::save_buffer_with_format(
                path,
                img.data(),
                img.width() as u32,
                img.height() as u32,
                color,
                ImageFormat::Png,
            )?;
            Ok(())
        }
        Some("ppm" | "pgm" | "pnm") => Ok(fs::write(path, encode_ppm(img))?),
        _ => Err(GeometryError::Unsupported(path.display().to_string())),
    }
}
