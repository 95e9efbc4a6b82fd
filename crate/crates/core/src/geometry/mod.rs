//! Image-space bookkeeping: pad-to-square, normalized-to-pixel mapping and
//! ROI crop-and-zoom.
//!
//! All ROI boxes are interpreted on the padded square, i.e. the frame the
//! model sees after preprocessing.

mod io;

pub use io::{decode_ppm, encode_ppm, read_raster, write_raster};

use rayon::prelude::*;
use thiserror::Error;

use crate::roi::RoiBox;

/// Model input side length used when none is given.
pub const DEFAULT_RESOLUTION: usize = 336;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("malformed image data: {0}")]
    Format(String),
    #[error("unsupported image file `{0}`")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Codec(#[from] image::ImageError),
}

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidRaster(format!(
                "{width}x{height} has no pixels"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(GeometryError::InvalidRaster(format!(
                "{channels} channels (expected 1 or 3)"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(channels))
            .ok_or_else(|| GeometryError::InvalidRaster("dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(GeometryError::InvalidRaster(format!(
                "{} samples for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: u8,
    ) -> Result<Self, GeometryError> {
        let len = width.saturating_mul(height).saturating_mul(channels);
        Self::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    fn row(&self, y: usize) -> &[u8] {
        let stride = self.width * self.channels;
        &self.data[y * stride..(y + 1) * stride]
    }
}

/// Placement of an image inside its padded square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SquareTransform {
    pub side: usize,
    pub offset_x: usize,
    pub offset_y: usize,
    pub fill: u8,
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

/// Centers `img` on a `max(w, h)` square filled with `fill`.
pub fn pad_to_square(img: &Raster, fill: u8) -> (Raster, SquareTransform) {
    let side = img.width.max(img.height);
    let t = SquareTransform {
        side,
        offset_x: (side - img.width) / 2,
        offset_y: (side - img.height) / 2,
        fill,
    };
    if side == img.width && side == img.height {
        return (img.clone(), t);
    }
    let ch = img.channels;
    let mut data = vec![fill; side * side * ch];
    for y in 0..img.height {
        let dst = ((y + t.offset_y) * side + t.offset_x) * ch;
        data[dst..dst + img.width * ch].copy_from_slice(img.row(y));
    }
    let padded = Raster {
        width: side,
        height: side,
        channels: ch,
        data,
    };
    (padded, t)
}

fn round_half_up(v: f64) -> usize {
    (v + 0.5).floor().max(0.0) as usize
}

/// Pixel extent of `b` on the padded square. Each axis keeps at least one
/// pixel.
pub fn normalized_to_pixels(b: &RoiBox, t: &SquareTransform) -> PixelRect {
    let side = t.side as f64;
    let axis = |lo: f64, hi: f64| {
        let mut a = round_half_up(lo * side).min(t.side);
        let mut z = round_half_up(hi * side).min(t.side);
        if z <= a {
            if a < t.side {
                z = a + 1;
            } else {
                a = t.side - 1;
                z = t.side;
            }
        }
        (a, z)
    };
    let (x0, x1) = axis(b.w0(), b.w1());
    let (y0, y1) = axis(b.h0(), b.h1());
    PixelRect { x0, x1, y0, y1 }
}

/// Copies a sub-rectangle out of `img`; the rectangle must lie inside it.
pub fn extract(img: &Raster, rect: &PixelRect) -> Result<Raster, GeometryError> {
    if rect.x0 >= rect.x1 || rect.y0 >= rect.y1 || rect.x1 > img.width || rect.y1 > img.height {
        return Err(GeometryError::Parameter(format!(
            "rect {rect:?} does not fit a {}x{} raster",
            img.width, img.height
        )));
    }
    let ch = img.channels;
    let mut data = Vec::with_capacity(rect.width() * rect.height() * ch);
    for y in rect.y0..rect.y1 {
        data.extend_from_slice(&img.row(y)[rect.x0 * ch..rect.x1 * ch]);
    }
    Raster::new(rect.width(), rect.height(), ch, data)
}

/// Bilinear resampling with half-pixel centers and edge clamping. Output
/// samples are rounded half up.
pub fn resize_bilinear(src: &Raster, width: usize, height: usize) -> Result<Raster, GeometryError> {
    if width == 0 || height == 0 {
        return Err(GeometryError::Parameter(format!(
            "target size {width}x{height} is empty"
        )));
    }
    let ch = src.channels;
    let taps = |dst: usize, src_len: usize| -> Vec<(usize, usize, f64)> {
        let scale = src_len as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(src_len - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let xs = taps(width, src.width);
    let ys = taps(height, src.height);

    let mut data = vec![0u8; width * height * ch];
    data.par_chunks_mut(width * ch)
        .zip(ys.par_iter())
        .for_each(|(out_row, &(y0, y1, fy))| {
            let (r0, r1) = (src.row(y0), src.row(y1));
            for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                for c in 0..ch {
                    let p = |row: &[u8], xi: usize| f64::from(row[xi * ch + c]);
                    let top = (1.0 - fx) * p(r0, x0) + fx * p(r0, x1);
                    let bottom = (1.0 - fx) * p(r1, x0) + fx * p(r1, x1);
                    let v = (1.0 - fy) * top + fy * bottom;
                    out_row[x * ch + c] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
                }
            }
        });
    Raster::new(width, height, ch, data)
}

/// Crop-and-zoom: pad `img` to square, cut out `b`, pad the cut to square
/// and resample it to `resolution × resolution`.
pub fn crop_roi(
    img: &Raster,
    b: &RoiBox,
    resolution: usize,
    fill: u8,
) -> Result<Raster, GeometryError> {
    if resolution == 0 {
        return Err(GeometryError::Parameter("resolution must be >= 1".into()));
    }
    let (square, t) = pad_to_square(img, fill);
    let rect = normalized_to_pixels(b, &t);
    let cut = extract(&square, &rect)?;
    let (cut_square, _) = pad_to_square(&cut, fill);
    resize_bilinear(&cut_square, resolution, resolution)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize, ch: usize) -> Raster {
        let data = (0..w * h * ch).map(|i| (i * 7 % 251) as u8).collect();
        Raster::new(w, h, ch, data).unwrap()
    }

    #[test]
    fn raster_rejects_bad_shapes() {
        assert!(Raster::new(0, 1, 1, vec![]).is_err());
        assert!(Raster::new(2, 2, 2, vec![0; 8]).is_err());
        assert!(Raster::new(2, 2, 3, vec![0; 11]).is_err());
    }

    #[test]
    fn pad_landscape_and_portrait() {
        let (sq, t) = pad_to_square(&gradient(640, 480, 3), 0);
        assert_eq!((sq.width(), sq.height()), (640, 640));
        assert_eq!((t.offset_x, t.offset_y), (0, 80));

        let (sq, t) = pad_to_square(&gradient(480, 640, 1), 9);
        assert_eq!((sq.width(), sq.height()), (640, 640));
        assert_eq!((t.offset_x, t.offset_y), (80, 0));
        assert_eq!(sq.pixel(0, 0), &[9]);
        assert_eq!(sq.pixel(80, 0), gradient(480, 640, 1).pixel(0, 0));
    }

    #[test]
    fn pad_square_is_identity() {
        let img = gradient(5, 5, 3);
        let (sq, t) = pad_to_square(&img, 255);
        assert_eq!(sq, img);
        assert_eq!((t.offset_x, t.offset_y, t.side), (0, 0, 5));
    }

    #[test]
    fn pad_odd_difference_floors_offset() {
        let img = gradient(4, 1, 1);
        let (sq, t) = pad_to_square(&img, 0);
        assert_eq!(t.offset_y, 1);
        assert_eq!(sq.data()[4..8], img.data()[..]);
    }

    fn transform(side: usize) -> SquareTransform {
        SquareTransform {
            side,
            offset_x: 0,
            offset_y: 0,
            fill: 0,
        }
    }

    #[test]
    fn pixel_mapping_examples() {
        let b = RoiBox::new(0.25, 0.75, 0.25, 0.75).unwrap();
        assert_eq!(
            normalized_to_pixels(&b, &transform(640)),
            PixelRect {
                x0: 160,
                x1: 480,
                y0: 160,
                y1: 480
            }
        );
        assert_eq!(
            normalized_to_pixels(&RoiBox::FULL, &transform(640)),
            PixelRect {
                x0: 0,
                x1: 640,
                y0: 0,
                y1: 640
            }
        );
        let thin = RoiBox::new(0.5, 0.501, 0.2, 0.4).unwrap();
        let r = normalized_to_pixels(&thin, &transform(336));
        assert_eq!((r.x0, r.x1), (168, 169));
    }

    #[test]
    fn pixel_mapping_collapse_at_far_edge() {
        let b = RoiBox::new(0.999, 1.0, 0.0, 1.0).unwrap();
        let r = normalized_to_pixels(&b, &transform(10));
        assert_eq!((r.x0, r.x1), (9, 10));
    }

    #[test]
    fn crop_full_box_identity() {
        let img = gradient(12, 12, 3);
        assert_eq!(crop_roi(&img, &RoiBox::FULL, 12, 0).unwrap(), img);
    }

    #[test]
    fn crop_uniform_stays_uniform() {
        let img = Raster::filled(37, 21, 3, 131).unwrap();
        let b = RoiBox::new(0.1, 0.63, 0.3, 0.42).unwrap();
        let out = crop_roi(&img, &b, 50, 131).unwrap();
        assert!(out.data().iter().all(|&v| v == 131));
        assert_eq!((out.width(), out.height()), (50, 50));
    }

    #[test]
    fn crop_rejects_zero_resolution() {
        let img = gradient(4, 4, 1);
        assert!(crop_roi(&img, &RoiBox::FULL, 0, 0).is_err());
    }

    #[test]
    fn extract_bounds_checked() {
        let img = gradient(4, 4, 1);
        let r = PixelRect {
            x0: 2,
            x1: 5,
            y0: 0,
            y1: 1,
        };
        assert!(extract(&img, &r).is_err());
    }
}
