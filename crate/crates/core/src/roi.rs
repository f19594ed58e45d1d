//! Region-of-interest cropping.

use thiserror::Error;

use crate::imagecore::{BinaryImage, GrayImage, TemplatePair};

pub const DEFAULT_ROI_WIDTH: usize = 220;
pub const DEFAULT_ROI_HEIGHT: usize = 110;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RoiError {
    #[error("ROI dimensions must be at least 1x1, got {width}x{height}")]
    EmptyRoi { width: usize, height: usize },
    #[error(
        "ROI {width}x{height} at ({offset_x}, {offset_y}) exceeds {source_width}x{source_height} source"
    )]
    OutOfBounds {
        width: usize,
        height: usize,
        offset_x: usize,
        offset_y: usize,
        source_width: usize,
        source_height: usize,
    },
}

/// Crop rectangle. An offset of `None` centers the crop on that axis
/// (rounding toward the top-left).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoiSpec {
    pub width: usize,
    pub height: usize,
    pub offset_x: Option<usize>,
    pub offset_y: Option<usize>,
}

impl Default for RoiSpec {
    fn default() -> Self {
        RoiSpec::centered(DEFAULT_ROI_WIDTH, DEFAULT_ROI_HEIGHT)
    }
}

impl RoiSpec {
    pub fn centered(width: usize, height: usize) -> Self {
        RoiSpec {
            width,
            height,
            offset_x: None,
            offset_y: None,
        }
    }

    pub fn at(width: usize, height: usize, offset_x: usize, offset_y: usize) -> Self {
        RoiSpec {
            width,
            height,
            offset_x: Some(offset_x),
            offset_y: Some(offset_y),
        }
    }

    /// Concrete `(offset_x, offset_y)` for a source of the given size.
    pub fn resolve(
        &self,
        source_width: usize,
        source_height: usize,
    ) -> Result<(usize, usize), RoiError> {
        if self.width == 0 || self.height == 0 {
            return Err(RoiError::EmptyRoi {
                width: self.width,
                height: self.height,
            });
        }
        let out_of_bounds = |x: usize, y: usize| RoiError::OutOfBounds {
            width: self.width,
            height: self.height,
            offset_x: x,
            offset_y: y,
            source_width,
            source_height,
        };
        let x = match self.offset_x {
            Some(x) => x,
            None => source_width
                .checked_sub(self.width)
                .map(|s| s / 2)
                .ok_or_else(|| out_of_bounds(0, 0))?,
        };
        let y = match self.offset_y {
            Some(y) => y,
            None => source_height
                .checked_sub(self.height)
                .map(|s| s / 2)
                .ok_or_else(|| out_of_bounds(x, 0))?,
        };
        if x + self.width > source_width || y + self.height > source_height {
            return Err(out_of_bounds(x, y));
        }
        Ok((x, y))
    }

    pub fn matches_dimensions(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }
}

/// Rasters that can be cut into sub-rectangles.
pub trait Crop: Sized {
    fn dimensions(&self) -> (usize, usize);

    /// Copies `width x height` pixels starting at `(row0, col0)`; the caller
    /// guarantees the rectangle fits.
    fn crop_unchecked(&self, row0: usize, col0: usize, width: usize, height: usize) -> Self;
}

impl Crop for GrayImage {
    fn dimensions(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    fn crop_unchecked(&self, row0: usize, col0: usize, width: usize, height: usize) -> Self {
        GrayImage::from_fn(width, height, |i, j| self.get(row0 + i, col0 + j))
    }
}

impl Crop for BinaryImage {
    fn dimensions(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    fn crop_unchecked(&self, row0: usize, col0: usize, width: usize, height: usize) -> Self {
        BinaryImage::from_fn(width, height, |i, j| self.get(row0 + i, col0 + j))
    }
}

/// Output pixel `(i, j)` is source pixel `(offset_y + i, offset_x + j)`.
pub fn extract_roi<I: Crop>(img: &I, spec: &RoiSpec) -> Result<I, RoiError> {
    let (w, h) = img.dimensions();
    let (x, y) = spec.resolve(w, h)?;
    Ok(img.crop_unchecked(y, x, spec.width, spec.height))
}

pub fn extract_roi_pair(pair: &TemplatePair, spec: &RoiSpec) -> Result<TemplatePair, RoiError> {
    Ok(TemplatePair {
        shadow: extract_roi(&pair.shadow, spec)?,
        light: extract_roi(&pair.light, spec)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_centered_on_dataset_frame() {
        assert_eq!(RoiSpec::default().resolve(384, 288), Ok((82, 89)));
        let img = GrayImage::filled(384, 288, 3);
        let roi = extract_roi(&img, &RoiSpec::default()).unwrap();
        assert_eq!((roi.width(), roi.height()), (220, 110));
    }

    #[test]
    fn identity_crop() {
        let img = BinaryImage::from_fn(13, 7, |i, j| (i + 2 * j) % 3 == 0);
        assert_eq!(extract_roi(&img, &RoiSpec::centered(13, 7)).unwrap(), img);
        assert_eq!(extract_roi(&img, &RoiSpec::at(13, 7, 0, 0)).unwrap(), img);
    }

    #[test]
    fn single_pixel_crop() {
        let img = GrayImage::from_fn(5, 4, |i, j| (10 * i + j) as u8);
        let roi = extract_roi(&img, &RoiSpec::at(1, 1, 0, 0)).unwrap();
        assert_eq!(roi.pixels(), &[0]);
        let roi = extract_roi(&img, &RoiSpec::at(2, 1, 3, 2)).unwrap();
        assert_eq!(roi.pixels(), &[23, 24]);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let img = GrayImage::filled(10, 10, 0);
        assert!(matches!(
            extract_roi(&img, &RoiSpec::at(5, 5, 6, 0)),
            Err(RoiError::OutOfBounds { .. })
        ));
        assert!(matches!(
            extract_roi(&img, &RoiSpec::centered(11, 2)),
            Err(RoiError::OutOfBounds { .. })
        ));
        assert!(matches!(
            extract_roi(&img, &RoiSpec::centered(0, 2)),
            Err(RoiError::EmptyRoi { .. })
        ));
    }
}
