//! Grayscale and bit-packed binary rasters, plus the binary netpbm codecs
//! (P5 graymap in, P4 bitmap in and out).
//!
//! Coordinates are always `(row, col)`: `i` indexes lines from the top and
//! `j` indexes columns from the left.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors raised while constructing images or decoding netpbm files.
#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
}

impl ImageError {
    fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            ImageError::MissingFile(path.to_path_buf())
        } else {
            ImageError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

fn check_dims(width: usize, height: usize) -> Result<(), ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyDimensions { width, height });
    }
    Ok(())
}

/// An 8-bit luminance raster stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        check_dims(width, height)?;
        if pixels.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Image filled with a single value.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::from_raw(width, height, vec![value; width * height]).expect("non-empty dimensions")
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                pixels.push(f(i, j));
            }
        }
        Self::from_raw(width, height, pixels).expect("non-empty dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Maps every value `v` to `255 - v`.
    pub fn inverted(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| 255 - v).collect(),
        }
    }
}

const WORD_BITS: usize = 64;

/// A one-bit-per-pixel raster. Pixel `(i, j)` lives at bit `i * width + j`
/// of a contiguous little-endian `u64` word array; bits past the last pixel
/// are always zero so that derived equality is pixel equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl BinaryImage {
    /// All-clear image. Panics if either dimension is zero.
    pub fn new(width: usize, height: usize) -> Self {
        check_dims(width, height).expect("non-empty dimensions");
        let words = vec![0; (width * height).div_ceil(WORD_BITS)];
        BinaryImage {
            width,
            height,
            words,
        }
    }

    /// All-set image. Panics if either dimension is zero.
    pub fn full(width: usize, height: usize) -> Self {
        let mut img = Self::new(width, height);
        img.words.iter_mut().for_each(|w| *w = u64::MAX);
        img.clear_tail();
        img
    }

    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut img = Self::new(width, height);
        for i in 0..height {
            for j in 0..width {
                if f(i, j) {
                    img.set(i, j, true);
                }
            }
        }
        img
    }

    /// Image with exactly the listed `(row, col)` pixels set.
    ///
    /// Panics if a point lies outside the image.
    pub fn from_points(width: usize, height: usize, points: &[(usize, usize)]) -> Self {
        let mut img = Self::new(width, height);
        for &(i, j) in points {
            assert!(
                i < height && j < width,
                "point ({i}, {j}) outside {width}x{height}"
            );
            img.set(i, j, true);
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn same_dimensions(&self, other: &BinaryImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.height && col < self.width);
        let bit = row * self.width + col;
        (self.words[bit / WORD_BITS] >> (bit % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.height && col < self.width);
        let bit = row * self.width + col;
        let mask = 1u64 << (bit % WORD_BITS);
        if value {
            self.words[bit / WORD_BITS] |= mask;
        } else {
            self.words[bit / WORD_BITS] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of pixels that differ between two equally sized images.
    ///
    /// Panics on a dimension mismatch.
    pub fn hamming(&self, other: &BinaryImage) -> usize {
        assert!(self.same_dimensions(other), "dimension mismatch");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryImage) -> bool {
        self.same_dimensions(other)
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| a & !b == 0)
    }

    /// Iterates the `(row, col)` coordinates of set pixels in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let width = self.width;
        self.words.iter().enumerate().flat_map(move |(k, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                let idx = k * WORD_BITS + bit;
                Some((idx / width, idx % width))
            })
        })
    }

    fn clear_tail(&mut self) {
        let used = self.len() % WORD_BITS;
        if used != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << used) - 1;
            }
        }
    }
}

/// One finger sample: the shadow-valley and light-valley binary ROIs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplatePair {
    pub shadow: BinaryImage,
    pub light: BinaryImage,
}

impl TemplatePair {
    pub fn width(&self) -> usize {
        self.shadow.width()
    }

    pub fn height(&self) -> usize {
        self.shadow.height()
    }

    pub fn same_dimensions(&self, other: &TemplatePair) -> bool {
        self.shadow.same_dimensions(&other.shadow) && self.light.same_dimensions(&other.light)
    }
}

// ---------------------------------------------------------------------------
// netpbm codecs

struct HeaderParser<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn new(data: &'a [u8]) -> Self {
        HeaderParser { data, pos: 0 }
    }

    fn magic(&mut self) -> Result<[u8; 2], ImageError> {
        if self.data.len() < 2 {
            return Err(ImageError::MalformedHeader("missing magic number".into()));
        }
        self.pos = 2;
        Ok([self.data[0], self.data[1]])
    }

    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        let at = self.pos;
        self.skip_whitespace_and_comments();
        if self.pos == at {
            return Err(ImageError::MalformedHeader(format!(
                "expected whitespace before {what}"
            )));
        }
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::MalformedHeader(format!("{what} out of range")))
    }

    /// Consumes the single whitespace byte that separates the header from
    /// the raster and returns the payload.
    fn payload(mut self) -> Result<&'a [u8], ImageError> {
        match self.data.get(self.pos) {
            Some(c) if c.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(&self.data[self.pos..])
            }
            Some(_) => Err(ImageError::MalformedHeader(
                "expected whitespace before raster".into(),
            )),
            None => Ok(&[]),
        }
    }
}

fn dimensions(p: &mut HeaderParser<'_>) -> Result<(usize, usize), ImageError> {
    let width = p.number("width")? as usize;
    let height = p.number("height")? as usize;
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    Ok((width, height))
}

/// Decodes a binary graymap (`P5`, maxval 255).
pub fn decode_gray(data: &[u8]) -> Result<GrayImage, ImageError> {
    let mut p = HeaderParser::new(data);
    let magic = p.magic()?;
    if &magic != b"P5" {
        return Err(ImageError::MalformedHeader(format!(
            "expected magic P5, found {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let (width, height) = dimensions(&mut p)?;
    let maxval = p.number("maxval")?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    let payload = p.payload()?;
    let expected = width * height;
    if payload.len() < expected {
        return Err(ImageError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    GrayImage::from_raw(width, height, payload[..expected].to_vec())
}

pub fn encode_gray(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| ImageError::io(path, e))?;
    decode_gray(&data)
}

pub fn write_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    fs::write(path, encode_gray(img)).map_err(|e| ImageError::io(path, e))
}

/// Encodes a `P4` bitmap. Rows are padded to whole bytes, most significant
/// bit first, and a set pixel is written as 1 (black).
pub fn encode_binary(img: &BinaryImage) -> Vec<u8> {
    let row_bytes = img.width.div_ceil(8);
    let mut out = format!("P4\n{} {}\n", img.width, img.height).into_bytes();
    let header_len = out.len();
    out.resize(header_len + row_bytes * img.height, 0);
    for (i, j) in img.ones() {
        out[header_len + i * row_bytes + j / 8] |= 0x80 >> (j % 8);
    }
    out
}

pub fn decode_binary(data: &[u8]) -> Result<BinaryImage, ImageError> {
    let mut p = HeaderParser::new(data);
    let magic = p.magic()?;
    if &magic != b"P4" {
        return Err(ImageError::MalformedHeader(format!(
            "expected magic P4, found {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let (width, height) = dimensions(&mut p)?;
    let payload = p.payload()?;
    let row_bytes = width.div_ceil(8);
    let expected = row_bytes * height;
    if payload.len() < expected {
        return Err(ImageError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    let mut img = BinaryImage::new(width, height);
    for (i, row) in payload[..expected].chunks_exact(row_bytes).enumerate() {
        for j in 0..width {
            if row[j / 8] & (0x80 >> (j % 8)) != 0 {
                img.set(i, j, true);
            }
        }
    }
    Ok(img)
}

pub fn write_binary(img: &BinaryImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    fs::write(path, encode_binary(img)).map_err(|e| ImageError::io(path, e))
}

pub fn read_binary(path: impl AsRef<Path>) -> Result<BinaryImage, ImageError> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| ImageError::io(path, e))?;
    decode_binary(&data)
}
