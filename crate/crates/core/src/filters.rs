//! Shadow/light valley detectors and the windowed noise-reduction operator.

use thiserror::Error;

use crate::imagecore::{BinaryImage, GrayImage, TemplatePair};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("sobel distance must be >= 1")]
    ZeroDistance,
    #[error("noise threshold must be >= 1")]
    ZeroNoiseThreshold,
    #[error("noise half-window extents must be >= 1, got a_x={a_x}, a_y={a_y}")]
    ZeroExtent { a_x: usize, a_y: usize },
}

/// Offset `d` and luminance threshold `t` of a valley detector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SobelParams {
    distance: usize,
    threshold: u32,
}

impl SobelParams {
    pub const SHADOW: SobelParams = SobelParams {
        distance: 4,
        threshold: 8,
    };
    pub const LIGHT: SobelParams = SobelParams {
        distance: 4,
        threshold: 5,
    };

    pub fn new(distance: usize, threshold: u32) -> Result<Self, ParamError> {
        if distance == 0 {
            return Err(ParamError::ZeroDistance);
        }
        Ok(SobelParams {
            distance,
            threshold,
        })
    }

    pub fn distance(&self) -> usize {
        self.distance
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }
}

/// Popcount threshold `t` and half-window extents `(a_x, a_y)` of the noise
/// filter. The window spans `(2a_y + 1)` rows by `(2a_x + 1)` columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseParams {
    threshold: u32,
    a_x: usize,
    a_y: usize,
}

impl NoiseParams {
    pub const SHADOW: NoiseParams = NoiseParams {
        threshold: 13,
        a_x: 10,
        a_y: 10,
    };
    pub const LIGHT: NoiseParams = NoiseParams {
        threshold: 7,
        a_x: 5,
        a_y: 5,
    };

    pub fn new(threshold: u32, a_x: usize, a_y: usize) -> Result<Self, ParamError> {
        if threshold == 0 {
            return Err(ParamError::ZeroNoiseThreshold);
        }
        if a_x == 0 || a_y == 0 {
            return Err(ParamError::ZeroExtent { a_x, a_y });
        }
        Ok(NoiseParams {
            threshold,
            a_x,
            a_y,
        })
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn a_x(&self) -> usize {
        self.a_x
    }

    pub fn a_y(&self) -> usize {
        self.a_y
    }

    fn window_area(&self) -> usize {
        (2 * self.a_x + 1) * (2 * self.a_y + 1)
    }

    /// The sequence of per-pass parameters used by [`noise_reduce_adaptive`].
    ///
    /// Each axis shrinks by one per pass and holds at 1; the sequence ends
    /// with the pass where both extents are 1. The threshold is scaled with
    /// the window area, `max(1, round(t * area / initial_area))`.
    pub fn adaptive_schedule(&self) -> Vec<NoiseParams> {
        let passes = self.a_x.max(self.a_y);
        let initial_area = self.window_area() as f64;
        (0..passes)
            .map(|k| {
                let a_x = self.a_x.saturating_sub(k).max(1);
                let a_y = self.a_y.saturating_sub(k).max(1);
                let area = ((2 * a_x + 1) * (2 * a_y + 1)) as f64;
                let threshold = (self.threshold as f64 * area / initial_area).round() as u32;
                NoiseParams {
                    threshold: threshold.max(1),
                    a_x,
                    a_y,
                }
            })
            .collect()
    }
}

/// Detector and noise settings for both branches of the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PipelineParams {
    pub shadow_sobel: SobelParams,
    pub light_sobel: SobelParams,
    pub shadow_noise: NoiseParams,
    pub light_noise: NoiseParams,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            shadow_sobel: SobelParams::SHADOW,
            light_sobel: SobelParams::LIGHT,
            shadow_noise: NoiseParams::SHADOW,
            light_noise: NoiseParams::LIGHT,
        }
    }
}

/// Shared scan for both detectors: `edge(center, neighbor)` must hold for
/// the four neighbors at offset `d`. Pixels closer than `d` to a border are 0.
fn valley_scan(img: &GrayImage, d: usize, edge: impl Fn(i32, i32) -> bool) -> BinaryImage {
    let (w, h) = (img.width(), img.height());
    let mut out = BinaryImage::new(w, h);
    if h <= 2 * d || w <= 2 * d {
        return out;
    }
    let px = img.pixels();
    for i in d..h - d {
        let row = i * w;
        for j in d..w - d {
            let c = px[row + j] as i32;
            let up = px[row - d * w + j] as i32;
            let down = px[row + d * w + j] as i32;
            let left = px[row + j - d] as i32;
            let right = px[row + j + d] as i32;
            if edge(c, up) && edge(c, down) && edge(c, left) && edge(c, right) {
                out.set(i, j, true);
            }
        }
    }
    out
}

/// Marks dark valleys: all four neighbors at distance `d` are brighter than
/// the center by more than `t`.
pub fn shadow_sobel(img: &GrayImage, p: SobelParams) -> BinaryImage {
    let t = p.threshold as i32;
    valley_scan(img, p.distance, |c, n| n - c > t)
}

/// Marks lit ridges: the center is brighter than all four neighbors at
/// distance `d` by more than `t`.
pub fn light_sobel(img: &GrayImage, p: SobelParams) -> BinaryImage {
    let t = p.threshold as i32;
    valley_scan(img, p.distance, |c, n| c - n > t)
}

/// Summed-area table of set pixels with a zero guard row and column.
struct CountTable {
    stride: usize,
    sums: Vec<u32>,
}

impl CountTable {
    fn new(img: &BinaryImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut sums = vec![0u32; stride * (h + 1)];
        for i in 0..h {
            let mut run = 0u32;
            for j in 0..w {
                run += img.get(i, j) as u32;
                sums[(i + 1) * stride + j + 1] = sums[i * stride + j + 1] + run;
            }
        }
        CountTable { stride, sums }
    }

    /// Set pixels in rows `r0..r1` and columns `c0..c1` (half open).
    #[inline]
    fn count(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> u32 {
        let s = self.stride;
        self.sums[r1 * s + c1] + self.sums[r0 * s + c0]
            - self.sums[r0 * s + c1]
            - self.sums[r1 * s + c0]
    }
}

/// One pass of the noise filter: a set pixel survives only if its window,
/// clipped to the image, holds strictly more than `t` set pixels. Clear
/// pixels stay clear.
pub fn noise_reduce_once(img: &BinaryImage, p: NoiseParams) -> BinaryImage {
    let (w, h) = (img.width(), img.height());
    let table = CountTable::new(img);
    let mut out = BinaryImage::new(w, h);
    for (i, j) in img.ones() {
        let r0 = i.saturating_sub(p.a_y);
        let r1 = (i + p.a_y + 1).min(h);
        let c0 = j.saturating_sub(p.a_x);
        let c1 = (j + p.a_x + 1).min(w);
        if table.count(r0, r1, c0, c1) > p.threshold {
            out.set(i, j, true);
        }
    }
    out
}

/// Runs [`noise_reduce_once`] over the shrinking-window schedule of
/// [`NoiseParams::adaptive_schedule`], each pass consuming the previous output.
pub fn noise_reduce_adaptive(img: &BinaryImage, p: NoiseParams) -> BinaryImage {
    let mut current = img.clone();
    for pass in p.adaptive_schedule() {
        if current.is_empty() {
            break;
        }
        current = noise_reduce_once(&current, pass);
    }
    current
}

/// Both detector branches followed by their noise filters. The two branches
/// never share state.
pub fn preprocess(img: &GrayImage, p: &PipelineParams) -> TemplatePair {
    let shadow = noise_reduce_adaptive(&shadow_sobel(img, p.shadow_sobel), p.shadow_noise);
    let light = noise_reduce_adaptive(&light_sobel(img, p.light_sobel), p.light_noise);
    TemplatePair { shadow, light }
}
