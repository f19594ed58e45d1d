//! Brute-force reference implementations and synthetic data shared by the
//! integration tests. Nothing here calls into the optimized code paths it
//! is used to check.
#![allow(dead_code)]

use std::path::Path;

use fkp::imagecore::{write_gray, BinaryImage, GrayImage};
use fkp::FingerLabel;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

// ---------------------------------------------------------------------------
// oracles

/// Direct per-pixel evaluation of the dark-valley rule.
pub fn naive_shadow(img: &GrayImage, d: usize, t: i32) -> BinaryImage {
    naive_valley(img, d, |c, n| n - c > t)
}

/// Direct per-pixel evaluation of the bright-ridge rule.
pub fn naive_light(img: &GrayImage, d: usize, t: i32) -> BinaryImage {
    naive_valley(img, d, |c, n| c - n > t)
}

fn naive_valley(img: &GrayImage, d: usize, rule: impl Fn(i32, i32) -> bool) -> BinaryImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let d = d as i64;
    BinaryImage::from_fn(img.width(), img.height(), |i, j| {
        let (i, j) = (i as i64, j as i64);
        let px = |r: i64, c: i64| -> Option<i32> {
            (r >= 0 && r < h && c >= 0 && c < w).then(|| img.get(r as usize, c as usize) as i32)
        };
        let c = px(i, j).unwrap();
        [(i - d, j), (i + d, j), (i, j - d), (i, j + d)]
            .iter()
            .all(|&(r, cc)| px(r, cc).is_some_and(|n| rule(c, n)))
    })
}

/// Windowed count by explicit summation over the clipped window.
pub fn naive_noise_once(img: &BinaryImage, t: u32, a_x: usize, a_y: usize) -> BinaryImage {
    let (w, h) = (img.width(), img.height());
    BinaryImage::from_fn(w, h, |i, j| {
        if !img.get(i, j) {
            return false;
        }
        let mut count = 0u32;
        for y in i.saturating_sub(a_y)..=(i + a_y).min(h - 1) {
            for x in j.saturating_sub(a_x)..=(j + a_x).min(w - 1) {
                count += img.get(y, x) as u32;
            }
        }
        count > t
    })
}

pub fn points(img: &BinaryImage) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..img.height() {
        for j in 0..img.width() {
            if img.get(i, j) {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn euclid(a: (usize, usize), b: (usize, usize)) -> f64 {
    let di = a.0 as f64 - b.0 as f64;
    let dj = a.1 as f64 - b.1 as f64;
    (di * di + dj * dj).sqrt()
}

pub fn nearest(p: (usize, usize), set: &[(usize, usize)]) -> f64 {
    set.iter()
        .map(|&q| euclid(p, q))
        .fold(f64::INFINITY, f64::min)
}

/// Nearest set pixel for every pixel by exhaustive scan.
pub fn brute_distance_field(img: &BinaryImage) -> Vec<f64> {
    let set = points(img);
    let mut out = Vec::with_capacity(img.len());
    for i in 0..img.height() {
        for j in 0..img.width() {
            out.push(nearest((i, j), &set));
        }
    }
    out
}

pub fn brute_directed(a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
    a.iter().map(|&p| nearest(p, b)).fold(0.0, f64::max)
}

pub fn brute_hausdorff(a: &BinaryImage, b: &BinaryImage) -> f64 {
    let (pa, pb) = (points(a), points(b));
    brute_directed(&pa, &pb).max(brute_directed(&pb, &pa))
}

pub fn brute_chamfer(a: &BinaryImage, b: &BinaryImage, tau: f64) -> f64 {
    let (pa, pb) = (points(a), points(b));
    let sum: f64 = pa.iter().map(|&p| nearest(p, &pb).min(tau)).sum();
    sum / pa.len() as f64
}

pub fn brute_mean_absolute(a: &BinaryImage, b: &BinaryImage) -> f64 {
    let mut diff = 0usize;
    for i in 0..a.height() {
        for j in 0..a.width() {
            diff += (a.get(i, j) != b.get(i, j)) as usize;
        }
    }
    diff as f64 / (a.width() * a.height()) as f64
}

// ---------------------------------------------------------------------------
// random and synthetic data

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_binary(rng: &mut StdRng, w: usize, h: usize, density: f64) -> BinaryImage {
    BinaryImage::from_fn(w, h, |_, _| rng.gen_bool(density))
}

pub fn random_gray(rng: &mut StdRng, w: usize, h: usize) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.gen())
}

/// A 3x3 blob of dark (shadow) or bright (light) pixels.
#[derive(Clone, Copy, Debug)]
pub struct Blob {
    pub row: usize,
    pub col: usize,
    pub dark: bool,
}

/// Knuckle-like texture: clusters of 3x3 blobs on an 8-pixel lattice. Dark
/// blobs stand in for shadowed creases, bright blobs for lit ridges.
#[derive(Clone, Debug)]
pub struct SubjectPattern {
    pub blobs: Vec<Blob>,
}

impl SubjectPattern {
    /// `clusters` clusters of 3x3 lattice cells placed inside
    /// `[margin, w - margin) x [margin, h - margin)`.
    pub fn random(rng: &mut StdRng, w: usize, h: usize, margin: usize, clusters: usize) -> Self {
        let mut blobs = Vec::new();
        for _ in 0..clusters {
            let r0 = rng.gen_range(margin..h - margin - 20);
            let c0 = rng.gen_range(margin..w - margin - 20);
            for a in 0..3 {
                for b in 0..3 {
                    let roll: f64 = rng.gen();
                    if roll < 0.9 {
                        blobs.push(Blob {
                            row: r0 + 8 * a,
                            col: c0 + 8 * b,
                            dark: roll < 0.6,
                        });
                    }
                }
            }
        }
        SubjectPattern { blobs }
    }

    /// Renders the pattern shifted by `(dy, dx)` over a mid-gray background
    /// with +-`noise` luminance jitter.
    pub fn render(
        &self,
        rng: &mut StdRng,
        w: usize,
        h: usize,
        dy: i64,
        dx: i64,
        noise: i32,
    ) -> GrayImage {
        let mut img = GrayImage::from_fn(w, h, |_, _| (128 + rng.gen_range(-noise..=noise)) as u8);
        for blob in &self.blobs {
            let value = if blob.dark { 60 } else { 200 };
            for a in 0..3 {
                for b in 0..3 {
                    let r = blob.row as i64 + a + dy;
                    let c = blob.col as i64 + b + dx;
                    if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                        img.set(r as usize, c as usize, value);
                    }
                }
            }
        }
        img
    }
}

/// Writes `<root>/<finger>/<subject>/<session>.pgm` for every image.
pub fn write_dataset(root: &Path, finger: FingerLabel, images: &[(String, u32, GrayImage)]) {
    for (subject, session, img) in images {
        let dir = root.join(finger.as_str()).join(subject);
        std::fs::create_dir_all(&dir).unwrap();
        write_gray(img, dir.join(format!("{session}.pgm"))).unwrap();
    }
}

pub const SYNTH_W: usize = 100;
pub const SYNTH_H: usize = 72;
pub const SYNTH_ROI_W: usize = 88;
pub const SYNTH_ROI_H: usize = 60;

/// `subjects x sessions` images where sessions of one subject differ by a
/// shift of at most one pixel and luminance noise.
pub fn separable_images(
    seed: u64,
    subjects: usize,
    sessions: u32,
) -> Vec<(String, u32, GrayImage)> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for s in 0..subjects {
        let pattern = SubjectPattern::random(&mut rng, SYNTH_W, SYNTH_H, 12, 3);
        for session in 1..=sessions {
            let dy = rng.gen_range(-1..=1);
            let dx = rng.gen_range(-1..=1);
            let img = pattern.render(&mut rng, SYNTH_W, SYNTH_H, dy, dx, 2);
            out.push((format!("s{s:02}"), session, img));
        }
    }
    out
}

/// Alternating dense (5 cluster) and sparse (2 cluster) subjects whose
/// sessions are shifted by up to 3 pixels. Pixel-wise overlap degrades on
/// such data much faster than distance-based matching.
pub fn mixed_density_images(seed: u64) -> Vec<(String, u32, GrayImage)> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for s in 0..6 {
        let clusters = if s % 2 == 0 { 5 } else { 2 };
        let pattern = SubjectPattern::random(&mut rng, SYNTH_W, SYNTH_H, 12, clusters);
        for session in 1..=4u32 {
            let dy = rng.gen_range(-3..=3);
            let dx = rng.gen_range(-3..=3);
            out.push((
                format!("s{s}"),
                session,
                pattern.render(&mut rng, SYNTH_W, SYNTH_H, dy, dx, 2),
            ));
        }
    }
    out
}
