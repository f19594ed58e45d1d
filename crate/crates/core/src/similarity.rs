//! Distances between binary edge maps: mean absolute (normalized Hamming),
//! Hausdorff, and truncated Chamfer, with an exact Euclidean distance
//! transform backing the latter two.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::imagecore::{BinaryImage, TemplatePair};

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("chamfer distance is undefined for an empty probe edge map")]
    EmptyProbe,
    #[error("hausdorff distance between an empty and a non-empty edge map is undefined")]
    Incomparable,
    #[error("chamfer cap must be a non-negative number, got {0}")]
    InvalidTau(f64),
}

fn check_dims(a: &BinaryImage, b: &BinaryImage) -> Result<(), SimilarityError> {
    if a.same_dimensions(b) {
        Ok(())
    } else {
        Err(SimilarityError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ))
    }
}

/// Coordinates `(row, col)` of the set pixels of an image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointSet {
    pub width: usize,
    pub height: usize,
    pub points: Vec<(usize, usize)>,
}

impl PointSet {
    pub fn from_image(img: &BinaryImage) -> Self {
        PointSet {
            width: img.width(),
            height: img.height(),
            points: img.ones().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-pixel Euclidean distance to the nearest set pixel of a source image.
/// Every value is `f64::INFINITY` when the source has no set pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

const NO_SITE: u64 = u64::MAX;

/// Lower envelope of the parabolas `(q - p)^2 + f[p]` over the finite
/// entries of `f`, evaluated at every integer `q`. Squared distances stay
/// integral so the result is exact.
fn squared_edt_1d(f: &[u64], out: &mut [u64], sites: &mut Vec<usize>, starts: &mut Vec<f64>) {
    sites.clear();
    starts.clear();
    let key = |p: usize| f[p] as f64 + (p * p) as f64;
    for (q, &fq) in f.iter().enumerate() {
        if fq == NO_SITE {
            continue;
        }
        loop {
            match sites.last() {
                None => {
                    sites.push(q);
                    starts.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = (key(q) - key(p)) / (2.0 * (q - p) as f64);
                    if s <= *starts.last().unwrap() {
                        sites.pop();
                        starts.pop();
                    } else {
                        sites.push(q);
                        starts.push(s);
                        break;
                    }
                }
            }
        }
    }
    if sites.is_empty() {
        out.fill(NO_SITE);
        return;
    }
    let mut k = 0;
    for (q, slot) in out.iter_mut().enumerate() {
        while k + 1 < sites.len() && starts[k + 1] < q as f64 {
            k += 1;
        }
        let p = sites[k];
        let dq = q.abs_diff(p) as u64;
        *slot = dq * dq + f[p];
    }
}

/// Exact Euclidean distance transform: a column pass followed by a row
/// pass of the 1-D squared transform, linear in the pixel count.
pub fn distance_transform(img: &BinaryImage) -> DistanceField {
    let (w, h) = (img.width(), img.height());
    if img.is_empty() {
        return DistanceField {
            width: w,
            height: h,
            values: vec![f64::INFINITY; w * h],
        };
    }
    let mut grid = vec![NO_SITE; w * h];
    for (i, j) in img.ones() {
        grid[i * w + j] = 0;
    }

    let mut sites = Vec::with_capacity(w.max(h));
    let mut starts = Vec::with_capacity(w.max(h));
    let mut line = vec![0u64; h];
    let mut result = vec![0u64; h];
    for j in 0..w {
        for i in 0..h {
            line[i] = grid[i * w + j];
        }
        squared_edt_1d(&line, &mut result, &mut sites, &mut starts);
        for i in 0..h {
            grid[i * w + j] = result[i];
        }
    }

    let mut row_out = vec![0u64; w];
    let mut values = Vec::with_capacity(w * h);
    for row in grid.chunks_exact(w) {
        squared_edt_1d(row, &mut row_out, &mut sites, &mut starts);
        values.extend(row_out.iter().map(|&d| (d as f64).sqrt()));
    }
    DistanceField {
        width: w,
        height: h,
        values,
    }
}

/// Fraction of pixels that differ.
pub fn mean_absolute(a: &BinaryImage, b: &BinaryImage) -> Result<f64, SimilarityError> {
    check_dims(a, b)?;
    Ok(a.hamming(b) as f64 / a.len() as f64)
}

/// `sup` over set pixels of `a` of the distance stored in `field`.
/// Returns 0 for an empty `a`.
pub fn directed_hausdorff(a: &BinaryImage, field: &DistanceField) -> f64 {
    a.ones().map(|(i, j)| field.get(i, j)).fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance given both images and their distance fields.
pub fn hausdorff_with_fields(
    a: &BinaryImage,
    field_a: &DistanceField,
    b: &BinaryImage,
    field_b: &DistanceField,
) -> Result<f64, SimilarityError> {
    check_dims(a, b)?;
    match (a.is_empty(), b.is_empty()) {
        (true, true) => Ok(0.0),
        (false, false) => Ok(directed_hausdorff(a, field_b).max(directed_hausdorff(b, field_a))),
        _ => Err(SimilarityError::Incomparable),
    }
}

/// Symmetric Hausdorff distance under the Euclidean norm. Two empty maps are
/// at distance 0; one empty map against a non-empty one is an error.
pub fn hausdorff(a: &BinaryImage, b: &BinaryImage) -> Result<f64, SimilarityError> {
    check_dims(a, b)?;
    hausdorff_with_fields(a, &distance_transform(a), b, &distance_transform(b))
}

/// Cap applied to each nearest-point distance of the Chamfer mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChamferParams {
    tau: f64,
}

impl Default for ChamferParams {
    fn default() -> Self {
        ChamferParams { tau: 2.0 }
    }
}

impl ChamferParams {
    pub fn new(tau: f64) -> Result<Self, SimilarityError> {
        if tau.is_nan() || tau < 0.0 {
            return Err(SimilarityError::InvalidTau(tau));
        }
        Ok(ChamferParams { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

pub fn chamfer_with_field(
    a: &BinaryImage,
    field_b: &DistanceField,
    p: ChamferParams,
) -> Result<f64, SimilarityError> {
    if a.width() != field_b.width() || a.height() != field_b.height() {
        return Err(SimilarityError::DimensionMismatch(
            a.width(),
            a.height(),
            field_b.width(),
            field_b.height(),
        ));
    }
    let mut n = 0usize;
    let mut sum = 0.0;
    for (i, j) in a.ones() {
        sum += field_b.get(i, j).min(p.tau);
        n += 1;
    }
    if n == 0 {
        return Err(SimilarityError::EmptyProbe);
    }
    Ok(sum / n as f64)
}

/// Mean over set pixels of `a` of the distance to the nearest set pixel of
/// `b`, each distance capped at `tau`. Not symmetric. An empty `b` scores
/// `tau`.
pub fn chamfer(a: &BinaryImage, b: &BinaryImage, p: ChamferParams) -> Result<f64, SimilarityError> {
    check_dims(a, b)?;
    if a.is_empty() {
        return Err(SimilarityError::EmptyProbe);
    }
    chamfer_with_field(a, &distance_transform(b), p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    MeanAbsolute,
    Hausdorff,
    Chamfer,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::MeanAbsolute, Measure::Chamfer, Measure::Hausdorff];

    pub fn code(&self) -> &'static str {
        match self {
            Measure::MeanAbsolute => "ma",
            Measure::Hausdorff => "hd",
            Measure::Chamfer => "cd",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Measure::MeanAbsolute => "Mean Absolute",
            Measure::Hausdorff => "Hausdorff Distance",
            Measure::Chamfer => "Chamfer Distance",
        }
    }

    pub fn needs_candidate_field(&self) -> bool {
        !matches!(self, Measure::MeanAbsolute)
    }

    pub fn needs_probe_field(&self) -> bool {
        matches!(self, Measure::Hausdorff)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ma" => Ok(Measure::MeanAbsolute),
            "hd" => Ok(Measure::Hausdorff),
            "cd" => Ok(Measure::Chamfer),
            other => Err(format!("unknown measure {other:?}, expected ma, hd or cd")),
        }
    }
}

/// Applies one measure to a single pair of images.
pub fn measure_distance(
    measure: Measure,
    a: &BinaryImage,
    b: &BinaryImage,
    p: ChamferParams,
) -> Result<f64, SimilarityError> {
    match measure {
        Measure::MeanAbsolute => mean_absolute(a, b),
        Measure::Hausdorff => hausdorff(a, b),
        Measure::Chamfer => chamfer(a, b, p),
    }
}

/// Shadow distance plus light distance; lower means more alike.
pub fn pair_score(
    probe: &TemplatePair,
    candidate: &TemplatePair,
    measure: Measure,
    p: ChamferParams,
) -> Result<f64, SimilarityError> {
    let shadow = measure_distance(measure, &probe.shadow, &candidate.shadow, p)?;
    let light = measure_distance(measure, &probe.light, &candidate.light, p)?;
    Ok(shadow + light)
}

/// A template pair with whatever distance fields a measure needs, so that
/// repeated comparisons skip recomputing transforms. Scores produced through
/// [`PreparedPair::score`] are identical to [`pair_score`].
#[derive(Clone, Debug)]
pub struct PreparedPair<'a> {
    pair: &'a TemplatePair,
    fields: Option<(DistanceField, DistanceField)>,
}

impl<'a> PreparedPair<'a> {
    fn with_fields(pair: &'a TemplatePair, needed: bool) -> Self {
        let fields = needed.then(|| {
            (
                distance_transform(&pair.shadow),
                distance_transform(&pair.light),
            )
        });
        PreparedPair { pair, fields }
    }

    /// Preparation for the gallery side of a comparison.
    pub fn candidate(pair: &'a TemplatePair, measure: Measure) -> Self {
        Self::with_fields(pair, measure.needs_candidate_field())
    }

    /// Preparation for the probe side of a comparison.
    pub fn probe(pair: &'a TemplatePair, measure: Measure) -> Self {
        Self::with_fields(pair, measure.needs_probe_field())
    }

    pub fn pair(&self) -> &'a TemplatePair {
        self.pair
    }

    /// Scores `self` as the probe against `candidate`.
    pub fn score(
        &self,
        candidate: &PreparedPair<'_>,
        measure: Measure,
        p: ChamferParams,
    ) -> Result<f64, SimilarityError> {
        let (probe, cand) = (self.pair, candidate.pair);
        check_dims(&probe.shadow, &cand.shadow)?;
        check_dims(&probe.light, &cand.light)?;
        match measure {
            Measure::MeanAbsolute => pair_score(probe, cand, measure, p),
            Measure::Chamfer => {
                let (fs, fl) = candidate
                    .fields
                    .as_ref()
                    .expect("candidate prepared for chamfer");
                if probe.shadow.is_empty() || probe.light.is_empty() {
                    return Err(SimilarityError::EmptyProbe);
                }
                Ok(chamfer_with_field(&probe.shadow, fs, p)?
                    + chamfer_with_field(&probe.light, fl, p)?)
            }
            Measure::Hausdorff => {
                let (ps, pl) = self.fields.as_ref().expect("probe prepared for hausdorff");
                let (cs, cl) = candidate
                    .fields
                    .as_ref()
                    .expect("candidate prepared for hausdorff");
                Ok(hausdorff_with_fields(&probe.shadow, ps, &cand.shadow, cs)?
                    + hausdorff_with_fields(&probe.light, pl, &cand.light, cl)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(points: &[(usize, usize)]) -> BinaryImage {
        BinaryImage::from_points(8, 8, points)
    }

    #[test]
    fn transform_three_four_five() {
        let field = distance_transform(&pts(&[(0, 0)]));
        assert_eq!(field.get(3, 4), 5.0);
        assert_eq!(field.get(0, 0), 0.0);
    }

    #[test]
    fn transform_full_and_empty() {
        let field = distance_transform(&BinaryImage::full(6, 5));
        assert!(field.values().iter().all(|&v| v == 0.0));
        let field = distance_transform(&BinaryImage::new(6, 5));
        assert!(field.values().iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn transform_picks_nearest_of_several() {
        let img = BinaryImage::from_points(10, 1, &[(0, 0), (0, 9)]);
        let field = distance_transform(&img);
        let row: Vec<f64> = (0..10).map(|j| field.get(0, j)).collect();
        assert_eq!(row, vec![0.0, 1.0, 2.0, 3.0, 4.0, 4.0, 3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn mean_absolute_cases() {
        let a = BinaryImage::full(4, 3);
        let b = BinaryImage::new(4, 3);
        assert_eq!(mean_absolute(&a, &a).unwrap(), 0.0);
        assert_eq!(mean_absolute(&a, &b).unwrap(), 1.0);
        let c = BinaryImage::from_points(2, 2, &[(1, 0)]);
        assert_eq!(mean_absolute(&c, &BinaryImage::new(2, 2)).unwrap(), 0.25);
        assert!(matches!(
            mean_absolute(&a, &BinaryImage::new(3, 4)),
            Err(SimilarityError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn hausdorff_cases() {
        assert_eq!(hausdorff(&pts(&[(0, 0)]), &pts(&[(3, 4)])).unwrap(), 5.0);
        assert_eq!(
            hausdorff(&pts(&[(0, 0), (0, 3)]), &pts(&[(0, 0)])).unwrap(),
            3.0
        );
        let a = pts(&[(1, 1), (5, 2)]);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff(&pts(&[]), &pts(&[])).unwrap(), 0.0);
        assert_eq!(hausdorff(&pts(&[]), &a), Err(SimilarityError::Incomparable));
        assert_eq!(hausdorff(&a, &pts(&[])), Err(SimilarityError::Incomparable));
    }

    #[test]
    fn chamfer_cases() {
        let p = ChamferParams::default();
        assert_eq!(chamfer(&pts(&[(0, 0)]), &pts(&[(0, 5)]), p).unwrap(), 2.0);
        assert_eq!(
            chamfer(&pts(&[(0, 0), (0, 1)]), &pts(&[(0, 0)]), p).unwrap(),
            0.5
        );
        let a = pts(&[(2, 2), (7, 7)]);
        assert_eq!(chamfer(&a, &a, p).unwrap(), 0.0);
        assert_eq!(chamfer(&a, &pts(&[]), p).unwrap(), 2.0);
        assert_eq!(chamfer(&pts(&[]), &a, p), Err(SimilarityError::EmptyProbe));
    }

    #[test]
    fn chamfer_is_asymmetric() {
        let p = ChamferParams::default();
        let small = pts(&[(0, 0)]);
        let big = pts(&[(0, 0), (0, 1)]);
        assert_eq!(chamfer(&small, &big, p).unwrap(), 0.0);
        assert_eq!(chamfer(&big, &small, p).unwrap(), 0.5);
    }

    #[test]
    fn tau_validation() {
        assert!(ChamferParams::new(-1.0).is_err());
        assert!(ChamferParams::new(f64::NAN).is_err());
        assert_eq!(ChamferParams::new(0.0).unwrap().tau(), 0.0);
    }

    #[test]
    fn measure_parsing() {
        for m in Measure::ALL {
            assert_eq!(m.code().parse::<Measure>().unwrap(), m);
        }
        assert_eq!("CD".parse::<Measure>().unwrap(), Measure::Chamfer);
        assert!("l2".parse::<Measure>().is_err());
    }

    #[test]
    fn pair_score_sums_components() {
        let probe = TemplatePair {
            shadow: pts(&[(0, 0), (0, 1)]),
            light: pts(&[(4, 4)]),
        };
        let cand = TemplatePair {
            shadow: pts(&[(0, 0)]),
            light: pts(&[(4, 5)]),
        };
        let p = ChamferParams::default();
        assert_eq!(pair_score(&probe, &cand, Measure::Chamfer, p).unwrap(), 1.5);
        assert_eq!(
            pair_score(&probe, &probe, Measure::Hausdorff, p).unwrap(),
            0.0
        );
        for m in Measure::ALL {
            let direct = pair_score(&probe, &cand, m, p).unwrap();
            let prepared = PreparedPair::probe(&probe, m)
                .score(&PreparedPair::candidate(&cand, m), m, p)
                .unwrap();
            assert_eq!(direct.to_bits(), prepared.to_bits());
        }
    }
}
