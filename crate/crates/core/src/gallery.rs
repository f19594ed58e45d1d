//! Template enrollment, on-disk galleries and rank-1 identification.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::filters::{preprocess, NoiseParams, ParamError, PipelineParams, SobelParams};
use crate::imagecore::{read_binary, write_binary, GrayImage, ImageError, TemplatePair};
use crate::roi::{extract_roi, extract_roi_pair, RoiError, RoiSpec};
use crate::similarity::{ChamferParams, Measure, PreparedPair, SimilarityError};

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Error)]
pub enum GalleryError {
    #[error("entry {0} is already enrolled")]
    DuplicateKey(EntryKey),
    #[error("template {got_w}x{got_h} does not match gallery templates {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("gallery has no entries to compare against")]
    Empty,
    #[error("invalid subject id {0:?}")]
    InvalidSubject(String),
    #[error("session numbers start at 1")]
    InvalidSession,
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Roi(#[from] RoiError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("scoring against {key}: {source}")]
    Score {
        key: EntryKey,
        #[source]
        source: SimilarityError,
    },
    #[error("manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
    #[error("entry {key}: template file {} is missing", path.display())]
    MissingTemplate { key: EntryKey, path: PathBuf },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FingerLabel {
    LeftIndex,
    LeftMiddle,
    RightIndex,
    RightMiddle,
}

impl FingerLabel {
    pub const ALL: [FingerLabel; 4] = [
        FingerLabel::LeftIndex,
        FingerLabel::LeftMiddle,
        FingerLabel::RightIndex,
        FingerLabel::RightMiddle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FingerLabel::LeftIndex => "left-index",
            FingerLabel::LeftMiddle => "left-middle",
            FingerLabel::RightIndex => "right-index",
            FingerLabel::RightMiddle => "right-middle",
        }
    }
}

impl fmt::Display for FingerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FingerLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FingerLabel::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| {
                format!("unknown finger {s:?}, expected left-index, left-middle, right-index or right-middle")
            })
    }
}

/// Identity of one enrolled sample. Ordering is lexicographic on
/// `(subject_id, finger, session)` and breaks score ties.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntryKey {
    pub subject_id: String,
    pub finger: FingerLabel,
    pub session: u32,
}

impl EntryKey {
    pub fn new(
        subject_id: impl Into<String>,
        finger: FingerLabel,
        session: u32,
    ) -> Result<Self, GalleryError> {
        let subject_id = subject_id.into();
        let bad = subject_id.is_empty()
            || subject_id == "."
            || subject_id == ".."
            || subject_id
                .chars()
                .any(|c| c == '/' || c == '\\' || c.is_control());
        if bad {
            return Err(GalleryError::InvalidSubject(subject_id));
        }
        if session == 0 {
            return Err(GalleryError::InvalidSession);
        }
        Ok(EntryKey {
            subject_id,
            finger,
            session,
        })
    }

    fn file_stem(&self) -> String {
        format!("{}_{}_{}", self.subject_id, self.finger, self.session)
    }
}

impl fmt::Display for EntryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.subject_id, self.finger, self.session)
    }
}

/// Everything needed to turn a raw grayscale capture into a template pair.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pipeline {
    pub params: PipelineParams,
    pub roi: RoiSpec,
    /// Crop before running the detectors instead of after.
    pub roi_first: bool,
}

impl Pipeline {
    /// Runs the detectors, noise filters and ROI crop. Images whose size
    /// already equals the ROI are treated as pre-cropped.
    pub fn template(&self, raw: &GrayImage) -> Result<TemplatePair, GalleryError> {
        if self.roi.matches_dimensions(raw.width(), raw.height()) {
            return Ok(preprocess(raw, &self.params));
        }
        if self.roi_first {
            let cropped = extract_roi(raw, &self.roi)?;
            Ok(preprocess(&cropped, &self.params))
        } else {
            Ok(extract_roi_pair(&preprocess(raw, &self.params), &self.roi)?)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GalleryEntry {
    pub key: EntryKey,
    pub template: TemplatePair,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gallery {
    pipeline: Pipeline,
    entries: Vec<GalleryEntry>,
}

impl Gallery {
    pub fn new(pipeline: Pipeline) -> Self {
        Gallery {
            pipeline,
            entries: Vec::new(),
        }
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn entries(&self) -> &[GalleryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &EntryKey) -> Option<&GalleryEntry> {
        self.entries.iter().find(|e| &e.key == key)
    }

    /// Preprocesses `raw` with the gallery's pipeline and appends it.
    pub fn enroll(&mut self, raw: &GrayImage, key: EntryKey) -> Result<(), GalleryError> {
        if self.get(&key).is_some() {
            return Err(GalleryError::DuplicateKey(key));
        }
        let template = self.pipeline.template(raw)?;
        self.enroll_template(key, template)
    }

    /// Appends an already extracted template pair.
    pub fn enroll_template(
        &mut self,
        key: EntryKey,
        template: TemplatePair,
    ) -> Result<(), GalleryError> {
        if self.get(&key).is_some() {
            return Err(GalleryError::DuplicateKey(key));
        }
        let reference = self
            .entries
            .first()
            .map(|e| &e.template)
            .unwrap_or(&template);
        if !template.same_dimensions(reference) || !template.shadow.same_dimensions(&template.light)
        {
            return Err(GalleryError::DimensionMismatch {
                want_w: reference.width(),
                want_h: reference.height(),
                got_w: template.light.width(),
                got_h: template.light.height(),
            });
        }
        self.entries.push(GalleryEntry { key, template });
        Ok(())
    }

    /// Rank-1 identification of a single probe; see [`Matcher`] for
    /// repeated queries.
    pub fn identify(
        &self,
        probe: &TemplatePair,
        measure: Measure,
        chamfer: ChamferParams,
        exclude: Option<&EntryKey>,
    ) -> Result<MatchResult<'_>, GalleryError> {
        Matcher::new(self, measure, chamfer).identify(probe, exclude)
    }

    /// Writes one P4 file per template plus [`MANIFEST_FILE`].
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), GalleryError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| GalleryError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest_err = |e: csv::Error| GalleryError::Manifest {
            path: manifest_path.clone(),
            message: e.to_string(),
        };
        let mut out = csv::WriterBuilder::new()
            .flexible(true)
            .has_headers(false)
            .from_path(&manifest_path)
            .map_err(manifest_err)?;
        for (name, value) in manifest_params(&self.pipeline) {
            out.write_record(["param", name, &value])
                .map_err(manifest_err)?;
        }
        for entry in &self.entries {
            let stem = entry.key.file_stem();
            let shadow = format!("{stem}_shadow.pbm");
            let light = format!("{stem}_light.pbm");
            write_binary(&entry.template.shadow, dir.join(&shadow))?;
            write_binary(&entry.template.light, dir.join(&light))?;
            out.write_record([
                "entry",
                &entry.key.subject_id,
                entry.key.finger.as_str(),
                &entry.key.session.to_string(),
                &shadow,
                &light,
            ])
            .map_err(manifest_err)?;
        }
        out.flush().map_err(|source| GalleryError::Io {
            path: manifest_path.clone(),
            source,
        })
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Gallery, GalleryError> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        let bad = |message: String| GalleryError::Manifest {
            path: manifest_path.clone(),
            message,
        };
        if !manifest_path.is_file() {
            return Err(bad("not found".into()));
        }
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .has_headers(false)
            .from_path(&manifest_path)
            .map_err(|e| bad(e.to_string()))?;

        let mut params = Vec::new();
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let fields: Vec<&str> = record.iter().collect();
            match fields.as_slice() {
                ["param", name, value] => params.push((name.to_string(), value.to_string())),
                ["entry", subject, finger, session, shadow, light] => {
                    let finger = finger
                        .parse()
                        .map_err(|e| bad(format!("line {}: {e}", line + 1)))?;
                    let session = session
                        .parse()
                        .map_err(|_| bad(format!("line {}: bad session {session:?}", line + 1)))?;
                    let key = EntryKey::new(*subject, finger, session)?;
                    rows.push((key, shadow.to_string(), light.to_string()));
                }
                _ => return Err(bad(format!("line {}: unrecognized record", line + 1))),
            }
        }
        let pipeline = parse_manifest_params(&params).map_err(bad)?;

        let mut gallery = Gallery::new(pipeline);
        for (key, shadow_file, light_file) in rows {
            let load = |name: &str| {
                let path = dir.join(name);
                read_binary(&path).map_err(|e| match e {
                    ImageError::MissingFile(path) => GalleryError::MissingTemplate {
                        key: key.clone(),
                        path,
                    },
                    other => other.into(),
                })
            };
            let template = TemplatePair {
                shadow: load(&shadow_file)?,
                light: load(&light_file)?,
            };
            if gallery.is_empty()
                && !pipeline
                    .roi
                    .matches_dimensions(template.width(), template.height())
            {
                log::warn!(
                    "templates are {}x{} but the manifest ROI is {}x{}",
                    template.width(),
                    template.height(),
                    pipeline.roi.width,
                    pipeline.roi.height
                );
            }
            gallery.enroll_template(key, template)?;
        }
        Ok(gallery)
    }
}

fn offset_text(offset: Option<usize>) -> String {
    offset.map_or_else(|| "center".to_string(), |v| v.to_string())
}

fn manifest_params(p: &Pipeline) -> Vec<(&'static str, String)> {
    let pp = &p.params;
    vec![
        ("shadow_sobel_d", pp.shadow_sobel.distance().to_string()),
        ("shadow_sobel_t", pp.shadow_sobel.threshold().to_string()),
        ("light_sobel_d", pp.light_sobel.distance().to_string()),
        ("light_sobel_t", pp.light_sobel.threshold().to_string()),
        ("shadow_nr_t", pp.shadow_noise.threshold().to_string()),
        ("shadow_nr_ax", pp.shadow_noise.a_x().to_string()),
        ("shadow_nr_ay", pp.shadow_noise.a_y().to_string()),
        ("light_nr_t", pp.light_noise.threshold().to_string()),
        ("light_nr_ax", pp.light_noise.a_x().to_string()),
        ("light_nr_ay", pp.light_noise.a_y().to_string()),
        ("roi_w", p.roi.width.to_string()),
        ("roi_h", p.roi.height.to_string()),
        ("roi_x", offset_text(p.roi.offset_x)),
        ("roi_y", offset_text(p.roi.offset_y)),
        ("roi_first", p.roi_first.to_string()),
    ]
}

fn parse_manifest_params(params: &[(String, String)]) -> Result<Pipeline, String> {
    let lookup = |name: &str| -> Result<&str, String> {
        params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| format!("missing parameter {name}"))
    };
    let num = |name: &str| -> Result<usize, String> {
        let v = lookup(name)?;
        v.parse()
            .map_err(|_| format!("parameter {name} has bad value {v:?}"))
    };
    let offset = |name: &str| -> Result<Option<usize>, String> {
        match lookup(name)? {
            "center" => Ok(None),
            _ => num(name).map(Some),
        }
    };
    let to_u32 = |name: &str| num(name).map(|v| v as u32);
    let e = |err: ParamError| err.to_string();
    let params = PipelineParams {
        shadow_sobel: SobelParams::new(num("shadow_sobel_d")?, to_u32("shadow_sobel_t")?)
            .map_err(e)?,
        light_sobel: SobelParams::new(num("light_sobel_d")?, to_u32("light_sobel_t")?)
            .map_err(e)?,
        shadow_noise: NoiseParams::new(
            to_u32("shadow_nr_t")?,
            num("shadow_nr_ax")?,
            num("shadow_nr_ay")?,
        )
        .map_err(e)?,
        light_noise: NoiseParams::new(
            to_u32("light_nr_t")?,
            num("light_nr_ax")?,
            num("light_nr_ay")?,
        )
        .map_err(e)?,
    };
    let roi = RoiSpec {
        width: num("roi_w")?,
        height: num("roi_h")?,
        offset_x: offset("roi_x")?,
        offset_y: offset("roi_y")?,
    };
    let roi_first = match lookup("roi_first")? {
        "true" => true,
        "false" => false,
        v => return Err(format!("parameter roi_first has bad value {v:?}")),
    };
    Ok(Pipeline {
        params,
        roi,
        roi_first,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct Match<'g> {
    pub entry: &'g GalleryEntry,
    pub score: f64,
}

/// Candidates sorted by ascending score, ties broken by entry key.
#[derive(Clone, Debug)]
pub struct MatchResult<'g> {
    pub ranked: Vec<Match<'g>>,
}

impl<'g> MatchResult<'g> {
    pub fn best(&self) -> &Match<'g> {
        &self.ranked[0]
    }

    /// Open-set decision: the best match if its score does not exceed
    /// `threshold`.
    pub fn best_within(&self, threshold: f64) -> Option<&Match<'g>> {
        Some(self.best()).filter(|m| m.score <= threshold)
    }
}

fn rank_order(a: &Match<'_>, b: &Match<'_>) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then_with(|| a.entry.key.cmp(&b.entry.key))
}

/// A gallery with distance fields precomputed for one measure. Shared
/// read-only across concurrent probes.
pub struct Matcher<'g> {
    gallery: &'g Gallery,
    measure: Measure,
    chamfer: ChamferParams,
    prepared: Vec<PreparedPair<'g>>,
}

impl<'g> Matcher<'g> {
    pub fn new(gallery: &'g Gallery, measure: Measure, chamfer: ChamferParams) -> Self {
        let prepared = gallery
            .entries
            .iter()
            .map(|e| PreparedPair::candidate(&e.template, measure))
            .collect();
        Matcher {
            gallery,
            measure,
            chamfer,
            prepared,
        }
    }

    pub fn gallery(&self) -> &'g Gallery {
        self.gallery
    }

    /// Scores every entry except `exclude` and ranks them.
    pub fn identify(
        &self,
        probe: &TemplatePair,
        exclude: Option<&EntryKey>,
    ) -> Result<MatchResult<'g>, GalleryError> {
        let probe = PreparedPair::probe(probe, self.measure);
        let mut ranked = Vec::with_capacity(self.prepared.len());
        for (entry, candidate) in self.gallery.entries.iter().zip(&self.prepared) {
            if exclude == Some(&entry.key) {
                continue;
            }
            let score = probe
                .score(candidate, self.measure, self.chamfer)
                .map_err(|source| GalleryError::Score {
                    key: entry.key.clone(),
                    source,
                })?;
            ranked.push(Match { entry, score });
        }
        if ranked.is_empty() {
            return Err(GalleryError::Empty);
        }
        ranked.sort_by(rank_order);
        Ok(MatchResult { ranked })
    }
}

/// Keys that appear more than once, for dataset validation.
pub fn duplicate_keys<'a>(keys: impl IntoIterator<Item = &'a EntryKey>) -> Vec<EntryKey> {
    let mut seen = HashSet::new();
    keys.into_iter()
        .filter(|k| !seen.insert(*k))
        .cloned()
        .collect()
}
