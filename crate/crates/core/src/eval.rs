//! Leave-one-out identification experiments over a dataset directory.
//!
//! Layout: `<root>/<finger-label>/<subject_id>/<session>.pgm`.
//!
//! Rates follow one fixed convention. TP and FP are trial level: a probe
//! is a true positive when its rank-1 match belongs to the same subject and
//! a false positive otherwise, so `tp + fp = 100`. TN and FN are comparison
//! level over the `M` comparisons performed: every misidentified probe is
//! one missed genuine match, `fn = 100 * misidentified / M` and
//! `tn = 100 - fn`. Accuracy counts each misidentification twice (the wrong
//! entry accepted and the mate rejected): `100 * (M - 2 * misidentified) / M`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::hint::black_box;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::gallery::{
    duplicate_keys, EntryKey, FingerLabel, Gallery, GalleryError, Matcher, Pipeline,
};
use crate::imagecore::{read_gray, ImageError, TemplatePair};
use crate::similarity::{pair_score, ChamferParams, Measure, SimilarityError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset root {} does not exist", .0.display())]
    MissingRoot(PathBuf),
    #[error("dataset root {} has no finger directories", .0.display())]
    NoFingers(PathBuf),
    #[error("dataset has no {0} directory")]
    MissingFinger(FingerLabel),
    #[error("no images found for {0}")]
    EmptyFinger(FingerLabel),
    #[error("unexpected file name {} (expected <session>.pgm with session >= 1)", .0.display())]
    BadFileName(PathBuf),
    #[error(
        "subject {subject} has {count} session(s) of {finger}; leave-one-out needs at least 2"
    )]
    TooFewSessions {
        subject: String,
        finger: FingerLabel,
        count: usize,
    },
    #[error("duplicate samples for {0}")]
    DuplicateSample(EntryKey),
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: GalleryError,
    },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Gallery(#[from] GalleryError),
    #[error("timing comparison failed: {0}")]
    Timing(#[from] SimilarityError),
    #[error("invalid baseline counts: {subjects} subjects x {sessions} sessions")]
    DegenerateCounts { subjects: usize, sessions: usize },
    #[error("workers must be >= 1")]
    NoWorkers,
    #[error("could not start worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub dataset_root: PathBuf,
    /// `None` evaluates every finger directory present.
    pub fingers: Option<Vec<FingerLabel>>,
    pub measure: Measure,
    pub pipeline: Pipeline,
    pub chamfer: ChamferParams,
    pub workers: usize,
    /// Number of (probe, candidate) pairs timed per measure by [`run_timing`].
    pub timing_pairs: usize,
}

impl EvalConfig {
    pub fn new(dataset_root: impl Into<PathBuf>) -> Self {
        EvalConfig {
            dataset_root: dataset_root.into(),
            fingers: None,
            measure: Measure::Chamfer,
            pipeline: Pipeline::default(),
            chamfer: ChamferParams::default(),
            workers: 1,
            timing_pairs: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub key: EntryKey,
    pub path: PathBuf,
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let io_err = |source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths = fs::read_dir(dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err)?;
    paths.sort();
    Ok(paths)
}

fn file_name(path: &Path) -> Option<&str> {
    path.file_name().and_then(|n| n.to_str())
}

/// Lists the samples of one finger, sorted by key.
pub fn scan_finger(root: &Path, finger: FingerLabel) -> Result<Vec<Sample>, EvalError> {
    let finger_dir = root.join(finger.as_str());
    if !finger_dir.is_dir() {
        return Err(EvalError::MissingFinger(finger));
    }
    let mut samples = Vec::new();
    for subject_dir in read_dir_sorted(&finger_dir)? {
        if !subject_dir.is_dir() {
            continue;
        }
        let Some(subject) = file_name(&subject_dir).filter(|s| !s.starts_with('.')) else {
            continue;
        };
        let subject = subject.to_string();
        let mut count = 0;
        for path in read_dir_sorted(&subject_dir)? {
            if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
                continue;
            }
            let session = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u32>().ok())
                .filter(|&s| s >= 1)
                .ok_or_else(|| EvalError::BadFileName(path.clone()))?;
            let key = EntryKey::new(subject.clone(), finger, session)?;
            samples.push(Sample { key, path });
            count += 1;
        }
        if count == 1 {
            return Err(EvalError::TooFewSessions {
                subject,
                finger,
                count,
            });
        }
    }
    if samples.is_empty() {
        return Err(EvalError::EmptyFinger(finger));
    }
    samples.sort_by(|a, b| a.key.cmp(&b.key));
    if let Some(dup) = duplicate_keys(samples.iter().map(|s| &s.key))
        .into_iter()
        .next()
    {
        return Err(EvalError::DuplicateSample(dup));
    }
    Ok(samples)
}

/// Finger directories present under `root`, in label order.
pub fn discover_fingers(root: &Path) -> Result<Vec<FingerLabel>, EvalError> {
    if !root.is_dir() {
        return Err(EvalError::MissingRoot(root.to_path_buf()));
    }
    let found: Vec<_> = FingerLabel::ALL
        .into_iter()
        .filter(|f| root.join(f.as_str()).is_dir())
        .collect();
    if found.is_empty() {
        return Err(EvalError::NoFingers(root.to_path_buf()));
    }
    Ok(found)
}

fn resolve_fingers(config: &EvalConfig) -> Result<Vec<FingerLabel>, EvalError> {
    if !config.dataset_root.is_dir() {
        return Err(EvalError::MissingRoot(config.dataset_root.clone()));
    }
    match &config.fingers {
        Some(list) if !list.is_empty() => {
            let mut list = list.clone();
            list.sort();
            list.dedup();
            Ok(list)
        }
        _ => discover_fingers(&config.dataset_root),
    }
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool, EvalError> {
    if workers == 0 {
        return Err(EvalError::NoWorkers);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EvalError::ThreadPool(e.to_string()))
}

/// Loads and preprocesses every sample of one finger into a gallery.
pub fn build_gallery(samples: &[Sample], pipeline: &Pipeline) -> Result<Gallery, EvalError> {
    let templates: Vec<TemplatePair> = samples
        .par_iter()
        .map(|s| {
            let image_err = |source: GalleryError| EvalError::Image {
                path: s.path.clone(),
                source,
            };
            let raw = read_gray(&s.path).map_err(|e: ImageError| image_err(e.into()))?;
            pipeline.template(&raw).map_err(image_err)
        })
        .collect::<Result<_, _>>()?;
    let mut gallery = Gallery::new(*pipeline);
    for (sample, template) in samples.iter().zip(templates) {
        gallery.enroll_template(sample.key.clone(), template)?;
    }
    Ok(gallery)
}

/// One leave-one-out trial.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub probe: EntryKey,
    pub best: EntryKey,
    pub score: f64,
    pub comparisons: usize,
    /// Candidates sharing the probe's subject.
    pub mates: usize,
}

impl Trial {
    pub fn correct(&self) -> bool {
        self.best.subject_id == self.probe.subject_id
    }
}

/// Uses every entry of `gallery` as a probe against all the others.
pub fn leave_one_out(
    gallery: &Gallery,
    measure: Measure,
    chamfer: ChamferParams,
    workers: usize,
) -> Result<Vec<Trial>, EvalError> {
    let pool = worker_pool(workers)?;
    let matcher = pool.install(|| Matcher::new(gallery, measure, chamfer));
    pool.install(|| {
        gallery
            .entries()
            .par_iter()
            .map(|entry| {
                let result = matcher.identify(&entry.template, Some(&entry.key))?;
                let best = result.best();
                let mates = result
                    .ranked
                    .iter()
                    .filter(|m| m.entry.key.subject_id == entry.key.subject_id)
                    .count();
                Ok(Trial {
                    probe: entry.key.clone(),
                    best: best.entry.key.clone(),
                    score: best.score,
                    comparisons: result.ranked.len(),
                    mates,
                })
            })
            .collect()
    })
}

/// Confusion-matrix percentages; see the module docs for the convention.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Rates {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    pub fn_: f64,
    pub accuracy: f64,
}

impl Rates {
    pub fn from_counts(probes: usize, correct: usize, comparisons: usize) -> Rates {
        let wrong = (probes - correct) as f64;
        let probes = probes as f64;
        let m = comparisons as f64;
        let fn_ = 100.0 * wrong / m;
        Rates {
            tp: 100.0 * correct as f64 / probes,
            fp: 100.0 * wrong / probes,
            tn: 100.0 - fn_,
            fn_,
            accuracy: 100.0 * (m - 2.0 * wrong) / m,
        }
    }

    fn mean<'a>(all: impl IntoIterator<Item = &'a Rates>) -> Rates {
        let mut sum = Rates::default();
        let mut n = 0.0;
        for r in all {
            sum.tp += r.tp;
            sum.fp += r.fp;
            sum.tn += r.tn;
            sum.fn_ += r.fn_;
            sum.accuracy += r.accuracy;
            n += 1.0;
        }
        Rates {
            tp: sum.tp / n,
            fp: sum.fp / n,
            tn: sum.tn / n,
            fn_: sum.fn_ / n,
            accuracy: sum.accuracy / n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FingerReport {
    pub finger: FingerLabel,
    pub subjects: usize,
    pub probes: usize,
    pub correct: usize,
    pub comparisons: usize,
    pub rates: Rates,
    /// Chance of a random rank-1 pick hitting the probe's subject, counting
    /// the probe's own sample among the mates.
    pub baseline_sessions: f64,
    /// Same, counting only the mates actually present in the gallery.
    pub baseline_mate: f64,
}

impl FingerReport {
    pub fn from_trials(finger: FingerLabel, trials: &[Trial]) -> FingerReport {
        let probes = trials.len();
        let correct = trials.iter().filter(|t| t.correct()).count();
        let comparisons = trials.iter().map(|t| t.comparisons).sum();
        let mut subjects: Vec<&str> = trials.iter().map(|t| t.probe.subject_id.as_str()).collect();
        subjects.sort_unstable();
        subjects.dedup();
        let chance = |extra: usize| {
            let total: f64 = trials
                .iter()
                .map(|t| ((t.mates + extra) as f64 / t.comparisons as f64).min(1.0))
                .sum();
            100.0 * total / probes as f64
        };
        FingerReport {
            finger,
            subjects: subjects.len(),
            probes,
            correct,
            comparisons,
            rates: Rates::from_counts(probes, correct, comparisons),
            baseline_sessions: chance(1),
            baseline_mate: chance(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub measure: Measure,
    pub per_finger: BTreeMap<FingerLabel, FingerReport>,
    /// Equal-weight mean of the per-finger rates.
    pub aggregate: Rates,
    /// TP rate with all fingers' trials pooled.
    pub pooled_tp: f64,
    pub wall_time: Duration,
    pub time_ratio_vs_ma: Option<f64>,
}

impl EvalReport {
    pub fn from_fingers(
        measure: Measure,
        fingers: Vec<FingerReport>,
        wall_time: Duration,
    ) -> EvalReport {
        let aggregate = Rates::mean(fingers.iter().map(|f| &f.rates));
        let probes: usize = fingers.iter().map(|f| f.probes).sum();
        let correct: usize = fingers.iter().map(|f| f.correct).sum();
        EvalReport {
            measure,
            aggregate,
            pooled_tp: 100.0 * correct as f64 / probes as f64,
            per_finger: fingers.into_iter().map(|f| (f.finger, f)).collect(),
            wall_time,
            time_ratio_vs_ma: None,
        }
    }

    /// Writes one row per finger plus an `all` row holding summed counts
    /// and mean rates.
    pub fn write_csv(&self, out: impl io::Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "finger",
            "measure",
            "subjects",
            "probes",
            "correct",
            "comparisons",
            "tp_rate",
            "fp_rate",
            "tn_rate",
            "fn_rate",
            "accuracy",
            "baseline_sessions",
            "baseline_mate",
            "wall_time_s",
            "time_ratio_vs_ma",
        ])?;
        let f4 = |v: f64| format!("{v:.4}");
        let ratio = self.time_ratio_vs_ma.map(f4).unwrap_or_default();
        let wall = f4(self.wall_time.as_secs_f64());
        for f in self.per_finger.values() {
            w.write_record([
                f.finger.as_str().to_string(),
                self.measure.code().to_string(),
                f.subjects.to_string(),
                f.probes.to_string(),
                f.correct.to_string(),
                f.comparisons.to_string(),
                f4(f.rates.tp),
                f4(f.rates.fp),
                f4(f.rates.tn),
                f4(f.rates.fn_),
                f4(f.rates.accuracy),
                f4(f.baseline_sessions),
                f4(f.baseline_mate),
                wall.clone(),
                ratio.clone(),
            ])?;
        }
        let sum = |g: fn(&FingerReport) -> usize| {
            self.per_finger.values().map(g).sum::<usize>().to_string()
        };
        let mean = |g: fn(&FingerReport) -> f64| {
            f4(self.per_finger.values().map(g).sum::<f64>() / self.per_finger.len() as f64)
        };
        w.write_record([
            "all".to_string(),
            self.measure.code().to_string(),
            sum(|f| f.subjects),
            sum(|f| f.probes),
            sum(|f| f.correct),
            sum(|f| f.comparisons),
            f4(self.aggregate.tp),
            f4(self.aggregate.fp),
            f4(self.aggregate.tn),
            f4(self.aggregate.fn_),
            f4(self.aggregate.accuracy),
            mean(|f| f.baseline_sessions),
            mean(|f| f.baseline_mate),
            wall,
            ratio,
        ])?;
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "measure: {}", self.measure.name())?;
        writeln!(
            f,
            "{:<14} {:>7} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10}",
            "finger", "probes", "TP (%)", "TN (%)", "FP (%)", "FN (%)", "Acc (%)", "chance (%)"
        )?;
        for r in self.per_finger.values() {
            writeln!(
                f,
                "{:<14} {:>7} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>10.4}",
                r.finger.as_str(),
                r.probes,
                r.rates.tp,
                r.rates.tn,
                r.rates.fp,
                r.rates.fn_,
                r.rates.accuracy,
                r.baseline_sessions
            )?;
        }
        let a = &self.aggregate;
        let probes: usize = self.per_finger.values().map(|r| r.probes).sum();
        writeln!(
            f,
            "{:<14} {:>7} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            "mean", probes, a.tp, a.tn, a.fp, a.fn_, a.accuracy
        )?;
        writeln!(f, "pooled TP (%): {:.4}", self.pooled_tp)?;
        if let Some(ratio) = self.time_ratio_vs_ma {
            writeln!(f, "time vs mean absolute (x): {ratio:.4}")?;
        }
        write!(f, "wall time (s): {:.4}", self.wall_time.as_secs_f64())
    }
}

/// Leave-one-out rank-1 identification, one gallery per finger.
pub fn run_loo(config: &EvalConfig) -> Result<EvalReport, EvalError> {
    let start = Instant::now();
    let fingers = resolve_fingers(config)?;
    let pool = worker_pool(config.workers)?;
    let mut reports = Vec::with_capacity(fingers.len());
    for finger in fingers {
        let samples = scan_finger(&config.dataset_root, finger)?;
        let gallery = pool.install(|| build_gallery(&samples, &config.pipeline))?;
        log::info!("{finger}: {} samples enrolled", gallery.len());
        let trials = leave_one_out(&gallery, config.measure, config.chamfer, config.workers)?;
        reports.push(FingerReport::from_trials(finger, &trials));
    }
    Ok(EvalReport::from_fingers(
        config.measure,
        reports,
        start.elapsed(),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureTiming {
    pub measure: Measure,
    pub pairs: usize,
    pub mean_seconds: f64,
    /// Mean time relative to the mean-absolute measure.
    pub ratio: f64,
}

/// Mean wall time per [`pair_score`] call for each measure over the same
/// `pairs`, run on the calling thread.
pub fn time_measures(
    templates: &[TemplatePair],
    pairs: &[(usize, usize)],
    chamfer: ChamferParams,
) -> Result<Vec<MeasureTiming>, EvalError> {
    let mut means = Vec::new();
    for measure in Measure::ALL {
        // untimed warm-up, which also surfaces scoring errors
        for &(a, b) in pairs.iter().take(4) {
            pair_score(&templates[a], &templates[b], measure, chamfer)?;
        }
        let start = Instant::now();
        for &(a, b) in pairs {
            black_box(pair_score(
                black_box(&templates[a]),
                black_box(&templates[b]),
                measure,
                chamfer,
            )?);
        }
        means.push((
            measure,
            start.elapsed().as_secs_f64() / pairs.len().max(1) as f64,
        ));
    }
    let base = means
        .iter()
        .find(|(m, _)| *m == Measure::MeanAbsolute)
        .map(|(_, t)| *t)
        .unwrap_or(1.0)
        .max(f64::MIN_POSITIVE);
    Ok(means
        .into_iter()
        .map(|(measure, mean_seconds)| MeasureTiming {
            measure,
            pairs: pairs.len(),
            mean_seconds,
            ratio: mean_seconds / base,
        })
        .collect())
}

/// The first `limit` ordered pairs `(i, j)`, `i != j`, cycling the probe.
pub fn timing_pairs(count: usize, limit: usize) -> Vec<(usize, usize)> {
    if count < 2 {
        return Vec::new();
    }
    let mut pairs = Vec::with_capacity(limit);
    let mut offset = 1;
    'outer: while offset < count {
        for i in 0..count {
            if pairs.len() == limit {
                break 'outer;
            }
            pairs.push((i, (i + offset) % count));
        }
        offset += 1;
    }
    pairs
}

/// Relative cost of the three measures on the dataset's templates. Runs on
/// a single thread regardless of `config.workers`.
pub fn run_timing(config: &EvalConfig) -> Result<Vec<MeasureTiming>, EvalError> {
    let fingers = resolve_fingers(config)?;
    let mut templates = Vec::new();
    for finger in fingers {
        let samples = scan_finger(&config.dataset_root, finger)?;
        let gallery = build_gallery(&samples, &config.pipeline)?;
        templates.extend(gallery.entries().iter().map(|e| e.template.clone()));
    }
    let pairs = timing_pairs(templates.len(), config.timing_pairs);
    time_measures(&templates, &pairs, config.chamfer)
}

/// Chance rates of a uniformly random rank-1 pick, in percent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Baseline {
    /// `sessions / (subjects * sessions - 1)`, capped at 100.
    pub sessions: f64,
    /// `(sessions - 1) / (subjects * sessions - 1)`, capped at 100.
    pub mate_count: f64,
}

pub fn random_baseline(subjects: usize, sessions: usize) -> Result<Baseline, EvalError> {
    if subjects == 0 || sessions < 2 {
        return Err(EvalError::DegenerateCounts { subjects, sessions });
    }
    let others = (subjects * sessions - 1) as f64;
    Ok(Baseline {
        sessions: (100.0 * sessions as f64 / others).min(100.0),
        mate_count: (100.0 * (sessions - 1) as f64 / others).min(100.0),
    })
}
