//! Command-line front end: `preprocess`, `enroll`, `identify`, `evaluate`
//! and `bench`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::eval::{discover_fingers, run_loo, run_timing, scan_finger, EvalConfig};
use crate::filters::{NoiseParams, PipelineParams, SobelParams};
use crate::gallery::{EntryKey, FingerLabel, Gallery, Pipeline, MANIFEST_FILE};
use crate::imagecore::{read_gray, write_binary};
use crate::roi::{RoiSpec, DEFAULT_ROI_HEIGHT, DEFAULT_ROI_WIDTH};
use crate::similarity::{ChamferParams, Measure};

#[derive(Debug, Parser)]
#[command(
    name = "fkp",
    version,
    about = "Finger-knuckle-print preprocessing, matching and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the shadow and light templates of one image as P4 files.
    Preprocess(PreprocessArgs),
    /// Add one image, or a whole dataset, to a gallery directory.
    Enroll(EnrollArgs),
    /// Rank a probe image against a gallery.
    Identify(IdentifyArgs),
    /// Leave-one-out rank-1 evaluation over a dataset.
    Evaluate(EvaluateArgs),
    /// Relative cost of the three measures on a dataset's templates.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Shadow detector threshold t.
    #[arg(long, default_value_t = 8)]
    pub shadow_t: u32,
    /// Shadow detector offset d.
    #[arg(long, default_value_t = 4)]
    pub shadow_d: usize,
    /// Light detector threshold t.
    #[arg(long, default_value_t = 5)]
    pub light_t: u32,
    /// Light detector offset d.
    #[arg(long, default_value_t = 4)]
    pub light_d: usize,
    /// Shadow noise filter popcount threshold.
    #[arg(long, default_value_t = 13)]
    pub shadow_nr_t: u32,
    /// Shadow noise filter initial half-window (both axes).
    #[arg(long, default_value_t = 10)]
    pub shadow_nr_a: usize,
    /// Light noise filter popcount threshold.
    #[arg(long, default_value_t = 7)]
    pub light_nr_t: u32,
    /// Light noise filter initial half-window (both axes).
    #[arg(long, default_value_t = 5)]
    pub light_nr_a: usize,
    #[arg(long, default_value_t = DEFAULT_ROI_WIDTH)]
    pub roi_w: usize,
    #[arg(long, default_value_t = DEFAULT_ROI_HEIGHT)]
    pub roi_h: usize,
    /// ROI left offset; centered when omitted.
    #[arg(long)]
    pub roi_x: Option<usize>,
    /// ROI top offset; centered when omitted.
    #[arg(long)]
    pub roi_y: Option<usize>,
    /// Crop the ROI before running the detectors.
    #[arg(long)]
    pub roi_first: bool,
}

impl PipelineArgs {
    pub fn pipeline(&self) -> Result<Pipeline> {
        let params = PipelineParams {
            shadow_sobel: SobelParams::new(self.shadow_d, self.shadow_t).context("--shadow-d")?,
            light_sobel: SobelParams::new(self.light_d, self.light_t).context("--light-d")?,
            shadow_noise: NoiseParams::new(self.shadow_nr_t, self.shadow_nr_a, self.shadow_nr_a)
                .context("--shadow-nr-t/--shadow-nr-a")?,
            light_noise: NoiseParams::new(self.light_nr_t, self.light_nr_a, self.light_nr_a)
                .context("--light-nr-t/--light-nr-a")?,
        };
        if self.roi_w == 0 || self.roi_h == 0 {
            bail!("--roi-w and --roi-h must be at least 1");
        }
        Ok(Pipeline {
            params,
            roi: RoiSpec {
                width: self.roi_w,
                height: self.roi_h,
                offset_x: self.roi_x,
                offset_y: self.roi_y,
            },
            roi_first: self.roi_first,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    /// Similarity measure: ma (mean absolute), hd (Hausdorff) or cd (Chamfer).
    #[arg(long, default_value = "cd")]
    pub measure: Measure,
    /// Chamfer distance cap.
    #[arg(long, default_value_t = 2.0)]
    pub tau: f64,
}

impl MatchArgs {
    fn chamfer(&self) -> Result<ChamferParams> {
        ChamferParams::new(self.tau).context("--tau")
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Input P5 graymap.
    #[arg(long)]
    pub input: PathBuf,
    /// Output prefix; writes <prefix>_shadow.pbm and <prefix>_light.pbm.
    #[arg(long)]
    pub out_prefix: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    /// Gallery directory, created if missing.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Single P5 image to enroll.
    #[arg(long, conflicts_with = "dataset", requires_all = ["subject", "finger", "session"])]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub subject: Option<String>,
    #[arg(long)]
    pub finger: Option<FingerLabel>,
    #[arg(long)]
    pub session: Option<u32>,
    /// Enroll every image of a dataset (<root>/<finger>/<subject>/<session>.pgm).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Fingers to take from --dataset, comma separated; all present by default.
    #[arg(long, value_delimiter = ',')]
    pub fingers: Vec<FingerLabel>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    /// Probe P5 graymap.
    #[arg(long)]
    pub probe: PathBuf,
    #[command(flatten)]
    pub matching: MatchArgs,
    /// Number of ranked candidates to print.
    #[arg(long, default_value_t = 5)]
    pub top: usize,
    /// Reject the best match when its score exceeds this value.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Fingers to evaluate, comma separated; all present by default.
    #[arg(long, value_delimiter = ',')]
    pub fingers: Vec<FingerLabel>,
    #[command(flatten)]
    pub matching: MatchArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write the report as CSV.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    /// Also measure the time of the chosen measure relative to mean absolute.
    #[arg(long)]
    pub timing: bool,
    /// Pairs timed per measure when --timing is set.
    #[arg(long, default_value_t = 200)]
    pub timing_pairs: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub fingers: Vec<FingerLabel>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value_t = 2.0)]
    pub tau: f64,
    /// Pairs timed per measure.
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn fingers_option(list: &[FingerLabel]) -> Option<Vec<FingerLabel>> {
    (!list.is_empty()).then(|| list.to_vec())
}

/// Preprocesses `input` and writes `<prefix>_shadow.pbm` and
/// `<prefix>_light.pbm`. Returns the two paths.
pub fn cmd_preprocess(
    input: &Path,
    out_prefix: &Path,
    pipeline: &Pipeline,
) -> Result<(PathBuf, PathBuf)> {
    let raw = read_gray(input).with_context(|| format!("reading {}", input.display()))?;
    let template = pipeline
        .template(&raw)
        .with_context(|| format!("preprocessing {}", input.display()))?;
    let prefix = out_prefix.as_os_str().to_string_lossy();
    let shadow = PathBuf::from(format!("{prefix}_shadow.pbm"));
    let light = PathBuf::from(format!("{prefix}_light.pbm"));
    write_binary(&template.shadow, &shadow)?;
    write_binary(&template.light, &light)?;
    Ok((shadow, light))
}

fn open_or_create_gallery(dir: &Path, requested: Pipeline) -> Result<Gallery> {
    if !dir.join(MANIFEST_FILE).exists() {
        return Ok(Gallery::new(requested));
    }
    let gallery =
        Gallery::load(dir).with_context(|| format!("loading gallery {}", dir.display()))?;
    if *gallery.pipeline() != requested {
        log::warn!(
            "gallery {} was built with different pipeline parameters; keeping the stored ones",
            dir.display()
        );
    }
    Ok(gallery)
}

fn cmd_enroll(args: &EnrollArgs, out: &mut dyn Write) -> Result<()> {
    let mut gallery = open_or_create_gallery(&args.gallery, args.pipeline.pipeline()?)?;
    let before = gallery.len();
    match (&args.input, &args.dataset) {
        (Some(input), None) => {
            let subject = args
                .subject
                .clone()
                .context("--subject is required with --input")?;
            let finger = args.finger.context("--finger is required with --input")?;
            let session = args.session.context("--session is required with --input")?;
            let key = EntryKey::new(subject, finger, session)?;
            let raw = read_gray(input).with_context(|| format!("reading {}", input.display()))?;
            gallery
                .enroll(&raw, key)
                .with_context(|| format!("enrolling {}", input.display()))?;
        }
        (None, Some(root)) => {
            let fingers = match fingers_option(&args.fingers) {
                Some(f) => f,
                None => discover_fingers(root)?,
            };
            for finger in fingers {
                for sample in scan_finger(root, finger)? {
                    let raw = read_gray(&sample.path)
                        .with_context(|| format!("reading {}", sample.path.display()))?;
                    gallery
                        .enroll(&raw, sample.key)
                        .with_context(|| format!("enrolling {}", sample.path.display()))?;
                }
            }
        }
        _ => bail!("enroll needs exactly one of --input or --dataset"),
    }
    gallery
        .save(&args.gallery)
        .with_context(|| format!("saving gallery {}", args.gallery.display()))?;
    writeln!(
        out,
        "enrolled {} sample(s); gallery {} now holds {}",
        gallery.len() - before,
        args.gallery.display(),
        gallery.len()
    )?;
    Ok(())
}

fn cmd_identify(args: &IdentifyArgs, out: &mut dyn Write) -> Result<()> {
    if !args.gallery.join(MANIFEST_FILE).exists() {
        bail!("gallery {} has no {MANIFEST_FILE}", args.gallery.display());
    }
    let gallery = Gallery::load(&args.gallery)
        .with_context(|| format!("loading gallery {}", args.gallery.display()))?;
    if gallery.is_empty() {
        bail!("gallery {} is empty", args.gallery.display());
    }
    let raw =
        read_gray(&args.probe).with_context(|| format!("reading {}", args.probe.display()))?;
    let probe = gallery
        .pipeline()
        .template(&raw)
        .with_context(|| format!("preprocessing {}", args.probe.display()))?;
    let result = gallery.identify(
        &probe,
        args.matching.measure,
        args.matching.chamfer()?,
        None,
    )?;
    let best = result.best();
    match args.threshold {
        Some(t) if best.score > t => writeln!(
            out,
            "best: none (closest {} scored {:.4} > threshold {t:.4})",
            best.entry.key.subject_id, best.score
        )?,
        _ => writeln!(
            out,
            "best: {} {} {} score {:.4}",
            best.entry.key.subject_id, best.entry.key.finger, best.entry.key.session, best.score
        )?,
    }
    writeln!(
        out,
        "{:>4}  {:<16} {:<12} {:>7} {:>10}",
        "rank", "subject", "finger", "session", "score"
    )?;
    for (rank, m) in result.ranked.iter().take(args.top).enumerate() {
        writeln!(
            out,
            "{:>4}  {:<16} {:<12} {:>7} {:>10.4}",
            rank + 1,
            m.entry.key.subject_id,
            m.entry.key.finger.as_str(),
            m.entry.key.session,
            m.score
        )?;
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let config = EvalConfig {
        dataset_root: args.dataset.clone(),
        fingers: fingers_option(&args.fingers),
        measure: args.matching.measure,
        pipeline: args.pipeline.pipeline()?,
        chamfer: args.matching.chamfer()?,
        workers: args.workers.unwrap_or_else(default_workers),
        timing_pairs: args.timing_pairs,
    };
    let mut report =
        run_loo(&config).with_context(|| format!("evaluating {}", args.dataset.display()))?;
    if args.timing {
        let timings = run_timing(&config)?;
        report.time_ratio_vs_ma = timings
            .iter()
            .find(|t| t.measure == config.measure)
            .map(|t| t.ratio);
    }
    if let Some(path) = &args.report_out {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report
            .write_csv(BufWriter::new(file))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    writeln!(out, "{report}")?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let config = EvalConfig {
        dataset_root: args.dataset.clone(),
        fingers: fingers_option(&args.fingers),
        pipeline: args.pipeline.pipeline()?,
        chamfer: ChamferParams::new(args.tau).context("--tau")?,
        workers: 1,
        timing_pairs: args.pairs,
        ..EvalConfig::new(&args.dataset)
    };
    let timings =
        run_timing(&config).with_context(|| format!("timing {}", args.dataset.display()))?;
    writeln!(
        out,
        "{:<20} {:>8} {:>16} {:>10}",
        "measure", "pairs", "mean (us)", "time (x)"
    )?;
    for t in timings {
        writeln!(
            out,
            "{:<20} {:>8} {:>16.4} {:>10.4}",
            t.measure.name(),
            t.pairs,
            t.mean_seconds * 1e6,
            t.ratio
        )?;
    }
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Preprocess(args) => {
            let (shadow, light) =
                cmd_preprocess(&args.input, &args.out_prefix, &args.pipeline.pipeline()?)?;
            writeln!(out, "wrote {} and {}", shadow.display(), light.display())?;
            Ok(())
        }
        Command::Enroll(args) => cmd_enroll(args, out),
        Command::Identify(args) => cmd_identify(args, out),
        Command::Evaluate(args) => cmd_evaluate(args, out),
        Command::Bench(args) => cmd_bench(args, out),
    }
}
