//! `pushframe`: plan, capture, reconstruct and sweep from the command line.
//!
//! Exit codes: 0 success, 1 I/O or unexpected failure, 2 invalid input,
//! 3 outputs written but at least one block stopped at its iteration cap.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pushframe::capture::{flatfield, scan, CaptureConfig, CroppedSamples, ScanDirection};
use pushframe::experiments::{self, Method, PanConfig, SweepConfig};
use pushframe::io::{self, SampleData};
use pushframe::metrics::QualityReport;
use pushframe::recon::{constraint_sigma, epsilon_for_noise, reconstruct_image, ReconConfig, ReconReport};
use pushframe::{rows_for_rate, Image, Ordering, SensingPlan};

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "pushframe", version, about = "Pushframe compressive sampling with binarized noiselets")]
struct Cli {
    /// Worker threads for block solves (defaults to all cores).
    #[arg(long, env = "PUSHFRAME_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a sensing plan and write it as JSON.
    Plan(PlanArgs),
    /// Write the n×(n+1) SLM mask as a PGM.
    Pattern(PatternArgs),
    /// Simulate a pushframe pass over a scene and write the sample matrix.
    Capture(CaptureArgs),
    /// Recover an image from captured samples.
    Reconstruct(ReconstructArgs),
    /// Rate × block width × method sweep on one scene.
    Sweep(SweepArgs),
    /// Pan-sharpened versus independent colour recovery.
    Pan(PanArgs),
}

#[derive(Args, Debug, Serialize)]
struct PlanSpec {
    /// Column height (power of two).
    #[arg(long, default_value_t = 256)]
    n: usize,
    /// Complex rows per column; overrides --rate.
    #[arg(long)]
    m: Option<usize>,
    /// Sampling rate m/n, rounded to an even row count.
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[arg(long, short = 'b', default_value_t = 1)]
    block_width: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = Ordering::Mirrored)]
    ordering: Ordering,
    /// Repeat the first column's rows across the block.
    #[arg(long)]
    naive: bool,
}

impl PlanSpec {
    fn build(&self) -> pushframe::Result<SensingPlan> {
        let m = self.m.unwrap_or_else(|| rows_for_rate(self.n, self.rate));
        SensingPlan::new(self.n, m, self.block_width, self.seed, self.ordering, self.naive)
    }
}

#[derive(Args, Debug, Serialize)]
struct PlanArgs {
    #[command(flatten)]
    spec: PlanSpec,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PatternArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = Ordering::Mirrored)]
    ordering: Ordering,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CaptureArgs {
    /// PGM or PPM scene; colour scenes produce one sample file per band.
    #[arg(long)]
    scene: PathBuf,
    /// Plan JSON supplying n and ordering; otherwise taken from the scene height.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, default_value_t = Ordering::Mirrored)]
    ordering: Ordering,
    #[arg(long, default_value = "forward")]
    direction: ScanDirection,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Edge falloff of the per-pattern optical gain (0 = ideal optics).
    #[arg(long, default_value_t = 0.0)]
    vignetting: f64,
    /// Treat the scene as a white reference and write flat-field weights.
    #[arg(long)]
    flatfield_out: Option<PathBuf>,
    /// Apply flat-field weights to the cropped samples.
    #[arg(long)]
    flatfield: Option<PathBuf>,
    /// Also write the uncropped staggered matrix.
    #[arg(long)]
    raw_out: Option<PathBuf>,
    /// Cropped samples (`.csv` or `.pfsm`).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ReconstructArgs {
    /// Sample files: one for a mono scene, three (R, G, B) for colour.
    #[arg(long, num_args = 1.., required = true)]
    samples: Vec<PathBuf>,
    /// Plan JSON supplying n, seed, ordering and mode.
    #[arg(long)]
    plan: PathBuf,
    /// Retain this fraction of rows before solving (default: the plan's).
    #[arg(long)]
    rate: Option<f64>,
    /// Block width (default: the plan's).
    #[arg(long, short = 'b')]
    block_width: Option<usize>,
    /// Data radius; overrides --noise-sigma.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Per-reading noise level used to set the data radius.
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Ground truth for a PSNR/SSIM line in the report.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Comma-separated rates.
    #[arg(long, default_value = "0.1,0.2,0.4,0.6,0.8,1.0", value_delimiter = ',')]
    rates: Vec<f64>,
    #[arg(long, default_value = "1,4,16", value_delimiter = ',')]
    block_widths: Vec<usize>,
    #[arg(long, default_value = "pooled,naive", value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = Ordering::Mirrored)]
    ordering: Ordering,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct PanArgs {
    #[arg(long)]
    scene_color: PathBuf,
    /// Effective rates compared against independent colour recovery.
    #[arg(long, default_value = "0.15,0.25,0.4", value_delimiter = ',')]
    mbar_list: Vec<f64>,
    /// Pan retention grid, fractions of n.
    #[arg(long, default_value = "0.25,0.5,0.75,1.0", value_delimiter = ',')]
    grid: Vec<f64>,
    /// Extra effective rates for the pan curve.
    #[arg(long, default_value = "0.1,0.125,0.175,0.2,0.3,0.35", value_delimiter = ',')]
    curve_rates: Vec<f64>,
    #[arg(long, short = 'b', default_value_t = 256)]
    block_width: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = Ordering::Mirrored)]
    ordering: Ordering,
    #[arg(long)]
    out_csv: PathBuf,
    /// Sample-fraction summary CSV.
    #[arg(long)]
    fractions_csv: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Command outcome beyond plain success.
enum Outcome {
    Done,
    Unconverged,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Unconverged) => {
            eprintln!("warning: some blocks reached the iteration limit before converging");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.chain().any(|c| c.downcast_ref::<pushframe::Error>().is_some_and(|p| p.is_validation()));
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<Outcome> {
    let started = Instant::now();
    match cmd {
        Command::Plan(a) => cmd_plan(a, started),
        Command::Pattern(a) => cmd_pattern(a, started),
        Command::Capture(a) => cmd_capture(a, started),
        Command::Reconstruct(a) => cmd_reconstruct(a, started),
        Command::Sweep(a) => cmd_sweep(a, started),
        Command::Pan(a) => cmd_pan(a, started),
    }
}

fn finish(mut m: RunManifest, explicit: Option<&Path>, primary: &Path, started: Instant) -> anyhow::Result<()> {
    m.wall_time_s = started.elapsed().as_secs_f64();
    let path = explicit.map_or_else(|| manifest::default_path(primary), Path::to_path_buf);
    m.write(&path).with_context(|| format!("writing manifest {}", path.display()))
}

fn load_plan(path: &Path) -> anyhow::Result<SensingPlan> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading plan {}", path.display()))?;
    Ok(SensingPlan::from_json(&text)?)
}

fn cmd_plan(a: PlanArgs, started: Instant) -> anyhow::Result<Outcome> {
    let plan = a.spec.build()?;
    std::fs::write(&a.out, plan.to_json()?).with_context(|| format!("writing {}", a.out.display()))?;
    let mut m = RunManifest::new("plan", &a)?;
    m.seed = Some(plan.seed());
    m.plan = Some(plan.slm().digest());
    m.outputs.push(a.out.clone());
    finish(m, None, &a.out, started)?;
    Ok(Outcome::Done)
}

fn cmd_pattern(a: PatternArgs, started: Instant) -> anyhow::Result<Outcome> {
    let (slm, _) = pushframe::build_slm(a.n, a.ordering)?;
    slm.to_image().save(&a.out)?;
    let mut m = RunManifest::new("pattern", &a)?;
    m.plan = Some(slm.digest());
    m.outputs.push(a.out.clone());
    finish(m, None, &a.out, started)?;
    println!("{}", slm.digest());
    Ok(Outcome::Done)
}

fn band_path(out: &Path, band: Option<&str>) -> PathBuf {
    match band {
        None => out.to_path_buf(),
        Some(tag) => {
            let stem = out.file_stem().unwrap_or_default().to_string_lossy();
            let ext = out.extension().map_or(String::new(), |e| format!(".{}", e.to_string_lossy()));
            out.with_file_name(format!("{stem}_{tag}{ext}"))
        }
    }
}

fn cmd_capture(a: CaptureArgs, started: Instant) -> anyhow::Result<Outcome> {
    let scene = Image::load(&a.scene).with_context(|| format!("loading scene {}", a.scene.display()))?;
    let (n, ordering) = match &a.plan {
        Some(p) => {
            let plan = load_plan(p)?;
            (plan.n(), plan.ordering())
        }
        None => (scene.height(), a.ordering),
    };
    let (slm, _) = pushframe::build_slm(n, ordering)?;
    let k = slm.pattern_count();
    let gains = (a.vignetting != 0.0).then(|| {
        (0..k)
            .map(|c| 1.0 - a.vignetting * (2.0 * c as f64 / (k - 1) as f64 - 1.0).powi(2))
            .collect::<Vec<f64>>()
    });
    let weights = a.flatfield.as_ref().map(io::load_flatfield).transpose()?;

    let mut m = RunManifest::new("capture", &a)?;
    m.seed = Some(a.noise_seed);
    m.plan = Some(slm.digest());
    m.inputs.push(a.scene.clone());
    m.inputs.extend(a.plan.clone());
    m.inputs.extend(a.flatfield.clone());

    let tags: &[Option<&str>] = if scene.band_count() == 3 { &[Some("r"), Some("g"), Some("b")] } else { &[None] };
    for (i, tag) in tags.iter().enumerate() {
        let cfg = CaptureConfig {
            direction: a.direction,
            gains: gains.clone(),
            noise_sigma: a.noise_sigma,
            // Independent noise per band.
            noise_seed: a.noise_seed.wrapping_add(i as u64),
        };
        let raw = scan(scene.band(i), &slm, &cfg)?;
        if let Some(p) = &a.raw_out {
            let p = band_path(p, *tag);
            io::save_samples(&p, &SampleData::Raw(raw.clone()))?;
            m.outputs.push(p);
        }
        let mut cropped = raw.crop()?;
        if let Some(p) = &a.flatfield_out {
            let p = band_path(p, *tag);
            io::save_flatfield(&p, &flatfield(&cropped, &slm)?)?;
            m.outputs.push(p);
        }
        if let Some(w) = &weights {
            cropped.apply_flatfield(w)?;
        }
        let p = band_path(&a.out, *tag);
        io::save_samples(&p, &SampleData::Cropped(cropped))?;
        m.outputs.push(p);
    }
    finish(m, a.manifest.as_deref(), &a.out, started)?;
    Ok(Outcome::Done)
}

fn cmd_reconstruct(a: ReconstructArgs, started: Instant) -> anyhow::Result<Outcome> {
    let base = load_plan(&a.plan)?;
    let n = base.n();
    let m_rows = a.rate.map_or(base.m(), |r| rows_for_rate(n, r));
    let b = a.block_width.unwrap_or(base.b());
    let plan = SensingPlan::new(n, m_rows, b, base.seed(), base.ordering(), base.is_naive())?;
    if a.samples.len() != 1 && a.samples.len() != 3 {
        return Err(pushframe::Error::Shape(format!("{} sample files; expected 1 or 3", a.samples.len())).into());
    }
    let samples: Vec<CroppedSamples> = a
        .samples
        .iter()
        .map(|p| -> anyhow::Result<CroppedSamples> {
            let data = io::load_samples(p).with_context(|| format!("loading samples {}", p.display()))?;
            Ok(data.into_cropped()?)
        })
        .collect::<anyhow::Result<_>>()?;
    for s in &samples {
        if s.pattern_count() != n + 1 {
            return Err(pushframe::Error::Shape(format!(
                "samples have {} pattern columns; plan needs {}",
                s.pattern_count(),
                n + 1
            ))
            .into());
        }
    }

    // Real constraints in a full-width block.
    let measurements = m_rows * b;
    let epsilon = match (a.epsilon, a.noise_sigma) {
        (Some(e), _) => e,
        (None, Some(s)) => epsilon_for_noise(constraint_sigma(s, n), measurements),
        (None, None) => 0.0,
    };
    let cfg = ReconConfig { epsilon, b, max_iters_per_stage: a.max_iters, ..ReconConfig::default() };

    let mut bands = Vec::new();
    let mut reports: Vec<ReconReport> = Vec::new();
    for s in &samples {
        let (img, rep) = reconstruct_image(s, &plan, &cfg)?;
        bands.push(img);
        reports.push(rep);
    }
    let image = Image::from_bands(bands)?;
    image.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;

    #[derive(Serialize)]
    struct Report<'r> {
        m: usize,
        b: usize,
        epsilon: f64,
        bands: &'r [ReconReport],
        quality: Option<QualityReport>,
    }
    let quality = match &a.truth {
        Some(p) => Some(QualityReport::compare(&Image::load(p)?, &image)?),
        None => None,
    };
    if let Some(q) = &quality {
        println!("psnr_db {:.3} ssim {:.4}", q.psnr_db, q.ssim);
    }
    let report = Report { m: m_rows, b, epsilon, bands: &reports, quality };

    let mut mf = RunManifest::new("reconstruct", &a)?;
    mf.seed = Some(plan.seed());
    mf.plan = Some(a.plan.display().to_string());
    mf.inputs.extend(a.samples.iter().cloned());
    mf.inputs.push(a.plan.clone());
    mf.outputs.push(a.out.clone());
    if let Some(p) = &a.report {
        std::fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
        mf.outputs.push(p.clone());
    }
    finish(mf, a.manifest.as_deref(), &a.out, started)?;
    Ok(if reports.iter().all(|r| r.all_converged) { Outcome::Done } else { Outcome::Unconverged })
}

fn cmd_sweep(a: SweepArgs, started: Instant) -> anyhow::Result<Outcome> {
    let scene = Image::load(&a.scene)?;
    if scene.band_count() != 1 {
        return Err(pushframe::Error::Shape("sweep takes a single-band scene".into()).into());
    }
    let cfg = SweepConfig {
        rates: a.rates.clone(),
        block_widths: a.block_widths.clone(),
        methods: a.methods.clone(),
        seed: a.seed,
        ordering: a.ordering,
        recon: ReconConfig::default(),
    };
    let rows = experiments::mono_sweep(scene.band(0), &cfg)?;
    experiments::write_rows(&a.out_csv, &rows)?;
    let mut m = RunManifest::new("sweep", &cfg)?;
    m.seed = Some(a.seed);
    m.inputs.push(a.scene.clone());
    m.outputs.push(a.out_csv.clone());
    finish(m, a.manifest.as_deref(), &a.out_csv, started)?;
    Ok(if rows.iter().all(|r| r.converged) { Outcome::Done } else { Outcome::Unconverged })
}

fn cmd_pan(a: PanArgs, started: Instant) -> anyhow::Result<Outcome> {
    let scene = Image::load(&a.scene_color)?;
    let cfg = PanConfig {
        mbar_rates: a.mbar_list.clone(),
        pan_fractions: a.grid.clone(),
        curve_rates: a.curve_rates.clone(),
        b: a.block_width,
        seed: a.seed,
        ordering: a.ordering,
        recon: ReconConfig::default(),
    };
    let res = experiments::pan_experiment(&scene, &cfg)?;
    experiments::write_rows(&a.out_csv, &res.rows)?;
    let mut m = RunManifest::new("pan", &cfg)?;
    m.seed = Some(a.seed);
    m.inputs.push(a.scene_color.clone());
    m.outputs.push(a.out_csv.clone());
    if let Some(p) = &a.fractions_csv {
        experiments::write_rows(p, &res.fractions)?;
        m.outputs.push(p.clone());
    }
    for f in &res.fractions {
        println!(
            "mbar_rate {:.3} independent_ssim {:.4} best_pan_ssim {:.4} fraction {}",
            f.mbar_rate,
            f.independent_ssim,
            f.best_pan_ssim,
            f.fraction.map_or("n/a".into(), |v| format!("{v:.3}{}", if f.upper_bound { " (bound)" } else { "" }))
        );
    }
    finish(m, a.manifest.as_deref(), &a.out_csv, started)?;
    Ok(Outcome::Done)
}
