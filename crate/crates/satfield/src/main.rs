//! `satfield` command-line front end.
//!
//! Exit codes: 0 on success, 2 on invalid input (flags, files, configs,
//! incompatible checkpoints), 3 when training diverges.
//!
//! Environment: `SATFIELD_OUT_DIR` sets the default output directory of
//! every command, `SATFIELD_THREADS` the worker thread count.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use satfield::bundle::{load_dataset, write_dataset, LoadedDataset};
use satfield::checkpoint::Checkpoint;
use satfield::config::{TrainConfig, Variant};
use satfield::error::TrainError;
use satfield::eval::{assemble_report, comparison_table, render_dataset_view, EvalOptions, ViewConditions};
use satfield::imageio::{write_png, write_raster, PixelFormat};
use satfield::sweep::{psnr_matrix, run_sweep, sweep_directions, SweepRequest};
use satfield::synth::{benchmark_scene, synth_scene, SynthOptions};
use satfield::time::parse_instant;
use satfield::trainer::{train, RunPaths};
use satfield_core::dataset::{SceneDataset, Split};
use satfield_core::date::Month;
use satfield_core::field::FieldParams;
use satfield_core::render::{RenderSettings, RenderedImage, SamplingMode};
use satfield_core::solar::{sun_direction, Site, SolarQuery};
use satfield_core::synthetic::CameraKind;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser, Debug)]
#[command(name = "satfield", version, about = "Seasonal neural radiance fields for satellite image sets")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SATFIELD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic seasonal dataset bundle plus an oracle manifest.
    Synth(SynthArgs),
    /// Train one variant on a dataset bundle.
    Train(TrainArgs),
    /// Render one view under chosen month and sun conditions.
    Render(RenderArgs),
    /// Render one view for every (month, day) sun direction of a sweep.
    Sweep(SweepArgs),
    /// Score checkpoints on the test split and tabulate them.
    Eval(EvalArgs),
    /// Print ephemeris sun directions as JSON.
    SunSweep(SunSweepArgs),
}

#[derive(Args, Debug)]
struct OutArg {
    /// Output directory, created if absent.
    #[arg(long, env = "SATFIELD_OUT_DIR", default_value = "satfield-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CameraArg {
    Rpc,
    Pinhole,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Png8,
    Png16,
    Tiff,
}

impl From<FormatArg> for PixelFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Png8 => PixelFormat::Png8,
            FormatArg::Png16 => PixelFormat::Png16,
            FormatArg::Tiff => PixelFormat::TiffF32,
        }
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Training views; view k is acquired in month (k mod 12) + 1.
    #[arg(long, default_value_t = 12)]
    views: usize,
    /// Image and DSM side length in pixels.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value = "rpc")]
    camera: CameraArg,
    /// Months (comma separated) that each get one held-out test view.
    #[arg(long, value_delimiter = ',')]
    test_months: Vec<u8>,
    /// Relative amplitude of the albedo texture, in [0, 1).
    #[arg(long, default_value_t = satfield::synth::BENCHMARK_TEXTURE)]
    texture: f64,
    /// Write the fixed seasonal benchmark scene instead (ignores views,
    /// seed, camera and test-months).
    #[arg(long)]
    benchmark: bool,
    #[arg(long, value_enum, default_value = "png16")]
    format: FormatArg,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset bundle directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_variant, default_value = "pn")]
    variant: Variant,
    /// Flat `key = value` config file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the small desk-scale preset instead of the full-size one.
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Image downsampling factor on load.
    #[arg(long, default_value_t = 1)]
    downsample: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Image whose camera is rendered (default: first test image, else the
    /// first image).
    #[arg(long)]
    image_id: Option<String>,
    /// Samples per ray (default: the checkpoint's training value).
    #[arg(long)]
    samples: Option<usize>,
    /// Area label used in output file names (default: the data directory name).
    #[arg(long)]
    area: Option<String>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Month embedding to render with, 1-12 (default: the image's month).
    #[arg(long)]
    month: Option<u8>,
    /// Sun direction from the ephemeris at this UTC instant, e.g. 2019-02-01T17:00Z.
    #[arg(long, conflicts_with = "sun_from_metadata")]
    sun_date: Option<String>,
    /// Use the image's recorded sun direction (the default).
    #[arg(long)]
    sun_from_metadata: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "3,9")]
    months: Vec<u8>,
    #[arg(long, value_delimiter = ',', default_value = "1,15,30")]
    days: Vec<u8>,
    #[arg(long, default_value_t = 2019)]
    year: i32,
    /// UTC time of day, HH:MM.
    #[arg(long, default_value = "17:00", value_parser = parse_hm)]
    time: (u8, u8),
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// One or more checkpoints; several produce a comparison table.
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    /// Opacity below which a pixel is excluded from the altitude metric.
    #[arg(long, default_value_t = 0.5)]
    opacity_threshold: f64,
    /// Subtract the mean signed altitude error before averaging.
    #[arg(long)]
    remove_bias: bool,
    #[arg(long)]
    area: Option<String>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct SunSweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "3,9")]
    months: Vec<u8>,
    #[arg(long, value_delimiter = ',', default_value = "1,15,30")]
    days: Vec<u8>,
    #[arg(long, default_value_t = 2019)]
    year: i32,
    #[arg(long, default_value = "17:00", value_parser = parse_hm)]
    time: (u8, u8),
    #[arg(long, default_value_t = Site::OMAHA.latitude, allow_hyphen_values = true)]
    lat: f64,
    #[arg(long, default_value_t = Site::OMAHA.longitude, allow_hyphen_values = true)]
    lon: f64,
    /// Write to this file instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse()
}

fn parse_hm(s: &str) -> std::result::Result<(u8, u8), String> {
    let (h, m) = s.split_once(':').ok_or_else(|| format!("expected HH:MM, got `{s}`"))?;
    let h: u8 = h.parse().map_err(|_| format!("bad hour in `{s}`"))?;
    let m: u8 = m.parse().map_err(|_| format!("bad minute in `{s}`"))?;
    if h > 23 || m > 59 {
        return Err(format!("time `{s}` out of range"));
    }
    Ok((h, m))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let format = PixelFormat::from(a.format);
    let (ds, oracle, manifest) = if a.benchmark {
        let (ds, oracle) = benchmark_scene(a.grid)?;
        (ds, oracle, json!({ "preset": "benchmark", "grid": a.grid }))
    } else {
        let opts = SynthOptions {
            views: a.views,
            grid: a.grid,
            seed: a.seed,
            camera: match a.camera {
                CameraArg::Rpc => CameraKind::Rpc,
                CameraArg::Pinhole => CameraKind::Pinhole,
            },
            test_months: a.test_months,
            texture_amplitude: a.texture,
            ..SynthOptions::default()
        };
        let (ds, oracle) = synth_scene(&opts)?;
        (ds, oracle, json!({ "options": opts }))
    };
    create_dir(&a.out.out)?;
    write_dataset(&a.out.out, &ds, None, format)?;
    let mut doc = manifest;
    doc["spec"] = serde_json::to_value(&oracle.spec)?;
    write_json(&a.out.out.join("oracle.json"), &doc)?;
    println!("wrote {} images to {}", ds.images.len(), a.out.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = if a.desk { TrainConfig::desk() } else { TrainConfig::default() };
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg = TrainConfig::parse_onto(cfg, &text).with_context(|| format!("in {}", path.display()))?;
    }
    cfg = cfg.with_variant(a.variant);
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    for o in &a.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
        cfg.set(k.trim(), v.trim()).map_err(anyhow::Error::msg)?;
    }
    cfg.validate()?;
    if a.downsample == 0 {
        bail!("--downsample must be >= 1");
    }
    let LoadedDataset { dataset, .. } = load_dataset(&a.data, a.downsample)?;
    let paths = RunPaths::new(&a.out.out);
    let outcome = train(&dataset, &cfg, Some(&paths), |r| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  psnr_train {:.2} dB  {:.1}s",
            r.epoch, r.loss, r.psnr_train, r.wall_seconds
        );
    })?;
    if let Some(model) = outcome.model {
        println!("{}", model.display());
    }
    Ok(())
}

struct Model {
    params: FieldParams,
    variant: String,
    settings: RenderSettings,
}

fn load_model(path: &Path, dataset: &SceneDataset, samples: Option<usize>) -> Result<Model> {
    let ckpt = Checkpoint::load(path)?;
    let trained = ckpt.params.config.num_images;
    if trained != dataset.images.len() {
        bail!(
            "checkpoint {} was trained on {trained} images but the dataset has {}",
            path.display(),
            dataset.images.len()
        );
    }
    let cfg: Option<TrainConfig> = ckpt.train_config.and_then(|v| serde_json::from_value(v).ok());
    let samples = samples.or(cfg.map(|c| c.samples_per_ray)).unwrap_or(RenderSettings::default().samples_per_ray);
    if samples == 0 {
        bail!("--samples must be >= 1");
    }
    let variant = ckpt.variant.unwrap_or_else(|| {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    Ok(Model {
        params: ckpt.params,
        variant,
        settings: RenderSettings {
            samples_per_ray: samples,
            mode: SamplingMode::Uniform,
        },
    })
}

fn area_label(data: &Path, area: &Option<String>) -> String {
    area.clone().unwrap_or_else(|| {
        data.canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "area".into())
    })
}

fn pick_view(ds: &SceneDataset, id: &Option<String>) -> Result<usize> {
    match id {
        Some(id) => ds.index_of(id).with_context(|| format!("no image with id `{id}`")),
        None => Ok(ds.indices(Split::Test).first().copied().unwrap_or(0)),
    }
}

fn label_safe(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '-' || *c == 'T' || *c == 'Z').collect()
}

fn write_render(out: &Path, stem: &str, r: &RenderedImage) -> Result<[PathBuf; 3]> {
    let files = [
        out.join(format!("{stem}_color.png")),
        out.join(format!("{stem}_altitude.tif")),
        out.join(format!("{stem}_opacity.tif")),
    ];
    write_png(&files[0], &r.color, false)?;
    write_raster(&files[1], &r.altitude)?;
    write_raster(&files[2], &r.opacity)?;
    Ok(files)
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let month = a.month.map(Month::new).transpose()?;
    let ds = load_dataset(&a.model.data, 1)?.dataset;
    let model = load_model(&a.model.checkpoint, &ds, a.model.samples)?;
    let view = pick_view(&ds, &a.model.image_id)?;
    let im = &ds.images[view];
    let month = month.unwrap_or(im.month());
    let (sun, sun_label) = match &a.sun_date {
        Some(text) => {
            let instant = parse_instant(text).map_err(anyhow::Error::msg)?;
            let site = ds.bounds.center();
            (sun_direction(&SolarQuery { instant, site })?, format!("sun{}", label_safe(text)))
        }
        None => (im.sun_direction, format!("sun-{}", label_safe(&im.id))),
    };
    let cond = ViewConditions {
        month,
        sun,
        image_index: 0,
    };
    let r = render_dataset_view(&model.params, &ds, view, cond, &model.settings)?;
    create_dir(&a.out.out)?;
    let stem = format!("{}_{}_m{month}_{sun_label}", area_label(&a.model.data, &a.model.area), im.id);
    for f in write_render(&a.out.out, &stem, &r.image)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let ds = load_dataset(&a.model.data, 1)?.dataset;
    let model = load_model(&a.model.checkpoint, &ds, a.model.samples)?;
    let req = SweepRequest {
        year: a.year,
        months: a.months,
        days: a.days,
        hour: a.time.0,
        minute: a.time.1,
        site: ds.bounds.center(),
        view: pick_view(&ds, &a.model.image_id)?,
        settings: model.settings,
    };
    sweep_directions(&req)?;
    let renders = run_sweep(&model.params, &ds, &req)?;
    create_dir(&a.out.out)?;
    let area = area_label(&a.model.data, &a.model.area);
    let mut entries = Vec::new();
    for r in &renders {
        let stem = format!("{area}_m{}_sun{}", r.month, label_safe(&r.entry.label));
        let files = write_render(&a.out.out, &stem, &r.image)?;
        entries.push(json!({
            "label": r.entry.label,
            "month": r.month.number(),
            "color": files[0].file_name().map(|f| f.to_string_lossy()),
            "altitude": files[1].file_name().map(|f| f.to_string_lossy()),
            "opacity": files[2].file_name().map(|f| f.to_string_lossy()),
            "direction": r.entry.direction,
            "azimuth_deg": r.entry.azimuth_deg,
            "elevation_deg": r.entry.elevation_deg,
        }));
    }
    let images: Vec<_> = renders.iter().map(|r| &r.image.color).collect();
    let manifest = json!({
        "variant": model.variant,
        "view": ds.images[req.view].id,
        "request": req,
        "entries": entries,
        "psnr_matrix": psnr_matrix(&images)?,
    });
    let path = a.out.out.join("sweep_manifest.json");
    write_json(&path, &manifest)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ds = load_dataset(&a.data, 1)?.dataset;
    let area = area_label(&a.data, &a.area);
    let mut reports = Vec::new();
    for path in &a.checkpoints {
        let model = load_model(path, &ds, a.samples)?;
        let options = EvalOptions {
            settings: model.settings,
            opacity_threshold: a.opacity_threshold,
            remove_bias: a.remove_bias,
        };
        reports.push(assemble_report(&model.variant, &area, &ds, &model.params, &options)?);
    }
    // Several checkpoints of one variant get their parent directory and
    // file stem as a suffix so the table columns stay distinguishable.
    let labels: Vec<String> = reports.iter().map(|r| r.variant.clone()).collect();
    for (r, path) in reports.iter_mut().zip(&a.checkpoints) {
        if labels.iter().filter(|l| **l == r.variant).count() > 1 {
            let name = |p: Option<&std::ffi::OsStr>| p.map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let parent = name(path.parent().and_then(|p| p.file_name()));
            r.variant = format!("{}:{parent}/{}", r.variant, name(path.file_stem()));
        }
    }
    create_dir(&a.out.out)?;
    write_json(&a.out.out.join("report.json"), &serde_json::to_value(&reports)?)?;
    let table = comparison_table(&reports);
    fs::write(a.out.out.join("report.txt"), &table).context("writing report.txt")?;
    print!("{table}");
    Ok(())
}

fn cmd_sun_sweep(a: SunSweepArgs) -> Result<()> {
    let req = SweepRequest {
        year: a.year,
        months: a.months,
        days: a.days,
        hour: a.time.0,
        minute: a.time.1,
        site: Site::new(a.lat, a.lon)?,
        view: 0,
        settings: RenderSettings::default(),
    };
    let doc: Vec<_> = sweep_directions(&req)?
        .into_iter()
        .map(|(_, e)| {
            json!({
                "date": e.label,
                "azimuth_deg": e.azimuth_deg,
                "elevation_deg": e.elevation_deg,
                "enu": e.direction,
            })
        })
        .collect();
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    match a.output {
        Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("thread count must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Render(a) => cmd_render(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Eval(a) => cmd_eval(a),
        Command::SunSweep(a) => cmd_sun_sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<TrainError>() {
                Some(TrainError::Diverged { .. }) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
