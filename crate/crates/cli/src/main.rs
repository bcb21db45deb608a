use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use canvas_core::io::{self, ImageMetadata, SynthesisRecord};
use canvas_core::report::{compare_reports, count_report, fingerprint_report, psd_report, AnalysisReport};
use canvas_core::weave::{synthesize_image, ShapeKind};
use canvas_core::{AnalysisConfig, BasicShape, Canvas, DegradationSpec, Error, ImageGrid, Result, WeavePattern};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Thread counting and PSD fingerprints for canvas radiographs.
#[derive(Parser)]
#[command(name = "canvas-psd", version)]
struct Cli {
    /// TOML analysis configuration.
    #[arg(long, global = true, env = "CANVAS_PSD_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic weave and its ground-truth sidecar.
    Synth(SynthArgs),
    /// Swatch DFT counting: maps, histograms and statistics.
    Count {
        #[command(flatten)]
        input: ImageInput,
        /// Per-swatch measurements as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Averaged periodogram, peaks, spectral triangle and fingerprint.
    Psd {
        #[command(flatten)]
        input: ImageInput,
        /// PSD as a plain-text grid with frequency axes.
        #[arg(long)]
        contour: Option<PathBuf>,
    },
    /// The four PSD features and the thread counts.
    Fingerprint {
        #[command(flatten)]
        input: ImageInput,
    },
    /// Compare the fingerprints of two reports.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ImageInput {
    /// PGM or PNG image.
    image: PathBuf,
    /// px/cm; overrides the config and the sidecar.
    #[arg(long)]
    resolution: Option<f64>,
    /// Report path; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PatternKind {
    Plain,
    Twill,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Rectangle,
    RaisedCosine,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "plain")]
    pattern: PatternKind,
    /// Vertical threads per cm.
    #[arg(long)]
    fv: f64,
    /// Horizontal threads per cm.
    #[arg(long)]
    fh: f64,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long, default_value_t = 1)]
    p: u32,
    #[arg(long, value_enum, default_value = "rectangle")]
    shape: ShapeArg,
    /// cm
    #[arg(long, default_value_t = 3.0)]
    width: f64,
    /// cm
    #[arg(long, default_value_t = 3.0)]
    height: f64,
    /// px/cm
    #[arg(long, default_value_t = 200.0)]
    resolution: f64,
    /// Defaults to the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Degradation spec (TOML); flags below override its fields.
    #[arg(long)]
    degradation: Option<PathBuf>,
    /// Lattice-point jitter, cm.
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    spacing_jitter_v: Option<f64>,
    #[arg(long)]
    spacing_jitter_h: Option<f64>,
    #[arg(long)]
    thread_jitter_v: Option<f64>,
    #[arg(long)]
    thread_jitter_h: Option<f64>,
    #[arg(long)]
    column_gain: Option<f64>,
    /// Degrees.
    #[arg(long)]
    rotation: Option<f64>,
    /// Pixels.
    #[arg(long)]
    blur: Option<f64>,
    /// Pair-merging blur as a fraction of the vertical thread spacing.
    #[arg(long)]
    merge_sigma_v: Option<f64>,
    /// cm
    #[arg(long)]
    merge_patch: Option<f64>,
    #[arg(long)]
    row_stripes: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    snr_db: Option<f64>,
    /// PNG or PGM output; the sidecar goes next to it.
    #[arg(short, long)]
    output: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<AnalysisConfig> {
    match path {
        Some(p) => AnalysisConfig::load(p),
        None => Ok(AnalysisConfig::default()),
    }
}

fn load_input(input: &ImageInput, config: &AnalysisConfig) -> Result<(ImageGrid, Option<SynthesisRecord>)> {
    let resolution = input.resolution.or(config.resolution_override);
    let image = io::load_image(&input.image, resolution)?;
    let sidecar = io::sidecar_path(&input.image);
    let synthesis = if sidecar.is_file() {
        io::read_metadata(&sidecar)?.synthesis
    } else {
        None
    };
    Ok((image, synthesis))
}

fn emit(report: &AnalysisReport, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => report.save(p),
        None => {
            let text = report.to_json()?;
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                }),
                _ => Ok(()),
            }
        }
    }
}

fn synth(args: &SynthArgs, config: &AnalysisConfig) -> Result<()> {
    let (m, n) = match args.pattern {
        PatternKind::Plain => (2, 1),
        PatternKind::Twill | PatternKind::Custom => {
            let (Some(m), Some(n)) = (args.m, args.n) else {
                return Err(Error::InvalidParameter("--m and --n are required for twill and custom patterns".into()));
            };
            if matches!(args.pattern, PatternKind::Twill) && !(m > 2 && (n == 1 || n == m - 1)) {
                return Err(Error::InvalidPattern(format!("twill needs m > 2 and n in {{1, m-1}}, got m={m}, n={n}")));
            }
            (m, n)
        }
    };
    let p = if matches!(args.pattern, PatternKind::Custom) { args.p } else { 1 };
    if !(args.fv > 0.0 && args.fh > 0.0) {
        return Err(Error::InvalidParameter("--fv and --fh must be positive".into()));
    }
    let pattern = WeavePattern::new(m, n, p, 1.0 / args.fv, 1.0 / args.fh)?;
    let kind = match args.shape {
        ShapeArg::Rectangle => ShapeKind::Rectangle,
        ShapeArg::RaisedCosine => ShapeKind::RaisedCosineRectangle,
    };
    let shape = BasicShape::default_for(&pattern).with_kind(kind);
    let canvas = Canvas {
        width_cm: args.width,
        height_cm: args.height,
        resolution: args.resolution,
    };
    let mut degradation = match &args.degradation {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            toml::from_str(&text).map_err(|e| Error::Format {
                path: path.clone(),
                message: e.to_string(),
            })?
        }
        None => DegradationSpec::none(),
    };
    let d = &mut degradation;
    let overrides = [
        (args.jitter, &mut d.jitter_sigma_cm),
        (args.spacing_jitter_v, &mut d.spacing_jitter_v),
        (args.spacing_jitter_h, &mut d.spacing_jitter_h),
        (args.thread_jitter_v, &mut d.thread_jitter_v),
        (args.thread_jitter_h, &mut d.thread_jitter_h),
        (args.column_gain, &mut d.column_gain_sigma),
        (args.rotation, &mut d.rotation_deg),
        (args.blur, &mut d.blur_sigma_px),
        (args.merge_sigma_v, &mut d.merge_sigma_v),
        (args.merge_patch, &mut d.merge_patch_cm),
        (args.row_stripes, &mut d.row_stripe_sigma),
        (args.noise, &mut d.noise_sigma),
    ];
    for (value, field) in overrides {
        if let Some(v) = value {
            *field = v;
        }
    }
    if args.snr_db.is_some() {
        d.snr_db = args.snr_db;
    }
    d.seed = args.seed.unwrap_or(config.seed);

    let mut image = synthesize_image(&pattern, &shape, &canvas, &degradation)?;
    image.set_origin_label(args.output.display().to_string());
    let intensity = io::save_image(&image, &args.output)?;
    let meta = ImageMetadata {
        resolution: canvas.resolution,
        synthesis: Some(SynthesisRecord {
            pattern,
            shape,
            canvas,
            degradation,
            intensity,
        }),
    };
    io::write_metadata(&io::sidecar_path(&args.output), &meta)
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match &cli.command {
        Cmd::Synth(args) => synth(args, &config),
        Cmd::Count { input, csv } => {
            let (image, synthesis) = load_input(input, &config)?;
            let (report, maps) = count_report(&image, &config, synthesis)?;
            if let Some(path) = csv {
                io::write_swatch_csv(path, &maps)?;
            }
            emit(&report, input.output.as_deref())
        }
        Cmd::Psd { input, contour } => {
            let (image, synthesis) = load_input(input, &config)?;
            let (report, psd) = psd_report(&image, &config, synthesis)?;
            if let Some(path) = contour {
                io::write_contour(path, &psd)?;
            }
            emit(&report, input.output.as_deref())
        }
        Cmd::Fingerprint { input } => {
            let (image, synthesis) = load_input(input, &config)?;
            emit(&fingerprint_report(&image, &config, synthesis)?, input.output.as_deref())
        }
        Cmd::Compare { a, b, output } => {
            let ra = AnalysisReport::load(a)?;
            let rb = AnalysisReport::load(b)?;
            let report = compare_reports(
                (&a.display().to_string(), &ra),
                (&b.display().to_string(), &rb),
                &config,
            )?;
            emit(&report, output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.category(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
