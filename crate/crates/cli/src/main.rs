//! `ladder360` command-line front end.
//!
//! Exit status: 0 on success, 1 for invalid input (bad files, flags,
//! configs or records), 2 for runtime failures (I/O, encoder, partial runs).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ladder360::exec::{run_plan, CostModel, EncoderBackend, RunOptions, SimulatedBackend, X265Backend};
use ladder360::fixtures::{generate_card, TestCard};
use ladder360::media::{self, Projection, Rational};
use ladder360::metrics::{erp_weight_map, wspsnr_faces, wspsnr_with, MetricOptions, Pooling};
use ladder360::package::{build_manifest, serialize_mpd};
use ladder360::pipeline::{cmd_pipeline, scan_inputs, BackendKind, PipelineConfig};
use ladder360::plan::{build_plan, AnchorPolicy, EncodePlan, Ladder, NodeMode, PlanOptions, Variant};
use ladder360::report::{build_report, compare, RunRecord};
use ladder360::sphere::{cmp_to_erp, erp_to_cmp, resize, FaceId, ResampleFilter};
use ladder360::Error;

#[derive(Parser)]
#[command(name = "ladder360", version, about = "Plan, encode and evaluate 360-degree video ladders with analysis reuse")]
struct Cli {
    /// More logging (repeatable). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reproject or resample a clip.
    Convert(ConvertArgs),
    /// Print or save the encode plan of a variant.
    Plan(PlanArgs),
    /// Run a saved plan over prepared tile clips.
    Encode(EncodeArgs),
    /// PSNR and WS-PSNR of a distorted clip against its reference.
    Evaluate(EvaluateArgs),
    /// Per-tier BD figures of one run against a reference run.
    Compare(CompareArgs),
    /// Aggregate many runs into the comparison table.
    Report(ReportArgs),
    /// Write the streaming manifest of a run.
    Package(PackageArgs),
    /// Convert, encode, evaluate and package in one go.
    Pipeline(PipelineArgs),
    /// Synthetic test clips.
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
}

#[derive(Args)]
struct RawInput {
    /// Width of a headerless .yuv input.
    #[arg(long, requires = "height")]
    width: Option<usize>,
    #[arg(long, requires = "width")]
    height: Option<usize>,
    /// Frame rate of a headerless input, e.g. 30 or 30000/1001.
    #[arg(long, default_value = "30")]
    fps: String,
}

impl RawInput {
    fn geometry(&self) -> ladder360::Result<Option<(usize, usize, Rational)>> {
        Ok(match (self.width, self.height) {
            (Some(w), Some(h)) => Some((w, h, self.fps.parse()?)),
            _ => None,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvertTo {
    /// ERP clip to six face clips named `<face>.y4m`.
    Cmp,
    /// Directory of six face clips back to one ERP clip.
    Erp,
    /// Pixel-space resize, projection unchanged.
    Resize,
}

#[derive(Args)]
struct ConvertArgs {
    /// Source clip, or for `--to erp` the directory of face clips.
    input: PathBuf,
    #[arg(long, value_enum)]
    to: ConvertTo,
    /// Output file (erp, resize) or directory (cmp).
    #[arg(short, long)]
    output: PathBuf,
    /// Face edge length; defaults to half the ERP height.
    #[arg(long)]
    face_size: Option<usize>,
    /// Target width for erp and resize.
    #[arg(long)]
    target_width: Option<usize>,
    #[arg(long)]
    target_height: Option<usize>,
    #[arg(long, default_value = "bilinear")]
    filter: ResampleFilter,
    #[command(flatten)]
    raw: RawInput,
}

#[derive(Args)]
struct LadderArgs {
    /// TOML or JSON ladder (tiers, qualities, mode); defaults to HD/4K/8K x QP 22..42.
    #[arg(long)]
    ladder: Option<PathBuf>,
}

impl LadderArgs {
    fn load(&self) -> anyhow::Result<Ladder> {
        let Some(p) = &self.ladder else {
            return Ok(Ladder::standard());
        };
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let ladder: Ladder = if p.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(Error::from)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
        ladder.validate()?;
        Ok(ladder)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanFormat {
    Text,
    Json,
    Dot,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    variant: Variant,
    #[arg(long, default_value = "hq")]
    anchor: AnchorPolicy,
    #[command(flatten)]
    ladder: LadderArgs,
    /// Higher-tier PRA anchors load the anchor of the tier below.
    #[arg(long)]
    cross_resolution_pra: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: PlanFormat,
    /// Write to a file instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Simulated,
    X265,
}

#[derive(Args)]
struct EncodeArgs {
    /// Plan JSON written by `plan --format json`.
    #[arg(long)]
    plan: PathBuf,
    /// Directory holding the tile clips named by the plan's input template.
    #[arg(long)]
    inputs: PathBuf,
    /// Run directory for bitstreams; `outcome.json` is written there.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "simulated")]
    backend: BackendArg,
    /// Explicit x265 binary.
    #[arg(long)]
    encoder: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    keep_analysis: bool,
    #[arg(long, default_value = "medium")]
    preset: String,
}

#[derive(Args)]
struct EvaluateArgs {
    reference: PathBuf,
    /// Distorted clip, or with `--cmp` a directory of six face clips.
    distorted: PathBuf,
    /// Treat both inputs as directories of face clips named `<face>.y4m`.
    #[arg(long)]
    cmp: bool,
    #[arg(long, value_enum, default_value = "per-frame-db")]
    pooling: PoolingArg,
    #[arg(long)]
    chroma: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolingArg {
    PerFrameDb,
    PooledMse,
}

#[derive(Args)]
struct CompareArgs {
    /// Reference run.json.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Test run.json.
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Reference run.json files (one per sequence).
    #[arg(long = "ref", required = true, num_args = 1..)]
    references: Vec<PathBuf>,
    /// Test run.json files.
    #[arg(long = "test", required = true, num_args = 1..)]
    tests: Vec<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct PackageArgs {
    run: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    anchor: Option<AnchorPolicy>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    encoder: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[command(flatten)]
    ladder: LadderArgs,
}

#[derive(Subcommand)]
enum FixturesCommand {
    /// Write a test card clip: constant[:v], hgradient, sinusoid[:fx[:fy]], zoneplate.
    Generate {
        #[arg(long)]
        card: TestCard,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 2)]
        frames: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| level.into());
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // core errors already embed their sources in the message
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            let validation = e
                .chain()
                .find_map(|c| c.downcast_ref::<Error>())
                .is_some_and(Error::is_validation);
            ExitCode::from(if validation { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Convert(a) => convert(a),
        Command::Plan(a) => plan(a),
        Command::Encode(a) => encode(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => {
            let c = compare(&RunRecord::read(&a.reference)?, &RunRecord::read(&a.test)?)?;
            for w in &c.warnings {
                tracing::warn!("{w}");
            }
            println!("{}", serde_json::to_string_pretty(&c)?);
            Ok(())
        }
        Command::Report(a) => report(a),
        Command::Package(a) => {
            let r = RunRecord::read(&a.run)?;
            let mpd = serialize_mpd(&build_manifest(&r.plan, &r.nodes, r.fps, r.frames)?)?;
            write_file(&a.output, mpd.as_bytes())
        }
        Command::Pipeline(a) => pipeline(a),
        Command::Fixtures {
            command:
                FixturesCommand::Generate {
                    card,
                    width,
                    height,
                    frames,
                    output,
                },
        } => {
            media::write_y4m(&generate_card(card, width, height, frames)?, &output)?;
            Ok(())
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_faces(dir: &Path) -> ladder360::Result<Vec<media::VideoSequence>> {
    FaceId::ALL
        .iter()
        .map(|f| media::read_y4m(&dir.join(format!("{}.y4m", f.name())))?.retagged(Some(*f)))
        .collect()
}

fn convert(a: ConvertArgs) -> anyhow::Result<()> {
    match a.to {
        ConvertTo::Cmp => {
            let seq = media::read_video(&a.input, a.raw.geometry()?)?;
            let n = a.face_size.unwrap_or(seq.height() / 2);
            std::fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
            for (f, face) in erp_to_cmp(&seq, n, a.filter)?.iter().zip(FaceId::ALL) {
                media::write_y4m(f, &a.output.join(format!("{}.y4m", face.name())))?;
            }
        }
        ConvertTo::Erp => {
            let faces = read_faces(&a.input)?;
            let n = faces[0].width();
            let w = a.target_width.unwrap_or(4 * n);
            let h = a.target_height.unwrap_or(w / 2);
            media::write_y4m(&cmp_to_erp(&faces, w, h, a.filter)?, &a.output)?;
        }
        ConvertTo::Resize => {
            let seq = media::read_video(&a.input, a.raw.geometry()?)?;
            let (Some(w), Some(h)) = (a.target_width, a.target_height) else {
                return Err(Error::Config("resize needs --target-width and --target-height".into()).into());
            };
            media::write_y4m(&resize(&seq, w, h, a.filter)?, &a.output)?;
        }
    }
    Ok(())
}

fn plan_text(plan: &EncodePlan) -> String {
    let mut out = format!("{} anchor {} ({} nodes)\n", plan.variant.label(), plan.anchor, plan.nodes.len());
    for n in &plan.nodes {
        let how = match n.mode {
            NodeMode::FullRdo => "full".to_string(),
            NodeMode::AnalysisLoad { source, scale_factor } => format!("load {source} x{scale_factor}"),
        };
        let save = if n.save_analysis { " save" } else { "" };
        out.push_str(&format!("{} {}x{} {how}{save}\n", n.id, n.width, n.height));
    }
    out
}

fn plan_dot(plan: &EncodePlan) -> String {
    let mut out = String::from("digraph plan {\n");
    for n in &plan.nodes {
        let shape = if n.is_full_rdo() { "box" } else { "ellipse" };
        out.push_str(&format!("  \"{}\" [shape={shape}];\n", n.id));
    }
    for e in &plan.edges {
        out.push_str(&format!("  \"{}\" -> \"{}\" [label=\"x{}\"];\n", e.source, e.target, e.scale_factor));
    }
    out.push_str("}\n");
    out
}

fn plan(a: PlanArgs) -> anyhow::Result<()> {
    let ladder = a.ladder.load()?;
    let plan = build_plan(
        a.variant,
        &ladder,
        a.anchor,
        PlanOptions {
            cross_resolution_pra: a.cross_resolution_pra,
        },
    )?;
    let text = match a.format {
        PlanFormat::Text => plan_text(&plan),
        PlanFormat::Json => serde_json::to_string_pretty(&plan)? + "\n",
        PlanFormat::Dot => plan_dot(&plan),
    };
    match a.output {
        Some(p) => write_file(&p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn encode(a: EncodeArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&a.plan).with_context(|| format!("reading {}", a.plan.display()))?;
    let plan: EncodePlan = serde_json::from_str(&text).map_err(Error::from)?;
    let inputs = scan_inputs(&plan, &a.inputs)?;
    let backend: Box<dyn EncoderBackend> = match a.backend {
        BackendArg::Simulated => Box::new(SimulatedBackend::new(CostModel::default())?),
        BackendArg::X265 => Box::new(X265Backend::locate(a.encoder.as_deref())?),
    };
    let mut options = RunOptions {
        keep_analysis: a.keep_analysis,
        ..RunOptions::default()
    };
    if let Some(w) = a.workers {
        options.worker_limit = w;
    }
    options.settings.rate_mode = plan.ladder.mode;
    options.settings.preset = a.preset;
    options.settings.write_recon = matches!(a.backend, BackendArg::X265);
    let outcome = run_plan(&plan, backend.as_ref(), &inputs, &a.output, &options)?;
    write_file(&a.output.join("outcome.json"), serde_json::to_string_pretty(&outcome)?.as_bytes())?;
    outcome.into_complete()?;
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let options = MetricOptions {
        pooling: match a.pooling {
            PoolingArg::PerFrameDb => Pooling::PerFrameDb,
            PoolingArg::PooledMse => Pooling::PooledMse,
        },
        include_chroma: a.chroma,
    };
    let score = if a.cmp {
        wspsnr_faces(&read_faces(&a.reference)?, &read_faces(&a.distorted)?, options)?
    } else {
        let r = media::read_y4m(&a.reference)?;
        let d = media::read_y4m(&a.distorted)?;
        if r.projection() != Projection::Erp {
            return Err(Error::Projection("single-clip evaluation expects ERP".into()).into());
        }
        wspsnr_with(&r, &d, &erp_weight_map(r.width(), r.height())?, options)?
    };
    println!("{}", serde_json::to_string_pretty(&score)?);
    Ok(())
}

fn report(a: ReportArgs) -> anyhow::Result<()> {
    let read = |ps: &[PathBuf]| ps.iter().map(|p| RunRecord::read(p)).collect::<ladder360::Result<Vec<_>>>();
    let report = build_report(&read(&a.references)?, &read(&a.tests)?)?;
    for w in &report.warnings {
        tracing::warn!("{w}");
    }
    let csv = report.to_csv();
    if let Some(p) = &a.csv {
        write_file(p, csv.as_bytes())?;
    }
    if let Some(p) = &a.json {
        write_file(p, report.to_json()?.as_bytes())?;
    }
    if a.csv.is_none() && a.json.is_none() {
        print!("{csv}");
    }
    Ok(())
}

fn pipeline(a: PipelineArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::from_toml_file(p)?,
        None => {
            let (Some(input), Some(variant), Some(output)) = (a.input.clone(), a.variant, a.output.clone()) else {
                return Err(Error::Config("pipeline needs --config or --input, --variant and --output".into()).into());
            };
            PipelineConfig::new(input, variant, output)
        }
    };
    if let Some(v) = a.input {
        cfg.input = v;
    }
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    if let Some(v) = a.output {
        cfg.output = v;
    }
    if let Some(v) = a.anchor {
        cfg.anchor = v;
    }
    if let Some(v) = a.backend {
        cfg.backend = match v {
            BackendArg::Simulated => BackendKind::Simulated,
            BackendArg::X265 => BackendKind::X265,
        };
    }
    if a.encoder.is_some() {
        cfg.encoder_path = a.encoder;
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    if a.frames.is_some() {
        cfg.frames = a.frames;
    }
    if a.ladder.ladder.is_some() {
        cfg.ladder = a.ladder.load()?;
    }
    let record = cmd_pipeline(&cfg)?;
    println!(
        "{}: {} encodes, serial {:.3} s, makespan {:.3} s -> {}",
        record.method(),
        record.nodes.len(),
        record.ledger.serial_sum_s,
        record.ledger.makespan_s,
        cfg.output.display()
    );
    Ok(())
}
