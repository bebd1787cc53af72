//! End-to-end pipeline: convert, resize, plan, encode, evaluate, record.
//!
//! Configuration is a TOML file; relative paths resolve against its
//! directory. Example:
//!
//! ```toml
//! input = "clip.y4m"
//! variant = "cmp-crc"
//! anchor = "hq"
//! backend = "simulated"     # or "x265"
//! output = "runs/cmp-crc"
//! workers = 2
//! frames = 60               # optional cap
//!
//! [ladder]                  # optional, defaults to HD/4K/8K x QP 22..42
//! qualities = [22, 27, 32, 37, 42]
//! tiers = [
//!   { name = "HD", width = 2048, height = 1024 },
//!   { name = "4K", width = 4096, height = 2048 },
//! ]
//! ```
//!
//! Outputs in `output`: `inputs/` (per-tier tile clips), `encodes/`
//! (bitstreams, recons, kept analysis files), `checkpoint.json`,
//! `run.json` and `manifest.mpd`. Re-running with the same output
//! directory skips nodes whose bitstreams still match their recorded size
//! and checksum.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::{
    run_plan, CostModel, EncodeResult, EncodeSettings, EncoderBackend, InputClip, RunOptions, SimulatedBackend,
    X265Backend,
};
use crate::media::{self, Rational, VideoSequence};
use crate::metrics::{cmp_weight_map, erp_weight_map, wspsnr_with, MetricOptions};
use crate::package::{build_manifest, serialize_mpd};
use crate::plan::{build_plan, AnchorPolicy, EncodePlan, Ladder, PlanOptions, Tile, Variant};
use crate::report::{FaceQuality, QualitySource, RepresentationRecord, RunRecord, RUN_SCHEMA};
use crate::sphere::{cmp_to_erp, erp_to_cmp, resize, FaceId, ResampleFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Simulated,
    X265,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub preset: Option<String>,
    pub thread_args: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    /// Geometry of a headerless `.yuv` input.
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub height: Option<usize>,
    #[serde(default)]
    pub fps: Option<String>,
    #[serde(default)]
    pub frames: Option<usize>,
    pub variant: Variant,
    #[serde(default = "default_anchor")]
    pub anchor: AnchorPolicy,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub encoder_path: Option<PathBuf>,
    pub output: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub keep_analysis: bool,
    #[serde(default)]
    pub filter: ResampleFilter,
    /// Defaults to model quality for the simulated backend, measured otherwise.
    #[serde(default)]
    pub quality: Option<QualitySource>,
    #[serde(default)]
    pub cross_resolution_pra: bool,
    #[serde(default = "Ladder::standard")]
    pub ladder: Ladder,
    #[serde(default)]
    pub cost_model: Option<CostModel>,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub metrics: MetricOptions,
}

fn default_anchor() -> AnchorPolicy {
    AnchorPolicy::Hq
}

impl PipelineConfig {
    /// Minimal config with defaults for everything optional.
    pub fn new(input: PathBuf, variant: Variant, output: PathBuf) -> Self {
        PipelineConfig {
            input,
            width: None,
            height: None,
            fps: None,
            frames: None,
            variant,
            anchor: default_anchor(),
            backend: BackendKind::default(),
            encoder_path: None,
            output,
            workers: None,
            keep_analysis: false,
            filter: ResampleFilter::default(),
            quality: None,
            cross_resolution_pra: false,
            ladder: Ladder::standard(),
            cost_model: None,
            encoder: EncoderConfig::default(),
            metrics: MetricOptions::default(),
        }
    }

    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [Some(&mut cfg.input), Some(&mut cfg.output), cfg.encoder_path.as_mut()]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn raw_geometry(&self) -> Result<Option<(usize, usize, Rational)>> {
        match (self.width, self.height) {
            (None, None) => Ok(None),
            (Some(w), Some(h)) => {
                let fps = self.fps.as_deref().unwrap_or("30").parse()?;
                Ok(Some((w, h, fps)))
            }
            _ => Err(Error::Config("raw input needs both width and height".into())),
        }
    }

    pub fn quality_source(&self) -> QualitySource {
        self.quality.unwrap_or(match self.backend {
            BackendKind::Simulated => QualitySource::Model,
            BackendKind::X265 => QualitySource::Measured,
        })
    }

    pub fn encode_settings(&self) -> EncodeSettings {
        let d = EncodeSettings::default();
        EncodeSettings {
            rate_mode: self.ladder.mode,
            preset: self.encoder.preset.clone().unwrap_or(d.preset),
            thread_args: self.encoder.thread_args.clone().unwrap_or(d.thread_args),
            write_recon: self.quality_source() == QualitySource::Measured,
        }
    }
}

/// Resume state written after every encode stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    sequence_id: String,
    backend: String,
    plan: EncodePlan,
    settings: EncodeSettings,
    results: Vec<EncodeResult>,
}

/// Digest of the decoded source: identifies a sequence across runs.
pub fn sequence_id(seq: &VideoSequence) -> Result<String> {
    let mut h = Sha256::new();
    media::write_y4m_to(seq, &mut h).map_err(|e| Error::io("<digest>", e))?;
    Ok(hex::encode(h.finalize()))
}

/// ERP clip of every tier, and for cubemap variants the six faces of every tier.
pub struct TierClips {
    pub erp: Vec<VideoSequence>,
    /// `faces[tier][face]`; empty for ERP variants.
    pub faces: Vec<Vec<VideoSequence>>,
}

/// Builds per-tier inputs: cubemap conversion at source resolution first,
/// then resampling to each tier.
pub fn prepare_tiers(source: &VideoSequence, ladder: &Ladder, cmp: bool, filter: ResampleFilter) -> Result<TierClips> {
    let full_faces = if cmp {
        Some(erp_to_cmp(source, source.height() / 2, filter).map_err(|e| e.in_stage("convert"))?)
    } else {
        None
    };
    let mut erp = Vec::new();
    let mut faces = Vec::new();
    for t in &ladder.tiers {
        erp.push(resize(source, t.width, t.height, filter).map_err(|e| e.in_stage("resize"))?);
        if let Some(ff) = &full_faces {
            let n = t.face_size();
            faces.push(
                ff.iter()
                    .map(|f| resize(f, n, n, filter))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| e.in_stage("resize"))?,
            );
        }
    }
    Ok(TierClips { erp, faces })
}

/// Writes the tile clip of every (tile, tier) into `dir` and returns the input map.
pub fn write_inputs(plan: &EncodePlan, clips: &TierClips, dir: &Path) -> Result<HashMap<(Tile, usize), InputClip>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = HashMap::new();
    for &tile in &plan.tiles {
        for tier in 0..plan.ladder.tiers.len() {
            let seq = match tile {
                Tile::Erp => &clips.erp[tier],
                Tile::Face(f) => &clips.faces[tier][f.index()],
            };
            let path = dir.join(plan.templates.input_name(tile, seq.width(), seq.height()));
            media::write_y4m(seq, &path)?;
            out.insert(
                (tile, tier),
                InputClip {
                    path,
                    frames: seq.len(),
                    fps: seq.fps(),
                },
            );
        }
    }
    Ok(out)
}

/// Locates existing tile clips for `plan` in `dir` by their template names.
pub fn scan_inputs(plan: &EncodePlan, dir: &Path) -> Result<HashMap<(Tile, usize), InputClip>> {
    let mut out = HashMap::new();
    for &tile in &plan.tiles {
        for (tier, t) in plan.ladder.tiers.iter().enumerate() {
            let (w, h) = t.geometry(tile);
            let path = dir.join(plan.templates.input_name(tile, w, h));
            if !path.is_file() {
                return Err(Error::MissingInput(path.display().to_string()));
            }
            let reader = media::Y4mReader::open(&path)?;
            let hdr = reader.header();
            if (hdr.width, hdr.height) != (w, h) {
                return Err(Error::Geometry(format!(
                    "{} is {}x{}, plan expects {w}x{h}",
                    path.display(),
                    hdr.width,
                    hdr.height
                )));
            }
            let mut frames = 0;
            for f in reader {
                f?;
                frames += 1;
            }
            out.insert(
                (tile, tier),
                InputClip {
                    path,
                    frames,
                    fps: hdr.fps,
                },
            );
        }
    }
    Ok(out)
}

fn make_backend(cfg: &PipelineConfig) -> Result<(Box<dyn EncoderBackend>, Option<CostModel>)> {
    Ok(match cfg.backend {
        BackendKind::Simulated => {
            let model = cfg.cost_model.unwrap_or_default();
            (Box::new(SimulatedBackend::new(model)?), Some(model))
        }
        BackendKind::X265 => (Box::new(X265Backend::locate(cfg.encoder_path.as_deref())?), None),
    })
}

/// Runs the whole pipeline and persists `run.json` and `manifest.mpd`.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<RunRecord> {
    let (backend, model) = make_backend(cfg).map_err(|e| e.in_stage("startup"))?;
    let settings = cfg.encode_settings();
    let quality_source = cfg.quality_source();

    let source = load_source(cfg).map_err(|e| e.in_stage("input"))?;
    if source.is_empty() {
        return Err(Error::MissingInput("input has no frames".into()).in_stage("input"));
    }
    let plan = build_plan(
        cfg.variant,
        &cfg.ladder,
        cfg.anchor,
        PlanOptions {
            cross_resolution_pra: cfg.cross_resolution_pra,
        },
    )
    .map_err(|e| e.in_stage("plan"))?;
    let seq_id = sequence_id(&source).map_err(|e| e.in_stage("input"))?;
    let clips = prepare_tiers(&source, &cfg.ladder, cfg.variant.is_cmp(), cfg.filter)?;

    std::fs::create_dir_all(&cfg.output)
        .map_err(|e| Error::io(&cfg.output, e).in_stage("startup"))?;
    let inputs = write_inputs(&plan, &clips, &cfg.output.join("inputs")).map_err(|e| e.in_stage("convert"))?;

    let run_dir = cfg.output.join("encodes");
    let ckpt_path = cfg.output.join("checkpoint.json");
    let previous = std::fs::read_to_string(&ckpt_path)
        .ok()
        .and_then(|t| serde_json::from_str::<Checkpoint>(&t).ok())
        .filter(|c| c.sequence_id == seq_id && c.plan == plan && c.backend == backend.name() && c.settings == settings)
        .map(|c| c.results)
        .unwrap_or_default();
    let options = RunOptions {
        worker_limit: cfg.workers.unwrap_or_else(crate::exec::default_worker_limit),
        keep_analysis: cfg.keep_analysis,
        settings: settings.clone(),
        previous,
    };
    let outcome = run_plan(&plan, backend.as_ref(), &inputs, &run_dir, &options).map_err(|e| e.in_stage("encode"))?;
    if !outcome.resumed.is_empty() {
        tracing::info!(resumed = outcome.resumed.len(), "reused verified encodes");
    }
    let ckpt = Checkpoint {
        sequence_id: seq_id.clone(),
        backend: backend.name().to_string(),
        plan: plan.clone(),
        settings,
        results: outcome.results.clone(),
    };
    std::fs::write(&ckpt_path, serde_json::to_string_pretty(&ckpt)?)
        .map_err(|e| Error::io(&ckpt_path, e).in_stage("encode"))?;
    let outcome = outcome.into_complete().map_err(|e| e.in_stage("encode"))?;

    let representations = evaluate_representations(&plan, &outcome.results, &clips, &run_dir, quality_source, cfg)
        .map_err(|e| e.in_stage("evaluate"))?;

    let mut environment = BTreeMap::new();
    environment.insert("ladder360_version".into(), env!("CARGO_PKG_VERSION").into());
    environment.insert("filter".into(), format!("{:?}", cfg.filter).to_ascii_lowercase());
    environment.insert("worker_limit".into(), options.worker_limit.to_string());
    if let Some(m) = model {
        environment.insert("cost_model".into(), serde_json::to_string(&m)?);
    }
    if matches!(cfg.backend, BackendKind::X265) {
        environment.insert("os".into(), std::env::consts::OS.into());
        environment.insert("arch".into(), std::env::consts::ARCH.into());
    }
    let record = RunRecord {
        schema: RUN_SCHEMA.into(),
        sequence: cfg
            .input
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sequence_id: seq_id,
        fps: source.fps(),
        frames: source.len(),
        backend: backend.name().into(),
        quality_source,
        plan,
        nodes: outcome.results,
        ledger: outcome.ledger,
        representations,
        environment,
    };
    record.validate().map_err(|e| e.in_stage("record"))?;
    record
        .write(&cfg.output.join("run.json"))
        .map_err(|e| e.in_stage("record"))?;
    let manifest = build_manifest(&record.plan, &record.nodes, record.fps, record.frames)
        .and_then(|m| serialize_mpd(&m))
        .map_err(|e| e.in_stage("package"))?;
    let mpd = cfg.output.join("manifest.mpd");
    std::fs::write(&mpd, manifest).map_err(|e| Error::io(&mpd, e).in_stage("package"))?;
    Ok(record)
}

fn load_source(cfg: &PipelineConfig) -> Result<VideoSequence> {
    let seq = media::read_video(&cfg.input, cfg.raw_geometry()?)?;
    if seq.projection() != media::Projection::Erp {
        return Err(Error::Projection("pipeline input must be ERP".into()));
    }
    Ok(match cfg.frames {
        Some(n) => seq.truncated(n),
        None => seq,
    })
}

fn evaluate_representations(
    plan: &EncodePlan,
    results: &[EncodeResult],
    clips: &TierClips,
    run_dir: &Path,
    source: QualitySource,
    cfg: &PipelineConfig,
) -> Result<Vec<RepresentationRecord>> {
    let by_id: HashMap<_, _> = results.iter().map(|r| (r.node, r)).collect();
    let mut out = Vec::new();
    for (tier, t) in plan.ladder.tiers.iter().enumerate() {
        let reference = &clips.erp[tier];
        let weights = erp_weight_map(t.width, t.height)?;
        for &qp in &plan.ladder.qualities {
            let tiles: Vec<&EncodeResult> = plan
                .tiles
                .iter()
                .map(|&tile| {
                    by_id
                        .get(&crate::plan::NodeId::new(tile, tier, qp))
                        .copied()
                        .ok_or_else(|| Error::Record(format!("no result for {tile} tier {tier} qp {qp}")))
                })
                .collect::<Result<_>>()?;
            let rate_kbps = tiles.iter().map(|r| r.bitrate_kbps).sum();
            let time_s = tiles.iter().map(|r| r.time_s).sum();
            let (psnr_db, wspsnr_db, faces) = match source {
                QualitySource::Model => {
                    let q = tiles
                        .iter()
                        .map(|r| r.model_quality_db.ok_or_else(|| Error::Record(format!("{} has no model quality", r.node))))
                        .collect::<Result<Vec<_>>>()?;
                    let m = q.iter().sum::<f64>() / q.len() as f64;
                    (m, m, Vec::new())
                }
                QualitySource::Measured => {
                    let recon_of = |r: &EncodeResult| -> Result<VideoSequence> {
                        let name = r
                            .recon
                            .as_ref()
                            .ok_or_else(|| Error::Record(format!("{} has no reconstruction", r.node)))?;
                        media::read_y4m(&run_dir.join(name))
                    };
                    if plan.variant.is_cmp() {
                        let recons = tiles
                            .iter()
                            .zip(FaceId::ALL)
                            .map(|(r, f)| recon_of(r)?.retagged(Some(f)))
                            .collect::<Result<Vec<_>>>()?;
                        let cw = cmp_weight_map(t.face_size())?;
                        let faces = recons
                            .iter()
                            .zip(&clips.faces[tier])
                            .zip(FaceId::ALL)
                            .map(|((d, r), f)| {
                                let s = wspsnr_with(r, d, &cw, cfg.metrics)?;
                                Ok(FaceQuality {
                                    tile: f.name().into(),
                                    psnr_db: s.psnr_y,
                                    wspsnr_db: s.wspsnr_y,
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        let erp = cmp_to_erp(&recons, t.width, t.height, cfg.filter)?;
                        let s = wspsnr_with(reference, &erp, &weights, cfg.metrics)?;
                        (s.psnr_y, s.wspsnr_y, faces)
                    } else {
                        let s = wspsnr_with(reference, &recon_of(tiles[0])?, &weights, cfg.metrics)?;
                        (s.psnr_y, s.wspsnr_y, Vec::new())
                    }
                }
            };
            out.push(RepresentationRecord {
                tier,
                tier_name: t.name.clone(),
                qp,
                rate_kbps,
                time_s,
                psnr_db,
                wspsnr_db,
                faces,
            });
        }
    }
    Ok(out)
}
