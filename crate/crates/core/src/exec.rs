//! Plan execution: encoder backends and the bounded worker pool.
//!
//! Two backends implement [`EncoderBackend`]: [`X265Backend`] drives an
//! external x265 binary through its analysis save/load flags, and
//! [`SimulatedBackend`] applies a closed-form [`CostModel`] so timing and
//! quality are exactly predictable.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::media::{self, Rational, VideoSequence};
use crate::plan::{reuse_depths, EncodeNode, EncodePlan, FileTemplates, NodeId, NodeMode, RateMode, Tile};

pub const X265_ENV: &str = "LADDER360_X265";

/// Threads each x265 process is expected to occupy.
pub const ENCODER_THREADS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeSettings {
    pub rate_mode: RateMode,
    pub preset: String,
    /// Threading flags passed verbatim; x265 has no single thread-count switch.
    pub thread_args: Vec<String>,
    /// Ask the backend for a reconstructed y4m next to the bitstream.
    pub write_recon: bool,
}

impl Default for EncodeSettings {
    fn default() -> Self {
        EncodeSettings {
            rate_mode: RateMode::FixedQp,
            preset: "medium".into(),
            thread_args: ["--pools", "4", "--frame-threads", "1"].map(String::from).to_vec(),
            write_recon: true,
        }
    }
}

/// Paths one encode reads and writes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobPaths {
    pub input: PathBuf,
    pub bitstream: PathBuf,
    pub recon: Option<PathBuf>,
    pub analysis_in: Option<PathBuf>,
    pub analysis_out: Option<PathBuf>,
}

pub struct EncodeJob<'a> {
    pub node: &'a EncodeNode,
    pub paths: &'a JobPaths,
    pub frames: usize,
    pub fps: Rational,
    pub settings: &'a EncodeSettings,
}

/// What a backend reports for one encode.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOutput {
    /// Backend-reported bitrate; `None` means measure it from the bitstream size.
    pub bitrate_kbps: Option<f64>,
    pub time_s: f64,
    pub model_quality_db: Option<f64>,
}

pub trait EncoderBackend: Send + Sync {
    fn name(&self) -> &str;

    /// True when identical jobs give identical outputs, timing included.
    fn deterministic(&self) -> bool;

    fn encode(&self, job: &EncodeJob<'_>) -> Result<EncodeOutput>;
}

/// Argument vector for one x265 invocation (binary name excluded).
pub fn x265_adapter_command(
    node: &EncodeNode,
    paths: &JobPaths,
    fps: Rational,
    settings: &EncodeSettings,
) -> Result<Vec<String>> {
    let mut args: Vec<String> = Vec::new();
    let mut push = |a: &str, b: String| {
        args.push(a.to_string());
        args.push(b);
    };
    push("--input", paths.input.display().to_string());
    push("--output", paths.bitstream.display().to_string());
    if let Some(r) = &paths.recon {
        push("--recon", r.display().to_string());
    }
    push("--preset", settings.preset.clone());
    push("--keyint", (fps.as_f64().round() as u64).max(1).to_string());
    let rate_flag = match settings.rate_mode {
        RateMode::FixedQp => "--qp",
        RateMode::Crf => "--crf",
    };
    push(rate_flag, node.id.qp.to_string());
    args.extend(settings.thread_args.iter().cloned());

    if node.save_analysis {
        let out = paths
            .analysis_out
            .as_ref()
            .ok_or_else(|| Error::Plan(format!("{}: saving node has no analysis output path", node.id)))?;
        args.extend([
            "--analysis-save".into(),
            out.display().to_string(),
            "--analysis-save-reuse-level".into(),
            "10".into(),
        ]);
    }
    if let NodeMode::AnalysisLoad { scale_factor, .. } = node.mode {
        let inp = paths
            .analysis_in
            .as_ref()
            .ok_or_else(|| Error::Plan(format!("{}: load node has no analysis input path", node.id)))?;
        args.extend(
            [
                "--analysis-load",
                &inp.display().to_string(),
                "--analysis-load-reuse-level",
                "10",
                "--refine-intra",
                "4",
                "--refine-inter",
                "2",
                "--refine-mv",
                "1",
            ]
            .map(String::from),
        );
        match scale_factor {
            1 => {}
            2 => args.extend(["--scale-factor".into(), "2".into()]),
            s => return Err(Error::Plan(format!("{}: unsupported scale factor {s}", node.id))),
        }
    }
    Ok(args)
}

/// External x265 encoder run as a subprocess.
#[derive(Debug, Clone)]
pub struct X265Backend {
    binary: PathBuf,
}

impl X265Backend {
    pub fn new(binary: PathBuf) -> Self {
        X265Backend { binary }
    }

    /// Finds the binary: explicit path, then `LADDER360_X265`, then `x265` on `PATH`.
    pub fn locate(explicit: Option<&Path>) -> Result<Self> {
        if let Some(p) = explicit {
            return if p.is_file() {
                Ok(Self::new(p.to_path_buf()))
            } else {
                Err(Error::EncoderNotFound(p.display().to_string()))
            };
        }
        if let Some(p) = std::env::var_os(X265_ENV) {
            let p = PathBuf::from(p);
            return if p.is_file() {
                Ok(Self::new(p))
            } else {
                Err(Error::EncoderNotFound(format!("{X265_ENV}={}", p.display())))
            };
        }
        std::env::var_os("PATH")
            .iter()
            .flat_map(std::env::split_paths)
            .map(|d| d.join("x265"))
            .find(|p| p.is_file())
            .map(Self::new)
            .ok_or_else(|| Error::EncoderNotFound("x265 not on PATH".into()))
    }

    pub fn binary(&self) -> &Path {
        &self.binary
    }
}

impl EncoderBackend for X265Backend {
    fn name(&self) -> &str {
        "x265"
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn encode(&self, job: &EncodeJob<'_>) -> Result<EncodeOutput> {
        let args = x265_adapter_command(job.node, job.paths, job.fps, job.settings)?;
        let start = Instant::now();
        let out = Command::new(&self.binary)
            .args(&args)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .output()
            .map_err(|e| Error::Backend {
                node: job.node.id.to_string(),
                diagnostic: format!("cannot run {}: {e}", self.binary.display()),
            })?;
        let time_s = start.elapsed().as_secs_f64();
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            let tail: Vec<&str> = stderr.lines().rev().take(5).collect();
            return Err(Error::Backend {
                node: job.node.id.to_string(),
                diagnostic: format!(
                    "{}: {}",
                    out.status,
                    tail.into_iter().rev().collect::<Vec<_>>().join(" | ")
                ),
            });
        }
        Ok(EncodeOutput {
            bitrate_kbps: None,
            time_s,
            model_quality_db: None,
        })
    }
}

/// Closed-form timing, rate and quality model for the simulated backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Seconds per megapixel-frame of full search.
    pub kappa: f64,
    /// Load-mode time as a fraction of full-search time.
    pub rho: f64,
    /// Bitrate at QP 0, kbps per megapixel.
    pub r0: f64,
    /// Quality intercept, dB.
    pub a: f64,
    /// Quality slope, dB per QP.
    pub b: f64,
    /// Quality lost per analysis-reuse hop, dB.
    pub epsilon: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            kappa: 1.0,
            rho: 0.5,
            r0: 20000.0,
            a: 60.0,
            b: 0.5,
            epsilon: 0.1,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.kappa, self.rho, self.r0, self.a, self.b, self.epsilon];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Config("cost model parameters must be positive".into()));
        }
        if self.rho >= 1.0 {
            return Err(Error::Config("cost model rho must be below 1".into()));
        }
        Ok(())
    }

    pub fn full_time(&self, width: usize, height: usize, frames: usize, qp: u8) -> f64 {
        let mpx = (width * height) as f64 / 1e6;
        self.kappa * mpx * frames as f64 * (1.0 + (51.0 - qp as f64) / 51.0)
    }

    pub fn time(&self, node: &EncodeNode, frames: usize) -> f64 {
        let t = self.full_time(node.width, node.height, frames, node.id.qp);
        if node.is_full_rdo() {
            t
        } else {
            self.rho * t
        }
    }

    pub fn bitrate_kbps(&self, width: usize, height: usize, qp: u8) -> f64 {
        self.r0 * (width * height) as f64 / 1e6 * (-(qp as f64) / 6.0).exp2()
    }

    pub fn quality_db(&self, qp: u8, depth: u32) -> f64 {
        self.a - self.b * qp as f64 - self.epsilon * depth as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimulatedBackend {
    pub model: CostModel,
}

const SIM_ARTIFACT_MAGIC: &str = "ladder360-sim-analysis";

struct SimArtifact {
    width: usize,
    height: usize,
    depth: u32,
}

fn read_sim_artifact(path: &Path) -> Result<SimArtifact> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(SIM_ARTIFACT_MAGIC) {
        return Err(Error::Record(format!("{} is not a simulated analysis file", path.display())));
    }
    let mut kv = HashMap::new();
    for l in lines {
        if let Some((k, v)) = l.split_once('=') {
            kv.insert(k, v);
        }
    }
    let get = |k: &str| -> Result<u64> {
        kv.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Record(format!("{}: missing field {k}", path.display())))
    };
    Ok(SimArtifact {
        width: get("width")? as usize,
        height: get("height")? as usize,
        depth: get("depth")? as u32,
    })
}

/// Deterministic stand-in for lossy coding: uniform quantization of every plane.
fn simulated_recon(seq: &VideoSequence, qp: u8, depth: u32, model: &CostModel) -> Result<VideoSequence> {
    let step = ((qp as f64 - 4.0) / 6.0).exp2() * (1.0 + model.epsilon * depth as f64);
    let q = |v: &u8| -> u8 {
        if step <= 1.0 {
            *v
        } else {
            ((*v as f64 / step).round() * step).round().clamp(0.0, 255.0) as u8
        }
    };
    let frames = seq
        .frames()
        .iter()
        .map(|f| {
            let [y, cb, cr] = f.planes().clone().map(|p| p.iter().map(q).collect::<Vec<u8>>());
            crate::media::FrameBuffer::new(f.width(), f.height(), y, cb, cr)
        })
        .collect::<Result<Vec<_>>>()?;
    seq.with_frames(seq.width(), seq.height(), frames)
}

impl SimulatedBackend {
    pub fn new(model: CostModel) -> Result<Self> {
        model.validate()?;
        Ok(SimulatedBackend { model })
    }
}

impl EncoderBackend for SimulatedBackend {
    fn name(&self) -> &str {
        "simulated"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn encode(&self, job: &EncodeJob<'_>) -> Result<EncodeOutput> {
        let node = job.node;
        let fail = |diagnostic: String| Error::Backend {
            node: node.id.to_string(),
            diagnostic,
        };
        let depth = match node.mode {
            NodeMode::FullRdo => 0,
            NodeMode::AnalysisLoad { scale_factor, .. } => {
                let path = job.paths.analysis_in.as_ref().ok_or_else(|| fail("no analysis input".into()))?;
                let art = read_sim_artifact(path)?;
                let sf = scale_factor as usize;
                if art.width * sf != node.width || art.height * sf != node.height {
                    return Err(fail(format!(
                        "analysis geometry {}x{} does not scale by {sf} to {}x{}",
                        art.width, art.height, node.width, node.height
                    )));
                }
                art.depth + 1
            }
        };
        let bitrate = self.model.bitrate_kbps(node.width, node.height, node.id.qp);
        let time_s = self.model.time(node, job.frames);
        let quality = self.model.quality_db(node.id.qp, depth);

        let stream = format!(
            "{SIM_ARTIFACT_MAGIC}-bitstream\nnode={}\nwidth={}\nheight={}\nqp={}\nframes={}\ndepth={depth}\nbitrate_kbps={bitrate:.6}\n",
            node.id, node.width, node.height, node.id.qp, job.frames
        );
        std::fs::write(&job.paths.bitstream, stream).map_err(|e| Error::io(&job.paths.bitstream, e))?;
        if node.save_analysis {
            let out = job.paths.analysis_out.as_ref().ok_or_else(|| fail("no analysis output".into()))?;
            let body = format!(
                "{SIM_ARTIFACT_MAGIC}\nnode={}\nwidth={}\nheight={}\nqp={}\ndepth={depth}\n",
                node.id, node.width, node.height, node.id.qp
            );
            std::fs::write(out, body).map_err(|e| Error::io(out, e))?;
        }
        if let Some(recon) = &job.paths.recon {
            let input = media::read_y4m(&job.paths.input)?;
            if input.width() != node.width || input.height() != node.height {
                return Err(fail(format!(
                    "input is {}x{}, node expects {}x{}",
                    input.width(),
                    input.height(),
                    node.width,
                    node.height
                )));
            }
            media::write_y4m(&simulated_recon(&input, node.id.qp, depth, &self.model)?, recon)?;
        }
        Ok(EncodeOutput {
            bitrate_kbps: Some(bitrate),
            time_s,
            model_quality_db: Some(quality),
        })
    }
}

/// Input clip for one (tile, tier).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputClip {
    pub path: PathBuf,
    pub frames: usize,
    pub fps: Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResult {
    pub node: NodeId,
    /// Bitstream file name, relative to the run directory.
    pub bitstream: String,
    pub bytes: u64,
    pub sha256: String,
    pub bitrate_kbps: f64,
    pub time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recon: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_quality_db: Option<f64>,
    pub reuse_depth: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTiming {
    pub node: NodeId,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierTiming {
    pub tier: usize,
    pub name: String,
    /// Sum of node times in the tier.
    pub serial_s: f64,
    /// Slowest node in the tier.
    pub parallel_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingLedger {
    pub worker_limit: usize,
    pub nodes: Vec<NodeTiming>,
    pub serial_sum_s: f64,
    /// List-schedule makespan of the node times over `worker_limit` workers.
    pub makespan_s: f64,
    /// Observed wall clock; only recorded for non-deterministic backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
    pub tiers: Vec<TierTiming>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeFailure {
    pub node: NodeId,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    /// Successful results in plan order.
    pub results: Vec<EncodeResult>,
    pub ledger: TimingLedger,
    pub failures: Vec<NodeFailure>,
    pub skipped: Vec<NodeId>,
    /// Nodes taken from a previous run instead of re-encoding.
    pub resumed: Vec<NodeId>,
}

impl RunOutcome {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty() && self.skipped.is_empty()
    }

    /// Converts partial failure into [`Error::PartialFailure`].
    pub fn into_complete(self) -> Result<Self> {
        if self.is_complete() {
            return Ok(self);
        }
        let first = self
            .failures
            .first()
            .map(|f| format!("{}: {}", f.node, f.diagnostic))
            .unwrap_or_default();
        Err(Error::PartialFailure {
            failed: self.failures.len(),
            skipped: self.skipped.len(),
            first,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub worker_limit: usize,
    pub keep_analysis: bool,
    pub settings: EncodeSettings,
    /// Results of an earlier run; those whose bitstream still verifies are reused.
    pub previous: Vec<EncodeResult>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            worker_limit: default_worker_limit(),
            keep_analysis: false,
            settings: EncodeSettings::default(),
            previous: Vec::new(),
        }
    }
}

pub fn default_worker_limit() -> usize {
    let hw = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    (hw / ENCODER_THREADS).max(1)
}

/// Size and hex SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let mut f = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    let mut n = 0u64;
    loop {
        let k = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
        n += k as u64;
    }
    Ok((n, hex::encode(h.finalize())))
}

fn verifies(run_dir: &Path, r: &EncodeResult) -> bool {
    matches!(sha256_file(&run_dir.join(&r.bitstream)), Ok((n, s)) if n == r.bytes && s == r.sha256)
        && r.recon.as_ref().is_none_or(|p| run_dir.join(p).is_file())
}

/// Output paths of `node` inside `run_dir`.
pub fn job_paths(plan: &EncodePlan, node: &EncodeNode, input: &Path, run_dir: &Path, recon: bool) -> JobPaths {
    let t = &plan.templates;
    let analysis_of = |id: &NodeId| {
        plan.node(id)
            .map(|src| run_dir.join(FileTemplates::expand(&t.analysis, src)))
    };
    JobPaths {
        input: input.to_path_buf(),
        bitstream: run_dir.join(FileTemplates::expand(&t.bitstream, node)),
        recon: recon.then(|| run_dir.join(FileTemplates::expand(&t.recon, node))),
        analysis_in: node.source().and_then(|s| analysis_of(&s)),
        analysis_out: node
            .save_analysis
            .then(|| run_dir.join(FileTemplates::expand(&t.analysis, node))),
    }
}

/// Greedy list schedule in plan order: a node becomes ready when its source finishes.
fn list_schedule(times: &[f64], sources: &[Option<usize>], workers: usize) -> f64 {
    let n = times.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut ready = BTreeSet::new();
    for (k, s) in sources.iter().enumerate() {
        match s {
            Some(p) => children[*p].push(k),
            None => {
                ready.insert(k);
            }
        }
    }
    let mut running: Vec<(f64, usize)> = Vec::new();
    let mut now = 0.0f64;
    let mut makespan = 0.0f64;
    loop {
        while running.len() < workers {
            let Some(k) = ready.pop_first() else { break };
            running.push((now + times[k], k));
        }
        let Some(pos) = running
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.1 .1.cmp(&b.1 .1)))
            .map(|(i, _)| i)
        else {
            break;
        };
        let (t, k) = running.swap_remove(pos);
        now = t;
        makespan = makespan.max(t);
        ready.extend(children[k].iter().copied());
    }
    makespan
}

struct Pool {
    ready: BTreeSet<usize>,
    settled: usize,
    results: Vec<Option<EncodeResult>>,
    failures: Vec<NodeFailure>,
    skipped: BTreeSet<usize>,
}

/// Executes every node of `plan` once, respecting analysis dependencies.
///
/// `inputs` must hold a clip for every (tile, tier) the plan touches.
/// Failures skip only the failing node's transitive dependents; the outcome
/// reports them instead of returning an error.
pub fn run_plan(
    plan: &EncodePlan,
    backend: &dyn EncoderBackend,
    inputs: &HashMap<(Tile, usize), InputClip>,
    run_dir: &Path,
    options: &RunOptions,
) -> Result<RunOutcome> {
    if options.worker_limit == 0 {
        return Err(Error::Config("worker limit must be at least 1".into()));
    }
    let violations = crate::plan::validate_plan(plan);
    if let Some(v) = violations.first() {
        return Err(Error::Plan(v.to_string()));
    }
    for n in &plan.nodes {
        let clip = inputs
            .get(&(n.id.tile, n.id.tier))
            .ok_or_else(|| Error::MissingInput(format!("{} tier {}", n.id.tile, n.id.tier)))?;
        if !clip.path.is_file() {
            return Err(Error::MissingInput(clip.path.display().to_string()));
        }
    }
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;

    let n = plan.nodes.len();
    let index = plan.index();
    let depths = reuse_depths(plan)?;
    let sources: Vec<Option<usize>> = plan.nodes.iter().map(|x| x.source().map(|s| index[&s])).collect();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, s) in sources.iter().enumerate() {
        if let Some(p) = s {
            children[*p].push(k);
        }
    }
    let paths: Vec<JobPaths> = plan
        .nodes
        .iter()
        .map(|x| job_paths(plan, x, &inputs[&(x.id.tile, x.id.tier)].path, run_dir, options.settings.write_recon))
        .collect();

    // reuse verified results; a reused saver whose artifact is gone must rerun if anything still needs it
    let previous: HashMap<NodeId, &EncodeResult> = options.previous.iter().map(|r| (r.node, r)).collect();
    let mut done: Vec<bool> = plan
        .nodes
        .iter()
        .map(|x| previous.get(&x.id).is_some_and(|r| verifies(run_dir, r)))
        .collect();
    loop {
        let mut changed = false;
        for k in 0..n {
            if let Some(p) = sources[k] {
                let artifact = paths[k].analysis_in.as_ref().is_some_and(|a| a.is_file());
                if !done[k] && done[p] && !artifact {
                    done[p] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut pool = Pool {
        ready: BTreeSet::new(),
        settled: 0,
        results: vec![None; n],
        failures: Vec::new(),
        skipped: BTreeSet::new(),
    };
    let mut resumed = Vec::new();
    for k in 0..n {
        if done[k] {
            pool.results[k] = Some(previous[&plan.nodes[k].id].clone());
            pool.settled += 1;
            resumed.push(plan.nodes[k].id);
        } else if sources[k].is_none_or(|p| done[p]) {
            pool.ready.insert(k);
        }
    }

    let state = Mutex::new(pool);
    let cv = Condvar::new();
    let start = Instant::now();
    let workers = options.worker_limit.min(n.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = {
                    let mut st = state.lock().unwrap_or_else(|e| e.into_inner());
                    loop {
                        if let Some(k) = st.ready.pop_first() {
                            break k;
                        }
                        if st.settled == n {
                            return;
                        }
                        st = cv.wait(st).unwrap_or_else(|e| e.into_inner());
                    }
                };
                let node = &plan.nodes[k];
                let clip = &inputs[&(node.id.tile, node.id.tier)];
                let outcome = execute(node, &paths[k], clip, run_dir, depths[&node.id], backend, &options.settings);
                let mut st = state.lock().unwrap_or_else(|e| e.into_inner());
                st.settled += 1;
                match outcome {
                    Ok(r) => {
                        st.results[k] = Some(r);
                        for &c in &children[k] {
                            if st.results[c].is_none() {
                                st.ready.insert(c);
                            }
                        }
                    }
                    Err(e) => {
                        tracing::warn!(node = %node.id, error = %e, "encode failed");
                        st.failures.push(NodeFailure {
                            node: node.id,
                            diagnostic: e.to_string(),
                        });
                        let mut stack = children[k].clone();
                        while let Some(c) = stack.pop() {
                            if st.results[c].is_none() && st.skipped.insert(c) {
                                st.settled += 1;
                                stack.extend(children[c].iter().copied());
                            }
                        }
                    }
                }
                cv.notify_all();
            });
        }
    });
    let wall = start.elapsed().as_secs_f64();
    let pool = state.into_inner().unwrap_or_else(|e| e.into_inner());

    if !options.keep_analysis {
        for p in paths.iter().filter_map(|p| p.analysis_out.as_ref()) {
            if p.is_file() {
                std::fs::remove_file(p).map_err(|e| Error::io(p, e))?;
            }
        }
    }

    let mut failures = pool.failures;
    failures.sort_by_key(|f| index[&f.node]);
    let results: Vec<EncodeResult> = pool.results.into_iter().flatten().collect();
    let ledger = build_ledger(plan, &results, options.worker_limit, (!backend.deterministic()).then_some(wall));
    Ok(RunOutcome {
        results,
        ledger,
        failures,
        skipped: pool.skipped.into_iter().map(|k| plan.nodes[k].id).collect(),
        resumed,
    })
}

fn execute(
    node: &EncodeNode,
    paths: &JobPaths,
    clip: &InputClip,
    run_dir: &Path,
    depth: u32,
    backend: &dyn EncoderBackend,
    settings: &EncodeSettings,
) -> Result<EncodeResult> {
    if let Some(a) = &paths.analysis_in {
        if !a.is_file() {
            return Err(Error::MissingAnalysis {
                node: node.id.to_string(),
                path: a.clone(),
            });
        }
    }
    let job = EncodeJob {
        node,
        paths,
        frames: clip.frames,
        fps: clip.fps,
        settings,
    };
    let out = backend.encode(&job)?;
    let (bytes, sha256) = sha256_file(&paths.bitstream)?;
    let bitrate_kbps = match out.bitrate_kbps {
        Some(b) => b,
        None if clip.frames == 0 => 0.0,
        None => bytes as f64 * 8.0 * clip.fps.as_f64() / clip.frames as f64 / 1000.0,
    };
    if !(bitrate_kbps > 0.0 && out.time_s > 0.0) {
        return Err(Error::Backend {
            node: node.id.to_string(),
            diagnostic: format!("non-positive bitrate {bitrate_kbps} or time {}", out.time_s),
        });
    }
    let rel = |p: &Path| {
        p.strip_prefix(run_dir)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    tracing::debug!(node = %node.id, time_s = out.time_s, bitrate_kbps, "encoded");
    Ok(EncodeResult {
        node: node.id,
        bitstream: rel(&paths.bitstream),
        bytes,
        sha256,
        bitrate_kbps,
        time_s: out.time_s,
        analysis_out: paths.analysis_out.as_deref().map(rel),
        recon: paths.recon.as_deref().map(rel),
        model_quality_db: out.model_quality_db,
        reuse_depth: depth,
    })
}

/// Timing ledger over whatever results exist, in plan order.
pub fn build_ledger(
    plan: &EncodePlan,
    results: &[EncodeResult],
    worker_limit: usize,
    wall_clock_s: Option<f64>,
) -> TimingLedger {
    let by_id: BTreeMap<NodeId, &EncodeResult> = results.iter().map(|r| (r.node, r)).collect();
    let present: Vec<&EncodeNode> = plan.nodes.iter().filter(|x| by_id.contains_key(&x.id)).collect();
    let local: HashMap<NodeId, usize> = present.iter().enumerate().map(|(k, x)| (x.id, k)).collect();
    let times: Vec<f64> = present.iter().map(|x| by_id[&x.id].time_s).collect();
    let sources: Vec<Option<usize>> = present
        .iter()
        .map(|x| x.source().and_then(|s| local.get(&s).copied()))
        .collect();
    let nodes: Vec<NodeTiming> = present
        .iter()
        .zip(&times)
        .map(|(x, &t)| NodeTiming { node: x.id, time_s: t })
        .collect();
    let serial_sum_s = times.iter().sum();
    let tiers = plan
        .ladder
        .tiers
        .iter()
        .enumerate()
        .map(|(tier, t)| {
            let ts: Vec<f64> = nodes.iter().filter(|x| x.node.tier == tier).map(|x| x.time_s).collect();
            TierTiming {
                tier,
                name: t.name.clone(),
                serial_s: ts.iter().sum(),
                parallel_s: ts.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect();
    TimingLedger {
        worker_limit,
        makespan_s: list_schedule(&times, &sources, worker_limit.max(1)),
        nodes,
        serial_sum_s,
        wall_clock_s,
        tiers,
    }
}
