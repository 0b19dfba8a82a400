//! Command-line front end.
//!
//! Exit codes: 0 success, 1 domain or data error, 2 usage error. Text reports
//! and machine-readable JSON go to stdout (or `--out`); diagnostics and logs
//! go to stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::alignment::{optimal_match, ordered_mean, tae_against, OksMatrix};
use crate::assign::{assign_mah, assign_sah_with, AssignParams, SahMode};
use crate::error::{DataError, Error};
use crate::eval::{evaluate_images, EvalParams, EvalSummary};
use crate::io;
use crate::loss::{finite_diff_check, LossKind};
use crate::pose::{GroundTruthInstance, Pose, SigmaTable};
use crate::suppression::{conf_select, oks_nms_with, PairScale, ScoredPose};
use crate::synth::{self, ConfRegime, Selector, SynthConfig};

#[derive(Parser, Debug)]
#[command(
    name = "posekit",
    version,
    about = "Keypoint similarity, assignment, task alignment and evaluation tools",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOptions,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOptions {
    /// Sigma preset: coco17, crowdpose14, uniform, uniform(K) or a table
    /// name found on $POSEKIT_SIGMA_PATH.
    #[arg(long, global = true, default_value = "coco17")]
    pub sigmas: String,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    /// Seed for commands that draw random numbers; echoed in every report.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Worker threads; 1 runs strictly sequentially.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Report file (output directory for `synth`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// OKS of every prediction against every annotated instance, per image.
    Oks(OksArgs),
    /// Finite-difference check of the analytic pose-loss gradients.
    LossCheck(LossCheckArgs),
    /// Keypoint-driven label assignment over dense candidates.
    Assign(AssignArgs),
    /// Task Alignment Error of selected predictions.
    Tae(TaeArgs),
    /// OKS-based NMS or NMS-free confidence selection of predictions.
    Nms(NmsArgs),
    /// COCO-protocol keypoint AP/AR.
    Eval(EvalArgs),
    /// Synthetic scenes and candidate dumps.
    Synth(SynthCmd),
}

#[derive(Args, Debug)]
pub struct OksArgs {
    /// Ground truth in COCO keypoint format
    #[arg(long)]
    pub gt: PathBuf,
    /// Predictions as a COCO results array
    #[arg(long)]
    pub preds: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindArg {
    All,
    Gaussian,
    Laplace,
    Soks,
}

#[derive(Args, Debug)]
pub struct LossCheckArgs {
    #[arg(long, value_enum, default_value_t = KindArg::All)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Mah,
    Sah,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SahModeArg {
    Optimal,
    Argmax,
}

#[derive(Args, Debug)]
pub struct AssignArgs {
    /// Ground truth in COCO keypoint format
    #[arg(long)]
    pub gt: PathBuf,
    /// Candidate dump, one grid cell per line
    #[arg(long)]
    pub cands: PathBuf,
    /// Multi-positive Top-K or one positive per instance
    #[arg(long, value_enum, default_value_t = Head::Mah)]
    pub head: Head,
    /// Confidence exponent of the Score
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// OKS exponent of the Score
    #[arg(long, default_value_t = 6.0)]
    pub beta: f64,
    /// Positives per instance for the multi-positive head
    #[arg(long, default_value_t = 10)]
    pub k_top: usize,
    #[arg(long, value_enum, default_value_t = SahModeArg::Optimal)]
    pub sah_mode: SahModeArg,
}

#[derive(Args, Debug)]
pub struct TaeArgs {
    /// Ground truth in COCO keypoint format
    #[arg(long)]
    pub gt: PathBuf,
    /// Predictions as a COCO results array.
    #[arg(long, conflicts_with = "cands", required_unless_present = "cands")]
    pub preds: Option<PathBuf>,
    /// Predictions as a candidate dump.
    #[arg(long)]
    pub cands: Option<PathBuf>,
    /// JSON array of {image_id, gt_id, pred_index}.
    #[arg(long)]
    pub selected: PathBuf,
    /// Directory receiving one tab-separated OKS matrix per image.
    #[arg(long)]
    pub dump_matrix: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairScaleArg {
    Kept,
    Max,
    Geometric,
}

#[derive(Args, Debug)]
pub struct NmsArgs {
    /// Predictions as a COCO results array
    #[arg(long)]
    pub preds: PathBuf,
    /// Suppress when OKS with a kept pose exceeds this value.
    #[arg(long, default_value_t = 0.5)]
    pub thr: f64,
    /// Scale normalizing OKS between two predictions
    #[arg(long, value_enum, default_value_t = PairScaleArg::Kept)]
    pub pair_scale: PairScaleArg,
    /// NMS-free mode: keep every prediction with score at least this value.
    #[arg(long)]
    pub conf_thr: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Ground truth in COCO keypoint format
    #[arg(long)]
    pub gt: PathBuf,
    /// Predictions as a COCO results array
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long, default_value_t = crate::eval::DEFAULT_MAX_DETS)]
    pub max_dets: usize,
}

#[derive(Args, Debug)]
#[command(args_conflicts_with_subcommands = true)]
pub struct SynthCmd {
    #[command(subcommand)]
    pub action: Option<SynthAction>,
    #[command(flatten)]
    pub generate: SynthArgs,
}

#[derive(Subcommand, Debug)]
pub enum SynthAction {
    /// TAE-vs-AP sweep over noise levels and both confidence regimes.
    Sweep(SweepArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeArg {
    #[value(name = "keypoint_driven", alias = "keypoint-driven")]
    KeypointDriven,
    #[value(name = "box_driven", alias = "box-driven")]
    BoxDriven,
}

impl From<RegimeArg> for ConfRegime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::KeypointDriven => ConfRegime::KeypointDriven,
            RegimeArg::BoxDriven => ConfRegime::BoxDriven,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SceneArgs {
    #[arg(long, default_value_t = 0.05)]
    pub conf_noise: f64,
    #[arg(long, default_value_t = 256)]
    pub image_size: u32,
    #[arg(long, default_value_t = 1)]
    pub min_instances: usize,
    #[arg(long, default_value_t = 4)]
    pub max_instances: usize,
    #[arg(long, default_value_t = 17)]
    pub keypoints: usize,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub scenes: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = RegimeArg::KeypointDriven)]
    pub regime: RegimeArg,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 200)]
    pub scenes: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,0.02,0.05,0.1")]
    pub noise_levels: Vec<f64>,
    #[command(flatten)]
    pub scene: SceneArgs,
}

/// Failure of a subcommand.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(Error),
    Data(DataError),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Domain(_) => "domain",
            CliError::Data(DataError::Parse { .. }) => "parse",
            CliError::Data(DataError::Schema { .. }) => "schema",
            CliError::Data(DataError::Io { .. }) => "io",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Domain(e) => e.to_string(),
            CliError::Data(e) => e.to_string(),
        }
    }
}

/// A finished subcommand: a human report and its machine-readable twin.
pub struct Report {
    pub text: String,
    pub json: Value,
    /// Seed the command actually used, when it drew random numbers.
    pub seed: Option<u64>,
}

type CmdResult = std::result::Result<Report, CliError>;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    2
                }
            };
        }
    };
    init_logging(cli.global.verbose);
    let g = cli.global.clone();
    let outcome = with_pool(g.jobs, || dispatch(&cli));
    match outcome.and_then(|report| emit(&g, &cli.command, report, stdout)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = match g.format {
                Format::Machine => writeln!(
                    stderr,
                    "{}",
                    json!({"error": {"kind": e.kind(), "message": e.message()}})
                ),
                Format::Text => writeln!(stderr, "error: {}", e.message()),
            };
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn with_pool<R: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> std::result::Result<R, CliError> + Send,
) -> std::result::Result<R, CliError> {
    match jobs {
        None => f(),
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?
            .install(f),
    }
}

fn emit(
    g: &GlobalOptions,
    cmd: &Command,
    report: Report,
    stdout: &mut dyn Write,
) -> std::result::Result<(), CliError> {
    let body = match g.format {
        Format::Text => {
            let mut s = String::new();
            if let Some(seed) = report.seed.or(g.seed) {
                let _ = writeln!(s, "seed: {seed}");
            }
            s.push_str(&report.text);
            s
        }
        Format::Machine => {
            let mut v = report.json;
            if let (Some(seed), Value::Object(map)) = (report.seed.or(g.seed), &mut v) {
                map.insert("seed".into(), json!(seed));
            }
            let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
            s.push('\n');
            s
        }
    };
    match (&g.out, cmd) {
        (Some(path), c) if !matches!(c, Command::Synth(_)) => {
            std::fs::write(path, body).map_err(|e| DataError::io(path, e))?
        }
        _ => stdout
            .write_all(body.as_bytes())
            .map_err(|e| DataError::io("<stdout>", e))?,
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> CmdResult {
    let g = &cli.global;
    match &cli.command {
        Command::Oks(a) => cmd_oks(g, a),
        Command::LossCheck(a) => cmd_loss_check(g, a),
        Command::Assign(a) => cmd_assign(g, a),
        Command::Tae(a) => cmd_tae(g, a),
        Command::Nms(a) => cmd_nms(g, a),
        Command::Eval(a) => cmd_eval(g, a),
        Command::Synth(s) => match &s.action {
            Some(SynthAction::Sweep(a)) => cmd_sweep(g, a),
            None => cmd_synth(g, &s.generate),
        },
    }
}

fn sigma_table(g: &GlobalOptions, k: usize) -> std::result::Result<SigmaTable, CliError> {
    Ok(io::resolve_sigmas(&g.sigmas)?.table(k)?)
}

/// Seed for randomized commands. Machine output refuses to run unseeded.
fn require_seed(g: &GlobalOptions) -> std::result::Result<u64, CliError> {
    match (g.seed, g.format) {
        (Some(s), _) => Ok(s),
        (None, Format::Machine) => Err(CliError::Usage(
            "this command draws random numbers; pass --seed for machine-readable output".into(),
        )),
        (None, Format::Text) => {
            log::warn!("no --seed given, using 0");
            Ok(0)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.3}"))
}

fn dataset_k(ds: &io::Dataset, path: &Path) -> std::result::Result<usize, CliError> {
    ds.num_keypoints()
        .ok_or_else(|| CliError::Data(DataError::schema(path, "cannot infer keypoint count")))
}

/// Per image: usable ground truths and predicted poses (file order).
struct Paired {
    k: usize,
    gts: BTreeMap<u64, Vec<GroundTruthInstance>>,
    preds: BTreeMap<u64, Vec<Pose>>,
}

fn load_pairs(
    gt: &Path,
    preds: Option<&Path>,
    cands: Option<&Path>,
) -> std::result::Result<Paired, CliError> {
    let ds = io::load_dataset(gt)?;
    let k = dataset_k(&ds, gt)?;
    let gts = ds.instances_by_image()?;
    let preds: BTreeMap<u64, Vec<Pose>> = match (preds, cands) {
        (Some(p), _) => {
            let rs = io::load_results(p)?;
            warn_unknown(&rs, &ds);
            rs.by_image()
                .into_iter()
                .map(|(id, es)| (id, es.into_iter().map(|e| e.pose()).collect()))
                .collect()
        }
        (None, Some(c)) => io::load_candidates(c)?
            .into_iter()
            .map(|(id, cs)| (id, cs.into_iter().map(|c| c.pose).collect()))
            .collect(),
        (None, None) => return Err(CliError::Usage("need --preds or --cands".into())),
    };
    if let Some(bad) = preds.values().flatten().map(Pose::len).find(|&n| n != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: bad,
        }
        .into());
    }
    Ok(Paired { k, gts, preds })
}

fn warn_unknown(rs: &io::ResultSet, ds: &io::Dataset) {
    let unknown = rs.unknown_images(ds);
    if !unknown.is_empty() {
        log::warn!(
            "results reference {} unknown image(s), e.g. {}",
            unknown.len(),
            unknown[0]
        );
    }
}

fn cmd_oks(g: &GlobalOptions, a: &OksArgs) -> CmdResult {
    let pairs = load_pairs(&a.gt, Some(&a.preds), None)?;
    let sigmas = sigma_table(g, pairs.k)?;
    let mut text = String::new();
    let mut images = Vec::new();
    for (id, gts) in &pairs.gts {
        let preds = pairs.preds.get(id).map(Vec::as_slice).unwrap_or(&[]);
        if gts.is_empty() || preds.is_empty() {
            continue;
        }
        let m = OksMatrix::from_poses(gts, preds, &sigmas)?;
        let _ = writeln!(text, "image {id}");
        let rows: Vec<Vec<f64>> = (0..gts.len()).map(|r| m.row(r).to_vec()).collect();
        for (gt, row) in gts.iter().zip(&rows) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(text, "  gt {}: {}", gt.id, cells.join(" "));
        }
        images.push(json!({
            "image_id": id,
            "gt_ids": gts.iter().map(|g| g.id).collect::<Vec<_>>(),
            "oks": rows,
        }));
    }
    Ok(Report {
        text,
        json: json!({"command": "oks", "sigmas": g.sigmas, "images": images}),
        seed: None,
    })
}

fn cmd_loss_check(g: &GlobalOptions, a: &LossCheckArgs) -> CmdResult {
    let seed = require_seed(g)?;
    let kinds: Vec<LossKind> = match a.kind {
        KindArg::All => LossKind::ALL.to_vec(),
        KindArg::Gaussian => vec![LossKind::Gaussian],
        KindArg::Laplace => vec![LossKind::Laplace],
        KindArg::Soks => vec![LossKind::Soks],
    };
    let mut text = String::new();
    let mut rows = Vec::new();
    for kind in kinds {
        let r = finite_diff_check(kind, a.trials, seed)?;
        let _ = writeln!(
            text,
            "{:<8} max rel error {:.3e} at {} ({} components, {} trials excluded)",
            kind.name(),
            r.max_rel_error,
            r.worst_index,
            r.num_points,
            r.excluded_trials
        );
        rows.push(json!({
            "kind": kind.name(),
            "max_rel_error": r.max_rel_error,
            "worst_index": r.worst_index.to_string(),
            "num_points": r.num_points,
            "excluded_trials": r.excluded_trials,
        }));
    }
    Ok(Report {
        text,
        json: json!({"command": "loss-check", "trials": a.trials, "results": rows}),
        seed: Some(seed),
    })
}

fn cmd_assign(g: &GlobalOptions, a: &AssignArgs) -> CmdResult {
    let ds = io::load_dataset(&a.gt)?;
    let k = dataset_k(&ds, &a.gt)?;
    let sigmas = sigma_table(g, k)?;
    let gts = ds.instances_by_image()?;
    let cands = io::load_candidates(&a.cands)?;
    let params = AssignParams::new(a.alpha, a.beta, a.k_top)?;
    let mode = match a.sah_mode {
        SahModeArg::Optimal => SahMode::Optimal,
        SahModeArg::Argmax => SahMode::IndependentArgmax,
    };
    let mut text = String::new();
    let mut images = Vec::new();
    for (id, gts) in &gts {
        let Some(cs) = cands.get(id) else { continue };
        if gts.is_empty() {
            continue;
        }
        let result = match a.head {
            Head::Mah => assign_mah(gts, cs, &sigmas, &params)?,
            Head::Sah => assign_sah_with(gts, cs, &sigmas, &params, mode)?,
        };
        let _ = writeln!(text, "image {id}");
        let mut per_gt = Vec::new();
        for (gt, list) in gts.iter().zip(&result.per_gt) {
            let items: Vec<String> = list
                .iter()
                .map(|&(c, s)| {
                    let cand = &cs[c];
                    format!("{}@{}[{},{}]={:.4}", c, cand.level(), cand.row, cand.col, s)
                })
                .collect();
            let _ = writeln!(text, "  gt {}: {}", gt.id, items.join(" "));
            per_gt.push(json!({
                "gt_id": gt.id,
                "positives": list.iter().map(|&(c, s)| json!({
                    "candidate": c,
                    "level": cs[c].level().to_string(),
                    "row": cs[c].row,
                    "col": cs[c].col,
                    "score": s,
                })).collect::<Vec<_>>(),
            }));
        }
        images.push(json!({"image_id": id, "assignments": per_gt}));
    }
    let head = match a.head {
        Head::Mah => "mah",
        Head::Sah => "sah",
    };
    Ok(Report {
        text,
        json: json!({
            "command": "assign",
            "head": head,
            "alpha": a.alpha,
            "beta": a.beta,
            "k_top": a.k_top,
            "images": images,
        }),
        seed: None,
    })
}

fn cmd_tae(g: &GlobalOptions, a: &TaeArgs) -> CmdResult {
    let pairs = load_pairs(&a.gt, a.preds.as_deref(), a.cands.as_deref())?;
    let sigmas = sigma_table(g, pairs.k)?;
    let entries = io::load_selection(&a.selected)?;
    let mut by_image: BTreeMap<u64, Vec<io::SelectionEntry>> = BTreeMap::new();
    for e in entries {
        if !pairs.gts.contains_key(&e.image_id) {
            return Err(
                DataError::schema(&a.selected, format!("unknown image {}", e.image_id)).into(),
            );
        }
        by_image.entry(e.image_id).or_default().push(e);
    }
    if let Some(dir) = &a.dump_matrix {
        std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    }

    let mut per_image: Vec<(u64, f64)> = Vec::new();
    for (&id, gts) in &pairs.gts {
        if gts.is_empty() {
            continue;
        }
        let preds = pairs.preds.get(&id).map(Vec::as_slice).unwrap_or(&[]);
        let mut selection = vec![None; gts.len()];
        for e in by_image.get(&id).into_iter().flatten() {
            let row = gts.iter().position(|g| g.id == e.gt_id).ok_or_else(|| {
                DataError::schema(
                    &a.selected,
                    format!("image {id}: gt {} is not a usable instance", e.gt_id),
                )
            })?;
            if e.pred_index >= preds.len() {
                return Err(DataError::schema(
                    &a.selected,
                    format!(
                        "image {id}: gt {} selects prediction {} but the image has {}",
                        e.gt_id,
                        e.pred_index,
                        preds.len()
                    ),
                )
                .into());
            }
            selection[row] = Some(e.pred_index);
        }
        // No predictions: both sides of every term are zero.
        if preds.is_empty() {
            per_image.push((id, 0.0));
            continue;
        }
        let m = OksMatrix::from_poses(gts, preds, &sigmas)?;
        if let Some(dir) = &a.dump_matrix {
            dump_matrix(dir, id, gts, &m)?;
        }
        per_image.push((id, tae_against(&m, &optimal_match(&m), &selection)?));
    }
    let mean = ordered_mean(&per_image);
    let mut text = String::new();
    for (id, t) in &per_image {
        let _ = writeln!(text, "image {id}: TAE {t:.3}");
    }
    let _ = writeln!(text, "mean TAE {}", fmt_opt(mean));
    Ok(Report {
        text,
        json: json!({
            "command": "tae",
            "images": per_image.iter().map(|(id, t)| json!({"image_id": id, "tae": t})).collect::<Vec<_>>(),
            "mean_tae": mean,
        }),
        seed: None,
    })
}

fn dump_matrix(
    dir: &Path,
    id: u64,
    gts: &[GroundTruthInstance],
    m: &OksMatrix,
) -> std::result::Result<(), CliError> {
    let mut s = String::from("gt_id");
    for j in 0..m.cols() {
        let _ = write!(s, "\tp{j}");
    }
    s.push('\n');
    for (i, g) in gts.iter().enumerate() {
        let _ = write!(s, "{}", g.id);
        for v in m.row(i) {
            let _ = write!(s, "\t{v}");
        }
        s.push('\n');
    }
    let path = dir.join(format!("oks_{id}.tsv"));
    std::fs::write(&path, s).map_err(|e| DataError::io(&path, e))?;
    Ok(())
}

fn cmd_nms(g: &GlobalOptions, a: &NmsArgs) -> CmdResult {
    let rs = io::load_results(&a.preds)?;
    let k = rs.num_keypoints().unwrap_or(0);
    let sigmas = if k > 0 {
        Some(sigma_table(g, k)?)
    } else {
        None
    };
    let pair_scale = match a.pair_scale {
        PairScaleArg::Kept => PairScale::Kept,
        PairScaleArg::Max => PairScale::Max,
        PairScaleArg::Geometric => PairScale::GeometricMean,
    };
    let mut text = String::new();
    let mut images = Vec::new();
    let mut kept_entries = Vec::new();
    for (id, entries) in rs.by_image() {
        let cands: Vec<ScoredPose> = entries
            .iter()
            .map(|e| ScoredPose::from_extent(e.pose(), e.score))
            .collect::<crate::Result<_>>()?;
        let kept = match (a.conf_thr, &sigmas) {
            (Some(t), _) => conf_select(&cands, t)?,
            (None, Some(s)) => oks_nms_with(&cands, s, a.thr, pair_scale)?,
            (None, None) => Vec::new(),
        };
        let _ = writeln!(text, "image {id}: kept {} of {}", kept.len(), cands.len());
        kept_entries.extend(kept.iter().map(|&i| entries[i].clone()));
        images.push(json!({"image_id": id, "kept": kept, "total": cands.len()}));
    }
    let (mode, thr) = match a.conf_thr {
        Some(t) => ("conf", t),
        None => ("oks-nms", a.thr),
    };
    Ok(Report {
        text,
        json: json!({
            "command": "nms",
            "mode": mode,
            "threshold": thr,
            "images": images,
            "results": serde_json::to_value(&kept_entries).expect("results serialize"),
        }),
        seed: None,
    })
}

fn summary_text(s: &EvalSummary) -> String {
    let mut text = String::new();
    for (name, v) in s.metrics() {
        let _ = writeln!(text, "{name:<4} = {}", fmt_opt(v));
    }
    text
}

fn cmd_eval(g: &GlobalOptions, a: &EvalArgs) -> CmdResult {
    let ds = io::load_dataset(&a.gt)?;
    let k = dataset_k(&ds, &a.gt)?;
    let sigmas = sigma_table(g, k)?;
    let rs = io::load_results(&a.preds)?;
    warn_unknown(&rs, &ds);
    if let Some(n) = rs.num_keypoints().filter(|&n| n != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: n,
        }
        .into());
    }
    let params = EvalParams {
        max_dets: a.max_dets,
        ..EvalParams::default()
    };
    let summary = evaluate_images(
        &rs.detections(),
        &ds.instances()?,
        &ds.image_ids(),
        &sigmas,
        &params,
    )?;
    let metrics: serde_json::Map<String, Value> = summary
        .metrics()
        .into_iter()
        .map(|(n, v)| (n.to_string(), json!(v)))
        .collect();
    Ok(Report {
        text: summary_text(&summary),
        json: json!({"command": "eval", "sigmas": g.sigmas, "max_dets": a.max_dets, "metrics": metrics}),
        seed: None,
    })
}

fn synth_config(
    g: &GlobalOptions,
    seed: u64,
    s: &SceneArgs,
) -> std::result::Result<SynthConfig, CliError> {
    let cfg = SynthConfig {
        seed,
        image_size: s.image_size,
        num_instances: (s.min_instances, s.max_instances),
        num_keypoints: s.keypoints,
        sigmas: io::resolve_sigmas(&g.sigmas)?,
        conf_noise: s.conf_noise,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(g: &GlobalOptions) -> std::result::Result<&Path, CliError> {
    let dir = g
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("synth needs --out DIR".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    Ok(dir)
}

fn cmd_synth(g: &GlobalOptions, a: &SynthArgs) -> CmdResult {
    let seed = require_seed(g)?;
    let dir = out_dir(g)?;
    let cfg = SynthConfig {
        noise_scale: a.noise,
        regime: a.regime.into(),
        ..synth_config(g, seed, &a.scene)?
    };
    cfg.validate()?;
    let sigmas = cfg.sigma_table()?;
    let scenes = synth::generate_scenes(&cfg, a.scenes)?;
    let mut selections = Vec::new();
    let mut dets = Vec::new();
    let mut taes = Vec::new();
    for s in &scenes {
        let sel = s.select(Selector::OwnerArgmax, &sigmas)?;
        taes.push((s.image_id, s.tae(&sel, &sigmas)?));
        selections.extend(synth::to_selection_entries(s, &sel));
        dets.extend(s.detections(&sel));
    }
    let ds = synth::to_dataset(&scenes, cfg.num_keypoints);
    io::save_dataset(&ds, dir.join("gt.json"))?;
    io::save_candidates(&synth::to_candidate_set(&scenes), dir.join("cands.txt"))?;
    io::save_results(
        &io::ResultSet::from_detections(&dets),
        dir.join("preds.json"),
    )?;
    io::save_selection(&selections, dir.join("selected.json"))?;
    let summary = evaluate_images(
        &dets,
        &ds.instances()?,
        &ds.image_ids(),
        &sigmas,
        &EvalParams::default(),
    )?;
    let mean = ordered_mean(&taes);
    let mut text = format!(
        "{} scenes, {} instances, {} candidates written to {}\nmean TAE {}\n",
        scenes.len(),
        ds.annotations.len(),
        scenes.iter().map(|s| s.cands.len()).sum::<usize>(),
        dir.display(),
        fmt_opt(mean)
    );
    text.push_str(&summary_text(&summary));
    Ok(Report {
        text,
        json: json!({
            "command": "synth",
            "scenes": scenes.len(),
            "noise": a.noise,
            "regime": cfg.regime.name(),
            "conf_noise": cfg.conf_noise,
            "mean_tae": mean,
            "ap": summary.ap,
            "files": ["gt.json", "cands.txt", "preds.json", "selected.json"],
        }),
        seed: Some(seed),
    })
}

fn cmd_sweep(g: &GlobalOptions, a: &SweepArgs) -> CmdResult {
    let seed = require_seed(g)?;
    let dir = out_dir(g)?;
    let base = synth_config(g, seed, &a.scene)?;
    let report = synth::sweep_tae_vs_ap(&base, &a.noise_levels, a.scenes)?;

    let tsv = report.to_tsv();
    let tsv_path = dir.join("sweep.tsv");
    std::fs::write(&tsv_path, &tsv).map_err(|e| DataError::io(&tsv_path, e))?;
    let mut dat = String::from("# mean_tae ap regime(0=keypoint_driven,1=box_driven) noise\n");
    for r in &report.rows {
        let _ = writeln!(
            dat,
            "{} {} {} {}",
            r.mean_tae,
            r.ap.unwrap_or(f64::NAN),
            (r.regime == ConfRegime::BoxDriven) as u8,
            r.noise
        );
    }
    let dat_path = dir.join("sweep.dat");
    std::fs::write(&dat_path, dat).map_err(|e| DataError::io(&dat_path, e))?;

    let mut text = tsv;
    for (noise, t) in &report.sign_tests {
        let _ = writeln!(
            text,
            "noise {noise}: box_driven > keypoint_driven in {}/{} untied scenes, p = {:.3e}",
            t.wins,
            t.wins + t.losses,
            t.p_value
        );
    }
    let _ = writeln!(text, "spearman(TAE, AP) = {}", fmt_opt(report.spearman));
    Ok(Report {
        text,
        json: json!({
            "command": "synth sweep",
            "scenes": a.scenes,
            "rows": report.rows.iter().map(|r| json!({
                "regime": r.regime.name(),
                "noise": r.noise,
                "mean_tae": r.mean_tae,
                "ap": r.ap,
            })).collect::<Vec<_>>(),
            "sign_tests": report.sign_tests.iter().map(|(n, t)| json!({
                "noise": n,
                "wins": t.wins,
                "losses": t.losses,
                "ties": t.ties,
                "p_value": t.p_value,
            })).collect::<Vec<_>>(),
            "spearman": report.spearman,
        }),
        seed: Some(seed),
    })
}
