use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bathsim_core::controller::{fit_digit_calibration, CalibrationError, CalibrationSample};
use bathsim_core::perception::{
    iou_counts, segment_rgbt, split_dataset, IouReport, SegParams, CLASS_COUNT,
};
use bathsim_core::planner::MotionPrimitive;
use bathsim_core::sim::scenes::{generate_scene, scene_spec};
use bathsim_core::sim::{run_trial, CoverageReport, TickRecord, TrialLog};
use bathsim_core::TaskKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pnm::{self, depth_to_pnm, mask_to_pnm, rgb_to_pnm, thermal_to_pnm};
use crate::{ensure_dir, load_config, CliError};

pub const CLASS_NAMES: [&str; CLASS_COUNT] = ["background", "dry", "water", "soap"];
pub const MANIFEST: &str = "manifest.csv";

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn pool() -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(crate::worker_threads())
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))
}

// ---------------------------------------------------------------- run

pub struct RunArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub phases: Vec<TaskKind>,
}

#[derive(Serialize)]
struct TickRow {
    tick: u64,
    t: f64,
    phase: &'static str,
    point: usize,
    tag: &'static str,
    x: f64,
    y: f64,
    z: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    x_des: f64,
    y_des: f64,
    z_des: f64,
    fx_meas: f64,
    fy_meas: f64,
    fz_meas: f64,
    fx_true: f64,
    fy_true: f64,
    fz_true: f64,
    fz_des: f64,
    tau1: f64,
    tau2: f64,
    tau3: f64,
    tau4: f64,
    tau5: f64,
    tau6: f64,
    tau7: f64,
    saturated: u8,
    in_contact: u8,
}

impl From<&TickRecord> for TickRow {
    fn from(r: &TickRecord) -> Self {
        let [qw, qx, qy, qz] = r.pose.quat_wxyz();
        TickRow {
            tick: r.tick,
            t: r.t,
            phase: r.task.name(),
            point: r.point,
            tag: r.tag.name(),
            x: r.pose.position.x,
            y: r.pose.position.y,
            z: r.pose.position.z,
            qw,
            qx,
            qy,
            qz,
            x_des: r.desired_pose.position.x,
            y_des: r.desired_pose.position.y,
            z_des: r.desired_pose.position.z,
            fx_meas: r.force_measured.x,
            fy_meas: r.force_measured.y,
            fz_meas: r.force_measured.z,
            fx_true: r.force_true.x,
            fy_true: r.force_true.y,
            fz_true: r.force_true.z,
            fz_des: r.force_desired.z,
            tau1: r.tau[0],
            tau2: r.tau[1],
            tau3: r.tau[2],
            tau4: r.tau[3],
            tau5: r.tau[4],
            tau6: r.tau[5],
            tau7: r.tau[6],
            saturated: r.saturated as u8,
            in_contact: r.in_contact as u8,
        }
    }
}

#[derive(Serialize)]
struct PrimitiveRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    fx: f64,
    fy: f64,
    fz: f64,
    phase: &'static str,
}

#[derive(Serialize)]
struct PhaseSummary {
    phase: &'static str,
    status: bathsim_core::sim::PhaseStatus,
    region_pixels: usize,
    waypoints: usize,
    points: usize,
    first_tick: u64,
    ticks: u64,
    perception_delay_s: f64,
    warning: Option<String>,
}

pub fn write_trial_csv(path: &Path, log: &TrialLog) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in &log.ticks {
        w.serialize(TickRow::from(r))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_primitive_csv(path: &Path, primitive: &MotionPrimitive) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if primitive.points.is_empty() {
        w.write_record([
            "t", "x", "y", "z", "qw", "qx", "qy", "qz", "fx", "fy", "fz", "phase",
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    for p in &primitive.points {
        let [qw, qx, qy, qz] = p.pose.quat_wxyz();
        let row = PrimitiveRow {
            t: p.t,
            x: p.pose.position.x,
            y: p.pose.position.y,
            z: p.pose.position.z,
            qw,
            qx,
            qy,
            qz,
            fx: p.force.x,
            fy: p.force.y,
            fz: p.force.z,
            phase: p.phase.name(),
        };
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn cmd_run(args: &RunArgs) -> Result<CoverageReport, CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = ensure_dir(&args.out)?;
    let outcome = run_trial(&cfg, &args.phases).map_err(|e| {
        if e.is_config_error() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    })?;
    let log = &outcome.log;
    for p in &log.phases {
        if let Some(w) = &p.warning {
            eprintln!("warning: {w}");
        }
    }
    write_trial_csv(&out.join("trial.csv"), log)?;
    for prim in &log.primitives {
        write_primitive_csv(
            &out.join(format!("primitive_{}.csv", prim.task.name())),
            prim,
        )?;
    }
    let phases: Vec<PhaseSummary> = log
        .phases
        .iter()
        .map(|p| PhaseSummary {
            phase: p.task.name(),
            status: p.status,
            region_pixels: p.region_pixels,
            waypoints: p.waypoints,
            points: p.points,
            first_tick: p.first_tick,
            ticks: p.ticks,
            perception_delay_s: p.perception_delay,
            warning: p.warning.clone(),
        })
        .collect();
    write_file(&out.join("phases.json"), &json_bytes(&phases))?;
    write_file(&out.join("report.json"), &json_bytes(&outcome.report))?;
    Ok(outcome.report)
}

// ---------------------------------------------------------------- gen-scene

pub struct GenSceneArgs {
    pub out: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub tones: Vec<usize>,
    pub noise: bool,
    pub config: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub tone: usize,
    pub hair: bool,
    pub coverage: String,
    pub camera_pose: usize,
}

pub fn scene_files(id: &str) -> [String; 4] {
    [
        format!("{id}_rgb.ppm"),
        format!("{id}_thermal.pgm"),
        format!("{id}_depth.pgm"),
        format!("{id}_mask.pgm"),
    ]
}

pub fn cmd_gen_scene(args: &GenSceneArgs) -> Result<Vec<ManifestRow>, CliError> {
    let cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => Default::default(),
    };
    if args.tones.is_empty() || args.tones.iter().any(|t| !(1..=6).contains(t)) {
        return Err(CliError::Usage("tones must lie in 1..=6".into()));
    }
    let out = ensure_dir(&args.out)?;
    let noise = args
        .noise
        .then_some((cfg.render.rgb_noise, cfg.render.thermal_noise));
    let rows: Vec<ManifestRow> = (0..args.count)
        .map(|i| {
            let spec = scene_spec(i, &args.tones);
            ManifestRow {
                id: format!("scene_{i:05}"),
                tone: spec.tone,
                hair: false,
                coverage: spec.coverage.name().into(),
                camera_pose: spec.camera_pose,
            }
        })
        .collect();
    pool()?.install(|| {
        (0..args.count).into_par_iter().try_for_each(|i| {
            let spec = scene_spec(i, &args.tones);
            let scene = generate_scene(&cfg.limb, &cfg.camera, &spec, args.seed, i, noise);
            let [rgb, thermal, depth, mask] = scene_files(&rows[i].id).map(|f| out.join(f));
            let write = |p: &Path, img: pnm::Pnm| {
                img.write(p)
                    .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
            };
            write(&rgb, rgb_to_pnm(&scene.rgb))?;
            write(&thermal, thermal_to_pnm(&scene.thermal))?;
            write(&depth, depth_to_pnm(&scene.depth))?;
            write(&mask, mask_to_pnm(&scene.truth))
        })
    })?;
    let path = out.join(MANIFEST);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    if rows.is_empty() {
        w.write_record(["id", "tone", "hair", "coverage", "camera_pose"])
            .map_err(|e| csv_error(&path, e))?;
    }
    for r in &rows {
        w.serialize(r).map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(rows)
}

// ---------------------------------------------------------------- bench-seg

pub struct BenchSegArgs {
    pub data: PathBuf,
    pub split: String,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub split: String,
    pub seed: u64,
    pub ids: Vec<String>,
    /// `None` for classes absent from both prediction and truth
    pub per_class: BTreeMap<String, Option<f64>>,
    pub miou: Option<f64>,
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>, CliError> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "missing files: {}",
            path.display()
        )));
    }
    let mut r = csv::Reader::from_path(&path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<ManifestRow>, _>>()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn cmd_bench_seg(args: &BenchSegArgs) -> Result<BenchReport, CliError> {
    let rows = read_manifest(&args.data)?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: manifest lists no scenes",
            args.data.display()
        )));
    }
    let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    let split = split_dataset(&ids, args.seed);
    let chosen = match args.split.as_str() {
        "train" => split.train,
        "val" => split.val,
        "test" => split.test,
        other => {
            return Err(CliError::Usage(format!(
                "unknown split `{other}` (train, val or test)"
            )))
        }
    };
    let missing: Vec<String> = chosen
        .iter()
        .flat_map(|id| scene_files(id))
        .filter(|f| !f.ends_with("_depth.pgm"))
        .filter(|f| !args.data.join(f).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Usage(format!(
            "missing files: {}",
            missing.join(", ")
        )));
    }
    let params = SegParams::default();
    let counts = pool()?.install(|| {
        chosen
            .par_iter()
            .map(|id| {
                let [rgb, thermal, _, mask] = scene_files(id).map(|f| args.data.join(f));
                let bad = |e: pnm::PnmError| CliError::Usage(format!("{id}: {e}"));
                let rgb = pnm::read_rgb(&rgb).map_err(bad)?;
                let thermal = pnm::read_thermal(&thermal).map_err(bad)?;
                let truth = pnm::read_mask(&mask).map_err(bad)?;
                let pred = segment_rgbt(&rgb, &thermal, &params)
                    .map_err(|e| CliError::Usage(format!("{id}: {e}")))?;
                iou_counts(&pred, &truth).map_err(|e| CliError::Usage(format!("{id}: {e}")))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let mut inter = [0u64; CLASS_COUNT];
    let mut union = [0u64; CLASS_COUNT];
    for (i, u) in &counts {
        for c in 0..CLASS_COUNT {
            inter[c] += i[c];
            union[c] += u[c];
        }
    }
    let iou = IouReport::from_counts(&inter, &union);
    let report = BenchReport {
        split: args.split.clone(),
        seed: args.seed,
        ids: chosen,
        per_class: CLASS_NAMES
            .iter()
            .zip(iou.per_class)
            .map(|(n, v)| (n.to_string(), v))
            .collect(),
        miou: iou.miou.is_finite().then_some(iou.miou),
    };
    let out = ensure_dir(args.out.as_deref().unwrap_or(&args.data))?;
    write_file(&out.join("iou_report.json"), &json_bytes(&report))?;

    let stdout = std::io::stdout();
    let mut w = csv::Writer::from_writer(stdout.lock());
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    let mut rows: Vec<[String; 2]> = vec![["class".into(), "iou".into()]];
    for (name, v) in CLASS_NAMES.iter().zip(iou.per_class) {
        rows.push([name.to_string(), fmt(v)]);
    }
    rows.push(["miou".into(), fmt(report.miou)]);
    for r in rows {
        w.write_record(&r)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(report)
}

// ---------------------------------------------------------------- calibrate

pub struct CalibrateArgs {
    pub samples: PathBuf,
    pub out: PathBuf,
}

/// Reads `fx1..fxk,Fx,Fy,Fz` rows.
pub fn read_calibration_samples(path: &Path) -> Result<Vec<CalibrationSample>, CliError> {
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let n = headers.len();
    let names: Vec<&str> = headers.iter().collect();
    if n < 4 || names[n - 3..] != ["Fx", "Fy", "Fz"] {
        return Err(bad("header must end with Fx,Fy,Fz".into()));
    }
    for (i, h) in names[..n - 3].iter().enumerate() {
        if *h != format!("fx{}", i + 1) {
            return Err(bad(format!(
                "feature column {} must be named fx{}",
                i + 1,
                i + 1
            )));
        }
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let vals = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", line + 2)))?;
        out.push(CalibrationSample {
            features: vals[..n - 3].to_vec(),
            force: [vals[n - 3], vals[n - 2], vals[n - 1]],
        });
    }
    Ok(out)
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<(), CliError> {
    let samples = read_calibration_samples(&args.samples)?;
    let fit = fit_digit_calibration(&samples).map_err(|e| match e {
        CalibrationError::RankDeficient { .. } | CalibrationError::TooFewSamples { .. } => {
            CliError::Runtime(e.to_string())
        }
        _ => CliError::Usage(e.to_string()),
    })?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_file(&args.out, &json_bytes(&fit))?;
    let _ = writeln!(
        std::io::stderr(),
        "residual RMS {:.6} N over {} samples",
        fit.residual_rms,
        fit.samples
    );
    Ok(())
}
