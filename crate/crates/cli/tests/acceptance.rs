//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use bathsim_core::config::ScenarioConfig;
use bathsim_core::controller::{fit_digit_calibration, CalibrationSample};
use bathsim_core::geometry::{quat_log, rot_x, Pose6};
use bathsim_core::perception::{
    iou, iou_counts, segment_rgbt, split_dataset, DepthImage, IouReport, SegMask, LABEL_BACKGROUND,
    LABEL_DRY,
};
use bathsim_core::planner::{generate_primitive, plan_waypoints, sweep_coverage, Region};
use bathsim_core::planner::{lift_to_3d, PhaseTag};
use bathsim_core::rng::XorShift64Star;
use bathsim_core::robot::{forward_kinematics, jacobian, KinematicChain};
use bathsim_core::sim::run_trial;
use bathsim_core::sim::scenarios::{force_step, impact_peak, StictionScenario};
use bathsim_core::sim::scenes::{generate_scene, scene_spec};
use bathsim_core::tool::{solve_tool_equilibrium, Plane, ToolModel};
use bathsim_core::{TaskKind, Vec3, Vec7, Wrench};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(pass: bool, detail: String) -> Outcome {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn jacobian_fd() -> Outcome {
    let chain = KinematicChain::default();
    let mut rng = XorShift64Star::new(2024);
    let h = 1e-6;
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let q = Vec7::from_fn(|_, _| rng.uniform(-3.0, 3.0));
        let j = jacobian(&chain, &q);
        for i in 0..7 {
            let (mut qp, mut qm) = (q, q);
            qp[i] += h;
            qm[i] -= h;
            let (pp, pm) = (
                forward_kinematics(&chain, &qp),
                forward_kinematics(&chain, &qm),
            );
            let lin = (pp.position - pm.position) / (2.0 * h);
            let ang = quat_log(&(pp.orientation * pm.orientation.inverse())) / (2.0 * h);
            for r in 0..3 {
                worst = worst
                    .max((lin[r] - j[(r, i)]).abs())
                    .max((ang[r] - j[(r + 3, i)]).abs());
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(
        worst < 1e-5 && secs < 1.0,
        format!("max deviation {worst:.2e}, {secs:.3} s"),
    )
}

fn force_tracking(cfg: &ScenarioConfig) -> Outcome {
    let trace = force_step(cfg, TaskKind::Wash, 5.0, 3.0).map_err(|e| e.to_string())?;
    let settle = trace.settling_time(0.25, 20);
    let peak = trace.peak();
    let at_2s = trace.smoothed(20)[1999];
    check(
        settle.is_some_and(|t| t <= 2.0) && peak <= 7.5,
        format!("settled in {settle:?} s, force at 2 s {at_2s:.3} N, peak {peak:.3} N"),
    )
}

fn observer(_: &ScenarioConfig) -> Outcome {
    let s = StictionScenario::default();
    let off = s.steady_state_error(false).map_err(|e| e.to_string())?;
    let on = s.steady_state_error(true).map_err(|e| e.to_string())?;
    check(
        on <= 0.5 * off,
        format!("error off {off:.6} rad, on {on:.6} rad"),
    )
}

fn gain_ordering(cfg: &ScenarioConfig) -> Outcome {
    let wash = impact_peak(cfg, TaskKind::Wash).map_err(|e| e.to_string())?;
    let dry = impact_peak(cfg, TaskKind::Dry).map_err(|e| e.to_string())?;
    let kw = cfg
        .controller
        .gains
        .get(TaskKind::Wash)
        .map_err(|e| e.to_string())?
        .stiffness_z();
    let kd = cfg
        .controller
        .gains
        .get(TaskKind::Dry)
        .map_err(|e| e.to_string())?
        .stiffness_z();
    check(
        dry < wash && kd < kw,
        format!("peak dry {dry:.3} N < wash {wash:.3} N, Kp_z dry {kd} < wash {kw}"),
    )
}

/// Random convex blob: a rotated ellipse or rectangle inside the image.
fn convex_region(rng: &mut XorShift64Star, w: usize, h: usize) -> Region {
    let mut r = Region::new(w, h);
    let (cx, cy) = (rng.uniform(35.0, 61.0), rng.uniform(50.0, 126.0));
    let (a, b) = (rng.uniform(12.0, 30.0), rng.uniform(12.0, 45.0));
    let th = rng.uniform(0.0, std::f64::consts::PI);
    let ellipse = rng.below(2) == 0;
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let (u, v) = (
                dx * th.cos() + dy * th.sin(),
                -dx * th.sin() + dy * th.cos(),
            );
            let inside = if ellipse {
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            } else {
                u.abs() <= a * 0.8 && v.abs() <= b * 0.8
            };
            r.set(x, y, inside);
        }
    }
    r
}

fn sweep(cfg: &ScenarioConfig) -> Outcome {
    let cam = cfg.camera.model();
    let (w, h) = (cfg.camera.width, cfg.camera.height);
    let range = cfg.camera.pose.position[2] - 0.08;
    let mut depth = DepthImage::new(w, h);
    depth.data.fill((range * 1000.0).round() as u16);
    let prim_cfg = cfg.primitive_config();
    let tool = cfg.footprint();
    let fp = tool.to_pixels(&cam, range);
    let start = Pose6::from_translation(0.5, 0.0, 0.3);
    let mut rng = XorShift64Star::new(77);
    let mut worst = (1.0f64, TaskKind::Wash, 0);
    for k in 0..20 {
        let region = convex_region(&mut rng, w, h);
        for task in TaskKind::PHASES {
            let ws = plan_waypoints(&region, &fp, task, prim_cfg.pat_spacing);
            let ws = lift_to_3d(&ws, &depth, &cam).map_err(|e| e.to_string())?;
            let prim =
                generate_primitive(task, &ws, &start, &prim_cfg).map_err(|e| e.to_string())?;
            let rest =
                prim_cfg.tool_rest_length - prim_cfg.force_for(task) / prim_cfg.tool_stiffness;
            let c = sweep_coverage(&region, &prim, &cam, &tool, rest);
            if c < worst.0 {
                worst = (c, task, k);
            }
        }
    }
    check(
        worst.0 >= 0.95,
        format!(
            "worst coverage {:.4} ({:?}, region {})",
            worst.0, worst.1, worst.2
        ),
    )
}

fn end_to_end(config: &Path) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    let mut slowest: f64 = 0.0;
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let t0 = Instant::now();
        let o = Command::new(env!("CARGO_BIN_EXE_bathsim"))
            .args(["run", "--config"])
            .arg(config)
            .args(["--seed", "7", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        slowest = slowest.max(t0.elapsed().as_secs_f64());
        if !o.status.success() {
            return Err(String::from_utf8_lossy(&o.stderr).into_owned());
        }
        reports.push(std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?);
    }
    let v: serde_json::Value = serde_json::from_slice(&reports[0]).map_err(|e| e.to_string())?;
    let get = |k: &str| v[k].as_f64().unwrap_or(f64::NAN);
    let (soap, water, peak) = (
        get("residual_soap_pct"),
        get("residual_water_pct"),
        get("peak_force_n"),
    );
    let same = reports[0] == reports[1];
    check(
        soap <= 2.0 && water <= 5.0 && peak <= 10.0 && same && slowest < 60.0,
        format!(
            "soap {soap:.3}%, water {water:.3}%, peak {peak:.3} N, identical {same}, {slowest:.1} s per run"
        ),
    )
}

fn stroke_blocks(points: &[bathsim_core::planner::TrajectoryPoint]) -> Vec<Vec<Vec3>> {
    let mut blocks: Vec<Vec<Vec3>> = Vec::new();
    let mut prev = None;
    for p in points {
        if p.phase == PhaseTag::Stroke {
            if prev != Some(PhaseTag::Stroke) {
                blocks.push(Vec::new());
            }
            blocks.last_mut().unwrap().push(p.pose.position);
        }
        prev = Some(p.phase);
    }
    blocks
}

fn rinse_doubling(log: &bathsim_core::sim::TrialLog) -> Outcome {
    let prim = log
        .primitives
        .iter()
        .find(|p| p.task == TaskKind::Rinse && !p.points.is_empty())
        .ok_or("no rinse primitive")?;
    let blocks = stroke_blocks(&prim.points);
    let mut ok = !blocks.is_empty() && blocks.len().is_multiple_of(2);
    for pair in blocks.chunks(2) {
        ok &= pair.len() == 2 && pair[0] == pair[1];
    }
    for b in &blocks {
        ok &= blocks.iter().filter(|o| *o == b).count() == 2;
    }
    check(
        ok,
        format!("{} strokes over {} strips", blocks.len(), blocks.len() / 2),
    )
}

fn iou_oracle() -> Outcome {
    let a = SegMask::from_raw(4, 1, vec![0, 1, 2, 3]).map_err(|e| e.to_string())?;
    let b = SegMask::from_raw(4, 1, vec![1, 2, 3, 0]).map_err(|e| e.to_string())?;
    let ident = iou(&a, &a).map_err(|e| e.to_string())?.miou;
    let disjoint = iou(&a, &b).map_err(|e| e.to_string())?.miou;
    let mut truth = SegMask::new(8, 4);
    for y in 0..4 {
        for x in 0..4 {
            truth.set(x, y, LABEL_DRY);
        }
    }
    let mut pred = SegMask::new(8, 4);
    pred.labels.fill(LABEL_DRY);
    let half = iou(&pred, &truth).map_err(|e| e.to_string())?;
    let dry = half.per_class[LABEL_DRY as usize].unwrap_or(f64::NAN);
    let bg = half.per_class[LABEL_BACKGROUND as usize].unwrap_or(f64::NAN);
    let mut ok = (ident - 1.0).abs() < 1e-12
        && disjoint.abs() < 1e-12
        && (dry - 0.5).abs() < 1e-12
        && bg.abs() < 1e-12
        && (half.miou - 0.25).abs() < 1e-12;
    let mut sizes = Vec::new();
    for (n, want) in [
        (10, (8, 1, 1)),
        (1000, (800, 100, 100)),
        (1003, (803, 100, 100)),
    ] {
        let ids: Vec<usize> = (0..n).collect();
        let s = split_dataset(&ids, 5);
        let got = (s.train.len(), s.val.len(), s.test.len());
        ok &= got == want;
        sizes.push(format!("{n}->{}/{}/{}", got.0, got.1, got.2));
    }
    check(
        ok,
        format!(
            "identity {ident}, disjoint {disjoint}, half {dry}/{bg}/{}, splits {}",
            half.miou,
            sizes.join(" ")
        ),
    )
}

fn pooled_miou(cfg: &ScenarioConfig, noise: Option<(f64, f64)>) -> Result<f64, String> {
    let tones = [1, 2, 3, 4, 5, 6];
    let (mut inter, mut union) = ([0u64; 4], [0u64; 4]);
    for k in 0..60 {
        let spec = scene_spec(k, &tones);
        let scene = generate_scene(&cfg.limb, &cfg.camera, &spec, 11, k, noise);
        let pred = segment_rgbt(&scene.rgb, &scene.thermal, &cfg.segmentation)
            .map_err(|e| e.to_string())?;
        let (i, u) = iou_counts(&pred, &scene.truth).map_err(|e| e.to_string())?;
        for c in 0..4 {
            inter[c] += i[c];
            union[c] += u[c];
        }
    }
    Ok(IouReport::from_counts(&inter, &union).miou)
}

fn closure(cfg: &ScenarioConfig) -> Outcome {
    let clean = pooled_miou(cfg, None)?;
    let noisy = pooled_miou(cfg, Some((3.0, 0.5)))?;
    check(
        clean >= 0.95 && noisy >= 0.85,
        format!("noise-free mIoU {clean:.5}, noisy mIoU {noisy:.5} over 60 scenes"),
    )
}

fn scrubby() -> Outcome {
    let m = ToolModel::default();
    let down = |z: f64| Pose6 {
        position: Vec3::new(0.0, 0.0, z),
        orientation: rot_x(std::f64::consts::PI),
    };
    let (free, w0) = solve_tool_equilibrium(&m, &down(1.0), &Plane::horizontal(0.0));
    let parallel = free.bottom_pose.orientation == free.top_pose.orientation;
    let delta = 0.004;
    let (_, w) = solve_tool_equilibrium(&m, &down(m.rest_length - delta), &Plane::horizontal(0.0));
    let expect = 4.0 * m.spring_stiffness * delta;
    let rel = (w.force.z - expect).abs() / expect;
    let th = 5.0f64.to_radians();
    let tilted = Plane {
        point: Vec3::zeros(),
        normal: Vec3::new(-th.sin(), 0.0, th.cos()),
    };
    let (s, _) = solve_tool_equilibrium(&m, &down(m.rest_length - 0.006), &tilted);
    check(
        w0 == Wrench::zero() && parallel && rel <= 1e-9 && s.moment_residual < 1e-6,
        format!(
            "free wrench zero {}, plates parallel {parallel}, 4kδ rel err {rel:.1e}, tilted residual {:.1e} N·m",
            w0 == Wrench::zero(),
            s.moment_residual
        ),
    )
}

fn multi_rate(cfg: &ScenarioConfig, log: &bathsim_core::sim::TrialLog) -> Outcome {
    let runs = log.ticks_per_advance();
    let want = cfg.timing.ticks_per_point;
    let bad = runs.iter().filter(|&&n| n != want).count();
    check(
        !runs.is_empty() && bad == 0 && want == 14,
        format!(
            "{} advances, {bad} with a tick count other than {want}",
            runs.len()
        ),
    )
}

fn synthetic(
    n: usize,
    k: usize,
    sigma: f64,
    seed: u64,
) -> (Vec<CalibrationSample>, Vec<Vec<f64>>, [f64; 3]) {
    let mut rng = XorShift64Star::new(seed);
    let a: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..k).map(|_| rng.uniform(-2.0, 2.0)).collect())
        .collect();
    let b = [
        rng.uniform(-1.0, 1.0),
        rng.uniform(-1.0, 1.0),
        rng.uniform(-1.0, 1.0),
    ];
    let samples = (0..n)
        .map(|_| {
            let features: Vec<f64> = (0..k).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let force = std::array::from_fn(|ax| {
                b[ax]
                    + a[ax].iter().zip(&features).map(|(p, q)| p * q).sum::<f64>()
                    + rng.gaussian(0.0, sigma)
            });
            CalibrationSample { features, force }
        })
        .collect();
    (samples, a, b)
}

fn calibration() -> Outcome {
    let (samples, a, b) = synthetic(60, 8, 0.0, 31);
    let cal = fit_digit_calibration(&samples).map_err(|e| e.to_string())?;
    let mut err: f64 = 0.0;
    for ax in 0..3 {
        err = err.max((cal.bias[ax] - b[ax]).abs());
        for (x, y) in cal.matrix[ax].iter().zip(&a[ax]) {
            err = err.max((x - y).abs());
        }
    }
    let sigma = 0.05;
    let (noisy, _, _) = synthetic(2000, 8, sigma, 32);
    let rms = fit_digit_calibration(&noisy)
        .map_err(|e| e.to_string())?
        .residual_rms;
    let ratio = rms / sigma;
    check(
        err < 1e-8 && (0.8..=1.2).contains(&ratio),
        format!("noiseless max coefficient error {err:.1e}, noisy rms {rms:.4} ({ratio:.3} σ)"),
    )
}

fn main() -> ExitCode {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../default.json");
    let cfg: ScenarioConfig = match std::fs::read_to_string(&config)
        .map_err(|e| e.to_string())
        .and_then(|t| bathsim::parse_config(&t))
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("cannot load {}: {e}", config.display());
            return ExitCode::FAILURE;
        }
    };
    let trial = run_trial(&cfg, &TaskKind::PHASES);

    let criteria: Vec<Criterion> = vec![
        ("jacobian correctness", Box::new(jacobian_fd)),
        ("force tracking", Box::new(|| force_tracking(&cfg))),
        ("friction observer efficacy", Box::new(|| observer(&cfg))),
        ("gain scheduling ordering", Box::new(|| gain_ordering(&cfg))),
        ("geometric coverage", Box::new(|| sweep(&cfg))),
        ("end-to-end pipeline", Box::new(|| end_to_end(&config))),
        (
            "rinse doubling",
            Box::new(|| {
                trial
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|t| rinse_doubling(&t.log))
            }),
        ),
        ("iou oracle", Box::new(iou_oracle)),
        ("segmenter/renderer closure", Box::new(|| closure(&cfg))),
        ("scrubby statics", Box::new(scrubby)),
        (
            "multi-rate contract",
            Box::new(|| {
                trial
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|t| multi_rate(&cfg, &t.log))
            }),
        ),
        ("calibration", Box::new(calibration)),
    ];

    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
