//! Quasi-static model of the compliant wiper: a top plate held by the
//! gripper and a bottom plate hung from it on four corner springs. A tether
//! keeps the plates parallel at rest length and limits shear.
//!
//! Tool frame: origin at the top-plate center (the tool mount), `z` pointing
//! from the top plate toward the bottom plate, `x` across the plate width and
//! `y` along its length.
//!
//! The bottom plate is rigid, so its displacement toward the top plate is an
//! affine function `c(x, y) = h + a·x + b·y` of plate coordinates. Equilibrium
//! minimizes the spring energy `½k·Σ c(cornerᵢ)²` subject to non-penetration at
//! a grid of plate sample points (`c ≥ interference`) and to the springs never
//! extending past rest length (`c(corner) ≥ 0`). The three-variable QP is
//! solved exactly by active-set enumeration, warm-started from the previous
//! solve.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::geometry::{quat_exp, Pose6, Vec3, Wrench};

const SAMPLES_ACROSS: usize = 5;
const SAMPLES_ALONG: usize = 3;
const SAMPLE_COUNT: usize = SAMPLES_ACROSS * SAMPLES_ALONG;
const CONSTRAINTS: usize = SAMPLE_COUNT + 4;
const FEASIBILITY_TOL: f64 = 1e-12;
/// slip speed below which plate friction is scaled down linearly (m/s)
const SLIP_REGULARIZATION: f64 = 0.005;

/// Anything the tool can press against.
pub trait ContactSurface {
    /// Distance `point` may travel along unit `dir` before reaching the
    /// surface; negative when the point is already past the surface along
    /// that line. `None` when the line misses the surface.
    fn gap_along(&self, point: &Vec3, dir: &Vec3) -> Option<f64>;
}

/// Surfaces carrying a grid of treatable cells.
pub trait CellSurface: ContactSurface {
    /// Calls `f(cell index, cell center)` for every cell whose center lies
    /// within `radius` of `center` (a superset is allowed).
    fn for_each_cell_near(&self, center: &Vec3, radius: f64, f: &mut dyn FnMut(usize, &Vec3));
}

/// Infinite plane given by a point and its outward normal.
#[derive(Clone, Copy, Debug)]
pub struct Plane {
    pub point: Vec3,
    pub normal: Vec3,
}

impl Plane {
    pub fn horizontal(z: f64) -> Self {
        Plane {
            point: Vec3::new(0.0, 0.0, z),
            normal: Vec3::z(),
        }
    }
}

impl ContactSurface for Plane {
    fn gap_along(&self, point: &Vec3, dir: &Vec3) -> Option<f64> {
        let approach = self.normal.dot(dir);
        if approach >= -1e-12 {
            return None;
        }
        Some(-self.normal.dot(&(point - self.point)) / approach)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolModel {
    /// bottom plate extent along the stroke (m)
    pub plate_length: f64,
    /// bottom plate extent across the stroke (m)
    pub plate_width: f64,
    /// per corner spring (N/m)
    pub spring_stiffness: f64,
    pub rest_length: f64,
    pub max_compression: f64,
    /// largest lateral offset the tether allows (m)
    pub shear_limit: f64,
    /// per corner spring (N·s/m)
    pub damping: f64,
    /// lateral stiffness of each spring column (N/m)
    pub lateral_stiffness: f64,
    /// plate-on-skin sliding friction
    pub friction_coefficient: f64,
    /// per corner stiffness once a spring is fully compressed (N/m)
    pub bottom_out_stiffness: f64,
    /// depth the plate's pad conforms to skin below the plate plane (m)
    pub contact_tolerance: f64,
}

impl Default for ToolModel {
    fn default() -> Self {
        ToolModel {
            plate_length: 0.10,
            plate_width: 0.06,
            spring_stiffness: 300.0,
            rest_length: 0.03,
            max_compression: 0.02,
            shear_limit: 0.01,
            damping: 5.0,
            lateral_stiffness: 200.0,
            friction_coefficient: 0.2,
            bottom_out_stiffness: 15_000.0,
            contact_tolerance: 0.02,
        }
    }
}

impl ToolModel {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.spring_stiffness > 0.0) {
            return Err("spring stiffness must be positive");
        }
        if !(self.shear_limit > 0.0) {
            return Err("shear limit must be positive");
        }
        if !(self.rest_length > self.max_compression && self.max_compression >= 0.0) {
            return Err("need rest length > max compression >= 0");
        }
        if !(self.plate_length > 0.0 && self.plate_width > 0.0) {
            return Err("plate dimensions must be positive");
        }
        Ok(())
    }

    /// Corners in tool coordinates, ordered (−x,−y), (+x,−y), (+x,+y), (−x,+y).
    pub fn corners(&self) -> [(f64, f64); 4] {
        let (hx, hy) = (self.plate_width / 2.0, self.plate_length / 2.0);
        [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
    }

    fn samples(&self) -> [(f64, f64); SAMPLE_COUNT] {
        let (w, l) = (self.plate_width, self.plate_length);
        core::array::from_fn(|i| {
            let (ix, iy) = (i % SAMPLES_ACROSS, i / SAMPLES_ACROSS);
            (
                -w / 2.0 + w * ix as f64 / (SAMPLES_ACROSS - 1) as f64,
                -l / 2.0 + l * iy as f64 / (SAMPLES_ALONG - 1) as f64,
            )
        })
    }

    /// Total normal stiffness of the four springs (N/m).
    pub fn total_stiffness(&self) -> f64 {
        4.0 * self.spring_stiffness
    }

    /// Spring potential energy for the given corner compressions.
    pub fn spring_energy(&self, compressions: &[f64; 4]) -> f64 {
        compressions
            .iter()
            .map(|c| {
                let over = (c - self.max_compression).max(0.0);
                0.5 * self.spring_stiffness * c * c + 0.5 * self.bottom_out_stiffness * over * over
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToolState {
    pub top_pose: Pose6,
    pub bottom_pose: Pose6,
    /// per corner, clamped to `[0, max_compression]` (m)
    pub compressions: [f64; 4],
    /// unclamped displacement plane `(h, a, b)`
    pub plane: [f64; 3],
    /// lateral bottom-plate offset in tool coordinates (m)
    pub shear_offset: Vec3,
    pub in_contact: bool,
    pub converged: bool,
    /// KKT stationarity residual of the moment balance (N·m)
    pub moment_residual: f64,
    /// KKT stationarity residual of the force balance (N)
    pub force_residual: f64,
    active: Vec<usize>,
}

impl ToolState {
    pub fn at_rest(model: &ToolModel, top_pose: Pose6) -> Self {
        ToolState {
            top_pose,
            bottom_pose: top_pose.compose(&Pose6::from_translation(0.0, 0.0, model.rest_length)),
            compressions: [0.0; 4],
            plane: [0.0; 3],
            shear_offset: Vec3::zeros(),
            in_contact: false,
            converged: true,
            moment_residual: 0.0,
            force_residual: 0.0,
            active: Vec::new(),
        }
    }

    /// Plate tilt relative to the top plate: rotation about tool x and y (rad).
    pub fn tilt(&self) -> (f64, f64) {
        (-Float::atan(self.plane[2]), Float::atan(self.plane[1]))
    }
}

/// Rate-dependent inputs supplied by the simulation loop.
#[derive(Clone, Debug, Default)]
pub struct ContactInputs<'a> {
    /// last tick's state, for compression rates and warm starting
    pub previous: Option<&'a ToolState>,
    pub dt: f64,
    /// tool-mount velocity in the base frame (m/s)
    pub velocity: Vec3,
}

/// Static equilibrium without damping or sliding friction.
pub fn solve_tool_equilibrium(
    model: &ToolModel,
    top_pose: &Pose6,
    surface: &dyn ContactSurface,
) -> (ToolState, Wrench) {
    solve_tool_equilibrium_with(model, top_pose, surface, &ContactInputs::default())
}

pub fn solve_tool_equilibrium_with(
    model: &ToolModel,
    top_pose: &Pose6,
    surface: &dyn ContactSurface,
    inputs: &ContactInputs<'_>,
) -> (ToolState, Wrench) {
    let down = top_pose.rotate(&Vec3::z());
    let samples = model.samples();
    let corners = model.corners();

    // constraint rows (1, x, y) · p ≥ rhs; None when inactive-by-construction
    let mut rows: [Option<([f64; 3], f64)>; CONSTRAINTS] = [None; CONSTRAINTS];
    let mut any_interference = false;
    let horizon = model.rest_length + model.max_compression;
    for (i, &(x, y)) in samples.iter().enumerate() {
        let p = top_pose.transform_point(&Vec3::new(x, y, model.rest_length));
        if let Some(gap) = surface.gap_along(&p, &down) {
            if gap < horizon {
                let interference = -gap;
                any_interference |= interference > 0.0;
                rows[i] = Some(([1.0, x, y], interference));
            }
        }
    }
    for (j, &(x, y)) in corners.iter().enumerate() {
        rows[SAMPLE_COUNT + j] = Some(([1.0, x, y], 0.0));
    }

    if !any_interference {
        return (ToolState::at_rest(model, *top_pose), Wrench::zero());
    }

    let k = model.spring_stiffness;
    // Hessian of ½k·Σ c² over the corner layout is diagonal
    let hdiag = [
        4.0 * k,
        k * model.plate_width * model.plate_width,
        k * model.plate_length * model.plate_length,
    ];

    let mut solution = None;
    if let Some(prev) = inputs.previous {
        if !prev.active.is_empty() {
            solution = try_active_set(&rows, &hdiag, &prev.active);
        }
    }
    if solution.is_none() {
        solution = enumerate_active_sets(&rows, &hdiag);
    }
    let converged = solution.is_some();
    let (plane, lambdas, active) = match solution {
        Some(s) => s,
        None => {
            log::warn!("tool equilibrium did not converge; reusing last iterate");
            match inputs.previous {
                Some(prev) => (prev.plane, [0.0; 3], prev.active.clone()),
                None => ([0.0; 3], [0.0; 3], Vec::new()),
            }
        }
    };

    let comp_raw: [f64; 4] = core::array::from_fn(|j| {
        let (x, y) = corners[j];
        plane[0] + plane[1] * x + plane[2] * y
    });

    // stationarity residual k·Σ c φ − Σ λ φ
    let mut resid = [0.0; 3];
    for (j, &(x, y)) in corners.iter().enumerate() {
        let phi = [1.0, x, y];
        for r in 0..3 {
            resid[r] += k * comp_raw[j] * phi[r];
        }
    }
    for (slot, &idx) in active.iter().enumerate() {
        if let Some((phi, _)) = rows[idx] {
            for r in 0..3 {
                resid[r] -= lambdas[slot] * phi[r];
            }
        }
    }

    let prev_comp = inputs.previous.map(|p| p.compressions);
    let mut normal = 0.0;
    let mut force = Vec3::zeros();
    let mut torque = Vec3::zeros();
    let mut compressions = [0.0; 4];
    for j in 0..4 {
        let c = comp_raw[j].max(0.0);
        compressions[j] = c.min(model.max_compression);
        let mut f = k * c + model.bottom_out_stiffness * (c - model.max_compression).max(0.0);
        if let (Some(pc), true) = (prev_comp, inputs.dt > 0.0) {
            f += model.damping * (compressions[j] - pc[j]) / inputs.dt;
        }
        let f = f.max(0.0);
        normal += f;
        let (x, y) = corners[j];
        let r = top_pose.rotate(&Vec3::new(x, y, 0.0));
        let fv = -down * f;
        force += fv;
        torque += r.cross(&fv);
    }

    // sliding friction at the bottom plate, carried to the top through the springs
    let v_t = inputs.velocity - down * inputs.velocity.dot(&down);
    let speed = v_t.norm();
    let mut shear_offset = Vec3::zeros();
    if normal > 0.0 && speed > 0.0 && model.friction_coefficient > 0.0 {
        let scale = model.friction_coefficient * normal / speed.max(SLIP_REGULARIZATION);
        let f_t = -v_t * scale;
        let lever = down * (model.rest_length - plane[0]);
        force += f_t;
        torque += lever.cross(&f_t);
        // bottom plate lags the top plate; the tether caps the offset
        let local = top_pose.orientation.inverse() * (f_t / (4.0 * model.lateral_stiffness));
        let local = Vec3::new(local.x, local.y, 0.0);
        let mag = local.norm();
        shear_offset = if mag > model.shear_limit {
            local * (model.shear_limit / mag)
        } else {
            local
        };
    }

    let (rx, ry) = (-Float::atan(plane[2]), Float::atan(plane[1]));
    let tilt = quat_exp(&Vec3::new(rx, 0.0, 0.0)) * quat_exp(&Vec3::new(0.0, ry, 0.0));
    let bottom_local = Pose6 {
        position: shear_offset + Vec3::new(0.0, 0.0, model.rest_length - plane[0]),
        orientation: tilt,
    };
    let state = ToolState {
        top_pose: *top_pose,
        bottom_pose: top_pose.compose(&bottom_local),
        compressions,
        plane,
        shear_offset,
        in_contact: normal > 0.0,
        converged,
        moment_residual: Float::hypot(resid[1], resid[2]),
        force_residual: resid[0].abs(),
        active,
    };
    (state, Wrench { force, torque })
}

type Rows = [Option<([f64; 3], f64)>; CONSTRAINTS];
type Solution = ([f64; 3], [f64; 3], Vec<usize>);

fn enumerate_active_sets(rows: &Rows, hdiag: &[f64; 3]) -> Option<Solution> {
    let live: Vec<usize> = (0..CONSTRAINTS).filter(|&i| rows[i].is_some()).collect();
    for &a in &live {
        if let Some(s) = try_active_set(rows, hdiag, &[a]) {
            return Some(s);
        }
    }
    for (ia, &a) in live.iter().enumerate() {
        for &b in &live[ia + 1..] {
            if let Some(s) = try_active_set(rows, hdiag, &[a, b]) {
                return Some(s);
            }
        }
    }
    for (ia, &a) in live.iter().enumerate() {
        for (ib, &b) in live[ia + 1..].iter().enumerate() {
            for &c in &live[ia + ib + 2..] {
                if let Some(s) = try_active_set(rows, hdiag, &[a, b, c]) {
                    return Some(s);
                }
            }
        }
    }
    None
}

/// Solves the equality-constrained QP on `active` and accepts it when the
/// multipliers are non-negative and every other constraint holds.
fn try_active_set(rows: &Rows, hdiag: &[f64; 3], active: &[usize]) -> Option<Solution> {
    let m = active.len();
    let mut g = [[0.0; 3]; 3];
    let mut d = [0.0; 3];
    for (slot, &idx) in active.iter().enumerate() {
        let (phi, rhs) = rows[idx]?;
        g[slot] = phi;
        d[slot] = rhs;
    }
    // M = G H⁻¹ Gᵀ (m×m), solve M λ = d
    let mut mm = [[0.0; 3]; 3];
    for i in 0..m {
        for j in 0..m {
            mm[i][j] = (0..3).map(|r| g[i][r] * g[j][r] / hdiag[r]).sum();
        }
    }
    let lambda = solve_small(&mm, &d, m)?;
    if lambda[..m].iter().any(|&l| l < 0.0) {
        return None;
    }
    let mut p = [0.0; 3];
    for r in 0..3 {
        p[r] = (0..m).map(|i| g[i][r] * lambda[i]).sum::<f64>() / hdiag[r];
    }
    for row in rows.iter().flatten() {
        let (phi, rhs) = row;
        let c = phi[0] * p[0] + phi[1] * p[1] + phi[2] * p[2];
        if c < rhs - FEASIBILITY_TOL.max(1e-9 * rhs.abs()) {
            return None;
        }
    }
    Some((p, lambda, active.to_vec()))
}

/// Gaussian elimination with partial pivoting on an `m×m` block (m ≤ 3).
fn solve_small(a: &[[f64; 3]; 3], b: &[f64; 3], m: usize) -> Option<[f64; 3]> {
    let mut a = *a;
    let mut b = *b;
    let scale = (0..m)
        .map(|i| a[i][i].abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (dst, src) in a[row][col..m].iter_mut().zip(&pivot_row[col..m]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..m).rev() {
        let s: f64 = (row + 1..m).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Cells under the bottom plate whose surface points lie inside the plate
/// rectangle and no deeper than `contact_tolerance` below the plate plane.
pub fn contact_patch(
    model: &ToolModel,
    state: &ToolState,
    surface: &dyn CellSurface,
) -> Vec<usize> {
    let mut out = Vec::new();
    if !state.in_contact {
        return out;
    }
    let plate = state.bottom_pose;
    let inv = plate.inverse();
    let (hx, hy) = (model.plate_width / 2.0, model.plate_length / 2.0);
    let reach = Float::hypot(hx, hy) + model.contact_tolerance;
    surface.for_each_cell_near(&plate.position, reach, &mut |idx, p| {
        let local = inv.transform_point(p);
        // tool z points into the surface: cells sit at local z ≥ 0
        if local.x.abs() <= hx
            && local.y.abs() <= hy
            && local.z <= model.contact_tolerance
            && local.z >= -1e-3
        {
            out.push(idx);
        }
    });
    out.sort_unstable();
    out
}
