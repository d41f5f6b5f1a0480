use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::tool::{CellSurface, ContactSurface, Plane};

pub const SKIN_TEMPERATURE: f64 = 36.6;
pub const WATER_TEMPERATURE: f64 = 20.0;
pub const SOAP_TEMPERATURE: f64 = 34.0;
pub const BED_TEMPERATURE: f64 = 22.0;

/// Water amounts live on a 2⁻⁴⁰ grid so that moving water between cells is
/// exact in floating point.
const AMOUNT_QUANTUM: f64 = 1.0 / (1u64 << 40) as f64;

pub fn quantize_amount(a: f64) -> f64 {
    libm::round(a / AMOUNT_QUANTUM) * AMOUNT_QUANTUM
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Dry,
    Soapy,
    Wet,
}

impl CellState {
    pub fn target_temperature(self) -> f64 {
        match self {
            CellState::Dry => SKIN_TEMPERATURE,
            CellState::Soapy => SOAP_TEMPERATURE,
            CellState::Wet => WATER_TEMPERATURE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub state: CellState,
    /// soap or water load in `[0, 1]`; 0 for dry cells
    pub amount: f64,
    /// °C
    pub temperature: f64,
    pub ever_soaped: bool,
    /// touched in-band during the pat currently being held
    pub pat_pending: bool,
}

impl Cell {
    pub fn dry() -> Self {
        Cell {
            state: CellState::Dry,
            amount: 0.0,
            temperature: SKIN_TEMPERATURE,
            ever_soaped: false,
            pat_pending: false,
        }
    }

    pub fn with_state(state: CellState, amount: f64) -> Self {
        Cell {
            state,
            amount: if state == CellState::Dry {
                0.0
            } else {
                quantize_amount(amount.clamp(0.0, 1.0))
            },
            temperature: state.target_temperature(),
            ever_soaped: state == CellState::Soapy,
            pat_pending: false,
        }
    }
}

/// Signed distance, outward normal and nearest cell for a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceQuery {
    pub distance: f64,
    pub normal: Vec3,
    pub cell: usize,
}

/// Capsule limb whose cylindrical part carries a `U × V` grid of cells.
///
/// Cell `(u, v)` has index `u·V + v`. `u` runs along the axis from `start` to
/// `end`; `v` runs around it, with `v = V/2` facing straight up (away from
/// gravity) and angles increasing toward `axis × up`. Points on the end caps
/// map to the first or last ring.
#[derive(Clone, Debug, PartialEq)]
pub struct LimbSurface {
    pub start: Vec3,
    pub end: Vec3,
    pub radius: f64,
    pub u_cells: usize,
    pub v_cells: usize,
    pub cells: Vec<Cell>,
    /// height of the supporting bed plane, if any
    pub bed_height: Option<f64>,
    axis: Vec3,
    length: f64,
    up: Vec3,
    side: Vec3,
    centers: Vec<Vec3>,
    normals: Vec<Vec3>,
}

impl LimbSurface {
    pub fn new(start: Vec3, end: Vec3, radius: f64, u_cells: usize, v_cells: usize) -> Self {
        let d = end - start;
        let length = d.norm();
        let axis = if length > 0.0 { d / length } else { Vec3::x() };
        let gravity_up = if axis.z.abs() > 0.99 {
            Vec3::x()
        } else {
            Vec3::z()
        };
        let up = (gravity_up - axis * gravity_up.dot(&axis)).normalize();
        let side = axis.cross(&up);
        let (u_cells, v_cells) = (u_cells.max(1), v_cells.max(3));
        let mut surface = LimbSurface {
            start,
            end,
            radius,
            u_cells,
            v_cells,
            cells: vec![Cell::dry(); u_cells * v_cells],
            bed_height: None,
            axis,
            length,
            up,
            side,
            centers: Vec::new(),
            normals: Vec::new(),
        };
        let step = surface.angle_step();
        for u in 0..u_cells {
            let t = (u as f64 + 0.5) / u_cells as f64;
            for v in 0..v_cells {
                let phi = -core::f64::consts::PI + v as f64 * step;
                let n = up * Float::cos(phi) + side * Float::sin(phi);
                surface.normals.push(n);
                surface
                    .centers
                    .push(start + axis * (t * length) + n * radius);
            }
        }
        surface
    }

    pub fn with_bed(mut self, z: f64) -> Self {
        self.bed_height = Some(z);
        self
    }

    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn index(&self, u: usize, v: usize) -> usize {
        u * self.v_cells + v
    }

    pub fn uv(&self, index: usize) -> (usize, usize) {
        (index / self.v_cells, index % self.v_cells)
    }

    fn angle_step(&self) -> f64 {
        2.0 * core::f64::consts::PI / self.v_cells as f64
    }

    /// Angle of ring slot `v` from straight up.
    pub fn cell_angle(&self, v: usize) -> f64 {
        -core::f64::consts::PI + v as f64 * self.angle_step()
    }

    pub fn cell_normal(&self, index: usize) -> Vec3 {
        self.normals[index]
    }

    pub fn cell_center(&self, index: usize) -> Vec3 {
        self.centers[index]
    }

    /// Surface area of one cell (m²).
    pub fn cell_area(&self) -> f64 {
        self.length / self.u_cells as f64 * self.radius * self.angle_step()
    }

    fn ring_slot(&self, n: &Vec3) -> usize {
        let phi = Float::atan2(n.dot(&self.side), n.dot(&self.up));
        let k = Float::round((phi + core::f64::consts::PI) / self.angle_step()) as i64;
        k.rem_euclid(self.v_cells as i64) as usize
    }

    pub fn query(&self, p: &Vec3) -> SurfaceQuery {
        let s = if self.length > 0.0 {
            ((p - self.start).dot(&self.axis) / self.length).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let on_axis = self.start + self.axis * (s * self.length);
        let radial = p - on_axis;
        let dist = radial.norm();
        let normal = if dist > 1e-12 { radial / dist } else { self.up };
        let u = ((s * self.u_cells as f64) as usize).min(self.u_cells - 1);
        // cap points fall back to the radial direction around the axis
        let ring = normal - self.axis * normal.dot(&self.axis);
        let v = if ring.norm() > 1e-9 {
            self.ring_slot(&ring)
        } else {
            self.v_cells / 2
        };
        SurfaceQuery {
            distance: dist - self.radius,
            normal,
            cell: self.index(u, v),
        }
    }

    /// Entry parameter of the ray `p + t·dir` into the capsule.
    pub fn capsule_entry(&self, p: &Vec3, dir: &Vec3) -> Option<f64> {
        let r2 = self.radius * self.radius;
        let mut best: Option<f64> = None;
        let mut take = |t: f64| {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        };
        let m = p - self.start;
        let d_perp = dir - self.axis * dir.dot(&self.axis);
        let m_perp = m - self.axis * m.dot(&self.axis);
        let a = d_perp.norm_squared();
        if a > 1e-14 {
            let b = m_perp.dot(&d_perp);
            let c = m_perp.norm_squared() - r2;
            let disc = b * b - a * c;
            if disc >= 0.0 {
                let t = (-b - Float::sqrt(disc)) / a;
                let s = (m + dir * t).dot(&self.axis);
                if (0.0..=self.length).contains(&s) {
                    take(t);
                }
            }
        }
        for center in [self.start, self.end] {
            let mc = p - center;
            let b = mc.dot(dir);
            let c = mc.norm_squared() - r2;
            let disc = b * b - c;
            if disc >= 0.0 {
                take(-b - Float::sqrt(disc));
            }
        }
        best
    }

    pub fn bed_plane(&self) -> Option<Plane> {
        self.bed_height.map(Plane::horizontal)
    }

    pub fn total_amount(&self, state: CellState) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.state == state)
            .map(|c| c.amount)
            .sum()
    }

    pub fn count(&self, pred: impl Fn(&Cell) -> bool) -> usize {
        self.cells.iter().filter(|c| pred(c)).count()
    }
}

pub fn surface_contact_query(surface: &LimbSurface, point: &Vec3) -> SurfaceQuery {
    surface.query(point)
}

impl ContactSurface for LimbSurface {
    fn gap_along(&self, point: &Vec3, dir: &Vec3) -> Option<f64> {
        let limb = self.capsule_entry(point, dir);
        let bed = self.bed_plane().and_then(|b| b.gap_along(point, dir));
        match (limb, bed) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

impl CellSurface for LimbSurface {
    fn for_each_cell_near(&self, center: &Vec3, radius: f64, f: &mut dyn FnMut(usize, &Vec3)) {
        let s = (center - self.start).dot(&self.axis);
        let cell_len = self.length / self.u_cells as f64;
        let lo = Float::floor((s - radius) / cell_len).max(0.0) as usize;
        let hi_f = Float::ceil((s + radius) / cell_len);
        if hi_f < 0.0 {
            return;
        }
        let hi = (hi_f as usize).min(self.u_cells);
        let r2 = radius * radius;
        for u in lo..hi {
            for v in 0..self.v_cells {
                let idx = self.index(u, v);
                let p = &self.centers[idx];
                if (p - center).norm_squared() <= r2 {
                    f(idx, p);
                }
            }
        }
    }
}

/// Moves water from wet cells holding more than half their capacity to the
/// lower of their two ring neighbors at `rate` per second each, and relaxes
/// every cell's temperature toward its state target with time constant `tau`.
pub fn fluid_spread(surface: &mut LimbSurface, dt: f64, rate: f64, tau: f64) {
    let n = surface.cells.len();
    let vc = surface.v_cells;
    let mut delta = vec![0.0; n];
    for idx in 0..n {
        let cell = surface.cells[idx];
        if cell.state != CellState::Wet || cell.amount <= 0.5 {
            continue;
        }
        let (u, v) = surface.uv(idx);
        let height = surface.cell_normal(idx).z;
        for nv in [(v + vc - 1) % vc, (v + 1) % vc] {
            let j = surface.index(u, nv);
            if surface.cell_normal(j).z < height && surface.cells[j].state != CellState::Soapy {
                let room = (1.0 - surface.cells[j].amount - delta[j]).max(0.0);
                let moved = quantize_amount((rate * dt).min(room));
                delta[idx] -= moved;
                delta[j] += moved;
            }
        }
    }
    let relax = if tau > 0.0 {
        1.0 - Float::exp(-dt / tau)
    } else {
        1.0
    };
    for (cell, d) in surface.cells.iter_mut().zip(delta) {
        if d != 0.0 {
            cell.amount += d;
            if cell.state == CellState::Dry && cell.amount > 0.0 {
                cell.state = CellState::Wet;
            }
        }
        let target = cell.state.target_temperature();
        cell.temperature += (target - cell.temperature) * relax;
    }
}
