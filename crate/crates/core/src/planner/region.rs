use alloc::vec;
use alloc::vec::Vec;

use super::{PixelFootprint, Waypoint, WaypointSet};
use crate::perception::{SegMask, LABEL_DRY, LABEL_SOAP, LABEL_WATER};
use crate::TaskKind;

/// Components smaller than this are speckle.
pub const MIN_COMPONENT_PX: usize = 25;

/// Binary pixel region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
}

impl Region {
    pub fn new(width: usize, height: usize) -> Self {
        Region {
            width,
            height,
            pixels: vec![false; width * height],
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.pixels[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.pixels.iter().any(|&p| p)
    }

    /// `(col_min, row_min, col_max, row_max)`, inclusive.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.pixels[y * self.width + x] {
                    b = Some(match b {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        b
    }
}

fn task_label(task: TaskKind) -> Option<u8> {
    match task {
        TaskKind::Wash => Some(LABEL_DRY),
        TaskKind::Rinse => Some(LABEL_SOAP),
        TaskKind::Dry => Some(LABEL_WATER),
        TaskKind::FreeMotion => None,
    }
}

/// Pixels the task should treat: the task's class, reduced to its largest
/// 4-connected component when that has at least `MIN_COMPONENT_PX` pixels.
pub fn target_region(mask: &SegMask, task: TaskKind) -> Region {
    let (w, h) = (mask.width, mask.height);
    let mut best = Region::new(w, h);
    let Some(label) = task_label(task) else {
        return best;
    };
    let mut seen = vec![false; w * h];
    let mut best_len = 0;
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..w * h {
        if seen[start] || mask.labels[start] != label {
            continue;
        }
        component.clear();
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            component.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if !seen[j] && mask.labels[j] == label {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if component.len() > best_len {
            best_len = component.len();
            best.pixels.fill(false);
            for &i in &component {
                best.pixels[i] = true;
            }
        }
    }
    if best_len < MIN_COMPONENT_PX {
        best.pixels.fill(false);
    }
    best
}

/// Splits the region's bounding columns into strips one tool width wide and
/// places waypoints on each strip's centerline at the region's extreme rows.
///
/// Wash alternates direction strip to strip. Rinse strokes every strip from
/// the bottom row (distal) to the top row. Dry places pat centers along each
/// strip at most `pat_spacing` tool lengths apart, serpentine across strips.
pub fn plan_waypoints(
    region: &Region,
    footprint: &PixelFootprint,
    task: TaskKind,
    pat_spacing: f64,
) -> WaypointSet {
    let mut set = WaypointSet::default();
    let Some((c0, _, c1, _)) = region.bbox() else {
        return set;
    };
    let strip_w = footprint.width.max(1.0);
    let span = (c1 - c0 + 1) as f64;
    let strips = libm::ceil(span / strip_w - 1e-9).max(1.0) as usize;
    let mut strip_index = 0;
    for s in 0..strips {
        let lo = c0 + libm::floor(s as f64 * strip_w) as usize;
        let hi = (c0 + libm::ceil((s + 1) as f64 * strip_w) as usize - 1).min(c1);
        let hi = hi.max(lo);
        let mut rows: Option<(usize, usize)> = None;
        for y in 0..region.height {
            if (lo..=hi).any(|x| region.contains(x, y)) {
                rows = Some(match rows {
                    None => (y, y),
                    Some((a, _)) => (a, y),
                });
            }
        }
        let Some((top, bottom)) = rows else {
            continue;
        };
        let center = ((lo + hi) / 2).clamp(c0, c1);
        let mut push = |row: usize| {
            set.waypoints.push(Waypoint {
                pixel: (center, row),
                strip: strip_index,
                point: None,
            })
        };
        match task {
            TaskKind::Wash | TaskKind::FreeMotion => {
                if strip_index % 2 == 0 {
                    push(top);
                    push(bottom);
                } else {
                    push(bottom);
                    push(top);
                }
            }
            TaskKind::Rinse => {
                push(bottom);
                push(top);
            }
            TaskKind::Dry => {
                let height = (bottom - top + 1) as f64;
                let pitch = (pat_spacing * footprint.length).max(1.0);
                let n = libm::ceil(height / pitch - 1e-9).max(1.0) as usize;
                let mut rows: Vec<usize> = (0..n)
                    .map(|k| top + libm::floor(height * (k as f64 + 0.5) / n as f64) as usize)
                    .map(|r| r.min(bottom))
                    .collect();
                if strip_index % 2 == 1 {
                    rows.reverse();
                }
                for r in rows {
                    push(r);
                }
            }
        }
        strip_index += 1;
    }
    set
}
