use serde::{Deserialize, Serialize};

use super::surface::{quantize_amount, CellState, LimbSurface, WATER_TEMPERATURE};
use crate::TaskKind;

/// Force bands inside which contact counts as treatment, and the rates at
/// which it changes the skin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreatmentRules {
    /// normal force band `[min, max]` (N)
    pub wash_band: [f64; 2],
    pub rinse_band: [f64; 2],
    pub dry_band: [f64; 2],
    /// soap added per second of in-band contact
    pub soap_rate: f64,
    /// soap removed per second of in-band contact
    pub rinse_rate: f64,
    /// water removed per pat
    pub dry_absorption: f64,
    /// water left on a cell once its soap is rinsed off
    pub rinse_water: f64,
    /// downhill water flow per neighbor (1/s)
    pub spread_rate: f64,
    /// temperature relaxation time constant (s)
    pub temperature_tau: f64,
}

impl Default for TreatmentRules {
    fn default() -> Self {
        TreatmentRules {
            wash_band: [2.0, 8.0],
            rinse_band: [2.0, 8.0],
            dry_band: [1.0, 6.0],
            soap_rate: 1.0,
            rinse_rate: 0.5,
            dry_absorption: 1.0,
            rinse_water: 0.8,
            spread_rate: 0.02,
            temperature_tau: 5.0,
        }
    }
}

impl TreatmentRules {
    pub fn validate(&self) -> Result<(), &'static str> {
        for band in [self.wash_band, self.rinse_band, self.dry_band] {
            if !(band[0] < band[1]) {
                return Err("force band needs min < max");
            }
        }
        if !(self.soap_rate > 0.0 && self.rinse_rate > 0.0 && self.dry_absorption > 0.0) {
            return Err("treatment rates must be positive");
        }
        Ok(())
    }

    pub fn band(&self, task: TaskKind) -> Option<[f64; 2]> {
        match task {
            TaskKind::Wash => Some(self.wash_band),
            TaskKind::Rinse => Some(self.rinse_band),
            TaskKind::Dry => Some(self.dry_band),
            TaskKind::FreeMotion => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreatmentOutcome {
    Applied,
    /// contact outside the task's force band: nothing changes
    Ineffective,
    Idle,
}

/// Updates the cells under the pad for `dt` seconds of contact at
/// `normal_force`. Drying only marks cells; `finish_pat` removes the water
/// once the pat ends.
pub fn apply_treatment(
    surface: &mut LimbSurface,
    patch: &[usize],
    task: TaskKind,
    normal_force: f64,
    dt: f64,
    rules: &TreatmentRules,
) -> TreatmentOutcome {
    if patch.is_empty() {
        return TreatmentOutcome::Idle;
    }
    let Some(band) = rules.band(task) else {
        return TreatmentOutcome::Idle;
    };
    if !(normal_force >= band[0] && normal_force <= band[1]) {
        log::trace!(
            "{} contact at {normal_force:.2} N outside band",
            task.name()
        );
        return TreatmentOutcome::Ineffective;
    }
    for &i in patch {
        let cell = &mut surface.cells[i];
        match task {
            TaskKind::Wash => {
                cell.state = CellState::Soapy;
                cell.amount = (cell.amount + rules.soap_rate * dt).min(1.0);
                cell.ever_soaped = true;
            }
            TaskKind::Rinse => {
                if cell.state == CellState::Soapy {
                    cell.amount -= rules.rinse_rate * dt;
                    if cell.amount <= 0.0 {
                        cell.state = CellState::Wet;
                        cell.amount = quantize_amount(rules.rinse_water);
                        cell.temperature = WATER_TEMPERATURE;
                    }
                }
            }
            TaskKind::Dry => {
                if cell.state == CellState::Wet {
                    cell.pat_pending = true;
                }
            }
            TaskKind::FreeMotion => {}
        }
    }
    TreatmentOutcome::Applied
}

/// Ends a pat: every wet cell pressed during it loses one absorption step.
/// Returns the number of cells that dried completely.
pub fn finish_pat(surface: &mut LimbSurface, rules: &TreatmentRules) -> usize {
    let mut dried = 0;
    for cell in surface.cells.iter_mut().filter(|c| c.pat_pending) {
        cell.pat_pending = false;
        if cell.state != CellState::Wet {
            continue;
        }
        cell.amount = quantize_amount(cell.amount - rules.dry_absorption);
        if cell.amount <= 1e-12 {
            cell.state = CellState::Dry;
            cell.amount = 0.0;
            dried += 1;
        }
    }
    dried
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::sim::surface::Cell;
    use alloc::vec::Vec;

    fn limb() -> LimbSurface {
        LimbSurface::new(
            Vec3::new(0.5, -0.125, 0.04),
            Vec3::new(0.5, 0.125, 0.04),
            0.04,
            25,
            180,
        )
    }

    #[test]
    fn wash_one_second() {
        let mut l = limb();
        let patch: Vec<usize> = (0..20).collect();
        let rules = TreatmentRules::default();
        for _ in 0..1000 {
            apply_treatment(&mut l, &patch, TaskKind::Wash, 5.0, 1e-3, &rules);
        }
        for &i in &patch {
            assert_eq!(l.cells[i].state, CellState::Soapy);
            assert!((l.cells[i].amount - 1.0).abs() < 1e-9);
        }
        assert_eq!(l.cells[20].state, CellState::Dry);
    }

    #[test]
    fn out_of_band_changes_nothing() {
        let mut l = limb();
        l.cells[0] = Cell::with_state(CellState::Soapy, 1.0);
        let before = l.clone();
        let rules = TreatmentRules::default();
        assert_eq!(
            apply_treatment(&mut l, &[0], TaskKind::Rinse, 0.5, 1e-3, &rules),
            TreatmentOutcome::Ineffective
        );
        assert_eq!(
            apply_treatment(&mut l, &[0], TaskKind::Wash, 9.0, 1e-3, &rules),
            TreatmentOutcome::Ineffective
        );
        assert_eq!(l, before);
    }

    #[test]
    fn rinse_turns_soap_to_water() {
        let mut l = limb();
        l.cells[0] = Cell::with_state(CellState::Soapy, 0.1);
        let rules = TreatmentRules::default();
        for _ in 0..300 {
            apply_treatment(&mut l, &[0], TaskKind::Rinse, 5.0, 1e-3, &rules);
        }
        assert_eq!(l.cells[0].state, CellState::Wet);
        assert!((l.cells[0].amount - 0.8).abs() < 1e-12);
        assert_eq!(l.cells[0].temperature, WATER_TEMPERATURE);
    }

    #[test]
    fn two_pats_dry_a_wet_cell() {
        let mut l = limb();
        l.cells[5] = Cell::with_state(CellState::Wet, 0.8);
        let rules = TreatmentRules {
            dry_absorption: 0.5,
            ..Default::default()
        };
        for pat in 0..2 {
            for _ in 0..700 {
                apply_treatment(&mut l, &[5], TaskKind::Dry, 3.0, 1e-3, &rules);
            }
            assert_eq!(l.cells[5].state, CellState::Wet, "during pat {pat}");
            finish_pat(&mut l, &rules);
        }
        assert_eq!(l.cells[5].state, CellState::Dry);
        assert_eq!(l.cells[5].amount, 0.0);
    }

    #[test]
    fn drying_never_touches_soap() {
        let mut l = limb();
        l.cells[5] = Cell::with_state(CellState::Soapy, 0.6);
        let rules = TreatmentRules::default();
        apply_treatment(&mut l, &[5], TaskKind::Dry, 3.0, 1e-3, &rules);
        finish_pat(&mut l, &rules);
        assert_eq!(l.cells[5].state, CellState::Soapy);
    }
}
