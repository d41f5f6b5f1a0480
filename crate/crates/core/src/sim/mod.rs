//! The simulated limb and its skin state, the synthetic RGB-T-D camera, the
//! force sensor and the closed-loop trial executive.

pub mod render;
pub mod scenarios;
pub mod scenes;
pub mod sensor;
pub mod surface;
pub mod treatment;
pub mod trial;

pub use render::{render_rgbt, RenderParams, RenderedScene};
pub use sensor::{measure_force, ForceSensor, ForceSensorModel};
pub use surface::{
    fluid_spread, surface_contact_query, Cell, CellState, LimbSurface, SurfaceQuery,
};
pub use treatment::{apply_treatment, finish_pat, TreatmentOutcome, TreatmentRules};
pub use trial::{
    run_trial, sub_seed, CoverageReport, PhaseRecord, PhaseStatus, Sequencer, TickRecord,
    TrialError, TrialLog, TrialOutcome,
};
