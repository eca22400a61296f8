//! Named, parameter-pinned experiment definitions, and the
//! effective-collapse comparison for the measured entangled pair.
//!
//! Defaults: widths d_x = d_y = d_z = 100, momentum p = 1/10, field
//! gradient b = 10⁻⁶ switched on over [T/5, 3T/5), total time T = 10⁵,
//! integration tolerance 10⁻¹⁰ with rate·dt capped at 2⁻⁷, and a 10³
//! display rescale applied only at export.

use num_complex::Complex64;

use crate::guidance::ParticleConfig;
use crate::integrator::{
    replay_trajectory, IntegratorSettings, JumpSchedule, TrajectoryRecord,
};
use crate::states::{
    build_epr_state_axis, build_sg_state_axis, collapsed_epr_state, dispersed_width, FieldAxis,
    FieldProfile, PacketParams, Spin, SpinorState, StateError,
};

pub const SPIN_Y_SINGLE: &str = "SPIN_Y_SINGLE";
pub const SPIN_WEIGHTED: &str = "SPIN_WEIGHTED";
pub const EPR_FREE: &str = "EPR_FREE";
pub const EPR_SG: &str = "EPR_SG";

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    /// One particle with spin coefficients (c₊, c₋) in the field-axis basis.
    Single { c_plus: Complex64, c_minus: Complex64 },
    /// Entangled pair a|+−⟩ − b|−+⟩; particle 1 optionally measured.
    Epr { sg_on_first: bool, a: f64, b_spin: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: String,
    pub kind: ScenarioKind,
    pub packet: PacketParams,
    pub field: FieldProfile,
    pub field_axis: FieldAxis,
    pub t_total: f64,
    pub trajectories: usize,
    pub settings: IntegratorSettings,
    pub display_rescale: f64,
}

impl ScenarioSpec {
    pub fn build_state(&self) -> Result<SpinorState, StateError> {
        match &self.kind {
            ScenarioKind::Single { c_plus, c_minus } => {
                build_sg_state_axis(self.packet, self.field, self.field_axis, *c_plus, *c_minus)
            }
            ScenarioKind::Epr { sg_on_first, a, b_spin } => build_epr_state_axis(
                self.packet,
                self.field,
                self.field_axis,
                *sg_on_first,
                *a,
                *b_spin,
            ),
        }
    }

    pub fn n_particles(&self) -> usize {
        match self.kind {
            ScenarioKind::Single { .. } => 1,
            ScenarioKind::Epr { .. } => 2,
        }
    }
}

pub fn standard_packet() -> PacketParams {
    PacketParams::new(100.0, 100.0, 100.0, 0.1).expect("standard packet parameters are valid")
}

pub const STANDARD_T: f64 = 1e5;

pub fn standard_field() -> FieldProfile {
    FieldProfile::new(1e-6, STANDARD_T / 5.0, 3.0 * STANDARD_T / 5.0).expect("standard field window is valid")
}

pub fn standard_settings() -> IntegratorSettings {
    IntegratorSettings { t_final: STANDARD_T, ..Default::default() }
}

fn spec(id: &str, kind: ScenarioKind, trajectories: usize) -> ScenarioSpec {
    ScenarioSpec {
        id: id.to_string(),
        kind,
        packet: standard_packet(),
        field: standard_field(),
        field_axis: FieldAxis::Z,
        t_total: STANDARD_T,
        trajectories,
        settings: standard_settings(),
        display_rescale: 1e3,
    }
}

/// The four canonical experiments.
pub fn catalog() -> Vec<ScenarioSpec> {
    let inv = std::f64::consts::FRAC_1_SQRT_2;
    let s10 = 10.0f64.sqrt();
    vec![
        spec(
            SPIN_Y_SINGLE,
            ScenarioKind::Single {
                c_plus: Complex64::from(inv),
                c_minus: Complex64::new(0.0, inv),
            },
            10,
        ),
        spec(
            SPIN_WEIGHTED,
            ScenarioKind::Single {
                c_plus: Complex64::from(3.0 / s10),
                c_minus: Complex64::new(0.0, 1.0 / s10),
            },
            10,
        ),
        spec(EPR_FREE, ScenarioKind::Epr { sg_on_first: false, a: inv, b_spin: inv }, 10),
        spec(EPR_SG, ScenarioKind::Epr { sg_on_first: true, a: inv, b_spin: inv }, 10),
    ]
}

pub fn find(id: &str) -> Option<ScenarioSpec> {
    catalog().into_iter().find(|s| s.id == id)
}

/// Outcome of the effective-collapse comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum CollapseReport {
    Conclusive {
        checkpoint_t: f64,
        branch: Spin,
        /// Spin vector of particle 2 under the collapsed product state.
        collapsed_s2: [f64; 3],
        max_divergence: f64,
        threshold: f64,
        passed: bool,
    },
    Inconclusive {
        reason: String,
    },
}

pub const COLLAPSE_DIVERGENCE_THRESHOLD: f64 = 1e-2;

/// Branch membership test: within 3 dispersed widths of one branch center
/// and at least 6 widths from the other.
fn branch_at(packet: &PacketParams, fld: &FieldProfile, z: f64, t: f64) -> Option<Spin> {
    let c = fld.branch_center(t);
    let sd = dispersed_width(packet.d_z, t);
    if (z - c).abs() <= 3.0 * sd && (z + c).abs() >= 6.0 * sd {
        Some(Spin::Up)
    } else if (z + c).abs() <= 3.0 * sd && (z - c).abs() >= 6.0 * sd {
        Some(Spin::Down)
    } else {
        None
    }
}

/// Re-integrate particle 2 from a post-separation checkpoint under the
/// collapsed product state, replaying the recorded flips, and report the
/// maximum position divergence from the full-state trajectory.
///
/// Effective collapse presumes the branch supports stay disjoint AND
/// particle 1 stays inside its branch, so the separation criterion must
/// hold from the checkpoint through the end of the record. Rows alone
/// undersample the excursions; particle 1's jump events sit at the
/// zig-zag turnaround extremes, so they are checked too.
///
/// With `checkpoint = None` the earliest recorded row after the field
/// switch-off from which branch membership holds for the whole remaining
/// record is used.
pub fn effective_collapse_check(
    scenario: &ScenarioSpec,
    record: &TrajectoryRecord,
    checkpoint: Option<f64>,
) -> CollapseReport {
    let fld = &scenario.field;
    let packet = &scenario.packet;
    if scenario.n_particles() != 2 {
        return CollapseReport::Inconclusive { reason: "not a two-particle scenario".into() };
    }
    let t_end = record.final_row().t;
    if t_end <= fld.t_f {
        return CollapseReport::Inconclusive { reason: "record does not extend past t_f".into() };
    }
    if !record.settings.record.keep_events {
        return CollapseReport::Inconclusive {
            reason: "record has no jump events; cannot replay or bound the excursions".into(),
        };
    }

    let eligible = |z1: f64, t: f64| -> Option<Spin> {
        if t < fld.t_f {
            return None;
        }
        branch_at(packet, fld, z1, t)
    };
    // branch membership from time tc onwards, across rows and particle-1
    // flip positions
    let held_from = |tc: f64| -> Option<Spin> {
        let mut branch: Option<Spin> = None;
        for row in record.samples.iter().filter(|r| r.t >= tc) {
            match (eligible(row.positions[0][2], row.t), branch) {
                (Some(b), None) => branch = Some(b),
                (Some(b), Some(prev)) if b == prev => {}
                _ => return None,
            }
        }
        for ev in record.events.iter().filter(|e| e.time >= tc && e.particle == 0) {
            match (eligible(ev.position[2], ev.time), branch) {
                (Some(b), Some(prev)) if b == prev => {}
                _ => return None,
            }
        }
        branch
    };

    let (checkpoint_row, branch) = match checkpoint {
        Some(tc) => {
            let row = match record.row_at(tc) {
                None => {
                    return CollapseReport::Inconclusive {
                        reason: format!("no recorded row at requested checkpoint t = {tc}"),
                    }
                }
                Some(row) => row,
            };
            if row.t < fld.t_f {
                return CollapseReport::Inconclusive {
                    reason: format!(
                        "checkpoint t = {tc} precedes the field switch-off; packets overlap"
                    ),
                };
            }
            match held_from(row.t) {
                Some(b) => (row, b),
                None => {
                    return CollapseReport::Inconclusive {
                        reason: "particle 1 does not stay branch-separated past the checkpoint"
                            .into(),
                    }
                }
            }
        }
        None => {
            let found = record
                .samples
                .iter()
                .filter(|r| r.t >= fld.t_f)
                .find_map(|row| held_from(row.t).map(|b| (row, b)));
            match found {
                Some(pair) => pair,
                None => {
                    return CollapseReport::Inconclusive {
                        reason: "particle 1 never stays branch-separated through the end".into(),
                    }
                }
            }
        }
    };

    let collapsed = match collapsed_epr_state(*packet, *fld, branch) {
        Ok(s) => s,
        Err(e) => return CollapseReport::Inconclusive { reason: format!("collapsed state: {e}") },
    };

    let t0 = checkpoint_row.t;
    let init = ParticleConfig::new(
        t0,
        checkpoint_row.positions.clone(),
        checkpoint_row.chiralities.clone(),
    );
    let schedule = JumpSchedule::from_events(&record.events, t0);
    let mut settings = record.settings.clone();
    settings.record.sample_at = record.samples.iter().map(|r| r.t).filter(|&t| t > t0).collect();
    settings.record.stride_time = f64::INFINITY;
    settings.record.keep_events = false;

    let rerun = match replay_trajectory(&collapsed, &init, &settings, &schedule) {
        Ok(r) => r,
        Err(e) => return CollapseReport::Inconclusive { reason: format!("re-integration failed: {e}") },
    };

    let collapsed_s2 = rerun.samples[0].spins[1];
    let mut max_divergence = 0.0f64;
    for row in record.samples.iter().filter(|r| r.t > t0) {
        if let Some(other) = rerun.row_at(row.t) {
            let d2: f64 = (0..3)
                .map(|c| (row.positions[1][c] - other.positions[1][c]).powi(2))
                .sum();
            max_divergence = max_div(max_divergence, d2.sqrt());
        }
    }

    CollapseReport::Conclusive {
        checkpoint_t: t0,
        branch,
        collapsed_s2,
        max_divergence,
        threshold: COLLAPSE_DIVERGENCE_THRESHOLD,
        passed: max_divergence < COLLAPSE_DIVERGENCE_THRESHOLD,
    }
}

fn max_div(a: f64, b: f64) -> f64 {
    if b > a {
        b
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::{guidance_sample, Chirality};
    use crate::integrator::{run_trajectory, RecordOptions};
    use crate::sampling::sample_initial;

    #[test]
    fn catalog_matches_standard_parameters() {
        let cat = catalog();
        let ids: Vec<&str> = cat.iter().map(|s| s.id.as_str()).collect();
        for id in [SPIN_Y_SINGLE, SPIN_WEIGHTED, EPR_FREE, EPR_SG] {
            assert!(ids.contains(&id), "missing {id}");
        }
        for s in &cat {
            assert_eq!(s.packet, PacketParams::new(100.0, 100.0, 100.0, 0.1).unwrap());
            assert_eq!(s.field.b, 1e-6);
            assert_eq!(s.field.t_i, 2e4);
            assert_eq!(s.field.t_f, 6e4);
            assert_eq!(s.t_total, 1e5);
            assert_eq!(s.display_rescale, 1e3);
            assert_eq!(s.settings.abs_tolerance, 1e-10);
            assert_eq!(s.settings.rate_dt_cap, (2.0f64).powi(-7));
        }
        let spin_y = find(SPIN_Y_SINGLE).unwrap();
        match spin_y.kind {
            ScenarioKind::Single { c_plus, c_minus } => {
                let inv = std::f64::consts::FRAC_1_SQRT_2;
                assert_eq!(c_plus, Complex64::from(inv));
                assert_eq!(c_minus, Complex64::new(0.0, inv));
            }
            _ => panic!("SPIN_Y_SINGLE should be single-particle"),
        }
        let weighted = find(SPIN_WEIGHTED).unwrap();
        match weighted.kind {
            ScenarioKind::Single { c_plus, c_minus } => {
                assert!((c_plus.re - 3.0 / 10.0f64.sqrt()).abs() < 1e-15);
                assert!((c_minus.im - 1.0 / 10.0f64.sqrt()).abs() < 1e-15);
                // initial spin vector (0, 0.6, 0.8)
                let state = weighted.build_state().unwrap();
                let cfg = ParticleConfig::new(0.0, vec![[0.0; 3]], vec![Chirality::Plus]);
                let s = guidance_sample(&state, &cfg).unwrap().spins[0];
                assert!(s[0].abs() < 1e-14);
                assert!((s[1] - 0.6).abs() < 1e-14);
                assert!((s[2] - 0.8).abs() < 1e-14);
            }
            _ => panic!("SPIN_WEIGHTED should be single-particle"),
        }
        match find(EPR_SG).unwrap().kind {
            ScenarioKind::Epr { sg_on_first, a, b_spin } => {
                assert!(sg_on_first);
                assert_eq!(a, b_spin);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn early_checkpoint_is_refused() {
        let scenario = find(EPR_SG).unwrap();
        let state = scenario.build_state().unwrap();
        let mut settings = scenario.settings.clone();
        settings.t_final = 1e4; // stop before the field even switches on
        settings.record.stride_time = 1e3;
        let init = sample_initial(&state, 1, 42).unwrap().remove(0);
        let rec = run_trajectory(&state, &init, &settings, 0).unwrap();
        match effective_collapse_check(&scenario, &rec, Some(5e3)) {
            CollapseReport::Inconclusive { .. } => {}
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn collapse_check_compares_particle_two() {
        let scenario = find(EPR_SG).unwrap();
        let state = scenario.build_state().unwrap();
        let mut settings = scenario.settings.clone();
        settings.rng_seed = 1;
        settings.record = RecordOptions {
            stride_time: 500.0,
            sample_at: vec![],
            keep_events: true,
        };
        let init = sample_initial(&state, 1, 1).unwrap().remove(0);
        let rec = run_trajectory(&state, &init, &settings, 0).unwrap();
        match effective_collapse_check(&scenario, &rec, None) {
            CollapseReport::Conclusive { branch, collapsed_s2, max_divergence, passed, .. } => {
                // particle 1 up implies collapsed s₂ = (0,0,−1) and vice versa
                let expect = -branch.sign();
                assert!((collapsed_s2[2] - expect).abs() < 1e-12, "s2 = {collapsed_s2:?}");
                assert!(passed, "divergence {max_divergence}");
            }
            CollapseReport::Inconclusive { reason } => {
                panic!("expected a conclusive check for this seed, got: {reason}")
            }
        }
    }
}
