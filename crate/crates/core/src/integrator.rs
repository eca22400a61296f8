//! Trajectory propagation: adaptive Cash-Karp 4(5) drift interleaved with
//! per-step Bernoulli chirality flips.
//!
//! Each step holds every chirality fixed, advances dX_k/dt = v_k with the
//! fifth-order Cash-Karp solution, and accepts only when the embedded
//! fourth-order error estimate is within `abs_tolerance` and the flip
//! rate · dt product (evaluated at the step start) stays under
//! `rate_dt_cap`. After acceptance each particle independently flips with
//! probability r_{−χ}·dt; a flip takes effect from the next step.
//!
//! Reproducibility: every trajectory owns a counter-based ChaCha8 RNG
//! seeded from (seed, stream) where the stream is the trajectory index in
//! a batch. Results are bit-identical across worker counts and reruns.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::guidance::{Chirality, GuidanceEngine, GuidanceSample, NodeProximity, ParticleConfig};
use crate::states::SpinorState;

/// Cash-Karp tableau.
const CK_C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0];
const CK_A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
    [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
    [
        1631.0 / 55296.0,
        175.0 / 512.0,
        575.0 / 13824.0,
        44275.0 / 110592.0,
        253.0 / 4096.0,
    ],
];
const CK_B5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
const CK_B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    1.0 / 4.0,
];

/// What gets recorded along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordOptions {
    /// Minimum time between recorded rows; 0 records every accepted step.
    pub stride_time: f64,
    /// Times that must appear as rows exactly (steps are aligned to them).
    pub sample_at: Vec<f64>,
    /// Whether to keep jump events.
    pub keep_events: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self { stride_time: 0.0, sample_at: Vec::new(), keep_events: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorSettings {
    /// Absolute tolerance on the embedded 4th-order error estimate.
    pub abs_tolerance: f64,
    /// Upper bound on max_k r_{−χ_k}·dt per accepted step.
    pub rate_dt_cap: f64,
    pub max_dt: f64,
    pub min_dt: f64,
    pub initial_dt: f64,
    pub t_final: f64,
    pub rng_seed: u64,
    pub record: RecordOptions,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            abs_tolerance: 1e-10,
            rate_dt_cap: (2.0f64).powi(-7),
            max_dt: 50.0,
            min_dt: 1e-9,
            initial_dt: 1e-2,
            t_final: 1e5,
            rng_seed: 0,
            record: RecordOptions::default(),
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.min_dt > 0.0 && self.min_dt <= self.initial_dt && self.initial_dt <= self.max_dt) {
            return Err(format!(
                "need 0 < min_dt <= initial_dt <= max_dt (got {}, {}, {})",
                self.min_dt, self.initial_dt, self.max_dt
            ));
        }
        if self.abs_tolerance <= 0.0 || self.rate_dt_cap <= 0.0 {
            return Err("tolerances must be positive".into());
        }
        if self.t_final <= 0.0 {
            return Err("t_final must be positive".into());
        }
        Ok(())
    }
}

/// A chirality flip along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub particle: usize,
    pub position: [f64; 3],
    pub before: Chirality,
    pub after: Chirality,
    /// Spin vector at the flip (its z-component colors the usual plots).
    pub spin: [f64; 3],
}

/// One recorded row of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub t: f64,
    pub positions: Vec<[f64; 3]>,
    pub chiralities: Vec<Chirality>,
    pub spins: Vec<[f64; 3]>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub samples: Vec<SampleRow>,
    pub events: Vec<JumpEvent>,
    pub seed: u64,
    pub stream: u64,
    pub settings: IntegratorSettings,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
}

impl TrajectoryRecord {
    pub fn final_row(&self) -> &SampleRow {
        self.samples.last().expect("trajectory record always has rows")
    }

    pub fn row_at(&self, t: f64) -> Option<&SampleRow> {
        self.samples
            .binary_search_by(|r| r.t.total_cmp(&t))
            .ok()
            .map(|i| &self.samples[i])
    }

    /// Bit-exact equality of all floating-point payload, as required for
    /// the determinism checks.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        fn v3(a: &[f64; 3], b: &[f64; 3]) -> bool {
            a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        if self.samples.len() != other.samples.len() || self.events.len() != other.events.len() {
            return false;
        }
        let rows = self.samples.iter().zip(&other.samples).all(|(a, b)| {
            a.t.to_bits() == b.t.to_bits()
                && a.rho.to_bits() == b.rho.to_bits()
                && a.chiralities == b.chiralities
                && a.positions.iter().zip(&b.positions).all(|(x, y)| v3(x, y))
                && a.spins.iter().zip(&b.spins).all(|(x, y)| v3(x, y))
        });
        let events = self.events.iter().zip(&other.events).all(|(a, b)| {
            a.time.to_bits() == b.time.to_bits()
                && a.particle == b.particle
                && v3(&a.position, &b.position)
                && a.before == b.before
                && v3(&a.spin, &b.spin)
        });
        rows && events
    }
}

/// Flip times and particles extracted from a finished run, used to replay
/// the same jump sequence under different tolerances or states.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JumpSchedule {
    /// (time, particle), sorted by time.
    pub flips: Vec<(f64, usize)>,
}

impl JumpSchedule {
    pub fn from_events(events: &[JumpEvent], after: f64) -> Self {
        let mut flips: Vec<(f64, usize)> = events
            .iter()
            .filter(|e| e.time > after)
            .map(|e| (e.time, e.particle))
            .collect();
        flips.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { flips }
    }
}

#[derive(Debug, Clone, Error)]
pub enum StepFailure {
    #[error("step size underflow at t = {t} (dt = {dt:.3e}): {cause}")]
    DtUnderflow { t: f64, dt: f64, cause: String },
    #[error("node proximity at trajectory start: {0}")]
    NodeAtStart(NodeProximity),
    #[error("invalid settings: {0}")]
    BadSettings(String),
}

/// Velocity/rate provider for the stepper. Implemented by
/// [`GuidanceEngine`]; test code substitutes synthetic fields.
pub trait GuidanceSource {
    fn n_particles(&self) -> usize;
    /// Times the stepper must land on exactly (field switches).
    fn align_times(&self) -> Vec<f64> {
        Vec::new()
    }
    fn sample_into(
        &mut self,
        positions: &[[f64; 3]],
        t: f64,
        out: &mut GuidanceSample,
    ) -> Result<(), NodeProximity>;
    fn velocities_into(
        &mut self,
        positions: &[[f64; 3]],
        chiralities: &[Chirality],
        t: f64,
        out: &mut Vec<[f64; 3]>,
    ) -> Result<(), NodeProximity>;
}

impl GuidanceSource for GuidanceEngine<'_> {
    fn n_particles(&self) -> usize {
        self.state().n_particles()
    }

    fn align_times(&self) -> Vec<f64> {
        self.state().field_switch_times()
    }

    fn sample_into(
        &mut self,
        positions: &[[f64; 3]],
        t: f64,
        out: &mut GuidanceSample,
    ) -> Result<(), NodeProximity> {
        GuidanceEngine::sample_into(self, positions, t, out)
    }

    fn velocities_into(
        &mut self,
        positions: &[[f64; 3]],
        chiralities: &[Chirality],
        t: f64,
        out: &mut Vec<[f64; 3]>,
    ) -> Result<(), NodeProximity> {
        GuidanceEngine::velocities_into(self, positions, chiralities, t, out)
    }
}

enum FlipDriver<'a, R: Rng> {
    Bernoulli(&'a mut R),
    Replay { schedule: &'a JumpSchedule, cursor: usize },
}

struct StepBuffers {
    k: [Vec<[f64; 3]>; 6],
    y_stage: Vec<[f64; 3]>,
    y_new: Vec<[f64; 3]>,
}

impl StepBuffers {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![[0.0; 3]; n]),
            y_stage: vec![[0.0; 3]; n],
            y_new: vec![[0.0; 3]; n],
        }
    }
}

/// One attempted Cash-Karp step of size dt. On success fills `buf.y_new`
/// with the 5th-order solution and returns the max-norm of the embedded
/// error estimate.
fn cash_karp_attempt<G: GuidanceSource>(
    source: &mut G,
    buf: &mut StepBuffers,
    y: &[[f64; 3]],
    chis: &[Chirality],
    t: f64,
    dt: f64,
    k1: &[[f64; 3]],
) -> Result<f64, NodeProximity> {
    let n = y.len();
    buf.k[0].clear();
    buf.k[0].extend_from_slice(k1);
    for stage in 1..6 {
        for p in 0..n {
            let mut acc = y[p];
            for (j, kj) in buf.k.iter().enumerate().take(stage) {
                let a = CK_A[stage][j];
                if a != 0.0 {
                    for c in 0..3 {
                        acc[c] += dt * a * kj[p][c];
                    }
                }
            }
            buf.y_stage[p] = acc;
        }
        // split borrow: stage buffer is disjoint from y_stage
        let (head, tail) = buf.k.split_at_mut(stage);
        let _ = head;
        source.velocities_into(&buf.y_stage, chis, t + CK_C[stage] * dt, &mut tail[0])?;
    }
    let mut err_max = 0.0f64;
    for p in 0..n {
        for c in 0..3 {
            let mut y5 = y[p][c];
            let mut err = 0.0;
            for j in 0..6 {
                y5 += dt * CK_B5[j] * buf.k[j][p][c];
                err += dt * (CK_B5[j] - CK_B4[j]) * buf.k[j][p][c];
            }
            buf.y_new[p][c] = y5;
            err_max = err_max.max(err.abs());
        }
    }
    Ok(err_max)
}

fn run_with_driver<G: GuidanceSource, R: Rng>(
    source: &mut G,
    init: &ParticleConfig,
    settings: &IntegratorSettings,
    seed: u64,
    stream: u64,
    mut driver: FlipDriver<'_, R>,
) -> Result<TrajectoryRecord, StepFailure> {
    settings.validate().map_err(StepFailure::BadSettings)?;
    let n = source.n_particles();
    assert_eq!(init.positions.len(), n, "initial config particle count mismatch");
    let t_final = settings.t_final;

    // Times the stepper lands on exactly: field switches, requested sample
    // times, replayed flips and the final time.
    let mut boundaries = source.align_times();
    boundaries.extend(settings.record.sample_at.iter().copied());
    if let FlipDriver::Replay { schedule, .. } = &driver {
        boundaries.extend(schedule.flips.iter().map(|f| f.0));
    }
    boundaries.push(t_final);
    boundaries.retain(|&b| b > init.time && b <= t_final);
    boundaries.sort_by(f64::total_cmp);
    boundaries.dedup();

    let mut sample_at = settings.record.sample_at.clone();
    sample_at.sort_by(f64::total_cmp);

    let mut t = init.time;
    let mut y = init.positions.clone();
    let mut chis = init.chiralities.clone();
    let mut buf = StepBuffers::new(n);
    let mut sample = GuidanceSample::default();
    let mut next_sample = GuidanceSample::default();
    let mut k1 = vec![[0.0; 3]; n];
    let mut boundary_idx = 0usize;

    source
        .sample_into(&y, t, &mut sample)
        .map_err(StepFailure::NodeAtStart)?;

    let mut record = TrajectoryRecord {
        samples: Vec::new(),
        events: Vec::new(),
        seed,
        stream,
        settings: settings.clone(),
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let push_row = |record: &mut TrajectoryRecord,
                    t: f64,
                    y: &[[f64; 3]],
                    chis: &[Chirality],
                    s: &GuidanceSample| {
        record.samples.push(SampleRow {
            t,
            positions: y.to_vec(),
            chiralities: chis.to_vec(),
            spins: s.spins.clone(),
            rho: s.density,
        });
    };
    push_row(&mut record, t, &y, &chis, &sample);
    let mut last_row_t = t;

    let mut dt_ctrl = settings.initial_dt;
    let tol = settings.abs_tolerance;

    while t < t_final {
        while boundary_idx < boundaries.len() && boundaries[boundary_idx] <= t {
            boundary_idx += 1;
        }
        let next_boundary = boundaries.get(boundary_idx).copied().unwrap_or(t_final);

        // Rate cap at the step start, spec'd as part of step acceptance;
        // applying it before integrating avoids wasted stage evaluations.
        let r_max = (0..n)
            .map(|k| sample.flip_rate(k, chis[k]))
            .fold(0.0f64, f64::max);
        let mut dt = dt_ctrl.min(settings.max_dt);
        if r_max > 0.0 {
            dt = dt.min(settings.rate_dt_cap / r_max);
        }
        let mut hit_boundary = false;
        if t + dt >= next_boundary {
            dt = next_boundary - t;
            hit_boundary = true;
        } else if next_boundary - (t + dt) < settings.min_dt {
            dt = 0.5 * (next_boundary - t);
        }

        for k in 0..n {
            k1[k] = sample.velocity(k, chis[k]);
        }

        // Attempt loop: shrink on error rejection or node proximity.
        let err = loop {
            match cash_karp_attempt(source, &mut buf, &y, &chis, t, dt, &k1) {
                Err(_np) => {
                    dt *= 0.5;
                    hit_boundary = false;
                    record.rejected_steps += 1;
                    if dt < settings.min_dt {
                        return Err(StepFailure::DtUnderflow {
                            t,
                            dt,
                            cause: "node proximity during stage evaluation".into(),
                        });
                    }
                }
                Ok(err) if err <= tol => {
                    // the landing point must be sampleable too
                    let t_probe = if hit_boundary { next_boundary } else { t + dt };
                    match source.sample_into(&buf.y_new, t_probe, &mut next_sample) {
                        Ok(()) => break err,
                        Err(_np) => {
                            dt *= 0.5;
                            hit_boundary = false;
                            record.rejected_steps += 1;
                            if dt < settings.min_dt {
                                return Err(StepFailure::DtUnderflow {
                                    t,
                                    dt,
                                    cause: "node proximity at step end".into(),
                                });
                            }
                        }
                    }
                }
                Ok(err) => {
                    record.rejected_steps += 1;
                    let shrink = (0.9 * (tol / err).powf(0.25)).max(0.1);
                    dt *= shrink;
                    hit_boundary = false;
                    if dt < settings.min_dt {
                        return Err(StepFailure::DtUnderflow {
                            t,
                            dt,
                            cause: format!("error estimate {err:.3e} above tolerance"),
                        });
                    }
                }
            }
        };

        let t_new = if hit_boundary { next_boundary } else { t + dt };
        let dt_used = t_new - t;
        record.accepted_steps += 1;

        // Chirality flips, decided from the step-start rates.
        let mut flipped: Vec<usize> = Vec::new();
        match &mut driver {
            FlipDriver::Bernoulli(rng) => {
                for k in 0..n {
                    let p = sample.flip_rate(k, chis[k]) * dt_used;
                    let u: f64 = rng.random();
                    if u < p {
                        flipped.push(k);
                    }
                }
            }
            FlipDriver::Replay { schedule, cursor } => {
                while *cursor < schedule.flips.len() && schedule.flips[*cursor].0 <= t_new {
                    flipped.push(schedule.flips[*cursor].1);
                    *cursor += 1;
                }
            }
        }
        for &k in &flipped {
            let before = chis[k];
            chis[k] = before.flipped();
            if settings.record.keep_events {
                record.events.push(JumpEvent {
                    time: t_new,
                    particle: k,
                    position: buf.y_new[k],
                    before,
                    after: chis[k],
                    spin: next_sample.spins[k],
                });
            }
        }

        y.copy_from_slice(&buf.y_new);
        t = t_new;
        std::mem::swap(&mut sample, &mut next_sample);

        let due = settings.record.stride_time == 0.0
            || t - last_row_t >= settings.record.stride_time - 1e-9
            || t == t_final
            || sample_at.binary_search_by(|s| s.total_cmp(&t)).is_ok();
        if due {
            push_row(&mut record, t, &y, &chis, &sample);
            last_row_t = t;
        }

        let grow = if err > 0.0 {
            (0.9 * (tol / err).powf(0.2)).min(5.0)
        } else {
            5.0
        };
        dt_ctrl = (dt_used * grow).min(settings.max_dt);
    }

    Ok(record)
}

/// Propagate one trajectory from `init` to `settings.t_final`, drawing
/// flips from the ChaCha stream (settings.rng_seed, stream).
pub fn run_trajectory(
    state: &SpinorState,
    init: &ParticleConfig,
    settings: &IntegratorSettings,
    stream: u64,
) -> Result<TrajectoryRecord, StepFailure> {
    let mut engine = GuidanceEngine::new(state);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.rng_seed);
    rng.set_stream(stream);
    run_with_driver(
        &mut engine,
        init,
        settings,
        settings.rng_seed,
        stream,
        FlipDriver::Bernoulli::<ChaCha8Rng>(&mut rng),
    )
}

/// Propagate with a prescribed jump sequence instead of random flips.
/// Steps land exactly on the scheduled flip times.
pub fn replay_trajectory(
    state: &SpinorState,
    init: &ParticleConfig,
    settings: &IntegratorSettings,
    schedule: &JumpSchedule,
) -> Result<TrajectoryRecord, StepFailure> {
    let mut engine = GuidanceEngine::new(state);
    run_with_driver::<_, ChaCha8Rng>(
        &mut engine,
        init,
        settings,
        settings.rng_seed,
        0,
        FlipDriver::Replay { schedule, cursor: 0 },
    )
}

/// Run with a custom guidance source and RNG; the hook behind the public
/// entry points, exposed for synthetic-field tests.
pub fn run_trajectory_with_source<G: GuidanceSource, R: Rng>(
    source: &mut G,
    init: &ParticleConfig,
    settings: &IntegratorSettings,
    rng: &mut R,
    stream: u64,
) -> Result<TrajectoryRecord, StepFailure> {
    run_with_driver(source, init, settings, settings.rng_seed, stream, FlipDriver::Bernoulli(rng))
}

#[derive(Debug)]
pub struct BatchResult {
    /// Per-trajectory outcome, in input order.
    pub outcomes: Vec<Result<TrajectoryRecord, StepFailure>>,
}

impl BatchResult {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &TrajectoryRecord> {
        self.outcomes.iter().filter_map(|o| o.as_ref().ok())
    }

    pub fn n_failed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_err()).count()
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.outcomes.len() == other.outcomes.len()
            && self.outcomes.iter().zip(&other.outcomes).all(|(a, b)| match (a, b) {
                (Ok(x), Ok(y)) => x.bitwise_eq(y),
                (Err(_), Err(_)) => true,
                _ => false,
            })
    }
}

/// Run one trajectory per initial configuration. Trajectory i uses RNG
/// stream i; per-trajectory failures are collected, not fatal. The result
/// does not depend on the worker count or on scheduling order.
pub fn run_batch(
    state: &SpinorState,
    inits: &[ParticleConfig],
    settings: &IntegratorSettings,
    workers: usize,
) -> BatchResult {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("failed to build worker pool");
    let outcomes = pool.install(|| {
        inits
            .par_iter()
            .enumerate()
            .map(|(i, init)| run_trajectory(state, init, settings, i as u64))
            .collect()
    });
    BatchResult { outcomes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{build_epr_state, build_sg_state, FieldProfile, PacketParams};
    use num_complex::Complex64;
    use rand::RngCore;

    const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn packet() -> PacketParams {
        PacketParams::new(100.0, 100.0, 100.0, 0.1).unwrap()
    }

    fn field() -> FieldProfile {
        FieldProfile::new(1e-6, 2e4, 6e4).unwrap()
    }

    fn spin_y_state() -> crate::states::SpinorState {
        build_sg_state(packet(), field(), Complex64::from(INV_SQRT2), Complex64::new(0.0, INV_SQRT2))
            .unwrap()
    }

    fn short_settings(t_final: f64) -> IntegratorSettings {
        IntegratorSettings { t_final, ..Default::default() }
    }

    /// Synthetic guidance: constant drift, constant signed rate argument.
    struct ConstantField {
        base: [f64; 3],
        spin: [f64; 3],
        rate_arg: f64,
    }

    impl GuidanceSource for ConstantField {
        fn n_particles(&self) -> usize {
            1
        }
        fn sample_into(
            &mut self,
            _positions: &[[f64; 3]],
            _t: f64,
            out: &mut GuidanceSample,
        ) -> Result<(), NodeProximity> {
            out.base_velocity = vec![self.base];
            out.spins = vec![self.spin];
            out.rate_arg = vec![self.rate_arg];
            out.density = 1.0;
            Ok(())
        }
        fn velocities_into(
            &mut self,
            _positions: &[[f64; 3]],
            chiralities: &[Chirality],
            _t: f64,
            out: &mut Vec<[f64; 3]>,
        ) -> Result<(), NodeProximity> {
            out.clear();
            let c = chiralities[0].sign();
            out.push([
                self.base[0] + c * self.spin[0],
                self.base[1] + c * self.spin[1],
                self.base[2] + c * self.spin[2],
            ]);
            Ok(())
        }
    }

    /// RNG that always returns zero: every positive flip probability fires.
    struct ZeroRng;
    impl RngCore for ZeroRng {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            dest.fill(0);
        }
    }

    fn one_particle_init() -> ParticleConfig {
        ParticleConfig::new(0.0, vec![[0.0, 0.0, 0.0]], vec![Chirality::Plus])
    }

    #[test]
    fn flip_uses_rate_toward_opposite_chirality() {
        // g > 0 means r₊ > 0, r₋ = 0: a χ=+1 particle (flip rate r₋) never
        // flips; a χ=−1 particle (flip rate r₊) flips at the first chance.
        let settings = IntegratorSettings {
            t_final: 1.0,
            max_dt: 0.125,
            initial_dt: 0.125,
            ..Default::default()
        };
        let mut field = ConstantField { base: [0.0; 3], spin: [0.0, 0.0, 1.0], rate_arg: 0.05 };

        let mut rng = ZeroRng;
        let init_plus = one_particle_init();
        let rec = run_trajectory_with_source(&mut field, &init_plus, &settings, &mut rng, 0).unwrap();
        assert!(rec.events.is_empty(), "χ=+1 must not flip while r₋ = 0");

        let init_minus = ParticleConfig::new(0.0, vec![[0.0; 3]], vec![Chirality::Minus]);
        let rec = run_trajectory_with_source(&mut field, &init_minus, &settings, &mut rng, 0).unwrap();
        assert_eq!(rec.events.first().map(|e| e.after), Some(Chirality::Plus));
        // once flipped to +1 its flip rate is zero again
        assert_eq!(rec.events.len(), 1);
    }

    #[test]
    fn flip_probability_matches_rate_dt() {
        // Single forced step of size dt with flip probability r·dt at the
        // cap; empirical frequency over many independent streams must match
        // binomially.
        let r = 1.0;
        let dt = (2.0f64).powi(-7); // r·dt exactly at the cap
        let settings = IntegratorSettings {
            t_final: dt,
            max_dt: dt,
            initial_dt: dt,
            min_dt: 1e-12,
            ..Default::default()
        };
        let mut flips = 0usize;
        let n = 20_000usize;
        for i in 0..n {
            let mut field =
                ConstantField { base: [0.0; 3], spin: [0.0, 0.0, 1.0], rate_arg: -r };
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            rng.set_stream(i as u64);
            let rec =
                run_trajectory_with_source(&mut field, &one_particle_init(), &settings, &mut rng, i as u64)
                    .unwrap();
            assert_eq!(rec.accepted_steps, 1);
            flips += rec.events.len();
        }
        let p = r * dt;
        let expect = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (flips as f64 - expect).abs() <= 3.0 * sigma,
            "flips {flips}, expected {expect} ± {sigma}"
        );
    }

    #[test]
    fn singlet_free_pair_never_flips_and_drifts_deterministically() {
        let state = build_epr_state(packet(), field(), false, INV_SQRT2, INV_SQRT2).unwrap();
        let init = ParticleConfig::new(
            0.0,
            vec![[10.0, -5.0, 20.0], [-15.0, 25.0, -10.0]],
            vec![Chirality::Plus, Chirality::Minus],
        );
        let settings = short_settings(5000.0);
        let rec = run_trajectory(&state, &init, &settings, 0).unwrap();
        assert!(rec.events.is_empty());
        // velocity reduces to the packet drift ±p plus slow spreading
        let last = rec.final_row();
        assert!((last.positions[0][0] - (10.0 + 0.1 * 5000.0)).abs() < 5.0);
        assert!((last.positions[1][0] - (-15.0 - 0.1 * 5000.0)).abs() < 5.0);
        assert_eq!(last.chiralities, init.chiralities);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let state = spin_y_state();
        let init = one_particle_init();
        let settings = short_settings(3000.0);
        let a = run_trajectory(&state, &init, &settings, 7).unwrap();
        let b = run_trajectory(&state, &init, &settings, 7).unwrap();
        assert!(a.bitwise_eq(&b));
        let c = run_trajectory(&state, &init, &settings, 8).unwrap();
        assert!(!a.bitwise_eq(&c), "different streams should differ");
    }

    #[test]
    fn batch_is_worker_count_independent() {
        let state = spin_y_state();
        let inits: Vec<ParticleConfig> = (0..6)
            .map(|i| {
                ParticleConfig::new(
                    0.0,
                    vec![[i as f64 * 13.0, -(i as f64) * 7.0, i as f64 * 3.0]],
                    vec![if i % 2 == 0 { Chirality::Plus } else { Chirality::Minus }],
                )
            })
            .collect();
        let settings = short_settings(2000.0);
        let serial = run_batch(&state, &inits, &settings, 1);
        let parallel = run_batch(&state, &inits, &settings, 4);
        assert!(serial.bitwise_eq(&parallel));
        assert_eq!(serial.n_failed(), 0);
    }

    #[test]
    fn empty_batch_gives_empty_list() {
        let state = spin_y_state();
        let settings = short_settings(100.0);
        let result = run_batch(&state, &[], &settings, 1);
        assert!(result.is_empty());
    }

    #[test]
    fn requested_sample_times_are_hit_exactly() {
        let state = spin_y_state();
        let init = one_particle_init();
        let mut settings = short_settings(2000.0);
        settings.record.stride_time = f64::INFINITY;
        settings.record.sample_at = vec![777.77, 1500.5];
        let rec = run_trajectory(&state, &init, &settings, 3).unwrap();
        assert!(rec.row_at(777.77).is_some());
        assert!(rec.row_at(1500.5).is_some());
        assert_eq!(rec.final_row().t, 2000.0);
    }

    #[test]
    fn positions_are_continuous_between_rows() {
        let state = spin_y_state();
        let settings = short_settings(1500.0);
        let rec = run_trajectory(&state, &one_particle_init(), &settings, 11).unwrap();
        for pair in rec.samples.windows(2) {
            let dt = pair[1].t - pair[0].t;
            for (a, b) in pair[0].positions.iter().zip(&pair[1].positions) {
                let d2: f64 = (0..3).map(|c| (b[c] - a[c]).powi(2)).sum();
                // |v| stays near 1 (third term) plus small drift corrections
                assert!(d2.sqrt() <= 1.3 * dt + 1e-12, "jump of {} over dt {}", d2.sqrt(), dt);
            }
        }
        // chiralities in rows only change at recorded events
        let mut chi = rec.samples[0].chiralities[0];
        let mut ei = 0usize;
        for row in &rec.samples[1..] {
            while ei < rec.events.len() && rec.events[ei].time <= row.t {
                chi = rec.events[ei].after;
                ei += 1;
            }
            assert_eq!(row.chiralities[0], chi, "chirality changed without an event");
        }
    }

    #[test]
    fn replay_reproduces_the_jump_sequence() {
        let state = spin_y_state();
        let settings = short_settings(2500.0);
        let rec = run_trajectory(&state, &one_particle_init(), &settings, 21).unwrap();
        assert!(!rec.events.is_empty(), "expected at least one flip in 2500 time units");
        let schedule = JumpSchedule::from_events(&rec.events, 0.0);
        let replayed = replay_trajectory(&state, &one_particle_init(), &settings, &schedule).unwrap();
        assert_eq!(replayed.events.len(), rec.events.len());
        for (a, b) in rec.events.iter().zip(&replayed.events) {
            assert_eq!(a.time, b.time);
            assert_eq!(a.particle, b.particle);
        }
        let d: f64 = (0..3)
            .map(|c| (replayed.final_row().positions[0][c] - rec.final_row().positions[0][c]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(d < 1e-6, "replay drifted {d} from the original");
    }

    #[test]
    fn node_start_fails_loudly() {
        let state = spin_y_state();
        let init = ParticleConfig::new(0.0, vec![[1e6, 1e6, 1e6]], vec![Chirality::Plus]);
        let settings = short_settings(10.0);
        match run_trajectory(&state, &init, &settings, 0) {
            Err(StepFailure::NodeAtStart(_)) => {}
            other => panic!("expected NodeAtStart, got {other:?}"),
        }
    }

    #[test]
    fn settings_validation_rejects_bad_windows() {
        let mut s = IntegratorSettings::default();
        s.min_dt = 0.0;
        assert!(s.validate().is_err());
        let mut s = IntegratorSettings::default();
        s.initial_dt = s.max_dt * 2.0;
        assert!(s.validate().is_err());
    }
}
