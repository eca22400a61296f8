//! Statistics and verification over trajectory batches and guidance
//! fields: outcome fractions, equivariance (Kolmogorov-Smirnov) tests,
//! field maps and Fokker-Planck residuals.

use thiserror::Error;

use crate::guidance::{Chirality, GuidanceEngine};
use crate::integrator::{BatchResult, TrajectoryRecord};
use crate::states::{dispersed_width, FieldProfile, PacketParams, SpinorState};

/// Φ, the standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no row recorded at t = {t}; add it to RecordOptions::sample_at")]
    TimeNotRecorded { t: f64 },
    #[error("operation only defined for single-particle states")]
    NotSingleParticle,
    #[error("empty batch")]
    EmptyBatch,
}

/// Spin-measurement outcome counts: sign of z at the final time.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeStats {
    pub n_up: usize,
    pub n_down: usize,
    pub n_failed: usize,
    /// Final rows with z exactly 0, counted as up.
    pub n_zero_counted_up: usize,
    pub fraction_up: f64,
    pub std_error: f64,
}

/// Classify each trajectory by the sign of particle k's z-coordinate at the
/// final time. A z of exactly zero counts as up (a probability-zero tie).
pub fn outcome_fraction(batch: &BatchResult, k: usize) -> OutcomeStats {
    let mut n_up = 0usize;
    let mut n_down = 0usize;
    let mut n_zero = 0usize;
    for rec in batch.records() {
        let z = rec.final_row().positions[k][2];
        if z > 0.0 {
            n_up += 1;
        } else if z < 0.0 {
            n_down += 1;
        } else {
            n_zero += 1;
            n_up += 1;
        }
    }
    let n_failed = batch.n_failed();
    let n_ok = n_up + n_down;
    let fraction_up = if n_ok > 0 { n_up as f64 / n_ok as f64 } else { f64::NAN };
    let std_error = if n_ok > 0 {
        (fraction_up * (1.0 - fraction_up) / n_ok as f64).sqrt()
    } else {
        f64::NAN
    };
    OutcomeStats { n_up, n_down, n_failed, n_zero_counted_up: n_zero, fraction_up, std_error }
}

/// Weighted sum of Gaussians, used as the analytic reference marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture1D {
    /// (weight, mean, standard deviation)
    pub components: Vec<(f64, f64, f64)>,
}

impl GaussianMixture1D {
    pub fn cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|(w, mu, sd)| w * normal_cdf((x - mu) / sd))
            .sum()
    }
}

/// Analytic z-marginal of the single-particle Stern-Gerlach state at time
/// t: two Gaussians at the ± branch centers with the dispersed width,
/// weighted |c₊|², |c₋|². Cross-branch interference vanishes in the
/// z-marginal because the branches carry orthogonal spins.
pub fn sg_z_marginal(
    packet: &PacketParams,
    field: &FieldProfile,
    weight_plus: f64,
    weight_minus: f64,
    t: f64,
) -> GaussianMixture1D {
    let c = field.branch_center(t);
    let sd = dispersed_width(packet.d_z, t);
    GaussianMixture1D { components: vec![(weight_plus, c, sd), (weight_minus, -c, sd)] }
}

/// One-sample Kolmogorov-Smirnov distance against an analytic CDF.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in samples.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max((f - (i as f64 + 1.0) / n).abs());
    }
    d
}

/// Asymptotic KS critical value at α = 0.01.
pub fn ks_threshold(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsReport {
    pub n: usize,
    pub t_check: f64,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// KS test of the empirical marginal of one coordinate at `t_check`
/// against an analytic mixture CDF. Every record must hold a row at
/// exactly `t_check`.
pub fn equivariance_test(
    records: &[&TrajectoryRecord],
    t_check: f64,
    particle: usize,
    axis: usize,
    marginal: &GaussianMixture1D,
) -> Result<KsReport, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyBatch);
    }
    let mut values = Vec::with_capacity(records.len());
    for rec in records {
        let row = rec.row_at(t_check).ok_or(AnalysisError::TimeNotRecorded { t: t_check })?;
        values.push(row.positions[particle][axis]);
    }
    let n = values.len();
    let statistic = ks_statistic(&mut values, |x| marginal.cdf(x));
    let threshold = ks_threshold(n);
    Ok(KsReport { n, t_check, statistic, threshold, passed: statistic < threshold })
}

/// Grid specification for a guidance-field map: particle k's coordinates
/// vary over a 2D plane, everything else is held at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMapSpec {
    pub particle: usize,
    /// The two varied axes (0 = x, 1 = y, 2 = z).
    pub axes: (usize, usize),
    pub ranges: ((f64, f64), (f64, f64)),
    pub resolution: (usize, usize),
    /// Positions of all particles; the varied coordinates are overwritten.
    pub base: Vec<[f64; 3]>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldNode {
    pub position: [f64; 3],
    pub spin: [f64; 3],
    pub rate_plus: f64,
    pub rate_minus: f64,
    pub density: f64,
    /// False when guidance signalled node proximity at this grid point.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub spec: FieldMapSpec,
    /// Row-major over (axis0 index, axis1 index).
    pub nodes: Vec<FieldNode>,
}

/// Evaluate guidance fields on a grid. Node values are direct evaluations
/// at the node coordinates; nothing is interpolated. Per-node proximity
/// failures are recorded as invalid entries, not errors.
pub fn field_map(state: &SpinorState, spec: &FieldMapSpec) -> FieldMap {
    let mut engine = GuidanceEngine::new(state);
    let (n0, n1) = spec.resolution;
    let ((lo0, hi0), (lo1, hi1)) = spec.ranges;
    let mut nodes = Vec::with_capacity(n0 * n1);
    let mut sample = crate::guidance::GuidanceSample::default();
    for i in 0..n0 {
        let q0 = if n0 > 1 { lo0 + (hi0 - lo0) * i as f64 / (n0 - 1) as f64 } else { lo0 };
        for j in 0..n1 {
            let q1 = if n1 > 1 { lo1 + (hi1 - lo1) * j as f64 / (n1 - 1) as f64 } else { lo1 };
            let mut positions = spec.base.clone();
            positions[spec.particle][spec.axes.0] = q0;
            positions[spec.particle][spec.axes.1] = q1;
            match engine.sample_into(&positions, spec.t, &mut sample) {
                Ok(()) => nodes.push(FieldNode {
                    position: positions[spec.particle],
                    spin: sample.spins[spec.particle],
                    rate_plus: sample.rate(spec.particle, Chirality::Plus),
                    rate_minus: sample.rate(spec.particle, Chirality::Minus),
                    density: sample.density,
                    valid: true,
                }),
                Err(_) => nodes.push(FieldNode {
                    position: positions[spec.particle],
                    spin: [0.0; 3],
                    rate_plus: 0.0,
                    rate_minus: 0.0,
                    density: 0.0,
                    valid: false,
                }),
            }
        }
    }
    FieldMap { spec: spec.clone(), nodes }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpReport {
    pub max_rel_residual: f64,
    pub worst_point: ([f64; 3], f64),
    pub worst_chirality: Chirality,
}

/// Fokker-Planck balance for a single-particle state at given spacetime
/// points, for both chiralities:
///
///   ∂_t(Ψ†Ψ) + ∇·(v_χ Ψ†Ψ) − (r_χ − r_{−χ}) Ψ†Ψ = 0.
///
/// ∂_t by central difference of step `fd_step`; the flux divergence by
/// central differences of the analytically evaluated flux.
pub fn fokker_planck_residual(
    state: &SpinorState,
    points: &[([f64; 3], f64)],
    fd_step: f64,
) -> Result<FpReport, AnalysisError> {
    if state.n_particles() != 1 {
        return Err(AnalysisError::NotSingleParticle);
    }
    let mut engine = GuidanceEngine::new(state);
    let mut sample = crate::guidance::GuidanceSample::default();
    let rho_at = |x: [f64; 3], t: f64| -> f64 {
        let psi = state.evaluate(&[x], t);
        psi.iter().map(|z| z.norm_sqr()).sum()
    };
    let mut worst = FpReport {
        max_rel_residual: 0.0,
        worst_point: ([0.0; 3], 0.0),
        worst_chirality: Chirality::Plus,
    };
    for &(x, t) in points {
        let d_rho_dt = (rho_at(x, t + fd_step) - rho_at(x, t - fd_step)) / (2.0 * fd_step);
        for chi in [Chirality::Plus, Chirality::Minus] {
            // flux divergence Σ_a ∂_a (v_a ρ)
            let mut div = 0.0;
            for axis in 0..3 {
                let mut flux = |q: f64| -> f64 {
                    let mut xp = x;
                    xp[axis] = q;
                    engine
                        .sample_into(&[xp], t, &mut sample)
                        .map(|()| sample.velocity(0, chi)[axis] * sample.density)
                        .unwrap_or(f64::NAN)
                };
                div += (flux(x[axis] + fd_step) - flux(x[axis] - fd_step)) / (2.0 * fd_step);
            }
            engine.sample_into(&[x], t, &mut sample).map_err(|_| AnalysisError::EmptyBatch).ok();
            let rho = sample.density;
            let gain = (sample.rate(0, chi) - sample.rate(0, chi.flipped())) * rho;
            let residual = d_rho_dt + div - gain;
            let scale = d_rho_dt.abs().max(div.abs()).max(gain.abs());
            let rel = if scale > 0.0 { residual.abs() / scale } else { 0.0 };
            if rel > worst.max_rel_residual {
                worst = FpReport { max_rel_residual: rel, worst_point: (x, t), worst_chirality: chi };
            }
        }
    }
    Ok(worst)
}

/// Number of xy-plane crossings (z sign changes) of particle k across the
/// recorded rows. Diagnostic only; the claim that crossings become rare is
/// qualitative.
pub fn plane_crossings(record: &TrajectoryRecord, k: usize) -> usize {
    record
        .samples
        .windows(2)
        .filter(|w| {
            let a = w[0].positions[k][2];
            let b = w[1].positions[k][2];
            (a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0)
        })
        .count()
}

/// Median |z| over all jump events after `t_after`, pooled across records.
pub fn jump_median_abs_z(records: &[&TrajectoryRecord], t_after: f64) -> Option<f64> {
    let mut zs: Vec<f64> = records
        .iter()
        .flat_map(|r| r.events.iter())
        .filter(|e| e.time > t_after)
        .map(|e| e.position[2].abs())
        .collect();
    if zs.is_empty() {
        return None;
    }
    zs.sort_by(f64::total_cmp);
    Some(zs[zs.len() / 2])
}

/// Largest componentwise |s₁ + s₂| over the rows of a two-particle record:
/// exactly opposite spin vectors give zero.
pub fn max_spin_sum(record: &TrajectoryRecord) -> f64 {
    record
        .samples
        .iter()
        .map(|row| {
            (0..3)
                .map(|c| (row.spins[0][c] + row.spins[1][c]).abs())
                .fold(0.0f64, f64::max)
        })
        .fold(0.0f64, f64::max)
}
