//! Zig-zag guidance fields: velocity, chirality jump rate, spin vector and
//! density, for 1- and N-particle spinors.
//!
//! For particle k at configuration (x₁…x_N, t) with chirality χ_k:
//!
//!   v_k = Im(Ψ†∇_kΨ)/Ψ†Ψ + ½ [∇_k×(Ψ†σ_kΨ)]/Ψ†Ψ + χ_k s_k
//!   s_k = Ψ†σ_kΨ / Ψ†Ψ
//!   r_{k,target} = [ 2 · target · Re(Ψ†σ_k·∇_kΨ)/Ψ†Ψ ]⁺
//!
//! in natural units, with no vector potential. A flip χ → −χ fires at rate
//! r_{−χ}: the rate subscript names the chirality being jumped *to*.
//!
//! Everything here needs exactly one evaluation of Ψ and of each ∇_kΨ,
//! shared across all particles of a sample.

use num_complex::Complex64;
use thiserror::Error;

use crate::states::{SpinorState, StateEval};

/// Densities below `NODE_FLOOR_REL` times the state's analytic peak scale
/// signal node proximity instead of returning huge rates or velocities.
pub const NODE_FLOOR_REL: f64 = 1e-30;

/// Two-valued chirality of the zig-zag process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Chirality {
    Plus,
    Minus,
}

impl Chirality {
    pub fn sign(self) -> f64 {
        match self {
            Chirality::Plus => 1.0,
            Chirality::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Chirality {
        match self {
            Chirality::Plus => Chirality::Minus,
            Chirality::Minus => Chirality::Plus,
        }
    }

    pub fn from_sign(s: f64) -> Chirality {
        if s >= 0.0 {
            Chirality::Plus
        } else {
            Chirality::Minus
        }
    }
}

/// Positions and chiralities of all particles at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleConfig {
    pub time: f64,
    pub positions: Vec<[f64; 3]>,
    pub chiralities: Vec<Chirality>,
}

impl ParticleConfig {
    pub fn new(time: f64, positions: Vec<[f64; 3]>, chiralities: Vec<Chirality>) -> Self {
        assert_eq!(positions.len(), chiralities.len());
        Self { time, positions, chiralities }
    }

    pub fn n_particles(&self) -> usize {
        self.positions.len()
    }
}

/// Raised when the density at the requested configuration is below the node
/// floor; the caller (usually the integrator) decides how to back off.
#[derive(Debug, Clone, Copy, Error)]
#[error("density {rho:.3e} below node floor {floor:.3e} at t = {t}")]
pub struct NodeProximity {
    pub rho: f64,
    pub floor: f64,
    pub t: f64,
}

/// Guidance fields at one configuration. The chirality-dependent pieces are
/// kept factored: the velocity for chirality χ is `base_velocity + χ·spin`,
/// and the jump rate toward chirality `target` is `[target·rate_arg]⁺`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GuidanceSample {
    /// First two velocity terms (gradient + spin-curl), χ-independent.
    pub base_velocity: Vec<[f64; 3]>,
    /// Spin vector s_k per particle.
    pub spins: Vec<[f64; 3]>,
    /// Signed rate argument g_k = 2 Re(Ψ†σ_k·∇_kΨ)/ρ per particle.
    pub rate_arg: Vec<f64>,
    /// Ψ†Ψ at the configuration.
    pub density: f64,
}

impl GuidanceSample {
    /// Velocity of particle k at chirality χ.
    pub fn velocity(&self, k: usize, chi: Chirality) -> [f64; 3] {
        let b = self.base_velocity[k];
        let s = self.spins[k];
        let c = chi.sign();
        [b[0] + c * s[0], b[1] + c * s[1], b[2] + c * s[2]]
    }

    /// Rate r_{k,target} for a jump arriving at `target` chirality.
    pub fn rate(&self, k: usize, target: Chirality) -> f64 {
        (target.sign() * self.rate_arg[k]).max(0.0)
    }

    /// Rate for particle k to flip away from its current chirality χ,
    /// i.e. r_{−χ}.
    pub fn flip_rate(&self, k: usize, current: Chirality) -> f64 {
        self.rate(k, current.flipped())
    }

    fn resize(&mut self, n: usize) {
        self.base_velocity.resize(n, [0.0; 3]);
        self.spins.resize(n, [0.0; 3]);
        self.rate_arg.resize(n, 0.0);
    }
}

/// Evaluator bundling a state reference with reusable scratch buffers.
/// One engine per worker thread; the state itself is shared immutably.
#[derive(Debug, Clone)]
pub struct GuidanceEngine<'a> {
    state: &'a SpinorState,
    ws: StateEval,
    sigma: [Vec<Complex64>; 3],
    sample_buf: GuidanceSample,
}

impl<'a> GuidanceEngine<'a> {
    pub fn new(state: &'a SpinorState) -> Self {
        let dim = state.dim();
        Self {
            state,
            ws: StateEval::default(),
            sigma: [vec![Complex64::ZERO; dim], vec![Complex64::ZERO; dim], vec![Complex64::ZERO; dim]],
            sample_buf: GuidanceSample::default(),
        }
    }

    pub fn state(&self) -> &'a SpinorState {
        self.state
    }

    fn eval(&mut self, positions: &[[f64; 3]], t: f64) -> Result<(), NodeProximity> {
        self.state.eval_into(positions, t, true, &mut self.ws);
        let floor = NODE_FLOOR_REL * self.ws.peak;
        if !(self.ws.rho > floor) {
            return Err(NodeProximity { rho: self.ws.rho, floor, t });
        }
        Ok(())
    }

    /// Apply σ_k along each axis to the evaluated spinor.
    fn fill_sigma(&mut self, k: usize) {
        let n = self.state.n_particles();
        let dim = self.state.dim();
        let mask = 1usize << (n - 1 - k);
        let psi = &self.ws.psi;
        for s in 0..dim {
            let flip = psi[s ^ mask];
            let up = s & mask == 0;
            self.sigma[0][s] = flip;
            self.sigma[1][s] = if up {
                Complex64::new(flip.im, -flip.re) // −i ψ_flip
            } else {
                Complex64::new(-flip.im, flip.re) // +i ψ_flip
            };
            self.sigma[2][s] = if up { psi[s] } else { -psi[s] };
        }
    }

    /// Full guidance sample at a configuration: one Ψ evaluation, one ∇_kΨ
    /// per particle, all fields derived from them.
    pub fn sample_into(
        &mut self,
        positions: &[[f64; 3]],
        t: f64,
        out: &mut GuidanceSample,
    ) -> Result<(), NodeProximity> {
        self.eval(positions, t)?;
        let n = self.state.n_particles();
        let dim = self.state.dim();
        out.resize(n);
        out.density = self.ws.rho;
        let inv_rho = 1.0 / self.ws.rho;
        for k in 0..n {
            self.fill_sigma(k);
            let psi = &self.ws.psi;
            // spin density W_b = Ψ†σ_bΨ (real by hermiticity)
            let mut w = [0.0f64; 3];
            for b in 0..3 {
                let mut acc = 0.0;
                for s in 0..dim {
                    acc += (psi[s].conj() * self.sigma[b][s]).re;
                }
                w[b] = acc;
            }
            // G[a][b] = Ψ†σ_b ∂_aΨ and the plain overlap Ψ†∂_aΨ
            let mut g = [[Complex64::ZERO; 3]; 3];
            let mut t1 = [0.0f64; 3];
            for a in 0..3 {
                let gr = &self.ws.grad[(k * 3 + a) * dim..(k * 3 + a + 1) * dim];
                let mut plain = Complex64::ZERO;
                for s in 0..dim {
                    plain += psi[s].conj() * gr[s];
                }
                t1[a] = plain.im * inv_rho;
                for b in 0..3 {
                    let mut acc = Complex64::ZERO;
                    for s in 0..dim {
                        acc += self.sigma[b][s].conj() * gr[s];
                    }
                    g[a][b] = acc;
                }
            }
            // ½ ∇×W / ρ, using ∂_a W_b = 2 Re G[a][b]
            let curl = [
                (g[1][2] - g[2][1]).re * inv_rho,
                (g[2][0] - g[0][2]).re * inv_rho,
                (g[0][1] - g[1][0]).re * inv_rho,
            ];
            out.base_velocity[k] =
                [t1[0] + curl[0], t1[1] + curl[1], t1[2] + curl[2]];
            out.spins[k] = [w[0] * inv_rho, w[1] * inv_rho, w[2] * inv_rho];
            out.rate_arg[k] = 2.0 * (g[0][0] + g[1][1] + g[2][2]).re * inv_rho;
        }
        Ok(())
    }

    /// Velocities only, for the Runge-Kutta stage evaluations.
    pub fn velocities_into(
        &mut self,
        positions: &[[f64; 3]],
        chiralities: &[Chirality],
        t: f64,
        out: &mut Vec<[f64; 3]>,
    ) -> Result<(), NodeProximity> {
        // The dominant cost is the Ψ/∇Ψ evaluation, shared with the full
        // sample; the few extra dot products are not worth a second path.
        let mut tmp = std::mem::take(&mut self.sample_buf);
        let r = self.sample_into(positions, t, &mut tmp);
        if r.is_ok() {
            out.clear();
            for k in 0..positions.len() {
                out.push(tmp.velocity(k, chiralities[k]));
            }
        }
        self.sample_buf = tmp;
        r
    }

    pub fn sample(&mut self, config: &ParticleConfig) -> Result<GuidanceSample, NodeProximity> {
        let mut out = GuidanceSample::default();
        self.sample_into(&config.positions, config.time, &mut out)?;
        Ok(out)
    }

    /// Spin vector of particle k.
    pub fn spin_vector(&mut self, config: &ParticleConfig, k: usize) -> Result<[f64; 3], NodeProximity> {
        Ok(self.sample(config)?.spins[k])
    }

    /// Velocity of particle k at its current chirality.
    pub fn velocity(&mut self, config: &ParticleConfig, k: usize) -> Result<[f64; 3], NodeProximity> {
        Ok(self.sample(config)?.velocity(k, config.chiralities[k]))
    }

    /// The three velocity terms of particle k separately:
    /// (gradient term, spin-curl term, c·χ·s term).
    pub fn velocity_terms(
        &mut self,
        config: &ParticleConfig,
        k: usize,
    ) -> Result<[[f64; 3]; 3], NodeProximity> {
        let full = self.sample(config)?;
        // Recover the curl term by re-evaluating the gradient overlap.
        let dim = self.state.dim();
        let mut t1 = [0.0f64; 3];
        for a in 0..3 {
            let gr = &self.ws.grad[(k * 3 + a) * dim..(k * 3 + a + 1) * dim];
            let mut plain = Complex64::ZERO;
            for (s, g) in gr.iter().enumerate() {
                plain += self.ws.psi[s].conj() * g;
            }
            t1[a] = plain.im / self.ws.rho;
        }
        let base = full.base_velocity[k];
        let curl = [base[0] - t1[0], base[1] - t1[1], base[2] - t1[2]];
        let c = config.chiralities[k].sign();
        let s = full.spins[k];
        Ok([t1, curl, [c * s[0], c * s[1], c * s[2]]])
    }

    /// Jump rate r_{k,target}. The flip away from the current chirality χ_k
    /// uses `target = −χ_k`.
    pub fn jump_rate(
        &mut self,
        config: &ParticleConfig,
        k: usize,
        target: Chirality,
    ) -> Result<f64, NodeProximity> {
        Ok(self.sample(config)?.rate(k, target))
    }
}

/// Spin vector s_k at a configuration (convenience wrapper).
pub fn spin_vector(state: &SpinorState, config: &ParticleConfig, k: usize) -> Result<[f64; 3], NodeProximity> {
    GuidanceEngine::new(state).spin_vector(config, k)
}

/// Velocity v_{k,χ_k} at a configuration (convenience wrapper).
pub fn velocity(state: &SpinorState, config: &ParticleConfig, k: usize) -> Result<[f64; 3], NodeProximity> {
    GuidanceEngine::new(state).velocity(config, k)
}

/// Jump rate r_{k,target} at a configuration (convenience wrapper).
pub fn jump_rate(
    state: &SpinorState,
    config: &ParticleConfig,
    k: usize,
    target: Chirality,
) -> Result<f64, NodeProximity> {
    GuidanceEngine::new(state).jump_rate(config, k, target)
}

/// Batched sample sharing a single Ψ, ∇Ψ evaluation.
pub fn guidance_sample(state: &SpinorState, config: &ParticleConfig) -> Result<GuidanceSample, NodeProximity> {
    GuidanceEngine::new(state).sample(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{build_epr_state, build_sg_state, FieldProfile, PacketParams};

    const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn packet() -> PacketParams {
        PacketParams::new(100.0, 100.0, 100.0, 0.1).unwrap()
    }

    fn field() -> FieldProfile {
        FieldProfile::new(1e-6, 2e4, 6e4).unwrap()
    }

    fn spin_up_z() -> SpinorState {
        build_sg_state(packet(), field(), Complex64::from(1.0), Complex64::ZERO).unwrap()
    }

    fn spin_up_y() -> SpinorState {
        build_sg_state(packet(), field(), Complex64::from(INV_SQRT2), Complex64::new(0.0, INV_SQRT2))
            .unwrap()
    }

    fn cfg1(x: [f64; 3], t: f64, chi: Chirality) -> ParticleConfig {
        ParticleConfig::new(t, vec![x], vec![chi])
    }

    #[test]
    fn spin_vector_pauli_algebra() {
        let cfg = cfg1([30.0, -20.0, 55.0], 0.0, Chirality::Plus);
        let s = spin_vector(&spin_up_z(), &cfg, 0).unwrap();
        assert!((s[0]).abs() < 1e-14 && (s[1]).abs() < 1e-14 && (s[2] - 1.0).abs() < 1e-14);

        let s = spin_vector(&spin_up_y(), &cfg, 0).unwrap();
        assert!((s[0]).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14 && (s[2]).abs() < 1e-14);

        // singlet with a = b: spin density vanishes for both particles
        let epr = build_epr_state(packet(), field(), false, INV_SQRT2, INV_SQRT2).unwrap();
        let cfg = ParticleConfig::new(
            4e4,
            vec![[4000.0, 10.0, -35.0], [-3900.0, -60.0, 80.0]],
            vec![Chirality::Plus, Chirality::Minus],
        );
        for k in 0..2 {
            let s = spin_vector(&epr, &cfg, k).unwrap();
            assert_eq!(s, [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn velocity_terms_at_known_points() {
        let state = spin_up_z();
        // At the packet center, t = 0: term1 = (p, 0, 0), term2 = 0, term3 = (0,0,1)
        let cfg = cfg1([0.0, 0.0, 0.0], 0.0, Chirality::Plus);
        let v = velocity(&state, &cfg, 0).unwrap();
        assert!((v[0] - 0.1).abs() < 1e-14);
        assert!(v[1].abs() < 1e-14);
        assert!((v[2] - 1.0).abs() < 1e-14);

        // Off-center along y the curl term contributes (−y/2d_y², 0, 0)
        let y = 37.0;
        let cfg = cfg1([0.0, y, 0.0], 0.0, Chirality::Plus);
        let mut engine = GuidanceEngine::new(&state);
        let terms = engine.velocity_terms(&cfg, 0).unwrap();
        let expect = -y / (2.0 * 100.0 * 100.0);
        assert!((terms[1][0] - expect).abs() < 1e-15, "curl term {:?}", terms[1]);
        assert!(terms[1][1].abs() < 1e-15 && terms[1][2].abs() < 1e-15);
        assert!((terms[2][2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn jump_rate_from_density_gradient() {
        let state = spin_up_z();
        // At z = −d_z, t = 0: ∂_z ln|ψ|² = −z/d² = 1/d, so r₊ = 0.01, r₋ = 0
        let cfg = cfg1([0.0, 0.0, -100.0], 0.0, Chirality::Plus);
        let r_plus = jump_rate(&state, &cfg, 0, Chirality::Plus).unwrap();
        let r_minus = jump_rate(&state, &cfg, 0, Chirality::Minus).unwrap();
        assert!((r_plus - 0.01).abs() < 1e-15, "r+ = {r_plus}");
        assert_eq!(r_minus, 0.0);
    }

    #[test]
    fn at_most_one_rate_survives_the_positive_part() {
        let state = spin_up_y();
        let mut engine = GuidanceEngine::new(&state);
        let mut seed = 42u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let t = next() * 1e5;
            let cfg = cfg1(
                [0.1 * t + (next() - 0.5) * 300.0, (next() - 0.5) * 300.0, (next() - 0.5) * 900.0],
                t,
                Chirality::Plus,
            );
            let s = engine.sample(&cfg).unwrap();
            let r_plus = s.rate(0, Chirality::Plus);
            let r_minus = s.rate(0, Chirality::Minus);
            assert!(r_plus >= 0.0 && r_minus >= 0.0);
            assert_eq!(r_plus * r_minus, 0.0);
            // single-particle spin vector has unit norm
            let sn = (s.spins[0][0].powi(2) + s.spins[0][1].powi(2) + s.spins[0][2].powi(2)).sqrt();
            assert!((sn - 1.0).abs() < 1e-12, "|s| = {sn}");
        }
    }

    #[test]
    fn batched_sample_agrees_with_individual_ops() {
        let state = spin_up_y();
        let cfg = cfg1([2500.0, -80.0, 140.0], 3.1e4, Chirality::Minus);
        let s = guidance_sample(&state, &cfg).unwrap();
        assert_eq!(s.velocity(0, Chirality::Minus), velocity(&state, &cfg, 0).unwrap());
        assert_eq!(s.spins[0], spin_vector(&state, &cfg, 0).unwrap());
        assert_eq!(s.rate(0, Chirality::Plus), jump_rate(&state, &cfg, 0, Chirality::Plus).unwrap());
    }

    #[test]
    fn entangled_spins_are_opposite_and_depend_only_on_particle_one() {
        let state = build_epr_state(packet(), field(), true, INV_SQRT2, INV_SQRT2).unwrap();
        let mut engine = GuidanceEngine::new(&state);
        let t = 7.4e4;
        let x1 = [0.1 * t, 25.0, 900.0];
        let cfg_a = ParticleConfig::new(
            t,
            vec![x1, [-0.1 * t, -40.0, 10.0]],
            vec![Chirality::Plus, Chirality::Plus],
        );
        let cfg_b = ParticleConfig::new(
            t,
            vec![x1, [-0.1 * t + 321.0, 77.0, -260.0]],
            vec![Chirality::Plus, Chirality::Plus],
        );
        let sa = engine.sample(&cfg_a).unwrap();
        let sb = engine.sample(&cfg_b).unwrap();
        for c in 0..3 {
            assert!((sa.spins[0][c] + sa.spins[1][c]).abs() < 1e-13, "s1 != -s2");
            assert!((sa.spins[0][c] - sb.spins[0][c]).abs() < 1e-12, "s1 moved with x2");
            assert!((sa.spins[1][c] - sb.spins[1][c]).abs() < 1e-12, "s2 moved with x2");
        }
        // spin vectors point along z only, with norm at most one
        assert!(sa.spins[0][0].abs() < 1e-13 && sa.spins[0][1].abs() < 1e-13);
        for k in 0..2 {
            let n2: f64 = sa.spins[k].iter().map(|s| s * s).sum();
            assert!(n2.sqrt() <= 1.0 + 1e-12, "entangled |s_{k}| = {}", n2.sqrt());
        }

        // deep inside the upper branch the pair spins saturate to ±e_z
        let t = 9e4;
        let deep = ParticleConfig::new(
            t,
            vec![[0.1 * t, 0.0, field().branch_center(t) + 600.0], [-0.1 * t, 0.0, 0.0]],
            vec![Chirality::Plus, Chirality::Plus],
        );
        let s = engine.sample(&deep).unwrap();
        assert!(s.spins[0][2] > 0.999999, "s1 deep in upper branch: {:?}", s.spins[0]);
        assert!(s.spins[1][2] < -0.999999, "s2 deep in upper branch: {:?}", s.spins[1]);
    }

    #[test]
    fn entangled_rates_vanish_before_the_field() {
        let state = build_epr_state(packet(), field(), true, INV_SQRT2, INV_SQRT2).unwrap();
        let mut engine = GuidanceEngine::new(&state);
        for t in [0.0, 5e3, 1.9999e4] {
            let cfg = ParticleConfig::new(
                t,
                vec![[0.1 * t, 30.0, -55.0], [-0.1 * t, -10.0, 70.0]],
                vec![Chirality::Plus, Chirality::Minus],
            );
            let s = engine.sample(&cfg).unwrap();
            for k in 0..2 {
                assert_eq!(s.rate_arg[k], 0.0, "rate arg nonzero at t={t}, k={k}");
                assert_eq!(s.spins[k], [0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn divergence_form_matches_gradient_form() {
        // Test-only independent route: ∇·(Ψ†σΨ) by central differences of
        // the spin density, against the production 2Re(Ψ†σ·∇Ψ).
        let state = spin_up_y();
        let mut engine = GuidanceEngine::new(&state);
        // packet scales are ~100 units; this step keeps both truncation
        // (after Richardson) and rounding noise near 1e-12
        let h = 0.05;
        let spin_density = |x: [f64; 3], t: f64| -> [f64; 3] {
            let psi = state.evaluate(&[x], t);
            let w_x = 2.0 * (psi[0].conj() * psi[1]).re;
            let w_y = 2.0 * (psi[0].conj() * psi[1]).im;
            let w_z = psi[0].norm_sqr() - psi[1].norm_sqr();
            [w_x, w_y, w_z]
        };
        let mut seed = 7u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let t = next() * 1e5;
            let x = [0.1 * t + (next() - 0.5) * 250.0, (next() - 0.5) * 250.0, (next() - 0.5) * 700.0];
            let cfg = cfg1(x, t, Chirality::Plus);
            let s = engine.sample(&cfg).unwrap();
            // Richardson-extrapolated central differences of the spin
            // density, so the oracle's truncation error sits well below
            // the comparison bound.
            let central = |step: f64| -> f64 {
                let mut div = 0.0;
                for axis in 0..3 {
                    let mut xp = x;
                    xp[axis] += step;
                    let mut xm = x;
                    xm[axis] -= step;
                    div += (spin_density(xp, t)[axis] - spin_density(xm, t)[axis]) / (2.0 * step);
                }
                div
            };
            let refined = (4.0 * central(h / 2.0) - central(h)) / 3.0;
            let fd_arg = refined / s.density;
            // relative where the rate argument is of typical size (~1/d),
            // absolute near its zero crossings
            let denom = s.rate_arg[0].abs().max(1e-3);
            assert!(
                (s.rate_arg[0] - fd_arg).abs() / denom < 1e-8,
                "gradient form {} vs divergence form {}",
                s.rate_arg[0],
                fd_arg
            );
        }
    }

    #[test]
    fn spin_z_is_mirror_antisymmetric() {
        let state = spin_up_y();
        let mut engine = GuidanceEngine::new(&state);
        for (x, y, z, t) in [(7000.0, 40.0, 300.0, 7e4), (6500.0, -90.0, 55.0, 6.6e4)] {
            let s_up = engine.sample(&cfg1([x, y, z], t, Chirality::Plus)).unwrap();
            let s_dn = engine.sample(&cfg1([x, y, -z], t, Chirality::Plus)).unwrap();
            assert!(
                (s_up.spins[0][2] + s_dn.spins[0][2]).abs() < 1e-12,
                "s_z not antisymmetric: {} vs {}",
                s_up.spins[0][2],
                s_dn.spins[0][2]
            );
        }
    }

    #[test]
    fn node_proximity_signals_instead_of_blowing_up() {
        let state = spin_up_z();
        let cfg = cfg1([1e6, 1e6, 1e6], 0.0, Chirality::Plus);
        let err = guidance_sample(&state, &cfg).unwrap_err();
        assert!(err.rho < err.floor);
    }
}
