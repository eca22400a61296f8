//! Initial configurations drawn from quantum equilibrium,
//! ρ(x, χ, 0) = Ψ†Ψ/2 per chirality.
//!
//! Every state in scope has a product-Gaussian position density at t = 0
//! (the ± branch factors coincide before the field switches on, so the spin
//! coefficients factor out). The sampler verifies that precondition and
//! then draws positions directly, axis by axis; chiralities are uniform.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::guidance::{Chirality, ParticleConfig};
use crate::states::SpinorState;

/// RNG stream reserved for initial-condition sampling, distinct from the
/// per-trajectory streams 0, 1, 2, …
pub const SAMPLER_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(
        "t = 0 density is not a product of Gaussians (particle {particle}, axis {axis}); \
         direct equilibrium sampling is only implemented for product-Gaussian states"
    )]
    NotProductGaussian { particle: usize, axis: usize },
}

/// Draws equilibrium configurations for one state at t = 0.
#[derive(Debug, Clone)]
pub struct EquilibriumSampler {
    /// (mean, standard deviation) per particle per axis.
    axes: Vec<[(f64, f64); 3]>,
}

impl EquilibriumSampler {
    pub fn new(state: &SpinorState) -> Result<Self, SamplerError> {
        let n = state.n_particles();
        let mut axes = vec![[(0.0, 0.0); 3]; n];
        for k in 0..n {
            for axis in 0..3 {
                let reference = state.factor_for(0, k, axis).coeffs(0.0);
                for term in 1..state.n_terms() {
                    let lc = state.factor_for(term, k, axis).coeffs(0.0);
                    let close = |a: num_complex::Complex64, b: num_complex::Complex64| {
                        (a - b).norm() <= 1e-12 * a.norm().max(1.0)
                    };
                    if !(close(lc.a, reference.a) && close(lc.b, reference.b) && close(lc.c, reference.c)) {
                        return Err(SamplerError::NotProductGaussian { particle: k, axis });
                    }
                }
                // |ψ|² ∝ exp(2Re(a) q² + 2Re(b) q): variance −1/(4 Re a)
                let var = -1.0 / (4.0 * reference.a.re);
                let mean = -reference.b.re / (2.0 * reference.a.re);
                axes[k][axis] = (mean, var.sqrt());
            }
        }
        Ok(Self { axes })
    }

    pub fn n_particles(&self) -> usize {
        self.axes.len()
    }

    /// Packet standard deviation per particle and axis at t = 0.
    pub fn sigma(&self, particle: usize, axis: usize) -> f64 {
        self.axes[particle][axis].1
    }

    /// Draw `count` configurations. Per configuration the draw order is
    /// fixed: positions (particle-major, x, y, z), then chiralities.
    pub fn sample_with<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<ParticleConfig> {
        (0..count)
            .map(|_| {
                let positions: Vec<[f64; 3]> = self
                    .axes
                    .iter()
                    .map(|ax| {
                        let mut p = [0.0; 3];
                        for (c, (mean, sd)) in ax.iter().enumerate() {
                            let g: f64 = rng.sample(StandardNormal);
                            p[c] = mean + sd * g;
                        }
                        p
                    })
                    .collect();
                let chiralities = (0..self.axes.len())
                    .map(|_| if rng.random::<bool>() { Chirality::Plus } else { Chirality::Minus })
                    .collect();
                ParticleConfig::new(0.0, positions, chiralities)
            })
            .collect()
    }
}

/// Sample `count` equilibrium configurations with the dedicated sampler
/// stream of the given master seed.
pub fn sample_initial(
    state: &SpinorState,
    count: usize,
    seed: u64,
) -> Result<Vec<ParticleConfig>, SamplerError> {
    let sampler = EquilibriumSampler::new(state)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLER_STREAM);
    Ok(sampler.sample_with(&mut rng, count))
}
