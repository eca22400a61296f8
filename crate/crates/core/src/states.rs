//! Closed-form Pauli spinors for the time-gated Stern-Gerlach setup.
//!
//! Every wave function handled here is a sum of terms, each a complex
//! coefficient times a product over particles of (Gaussian packet factor in
//! x, y, z) ⊗ (spin basis ket). Each 1D packet factor is stored as the
//! exponential of a quadratic, `exp(A(t) q² + B(t) q + C(t))` with complex,
//! regime-resolved coefficients, so values, spatial gradients and Laplacians
//! are exact — no numerical differentiation enters the guidance fields.
//!
//! Units are natural throughout: ħ = m = c = e = 1.

use num_complex::Complex64;
use thiserror::Error;

/// exp for complex arguments via `sin_cos`; this sits in every hot loop.
#[inline(always)]
pub(crate) fn cexp(z: Complex64) -> Complex64 {
    let (s, c) = z.im.sin_cos();
    let r = z.re.exp();
    Complex64::new(r * c, r * s)
}

/// Fundamental constants, all fixed to one (natural units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsConstants {
    pub hbar: f64,
    pub m: f64,
    pub c: f64,
    pub e: f64,
}

impl PhysicsConstants {
    pub const fn natural() -> Self {
        Self { hbar: 1.0, m: 1.0, c: 1.0, e: 1.0 }
    }

    pub fn is_natural(&self) -> bool {
        self.hbar == 1.0 && self.m == 1.0 && self.c == 1.0 && self.e == 1.0
    }
}

impl Default for PhysicsConstants {
    fn default() -> Self {
        Self::natural()
    }
}

/// Time-gated field gradient: B = (0, 0, 2 b z / e) for t_i ≤ t < t_f,
/// zero otherwise. The regime intervals are half-open at the switch times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldProfile {
    pub b: f64,
    pub t_i: f64,
    pub t_f: f64,
}

#[derive(Debug, Error)]
pub enum StateError {
    #[error("spin coefficients not normalized: |c|² = {norm_sq}")]
    NotNormalized { norm_sq: f64 },
    #[error("field switch times must satisfy t_i < t_f (got {t_i}, {t_f})")]
    BadFieldWindow { t_i: f64, t_f: f64 },
    #[error("packet widths must be strictly positive")]
    BadPacketWidth,
}

impl FieldProfile {
    pub fn new(b: f64, t_i: f64, t_f: f64) -> Result<Self, StateError> {
        if !(t_i < t_f) {
            return Err(StateError::BadFieldWindow { t_i, t_f });
        }
        Ok(Self { b, t_i, t_f })
    }

    /// Whether the field is switched on at time t (half-open window).
    pub fn is_on(&self, t: f64) -> bool {
        self.t_i <= t && t < self.t_f
    }

    /// Magnetic field vector at height q along the field axis.
    pub fn magnetic_field(&self, q: f64, t: f64) -> [f64; 3] {
        if self.is_on(t) {
            [0.0, 0.0, 2.0 * self.b * q]
        } else {
            [0.0, 0.0, 0.0]
        }
    }

    /// Center of the `+` branch packet along the field axis; the `-` branch
    /// is at the mirror position.
    pub fn branch_center(&self, t: f64) -> f64 {
        if t < self.t_i {
            0.0
        } else if t < self.t_f {
            let tau = t - self.t_i;
            0.5 * self.b * tau * tau
        } else {
            let delta = self.t_f - self.t_i;
            0.5 * self.b * delta * delta + self.b * delta * (t - self.t_f)
        }
    }
}

/// Axis along which a Stern-Gerlach field gradient (and beam splitting) acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldAxis {
    Y,
    Z,
}

impl FieldAxis {
    pub fn coordinate(self) -> usize {
        match self {
            FieldAxis::Y => 1,
            FieldAxis::Z => 2,
        }
    }

    /// Eigenkets of σ along this axis, expressed in the σ_z basis,
    /// ordered (+ branch, − branch).
    fn eigenkets(self) -> [[Complex64; 2]; 2] {
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            FieldAxis::Z => [[one, Complex64::ZERO], [Complex64::ZERO, one]],
            FieldAxis::Y => [[s * one, s * i], [s * one, -s * i]],
        }
    }
}

/// Initial Gaussian packet: widths per axis and momentum p along x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketParams {
    pub d_x: f64,
    pub d_y: f64,
    pub d_z: f64,
    pub p: f64,
}

impl PacketParams {
    pub fn new(d_x: f64, d_y: f64, d_z: f64, p: f64) -> Result<Self, StateError> {
        if d_x <= 0.0 || d_y <= 0.0 || d_z <= 0.0 {
            return Err(StateError::BadPacketWidth);
        }
        Ok(Self { d_x, d_y, d_z, p })
    }

    pub fn width(&self, axis: usize) -> f64 {
        match axis {
            0 => self.d_x,
            1 => self.d_y,
            _ => self.d_z,
        }
    }
}

/// |ψ|² standard deviation of a width-d packet after free dispersion time t.
pub fn dispersed_width(d: f64, t: f64) -> f64 {
    let tau = t / (2.0 * d * d);
    d * (1.0 + tau * tau).sqrt()
}

/// Complex log-coefficients of one packet factor: exp(a q² + b q + c).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogCoeffs {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
}

/// How a factor's center, momentum and accumulated phase move in time.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Motion {
    /// Free packet starting at the origin with momentum k.
    Free { k: f64 },
    /// Field-gated branch (sign ±1): accelerated while the field is on,
    /// ballistic afterwards.
    Gated { sign: f64, b: f64, t_i: f64, t_f: f64 },
}

/// One-dimensional Gaussian packet factor with analytic time dependence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFactor {
    d: f64,
    motion: Motion,
}

impl GaussianFactor {
    pub fn free(d: f64, k: f64) -> Self {
        Self { d, motion: Motion::Free { k } }
    }

    pub fn gated(d: f64, sign: f64, field: FieldProfile) -> Self {
        Self { d, motion: Motion::Gated { sign, b: field.b, t_i: field.t_i, t_f: field.t_f } }
    }

    pub fn width(&self) -> f64 {
        self.d
    }

    /// (center, momentum, phase) of the factor at time t.
    fn motion_at(&self, t: f64) -> (f64, f64, f64) {
        match self.motion {
            Motion::Free { k } => (k * t, k, -0.5 * k * k * t),
            Motion::Gated { sign, b, t_i, t_f } => {
                if t < t_i {
                    (0.0, 0.0, 0.0)
                } else if t < t_f {
                    let tau = t - t_i;
                    (sign * 0.5 * b * tau * tau, sign * b * tau, -b * b * tau.powi(3) / 6.0)
                } else {
                    let delta = t_f - t_i;
                    let tau = t - t_f;
                    (
                        sign * (0.5 * b * delta * delta + b * delta * tau),
                        sign * b * delta,
                        -b * b * delta.powi(3) / 6.0 - 0.5 * b * b * delta * delta * tau,
                    )
                }
            }
        }
    }

    /// Packet center at time t.
    pub fn center(&self, t: f64) -> f64 {
        self.motion_at(t).0
    }

    /// Log-coefficients at time t.
    ///
    /// With u = 1 + it/2d², the factor is
    ///   (2π d² u²)^{-1/4} exp[ −(q − c)²/(4 d² u) + i k q + i φ ],
    /// expanded into exp(A q² + B q + C). The fourth-root prefactor is
    /// absorbed into C as −ln(2πd²)/4 − Ln(u)/2 on the principal branch;
    /// u stays in the right half-plane for t ≥ 0, so the phase is
    /// continuous without any extra unwrapping.
    pub fn coeffs(&self, t: f64) -> LogCoeffs {
        let d2 = self.d * self.d;
        let u = Complex64::new(1.0, t / (2.0 * d2));
        let inv_4d2u = 1.0 / (4.0 * d2 * u);
        let (center, k, phase) = self.motion_at(t);
        let a = -inv_4d2u;
        let b = 2.0 * center * inv_4d2u + Complex64::new(0.0, k);
        let c = -center * center * inv_4d2u + Complex64::new(0.0, phase)
            - 0.25 * (2.0 * std::f64::consts::PI * d2).ln()
            - 0.5 * u.ln();
        LogCoeffs { a, b, c }
    }

    /// Factor value at (q, t).
    pub fn eval(&self, q: f64, t: f64) -> Complex64 {
        let LogCoeffs { a, b, c } = self.coeffs(t);
        cexp((a * q + b) * q + c)
    }

    /// ∂_q ln ψ = 2 A q + B.
    pub fn log_derivative(&self, q: f64, t: f64) -> Complex64 {
        let LogCoeffs { a, b, .. } = self.coeffs(t);
        2.0 * a * q + b
    }
}

/// Spin basis label for one particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn bit(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }

    pub fn opposite(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    /// σ_z eigenvalue.
    pub fn sign(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }
}

/// One use of a packet factor: which factor, applied to which particle
/// coordinate. Factor evaluations are shared through this table so that a
/// state evaluation touches each distinct (factor, coordinate) pair once.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FactorUse {
    factor: u32,
    particle: u16,
    axis: u8,
}

#[derive(Debug, Clone)]
struct Term {
    coeff: Complex64,
    /// 3N factor-use indices, ordered (particle 0: x,y,z), (particle 1: ...).
    uses: Vec<u32>,
    spins: Vec<Spin>,
    /// Spin basis slot: particle k contributes bit (N−1−k).
    slot: usize,
}

/// A Pauli spinor: Σ terms of coefficient × Gaussian packet ⊗ spin ket.
///
/// Immutable after construction; evaluation is pure and may be shared
/// across threads.
#[derive(Debug, Clone)]
pub struct SpinorState {
    n: usize,
    factors: Vec<GaussianFactor>,
    uses: Vec<FactorUse>,
    terms: Vec<Term>,
    /// The gated field seen by each particle (None = field-free), with the
    /// axis it acts along. Used by the Pauli-residual check.
    fields: Vec<Option<(FieldProfile, FieldAxis)>>,
}

fn spin_slot(spins: &[Spin]) -> usize {
    let n = spins.len();
    spins.iter().enumerate().fold(0usize, |acc, (k, s)| acc | (s.bit() << (n - 1 - k)))
}

/// Builder that interns factors and factor-uses.
struct StateBuilder {
    n: usize,
    factors: Vec<GaussianFactor>,
    uses: Vec<FactorUse>,
    terms: Vec<Term>,
    fields: Vec<Option<(FieldProfile, FieldAxis)>>,
}

impl StateBuilder {
    fn new(n: usize) -> Self {
        Self { n, factors: Vec::new(), uses: Vec::new(), terms: Vec::new(), fields: vec![None; n] }
    }

    fn intern_factor(&mut self, f: GaussianFactor) -> u32 {
        if let Some(i) = self.factors.iter().position(|g| *g == f) {
            return i as u32;
        }
        self.factors.push(f);
        (self.factors.len() - 1) as u32
    }

    fn intern_use(&mut self, factor: u32, particle: u16, axis: u8) -> u32 {
        let fu = FactorUse { factor, particle, axis };
        if let Some(i) = self.uses.iter().position(|g| *g == fu) {
            return i as u32;
        }
        self.uses.push(fu);
        (self.uses.len() - 1) as u32
    }

    /// Add a term given per-particle factors and spins.
    fn push_term(&mut self, coeff: Complex64, per_particle: &[([GaussianFactor; 3], Spin)]) {
        assert_eq!(per_particle.len(), self.n);
        let mut uses = Vec::with_capacity(3 * self.n);
        let mut spins = Vec::with_capacity(self.n);
        for (k, (facs, spin)) in per_particle.iter().enumerate() {
            for (axis, f) in facs.iter().enumerate() {
                let fi = self.intern_factor(*f);
                uses.push(self.intern_use(fi, k as u16, axis as u8));
            }
            spins.push(*spin);
        }
        let slot = spin_slot(&spins);
        self.terms.push(Term { coeff, uses, spins, slot });
    }

    fn finish(self) -> SpinorState {
        SpinorState {
            n: self.n,
            factors: self.factors,
            uses: self.uses,
            terms: self.terms,
            fields: self.fields,
        }
    }
}

const NORM_TOL: f64 = 1e-9;

/// Per-particle factor triple for a packet moving along x with momentum p,
/// with the branch factor on the field axis.
fn branch_factors(
    packet: &PacketParams,
    p: f64,
    field: Option<FieldProfile>,
    axis: FieldAxis,
    sign: f64,
) -> [GaussianFactor; 3] {
    let mut facs = [
        GaussianFactor::free(packet.d_x, p),
        GaussianFactor::free(packet.d_y, 0.0),
        GaussianFactor::free(packet.d_z, 0.0),
    ];
    if let Some(f) = field {
        facs[axis.coordinate()] = GaussianFactor::gated(packet.width(axis.coordinate()), sign, f);
    }
    facs
}

/// Single-particle Stern-Gerlach state (field along z):
/// Ψ(x, t) = (c₊ ψ₊(x,t), c₋ ψ₋(x,t))ᵀ.
pub fn build_sg_state(
    packet: PacketParams,
    field: FieldProfile,
    c_plus: Complex64,
    c_minus: Complex64,
) -> Result<SpinorState, StateError> {
    build_sg_state_axis(packet, field, FieldAxis::Z, c_plus, c_minus)
}

/// Single-particle Stern-Gerlach state with the field gradient along a
/// chosen axis. `c_plus`/`c_minus` weight the ± eigenkets of σ along that
/// axis.
pub fn build_sg_state_axis(
    packet: PacketParams,
    field: FieldProfile,
    axis: FieldAxis,
    c_plus: Complex64,
    c_minus: Complex64,
) -> Result<SpinorState, StateError> {
    let norm_sq = c_plus.norm_sqr() + c_minus.norm_sqr();
    if (norm_sq - 1.0).abs() > NORM_TOL {
        return Err(StateError::NotNormalized { norm_sq });
    }
    let kets = axis.eigenkets();
    let mut builder = StateBuilder::new(1);
    builder.fields[0] = Some((field, axis));
    for (branch, cb) in [(0usize, c_plus), (1usize, c_minus)] {
        let sign = if branch == 0 { 1.0 } else { -1.0 };
        let facs = branch_factors(&packet, packet.p, Some(field), axis, sign);
        for (spin, comp) in [(Spin::Up, kets[branch][0]), (Spin::Down, kets[branch][1])] {
            let coeff = cb * comp;
            if coeff.norm_sqr() > 0.0 {
                builder.push_term(coeff, &[(facs, spin)]);
            }
        }
    }
    Ok(builder.finish())
}

/// Two-particle spin-entangled pair:
/// Ψ = ψ₂(x₂) [a ψ₊(x₁)|+⟩|−⟩ − b ψ₋(x₁)|−⟩|+⟩],
/// with particle 1 carrying momentum +p and particle 2 momentum −p. When
/// `with_sg_on_particle1` is set, particle 1's branch factors follow the
/// gated field; otherwise both branch factors coincide with the free packet.
pub fn build_epr_state(
    packet: PacketParams,
    field: FieldProfile,
    with_sg_on_particle1: bool,
    a: f64,
    b_spin: f64,
) -> Result<SpinorState, StateError> {
    build_epr_state_axis(packet, field, FieldAxis::Z, with_sg_on_particle1, a, b_spin)
}

pub fn build_epr_state_axis(
    packet: PacketParams,
    field: FieldProfile,
    axis: FieldAxis,
    with_sg_on_particle1: bool,
    a: f64,
    b_spin: f64,
) -> Result<SpinorState, StateError> {
    let norm_sq = a * a + b_spin * b_spin;
    if (norm_sq - 1.0).abs() > NORM_TOL {
        return Err(StateError::NotNormalized { norm_sq });
    }
    let kets = axis.eigenkets();
    let field1 = if with_sg_on_particle1 { Some(field) } else { None };
    let mut builder = StateBuilder::new(2);
    if with_sg_on_particle1 {
        builder.fields[0] = Some((field, axis));
    }
    let facs2 = branch_factors(&packet, -packet.p, None, axis, 1.0);
    // (branch of particle 1, amplitude, ket index particle 1, ket index particle 2)
    for (sign, amp, k1, k2) in [(1.0, Complex64::from(a), 0usize, 1usize), (-1.0, Complex64::from(-b_spin), 1, 0)] {
        let facs1 = branch_factors(&packet, packet.p, field1, axis, sign);
        for (s1, comp1) in [(Spin::Up, kets[k1][0]), (Spin::Down, kets[k1][1])] {
            for (s2, comp2) in [(Spin::Up, kets[k2][0]), (Spin::Down, kets[k2][1])] {
                let coeff = amp * comp1 * comp2;
                if coeff.norm_sqr() > 0.0 {
                    builder.push_term(coeff, &[(facs1, s1), (facs2, s2)]);
                }
            }
        }
    }
    Ok(builder.finish())
}

/// Product state after an effective collapse onto one branch of the
/// entangled pair: ψ_branch(x₁)|branch⟩ ⊗ ψ₂(x₂)|opposite⟩.
pub fn collapsed_epr_state(
    packet: PacketParams,
    field: FieldProfile,
    branch: Spin,
) -> Result<SpinorState, StateError> {
    let mut builder = StateBuilder::new(2);
    builder.fields[0] = Some((field, FieldAxis::Z));
    let facs1 = branch_factors(&packet, packet.p, Some(field), FieldAxis::Z, branch.sign());
    let facs2 = branch_factors(&packet, -packet.p, None, FieldAxis::Z, 1.0);
    builder.push_term(Complex64::from(1.0), &[(facs1, branch), (facs2, branch.opposite())]);
    Ok(builder.finish())
}

/// Reusable evaluation workspace. Construct once per worker and feed to
/// [`SpinorState::eval_into`]; all buffers are reused across calls.
#[derive(Debug, Clone, Default)]
pub struct StateEval {
    /// Spinor components, dimension 2^N.
    pub psi: Vec<Complex64>,
    /// Flattened gradients: ∂Ψ/∂x_{k,axis} at [(k*3 + axis)*dim + slot].
    pub grad: Vec<Complex64>,
    /// Ψ†Ψ.
    pub rho: f64,
    /// Analytic peak-density scale at the evaluation time (for node floors).
    pub peak: f64,
    coeffs: Vec<LogCoeffs>,
    contrib: Vec<Complex64>,
    logd: Vec<Complex64>,
    term_val: Vec<Complex64>,
}

impl SpinorState {
    pub fn n_particles(&self) -> usize {
        self.n
    }

    /// Spinor dimension 2^N.
    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// Field profile (and axis) seen by each particle.
    pub fn field_of(&self, particle: usize) -> Option<(FieldProfile, FieldAxis)> {
        self.fields[particle]
    }

    /// Earliest switch-on and latest switch-off over all particles, if any
    /// particle sees a field. Integration steps are aligned to these times.
    pub fn field_switch_times(&self) -> Vec<f64> {
        let mut ts = Vec::new();
        for f in self.fields.iter().flatten() {
            ts.push(f.0.t_i);
            ts.push(f.0.t_f);
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    /// Evaluate Ψ (and optionally every ∂Ψ/∂x_{k,a}) at a configuration.
    ///
    /// One pass computes each distinct factor's coefficients once and each
    /// distinct (factor, coordinate) contribution once; terms then sum in
    /// log space with a single complex exp per term.
    pub fn eval_into(&self, positions: &[[f64; 3]], t: f64, with_grad: bool, ws: &mut StateEval) {
        assert_eq!(positions.len(), self.n);
        let dim = self.dim();
        ws.psi.clear();
        ws.psi.resize(dim, Complex64::ZERO);
        ws.coeffs.clear();
        ws.coeffs.extend(self.factors.iter().map(|f| f.coeffs(t)));
        ws.contrib.clear();
        ws.logd.clear();
        for fu in &self.uses {
            let q = positions[fu.particle as usize][fu.axis as usize];
            let lc = &ws.coeffs[fu.factor as usize];
            ws.contrib.push((lc.a * q + lc.b) * q + lc.c);
            ws.logd.push(2.0 * lc.a * q + lc.b);
        }
        ws.term_val.clear();
        let mut peak = 0.0;
        for term in &self.terms {
            let mut e = Complex64::ZERO;
            let mut peak_log = 0.0;
            for &u in &term.uses {
                e += ws.contrib[u as usize];
                let lc = &ws.coeffs[self.uses[u as usize].factor as usize];
                peak_log += 2.0 * lc.c.re - lc.b.re * lc.b.re / (2.0 * lc.a.re);
            }
            let v = term.coeff * cexp(e);
            ws.term_val.push(v);
            ws.psi[term.slot] += v;
            peak += term.coeff.norm_sqr() * peak_log.exp();
        }
        ws.peak = peak;
        ws.rho = ws.psi.iter().map(|z| z.norm_sqr()).sum();
        if with_grad {
            ws.grad.clear();
            ws.grad.resize(self.n * 3 * dim, Complex64::ZERO);
            for (ti, term) in self.terms.iter().enumerate() {
                let v = ws.term_val[ti];
                for (j, &u) in term.uses.iter().enumerate() {
                    // uses are ordered (particle, axis), so j indexes (k*3 + a)
                    ws.grad[j * dim + term.slot] += v * ws.logd[u as usize];
                }
            }
        }
    }

    /// Value of Ψ at a configuration (allocating convenience wrapper).
    pub fn evaluate(&self, positions: &[[f64; 3]], t: f64) -> Vec<Complex64> {
        let mut ws = StateEval::default();
        self.eval_into(positions, t, false, &mut ws);
        ws.psi
    }

    /// Analytic spatial gradient of every component with respect to
    /// particle k: returns (∂/∂x, ∂/∂y, ∂/∂z) of the 2^N-vector.
    pub fn gradient(&self, positions: &[[f64; 3]], t: f64, k: usize) -> [Vec<Complex64>; 3] {
        let mut ws = StateEval::default();
        self.eval_into(positions, t, true, &mut ws);
        let dim = self.dim();
        let pick = |axis: usize| ws.grad[(k * 3 + axis) * dim..(k * 3 + axis + 1) * dim].to_vec();
        [pick(0), pick(1), pick(2)]
    }

    /// Σ_k ∇²_k Ψ at a configuration, from the exact per-factor identity
    /// ψ''/ψ = (2Aq + B)² + 2A.
    pub fn laplacian(&self, positions: &[[f64; 3]], t: f64) -> Vec<Complex64> {
        let mut ws = StateEval::default();
        self.eval_into(positions, t, false, &mut ws);
        let mut lap = vec![Complex64::ZERO; self.dim()];
        for (ti, term) in self.terms.iter().enumerate() {
            let v = ws.term_val[ti];
            let mut sum = Complex64::ZERO;
            for &u in &term.uses {
                let l = ws.logd[u as usize];
                let a = ws.coeffs[self.uses[u as usize].factor as usize].a;
                sum += l * l + 2.0 * a;
            }
            lap[term.slot] += v * sum;
        }
        lap
    }

    /// Relative residual of the Pauli equation
    /// i ∂_t Ψ + ½ Σ_k ∇²_k Ψ + Σ_k (e/2) B(x_k)·σ_k Ψ = 0
    /// at one spacetime point, with ∂_t taken by central finite difference
    /// of step `fd_step`. The result is normalized by the largest term.
    pub fn pauli_residual(&self, positions: &[[f64; 3]], t: f64, fd_step: f64) -> f64 {
        let dim = self.dim();
        let plus = self.evaluate(positions, t + fd_step);
        let minus = self.evaluate(positions, t - fd_step);
        let lap = self.laplacian(positions, t);
        let i = Complex64::new(0.0, 1.0);

        let mut dt_term = vec![Complex64::ZERO; dim];
        let mut lap_term = vec![Complex64::ZERO; dim];
        let mut field_term = vec![Complex64::ZERO; dim];
        for s in 0..dim {
            dt_term[s] = i * (plus[s] - minus[s]) / (2.0 * fd_step);
            lap_term[s] = 0.5 * lap[s];
        }
        let psi = self.evaluate(positions, t);
        for (k, maybe_field) in self.fields.iter().enumerate() {
            if let Some((field, axis)) = maybe_field {
                if field.is_on(t) {
                    let q = positions[k][axis.coordinate()];
                    // (e/2)(2 b q / e) σ_axis: apply σ along the field axis.
                    let scale = field.b * q;
                    let pos = self.n - 1 - k;
                    let mask = 1usize << pos;
                    for s in 0..dim {
                        let applied = match axis {
                            FieldAxis::Z => {
                                if s & mask == 0 {
                                    psi[s]
                                } else {
                                    -psi[s]
                                }
                            }
                            FieldAxis::Y => {
                                let f = psi[s ^ mask];
                                if s & mask == 0 {
                                    -i * f
                                } else {
                                    i * f
                                }
                            }
                        };
                        field_term[s] += scale * applied;
                    }
                }
            }
        }

        let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut res = vec![Complex64::ZERO; dim];
        for s in 0..dim {
            res[s] = dt_term[s] + lap_term[s] + field_term[s];
        }
        let scale = norm(&dt_term).max(norm(&lap_term)).max(norm(&field_term));
        if scale == 0.0 {
            return 0.0;
        }
        norm(&res) / scale
    }

    /// The factors referenced by a given particle's z (or field-axis)
    /// branch, exposed for marginal/branch bookkeeping in analysis code.
    pub fn factor_for(&self, term: usize, particle: usize, axis: usize) -> &GaussianFactor {
        let u = self.terms[term].uses[particle * 3 + axis];
        &self.factors[self.uses[u as usize].factor as usize]
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn term_coeff(&self, term: usize) -> Complex64 {
        self.terms[term].coeff
    }

    pub fn term_spins(&self, term: usize) -> &[Spin] {
        &self.terms[term].spins
    }
}

/// A state whose t = 0 position density is deliberately NOT a product of
/// Gaussians (two packets of different width on the same spin slot), for
/// exercising the sampler's precondition check.
#[cfg(test)]
pub(crate) fn mismatched_packet_state() -> SpinorState {
    let inv = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
    let mut b = StateBuilder::new(1);
    let wide = [
        GaussianFactor::free(100.0, 0.1),
        GaussianFactor::free(100.0, 0.0),
        GaussianFactor::free(100.0, 0.0),
    ];
    let narrow = [
        GaussianFactor::free(50.0, -0.1),
        GaussianFactor::free(100.0, 0.0),
        GaussianFactor::free(100.0, 0.0),
    ];
    b.push_term(inv, &[(wide, Spin::Up)]);
    b.push_term(inv, &[(narrow, Spin::Up)]);
    b.finish()
}
