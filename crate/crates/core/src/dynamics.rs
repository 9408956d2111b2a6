//! Modal trajectories and the energy functionals of the decay argument.
//!
//! Trajectories are propagated with the matrix exponential of the
//! energy-coordinate generator. Time derivatives of quadratic functionals are
//! taken from `z' = L z` exactly: for `F(z) = z^T Q z`, `F' = z^T (Q L + L^T Q) z`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::linalg::{self, RMat, RVec};
use crate::modal::{block_for, ModalBlock, ModalState, Model};
use crate::params::{SpectrumSpec, SystemParams};
use crate::spectral::{chi_is_zero, gamma_is_half};

/// Relative energy growth tolerated before a trajectory is declared non-contractive.
const CONTRACTION_TOL: f64 = 1e-9;

/// Propagates `state0` by `t` through the energy coordinates.
pub fn evolve(block: &ModalBlock, state0: &ModalState, t: f64) -> Result<ModalState> {
    check_state(block, state0)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Precondition(format!("time must be finite and >= 0, got {t}")));
    }
    let u0 = block.to_energy(&state0.components);
    let u = linalg::expm(&block.m, t)? * &u0;
    let e0 = u0.norm_squared();
    if u.norm_squared() > e0 * (1.0 + CONTRACTION_TOL) + f64::MIN_POSITIVE {
        return Err(Error::numerical("evolve", "energy increased along the trajectory"));
    }
    Ok(ModalState {
        alpha: block.alpha,
        components: block.from_energy(&u),
    })
}

fn check_state(block: &ModalBlock, state: &ModalState) -> Result<()> {
    if state.components.len() != block.dim() {
        return Err(Error::Precondition(format!(
            "state has {} components, block expects {}",
            state.components.len(),
            block.dim()
        )));
    }
    if state.alpha != block.alpha {
        return Err(Error::Precondition(format!(
            "state at alpha = {} given to block at alpha = {}",
            state.alpha, block.alpha
        )));
    }
    if state.components.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("non-finite state".into()));
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Precondition("empty time grid".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("times must be >= 0 and strictly ascending".into()));
    }
    Ok(())
}

/// States of one mode on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub alpha: f64,
    pub times: Vec<f64>,
    /// Physical coordinates.
    pub states: Vec<RVec>,
    /// The same states in energy coordinates.
    pub energy_coords: Vec<RVec>,
    pub energy: Vec<f64>,
    /// Exact `dE/dt` from `z' = L z`.
    pub energy_rate: Vec<f64>,
}

/// Half the squared energy-coordinate norm.
fn energy_of(block: &ModalBlock, z: &RVec) -> f64 {
    0.5 * block.to_energy(z).norm_squared()
}

/// `dE/dt = (T z) . (T L z)`.
fn energy_rate_of(block: &ModalBlock, z: &RVec) -> f64 {
    block.to_energy(z).dot(&block.to_energy(&(&block.l * z)))
}

/// The dissipated power: `c alpha theta^2` for the Timoshenko block,
/// `alpha theta^2` for the wave–heat block.
pub fn dissipation(p: &SystemParams, block: &ModalBlock, z: &RVec) -> f64 {
    let th = z[block.dim() - 1];
    match block.model {
        Model::Timoshenko => p.c * block.alpha * th * th,
        Model::WaveHeat => block.alpha * th * th,
    }
}

pub fn simulate(block: &ModalBlock, state0: &ModalState, times: &[f64]) -> Result<Trajectory> {
    check_state(block, state0)?;
    check_times(times)?;
    let u0 = block.to_energy(&state0.components);
    let energy_coords = times
        .iter()
        .map(|&t| Ok(linalg::expm(&block.m, t)? * &u0))
        .collect::<Result<Vec<RVec>>>()?;
    let states: Vec<RVec> = energy_coords.iter().map(|u| block.from_energy(u)).collect();
    let energy: Vec<f64> = energy_coords.iter().map(|u| 0.5 * u.norm_squared()).collect();
    let energy_rate = states.iter().map(|z| energy_rate_of(block, z)).collect();
    let e0 = energy_of(block, &state0.components);
    if energy.iter().any(|e| *e > e0 * (1.0 + CONTRACTION_TOL) + f64::MIN_POSITIVE) {
        return Err(Error::numerical("simulate", "energy increased along the trajectory"));
    }
    Ok(Trajectory {
        alpha: block.alpha,
        times: times.to_vec(),
        states,
        energy_coords,
        energy,
        energy_rate,
    })
}

/// `max_t |dE/dt + dissipation| / (1 + E(0))` along the trajectory.
pub fn energy_identity_residual(
    p: &SystemParams,
    block: &ModalBlock,
    state0: &ModalState,
    times: &[f64],
) -> Result<f64> {
    let tr = simulate(block, state0, times)?;
    let e0 = energy_of(block, &state0.components);
    Ok(tr
        .states
        .iter()
        .zip(&tr.energy_rate)
        .map(|(z, de)| (de + dissipation(p, block, z)).abs())
        .fold(0.0, f64::max)
        / (1.0 + e0))
}

/// A random unit vector.
pub fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> RVec {
    loop {
        let u = RVec::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let n = u.norm();
        if n > 1e-3 {
            return u / n;
        }
    }
}

/// Quadratic forms of one Timoshenko mode, written on the physical state and
/// stored in energy coordinates (`z^T Q z = u^T Q_u u` with `u = T z`), where
/// their coefficients stay of moderate size at large `alpha`.
#[derive(Debug, Clone)]
struct Forms {
    m: RMat,
    energy: RMat,
    lambda1: RMat,
    lambda2: RMat,
    lambda3: RMat,
    /// `(sqrt(alpha) phi + psi)^2`
    shear: RMat,
    /// `alpha psi^2`
    psi1: RMat,
    /// `alpha theta^2`
    theta1: RMat,
    phi_t: RMat,
    psi_t: RMat,
}

/// Adds `v z_i z_j` to the form.
fn add(q: &mut RMat, i: usize, j: usize, v: f64) {
    if i == j {
        q[(i, i)] += v;
    } else {
        q[(i, j)] += 0.5 * v;
        q[(j, i)] += 0.5 * v;
    }
}

fn square(i: usize, w: f64) -> RMat {
    let mut q = RMat::zeros(5, 5);
    q[(i, i)] = w;
    q
}

impl Forms {
    fn new(p: &SystemParams, block: &ModalBlock) -> Self {
        let alpha = block.alpha;
        let sa = alpha.sqrt();
        let (phi, phi_t, psi, psi_t, theta) = (0, 1, 2, 3, 4);

        let mut lambda1 = RMat::zeros(5, 5);
        add(&mut lambda1, psi_t, psi, 2.0 * p.rho2);
        add(&mut lambda1, phi_t, phi, -2.0 * p.rho1);

        let mut lambda2 = RMat::zeros(5, 5);
        add(&mut lambda2, theta, psi_t, 2.0 * p.rho2 * p.rho3 / (p.delta * sa));

        let mut lambda3 = RMat::zeros(5, 5);
        add(&mut lambda3, psi_t, phi, 2.0 * p.rho2 * sa);
        add(&mut lambda3, psi_t, psi, 2.0 * p.rho2);
        add(&mut lambda3, psi, phi_t, -2.0 * p.rho2 * sa);

        let mut shear = RMat::zeros(5, 5);
        add(&mut shear, phi, phi, alpha);
        add(&mut shear, phi, psi, 2.0 * sa);
        add(&mut shear, psi, psi, 1.0);

        let to_u = |q: RMat| block.t_inv.transpose() * q * &block.t_inv;
        Forms {
            m: block.m.clone(),
            energy: RMat::identity(5, 5) * 0.5,
            lambda1: to_u(lambda1),
            lambda2: to_u(lambda2),
            lambda3: to_u(lambda3),
            shear: to_u(shear),
            psi1: to_u(square(psi, alpha)),
            theta1: to_u(square(theta, alpha)),
            phi_t: to_u(square(phi_t, 1.0)),
            psi_t: to_u(square(psi_t, 1.0)),
        }
    }

    /// Form of the time derivative along `u' = M u`.
    fn rate(&self, q: &RMat) -> RMat {
        q * &self.m + self.m.transpose() * q
    }

    fn lemma1(&self, p: &SystemParams, c1: f64) -> RMat {
        self.rate(&self.lambda1) + &self.phi_t * p.rho1 + &self.psi1 * p.b
            - (&self.psi_t + &self.shear + &self.theta1) * c1
    }

    fn lemma2(&self, p: &SystemParams, c2: f64, nu: f64) -> RMat {
        self.rate(&self.lambda2) + &self.psi_t * p.rho2
            - (&self.psi1 + &self.shear) * nu
            - &self.theta1 * (c2 / nu)
    }

    fn lemma3(&self, p: &SystemParams, c3: f64) -> RMat {
        self.rate(&self.lambda3) + &self.shear * p.a - (&self.psi_t + &self.theta1) * c3
    }

    /// `E + eps M [a / (2 C1) Lambda1 + Lambda3] + sqrt(eps) Lambda2`.
    fn total(&self, p: &SystemParams, k: &LyapunovConstants, eps: f64) -> RMat {
        &self.energy
            + (&self.lambda1 * (p.a / (2.0 * k.c1)) + &self.lambda3) * (eps * k.m_const)
            + &self.lambda2 * eps.sqrt()
    }

    fn combined(&self, p: &SystemParams, k: &LyapunovConstants, eps: f64) -> RMat {
        self.rate(&self.total(p, k, eps)) + &self.energy * (eps * eps)
    }
}

fn value(q: &RMat, z: &RVec) -> f64 {
    z.dot(&(q * z))
}

/// Largest eigenvalue of `D q D` with `D = diag(max(|q_ii|, 1)^-1/2)`. By
/// Sylvester's law of inertia it has the sign of the largest eigenvalue of
/// `q`, while the balancing keeps the eigensolver's absolute error near
/// machine precision when the diagonal grows with `alpha`.
fn worst(q: &RMat) -> Result<f64> {
    let d: Vec<f64> = (0..q.nrows())
        .map(|i| 1.0 / q[(i, i)].abs().max(1.0).sqrt())
        .collect();
    let scaled = RMat::from_fn(q.nrows(), q.ncols(), |i, j| d[i] * q[(i, j)] * d[j]);
    Ok(*linalg::symmetric_eigenvalues(&scaled)?.last().expect("non-empty"))
}

/// Whether `u^T q u` stays below `VALIDATION_TOL |u|^2` beyond the rounding
/// error of its own terms.
fn holds_at(q: &RMat, u: &RVec) -> bool {
    let mut mag = 0.0;
    for i in 0..u.len() {
        for j in 0..u.len() {
            mag += (q[(i, j)] * u[i] * u[j]).abs();
        }
    }
    value(q, u) <= VALIDATION_TOL * u.norm_squared() + 64.0 * f64::EPSILON * mag
}

/// Constants of the three auxiliary estimates and of the combined functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovConstants {
    pub c1: f64,
    pub c2: f64,
    /// Requires equal wave speeds.
    pub c3: Option<f64>,
    /// `1 + max(4 C2 / (a c), 4 C1 C2 / (a b c))`.
    pub m_const: f64,
    pub eps: Option<f64>,
    /// `2 sqrt(eps) C2 / c`.
    pub nu: Option<f64>,
}

fn require_half(p: &SystemParams) -> Result<()> {
    if gamma_is_half(p.gamma) {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "the energy estimates are derived for gamma = 1/2, got {}",
            p.gamma
        )))
    }
}

/// Lemma constants from the Young and Poincaré steps with `alpha >= alpha0`:
///
/// * `C1 = max(2 rho2, 2a + 8a^2/(b alpha0), 2 delta^2/(b alpha0))`
/// * `C2 = 2 rho3/alpha0 + c^2 rho2/delta^2 + b^2 rho3^2/(delta^2 alpha0) + a^2 rho3^2/(delta^2 alpha0^2)`,
///   valid for `nu <= 1`
/// * `C3 = max(2 rho2, delta^2/a)` when `chi = 0`.
pub fn lemma_constants(p: &SystemParams, alpha0: f64) -> Result<LyapunovConstants> {
    p.validate()?;
    require_half(p)?;
    if !(alpha0.is_finite() && alpha0 > 0.0) {
        return Err(Error::param("alpha0", format!("must be > 0, got {alpha0}")));
    }
    let (a, b, c, d) = (p.a, p.b, p.c, p.delta);
    let c1 = (2.0 * p.rho2)
        .max(2.0 * a + 8.0 * a * a / (b * alpha0))
        .max(2.0 * d * d / (b * alpha0));
    let r3 = p.rho3 * p.rho3 / (d * d);
    let c2 = 2.0 * p.rho3 / alpha0 + c * c * p.rho2 / (d * d) + b * b * r3 / alpha0 + a * a * r3 / (alpha0 * alpha0);
    let c3 = chi_is_zero(p).then(|| (2.0 * p.rho2).max(d * d / a));
    Ok(LyapunovConstants {
        c1,
        c2,
        c3,
        m_const: 1.0 + (4.0 * c2 / (a * c)).max(4.0 * c1 * c2 / (a * b * c)),
        eps: None,
        nu: None,
    })
}

/// Violations tolerated when validating constants, relative to `|u|^2 = 2E`.
const VALIDATION_TOL: f64 = 1e-10;
const EPS_FLOOR: f64 = 1e-8;

/// Number of random probe states used by [`lyapunov_constants`].
pub const DEFAULT_PROBES: usize = 1000;

/// Lemma constants plus the largest `eps = 2^-k >= 1e-8` for which the three
/// estimates, the combined inequality `Lambda' + eps^2 E <= 0` and
/// `E/2 <= Lambda <= 2E` hold at every sampled spectral value (checked through
/// the symmetric eigenvalues of each residual form) and on `probes` random
/// states.
pub fn lyapunov_constants(
    p: &SystemParams,
    spectrum: &SpectrumSpec,
    probes: usize,
    seed: u64,
) -> Result<LyapunovConstants> {
    let alphas = spectrum.values()?;
    let base = lemma_constants(p, alphas[0])?;
    let c3 = base.c3.ok_or_else(|| {
        Error::Precondition("the combined functional needs chi = 0".into())
    })?;
    let modes: Vec<(ModalBlock, Forms)> = alphas
        .iter()
        .map(|&a| {
            let b = block_for(Model::Timoshenko, p, a)?;
            let f = Forms::new(p, &b);
            Ok((b, f))
        })
        .collect::<Result<_>>()?;

    // eps-independent estimates
    let lemma_ok = modes
        .par_iter()
        .map(|(_, f)| {
            Ok(worst(&f.lemma1(p, base.c1))? <= VALIDATION_TOL
                && worst(&f.lemma3(p, c3))? <= VALIDATION_TOL)
        })
        .collect::<Result<Vec<bool>>>()?;
    if let Some(i) = lemma_ok.iter().position(|ok| !ok) {
        return Err(Error::numerical(
            "lyapunov_constants",
            format!("lemma constants violated at alpha = {}", alphas[i]),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe_states: Vec<(usize, RVec)> = (0..probes)
        .map(|_| {
            let i = rng.random_range(0..modes.len());
            (i, random_direction(&mut rng, 5))
        })
        .collect();

    let mut eps = 1.0;
    while eps >= EPS_FLOOR {
        let nu = 2.0 * eps.sqrt() * base.c2 / p.c;
        let k = LyapunovConstants {
            eps: Some(eps),
            nu: Some(nu),
            ..base
        };
        if nu <= 1.0 && validates(p, &k, &modes, &probe_states)? {
            return Ok(k);
        }
        eps *= 0.5;
    }
    Err(Error::numerical(
        "lyapunov_constants",
        "no eps in [1e-8, 1] validates the combined functional",
    ))
}

fn validates(
    p: &SystemParams,
    k: &LyapunovConstants,
    modes: &[(ModalBlock, Forms)],
    probes: &[(usize, RVec)],
) -> Result<bool> {
    let eps = k.eps.expect("set by caller");
    let nu = k.nu.expect("set by caller");
    let checks = |f: &Forms| {
        let total = f.total(p, k, eps);
        [
            f.lemma2(p, k.c2, nu),
            f.combined(p, k, eps),
            &f.energy * 0.5 - &total,
            total - &f.energy * 2.0,
        ]
    };
    let spectral_ok = modes
        .par_iter()
        .map(|(_, f)| {
            for q in checks(f) {
                if worst(&q)? > VALIDATION_TOL {
                    return Ok(false);
                }
            }
            Ok(true)
        })
        .collect::<Result<Vec<bool>>>()?;
    if spectral_ok.iter().any(|ok| !ok) {
        return Ok(false);
    }
    Ok(probes.iter().all(|(i, u)| {
        let f = &modes[*i].1;
        let mut forms = checks(f).to_vec();
        forms.push(f.lemma1(p, k.c1));
        forms.push(f.lemma3(p, k.c3.expect("checked")));
        forms.iter().all(|q| holds_at(q, u))
    }))
}

/// Functionals and their exact time derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalSample {
    pub t: f64,
    pub energy: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Combined functional; present when `eps` is known.
    pub total: Option<f64>,
    pub d_energy: f64,
    pub d_lambda1: f64,
    pub d_lambda2: f64,
    pub d_lambda3: f64,
    pub d_total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryProbe {
    pub trajectory: Trajectory,
    pub samples: Vec<FunctionalSample>,
}

/// Largest positive violation of each estimate along a trajectory, in energy
/// units; zero means the estimate holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovResiduals {
    pub lemma1: f64,
    pub lemma2: f64,
    pub lemma3: Option<f64>,
    pub combined: Option<f64>,
    /// Violation of `E/2 <= Lambda <= 2E`.
    pub equivalence: Option<f64>,
}

fn require_timoshenko(block: &ModalBlock) -> Result<()> {
    if block.model == Model::Timoshenko {
        Ok(())
    } else {
        Err(Error::Precondition("energy functionals are defined for the Timoshenko block".into()))
    }
}

pub fn probe_trajectory(
    p: &SystemParams,
    block: &ModalBlock,
    state0: &ModalState,
    times: &[f64],
    consts: &LyapunovConstants,
) -> Result<TrajectoryProbe> {
    require_timoshenko(block)?;
    let tr = simulate(block, state0, times)?;
    let f = Forms::new(p, block);
    let total = consts.eps.map(|eps| f.total(p, consts, eps));
    let rates = [&f.lambda1, &f.lambda2, &f.lambda3].map(|q| f.rate(q));
    let d_total = total.as_ref().map(|q| f.rate(q));
    let samples = tr
        .times
        .iter()
        .zip(&tr.energy_coords)
        .zip(tr.energy.iter().zip(&tr.energy_rate))
        .map(|((&t, z), (&energy, &d_energy))| FunctionalSample {
            t,
            energy,
            lambda1: value(&f.lambda1, z),
            lambda2: value(&f.lambda2, z),
            lambda3: value(&f.lambda3, z),
            total: total.as_ref().map(|q| value(q, z)),
            d_energy,
            d_lambda1: value(&rates[0], z),
            d_lambda2: value(&rates[1], z),
            d_lambda3: value(&rates[2], z),
            d_total: d_total.as_ref().map(|q| value(q, z)),
        })
        .collect();
    Ok(TrajectoryProbe {
        trajectory: tr,
        samples,
    })
}

/// Evaluates the three estimates (`nu` defaults to 1 without `eps`), and with
/// `eps` the combined inequality and the equivalence `E/2 <= Lambda <= 2E`,
/// along the trajectory of `state0`.
pub fn lyapunov_residuals(
    p: &SystemParams,
    block: &ModalBlock,
    state0: &ModalState,
    times: &[f64],
    consts: &LyapunovConstants,
) -> Result<LyapunovResiduals> {
    require_timoshenko(block)?;
    require_half(p)?;
    let tr = simulate(block, state0, times)?;
    let f = Forms::new(p, block);
    let worst_along = |q: &RMat| tr.energy_coords.iter().map(|z| value(q, z)).fold(0.0, f64::max);
    let nu = consts.nu.unwrap_or(1.0);
    let chi0 = chi_is_zero(p);
    let lemma3 = match consts.c3 {
        Some(c3) if chi0 => Some(worst_along(&f.lemma3(p, c3))),
        _ => None,
    };
    let (combined, equivalence) = match consts.eps {
        Some(eps) if chi0 => {
            let total = f.total(p, consts, eps);
            let eq = tr
                .energy_coords
                .iter()
                .zip(&tr.energy)
                .map(|(z, e)| {
                    let v = value(&total, z);
                    (0.5 * e - v).max(v - 2.0 * e)
                })
                .fold(0.0, f64::max);
            (Some(worst_along(&f.combined(p, consts, eps))), Some(eq))
        }
        _ => (None, None),
    };
    Ok(LyapunovResiduals {
        lemma1: worst_along(&f.lemma1(p, consts.c1)),
        lemma2: worst_along(&f.lemma2(p, consts.c2, nu)),
        lemma3,
        combined,
        equivalence,
    })
}

/// `2 Lambda(0) exp(-eps^2 t / 2)`, the energy bound implied by the combined
/// inequality and `Lambda <= 2E`.
pub fn gronwall_envelope(consts: &LyapunovConstants, lambda0: f64, t: f64) -> Result<f64> {
    let eps = consts
        .eps
        .ok_or_else(|| Error::Precondition("envelope needs eps".into()))?;
    Ok(2.0 * lambda0 * (-0.5 * eps * eps * t).exp())
}

/// Initial data for [`decay_rate_fit`].
#[derive(Debug, Clone, PartialEq)]
pub enum StateFamily {
    /// Energy ratio of the worst initial state, `||exp(t M)||^2`.
    WorstCase,
    /// Random unit states in energy coordinates, seeded per mode.
    Random { count: usize, seed: u64 },
    /// Fixed energy-coordinate states applied to every mode.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeDecay {
    pub alpha: f64,
    /// Time horizon after rescaling.
    pub horizon: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    /// Slowest fitted rate over the modes.
    pub kappa: f64,
    /// Smallest `K` with `E(t) <= K E(0) exp(-kappa t)` on every sampled mode and time.
    pub k_const: f64,
    pub per_mode: Vec<ModeDecay>,
}

/// Base slack in the monotonicity check of sampled energies.
const MONOTONE_TOL: f64 = 1e-9;

/// Fits `log E(t) = log E(0) - kappa t` on the second half of each mode's
/// time grid.
///
/// The grid of mode `alpha` is scaled so that it ends at
/// `min(t_last, 350 / |s(alpha)|)`, with `s` the mode's spectral abscissa:
/// beyond that horizon the slowest component has lost more than `e^-700` of
/// its energy and the fit would only see rounding.
pub fn decay_rate_fit(
    model: Model,
    p: &SystemParams,
    spectrum: &SpectrumSpec,
    family: &StateFamily,
    times: &[f64],
) -> Result<DecayFit> {
    check_times(times)?;
    let t_last = *times.last().expect("non-empty");
    if t_last <= 0.0 {
        return Err(Error::Precondition("time grid must extend past 0".into()));
    }
    let alphas = spectrum.values()?;
    let modes: Vec<(ModeDecay, Vec<(f64, f64)>)> = alphas
        .par_iter()
        .enumerate()
        .map(|(idx, &alpha)| mode_decay(model, p, alpha, idx, family, times, t_last))
        .collect::<Result<_>>()?;
    let kappa = modes.iter().map(|m| m.0.kappa).fold(f64::INFINITY, f64::min);
    let mut k_const: f64 = 1.0;
    for (_, ratios) in &modes {
        for &(t, r) in ratios {
            k_const = k_const.max(r * (kappa * t).exp());
        }
    }
    Ok(DecayFit {
        kappa,
        k_const,
        per_mode: modes.into_iter().map(|m| m.0).collect(),
    })
}

/// Fitted rate of one mode and its `(t, E(t)/E(0))` samples (worst over the family).
fn mode_decay(
    model: Model,
    p: &SystemParams,
    alpha: f64,
    idx: usize,
    family: &StateFamily,
    times: &[f64],
    t_last: f64,
) -> Result<(ModeDecay, Vec<(f64, f64)>)> {
    let block = block_for(model, p, alpha)?;
    let s = linalg::spectral_abscissa(&block.m)?;
    let horizon = if s < 0.0 { t_last.min(350.0 / -s) } else { t_last };
    let scale = horizon / t_last;
    let ts: Vec<f64> = times.iter().map(|t| t * scale).collect();
    let props = ts
        .iter()
        .map(|&t| linalg::expm(&block.m, t))
        .collect::<Result<Vec<RMat>>>()?;

    let curves: Vec<Vec<f64>> = match family {
        StateFamily::WorstCase => vec![props
            .iter()
            .map(|e| linalg::operator_norm(e).map(|n| n * n))
            .collect::<Result<_>>()?],
        StateFamily::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(idx as u64));
            (0..*count)
                .map(|_| {
                    let u = random_direction(&mut rng, block.dim());
                    props.iter().map(|e| (e * &u).norm_squared()).collect()
                })
                .collect()
        }
        StateFamily::Explicit(states) => states
            .iter()
            .map(|v| {
                if v.len() != block.dim() {
                    return Err(Error::Precondition(format!(
                        "explicit state has {} components, block expects {}",
                        v.len(),
                        block.dim()
                    )));
                }
                let u = RVec::from_column_slice(v);
                let e0 = u.norm_squared();
                if e0 == 0.0 {
                    return Err(Error::Precondition("explicit state has zero energy".into()));
                }
                Ok(props.iter().map(|e| (e * &u).norm_squared() / e0).collect())
            })
            .collect::<Result<_>>()?,
    };
    if curves.is_empty() {
        return Err(Error::Precondition("empty state family".into()));
    }

    // Propagators carry relative error of order eps * ||M|| * t.
    let slack = MONOTONE_TOL + 8.0 * f64::EPSILON * linalg::operator_norm(&block.m)? * horizon;
    let tail: Vec<usize> = (0..ts.len()).filter(|&k| ts[k] >= 0.5 * horizon).collect();
    let mut kappa = f64::INFINITY;
    for ratios in &curves {
        if ratios
            .windows(2)
            .any(|w| w[1] > w[0] * (1.0 + slack) + f64::MIN_POSITIVE)
        {
            return Err(Error::FitFailure(format!(
                "energy not monotone at alpha = {alpha}"
            )));
        }
        let pts: Vec<(f64, f64)> = tail
            .iter()
            .filter(|&&k| ratios[k] > 0.0)
            .map(|&k| (ts[k], ratios[k].ln()))
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        kappa = kappa.min(-linear_fit(&x, &y)?.slope);
    }
    let worst: Vec<(f64, f64)> = (0..ts.len())
        .map(|k| (ts[k], curves.iter().map(|c| c[k]).fold(0.0, f64::max)))
        .collect();
    Ok((ModeDecay { alpha, horizon, kappa }, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::{timoshenko_block, waveheat_block};
    use crate::params::log_space;

    fn unit(g: f64) -> SystemParams {
        SystemParams::unit(g).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, block: &ModalBlock) -> ModalState {
        let u = random_direction(rng, block.dim());
        ModalState {
            alpha: block.alpha,
            components: block.from_energy(&u),
        }
    }

    fn rel(a: &RVec, b: &RVec) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn evolve_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for alpha in [0.5, 10.0, 1e4] {
            let b = timoshenko_block(&SystemParams::new(1.3, 0.7, 2.0, 1.1, 0.4, 0.9, 1.7, 0.8).unwrap(), alpha).unwrap();
            let z0 = random_state(&mut rng, &b);
            let same = evolve(&b, &z0, 0.0).unwrap();
            assert!(rel(&same.components, &z0.components) < 1e-12);
            let (s, t) = (0.3, 1.1);
            let two = evolve(&b, &evolve(&b, &z0, s).unwrap(), t).unwrap();
            let one = evolve(&b, &z0, s + t).unwrap();
            assert!(rel(&two.components, &one.components) < 1e-9);
        }
        assert!(evolve(&timoshenko_block(&unit(0.5), 1.0).unwrap(), &ModalState::new(2.0, vec![0.0; 5]), 1.0).is_err());
    }

    #[test]
    fn decoupled_energy_is_conserved() {
        let p = unit(0.5).with_delta(1e-12).unwrap();
        let b = timoshenko_block(&p, 3.0).unwrap();
        let z0 = ModalState::new(3.0, vec![0.3, -1.0, 0.7, 0.2, 0.0]);
        let tr = simulate(&b, &z0, &log_space(0.1, 100.0, 20)).unwrap();
        let e0 = energy_of(&b, &z0.components);
        for e in tr.energy {
            assert!((e - e0).abs() <= 1e-9 * e0);
        }
        assert!(energy_identity_residual(&p, &b, &z0, &[0.0, 1.0, 5.0]).unwrap() <= 1e-11);
    }

    #[test]
    fn energy_identity_and_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let times = log_space(1e-3, 50.0, 12);
        for k in 0..100 {
            let g = rng.random_range(-0.5..1.5);
            let p = SystemParams::new(
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.1..2.0),
                g,
            )
            .unwrap();
            let alpha = 10f64.powf(rng.random_range(-1.0..4.0));
            let b = if k % 4 == 0 { waveheat_block(g, alpha).unwrap() } else { timoshenko_block(&p, alpha).unwrap() };
            let z0 = random_state(&mut rng, &b);
            assert!(energy_identity_residual(&p, &b, &z0, &times).unwrap() <= 1e-9);
            let tr = simulate(&b, &z0, &times).unwrap();
            assert!(tr.energy.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn residual_is_scale_invariant() {
        let p = SystemParams::new(1.3, 0.7, 2.0, 1.1, 0.4, 0.9, 1.7, 0.8).unwrap();
        let b = timoshenko_block(&p, 20.0).unwrap();
        let z = ModalState::new(20.0, vec![0.1, 0.5, -0.2, 0.3, 0.4]);
        let z2 = ModalState::new(20.0, (z.components.clone() * 2.0).as_slice().to_vec());
        let times = [0.0, 0.5, 2.0];
        let (e, e2) = (energy_of(&b, &z.components), energy_of(&b, &z2.components));
        let r = energy_identity_residual(&p, &b, &z, &times).unwrap() * (1.0 + e) / e;
        let r2 = energy_identity_residual(&p, &b, &z2, &times).unwrap() * (1.0 + e2) / e2;
        assert!((r - r2).abs() <= 1e-15 + 1e-6 * r.abs());
    }

    #[test]
    fn exact_energy_rate_matches_richardson() {
        let p = SystemParams::new(1.3, 0.7, 2.0, 1.1, 0.4, 0.9, 1.7, 0.8).unwrap();
        let b = timoshenko_block(&p, 5.0).unwrap();
        let z0 = ModalState::new(5.0, vec![0.1, 0.5, -0.2, 0.3, 0.4]);
        let t = 0.7;
        let e = |t: f64| energy_of(&b, &evolve(&b, &z0, t).unwrap().components);
        let exact = energy_rate_of(&b, &evolve(&b, &z0, t).unwrap().components);
        let fd = |h: f64| (e(t + h) - e(t - h)) / (2.0 * h);
        let (e1, e2) = ((fd(1e-2) - exact).abs(), (fd(5e-3) - exact).abs());
        // Central differences converge at second order.
        assert!(e1 > 0.0 && (e1 / e2 - 4.0).abs() < 0.2, "{e1} {e2}");
    }

    #[test]
    fn functional_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = lemma_constants(&unit(0.5), 1.0).unwrap();
        for _ in 0..50 {
            let p = SystemParams::with_chi(
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.1..2.0),
                0.5,
                0.0,
            )
            .unwrap();
            let alpha = 10f64.powf(rng.random_range(0.0..4.0));
            let b = timoshenko_block(&p, alpha).unwrap();
            let z0 = random_state(&mut rng, &b);
            let s = probe_trajectory(&p, &b, &z0, &[0.0], &k).unwrap().samples[0];
            let z = &z0.components;
            let (phi, phit, psi, psit, th) = (z[0], z[1], z[2], z[3], z[4]);
            let sa = alpha.sqrt();
            let sh = sa * phi + psi;
            let scale = 1.0 + alpha * z.norm_squared();
            let id1 = s.d_lambda1 + 2.0 * p.rho1 * phit * phit + 2.0 * p.b * alpha * psi * psi
                - (2.0 * p.rho2 * psit * psit + 2.0 * p.a * sh * sh + 2.0 * p.delta * sa * th * psi
                    - 4.0 * p.a * sh * psi);
            assert!(id1.abs() < 1e-10 * scale, "{id1}");
            let id2 = s.d_lambda2 + 2.0 * p.rho2 * psit * psit
                - (2.0 * p.rho3 * th * th
                    - 2.0 * p.c * p.rho2 / p.delta * sa * th * psit
                    - 2.0 * p.b * p.rho3 / p.delta * sa * th * psi
                    - 2.0 * p.a * p.rho3 / p.delta / sa * th * sh);
            assert!(id2.abs() < 1e-10 * scale, "{id2}");
            let id3 = s.d_lambda3 + 2.0 * p.a * sh * sh
                - (2.0 * p.rho2 * psit * psit + 2.0 * p.delta * sa * th * sh);
            assert!(id3.abs() < 1e-10 * scale, "{id3}");
        }
    }

    #[test]
    fn lemma_constant_examples() {
        let k = lemma_constants(&unit(0.5), 1.0).unwrap();
        assert_eq!((k.c1, k.c2, k.c3), (10.0, 5.0, Some(2.0)));
        assert_eq!(k.m_const, 201.0);
        let p = SystemParams::new(1.3, 0.7, 2.0, 1.1, 0.4, 0.9, 1.7, 0.5).unwrap();
        let k = lemma_constants(&p, 3.0).unwrap();
        let m = 1.0 + (4.0 * k.c2 / (p.a * p.c)).max(4.0 * k.c1 * k.c2 / (p.a * p.b * p.c));
        assert_eq!(k.m_const, m);
        assert!(k.c3.is_none());
        for p in [unit(0.5), p] {
            let hi = lemma_constants(&p, 10.0).unwrap();
            let lo = lemma_constants(&p, 0.1).unwrap();
            assert!(lo.c1 >= hi.c1 && lo.c2 >= hi.c2);
            assert!(lo.c3.unwrap_or(0.0) >= hi.c3.unwrap_or(0.0));
        }
        assert!(lemma_constants(&unit(0.75), 1.0).is_err());
    }

    #[test]
    fn lyapunov_constants_validate_on_trajectories() {
        let p = unit(0.5);
        let spec = SpectrumSpec::LogGrid {
            alpha_min: 1.0,
            alpha_max: 1e8,
            count: 81,
        };
        let k = lyapunov_constants(&p, &spec, DEFAULT_PROBES, 7).map_err(|e| e.to_string()).unwrap();
        let eps = k.eps.unwrap();
        assert!((k.nu.unwrap() - 2.0 * eps.sqrt() * k.c2 / p.c).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let times: Vec<f64> = (0..=50).map(|i| i as f64).collect();
        for alpha in [1.0, 7.3, 1e3, 1e6] {
            let b = timoshenko_block(&p, alpha).unwrap();
            let z0 = random_state(&mut rng, &b);
            let e0 = energy_of(&b, &z0.components);
            let r = lyapunov_residuals(&p, &b, &z0, &times, &k).unwrap();
            for v in [r.lemma1, r.lemma2, r.lemma3.unwrap(), r.combined.unwrap(), r.equivalence.unwrap()] {
                assert!(v <= 1e-8 * e0, "alpha {alpha}: {r:?}");
            }
            let probe = probe_trajectory(&p, &b, &z0, &times, &k).unwrap();
            let l0 = probe.samples[0].total.unwrap();
            for s in &probe.samples {
                assert!(s.energy <= gronwall_envelope(&k, l0, s.t).unwrap() * (1.0 + 1e-12));
            }
        }
        assert!(lyapunov_constants(&SystemParams::with_chi(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5).unwrap(), &spec, 10, 0).is_err());
    }

    #[test]
    fn zero_state_has_zero_functionals() {
        let p = unit(0.5);
        let b = timoshenko_block(&p, 2.0).unwrap();
        let k = LyapunovConstants {
            eps: Some(1e-4),
            nu: Some(0.1),
            ..lemma_constants(&p, 1.0).unwrap()
        };
        let z0 = ModalState::new(2.0, vec![0.0; 5]);
        let r = lyapunov_residuals(&p, &b, &z0, &[0.0, 1.0], &k).unwrap();
        assert_eq!(r.lemma1, 0.0);
        assert_eq!(r.combined, Some(0.0));
        let s = probe_trajectory(&p, &b, &z0, &[0.0], &k).unwrap().samples[0];
        assert_eq!((s.lambda1, s.lambda2, s.lambda3, s.total), (0.0, 0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn single_mode_rate_is_twice_the_abscissa() {
        let times: Vec<f64> = (0..=200).map(|i| i as f64).collect();
        for (p, alpha) in [(unit(0.5), 1.0), (unit(0.75), 4.0), (SystemParams::new(1.3, 0.7, 2.0, 1.1, 0.4, 0.9, 1.7, 0.5).unwrap(), 2.0)] {
            let s = linalg::spectral_abscissa(&timoshenko_block(&p, alpha).unwrap().m).unwrap();
            let spec = SpectrumSpec::ExplicitList(vec![alpha]);
            for family in [StateFamily::WorstCase, StateFamily::Random { count: 3, seed: 5 }] {
                let fit = decay_rate_fit(Model::Timoshenko, &p, &spec, &family, &times).unwrap();
                assert!((fit.kappa / (-2.0 * s) - 1.0).abs() < 0.05, "{} vs {}", fit.kappa, -2.0 * s);
                assert!(fit.k_const >= 1.0);
            }
        }
    }

    #[test]
    fn decay_rate_at_exponential_corner_exceeds_gronwall_rate() {
        let p = unit(0.5);
        let spec = SpectrumSpec::Dirichlet {
            ell: std::f64::consts::PI,
            n_max: 50,
        };
        let times: Vec<f64> = (0..=100).map(|i| 2.0 * i as f64).collect();
        let fit = decay_rate_fit(Model::Timoshenko, &p, &spec, &StateFamily::WorstCase, &times).unwrap();
        let k = lyapunov_constants(&p, &spec, 200, 1).unwrap();
        let eps = k.eps.unwrap();
        assert!(fit.kappa > 0.0 && fit.kappa >= 0.5 * eps * eps);
    }

    #[test]
    fn no_uniform_rate_at_gamma_one() {
        let times: Vec<f64> = (0..=100).map(|i| 10.0 * i as f64).collect();
        let spec = SpectrumSpec::Geometric {
            alpha0: 10.0,
            ratio: 10.0,
            count: 4,
        };
        let fit = decay_rate_fit(Model::Timoshenko, &unit(1.0), &spec, &StateFamily::WorstCase, &times).unwrap();
        let k: Vec<f64> = fit.per_mode.iter().map(|m| m.kappa).collect();
        assert!(k.windows(2).all(|w| w[1] < w[0]), "{k:?}");
        assert!(k[3] < 0.1 * k[0]);
    }
}
