//! Per-spectral-point reduction of the evolution operator.
//!
//! Replacing the leading operator by a scalar spectral value `alpha` turns the
//! system into a finite linear ODE `z' = L_alpha z` with state
//! `(phi, phi_t, psi, psi_t, theta)`. The energy transform `T` maps that state
//! to coordinates in which the phase-space norm is Euclidean, so that
//! `M_alpha = T L_alpha T^-1` is skew-symmetric apart from a single negative
//! diagonal entry carrying the thermal dissipation.

use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec};
use crate::params::SystemParams;

/// Which coupled system a block was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    /// Five-component thermoelastic Timoshenko system.
    Timoshenko,
    /// Three-component wave equation coupled with the heat equation, unit coefficients.
    WaveHeat,
}

impl Model {
    pub fn dim(self) -> usize {
        match self {
            Model::Timoshenko => 5,
            Model::WaveHeat => 3,
        }
    }
}

/// Finite matrices attached to one spectral value.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalBlock {
    pub model: Model,
    pub alpha: f64,
    /// Generator in physical coordinates.
    pub l: RMat,
    /// Generator in energy coordinates.
    pub m: RMat,
    /// Energy transform with `m = t l t^-1`.
    pub t: RMat,
    /// Inverse of `t`, assembled in closed form.
    pub t_inv: RMat,
    /// Rate of the single dissipative entry: `m + m^T = diag(0, .., -2 * damping)`.
    pub damping: f64,
}

impl ModalBlock {
    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn to_energy(&self, z: &RVec) -> RVec {
        &self.t * z
    }

    pub fn from_energy(&self, u: &RVec) -> RVec {
        &self.t_inv * u
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("must be finite and > 0, got {alpha}")))
    }
}

/// `alpha^gamma`, the modal value of the coupling operator.
fn coupling(p: &SystemParams, alpha: f64) -> f64 {
    p.delta * alpha.powf(p.gamma)
}

/// Energy transform for the Timoshenko block:
/// `(phi, phi_t, psi, psi_t, theta) -> (sqrt(a)(sqrt(alpha) phi + psi), sqrt(b alpha) psi,
/// sqrt(rho1) phi_t, sqrt(rho2) psi_t, sqrt(rho3) theta)`.
pub fn energy_transform(p: &SystemParams, alpha: f64) -> Result<RMat> {
    p.validate()?;
    check_alpha(alpha)?;
    let sa = alpha.sqrt();
    let mut t = RMat::zeros(5, 5);
    t[(0, 0)] = p.a.sqrt() * sa;
    t[(0, 2)] = p.a.sqrt();
    t[(1, 2)] = (p.b * alpha).sqrt();
    t[(2, 1)] = p.rho1.sqrt();
    t[(3, 3)] = p.rho2.sqrt();
    t[(4, 4)] = p.rho3.sqrt();
    Ok(t)
}

fn energy_transform_inverse(p: &SystemParams, alpha: f64) -> RMat {
    let sa = alpha.sqrt();
    let sb = (p.b * alpha).sqrt();
    let mut ti = RMat::zeros(5, 5);
    // phi = (u1 / sqrt(a) - u2 / sqrt(b alpha)) / sqrt(alpha)
    ti[(0, 0)] = 1.0 / (p.a.sqrt() * sa);
    ti[(0, 1)] = -1.0 / (sb * sa);
    ti[(1, 2)] = 1.0 / p.rho1.sqrt();
    ti[(2, 1)] = 1.0 / sb;
    ti[(3, 3)] = 1.0 / p.rho2.sqrt();
    ti[(4, 4)] = 1.0 / p.rho3.sqrt();
    ti
}

/// Generator of the Timoshenko block in physical coordinates.
pub fn timoshenko_generator(p: &SystemParams, alpha: f64) -> Result<RMat> {
    p.validate()?;
    check_alpha(alpha)?;
    let sa = alpha.sqrt();
    let k = coupling(p, alpha);
    let mut l = RMat::zeros(5, 5);
    l[(0, 1)] = 1.0;
    l[(1, 0)] = -p.a * alpha / p.rho1;
    l[(1, 2)] = -p.a * sa / p.rho1;
    l[(2, 3)] = 1.0;
    l[(3, 0)] = -p.a * sa / p.rho2;
    l[(3, 2)] = -(p.b * alpha + p.a) / p.rho2;
    l[(3, 4)] = k / p.rho2;
    l[(4, 3)] = -k / p.rho3;
    l[(4, 4)] = -p.c * alpha / p.rho3;
    Ok(l)
}

/// Generator of the Timoshenko block in energy coordinates, assembled entrywise.
fn timoshenko_energy_generator(p: &SystemParams, alpha: f64) -> RMat {
    let w1 = (p.a * alpha / p.rho1).sqrt();
    let w2 = (p.b * alpha / p.rho2).sqrt();
    let w3 = (p.a / p.rho2).sqrt();
    let k = coupling(p, alpha) / (p.rho2 * p.rho3).sqrt();
    let mut m = RMat::zeros(5, 5);
    m[(0, 2)] = w1;
    m[(2, 0)] = -w1;
    m[(0, 3)] = w3;
    m[(3, 0)] = -w3;
    m[(1, 3)] = w2;
    m[(3, 1)] = -w2;
    m[(3, 4)] = k;
    m[(4, 3)] = -k;
    m[(4, 4)] = -p.c * alpha / p.rho3;
    m
}

/// Builds the Timoshenko block at spectral value `alpha`.
pub fn timoshenko_block(p: &SystemParams, alpha: f64) -> Result<ModalBlock> {
    let l = timoshenko_generator(p, alpha)?;
    Ok(ModalBlock {
        model: Model::Timoshenko,
        alpha,
        l,
        m: timoshenko_energy_generator(p, alpha),
        t: energy_transform(p, alpha)?,
        t_inv: energy_transform_inverse(p, alpha),
        damping: p.c * alpha / p.rho3,
    })
}

/// Builds the wave–heat block `u'' + alpha u - alpha^gamma theta = 0`,
/// `theta' + alpha theta + alpha^gamma u' = 0` in state `(u, u_t, theta)`.
pub fn waveheat_block(gamma: f64, alpha: f64) -> Result<ModalBlock> {
    check_alpha(alpha)?;
    if !gamma.is_finite() || gamma.abs() > crate::params::GAMMA_LIMIT {
        return Err(Error::param("gamma", format!("must satisfy |gamma| <= 4, got {gamma}")));
    }
    let sa = alpha.sqrt();
    let k = alpha.powf(gamma);
    let l = RMat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -alpha, 0.0, k, 0.0, -k, -alpha]);
    let m = RMat::from_row_slice(3, 3, &[0.0, sa, 0.0, -sa, 0.0, k, 0.0, -k, -alpha]);
    let t = RMat::from_diagonal(&RVec::from_vec(vec![sa, 1.0, 1.0]));
    let t_inv = RMat::from_diagonal(&RVec::from_vec(vec![1.0 / sa, 1.0, 1.0]));
    Ok(ModalBlock {
        model: Model::WaveHeat,
        alpha,
        l,
        m,
        t,
        t_inv,
        damping: alpha,
    })
}

/// A state of one mode in physical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    pub alpha: f64,
    pub components: RVec,
}

impl ModalState {
    pub fn new(alpha: f64, components: Vec<f64>) -> Self {
        ModalState {
            alpha,
            components: RVec::from_vec(components),
        }
    }
}

/// Modal energy `1/2 [a (sqrt(alpha) phi + psi)^2 + b alpha psi^2 + rho1 phi_t^2 +
/// rho2 psi_t^2 + rho3 theta^2]`.
pub fn energy(p: &SystemParams, alpha: f64, z: &RVec) -> f64 {
    let s = alpha.sqrt() * z[0] + z[2];
    0.5 * (p.a * s * s
        + p.b * alpha * z[2] * z[2]
        + p.rho1 * z[1] * z[1]
        + p.rho2 * z[3] * z[3]
        + p.rho3 * z[4] * z[4])
}

/// Energy of a block state computed through the energy transform.
pub fn block_energy(block: &ModalBlock, z: &RVec) -> f64 {
    0.5 * block.to_energy(z).norm_squared()
}

/// Closed-form solution of `L_alpha z = f` for the Timoshenko block.
///
/// The formula is valid for every `gamma` on a single mode; for `gamma > 1`
/// its growth in `alpha` is what makes the operator-level inverse unbounded.
pub fn explicit_inverse_apply(p: &SystemParams, alpha: f64, f: &RVec) -> Result<RVec> {
    p.validate()?;
    check_alpha(alpha)?;
    if f.len() != 5 {
        return Err(Error::param("f", format!("expected 5 components, got {}", f.len())));
    }
    let (f1, f2, f3, f4, f5) = (f[0], f[1], f[2], f[3], f[4]);
    let g = p.gamma;
    let (bc, d) = (p.b * p.c, p.delta);
    let pw = |e: f64| alpha.powf(e);
    let phi = -(p.rho1 / (p.a * p.b)) * (p.b + p.a / alpha) / alpha * f2
        + d * d / bc * pw(2.0 * g - 2.5) * f3
        + p.rho2 / p.b * pw(-1.5) * f4
        + p.rho3 * d / bc * pw(g - 2.5) * f5;
    let psi = p.rho1 / p.b * pw(-1.5) * f2
        - d * d / bc * pw(2.0 * g - 2.0) * f3
        - p.rho2 / p.b / alpha * f4
        - p.rho3 * d / bc * pw(g - 2.0) * f5;
    let theta = -d / p.c * pw(g - 1.0) * f3 - p.rho3 / p.c / alpha * f5;
    Ok(RVec::from_vec(vec![phi, f1, psi, f3, theta]))
}

/// `M_alpha^-1` in energy coordinates, assembled column by column from the
/// closed-form inverse.
pub fn energy_inverse(p: &SystemParams, alpha: f64) -> Result<RMat> {
    let t = energy_transform(p, alpha)?;
    let ti = energy_transform_inverse(p, alpha);
    let mut linv = RMat::zeros(5, 5);
    for j in 0..5 {
        let mut e = RVec::zeros(5);
        e[j] = 1.0;
        linv.set_column(j, &explicit_inverse_apply(p, alpha, &e)?);
    }
    Ok(&t * linv * ti)
}

/// Closed-form `M_alpha^-1` for the wave–heat block in energy coordinates.
pub fn waveheat_energy_inverse(gamma: f64, alpha: f64) -> Result<RMat> {
    let block = waveheat_block(gamma, alpha)?;
    // u_t = f1, theta = -alpha^(g-1) f1 - f3 / alpha, u = (alpha^g theta - f2) / alpha
    let k = alpha.powf(gamma);
    let mut linv = RMat::zeros(3, 3);
    linv[(0, 0)] = -k * k / (alpha * alpha);
    linv[(0, 1)] = -1.0 / alpha;
    linv[(0, 2)] = -k / (alpha * alpha);
    linv[(1, 0)] = 1.0;
    linv[(2, 0)] = -k / alpha;
    linv[(2, 2)] = -1.0 / alpha;
    Ok(&block.t * linv * &block.t_inv)
}

/// Inverse of the energy-coordinate generator for either model.
pub fn block_energy_inverse(p: &SystemParams, block: &ModalBlock) -> Result<RMat> {
    match block.model {
        Model::Timoshenko => energy_inverse(p, block.alpha),
        Model::WaveHeat => waveheat_energy_inverse(p.gamma, block.alpha),
    }
}

/// Builds the block of `model` at `alpha`; the wave–heat model only reads `gamma`.
pub fn block_for(model: Model, p: &SystemParams, alpha: f64) -> Result<ModalBlock> {
    match model {
        Model::Timoshenko => timoshenko_block(p, alpha),
        Model::WaveHeat => waveheat_block(p.gamma, alpha),
    }
}

/// Rational functions from the solvability analysis of `z - L z = f`,
/// evaluated at a spectral value `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventPolynomials {
    pub w: f64,
    pub v: f64,
    pub p: [f64; 5],
    pub q: [f64; 4],
    pub r: [f64; 4],
}

pub fn resolvent_polynomials(prm: &SystemParams, t: f64) -> Result<ResolventPolynomials> {
    prm.validate()?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::param("t", format!("must be finite and > 0, got {t}")));
    }
    let SystemParams {
        rho1,
        rho2,
        rho3,
        a,
        b,
        c,
        delta,
        gamma,
    } = *prm;
    let d2 = delta * delta;
    let t2g = t.powf(2.0 * gamma);
    let st = t.sqrt();
    let (e1, e2, e3) = (rho1 + a * t, rho2 + b * t, rho3 + c * t);

    let w = rho2 + a + b * t - a * a * t / e1 + d2 * t2g / e3;
    let v = e1 * e2 * e3 + a * rho1 * e3 + d2 * t2g * e1;
    let p = [
        rho1 * (e2 * e3 + a * e3 + d2 * t2g),
        rho1 * ((rho2 + a + b * t) * e3 + d2 * t2g),
        -a * st * (rho2 * e3 + d2 * t2g),
        -a * st * rho2 * e3,
        -rho3 * delta * a * t.powf(gamma + 0.5),
    ];
    let q = [
        rho1 * a * (d2 * t.powf(2.0 * gamma - 0.5) + b * st * e3),
        rho1 * a * d2 * t.powf(2.0 * gamma - 1.0) - b * rho2 * e1 * e3,
        -rho2 * e1 * (d2 * t.powf(2.0 * gamma - 1.0) + b * e3),
        rho3 * delta * t.powf(gamma - 1.0) * (a * rho1 + rho2 * e1),
    ];
    let r = [
        -rho1 * rho3 * a * delta * t.powf(gamma - 0.5),
        -rho3 * delta * t.powf(gamma - 1.0) * (rho1 * a + rho1 * b * t + a * b * t * t),
        rho2 * rho3 * delta * t.powf(gamma - 1.0) * e1,
        c * rho3 * (a * rho1 + e1 * e2) + rho3 * d2 * t.powf(2.0 * gamma - 1.0) * e1,
    ];
    Ok(ResolventPolynomials { w, v, p, q, r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenvalues, solve_real};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng) -> SystemParams {
        let mut r = || rng.random_range(0.2..5.0);
        let (rho1, rho2, rho3, a, b, c, delta) = (r(), r(), r(), r(), r(), r(), r());
        let gamma = rng.random_range(-1.0..1.0);
        SystemParams::new(rho1, rho2, rho3, a, b, c, delta, gamma).unwrap()
    }

    #[test]
    fn unit_block_matches_hand_substitution() {
        let p = SystemParams::unit(0.5).unwrap();
        let b = timoshenko_block(&p, 1.0).unwrap();
        let expected = RMat::from_row_slice(
            5,
            5,
            &[
                0.0, 1.0, 0.0, 0.0, 0.0, //
                -1.0, 0.0, -1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, 0.0, //
                -1.0, 0.0, -2.0, 0.0, 1.0, //
                0.0, 0.0, 0.0, -1.0, -1.0,
            ],
        );
        assert_eq!(b.l, expected);
    }

    #[test]
    fn trace_is_thermal_rate() {
        let p = SystemParams::new(1.0, 1.0, 4.0, 1.0, 1.0, 2.0, 1.0, 0.3).unwrap();
        let b = timoshenko_block(&p, 3.0).unwrap();
        assert_eq!(b.l.trace(), -1.5);
        assert_eq!(b.m.trace(), -1.5);
    }

    #[test]
    fn decoupled_limit_spectrum() {
        let p = SystemParams::new(1.0, 2.0, 1.5, 3.0, 1.0, 2.0, 1e-12, 0.5).unwrap();
        let alpha = 2.0;
        let b = timoshenko_block(&p, alpha).unwrap();
        let ev = eigenvalues(&b.l).unwrap();
        let heat = -p.c * alpha / p.rho3;
        let (on_heat, imag): (Vec<_>, Vec<_>) =
            ev.iter().partition::<Vec<&num_complex::Complex64>, _>(|z| (z.re - heat).abs() < 1e-9 && z.im.abs() < 1e-9);
        assert_eq!(on_heat.len(), 1);
        assert_eq!(imag.len(), 4);
        for z in imag {
            assert!(z.re.abs() < 1e-9 && z.im.abs() > 0.1);
        }
    }

    #[test]
    fn waveheat_examples() {
        let b = waveheat_block(0.0, 1.0).unwrap();
        assert_eq!(
            b.l,
            RMat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, -1.0])
        );
        for gamma in [-1.0, 0.0, 0.5, 1.3] {
            let b = waveheat_block(gamma, 7.0).unwrap();
            assert!((b.l.trace() + 7.0).abs() < 1e-12);
            let sym = &b.m + b.m.transpose();
            let target = RMat::from_diagonal(&RVec::from_vec(vec![0.0, 0.0, -14.0]));
            assert!((sym - target).amax() < 1e-12);
            let back = &b.t * &b.l * &b.t_inv;
            assert!((back - &b.m).amax() <= 1e-12 * b.m.amax());
        }
        assert!(waveheat_block(0.5, 0.0).is_err());
    }

    #[test]
    fn energy_transform_examples() {
        let p = SystemParams::unit(0.5).unwrap();
        let t = energy_transform(&p, 1.0).unwrap();
        let z = RVec::from_vec(vec![0.3, -1.0, 0.7, 2.0, -0.4]);
        let u = &t * &z;
        let expected = RVec::from_vec(vec![1.0, 0.7, -1.0, 2.0, -0.4]);
        assert!((u - expected).amax() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let p = random_params(&mut rng);
            let alpha = 10f64.powf(rng.random_range(0.0..8.0));
            let t = energy_transform(&p, alpha).unwrap();
            let z = RVec::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let e = energy(&p, alpha, &z);
            assert!(((&t * &z).norm_squared() - 2.0 * e).abs() <= 1e-12 * 2.0 * e);
            let det = (p.a * p.b * alpha * p.rho1 * p.rho2 * p.rho3 * alpha).sqrt();
            assert!((t.determinant().abs() - det).abs() <= 1e-10 * det);
        }
        assert!(energy_transform(&p, -1.0).is_err());
    }

    #[test]
    fn explicit_inverse_round_trip_and_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let p = random_params(&mut rng);
            let alpha = 10f64.powf(rng.random_range(0.0..4.0));
            let l = timoshenko_generator(&p, alpha).unwrap();
            let z0 = RVec::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let f = &l * &z0;
            let z = explicit_inverse_apply(&p, alpha, &f).unwrap();
            assert!((&z - &z0).norm() <= 1e-10 * z0.norm());

            let f = RVec::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let z = explicit_inverse_apply(&p, alpha, &f).unwrap();
            let dense = solve_real(&l, &f).unwrap();
            assert!((&z - &dense).norm() <= 1e-10 * z.norm());
        }
    }

    #[test]
    fn resolvent_polynomial_examples() {
        let p = SystemParams::unit(0.5).unwrap();
        let r = resolvent_polynomials(&p, 1.0).unwrap();
        assert!((r.w - 3.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let p = random_params(&mut rng);
            for t in crate::params::log_space(1e-3, 1e9, 200) {
                let r = resolvent_polynomials(&p, t).unwrap();
                assert!(r.w >= p.rho2 * (1.0 - 1e-12), "w = {} < rho2 = {}", r.w, p.rho2);
                assert!(r.v > 0.0);
            }
        }
    }

    #[test]
    fn resolvent_polynomials_match_resolvent_solution() {
        // Oracle: dense solve of (1 - L_t) z = f; compare phi against the p_i / v
        // representation and the two regularity combinations against q_i, r_i.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let p = random_params(&mut rng);
            let t = 10f64.powf(rng.random_range(-1.0..3.0));
            let l = timoshenko_generator(&p, t).unwrap();
            let f = RVec::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let id_minus_l = RMat::identity(5, 5) - &l;
            let z = solve_real(&id_minus_l, &f).unwrap();
            let r = resolvent_polynomials(&p, t).unwrap();
            let phi: f64 = (0..5).map(|i| r.p[i] / r.v * f[i]).sum();
            assert!((phi - z[0]).abs() <= 1e-9 * (1.0 + z.amax()));
            let g = p.gamma;
            let comb1 = p.delta * t.powf(g - 1.0) * z[4] - p.b * z[2];
            let q = (r.q[0] * (f[0] + f[1]) + r.q[1] * f[2] + r.q[2] * f[3] + r.q[3] * f[4]) / r.v;
            let comb2 = p.c * z[4] + p.delta * t.powf(g - 1.0) * z[3];
            let rr = (r.r[0] * (f[0] + f[1]) + r.r[1] * f[2] + r.r[2] * f[3] + r.r[3] * f[4]) / r.v;
            assert!((comb1 - q).abs() <= 1e-9 * (1.0 + comb1.abs()));
            assert!((comb2 - rr).abs() <= 1e-9 * (1.0 + comb2.abs()));
        }
    }

    #[test]
    fn resolvent_ratios_bounded_for_gamma_le_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let mut p = random_params(&mut rng);
            p.gamma = rng.random_range(-1.0..1.0);
            let mut bound = 0.0f64;
            for t in crate::params::log_space(1.0, 1e9, 400) {
                let r = resolvent_polynomials(&p, t).unwrap();
                for (i, pi) in r.p.iter().enumerate() {
                    let scale = if i == 2 { t.sqrt() } else { t };
                    bound = bound.max((scale * pi / r.v).abs());
                }
            }
            assert!(bound.is_finite() && bound < 1e6, "bound {bound}");
        }
    }
}
