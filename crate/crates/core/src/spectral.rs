//! Stability criteria evaluated over a sampled spectrum.
//!
//! Every quantity here is an extremum over the finite sample of spectral
//! values, so suprema and infima are lower/upper bounds of their operator
//! counterparts. Per-mode work runs in parallel; reductions walk the results
//! in sample order so reports are reproducible bit for bit.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{loglog_fit, top_decades, LineFit};
use crate::linalg::{self, CMat, RMat};
use crate::modal::{block_energy_inverse, block_for, ModalBlock, Model};
use crate::params::{log_space, SpectrumSpec, SystemParams};

/// Relative tolerance under which `chi` and `gamma - 1/2` count as zero.
const EXACT_TOL: f64 = 1e-12;

pub fn chi_is_zero(p: &SystemParams) -> bool {
    p.chi().abs() <= EXACT_TOL * (p.a / p.rho1).max(p.b / p.rho2)
}

pub fn gamma_is_half(gamma: f64) -> bool {
    (gamma - 0.5).abs() <= EXACT_TOL
}

/// Largest real part over the eigenvalues of the block.
pub fn spectral_abscissa(block: &ModalBlock) -> Result<f64> {
    linalg::spectral_abscissa(&block.m)
}

/// Per-mode abscissae over the sample, in sample order.
pub fn mode_abscissae(model: Model, p: &SystemParams, spectrum: &SpectrumSpec) -> Result<Vec<(f64, f64)>> {
    let alphas = spectrum.values()?;
    alphas
        .par_iter()
        .map(|&a| Ok((a, spectral_abscissa(&block_for(model, p, a)?)?)))
        .collect()
}

/// Supremum of the per-mode abscissa and the spectral value attaining it.
pub fn uniform_abscissa(model: Model, p: &SystemParams, spectrum: &SpectrumSpec) -> Result<(f64, f64)> {
    let modes = mode_abscissae(model, p, spectrum)?;
    let mut best = (f64::NEG_INFINITY, modes[0].0);
    for (a, s) in modes {
        if s > best.0 {
            best = (s, a);
        }
    }
    Ok(best)
}

/// `sigma_min(i lambda I - m)`.
pub fn resolvent_sigma_min(m: &RMat, lambda: f64) -> Result<f64> {
    let n = m.nrows();
    let mut shifted: CMat = linalg::to_complex(m) * Complex64::new(-1.0, 0.0);
    for i in 0..n {
        shifted[(i, i)] += Complex64::new(0.0, lambda);
    }
    linalg::smallest_singular_value(&shifted)
}

/// Frequencies at which the witness construction forces the resolvent.
pub fn witness_frequencies(model: Model, p: &SystemParams, alpha: f64) -> Vec<f64> {
    match model {
        Model::Timoshenko => vec![
            (p.a * alpha / p.rho1).sqrt(),
            WitnessFrequency::case_iii(p, alpha).lambda,
        ],
        Model::WaveHeat => vec![alpha.sqrt()],
    }
}

/// Wave speed scale used to size the frequency grid.
fn speed(model: Model, p: &SystemParams) -> f64 {
    match model {
        Model::Timoshenko => p.a / p.rho1,
        Model::WaveHeat => 1.0,
    }
}

/// Log-spaced frequencies on `[lambda_min, 2 sqrt(speed * alpha_max)]` merged
/// with the witness frequencies of every sampled mode.
pub fn default_lambda_grid(
    model: Model,
    p: &SystemParams,
    alphas: &[f64],
    points: usize,
    lambda_min: f64,
) -> Vec<f64> {
    let alpha_max = alphas.iter().copied().fold(0.0, f64::max);
    let lambda_max = 2.0 * (speed(model, p) * alpha_max).sqrt();
    let mut grid = log_space(lambda_min, lambda_max.max(lambda_min), points);
    for &a in alphas {
        grid.extend(witness_frequencies(model, p, a));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaMargin {
    pub alpha: f64,
    pub sigma_min: f64,
    pub lambda_star: f64,
}

/// Result of a frequency scan along the imaginary axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventScan {
    pub lambda_grid: Vec<f64>,
    pub per_alpha: Vec<AlphaMargin>,
    pub margin: f64,
    pub argmin_alpha: f64,
    pub argmin_lambda: f64,
}

impl ResolventScan {
    /// Log-log slope of the per-mode margin over `window`.
    pub fn trend(&self, window: (f64, f64)) -> Result<LineFit> {
        let xs: Vec<f64> = self.per_alpha.iter().map(|m| m.alpha).collect();
        let ys: Vec<f64> = self.per_alpha.iter().map(|m| m.sigma_min).collect();
        loglog_fit(&xs, &ys, window)
    }
}

/// Minimum over sampled modes and grid frequencies of
/// `sigma_min(i lambda - M_alpha)` in energy coordinates.
///
/// Negative frequencies are skipped: for real `M` the scan is symmetric under
/// `lambda -> -lambda`. With `eigen_frequencies` set, each mode is also probed
/// at the imaginary parts of its own eigenvalues.
pub fn pruss_margin(
    model: Model,
    p: &SystemParams,
    spectrum: &SpectrumSpec,
    lambda_grid: &[f64],
    eigen_frequencies: bool,
) -> Result<ResolventScan> {
    if lambda_grid.is_empty() {
        return Err(Error::Precondition("empty frequency grid".into()));
    }
    let alphas = spectrum.values()?;
    let per_alpha: Vec<AlphaMargin> = alphas
        .par_iter()
        .map(|&alpha| -> Result<AlphaMargin> {
            let block = block_for(model, p, alpha)?;
            let mut best = AlphaMargin {
                alpha,
                sigma_min: f64::INFINITY,
                lambda_star: lambda_grid[0],
            };
            let mut probe = |lambda: f64| -> Result<()> {
                let s = resolvent_sigma_min(&block.m, lambda)?;
                if s < best.sigma_min {
                    best.sigma_min = s;
                    best.lambda_star = lambda;
                }
                Ok(())
            };
            for &lambda in lambda_grid {
                probe(lambda.abs())?;
            }
            if eigen_frequencies {
                let mut freqs: Vec<f64> = linalg::eigenvalues(&block.m)?
                    .iter()
                    .map(|z| z.im.abs())
                    .collect();
                freqs.sort_by(f64::total_cmp);
                freqs.dedup();
                for f in freqs {
                    probe(f)?;
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut arg = per_alpha[0];
    for m in &per_alpha {
        if m.sigma_min < arg.sigma_min {
            arg = *m;
        }
    }
    Ok(ResolventScan {
        lambda_grid: lambda_grid.to_vec(),
        per_alpha,
        margin: arg.sigma_min,
        argmin_alpha: arg.alpha,
        argmin_lambda: arg.lambda_star,
    })
}

/// The three regimes of the witness construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseId {
    /// `gamma > 1/2`.
    I,
    /// `gamma <= 1/2` and `chi != 0`.
    II,
    /// `gamma < 1/2` and `chi = 0`.
    III,
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseId::I => "I",
            CaseId::II => "II",
            CaseId::III => "III",
        })
    }
}

/// Which coordinate of the resolvent solution is tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Watched {
    RePhiT,
    ImPhiT,
    RePsiT,
}

/// A resolvent frequency together with the conservative coefficients of the
/// reduced `(phi_t, psi_t)` system at that frequency:
/// `d1 = a alpha - rho1 lambda^2`, `d2 = b alpha + a - rho2 lambda^2` and
/// `det0 = d1 d2 - a^2 alpha`.
///
/// The named frequency rules supply these in closed form; evaluating them
/// from a rounded `lambda` loses every digit at large `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessFrequency {
    pub lambda: f64,
    pub d1: f64,
    pub d2: f64,
    pub det0: f64,
}

impl WitnessFrequency {
    /// Arbitrary frequency; coefficients evaluated directly.
    pub fn at(p: &SystemParams, alpha: f64, lambda: f64) -> Self {
        let l2 = lambda * lambda;
        let d1 = p.a * alpha - p.rho1 * l2;
        let d2 = p.b * alpha + p.a - p.rho2 * l2;
        WitnessFrequency {
            lambda,
            d1,
            d2,
            det0: d1 * d2 - p.a * p.a * alpha,
        }
    }

    /// `lambda^2 = a alpha / rho1`, the frequency of the first wave.
    pub fn first_wave(p: &SystemParams, alpha: f64) -> Self {
        WitnessFrequency {
            lambda: (p.a * alpha / p.rho1).sqrt(),
            d1: 0.0,
            d2: p.a - p.rho2 * p.chi() * alpha,
            det0: -p.a * p.a * alpha,
        }
    }

    /// `lambda^2 = beta(alpha)`, a root of the conservative determinant when `chi = 0`.
    pub fn case_iii(p: &SystemParams, alpha: f64) -> Self {
        let s = (1.0 + 4.0 * p.rho2 * alpha / p.rho1).sqrt();
        let root = p.rho1 * s; // sqrt(rho1^2 + 4 rho1 rho2 alpha)
        let beta = (2.0 * p.rho2 * p.a * alpha + p.a * p.rho1 + p.a * root) / (2.0 * p.rho1 * p.rho2);
        let d1 = -(p.a * p.rho1 / (2.0 * p.rho2)) * (1.0 + s);
        let chi = p.chi();
        WitnessFrequency {
            lambda: beta.sqrt(),
            d1,
            d2: 0.5 * p.a * (1.0 - s) - p.rho2 * chi * alpha,
            det0: 0.5 * p.a * p.rho1 * chi * alpha * (1.0 + s),
        }
    }
}

/// Solves `(i lambda - L_alpha) z = (0, c1, 0, c2, 0)` for the Timoshenko block
/// by eliminating `phi`, `psi` and `theta`, returning `z` in physical coordinates.
pub fn structured_resolvent_solve(
    p: &SystemParams,
    alpha: f64,
    freq: &WitnessFrequency,
    c1: f64,
    c2: f64,
) -> Result<[Complex64; 5]> {
    let lambda = freq.lambda;
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!("frequency must be > 0, got {lambda}")));
    }
    let il = Complex64::new(0.0, lambda);
    let k = p.delta * alpha.powf(p.gamma);
    let heat = il * p.rho3 + p.c * alpha;
    let thermal = il * k * k / heat;
    let sa = alpha.sqrt();
    // [d1, a sqrt(alpha); a sqrt(alpha), d2 + thermal] [B; C] = i lambda [rho1 c1; rho2 c2]
    let det = Complex64::new(freq.det0, 0.0) + thermal * freq.d1;
    if det.norm() == 0.0 || !det.norm().is_finite() {
        return Err(Error::Singular {
            sigma_min: det.norm(),
            norm: 1.0,
        });
    }
    let r1 = il * (p.rho1 * c1);
    let r2 = il * (p.rho2 * c2);
    let e = thermal + freq.d2;
    let phi_t = (r1 * e - r2 * (p.a * sa)) / det;
    let psi_t = (r2 * freq.d1 - r1 * (p.a * sa)) / det;
    let theta = -psi_t * k / heat;
    Ok([phi_t / il, phi_t, psi_t / il, psi_t, theta])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessCase {
    pub id: CaseId,
    pub c1: f64,
    pub c2: f64,
    pub watched: Watched,
    pub predicted_exponent: f64,
}

impl WitnessCase {
    /// Selects the regime for `p`; fails at `chi = 0, gamma = 1/2`, which has no witness.
    pub fn select(p: &SystemParams) -> Result<Self> {
        let g = p.gamma;
        let chi0 = chi_is_zero(p);
        let first = |id, watched, predicted_exponent| WitnessCase {
            id,
            c1: 1.0 / p.rho1.sqrt(),
            c2: 0.0,
            watched,
            predicted_exponent,
        };
        if g > 0.5 && !gamma_is_half(g) {
            Ok(first(CaseId::I, Watched::RePhiT, 2.0 * g - 1.0))
        } else if !chi0 {
            Ok(first(CaseId::II, Watched::ImPhiT, 0.5))
        } else if !gamma_is_half(g) {
            Ok(WitnessCase {
                id: CaseId::III,
                c1: 0.0,
                c2: 1.0 / p.rho2.sqrt(),
                watched: Watched::RePsiT,
                predicted_exponent: 1.0 - 2.0 * g,
            })
        } else {
            Err(Error::CaseMismatch(
                "chi = 0 and gamma = 1/2: the resolvent stays bounded".into(),
            ))
        }
    }

    pub fn frequency(&self, p: &SystemParams, alpha: f64) -> WitnessFrequency {
        match self.id {
            CaseId::I | CaseId::II => WitnessFrequency::first_wave(p, alpha),
            CaseId::III => WitnessFrequency::case_iii(p, alpha),
        }
    }

    pub fn watched_magnitude(&self, z: &[Complex64; 5]) -> f64 {
        match self.watched {
            Watched::RePhiT => z[1].re.abs(),
            Watched::ImPhiT => z[1].im.abs(),
            Watched::RePsiT => z[3].re.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessPoint {
    pub alpha: f64,
    pub lambda: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessScan {
    pub case: WitnessCase,
    pub fitted_exponent: f64,
    pub window: (f64, f64),
    pub per_alpha: Vec<WitnessPoint>,
}

/// Forces the resolvent along the witness frequencies and fits the growth
/// exponent of the watched component. `window` defaults to the top two
/// decades of the sample.
pub fn witness_scan(
    p: &SystemParams,
    spectrum: &SpectrumSpec,
    window: Option<(f64, f64)>,
) -> Result<WitnessScan> {
    let case = WitnessCase::select(p)?;
    let alphas = spectrum.values()?;
    let per_alpha: Vec<WitnessPoint> = alphas
        .par_iter()
        .map(|&alpha| {
            let freq = case.frequency(p, alpha);
            let z = structured_resolvent_solve(p, alpha, &freq, case.c1, case.c2)?;
            Ok(WitnessPoint {
                alpha,
                lambda: freq.lambda,
                magnitude: case.watched_magnitude(&z),
            })
        })
        .collect::<Result<_>>()?;
    let window = window.unwrap_or_else(|| top_decades(&alphas, 2.0));
    let xs: Vec<f64> = per_alpha.iter().map(|w| w.alpha).collect();
    let ys: Vec<f64> = per_alpha.iter().map(|w| w.magnitude).collect();
    let fit = loglog_fit(&xs, &ys, window)?;
    Ok(WitnessScan {
        case,
        fitted_exponent: fit.slope,
        window,
        per_alpha,
    })
}

/// Growth of `||M_alpha^-1||` along the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseGrowth {
    pub slope: f64,
    /// `Some(slope)` when the fitted slope exceeds 0.1, `None` when bounded.
    pub exponent: Option<f64>,
    pub per_alpha: Vec<(f64, f64)>,
}

pub const INVERSE_GROWTH_THRESHOLD: f64 = 0.1;

pub fn inverse_norm_growth(
    model: Model,
    p: &SystemParams,
    spectrum: &SpectrumSpec,
    window: Option<(f64, f64)>,
) -> Result<InverseGrowth> {
    let alphas = spectrum.values()?;
    let per_alpha: Vec<(f64, f64)> = alphas
        .par_iter()
        .map(|&alpha| {
            let block = block_for(model, p, alpha)?;
            let inv = block_energy_inverse(p, &block)?;
            Ok((alpha, linalg::operator_norm(&inv)?))
        })
        .collect::<Result<_>>()?;
    let slope = if per_alpha.len() < 2 {
        0.0
    } else {
        let window = window.unwrap_or_else(|| top_decades(&alphas, 2.0));
        let xs: Vec<f64> = per_alpha.iter().map(|x| x.0).collect();
        let ys: Vec<f64> = per_alpha.iter().map(|x| x.1).collect();
        loglog_fit(&xs, &ys, window)?.slope
    };
    Ok(InverseGrowth {
        slope,
        exponent: (slope > INVERSE_GROWTH_THRESHOLD).then_some(slope),
        per_alpha,
    })
}

/// Sampled `h(t) = max_alpha ||exp(t M_alpha) M_alpha^-1||`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub h: Vec<f64>,
    /// Spectral value attaining the maximum at each time.
    pub argmax_alpha: Vec<f64>,
    /// `h(t_last) / h(t_first)`.
    pub ratio: f64,
    /// Whether the curve is certified to vanish: ratio below threshold and `gamma <= 1`.
    pub vanishing: bool,
}

pub fn semiuniform_decay(
    model: Model,
    p: &SystemParams,
    spectrum: &SpectrumSpec,
    times: &[f64],
    threshold: f64,
) -> Result<DecayCurve> {
    if times.is_empty() {
        return Err(Error::Precondition("empty time grid".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("times must be positive and strictly ascending".into()));
    }
    let alphas = spectrum.values()?;
    let per_mode: Vec<Vec<f64>> = alphas
        .par_iter()
        .map(|&alpha| {
            let block = block_for(model, p, alpha)?;
            let inv = block_energy_inverse(p, &block)?;
            times
                .iter()
                .map(|&t| linalg::operator_norm(&(linalg::expm(&block.m, t)? * &inv)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut h = vec![f64::NEG_INFINITY; times.len()];
    let mut argmax_alpha = vec![alphas[0]; times.len()];
    for (alpha, row) in alphas.iter().zip(&per_mode) {
        for (k, v) in row.iter().enumerate() {
            if *v > h[k] {
                h[k] = *v;
                argmax_alpha[k] = *alpha;
            }
        }
    }
    let ratio = h[h.len() - 1] / h[0];
    Ok(DecayCurve {
        times: times.to_vec(),
        vanishing: ratio < threshold && p.gamma <= 1.0,
        h,
        argmax_alpha,
        ratio,
    })
}

/// Stability verdicts, numerical or predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Exponential,
    Semiuniform,
    StableOnly,
    NotSemiuniform,
    Indeterminate,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Exponential => "Exponential",
            Verdict::Semiuniform => "Semiuniform",
            Verdict::StableOnly => "StableOnly",
            Verdict::NotSemiuniform => "NotSemiuniform",
            Verdict::Indeterminate => "Indeterminate",
        })
    }
}

/// What the structural theory asserts for a parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prediction {
    Exponential,
    /// Semiuniformly but not exponentially stable.
    Semiuniform,
    NotSemiuniform,
    /// Only the lack of exponential stability is known.
    NotExponential,
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Prediction::Exponential => "Exponential",
            Prediction::Semiuniform => "Semiuniform",
            Prediction::NotSemiuniform => "NotSemiuniform",
            Prediction::NotExponential => "NotExponential",
        })
    }
}

impl Prediction {
    pub fn admits(self, v: Verdict) -> bool {
        match self {
            Prediction::Exponential => v == Verdict::Exponential,
            Prediction::Semiuniform => v == Verdict::Semiuniform,
            Prediction::NotSemiuniform => v == Verdict::NotSemiuniform,
            Prediction::NotExponential => matches!(
                v,
                Verdict::Semiuniform | Verdict::StableOnly | Verdict::NotSemiuniform
            ),
        }
    }
}

/// Structural prediction from `(chi, gamma)` and the nature of the spectrum.
pub fn analytic_prediction(model: Model, p: &SystemParams, discrete_spectrum: bool) -> Prediction {
    let g = p.gamma;
    match model {
        Model::Timoshenko => {
            if g > 1.0 {
                Prediction::NotSemiuniform
            } else if gamma_is_half(g) && chi_is_zero(p) {
                Prediction::Exponential
            } else if g >= 0.5 - EXACT_TOL || discrete_spectrum {
                Prediction::Semiuniform
            } else {
                Prediction::NotExponential
            }
        }
        Model::WaveHeat => {
            if (0.5 - EXACT_TOL..=1.0 + EXACT_TOL).contains(&g) {
                Prediction::Exponential
            } else {
                Prediction::NotExponential
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOptions {
    pub margin_threshold: f64,
    pub abscissa_threshold: f64,
    pub decay_threshold: f64,
    /// Largest admissible decay rate of the per-mode margin (log-log slope)
    /// for an exponential verdict.
    pub margin_trend_tolerance: f64,
    pub lambda_points: usize,
    pub lambda_min: f64,
    pub eigen_frequencies: bool,
    pub times: Vec<f64>,
    /// Window for every exponent fit; `None` means the top `fit_decades` decades.
    pub fit_window: Option<(f64, f64)>,
    pub fit_decades: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            margin_threshold: 1e-6,
            abscissa_threshold: 1e-8,
            decay_threshold: 0.1,
            margin_trend_tolerance: 0.1,
            lambda_points: 2000,
            lambda_min: 1e-2,
            eigen_frequencies: true,
            times: log_space(1.0, 1e3, 31),
            fit_window: None,
            fit_decades: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub model: Model,
    pub params: SystemParams,
    pub chi: f64,
    pub sup_abscissa: f64,
    pub abscissa_argmax: f64,
    pub all_modes_decay: bool,
    pub pruss_margin: f64,
    pub margin_argmin: (f64, f64),
    pub margin_trend: f64,
    pub inverse_growth_slope: f64,
    pub inverse_growth_exponent: Option<f64>,
    pub witness_case: Option<CaseId>,
    pub witness_exponent_fit: Option<f64>,
    pub decay_ratio: f64,
    pub numerical: Verdict,
    pub prediction: Prediction,
    pub agree: bool,
    pub classification: Verdict,
}

/// Runs every criterion over the sample and combines them:
///
/// * `Exponential`: margin at least `margin_threshold`, supremal abscissa at
///   most `-abscissa_threshold` and a per-mode margin that does not decay
///   along the top of the sample;
/// * `NotSemiuniform`: `||M_alpha^-1||` grows;
/// * `Semiuniform`: the decay curve `h` drops below `decay_threshold`;
/// * `StableOnly`: every sampled mode decays;
/// * `Indeterminate` otherwise, or whenever the verdict contradicts the
///   structural prediction.
pub fn classify(
    model: Model,
    p: &SystemParams,
    spectrum: &SpectrumSpec,
    opts: &ClassifyOptions,
) -> Result<StabilityReport> {
    p.validate()?;
    let alphas = spectrum.values()?;
    let window = opts
        .fit_window
        .unwrap_or_else(|| top_decades(&alphas, opts.fit_decades));

    let modes = mode_abscissae(model, p, spectrum)?;
    let mut sup = (f64::NEG_INFINITY, alphas[0]);
    for &(a, s) in &modes {
        if s > sup.0 {
            sup = (s, a);
        }
    }
    let all_modes_decay = modes.iter().all(|m| m.1 < 0.0);

    let grid = default_lambda_grid(model, p, &alphas, opts.lambda_points, opts.lambda_min);
    let scan = pruss_margin(model, p, spectrum, &grid, opts.eigen_frequencies)?;
    let margin_trend = if alphas.len() >= 2 {
        scan.trend(window).map(|f| f.slope).unwrap_or(f64::NEG_INFINITY)
    } else {
        0.0
    };

    let growth = inverse_norm_growth(model, p, spectrum, Some(window))?;

    let (witness_case, witness_exponent_fit) = match model {
        Model::Timoshenko => match WitnessCase::select(p) {
            Ok(_) if alphas.len() >= 2 => {
                let w = witness_scan(p, spectrum, Some(window))?;
                (Some(w.case.id), Some(w.fitted_exponent))
            }
            _ => (None, None),
        },
        Model::WaveHeat => (None, None),
    };

    let exponential = scan.margin >= opts.margin_threshold
        && sup.0 <= -opts.abscissa_threshold
        && margin_trend >= -opts.margin_trend_tolerance;

    let (numerical, decay_ratio) = if exponential {
        (Verdict::Exponential, f64::NAN)
    } else if growth.exponent.is_some() {
        (Verdict::NotSemiuniform, f64::NAN)
    } else {
        let curve = semiuniform_decay(model, p, spectrum, &opts.times, opts.decay_threshold)?;
        let v = if curve.vanishing {
            Verdict::Semiuniform
        } else if all_modes_decay {
            Verdict::StableOnly
        } else {
            Verdict::Indeterminate
        };
        (v, curve.ratio)
    };

    let prediction = analytic_prediction(model, p, spectrum.is_discrete());
    let agree = prediction.admits(numerical);
    Ok(StabilityReport {
        model,
        params: *p,
        chi: p.chi(),
        sup_abscissa: sup.0,
        abscissa_argmax: sup.1,
        all_modes_decay,
        pruss_margin: scan.margin,
        margin_argmin: (scan.argmin_alpha, scan.argmin_lambda),
        margin_trend,
        inverse_growth_slope: growth.slope,
        inverse_growth_exponent: growth.exponent,
        witness_case,
        witness_exponent_fit,
        decay_ratio,
        numerical,
        prediction,
        agree,
        classification: if agree { numerical } else { Verdict::Indeterminate },
    })
}
