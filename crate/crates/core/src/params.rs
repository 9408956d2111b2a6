//! Structural coefficients of the coupled system and models of the spectrum
//! of the leading operator.

use crate::error::{Error, Result};

/// Largest admissible |gamma|. Beyond it `alpha^(2 gamma)` overflows doubles
/// inside the default spectral window.
pub const GAMMA_LIMIT: f64 = 4.0;

/// Coefficients of the thermoelastic Timoshenko system.
///
/// `rho1, rho2, rho3` are inertia/capacity coefficients, `a, b, c` stiffness
/// and conductivity, `delta` the coupling strength and `gamma` the coupling
/// exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub delta: f64,
    pub gamma: f64,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

impl SystemParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rho1: f64,
        rho2: f64,
        rho3: f64,
        a: f64,
        b: f64,
        c: f64,
        delta: f64,
        gamma: f64,
    ) -> Result<Self> {
        let p = SystemParams {
            rho1,
            rho2,
            rho3,
            a,
            b,
            c,
            delta,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    /// All coefficients equal to one, with the given coupling exponent.
    pub fn unit(gamma: f64) -> Result<Self> {
        Self::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, gamma)
    }

    /// Builds parameters with a prescribed stability number by solving
    /// `b = rho2 (a / rho1 - chi)`. Requires `chi < a / rho1`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_chi(
        rho1: f64,
        rho2: f64,
        rho3: f64,
        a: f64,
        c: f64,
        delta: f64,
        gamma: f64,
        chi: f64,
    ) -> Result<Self> {
        positive("rho1", rho1)?;
        positive("rho2", rho2)?;
        positive("a", a)?;
        if !chi.is_finite() {
            return Err(Error::param("chi", "must be finite"));
        }
        let b = rho2 * (a / rho1 - chi);
        if b <= 0.0 {
            return Err(Error::param(
                "chi",
                format!("b would be non-positive (b = {b}); need chi < a/rho1 = {}", a / rho1),
            ));
        }
        Self::new(rho1, rho2, rho3, a, b, c, delta, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        positive("rho1", self.rho1)?;
        positive("rho2", self.rho2)?;
        positive("rho3", self.rho3)?;
        positive("a", self.a)?;
        positive("b", self.b)?;
        positive("c", self.c)?;
        positive("delta", self.delta)?;
        if !self.gamma.is_finite() || self.gamma.abs() > GAMMA_LIMIT {
            return Err(Error::param(
                "gamma",
                format!("must satisfy |gamma| <= {GAMMA_LIMIT}, got {}", self.gamma),
            ));
        }
        Ok(())
    }

    /// Stability number `a/rho1 - b/rho2`: the difference of the squared
    /// propagation speeds of the two wave equations.
    pub fn chi(&self) -> f64 {
        self.a / self.rho1 - self.b / self.rho2
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = delta;
        self.validate()?;
        Ok(self)
    }
}

/// Free-function form of [`SystemParams::chi`].
pub fn stability_number(params: &SystemParams) -> f64 {
    params.chi()
}

/// A finite model of the spectrum of the leading operator.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumSpec {
    /// Explicit ascending list of positive spectral values.
    ExplicitList(Vec<f64>),
    /// Dirichlet Laplacian on `(0, ell)`: `alpha_n = (n pi / ell)^2`, `n = 1..=n_max`.
    Dirichlet { ell: f64, n_max: usize },
    /// `alpha0 * ratio^k`, `k = 0..count`.
    Geometric { alpha0: f64, ratio: f64, count: usize },
    /// Log-spaced sample of a continuum `[alpha_min, alpha_max]`; models an
    /// operator without compact resolvent.
    LogGrid {
        alpha_min: f64,
        alpha_max: f64,
        count: usize,
    },
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        SpectrumSpec::LogGrid {
            alpha_min: 1.0,
            alpha_max: 1e8,
            count: 400,
        }
    }
}

/// Log-spaced points on `[lo, hi]`, endpoints included.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (l0, l1) = (lo.ln(), hi.ln());
            (0..count)
                .map(|k| {
                    if k == 0 {
                        lo
                    } else if k == count - 1 {
                        hi
                    } else {
                        (l0 + (l1 - l0) * k as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

impl SpectrumSpec {
    /// Generates the sampled spectral values, ascending and strictly positive.
    pub fn values(&self) -> Result<Vec<f64>> {
        let vals = match self {
            SpectrumSpec::ExplicitList(v) => v.clone(),
            SpectrumSpec::Dirichlet { ell, n_max } => {
                if !(ell.is_finite() && *ell > 0.0) {
                    return Err(Error::InvalidSpectrum(format!("ell must be > 0, got {ell}")));
                }
                (1..=*n_max)
                    .map(|n| (n as f64 * std::f64::consts::PI / ell).powi(2))
                    .collect()
            }
            SpectrumSpec::Geometric {
                alpha0,
                ratio,
                count,
            } => {
                if !(alpha0.is_finite() && *alpha0 > 0.0) {
                    return Err(Error::InvalidSpectrum(format!("alpha0 must be > 0, got {alpha0}")));
                }
                if !(ratio.is_finite() && *ratio > 1.0) {
                    return Err(Error::InvalidSpectrum(format!("ratio must be > 1, got {ratio}")));
                }
                (0..*count).map(|k| alpha0 * ratio.powi(k as i32)).collect()
            }
            SpectrumSpec::LogGrid {
                alpha_min,
                alpha_max,
                count,
            } => {
                if !(alpha_min.is_finite() && *alpha_min > 0.0) {
                    return Err(Error::InvalidSpectrum(format!(
                        "alpha_min must be > 0, got {alpha_min}"
                    )));
                }
                if !(alpha_max.is_finite() && alpha_max >= alpha_min) {
                    return Err(Error::InvalidSpectrum(format!(
                        "alpha_max must be finite and >= alpha_min, got {alpha_max}"
                    )));
                }
                if *count > 1 && alpha_max == alpha_min {
                    return Err(Error::InvalidSpectrum(
                        "a grid with more than one point needs alpha_max > alpha_min".into(),
                    ));
                }
                log_space(*alpha_min, *alpha_max, *count)
            }
        };
        if vals.is_empty() {
            return Err(Error::InvalidSpectrum("empty spectrum".into()));
        }
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidSpectrum("values must be finite and > 0".into()));
        }
        if vals.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpectrum("values must be strictly increasing".into()));
        }
        Ok(vals)
    }

    /// Smallest spectral value (the Poincaré constant base).
    pub fn alpha0(&self) -> Result<f64> {
        Ok(self.values()?[0])
    }

    pub fn alpha_max(&self) -> Result<f64> {
        Ok(*self.values()?.last().expect("non-empty"))
    }

    /// Whether the model represents a purely discrete spectrum (compact inverse).
    pub fn is_discrete(&self) -> bool {
        !matches!(self, SpectrumSpec::LogGrid { .. })
    }
}
