//! Oscillatory behaviour `γ(t) = A sin(w_γ t)` superposed on the path, and
//! the map between oscillation amplitude and the resulting average progress
//! along the path.
//!
//! A drone flying at constant speed `v` that tracks `φ = γ(t)` spends part of
//! its speed on the lateral motion `γ̇`, so its path parameter advances at
//! `√(v² − γ̇²)`. Averaged over one period `T = 2π/w_γ` this gives the
//! *average parametric velocity*
//!
//! ```text
//! ẋ̄(A) = (1/T) ∫₀ᵀ √(v² − A² w_γ² cos²(w_γ t)) dt = (2v/π) · E(A² w_γ² / v²)
//! ```
//!
//! with `E` the complete elliptic integral of the second kind. The controller
//! inverts this relation with the approximation `A ≈ k_A √(v² − ẋ̄²) / w_γ`,
//! where `k_A` is obtained by [`fit_ka`].

use std::f64::consts::PI;

use thiserror::Error;

use crate::numeric::{adaptive_simpson, elliptic_e};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OscillationError {
    #[error("invalid oscillation configuration: {0}")]
    InvalidConfig(String),
    #[error("amplitude {amplitude} m outside the feasible range [0, {max}] m")]
    AmplitudeOutOfRange { amplitude: f64, max: f64 },
    #[error("k_A fit failed: {0}")]
    Fit(String),
}

/// Oscillation parameters shared by every drone of a formation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationConfig {
    /// Oscillation frequency `w_γ` in rad/s.
    pub w_gamma: f64,
    /// Nominal constant speed `v` in m/s.
    pub speed: f64,
    /// Gain of the amplitude/velocity approximation, must exceed 1.
    pub k_a: f64,
    /// Largest commanded amplitude in metres, at most `v / w_γ`.
    pub amplitude_cap: f64,
    /// Time constant of the amplitude slew filter in seconds.
    pub tau_a: f64,
}

impl OscillationConfig {
    /// Config with the default cap `v / w_γ` and slew time constant `5 / w_γ`.
    pub fn new(speed: f64, w_gamma: f64, k_a: f64) -> Result<Self, OscillationError> {
        let cfg = Self {
            w_gamma,
            speed,
            k_a,
            amplitude_cap: speed / w_gamma,
            tau_a: 5.0 / w_gamma,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_amplitude_cap(mut self, cap: f64) -> Result<Self, OscillationError> {
        self.amplitude_cap = cap;
        self.validate()?;
        Ok(self)
    }

    pub fn with_tau_a(mut self, tau_a: f64) -> Result<Self, OscillationError> {
        self.tau_a = tau_a;
        self.validate()?;
        Ok(self)
    }

    /// Largest amplitude a drone at speed `v` can follow: `v / w_γ`.
    pub fn max_feasible_amplitude(&self) -> f64 {
        self.speed / self.w_gamma
    }

    /// Oscillation period `T = 2π / w_γ`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.w_gamma
    }

    fn validate(&self) -> Result<(), OscillationError> {
        let bad = |msg: String| Err(OscillationError::InvalidConfig(msg));
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad(format!("speed must be positive, got {}", self.speed));
        }
        if !(self.w_gamma > 0.0 && self.w_gamma.is_finite()) {
            return bad(format!("w_gamma must be positive, got {}", self.w_gamma));
        }
        if !(self.k_a > 1.0 && self.k_a.is_finite()) {
            return bad(format!("k_A must exceed 1, got {}", self.k_a));
        }
        if !(self.amplitude_cap >= 0.0 && self.amplitude_cap <= self.max_feasible_amplitude() * (1.0 + 1e-12)) {
            return bad(format!(
                "amplitude cap {} m must lie in [0, v/w_gamma = {}] m",
                self.amplitude_cap,
                self.max_feasible_amplitude()
            ));
        }
        if !(self.tau_a > 0.0 && self.tau_a.is_finite()) {
            return bad(format!("tau_A must be positive, got {}", self.tau_a));
        }
        Ok(())
    }
}

/// Per-drone amplitude state. `rate` and `accel` are the first and second
/// time derivatives of `amplitude` as produced by the slew filter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OscillationState {
    pub amplitude: f64,
    pub rate: f64,
    pub accel: f64,
    pub commanded: f64,
}

impl OscillationState {
    pub fn with_amplitude(amplitude: f64) -> Self {
        Self {
            amplitude,
            commanded: amplitude,
            ..Self::default()
        }
    }

    /// `γ(t) = A sin(w_γ t)`.
    pub fn gamma(&self, w_gamma: f64, t: f64) -> f64 {
        self.amplitude * (w_gamma * t).sin()
    }

    /// `γ̇(t) = Ȧ sin(w_γ t) + A w_γ cos(w_γ t)`.
    pub fn gamma_dot(&self, w_gamma: f64, t: f64) -> f64 {
        let (s, c) = (w_gamma * t).sin_cos();
        self.rate * s + self.amplitude * w_gamma * c
    }

    /// `γ̈(t) = Ä sin(w_γ t) + 2 Ȧ w_γ cos(w_γ t) − A w_γ² sin(w_γ t)`.
    pub fn gamma_ddot(&self, w_gamma: f64, t: f64) -> f64 {
        let (s, c) = (w_gamma * t).sin_cos();
        self.accel * s + 2.0 * self.rate * w_gamma * c - self.amplitude * w_gamma * w_gamma * s
    }

    /// Advances the first-order amplitude filter `τ_A Ȧ = A_cmd − A` by `dt`
    /// with the command held constant, using the exact discretisation.
    ///
    /// The command is clamped to `[0, amplitude_cap]`, so the filter output
    /// stays in that interval and never overshoots.
    pub fn update(&self, cfg: &OscillationConfig, command: f64, dt: f64) -> Self {
        let target = command.clamp(0.0, cfg.amplitude_cap);
        let decay = (-dt / cfg.tau_a).exp();
        let amplitude = (target + (self.amplitude - target) * decay).clamp(0.0, cfg.amplitude_cap);
        let rate = (target - amplitude) / cfg.tau_a;
        Self {
            amplitude,
            rate,
            accel: -rate / cfg.tau_a,
            commanded: target,
        }
    }
}

fn check_amplitude(cfg: &OscillationConfig, amplitude: f64) -> Result<f64, OscillationError> {
    let max = cfg.max_feasible_amplitude();
    if amplitude.is_nan() || amplitude < 0.0 || amplitude > max * (1.0 + 1e-12) {
        return Err(OscillationError::AmplitudeOutOfRange { amplitude, max });
    }
    Ok(amplitude.min(max))
}

/// Average parametric velocity for a constant amplitude, by adaptive
/// quadrature of the defining period average.
pub fn average_parametric_velocity(cfg: &OscillationConfig, amplitude: f64) -> Result<f64, OscillationError> {
    let amplitude = check_amplitude(cfg, amplitude)?;
    let (v, w) = (cfg.speed, cfg.w_gamma);
    let period = cfg.period();
    let lateral = amplitude * w;
    let integrand = |t: f64| {
        let c = (w * t).cos();
        (v * v - lateral * lateral * c * c).max(0.0).sqrt()
    };
    // The integrand has kinks at the quarter periods when A = v / w_γ.
    let quarter = 0.25 * period;
    let tol = 1e-13 * v * quarter;
    let integral: f64 = (0..4)
        .map(|q| adaptive_simpson(integrand, q as f64 * quarter, (q + 1) as f64 * quarter, tol))
        .sum();
    Ok(integral / period)
}

/// Closed form `(2v/π) E(A² w_γ² / v²)` of [`average_parametric_velocity`].
pub fn average_parametric_velocity_elliptic(cfg: &OscillationConfig, amplitude: f64) -> Result<f64, OscillationError> {
    let amplitude = check_amplitude(cfg, amplitude)?;
    let m = ((amplitude * cfg.w_gamma) / cfg.speed).powi(2).min(1.0);
    Ok(2.0 * cfg.speed / PI * elliptic_e(m))
}

/// Minimum average parametric velocity reachable under the approximation,
/// `ε = v √(k_A² − 1) / k_A`.
pub fn epsilon(speed: f64, k_a: f64) -> Result<f64, OscillationError> {
    if k_a.is_nan() || k_a <= 1.0 {
        return Err(OscillationError::InvalidConfig(format!("k_A must exceed 1, got {k_a}")));
    }
    Ok((k_a * k_a - 1.0).sqrt() / k_a * speed)
}

/// Amplitude model `A(ẋ̄) = k √(v² − ẋ̄²) / w_γ` without clamping.
pub fn amplitude_model(speed: f64, w_gamma: f64, k_a: f64, xdot: f64) -> f64 {
    k_a * (speed * speed - xdot * xdot).max(0.0).sqrt() / w_gamma
}

/// Inverse of [`amplitude_model`]: the average velocity it predicts for `amplitude`.
pub fn velocity_model(speed: f64, w_gamma: f64, k_a: f64, amplitude: f64) -> f64 {
    let lateral = amplitude * w_gamma / k_a;
    (speed * speed - lateral * lateral).max(0.0).sqrt()
}

/// Amplitude that realises the desired average parametric velocity,
/// clamped to `[0, amplitude_cap]`. Requests outside `[ε, v]` are clamped
/// into it with a warning.
pub fn amplitude_for_velocity(cfg: &OscillationConfig, xdot_desired: f64) -> f64 {
    let v = cfg.speed;
    let eps = (cfg.k_a * cfg.k_a - 1.0).sqrt() / cfg.k_a * v;
    let slack = 1e-9 * v;
    if xdot_desired > v + slack || xdot_desired < eps - slack {
        log::warn!("desired average velocity {xdot_desired} m/s outside [{eps}, {v}] m/s, clamping");
    }
    let xdot = xdot_desired.clamp(eps, v);
    amplitude_model(v, cfg.w_gamma, cfg.k_a, xdot).clamp(0.0, cfg.amplitude_cap)
}

/// One row of a k_A calibration table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSample {
    pub amplitude: f64,
    /// Average parametric velocity from quadrature.
    pub exact: f64,
    /// Velocity predicted by the fitted model.
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KaFit {
    pub k_a: f64,
    pub samples: Vec<FitSample>,
}

impl KaFit {
    /// Largest `|model − exact|` over the samples.
    pub fn max_abs_error(&self) -> f64 {
        self.samples.iter().map(|s| (s.model - s.exact).abs()).fold(0.0, f64::max)
    }
}

/// Fits `k_A` to `sample_count` amplitudes spaced uniformly over
/// `[0, v / w_γ]` by least squares on the average-velocity residuals.
pub fn fit_ka(speed: f64, w_gamma: f64, sample_count: usize) -> Result<KaFit, OscillationError> {
    if sample_count < 10 {
        return Err(OscillationError::Fit(format!("need at least 10 samples, got {sample_count}")));
    }
    if !(speed > 0.0 && w_gamma > 0.0 && speed.is_finite() && w_gamma.is_finite()) {
        return Err(OscillationError::Fit(format!(
            "speed and frequency must be positive, got v={speed}, w_gamma={w_gamma}"
        )));
    }
    // k_A only enters the fit through A·w_γ/k_A, so any valid placeholder gain works here.
    let cfg = OscillationConfig::new(speed, w_gamma, 2.0).map_err(|e| OscillationError::Fit(e.to_string()))?;
    let a_max = cfg.max_feasible_amplitude();
    let points = (0..sample_count)
        .map(|j| {
            let a = a_max * j as f64 / (sample_count - 1) as f64;
            average_parametric_velocity(&cfg, a).map(|y| (a, y))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let sse = |k: f64| -> f64 {
        points
            .iter()
            .map(|&(a, y)| (velocity_model(speed, w_gamma, k, a) - y).powi(2))
            .sum()
    };

    // Coarse scan for a bracket, then golden-section refinement.
    const LO: f64 = 1.0 + 1e-9;
    const HI: f64 = 4.0;
    const SCAN: usize = 600;
    let grid = |i: usize| LO + (HI - LO) * i as f64 / SCAN as f64;
    let best = (0..=SCAN)
        .min_by(|&i, &j| sse(grid(i)).total_cmp(&sse(grid(j))))
        .expect("non-empty scan");
    let (mut a, mut b) = (grid(best.saturating_sub(1)), grid((best + 1).min(SCAN)));
    let ratio = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (sse(c), sse(d));
    while b - a > 1e-13 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = sse(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = sse(d);
        }
    }
    let k_a = 0.5 * (a + b);
    if !k_a.is_finite() || k_a <= 1.0 {
        return Err(OscillationError::Fit(format!("degenerate fit, k_A = {k_a}")));
    }
    let samples = points
        .into_iter()
        .map(|(amplitude, exact)| FitSample {
            amplitude,
            exact,
            model: velocity_model(speed, w_gamma, k_a, amplitude),
        })
        .collect();
    Ok(KaFit { k_a, samples })
}
