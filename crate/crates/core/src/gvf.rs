//! Inverse-kinematics guiding vector field.
//!
//! The field is built so that a vehicle flying along it sees its level-set
//! error obey `φ̇ = u_φ = −k_e (φ − γ) + γ̇`, i.e. `φ` converges to the
//! behaviour signal `γ(t)`. Writing `ζ = ∇φ / ‖∇φ‖²` and `β = ζ u_φ`, the
//! speed-matched field is
//!
//! ```text
//! f = √(v² − ‖β‖²) t̂ + β     if ‖β‖ ≤ v   (interior)
//! f = v β / ‖β‖               otherwise    (exterior)
//! ```
//!
//! so that `‖f‖ = v` everywhere and the two branches agree on `‖β‖ = v`.

use nalgebra::{Matrix2, Vector2};

use crate::oscillation::OscillationState;
use crate::path::ParametricPath;

/// Relative floor on `α` when differentiating it near the branch boundary,
/// where `α̇ = −β·β̇ / α` is singular.
pub const ALPHA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GvfGains {
    /// Level-set convergence gain `k_e` in 1/s.
    pub k_e: f64,
}

/// The behaviour signal `γ` and its first two time derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Behavior {
    pub gamma: f64,
    pub gamma_dot: f64,
    pub gamma_ddot: f64,
}

impl Behavior {
    pub fn from_oscillation(state: &OscillationState, w_gamma: f64, t: f64) -> Self {
        Self {
            gamma: state.gamma(w_gamma, t),
            gamma_dot: state.gamma_dot(w_gamma, t),
            gamma_ddot: state.gamma_ddot(w_gamma, t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Interior,
    Exterior,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Interior => "interior",
            Branch::Exterior => "exterior",
        }
    }
}

/// Field value and the intermediate quantities it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub f: Vector2<f64>,
    pub branch: Branch,
    /// Tangential speed `α`; zero on the exterior branch.
    pub alpha: f64,
    pub beta: Vector2<f64>,
    pub zeta: Vector2<f64>,
    pub tangent: Vector2<f64>,
    pub phi: f64,
    pub u_phi: f64,
}

/// Virtual input `u_φ = −k_e (φ − γ) + γ̇`.
pub fn virtual_input(k_e: f64, phi: f64, gamma: f64, gamma_dot: f64) -> f64 {
    -k_e * (phi - gamma) + gamma_dot
}

/// Evaluates the speed-matched field at `p`.
pub fn field<P: ParametricPath + ?Sized>(
    path: &P,
    gains: &GvfGains,
    speed: f64,
    behavior: &Behavior,
    p: &Vector2<f64>,
) -> FieldSample {
    let phi = path.phi(p);
    let grad = path.gradient(p);
    let zeta = grad / grad.norm_squared();
    let u_phi = virtual_input(gains.k_e, phi, behavior.gamma, behavior.gamma_dot);
    let beta = zeta * u_phi;
    let tangent = path.tangent(p);
    let beta_norm = beta.norm();
    let (f, alpha, branch) = if beta_norm <= speed {
        let alpha = (speed * speed - beta_norm * beta_norm).max(0.0).sqrt();
        (tangent * alpha + beta, alpha, Branch::Interior)
    } else {
        (beta * (speed / beta_norm), 0.0, Branch::Exterior)
    };
    FieldSample {
        f,
        branch,
        alpha,
        beta,
        zeta,
        tangent,
        phi,
        u_phi,
    }
}

/// Derivative of `x ↦ x / ‖x‖` applied to `x_dot`:
/// `(I/‖x‖ − x xᵀ/‖x‖³) ẋ`.
pub fn normalization_jacobian(x: &Vector2<f64>, x_dot: &Vector2<f64>) -> Vector2<f64> {
    let n = x.norm();
    let projector = Matrix2::identity() / n - (x * x.transpose()) / (n * n * n);
    projector * x_dot
}

/// Time derivative of the field seen by a vehicle at `p` moving with
/// velocity `p_dot`.
///
/// `u̇_φ` is expanded as `−k_e (φ̇ − γ̇) + γ̈` with `φ̇ = ∇φ·ṗ`, and
/// `β̇ = ζ̇ u_φ + ζ u̇_φ`.
pub fn field_derivative<P: ParametricPath + ?Sized>(
    path: &P,
    gains: &GvfGains,
    speed: f64,
    behavior: &Behavior,
    p: &Vector2<f64>,
    p_dot: &Vector2<f64>,
) -> Vector2<f64> {
    let sample = field(path, gains, speed, behavior, p);
    field_derivative_at(path, gains, speed, behavior, &sample, p, p_dot)
}

/// Same as [`field_derivative`], reusing an already evaluated sample at `p`.
pub fn field_derivative_at<P: ParametricPath + ?Sized>(
    path: &P,
    gains: &GvfGains,
    speed: f64,
    behavior: &Behavior,
    sample: &FieldSample,
    p: &Vector2<f64>,
    p_dot: &Vector2<f64>,
) -> Vector2<f64> {
    let grad = path.gradient(p);
    let hessian = path.hessian(p);
    let grad_sq = grad.norm_squared();

    let phi_dot = grad.dot(p_dot);
    let u_phi_dot = -gains.k_e * (phi_dot - behavior.gamma_dot) + behavior.gamma_ddot;
    let h_pdot = hessian * p_dot;
    let zeta_dot = (h_pdot - sample.zeta * (2.0 * grad.dot(&h_pdot))) / grad_sq;
    let beta_dot = zeta_dot * sample.u_phi + sample.zeta * u_phi_dot;

    match sample.branch {
        Branch::Exterior => normalization_jacobian(&sample.beta, &beta_dot) * speed,
        Branch::Interior => {
            let alpha = sample.alpha.max(ALPHA_FLOOR * speed);
            let alpha_dot = -sample.beta.dot(&beta_dot) / alpha;
            let tangent_dot = path.tangent_rate(p, p_dot);
            sample.tangent * alpha_dot + tangent_dot * sample.alpha + beta_dot
        }
    }
}
