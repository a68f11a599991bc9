//! Constant-speed unicycle and the heading-rate controller that aligns it
//! with its guiding vector field.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use crate::consensus::WindowAverager;
use crate::numeric::rk4_step;
use crate::oscillation::OscillationState;

/// 90° rotation `E = [[0, −1], [1, 0]]`.
pub fn rotation_90() -> Matrix2<f64> {
    Matrix2::new(0.0, -1.0, 1.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    /// Heading alignment gain `k_n`.
    pub k_n: f64,
    /// Turn-rate limit used only as a diagnostic threshold; the control law
    /// itself is not saturated.
    pub omega_max: f64,
}

/// Planar unicycle flying at constant speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unicycle {
    pub position: Vector2<f64>,
    /// Heading in `(−π, π]`.
    pub heading: f64,
    pub speed: f64,
}

impl Unicycle {
    pub fn new(position: Vector2<f64>, heading: f64, speed: f64) -> Self {
        Self {
            position,
            heading: normalize_angle(heading),
            speed,
        }
    }

    /// Air-relative velocity `R(θ) (v, 0)ᵀ`.
    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.heading.cos(), self.heading.sin()) * self.speed
    }

    /// Integrates `ṗ = R(θ)(v, 0)ᵀ + drift`, `θ̇ = ω` over `dt` with RK4 and
    /// `ω` held constant.
    pub fn step(&self, omega: f64, dt: f64, drift: &Vector2<f64>) -> Self {
        let speed = self.speed;
        let mut y = [self.position.x, self.position.y, self.heading];
        let mut work = [0.0; 15];
        rk4_step(
            |_, y, d| {
                d[0] = speed * y[2].cos() + drift.x;
                d[1] = speed * y[2].sin() + drift.y;
                d[2] = omega;
            },
            0.0,
            dt,
            &mut y,
            &mut work,
        );
        Self {
            position: Vector2::new(y[0], y[1]),
            heading: normalize_angle(y[2]),
            speed,
        }
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Heading rate `ω = ξ (k_n ṗ − ḟ)` with `ξ = fᵀ E / v²`.
///
/// For `‖f‖ = ‖ṗ‖ = v` this is `k_n sin(θ_f − θ) + θ̇_f`: proportional
/// alignment plus the feed-forward turn rate of the field.
pub fn heading_rate(k_n: f64, speed: f64, p_dot: &Vector2<f64>, f: &Vector2<f64>, f_dot: &Vector2<f64>) -> f64 {
    let xi = f.transpose() * rotation_90() / (speed * speed);
    (xi * (p_dot * k_n - f_dot))[0]
}

/// Everything one agent carries between control ticks.
#[derive(Debug, Clone)]
pub struct DroneState {
    pub vehicle: Unicycle,
    /// Latest path parameter `x`.
    pub path_parameter: f64,
    /// Trailing-window average of the path parameter.
    pub averager: WindowAverager,
    pub oscillation: OscillationState,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gvf::{field, field_derivative_at, Behavior, GvfGains};
    use crate::path::{ParametricPath, StraightLinePath};

    #[test]
    fn aligned_vehicle_needs_no_turn() {
        let f = Vector2::new(3.0, 4.0) * (16.0 / 5.0);
        assert_eq!(heading_rate(2.0, 16.0, &f, &f, &Vector2::zeros()), 0.0);
    }

    #[test]
    fn perpendicular_vehicle_turns_at_k_n() {
        let f = Vector2::new(16.0, 0.0);
        let p_dot = Vector2::new(0.0, 16.0);
        // field points clockwise of the vehicle: turn right
        assert!((heading_rate(1.0, 16.0, &p_dot, &f, &Vector2::zeros()) + 1.0).abs() < 1e-15);
        assert!((heading_rate(1.0, 16.0, &-p_dot, &f, &Vector2::zeros()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn feed_forward_recovers_field_turn_rate() {
        // f rotating at 0.3 rad/s: ḟ = 0.3 E f, and an aligned vehicle gets ω = 0.3.
        let f = Vector2::new(10.0, -12.49);
        let f_dot = rotation_90() * f * 0.3;
        let speed = f.norm();
        assert!((heading_rate(1.0, speed, &f, &f, &f_dot) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn straight_step_is_exact_translation() {
        let u = Unicycle::new(Vector2::new(1.0, 2.0), 0.7, 16.0);
        let next = u.step(0.0, 0.01, &Vector2::zeros());
        let expected = u.position + Vector2::new(0.7f64.cos(), 0.7f64.sin()) * 0.16;
        assert!((next.position - expected).norm() < 1e-14);
        assert_eq!(next.heading, u.heading);
    }

    #[test]
    fn constant_turn_closes_circle() {
        let omega = 0.5;
        let speed = 16.0;
        let dt = 0.01;
        let start = Unicycle::new(Vector2::new(5.0, -3.0), 0.2, speed);
        let period = 2.0 * PI / omega;
        let steps = (period / dt).round() as usize;
        let mut u = start;
        for _ in 0..steps {
            let next = u.step(omega, dt, &Vector2::zeros());
            assert!((next.position - u.position).norm() <= speed * dt + 1e-12);
            u = next;
        }
        // finish the fractional remainder of the period
        let rest = period - steps as f64 * dt;
        let u = u.step(omega, rest, &Vector2::zeros());
        assert!((u.position - start.position).norm() < 1e-6 * speed / omega);
    }

    #[test]
    fn heading_wraps() {
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
        let u = Unicycle::new(Vector2::zeros(), 3.1, 1.0).step(1.0, 0.1, &Vector2::zeros());
        assert!(u.heading <= PI && u.heading > -PI);
    }

    #[test]
    fn heading_error_decays_on_line() {
        let path = StraightLinePath::new(Vector2::zeros(), 0.0);
        let gains = GvfGains { k_e: 1.0 };
        let speed = 16.0;
        let dt = 0.01;
        let mut u = Unicycle::new(Vector2::new(0.0, 30.0), 2.5, speed);
        let mut errors = Vec::new();
        for _ in 0..4000 {
            let s = field(&path, &gains, speed, &Behavior::default(), &u.position);
            let p_dot = u.velocity();
            let f_dot = field_derivative_at(&path, &gains, speed, &Behavior::default(), &s, &u.position, &p_dot);
            let err = normalize_angle(s.f.y.atan2(s.f.x) - u.heading).abs();
            errors.push(err);
            u = u.step(heading_rate(1.0, speed, &p_dot, &s.f, &f_dot), dt, &Vector2::zeros());
        }
        // after the initial transient the error only shrinks
        let tail = &errors[500..];
        assert!(tail.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(*errors.last().unwrap() < 1e-6);
        assert!(path.phi(&u.position).abs() < 1e-3);
    }
}
