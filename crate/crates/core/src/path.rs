//! Desired paths in implicit (level-set) and parametric form.

use nalgebra::{Matrix2, Vector2};

/// A planar path given both as the zero set of a twice-differentiable
/// level-set function `φ` and by an arc-length parametrization `f(x)`.
pub trait ParametricPath: Send + Sync {
    /// Level-set value at `p`; zero on the path.
    fn phi(&self, p: &Vector2<f64>) -> f64;

    fn gradient(&self, p: &Vector2<f64>) -> Vector2<f64>;

    fn hessian(&self, p: &Vector2<f64>) -> Matrix2<f64>;

    /// Point on the path at parameter `x`.
    fn point_at(&self, x: f64) -> Vector2<f64>;

    /// Path parameter of the point on the path closest to `p`.
    fn parameter_of(&self, p: &Vector2<f64>) -> f64;

    /// Unit tangent at `p`, pointing towards increasing path parameter.
    fn tangent(&self, p: &Vector2<f64>) -> Vector2<f64>;

    /// Time derivative of [`ParametricPath::tangent`] when moving with velocity `p_dot`.
    fn tangent_rate(&self, p: &Vector2<f64>, p_dot: &Vector2<f64>) -> Vector2<f64>;
}

/// Straight line through `origin` with direction angle `heading`.
///
/// `φ(p) = (p_y − b)·cos α − (p_x − a)·sin α` is the signed distance to the
/// line, positive on the left of the direction of travel, and
/// `f(x) = (a + x cos α, b + x sin α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StraightLinePath {
    pub origin: Vector2<f64>,
    pub heading: f64,
}

impl StraightLinePath {
    pub fn new(origin: Vector2<f64>, heading: f64) -> Self {
        Self { origin, heading }
    }

    fn direction(&self) -> Vector2<f64> {
        Vector2::new(self.heading.cos(), self.heading.sin())
    }
}

impl ParametricPath for StraightLinePath {
    fn phi(&self, p: &Vector2<f64>) -> f64 {
        let d = p - self.origin;
        d.y * self.heading.cos() - d.x * self.heading.sin()
    }

    fn gradient(&self, _p: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(-self.heading.sin(), self.heading.cos())
    }

    fn hessian(&self, _p: &Vector2<f64>) -> Matrix2<f64> {
        Matrix2::zeros()
    }

    fn point_at(&self, x: f64) -> Vector2<f64> {
        self.origin + self.direction() * x
    }

    fn parameter_of(&self, p: &Vector2<f64>) -> f64 {
        (p - self.origin).dot(&self.direction())
    }

    fn tangent(&self, _p: &Vector2<f64>) -> Vector2<f64> {
        self.direction()
    }

    fn tangent_rate(&self, _p: &Vector2<f64>, _p_dot: &Vector2<f64>) -> Vector2<f64> {
        Vector2::zeros()
    }
}
