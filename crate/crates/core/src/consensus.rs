//! Non-negative input-saturated consensus on average path displacements.
//!
//! Each agent computes `u_i = sat(Σ_{j∈N_i} (x̄_j − x̄_i))` with the shifted
//! saturation of [`Saturation`], whose output lies in `[0, τ_h]`. Driving a
//! single integrator `ẋ̄_i = u_i` with it over a spanning tree makes every
//! edge difference vanish, and since the lower bound is zero the agent that
//! starts furthest ahead never moves: everybody converges to `max x̄(0)`.

use std::collections::VecDeque;

use thiserror::Error;

use crate::graph::Graph;
use crate::numeric::rk4_step;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsensusError {
    #[error("invalid saturation parameters: {0}")]
    InvalidSaturation(String),
    #[error("communication graph must be a spanning tree: {0}")]
    InvalidGraph(String),
    #[error("initial state has {got} entries, graph has {expected} nodes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid integration settings: {0}")]
    InvalidIntegration(String),
}

/// Piecewise-linear saturation: `τ_l` for `s ≤ 0`, `τ_h` for `s ≥ r`,
/// linear in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Saturation {
    tau_l: f64,
    tau_h: f64,
    r: f64,
}

impl Saturation {
    /// Saturation with the lower bound fixed at zero.
    pub fn new(tau_h: f64, r: f64) -> Result<Self, ConsensusError> {
        Self::with_lower_bound(0.0, tau_h, r)
    }

    pub fn with_lower_bound(tau_l: f64, tau_h: f64, r: f64) -> Result<Self, ConsensusError> {
        if !(tau_l >= 0.0 && tau_l.is_finite()) {
            return Err(ConsensusError::InvalidSaturation(format!("tau_l must be >= 0, got {tau_l}")));
        }
        if !(tau_h > tau_l && tau_h.is_finite()) {
            return Err(ConsensusError::InvalidSaturation(format!(
                "tau_h must exceed tau_l = {tau_l}, got {tau_h}"
            )));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(ConsensusError::InvalidSaturation(format!("r must be positive, got {r}")));
        }
        Ok(Self { tau_l, tau_h, r })
    }

    pub fn tau_l(&self) -> f64 {
        self.tau_l
    }

    pub fn tau_h(&self) -> f64 {
        self.tau_h
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s >= self.r {
            self.tau_h
        } else if s > 0.0 {
            (self.tau_h - self.tau_l) / self.r * s + self.tau_l
        } else {
            self.tau_l
        }
    }
}

/// `u_i = sat(Σ_j (x̄_j − x̄_i))`. An agent without neighbours gets `sat(0)`.
pub fn consensus_input<I>(sat: &Saturation, own: f64, neighbors: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    sat.eval(neighbors.into_iter().map(|x| x - own).sum())
}

/// Desired average parametric velocity `v − k_u u`.
pub fn desired_avg_velocity(speed: f64, k_u: f64, u: f64) -> f64 {
    speed - k_u * u
}

/// Upper saturation bound that maps `u ∈ [0, τ_h]` onto `ẋ̄_d ∈ [ε, v]`.
pub fn auto_tau_h(speed: f64, epsilon: f64, k_u: f64) -> f64 {
    (speed - epsilon) / k_u
}

/// Consensus arguments `η = −L x`, i.e. `η_i = Σ_j (x_j − x_i)`.
pub fn consensus_arguments(graph: &Graph, x: &[f64]) -> Vec<f64> {
    (0..graph.node_count())
        .map(|i| graph.neighbors(i).iter().map(|&j| x[j] - x[i]).sum())
        .collect()
}

/// Lyapunov function `V = Σ_i ∫₀^{η_i − r/2} s̄at(s) ds`, where
/// `s̄at(s) = sat(s + r/2) − τ_h/2` is the odd re-centred saturation.
///
/// Requires `τ_l = 0`.
pub fn lyapunov_value(sat: &Saturation, eta: &[f64]) -> f64 {
    assert_eq!(sat.tau_l, 0.0, "Lyapunov function is defined for tau_l = 0");
    let half_r = 0.5 * sat.r;
    let half_tau = 0.5 * sat.tau_h;
    eta.iter()
        .map(|&e| {
            let y = (e - half_r).abs();
            if y <= half_r {
                half_tau / sat.r * y * y
            } else {
                half_tau * half_r * 0.5 + half_tau * (y - half_r)
            }
        })
        .sum()
}

/// Trailing-window average of a sampled signal.
///
/// The average over `[t − T, t]` is computed with the trapezoid rule on the
/// stored samples, linearly interpolating the sample pair that straddles the
/// window start. Before a full window has elapsed the average covers
/// everything since the first sample.
#[derive(Debug, Clone)]
pub struct WindowAverager {
    window: f64,
    samples: VecDeque<(f64, f64)>,
    /// Trapezoid integral over consecutive stored samples.
    integral: f64,
    pushes_since_resum: usize,
}

impl WindowAverager {
    pub fn new(window: f64) -> Self {
        assert!(window > 0.0, "window length must be positive");
        Self {
            window,
            samples: VecDeque::new(),
            integral: 0.0,
            pushes_since_resum: 0,
        }
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    /// Appends a sample; times must be strictly increasing.
    pub fn push(&mut self, t: f64, x: f64) {
        if let Some(&(t_last, x_last)) = self.samples.back() {
            assert!(t > t_last, "samples must have increasing time stamps");
            self.integral += 0.5 * (t - t_last) * (x + x_last);
        }
        self.samples.push_back((t, x));
        // Drop samples whose successor is already at or before the window start.
        let start = t - self.window;
        while self.samples.len() >= 2 && self.samples[1].0 <= start {
            let (t0, x0) = self.samples.pop_front().expect("len >= 2");
            let (t1, x1) = self.samples[0];
            self.integral -= 0.5 * (t1 - t0) * (x0 + x1);
        }
        self.pushes_since_resum += 1;
        if self.pushes_since_resum >= self.samples.len().max(64) {
            self.integral = self.stored_integral();
            self.pushes_since_resum = 0;
        }
    }

    fn stored_integral(&self) -> f64 {
        self.samples
            .iter()
            .zip(self.samples.iter().skip(1))
            .map(|(&(t0, x0), &(t1, x1))| 0.5 * (t1 - t0) * (x0 + x1))
            .sum()
    }

    /// Current trailing average; `None` before the first sample.
    pub fn average(&self) -> Option<f64> {
        self.average_with(self.integral)
    }

    /// The same average recomputed from the stored samples.
    pub fn recomputed_average(&self) -> Option<f64> {
        self.average_with(self.stored_integral())
    }

    fn average_with(&self, integral: f64) -> Option<f64> {
        let &(t_end, x_end) = self.samples.back()?;
        let &(t_first, x_first) = self.samples.front()?;
        if self.samples.len() == 1 {
            return Some(x_end);
        }
        let start = t_end - self.window;
        if start <= t_first {
            return Some(integral / (t_end - t_first));
        }
        // Remove the part of the first interval that lies before the window.
        let (t1, x1) = self.samples[1];
        let x_start = x_first + (x1 - x_first) * (start - t_first) / (t1 - t_first);
        let excess = 0.5 * (start - t_first) * (x_first + x_start);
        Some((integral - excess) / self.window)
    }
}

/// Trajectory of the single-integrator consensus harness.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub edge_errors: Vec<Vec<f64>>,
    pub lyapunov: Vec<f64>,
}

impl ConsensusTrajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the initial sample")
    }

    pub fn final_max_edge_error(&self) -> f64 {
        max_abs(self.edge_errors.last().expect("non-empty"))
    }

    pub fn final_max_input(&self) -> f64 {
        max_abs(self.inputs.last().expect("non-empty"))
    }
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Integrates `ẋ_i = sat(Σ_j (x_j − x_i))` with fixed-step RK4 from `x0`
/// until `t_end`, recording every `record_every`-th step (and the last one).
pub fn integrator_consensus_sim(
    graph: &Graph,
    sat: &Saturation,
    x0: &[f64],
    dt: f64,
    t_end: f64,
    record_every: usize,
) -> Result<ConsensusTrajectory, ConsensusError> {
    let report = graph.check_tree();
    if !report.is_tree() {
        return Err(ConsensusError::InvalidGraph(report.problems().join("; ")));
    }
    if sat.tau_l != 0.0 {
        return Err(ConsensusError::InvalidSaturation("tau_l must be 0".into()));
    }
    if x0.len() != graph.node_count() {
        return Err(ConsensusError::DimensionMismatch {
            expected: graph.node_count(),
            got: x0.len(),
        });
    }
    if !(dt > 0.0 && t_end >= 0.0 && dt.is_finite() && t_end.is_finite()) || record_every == 0 {
        return Err(ConsensusError::InvalidIntegration(format!(
            "dt={dt}, t_end={t_end}, record_every={record_every}"
        )));
    }

    let steps = (t_end / dt).round() as usize;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut work = vec![0.0; 5 * n];
    let mut traj = ConsensusTrajectory {
        times: Vec::new(),
        states: Vec::new(),
        inputs: Vec::new(),
        edge_errors: Vec::new(),
        lyapunov: Vec::new(),
    };
    let record = |t: f64, x: &[f64], traj: &mut ConsensusTrajectory| {
        let eta = consensus_arguments(graph, x);
        traj.times.push(t);
        traj.states.push(x.to_vec());
        traj.inputs.push(eta.iter().map(|&e| sat.eval(e)).collect());
        traj.edge_errors.push(graph.edge_differences(x));
        traj.lyapunov.push(lyapunov_value(sat, &eta));
    };
    record(0.0, &x, &mut traj);
    for k in 0..steps {
        let t = k as f64 * dt;
        rk4_step(
            |_, y, dydt| {
                for (i, d) in dydt.iter_mut().enumerate() {
                    *d = consensus_input(sat, y[i], graph.neighbors(i).iter().map(|&j| y[j]));
                }
            },
            t,
            dt,
            &mut x,
            &mut work,
        );
        if (k + 1) % record_every == 0 || k + 1 == steps {
            record((k + 1) as f64 * dt, &x, &mut traj);
        }
    }
    Ok(traj)
}
