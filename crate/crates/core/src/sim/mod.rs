//! Lock-step closed-loop simulation of a formation.
//!
//! Each tick every drone measures its path parameter and updates its
//! trailing one-period average. Those averages form the snapshot that is
//! exchanged over the graph. From the snapshot each drone computes its
//! consensus input, the average velocity it should realise, and the
//! amplitude that achieves it. It then steers along the oscillating guiding
//! field and integrates one step.
//!
//! A drone that is ahead of its neighbours in averaged path parameter
//! receives a positive input and slows down by oscillating. Drones that are
//! behind fly straight.

mod scenario;
mod telemetry;

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::consensus::{desired_avg_velocity, lyapunov_value, WindowAverager};
use crate::controller::{heading_rate, DroneState, Unicycle};
use crate::gvf::{field, field_derivative_at, Behavior};
use crate::oscillation::{amplitude_for_velocity, OscillationState};
use crate::path::ParametricPath;

pub use scenario::{
    AutoOr, ConsensusSection, DroneSpec, GraphSection, GuidanceSection, IntegrationSection, KaSetting,
    OscillationSection, Override, PathSpec, parse_graph_file, ResolvedDrone, ResolvedScenario, SamplingSection, Scenario,
    ScenarioError, Violation, WindSection, FIT_SAMPLES,
};
pub use telemetry::{
    format_float, telemetry_header, write_consensus_csv, write_fit_csv, CsvSink, DroneTelemetry, MemorySink,
    NullSink, TelemetryRecord, TelemetrySink,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario is invalid:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("telemetry output failed: {0}")]
    Telemetry(String),
    #[error("state became non-finite at t = {t} s (drone {drone})")]
    NonFinite { t: f64, drone: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Evaluate drones on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

/// End-of-run figures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub drones: usize,
    pub ticks: usize,
    pub t_end_s: f64,
    pub k_a: f64,
    pub tau_h: f64,
    pub sync_threshold_m: f64,
    /// Time after which the largest edge error stayed below the threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settling_time_s: Option<f64>,
    pub final_max_edge_error_m: f64,
    /// Largest path-parameter difference between any two drones.
    pub final_max_pairwise_parameter_m: f64,
    pub final_max_abs_phi_m: f64,
    pub final_amplitudes_m: Vec<f64>,
    pub max_abs_omega_rad_s: f64,
    pub omega_max_rad_s: f64,
    pub min_ground_speed_m_s: f64,
    pub max_ground_speed_m_s: f64,
    pub max_step_displacement_m: f64,
    pub overrides: Vec<String>,
}

impl Summary {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summary is plain data")
    }
}

struct Agent<'a> {
    spec: &'a ResolvedDrone,
    state: DroneState,
}

/// Per-drone result of one tick, before the state is advanced.
struct TickOutput {
    telemetry: DroneTelemetry,
    ground_speed: f64,
    displacement: f64,
}

/// Validates and runs `scenario`, streaming telemetry into `sink`.
pub fn run(scenario: &Scenario, sink: &mut dyn TelemetrySink, options: RunOptions) -> Result<Summary, SimError> {
    let resolved = scenario.resolve().map_err(SimError::Invalid)?;
    run_resolved(&resolved, sink, options)
}

/// Runs an already validated scenario.
pub fn run_resolved(
    scenario: &ResolvedScenario,
    sink: &mut dyn TelemetrySink,
    options: RunOptions,
) -> Result<Summary, SimError> {
    let osc = scenario.oscillation;
    let w = osc.w_gamma;
    let speed = osc.speed;
    let dt = scenario.dt;
    let graph = &scenario.graph;
    let sat = &scenario.saturation;
    let n = scenario.drones.len();

    let mut agents: Vec<Agent> = scenario
        .drones
        .iter()
        .map(|spec| {
            let heading = spec.heading.unwrap_or_else(|| {
                let s = field(&spec.path, &spec.gvf, speed, &Behavior::default(), &spec.position);
                s.f.y.atan2(s.f.x)
            });
            Agent {
                spec,
                state: DroneState {
                    vehicle: Unicycle::new(spec.position, heading, speed),
                    path_parameter: spec.path.parameter_of(&spec.position),
                    averager: WindowAverager::new(osc.period()),
                    oscillation: OscillationState::default(),
                },
            }
        })
        .collect();

    // Averaged parameters of past ticks, newest last, for delayed links.
    let mut history: VecDeque<Vec<f64>> = VecDeque::with_capacity(scenario.comm_delay_ticks + 1);
    let mut averaged = vec![0.0; n];
    let mut summary = Summary {
        name: scenario.name.clone(),
        seed: scenario.seed,
        drones: n,
        ticks: scenario.steps,
        t_end_s: scenario.steps as f64 * dt,
        k_a: osc.k_a,
        tau_h: sat.tau_h(),
        sync_threshold_m: scenario.sync_threshold,
        settling_time_s: Some(0.0),
        final_max_edge_error_m: 0.0,
        final_max_pairwise_parameter_m: 0.0,
        final_max_abs_phi_m: 0.0,
        final_amplitudes_m: Vec::new(),
        max_abs_omega_rad_s: 0.0,
        omega_max_rad_s: scenario.drones.first().map_or(f64::NAN, |d| d.controller.omega_max),
        min_ground_speed_m_s: f64::INFINITY,
        max_ground_speed_m_s: 0.0,
        max_step_displacement_m: 0.0,
        overrides: Vec::new(),
    };

    sink.begin(graph)?;
    for k in 0..=scenario.steps {
        let t = k as f64 * dt;
        let last = k == scenario.steps;

        let measure = |agent: &mut Agent| {
            let x = agent.spec.path.parameter_of(&agent.state.vehicle.position);
            agent.state.path_parameter = x;
            agent.state.averager.push(t, x);
            agent.state.averager.average().expect("a sample was just pushed")
        };
        if options.parallel {
            agents.par_iter_mut().map(measure).collect_into_vec(&mut averaged);
        } else {
            averaged = agents.iter_mut().map(measure).collect();
        }

        if history.len() > scenario.comm_delay_ticks {
            history.pop_front();
        }
        history.push_back(averaged.clone());
        let delayed = history.front().expect("history holds the current snapshot");

        // Positive when a drone is ahead of its neighbours.
        let lag = |i: usize, neighbours: &[f64]| -> f64 {
            graph.neighbors(i).iter().map(|&j| averaged[i] - neighbours[j]).sum()
        };

        let step = |(i, agent): (usize, &mut Agent)| -> TickOutput {
            let spec = agent.spec;
            let state = &mut agent.state;
            let u = sat.eval(lag(i, delayed));
            let xdot_d = desired_avg_velocity(speed, scenario.k_u, u);
            let amp_d = amplitude_for_velocity(&osc, xdot_d);
            let behavior = Behavior::from_oscillation(&state.oscillation, w, t);
            let sample = field(&spec.path, &spec.gvf, speed, &behavior, &state.vehicle.position);
            let p_dot = state.vehicle.velocity();
            let f_dot = field_derivative_at(&spec.path, &spec.gvf, speed, &behavior, &sample, &state.vehicle.position, &p_dot);
            let omega = heading_rate(spec.controller.k_n, speed, &p_dot, &sample.f, &f_dot);
            let telemetry = DroneTelemetry {
                position: state.vehicle.position,
                heading: state.vehicle.heading,
                phi: sample.phi,
                gamma: behavior.gamma,
                path_parameter: state.path_parameter,
                averaged_parameter: averaged[i],
                consensus_input: u,
                desired_avg_velocity: xdot_d,
                amplitude: state.oscillation.amplitude,
                desired_amplitude: amp_d,
                omega,
                branch: sample.branch,
            };
            let ground_speed = (p_dot + scenario.wind).norm();
            let mut displacement = 0.0;
            if !last {
                let next = state.vehicle.step(omega, dt, &scenario.wind);
                displacement = (next.position - state.vehicle.position).norm();
                state.vehicle = next;
                state.oscillation = state.oscillation.update(&osc, amp_d, dt);
            }
            TickOutput {
                telemetry,
                ground_speed,
                displacement,
            }
        };
        let outputs: Vec<TickOutput> = if options.parallel {
            agents.par_iter_mut().enumerate().map(step).collect()
        } else {
            agents.iter_mut().enumerate().map(step).collect()
        };

        let edge_errors = graph.edge_differences(&averaged);
        let eta: Vec<f64> = (0..n).map(|i| lag(i, &averaged)).collect();
        let record = TelemetryRecord {
            t,
            drones: outputs.iter().map(|o| o.telemetry).collect(),
            edge_errors,
            lyapunov: lyapunov_value(sat, &eta),
        };

        for (i, o) in outputs.iter().enumerate() {
            let d = &o.telemetry;
            if !(d.position.x.is_finite() && d.position.y.is_finite() && d.omega.is_finite()) {
                return Err(SimError::NonFinite { t, drone: i + 1 });
            }
            summary.max_abs_omega_rad_s = summary.max_abs_omega_rad_s.max(d.omega.abs());
            summary.min_ground_speed_m_s = summary.min_ground_speed_m_s.min(o.ground_speed);
            summary.max_ground_speed_m_s = summary.max_ground_speed_m_s.max(o.ground_speed);
            summary.max_step_displacement_m = summary.max_step_displacement_m.max(o.displacement);
        }
        let max_edge = record.edge_errors.iter().fold(0.0f64, |m, z| m.max(z.abs()));
        if max_edge >= scenario.sync_threshold {
            summary.settling_time_s = None;
        } else if summary.settling_time_s.is_none() {
            summary.settling_time_s = Some(t);
        }
        if last {
            let (lo, hi) = record
                .drones
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                    (lo.min(d.path_parameter), hi.max(d.path_parameter))
                });
            summary.final_max_edge_error_m = max_edge;
            summary.final_max_pairwise_parameter_m = hi - lo;
            summary.final_max_abs_phi_m = record.drones.iter().fold(0.0, |m, d| m.max(d.phi.abs()));
            summary.final_amplitudes_m = record.drones.iter().map(|d| d.amplitude).collect();
        }
        if last || k % scenario.telemetry_every == 0 {
            sink.record(&record)?;
        }
    }
    sink.finish()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_drones(x2: f64) -> Scenario {
        let text = format!(
            r#"
            speed_m_s = 8.0
            [integration]
            dt_s = 0.01
            t_end_s = 20.0
            [oscillation]
            w_gamma_rad_s = 0.6
            k_a = 1.35
            [consensus]
            k_u = 0.16
            r_m = 50.0
            [graph]
            edges = [[1, 2]]
            [[drones]]
            id = 1
            path = {{ origin_m = [0.0, 0.0], heading_rad = 0.0 }}
            initial_path_parameter_m = 0.0
            [[drones]]
            id = 2
            path = {{ origin_m = [0.0, 40.0], heading_rad = 0.0 }}
            initial_path_parameter_m = {x2}
            "#
        );
        Scenario::from_toml_str(&text).unwrap()
    }

    #[test]
    fn equal_start_flies_straight() {
        let mut sink = MemorySink::default();
        let summary = run(&two_drones(0.0), &mut sink, RunOptions::default()).unwrap();
        assert_eq!(sink.records.len(), 2001);
        for r in &sink.records {
            assert_eq!(r.edge_errors, vec![0.0]);
            for d in &r.drones {
                assert_eq!(d.amplitude, 0.0);
                assert_eq!(d.consensus_input, 0.0);
                assert!(d.heading.abs() < 1e-12);
            }
        }
        assert!(summary.final_max_abs_phi_m < 1e-9);
        assert_eq!(summary.settling_time_s, Some(0.0));
    }

    #[test]
    fn drone_ahead_oscillates_and_one_behind_does_not() {
        let mut sink = MemorySink::default();
        run(&two_drones(20.0), &mut sink, RunOptions::default()).unwrap();
        let r = &sink.records[500];
        assert!(r.drones[1].consensus_input > 0.0);
        assert!(r.drones[1].desired_amplitude > 0.0);
        assert_eq!(r.drones[0].consensus_input, 0.0);
        assert_eq!(r.drones[0].desired_amplitude, 0.0);
        let first = sink.records.first().unwrap().edge_errors[0];
        let final_ = sink.records.last().unwrap().edge_errors[0];
        assert!(final_.abs() < first.abs());
    }

    #[test]
    fn step_displacement_bounded_by_speed() {
        let summary = run(&two_drones(15.0), &mut NullSink, RunOptions::default()).unwrap();
        assert!(summary.max_step_displacement_m <= 8.0 * 0.01 + 1e-12);
        assert!((summary.min_ground_speed_m_s - 8.0).abs() < 1e-9);
        assert!((summary.max_ground_speed_m_s - 8.0).abs() < 1e-9);
    }

    #[test]
    fn parallel_matches_sequential() {
        let s = two_drones(25.0);
        let mut a = MemorySink::default();
        let mut b = MemorySink::default();
        run(&s, &mut a, RunOptions { parallel: false }).unwrap();
        run(&s, &mut b, RunOptions { parallel: true }).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            let bits = |r: &TelemetryRecord| r.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(ra), bits(rb));
        }
    }

    #[test]
    fn invalid_scenario_is_not_run() {
        let mut s = two_drones(0.0);
        s.graph.edges.clear();
        let err = run(&s, &mut NullSink, RunOptions::default()).unwrap_err();
        assert!(matches!(err, SimError::Invalid(ref v) if !v.is_empty()));
        assert!(err.to_string().contains("disconnected"));
    }

    #[test]
    fn decimated_telemetry_keeps_final_tick() {
        let mut s = two_drones(5.0);
        s.integration.telemetry_every_ticks = 300;
        let mut sink = MemorySink::default();
        run(&s, &mut sink, RunOptions::default()).unwrap();
        let times: Vec<f64> = sink.records.iter().map(|r| r.t).collect();
        assert_eq!(times.len(), 8);
        assert_eq!(*times.last().unwrap(), 20.0);
    }

    #[test]
    fn summary_serializes() {
        let summary = run(&two_drones(5.0), &mut NullSink, RunOptions::default()).unwrap();
        let text = summary.to_toml();
        let back: toml::Table = toml::from_str(&text).unwrap();
        assert_eq!(back["drones"].as_integer(), Some(2));
        assert!(back.contains_key("max_abs_omega_rad_s"));
    }
}
