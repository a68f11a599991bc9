//! Telemetry records, sinks and CSV writers.
//!
//! The run telemetry CSV has one header row followed by one row per recorded
//! tick. Columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `t_s` | simulation time |
//! | `d{i}_px_m`, `d{i}_py_m` | position of drone `i` (1-based) |
//! | `d{i}_theta_rad` | heading |
//! | `d{i}_phi_m` | level-set value of the drone's own path |
//! | `d{i}_gamma_m` | oscillation offset |
//! | `d{i}_x_m` | path parameter |
//! | `d{i}_xbar_m` | trailing one-period average of the path parameter |
//! | `d{i}_u_m_s` | saturated consensus input |
//! | `d{i}_xbar_dot_d_m_s` | desired average parametric velocity |
//! | `d{i}_amp_m` | current oscillation amplitude |
//! | `d{i}_amp_d_m` | commanded amplitude |
//! | `d{i}_omega_rad_s` | heading rate |
//! | `d{i}_branch` | `interior` or `exterior` |
//! | `z{a}_{b}_m` | averaged parameter difference across edge `a`–`b` |
//! | `V` | Lyapunov value of the consensus arguments |
//!
//! Floats are written in scientific notation with 9 significant digits.

use std::io::Write;

use nalgebra::Vector2;

use crate::consensus::ConsensusTrajectory;
use crate::graph::Graph;
use crate::gvf::Branch;
use crate::oscillation::KaFit;

use super::SimError;

/// Per-drone slice of a [`TelemetryRecord`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneTelemetry {
    pub position: Vector2<f64>,
    pub heading: f64,
    pub phi: f64,
    pub gamma: f64,
    pub path_parameter: f64,
    pub averaged_parameter: f64,
    pub consensus_input: f64,
    pub desired_avg_velocity: f64,
    pub amplitude: f64,
    pub desired_amplitude: f64,
    pub omega: f64,
    pub branch: Branch,
}

/// Formation state at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    pub drones: Vec<DroneTelemetry>,
    /// `x̄_a − x̄_b` for each graph edge `(a, b)`, in edge order.
    pub edge_errors: Vec<f64>,
    pub lyapunov: f64,
}

impl TelemetryRecord {
    /// Every numeric field flattened in column order, for bitwise comparisons.
    pub fn values(&self) -> Vec<f64> {
        let mut out = vec![self.t];
        for d in &self.drones {
            out.extend_from_slice(&[
                d.position.x,
                d.position.y,
                d.heading,
                d.phi,
                d.gamma,
                d.path_parameter,
                d.averaged_parameter,
                d.consensus_input,
                d.desired_avg_velocity,
                d.amplitude,
                d.desired_amplitude,
                d.omega,
            ]);
        }
        out.extend_from_slice(&self.edge_errors);
        out.push(self.lyapunov);
        out
    }
}

/// Receives telemetry as the simulation produces it.
pub trait TelemetrySink {
    /// Called once before the first record.
    fn begin(&mut self, _graph: &Graph) -> Result<(), SimError> {
        Ok(())
    }

    fn record(&mut self, record: &TelemetryRecord) -> Result<(), SimError>;

    fn finish(&mut self) -> Result<(), SimError> {
        Ok(())
    }
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullSink;

impl TelemetrySink for NullSink {
    fn record(&mut self, _record: &TelemetryRecord) -> Result<(), SimError> {
        Ok(())
    }
}

/// Keeps every record in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub records: Vec<TelemetryRecord>,
}

impl TelemetrySink for MemorySink {
    fn record(&mut self, record: &TelemetryRecord) -> Result<(), SimError> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Streams records as CSV rows.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
    row: Vec<String>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(inner: W) -> Self {
        Self {
            writer: csv::Writer::from_writer(inner),
            row: Vec::new(),
        }
    }

    pub fn into_inner(self) -> Result<W, SimError> {
        self.writer.into_inner().map_err(|e| SimError::Telemetry(e.to_string()))
    }
}

/// Column names for a formation over `graph`.
pub fn telemetry_header(graph: &Graph) -> Vec<String> {
    let mut header = vec!["t_s".to_owned()];
    for i in 1..=graph.node_count() {
        for name in [
            "px_m",
            "py_m",
            "theta_rad",
            "phi_m",
            "gamma_m",
            "x_m",
            "xbar_m",
            "u_m_s",
            "xbar_dot_d_m_s",
            "amp_m",
            "amp_d_m",
            "omega_rad_s",
            "branch",
        ] {
            header.push(format!("d{i}_{name}"));
        }
    }
    for &(a, b) in graph.edges() {
        header.push(format!("z{}_{}_m", a + 1, b + 1));
    }
    header.push("V".to_owned());
    header
}

/// `value` with 9 significant digits.
pub fn format_float(value: f64) -> String {
    format!("{value:.8e}")
}

impl<W: Write> TelemetrySink for CsvSink<W> {
    fn begin(&mut self, graph: &Graph) -> Result<(), SimError> {
        self.writer
            .write_record(telemetry_header(graph))
            .map_err(|e| SimError::Telemetry(e.to_string()))
    }

    fn record(&mut self, record: &TelemetryRecord) -> Result<(), SimError> {
        self.row.clear();
        self.row.push(format_float(record.t));
        for d in &record.drones {
            for v in [
                d.position.x,
                d.position.y,
                d.heading,
                d.phi,
                d.gamma,
                d.path_parameter,
                d.averaged_parameter,
                d.consensus_input,
                d.desired_avg_velocity,
                d.amplitude,
                d.desired_amplitude,
                d.omega,
            ] {
                self.row.push(format_float(v));
            }
            self.row.push(d.branch.as_str().to_owned());
        }
        self.row.extend(record.edge_errors.iter().map(|&z| format_float(z)));
        self.row.push(format_float(record.lyapunov));
        self.writer
            .write_record(&self.row)
            .map_err(|e| SimError::Telemetry(e.to_string()))
    }

    fn finish(&mut self) -> Result<(), SimError> {
        self.writer.flush().map_err(|e| SimError::Telemetry(e.to_string()))
    }
}

/// Writes an integrator-consensus trajectory: time, states, inputs, edge
/// errors and the Lyapunov value.
pub fn write_consensus_csv<W: Write>(graph: &Graph, traj: &ConsensusTrajectory, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t_s".to_owned()];
    header.extend((1..=graph.node_count()).map(|i| format!("x{i}")));
    header.extend((1..=graph.node_count()).map(|i| format!("u{i}")));
    header.extend(graph.edges().iter().map(|&(a, b)| format!("z{}_{}", a + 1, b + 1)));
    header.push("V".to_owned());
    w.write_record(&header)?;
    for k in 0..traj.times.len() {
        let row = std::iter::once(traj.times[k])
            .chain(traj.states[k].iter().copied())
            .chain(traj.inputs[k].iter().copied())
            .chain(traj.edge_errors[k].iter().copied())
            .chain(std::iter::once(traj.lyapunov[k]))
            .map(format_float);
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a calibration table `amplitude_m, exact_m_s, model_m_s`.
pub fn write_fit_csv<W: Write>(fit: &KaFit, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["amplitude_m", "exact_m_s", "model_m_s"])?;
    for s in &fit.samples {
        w.write_record([format_float(s.amplitude), format_float(s.exact), format_float(s.model)])?;
    }
    w.flush()?;
    Ok(())
}
