//! Closed loop: measure at each cycle boundary, decide, simulate a cycle.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{expand_schedule, Controller};
use crate::dynamics::{dependent_controls, ControlMode, JunctionControls};
use crate::error::Result;
use crate::net::{Circuit, CircuitKind};
use crate::scenario::Scenario;
use crate::sim::{SafetyReport, Simulator, TripRecord};

/// Timing actually applied at one junction during one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppliedTiming {
    pub g: f64,
    pub y1: f64,
    pub y2: f64,
    pub r1: f64,
    pub r2: f64,
}

impl AppliedTiming {
    pub fn new(c: &JunctionControls, cycle: f64) -> Result<Self> {
        let d = dependent_controls(c, cycle)?;
        Ok(Self {
            g: c.green,
            y1: c.yellow_first,
            y2: c.yellow_second,
            r1: d.red_first,
            r2: d.red_second,
        })
    }

    /// (green, yellow, red) of the first or second stage.
    pub fn stage(&self, second: bool, cycle: f64) -> (f64, f64, f64) {
        if second {
            (cycle - self.g, self.y2, self.r2)
        } else {
            (self.g, self.y1, self.r1)
        }
    }
}

/// Mean vehicle count per circuit link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitMetrics {
    pub per_circuit: Vec<f64>,
    pub main: f64,
    pub secondary: f64,
}

pub fn circuit_metrics(counts: &[f64], circuits: &[Circuit]) -> CircuitMetrics {
    let per_circuit: Vec<f64> = circuits
        .iter()
        .map(|c| {
            if c.links.is_empty() {
                0.0
            } else {
                c.links.iter().map(|l| counts[l.index()]).sum::<f64>() / c.links.len() as f64
            }
        })
        .collect();
    let mean_of = |kind: CircuitKind| {
        let v: Vec<f64> = circuits
            .iter()
            .zip(&per_circuit)
            .filter(|(c, _)| c.kind == kind)
            .map(|(_, m)| *m)
            .collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    CircuitMetrics {
        main: mean_of(CircuitKind::Main),
        secondary: mean_of(CircuitKind::Secondary),
        per_circuit,
    }
}

/// State at the end of cycle `k`, with the timings used during it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub k: usize,
    pub clock: f64,
    pub running: u64,
    pub ended_cum: u64,
    /// Mean travel time of every trip ended so far; NaN before the first.
    pub mean_tt: f64,
    pub spawned: u64,
    pub queued: u64,
    pub circuits: CircuitMetrics,
    pub junctions: Vec<AppliedTiming>,
    /// Link counts measured at the start of the cycle.
    pub counts_start: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub mode: ControlMode,
    pub gamma: f64,
    pub seed: u64,
    pub cycles: usize,
    pub final_running: u64,
    pub total_ended: u64,
    pub mean_travel_time_s: Option<f64>,
    pub spawned: u64,
    pub queued: u64,
    pub safety: SafetyReport,
    pub riccati_residual: Option<f64>,
    pub closed_loop_radius: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub cycle: f64,
    pub records: Vec<CycleRecord>,
    pub trips: Vec<TripRecord>,
    pub circuits: Vec<Circuit>,
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput> {
    let controller = Controller::design(&scenario.network, scenario.controller)?;
    run_with_controller(scenario, &controller)
}

pub fn run_with_controller(scenario: &Scenario, controller: &Controller) -> Result<RunOutput> {
    let net = &scenario.network;
    let cycle = scenario.controller.cycle;
    let initial = controller
        .nominal
        .iter()
        .map(|c| expand_schedule(c, cycle))
        .collect::<Result<Vec<_>>>()?;
    let mut sim = Simulator::new(
        net,
        scenario.sim,
        scenario.contention,
        &scenario.demand,
        initial,
        scenario.config.seed,
    )?;

    let mut records = Vec::with_capacity(scenario.cycles);
    let mut tt_sum = 0.0;
    let mut seen_trips = 0;
    for k in 0..scenario.cycles {
        let counts = sim.measure_state();
        let controls = controller.decide(&counts);
        let schedules = controls
            .iter()
            .map(|c| expand_schedule(c, cycle))
            .collect::<Result<Vec<_>>>()?;
        let timings = controls
            .iter()
            .map(|c| AppliedTiming::new(c, cycle))
            .collect::<Result<Vec<_>>>()?;
        sim.apply_schedules(schedules)?;
        sim.run_for(cycle);

        for t in &sim.trips()[seen_trips..] {
            tt_sum += t.travel_time();
        }
        seen_trips = sim.trips().len();
        let after = sim.measure_state();
        records.push(CycleRecord {
            k,
            clock: (k + 1) as f64 * cycle,
            running: sim.running(),
            ended_cum: sim.ended(),
            mean_tt: if seen_trips == 0 {
                f64::NAN
            } else {
                tt_sum / seen_trips as f64
            },
            spawned: sim.spawned(),
            queued: sim.queued(),
            circuits: circuit_metrics(&after, &net.circuits),
            junctions: timings,
            counts_start: counts,
        });
    }

    let c = &scenario.config;
    let summary = RunSummary {
        label: c.label(),
        mode: c.control.mode,
        gamma: c.control.gamma,
        seed: c.seed,
        cycles: records.len(),
        final_running: sim.running(),
        total_ended: sim.ended(),
        mean_travel_time_s: (seen_trips > 0).then(|| tt_sum / seen_trips as f64),
        spawned: sim.spawned(),
        queued: sim.queued(),
        safety: sim.safety(),
        riccati_residual: controller
            .synthesis
            .residual
            .is_finite()
            .then_some(controller.synthesis.residual),
        closed_loop_radius: controller.closed_loop_radius,
    };
    Ok(RunOutput {
        summary,
        cycle,
        records,
        trips: sim.trips().to_vec(),
        circuits: net.circuits.clone(),
    })
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        String::new()
    }
}

impl RunOutput {
    pub fn write_cycle_log<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let nj = self.records.first().map_or(0, |r| r.junctions.len());
        let mut header: Vec<String> = ["k", "clock_s", "running", "ended_cum", "mean_tt_s"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for j in 0..nj {
            for f in ["g", "y1", "y2", "r1", "r2"] {
                header.push(format!("J{j}_{f}"));
            }
        }
        out.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.k.to_string(),
                fmt(r.clock),
                r.running.to_string(),
                r.ended_cum.to_string(),
                fmt(r.mean_tt),
            ];
            for t in &r.junctions {
                row.extend([t.g, t.y1, t.y2, t.r1, t.r2].map(fmt));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_trips<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["vehicle_id", "origin", "dest", "depart_s", "arrive_s", "tt_s"])?;
        for t in &self.trips {
            out.write_record([
                t.vehicle_id.to_string(),
                t.origin.to_string(),
                t.destination.to_string(),
                fmt(t.depart),
                fmt(t.arrive),
                fmt(t.travel_time()),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_circuits<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["k".to_string(), "clock_s".to_string()];
        for (i, c) in self.circuits.iter().enumerate() {
            let kind = match c.kind {
                CircuitKind::Main => "main",
                CircuitKind::Secondary => "secondary",
            };
            header.push(format!("C{i}_{kind}"));
        }
        header.push("main_mean".into());
        header.push("secondary_mean".into());
        out.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.k.to_string(), fmt(r.clock)];
            row.extend(r.circuits.per_circuit.iter().map(|&v| fmt(v)));
            row.push(fmt(r.circuits.main));
            row.push(fmt(r.circuits.secondary));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }

    /// Write cycle_log.csv, trips.csv, circuits.csv and summary.json.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_cycle_log(BufWriter::new(File::create(dir.join("cycle_log.csv"))?))?;
        self.write_trips(BufWriter::new(File::create(dir.join("trips.csv"))?))?;
        self.write_circuits(BufWriter::new(File::create(dir.join("circuits.csv"))?))?;
        std::fs::write(dir.join("summary.json"), self.summary_json() + "\n")?;
        Ok(())
    }
}
