//! Per-cycle controller: feedback around the nominal plan, projection onto
//! the feasible control set, and expansion into a within-cycle signal
//! schedule.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    classical_b_matrix, control_ids, dependent_controls, extended_b_matrix, ControlId, ControlKind, ControlMatrix,
    ControlMode, JunctionControls,
};
use crate::error::{Error, Result};
use crate::lqr::{closed_loop_radius, solve_discounted_dare, GainSynthesis, LqWeights};
use crate::net::{LinkId, NetworkModel, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub g_min: f64,
    pub cycle: f64,
}

impl ControlBounds {
    pub fn new(g_min: f64, cycle: f64) -> Result<Self> {
        if !(cycle > 0.0) || !(g_min >= 0.0) || 2.0 * g_min > cycle {
            return Err(Error::InvalidArgument(format!(
                "need cycle > 0 and 0 <= 2 g_min <= cycle (g_min {g_min}, cycle {cycle})"
            )));
        }
        Ok(Self { g_min, cycle })
    }
}

/// `u = u_nom - L (x - x_nom)`, unprojected.
pub fn feedback(
    counts: &DVector<f64>,
    nominal_counts: &DVector<f64>,
    nominal_controls: &DVector<f64>,
    gain: &DMatrix<f64>,
) -> DVector<f64> {
    nominal_controls - gain * (counts - nominal_counts)
}

/// Clamp green, then the first yellow, then the second yellow.
pub fn project(raw: &JunctionControls, bounds: &ControlBounds) -> JunctionControls {
    let c = bounds.cycle;
    let green = clamp(raw.green, bounds.g_min, c - bounds.g_min);
    JunctionControls {
        green,
        yellow_first: clamp(raw.yellow_first, 0.0, c - green),
        yellow_second: clamp(raw.yellow_second, 0.0, green),
    }
}

pub fn project_controls(raw: &[JunctionControls], bounds: &ControlBounds) -> Vec<JunctionControls> {
    raw.iter().map(|r| project(r, bounds)).collect()
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    if v.is_nan() {
        lo
    } else {
        v.max(lo).min(hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignalColor {
    Green,
    Yellow,
    Red,
}

impl fmt::Display for SignalColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalColor::Green => "G",
            SignalColor::Yellow => "Y",
            SignalColor::Red => "R",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseInterval {
    pub color: SignalColor,
    pub start: f64,
    pub end: f64,
}

/// Within-cycle phases of one junction; zero-length intervals are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSchedule {
    pub cycle: f64,
    pub stages: [Vec<PhaseInterval>; 2],
}

/// Stage 1 runs G, Y, R from the start of the cycle; stage 2 runs R, Y
/// ending at the switch `t = g`, then G.
pub fn expand_schedule(controls: &JunctionControls, cycle: f64) -> Result<SignalSchedule> {
    dependent_controls(controls, cycle)?;
    let g = controls.green;
    let y1 = controls.yellow_first;
    let y2 = controls.yellow_second;
    let first = intervals(&[
        (SignalColor::Green, 0.0, g),
        (SignalColor::Yellow, g, (g + y1).min(cycle)),
        (SignalColor::Red, (g + y1).min(cycle), cycle),
    ]);
    let second = intervals(&[
        (SignalColor::Red, 0.0, (g - y2).max(0.0)),
        (SignalColor::Yellow, (g - y2).max(0.0), g),
        (SignalColor::Green, g, cycle),
    ]);
    Ok(SignalSchedule {
        cycle,
        stages: [first, second],
    })
}

fn intervals(parts: &[(SignalColor, f64, f64)]) -> Vec<PhaseInterval> {
    parts
        .iter()
        .filter(|(_, s, e)| e > s)
        .map(|&(color, start, end)| PhaseInterval { color, start, end })
        .collect()
}

/// Stage durations read back from a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageDurations {
    pub green: f64,
    pub yellow: f64,
    pub red: f64,
}

impl SignalSchedule {
    /// Color shown to `stage` at `cycle_clock` seconds; the clock wraps at the cycle.
    pub fn color_at(&self, stage: Stage, cycle_clock: f64) -> SignalColor {
        let t = cycle_clock.rem_euclid(self.cycle);
        let phases = &self.stages[stage.index()];
        phases
            .iter()
            .find(|p| t >= p.start && t < p.end)
            .or(phases.last())
            .map(|p| p.color)
            .unwrap_or(SignalColor::Red)
    }

    /// Seconds from `cycle_clock` until `stage` next shows red, assuming
    /// the schedule repeats; `None` if it never does.
    pub fn time_to_red(&self, stage: Stage, cycle_clock: f64) -> Option<f64> {
        let t = cycle_clock.rem_euclid(self.cycle);
        let phases = &self.stages[stage.index()];
        let reds = phases.iter().filter(|p| p.color == SignalColor::Red);
        let mut best: Option<f64> = None;
        for p in reds {
            let wait = if p.start > t {
                p.start - t
            } else if t < p.end {
                0.0
            } else {
                p.start + self.cycle - t
            };
            best = Some(best.map_or(wait, |b: f64| b.min(wait)));
        }
        best
    }

    pub fn durations(&self, stage: Stage) -> StageDurations {
        let mut d = StageDurations::default();
        for p in &self.stages[stage.index()] {
            let len = p.end - p.start;
            match p.color {
                SignalColor::Green => d.green += len,
                SignalColor::Yellow => d.yellow += len,
                SignalColor::Red => d.red += len,
            }
        }
        d
    }

    /// Turn the first `secs` of every green that follows a red into red
    /// (all-red clearance). Tiling is preserved.
    pub fn with_clearance(mut self, secs: f64) -> SignalSchedule {
        if secs <= 0.0 {
            return self;
        }
        for phases in &mut self.stages {
            let mut out: Vec<PhaseInterval> = Vec::with_capacity(phases.len() + 1);
            for (i, p) in phases.iter().enumerate() {
                let prev = if i == 0 { phases.last() } else { phases.get(i - 1) };
                let after_red = prev.map(|q| q.color == SignalColor::Red).unwrap_or(false);
                if p.color == SignalColor::Green && after_red && phases.len() > 1 {
                    let cut = (p.start + secs).min(p.end);
                    out.push(PhaseInterval {
                        color: SignalColor::Red,
                        start: p.start,
                        end: cut,
                    });
                    if cut < p.end {
                        out.push(PhaseInterval {
                            color: SignalColor::Green,
                            start: cut,
                            end: p.end,
                        });
                    }
                } else {
                    out.push(*p);
                }
            }
            // Merge neighbours of equal color.
            let mut merged: Vec<PhaseInterval> = Vec::with_capacity(out.len());
            for p in out {
                match merged.last_mut() {
                    Some(last) if last.color == p.color && last.end == p.start => last.end = p.end,
                    _ => merged.push(p),
                }
            }
            *phases = merged;
        }
        self
    }
}

/// Nominal plan: every junction gets green `g_nom`; in semi mode each
/// stage's nominal yellow is the cycle minus its own nominal green, which
/// leaves no nominal red.
pub fn nominal_controls(
    junctions: usize,
    mode: ControlMode,
    bounds: &ControlBounds,
    g_nom: f64,
) -> Result<Vec<JunctionControls>> {
    let c = bounds.cycle;
    if !(g_nom >= bounds.g_min && g_nom <= c - bounds.g_min) || 2.0 * bounds.g_min >= c && g_nom != c / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "nominal green {g_nom} outside [{}, {}]",
            bounds.g_min,
            c - bounds.g_min
        )));
    }
    let ctl = match mode {
        ControlMode::Classical => JunctionControls::classical(g_nom),
        ControlMode::Semi => {
            let green_second = c - g_nom;
            project(
                &JunctionControls {
                    green: g_nom,
                    yellow_first: c - g_nom,
                    yellow_second: c - green_second,
                },
                bounds,
            )
        }
    };
    Ok(vec![ctl; junctions])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub mode: ControlMode,
    /// Semi mode only: keep both yellows at zero and synthesize on the green columns.
    pub pin_yellows: bool,
    pub r: f64,
    pub discount: f64,
    pub x_nominal: f64,
    pub g_nominal: f64,
    pub g_min: f64,
    pub cycle: f64,
}

/// Synthesized feedback controller for one network.
#[derive(Debug, Clone)]
pub struct Controller {
    pub config: ControllerConfig,
    pub bounds: ControlBounds,
    /// Links whose counts form the state (every link feeding a junction).
    pub state_links: Vec<LinkId>,
    pub controls: Vec<ControlId>,
    pub b: ControlMatrix,
    pub synthesis: GainSynthesis,
    pub nominal: Vec<JunctionControls>,
    pub closed_loop_radius: f64,
    nominal_flat: DVector<f64>,
    nominal_counts: DVector<f64>,
    junctions: usize,
}

impl Controller {
    pub fn kinds(config: &ControllerConfig) -> &'static [ControlKind] {
        match (config.mode, config.pin_yellows) {
            (ControlMode::Semi, false) => ControlKind::for_mode(ControlMode::Semi),
            _ => ControlKind::for_mode(ControlMode::Classical),
        }
    }

    /// Control matrix restricted to the state links and the active controls.
    pub fn control_matrix(net: &NetworkModel, config: &ControllerConfig) -> ControlMatrix {
        let state_links = net.approach_links();
        let full = match config.mode {
            ControlMode::Classical => classical_b_matrix(net),
            ControlMode::Semi => extended_b_matrix(net).select_kinds(Self::kinds(config)),
        };
        full.select_rows(&state_links)
    }

    pub fn design(net: &NetworkModel, config: ControllerConfig) -> Result<Controller> {
        net.ensure_valid()?;
        let b = Self::control_matrix(net, &config);
        let weights = LqWeights::uniform(b.rows.len(), b.columns.len(), config.r, config.discount);
        let synthesis = solve_discounted_dare(&b.entries, &weights)?;
        Self::assemble(net, config, b, synthesis)
    }

    /// Build a controller around a previously exported gain.
    pub fn with_gain(
        net: &NetworkModel,
        config: ControllerConfig,
        links: &[LinkId],
        controls: &[ControlId],
        gain: DMatrix<f64>,
    ) -> Result<Controller> {
        net.ensure_valid()?;
        let b = Self::control_matrix(net, &config);
        if links != b.rows.as_slice() || controls != b.columns.as_slice() {
            return Err(Error::GainMismatch(format!(
                "gain covers {} links x {} controls, controller needs {} x {}",
                links.len(),
                controls.len(),
                b.rows.len(),
                b.columns.len()
            )));
        }
        let weights = LqWeights::uniform(b.rows.len(), b.columns.len(), config.r, config.discount);
        weights.validate()?;
        let synthesis = GainSynthesis {
            riccati: DMatrix::zeros(0, 0),
            gain,
            residual: f64::NAN,
            iterations: 0,
        };
        Self::assemble(net, config, b, synthesis)
    }

    fn assemble(
        net: &NetworkModel,
        config: ControllerConfig,
        b: ControlMatrix,
        synthesis: GainSynthesis,
    ) -> Result<Controller> {
        let bounds = ControlBounds::new(config.g_min, config.cycle)?;
        let nominal_mode = if Self::kinds(&config).len() == 3 {
            ControlMode::Semi
        } else {
            ControlMode::Classical
        };
        let nominal = nominal_controls(net.junctions.len(), nominal_mode, &bounds, config.g_nominal)?;
        let controls = control_ids(net, Self::kinds(&config));
        let nominal_flat = DVector::from_iterator(
            controls.len(),
            controls.iter().map(|id| nominal[id.junction.index()].get(id.kind)),
        );
        let radius = closed_loop_radius(&b.entries, &synthesis.gain, config.discount);
        Ok(Controller {
            config,
            bounds,
            state_links: b.rows.clone(),
            nominal_counts: DVector::from_element(b.rows.len(), config.x_nominal),
            controls,
            b,
            synthesis,
            nominal,
            closed_loop_radius: radius,
            nominal_flat,
            junctions: net.junctions.len(),
        })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.synthesis.gain
    }

    /// Unprojected controls for measured counts (indexed by link id).
    pub fn raw_controls(&self, counts: &[f64]) -> Vec<JunctionControls> {
        let x = DVector::from_iterator(
            self.state_links.len(),
            self.state_links.iter().map(|l| counts[l.index()]),
        );
        let u = feedback(&x, &self.nominal_counts, &self.nominal_flat, &self.synthesis.gain);
        let mut out = vec![JunctionControls::default(); self.junctions];
        for (value, id) in u.iter().zip(&self.controls) {
            out[id.junction.index()].set(id.kind, *value);
        }
        out
    }

    /// Projected controls for the next cycle.
    pub fn decide(&self, counts: &[f64]) -> Vec<JunctionControls> {
        project_controls(&self.raw_controls(counts), &self.bounds)
    }

    pub fn write_gain_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let gain = &self.synthesis.gain;
        crate::dynamics::write_link_control_csv(w, &self.state_links, &self.controls, |r, c| gain[(c, r)])
    }
}

/// Read a gain exported by [`Controller::write_gain_csv`]; returns
/// `(links, controls, L)` with `L` laid out controls x links.
pub fn read_gain_csv<R: std::io::Read>(r: R) -> Result<(Vec<LinkId>, Vec<ControlId>, DMatrix<f64>)> {
    let (links, controls, table) = crate::dynamics::read_link_control_csv(r)?;
    Ok((links, controls, table.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::build_grid;

    fn ctl(g: f64, y1: f64, y2: f64) -> JunctionControls {
        JunctionControls {
            green: g,
            yellow_first: y1,
            yellow_second: y2,
        }
    }

    fn bounds() -> ControlBounds {
        ControlBounds::new(4.0, 60.0).unwrap()
    }

    #[test]
    fn feedback_examples() {
        let x = DVector::from_element(1, 14.0);
        let xn = DVector::from_element(1, 10.0);
        let un = DVector::from_element(1, 30.0);
        let l = DMatrix::from_element(1, 1, 0.5);
        assert_eq!(feedback(&x, &xn, &un, &l)[0], 28.0);
        assert_eq!(feedback(&xn, &xn, &un, &l)[0], 30.0);
        assert_eq!(feedback(&x, &xn, &un, &DMatrix::zeros(1, 1))[0], 30.0);
    }

    #[test]
    fn projection_examples() {
        let b = bounds();
        assert_eq!(project(&ctl(30.0, 30.0, 0.0), &b), ctl(30.0, 30.0, 0.0));
        assert_eq!(project(&ctl(100.0, 0.0, 0.0), &b).green, 56.0);
        assert_eq!(project(&ctl(30.0, 50.0, 40.0), &b), ctl(30.0, 30.0, 30.0));
        assert_eq!(project(&ctl(-3.0, -1.0, 9.0), &b), ctl(4.0, 0.0, 4.0));
    }

    #[test]
    fn bounds_reject_oversized_minimum_green() {
        assert!(ControlBounds::new(31.0, 60.0).is_err());
        assert!(ControlBounds::new(30.0, 60.0).is_ok());
    }

    #[test]
    fn schedule_full_contention() {
        let s = expand_schedule(&ctl(30.0, 30.0, 30.0), 60.0).unwrap();
        let colors: Vec<_> = s.stages[0].iter().map(|p| (p.color, p.start, p.end)).collect();
        assert_eq!(
            colors,
            vec![(SignalColor::Green, 0.0, 30.0), (SignalColor::Yellow, 30.0, 60.0)]
        );
        let colors: Vec<_> = s.stages[1].iter().map(|p| (p.color, p.start, p.end)).collect();
        assert_eq!(
            colors,
            vec![(SignalColor::Yellow, 0.0, 30.0), (SignalColor::Green, 30.0, 60.0)]
        );
        assert_eq!(s.durations(Stage::First).red, 0.0);
        assert_eq!(s.durations(Stage::Second).red, 0.0);
    }

    #[test]
    fn schedule_classical() {
        let s = expand_schedule(&ctl(30.0, 0.0, 0.0), 60.0).unwrap();
        assert_eq!(s.stages[0].len(), 2);
        assert_eq!(s.color_at(Stage::First, 10.0), SignalColor::Green);
        assert_eq!(s.color_at(Stage::First, 40.0), SignalColor::Red);
        assert_eq!(s.color_at(Stage::Second, 10.0), SignalColor::Red);
        assert_eq!(s.color_at(Stage::Second, 40.0), SignalColor::Green);
        // Wraps at the cycle.
        assert_eq!(s.color_at(Stage::First, 70.0), SignalColor::Green);
    }

    #[test]
    fn schedule_mixed() {
        let s = expand_schedule(&ctl(40.0, 10.0, 20.0), 60.0).unwrap();
        let first: Vec<_> = s.stages[0].iter().map(|p| (p.color, p.start, p.end)).collect();
        assert_eq!(
            first,
            vec![
                (SignalColor::Green, 0.0, 40.0),
                (SignalColor::Yellow, 40.0, 50.0),
                (SignalColor::Red, 50.0, 60.0)
            ]
        );
        let second: Vec<_> = s.stages[1].iter().map(|p| (p.color, p.start, p.end)).collect();
        assert_eq!(
            second,
            vec![
                (SignalColor::Red, 0.0, 20.0),
                (SignalColor::Yellow, 20.0, 40.0),
                (SignalColor::Green, 40.0, 60.0)
            ]
        );
    }

    #[test]
    fn time_to_red_wraps() {
        let s = expand_schedule(&ctl(30.0, 10.0, 0.0), 60.0).unwrap();
        assert_eq!(s.time_to_red(Stage::First, 5.0), Some(35.0));
        assert_eq!(s.time_to_red(Stage::First, 45.0), Some(0.0));
        assert_eq!(s.time_to_red(Stage::Second, 35.0), Some(25.0));
        let full = expand_schedule(&ctl(30.0, 30.0, 30.0), 60.0).unwrap();
        assert_eq!(full.time_to_red(Stage::First, 0.0), None);
    }

    #[test]
    fn schedule_rejects_infeasible() {
        assert!(expand_schedule(&ctl(30.0, 35.0, 0.0), 60.0).is_err());
    }

    #[test]
    fn clearance_tiles_cycle() {
        let s = expand_schedule(&ctl(30.0, 0.0, 0.0), 60.0).unwrap().with_clearance(2.0);
        for stage in [Stage::First, Stage::Second] {
            let d = s.durations(stage);
            assert!((d.green + d.yellow + d.red - 60.0).abs() < 1e-12);
            assert_eq!(d.green, 28.0);
        }
        let t = (0..1200).map(|i| i as f64 * 0.05);
        for t in t {
            assert!(
                !(s.color_at(Stage::First, t) == SignalColor::Green
                    && s.color_at(Stage::Second, t) == SignalColor::Green)
            );
        }
    }

    #[test]
    fn nominal_plan() {
        let b = bounds();
        let n = nominal_controls(3, ControlMode::Semi, &b, 30.0).unwrap();
        assert_eq!(n, vec![ctl(30.0, 30.0, 30.0); 3]);
        let n = nominal_controls(1, ControlMode::Semi, &b, 40.0).unwrap();
        assert_eq!(n[0], ctl(40.0, 20.0, 40.0));
        let d = dependent_controls(&n[0], 60.0).unwrap();
        assert_eq!((d.red_first, d.red_second), (0.0, 0.0));
        assert!(nominal_controls(1, ControlMode::Semi, &b, 60.0).is_err());
        assert_eq!(
            nominal_controls(1, ControlMode::Classical, &b, 30.0).unwrap()[0],
            ctl(30.0, 0.0, 0.0)
        );
    }

    fn config(mode: ControlMode) -> ControllerConfig {
        ControllerConfig {
            mode,
            pin_yellows: false,
            r: 0.5,
            discount: 0.1,
            x_nominal: 10.5,
            g_nominal: 30.0,
            g_min: 4.0,
            cycle: 60.0,
        }
    }

    #[test]
    fn controller_fixed_point() {
        let net = build_grid(4, 4, 300.0, 0.5).unwrap().with_friction(0.3);
        let c = Controller::design(&net, config(ControlMode::Semi)).unwrap();
        let x = vec![10.5; net.links.len()];
        assert_eq!(c.raw_controls(&x), vec![ctl(30.0, 30.0, 30.0); 16]);
        assert!(c.closed_loop_radius < 1.0);
        assert_eq!(c.state_links.len(), 32);
    }

    #[test]
    fn queue_on_approach_extends_its_green() {
        let net = build_grid(4, 4, 300.0, 0.5).unwrap().with_friction(0.3);
        let c = Controller::design(&net, config(ControlMode::Classical)).unwrap();
        let j = &net.junctions[5];
        let mut x = vec![10.5; net.links.len()];
        x[j.incoming[0].index()] = 25.0;
        assert!(c.decide(&x)[5].green > 30.0);
        x[j.incoming[0].index()] = 10.5;
        x[j.incoming[1].index()] = 25.0;
        assert!(c.decide(&x)[5].green < 30.0);
    }

    #[test]
    fn gain_csv_round_trip() {
        let net = build_grid(2, 2, 300.0, 0.5).unwrap().with_friction(0.5);
        let c = Controller::design(&net, config(ControlMode::Semi)).unwrap();
        let mut buf = Vec::new();
        c.write_gain_csv(&mut buf).unwrap();
        let (links, controls, gain) = read_gain_csv(buf.as_slice()).unwrap();
        let imported = Controller::with_gain(&net, c.config, &links, &controls, gain).unwrap();
        assert!((imported.gain() - c.gain()).abs().max() == 0.0);
        let x: Vec<f64> = (0..net.links.len()).map(|i| i as f64).collect();
        assert_eq!(imported.decide(&x), c.decide(&x));
    }

    #[test]
    fn gain_import_checks_shape() {
        let net = build_grid(2, 2, 300.0, 0.5).unwrap();
        let c = Controller::design(&net, config(ControlMode::Classical)).unwrap();
        let err = Controller::with_gain(
            &net,
            config(ControlMode::Semi),
            &c.state_links,
            &c.controls,
            c.gain().clone(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::GainMismatch(_)));
    }
}
