//! Standalone SVG line charts for run and comparison outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dynamics::ControlMode;
use crate::error::Result;
use crate::net::{CircuitKind, JunctionId, NetworkModel, Stage};
use crate::run::RunOutput;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub color: Option<String>,
    /// Non-finite y values leave a gap.
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            color: None,
            points,
        }
    }

    pub fn with_color(mut self, color: &str) -> Self {
        self.color = Some(color.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

fn tick_label(v: f64, span: f64) -> String {
    if span >= 20.0 {
        format!("{v:.0}")
    } else if span >= 2.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
        }
    }

    pub fn push(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    pub fn to_svg(&self) -> String {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = range(all().map(|p| p.0));
        let (mut y0, y1) = range(all().filter(|p| p.1.is_finite()).map(|p| p.1));
        if y0 > 0.0 && y0 < 0.25 * y1 {
            y0 = 0.0;
        }
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=5 {
            let f = i as f64 / 5.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(
                svg,
                r##"<line x1="{px:.1}" y1="{TOP}" x2="{px:.1}" y2="{:.1}" stroke="#ddd"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                TOP + ph,
                TOP + ph + 16.0,
                tick_label(xv, x1 - x0)
            );
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                py + 4.0,
                tick_label(yv, y1 - y0)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for (i, s) in self.series.iter().enumerate() {
            let color = s
                .color
                .clone()
                .unwrap_or_else(|| PALETTE[i % PALETTE.len()].to_string());
            let mut d = String::new();
            let mut pen_down = false;
            for &(x, y) in &s.points {
                if !(x.is_finite() && y.is_finite()) {
                    pen_down = false;
                    continue;
                }
                let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(x), sy(y));
                pen_down = true;
            }
            if !d.is_empty() {
                let _ = writeln!(
                    svg,
                    r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    d.trim_end()
                );
            }
            // A path without line segments draws nothing; mark the points instead.
            if !d.contains('L') {
                for p in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                        sx(p.0),
                        sy(p.1)
                    );
                }
            }
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_svg())?;
        Ok(())
    }
}

fn series_of(run: &RunOutput, f: impl Fn(&crate::run::CycleRecord) -> f64) -> Vec<(f64, f64)> {
    run.records.iter().map(|r| (r.clock, f(r))).collect()
}

/// Running, ended and travel-time charts with one line per run.
pub fn overlay_charts(runs: &[&RunOutput]) -> Vec<(&'static str, LineChart)> {
    let mk = |title: &str, y: &str, f: fn(&crate::run::CycleRecord) -> f64| {
        runs.iter().fold(LineChart::new(title, "time (s)", y), |c, r| {
            c.push(Series::new(r.summary.label.clone(), series_of(r, f)))
        })
    };
    vec![
        ("running.svg", mk("Running vehicles", "vehicles", |r| r.running as f64)),
        (
            "ended.svg",
            mk("Cumulative ended vehicles", "vehicles", |r| r.ended_cum as f64),
        ),
        ("travel_time.svg", mk("Mean travel time", "seconds", |r| r.mean_tt)),
    ]
}

/// Junctions of the main circuit, and junctions touched only by secondary circuits.
pub fn circuit_junction_groups(net: &NetworkModel) -> (Vec<JunctionId>, Vec<JunctionId>) {
    let junctions_of = |kind: CircuitKind| {
        let mut v: Vec<JunctionId> = net
            .circuits
            .iter()
            .filter(|c| c.kind == kind)
            .flat_map(|c| c.links.iter().filter_map(|&l| net.link(l).to))
            .collect();
        v.sort();
        v.dedup();
        v
    };
    let main = junctions_of(CircuitKind::Main);
    let secondary = junctions_of(CircuitKind::Secondary)
        .into_iter()
        .filter(|j| !main.contains(j))
        .collect();
    (main, secondary)
}

/// Mean (green, yellow, red) per cycle over the left or right approaches of
/// a junction group.
fn stage_durations(run: &RunOutput, net: &NetworkModel, group: &[JunctionId], left: bool) -> [Vec<(f64, f64)>; 3] {
    let mut out: [Vec<(f64, f64)>; 3] = Default::default();
    for r in &run.records {
        let mut sum = [0.0; 3];
        let mut n = 0.0;
        for &j in group {
            let Some((l, rt)) = net.left_right_approaches(j) else {
                continue;
            };
            let link = if left { l } else { rt };
            let Some(stage) = net.junction(j).stage_of(link) else {
                continue;
            };
            let (g, y, red) = r.junctions[j.index()].stage(stage == Stage::Second, run.cycle);
            sum[0] += g;
            sum[1] += y;
            sum[2] += red;
            n += 1.0;
        }
        for (k, s) in sum.iter().enumerate() {
            out[k].push((r.clock, if n > 0.0 { s / n } else { f64::NAN }));
        }
    }
    out
}

/// Circuit occupancy and left/right control timings for main and secondary circuits.
pub fn control_stack_charts(run: &RunOutput, net: &NetworkModel) -> Vec<(&'static str, LineChart)> {
    let (main, secondary) = circuit_junction_groups(net);
    let mut charts = Vec::new();
    for (kind, group) in [("main", &main), ("secondary", &secondary)] {
        let per_cycle: Vec<(f64, f64)> = run
            .records
            .iter()
            .map(|r| {
                (
                    r.clock,
                    if kind == "main" {
                        r.circuits.main
                    } else {
                        r.circuits.secondary
                    },
                )
            })
            .collect();
        let mut acc = 0.0;
        let time_avg: Vec<(f64, f64)> = per_cycle
            .iter()
            .enumerate()
            .map(|(i, &(t, v))| {
                acc += v;
                (t, acc / (i + 1) as f64)
            })
            .collect();
        let occupancy = LineChart::new(&format!("{kind} circuits: vehicles per link"), "time (s)", "vehicles")
            .push(Series::new("per cycle", per_cycle))
            .push(Series::new("time average", time_avg));
        let name = if kind == "main" {
            "main_occupancy.svg"
        } else {
            "secondary_occupancy.svg"
        };
        charts.push((name, occupancy));
        for left in [true, false] {
            let [g, y, r] = stage_durations(run, net, group, left);
            let side = if left { "left" } else { "right" };
            let chart = LineChart::new(
                &format!("{kind} circuits: {side} approaches"),
                "time (s)",
                "seconds per cycle",
            )
            .push(Series::new("green", g).with_color("#2ca02c"))
            .push(Series::new("yellow", y).with_color("#e6b800"))
            .push(Series::new("red", r).with_color("#d62728"));
            let name = match (kind, left) {
                ("main", true) => "main_left.svg",
                ("main", false) => "main_right.svg",
                (_, true) => "secondary_left.svg",
                (_, false) => "secondary_right.svg",
            };
            charts.push((name, chart));
        }
    }
    charts
}

/// Write the overlay charts for all runs plus the control stacks of the
/// first semi-decentralized run (or the first run). Returns written paths.
pub fn export_plots(runs: &[&RunOutput], net: &NetworkModel, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if runs.is_empty() {
        return Ok(written);
    }
    let stack_run = runs
        .iter()
        .find(|r| r.summary.mode == ControlMode::Semi)
        .unwrap_or(&runs[0]);
    let charts = overlay_charts(runs)
        .into_iter()
        .chain(control_stack_charts(stack_run, net));
    for (name, chart) in charts {
        let path = dir.join(name);
        chart.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::build_grid;

    #[test]
    fn single_point_is_a_valid_document() {
        let svg = LineChart::new("t", "x", "y")
            .push(Series::new("a", vec![(0.0, 1.0)]))
            .to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn nan_values_split_the_path() {
        let pts = vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN), (3.0, 2.0), (4.0, 3.0)];
        let svg = LineChart::new("t", "x", "y").push(Series::new("a", pts)).to_svg();
        let path = svg.lines().find(|l| l.starts_with("<path")).unwrap();
        assert_eq!(path.matches('M').count(), 2);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn all_nan_series_still_renders() {
        let svg = LineChart::new("t", "x", "y")
            .push(Series::new("a", vec![(0.0, f64::NAN), (1.0, f64::NAN)]))
            .to_svg();
        assert!(svg.contains("</svg>"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn titles_are_escaped() {
        let svg = LineChart::new("a < b & c", "x", "y").to_svg();
        assert!(svg.contains("a &lt; b &amp; c"));
    }

    #[test]
    fn junction_groups_on_4x4() {
        let net = build_grid(4, 4, 300.0, 0.5).unwrap();
        let (main, secondary) = circuit_junction_groups(&net);
        assert_eq!(main.len(), 4);
        assert_eq!(secondary.len(), 12);
    }
}
