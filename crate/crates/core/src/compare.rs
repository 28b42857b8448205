//! Side-by-side runs of one scenario under different controllers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::ControlMode;
use crate::error::{Error, Result};
use crate::run::{run_scenario, RunOutput};
use crate::scenario::ScenarioConfig;

/// Friction values swept by the default comparison.
pub const DEFAULT_GAMMAS: [f64; 3] = [0.3, 0.5, 0.7];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FinalRunning,
    TotalEnded,
    MeanTravelTime,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::FinalRunning, Metric::TotalEnded, Metric::MeanTravelTime];

    pub fn lower_is_better(self) -> bool {
        !matches!(self, Metric::TotalEnded)
    }

    pub fn value(self, run: &RunOutput) -> Option<f64> {
        let s = &run.summary;
        match self {
            Metric::FinalRunning => Some(s.final_running as f64),
            Metric::TotalEnded => Some(s.total_ended as f64),
            Metric::MeanTravelTime => s.mean_travel_time_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: Metric,
    pub baseline: Option<f64>,
    pub other: Option<f64>,
    /// `other - baseline`.
    pub delta: Option<f64>,
    /// Label of the better run, or `"tie"`.
    pub better: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub baseline: String,
    pub other: String,
    pub deltas: Vec<MetricDelta>,
}

pub fn compare_pair(baseline: &RunOutput, other: &RunOutput) -> Result<PairComparison> {
    check_aligned(baseline, other)?;
    let (a, b) = (&baseline.summary.label, &other.summary.label);
    let deltas = Metric::ALL
        .iter()
        .map(|&m| {
            let (va, vb) = (m.value(baseline), m.value(other));
            let delta = va.zip(vb).map(|(x, y)| y - x);
            let better = match delta {
                Some(d) if d != 0.0 => {
                    if (d < 0.0) == m.lower_is_better() {
                        b.clone()
                    } else {
                        a.clone()
                    }
                }
                _ => "tie".to_string(),
            };
            MetricDelta {
                metric: m,
                baseline: va,
                other: vb,
                delta,
                better,
            }
        })
        .collect();
    Ok(PairComparison {
        baseline: a.clone(),
        other: b.clone(),
        deltas,
    })
}

fn check_aligned(a: &RunOutput, b: &RunOutput) -> Result<()> {
    if a.records.len() != b.records.len() || a.cycle != b.cycle {
        return Err(Error::Incompatible(format!(
            "{} has {} cycles of {} s, {} has {} cycles of {} s",
            a.summary.label,
            a.records.len(),
            a.cycle,
            b.summary.label,
            b.records.len(),
            b.cycle
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub metric: Metric,
    /// Label of the best run; `"tie"` when several share the best value.
    pub best: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub labels: Vec<String>,
    /// Every run against the first one.
    pub pairs: Vec<PairComparison>,
    pub verdicts: Vec<Verdict>,
}

pub fn compare(runs: &[RunOutput]) -> Result<ComparisonReport> {
    let Some(first) = runs.first() else {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    };
    let pairs = runs[1..]
        .iter()
        .map(|r| compare_pair(first, r))
        .collect::<Result<Vec<_>>>()?;
    let verdicts = Metric::ALL
        .iter()
        .map(|&m| {
            let values: Vec<(f64, &str)> = runs
                .iter()
                .filter_map(|r| m.value(r).map(|v| (v, r.summary.label.as_str())))
                .collect();
            let best_value =
                values
                    .iter()
                    .map(|(v, _)| *v)
                    .reduce(|x, y| if m.lower_is_better() { x.min(y) } else { x.max(y) });
            let winners: Vec<&str> = values
                .iter()
                .filter(|(v, _)| Some(*v) == best_value)
                .map(|(_, l)| *l)
                .collect();
            Verdict {
                metric: m,
                best: match winners[..] {
                    [one] => one.to_string(),
                    _ => "tie".to_string(),
                },
            }
        })
        .collect();
    Ok(ComparisonReport {
        labels: runs.iter().map(|r| r.summary.label.clone()).collect(),
        pairs,
        verdicts,
    })
}

/// The default sweep: classical control, then semi-decentralized control at
/// each friction value.
pub fn default_variants(base: &ScenarioConfig) -> Vec<ScenarioConfig> {
    let mut classical = base.clone();
    classical.control.mode = ControlMode::Classical;
    classical.control.pin_yellows = false;
    let mut out = vec![classical];
    for g in DEFAULT_GAMMAS {
        let mut c = base.clone();
        c.control.mode = ControlMode::Semi;
        c.control.pin_yellows = false;
        c.control.gamma = g;
        out.push(c);
    }
    out
}

/// Fail unless the configs differ only in mode, friction, pinning and seed.
pub fn check_compatible(configs: &[ScenarioConfig]) -> Result<()> {
    let Some(first) = configs.first() else {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    };
    for c in &configs[1..] {
        if let Some(field) = first.incompatibility(c) {
            return Err(Error::Incompatible(format!(
                "{} and {} differ in {field}",
                first.label(),
                c.label()
            )));
        }
    }
    Ok(())
}

/// Resolve and run every config, concurrently, keeping input order.
pub fn run_all(configs: &[ScenarioConfig]) -> Result<Vec<RunOutput>> {
    let scenarios = configs.iter().map(|c| c.resolve()).collect::<Result<Vec<_>>>()?;
    std::thread::scope(|s| {
        let handles: Vec<_> = scenarios.iter().map(|sc| s.spawn(move || run_scenario(sc))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    })
}

/// Check, run and compare.
pub fn run_comparison(configs: &[ScenarioConfig]) -> Result<(Vec<RunOutput>, ComparisonReport)> {
    check_compatible(configs)?;
    let runs = run_all(configs)?;
    let report = compare(&runs)?;
    Ok((runs, report))
}

/// One row per cycle with running, ended and mean travel time of every run.
pub fn write_aligned_series<W: Write>(runs: &[RunOutput], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["k".to_string(), "clock_s".to_string()];
    for r in runs {
        let l = &r.summary.label;
        header.extend([
            format!("{l}_running"),
            format!("{l}_ended_cum"),
            format!("{l}_mean_tt_s"),
        ]);
    }
    out.write_record(&header)?;
    let n = runs.first().map_or(0, |r| r.records.len());
    for k in 0..n {
        let mut row = vec![k.to_string(), format!("{:.3}", runs[0].records[k].clock)];
        for r in runs {
            let rec = &r.records[k];
            row.push(rec.running.to_string());
            row.push(rec.ended_cum.to_string());
            row.push(if rec.mean_tt.is_finite() {
                format!("{:.3}", rec.mean_tt)
            } else {
                String::new()
            });
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::baseline_config;

    fn short(mode: ControlMode, gamma: f64) -> ScenarioConfig {
        let mut c = baseline_config();
        c.duration_s = 600.0;
        c.control.mode = mode;
        c.control.gamma = gamma;
        c
    }

    #[test]
    fn identical_runs_have_zero_deltas() {
        let c = short(ControlMode::Semi, 0.3);
        let runs = run_all(&[c.clone(), c]).unwrap();
        let p = compare_pair(&runs[0], &runs[1]).unwrap();
        for d in &p.deltas {
            assert_eq!(d.delta, Some(0.0));
            assert_eq!(d.better, "tie");
        }
    }

    #[test]
    fn deltas_are_antisymmetric() {
        let runs = run_all(&[short(ControlMode::Classical, 0.3), short(ControlMode::Semi, 0.3)]).unwrap();
        let ab = compare_pair(&runs[0], &runs[1]).unwrap();
        let ba = compare_pair(&runs[1], &runs[0]).unwrap();
        for (x, y) in ab.deltas.iter().zip(&ba.deltas) {
            assert_eq!(x.delta.map(|d| -d), y.delta);
            assert_eq!(x.better, y.better);
        }
    }

    #[test]
    fn default_sweep_has_four_runs() {
        let v = default_variants(&baseline_config());
        let labels: Vec<_> = v.iter().map(|c| c.label()).collect();
        assert_eq!(labels, ["classical", "semi-g0.3", "semi-g0.5", "semi-g0.7"]);
        check_compatible(&v).unwrap();
    }

    #[test]
    fn different_durations_are_incompatible() {
        let a = short(ControlMode::Semi, 0.3);
        let mut b = a.clone();
        b.duration_s = 1200.0;
        assert!(matches!(check_compatible(&[a, b]), Err(Error::Incompatible(_))));
    }
}
