use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tuc_core::compare::{default_variants, run_comparison, write_aligned_series};
use tuc_core::control::{read_gain_csv, Controller};
use tuc_core::dynamics::ControlMode;
use tuc_core::net::build_grid;
use tuc_core::plot::export_plots;
use tuc_core::run::{run_scenario, run_with_controller};
use tuc_core::scenario::{load_config, ScenarioConfig};
use tuc_core::Result;

/// Traffic-responsive urban signal control with yellow contention windows.
#[derive(Parser)]
#[command(name = "tuc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the feedback gain and write it as CSV.
    Synth {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run one scenario.
    Run {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Use a gain previously written by `synth` instead of synthesizing.
        #[arg(long)]
        gain: Option<PathBuf>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Run several scenarios side by side. With a single config, compares
    /// classical control against semi-decentralized control at gamma 0.3, 0.5 and 0.7.
    Compare {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the network as nodes.csv and edges.csv.
    Grid {
        #[arg(long, conflicts_with_all = ["rows", "cols"])]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        rows: usize,
        #[arg(long, default_value_t = 4)]
        cols: usize,
        #[arg(long, default_value_t = 300.0)]
        link_length: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ControlMode>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
}

fn parse_mode(s: &str) -> std::result::Result<ControlMode, String> {
    match s {
        "classical" => Ok(ControlMode::Classical),
        "semi" => Ok(ControlMode::Semi),
        _ => Err(format!("unknown mode '{s}', expected classical or semi")),
    }
}

impl Overrides {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut c = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(mode) = self.mode {
            c.control.mode = mode;
            if mode == ControlMode::Classical {
                c.control.pin_yellows = false;
            }
        }
        if let Some(g) = self.gamma {
            c.control.gamma = g;
        }
        if let Some(d) = self.duration {
            c.duration_s = d;
        }
        Ok(c)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth { overrides, out } => {
            let scenario = overrides.load()?.resolve()?;
            let controller = Controller::design(&scenario.network, scenario.controller)?;
            std::fs::create_dir_all(&out)?;
            controller.write_gain_csv(BufWriter::new(File::create(out.join("gain.csv"))?))?;
            controller
                .b
                .write_csv(BufWriter::new(File::create(out.join("b_matrix.csv"))?))?;
            let info = serde_json::json!({
                "label": scenario.config.label(),
                "states": controller.state_links.len(),
                "controls": controller.controls.len(),
                "riccati_residual": controller.synthesis.residual,
                "iterations": controller.synthesis.iterations,
                "closed_loop_radius": controller.closed_loop_radius,
            });
            std::fs::write(out.join("synthesis.json"), serde_json::to_string_pretty(&info)? + "\n")?;
            println!("{}", serde_json::to_string_pretty(&info)?);
            Ok(())
        }
        Command::Run {
            overrides,
            out,
            gain,
            no_plots,
        } => {
            let scenario = overrides.load()?.resolve()?;
            let output = match gain {
                Some(path) => {
                    let (links, controls, l) = read_gain_csv(File::open(path)?)?;
                    let controller =
                        Controller::with_gain(&scenario.network, scenario.controller, &links, &controls, l)?;
                    run_with_controller(&scenario, &controller)?
                }
                None => run_scenario(&scenario)?,
            };
            output.write_to(&out)?;
            if !no_plots {
                export_plots(&[&output], &scenario.network, &out)?;
            }
            println!("{}", output.summary_json());
            Ok(())
        }
        Command::Compare {
            configs,
            seed,
            duration,
            out,
        } => {
            let mut loaded = configs.iter().map(load_config).collect::<Result<Vec<_>>>()?;
            if loaded.len() == 1 {
                loaded = default_variants(&loaded[0]);
            }
            for c in &mut loaded {
                if let Some(s) = seed {
                    c.seed = s;
                }
                if let Some(d) = duration {
                    c.duration_s = d;
                }
            }
            let (runs, report) = run_comparison(&loaded)?;
            std::fs::create_dir_all(&out)?;
            let mut used = Vec::new();
            for run in &runs {
                let dir = unique_dir(&out, &run.summary.label, &mut used);
                run.write_to(&dir)?;
            }
            write_aligned_series(&runs, BufWriter::new(File::create(out.join("comparison.csv"))?))?;
            std::fs::write(
                out.join("comparison.json"),
                serde_json::to_string_pretty(&report)? + "\n",
            )?;
            let net = loaded[0].resolve()?.network;
            export_plots(&runs.iter().collect::<Vec<_>>(), &net, &out)?;
            for run in &runs {
                let s = &run.summary;
                println!(
                    "{:<14} running {:>6}  ended {:>7}  mean tt {:>9}",
                    s.label,
                    s.final_running,
                    s.total_ended,
                    s.mean_travel_time_s.map_or("-".to_string(), |t| format!("{t:.1} s"))
                );
            }
            for v in &report.verdicts {
                println!("best {:?}: {}", v.metric, v.best);
            }
            Ok(())
        }
        Command::Grid {
            config,
            rows,
            cols,
            link_length,
            out,
        } => {
            let net = match config {
                Some(path) => load_config(path)?.resolve()?.network,
                None => build_grid(rows, cols, link_length, 0.5)?,
            };
            std::fs::create_dir_all(&out)?;
            net.write_nodes_csv(BufWriter::new(File::create(out.join("nodes.csv"))?))?;
            net.write_edges_csv(BufWriter::new(File::create(out.join("edges.csv"))?))?;
            println!(
                "{} junctions, {} links, {} circuits",
                net.junctions.len(),
                net.links.len(),
                net.circuits.len()
            );
            Ok(())
        }
    }
}

fn unique_dir(out: &Path, label: &str, used: &mut Vec<String>) -> PathBuf {
    let mut name = label.to_string();
    let mut k = 2;
    while used.contains(&name) {
        name = format!("{label}-{k}");
        k += 1;
    }
    used.push(name.clone());
    out.join(name)
}
