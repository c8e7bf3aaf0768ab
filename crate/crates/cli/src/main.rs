use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use systolic_core::arch::{parse_network, LayerSpec, NetworkSpec};
use systolic_core::hw_model::{
    build_blackbox_lut, layers_cost, parse_hardware, CostModelKind, HardwareProfile, Lut, LutSpace,
    ModelError, NetworkCost,
};
use systolic_core::optim::{
    hypervolume, optimize_channels, pareto_front, ChannelSearchSpace, OptimConfig, OptimError,
    ParetoPoint,
};
use systolic_core::sim::{simulate_layers, SimError};
use systolic_core::smooth::HardwareLossParams;

/// Runtime and utilization of DNN layers on weight-stationary systolic arrays.
#[derive(Debug, Parser)]
#[command(name = "systolic", version)]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-layer runtime and utilization under an analytical cost model.
    Estimate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value_t = Model::Hard)]
        model: Model,
        /// Lookup table for the blackbox model (from `lut build`).
        #[arg(long)]
        lut: Option<PathBuf>,
    },
    /// Tile-level simulation with off-chip traffic.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        /// Write one CSV record per tile to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Network totals under every cost model and the simulator.
    Compare {
        #[command(flatten)]
        inputs: Inputs,
        /// Lookup table; the blackbox column is omitted without one.
        #[arg(long)]
        lut: Option<PathBuf>,
    },
    /// Search cell channel widths that minimize the hardware loss.
    Optimize {
        #[command(flatten)]
        inputs: Inputs,
        /// Weight of runtime in seconds.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Weight of network utilization.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Draw starting widths at random instead of the grid midpoint.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the full optimization result as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        space: SpaceArgs,
        /// Step length in channels.
        #[arg(long, default_value_t = OptimConfig::default().learning_rate)]
        lr: f64,
        /// Iteration budget across all stages.
        #[arg(long, default_value_t = OptimConfig::default().max_iterations)]
        max_iter: usize,
    },
    /// Lookup-table utilities.
    Lut {
        #[command(subcommand)]
        command: LutCommand,
    },
    /// Hypervolume of a (runtime_ms, accuracy_pct) point set against the
    /// ideal point (0 ms, 100%).
    Hypervolume {
        /// Two-column CSV; a header row is optional.
        points: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum LutCommand {
    /// Simulate every grid layer and write the table.
    Build {
        /// Hardware description; defaults apply when omitted.
        hw: Option<PathBuf>,
        /// Destination of the JSON table.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        min_c: u64,
        #[arg(long, default_value_t = 280)]
        max_c: u64,
        /// Channel quantum of the table grid.
        #[arg(long, default_value_t = 16)]
        quantum: u64,
        /// Spatial sizes (h = w).
        #[arg(long, value_delimiter = ',', default_values_t = LutSpace::default().spatial)]
        spatial: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = LutSpace::default().batches)]
        batch: Vec<u64>,
    },
}

#[derive(Debug, Args)]
struct Inputs {
    /// Network description (TOML or JSON).
    network: PathBuf,
    /// Hardware description (TOML or JSON); defaults apply when omitted.
    hw: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpaceArgs {
    /// Smallest width on the grid.
    #[arg(long, default_value_t = 64)]
    min_c: u64,
    /// Largest width on the grid.
    #[arg(long, default_value_t = 280)]
    max_c: u64,
    /// Grid spacing in channels.
    #[arg(long, default_value_t = 8)]
    step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    Hard,
    Flops,
    Roofline,
    Blackbox,
}

impl From<Model> for CostModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Hard => CostModelKind::Hard,
            Model::Flops => CostModelKind::Flops,
            Model::Roofline => CostModelKind::Roofline,
            Model::Blackbox => CostModelKind::Blackbox,
        }
    }
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CliResult<T> = Result<T, Failure>;

fn input_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: e.into(),
    }
}

fn model_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: e.into(),
    }
}

fn optim_err(e: OptimError) -> Failure {
    match e {
        OptimError::NonFinite { .. } | OptimError::CapExceeded { .. } | OptimError::Smooth(_) => {
            Failure {
                code: 3,
                error: e.into(),
            }
        }
        other => input_err(other),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(input_err)
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(input_err)
}

struct Loaded {
    spec: NetworkSpec,
    layers: Vec<LayerSpec>,
    profile: HardwareProfile,
}

fn load(inputs: &Inputs) -> CliResult<Loaded> {
    let text = read(&inputs.network)?;
    let spec = parse_network(&text)
        .with_context(|| format!("invalid network {}", inputs.network.display()))
        .map_err(input_err)?;
    let layers = spec
        .layers()
        .with_context(|| format!("invalid network {}", inputs.network.display()))
        .map_err(input_err)?;
    let profile = load_hw(inputs.hw.as_deref())?;
    Ok(Loaded {
        spec,
        layers,
        profile,
    })
}

fn load_hw(path: Option<&Path>) -> CliResult<HardwareProfile> {
    match path {
        None => Ok(HardwareProfile::default()),
        Some(p) => parse_hardware(&read(p)?)
            .with_context(|| format!("invalid hardware {}", p.display()))
            .map_err(input_err),
    }
}

fn load_lut(path: Option<&Path>) -> CliResult<Option<Lut>> {
    path.map(|p| {
        Lut::from_json(&read(p)?)
            .with_context(|| format!("invalid lookup table {}", p.display()))
            .map_err(input_err)
    })
    .transpose()
}

/// Runtime in the largest unit that keeps it readable.
fn human_time(cycles: u64, seconds: f64) -> String {
    if cycles < 1000 {
        format!("{cycles} cyc")
    } else if seconds < 1e-3 {
        format!("{:.3} us", seconds * 1e6)
    } else {
        format!("{:.3} ms", seconds * 1e3)
    }
}

fn pct(u: f64) -> String {
    format!("{:.1}%", u * 100.0)
}

/// Left-aligns the first `left` columns and right-aligns the rest.
fn render_table(header: &[&str], rows: &[Vec<String>], left: usize) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i < left {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(
        widths
            .iter()
            .map(|&w| "-".repeat(w))
            .collect::<Vec<_>>()
            .iter()
            .map(|s| s.as_str())
            .collect(),
    );
    for row in rows {
        out += &line(row.iter().map(|s| s.as_str()).collect());
    }
    out
}

fn render_csv(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(input_err)?;
    for row in rows {
        w.write_record(row).map_err(input_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| input_err(anyhow!(e.to_string())))?;
    String::from_utf8(bytes).map_err(input_err)
}

fn json_string(value: &impl Serialize) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(input_err)
}

#[derive(Serialize)]
struct LayerRow<'a> {
    index: usize,
    layer: String,
    kind: &'a str,
    macs: u64,
    cycles: u64,
    runtime_s: f64,
    utilization: f64,
}

fn estimate(
    format: Format,
    inputs: &Inputs,
    model: Model,
    lut: Option<&Path>,
) -> CliResult<String> {
    let loaded = load(inputs)?;
    let lut = load_lut(lut)?;
    let hw = &loaded.profile.hw;
    let cost =
        layers_cost(&loaded.layers, hw, model.into(), lut.as_ref()).map_err(|e| match e {
            ModelError::Arch(_) => input_err(e),
            other => model_err(other),
        })?;
    let rows: Vec<LayerRow> = loaded
        .layers
        .iter()
        .zip(&cost.layers)
        .enumerate()
        .map(|(i, (l, c))| LayerRow {
            index: i,
            layer: l.to_string(),
            kind: l.kind.name(),
            macs: c.macs,
            cycles: c.runtime_cycles,
            runtime_s: c.runtime_s,
            utilization: c.utilization,
        })
        .collect();
    Ok(match format {
        Format::Json => json_string(&json!({
            "model": CostModelKind::from(model).name(),
            "hardware": hw,
            "layers": rows,
            "total_cycles": cost.total_cycles,
            "total_s": cost.total_s,
            "total_macs": cost.total_macs,
            "network_utilization": cost.network_utilization,
        }))?,
        Format::Csv => {
            let mut table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.index.to_string(),
                        r.kind.to_string(),
                        r.layer.clone(),
                        r.macs.to_string(),
                        r.cycles.to_string(),
                        r.runtime_s.to_string(),
                        r.utilization.to_string(),
                    ]
                })
                .collect();
            table.push(vec![
                "total".into(),
                String::new(),
                String::new(),
                cost.total_macs.to_string(),
                cost.total_cycles.to_string(),
                cost.total_s.to_string(),
                cost.network_utilization.to_string(),
            ]);
            render_csv(
                &[
                    "index",
                    "kind",
                    "layer",
                    "macs",
                    "cycles",
                    "runtime_s",
                    "utilization",
                ],
                &table,
            )?
        }
        Format::Table => {
            let mut table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.index.to_string(),
                        r.layer.clone(),
                        r.macs.to_string(),
                        r.cycles.to_string(),
                        human_time(r.cycles, r.runtime_s),
                        pct(r.utilization),
                    ]
                })
                .collect();
            table.push(totals_row(&cost));
            let mut out = format!("model: {}\n", CostModelKind::from(model).name());
            out += &render_table(
                &["#", "layer", "MACs", "cycles", "runtime", "util"],
                &table,
                2,
            );
            out
        }
    })
}

fn totals_row(cost: &NetworkCost) -> Vec<String> {
    vec![
        "total".into(),
        String::new(),
        cost.total_macs.to_string(),
        cost.total_cycles.to_string(),
        human_time(cost.total_cycles, cost.total_s),
        pct(cost.network_utilization),
    ]
}

fn simulate(format: Format, inputs: &Inputs, trace: Option<&Path>) -> CliResult<String> {
    let loaded = load(inputs)?;
    let hw = &loaded.profile.hw;
    let sim = simulate_layers(&loaded.layers, hw, trace.is_some()).map_err(|e| match e {
        SimError::Arch(_) => input_err(e),
        other => model_err(other),
    })?;
    if let Some(path) = trace {
        let mut text = String::from("layer_idx,tile_i,tile_j,start,end,bytes_in\n");
        for r in sim.trace() {
            text += &r.to_line();
            text.push('\n');
        }
        write(path, &text)?;
    }
    let bound = |compute: u64, dram: u64| if dram > compute { "memory" } else { "compute" };
    Ok(match format {
        Format::Json => json_string(&json!({
            "hardware": hw,
            "layers": loaded.layers.iter().zip(&sim.layers).enumerate().map(|(i, (l, r))| json!({
                "index": i,
                "layer": l.to_string(),
                "kind": l.kind.name(),
                "macs": r.macs,
                "compute_cycles": r.compute_cycles,
                "dram_cycles": r.dram_cycles,
                "total_cycles": r.total_cycles,
                "dram_bytes": r.dram_bytes,
                "tiles": r.tiles,
                "bound": bound(r.compute_cycles, r.dram_cycles),
                "utilization": r.utilization,
            })).collect::<Vec<_>>(),
            "compute_cycles": sim.compute_cycles,
            "dram_cycles": sim.dram_cycles,
            "total_cycles": sim.total_cycles,
            "total_s": sim.total_s,
            "total_macs": sim.total_macs,
            "utilization": sim.utilization,
        }))?,
        Format::Csv => {
            let mut rows: Vec<Vec<String>> = loaded
                .layers
                .iter()
                .zip(&sim.layers)
                .enumerate()
                .map(|(i, (l, r))| {
                    vec![
                        i.to_string(),
                        l.kind.name().to_string(),
                        l.to_string(),
                        r.compute_cycles.to_string(),
                        r.dram_cycles.to_string(),
                        r.total_cycles.to_string(),
                        hw.cycles_to_seconds(r.total_cycles).to_string(),
                        bound(r.compute_cycles, r.dram_cycles).to_string(),
                        r.utilization.to_string(),
                    ]
                })
                .collect();
            rows.push(vec![
                "total".into(),
                String::new(),
                String::new(),
                sim.compute_cycles.to_string(),
                sim.dram_cycles.to_string(),
                sim.total_cycles.to_string(),
                sim.total_s.to_string(),
                String::new(),
                sim.utilization.to_string(),
            ]);
            render_csv(
                &[
                    "index",
                    "kind",
                    "layer",
                    "compute_cycles",
                    "dram_cycles",
                    "total_cycles",
                    "runtime_s",
                    "bound",
                    "utilization",
                ],
                &rows,
            )?
        }
        Format::Table => {
            let mut rows: Vec<Vec<String>> = loaded
                .layers
                .iter()
                .zip(&sim.layers)
                .enumerate()
                .map(|(i, (l, r))| {
                    vec![
                        i.to_string(),
                        l.to_string(),
                        r.compute_cycles.to_string(),
                        r.dram_cycles.to_string(),
                        r.total_cycles.to_string(),
                        human_time(r.total_cycles, hw.cycles_to_seconds(r.total_cycles)),
                        bound(r.compute_cycles, r.dram_cycles).to_string(),
                        pct(r.utilization),
                    ]
                })
                .collect();
            rows.push(vec![
                "total".into(),
                String::new(),
                sim.compute_cycles.to_string(),
                sim.dram_cycles.to_string(),
                sim.total_cycles.to_string(),
                human_time(sim.total_cycles, sim.total_s),
                String::new(),
                pct(sim.utilization),
            ]);
            render_table(
                &[
                    "#", "layer", "compute", "dram", "cycles", "runtime", "bound", "util",
                ],
                &rows,
                2,
            )
        }
    })
}

fn compare(format: Format, inputs: &Inputs, lut: Option<&Path>) -> CliResult<String> {
    let loaded = load(inputs)?;
    let lut = load_lut(lut)?;
    let hw = &loaded.profile.hw;
    let mut results: Vec<(String, u64, f64, f64)> = Vec::new();
    for kind in [
        CostModelKind::Hard,
        CostModelKind::Flops,
        CostModelKind::Roofline,
        CostModelKind::Blackbox,
    ] {
        if kind == CostModelKind::Blackbox && lut.is_none() {
            continue;
        }
        let c = layers_cost(&loaded.layers, hw, kind, lut.as_ref()).map_err(model_err)?;
        results.push((
            kind.name().to_string(),
            c.total_cycles,
            c.total_s,
            c.network_utilization,
        ));
    }
    let sim = simulate_layers(&loaded.layers, hw, false).map_err(model_err)?;
    results.push((
        "simulator".into(),
        sim.total_cycles,
        sim.total_s,
        sim.utilization,
    ));
    Ok(match format {
        Format::Json => json_string(
            &results
                .iter()
                .map(|(m, c, s, u)| json!({"model": m, "total_cycles": c, "total_s": s, "utilization": u}))
                .collect::<Vec<_>>(),
        )?,
        Format::Csv => render_csv(
            &["model", "total_cycles", "runtime_s", "utilization"],
            &results
                .iter()
                .map(|(m, c, s, u)| vec![m.clone(), c.to_string(), s.to_string(), u.to_string()])
                .collect::<Vec<_>>(),
        )?,
        Format::Table => render_table(
            &["model", "cycles", "runtime", "util"],
            &results
                .iter()
                .map(|(m, c, s, u)| vec![m.clone(), c.to_string(), human_time(*c, *s), pct(*u)])
                .collect::<Vec<_>>(),
            1,
        ),
    })
}

#[allow(clippy::too_many_arguments)]
fn optimize(
    format: Format,
    inputs: &Inputs,
    lambda: f64,
    beta: f64,
    seed: Option<u64>,
    report: Option<&Path>,
    space: &SpaceArgs,
    lr: f64,
    max_iter: usize,
) -> CliResult<String> {
    let loaded = load(inputs)?;
    let hw = loaded.profile.hw;
    let hl = HardwareLossParams::new(lambda, beta).map_err(input_err)?;
    let space = ChannelSearchSpace::new(space.min_c, space.max_c, space.step).map_err(input_err)?;
    let cfg = OptimConfig {
        learning_rate: lr,
        max_iterations: max_iter,
        hl,
        seed,
        shape: loaded.profile.smooth,
        ..OptimConfig::default()
    };
    let result = optimize_channels(&loaded.spec, &hw, &space, &cfg).map_err(optim_err)?;
    let document = json!({
        "network": inputs.network.display().to_string(),
        "hardware": hw,
        "space": space,
        "config": cfg,
        "result": result,
    });
    let doc_text = json_string(&document)?;
    if let Some(path) = report {
        write(path, &doc_text)?;
    }
    Ok(match format {
        Format::Json => doc_text,
        Format::Csv => {
            let rows = vec![
                vec![
                    "initial".to_string(),
                    join(
                        &result
                            .initial_widths
                            .iter()
                            .map(|w| w.round() as u64)
                            .collect::<Vec<_>>(),
                    ),
                    result.initial_cost.total_cycles.to_string(),
                    result.initial_cost.total_s.to_string(),
                    result.initial_cost.network_utilization.to_string(),
                    result.initial_loss.to_string(),
                ],
                vec![
                    "final".to_string(),
                    join(&result.channels),
                    result.final_cost.total_cycles.to_string(),
                    result.final_cost.total_s.to_string(),
                    result.final_cost.network_utilization.to_string(),
                    result.final_loss.to_string(),
                ],
            ];
            render_csv(
                &[
                    "point",
                    "channels",
                    "cycles",
                    "runtime_s",
                    "utilization",
                    "hard_loss",
                ],
                &rows,
            )?
        }
        Format::Table => {
            let mut out = String::new();
            let init: Vec<u64> = result
                .initial_widths
                .iter()
                .map(|w| w.round() as u64)
                .collect();
            let _ = writeln!(out, "initial channels: [{}]", join(&init));
            let _ = writeln!(out, "final channels:   [{}]", join(&result.channels));
            let _ = writeln!(
                out,
                "iterations: {} ({})",
                result.trajectory.len(),
                if result.converged {
                    "converged"
                } else {
                    "iteration cap"
                }
            );
            let rows = vec![
                vec![
                    "initial".to_string(),
                    result.initial_cost.total_cycles.to_string(),
                    human_time(
                        result.initial_cost.total_cycles,
                        result.initial_cost.total_s,
                    ),
                    pct(result.initial_cost.network_utilization),
                    format!("{:.6}", result.initial_loss),
                ],
                vec![
                    "final".to_string(),
                    result.final_cost.total_cycles.to_string(),
                    human_time(result.final_cost.total_cycles, result.final_cost.total_s),
                    pct(result.final_cost.network_utilization),
                    format!("{:.6}", result.final_loss),
                ],
            ];
            out += &render_table(&["", "cycles", "runtime", "util", "hard loss"], &rows, 1);
            out
        }
    })
}

fn join(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
}

#[allow(clippy::too_many_arguments)]
fn lut_build(
    format: Format,
    hw: Option<&Path>,
    out: &Path,
    min_c: u64,
    max_c: u64,
    quantum: u64,
    spatial: Vec<u64>,
    batches: Vec<u64>,
) -> CliResult<String> {
    let profile = load_hw(hw)?;
    let space = LutSpace {
        min_c,
        max_c,
        quantum,
        spatial,
        batches,
        ..LutSpace::default()
    };
    let lut = build_blackbox_lut(&space, &profile.hw).map_err(|e| match e {
        systolic_core::hw_model::LutError::Sim(_) => model_err(e),
        other => input_err(other),
    })?;
    write(out, &lut.to_json())?;
    Ok(match format {
        Format::Json => {
            json_string(&json!({"path": out.display().to_string(), "entries": lut.len()}))?
        }
        Format::Csv => render_csv(
            &["path", "entries"],
            &[vec![out.display().to_string(), lut.len().to_string()]],
        )?,
        Format::Table => format!("wrote {} entries to {}\n", lut.len(), out.display()),
    })
}

fn read_points(path: &Path) -> CliResult<Vec<ParetoPoint>> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record
            .with_context(|| format!("{}: malformed CSV", path.display()))
            .map_err(input_err)?;
        if record.len() != 2 {
            return Err(input_err(anyhow!(
                "{} record {}: expected 2 columns (runtime_ms, accuracy_pct), found {}",
                path.display(),
                i + 1,
                record.len()
            )));
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        let (runtime, score) = match parsed {
            (Ok(r), Ok(s)) => (r, s),
            // A non-numeric first record is a header.
            _ if i == 0 => continue,
            _ => {
                return Err(input_err(anyhow!(
                    "{} record {}: non-numeric value",
                    path.display(),
                    i + 1
                )));
            }
        };
        let p = ParetoPoint::new(runtime, score);
        if !p.is_valid() {
            return Err(input_err(anyhow!(
                "{} record {}: need runtime >= 0 and 0 <= accuracy <= 100",
                path.display(),
                i + 1
            )));
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(input_err(anyhow!("{}: no points", path.display())));
    }
    Ok(points)
}

fn hypervolume_cmd(format: Format, path: &Path) -> CliResult<String> {
    let points = read_points(path)?;
    let front = pareto_front(&points);
    let hv = hypervolume(&points);
    Ok(match format {
        Format::Json => json_string(&json!({"points": points, "front": front, "hypervolume": hv}))?,
        Format::Csv => {
            let mut rows: Vec<Vec<String>> = front
                .iter()
                .map(|p| vec!["front".into(), p.runtime.to_string(), p.score.to_string()])
                .collect();
            rows.push(vec!["hypervolume".into(), hv.to_string(), String::new()]);
            render_csv(&["row", "runtime_ms", "accuracy_pct"], &rows)?
        }
        Format::Table => {
            let rows: Vec<Vec<String>> = front
                .iter()
                .map(|p| vec![p.runtime.to_string(), p.score.to_string()])
                .collect();
            let mut out = render_table(&["runtime_ms", "accuracy_pct"], &rows, 0);
            let _ = writeln!(out, "hypervolume: {hv:.3}");
            out
        }
    })
}

fn run(cli: Cli) -> CliResult<String> {
    let format = cli.format;
    match cli.command {
        Command::Estimate { inputs, model, lut } => {
            estimate(format, &inputs, model, lut.as_deref())
        }
        Command::Simulate { inputs, trace } => simulate(format, &inputs, trace.as_deref()),
        Command::Compare { inputs, lut } => compare(format, &inputs, lut.as_deref()),
        Command::Optimize {
            inputs,
            lambda,
            beta,
            seed,
            report,
            space,
            lr,
            max_iter,
        } => optimize(
            format,
            &inputs,
            lambda,
            beta,
            seed,
            report.as_deref(),
            &space,
            lr,
            max_iter,
        ),
        Command::Lut {
            command:
                LutCommand::Build {
                    hw,
                    out,
                    min_c,
                    max_c,
                    quantum,
                    spatial,
                    batch,
                },
        } => lut_build(
            format,
            hw.as_deref(),
            &out,
            min_c,
            max_c,
            quantum,
            spatial,
            batch,
        ),
        Command::Hypervolume { points } => hypervolume_cmd(format, &points),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
