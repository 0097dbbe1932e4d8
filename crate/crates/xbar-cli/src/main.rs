//! Command-line driver for the secured crossbar simulator.
//!
//! Subcommands mirror the measurement pipeline: `simulate` one
//! configuration, `sweep` a grid, `calibrate` the security parameters,
//! `attack` with the white-box adversary, `watermark` embed/verify,
//! `keygen`, and `report` format conversion. Every command takes an
//! explicit `--seed`; identical invocations produce identical output.
//! Errors exit nonzero with one machine-readable JSON line on stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use xbar_core::adversary::{brute_force_cost, extract_and_clone, extraction_fidelity};
use xbar_core::crossbar::InputVector;
use xbar_core::device::{MemristorParams, NodeRegistry};
use xbar_core::error::Error as CoreError;
use xbar_core::experiment::{
    apply_calibration, build_configured_array, calibrate, overhead_report, run_config, sweep,
    CalibrationTargets, ExperimentGrid, InputSource, SecurityConfig,
};
use xbar_core::ingest::{
    gen_lora_chirps, load_idx, mnist_batch, parse_csv_vectors, rf_features, ChirpSpec, IdxTensor,
};
use xbar_core::permutor::{generate_key, key_space_bits, transistor_overhead, PermKey};
use xbar_core::report::{emit_report, parse_csv_report, parse_json_report, ReportFormat};
use xbar_core::rng::{derive_seed, SplitMix64};
use xbar_core::solver::build_network;
use xbar_core::watermark::{
    camouflage_stats, embed_watermark, flip_to_far_extreme, make_watermark,
    measure_probe_currents, resign_watermark, verify_watermark, EvalBackend, Placement,
};

#[derive(Parser)]
#[command(name = "xbar", version, about = "Secured memristive crossbar simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DatasetArgs {
    /// Input data: uniform | mnist | lora | csv
    #[arg(long, default_value = "uniform")]
    dataset: String,
    /// MNIST IDX image file (dataset = mnist)
    #[arg(long)]
    mnist_images: Option<PathBuf>,
    /// MNIST IDX label file (optional)
    #[arg(long)]
    mnist_labels: Option<PathBuf>,
    /// CSV sample file, one comma-separated sample per line (dataset = csv)
    #[arg(long)]
    csv: Option<PathBuf>,
    /// LoRa spreading factor (dataset = lora)
    #[arg(long, default_value_t = 7)]
    lora_sf: u8,
    /// Symbols per generated LoRa sample
    #[arg(long, default_value_t = 4)]
    lora_symbols: usize,
    /// Additive white noise level for generated chirps (dB); omit for none
    #[arg(long)]
    snr_db: Option<f64>,
}

impl DatasetArgs {
    fn build_source(&self, seed: u64, batch: usize) -> anyhow::Result<InputSource> {
        match self.dataset.as_str() {
            "uniform" => Ok(InputSource::UniformRandom),
            "mnist" => {
                let path = self
                    .mnist_images
                    .as_ref()
                    .ok_or_else(|| anyhow!("--mnist-images is required for --dataset mnist"))?;
                let images = load_idx(&fs::read(path)?)?;
                let (h, w) = match &images {
                    IdxTensor::Images { height, width, .. } => (*height, *width),
                    IdxTensor::Labels(_) => bail!("{} holds labels, not images", path.display()),
                };
                let labels = match &self.mnist_labels {
                    Some(p) => Some(load_idx(&fs::read(p)?)?),
                    None => None,
                };
                // Full-resolution unit vectors; sizes are resampled per array.
                let prepared = mnist_batch(&images, labels.as_ref(), h * w, batch)?;
                Ok(InputSource::Vectors(prepared.vectors))
            }
            "lora" => {
                let mut rng = SplitMix64::new(derive_seed(seed, "cli-lora"));
                let n = 1u64 << self.lora_sf;
                let mut vectors = Vec::with_capacity(batch);
                for sample in 0..batch {
                    let symbols: Vec<u32> =
                        (0..self.lora_symbols).map(|_| rng.next_below(n) as u32).collect();
                    let spec = ChirpSpec::new(self.lora_sf, symbols)?;
                    let iq = gen_lora_chirps(
                        &spec,
                        derive_seed(seed, &format!("cli-lora-{sample}")),
                        self.snr_db,
                    );
                    vectors.push(rf_features(&iq, iq.len())?);
                }
                Ok(InputSource::Vectors(vectors))
            }
            "csv" => {
                let path = self
                    .csv
                    .as_ref()
                    .ok_or_else(|| anyhow!("--csv is required for --dataset csv"))?;
                Ok(InputSource::Vectors(parse_csv_vectors(&fs::read_to_string(path)?)?))
            }
            other => bail!("unknown dataset `{other}` (expected uniform|mnist|lora|csv)"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and print its measurements as JSON.
    Simulate {
        #[arg(long, default_value = "45nm")]
        node: String,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// baseline | permutor | watermark | both
        #[arg(long, default_value = "baseline")]
        config: String,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        /// Node-parameter override file
        #[arg(long)]
        node_config: Option<PathBuf>,
        /// Dump the assembled nodal system in Matrix Market format
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        data: DatasetArgs,
    },
    /// Run a node x size x config grid and emit the overhead report.
    Sweep {
        /// Comma-separated node labels
        #[arg(long, value_delimiter = ',', default_value = "45nm,22nm,7nm")]
        nodes: Vec<String>,
        /// Comma-separated ROWSxCOLS sizes
        #[arg(long, value_delimiter = ',', default_value = "10x10,128x10,256x128")]
        sizes: Vec<String>,
        /// Comma-separated configs
        #[arg(long, value_delimiter = ',', default_value = "baseline,permutor,watermark,both")]
        configs: Vec<String>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        /// csv | json
        #[arg(long, default_value = "csv")]
        format: String,
        /// Calibrate at (45nm, 256x128) first and scale the fit across nodes
        #[arg(long)]
        calibrated: bool,
        #[arg(long)]
        node_config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        data: DatasetArgs,
    },
    /// Fit r_switch / p_switch / p_wm_col to overhead targets.
    Calibrate {
        #[arg(long, default_value = "45nm")]
        node: String,
        #[arg(long, default_value_t = 256)]
        rows: usize,
        #[arg(long, default_value_t = 128)]
        cols: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        batch: usize,
        /// Targets as current-drop%,delay-increase%,power-increase%
        #[arg(long, default_value = "8.8,5.5,9.8")]
        targets: String,
        #[arg(long)]
        node_config: Option<PathBuf>,
        /// Write the fitted parameters as a node-config file
        #[arg(long)]
        emit_config: Option<PathBuf>,
    },
    /// White-box extraction attack against a secured array.
    Attack {
        #[arg(long, default_value = "45nm")]
        node: String,
        #[arg(long, default_value_t = 128)]
        rows: usize,
        #[arg(long, default_value_t = 128)]
        cols: usize,
        #[arg(long)]
        seed: u64,
        /// Separate key seed; defaults to a stream derived from --seed
        #[arg(long)]
        key_seed: Option<u64>,
        #[arg(long, default_value_t = 8)]
        probes: usize,
        /// Attacker key-search rate for the brute-force cost estimate
        #[arg(long, default_value_t = 1e9)]
        keys_per_second: f64,
        #[arg(long)]
        node_config: Option<PathBuf>,
    },
    /// Embed a watermark, measure, optionally tamper, and verify.
    Watermark {
        #[arg(long, default_value = "45nm")]
        node: String,
        #[arg(long, default_value_t = 10)]
        rows: usize,
        #[arg(long, default_value_t = 10)]
        cols: usize,
        #[arg(long)]
        seed: u64,
        /// begin | end | interleaved
        #[arg(long, default_value = "end")]
        placement: String,
        /// ideal | parasitic measurement backend
        #[arg(long, default_value = "ideal")]
        backend: String,
        /// Tamper one watermark cell before verification: ROW,COL
        #[arg(long)]
        tamper: Option<String>,
        /// Probes for the camouflage statistic (0 skips it)
        #[arg(long, default_value_t = 64)]
        camouflage_probes: usize,
        /// Write the watermark spec as structured text
        #[arg(long)]
        spec_out: Option<PathBuf>,
        #[arg(long)]
        node_config: Option<PathBuf>,
    },
    /// Generate a permutor key and print its figures of merit.
    Keygen {
        #[arg(long, default_value_t = 128)]
        rows: usize,
        /// Columns used for the transistor-overhead figure
        #[arg(long, default_value_t = 128)]
        cols: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Convert an emitted overhead report between CSV and JSON.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Output format: csv | json
        #[arg(long)]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_registry(node_config: Option<&Path>) -> anyhow::Result<NodeRegistry> {
    let mut registry = NodeRegistry::default();
    if let Some(path) = node_config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading node config {}", path.display()))?;
        registry.apply_config_str(&text)?;
    }
    Ok(registry)
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn parse_size(text: &str) -> anyhow::Result<(usize, usize)> {
    let (r, c) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("size `{text}` must look like ROWSxCOLS"))?;
    Ok((r.trim().parse()?, c.trim().parse()?))
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let device = MemristorParams::default();
    match cli.command {
        Command::Simulate {
            node,
            rows,
            cols,
            config,
            seed,
            batch,
            node_config,
            dump_matrix,
            out,
            data,
        } => {
            let registry = load_registry(node_config.as_deref())?;
            let params = registry.get(&node)?;
            let config = SecurityConfig::from_str(&config)?;
            let source = data.build_source(seed, batch)?;
            let inputs = source.build(rows, params.v_read, seed, batch)?;
            if let Some(path) = dump_matrix {
                let array = build_configured_array(params, &device, rows, cols, config, seed)?;
                let mut file = fs::File::create(&path)
                    .with_context(|| format!("creating {}", path.display()))?;
                build_network(&array).write_matrix_market(&mut file)?;
            }
            let result = run_config(params, &device, rows, cols, config, &inputs, seed)?;
            let mut text = serde_json::to_string_pretty(&result)?;
            text.push('\n');
            write_output(out.as_deref(), text.as_bytes())?;
        }
        Command::Sweep {
            nodes,
            sizes,
            configs,
            seed,
            batch,
            format,
            calibrated,
            node_config,
            out,
            data,
        } => {
            let mut registry = load_registry(node_config.as_deref())?;
            if calibrated {
                let base = registry.get("45nm")?.clone();
                let fitted = match calibrate(
                    &base,
                    &device,
                    &CalibrationTargets::default(),
                    256,
                    128,
                    seed,
                    batch.max(1),
                ) {
                    Ok(cal) => cal.params,
                    Err(CoreError::CalibrationFailed { best, residual, .. }) => {
                        eprintln!(
                            "{}",
                            serde_json::json!({
                                "warning": "calibration residual above bound; using best-found parameters",
                                "residual": residual,
                            })
                        );
                        *best
                    }
                    Err(e) => return Err(e.into()),
                };
                registry = apply_calibration(&registry, &fitted)?;
            }
            let grid = ExperimentGrid {
                nodes,
                sizes: sizes
                    .iter()
                    .map(|s| parse_size(s))
                    .collect::<anyhow::Result<Vec<_>>>()?,
                configs: configs
                    .iter()
                    .map(|c| SecurityConfig::from_str(c))
                    .collect::<Result<Vec<_>, _>>()?,
                seed,
                batch,
            };
            let source = data.build_source(seed, batch)?;
            let results = sweep(&grid, &registry, &device, &source)?;
            let rows = overhead_report(&results)?;
            let format = ReportFormat::from_str(&format)?;
            let mut buf = Vec::new();
            emit_report(&rows, format, &mut buf)?;
            write_output(out.as_deref(), &buf)?;
        }
        Command::Calibrate {
            node,
            rows,
            cols,
            seed,
            batch,
            targets,
            node_config,
            emit_config,
        } => {
            let registry = load_registry(node_config.as_deref())?;
            let base = registry.get(&node)?;
            let parts: Vec<f64> = targets
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| anyhow!("targets must be three numbers, got `{targets}`"))?;
            if parts.len() != 3 {
                bail!("targets must be three numbers, got `{targets}`");
            }
            let targets = CalibrationTargets {
                current_drop_pct: parts[0],
                delay_inc_pct: parts[1],
                power_inc_pct: parts[2],
            };
            // A failed calibration still carries the best-found parameters;
            // emit them so downstream sweeps can use the closest fit.
            let (params, residual, achieved, converged) =
                match calibrate(base, &device, &targets, rows, cols, seed, batch) {
                    Ok(cal) => (cal.params, cal.residual, cal.achieved, true),
                    Err(CoreError::CalibrationFailed {
                        best,
                        residual,
                        achieved,
                    }) => (*best, residual, achieved, false),
                    Err(e) => return Err(e.into()),
                };
            if let Some(path) = emit_config {
                let text = format!(
                    "[{}]\nr_switch = {}\np_switch = {}\np_wm_col = {}\n",
                    params.node_id, params.r_switch, params.p_switch, params.p_wm_col
                );
                fs::write(&path, text)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let summary = serde_json::json!({
                "node": params.node_id,
                "r_switch": params.r_switch,
                "p_switch": params.p_switch,
                "p_wm_col": params.p_wm_col,
                "residual": residual,
                "converged": converged,
                "achieved": {
                    "current_drop_pct": achieved[0],
                    "delay_inc_pct": achieved[1],
                    "power_inc_pct": achieved[2],
                },
            });
            if converged {
                println!("{summary}");
            } else {
                eprintln!(
                    "{}",
                    serde_json::json!({
                        "error": format!("calibration residual {residual:.4} exceeds 0.5; best-found parameters follow"),
                        "best": summary,
                    })
                );
                std::process::exit(1);
            }
        }
        Command::Attack {
            node,
            rows,
            cols,
            seed,
            key_seed,
            probes,
            keys_per_second,
            node_config,
        } => {
            let registry = load_registry(node_config.as_deref())?;
            let params = registry.get(&node)?;
            let array = build_configured_array(
                params,
                &device,
                rows,
                cols,
                SecurityConfig::Baseline,
                seed,
            )?;
            let key = generate_key(rows, key_seed.unwrap_or_else(|| derive_seed(seed, "key")));
            let secured = array.with_permutor(key)?;
            let clone = extract_and_clone(&secured);
            let mut rng = SplitMix64::new(derive_seed(seed, "attack-probes"));
            let probe_set: Vec<InputVector> = (0..probes.max(1))
                .map(|_| {
                    InputVector::new(
                        (0..rows).map(|_| rng.next_range(0.0, params.v_read)).collect(),
                        params.v_read,
                    )
                })
                .collect::<Result<_, _>>()?;
            let report = extraction_fidelity(&secured, &clone, &probe_set)?;
            println!(
                "{}",
                serde_json::json!({
                    "row_placement_accuracy": report.row_placement_accuracy,
                    "frobenius_error": report.frobenius_error,
                    "clone_output_mse": report.clone_output_mse,
                    "key_space_bits": key_space_bits(rows),
                    "brute_force_seconds": brute_force_cost(rows, keys_per_second)?,
                })
            );
        }
        Command::Watermark {
            node,
            rows,
            cols,
            seed,
            placement,
            backend,
            tamper,
            camouflage_probes,
            spec_out,
            node_config,
        } => {
            let registry = load_registry(node_config.as_deref())?;
            let params = registry.get(&node)?;
            let placement = Placement::from_str(&placement)?;
            let backend = match backend.as_str() {
                "ideal" => EvalBackend::Ideal,
                "parasitic" => EvalBackend::Parasitic,
                other => bail!("unknown backend `{other}` (expected ideal|parasitic)"),
            };
            let array = build_configured_array(
                params,
                &device,
                rows,
                cols,
                SecurityConfig::Baseline,
                seed,
            )?;
            let spec = make_watermark(rows, cols, seed, placement, params, &device);
            if let Some(path) = &spec_out {
                fs::write(path, spec.to_config_string())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let mut secured = embed_watermark(array, spec)?;
            if backend == EvalBackend::Parasitic {
                secured = resign_watermark(secured, backend)?;
            }
            let camouflage = if camouflage_probes > 0 {
                Some(camouflage_stats(&secured, camouflage_probes)?)
            } else {
                None
            };
            let measured_array = match &tamper {
                None => secured.clone(),
                Some(cell) => {
                    let (r, c) = cell
                        .split_once(',')
                        .ok_or_else(|| anyhow!("--tamper must be ROW,COL"))?;
                    let (r, c): (usize, usize) = (r.trim().parse()?, c.trim().parse()?);
                    let spec = secured.watermark().expect("just embedded");
                    let col = *spec
                        .column_indices()
                        .get(c)
                        .ok_or_else(|| anyhow!("--tamper column index must be 0 or 1"))?;
                    let old = xbar_core::crossbar::read_raw_conductances(&secured)[(r, col)];
                    secured.with_cell_conductance(r, col, flip_to_far_extreme(old, &device))?
                }
            };
            let measured = measure_probe_currents(&measured_array, backend)?;
            let report = verify_watermark(&measured, secured.watermark().expect("embedded"))?;
            let mut json = serde_json::to_value(&report)?;
            if let Some(d) = camouflage {
                json["camouflage_ks"] = serde_json::json!(d);
            }
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        Command::Keygen { rows, cols, seed } => {
            let key: PermKey = generate_key(rows, seed);
            println!(
                "{}",
                serde_json::json!({
                    "rows": rows,
                    "key": key.to_hex(),
                    "key_space_bits": key_space_bits(rows),
                    "transistor_overhead_pct": transistor_overhead(rows, cols) * 100.0,
                })
            );
        }
        Command::Report { input, format, out } => {
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let rows = if text.trim_start().starts_with('[') {
                parse_json_report(&text)?
            } else {
                parse_csv_report(&text)?
            };
            let format = ReportFormat::from_str(&format)?;
            let mut buf = Vec::new();
            emit_report(&rows, format, &mut buf)?;
            write_output(out.as_deref(), &buf)?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
        std::process::exit(1);
    }
}
