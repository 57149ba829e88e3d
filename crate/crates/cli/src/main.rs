//! `vrkhs`: config-driven experiment runner over the library crate.
//!
//! Every subcommand shares one shape: `vrkhs <cmd> --config run.toml
//! --out dir [--seed N]`. A run writes its CSV artifacts plus a
//! `report.txt` into the output directory and echoes the report on
//! stdout. Exit status is zero only when every output was written and
//! every runtime gate in the invoked modules passed; otherwise a single
//! JSON error line goes to stderr.
//!
//! Given the same config and seed, re-runs are deterministic and CSV
//! bodies are byte-identical (wall time lives only in `report.txt`).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use vrkhs::config::TableSection;
use vrkhs::io::{
    residuals_csv, write_coefficients_csv, write_curse_csv, write_estimates_csv,
    write_power_sweep_csv, write_rate_files, write_trace_csv,
};
use vrkhs::{
    assemble_simulation, build_subspace, check_deadzone_freeze, check_descent,
    check_estimate_bound, convergence_study, curse_comparison, fit_order, interpolate,
    interpolation_residual, parse_toml, power_sweep, reduced_smoothness, simulate,
    ultimate_error, CurseConfig, Error, FitX, FitY, InterpConfig, PowerConfig, RateMeta, RateRow,
    RateTable, RatesConfig, Result, RunReport, SimulateConfig, StudyOptions,
};

#[derive(Parser)]
#[command(
    name = "vrkhs",
    version,
    about = "Kernel interpolation, power functions, rate studies, and adaptive control runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interpolate a target over a center set; write coefficients and residuals.
    Interp(RunArgs),
    /// Sweep the power functions over a point cloud.
    Power(RunArgs),
    /// Fit convergence orders from a study or a planted table.
    Rates(RunArgs),
    /// Integrate the adaptive closed loop and check its runtime gates.
    Simulate(RunArgs),
    /// Tabulate cube-vs-manifold center-count predictions.
    Curse(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if absent.
    #[arg(long)]
    out: PathBuf,
    /// Probe-cloud seed; overrides the config's own seed when given.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Interp(a) => ("interp", a),
        Command::Power(a) => ("power", a),
        Command::Rates(a) => ("rates", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Curse(a) => ("curse", a),
    };
    match run(name, args) {
        Ok(report) => {
            print!("{}", report.render());
            ExitCode::SUCCESS
        }
        Err(err) => {
            let line = serde_json::json!({
                "status": "error",
                "command": name,
                "message": err.to_string(),
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn run(name: &str, args: &RunArgs) -> Result<RunReport> {
    let started = Instant::now();
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Io(format!("{}: {e}", args.config.display())))?;
    fs::create_dir_all(&args.out)
        .map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))?;
    let mut report = RunReport::new(name, text.as_bytes());
    match name {
        "interp" => cmd_interp(&text, &args.out, &mut report)?,
        "power" => cmd_power(&text, &args.out, &mut report)?,
        "rates" => cmd_rates(&text, &args.out, &mut report)?,
        "simulate" => cmd_simulate(&text, &args.out, args.seed, &mut report)?,
        "curse" => cmd_curse(&text, &args.out, &mut report)?,
        other => return Err(Error::Unsupported(format!("unknown command '{other}'"))),
    }
    report.wall_time_s = started.elapsed().as_secs_f64();
    report.write(&args.out)?;
    Ok(report)
}

fn write_named(out: &Path, name: &str, body: &str, report: &mut RunReport) -> Result<()> {
    fs::write(out.join(name), body).map_err(|e| Error::Io(format!("{name}: {e}")))?;
    report.outputs.push(name.to_string());
    Ok(())
}

fn cmd_interp(text: &str, out: &Path, report: &mut RunReport) -> Result<()> {
    let config: InterpConfig = parse_toml(text)?;
    let kernel = config.kernel.build()?;
    let manifold = config.manifold.as_ref().map(|m| m.build()).transpose()?;
    let centers = config.centers.build(manifold.as_ref())?;
    let subspace = build_subspace(&kernel, &centers)?;
    let values = config
        .target
        .build_values(&kernel, manifold.as_ref(), &centers)?;
    let function = interpolate(&subspace, &values)?;

    write_coefficients_csv(&out.join("coefficients.csv"), &function)?;
    report.outputs.push("coefficients.csv".into());
    let blocks: Vec<_> = centers
        .iter()
        .zip(&values)
        .map(|(c, v)| Ok(function.eval(c)? - v))
        .collect::<Result<_>>()?;
    write_named(out, "residuals.csv", &residuals_csv(&centers, &blocks)?, report)?;

    report.metric("n_centers", centers.len());
    report.metric(
        "residual_max",
        interpolation_residual(&subspace, &function, &values)?,
    );
    Ok(())
}

fn cmd_power(text: &str, out: &Path, report: &mut RunReport) -> Result<()> {
    let config: PowerConfig = parse_toml(text)?;
    let kernel = config.kernel.build()?;
    let manifold = config.manifold.as_ref().map(|m| m.build()).transpose()?;
    let centers = config.centers.build(manifold.as_ref())?;
    let subspace = build_subspace(&kernel, &centers)?;
    let cloud = config.cloud.build(manifold.as_ref(), &centers)?;
    if cloud.is_empty() {
        return Err(Error::EmptyInput("power sweep cloud"));
    }
    let sweep = power_sweep(&subspace, &cloud)?;

    write_power_sweep_csv(&out.join("power_sweep.csv"), &cloud, &sweep)?;
    report.outputs.push("power_sweep.csv".into());

    report.metric("n_centers", centers.len());
    report.metric("cloud_size", cloud.len());
    report.metric(
        "sup_power2",
        sweep.iter().fold(0.0_f64, |acc, &(p2, _)| acc.max(p2)),
    );
    report.metric(
        "sup_power_inf",
        sweep.iter().fold(0.0_f64, |acc, &(_, pi)| acc.max(pi)),
    );
    report.metric("k_bar", kernel.diagonal_bound());
    Ok(())
}

fn cmd_rates(text: &str, out: &Path, report: &mut RunReport) -> Result<()> {
    let config: RatesConfig = parse_toml(text)?;
    let table = match (&config.study, &config.table) {
        (Some(_), Some(_)) => {
            return Err(Error::Unsupported(
                "rates config must choose study or table, not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Unsupported(
                "rates config needs a study or table section".into(),
            ))
        }
        (Some(study), None) => {
            let kernel = config
                .kernel
                .as_ref()
                .ok_or(Error::Unsupported("rates study needs a kernel section".into()))?
                .build()?;
            let manifold = config
                .manifold
                .as_ref()
                .ok_or(Error::Unsupported(
                    "rates study needs a manifold section".into(),
                ))?
                .build()?;
            let target = study.target.build_field(&kernel, Some(&manifold), &[])?;
            let options = StudyOptions {
                candidate_count: study.candidate_count,
                probe_offset_factor: study.probe_offset_factor,
                probe_count: study.probe_count,
                target_id: study.target.id(),
            };
            convergence_study(&kernel, &manifold, &target, &study.n_list, &options)?
        }
        (None, Some(planted)) => planted_table(&config, planted)?,
    };

    for name in write_rate_files(out, &table)? {
        report.outputs.push(name);
    }

    let fx = match config.fit.x.as_str() {
        "fill" => FitX::Fill,
        "centers" => FitX::Centers,
        other => {
            return Err(Error::Unsupported(format!(
                "unknown fit abscissa '{other}'"
            )))
        }
    };
    let fy = match config.fit.y.as_str() {
        "sup_err" => FitY::SupErr,
        "sup_power" => FitY::SupPower,
        other => {
            return Err(Error::Unsupported(format!(
                "unknown fit ordinate '{other}'"
            )))
        }
    };
    report.metric("rows", table.rows().len());
    if let Some(s) = table.meta.decay_order {
        report.metric("decay_order", s);
    }
    if let Some(s_bar) = table.meta.reduced_order {
        report.metric("reduced_order", s_bar);
    }
    match fit_order(&table, fx, fy) {
        Ok((slope, r_squared)) => {
            report.metric("slope", slope);
            report.metric("r_squared", r_squared);
        }
        // Fewer than three rows above the machine floor: the target is
        // already resolved, there is no order left to fit.
        Err(Error::InsufficientData { .. }) => report.metric("rate", "floor reached"),
        Err(err) => return Err(err),
    }
    Ok(())
}

fn planted_table(config: &RatesConfig, planted: &TableSection) -> Result<RateTable> {
    let len = planted.n.len();
    if planted.h.len() != len {
        return Err(Error::DimensionMismatch {
            context: "planted table h column",
            expected: len,
            got: planted.h.len(),
        });
    }
    if planted.sup_err.len() != len {
        return Err(Error::DimensionMismatch {
            context: "planted table sup_err column",
            expected: len,
            got: planted.sup_err.len(),
        });
    }
    if planted.sup_power.len() != len {
        return Err(Error::DimensionMismatch {
            context: "planted table sup_power column",
            expected: len,
            got: planted.sup_power.len(),
        });
    }
    let rows: Vec<RateRow> = (0..len)
        .map(|i| RateRow {
            n_centers: planted.n[i],
            fill: planted.h[i],
            sup_err: planted.sup_err[i],
            sup_power: planted.sup_power[i],
        })
        .collect();

    let kernel = config.kernel.as_ref().map(|k| k.build()).transpose()?;
    let manifold = config.manifold.as_ref().map(|m| m.build()).transpose()?;
    let (ell, ambient) = manifold
        .as_ref()
        .map(|m| (m.intrinsic_dim(), m.ambient_dim()))
        .unwrap_or((0, 0));
    let decay_order = match (&kernel, &manifold) {
        (Some(k), Some(_)) => k.scalar().decay_order_s(ambient),
        _ => None,
    };
    let reduced_order = match decay_order {
        Some(s) => Some(reduced_smoothness(s, ambient, ell)?.value),
        None => None,
    };
    RateTable::new(
        rows,
        RateMeta {
            kernel_desc: kernel
                .map(|k| k.to_string())
                .unwrap_or_else(|| "planted".into()),
            manifold_desc: manifold
                .map(|m| m.to_string())
                .unwrap_or_else(|| "planted".into()),
            target_id: "planted".into(),
            decay_order,
            reduced_order,
            intrinsic_dim: ell,
            ambient_dim: ambient,
        },
    )
}

fn cmd_simulate(text: &str, out: &Path, seed: Option<u64>, report: &mut RunReport) -> Result<()> {
    let config: SimulateConfig = parse_toml(text)?;
    let setup = assemble_simulation(&config, seed)?;
    let trace = simulate(
        &setup.plant,
        &setup.reference,
        &setup.gains,
        &setup.deadzone,
        &setup.subspace,
        &setup.initial,
        &setup.params,
    )?;

    write_trace_csv(&out.join("trace.csv"), &trace)?;
    report.outputs.push("trace.csv".into());
    write_estimates_csv(&out.join("estimates.csv"), &trace)?;
    report.outputs.push("estimates.csv".into());

    let delta = setup.deadzone.delta;
    let frozen_rows = check_deadzone_freeze(&trace, delta)?;
    let estimate_norm_max = check_estimate_bound(&trace)?;
    let (tail_norm_e_max, tail_epe_max) = ultimate_error(&trace, 0.25)?;

    report.metric("seed", setup.seed);
    report.metric("n_centers", setup.subspace.len());
    report.metric("delta", delta);
    report.metric("deadzone_floor_consistent", setup.floor.consistent);
    report.metric("deadzone_floor_printed", setup.floor.printed);
    report.metric("sup_residual", setup.floor.sup_residual);
    report.metric("tracking_radius", setup.tracking_radius);
    report.metric("rows", trace.rows().len());
    report.metric("frozen_rows", frozen_rows);
    report.metric("estimate_norm_max", estimate_norm_max);
    report.metric("tail_norm_e_max", tail_norm_e_max);
    report.metric("tail_epe_max", tail_epe_max);

    // Descent outside the deadzone is only guaranteed once the deadzone
    // clears the projection-residual floor; below it the check would
    // punish the theory for the operator's choice of delta.
    if delta >= setup.floor.consistent {
        let descent = check_descent(&trace, delta)?;
        report.metric("descent_intervals", descent.checked_intervals);
        report.metric("descent_worst_excess", descent.worst_excess);
    } else {
        report.metric("descent", "skipped: deadzone below the guaranteed floor");
    }
    Ok(())
}

fn cmd_curse(text: &str, out: &Path, report: &mut RunReport) -> Result<()> {
    let config: CurseConfig = parse_toml(text)?;
    let c = &config.curse;
    let rows = curse_comparison(
        c.epsilon,
        c.s,
        c.ell,
        c.s_bar,
        &c.n_list,
        (c.calibration[0], c.calibration[1]),
    )?;

    write_curse_csv(&out.join("curse.csv"), &rows)?;
    report.outputs.push("curse.csv".into());

    report.metric("rows", rows.len());
    report.metric("manifold_centers", rows[0].manifold_centers);
    report.metric(
        "ratio_max",
        rows.last().map(|r| r.ratio).unwrap_or(f64::NAN),
    );
    Ok(())
}
