//! Command-line interface: `analytics`, `simulate`, `sweep`, and
//! `oracle-validate`. Flags mirror the config keys; `--key value` overrides
//! win over `--config` file entries.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::analytics::{dressed_energies, pump_resonance, two_photon_occupation};
use crate::cli::config::{merge, parse_config, RunSpec};
use crate::cli::output::{
    format_sig17, prepare_out_dir, spectrum_svg, write_spectrum_csv, write_sweep_csv,
    write_table_csv, write_text, Manifest,
};
use crate::crosscheck::{cluster_oracle_equivalence, dressed_splitting_check, rabi_frequency_check};
use crate::error::{Error, Result};
use crate::oracle::{factorization_error, DriveSpec, FactorizationScenario, OracleConfig};
use crate::params::derive;
use crate::spectra::{find_peaks, IntensityMode};
use crate::sweeps::{
    geomspace, linspace, run_fluorescence, sweep_dephasing, sweep_pump_frequency,
    sweep_pump_intensity,
};

#[derive(Parser, Debug)]
#[command(
    name = "rfspec",
    version,
    about = "Resonance-fluorescence and photon-statistics spectra of quantum-dot microcavities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form ladder analytics for a scenario (key = value report).
    Analytics(AnalyticsArgs),
    /// One resonance-fluorescence run: spectrum and g2 CSVs plus a manifest.
    Simulate(SimulateArgs),
    /// Parameter sweep: pump-frequency, pump-intensity, or dephasing.
    Sweep(SweepArgs),
    /// Exact single-mode validation: ladder, Rabi dynamics, cluster
    /// equivalence, and the four-photon factorization audit.
    OracleValidate(OracleValidateArgs),
}

/// Configuration flags shared by all run-like subcommands; each flag mirrors
/// a config-file key.
#[derive(Args, Debug, Default, Clone)]
struct SpecArgs {
    /// Config file with key = value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long = "omega-c-eV")]
    omega_c_ev: Option<f64>,
    #[arg(long = "Q")]
    q_factor: Option<f64>,
    #[arg(long = "gamma-cav")]
    gamma_cav: Option<f64>,
    #[arg(long = "gamma-P")]
    gamma_p: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Areal dot density (cm^-2).
    #[arg(long = "n-dot")]
    n_dot: Option<f64>,
    /// Effective cavity area (um^2).
    #[arg(long = "S")]
    cavity_area: Option<f64>,
    /// Dot count; must stay consistent with density times area.
    #[arg(long = "N-dot")]
    n_dot_count: Option<u32>,
    /// Dipole moment (Angstrom e).
    #[arg(long)]
    d: Option<f64>,
    #[arg(long = "mode-count")]
    mode_count: Option<usize>,
    #[arg(long = "half-width-over-g")]
    half_width_over_g: Option<f64>,
    #[arg(long = "pump-sigma-over-g")]
    pump_sigma_over_g: Option<f64>,
    /// Pump carrier offset in GHz, or `auto` for the optimum two-photon pump.
    #[arg(long = "pump-carrier-offset")]
    pump_carrier_offset: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Pulse arrival time in ns, or `auto`.
    #[arg(long = "pump-t-peak")]
    pump_t_peak: Option<String>,
    /// Integrator step in ns, or `auto` for the stability bound.
    #[arg(long)]
    dt: Option<String>,
    /// Horizon in ns, or `auto` for t_peak + 6 tau_cav.
    #[arg(long = "t-end")]
    t_end: Option<String>,
    /// Snapshot cadence in steps, or `auto`.
    #[arg(long = "record-every")]
    record_every: Option<String>,
}

fn auto_f64(key: &str, value: &Option<String>) -> Result<Option<f64>> {
    match value.as_deref() {
        None | Some("auto") => Ok(None),
        Some(text) => text.parse::<f64>().map(Some).map_err(|_| {
            Error::Config(format!("flag --{key}: cannot parse `{text}` as a number"))
        }),
    }
}

fn auto_usize(key: &str, value: &Option<String>) -> Result<Option<usize>> {
    match value.as_deref() {
        None | Some("auto") => Ok(None),
        Some(text) => text.parse::<usize>().map(Some).map_err(|_| {
            Error::Config(format!(
                "flag --{key}: cannot parse `{text}` as a positive integer"
            ))
        }),
    }
}

impl SpecArgs {
    /// Combine config file and flags into one spec; flags win.
    fn to_spec(&self) -> Result<RunSpec> {
        let base = match &self.config {
            Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
            None => RunSpec::default(),
        };
        let flags = RunSpec {
            scenario: self.scenario.clone(),
            g: self.g,
            omega_c_ev: self.omega_c_ev,
            q_factor: self.q_factor,
            gamma_cav: self.gamma_cav,
            gamma_p: self.gamma_p,
            delta: self.delta,
            n_dot_per_cm2: self.n_dot,
            cavity_area_um2: self.cavity_area,
            n_dot: self.n_dot_count,
            dipole: self.d,
            mode_count: self.mode_count,
            half_width_over_g: self.half_width_over_g,
            pump_sigma_over_g: self.pump_sigma_over_g,
            pump_carrier_offset: auto_f64("pump-carrier-offset", &self.pump_carrier_offset)?,
            alpha: self.alpha,
            pump_t_peak: auto_f64("pump-t-peak", &self.pump_t_peak)?,
            dt: auto_f64("dt", &self.dt)?,
            t_end: auto_f64("t-end", &self.t_end)?,
            record_every: auto_usize("record-every", &self.record_every)?,
        };
        Ok(merge(&base, &flags))
    }
}

#[derive(Args, Debug)]
struct AnalyticsArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long = "out-dir", default_value = "out")]
    out_dir: String,
    /// Also render simple SVG line plots with analytic marker lines.
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Sweep kind: pump-frequency, pump-intensity, or dephasing.
    #[arg(long)]
    kind: String,
    /// Knob start (GHz for frequencies/dephasing, amplitude for intensity).
    #[arg(long)]
    from: Option<f64>,
    /// Knob stop.
    #[arg(long)]
    to: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Knob spacing: linear or log.
    #[arg(long)]
    scale: Option<String>,
    #[arg(long = "out-dir", default_value = "out")]
    out_dir: String,
}

#[derive(Args, Debug)]
struct OracleValidateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Fock cutoff for the exact solver.
    #[arg(long = "n-max", default_value_t = 8)]
    n_max: usize,
    #[arg(long = "out-dir", default_value = "out")]
    out_dir: String,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful exits.
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Analytics(args) => cmd_analytics(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::OracleValidate(args) => cmd_oracle_validate(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn kv(out: &mut String, key: &str, value: impl std::fmt::Display) {
    out.push_str(&format!("{key} = {value}\n"));
}

fn cmd_analytics(args: AnalyticsArgs) -> Result<()> {
    let spec = args.spec.to_spec()?;
    let setup = spec.resolve()?;
    let params = &setup.params;
    let derived = derive(params);
    let resonance = pump_resonance(params.g, params.delta)?;

    let mut report = String::new();
    kv(
        &mut report,
        "scenario",
        spec.scenario.as_deref().unwrap_or("custom"),
    );
    kv(&mut report, "g_GHz", format_sig17(params.g));
    kv(&mut report, "delta_GHz", format_sig17(params.delta));
    kv(&mut report, "gamma_cav_GHz", format_sig17(params.gamma_cav));
    kv(&mut report, "gamma_P_GHz", format_sig17(params.gamma_p));
    kv(&mut report, "tau_rabi_ns", format_sig17(derived.tau_rabi));
    kv(&mut report, "tau_cav_ns", format_sig17(derived.tau_cav));
    for k in 1..=4 {
        let rung = dressed_energies(k, params.g)?;
        kv(
            &mut report,
            &format!("rung_{k}_splitting_GHz"),
            format_sig17(rung.splitting()),
        );
    }
    kv(
        &mut report,
        "optimum_pump_offset_GHz",
        format_sig17(resonance.optimum_pump),
    );
    kv(
        &mut report,
        "second_rung_emission_lower_GHz",
        format_sig17(resonance.emission_lower),
    );
    kv(
        &mut report,
        "second_rung_emission_upper_GHz",
        format_sig17(resonance.emission_upper),
    );
    kv(&mut report, "pump_alpha", format_sig17(setup.alpha));
    kv(
        &mut report,
        "pump_P2",
        format_sig17(two_photon_occupation(setup.alpha)),
    );

    match &args.out {
        Some(path) => {
            write_text(path, &report)?;
        }
        None => print!("{report}"),
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let started = Instant::now();
    let spec = args.spec.to_spec()?;
    let setup = spec.resolve()?;
    let out_dir = prepare_out_dir(&args.out_dir)?;

    let run = run_fluorescence(&setup)?;
    run.ensure_ok()?;
    let final_spec = run.final_spectrum(IntensityMode::Incoherent)?;
    let pump_max_spec = run.pump_max_spectrum()?;

    let mut manifest = Manifest::new("simulate", serde_json::to_value(&spec)?);
    manifest.convergence.dt = Some(run.integ.dt);
    manifest.convergence.excitation_balance_drift = Some(run.balance_drift());

    let spectrum_path = out_dir.join("spectrum.csv");
    manifest.add_output(&spectrum_path, write_spectrum_csv(&final_spec, &spectrum_path)?);
    let pumpmax_path = out_dir.join("spectrum_pumpmax.csv");
    manifest.add_output(&pumpmax_path, write_spectrum_csv(&pump_max_spec, &pumpmax_path)?);

    if args.svg {
        let g = setup.params.g;
        let resonance = pump_resonance(g, setup.params.delta)?;
        let markers = [
            (-g, "-g"),
            (g, "+g"),
            (resonance.emission_lower, "2nd-"),
            (resonance.emission_upper, "2nd+"),
        ];
        let svg = spectrum_svg(&final_spec, &markers, "emission intensity");
        let svg_path = out_dir.join("spectrum.svg");
        manifest.add_output(&svg_path, write_text(&svg_path, &svg)?);
    }

    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(&out_dir.join("manifest.json"))?;

    let peaks = find_peaks(&final_spec.omega, &final_spec.intensity, 0.02);
    let peak_list: Vec<String> = peaks
        .iter()
        .map(|p| format!("{:.3} GHz", p.offset))
        .collect();
    println!(
        "simulate: wrote {} (balance drift {:.2e}); intensity peaks: [{}]",
        out_dir.display(),
        run.balance_drift(),
        peak_list.join(", ")
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let started = Instant::now();
    let spec = args.spec.to_spec()?;
    let setup = spec.resolve()?;
    let out_dir = prepare_out_dir(&args.out_dir)?;
    let g = setup.params.g;

    let log_scale = match args.scale.as_deref() {
        None => args.kind == "pump-intensity",
        Some("linear") => false,
        Some("log") => true,
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown --scale `{other}`; use linear or log"
            )))
        }
    };
    let knob = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        if log_scale {
            geomspace(lo, hi, n)
        } else {
            linspace(lo, hi, n)
        }
    };

    let result = match args.kind.as_str() {
        "pump-frequency" => {
            let optimum = pump_resonance(g, setup.params.delta)?.optimum_pump;
            let lo = args.from.unwrap_or(0.0);
            let hi = args.to.unwrap_or(1.5 * optimum);
            // Default step 0.05 g.
            let n = args
                .points
                .unwrap_or(((hi - lo) / (0.05 * g)).round() as usize + 1);
            sweep_pump_frequency(&setup, &knob(lo, hi, n))?
        }
        "pump-intensity" => {
            let lo = args.from.unwrap_or(0.1);
            let hi = args.to.unwrap_or(2.0_f64.sqrt());
            let n = args.points.unwrap_or(12);
            sweep_pump_intensity(&setup, &knob(lo, hi, n))?
        }
        "dephasing" => {
            let lo = args.from.unwrap_or(0.06);
            let hi = args.to.unwrap_or(2.0);
            let n = args.points.unwrap_or(8);
            sweep_dephasing(&setup, &knob(lo, hi, n))?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown sweep kind `{other}`; use pump-frequency, pump-intensity, or dephasing"
            )))
        }
    };

    let mut manifest = Manifest::new(format!("sweep {}", args.kind), serde_json::to_value(&spec)?);
    let sweep_path = out_dir.join("sweep.csv");
    manifest.add_output(&sweep_path, write_sweep_csv(&result, &sweep_path)?);
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(&out_dir.join("manifest.json"))?;

    let summary = result
        .columns
        .first()
        .and_then(|(name, _)| result.argmax(name).map(|am| (name.clone(), am)));
    match summary {
        Some((name, (_, knob_at, value))) => println!(
            "sweep {}: wrote {}; argmax {name} = {value:.4e} at {} = {knob_at:.4}",
            args.kind,
            out_dir.display(),
            result.knob_name
        ),
        None => println!(
            "sweep {}: wrote {}; all {} points failed",
            args.kind,
            out_dir.display(),
            result.knob.len()
        ),
    }
    if result.failed_points() > 0 {
        eprintln!(
            "warning: {} of {} sweep points failed",
            result.failed_points(),
            result.knob.len()
        );
    }
    Ok(())
}

fn cmd_oracle_validate(args: OracleValidateArgs) -> Result<()> {
    let started = Instant::now();
    let spec = args.spec.to_spec()?;
    let setup = spec.resolve()?;
    let out_dir = prepare_out_dir(&args.out_dir)?;
    let params = &setup.params;
    let g = params.g;

    let mut report = String::new();
    kv(&mut report, "g_GHz", format_sig17(g));
    kv(&mut report, "n_max", args.n_max);

    // Ladder eigen-splittings against the closed forms.
    for check in dressed_splitting_check(g, args.n_max, 2)? {
        kv(
            &mut report,
            &format!("rung_{}_splitting_measured_GHz", check.k),
            format_sig17(check.measured),
        );
        kv(
            &mut report,
            &format!("rung_{}_splitting_rel_err", check.k),
            format_sig17(check.rel_err),
        );
    }

    // Second-manifold Rabi frequency from the density-matrix dynamics.
    let rabi = rabi_frequency_check(g, args.n_max.max(4))?;
    kv(&mut report, "rabi_measured_GHz", format_sig17(rabi.measured));
    kv(&mut report, "rabi_expected_GHz", format_sig17(rabi.expected));
    kv(&mut report, "rabi_rel_err", format_sig17(rabi.rel_err));

    // Weak-excitation equivalence of the correlation dynamics.
    let t_end = 3.0 * std::f64::consts::PI / g;
    let equiv = cluster_oracle_equivalence(
        g,
        0.05_f64.sqrt(),
        0.0,
        t_end,
        2e-4,
        10,
        args.n_max.max(10),
    )?;
    kv(&mut report, "equiv_beta_rel", format_sig17(equiv.beta_rel));
    kv(&mut report, "equiv_f_rel", format_sig17(equiv.f_rel));
    kv(&mut report, "equiv_n_rel", format_sig17(equiv.n_rel));

    // Four-photon factorization audit on the standard second-rung drive.
    let ocfg = OracleConfig {
        n_max: args.n_max,
        g,
        delta: params.delta,
        gamma_p: params.gamma_p,
        gamma_cav: params.gamma_cav,
    };
    let scenario = FactorizationScenario {
        drive: DriveSpec {
            alpha: 0.1_f64.sqrt(),
            sigma: 0.2 * g,
            carrier: pump_resonance(g, params.delta)?.optimum_pump,
            t_peak: 5.0 / g,
        },
        t_end: 10.0 / g,
        dt: 0.5 * 0.02 / ocfg.g.max(params.gamma_cav).max(5.0 * g),
        record_every: 10,
    };
    let audit = factorization_error(&ocfg, &scenario)?;
    kv(
        &mut report,
        "factorization_max_rel_dev",
        format_sig17(audit.max_rel_dev),
    );

    let mut manifest = Manifest::new("oracle-validate", serde_json::to_value(&spec)?);
    manifest.convergence.factorization_max_rel_dev = Some(audit.max_rel_dev);

    let report_path = out_dir.join("oracle_report.txt");
    manifest.add_output(&report_path, write_text(&report_path, &report)?);

    let equiv_rows: Vec<Vec<Option<f64>>> = (0..equiv.times.len())
        .map(|i| {
            vec![
                Some(equiv.times[i]),
                Some(equiv.beta_dev[i]),
                Some(equiv.f_dev[i]),
                Some(equiv.n_dev[i]),
            ]
        })
        .collect();
    let equiv_path = out_dir.join("oracle_equivalence.csv");
    manifest.add_output(
        &equiv_path,
        write_table_csv(
            &["t_ns", "beta_abs_dev", "f_abs_dev", "n_abs_dev"],
            &equiv_rows,
            &equiv_path,
        )?,
    );

    let audit_rows: Vec<Vec<Option<f64>>> = (0..audit.times.len())
        .map(|i| {
            vec![
                Some(audit.times[i]),
                Some(audit.exact[i]),
                Some(audit.factorized[i]),
                Some(audit.rel_dev[i]),
            ]
        })
        .collect();
    let audit_path = out_dir.join("oracle_factorization.csv");
    manifest.add_output(
        &audit_path,
        write_table_csv(
            &["t_ns", "four_photon_exact", "four_photon_factorized", "rel_dev"],
            &audit_rows,
            &audit_path,
        )?,
    );

    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(&out_dir.join("manifest.json"))?;
    print!("{report}");
    println!("oracle-validate: wrote {}", out_dir.display());
    Ok(())
}
