use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use cqed_core::acceptance;
use cqed_core::fit::{fit_sqrt_n, fit_vrs};
use cqed_core::io::{
    read_scan, read_table, write_scan, write_table, FitReport, PlotSpec, RunConfig, Series,
};
use cqed_core::oracle::{oracle_transmission, SystemSpec};
use cqed_core::qed::{spectrum, symmetric_grid, transmission, Detunings};
use cqed_core::spatial::{array_layout, envelope, local_coupling, sample_detunings, AtomSite};
use cqed_core::stats::{binomial_pmf, chi_square_gof};
use cqed_core::stochastic::simulate_loading;
use cqed_core::thermal::{mean_phonon, thermal_coupling};
use cqed_core::{Error, Result};

/// Cavity QED simulator and analysis toolkit for single-atom arrays.
#[derive(Debug, Parser)]
#[command(name = "cqed", version)]
struct Cli {
    /// JSON configuration file (defaults to $CQED_CONFIG when set).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Physical parameters that override the configuration file.
#[derive(Debug, Args)]
struct Overrides {
    /// Peak single-atom coupling (MHz).
    #[arg(long, global = true)]
    g0: Option<f64>,
    /// Cavity field decay rate (MHz).
    #[arg(long, global = true)]
    kappa: Option<f64>,
    /// Atomic dipole decay rate (MHz).
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Probe drive strength (MHz), oracle only.
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Atom temperature (μK).
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Lattice depth (mK).
    #[arg(long, global = true)]
    lattice_depth: Option<f64>,
    /// Per-site loading probability.
    #[arg(long, global = true)]
    p_load: Option<f64>,
    /// Width of the cavity-atom detuning spread (MHz).
    #[arg(long, global = true)]
    detuning_spread: Option<f64>,
    /// Oracle photon-number cutoff.
    #[arg(long, global = true)]
    photon_cutoff: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transmission spectrum of N atoms as CSV and SVG.
    SimulateSpectrum {
        #[arg(long)]
        n_atoms: usize,
        /// Per-site couplings from the array layout and random per-atom detunings.
        #[arg(long)]
        inhomogeneous: bool,
        /// Solve the master equation instead of the analytic formula.
        #[arg(long)]
        oracle: bool,
        /// Half width of the probe scan (MHz).
        #[arg(long, default_value_t = 15.0)]
        span: f64,
        /// Probe step (MHz).
        #[arg(long, default_value_t = 0.1)]
        step: f64,
    },
    /// Fit a vacuum-Rabi spectrum CSV.
    FitSpectrum { csv: PathBuf },
    /// Coupling along the cavity axis.
    ScanZ {
        #[arg(long, default_value_t = 500.0)]
        half_range: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
    },
    /// Transverse coupling profile.
    ScanXy {
        #[arg(long, default_value_t = 120.0)]
        half_range: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
    },
    /// Thermally averaged coupling at a lattice site.
    ThermalAvg {
        /// `node`, `antinode` or a position in nm.
        #[arg(long, default_value = "antinode")]
        z0: String,
    },
    /// Monte Carlo of array loading.
    LoadMc {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Fit Ω_N = g'√N to a CSV of (N, Ω_N).
    FitScaling { csv: PathBuf },
    /// Run the acceptance checks.
    Verify,
}

impl Cli {
    fn flags(&self) -> Map<String, Value> {
        let o = &self.overrides;
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("g0", o.g0.map(Value::from));
        put("kappa", o.kappa.map(Value::from));
        put("gamma", o.gamma.map(Value::from));
        put("eta", o.eta.map(Value::from));
        put("temperature", o.temperature.map(Value::from));
        put("lattice-depth", o.lattice_depth.map(Value::from));
        put("p-load", o.p_load.map(Value::from));
        put("detuning-spread", o.detuning_spread.map(Value::from));
        put("photon-cutoff", o.photon_cutoff.map(Value::from));
        put("seed", self.seed.map(Value::from));
        put(
            "out",
            self.out
                .as_ref()
                .map(|p| Value::from(p.to_string_lossy().into_owned())),
        );
        m
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(cfg.out.join(name))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn simulate_spectrum(
    cfg: &RunConfig,
    n: usize,
    inhomogeneous: bool,
    oracle: bool,
    span: f64,
    step: f64,
) -> Result<()> {
    let cavity = cfg.cavity();
    let lw = cavity.linewidths();
    let (g, dca) = if inhomogeneous && n > 0 {
        let layout = array_layout(n, cfg.spacing, cfg.center_offset, &cfg.geometry()?, cfg.g0)?;
        (
            layout.couplings(),
            sample_detunings(n, cfg.seed, cfg.detuning_spread),
        )
    } else {
        (vec![cfg.g0; n], vec![0.0; n])
    };
    let grid = symmetric_grid(span, step);
    let scan = if oracle {
        let mut s = SystemSpec::uniform(n, cfg.g0, 0.0, lw.kappa, lw.gamma, cfg.eta)
            .with_cutoff(cfg.photon_cutoff);
        s.per_atom_g = g.clone();
        s.per_atom_delta_ca = dca.clone();
        oracle_transmission(&s, &grid)?
    } else {
        let omega = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mean_dca = if n > 0 {
            dca.iter().sum::<f64>() / n as f64
        } else {
            0.0
        };
        spectrum(&grid, omega, mean_dca, lw)?
    };
    let csv = out_path(cfg, "spectrum.csv")?;
    write_scan(&csv, &scan)?;
    let svg = out_path(cfg, "spectrum.svg")?;
    PlotSpec::new(
        &format!("Transmission, N = {n}"),
        "probe-atom detuning (MHz)",
        "transmission",
    )
    .with(Series::line(
        if oracle {
            "master equation"
        } else {
            "analytic"
        },
        scan.detunings(),
        scan.transmissions(),
    ))
    .write(&svg)?;
    println!("{}", csv.display());
    println!("{}", svg.display());
    Ok(())
}

fn fit_spectrum(cfg: &RunConfig, csv: &Path) -> Result<()> {
    let scan = read_scan(csv)?;
    let cavity = cfg.cavity();
    let fit = fit_vrs(&scan, &cavity)?;
    let report = FitReport::from(&fit);
    let json_path = out_path(cfg, "fit.json")?;
    std::fs::write(&json_path, report.to_json()? + "\n")?;
    let x = scan.detunings();
    let model: Vec<f64> = x
        .iter()
        .map(|&d| {
            fit.params[2]
                * transmission(
                    Detunings::from_pa_ca(d, fit.params[1]),
                    fit.params[0],
                    cavity.linewidths(),
                )
        })
        .collect();
    let svg = out_path(cfg, "fit.svg")?;
    PlotSpec::new(
        "Vacuum-Rabi fit",
        "probe-atom detuning (MHz)",
        "transmission",
    )
    .with(Series::points("data", x.clone(), scan.transmissions()))
    .with(Series::line("fit", x, model))
    .write(&svg)?;
    println!("{}", report.to_json()?);
    Ok(())
}

fn axis(half: f64, step: f64) -> Result<Vec<f64>> {
    if !(half > 0.0 && step > 0.0) {
        return Err(Error::Domain("range and step must be positive".into()));
    }
    Ok(symmetric_grid(half, step))
}

fn scan_z(cfg: &RunConfig, half: f64, step: f64) -> Result<()> {
    let geom = cfg.geometry()?;
    let z = axis(half, step)?;
    let g: Vec<f64> = z.iter().map(|&z| cfg.g0 * envelope(z, &geom)).collect();
    let rows: Vec<Vec<f64>> = z.iter().zip(&g).map(|(a, b)| vec![*a, *b]).collect();
    let csv = out_path(cfg, "coupling_z.csv")?;
    write_table(
        std::fs::File::create(&csv)?,
        &["z_um", "coupling_MHz"],
        &rows,
    )?;
    PlotSpec::new(
        "Lattice-site coupling along the cavity axis",
        "z (um)",
        "coupling (MHz)",
    )
    .with(Series::line("g0 |cos(pi z / P)|", z, g))
    .write(&out_path(cfg, "coupling_z.svg")?)?;
    println!("{}", csv.display());
    Ok(())
}

fn scan_xy(cfg: &RunConfig, half: f64, step: f64) -> Result<()> {
    let geom = cfg.geometry()?;
    let r = axis(half, step)?;
    let gx: Vec<f64> = r
        .iter()
        .map(|&x| local_coupling(&AtomSite::at(0, x, 0.0, 0.0), &geom, cfg.g0))
        .collect();
    let gy: Vec<f64> = r
        .iter()
        .map(|&y| local_coupling(&AtomSite::at(0, 0.0, y, 0.0), &geom, cfg.g0))
        .collect();
    let rows: Vec<Vec<f64>> = (0..r.len()).map(|i| vec![r[i], gx[i], gy[i]]).collect();
    let csv = out_path(cfg, "coupling_xy.csv")?;
    write_table(
        std::fs::File::create(&csv)?,
        &["offset_um", "coupling_x_MHz", "coupling_y_MHz"],
        &rows,
    )?;
    PlotSpec::new(
        "Transverse coupling profile",
        "offset (um)",
        "coupling (MHz)",
    )
    .with(Series::line("x", r.clone(), gx))
    .with(Series::line("y", r, gy))
    .write(&out_path(cfg, "coupling_xy.svg")?)?;
    println!("{}", csv.display());
    Ok(())
}

fn thermal_avg(cfg: &RunConfig, z0: &str) -> Result<()> {
    let geom = cfg.geometry()?;
    let trap = cfg.trap()?;
    let z = match z0 {
        "antinode" => 0.0,
        "node" => geom.lambda_probe() / 4.0,
        other => other.parse::<f64>().map_err(|_| {
            Error::Domain(format!(
                "--z0 must be node, antinode or a number of nm, got '{other}'"
            ))
        })?,
    };
    let value = thermal_coupling(z, &trap, &geom, cfg.g0, cfg.n_max)?;
    let convergence: Vec<Value> = [5, 10, 15, 20, 30]
        .iter()
        .map(|&n| {
            thermal_coupling(z, &trap, &geom, cfg.g0, n)
                .map(|g| json!({"n_max": n, "coupling_MHz": g}))
        })
        .collect::<Result<_>>()?;
    let report = json!({
        "z0_nm": z,
        "mean_phonon": mean_phonon(&trap),
        "n_max": cfg.n_max,
        "coupling_MHz": value,
        "ratio_to_g0": value / cfg.g0,
        "convergence": convergence,
    });
    write_json(&out_path(cfg, "thermal.json")?, &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn load_mc(cfg: &RunConfig, trials: usize) -> Result<()> {
    let m = cfg.loading()?;
    let run = simulate_loading(&m, trials, cfg.seed)?;
    let rows: Vec<Vec<f64>> = run
        .histogram
        .iter()
        .enumerate()
        .map(|(k, &c)| vec![k as f64, c as f64, c as f64 / trials as f64])
        .collect();
    let csv = out_path(cfg, "loading.csv")?;
    write_table(
        std::fs::File::create(&csv)?,
        &["atoms_count", "trials_count", "probability"],
        &rows,
    )?;
    let gof = chi_square_gof(&run.histogram, &binomial_pmf(m.n_tweezers, m.p_load), 5.0)?;
    let summary = json!({
        "trials": trials,
        "seed": cfg.seed,
        "p_load": m.p_load,
        "n_tweezers": m.n_tweezers,
        "mean": run.mean,
        "expected_mean": m.expected_mean(),
        "chi2": gof.statistic,
        "dof": gof.dof,
        "p_value": gof.p_value,
    });
    write_json(&out_path(cfg, "loading.json")?, &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn fit_scaling(cfg: &RunConfig, csv: &Path) -> Result<()> {
    let t = read_table(std::fs::File::open(csv)?)?;
    let (Some(n), Some(omega)) = (t.column_at(0), t.column_at(1)) else {
        return Err(Error::Parse {
            line: 1,
            message: "expected atom-number and coupling columns".into(),
        });
    };
    let points: Vec<(f64, f64)> = n.iter().copied().zip(omega.iter().copied()).collect();
    let fit = fit_sqrt_n(&points)?;
    let report =
        json!({"g_prime_MHz": fit.g_prime, "sigma_MHz": fit.sigma, "points": points.len()});
    write_json(&out_path(cfg, "scaling.json")?, &report)?;
    let n_max = n.iter().copied().fold(1.0, f64::max);
    let curve_n: Vec<f64> = (0..=200).map(|i| n_max * i as f64 / 200.0).collect();
    let curve: Vec<f64> = curve_n.iter().map(|v| fit.g_prime * v.sqrt()).collect();
    PlotSpec::new("Collective coupling", "atom number N", "coupling (MHz)")
        .with(Series::points("measured", n, omega))
        .with(Series::line("g' sqrt(N)", curve_n, curve))
        .write(&out_path(cfg, "scaling.svg")?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn verify() -> bool {
    let results = acceptance::run_all();
    for r in &results {
        println!("{r}");
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} checks passed", results.len());
    passed == results.len()
}

fn run(cli: &Cli) -> Result<bool> {
    if let Command::Verify = cli.command {
        return Ok(verify());
    }
    let cfg = RunConfig::load(cli.config.as_deref(), cli.flags())?;
    match &cli.command {
        Command::SimulateSpectrum {
            n_atoms,
            inhomogeneous,
            oracle,
            span,
            step,
        } => simulate_spectrum(&cfg, *n_atoms, *inhomogeneous, *oracle, *span, *step)?,
        Command::FitSpectrum { csv } => fit_spectrum(&cfg, csv)?,
        Command::ScanZ { half_range, step } => scan_z(&cfg, *half_range, *step)?,
        Command::ScanXy { half_range, step } => scan_xy(&cfg, *half_range, *step)?,
        Command::ThermalAvg { z0 } => thermal_avg(&cfg, z0)?,
        Command::LoadMc { trials } => load_mc(&cfg, *trials)?,
        Command::FitScaling { csv } => fit_scaling(&cfg, csv)?,
        Command::Verify => unreachable!(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
