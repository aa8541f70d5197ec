use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use noisy_tomo::channel::{make_channel, ChannelKind};
use noisy_tomo::experiment::{prepare, run_prepared, theory, write_outputs, ExperimentConfig};
use noisy_tomo::information::{bloch_loss_map, refine_extrema, GridSpec};
use noisy_tomo::linalg::BlochVector;
use noisy_tomo::protocol::{measurement_operators, Protocol, ProtocolKind, ResourceLimit};
use noisy_tomo::report::heatmap_svg;
use noisy_tomo::{selfcheck, Error, Result};

/// `println!` that reports write failures instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout(), $($arg)*)?
    };
}

#[derive(Parser)]
#[command(
    name = "noisy-tomo",
    version,
    about = "Pure-state tomography through noisy measurement channels"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "NOISY_TOMO_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect built-in measurement protocols.
    Protocol {
        #[command(subcommand)]
        action: ProtocolAction,
    },
    /// Run a Monte Carlo experiment and write result files.
    Simulate {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Map the fidelity-loss coefficient L over the Bloch sphere.
    Blochmap {
        kind: ProtocolKind,
        /// e.g. `dephasing:t=0.8T2`, `amplitude:t=1.5T1`, `bitflip:p=0.1`, `identity`.
        #[arg(long, default_value = "identity")]
        channel: ChannelKind,
        #[command(flatten)]
        rotation: RotateArg,
        /// Polar,azimuthal resolution.
        #[arg(long, default_value = "61,120", value_parser = parse_grid)]
        grid: GridSpec,
        /// Polish the extrema with a local search after the grid scan.
        #[arg(long)]
        refine: bool,
        #[arg(long, default_value = ".")]
        output: PathBuf,
    },
    /// Print the predicted loss distribution of a config without sampling.
    Theory { config: PathBuf },
    /// Run the built-in consistency checks.
    Selfcheck,
}

#[derive(Subcommand)]
enum ProtocolAction {
    Show {
        kind: ProtocolKind,
        #[arg(long, default_value_t = 1)]
        qubits: usize,
        #[command(flatten)]
        rotation: RotateArg,
        /// Total sample size the weights refer to.
        #[arg(long, default_value_t = 1.0)]
        n: f64,
    },
}

#[derive(Args)]
struct RotateArg {
    /// Rotate the protocol: `ax,ay,az,angle` (angle in radians).
    #[arg(long, value_parser = parse_rotation, allow_hyphen_values = true)]
    rotate: Option<(BlochVector, f64)>,
}

fn parse_numbers(s: &str, count: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| f64::from_str(x.trim()).map_err(|e| format!("`{x}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != count {
        return Err(format!("expected {count} comma-separated numbers"));
    }
    Ok(v)
}

fn parse_rotation(s: &str) -> std::result::Result<(BlochVector, f64), String> {
    let v = parse_numbers(s, 4)?;
    let axis = BlochVector::new(v[0], v[1], v[2])
        .normalized()
        .map_err(|e| e.to_string())?;
    Ok((axis, v[3]))
}

fn parse_grid(s: &str) -> std::result::Result<GridSpec, String> {
    let v = parse_numbers(s, 2)?;
    if v.iter().any(|x| x.fract() != 0.0 || *x < 1.0) {
        return Err("grid sizes must be positive integers".into());
    }
    Ok(GridSpec {
        theta: v[0] as usize,
        phi: v[1] as usize,
    })
}

fn rotated(kind: ProtocolKind, n: f64, rotation: &RotateArg) -> Result<Protocol> {
    let p = Protocol::build(kind, n)?;
    match &rotation.rotate {
        Some((axis, angle)) => p.rotate(axis, *angle),
        None => Ok(p),
    }
}

fn fmt_complex(z: &num_complex::Complex64) -> String {
    format!("{:+.6}{:+.6}i", z.re, z.im)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Protocol {
            action:
                ProtocolAction::Show {
                    kind,
                    qubits,
                    rotation,
                    n,
                },
        } => {
            let p = rotated(kind, n, &rotation)?.tensor_power(qubits, ResourceLimit::default())?;
            out!(
                "protocol {} ({} rows, dimension {}, n = {})",
                p.label(),
                p.len(),
                p.dim(),
                p.n()
            );
            for (j, (row, w)) in p.rows().iter().zip(p.weights()).enumerate() {
                let entries: Vec<String> = row.iter().map(fmt_complex).collect();
                out!("{j:>4}  t = {w:.6}  [{}]", entries.join(", "));
            }
            out!("unity residual: {:e}", p.unity_residual());
            Ok(true)
        }
        Command::Simulate { config, output } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let prep = prepare(&cfg)?;
            let result = run_prepared(&prep)?;
            let dir = output
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            let files = write_outputs(&result, &dir)?;
            let s = &result.summary;
            out!("protocol: {}  channel: {}", result.protocol, result.channel);
            out!(
                "trials: {} completed, {} failed, {} converged",
                s.completed,
                s.failed,
                s.converged
            );
            out!(
                "mean 1-F: {:.6e} (theory {:.6e}, {:+.2} standard errors)",
                s.empirical_mean,
                s.theoretical_mean,
                s.mean_z
            );
            out!(
                "variance 1-F: {:.6e} (theory {:.6e})",
                s.empirical_variance,
                s.theoretical_variance
            );
            out!("KS distance: {:.4}", s.ks_distance);
            out!("mean chi2: {:.4} (nu_H = {})", s.chi2_mean, s.nu_h);
            for f in files {
                out!("wrote {}", f.display());
            }
            Ok(s.failed == 0)
        }
        Command::Blochmap {
            kind,
            channel,
            rotation,
            grid,
            refine,
            output,
        } => {
            let p = rotated(kind, 1.0, &rotation)?;
            let ch = make_channel(channel)?;
            let map = bloch_loss_map(&p, &ch, grid)?;
            std::fs::create_dir_all(&output)?;
            let csv = output.join("blochmap.csv");
            let svg = output.join("blochmap.svg");
            std::fs::write(&csv, map.to_csv())?;
            std::fs::write(&svg, heatmap_svg(&map))?;
            out!(
                "L_min = {:.4} at (theta, phi) = ({:.4}, {:.4})",
                map.l_min,
                map.argmin.0,
                map.argmin.1
            );
            out!(
                "L_max = {:.4} at (theta, phi) = ({:.4}, {:.4})",
                map.l_max,
                map.argmax.0,
                map.argmax.1
            );
            if refine {
                let meas = noisy_tomo::channel::fold_channel(&measurement_operators(&p), &ch)?;
                let r = refine_extrema(&map, &meas)?;
                out!("refined L_min = {:.6}, L_max = {:.6}", r.l_min, r.l_max);
            }
            out!("wrote {}", csv.display());
            out!("wrote {}", svg.display());
            Ok(true)
        }
        Command::Theory { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let prep = prepare(&cfg)?;
            let (t, _) = theory(&prep)?;
            out!("protocol: {}  channel: {}", prep.protocol.label(), prep.channel.label());
            let d: Vec<String> = t.spectrum.d.iter().map(|x| format!("{x:.6e}")).collect();
            out!("d = [{}]", d.join(", "));
            out!("mean 1-F = {:.6e}", t.mean);
            out!("variance 1-F = {:.6e}", t.variance);
            out!("L = {:.6}", t.l);
            out!("nu = {}", t.nu);
            out!("nu_H = {}", t.nu_h);
            if t.skipped_rows > 0 {
                out!("rows skipped (zero probability): {}", t.skipped_rows);
            }
            Ok(true)
        }
        Command::Selfcheck => {
            let checks = selfcheck::run_all()?;
            let mut ok = true;
            for c in &checks {
                out!(
                    "[{}] {} (worst {:.3e}, tolerance {:.0e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.worst,
                    c.tolerance
                );
                ok &= c.passed;
            }
            Ok(ok)
        }
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
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Error::Io(e)) if e.kind() == ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
