use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use filter_forge::magnus::{crossover, default_scan_grid, log_grid, DEFAULT_SCAN_G};
use filter_forge::{
    analyze, cdd_sequence, chi_gaussian, fff_eval, figure1_scan, free_evolution, toggling_control_matrix,
    udd_sequence_bits, Caps, Error, IndexTuple, NoiseSpectrum, PauliAxis, PulseSequence, ScanModel, ScanRow,
};

mod svg;

#[derive(Parser)]
#[command(name = "filter-forge", version, about = "Filter functions, orders and decay for pulse sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Subcommand)]
enum Command {
    /// Filtering and cancellation orders of a sequence (JSON).
    Orders {
        /// Sequence file, or `udd:N`, `cdd:K`, `free`.
        seq: String,
        /// Error axes, e.g. `z` or `xz`.
        #[arg(long, default_value = "z")]
        axes: String,
        #[arg(long, default_value_t = 7)]
        alpha_max: usize,
        #[arg(long, default_value_t = 12)]
        degree_cap: u32,
        /// Bits kept in irrational pulse times of generated sequences.
        #[arg(long, default_value_t = 192)]
        precision: u32,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Evaluate a fundamental filter function on a frequency grid (CSV).
    Fff {
        seq: String,
        /// Row axes, one letter per position (defaults to `z` repeated).
        #[arg(long)]
        u: Option<String>,
        /// Column axes, one letter per position.
        #[arg(long, default_value = "z")]
        v: String,
        /// `log:lo:hi:n`, `lin:lo:hi:n` or a comma list; applied to every frequency slot.
        #[arg(long, default_value = "log:0.01:100:41")]
        grid: String,
        /// Explicit frequency tuples `w1,w2;w1,w2`, overriding --grid.
        #[arg(long, allow_hyphen_values = true)]
        omega: Option<String>,
        #[arg(long, default_value_t = 53)]
        precision: u32,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Error-action ratio of UDD4 to CDD3 across frequencies and couplings.
    Fig1 {
        /// Comma-separated couplings.
        #[arg(long)]
        g: Option<String>,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        /// Directory receiving fig1.csv and fig1.svg; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Gaussian dephasing exponent for a noise spectrum.
    Decay {
        seq: String,
        /// Spectrum file or inline JSON.
        #[arg(long)]
        spectrum: String,
        /// Comma-separated durations, or a grid.
        #[arg(long, short = 'T', default_value = "1")]
        duration: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Print a sequence in canonical JSON.
    Sequence {
        seq: String,
        #[arg(long, default_value_t = 192)]
        precision: u32,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure carrying its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn code_of(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::InvalidArgument(_) | Error::Json(_) => 2,
                Error::Unsupported(_) | Error::CostGuard(_) => 3,
                Error::Numeric(_) => 4,
                Error::Io(_) => 1,
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() || cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
    }
    1
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(msg.into()).into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_threads().and_then(|_| run(cli)).map_err(|e| Failure { code: code_of(&e), error: e }) {
        eprintln!("error: {:#}", f.error);
        return ExitCode::from(f.code);
    }
    ExitCode::SUCCESS
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("FILTER_FORGE_THREADS") {
        let n: usize = match v.trim().parse() {
            Ok(n) if n > 0 => n,
            _ => return usage(format!("FILTER_FORGE_THREADS must be a positive integer, got `{v}`")),
        };
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Orders { seq, axes, alpha_max, degree_cap, precision, duration, out, format } => {
            if alpha_max == 0 || degree_cap == 0 || precision == 0 {
                return usage("caps must be positive");
            }
            let (name, sequence) = load_sequence(&seq, duration, precision)?;
            let axes = parse_axes(&axes)?;
            let cm = toggling_control_matrix(&sequence, &axes)?;
            let report = analyze(&cm, &name, Caps { alpha_max, degree_cap })?;
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&report.to_json())? + "\n",
                Format::Csv => {
                    let mut s = String::from("alpha,u,v,phi,delta,lower_bound\n");
                    for e in &report.per_index {
                        let word = |a: &[PauliAxis]| a.iter().map(|x| x.label()).collect::<String>();
                        writeln!(
                            s,
                            "{},{},{},{},{},{}",
                            e.index.alpha(),
                            word(&e.index.u),
                            word(&e.index.v),
                            e.phi.value(),
                            e.delta.value(),
                            !e.phi.is_resolved()
                        )?;
                    }
                    s
                }
                Format::Svg => bail!(Error::Unsupported("orders have no plot".into())),
            };
            emit(out.as_deref(), &text)
        }
        Command::Fff { seq, u, v, grid, omega, precision, duration, out, format } => {
            let (_, sequence) = load_sequence(&seq, duration, 192)?;
            let v = parse_axes(&v)?;
            let u = match u {
                Some(u) => parse_axes(&u)?,
                None => vec![PauliAxis::Z; v.len()],
            };
            if u.len() != v.len() {
                return usage("--u and --v need the same length");
            }
            let idx = IndexTuple::new(u, v)?;
            let mut axes: Vec<PauliAxis> = idx.u.clone();
            axes.sort();
            axes.dedup();
            let cm = toggling_control_matrix(&sequence, &axes)?;
            let points = match omega {
                Some(o) => parse_tuples(&o, idx.alpha())?,
                None => cartesian(&parse_grid(&grid)?, idx.alpha()),
            };
            let rows = points
                .iter()
                .map(|w| fff_eval(&cm, &idx, w, precision))
                .collect::<filter_forge::Result<Vec<_>>>()?;
            let text = match format {
                Format::Csv => {
                    let mut s = String::new();
                    for j in 1..=idx.alpha() {
                        write!(s, "omega_{j},")?;
                    }
                    s.push_str("re,im,abs\n");
                    for r in &rows {
                        for w in &r.omega {
                            write!(s, "{},", num(*w))?;
                        }
                        writeln!(s, "{},{},{}", num(r.value.re), num(r.value.im), num(r.value.norm()))?;
                    }
                    s
                }
                Format::Json => {
                    let list: Vec<_> = rows
                        .iter()
                        .map(|r| serde_json::json!({"omega": r.omega, "re": r.value.re, "im": r.value.im}))
                        .collect();
                    let doc = serde_json::json!({"index": idx.to_string(), "rows": list});
                    serde_json::to_string_pretty(&doc)? + "\n"
                }
                Format::Svg => bail!(Error::Unsupported("use fig1 for plots".into())),
            };
            emit(out.as_deref(), &text)
        }
        Command::Fig1 { g, grid, duration, out, format } => {
            let g_list = match g {
                Some(g) => parse_list(&g)?,
                None => DEFAULT_SCAN_G.to_vec(),
            };
            let omegas = match grid {
                Some(gr) => parse_grid(&gr)?,
                None => default_scan_grid(),
            };
            let rows = figure1_scan(&omegas, &g_list, duration)?;
            for &gv in &g_list {
                let c = crossover(&rows, gv, ScanModel::Quantum);
                eprintln!("g = {}: quantum crossover {}", num(gv), c.map_or("none".into(), num));
            }
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                    write_file(&dir.join("fig1.csv"), &scan_csv(&rows))?;
                    write_file(&dir.join("fig1.svg"), &svg::scan_plot(&rows, &g_list))?;
                    if format == Format::Json {
                        write_file(&dir.join("fig1.json"), &(serde_json::to_string_pretty(&rows)? + "\n"))?;
                    }
                    Ok(())
                }
                None => emit(
                    None,
                    &match format {
                        Format::Csv => scan_csv(&rows),
                        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
                        Format::Svg => svg::scan_plot(&rows, &g_list),
                    },
                ),
            }
        }
        Command::Decay { seq, spectrum, duration, out, format } => {
            let (name, sequence) = load_sequence(&seq, 1.0, 192)?;
            let text = if spectrum.trim_start().starts_with('{') {
                spectrum.clone()
            } else {
                read(Path::new(&spectrum))?
            };
            let spec = NoiseSpectrum::from_json(&text).with_context(|| format!("spectrum {spectrum}"))?;
            let cm = toggling_control_matrix(&sequence, &[PauliAxis::Z])?;
            let times = parse_grid(&duration)?;
            let mut rows = Vec::new();
            for &t in &times {
                rows.push((t, chi_gaussian(&cm, &spec, t)?));
            }
            let text = match format {
                Format::Csv => {
                    let mut s = String::from("sequence,spectrum,T,chi,exp_neg_chi\n");
                    for (t, chi) in &rows {
                        writeln!(s, "{name},{},{},{},{}", spec.label(), num(*t), num(*chi), num((-chi).exp()))?;
                    }
                    s
                }
                Format::Json => {
                    let list: Vec<_> = rows
                        .iter()
                        .map(|(t, chi)| serde_json::json!({"T": t, "chi": chi, "exp_neg_chi": (-chi).exp()}))
                        .collect();
                    let doc = serde_json::json!({"sequence": name, "spectrum": spec, "rows": list});
                    serde_json::to_string_pretty(&doc)? + "\n"
                }
                Format::Svg => bail!(Error::Unsupported("decay has no plot".into())),
            };
            emit(out.as_deref(), &text)
        }
        Command::Sequence { seq, precision, duration, out } => {
            let (_, sequence) = load_sequence(&seq, duration, precision)?;
            emit(out.as_deref(), &(sequence.to_json() + "\n"))
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| anyhow!(Error::Io(e)).context(format!("reading {}", path.display())))
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).map_err(|e| anyhow!(Error::Io(e)).context(format!("writing {}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `udd:N`, `cdd:K`, `free`, or a path to sequence JSON.
fn load_sequence(spec: &str, duration: f64, bits: u32) -> anyhow::Result<(String, PulseSequence)> {
    let lower = spec.to_ascii_lowercase();
    let count = |s: &str| -> anyhow::Result<usize> {
        s.parse().or_else(|_| usage(format!("bad sequence count in `{spec}`")))
    };
    let seq = if let Some(n) = lower.strip_prefix("udd:") {
        udd_sequence_bits(count(n)?, duration, bits)?
    } else if let Some(k) = lower.strip_prefix("cdd:") {
        cdd_sequence(count(k)?, duration)?
    } else if lower == "free" {
        free_evolution(duration)?
    } else {
        let path = Path::new(spec);
        let text = read(path)?;
        let seq = PulseSequence::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        let name = path.file_stem().map_or(spec.to_string(), |s| s.to_string_lossy().into_owned());
        return Ok((name, seq));
    };
    Ok((lower.replace(':', ""), seq))
}

fn parse_axes(s: &str) -> anyhow::Result<Vec<PauliAxis>> {
    let axes: Vec<PauliAxis> = s
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| c.to_string().parse::<PauliAxis>())
        .collect::<filter_forge::Result<_>>()?;
    if axes.is_empty() {
        return usage("empty axis list");
    }
    Ok(axes)
}

fn parse_list(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().or_else(|_| usage(format!("bad number `{x}`"))))
        .collect()
}

/// `log:lo:hi:n`, `lin:lo:hi:n`, or a comma list.
fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [kind @ ("log" | "lin"), lo, hi, n] => {
            let (lo, hi) = (parse_list(lo)?[0], parse_list(hi)?[0]);
            let n: usize = n.trim().parse().or_else(|_| usage(format!("bad point count in `{s}`")))?;
            if *kind == "log" {
                Ok(log_grid(lo, hi, n)?)
            } else {
                if n < 2 || !(hi > lo) {
                    return usage("linear grid needs lo < hi and at least two points");
                }
                Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
            }
        }
        [_] => parse_list(s),
        _ => usage(format!("bad grid `{s}`; expected log:lo:hi:n, lin:lo:hi:n or a list")),
    }
}

fn parse_tuples(s: &str, alpha: usize) -> anyhow::Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|t| {
            let w = parse_list(t)?;
            if w.len() != alpha {
                return usage(format!("frequency tuple `{t}` needs {alpha} entries"));
            }
            Ok(w)
        })
        .collect()
}

/// Every `alpha`-tuple from `grid`, last slot fastest.
fn cartesian(grid: &[f64], alpha: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..alpha {
        out = out
            .into_iter()
            .flat_map(|p| {
                grid.iter().map(move |&w| {
                    let mut q = p.clone();
                    q.push(w);
                    q
                })
            })
            .collect();
    }
    out
}

/// Shortest round-trip decimal, in exponent form outside `[1e-4, 1e15)`.
fn num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn scan_csv(rows: &[ScanRow]) -> String {
    let mut s = String::from("omega,g,model,norm_udd4,norm_cdd3,ratio,flags\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            num(r.omega),
            num(r.g),
            r.model.label(),
            num(r.norm_udd4),
            num(r.norm_cdd3),
            num(r.ratio),
            r.flags.join(";")
        );
    }
    s
}
