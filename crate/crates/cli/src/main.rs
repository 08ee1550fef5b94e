use clap::{Parser, Subcommand};
use sdnlab_core::dnmap::dn_distance;
use sdnlab_core::error::{Error, Result};
use sdnlab_core::forward::{energy_report, solve_ibvp};
use sdnlab_core::harness::checks::GO_HEADER;
use sdnlab_core::harness::field_io::{self, Payload};
use sdnlab_core::harness::{self, ExperimentConfig, SweepContext};
use sdnlab_core::recovery::RecoveredField;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sdnlab", version, about = "Numerical experiments on the magnetic Schrodinger DN map")]
struct Cli {
    /// TOML experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "SDNLAB_OUT")]
    out: Option<PathBuf>,
    /// Overrides `harness.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (all cores by default).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the IBVP with one boundary basis element as Dirichlet data.
    Forward {
        #[arg(long)]
        element: Option<usize>,
    },
    /// DN matrices of the base and perturbed pairs and their distance.
    Dn {
        /// Also double the basis until eps settles.
        #[arg(long)]
        converge: bool,
    },
    /// Transport residuals and remainder norms of GO packets.
    GoCheck,
    /// Recover chi^2 A and chi^2 q differences from DN pairings.
    Recover,
    /// DN distance and difference norms over the amplitude ladder.
    Sweep {
        #[arg(long)]
        append: bool,
    },
    /// Log-log fit of a sweep CSV.
    Fit {
        /// Defaults to `<out>/sweep.csv`.
        csv: Option<PathBuf>,
    },
    /// SVG plots of a sweep CSV.
    Plot { csv: Option<PathBuf> },
}

struct Run {
    config: ExperimentConfig,
    out: PathBuf,
    hash: String,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn sweep_csv(&self, csv: &Option<PathBuf>) -> PathBuf {
        csv.clone().unwrap_or_else(|| self.path("sweep.csv"))
    }
}

fn setup(cli: &Cli) -> Result<Run> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.harness.seed = s;
    }
    let out = cli.out.clone().or_else(|| config.harness.out.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::invalid(e.to_string()))?;
    }
    let hash = config.hash()?;
    Ok(Run { config, out, hash })
}

fn print(v: serde_json::Value) {
    println!("{v}");
}

fn forward(run: &Run, element: Option<usize>) -> Result<()> {
    let c = &run.config;
    let ctx = SweepContext::new_without_matrix(c)?;
    let k = element.unwrap_or(c.forward.element);
    let g = ctx.basis.elements.get(k).ok_or_else(|| Error::invalid(format!("basis has {} elements, asked for {k}", ctx.basis.len())))?;
    let u = solve_ibvp(&ctx.grid, &ctx.base, g)?;
    let rep = energy_report(&ctx.grid, &u, None);
    let label = ctx.basis.labels[k];
    let meta = json!({ "config_hash": run.hash, "element": k, "label": format!("{:?}", label) });
    field_io::write_complex_field(&run.path("u.bin"), &u, meta)?;
    print(json!({ "element": k, "l2": ctx.grid.l2_norm_c(&u), "energy": rep }));
    Ok(())
}

fn dn(run: &Run, converge: bool) -> Result<()> {
    let c = &run.config;
    let ctx = SweepContext::new(c)?;
    let p2 = ctx.pair(c.recovery.amplitude);
    let m2 = ctx.matrix_of(&p2)?;
    let eps = dn_distance(&ctx.base_matrix, &m2)?;
    field_io::write_dn_matrix(&run.path("dn_base.bin"), &ctx.base_matrix)?;
    field_io::write_dn_matrix(&run.path("dn_perturbed.bin"), &m2)?;
    let mut report = json!({ "amplitude": c.recovery.amplitude, "eps": eps, "columns": ctx.basis.len() });
    if converge {
        let (steps, ok) = harness::basis_convergence(&ctx.grid, &ctx.base, &p2, c.dnmap.l_time, c.dnmap.m_space, c.dnmap.max_doublings)?;
        if !ok {
            log::warn!("eps did not settle within {} basis doublings", c.dnmap.max_doublings);
        }
        report["convergence"] = json!({ "steps": steps, "converged": ok });
    }
    print(report);
    Ok(())
}

fn go_check(run: &Run) -> Result<()> {
    let rows = harness::go_check(&run.config)?;
    let cells: Vec<Vec<String>> = rows.iter().map(|r| r.cells()).collect();
    harness::write_table(&run.path("go_check.csv"), &run.hash, &GO_HEADER, &cells)?;
    print(json!({ "rows": rows }));
    Ok(())
}

fn write_recovered(path: &Path, f: &RecoveredField, names: &[&str], hash: &str) -> Result<()> {
    let d = f.components[0].dims();
    let mut v = Vec::with_capacity(f.components.len() * f.components[0].data().len());
    for c in &f.components {
        v.extend_from_slice(c.data());
    }
    let meta = json!({
        "kind": "recovered_field",
        "components": names,
        "schedule": f.schedule,
        "imag_max": f.imag_max,
        "samples": f.samples.len(),
        "config_hash": hash,
    });
    field_io::write_file(path, &[f.components.len(), d[0], d[1], d[2]], meta, &Payload::F64(v))
}

fn write_samples(path: &Path, f: &RecoveredField, hash: &str) -> Result<()> {
    let values = f.samples.iter().map(|s| s.value).collect::<Vec<_>>();
    let points: Vec<_> = f.samples.iter().map(|s| json!({ "tau": s.tau, "xi": s.xi, "direction": s.direction, "budget": s.budget })).collect();
    let meta = json!({ "kind": "spectrum_samples", "schedule": f.schedule, "points": points, "config_hash": hash });
    field_io::write_file(path, &[values.len()], meta, &Payload::C128(values))
}

fn recover(run: &Run) -> Result<()> {
    let (eps, r) = harness::recover_once(&run.config)?;
    write_recovered(&run.path("a_rec.bin"), &r.a, &["ax", "ay"], &run.hash)?;
    write_recovered(&run.path("q_rec.bin"), &r.q, &["q"], &run.hash)?;
    write_samples(&run.path("samples_a.bin"), &r.a, &run.hash)?;
    write_samples(&run.path("samples_q.bin"), &r.q, &run.hash)?;
    print(json!({
        "eps": eps,
        "rec_err_A": r.err_a,
        "rec_err_q": r.err_q,
        "schedule": r.a.schedule,
    }));
    Ok(())
}

fn sweep(run: &Run, append: bool) -> Result<()> {
    let rows = harness::run_sweep(&run.config)?;
    let path = run.path("sweep.csv");
    harness::write_sweep_csv(&path, &run.hash, &rows, append)?;
    let failed = rows.iter().filter(|r| !r.ok()).count();
    print(json!({ "csv": path, "points": rows.len(), "failed": failed }));
    Ok(())
}

fn fit(run: &Run, csv: &Option<PathBuf>) -> Result<()> {
    let (_, rows) = harness::read_sweep_csv(&run.sweep_csv(csv))?;
    let f = harness::fit_holder(&rows)?;
    let text = serde_json::to_string_pretty(&f).map_err(|e| Error::format(e.to_string()))?;
    std::fs::write(run.path("fit.json"), format!("{text}\n"))?;
    print(serde_json::to_value(&f).map_err(|e| Error::format(e.to_string()))?);
    Ok(())
}

fn plot(run: &Run, csv: &Option<PathBuf>) -> Result<()> {
    let (_, rows) = harness::read_sweep_csv(&run.sweep_csv(csv))?;
    let paths = harness::emit_plots(&rows, &run.out)?;
    print(json!({ "plots": paths }));
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let run = setup(cli)?;
    match &cli.cmd {
        Cmd::Forward { element } => forward(&run, *element),
        Cmd::Dn { converge } => dn(&run, *converge),
        Cmd::GoCheck => go_check(&run),
        Cmd::Recover => recover(&run),
        Cmd::Sweep { append } => sweep(&run, *append),
        Cmd::Fit { csv } => fit(&run, csv),
        Cmd::Plot { csv } => plot(&run, csv),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with 2 on usage errors, same as a bad config
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
