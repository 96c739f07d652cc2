use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfgsim_core::config::{fmt_f64, load_config_file};
use mfgsim_core::equilibrium::{contraction_diagnostics, compute_gains, solve_equilibrium, EquilibriumSolution};
use mfgsim_core::model::{check_structural_assumptions, DecoderInit, GameConfig};
use mfgsim_core::report::{quartiles_csv, summary_csv, timeseries_csv, trace_csv};
use mfgsim_core::sim::{
    default_deviation_family, dual_effect_probe_with, mean_and_stderr, nash_gap, quartiles, run_batch, run_game,
    PolicySpec, ProbeArm, ProbeOptions,
};
use mfgsim_core::{Error, Result};

/// Mean-field LQ games over scheduled noisy links.
///
/// Exit codes: 0 ok, 1 probe mismatch, 2 config error, 3 assumption
/// violation, 4 solver non-convergence. Set MFGSIM_THREADS to cap the worker
/// pool.
#[derive(Parser)]
#[command(name = "mfgsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the equilibrium and print per-type gains and diagnostics.
    Solve(Common),
    /// Run `runs` games and write summary, per-step series and (optionally) the trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the full per-agent trace of run 0.
        #[arg(long)]
        trace: bool,
    },
    /// Run `runs` games per threshold and write summary rows plus quartiles.
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        /// Comma-separated thresholds.
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
    },
    /// Estimate the first agent's unilateral deviation gain.
    NashGap(Common),
    /// Check that estimation error and schedule do not depend on control.
    ProbeDualEffect {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        tamper_scheduler: bool,
    },
    /// Validate a config and its structural assumptions without simulating.
    Check(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Iterate the mean-field law even when the contraction condition fails.
    #[arg(long)]
    force: bool,
    #[arg(long, value_parser = ["prior_mean", "zero"])]
    decoder_init: Option<String>,
    /// Use a previously solved equilibrium file instead of solving.
    #[arg(long)]
    equilibrium: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<GameConfig> {
        let mut cfg = load_config_file(&self.config)?;
        if let Some(n) = self.agents {
            cfg.sim.agents = n;
        }
        if let Some(t) = self.horizon {
            cfg.sim.horizon = t;
        }
        if let Some(a) = self.alpha {
            cfg.scheduler.alpha = a;
        }
        if let Some(s) = self.seed {
            cfg.sim.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.sim.runs = r;
        }
        if let Some(d) = &self.decoder_init {
            cfg.options.decoder_init = d.parse::<DecoderInit>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn solution(&self, cfg: &GameConfig) -> Result<EquilibriumSolution> {
        match &self.equilibrium {
            Some(path) => {
                let sol = EquilibriumSolution::from_text(&fs::read_to_string(path)?)?;
                sol.check_compatible(&cfg.distribution)?;
                Ok(sol)
            }
            None => solve_equilibrium(&cfg.distribution, &cfg.solver, self.force),
        }
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        if let Some(dir) = &self.out {
            write_file(dir, name, contents)?;
        }
        Ok(())
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("MFGSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Invalid(format!("MFGSIM_THREADS must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(Error::Invalid("MFGSIM_THREADS must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invalid(e.to_string()))
}

fn fmt_matrix(m: &mfgsim_core::Matrix) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| r.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" "))
        .collect();
    format!("[{}]", rows.join("; "))
}

fn cmd_solve(c: &Common) -> Result<u8> {
    let cfg = c.load()?;
    let sol = c.solution(&cfg)?;
    println!("type  quantity  value");
    for (i, g) in sol.gains.iter().enumerate() {
        for (name, m) in [("K", &g.k), ("Pi", &g.pi), ("Gamma", &g.gamma), ("H", &g.h), ("Mtilde", &g.mtilde)] {
            println!("{i:<5} {name:<9} {}", fmt_matrix(m));
        }
        println!("{i:<5} {:<9} {:.6}", "Xi", sol.diagnostics.xi_per_type[i]);
    }
    println!("all   {:<9} {:.6}", "zeta", sol.diagnostics.zeta);
    println!("all   {:<9} {}", "L*", fmt_matrix(&sol.lstar));
    println!(
        "mean-field law: {} iterations, residual {:e}{}",
        sol.report.iterations,
        sol.report.residual,
        if sol.guaranteed { "" } else { " (forced: contraction not guaranteed)" }
    );
    c.write("equilibrium.json", &sol.to_canonical())?;
    Ok(0)
}

fn cmd_simulate(c: &Common, trace: bool) -> Result<u8> {
    let cfg = c.load()?;
    let sol = c.solution(&cfg)?;
    let rows = run_batch(&cfg, &sol, PolicySpec::Equilibrium)?;
    let (metrics, tr) = run_game(&cfg, &sol, cfg.sim.seed, PolicySpec::Equilibrium, trace)?;
    let costs: Vec<f64> = rows.iter().map(|r| r.metrics.avg_cost_per_agent).collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.metrics.eps_tn).collect();
    let (cm, cs) = mean_and_stderr(&costs);
    let (em, es) = mean_and_stderr(&eps);
    println!("runs {}  N {}  T {}  alpha {}", rows.len(), cfg.sim.agents, cfg.sim.horizon, cfg.scheduler.alpha);
    println!("avg_cost {cm:.6e} ± {cs:.2e}");
    println!("eps_TN   {em:.6e} ± {es:.2e}");
    c.write("summary.csv", &summary_csv(&rows))?;
    c.write("timeseries.csv", &timeseries_csv(&metrics))?;
    if let Some(t) = tr {
        c.write("trace.csv", &trace_csv(&t))?;
    }
    Ok(0)
}

fn cmd_sweep(c: &Common, alphas: &[f64]) -> Result<u8> {
    let base = c.load()?;
    let sol = c.solution(&base)?;
    let mut all = Vec::new();
    let mut qs = Vec::new();
    println!("alpha  q1  median  q3  tx_rate");
    for &alpha in alphas {
        let mut cfg = base.clone();
        cfg.scheduler.alpha = alpha;
        cfg.validate()?;
        let rows = run_batch(&cfg, &sol, PolicySpec::Equilibrium)?;
        let costs: Vec<f64> = rows.iter().map(|r| r.metrics.avg_cost_per_agent).collect();
        let tx: Vec<f64> = rows.iter().map(|r| r.metrics.tx_rate).collect();
        let q = quartiles(&costs);
        println!("{alpha}  {:.6e}  {:.6e}  {:.6e}  {:.4}", q.q1, q.median, q.q3, mean_and_stderr(&tx).0);
        qs.push((alpha, rows.len(), q));
        all.extend(rows);
    }
    c.write("summary.csv", &summary_csv(&all))?;
    c.write("quartiles.csv", &quartiles_csv(&qs))?;
    Ok(0)
}

fn cmd_nash(c: &Common) -> Result<u8> {
    let cfg = c.load()?;
    let sol = c.solution(&cfg)?;
    let family = default_deviation_family();
    let rep = nash_gap(&cfg, &sol, &family, cfg.sim.runs, cfg.sim.seed)?;
    println!("N {}  runs {}", rep.agents, rep.runs);
    println!("equilibrium cost {:.6e} ± {:.2e}", rep.eq_cost, rep.eq_cost_stderr);
    let mut csv = String::from("policy,mean_cost,mean_diff,diff_stderr\n");
    for m in &rep.members {
        println!("  {:<26} diff {:+.3e} ± {:.2e}", m.policy.to_string(), m.mean_diff, m.diff_stderr);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            m.policy,
            fmt_f64(m.mean_cost),
            fmt_f64(m.mean_diff),
            fmt_f64(m.diff_stderr)
        ));
    }
    println!("gap {:.6e} ± {:.2e}", rep.gap, rep.stderr);
    println!("note: the family is finite, so the gap is a lower bound on the best-response gain");
    csv.push_str(&format!("gap,{},{},{}\n", fmt_f64(rep.eq_cost), fmt_f64(rep.gap), fmt_f64(rep.stderr)));
    c.write("nash_gap.csv", &csv)?;
    Ok(0)
}

/// Policy pairs compared by the probe.
fn probe_suite() -> Vec<(PolicySpec, PolicySpec)> {
    use PolicySpec::*;
    vec![
        (Equilibrium, Equilibrium),
        (Equilibrium, ZeroControl),
        (Equilibrium, ScaledGain(2.0)),
        (ZeroControl, ScaledGain(2.0)),
        (Equilibrium, EmpiricalMeanTracking),
    ]
}

fn cmd_probe(c: &Common, tamper: bool) -> Result<u8> {
    let cfg = c.load()?;
    let sol = c.solution(&cfg)?;
    let seed = cfg.sim.seed;
    let mut all_pass = true;
    let mut csv = String::from("type,first,second,max_err_diff,gamma_match,pass\n");
    for type_index in 0..cfg.distribution.len() {
        for (a, b) in probe_suite() {
            let rep = dual_effect_probe_with(
                &cfg,
                &sol,
                ProbeArm { policy: a, seed },
                ProbeArm { policy: b, seed },
                ProbeOptions {
                    type_index,
                    tamper_scheduler: tamper,
                },
            )?;
            all_pass &= rep.pass;
            println!(
                "{} type {type_index}: {a} vs {b}: max |err diff| {:e}, gamma {}",
                if rep.pass { "PASS" } else { "FAIL" },
                rep.max_err_diff,
                if rep.gamma_match { "match" } else { "differ" }
            );
            csv.push_str(&format!(
                "{type_index},{a},{b},{},{},{}\n",
                fmt_f64(rep.max_err_diff),
                rep.gamma_match,
                rep.pass
            ));
        }
    }
    c.write("probe.csv", &csv)?;
    Ok(if all_pass { 0 } else { 1 })
}

fn cmd_check(c: &Common) -> Result<u8> {
    let cfg = c.load()?;
    for (i, t) in cfg.distribution.types().iter().enumerate() {
        check_structural_assumptions(t).into_result(i)?;
    }
    let gains = cfg
        .distribution
        .types()
        .iter()
        .map(|t| compute_gains(t, cfg.solver.tol, cfg.solver.max_iter))
        .collect::<Result<Vec<_>>>()?;
    let diag = contraction_diagnostics(&gains, &cfg.distribution);
    if !diag.pass && !c.force {
        return Err(Error::ContractionViolated { xi: diag.max_xi() });
    }
    println!(
        "ok: {} type(s), n={}, m={}, max Xi {:.6}",
        cfg.distribution.len(),
        cfg.state_dim(),
        cfg.input_dim(),
        diag.max_xi()
    );
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    configure_threads()?;
    match cli.command {
        Command::Solve(c) => cmd_solve(&c),
        Command::Simulate { common, trace } => cmd_simulate(&common, trace),
        Command::SweepAlpha { common, alphas } => cmd_sweep(&common, &alphas),
        Command::NashGap(c) => cmd_nash(&c),
        Command::ProbeDualEffect { common, tamper_scheduler } => cmd_probe(&common, tamper_scheduler),
        Command::Check(c) => cmd_check(&c),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
