//! Command-line front end: single scenarios, parameter sweeps, the
//! coverage-gap experiment, and the selector/game validation tables.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use poser_harness::egdop_cmp::egdop_comparison;
use poser_harness::game_val::game_validation;
use poser_harness::report::{write_csv, write_gnuplot, write_manifest};
use poser_harness::runner::{gap_experiment, lifetime_experiment, run_cell, sweep};
use poser_harness::spec::{HarnessConfig, SchedulerKind};

#[derive(Parser)]
#[command(name = "poser", version, about = "Distributed sensor-network tracking simulator")]
struct Cli {
    /// JSON configuration (world + run spec); defaults ship in default.json.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured Monte Carlo run count.
    #[arg(long, global = true)]
    runs: Option<u32>,

    /// Override the configured seed base.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for CSV tables and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for Monte Carlo runs (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    parallel: usize,

    /// Override the configured scheduler.
    #[arg(long, global = true, value_enum)]
    scheduler: Option<SchedulerKind>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario cell and write its metric tables.
    Run,
    /// Density x sleep-probability x scheduler x fixed-range sweeps.
    Sweep,
    /// Coverage-gap experiment: dead zone at the target's path.
    Gap,
    /// Game validation table (coverage mass, efficiency, timings).
    ValidateGame,
    /// Selector comparison table over initial-energy bounds.
    CompareEgdop,
    /// Validate the configuration and print the derived quantities.
    CheckConfig,
}

fn load_config(cli: &Cli) -> Result<HarnessConfig, Box<dyn std::error::Error>> {
    let mut cfg = match &cli.config {
        Some(path) => HarnessConfig::load(path)?,
        None => {
            let text = include_str!("../../../default.json");
            serde_json::from_str::<HarnessConfig>(text)?.validate()?
        }
    };
    if let Some(runs) = cli.runs {
        cfg.run.runs = runs;
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed_base = seed;
        cfg.world.master_seed = seed;
    }
    if let Some(s) = cli.scheduler {
        cfg.run.scheduler = s;
    }
    Ok(cfg)
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if cli.parallel > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.parallel)
            .build_global()
            .expect("thread pool configured once");
    }
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}

fn run(cli: &Cli) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = load_config(cli)?;
    let world = {
        let mut w = cfg.world.clone();
        w.master_seed = cfg.run.seed_base;
        w
    };
    std::fs::create_dir_all(&cli.out)?;

    match cli.command {
        Command::CheckConfig => {
            println!("configuration valid");
            println!("  nodes: {}", world.resolved_node_count());
            println!(
                "  hps ranges: {:?} (delta_r = {} m)",
                world.hps_ranges_m, world.delta_r_m
            );
            println!(
                "  slope_b1 = {} > bound {:.6}",
                world.slope_b1,
                world.slope_lower_bound()
            );
            println!("  trust tolerance: {:.6} m^2", world.trust_tolerance());
            println!("  config hash: {:016x}", cfg.content_hash());
            return Ok(());
        }
        Command::Run => {
            let fixed = cfg.run.fixed_ranges_m[0];
            let scheduler = cfg.run.scheduler.to_scheduler(fixed);
            let (cell, _) = run_cell(&world, scheduler, cfg.run.runs, cfg.run.max_steps, None, None);
            write_csv(&cli.out.join("pm.csv"), &[cell.clone()])?;
            write_csv(&cli.out.join("rmse.csv"), &[cell.clone()])?;
            write_csv(&cli.out.join("hps_count.csv"), &[cell])?;
            write_manifest(&cli.out, &cfg, "run")?;
            write_gnuplot(&cli.out, &["pm.csv"])?;
            println!("wrote {}", cli.out.display());
        }
        Command::Sweep => {
            let schedulers = [
                SchedulerKind::Poser,
                SchedulerKind::Ans,
                SchedulerKind::LpsHps,
                SchedulerKind::Random,
            ];
            let cells = sweep(
                &world,
                &schedulers,
                &cfg.run.densities,
                &cfg.run.p_sleeps,
                &cfg.run.fixed_ranges_m,
                cfg.run.runs,
                cfg.run.max_steps,
            );
            write_csv(&cli.out.join("pm.csv"), &cells)?;
            write_csv(&cli.out.join("rmse.csv"), &cells)?;
            write_csv(&cli.out.join("hps_count.csv"), &cells)?;
            write_csv(&cli.out.join("energy.csv"), &cells)?;
            if let Some(tube) = cfg.run.tube {
                let pairs: Vec<(SchedulerKind, f64)> = vec![
                    (SchedulerKind::Poser, 0.0),
                    (SchedulerKind::LpsHps, world.r1()),
                    (SchedulerKind::Random, world.r1()),
                ];
                let rows = lifetime_experiment(
                    &world,
                    tube,
                    &pairs,
                    &cfg.run.lambdas,
                    cfg.run.runs.min(20),
                    cfg.run.max_steps,
                );
                write_csv(&cli.out.join("lifetime.csv"), &rows)?;
            }
            write_manifest(&cli.out, &cfg, "sweep")?;
            write_gnuplot(&cli.out, &["pm.csv", "lifetime.csv"])?;
            println!("wrote {}", cli.out.display());
        }
        Command::Gap => {
            let gap = cfg.run.gap.ok_or("config has no gap spec")?;
            let schedulers: Vec<(SchedulerKind, f64)> = vec![
                (SchedulerKind::Poser, 0.0),
                (SchedulerKind::Ans, world.r1()),
                (SchedulerKind::LpsHps, world.r1()),
                (SchedulerKind::Random, world.r1()),
            ];
            let (summaries, points) =
                gap_experiment(&world, &schedulers, gap, cfg.run.runs, cfg.run.max_steps);
            write_csv(&cli.out.join("gap_summary.csv"), &summaries)?;
            write_csv(&cli.out.join("pdet_timeseries.csv"), &points)?;
            write_manifest(&cli.out, &cfg, "gap")?;
            write_gnuplot(&cli.out, &["pdet_timeseries.csv"])?;
            for s in &summaries {
                println!(
                    "{:>7} R_gap={:>3}: P_det in gap = {:.3}, zero window = {} steps",
                    s.scheduler, s.gap_radius_m, s.pdet_in_gap, s.zero_window_steps
                );
            }
        }
        Command::ValidateGame => {
            let counts = [3u32, 4, 5];
            let rows = game_validation(&world, &counts, cfg.run.runs.min(200), cfg.run.seed_base);
            write_csv(&cli.out.join("game_table.csv"), &rows)?;
            write_manifest(&cli.out, &cfg, "validate-game")?;
            for r in &rows {
                println!(
                    "n'={}: chi*={:.4} phi_eff={:.4} t_game={:.4}s t_opt={:.4}s",
                    r.n_players, r.chi_star, r.phi_eff, r.t_game_s, r.t_opt_s
                );
            }
        }
        Command::CompareEgdop => {
            let bounds = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
            let rows = egdop_comparison(&world, &bounds, cfg.run.runs, 12, cfg.run.seed_base);
            write_csv(&cli.out.join("egdop_table.csv"), &rows)?;
            write_manifest(&cli.out, &cfg, "compare-egdop")?;
            for r in &rows {
                println!(
                    "[{:.1},1]E0: savings={:.3}% eff=({:.3},{:.3}) KL=({:.4},{:.4})",
                    r.bound_low, r.e_savings_pct, r.e_eff_egdop, r.e_eff_gdop, r.dkl_gdop_egdop, r.dkl_gdop_me
                );
            }
        }
    }
    Ok(())
}
