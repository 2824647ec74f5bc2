use std::fmt::Write as _;
use std::fs;

use anyhow::{Context, Result};
use gctf_core::contraction::reconstruct_observed;
use gctf_core::eval::{make_split, rmse, SplitScope, SplitSpec};
use gctf_core::seed;
use gctf_core::solvers::Solver;
use gctf_core::synth::{cp_model, generate_cp_data, SynthSpec};

use crate::util::{ensure_out_dir, solver_config, solver_manifest, write_manifest};
use crate::BenchArgs;

pub fn run(args: &BenchArgs) -> Result<()> {
    anyhow::ensure!(args.dims >= 2, "--dims too small");
    anyhow::ensure!(
        args.observed_frac > 0.0 && args.observed_frac < 1.0,
        "--observed-frac must be in (0, 1) so held-out cells remain"
    );
    anyhow::ensure!(args.repeats >= 1, "--repeats must be at least 1");
    ensure_out_dir(&args.out)?;

    let dims = vec![args.dims, args.dims, args.dims];
    // sample train and held-out cells together, then split them apart
    let test_frac = args.observed_frac.min(1.0 - args.observed_frac);
    let total_frac = args.observed_frac + test_frac;
    let hide = test_frac / total_frac;

    let mut final_rmses = Vec::new();
    for repeat in 0..args.repeats {
        let repeat_seed = seed::stream(args.solver.seed, &format!("repeat/{repeat}"));
        let (data, _) = generate_cp_data(&SynthSpec {
            dims: dims.clone(),
            rank: args.rank,
            observed_fraction: total_frac,
            noise_std_fraction: args.noise,
            seed: seed::stream(repeat_seed, "data"),
            binarize: None,
        })?;
        let (train, test) = make_split(
            &data,
            &SplitSpec {
                hide_fraction: hide,
                seed: seed::stream(repeat_seed, "mask"),
                scope: SplitScope::Entries,
            },
        )?;
        if args.dump_data {
            fs::write(
                args.out.join(format!("train_{repeat}.coo")),
                gctf_core::io::write_coo(&train),
            )?;
            fs::write(
                args.out.join(format!("test_{repeat}.coo")),
                gctf_core::io::write_coo(&test),
            )?;
        }

        let spec = cp_model(
            &dims,
            args.rank,
            args.solver.prior_shape.unwrap_or(0.5),
            args.solver.prior_mean.unwrap_or(10.0),
        )?;
        let mut config = solver_config(&args.solver);
        config.seed = seed::stream(repeat_seed, "fit");
        let view = {
            let probe = Solver::new(spec.clone(), vec![train.clone()], config.clone())?;
            probe.scoring_view()
        };
        let mut solver = Solver::new(spec.clone(), vec![train], config)?;

        let mut csv = String::from("iteration,elapsed_seconds,heldout_rmse\n");
        let mut elapsed = 0.0;
        let mut last_rmse = f64::NAN;
        for iteration in 1..=args.solver.iters {
            solver.sweep()?;
            elapsed += solver.iter_seconds().last().copied().unwrap_or(0.0);
            let predicted = reconstruct_observed(&spec, solver.factors(), view, 0, &test)?;
            last_rmse = rmse(&predicted, &test)?;
            writeln!(csv, "{iteration},{elapsed:.6},{last_rmse:.6}").unwrap();
            if solver.has_converged() {
                break;
            }
        }
        let path = args.out.join(format!("bench_run{repeat}.csv"));
        fs::write(&path, csv).with_context(|| format!("cannot write '{}'", path.display()))?;
        println!(
            "bench run {repeat}: {} iterations, {elapsed:.2}s, held-out RMSE {last_rmse:.4}",
            solver.iterations()
        );
        final_rmses.push(last_rmse);
    }

    let mut manifest = solver_manifest(&args.solver);
    manifest["command"] = "bench".into();
    manifest["dims"] = args.dims.into();
    manifest["rank"] = args.rank.into();
    manifest["observed_frac"] = args.observed_frac.into();
    manifest["noise"] = args.noise.into();
    manifest["repeats"] = args.repeats.into();
    manifest["final_rmse"] = final_rmses.into();
    manifest["version"] = env!("CARGO_PKG_VERSION").into();
    write_manifest(&args.out, &manifest)?;
    Ok(())
}
