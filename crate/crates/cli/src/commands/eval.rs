use std::fmt::Write as _;
use std::fs;

use anyhow::{Context, Result};
use gctf_core::eval::{link_prediction_eval, make_split, SplitScope, SplitSpec};
use gctf_core::seed;

use crate::util::{
    ensure_out_dir, load_model, load_tensors, mean_and_std, override_priors, solver_config,
    solver_manifest, write_manifest,
};
use crate::{EvalArgs, ScopeArg};

pub fn run(args: &EvalArgs) -> Result<()> {
    let spec = load_model(&args.model)?;
    let spec = override_priors(&spec, args.solver.prior_shape, args.solver.prior_mean)?;
    let observations = load_tensors(&args.data, &spec)?;
    anyhow::ensure!(
        args.target < spec.n_observations(),
        "--target {} but the model has {} observations",
        args.target,
        spec.n_observations()
    );
    let scope = match args.scope {
        ScopeArg::Entries => SplitScope::Entries,
        ScopeArg::Slices => {
            let index = args.slice_index.clone().context(
                "--scope slices needs --slice-index <name> to pick the fiber axis",
            )?;
            SplitScope::Slices(index)
        }
    };
    anyhow::ensure!(args.repeats >= 1, "--repeats must be at least 1");

    let algo_name = solver_config(&args.solver).algorithm.name().to_string();
    let model_name = args
        .model
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());

    let mut csv = String::from(
        "algorithm,model,hide_fraction,seed,auc,rmse,iterations,wall_seconds\n",
    );
    let mut aucs = Vec::new();
    let mut rmses = Vec::new();
    let mut iters = Vec::new();
    let mut walls = Vec::new();
    for repeat in 0..args.repeats {
        let repeat_seed = seed::stream(args.solver.seed, &format!("repeat/{repeat}"));
        let (train, test) = make_split(
            &observations[args.target],
            &SplitSpec {
                hide_fraction: args.hide,
                seed: seed::stream(repeat_seed, "mask"),
                scope: scope.clone(),
            },
        )?;
        let mut train_set = observations.clone();
        train_set[args.target] = train;
        let mut config = solver_config(&args.solver);
        config.seed = repeat_seed;
        let report = link_prediction_eval(&spec, &config, &train_set, args.target, &test)?;
        writeln!(
            csv,
            "{algo_name},{model_name},{},{repeat_seed},{:.6},{:.6},{},{:.4}",
            args.hide, report.auc, report.rmse, report.iterations, report.wall_seconds
        )
        .unwrap();
        aucs.push(report.auc);
        rmses.push(report.rmse);
        iters.push(report.iterations as f64);
        walls.push(report.wall_seconds);
    }
    let (auc_mean, auc_std) = mean_and_std(&aucs);
    let (rmse_mean, rmse_std) = mean_and_std(&rmses);
    let (iters_mean, _) = mean_and_std(&iters);
    let (wall_mean, _) = mean_and_std(&walls);
    writeln!(
        csv,
        "{algo_name},{model_name},{},summary,{auc_mean:.3}\u{b1}{auc_std:.3},{rmse_mean:.3}\u{b1}{rmse_std:.3},{iters_mean:.1},{wall_mean:.4}",
        args.hide
    )
    .unwrap();

    ensure_out_dir(&args.out)?;
    fs::write(args.out.join("eval.csv"), csv).context("cannot write eval.csv")?;

    let mut manifest = solver_manifest(&args.solver);
    manifest["command"] = "eval".into();
    manifest["model"] = args.model.display().to_string().into();
    manifest["data"] = args
        .data
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .into();
    manifest["target"] = args.target.into();
    manifest["hide"] = args.hide.into();
    manifest["scope"] = match &scope {
        SplitScope::Entries => "entries".into(),
        SplitScope::Slices(index) => format!("slices:{index}").into(),
    };
    manifest["repeats"] = args.repeats.into();
    manifest["version"] = env!("CARGO_PKG_VERSION").into();
    write_manifest(&args.out, &manifest)?;

    println!(
        "eval: AUC {auc_mean:.3} \u{b1} {auc_std:.3}, RMSE {rmse_mean:.3} \u{b1} {rmse_std:.3} over {} repeats",
        args.repeats
    );
    Ok(())
}
