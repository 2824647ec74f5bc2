use std::fmt::Write as _;
use std::fs;

use anyhow::{Context, Result};

use crate::util::{
    ensure_out_dir, load_model, load_tensors, override_priors, solver_config, solver_manifest,
    write_manifest,
};
use crate::FitArgs;

pub fn run(args: &FitArgs) -> Result<()> {
    let spec = load_model(&args.model)?;
    let spec = override_priors(&spec, args.solver.prior_shape, args.solver.prior_mean)?;
    let observations = load_tensors(&args.data, &spec)?;
    let config = solver_config(&args.solver);

    let result = gctf_core::fit(&spec, &observations, &config)?;

    ensure_out_dir(&args.out)?;
    for factor in &result.factors {
        let path = args.out.join(format!("factor_{}.txt", factor.name()));
        fs::write(&path, gctf_core::io::write_factor(factor))
            .with_context(|| format!("cannot write '{}'", path.display()))?;
    }

    let mut trace = String::from("iteration,objective,seconds\n");
    for (i, (obj, secs)) in result
        .objective_trace
        .iter()
        .zip(&result.iter_seconds)
        .enumerate()
    {
        writeln!(trace, "{},{obj},{secs}", i + 1).unwrap();
    }
    fs::write(args.out.join("trace.csv"), trace).context("cannot write trace.csv")?;

    let mut manifest = solver_manifest(&args.solver);
    manifest["command"] = "fit".into();
    manifest["model"] = args.model.display().to_string().into();
    manifest["data"] = args
        .data
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .into();
    manifest["version"] = env!("CARGO_PKG_VERSION").into();
    write_manifest(&args.out, &manifest)?;

    println!(
        "fit: {} iterations, {:?}, final objective {:.6e}",
        result.iterations_run,
        result.termination,
        result.objective_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}
