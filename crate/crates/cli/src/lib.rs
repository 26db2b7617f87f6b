//! Driver behind the `orthoplap` binary: configuration, run orchestration
//! and report files.
//!
//! Output layout under `out`:
//!
//! ```text
//! <scenario>/<n>/<eps>/field.txt   snapshot of one ladder level
//! <scenario>/<n>/<eps>/solve.json  its solver report
//! <scenario>/<n>/ladder.json
//! <scenario>/reports.json          every check, with the resolved config
//! <scenario>/summary.csv
//! sweep.csv
//! ```

// `!(x <= y)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod pipeline;

use std::process::ExitCode;

use anyhow::Result;

pub use config::RunConfig;

/// All checks passed and the negative control failed.
pub const EXIT_OK: u8 = 0;
/// Config error, unreadable or missing artifacts.
pub const EXIT_CONFIG: u8 = 1;
/// Solver failure or a failed check.
pub const EXIT_FAILED: u8 = 2;

/// Exit code for an error: solver failures map to [`EXIT_FAILED`], the
/// rest to [`EXIT_CONFIG`].
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    let solver_failed = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<orthoplap::Error>(),
            Some(orthoplap::Error::LevelFailed { .. })
        )
    });
    if solver_failed {
        EXIT_FAILED
    } else {
        EXIT_CONFIG
    }
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<u8> {
    let runs = pipeline::solve_all(cfg)?;
    for sr in &runs {
        for run in &sr.runs {
            eprintln!(
                "{} n={}: {} levels, eps down to {:e}, {} Newton steps",
                sr.scenario.name,
                run.grid.n(),
                run.fields.len(),
                run.ladder.eps.last().unwrap(),
                run.ladder.solves.iter().map(|s| s.iterations).sum::<usize>()
            );
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<u8> {
    let runs = if cfg.solve_then_verify {
        pipeline::solve_all(cfg)?
    } else {
        pipeline::load_all(cfg)?
    };
    let mut ok = true;
    for sr in &runs {
        let v = pipeline::verify_scenario(cfg, sr)?;
        pipeline::write_verification(cfg, &v)?;
        for r in &v.reports {
            if !r.pass {
                eprintln!("{}: {} FAILED (lhs {:e}, rhs {:e})", v.scenario, r.name, r.lhs, r.rhs);
            }
        }
        if v.negative_control.pass {
            eprintln!("{}: negative control passed; the min/max check is blind", v.scenario);
        }
        let pass = v.all_pass();
        eprintln!("{}: {}", v.scenario, if pass { "all checks passed" } else { "FAILED" });
        ok &= pass;
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<u8> {
    let rows = pipeline::sweep(cfg)?;
    let path = pipeline::write_sweep(cfg, &rows)?;
    eprintln!("{} rows written to {}", rows.len(), path.display());
    Ok(EXIT_OK)
}

/// Runs `f` on a pool sized by `ORTHOPLAP_THREADS` when set.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = match std::env::var("ORTHOPLAP_THREADS") {
        Ok(v) => Some(
            v.parse::<usize>()
                .map_err(|_| anyhow::anyhow!("ORTHOPLAP_THREADS must be a positive integer, got `{v}`"))?,
        ),
        Err(_) => None,
    };
    #[cfg(feature = "parallel")]
    if let Some(t) = threads {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build()?;
        return Ok(pool.install(f));
    }
    let _ = threads;
    Ok(f())
}

pub fn to_exit(result: Result<u8>) -> ExitCode {
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
