//! One experiment: instance, PDHG reference, configured solver, outputs.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use varsmooth::pgm::save_pgm;
use varsmooth::problems::{make_instance, Instance};
use varsmooth::schedules::ScheduleKind;
use varsmooth::solvers::{
    pdhg_default_steps, run_pdhg, run_spdhg, run_svast, run_vast, spdhg_default_steps, GradEstimator, SolverError,
    SolverOutcome, TraceOptions,
};
use varsmooth::spaces::{BlockVector, RngStream};

use crate::config::{ProblemKind, RunConfig, SolverKind};
use crate::trace_csv::CsvTrace;

/// Step-size parameter for the primal-dual methods.
pub const PD_GAMMA: f64 = 0.99;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] varsmooth::Error),
    #[error("reference run diverged at iteration {0}")]
    Reference(usize),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct Reference {
    pub x: BlockVector<f64>,
    pub f_star: f64,
}

/// PDHG from `x0` for `iters` steps; `F*` is the least traced objective.
pub fn reference_solution(inst: &Instance<f64>, x0: &BlockVector<f64>, iters: usize) -> Result<Reference, RunError> {
    let p = &inst.problem;
    let (tau, sigma) = pdhg_default_steps(p, PD_GAMMA);
    match run_pdhg(p, tau, &sigma, x0, iters, &TraceOptions::every(1)) {
        Ok(res) => Ok(Reference {
            f_star: res.trace.min_objective().expect("trace has the initial row"),
            x: res.x_final,
        }),
        Err(SolverError::Core(e)) => Err(e.into()),
        Err(SolverError::Diverged { k, .. }) => Err(RunError::Reference(k)),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub csv: CsvTrace,
    /// Final iterate; absent after divergence.
    pub image: Option<BlockVector<f64>>,
    pub diverged_at: Option<usize>,
    pub reference: Reference,
}

pub fn execute(cfg: &RunConfig, timing: bool) -> Result<RunOutcome, RunError> {
    let inst = make_instance::<f64>(&cfg.problem_spec())?;
    let p = &inst.problem;
    let x0 = &inst.data;
    let reference = reference_solution(&inst, x0, cfg.ref_iters)?;
    let opts = TraceOptions::every(cfg.trace_every).with_reference(reference.x.clone());

    let mut meta: Vec<(&str, String)> = vec![
        ("problem", cfg.problem.to_string()),
        ("solver", cfg.solver.to_string()),
        ("m", cfg.m.to_string()),
        ("n", cfg.n.to_string()),
        ("alpha", cfg.alpha().to_string()),
        ("noise_sigma", cfg.noise_sigma.to_string()),
    ];
    if cfg.problem == ProblemKind::Deblur {
        meta.push(("blur_size", cfg.blur_size.to_string()));
        meta.push(("blur_sigma", cfg.blur_sigma.to_string()));
    }
    meta.extend([
        ("iters", cfg.iters.to_string()),
        ("trace_every", cfg.trace_every.to_string()),
        ("seed", cfg.seed.to_string()),
        ("ref_iters", cfg.ref_iters.to_string()),
        ("norm_k2", p.norm_k2.to_string()),
    ]);
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");

    let b = cfg.b_param;
    let outcome: SolverOutcome<f64> = match cfg.solver {
        SolverKind::Vast => {
            meta.push(("b_param", b.to_string()));
            run_vast(p, &ScheduleKind::vast(b, p.norm_k2)?, x0, cfg.iters, &opts)
        }
        SolverKind::VastConstMu => {
            meta.push(("b_param", b.to_string()));
            run_vast(p, &ScheduleKind::const_mu(b, p.norm_k2)?, x0, cfg.iters, &opts)
        }
        SolverKind::Svast => {
            let probs = cfg.probs();
            meta.push(("b_param", b.to_string()));
            meta.push(("probs", join(&probs)));
            let est = GradEstimator::bernoulli(probs, cfg.seed)?;
            run_svast(p, &ScheduleKind::svast(b, p.norm_k2)?, est, x0, cfg.iters, &opts)
        }
        SolverKind::Pdhg => {
            let (tau, sigma) = pdhg_default_steps(p, PD_GAMMA);
            meta.push(("tau", tau.to_string()));
            meta.push(("sigma", join(&sigma)));
            run_pdhg(p, tau, &sigma, x0, cfg.iters, &opts)
        }
        SolverKind::Spdhg => {
            let probs = cfg.probs();
            let (tau, sigma) = spdhg_default_steps(p, PD_GAMMA, false);
            meta.push(("tau", tau.to_string()));
            meta.push(("sigma", join(&sigma)));
            meta.push(("probs", join(&probs)));
            run_spdhg(p, tau, &sigma, &probs, RngStream::new(cfg.seed), x0, cfg.iters, &opts)
        }
    };

    assemble(outcome, meta, reference, timing)
}

fn assemble(
    outcome: SolverOutcome<f64>,
    meta: Vec<(&str, String)>,
    reference: Reference,
    timing: bool,
) -> Result<RunOutcome, RunError> {
    let (trace, image, diverged_at) = match outcome {
        Ok(res) => (res.trace, Some(res.x_final), None),
        Err(SolverError::Diverged { k, trace }) => (trace, None, Some(k)),
        Err(SolverError::Core(e)) => return Err(e.into()),
    };
    let mut csv = CsvTrace::from_trace(&trace, Some(reference.f_star), timing);
    for (k, v) in meta {
        csv.meta(k, v);
    }
    csv.meta("f_star", reference.f_star);
    csv.meta("f0", trace.rows[0].objective);
    if let Some(k) = diverged_at {
        csv.meta("diverged_at", k);
    }
    Ok(RunOutcome {
        csv,
        image,
        diverged_at,
        reference,
    })
}

/// Gnuplot script drawing the relative objective on log–log axes.
pub fn gnuplot_script(csv_name: &str, title: &str) -> String {
    format!(
        "set datafile separator ','\nset logscale xy\nset xlabel 'iteration k'\n\
         set ylabel 'relative objective'\nset title '{title}'\n\
         plot '{csv_name}' using 1:5 skip 1 with lines title '{title}'\n"
    )
}

/// `trace.csv` with seed 3 → `trace-seed3.csv`.
pub fn with_seed_suffix(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}-seed{seed}"),
    };
    path.with_file_name(name)
}

/// Writes the CSV, its gnuplot script next to it and, if present, the final image.
pub fn write_outputs(out: &RunOutcome, csv_path: &Path, image_path: &Path) -> Result<(), RunError> {
    fs::write(csv_path, out.csv.to_bytes())?;
    let csv_name = csv_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let title = format!(
        "{} {}",
        out.csv.get_meta("solver").unwrap_or("?"),
        out.csv.get_meta("problem").unwrap_or("?")
    );
    fs::write(csv_path.with_extension("gp"), gnuplot_script(&csv_name, &title))?;
    if let Some(img) = &out.image {
        save_pgm(img, image_path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use varsmooth::solvers::{Trace, TraceRow};

    fn small(solver: &str) -> RunConfig {
        RunConfig::parse(&format!("m=12\nn=12\niters=60\ntrace_every=10\nref_iters=400\nsolver={solver}")).unwrap()
    }

    #[test]
    fn every_solver_runs() {
        for solver in ["vast", "vast-constmu", "svast", "pdhg", "spdhg"] {
            let out = execute(&small(solver), false).unwrap();
            assert!(out.diverged_at.is_none());
            let rows = &out.csv.rows;
            assert_eq!(rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![0, 10, 20, 30, 40, 50, 60]);
            assert_eq!(rows[0].rel_objective, Some(1.0), "{solver}");
            assert!(rows.iter().all(|r| r.dist_to_ref.is_some()));
            assert_eq!(out.csv.get_meta("solver"), Some(solver));
        }
    }

    #[test]
    fn deblur_metadata() {
        let cfg = RunConfig::parse("problem=deblur\nm=10\nn=10\niters=20\nref_iters=50\nsolver=spdhg\nblur_size=3").unwrap();
        let out = execute(&cfg, false).unwrap();
        assert_eq!(out.csv.get_meta("blur_size"), Some("3"));
        assert_eq!(out.csv.get_meta("norm_k2"), Some("9"));
        assert!(out.csv.get_meta("probs").unwrap().starts_with("0.333"));
    }

    #[test]
    fn divergence_keeps_partial_trace() {
        let row = |k, objective| TraceRow {
            k,
            wall_ms: 0.0,
            objective,
            smoothed: None,
            mu: None,
            gamma: 1.0,
            t: None,
            dist_to_ref: None,
            grad_evals: 0,
            dual_radius: None,
        };
        let trace = Trace {
            rows: vec![row(0, 2.0), row(5, f64::INFINITY)],
        };
        let reference = Reference {
            x: BlockVector::from_slice(&[0.0]).unwrap(),
            f_star: 1.0,
        };
        let out = assemble(Err(SolverError::Diverged { k: 5, trace }), vec![], reference, false).unwrap();
        assert_eq!(out.diverged_at, Some(5));
        assert!(out.image.is_none());
        assert_eq!(out.csv.rows.len(), 2);
        assert_eq!(out.csv.get_meta("diverged_at"), Some("5"));
        let text = String::from_utf8(out.csv.to_bytes()).unwrap();
        assert!(text.ends_with("5,0,inf,,inf,,,1,\n"), "{text}");
    }

    #[test]
    fn suffixes() {
        assert_eq!(with_seed_suffix(Path::new("out/t.csv"), 4), PathBuf::from("out/t-seed4.csv"));
        assert_eq!(with_seed_suffix(Path::new("img"), 0), PathBuf::from("img-seed0"));
    }

    #[test]
    fn outputs_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let out = execute(&small("vast"), false).unwrap();
        let (csv, img) = (dir.path().join("t.csv"), dir.path().join("x.pgm"));
        write_outputs(&out, &csv, &img).unwrap();
        let script = fs::read_to_string(dir.path().join("t.gp")).unwrap();
        assert!(script.contains("'t.csv'"));
        assert_eq!(varsmooth::pgm::load_pgm::<f64>(&img).unwrap().len(), 144);
        assert_eq!(CsvTrace::read(fs::File::open(&csv).unwrap()).unwrap(), out.csv);
    }
}
