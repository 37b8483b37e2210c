//! `run` and `calibrate`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use racetrack_pim::cost::calibration_report;
use racetrack_pim::hierarchy::Engine;
use racetrack_pim::workloads::{
    bitmap_query, run_cnn_forward, run_kernel, BitmapDataset, BitmapQuery, CnnSpec, KernelKind, KernelSpec, RunReport,
};

use crate::config::Config;
use crate::{CliError, RunArgs};

pub const WORKLOADS: [&str; 7] = ["bitmap", "madd", "gemm", "conv", "maxpool", "fc", "cnn"];

fn load_dataset(path: &Path) -> Result<BitmapDataset, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("dataset {}: {e}", path.display())))?;
    let parsed = if bytes.starts_with(racetrack_pim::workloads::dataset::BINARY_MAGIC) {
        BitmapDataset::from_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| CliError::Usage("dataset is neither CSV nor binary".into()))?;
        BitmapDataset::from_csv(&text)
    };
    parsed.map_err(|e| CliError::Usage(format!("dataset {}: {e}", path.display())))
}

fn bitmap(engine: &mut Engine, cfg: &Config, args: &RunArgs) -> Result<RunReport, CliError> {
    let data = match &args.dataset {
        Some(p) => load_dataset(p)?,
        None => BitmapDataset::random(args.records, args.criteria, args.density, cfg.seed),
    };
    let criteria = match &args.columns {
        Some(c) => c.clone(),
        None => data.names().iter().take(args.criteria).cloned().collect(),
    };
    if criteria.len() < 2 {
        return Err(CliError::Usage("a query needs at least two criteria".into()));
    }
    let query = BitmapQuery { criteria, seed: cfg.seed, inject_fault: args.inject_fault };
    Ok(bitmap_query(engine, &data, &query)?.1)
}

fn kernel_spec(kind: KernelKind, cfg: &Config, args: &RunArgs) -> KernelSpec {
    let d = KernelSpec::new(kind);
    KernelSpec {
        kind,
        rows: args.rows.unwrap_or(d.rows),
        cols: args.cols.unwrap_or(d.cols),
        inner: args.inner.unwrap_or(d.inner),
        w: args.w.unwrap_or(d.w),
        alpha: args.alpha.unwrap_or(d.alpha),
        beta: args.beta.unwrap_or(d.beta),
        kernel_size: args.kernel_size.unwrap_or(d.kernel_size),
        seed: cfg.seed,
        inject_fault: args.inject_fault,
    }
}

fn write_outputs(engine: &Engine, report: &mut RunReport, dir: &Path, trace: bool) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    if trace {
        fs::write(dir.join("trace.txt"), engine.trace_text())?;
        fs::write(dir.join("trace.json"), engine.trace_json()?)?;
        report.trace_path = Some(dir.join("trace.json").display().to_string());
    }
    let json = serde_json::to_string_pretty(report).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(dir.join("report.json"), json + "\n")?;
    fs::write(dir.join("report.csv"), report.to_csv())?;
    Ok(())
}

/// Runs one workload on a fresh engine and writes its files into `dir`.
pub fn run_one(cfg: &Config, name: &str, args: &RunArgs, dir: &Path) -> Result<RunReport, CliError> {
    let mut engine = Engine::new(cfg.geometry.clone(), cfg.cost_table()?)?;
    engine.set_tracing(cfg.trace);
    let mut report = match name {
        "bitmap" => bitmap(&mut engine, cfg, args)?,
        "cnn" => {
            let mut spec = CnnSpec::random(args.input_size, cfg.seed);
            spec.inject_fault = args.inject_fault;
            let input = CnnSpec::random_input(args.input_size, cfg.seed);
            run_cnn_forward(&mut engine, &spec, &input)?.1
        }
        other => {
            let kind: KernelKind = other.parse().map_err(|_| {
                CliError::Usage(format!("unknown workload `{other}` (expected one of {})", WORKLOADS.join(", ")))
            })?;
            run_kernel(&mut engine, &kernel_spec(kind, cfg, args))?
        }
    };
    write_outputs(&engine, &mut report, dir, cfg.trace)?;
    Ok(report)
}

/// Runs every listed workload, `cfg.jobs` at a time on independent
/// engines. With more than one workload each gets its own subdirectory
/// and a `summary.csv` lists them all.
pub fn run(cfg: &Config, args: &RunArgs) -> Result<(), CliError> {
    for w in &args.workloads {
        if !WORKLOADS.contains(&w.as_str()) {
            return Err(CliError::Usage(format!("unknown workload `{w}` (expected one of {})", WORKLOADS.join(", "))));
        }
    }
    let single = args.workloads.len() == 1;
    let dir_for = |i: usize, name: &str| -> PathBuf {
        if single {
            cfg.out.clone()
        } else {
            cfg.out.join(format!("{i:02}-{name}"))
        }
    };
    let results: Mutex<Vec<Option<Result<RunReport, CliError>>>> =
        Mutex::new((0..args.workloads.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..cfg.jobs.min(args.workloads.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(name) = args.workloads.get(i) else { break };
                let r = run_one(cfg, name, args, &dir_for(i, name));
                results.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("threads joined");
    let mut summary = String::from("workload,cycles,energy_pj,oracle_match,digest\n");
    let mut mismatched = Vec::new();
    for (name, r) in args.workloads.iter().zip(results) {
        let report = r.expect("every workload ran")?;
        println!(
            "{name}: oracle {} cycles {} energy {:.4} pJ",
            if report.oracle_match { "match" } else { "MISMATCH" },
            report.cycles,
            report.energy_pj
        );
        summary.push_str(&format!(
            "{name},{},{},{},{}\n",
            report.cycles, report.energy_pj, report.oracle_match, report.digest
        ));
        if !report.oracle_match {
            mismatched.push(name.clone());
        }
    }
    if !single {
        fs::create_dir_all(&cfg.out)?;
        fs::write(cfg.out.join("summary.csv"), summary)?;
    }
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(CliError::Mismatch(format!("result differs from the reference for {}", mismatched.join(", "))))
    }
}

pub fn calibrate(cfg: &Config) -> Result<(), CliError> {
    let table = cfg.cost_table()?;
    let report = calibration_report(&table)?;
    print!("{report}");
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("calibration.txt"), report.to_string())?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(cfg.out.join("calibration.json"), json + "\n")?;
    if report.pass() {
        Ok(())
    } else {
        Err(CliError::Mismatch("cost table does not reproduce the reference totals".into()))
    }
}
