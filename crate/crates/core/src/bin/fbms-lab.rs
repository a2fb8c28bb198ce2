//! Command-line driver: generate instances, run the certificate pipeline,
//! re-render reports, and run refinement studies.

use fbms_lab::config::RunConfig;
use fbms_lab::driver::{self, DriverError};
use fbms_lab::mesh::write_off;
use std::path::PathBuf;
use std::process::ExitCode;

const HELP: &str = "\
fbms-lab: free boundary minimal surfaces in strictly convex bodies

USAGE:
    fbms-lab <COMMAND> [OPTIONS]

COMMANDS:
    generate       build an initial mesh and body, write initial.off
    run            full pipeline: relax, spectra, disk map, certificates
    report         summarize certificates in an output directory
    refine-study   run the pipeline across refinement levels

OPTIONS (every flag has a config-file equivalent; flags win):
    --config <file>        flat key=value config with [body]/[surface]/[solver]/[run] sections
    --body <spec>          ball:R | ellipsoid:A,B,C | perturbed-ball:EPS     (default ball:1)
    --surface <spec>       equatorial-disk | tilted-disk:DEG | spherical-cap:H | mesh:FILE
    --resolution <n>       target vertex count (>= 50, default 10000)
    --perturbation <x>     interior jiggle of generated meshes (default 1e-4)
    --check <list>         comma list: theorem1,theorem2,corollary1,corollary2,corollary3
    --out <dir>            output directory (default out)
    --seed <n>             run seed (default 42; FBMS_SEED overrides the config file)
    --grad-tol <x>         solver gradient tolerance
    --max-iterations <n>   solver iteration cap
    --volume-target <x>    enclosed-volume target for spherical caps
    --refine <levels>      refinement levels for refine-study

EXIT STATUS:
    0 all verdicts PASS     1 some verdict FAIL
    2 usage or config error 3 hypothesis or pipeline failure
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" || args[0] == "help" {
        print!("{HELP}");
        return ExitCode::from(if args.is_empty() { 2 } else { 0 });
    }
    let command = args[0].clone();
    let rest = &args[1..];

    match command.as_str() {
        "generate" | "run" | "refine-study" => {
            let config = match build_config(rest) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match command.as_str() {
                "generate" => match driver::generate(&config) {
                    Ok((mesh, _)) => {
                        if let Err(e) = std::fs::create_dir_all(&config.out_dir) {
                            eprintln!("error: cannot create {}: {e}", config.out_dir.display());
                            return ExitCode::from(3);
                        }
                        let path = config.out_dir.join("initial.off");
                        if let Err(e) = write_off(&mesh, &path) {
                            eprintln!("error: {e}");
                            return ExitCode::from(3);
                        }
                        println!(
                            "wrote {} ({} vertices, g = {}, r = {})",
                            path.display(),
                            mesh.vertex_count(),
                            mesh.genus(),
                            mesh.boundary_component_count()
                        );
                        ExitCode::SUCCESS
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        ExitCode::from(3)
                    }
                },
                "run" => {
                    if config.refine_levels > 0 {
                        return run_refine(&config);
                    }
                    match driver::run(&config) {
                        Ok(artifacts) => {
                            print!("{}", artifacts.report);
                            if artifacts.all_passed {
                                ExitCode::SUCCESS
                            } else {
                                ExitCode::from(1)
                            }
                        }
                        Err(e @ DriverError::HypothesisFails(_)) => {
                            eprintln!("aborted: {e}");
                            ExitCode::from(3)
                        }
                        Err(e) => {
                            eprintln!("error: {e}");
                            ExitCode::from(3)
                        }
                    }
                }
                _ => run_refine(&config),
            }
        }
        "report" => {
            let mut dir = PathBuf::from("out");
            let mut it = rest.iter();
            while let Some(arg) = it.next() {
                match arg.as_str() {
                    "--dir" | "--out" => {
                        if let Some(v) = it.next() {
                            dir = PathBuf::from(v);
                        }
                    }
                    other => {
                        if !other.starts_with("--") {
                            dir = PathBuf::from(other);
                        }
                    }
                }
            }
            match driver::report(&dir) {
                Ok((table, all)) => {
                    print!("{table}");
                    if all {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        other => {
            eprintln!("error: unknown command {other:?}\n\n{HELP}");
            ExitCode::from(2)
        }
    }
}

fn run_refine(config: &RunConfig) -> ExitCode {
    match driver::refine_study(config) {
        Ok(table) => {
            print!("{table}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn build_config(args: &[String]) -> Result<RunConfig, String> {
    let mut config = RunConfig::default();
    // first pass: config file
    let mut remaining: Vec<String> = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        if arg == "--config" {
            let path = it
                .next()
                .ok_or_else(|| "--config needs a path".to_string())?;
            config
                .load_file(&PathBuf::from(path))
                .map_err(|e| e.to_string())?;
        } else if let Some(path) = arg.strip_prefix("--config=") {
            config
                .load_file(&PathBuf::from(path))
                .map_err(|e| e.to_string())?;
        } else {
            remaining.push(arg.clone());
        }
    }
    config.apply_env();
    config.apply_flags(&remaining).map_err(|e| e.to_string())?;
    Ok(config)
}
