use std::process::ExitCode;

use clap::Parser;
use cylfmm::cli::{self, Args, RunConfig};
use cylfmm::exec::Execution;
use cylfmm::FmmError;

fn fail(e: &FmmError) -> ExitCode {
    eprintln!("cylfmm: {e}");
    ExitCode::from(cli::exit_code(e) as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let execution = match Execution::from_env() {
        Ok(x) => x,
        Err(e) => return fail(&e),
    };
    let config = RunConfig::from_args(args, execution);
    let report = match cli::run(&config) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if let Err(e) = cli::emit(&report, config.output_format, config.output_path.as_deref()) {
        return fail(&e);
    }
    eprintln!(
        "cylfmm: {} sources, {} field points, fmm {:.3} s, {:.3e} pairs/s",
        report.config.n_sources, report.config.n_field, report.timings.fmm_total, report.throughput
    );
    if let Some(errors) = &report.errors {
        let worst = errors.iter().copied().fold(0.0, f64::max);
        eprintln!("cylfmm: worst modal error {worst:.3e}");
    }
    if !report.errors_finite() {
        eprintln!("cylfmm: non-finite modal error");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
