mod args;
mod config;
mod experiments;
mod file_family;
mod output;
mod report;

use std::process::ExitCode;

use bergsample::Error;

use crate::args::Invocation;
use crate::experiments::ExperimentRegistry;
use crate::output::ArtifactWriter;

/// 2: configuration, 3: numeric or certification, 4: failed precondition.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Contract(_) | Error::Unsupported { .. } | Error::Io(_) | Error::Json(_) => 2,
        Error::Resolution { .. }
        | Error::Certification { .. }
        | Error::Numeric(_)
        | Error::Degenerate { .. }
        | Error::Consistency(_) => 3,
        Error::Precondition(_) => 4,
    }
}

fn run(registry: &ExperimentRegistry, inv: Invocation) -> bergsample::Result<()> {
    match inv {
        Invocation::Report { output_dir } => {
            let path = report::merge(&output_dir)?;
            println!("{}", path.display());
        }
        Invocation::Run { command, args } => {
            let exp = registry
                .get(&command)
                .ok_or_else(|| Error::Config(format!("unknown experiment `{command}`")))?;
            let cfg = config::resolve(&command, exp.knobs(), &args)?;
            let mut out = ArtifactWriter::new(&cfg.output_dir)?;
            exp.run(&cfg, &mut out)?;
            let manifest = out.finish(&cfg)?;
            println!("{}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let registry = ExperimentRegistry::default();
    let matches = match args::command(&registry).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = args::invocation(&matches)
        .map_err(|e| Error::Config(e.to_string()))
        .and_then(|inv| run(&registry, inv));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
