//! Command-line surface. Experiment subcommands are generated from the
//! registry; each takes the same flags.

use std::path::PathBuf;

use clap::{Arg, ArgMatches, Args, Command, FromArgMatches};

use crate::experiments::ExperimentRegistry;

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON configuration file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// interval, circle, sphere, cube2, cube3, disk or ball3.
    #[arg(long)]
    pub domain: Option<String>,
    /// Point family, e.g. `equispaced:n=2k+1`.
    #[arg(long, value_name = "SPEC")]
    pub family: Option<String>,
    /// Degree sweep `a..b` or `a..b:step`, inclusive.
    #[arg(long, value_name = "RANGE")]
    pub k: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
}

pub enum Invocation {
    Run { command: String, args: RunArgs },
    Report { output_dir: PathBuf },
}

pub fn command(registry: &ExperimentRegistry) -> Command {
    let mut cmd = Command::new("bergsample")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Sampling and interpolation experiments for weighted polynomial spaces")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for exp in registry.iter() {
        cmd = cmd.subcommand(RunArgs::augment_args(Command::new(exp.name()).about(exp.about())));
    }
    cmd.subcommand(
        Command::new("report")
            .about("Merge the JSON reports of an output directory into report.json")
            .arg(
                Arg::new("output_dir")
                    .long("output-dir")
                    .value_name("DIR")
                    .value_parser(clap::value_parser!(PathBuf))
                    .required(true),
            ),
    )
}

pub fn invocation(matches: &ArgMatches) -> clap::error::Result<Invocation> {
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    if name == "report" {
        let dir = sub.get_one::<PathBuf>("output_dir").expect("required").clone();
        return Ok(Invocation::Report { output_dir: dir });
    }
    Ok(Invocation::Run {
        command: name.to_string(),
        args: RunArgs::from_arg_matches(sub)?,
    })
}
