mod commands;

use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use spantagger::config::KEYS;

use crate::commands::{CliError, Exit};

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("PATH").help(help)
}

/// One `--<key> <value>` flag per config key.
fn config_flags(cmd: Command) -> Command {
    let cmd = cmd.arg(path_arg("config", "config file of `key = value` lines; flags override it"));
    KEYS.iter().fold(cmd, |cmd, &key| {
        cmd.arg(Arg::new(key).long(key).value_name("VALUE").help_heading("Config overrides"))
    })
}

fn sidecar_arg() -> Arg {
    path_arg("sidecar", "precomputed token vectors for the sidecar encoder")
}

fn cli() -> Command {
    Command::new("spantagger")
        .about("Aspect and opinion term tagging with relational graph attention")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(config_flags(
            Command::new("train")
                .about("train a model and write its checkpoint and metrics log")
                .arg(path_arg("train", "training corpus").required(true))
                .arg(path_arg("dev", "development corpus used for model selection"))
                .arg(path_arg("out", "checkpoint to write").required(true))
                .arg(path_arg("metrics", "metrics log to write (default: <out>.metrics)"))
                .arg(sidecar_arg()),
        ))
        .subcommand(
            Command::new("eval")
                .about("score a checkpoint on a labelled corpus")
                .arg(path_arg("model", "checkpoint").required(true))
                .arg(path_arg("data", "labelled corpus").required(true))
                .arg(sidecar_arg()),
        )
        .subcommand(
            Command::new("predict")
                .about("tag a corpus and write it with predicted tags")
                .arg(path_arg("model", "checkpoint").required(true))
                .arg(path_arg("data", "corpus to tag").required(true))
                .arg(path_arg("out", "tagged corpus to write").required(true))
                .arg(sidecar_arg()),
        )
        .subcommand(config_flags(
            Command::new("gradcheck")
                .about("compare analytic and finite-difference gradients on a small model")
                .arg(path_arg("data", "corpus holding the sentence to check (default: built-in sentence)"))
                .arg(Arg::new("id").long("id").value_name("ID").help("sentence id within --data (default: first)"))
                .arg(sidecar_arg()),
        ))
        .subcommand(
            Command::new("validate")
                .about("check a corpus file against the format invariants")
                .arg(path_arg("data", "corpus to check").required(true))
                .arg(
                    Arg::new("task")
                        .long("task")
                        .value_name("TASK")
                        .value_parser(["aspect", "opinion"])
                        .default_value("aspect"),
                )
                .arg(Arg::new("quiet").long("quiet").short('q').action(ArgAction::SetTrue)),
        )
}

fn dispatch(m: &ArgMatches) -> Result<(), CliError> {
    match m.subcommand() {
        Some(("train", a)) => commands::train(a),
        Some(("eval", a)) => commands::eval(a),
        Some(("predict", a)) => commands::predict(a),
        Some(("gradcheck", a)) => commands::gradcheck(a),
        Some(("validate", a)) => commands::validate(a),
        _ => unreachable!("subcommand required"),
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            return CliError::new(Exit::Usage, "usage", first).report();
        }
    };
    match dispatch(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
