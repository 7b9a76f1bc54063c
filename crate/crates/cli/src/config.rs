//! `--config FILE` support: flat `key=value` lines become `--key value`
//! flags inserted right after the subcommand, so real flags override them.

use clap::CommandFactory;
use std::fs;

use crate::{Cli, Failure};

fn parse_file(path: &str) -> Result<Vec<(String, String)>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Resource(format!("cannot read config {path}: {e}")))?;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Failure::Usage(format!("{path}:{}: expected key=value", n + 1)))?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

fn long_names(cmd: &clap::Command) -> Vec<String> {
    cmd.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect()
}

/// Remove `--config` from `args` and splice the file's entries in after the
/// (sub)subcommand.
pub fn expand(mut args: Vec<String>) -> Result<Vec<String>, Failure> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].split_once('=') {
        Some((_, p)) => {
            let p = p.to_string();
            args.remove(pos);
            p
        }
        None => {
            if pos + 1 >= args.len() {
                return Err(Failure::Usage("--config needs a file".into()));
            }
            let p = args.remove(pos + 1);
            args.remove(pos);
            p
        }
    };
    let entries = parse_file(&path)?;
    let root = Cli::command();
    let Some(sub_at) = args.iter().position(|a| root.find_subcommand(a).is_some()) else {
        return Err(Failure::Usage("--config needs a subcommand".into()));
    };
    let mut cmd = root.find_subcommand(&args[sub_at]).unwrap().clone();
    let mut insert_at = sub_at + 1;
    if cmd.has_subcommands() {
        if let Some(name) = args.get(insert_at).filter(|a| cmd.find_subcommand(a).is_some()) {
            cmd = cmd.find_subcommand(name).unwrap().clone();
            insert_at += 1;
        }
    }
    let mut known = long_names(&cmd);
    known.extend(long_names(&root));
    let mut extra = Vec::new();
    for (k, v) in entries {
        if !known.contains(&k) {
            return Err(Failure::Usage(format!("config key '{k}' is not an option of '{}'", cmd.get_name())));
        }
        extra.push(format!("--{k}"));
        extra.push(v);
    }
    args.splice(insert_at..insert_at, extra);
    Ok(args)
}
