// SPDX-License-Identifier: Apache-2.0

mod decode;

use std::fmt::Display;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inca_core::ctrl::{self, parse_command, ControlCommand, ControlResponse, Endpoint, Listener, ReadLine};
use inca_core::netsim::{Scenario, Simulator, Topology};

#[derive(Parser)]
#[command(name = "inca", version, about = "GTP-U aware SRv6 service chaining dataplane and testbed simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the frames of a pcap file layer by layer.
    Decode { pcap: PathBuf },
    /// Run a scenario on a simulated topology.
    Run {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        capture_dir: PathBuf,
        /// Serve the control channel here and wait for STEP commands
        /// between injections. `host:port` for TCP, otherwise a Unix
        /// socket path.
        #[arg(long)]
        ctl: Option<String>,
        /// Where to write the JSON report; standard output if absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Send one command to a running control channel.
    Ctl {
        #[arg(long)]
        ctl: String,
        #[arg(required = true, trailing_var_arg = true, allow_hyphen_values = true)]
        words: Vec<String>,
    },
}

fn fail(context: impl Display, err: impl Display) -> ExitCode {
    eprintln!("error: {context}: {err}");
    ExitCode::FAILURE
}

/// Writes to standard output; a reader that went away is not an error.
fn emit(text: &str) -> io::Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other,
    }
}

fn read_text(path: &Path) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| fail(path.display(), e))
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Decode { pcap } => decode_cmd(&pcap),
        Command::Run { topology, rules, scenario, capture_dir, ctl, report } => {
            match run_cmd(&topology, &rules, &scenario, &capture_dir, ctl.as_deref(), report.as_deref()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(code) => code,
            }
        }
        Command::Ctl { ctl, words } => ctl_cmd(&ctl, &words.join(" ")),
    }
}

fn decode_cmd(path: &Path) -> ExitCode {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => return fail(path.display(), e),
    };
    match decode::decode_pcap(&bytes) {
        Ok(text) => match emit(&text) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail("stdout", e),
        },
        Err(e) => fail(path.display(), e),
    }
}

fn run_cmd(
    topology: &Path,
    rules: &Path,
    scenario: &Path,
    capture_dir: &Path,
    ctl: Option<&str>,
    report: Option<&Path>,
) -> Result<(), ExitCode> {
    let topo = Topology::from_json(&read_text(topology)?).map_err(|e| fail(topology.display(), e))?;
    let table = ctrl::load_rules_file(&read_text(rules)?)
        .and_then(|cfg| cfg.build_table())
        .map_err(|e| fail(rules.display(), e))?;
    let scen = Scenario::from_json(&read_text(scenario)?).map_err(|e| fail(scenario.display(), e))?;
    let mut sim = Simulator::new(topo, table, &scen).map_err(|e| fail(scenario.display(), e))?;

    match ctl {
        Some(addr) => serve(&mut sim, &Endpoint::parse(addr)).map_err(|e| fail(addr, e))?,
        None => sim.run(),
    }

    let out = sim.report();
    out.write_captures(capture_dir).map_err(|e| fail(capture_dir.display(), e))?;
    let json = out.to_json();
    match report {
        Some(path) => std::fs::write(path, json).map_err(|e| fail(path.display(), e))?,
        None => emit(&json).map_err(|e| fail("stdout", e))?,
    }
    Ok(())
}

/// Serves control commands until every scenario step has run.
fn serve(sim: &mut Simulator, endpoint: &Endpoint) -> io::Result<()> {
    let listener = Listener::bind(endpoint)?;
    eprintln!("control channel listening on {}", listener.local_endpoint()?);
    while sim.steps_remaining() > 0 {
        let mut conn = listener.accept()?;
        while let Some(line) = conn.next_line()? {
            let response = match parse_command(&line) {
                Err(e) => ControlResponse::Err(e.to_string()),
                Ok(ControlCommand::Step(n)) => {
                    let mut done = 0;
                    while done < n && sim.step() {
                        done += 1;
                    }
                    ControlResponse::Ok(vec![
                        format!("stepped={done}"),
                        format!("remaining={}", sim.steps_remaining()),
                    ])
                }
                Ok(cmd) => match sim.pipeline_mut() {
                    Some(state) => ctrl::apply(&cmd, state),
                    None => ControlResponse::Err("NoDataplane: the topology has no INCA node".into()),
                },
            };
            conn.respond(&response)?;
            if sim.steps_remaining() == 0 {
                break;
            }
        }
    }
    Ok(())
}

fn ctl_cmd(addr: &str, line: &str) -> ExitCode {
    match ctrl::request(&Endpoint::parse(addr), line) {
        Ok(response) => {
            let wire = response.to_wire();
            if let Err(e) = emit(wire.strip_suffix('\n').unwrap_or(&wire)) {
                return fail("stdout", e);
            }
            if response.is_ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {addr}: {e}");
            ExitCode::from(2)
        }
    }
}
