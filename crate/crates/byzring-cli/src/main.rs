//! byzring: run, replay, sweep, and exhaustively check Byzantine dispersion
//! scenarios on anonymous rings.
//!
//! Exactly one mode flag is required per invocation:
//!
//! * `--config PATH`  run one scenario and verify its claims
//! * `--replay PATH`  re-execute a recorded trace and verify it byte for byte
//! * `--sweep PATH`   run a parameter grid and emit a CSV of results
//! * `--oracle "n,f,protocol"`  enumerate all scripted adversaries
//!
//! Exit codes: 0 success, 1 claim violation or divergence, 2 usage error,
//! 3 search budget exceeded.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use byzring::engine::Trace;
use byzring::oracle::{exhaustive_oracle, run_script, standard_instances, OracleResult, OracleSpec};
use byzring::protocols::{Mutation, ProtocolParams};
use byzring::scenario::{run_scenario, sweep_points, ScenarioConfig, SweepSpec};
use byzring::verify::VerificationReport;

const EXIT_OK: u8 = 0;
const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "byzring", version, about = "Byzantine dispersion simulator for anonymous rings")]
struct Cli {
    /// Run the scenario described by this JSON config.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Write the run's trace as JSON lines to this path.
    #[arg(long, value_name = "PATH")]
    trace_out: Option<PathBuf>,

    /// Include complete exposed memories and actions in the trace file
    /// (required for later replay).
    #[arg(long)]
    full_trace: bool,

    /// Override the config's round limit.
    #[arg(long, value_name = "N")]
    max_rounds: Option<u32>,

    /// Override the config's master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Run the parameter sweep described by this JSON spec.
    #[arg(long, value_name = "PATH")]
    sweep: Option<PathBuf>,

    /// Re-execute a recorded trace and verify bit-exact agreement.
    #[arg(long, value_name = "PATH")]
    replay: Option<PathBuf>,

    /// Exhaustively check all scripted adversaries: "n,f,protocol" with
    /// protocol one of rooted, timeopt, opt, memopt, rooted-norank,
    /// timeopt-nocheck2.
    #[arg(long, value_name = "SPEC")]
    oracle: Option<String>,

    /// Round budget for --oracle.
    #[arg(long, value_name = "N", default_value_t = 200_000_000)]
    oracle_budget: u64,

    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("BYZRING_THREADS").ok().and_then(|v| v.parse().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }

    let modes = [cli.config.is_some(), cli.sweep.is_some(), cli.replay.is_some(), cli.oracle.is_some()];
    if modes.iter().filter(|&&m| m).count() != 1 {
        eprintln!("error: exactly one of --config, --sweep, --replay, --oracle is required");
        return ExitCode::from(EXIT_USAGE);
    }

    let result = if let Some(path) = &cli.config {
        cmd_run(&cli, path)
    } else if let Some(path) = &cli.replay {
        cmd_replay(&cli, path)
    } else if let Some(path) = &cli.sweep {
        cmd_sweep(&cli, path)
    } else {
        cmd_oracle(&cli, cli.oracle.as_deref().expect("mode checked"))
    };

    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let mut text = String::new();
    File::open(path)
        .map_err(|e| anyhow::anyhow!("cannot open {}: {e}", path.display()))?
        .read_to_string(&mut text)?;
    serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

fn print_report(format: Format, report: &VerificationReport) {
    match format {
        Format::Text => print!("{report}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(report).expect("report serializes")),
    }
}

fn cmd_run(cli: &Cli, path: &Path) -> anyhow::Result<u8> {
    let mut config: ScenarioConfig = read_json(path)?;
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    if let Some(max_rounds) = cli.max_rounds {
        config.max_rounds = Some(max_rounds);
    }
    let (trace, report, _world) = run_scenario(&config)?;
    if let Some(out) = &cli.trace_out {
        let file = File::create(out)
            .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", out.display()))?;
        trace.write_jsonl(BufWriter::new(file), cli.full_trace)?;
    }
    print_report(cli.format, &report);
    if cli.format == Format::Text {
        if let Some(t) = report.max_termination_round() {
            println!("dispersed at round <= {t}");
        }
    }
    Ok(if report.ok() { EXIT_OK } else { EXIT_VIOLATION })
}

fn cmd_replay(_cli: &Cli, path: &Path) -> anyhow::Result<u8> {
    let file = File::open(path).map_err(|e| anyhow::anyhow!("cannot open {}: {e}", path.display()))?;
    let (trace, full) = Trace::read_jsonl(BufReader::new(file))?;
    if !full {
        anyhow::bail!("trace was not recorded with --full-trace; replay needs recorded actions");
    }
    match byzring::engine::replay(&trace) {
        Ok(_final_world) => {}
        Err(err) => {
            eprintln!("replay: {err}");
            return Ok(EXIT_VIOLATION);
        }
    }
    // The recorded file must reproduce itself byte for byte.
    let mut reproduced = Vec::new();
    trace.write_jsonl(&mut reproduced, true)?;
    let mut original = Vec::new();
    File::open(path)?.read_to_end(&mut original)?;
    if reproduced != original {
        eprintln!("replay: re-serialized trace differs from the file");
        return Ok(EXIT_VIOLATION);
    }
    println!("replay ok: {} rounds reproduced bit-exactly", trace.rounds.len());
    Ok(EXIT_OK)
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_sweep(_cli: &Cli, path: &Path) -> anyhow::Result<u8> {
    use rayon::prelude::*;
    let spec: SweepSpec = read_json(path)?;
    if spec.version != byzring::scenario::CONFIG_VERSION {
        anyhow::bail!("unsupported sweep version {}", spec.version);
    }
    let points = sweep_points(&spec)?;
    let rows: Vec<anyhow::Result<(String, bool)>> = points
        .par_iter()
        .map(|point| {
            let (_trace, report, _world) = run_scenario(&point.config)?;
            let violations: Vec<String> =
                report.violated_claims.iter().map(|v| v.claim.clone()).collect();
            let row = format!(
                "{},{},{},{},{},{},{},{},{},{}",
                report.protocol,
                point.n,
                point.f,
                csv_escape(&point.strategy),
                point.seed,
                report.gathering_round.map(|g| g.to_string()).unwrap_or_default(),
                report.max_termination_round().map(|t| t.to_string()).unwrap_or_default(),
                report.max_memory_bits(),
                report.dispersion_ok,
                csv_escape(&violations.join(";")),
            );
            Ok((row, report.ok()))
        })
        .collect();

    let mut csv = String::from(
        "protocol,n,f,strategy,seed,gathering_round,termination_round,max_memory_bits,dispersion_ok,violations\n",
    );
    let mut all_ok = true;
    for row in rows {
        let (line, ok) = row?;
        csv.push_str(&line);
        csv.push('\n');
        all_ok &= ok;
    }
    match spec.output.as_deref() {
        Some(out) => {
            let mut file = File::create(out)
                .map_err(|e| anyhow::anyhow!("cannot create {out}: {e}"))?;
            file.write_all(csv.as_bytes())?;
            println!("wrote {} rows to {out}", points.len());
        }
        None => print!("{csv}"),
    }
    Ok(if all_ok { EXIT_OK } else { EXIT_VIOLATION })
}

fn oracle_spec(n: u32, f: u32, protocol: &str, budget: u64) -> anyhow::Result<Vec<OracleSpec>> {
    let (params, mutation) = match protocol {
        "rooted" => (ProtocolParams::Rooted, Mutation::None),
        "rooted-norank" => (ProtocolParams::Rooted, Mutation::RootedSkipRankCount),
        "timeopt" => (ProtocolParams::TimeOpt { n }, Mutation::None),
        "timeopt-nocheck2" => (ProtocolParams::TimeOpt { n }, Mutation::TimeOptSkipCheck2),
        "opt" => (ProtocolParams::Opt { n, f }, Mutation::None),
        "memopt" => {
            (ProtocolParams::MemOpt { n, mode: byzring::protocols::MemOptMode::Full }, Mutation::None)
        }
        other => anyhow::bail!("unknown oracle protocol '{other}'"),
    };
    Ok(standard_instances(n, f, params, mutation, budget))
}

fn cmd_oracle(cli: &Cli, spec_str: &str) -> anyhow::Result<u8> {
    let parts: Vec<&str> = spec_str.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        anyhow::bail!("--oracle expects \"n,f,protocol\"");
    }
    let n: u32 = parts[0].parse().map_err(|_| anyhow::anyhow!("bad n '{}'", parts[0]))?;
    let f: u32 = parts[1].parse().map_err(|_| anyhow::anyhow!("bad f '{}'", parts[1]))?;
    if n == 0 || n > 5 || f > 2 {
        anyhow::bail!("oracle instances are capped at n <= 5, f <= 2");
    }
    let specs = oracle_spec(n, f, parts[2], cli.oracle_budget)?;

    let mut total_states = 0u64;
    let mut complete = true;
    for spec in &specs {
        let OracleResult { worst_case_ok, counterexample, states_explored, complete: c } =
            exhaustive_oracle(spec);
        total_states += states_explored;
        complete &= c;
        if let Some(cex) = counterexample {
            println!("counterexample found ({total_states} rounds explored):");
            for (robot, script) in &cex.script {
                println!("  robot {robot}: {script:?}");
            }
            for v in &cex.report.violated_claims {
                println!("  violates [{}] at round {}: {}", v.claim, v.round, v.details);
            }
            // Confirm the script reproduces the violation.
            let (_trace, report) = run_script(spec, &cex.script);
            if report.ok() {
                anyhow::bail!("counterexample did not reproduce on replay");
            }
            if cli.format == Format::Json {
                println!("{}", serde_json::to_string_pretty(&cex).expect("serializes"));
            }
            return Ok(EXIT_VIOLATION);
        }
        if !worst_case_ok {
            return Ok(EXIT_VIOLATION);
        }
    }
    if !complete {
        println!("budget exceeded after {total_states} simulated rounds; result is partial");
        return Ok(EXIT_BUDGET);
    }
    println!(
        "worst_case_ok: every adversary script over {} instances holds ({total_states} rounds explored)",
        specs.len()
    );
    Ok(EXIT_OK)
}
