use std::net::{TcpListener, ToSocketAddrs};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};

use ppgd::bench::{run_sweep, write_sweep_csv_file, RowStatus, SweepSpec};
use ppgd::config::{parse_transport, ConfigFile};
use ppgd::dataset::PartyId;
use ppgd::protocol::{Role, TcpTransport};
use ppgd::simulator::{run_full_session, run_party_session, DatasetSource, SessionConfig};
use ppgd::verify::verify;

#[derive(Parser)]
#[command(name = "ppgd", version, about = "Two-party two-stage prediction simulator")]
struct Cli {
    /// Override the config's transport: inproc or socket.
    #[arg(long, global = true)]
    transport: Option<String>,
    /// Override the synthetic dataset seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session and print a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only the listening party, accepting on this address.
        #[arg(long, conflicts_with = "connect")]
        listen: Option<String>,
        /// Run only the connecting party, dialing this address.
        #[arg(long)]
        connect: Option<String>,
    },
    /// Sweep the learning stoppage and write a CSV.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Audit the invariants of a configuration.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(cli: &Cli, path: &PathBuf) -> Result<(ConfigFile, SessionConfig, PathBuf), String> {
    let (file, base) = ConfigFile::load(path).map_err(|e| e.to_string())?;
    let mut cfg = file.session(&base).map_err(|e| e.to_string())?;
    apply_overrides(cli, &mut cfg)?;
    Ok((file, cfg, base))
}

fn apply_overrides(cli: &Cli, cfg: &mut SessionConfig) -> Result<(), String> {
    if let Some(t) = &cli.transport {
        let port = match cfg.transport {
            ppgd::simulator::TransportKind::Socket { port } => port,
            _ => 0,
        };
        cfg.transport = parse_transport(t, port).map_err(|e| e.to_string())?;
    }
    if let Some(seed) = cli.seed {
        match &mut cfg.dataset {
            DatasetSource::Synthetic(spec) => spec.seed = seed,
            _ => log::warn!("--seed ignored: dataset is not synthetic"),
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<ExitCode, String> {
    match &cli.command {
        Command::Run { config, listen, connect } => {
            let (_, cfg, _) = load(cli, config)?;
            match (listen, connect) {
                (Some(addr), _) => run_split(&cfg, Role::Responder, addr),
                (_, Some(addr)) => run_split(&cfg, Role::Initiator, addr),
                _ => Ok(run(&cfg)),
            }
        }
        Command::Sweep { spec, out } => {
            let (file, base) = ConfigFile::load(spec).map_err(|e| e.to_string())?;
            let mut sweep = SweepSpec::from_file(&file, &base).map_err(|e| e.to_string())?;
            apply_overrides(cli, &mut sweep.template)?;
            let rows = run_sweep(&sweep).map_err(|e| e.to_string())?;
            write_sweep_csv_file(&rows, out).map_err(|e| e.to_string())?;
            for r in &rows {
                match (&r.status, r.iterations, r.elapsed_ms) {
                    (RowStatus::Ok, Some(it), Some(ms)) => {
                        println!("{:<10} lambda={:<5} iterations={it:<7} elapsed_ms={ms:.3}", r.method, r.lambda)
                    }
                    _ => println!(
                        "{:<10} lambda={:<5} ERROR {}",
                        r.method,
                        r.lambda,
                        r.error.as_deref().unwrap_or("")
                    ),
                }
            }
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { config } => {
            let (_, cfg, _) = load(cli, config)?;
            let report = verify(&cfg);
            print!("{report}");
            Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn run(cfg: &SessionConfig) -> ExitCode {
    match run_full_session(cfg) {
        Ok(r) => {
            println!("method      {}", cfg.gd.method);
            println!("lambda      {}", cfg.gd.lambda);
            println!("records     {}", r.af.len());
            println!("iterations  {}", r.stats.iterations);
            println!("final_ep    {}", r.stats.final_ep);
            println!("elapsed_ms  {:.3}", r.stats.elapsed.as_secs_f64() * 1e3);
            println!("segments    A={} B={}", r.alice_transcript.len(), r.bob_transcript.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("session failed: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run_split(cfg: &SessionConfig, role: Role, addr: &str) -> Result<ExitCode, String> {
    let party = [PartyId::A, PartyId::B]
        .into_iter()
        .find(|&p| cfg.role_of(p) == role)
        .expect("one party per role");
    let inputs = cfg.party_inputs(party).map_err(|e| e.to_string())?;
    let transport = match role {
        Role::Responder => {
            let listener = TcpListener::bind(addr).map_err(|e| format!("cannot listen on {addr}: {e}"))?;
            eprintln!("party {party} listening on {}", listener.local_addr().map_err(|e| e.to_string())?);
            TcpTransport::accept(&listener).map_err(|e| e.to_string())?
        }
        Role::Initiator => connect_with_retry(addr, Duration::from_secs(10))?,
    };
    match run_party_session(&inputs, transport) {
        Ok(out) => {
            println!("party       {party}");
            println!("iterations  {}", out.stats.iterations);
            println!("final_ep    {}", out.stats.final_ep);
            println!("elapsed_ms  {:.3}", out.stats.elapsed.as_secs_f64() * 1e3);
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("session failed: {e}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn connect_with_retry(addr: &str, patience: Duration) -> Result<TcpTransport, String> {
    let target = addr
        .to_socket_addrs()
        .map_err(|e| format!("bad address {addr}: {e}"))?
        .next()
        .ok_or_else(|| format!("bad address {addr}"))?;
    let start = Instant::now();
    loop {
        match TcpTransport::connect(target) {
            Ok(t) => return Ok(t),
            Err(e) if start.elapsed() > patience => return Err(format!("cannot connect to {addr}: {e}")),
            Err(_) => std::thread::sleep(Duration::from_millis(50)),
        }
    }
}
