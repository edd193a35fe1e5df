//! `hbkex`: run simulator scenarios, manage a TTP state file, print
//! strength tables, decode wire messages and emit golden vectors.
//!
//! Exit codes: 0 success, 1 failure (scenario expectations, I/O, decode),
//! 2 usage error.

use std::fmt::Write as _;
use std::fs;
use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hbkex_core::binding::second_preimage_strength;
use hbkex_core::crypto::{Drbg, Suite, SuiteConfig};
use hbkex_core::ttp::{Directory, Ttp};
use hbkex_core::vectors::render_golden_vectors;
use hbkex_core::wire::{Addressee, Ecm, Emm, EmmBody, ECM_MAGIC, EMM_MAGIC};
use hbkex_sim::headend::{BroadcastFrame, FRAME_MAGIC};
use hbkex_sim::runner::{decode_capture, CAPTURE_MAGIC};
use hbkex_sim::{ScenarioConfig, World};

const SEED_ENV: &str = "HBKEX_SEED";
const DIRECTORY_MAGIC: &[u8] = b"HBDR";

#[derive(Debug, Parser)]
#[command(name = "hbkex", version, about = "Broadcast key establishment toolkit")]
struct Cli {
    /// Print diagnostics to stderr.
    #[arg(short, long, global = true, conflicts_with = "quiet")]
    verbose: bool,
    /// Suppress normal stdout output.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and print its report.
    Run(RunArgs),
    /// Manage a trusted third party state file.
    #[command(subcommand)]
    Ttp(TtpCommand),
    /// Second-preimage strength of the truncated binding hash.
    #[command(subcommand)]
    Kdf(KdfCommand),
    /// Inspect wire encodings.
    #[command(subcommand)]
    Wire(WireCommand),
    /// Fixed-input test vectors.
    #[command(subcommand)]
    Vectors(VectorsCommand),
}

#[derive(Debug, Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Overrides the scenario's seed and the HBKEX_SEED default.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write every broadcast frame to this capture file.
    #[arg(long)]
    capture: Option<PathBuf>,
    /// Fail unless the report equals this file byte for byte.
    #[arg(long)]
    expect: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum TtpCommand {
    /// Create a fresh TTP key pair.
    Init {
        #[arg(long)]
        state: PathBuf,
        /// Key generation seed; defaults to HBKEX_SEED, then OS randomness.
        #[arg(long)]
        seed: Option<u64>,
        /// Control word length in bits.
        #[arg(long, default_value_t = 128)]
        n: u32,
        /// Overwrite an existing state file.
        #[arg(long)]
        force: bool,
    },
    /// Replace the TTP key and re-issue receiver certificates.
    Rotate {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the public directory (keys, certificates, signed CRL).
    Export {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum KdfCommand {
    /// Strength in bits for output length n and maximum input length.
    Strength {
        #[arg(long)]
        n: u32,
        /// Maximum hash input length in bits.
        #[arg(long)]
        max_len: u64,
    },
    /// Strength grid over n and input lengths 2^from..2^to bits.
    Table {
        #[arg(long, value_delimiter = ',', default_value = "128,192,256,511")]
        n: Vec<u32>,
        #[arg(long, default_value_t = 10)]
        from: u32,
        #[arg(long, default_value_t = 40)]
        to: u32,
    },
}

#[derive(Debug, Subcommand)]
enum WireCommand {
    /// Decode an ECM, EMM, frame, capture or directory file.
    Decode { file: PathBuf },
}

#[derive(Debug, Subcommand)]
enum VectorsCommand {
    /// Print the golden vectors in `name hex` lines.
    Emit {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure reported with exit code 1.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CliResult = Result<ExitCode, Failure>;

struct Output {
    verbose: bool,
    quiet: bool,
}

impl Output {
    fn print(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
        }
    }

    fn note(&self, text: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", text.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = Output {
        verbose: cli.verbose,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Run(args) => run(&out, args),
        Command::Ttp(cmd) => ttp(&out, cmd),
        Command::Kdf(cmd) => kdf(&out, cmd),
        Command::Wire(WireCommand::Decode { file }) => wire_decode(&out, &file),
        Command::Vectors(VectorsCommand::Emit { out: path }) => vectors(&out, path),
    };
    match result {
        Ok(code) => code,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

/// `HBKEX_SEED`, if set. A malformed value is an error rather than a silent
/// fallback.
fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn run(out: &Output, args: RunArgs) -> CliResult {
    let text = String::from_utf8(read(&args.scenario)?)
        .map_err(|_| Failure(format!("{}: not UTF-8", args.scenario.display())))?;
    let cfg = ScenarioConfig::parse(&text).map_err(|e| Failure(format!("{}: {e}", args.scenario.display())))?;
    let (seed, source) = match (args.seed, cfg.seed, env_seed()?) {
        (Some(s), _, _) => (s, "--seed"),
        (None, Some(s), _) => (s, "scenario"),
        (None, None, Some(s)) => (s, SEED_ENV),
        (None, None, None) => (0, "default"),
    };
    out.note(format!(
        "scenario {} epochs={} decoders={} seed={seed} ({source})",
        cfg.name,
        cfg.epochs,
        cfg.decoders.len()
    ));
    let (report, capture) = if args.capture.is_some() {
        let (report, capture) = World::with_capture(&cfg, seed)?.run_with_capture()?;
        (report, Some(capture))
    } else {
        (World::new(&cfg, seed)?.run()?, None)
    };
    let rendered = report.render();
    if let (Some(path), Some(bytes)) = (&args.capture, capture) {
        write(path, &bytes)?;
        out.note(format!("capture {} ({} bytes)", path.display(), bytes.len()));
    }
    match &args.out {
        Some(path) => {
            write(path, rendered.as_bytes())?;
            out.print(&format!("result {}\n", if report.passed() { "pass" } else { "fail" }));
        }
        None => out.print(&rendered),
    }
    for e in report.expectations.iter().filter(|e| !e.passed) {
        eprintln!("expectation failed: {} actual={}", e.expectation, e.actual);
    }
    let mut ok = report.passed();
    if let Some(path) = &args.expect {
        let golden = String::from_utf8_lossy(&read(path)?).into_owned();
        if let Some((line, want, got)) = first_difference(&golden, &rendered) {
            eprintln!(
                "report differs from {} at line {line}: expected {want:?}, got {got:?}",
                path.display()
            );
            ok = false;
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn first_difference<'a>(want: &'a str, got: &'a str) -> Option<(usize, &'a str, &'a str)> {
    let (mut w, mut g) = (want.lines(), got.lines());
    for line in 1.. {
        match (w.next(), g.next()) {
            (None, None) => return None,
            (a, b) if a == b => continue,
            (a, b) => return Some((line, a.unwrap_or("<end>"), b.unwrap_or("<end>"))),
        }
    }
    unreachable!()
}

fn key_rng(seed: Option<u64>) -> Result<Drbg, Failure> {
    if let Some(s) = seed.or(env_seed()?) {
        return Ok(Drbg::from_u64(s));
    }
    let mut bytes = [0u8; 32];
    fs::File::open("/dev/urandom")
        .and_then(|mut f| f.read_exact(&mut bytes))
        .map_err(|e| Failure(format!("no seed given and OS randomness unavailable: {e}")))?;
    Ok(Drbg::new(&bytes))
}

fn load_ttp(path: &Path) -> Result<Ttp, Failure> {
    Ttp::from_state_bytes(&read(path)?).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn describe_ttp(ttp: &Ttp) -> String {
    let stats = ttp.stats();
    format!(
        "generation {}\npublic_key {}\nreceivers {}\nreceiver_certs_issued {}\nsender_certs_issued {}\nrevoked {}\n",
        ttp.generation(),
        hex::encode(ttp.public_key().as_bytes()),
        ttp.receivers().len(),
        stats.receiver_certs_issued,
        stats.sender_certs_issued,
        ttp.crl().len()
    )
}

fn ttp(out: &Output, cmd: TtpCommand) -> CliResult {
    match cmd {
        TtpCommand::Init { state, seed, n, force } => {
            if state.exists() && !force {
                return Err(Failure(format!(
                    "{} exists; pass --force to overwrite",
                    state.display()
                )));
            }
            let suite = Suite::new(SuiteConfig::with_secret_len(n)?)?;
            let ttp = Ttp::init(suite, &mut key_rng(seed)?);
            write(&state, &ttp.to_state_bytes())?;
            out.print(&describe_ttp(&ttp));
        }
        TtpCommand::Rotate { state, seed } => {
            let mut ttp = load_ttp(&state)?;
            let reissued = ttp.rotate(&mut key_rng(seed)?)?;
            write(&state, &ttp.to_state_bytes())?;
            out.print(&describe_ttp(&ttp));
            out.print(&format!("reissued {}\n", reissued.len()));
        }
        TtpCommand::Export { state, out: path } => {
            let dir = load_ttp(&state)?.export()?;
            let bytes = dir.encode();
            if let Some(path) = path {
                write(&path, &bytes)?;
                out.note(format!("directory {} ({} bytes)", path.display(), bytes.len()));
            }
            out.print(&describe_directory(&dir));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn kdf(out: &Output, cmd: KdfCommand) -> CliResult {
    match cmd {
        KdfCommand::Strength { n, max_len } => {
            out.print(&format!("{}\n", second_preimage_strength(n, max_len)));
        }
        KdfCommand::Table { n, from, to } => {
            if from > to || to > 63 {
                return Err(Failure(format!("need from <= to <= 63, got {from}..{to}")));
            }
            let mut s = String::from("log2_max_len");
            for bits in &n {
                let _ = write!(s, " n={bits}");
            }
            s.push('\n');
            for log in from..=to {
                let _ = write!(s, "{log}");
                for bits in &n {
                    let _ = write!(s, " {}", second_preimage_strength(*bits, 1u64 << log));
                }
                s.push('\n');
            }
            out.print(&s);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn vectors(out: &Output, path: Option<PathBuf>) -> CliResult {
    let text = render_golden_vectors()?;
    match path {
        Some(p) => write(&p, text.as_bytes())?,
        None => out.print(&text),
    }
    Ok(ExitCode::SUCCESS)
}

fn wire_decode(out: &Output, path: &Path) -> CliResult {
    let bytes = read(path)?;
    let fail = |e: hbkex_core::Error| Failure(format!("{}: {e}", path.display()));
    let text = match bytes.get(..4) {
        Some(m) if m == ECM_MAGIC => describe_ecm(&Ecm::decode(&bytes).map_err(fail)?, bytes.len()),
        Some(m) if m == EMM_MAGIC => describe_emm(&Emm::decode(&bytes).map_err(fail)?, bytes.len()),
        Some(m) if m == FRAME_MAGIC => describe_frame(&BroadcastFrame::decode(&bytes).map_err(fail)?, bytes.len())?,
        Some(m) if m == CAPTURE_MAGIC => {
            let frames = decode_capture(&bytes).map_err(fail)?;
            let mut s = format!("capture frames={} bytes={}\n", frames.len(), bytes.len());
            for f in &frames {
                s.push_str(&describe_frame(f, f.encode().len())?);
            }
            s
        }
        Some(m) if m == DIRECTORY_MAGIC => describe_directory(&Directory::decode(&bytes).map_err(fail)?),
        _ => {
            return Err(Failure(format!(
                "{}: unrecognized magic at offset 0 (expected HECM, HEMM, HBFR, HBCP or HBDR)",
                path.display()
            )))
        }
    };
    out.print(&text);
    Ok(ExitCode::SUCCESS)
}

fn describe_ecm(ecm: &Ecm, len: usize) -> String {
    format!(
        "ecm ca_system={:#06x} epoch={} protected_secret_len={} bytes={len}\n",
        ecm.ca_system_id,
        ecm.epoch,
        ecm.protected_secret.len()
    )
}

fn describe_emm(emm: &Emm, len: usize) -> String {
    let addressee = match emm.addressee {
        Addressee::Broadcast => "broadcast".to_string(),
        Addressee::Receiver(id) => format!("receiver:{}", id.0),
    };
    let body = match &emm.body {
        EmmBody::Sealed(ct) => format!("sealed ciphertext_len={}", ct.len()),
        EmmBody::Authenticated { payload, tag } => {
            format!("authenticated payload_len={} tag_len={}", payload.len(), tag.len())
        }
    };
    format!(
        "emm ca_system={:#06x} kind={} addressee={addressee} body={body} bytes={len}\n",
        emm.ca_system_id,
        emm.kind.name()
    )
}

fn describe_frame(frame: &BroadcastFrame, len: usize) -> Result<String, Failure> {
    let mut s = format!(
        "frame epoch={} content_len={} ecms={} emms={} bytes={len}\n",
        frame.epoch,
        frame.scrambled_content.len(),
        frame.ecms.len(),
        frame.emms.len()
    );
    for (i, ecm) in frame.ecms.iter().enumerate() {
        let d = Ecm::decode(ecm).map_err(|e| Failure(format!("frame {} ecm {i}: {e}", frame.epoch)))?;
        s.push_str("  ");
        s.push_str(&describe_ecm(&d, ecm.len()));
    }
    for (i, emm) in frame.emms.iter().enumerate() {
        let d = Emm::decode(emm).map_err(|e| Failure(format!("frame {} emm {i}: {e}", frame.epoch)))?;
        s.push_str("  ");
        s.push_str(&describe_emm(&d, emm.len()));
    }
    Ok(s)
}

fn describe_directory(dir: &Directory) -> String {
    let mut s = format!(
        "directory generation={} receiver_certs={} sender_certs={} revoked={}\n",
        dir.current_generation(),
        dir.receiver_certs.len(),
        dir.sender_certs.len(),
        dir.crl.serials.len()
    );
    for (generation, pk) in &dir.generation_keys {
        let _ = writeln!(s, "  generation_key {generation} {}", hex::encode(pk.as_bytes()));
    }
    s
}
