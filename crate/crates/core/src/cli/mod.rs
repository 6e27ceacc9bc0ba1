//! The `tamperproof` command line.
//!
//! All state lives under `--data-dir`:
//!
//! ```text
//! config.toml     effective CliConfig, written by `init`
//! state.json      policies, claims, balances and adjudication rounds
//! chain.log       public anchor chain
//! private.log     private metadata ledger
//! queue.log       capture queue journal
//! audit.jsonl     claim audit log
//! store/          content-addressed evidence objects
//! .lock           held while a command runs
//! ```
//!
//! Exit codes: 0 success (or Verified), 1 verification failure, 2 usage
//! error, 3 internal error.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::adjudication::{AdjudicationEngine, AdjudicationError, AdjudicationParams, AdjusterId, Vote};
use crate::claims::{ClaimError, ClaimsEngine, ClaimsState, Policy};
use crate::evidence::{hash_bytes, hash_parts, EvidenceError, EvidenceId, GeoPoint, MediaKind, ObjectStore};
use crate::ledger::{DualLedger, LedgerError};
use crate::pipeline::{
    MediaLocator, Pipeline, PipelineConfig, PipelineError, ProcessOutcome, RawCapture, QUEUE_FILE,
};
use crate::sim::{run_simulation_in, SimConfig, SimError};
use crate::time::{Clock, FixedClock, SystemClock, Timestamp};

pub const CONFIG_FILE: &str = "config.toml";
pub const STATE_FILE: &str = "state.json";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const STORE_DIR: &str = "store";
pub const LOCK_FILE: &str = ".lock";

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFICATION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

/// Settings of one data directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    pub insurer_pool: u64,
    pub params: AdjudicationParams,
    /// Device signing keys derive from this seed.
    pub device_key_seed: String,
    pub max_retries: u32,
    /// Seed for default vote salts.
    pub seed: u64,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            insurer_pool: 1_000_000,
            params: AdjudicationParams::default(),
            device_key_seed: "tamperproof-devices".into(),
            max_retries: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tamperproof", version, about = "Tamper-evident evidence anchoring and staked claim adjudication")]
pub struct Cli {
    /// Directory holding ledgers, evidence and claim state.
    #[arg(long, global = true, default_value = "tamperproof-data")]
    pub data_dir: PathBuf,
    /// TOML config file (used by `init`; overrides the stored config).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for panel selection (at `init`) and simulations.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print machine-readable JSON only.
    #[arg(long, global = true)]
    pub json: bool,
    /// Pin the clock to this RFC 3339 instant.
    #[arg(long, global = true, value_parser = parse_time)]
    pub at: Option<Timestamp>,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_time(s: &str) -> Result<Timestamp, String> {
    Timestamp::parse_rfc3339(s).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a fresh data directory.
    Init,
    /// Manage policies.
    #[command(subcommand)]
    Policy(PolicyCmd),
    /// Manage loss adjusters.
    #[command(subcommand)]
    Adjuster(AdjusterCmd),
    /// Capture a media file: hash, sign, store and anchor it.
    Capture(CaptureArgs),
    /// Seal pending anchors into a new block.
    Seal,
    /// Cross-verify a media file against both ledgers.
    Verify { evidence_id: String, file: PathBuf },
    /// Print the Merkle inclusion proof of sealed evidence.
    Proof { evidence_id: String },
    /// Print the chain's block headers.
    Headers,
    #[command(subcommand)]
    Claim(ClaimCmd),
    #[command(subcommand)]
    Adjudicate(AdjudicateCmd),
    /// Run a simulation described by a TOML or JSON config.
    Simulate {
        config: PathBuf,
        /// Write ledgers, audit log and metrics.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum PolicyCmd {
    Add {
        #[arg(long)]
        id: String,
        #[arg(long)]
        holder: String,
        #[arg(long)]
        limit: u64,
        #[arg(long, default_value_t = 0)]
        deductible: u64,
        #[arg(long)]
        inactive: bool,
    },
    List,
}

#[derive(Debug, Subcommand)]
pub enum AdjusterCmd {
    Register {
        #[arg(long)]
        certificate: String,
        #[arg(long)]
        stake: u64,
    },
    List,
}

#[derive(Debug, Args)]
pub struct CaptureArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub device: String,
    #[arg(long, default_value = "video")]
    pub kind: MediaKind,
    /// Capture time; defaults to the current clock.
    #[arg(long, value_parser = parse_time)]
    pub captured_at: Option<Timestamp>,
    #[arg(long, requires = "lon", allow_hyphen_values = true)]
    pub lat: Option<f64>,
    #[arg(long, requires = "lat", allow_hyphen_values = true)]
    pub lon: Option<f64>,
    /// Footage from a vehicle near, not involved in, the incident.
    #[arg(long)]
    pub witness: bool,
    /// Defaults to a digest of device and content.
    #[arg(long)]
    pub event_id: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum ClaimCmd {
    Submit {
        #[arg(long)]
        policy: String,
        #[arg(long = "evidence", required = true, num_args = 1..)]
        evidence: Vec<String>,
    },
    Verify { claim_id: String },
    Status { claim_id: String },
    Settle { claim_id: String },
    List,
}

#[derive(Debug, Subcommand)]
pub enum AdjudicateCmd {
    /// Draw a panel for a claim with verified evidence.
    Open { claim_id: String },
    Commit(VoteArgs),
    Reveal(VoteArgs),
    /// Deadline: close commits, or reveals if commits are already closed.
    Close { round_id: String },
    /// Tally the claim's current round.
    Finalize { claim_id: String },
    Show { round_id: String },
}

#[derive(Debug, Args)]
pub struct VoteArgs {
    pub round_id: String,
    #[arg(long)]
    pub adjuster: String,
    #[arg(long, action = clap::ArgAction::Set)]
    pub validity: bool,
    #[arg(long, default_value_t = 0)]
    pub amount: u64,
    /// 32-byte hex salt; derived from the config seed when omitted.
    #[arg(long)]
    pub salt: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        internal(e)
    }
}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::Io(_) | LedgerError::Corrupt(_) | LedgerError::Json(_) => internal(e),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<EvidenceError> for CliError {
    fn from(e: EvidenceError) -> Self {
        match e {
            EvidenceError::Io(_) | EvidenceError::Json(_) | EvidenceError::Signing(_) => internal(e),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<AdjudicationError> for CliError {
    fn from(e: AdjudicationError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ClaimError> for CliError {
    fn from(e: ClaimError) -> Self {
        match e {
            ClaimError::Ledger(l) => l.into(),
            ClaimError::Audit(io) => internal(io),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Journal(_) => internal(e),
            PipelineError::Ledger(l) => l.into(),
            PipelineError::Evidence(ev) => ev.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => CliError::Usage(e.to_string()),
            _ => internal(e),
        }
    }
}

/// What a command prints: JSON for `--json`, text otherwise.
struct Output {
    json: serde_json::Value,
    text: String,
    code: u8,
}

impl Output {
    fn new(json: serde_json::Value, text: impl Into<String>) -> Self {
        Self {
            json,
            text: text.into(),
            code: EXIT_OK,
        }
    }

    fn pretty(json: serde_json::Value, heading: impl Into<String>) -> Self {
        let mut text = heading.into();
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&serde_json::to_string_pretty(&json).expect("json value"));
        Self::new(json, text)
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns its exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let json = cli.json;
    match execute(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = if json {
                writeln!(stdout, "{}", serde_json::to_string(&out.json).expect("json value"))
            } else {
                writeln!(stdout, "{}", out.text)
            };
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

struct Ctx {
    dir: PathBuf,
    config: CliConfig,
    store: Arc<ObjectStore>,
    ledger: Arc<DualLedger>,
    clock: Arc<dyn Clock>,
    _lock: File,
}

fn lock(dir: &Path) -> Result<File, CliError> {
    std::fs::create_dir_all(dir)?;
    let file = File::create(dir.join(LOCK_FILE))?;
    match file.try_lock() {
        Ok(()) => Ok(file),
        Err(std::fs::TryLockError::WouldBlock) => Err(CliError::Usage(format!(
            "{} is in use by another tamperproof process",
            dir.display()
        ))),
        Err(std::fs::TryLockError::Error(e)) => Err(internal(e)),
    }
}

fn read_config(path: &Path) -> Result<CliConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let config: CliConfig = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    config.params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

impl Ctx {
    fn open(cli: &Cli) -> Result<Self, CliError> {
        let dir = cli.data_dir.clone();
        if !dir.join(CONFIG_FILE).exists() {
            return Err(CliError::Usage(format!(
                "{} is not initialized; run `tamperproof init` first",
                dir.display()
            )));
        }
        let lock = lock(&dir)?;
        let config = read_config(cli.config.as_deref().unwrap_or(&dir.join(CONFIG_FILE)))?;
        let clock: Arc<dyn Clock> = match cli.at {
            Some(t) => Arc::new(FixedClock(t)),
            None => Arc::new(SystemClock),
        };
        Ok(Self {
            store: Arc::new(ObjectStore::open(dir.join(STORE_DIR))?),
            ledger: Arc::new(DualLedger::open_dir(&dir)?),
            dir,
            config,
            clock,
            _lock: lock,
        })
    }

    fn engine(&self) -> Result<ClaimsEngine, CliError> {
        let text = std::fs::read_to_string(self.dir.join(STATE_FILE))?;
        let state: ClaimsState = serde_json::from_str(&text).map_err(internal)?;
        Ok(ClaimsEngine::new(state, self.store.clone(), self.ledger.clone(), self.clock.clone())
            .with_audit_log(self.dir.join(AUDIT_FILE))?)
    }

    fn save(&self, engine: &ClaimsEngine) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(engine.state()).map_err(internal)?;
        write_atomic(&self.dir.join(STATE_FILE), text.as_bytes())
    }

    fn pipeline(&self) -> Result<Pipeline, CliError> {
        let config = PipelineConfig {
            max_retries: self.config.max_retries,
            key_seed: self.config.device_key_seed.as_bytes().to_vec(),
            ..PipelineConfig::default()
        };
        Ok(Pipeline::with_journal(
            self.store.clone(),
            self.ledger.clone(),
            self.clock.clone(),
            config,
            self.dir.join(QUEUE_FILE),
        )?)
    }

    fn default_salt(&self, round_id: &str, adjuster: &str) -> [u8; 32] {
        hash_parts(&[b"tamperproof.cli.salt", &self.config.seed.to_be_bytes(), round_id.as_bytes(), adjuster.as_bytes()]).digest
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

fn execute(cli: Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Init => init(&cli),
        Command::Simulate { config, out } => simulate(&cli, config, out.as_deref()),
        _ => {
            let ctx = Ctx::open(&cli)?;
            dispatch(&ctx, cli.command)
        }
    }
}

fn init(cli: &Cli) -> Result<Output, CliError> {
    let dir = &cli.data_dir;
    if dir.join(CONFIG_FILE).exists() {
        return Err(CliError::Usage(format!("{} is already initialized", dir.display())));
    }
    let _lock = lock(dir)?;
    let mut config = match &cli.config {
        Some(path) => read_config(path)?,
        None => CliConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if config.params.rng_seed == [0; 32] {
        config.params.rng_seed = hash_parts(&[b"tamperproof.cli.panel", &config.seed.to_be_bytes()]).digest;
    }
    let engine = AdjudicationEngine::new(config.params).map_err(|e| CliError::Usage(e.to_string()))?;
    let state = ClaimsState::new(engine, config.insurer_pool);
    write_atomic(&dir.join(CONFIG_FILE), toml::to_string(&config).map_err(internal)?.as_bytes())?;
    write_atomic(
        &dir.join(STATE_FILE),
        serde_json::to_string_pretty(&state).map_err(internal)?.as_bytes(),
    )?;
    DualLedger::open_dir(dir)?;
    ObjectStore::open(dir.join(STORE_DIR))?;
    Ok(Output::new(
        json!({ "data_dir": dir, "insurer_pool": config.insurer_pool, "params": config.params }),
        format!("initialized {} (insurer pool {})", dir.display(), config.insurer_pool),
    ))
}

fn simulate(cli: &Cli, path: &Path, out: Option<&Path>) -> Result<Output, CliError> {
    let mut config = SimConfig::load(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let run = run_simulation_in(&config, out)?;
    if out.is_none() {
        std::fs::create_dir_all(&cli.data_dir)?;
        std::fs::write(cli.data_dir.join(crate::sim::METRICS_FILE), run.metrics.to_json())?;
    }
    Ok(Output::new(to_json(&run.metrics), run.metrics.summary_table()))
}

fn dispatch(ctx: &Ctx, command: Command) -> Result<Output, CliError> {
    match command {
        Command::Init | Command::Simulate { .. } => unreachable!("handled before opening the data directory"),
        Command::Policy(cmd) => {
            let mut engine = ctx.engine()?;
            match cmd {
                PolicyCmd::Add { id, holder, limit, deductible, inactive } => {
                    let policy = Policy {
                        policy_id: id,
                        holder,
                        coverage_limit: limit,
                        deductible,
                        active: !inactive,
                    };
                    engine.add_policy(policy.clone())?;
                    ctx.save(&engine)?;
                    Ok(Output::pretty(to_json(&policy), "policy added"))
                }
                PolicyCmd::List => Ok(Output::pretty(to_json(&engine.state().policies), "")),
            }
        }
        Command::Adjuster(cmd) => {
            let mut engine = ctx.engine()?;
            match cmd {
                AdjusterCmd::Register { certificate, stake } => {
                    let id = engine.adjudication_mut().register_adjuster(&certificate, stake)?;
                    ctx.save(&engine)?;
                    let adjuster = engine.adjudication().registry().get(&id).cloned();
                    Ok(Output::new(to_json(&adjuster), format!("registered {}", id.0)))
                }
                AdjusterCmd::List => {
                    let all: Vec<_> = engine.adjudication().registry().iter().cloned().collect();
                    Ok(Output::pretty(to_json(&all), ""))
                }
            }
        }
        Command::Capture(args) => capture(ctx, args),
        Command::Seal => {
            let header = ctx.ledger.chain_mut().seal_block(ctx.clock.now())?;
            Ok(Output::pretty(to_json(&header), format!("sealed block {}", header.height)))
        }
        Command::Verify { evidence_id, file } => {
            let id = EvidenceId::new(evidence_id)?;
            let media = File::open(&file).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
            let report = ctx.ledger.cross_verify(&id, media)?;
            let mut out = Output::pretty(to_json(&report), format!("{}: {:?}", report.evidence_id, report.verdict));
            if !report.is_verified() {
                out.code = EXIT_VERIFICATION;
            }
            Ok(out)
        }
        Command::Proof { evidence_id } => {
            let id = EvidenceId::new(evidence_id)?;
            let chain = ctx.ledger.chain();
            let proof = chain.prove_inclusion(&id)?;
            let header = chain.header(proof.block_height).expect("proof points at a sealed block");
            let (anchor, _) = chain.anchor(&id).expect("proved anchor exists");
            let valid = chain.verify_inclusion(anchor, &proof, &header);
            let json = json!({ "anchor": anchor, "proof": proof, "header": header, "valid": valid });
            Ok(Output::pretty(json, format!("inclusion proof for {id} in block {}", proof.block_height)))
        }
        Command::Headers => {
            let headers: Vec<_> = ctx.ledger.chain().blocks().iter().map(|b| b.header).collect();
            Ok(Output::pretty(to_json(&headers), ""))
        }
        Command::Claim(cmd) => claim(ctx, cmd),
        Command::Adjudicate(cmd) => adjudicate(ctx, cmd),
    }
}

fn capture(ctx: &Ctx, args: CaptureArgs) -> Result<Output, CliError> {
    let bytes = std::fs::read(&args.file).map_err(|e| CliError::Usage(format!("{}: {e}", args.file.display())))?;
    let event_id = match args.event_id {
        Some(id) => id,
        None => hash_parts(&[args.device.as_bytes(), hash_bytes(&bytes).as_bytes()]).to_hex()[..16].to_owned(),
    };
    let pipeline = ctx.pipeline()?;
    let meta = RawCapture {
        device_id: args.device,
        captured_at: args.captured_at.unwrap_or_else(|| ctx.clock.now()),
        location: args.lat.zip(args.lon).map(|(lat, lon)| GeoPoint { lat, lon }),
        media_kind: args.kind,
        witness: args.witness,
    };
    let path = std::path::absolute(&args.file)?;
    let event = pipeline.stamp(event_id, MediaLocator::File(path), meta);
    let evidence_id = event.evidence_id()?;
    pipeline.enqueue_capture(event)?;
    let mut failure = None;
    while let Some(outcome) = pipeline.process_next()? {
        if let ProcessOutcome::Failed { error, dead_lettered: true, .. } = outcome {
            failure = Some(error);
        }
    }
    if let Some(error) = failure {
        return Err(CliError::Internal(format!("capture failed: {error}")));
    }
    let manifest = ctx
        .store
        .record(&evidence_id)
        .map(|r| r.manifest)
        .ok_or_else(|| CliError::Internal(format!("{evidence_id} was not stored")))?;
    Ok(Output::new(
        json!({ "evidence_id": evidence_id, "manifest": manifest }),
        format!("evidence_id: {evidence_id}\n{}", manifest.to_json()),
    ))
}

fn claim(ctx: &Ctx, cmd: ClaimCmd) -> Result<Output, CliError> {
    let mut engine = ctx.engine()?;
    let out = match cmd {
        ClaimCmd::Submit { policy, evidence } => {
            let ids = evidence.into_iter().map(EvidenceId::new).collect::<Result<Vec<_>, _>>()?;
            let claim = engine.submit_claim(&policy, ids)?;
            Output::pretty(to_json(&claim), format!("submitted {}", claim.claim_id))
        }
        ClaimCmd::Verify { claim_id } => {
            let claim = engine.verify_evidence(&claim_id)?;
            Output::pretty(to_json(claim), format!("{}: {}", claim.claim_id, claim.state))
        }
        ClaimCmd::Status { claim_id } => {
            let claim = engine.claim(&claim_id)?;
            Output::pretty(to_json(claim), format!("{}: {}", claim.claim_id, claim.state))
        }
        ClaimCmd::Settle { claim_id } => {
            let result = engine.settle(&claim_id);
            // a funding failure is recorded in the claim history
            ctx.save(&engine)?;
            let transfer = result?;
            let claim = engine.claim(&claim_id)?;
            let heading = match &transfer {
                Some(t) => format!("{} settled: {} paid to {}", claim_id, t.amount, t.to),
                None => format!("{claim_id} settled with no payout"),
            };
            Output::pretty(json!({ "claim": claim, "transfer": transfer }), heading)
        }
        ClaimCmd::List => {
            let claims: Vec<_> = engine.claims().cloned().collect();
            Output::pretty(to_json(&claims), "")
        }
    };
    ctx.save(&engine)?;
    Ok(out)
}

fn parse_salt(s: &str) -> Result<[u8; 32], CliError> {
    let bytes = hex::decode(s).map_err(|e| CliError::Usage(format!("salt: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| CliError::Usage("salt must be 32 bytes of hex".into()))
}

fn adjudicate(ctx: &Ctx, cmd: AdjudicateCmd) -> Result<Output, CliError> {
    let mut engine = ctx.engine()?;
    let round_out = |engine: &ClaimsEngine, round_id: &str, heading: String| -> Result<Output, CliError> {
        let transcript = engine.adjudication().round(round_id)?.transcript();
        Ok(Output::pretty(to_json(&transcript), heading))
    };
    let out = match cmd {
        AdjudicateCmd::Open { claim_id } => {
            let round_id = engine.open_adjudication(&claim_id)?;
            round_out(&engine, &round_id, format!("opened {round_id}"))?
        }
        AdjudicateCmd::Commit(v) => {
            let (adjuster, vote) = vote_from(ctx, &v)?;
            engine.adjudication_mut().commit(&v.round_id, &adjuster, vote.commitment(&v.round_id, &adjuster))?;
            round_out(&engine, &v.round_id, format!("{} committed", adjuster.0))?
        }
        AdjudicateCmd::Reveal(v) => {
            let (adjuster, vote) = vote_from(ctx, &v)?;
            engine.adjudication_mut().reveal(&v.round_id, &adjuster, vote)?;
            round_out(&engine, &v.round_id, format!("{} revealed", adjuster.0))?
        }
        AdjudicateCmd::Close { round_id } => {
            let adj = engine.adjudication_mut();
            let heading = if adj.round(&round_id)?.phase == crate::adjudication::Phase::Commit {
                adj.close_commits(&round_id)?;
                "commits closed"
            } else {
                adj.close_reveals(&round_id)?;
                "reveals closed"
            };
            round_out(&engine, &round_id, heading.to_owned())?
        }
        AdjudicateCmd::Finalize { claim_id } => {
            let fin = engine.finalize_adjudication(&claim_id)?;
            let claim = engine.claim(&claim_id)?;
            let transcript = engine.adjudication().round(&fin.round_id)?.transcript();
            Output::pretty(
                json!({ "finalization": fin, "transcript": transcript, "claim_state": claim.state }),
                format!("{} finalized; claim {} is {}", fin.round_id, claim_id, claim.state),
            )
        }
        AdjudicateCmd::Show { round_id } => round_out(&engine, &round_id, String::new())?,
    };
    ctx.save(&engine)?;
    Ok(out)
}

fn vote_from(ctx: &Ctx, v: &VoteArgs) -> Result<(AdjusterId, Vote), CliError> {
    let salt = match &v.salt {
        Some(s) => parse_salt(s)?,
        None => ctx.default_salt(&v.round_id, &v.adjuster),
    };
    let vote = Vote {
        validity: v.validity,
        amount: if v.validity { v.amount } else { 0 },
        salt,
    };
    Ok((AdjusterId(v.adjuster.clone()), vote))
}
