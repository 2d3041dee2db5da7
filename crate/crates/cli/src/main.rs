//! `aa` — scriptable front end for attested model benchmarking.
//!
//! Commands are grouped by the role that runs them (provider, auditor,
//! user, regulator, operator); each maps 1:1 onto a library operation.
//! Exit codes: 0 success/Verified, 1 verification rejected, 2 usage error,
//! 3 protocol or I/O failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_core::SeedableRng;

use aa_core::attestation::{AttestationDocument, TrustedRegistry};
use aa_core::crypto::hash;
use aa_core::enclave::{measure_image, EnclaveImage, SimulatedTee, TeeBackend, SIMULATED_BACKEND_ID};
use aa_core::fixtures;
use aa_core::harness::{
    dataset_from_jsonl, package_audit, token_stats, AuditCode, BenchmarkType,
};
use aa_core::model::generate::GenerationRecord;
use aa_core::model::ModelArtifact;
use aa_core::protocols::{
    attestable_audit, inference_session, prepare, regulator_check, register_image, user_verify,
    AuditPolicy, AuditorContext, ProviderContext, UserContext, Verdict,
};
use aa_core::translog::service::{LogService, RemoteLog, LOG_ADDR_ENV};
use aa_core::translog::{LogStore, TransparencyLog};

const LIMITS_NOTE: &str =
    "Note: this prototype intentionally omits replay prevention and key rotation.";

#[derive(Parser)]
#[command(name = "aa", version, about = "Confidential, verifiable AI benchmarking in a simulated TEE")]
#[command(after_help = LIMITS_NOTE)]
struct Cli {
    /// Output style: human text or machine-parseable key=value lines.
    #[arg(long, global = true, value_enum, default_value_t = OutputMode::Text)]
    output: OutputMode,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputMode {
    Text,
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Operator: transparency log service and Merkle queries.
    #[command(subcommand)]
    Log(LogCommand),
    /// Operator: measure an enclave base image.
    #[command(subcommand)]
    Image(ImageCommand),
    /// Regulator/operator: manage the trusted-PCR registry.
    #[command(subcommand)]
    Registry(RegistryCommand),
    /// Provider: build, hash, and quantize model artifacts.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Auditor: package audit code and datasets.
    #[command(subcommand)]
    Bundle(BundleCommand),
    /// Provider: run the model preparation protocol (quantize-and-attest).
    Prepare(PrepareArgs),
    /// Provider+auditor: run the attestable audit protocol.
    Audit(AuditArgs),
    /// User: run one verified inference session.
    Infer(InferArgs),
    /// User: verify a response against its attestation and the log.
    Verify(VerifyArgs),
    /// Regulator: validate a disclosed (prompt, response, attestation).
    RegulatorCheck(RegulatorArgs),
    /// Operator: reports over recorded generations.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Subcommand)]
enum LogCommand {
    /// Serve the append-only log over the line protocol.
    Serve {
        /// Backing file for the log.
        #[arg(long)]
        path: PathBuf,
        /// Listen address, e.g. 127.0.0.1:7878.
        #[arg(long)]
        listen: String,
    },
    /// Print the current tree size and Merkle root.
    Root(LogRef),
    /// Fetch one entry.
    Get {
        #[command(flatten)]
        log: LogRef,
        index: u64,
    },
    /// Find entries binding a digest (hex).
    Scan {
        #[command(flatten)]
        log: LogRef,
        digest: String,
    },
}

#[derive(Args)]
struct LogRef {
    /// Log endpoint: a file path or host:port (defaults to $AA_LOG_ADDR).
    #[arg(long)]
    log: Option<String>,
}

#[derive(Subcommand)]
enum ImageCommand {
    /// Measure an image file (or build one from parts) and print its PCRs.
    Measure {
        /// Existing canonical image file.
        #[arg(long, conflicts_with_all = ["image_id", "config_file"])]
        image: Option<PathBuf>,
        /// Code identifier for a new image.
        #[arg(long, requires = "config_file")]
        image_id: Option<String>,
        /// Configuration blob for a new image.
        #[arg(long)]
        config_file: Option<PathBuf>,
        /// Write the canonical image bytes here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit the built-in demo image.
        #[arg(long, conflicts_with_all = ["image", "image_id"])]
        demo: bool,
    },
}

#[derive(Subcommand)]
enum RegistryCommand {
    /// Trust an image's PCRs (and the simulated vendor key).
    Trust {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value = "image")]
        label: String,
        /// Seed of the simulated platform vendor key.
        #[arg(long, default_value_t = fixtures::PLATFORM_SEED)]
        platform_seed: u64,
        /// Also publish the image to this log endpoint.
        #[arg(long)]
        publish: Option<String>,
    },
    /// Revoke an image's PCRs; verification against them fails afterwards.
    Revoke {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Write the bundled deterministic demo model.
    Build {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a model artifact's identity digest.
    Hash {
        #[arg(long)]
        model: PathBuf,
    },
    /// Quantize an f32 model to k-bit precision.
    Quantize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        bits: u8,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum BundleCommand {
    /// Package a benchmark descriptor and JSONL dataset into a bundle.
    Build {
        /// classification | summarization | toxicity
        #[arg(long)]
        benchmark: String,
        /// Line-delimited JSON records (see README for field names).
        #[arg(long, required_unless_present = "demo")]
        dataset: Option<PathBuf>,
        /// Use the built-in fixture dataset instead of a file.
        #[arg(long)]
        demo: bool,
        #[arg(long)]
        out: PathBuf,
        /// Sampling overrides (defaults follow the task).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        temp: Option<f64>,
        #[arg(long)]
        top_p: Option<f64>,
        #[arg(long)]
        n_len: Option<u32>,
        #[arg(long)]
        context_size: Option<u32>,
    },
}

#[derive(Args)]
struct ProtocolCommon {
    /// Enclave base image file.
    #[arg(long)]
    image: PathBuf,
    /// Trusted-PCR registry file.
    #[arg(long)]
    registry: PathBuf,
    /// Log endpoint: file path or host:port (defaults to $AA_LOG_ADDR).
    #[arg(long)]
    log: Option<String>,
    /// Deterministic run seed; omit for fresh randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Seed of the simulated platform vendor key.
    #[arg(long, default_value_t = fixtures::PLATFORM_SEED)]
    platform_seed: u64,
}

#[derive(Args)]
struct PrepareArgs {
    #[command(flatten)]
    common: ProtocolCommon,
    /// Full-precision model artifact.
    #[arg(long)]
    model: PathBuf,
    /// Quantization width: 2, 4, or 8.
    #[arg(long, default_value_t = 4)]
    bits: u8,
    /// Where to write the quantized model the enclave returns.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    common: ProtocolCommon,
    /// Model artifact to audit (typically the prepared quantized model).
    #[arg(long)]
    model: PathBuf,
    /// Audit bundle file.
    #[arg(long)]
    bundle: PathBuf,
    /// Write per-generation records (JSONL) for `report tokens`.
    #[arg(long)]
    records_out: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    common: ProtocolCommon,
    /// Model artifact the provider serves.
    #[arg(long)]
    model: PathBuf,
    /// The user's prompt.
    #[arg(long)]
    prompt: String,
    /// Where to write the returned attestation document.
    #[arg(long)]
    doc_out: PathBuf,
    /// Where to write the response text (also printed).
    #[arg(long)]
    response_out: Option<PathBuf>,
    #[arg(long)]
    gen_seed: Option<u64>,
    #[arg(long)]
    temp: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    n_len: Option<u32>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    log: Option<String>,
    #[arg(long)]
    prompt: String,
    /// Response text, or @path to read it from a file.
    #[arg(long)]
    response: String,
    /// Attestation document file from `infer`.
    #[arg(long)]
    doc: PathBuf,
}

#[derive(Args)]
struct RegulatorArgs {
    #[command(flatten)]
    verify: VerifyArgs,
    /// Minimum acceptable accuracy for discrete-label audits.
    #[arg(long)]
    min_accuracy: Option<f64>,
    /// Minimum acceptable mean similarity for summarization audits.
    #[arg(long)]
    min_similarity: Option<f64>,
    /// Maximum acceptable toxicity rate.
    #[arg(long)]
    max_toxic_rate: Option<f64>,
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Token-count distribution and aggregate throughput from a records file.
    Tokens {
        /// JSONL records written by `audit --records-out`.
        #[arg(long)]
        records: PathBuf,
    },
}

struct Failure {
    message: String,
    code: u8,
}

impl Failure {
    fn io(message: impl std::fmt::Display) -> Self {
        Failure {
            message: message.to_string(),
            code: 3,
        }
    }
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            message: e.to_string(),
            code: 3,
        }
    }
}

struct Printer {
    mode: OutputMode,
}

impl Printer {
    fn kv(&self, key: &str, value: impl std::fmt::Display) {
        match self.mode {
            OutputMode::Structured => println!("{key}={value}"),
            OutputMode::Text => println!("{key}: {value}"),
        }
    }

    fn block(&self, text: &str) {
        print!("{text}");
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn load_registry(path: &Path) -> Result<TrustedRegistry, Failure> {
    if !path.exists() {
        return Ok(TrustedRegistry::default());
    }
    let raw = fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    TrustedRegistry::from_json(&raw).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn save_registry(path: &Path, registry: &TrustedRegistry) -> Result<(), Failure> {
    write_file(path, registry.to_json().as_bytes())
}

fn load_image(path: &Path) -> Result<EnclaveImage, Failure> {
    let raw = read_file(path)?;
    EnclaveImage::decode(&raw).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

/// Resolve a log endpoint: explicit flag, then $AA_LOG_ADDR, then error.
/// A value with a colon is a socket address; anything else is a file path.
fn open_log(flag: &Option<String>) -> Result<Box<dyn LogStore>, Failure> {
    let target = match flag.clone().or_else(|| std::env::var(LOG_ADDR_ENV).ok()) {
        Some(t) => t,
        None => {
            return Err(Failure::io(format!(
                "no log endpoint: pass --log or set {LOG_ADDR_ENV}"
            )))
        }
    };
    if let Some(addr) = target.strip_prefix("tcp://") {
        return Ok(Box::new(RemoteLog::connect(addr)));
    }
    if target.contains(':') {
        return Ok(Box::new(RemoteLog::connect(&target)));
    }
    Ok(Box::new(TransparencyLog::open(Path::new(&target))?))
}

fn party_rng(seed: Option<u64>) -> rand_chacha::ChaCha20Rng {
    match seed {
        Some(s) => rand_chacha::ChaCha20Rng::seed_from_u64(s),
        None => rand_chacha::ChaCha20Rng::from_entropy(),
    }
}

fn backend_for(common: &ProtocolCommon) -> Box<SimulatedTee> {
    let session_seed = match common.seed {
        Some(s) => s.wrapping_add(0x5E55),
        None => rand_core::RngCore::next_u64(&mut rand_chacha::ChaCha20Rng::from_entropy()),
    };
    Box::new(SimulatedTee::new(common.platform_seed, session_seed))
}

fn response_text(arg: &str) -> Result<String, Failure> {
    if let Some(path) = arg.strip_prefix('@') {
        return Ok(String::from_utf8_lossy(&read_file(Path::new(path))?).into_owned());
    }
    Ok(arg.to_string())
}

fn records_to_jsonl(records: &[GenerationRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        out.push_str(&format!(
            "{{\"prompt_tokens\":{},\"output_tokens\":{},\"decode_seconds\":{}}}\n",
            rec.prompt_tokens, rec.output_tokens, rec.decode_seconds
        ));
    }
    out
}

fn records_from_jsonl(text: &str) -> Result<Vec<GenerationRecord>, Failure> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Failure::io(format!("records line {}: {e}", lineno + 1)))?;
        let field = |name: &str| -> Result<f64, Failure> {
            value
                .get(name)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| Failure::io(format!("records line {}: missing {name}", lineno + 1)))
        };
        let output_tokens = field("output_tokens")? as u64;
        let decode_seconds = field("decode_seconds")?;
        records.push(GenerationRecord {
            prompt_tokens: field("prompt_tokens")? as u64,
            output_tokens,
            output_ids: Vec::new(),
            output_text: String::new(),
            decode_seconds,
            tokens_per_second: GenerationRecord::tokens_per_second_of(output_tokens, decode_seconds),
        });
    }
    Ok(records)
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    let printer = Printer { mode: cli.output };
    match cli.command {
        Command::Log(cmd) => run_log(cmd, &printer),
        Command::Image(cmd) => run_image(cmd, &printer),
        Command::Registry(cmd) => run_registry(cmd, &printer),
        Command::Model(cmd) => run_model(cmd, &printer),
        Command::Bundle(cmd) => run_bundle(cmd, &printer),
        Command::Prepare(args) => run_prepare(args, &printer),
        Command::Audit(args) => run_audit_cmd(args, &printer),
        Command::Infer(args) => run_infer(args, &printer),
        Command::Verify(args) => run_verify(args, &printer),
        Command::RegulatorCheck(args) => run_regulator(args, &printer),
        Command::Report(cmd) => run_report(cmd, &printer),
    }
}

fn run_log(cmd: LogCommand, printer: &Printer) -> Result<ExitCode, Failure> {
    match cmd {
        LogCommand::Serve { path, listen } => {
            let log = TransparencyLog::open(&path)?;
            printer.kv("serving", format!("{} on {listen}", path.display()));
            LogService::run_blocking(log, &listen)?;
            Ok(ExitCode::SUCCESS)
        }
        LogCommand::Root(logref) => {
            let mut log = open_log(&logref.log)?;
            let (size, root) = log.root()?;
            printer.kv("size", size);
            printer.kv("root", root.to_hex());
            Ok(ExitCode::SUCCESS)
        }
        LogCommand::Get { log, index } => {
            let mut store = open_log(&log.log)?;
            let entry = store.get(index)?;
            printer.kv("index", entry.index);
            printer.kv("kind", entry.kind.name());
            printer.kv("leaf", entry.leaf_hash.to_hex());
            printer.kv("payload_bytes", entry.payload.len());
            if let Ok(doc) = AttestationDocument::decode(&entry.payload) {
                printer.block(&doc.render_text());
            }
            Ok(ExitCode::SUCCESS)
        }
        LogCommand::Scan { log, digest } => {
            let mut store = open_log(&log.log)?;
            let digest = aa_core::crypto::Digest::from_hex(&digest)?;
            let hits = store.scan_digest(&digest)?;
            printer.kv("matches", hits.len());
            for entry in hits {
                printer.kv("entry", format!("{} {}", entry.index, entry.kind.name()));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_image(cmd: ImageCommand, printer: &Printer) -> Result<ExitCode, Failure> {
    match cmd {
        ImageCommand::Measure {
            image,
            image_id,
            config_file,
            out,
            demo,
        } => {
            let image = if demo {
                fixtures::demo_image()
            } else if let Some(path) = image {
                load_image(&path)?
            } else if let (Some(id), Some(config)) = (image_id, config_file) {
                EnclaveImage {
                    image_id: id,
                    config: read_file(&config)?,
                }
            } else {
                return Err(Failure {
                    message: "pass --image, --demo, or --image-id with --config-file".into(),
                    code: 2,
                });
            };
            if let Some(path) = out {
                write_file(&path, &image.encode())?;
            }
            let pcrs = measure_image(&image, SIMULATED_BACKEND_ID);
            printer.kv("image_id", &image.image_id);
            printer.kv("pcr0", pcrs.pcr0.to_hex());
            printer.kv("pcr1", pcrs.pcr1.to_hex());
            printer.kv("pcr2", pcrs.pcr2.to_hex());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_registry(cmd: RegistryCommand, printer: &Printer) -> Result<ExitCode, Failure> {
    match cmd {
        RegistryCommand::Trust {
            registry,
            image,
            label,
            platform_seed,
            publish,
        } => {
            let image = load_image(&image)?;
            let mut reg = load_registry(&registry)?;
            let vendor = SimulatedTee::new(platform_seed, 0).vendor_public_key();
            reg.trust_vendor(SIMULATED_BACKEND_ID, vendor);
            let pcrs = measure_image(&image, SIMULATED_BACKEND_ID);
            reg.trust_image(&label, pcrs);
            save_registry(&registry, &reg)?;
            printer.kv("trusted", &label);
            printer.kv("pcr0", pcrs.pcr0.to_hex());
            if let Some(target) = publish {
                let mut log = open_log(&Some(target))?;
                let (index, _) = register_image(log.as_mut(), &image)?;
                printer.kv("published_index", index);
            }
            Ok(ExitCode::SUCCESS)
        }
        RegistryCommand::Revoke { registry, image } => {
            let image = load_image(&image)?;
            let mut reg = load_registry(&registry)?;
            let pcrs = measure_image(&image, SIMULATED_BACKEND_ID);
            reg.revoke_image(pcrs);
            save_registry(&registry, &reg)?;
            printer.kv("revoked", pcrs.pcr0.to_hex());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_model(cmd: ModelCommand, printer: &Printer) -> Result<ExitCode, Failure> {
    match cmd {
        ModelCommand::Build { out } => {
            let model = fixtures::toy_model();
            write_file(&out, &model.serialize())?;
            printer.kv("model", out.display());
            printer.kv("hash", model.model_hash().to_hex());
            Ok(ExitCode::SUCCESS)
        }
        ModelCommand::Hash { model } => {
            let bytes = read_file(&model)?;
            // Validate the artifact before hashing its canonical form.
            ModelArtifact::load(&bytes)?;
            printer.kv("hash", hash(&bytes).to_hex());
            Ok(ExitCode::SUCCESS)
        }
        ModelCommand::Quantize { model, bits, out } => {
            let artifact = ModelArtifact::load(&read_file(&model)?)?;
            let quantized = artifact.quantize(bits)?;
            write_file(&out, &quantized.serialize())?;
            printer.kv("precision", quantized.precision);
            printer.kv("hash", quantized.model_hash().to_hex());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_bundle(cmd: BundleCommand, printer: &Printer) -> Result<ExitCode, Failure> {
    match cmd {
        BundleCommand::Build {
            benchmark,
            dataset,
            demo,
            out,
            seed,
            temp,
            top_p,
            n_len,
            context_size,
        } => {
            let benchmark = BenchmarkType::from_name(&benchmark).ok_or(Failure {
                message: format!("unknown benchmark {benchmark:?}"),
                code: 2,
            })?;
            let mut bundle = if demo {
                match benchmark {
                    BenchmarkType::DiscreteLabel => fixtures::classification_bundle(),
                    BenchmarkType::TextSimilarity => fixtures::summarization_bundle(),
                    BenchmarkType::ClassifierJudged => fixtures::toxicity_bundle(),
                }
            } else {
                let path = dataset.expect("clap enforces dataset unless --demo");
                let text = String::from_utf8_lossy(&read_file(&path)?).into_owned();
                let records = dataset_from_jsonl(benchmark, &text)?;
                package_audit(AuditCode::new(benchmark), records)?
            };
            if let Some(v) = seed {
                bundle.code.sampling.seed = v;
            }
            if let Some(v) = temp {
                bundle.code.sampling.temp = v;
            }
            if let Some(v) = top_p {
                bundle.code.sampling.top_p = v;
            }
            if let Some(v) = n_len {
                bundle.code.sampling.n_len = v;
            }
            if let Some(v) = context_size {
                bundle.code.sampling.context_size = v;
            }
            write_file(&out, &bundle.encode())?;
            printer.kv("bundle", out.display());
            printer.kv("records", bundle.dataset.len());
            printer.kv("hash", bundle.bundle_hash().to_hex());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_prepare(args: PrepareArgs, printer: &Printer) -> Result<ExitCode, Failure> {
    let registry = load_registry(&args.common.registry)?;
    let image = load_image(&args.common.image)?;
    let mut log = open_log(&args.common.log)?;
    let provider = ProviderContext {
        registry: &registry,
        model_bytes: read_file(&args.model)?,
    };
    let mut rng = party_rng(args.common.seed);
    let backend = backend_for(&args.common);
    let outcome = prepare(&provider, &image, backend, log.as_mut(), args.bits, &mut rng)?;
    write_file(&args.out, &outcome.quantized_model)?;
    printer.kv("model_hash", outcome.model_digest.to_hex());
    printer.kv("quantized_hash", outcome.quantized_digest.to_hex());
    printer.kv("log_index", outcome.log_index);
    printer.kv("quantized_model", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn run_audit_cmd(args: AuditArgs, printer: &Printer) -> Result<ExitCode, Failure> {
    let registry = load_registry(&args.common.registry)?;
    let image = load_image(&args.common.image)?;
    let mut log = open_log(&args.common.log)?;
    let provider = ProviderContext {
        registry: &registry,
        model_bytes: read_file(&args.model)?,
    };
    let auditor = AuditorContext {
        registry: &registry,
        bundle_bytes: read_file(&args.bundle)?,
    };
    let mut rng = party_rng(args.common.seed);
    let backend = backend_for(&args.common);
    let outcome = attestable_audit(&provider, &auditor, &image, backend, log.as_mut(), &mut rng)?;
    if let Some(path) = args.records_out {
        write_file(&path, records_to_jsonl(&outcome.records).as_bytes())?;
    }
    printer.kv("model_hash", outcome.model_digest.to_hex());
    printer.kv("bundle_hash", outcome.bundle_digest.to_hex());
    printer.kv("result_index", outcome.result_index);
    printer.kv("attestation_index", outcome.attestation_index);
    let stats = token_stats(&outcome.records);
    printer.block(&aa_core::report::render_audit_summary(&outcome.result, Some(&stats)));
    Ok(ExitCode::SUCCESS)
}

fn run_infer(args: InferArgs, printer: &Printer) -> Result<ExitCode, Failure> {
    let registry = load_registry(&args.common.registry)?;
    let image = load_image(&args.common.image)?;
    let mut log = open_log(&args.common.log)?;
    let provider = ProviderContext {
        registry: &registry,
        model_bytes: read_file(&args.model)?,
    };
    let mut params = fixtures::inference_params();
    if let Some(v) = args.gen_seed {
        params.seed = v;
    }
    if let Some(v) = args.temp {
        params.temp = v;
    }
    if let Some(v) = args.top_p {
        params.top_p = v;
    }
    if let Some(v) = args.n_len {
        params.n_len = v;
    }
    let user = UserContext {
        registry: &registry,
        prompt: args.prompt.clone(),
        params,
    };
    let mut rng = party_rng(args.common.seed);
    let backend = backend_for(&args.common);
    let outcome = inference_session(&provider, &user, &image, backend, log.as_mut(), &mut rng)?;
    write_file(&args.doc_out, &outcome.inference_doc.encode())?;
    if let Some(path) = args.response_out {
        write_file(&path, outcome.response.as_bytes())?;
    }
    printer.kv("response", &outcome.response);
    printer.kv("doc", args.doc_out.display());
    printer.kv("output_tokens", outcome.generation.output_tokens);
    Ok(ExitCode::SUCCESS)
}

fn run_verify(args: VerifyArgs, printer: &Printer) -> Result<ExitCode, Failure> {
    let registry = load_registry(&args.registry)?;
    let mut log = open_log(&args.log)?;
    let response = response_text(&args.response)?;
    let doc = AttestationDocument::decode(&read_file(&args.doc)?)?;
    let verdict = user_verify(&args.prompt, &response, &doc, log.as_mut(), &registry);
    match verdict {
        Verdict::Verified(disclosure) => {
            printer.kv("verdict", "Verified");
            printer.kv("image", &disclosure.image_label);
            printer.kv("model_digest", disclosure.model_digest.to_hex());
            printer.kv("audit_index", disclosure.audit_index);
            printer.kv("result_index", disclosure.result_index);
            let (metric, value) = disclosure.result.headline();
            printer.kv(metric, format!("{value:.4}"));
            printer.block(&String::from_utf8_lossy(&disclosure.result.canonical_bytes()));
            Ok(ExitCode::SUCCESS)
        }
        Verdict::Rejected(reason) => {
            printer.kv("verdict", format!("Rejected({reason})"));
            Ok(ExitCode::from(1))
        }
    }
}

fn run_regulator(args: RegulatorArgs, printer: &Printer) -> Result<ExitCode, Failure> {
    let registry = load_registry(&args.verify.registry)?;
    let mut log = open_log(&args.verify.log)?;
    let response = response_text(&args.verify.response)?;
    let doc = AttestationDocument::decode(&read_file(&args.verify.doc)?)?;
    let policy = AuditPolicy {
        min_accuracy: args.min_accuracy,
        min_similarity: args.min_similarity,
        max_toxic_rate: args.max_toxic_rate,
    };
    let report = regulator_check(
        &args.verify.prompt,
        &response,
        &doc,
        log.as_mut(),
        &registry,
        &policy,
    );
    printer.block(&report.report);
    match report.verdict {
        Verdict::Verified(_) => Ok(ExitCode::SUCCESS),
        Verdict::Rejected(_) => Ok(ExitCode::from(1)),
    }
}

fn run_report(cmd: ReportCommand, printer: &Printer) -> Result<ExitCode, Failure> {
    match cmd {
        ReportCommand::Tokens { records } => {
            let text = String::from_utf8_lossy(&read_file(&records)?).into_owned();
            let records = records_from_jsonl(&text)?;
            let stats = token_stats(&records);
            printer.block(&aa_core::report::render_token_histogram(&stats));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
