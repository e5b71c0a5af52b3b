//! Command-line front end.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use dsa_policy_core::dsl::{parse_policy_doc, serialize_policy_doc, DslError};
use dsa_policy_core::geo::RegionStore;
use dsa_policy_core::model::SpectrumRequest;
use dsa_policy_core::reasoner::evaluate;
use dsa_policy_core::store::Snapshot;
use dsa_policy_core::taxonomy::Taxonomy;

use crate::batch::bench;
use crate::capture::parse_capture_csv;
use crate::inputs::{is_csv, load_regions, load_requests, load_snapshot, load_taxonomy, read_text, LoadError};
use crate::regions::regions_to_geojson;
use crate::service::{serve, AppState, DEFAULT_BATCH_CAP};
use crate::shared::SharedStore;
use crate::synth;
use crate::taxonomy_file::taxonomy_records;
use crate::wire::{ApiError, BatchItem, RequestJson, ResultJson};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_MISMATCH: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "dsa-policy", version, about = "Spectrum access policy engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a policy document (DSL, or capture CSV by extension) and check its references.
    Validate {
        file: PathBuf,
        /// Region GeoJSON; defaults to the bundled training ranges.
        #[arg(long)]
        regions: Option<PathBuf>,
        /// Taxonomy JSON; defaults to the bundled device taxonomy.
        #[arg(long)]
        taxonomy: Option<PathBuf>,
    },
    /// Evaluate a JSON-lines request file offline.
    Evaluate {
        /// Policy files, loaded in order; repeat the flag for several.
        #[arg(long, required = true)]
        policies: Vec<PathBuf>,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long)]
        requests: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Time batch evaluation on a worker pool.
    Bench {
        #[arg(long, required = true)]
        policies: Vec<PathBuf>,
        #[arg(long)]
        requests: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        /// Compare parallel results against a sequential run.
        #[arg(long)]
        verify: bool,
    },
    /// Write a seeded synthetic policy set, request file, taxonomy and regions.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "policies", default_value_t = 165)]
        policy_count: usize,
        #[arg(long = "requests", default_value_t = 100)]
        request_count: usize,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "DSA_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Append-only store log; in-memory when omitted.
        #[arg(long, env = "DSA_STORE")]
        store: Option<PathBuf>,
        #[arg(long, env = "DSA_TAXONOMY")]
        taxonomy: Option<PathBuf>,
        #[arg(long, env = "DSA_REGIONS")]
        regions: Option<PathBuf>,
        #[arg(long, env = "DSA_BATCH_CAP", default_value_t = DEFAULT_BATCH_CAP)]
        batch_cap: usize,
        #[arg(long, env = "DSA_WORKERS", default_value_t = 4)]
        workers: usize,
    },
}

fn load_failure(err: &mut dyn Write, e: &LoadError) -> u8 {
    let _ = writeln!(err, "error: {e}");
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_INVALID
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    match cli.command {
        Command::Validate { file, regions, taxonomy } => validate(&file, regions.as_deref(), taxonomy.as_deref(), out, err),
        Command::Evaluate {
            policies,
            taxonomy,
            regions,
            requests,
            format,
        } => match load_world(&policies, taxonomy.as_deref(), regions.as_deref()) {
            Err(e) => load_failure(err, &e),
            Ok(snap) => match load_requests(&requests) {
                Err(e) => load_failure(err, &e),
                Ok(reqs) => {
                    report(&snap, reqs, format, out);
                    EXIT_OK
                }
            },
        },
        Command::Bench {
            policies,
            requests,
            taxonomy,
            regions,
            workers,
            repeat,
            verify,
        } => run_bench(&policies, &requests, taxonomy.as_deref(), regions.as_deref(), workers, repeat, verify, out, err),
        Command::Gen {
            out: dir,
            seed,
            policy_count,
            request_count,
        } => match generate(&dir, seed, policy_count, request_count) {
            Ok(()) => {
                let _ = writeln!(out, "wrote {policy_count} policies and {request_count} requests to {}", dir.display());
                EXIT_OK
            }
            Err(e) => load_failure(err, &e),
        },
        Command::Serve {
            addr,
            store,
            taxonomy,
            regions,
            batch_cap,
            workers,
        } => run_serve(addr, store, taxonomy, regions, batch_cap, workers, err),
    }
}

fn load_world(policies: &[PathBuf], taxonomy: Option<&Path>, regions: Option<&Path>) -> Result<Snapshot, LoadError> {
    let tax = load_taxonomy(taxonomy)?;
    let regs = load_regions(regions)?;
    load_snapshot(policies, tax, regs)
}

fn dsl_diagnostic(path: &Path, e: &DslError) -> String {
    format!("{}:{}:{}: {}", path.display(), e.pos.line, e.pos.column, e.kind)
}

fn validate(file: &Path, regions: Option<&Path>, taxonomy: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let (tax, regs): (Taxonomy, RegionStore) = match (load_taxonomy(taxonomy), load_regions(regions)) {
        (Ok(t), Ok(r)) => (t, r),
        (Err(e), _) | (_, Err(e)) => return load_failure(err, &e),
    };
    let text = match read_text(file) {
        Ok(t) => t,
        Err(e) => return load_failure(err, &e),
    };
    let doc = if is_csv(file) {
        match parse_capture_csv(&text, &regs, &|_| false) {
            Ok(d) => d,
            Err(e) => {
                let _ = writeln!(err, "{}: {e}", file.display());
                return EXIT_INVALID;
            }
        }
    } else {
        match parse_policy_doc(&text) {
            Ok(d) => d,
            Err(e) => {
                let _ = writeln!(err, "{}", dsl_diagnostic(file, &e));
                return EXIT_INVALID;
            }
        }
    };
    if doc.is_empty() {
        let _ = writeln!(err, "warning: {}: document contains zero policies", file.display());
        return EXIT_OK;
    }
    let policies = doc.policies.iter().map(|p| (p.id.clone(), p.clone())).collect();
    match Snapshot::build(1, policies, Arc::new(tax), Arc::new(regs)) {
        Ok(snap) => {
            for term in snap.pending_terms() {
                let _ = writeln!(err, "warning: class '{term}' is not in the taxonomy; accepted as pending curation");
            }
            let _ = writeln!(out, "{}: {} policies OK", file.display(), snap.policies().len());
            EXIT_OK
        }
        Err(e) => {
            let origin = match &e {
                dsa_policy_core::StoreError::UnknownRegion { policy, .. }
                | dsa_policy_core::StoreError::UnknownParent { policy, .. }
                | dsa_policy_core::StoreError::Invalid { policy, .. } => doc.origins.get(policy),
                _ => None,
            };
            match origin {
                Some(pos) => {
                    let _ = writeln!(err, "{}:{}:{}: {e}", file.display(), pos.line, pos.column);
                }
                None => {
                    let _ = writeln!(err, "{}: {e}", file.display());
                }
            }
            EXIT_INVALID
        }
    }
}

/// JSON lines (one per request) or a fixed-width table.
pub fn report(
    snap: &Snapshot,
    requests: Vec<Result<SpectrumRequest, crate::inputs::RequestLineError>>,
    format: Format,
    out: &mut dyn Write,
) {
    let items: Vec<BatchItem> = requests
        .into_iter()
        .map(|r| match r {
            Ok(req) => match evaluate(&req, snap) {
                Ok(res) => BatchItem::Ok(ResultJson::new(&res, snap.version())),
                Err(e) => BatchItem::Err {
                    request_id: Some(req.id),
                    error: ApiError::from(&e),
                },
            },
            Err(e) => {
                let mut api = ApiError::from(&e.error);
                api.detail = Some(serde_json::json!({ "field": e.error.field, "line": e.line }));
                BatchItem::Err {
                    request_id: e.request_id,
                    error: api,
                }
            }
        })
        .collect();
    match format {
        Format::Json => {
            for item in &items {
                let _ = writeln!(out, "{}", serde_json::to_string(item).expect("serializable"));
            }
        }
        Format::Table => {
            let _ = writeln!(out, "{:<20} {:<22} {:<20} REASONS", "REQUEST", "EFFECT", "TRIGGER");
            for item in &items {
                match item {
                    BatchItem::Ok(r) => {
                        let effect = if r.default_deny { "Deny (default)".to_string() } else { r.effect.clone() };
                        let reasons: Vec<&str> = r.reasons.iter().map(|x| x.text.as_str()).collect();
                        let _ = writeln!(
                            out,
                            "{:<20} {:<22} {:<20} {}",
                            r.request_id,
                            effect,
                            r.triggering_policy.as_deref().unwrap_or("-"),
                            reasons.join("; ")
                        );
                    }
                    BatchItem::Err { request_id, error } => {
                        let _ = writeln!(
                            out,
                            "{:<20} {:<22} {:<20} {}",
                            request_id.as_deref().unwrap_or("?"),
                            "error",
                            "-",
                            error.message
                        );
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_bench(
    policies: &[PathBuf],
    requests: &Path,
    taxonomy: Option<&Path>,
    regions: Option<&Path>,
    workers: usize,
    repeat: usize,
    verify: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> u8 {
    let snap = match load_world(policies, taxonomy, regions) {
        Ok(s) => s,
        Err(e) => return load_failure(err, &e),
    };
    let reqs = match load_requests(requests) {
        Ok(r) => r,
        Err(e) => return load_failure(err, &e),
    };
    let mut valid = Vec::with_capacity(reqs.len());
    for r in reqs {
        match r {
            Ok(r) => valid.push(r),
            Err(e) => {
                let _ = writeln!(err, "{}:{}: {}", requests.display(), e.line, e.error);
                return EXIT_INVALID;
            }
        }
    }
    let report = match bench(&valid, &snap, workers, repeat, verify) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker pool: {e}");
            return EXIT_IO;
        }
    };
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("serializable"));
    match &report.mismatches {
        Some(m) if !m.is_empty() => {
            let _ = writeln!(err, "verification failed: {} mismatching requests: {}", m.len(), m.join(", "));
            EXIT_MISMATCH
        }
        _ => EXIT_OK,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), LoadError> {
    std::fs::write(path, contents).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `policies.policy`, `requests.jsonl`, `taxonomy.json` and `regions.geojson` into `dir`.
pub fn generate(dir: &Path, seed: u64, policy_count: usize, request_count: usize) -> Result<(), LoadError> {
    std::fs::create_dir_all(dir).map_err(|source| LoadError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let tax = dsa_policy_core::fixtures::taxonomy();
    let regs = dsa_policy_core::fixtures::regions();
    let policies = synth::policies(seed, policy_count, &tax, &regs);
    let requests = synth::requests(seed, request_count, &tax, &regs);
    write_file(&dir.join("policies.policy"), &serialize_policy_doc(&policies))?;
    let lines: String = requests
        .iter()
        .map(|r| serde_json::to_string(&RequestJson::from_request(r)).expect("serializable") + "\n")
        .collect();
    write_file(&dir.join("requests.jsonl"), &lines)?;
    write_file(
        &dir.join("taxonomy.json"),
        &(serde_json::to_string_pretty(&taxonomy_records(&tax)).expect("serializable") + "\n"),
    )?;
    write_file(
        &dir.join("regions.geojson"),
        &(serde_json::to_string_pretty(&regions_to_geojson(regs.iter())).expect("serializable") + "\n"),
    )?;
    Ok(())
}

fn run_serve(
    addr: SocketAddr,
    store: Option<PathBuf>,
    taxonomy: Option<PathBuf>,
    regions: Option<PathBuf>,
    batch_cap: usize,
    workers: usize,
    err: &mut dyn Write,
) -> u8 {
    let (tax, regs) = match (load_taxonomy(taxonomy.as_deref()), load_regions(regions.as_deref())) {
        (Ok(t), Ok(r)) => (Arc::new(t), Arc::new(r)),
        (Err(e), _) | (_, Err(e)) => return load_failure(err, &e),
    };
    let shared = match &store {
        None => SharedStore::in_memory(tax, regs),
        Some(path) => match SharedStore::open(path, tax, regs) {
            Ok(s) => s,
            Err(e) => {
                let _ = writeln!(err, "error: {}: {e}", path.display());
                return EXIT_INVALID;
            }
        },
    };
    let pool = match crate::batch::worker_pool(workers) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker pool: {e}");
            return EXIT_IO;
        }
    };
    let state = AppState::new(Arc::new(shared), batch_cap, pool);
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start runtime: {e}");
            return EXIT_IO;
        }
    };
    match runtime.block_on(serve(addr, state)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {addr}: {e}");
            EXIT_IO
        }
    }
}
