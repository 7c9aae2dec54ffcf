//! Command-line front end: `crawl`, `robots-check`, `sim` and `query`.
//!
//! Exit codes: 0 success, 1 domain error (one-line diagnostic on stderr),
//! 2 usage error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use politecrawl::engine::{crawl_cycle, CrawlConfig, CrawlError, CrawlOutcome};
use politecrawl::index::WordIndex;
use politecrawl::revisit::{simulate_policy, Policy};
use politecrawl::robots::{decide_access, parse_robots};
use politecrawl::simweb::{SimSource, SiteSpec};
use politecrawl::url::NormalizedUrl;
use politecrawl::{SystemClock, VirtualClock};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "politecrawl", version, about = "Polite web crawler and revisit-policy simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceKind {
    Live,
    Sim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Uniform,
    Proportional,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Uniform => Policy::Uniform,
            PolicyArg::Proportional => Policy::Proportional,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one crawl cycle and write the report plus an index dump next to it.
    Crawl {
        #[arg(long)]
        seed: String,
        #[arg(long)]
        agent: String,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        workers: u32,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        max_pages: Option<u64>,
        #[arg(long, value_enum, default_value_t = SourceKind::Live)]
        source: SourceKind,
        /// Site spec (JSON), required with `--source sim`.
        #[arg(long)]
        site: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check one path against a robots.txt file.
    RobotsCheck {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        agent: String,
        #[arg(long)]
        path: String,
    },
    /// Simulate a revisit policy and print the freshness/age table.
    Sim {
        #[arg(long)]
        site: PathBuf,
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long)]
        budget: u64,
        #[arg(long)]
        ticks: u64,
    },
    /// Keyword lookup against an index dump.
    Query {
        #[arg(long)]
        index: PathBuf,
        terms: Vec<String>,
    },
}

enum Failure {
    Usage(String),
    Domain(String),
}

type CmdResult = Result<(), Failure>;

fn domain(msg: impl std::fmt::Display) -> Failure {
    Failure::Domain(msg.to_string())
}

/// Index dump path for a report path: `report.jsonl` -> `report.index.jsonl`.
pub fn index_dump_path(report: &Path) -> PathBuf {
    report.with_extension("index.jsonl")
}

fn read_site(path: &Path) -> Result<SiteSpec, Failure> {
    let file = File::open(path).map_err(|e| domain(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| domain(format!("invalid site spec {}: {e}", path.display())))
}

fn write_outputs(outcome_report: &politecrawl::CrawlReport, index: Option<&WordIndex>, out: &Path) -> CmdResult {
    let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| domain(format!("cannot write {}: {e}", p.display())));
    let mut w = create(out)?;
    outcome_report
        .write_jsonl(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| domain(format!("cannot write {}: {e}", out.display())))?;
    if let Some(index) = index {
        let dump = index_dump_path(out);
        let mut w = create(&dump)?;
        index
            .write_dump(&mut w)
            .map_err(|e| domain(format!("cannot write {}: {e}", dump.display())))?;
        w.flush().map_err(|e| domain(format!("cannot write {}: {e}", dump.display())))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_crawl(
    seed: &str,
    agent: &str,
    workers: u32,
    max_pages: Option<u64>,
    source: SourceKind,
    site: Option<&Path>,
    out: &Path,
    stdout: &mut dyn Write,
) -> CmdResult {
    if source == SourceKind::Live && max_pages.is_none() {
        return Err(Failure::Usage("live crawls require --max-pages".into()));
    }
    if source == SourceKind::Sim && site.is_none() {
        return Err(Failure::Usage("--source sim requires --site".into()));
    }
    let seed_url = NormalizedUrl::parse(seed).map_err(|e| domain(format!("bad seed URL: {e}")))?;
    let mut config = CrawlConfig::new(seed_url, agent);
    config.workers = workers as usize;
    config.max_pages = max_pages.map(|m| m as usize);

    let result = match source {
        SourceKind::Sim => {
            let spec = read_site(site.expect("checked above"))?;
            let sim = SimSource::new(spec.generate().map_err(domain)?);
            crawl_cycle(&config, &sim, &VirtualClock::default())
        }
        SourceKind::Live => live_crawl(&config)?,
    };

    match result {
        Ok(CrawlOutcome { report, index, .. }) => {
            write_outputs(&report, Some(&index), out)?;
            let _ = writeln!(
                stdout,
                "visited {} pages ({} disallowed, {} out of domain, {} errors); report {}; index {}",
                report.visited.len(),
                report.skipped_disallowed.len(),
                report.skipped_out_of_domain.len(),
                report.errors.len(),
                out.display(),
                index_dump_path(out).display()
            );
            Ok(())
        }
        Err(e @ CrawlError::SeedDisallowed(_)) | Err(e @ CrawlError::SeedUnfetchable { .. }) => {
            let report = match &e {
                CrawlError::SeedDisallowed(r) => r,
                CrawlError::SeedUnfetchable { report, .. } => report,
                CrawlError::InvalidConfig(_) => unreachable!(),
            };
            write_outputs(report, None, out)?;
            Err(domain(e))
        }
        Err(e) => Err(domain(e)),
    }
}

#[cfg(feature = "live")]
fn live_crawl(config: &CrawlConfig) -> Result<Result<CrawlOutcome, CrawlError>, Failure> {
    let source = politecrawl::fetch::LiveSource::new(&config.agent);
    Ok(crawl_cycle(config, &source, &SystemClock::new()))
}

#[cfg(not(feature = "live"))]
fn live_crawl(_config: &CrawlConfig) -> Result<Result<CrawlOutcome, CrawlError>, Failure> {
    let _ = SystemClock::new();
    Err(domain("this build has no live HTTP support"))
}

fn cmd_robots_check(file: &Path, agent: &str, path: &str, stdout: &mut dyn Write) -> CmdResult {
    let bytes = std::fs::read(file).map_err(|e| domain(format!("cannot read {}: {e}", file.display())))?;
    let policy = parse_robots(&bytes);
    let decision = decide_access(Some(&policy), agent, path).map_err(domain)?;
    let _ = writeln!(stdout, "{decision}");
    Ok(())
}

fn cmd_sim(site: &Path, policy: PolicyArg, budget: u64, ticks: u64, stdout: &mut dyn Write) -> CmdResult {
    let spec = read_site(site)?;
    let mut site = spec.generate().map_err(domain)?;
    let trace = simulate_policy(&mut site, policy.into(), budget, ticks).map_err(domain)?;
    for row in &trace.rows {
        let _ = writeln!(stdout, "{}", serde_json::to_string(row).expect("rows serialize"));
    }
    Ok(())
}

fn cmd_query(index: &Path, terms: &[String], stdout: &mut dyn Write) -> CmdResult {
    let file = File::open(index).map_err(|e| domain(format!("cannot read {}: {e}", index.display())))?;
    let index = WordIndex::read_dump(BufReader::new(file)).map_err(domain)?;
    for (doc, score) in index.lookup(terms).map_err(domain)? {
        let _ = writeln!(stdout, "{doc}\t{score}");
    }
    Ok(())
}

/// Run the CLI with explicit streams; returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };

    let result = match &cli.command {
        Command::Crawl {
            seed,
            agent,
            workers,
            max_pages,
            source,
            site,
            out,
        } => cmd_crawl(seed, agent, *workers, *max_pages, *source, site.as_deref(), out, stdout),
        Command::RobotsCheck { file, agent, path } => cmd_robots_check(file, agent, path, stdout),
        Command::Sim {
            site,
            policy,
            budget,
            ticks,
        } => cmd_sim(site, *policy, *budget, *ticks, stdout),
        Command::Query { index, terms } => cmd_query(index, terms, stdout),
    };

    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Domain(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_DOMAIN
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
    }
}
