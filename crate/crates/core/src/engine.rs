//! One crawl cycle over a single working domain.
//!
//! robots.txt is fetched once from the seed host (exempt from the crawl
//! delay), then `workers` threads drain a shared breadth-first frontier:
//! robots check, politeness slot, fetch, index, link expansion. The cycle
//! ends when the frontier is empty and no worker holds a task, or when the
//! page cap is reached.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, Timestamp};
use crate::fetch::{FetchStatus, PageSource, PolitenessGate, DEFAULT_DELAY_SECS};
use crate::hash::fnv1a64;
use crate::index::{extract_links, tokenize, PageSnapshot, WordIndex};
use crate::robots::{crawl_delay_for, decide_access, parse_robots, RobotsPolicy, Rule};
use crate::url::{in_domain, DocId, NormalizedUrl, SharedFrontier};

#[derive(Debug, Clone, PartialEq)]
pub struct CrawlConfig {
    pub seed_url: NormalizedUrl,
    pub agent: String,
    pub workers: usize,
    pub max_pages: Option<usize>,
    /// Politeness delay when robots.txt sets none, in seconds.
    pub default_delay: f64,
}

impl CrawlConfig {
    pub fn new(seed_url: NormalizedUrl, agent: impl Into<String>) -> Self {
        Self {
            seed_url,
            agent: agent.into(),
            workers: 1,
            max_pages: None,
            default_delay: DEFAULT_DELAY_SECS,
        }
    }

    pub fn validate(&self) -> Result<(), CrawlError> {
        if self.workers < 1 {
            return Err(CrawlError::InvalidConfig("workers must be at least 1".into()));
        }
        if self.max_pages == Some(0) {
            return Err(CrawlError::InvalidConfig("max_pages must be at least 1".into()));
        }
        if self.agent.trim().is_empty() {
            return Err(CrawlError::InvalidConfig("agent must not be empty".into()));
        }
        if !(self.default_delay.is_finite() && self.default_delay >= 0.0) {
            return Err(CrawlError::InvalidConfig("default_delay must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedUrl {
    pub url: NormalizedUrl,
    pub doc_id: DocId,
    pub at: Timestamp,
    /// The rule that denied access, for robots skips.
    pub rule: Option<Rule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchFailure {
    pub url: NormalizedUrl,
    pub doc_id: DocId,
    pub status: FetchStatus,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrawlReport {
    pub seed: NormalizedUrl,
    pub agent: String,
    /// robots.txt fetch outcome; anything but `Ok` means allow-all.
    pub robots_status: FetchStatus,
    pub visited: Vec<PageSnapshot>,
    pub skipped_disallowed: Vec<SkippedUrl>,
    pub skipped_out_of_domain: Vec<SkippedUrl>,
    pub errors: Vec<FetchFailure>,
    pub started: Timestamp,
    pub finished: Timestamp,
    /// True when the cycle ended with an empty frontier and no task in
    /// flight (false when the page cap stopped it early).
    pub frontier_drained: bool,
}

#[derive(Debug)]
pub struct CrawlOutcome {
    pub report: CrawlReport,
    pub index: WordIndex,
    pub robots: Option<RobotsPolicy>,
}

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("invalid crawl configuration: {0}")]
    InvalidConfig(String),
    #[error("robots.txt disallows the seed URL {}", .0.seed)]
    SeedDisallowed(Box<CrawlReport>),
    #[error("seed URL {} could not be fetched ({})", .report.seed, .status.as_str())]
    SeedUnfetchable {
        status: FetchStatus,
        report: Box<CrawlReport>,
    },
}

/// Everything workers write, behind one lock so indexing has a single
/// writer ordered by fetch completion.
struct Sink {
    index: WordIndex,
    visited: Vec<PageSnapshot>,
    disallowed: Vec<SkippedUrl>,
    out_of_domain: Vec<SkippedUrl>,
    out_of_domain_seen: HashSet<DocId>,
    errors: Vec<FetchFailure>,
}

struct Cycle<'a, S: PageSource + ?Sized, C: Clock + ?Sized> {
    config: &'a CrawlConfig,
    source: &'a S,
    clock: &'a C,
    robots: Option<&'a RobotsPolicy>,
    domain: &'a str,
    frontier: SharedFrontier,
    gate: PolitenessGate,
    claimed: AtomicUsize,
    sink: Mutex<Sink>,
}

impl<S: PageSource + ?Sized, C: Clock + ?Sized> Cycle<'_, S, C> {
    fn worker(&self) {
        while let Some((url, doc_id)) = self.frontier.next_task() {
            self.process(url, doc_id);
            self.frontier.task_done();
        }
    }

    fn process(&self, url: NormalizedUrl, doc_id: DocId) {
        let decision = decide_access(self.robots, &self.config.agent, url.path_and_query())
            .expect("normalized paths start with '/'");
        if !decision.is_allowed() {
            let at = self.clock.now();
            self.sink.lock().disallowed.push(SkippedUrl {
                url,
                doc_id,
                at,
                rule: decision.matched_rule,
            });
            return;
        }

        if let Some(cap) = self.config.max_pages {
            if self.claimed.fetch_add(1, Ordering::SeqCst) >= cap {
                self.frontier.close();
                return;
            }
        }

        let grant = self.gate.reserve_slot(url.host(), self.clock.now());
        self.clock.sleep_until(grant);
        let result = self.source.fetch(&url, grant);

        let Some(body) = result.body.filter(|_| result.status == FetchStatus::Ok) else {
            let status = match result.status {
                FetchStatus::Ok => FetchStatus::NetworkError,
                other => other,
            };
            self.sink.lock().errors.push(FetchFailure {
                url,
                doc_id,
                status,
                at: result.fetched_at,
            });
            return;
        };

        let tokens = tokenize(&body);
        let links = extract_links(&body, &url);
        let snapshot = PageSnapshot {
            doc_id,
            url: url.clone(),
            fetched_at: result.fetched_at,
            content_hash: fnv1a64(&body),
            out_links: links.clone(),
            token_count: tokens.len(),
        };

        {
            let mut sink = self.sink.lock();
            sink.index
                .index_document(doc_id, &tokens)
                .expect("frontier hands out each document once");
            sink.visited.push(snapshot);
            for link in links.iter().filter(|l| !in_domain(l, self.domain)) {
                let id = link.doc_id();
                if sink.out_of_domain_seen.insert(id) {
                    sink.out_of_domain.push(SkippedUrl {
                        url: link.clone(),
                        doc_id: id,
                        at: result.fetched_at,
                        rule: None,
                    });
                }
            }
        }
        for link in links.into_iter().filter(|l| in_domain(l, self.domain)) {
            self.frontier.enqueue_if_new(link);
        }
    }
}

/// Run one crawl cycle from `config.seed_url` within its host.
pub fn crawl_cycle<S, C>(config: &CrawlConfig, source: &S, clock: &C) -> Result<CrawlOutcome, CrawlError>
where
    S: PageSource + ?Sized,
    C: Clock + ?Sized,
{
    config.validate()?;
    let started = clock.now();
    let seed = &config.seed_url;
    let domain = seed.host();

    let robots_response = source.fetch(&seed.robots_url(), started);
    let robots = match (&robots_response.status, &robots_response.body) {
        (FetchStatus::Ok, Some(body)) => Some(parse_robots(body)),
        _ => None,
    };

    let gate = PolitenessGate::new(config.default_delay);
    if let Some(delay) = crawl_delay_for(robots.as_ref(), &config.agent) {
        gate.set_delay(domain, delay);
    }

    let cycle = Cycle {
        config,
        source,
        clock,
        robots: robots.as_ref(),
        domain,
        frontier: SharedFrontier::new(),
        gate,
        claimed: AtomicUsize::new(0),
        sink: Mutex::new(Sink {
            index: WordIndex::new(),
            visited: Vec::new(),
            disallowed: Vec::new(),
            out_of_domain: Vec::new(),
            out_of_domain_seen: HashSet::new(),
            errors: Vec::new(),
        }),
    };
    cycle.frontier.enqueue_if_new(seed.clone());

    if config.workers == 1 {
        cycle.worker();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..config.workers {
                scope.spawn(|| cycle.worker());
            }
        });
    }

    let frontier_drained = cycle.frontier.is_drained();
    let sink = cycle.sink.into_inner();
    let report = CrawlReport {
        seed: seed.clone(),
        agent: config.agent.clone(),
        robots_status: robots_response.status,
        visited: sink.visited,
        skipped_disallowed: sink.disallowed,
        skipped_out_of_domain: sink.out_of_domain,
        errors: sink.errors,
        started,
        finished: clock.now(),
        frontier_drained,
    };

    let seed_id = seed.doc_id();
    if report.skipped_disallowed.iter().any(|s| s.doc_id == seed_id) {
        return Err(CrawlError::SeedDisallowed(Box::new(report)));
    }
    if let Some(failure) = report.errors.iter().find(|f| f.doc_id == seed_id) {
        return Err(CrawlError::SeedUnfetchable {
            status: failure.status,
            report: Box::new(report),
        });
    }
    Ok(CrawlOutcome {
        report,
        index: sink.index,
        robots,
    })
}

/// One line of the report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub url: String,
    pub doc_id: u64,
    pub fetched_at: f64,
    /// `Ok`, a fetch failure status, `Disallowed`, or `OutOfDomain`.
    pub status: String,
    pub n_links: usize,
    pub n_tokens: usize,
    pub content_hash: u64,
}

/// Trailing line of the report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub summary: bool,
    pub seed: String,
    pub agent: String,
    pub robots_status: String,
    pub visited: usize,
    pub skipped_disallowed: usize,
    pub skipped_out_of_domain: usize,
    pub errors: usize,
    pub frontier_drained: bool,
    pub started: f64,
    pub finished: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportLine {
    Page(ReportRecord),
    Summary(ReportSummary),
}

impl CrawlReport {
    pub fn records(&self) -> Vec<ReportRecord> {
        let skipped = |s: &SkippedUrl, status: &str| ReportRecord {
            url: s.url.to_string(),
            doc_id: s.doc_id.0,
            fetched_at: s.at,
            status: status.to_string(),
            n_links: 0,
            n_tokens: 0,
            content_hash: 0,
        };
        let mut out: Vec<ReportRecord> = self
            .visited
            .iter()
            .map(|p| ReportRecord {
                url: p.url.to_string(),
                doc_id: p.doc_id.0,
                fetched_at: p.fetched_at,
                status: FetchStatus::Ok.as_str().to_string(),
                n_links: p.out_links.len(),
                n_tokens: p.token_count,
                content_hash: p.content_hash,
            })
            .collect();
        out.extend(self.errors.iter().map(|e| ReportRecord {
            url: e.url.to_string(),
            doc_id: e.doc_id.0,
            fetched_at: e.at,
            status: e.status.as_str().to_string(),
            n_links: 0,
            n_tokens: 0,
            content_hash: 0,
        }));
        out.extend(self.skipped_disallowed.iter().map(|s| skipped(s, "Disallowed")));
        out.extend(self.skipped_out_of_domain.iter().map(|s| skipped(s, "OutOfDomain")));
        out
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            summary: true,
            seed: self.seed.to_string(),
            agent: self.agent.clone(),
            robots_status: self.robots_status.as_str().to_string(),
            visited: self.visited.len(),
            skipped_disallowed: self.skipped_disallowed.len(),
            skipped_out_of_domain: self.skipped_out_of_domain.len(),
            errors: self.errors.len(),
            frontier_drained: self.frontier_drained,
            started: self.started,
            finished: self.finished,
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for record in self.records() {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut out, &self.summary())?;
        out.write_all(b"\n")
    }

    pub fn visited_ids(&self) -> HashSet<DocId> {
        self.visited.iter().map(|p| p.doc_id).collect()
    }
}

pub fn read_report<R: BufRead>(input: R) -> std::io::Result<Vec<ReportLine>> {
    let mut lines = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        lines.push(serde_json::from_str(&line)?);
    }
    Ok(lines)
}
