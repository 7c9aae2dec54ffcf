//! A deterministic simulated website.
//!
//! Everything is derived from splitmix64 streams: the link graph from the
//! site seed, and each page's change process from its own substream keyed by
//! `seed ^ fnv1a64(path)`, so advancing time is independent of page order.
//! Page bodies are a pure function of (domain, path, version).

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::fetch::{FetchResult, FetchStatus, PageSource};
use crate::hash::{fnv1a64, SplitMix64};
use crate::robots::{decide_access, RobotsPolicy};
use crate::url::NormalizedUrl;

/// Directories generated pages are spread over, round-robin.
pub const SECTIONS: [&str; 4] = ["docs", "blog", "images", "private"];

/// One in this many extra links points off-site.
const EXTERNAL_ONE_IN: u64 = 20;

const VOCAB: [&str; 32] = [
    "web", "crawler", "robot", "search", "engine", "index", "page", "link", "query", "keyword",
    "domain", "server", "policy", "fresh", "revisit", "polite", "delay", "agent", "queue", "document",
    "table", "hash", "rank", "surfer", "result", "content", "archive", "network", "spider", "site",
    "update", "protocol",
];

const WORDS_PER_PAGE: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid site parameters: {0}")]
    InvalidParams(String),
    #[error("cannot move simulated time from tick {current} back to {requested}")]
    TimeReversal { current: u64, requested: u64 },
}

/// Site spec file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub domain: String,
    pub n_pages: usize,
    pub seed: u64,
    pub link_density: f64,
    #[serde(default)]
    pub change_profile: Vec<f64>,
    #[serde(default)]
    pub robots: Option<String>,
}

impl SiteSpec {
    pub fn generate(&self) -> Result<SimSite, SimError> {
        generate_site(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SimLink {
    Internal(String),
    External(String),
}

impl SimLink {
    pub fn href(&self) -> &str {
        match self {
            SimLink::Internal(p) | SimLink::External(p) => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPage {
    pub path: String,
    pub out_links: Vec<SimLink>,
    pub change_prob: f64,
    /// Always equal to `modified_times.len()`.
    pub version: u64,
    /// Strictly increasing ticks.
    pub modified_times: Vec<u64>,
    stream: SplitMix64,
}

impl SimPage {
    /// Version visible at `tick`; a change at `tick` is already visible.
    pub fn version_at(&self, tick: u64) -> u64 {
        self.modified_times.partition_point(|&m| m <= tick) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSite {
    pub domain: String,
    pub robots_text: Option<String>,
    pub rng_seed: u64,
    pages: Vec<SimPage>,
    by_path: HashMap<String, usize>,
    tick: u64,
}

pub fn page_path(i: usize) -> String {
    if i == 0 {
        "/".to_string()
    } else {
        format!("/{}/p{}.html", SECTIONS[(i - 1) % SECTIONS.len()], i)
    }
}

pub fn generate_site(spec: &SiteSpec) -> Result<SimSite, SimError> {
    if spec.n_pages < 1 {
        return Err(SimError::InvalidParams("n_pages must be at least 1".into()));
    }
    if !(spec.link_density.is_finite() && spec.link_density >= 0.0) {
        return Err(SimError::InvalidParams("link_density must be finite and non-negative".into()));
    }
    if let Some(p) = spec.change_profile.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(SimError::InvalidParams(format!("change probability {p} outside [0, 1]")));
    }
    let host_ok = NormalizedUrl::parse(&format!("http://{}/", spec.domain))
        .map(|u| u.host() == spec.domain)
        .unwrap_or(false);
    if !host_ok {
        return Err(SimError::InvalidParams(format!(
            "domain {:?} is not a lowercase host name",
            spec.domain
        )));
    }

    let n = spec.n_pages;
    let mut rng = SplitMix64::new(spec.seed);
    let mut links: Vec<Vec<SimLink>> = vec![Vec::new(); n];

    // spanning tree rooted at "/"
    for i in 1..n {
        let parent = (rng.next_u64() % i as u64) as usize;
        links[parent].push(SimLink::Internal(page_path(i)));
    }
    let spread = 2.0 * spec.link_density + 1.0;
    for (i, out) in links.iter_mut().enumerate() {
        let extras = (rng.next_f64() * spread).floor() as usize;
        for _ in 0..extras {
            let r = rng.next_u64();
            if r.is_multiple_of(EXTERNAL_ONE_IN) {
                out.push(SimLink::External(format!(
                    "http://ext{}.example.net/page{}.html",
                    (r >> 8) % 50,
                    (r >> 16) % 1000
                )));
            } else {
                let target = ((r >> 8) % n as u64) as usize;
                if target != i {
                    out.push(SimLink::Internal(page_path(target)));
                }
            }
        }
    }

    let pages: Vec<SimPage> = links
        .into_iter()
        .enumerate()
        .map(|(i, out_links)| {
            let path = page_path(i);
            let change_prob = if spec.change_profile.is_empty() {
                0.0
            } else {
                spec.change_profile[i % spec.change_profile.len()]
            };
            SimPage {
                stream: SplitMix64::new(spec.seed ^ fnv1a64(path.as_bytes())),
                path,
                out_links,
                change_prob,
                version: 0,
                modified_times: Vec::new(),
            }
        })
        .collect();
    let by_path = pages.iter().enumerate().map(|(i, p)| (p.path.clone(), i)).collect();

    Ok(SimSite {
        domain: spec.domain.clone(),
        robots_text: spec.robots.clone(),
        rng_seed: spec.seed,
        pages,
        by_path,
        tick: 0,
    })
}

/// HTML for one page version: a title, version-dependent words, and one
/// anchor per out-link in order.
pub fn page_body(domain: &str, path: &str, version: u64, out_links: &[SimLink]) -> Vec<u8> {
    let mut rng = SplitMix64::new(fnv1a64(format!("{domain}{path}#{version}").as_bytes()));
    let words: Vec<&str> = (0..WORDS_PER_PAGE)
        .map(|_| VOCAB[(rng.next_u64() % VOCAB.len() as u64) as usize])
        .collect();
    let mut html = String::new();
    let _ = write!(
        html,
        "<html><head><title>{path}</title></head><body>\n<p>{} revision{version}</p>\n",
        words.join(" ")
    );
    for link in out_links {
        let _ = writeln!(html, "<a href=\"{}\">link</a>", link.href());
    }
    html.push_str("</body></html>\n");
    html.into_bytes()
}

impl SimSite {
    pub fn pages(&self) -> &[SimPage] {
        &self.pages
    }

    pub fn page(&self, path: &str) -> Option<&SimPage> {
        self.by_path.get(path).map(|&i| &self.pages[i])
    }

    pub fn current_tick(&self) -> u64 {
        self.tick
    }

    pub fn url_of(&self, path: &str) -> Option<NormalizedUrl> {
        NormalizedUrl::parse(&format!("http://{}{}", self.domain, path)).ok()
    }

    pub fn root_url(&self) -> NormalizedUrl {
        self.url_of("/").expect("domain validated at generation")
    }

    pub fn robots_policy(&self) -> Option<RobotsPolicy> {
        self.robots_text.as_ref().map(|t| crate::robots::parse_robots(t.as_bytes()))
    }

    /// Run the change process through `tick`, one draw per page per tick.
    pub fn advance_to(&mut self, tick: u64) -> Result<(), SimError> {
        if tick < self.tick {
            return Err(SimError::TimeReversal {
                current: self.tick,
                requested: tick,
            });
        }
        for page in &mut self.pages {
            for t in self.tick + 1..=tick {
                if page.stream.next_f64() < page.change_prob {
                    page.modified_times.push(t);
                    page.version += 1;
                }
            }
        }
        self.tick = tick;
        Ok(())
    }

    /// Body of `path` as it was at `tick`, if the page exists.
    pub fn body_at(&self, path: &str, tick: u64) -> Option<Vec<u8>> {
        let page = self.page(path)?;
        Some(page_body(&self.domain, path, page.version_at(tick), &page.out_links))
    }

    /// Serve `path` (path plus query) at `tick`, which must not be past the
    /// current tick.
    pub fn serve(&self, path: &str, tick: u64) -> FetchResult {
        debug_assert!(tick <= self.tick, "serve called for a tick not yet simulated");
        let at = tick as Timestamp;
        let Some(url) = self.url_of(path) else {
            return FetchResult::failed(self.root_url(), FetchStatus::NotFound, at);
        };
        if path == "/robots.txt" {
            return match &self.robots_text {
                Some(text) => FetchResult::ok(url, text.clone().into_bytes(), at),
                None => FetchResult::failed(url, FetchStatus::NotFound, at),
            };
        }
        match self.body_at(path, tick) {
            Some(body) => FetchResult::ok(url, body, at),
            None => FetchResult::failed(url, FetchStatus::NotFound, at),
        }
    }

    /// One line per page: `path -> href href ...`.
    pub fn adjacency_list(&self) -> String {
        let mut out = String::new();
        for page in &self.pages {
            out.push_str(&page.path);
            out.push_str(" ->");
            for link in &page.out_links {
                out.push(' ');
                out.push_str(link.href());
            }
            out.push('\n');
        }
        out
    }
}

/// [`PageSource`] over a [`SimSite`]. Time advances lazily to the requested
/// tick; every request is recorded in a fetch log.
#[derive(Debug)]
pub struct SimSource {
    site: Mutex<SimSite>,
    log: Mutex<Vec<(NormalizedUrl, Timestamp)>>,
}

impl SimSource {
    pub fn new(site: SimSite) -> Self {
        Self {
            site: Mutex::new(site),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn fetch_log(&self) -> Vec<(NormalizedUrl, Timestamp)> {
        self.log.lock().clone()
    }

    pub fn into_site(self) -> SimSite {
        self.site.into_inner()
    }

    pub fn with_site<R>(&self, f: impl FnOnce(&SimSite) -> R) -> R {
        f(&self.site.lock())
    }
}

impl PageSource for SimSource {
    fn fetch(&self, url: &NormalizedUrl, at: Timestamp) -> FetchResult {
        self.log.lock().push((url.clone(), at));
        let mut site = self.site.lock();
        if url.host() != site.domain || url.port().is_some() {
            return FetchResult::failed(url.clone(), FetchStatus::NetworkError, at);
        }
        let tick = at.max(0.0).floor() as u64;
        if tick > site.tick {
            site.advance_to(tick).expect("tick is ahead of the site");
        }
        let mut result = site.serve(url.path_and_query(), tick);
        result.url = url.clone();
        result.fetched_at = at;
        result
    }
}

/// Breadth-first closure from "/" over internal links whose targets the
/// policy allows for `agent`. Disallowed pages are neither included nor
/// expanded.
pub fn oracle_reachable(site: &SimSite, robots: Option<&RobotsPolicy>, agent: &str) -> BTreeSet<String> {
    let allowed = |path: &str| {
        decide_access(robots, agent, path)
            .map(|d| d.is_allowed())
            .unwrap_or(false)
    };
    let mut reached = BTreeSet::new();
    if !allowed("/") {
        return reached;
    }
    let mut queue = VecDeque::from(["/".to_string()]);
    reached.insert("/".to_string());
    while let Some(path) = queue.pop_front() {
        let Some(page) = site.page(&path) else { continue };
        for link in &page.out_links {
            if let SimLink::Internal(target) = link {
                if !reached.contains(target) && allowed(target) {
                    reached.insert(target.clone());
                    queue.push_back(target.clone());
                }
            }
        }
    }
    reached
}

/// Mean freshness and age over the pages in `crawl_times` (pages with no
/// crawl at or before `eval_tick` are skipped), computed straight from each
/// page's modification ticks. A page is stale at `eval_tick` iff it was
/// modified strictly after its last crawl and strictly before `eval_tick`;
/// its age is then `eval_tick` minus the earliest such modification.
pub fn oracle_freshness(
    site: &SimSite,
    crawl_times: &BTreeMap<String, Vec<u64>>,
    eval_tick: u64,
) -> Option<(f64, f64)> {
    let mut n = 0usize;
    let mut fresh = 0usize;
    let mut age_sum = 0u64;
    for (path, times) in crawl_times {
        let Some(page) = site.page(path) else { continue };
        let Some(last) = times.iter().copied().filter(|&t| t <= eval_tick).max() else {
            continue;
        };
        n += 1;
        match page.modified_times.iter().find(|&&m| m > last && m < eval_tick) {
            Some(&first_missed) => age_sum += eval_tick - first_missed,
            None => fresh += 1,
        }
    }
    (n > 0).then(|| (fresh as f64 / n as f64, age_sum as f64 / n as f64))
}
