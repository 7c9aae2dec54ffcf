//! Canonical URLs, document identity, and the crawl frontier.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hash::fnv1a64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UrlError {
    #[error("unsupported scheme {0:?}")]
    NonHttpScheme(String),
    #[error("relative reference {0:?} without a base URL")]
    RelativeWithoutBase(String),
    #[error("cannot parse URL {0:?}")]
    UnparsableUrl(String),
}

/// An absolute http(s) URL in canonical form: lowercase scheme and host,
/// default port elided, dot-segments removed, no fragment, percent-escapes
/// with uppercase hex. The canonical rendering is what gets hashed.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NormalizedUrl {
    rendered: String,
    scheme_end: usize,
    host_start: usize,
    host_end: usize,
    path_start: usize,
    port: Option<u16>,
}

impl NormalizedUrl {
    pub fn parse(s: &str) -> Result<Self, UrlError> {
        normalize_url(None, s)
    }

    pub fn as_str(&self) -> &str {
        &self.rendered
    }

    pub fn scheme(&self) -> &str {
        &self.rendered[..self.scheme_end]
    }

    pub fn host(&self) -> &str {
        &self.rendered[self.host_start..self.host_end]
    }

    /// Explicit non-default port, if any.
    pub fn port(&self) -> Option<u16> {
        self.port
    }

    pub fn path(&self) -> &str {
        let rest = &self.rendered[self.path_start..];
        match rest.find('?') {
            Some(i) => &rest[..i],
            None => rest,
        }
    }

    pub fn query(&self) -> Option<&str> {
        let rest = &self.rendered[self.path_start..];
        rest.find('?').map(|i| &rest[i + 1..])
    }

    /// Path plus query, the form robots rules are matched against.
    pub fn path_and_query(&self) -> &str {
        &self.rendered[self.path_start..]
    }

    pub fn doc_id(&self) -> DocId {
        doc_id_of(self)
    }

    /// The `/robots.txt` URL on the same scheme, host and port.
    pub fn robots_url(&self) -> NormalizedUrl {
        normalize_url(Some(self), "/robots.txt").expect("absolute path resolves against any base")
    }

    fn to_url(&self) -> ::url::Url {
        ::url::Url::parse(&self.rendered).expect("canonical rendering always parses")
    }
}

impl fmt::Display for NormalizedUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.rendered)
    }
}

impl fmt::Debug for NormalizedUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NormalizedUrl({})", self.rendered)
    }
}

impl Serialize for NormalizedUrl {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.rendered)
    }
}

impl<'de> Deserialize<'de> for NormalizedUrl {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        NormalizedUrl::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn uppercase_percent_hex(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%'
            && i + 2 < bytes.len()
            && bytes[i + 1].is_ascii_hexdigit()
            && bytes[i + 2].is_ascii_hexdigit()
        {
            out.push('%');
            out.push(bytes[i + 1].to_ascii_uppercase() as char);
            out.push(bytes[i + 2].to_ascii_uppercase() as char);
            i += 3;
        } else {
            let ch = s[i..].chars().next().expect("index on char boundary");
            out.push(ch);
            i += ch.len_utf8();
        }
    }
    out
}

/// Resolve `href` against `base` (if any) and canonicalize the result.
pub fn normalize_url(base: Option<&NormalizedUrl>, href: &str) -> Result<NormalizedUrl, UrlError> {
    let href = href.trim();
    if href.is_empty() {
        return Err(UrlError::UnparsableUrl(href.to_string()));
    }
    let parsed = match base {
        Some(b) => b.to_url().join(href),
        None => ::url::Url::parse(href),
    };
    let mut url = parsed.map_err(|e| match e {
        ::url::ParseError::RelativeUrlWithoutBase => UrlError::RelativeWithoutBase(href.to_string()),
        _ => UrlError::UnparsableUrl(href.to_string()),
    })?;

    let scheme = url.scheme().to_string();
    if scheme != "http" && scheme != "https" {
        return Err(UrlError::NonHttpScheme(scheme));
    }
    let Some(host) = url.host_str().filter(|h| !h.is_empty()).map(str::to_ascii_lowercase) else {
        return Err(UrlError::UnparsableUrl(href.to_string()));
    };
    url.set_fragment(None);
    let port = url.port();

    let path = match url.path() {
        "" => "/".to_string(),
        p => uppercase_percent_hex(p),
    };
    let query = url.query().filter(|q| !q.is_empty()).map(uppercase_percent_hex);

    let mut rendered = format!("{scheme}://{host}");
    let scheme_end = scheme.len();
    let host_start = scheme_end + 3;
    let host_end = host_start + host.len();
    if let Some(p) = port {
        rendered.push_str(&format!(":{p}"));
    }
    let path_start = rendered.len();
    rendered.push_str(&path);
    if let Some(q) = query {
        rendered.push('?');
        rendered.push_str(&q);
    }
    Ok(NormalizedUrl {
        rendered,
        scheme_end,
        host_start,
        host_end,
        path_start,
        port,
    })
}

/// Stable 64-bit identity of a canonical URL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub u64);

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// FNV-1a-64 of the canonical rendering.
pub fn doc_id_of(url: &NormalizedUrl) -> DocId {
    DocId(fnv1a64(url.as_str().as_bytes()))
}

/// Exact host equality; subdomains are outside the working domain.
pub fn in_domain(url: &NormalizedUrl, working_domain: &str) -> bool {
    url.host() == working_domain
}

/// FIFO to-do queue plus the seen-set for one crawl cycle.
#[derive(Debug, Default, Clone)]
pub struct Frontier {
    queue: VecDeque<(NormalizedUrl, DocId)>,
    seen: HashSet<DocId>,
}

impl Frontier {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns true iff the URL was not seen before in this cycle.
    pub fn enqueue_if_new(&mut self, url: NormalizedUrl) -> bool {
        let id = doc_id_of(&url);
        if !self.seen.insert(id) {
            return false;
        }
        self.queue.push_back((url, id));
        true
    }

    pub fn dequeue(&mut self) -> Option<(NormalizedUrl, DocId)> {
        self.queue.pop_front()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn seen_count(&self) -> usize {
        self.seen.len()
    }

    pub fn has_seen(&self, id: DocId) -> bool {
        self.seen.contains(&id)
    }
}

#[derive(Debug, Default)]
struct SharedState {
    frontier: Frontier,
    in_flight: usize,
    closed: bool,
}

/// A frontier shared by several workers.
///
/// Workers call [`SharedFrontier::next_task`] and must call
/// [`SharedFrontier::task_done`] once per task after enqueueing any links it
/// produced. `next_task` returns `None` only when the queue is empty and no
/// task is in flight (or the frontier was closed), which is the crawl's
/// termination condition.
#[derive(Debug, Default)]
pub struct SharedFrontier {
    state: Mutex<SharedState>,
    wake: Condvar,
}

impl SharedFrontier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enqueue_if_new(&self, url: NormalizedUrl) -> bool {
        let mut st = self.state.lock();
        let added = st.frontier.enqueue_if_new(url);
        if added {
            self.wake.notify_one();
        }
        added
    }

    pub fn next_task(&self) -> Option<(NormalizedUrl, DocId)> {
        let mut st = self.state.lock();
        loop {
            if st.closed {
                return None;
            }
            if let Some(task) = st.frontier.dequeue() {
                st.in_flight += 1;
                return Some(task);
            }
            if st.in_flight == 0 {
                // wake the others so they observe termination too
                self.wake.notify_all();
                return None;
            }
            self.wake.wait(&mut st);
        }
    }

    pub fn task_done(&self) {
        let mut st = self.state.lock();
        st.in_flight -= 1;
        if st.in_flight == 0 && st.frontier.is_empty() {
            self.wake.notify_all();
        }
    }

    /// Stop handing out tasks, e.g. once a page cap is reached.
    pub fn close(&self) {
        self.state.lock().closed = true;
        self.wake.notify_all();
    }

    /// Empty with nothing in flight, and not stopped early by [`close`](Self::close).
    pub fn is_drained(&self) -> bool {
        let st = self.state.lock();
        !st.closed && st.frontier.is_empty() && st.in_flight == 0
    }

    pub fn has_seen(&self, id: DocId) -> bool {
        self.state.lock().frontier.has_seen(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(s: &str) -> NormalizedUrl {
        NormalizedUrl::parse(s).unwrap()
    }

    #[test]
    fn normalizes_case_port_dots_fragment() {
        let n = normalize_url(None, "HTTP://Example.COM:80/a/../b#frag").unwrap();
        assert_eq!(n.as_str(), "http://example.com/b");
        assert_eq!(n.scheme(), "http");
        assert_eq!(n.host(), "example.com");
        assert_eq!(n.port(), None);
        assert_eq!(n.path(), "/b");
        assert_eq!(n.query(), None);
    }

    #[test]
    fn resolves_relative() {
        let base = u("http://e.com/a/b.html");
        assert_eq!(normalize_url(Some(&base), "c.html").unwrap().as_str(), "http://e.com/a/c.html");
        assert_eq!(normalize_url(Some(&base), "../x?q=1#f").unwrap().as_str(), "http://e.com/x?q=1");
        assert_eq!(
            normalize_url(Some(&base), "//Other.org").unwrap().as_str(),
            "http://other.org/"
        );
    }

    #[test]
    fn rejects_non_http() {
        let base = u("http://e.com/");
        assert_eq!(
            normalize_url(Some(&base), "mailto:x@y.z"),
            Err(UrlError::NonHttpScheme("mailto".into()))
        );
        assert!(matches!(
            normalize_url(Some(&base), "javascript:void(0)"),
            Err(UrlError::NonHttpScheme(_))
        ));
        assert_eq!(
            normalize_url(None, "c.html"),
            Err(UrlError::RelativeWithoutBase("c.html".into()))
        );
        assert!(matches!(normalize_url(None, "http://"), Err(UrlError::UnparsableUrl(_))));
        assert!(matches!(normalize_url(None, "   "), Err(UrlError::UnparsableUrl(_))));
    }

    #[test]
    fn keeps_port_query_and_escapes() {
        let n = u("https://E.com:8443/a%2fb?x=%7e&y");
        assert_eq!(n.as_str(), "https://e.com:8443/a%2Fb?x=%7E&y");
        assert_eq!(n.port(), Some(8443));
        assert_eq!(n.path(), "/a%2Fb");
        assert_eq!(n.query(), Some("x=%7E&y"));
        assert_eq!(n.path_and_query(), "/a%2Fb?x=%7E&y");
        assert_eq!(u("https://e.com:443").as_str(), "https://e.com/");
    }

    #[test]
    fn robots_url_keeps_authority() {
        assert_eq!(u("http://e.com:81/a/b?c").robots_url().as_str(), "http://e.com:81/robots.txt");
    }

    #[test]
    fn domain_scoping_is_exact() {
        assert!(in_domain(&u("http://example.com/x"), "example.com"));
        assert!(!in_domain(&u("http://other.com/x"), "example.com"));
        assert!(!in_domain(&u("http://sub.example.com/x"), "example.com"));
    }

    #[test]
    fn doc_id_fixtures() {
        // Values computed with an independent FNV-1a-64 implementation.
        assert_eq!(doc_id_of(&u("http://example.com/")), DocId(3_626_013_177_403_016_945));
        assert_eq!(doc_id_of(&u("http://e.com/a")), DocId(16_140_705_435_709_647_345));
        assert_eq!(doc_id_of(&u("http://e.com/b")), DocId(16_140_702_137_174_762_712));
        assert_eq!(doc_id_of(&u("HTTP://EXAMPLE.com:80")), doc_id_of(&u("http://example.com/")));
    }

    #[test]
    fn frontier_fifo_and_dedup() {
        let mut f = Frontier::new();
        assert_eq!(f.dequeue(), None);
        let a = u("http://e.com/a");
        let b = u("http://e.com/b");
        assert!(f.enqueue_if_new(a.clone()));
        assert_eq!(f.len(), 1);
        assert!(!f.enqueue_if_new(a.clone()));
        assert!(f.enqueue_if_new(b.clone()));
        assert_eq!(f.dequeue().unwrap().0, a);
        assert!(!f.enqueue_if_new(a.clone()));
        assert_eq!(f.dequeue().unwrap().0, b);
        assert!(f.is_empty());
    }

    #[test]
    fn shared_frontier_terminates_when_idle() {
        let f = SharedFrontier::new();
        f.enqueue_if_new(u("http://e.com/"));
        let (url, _) = f.next_task().unwrap();
        assert!(!f.is_drained());
        f.enqueue_if_new(normalize_url(Some(&url), "/a").unwrap());
        f.task_done();
        assert!(f.next_task().is_some());
        f.task_done();
        assert!(f.next_task().is_none());
        assert!(f.is_drained());
    }
}
