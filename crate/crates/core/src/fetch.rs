//! Page retrieval and the per-host politeness gate.

use std::collections::HashMap;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::url::NormalizedUrl;

/// Delay between requests to one host when robots.txt gives none.
pub const DEFAULT_DELAY_SECS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FetchStatus {
    Ok,
    NotFound,
    ServerError,
    NetworkError,
}

impl FetchStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FetchStatus::Ok => "Ok",
            FetchStatus::NotFound => "NotFound",
            FetchStatus::ServerError => "ServerError",
            FetchStatus::NetworkError => "NetworkError",
        }
    }

    /// Map an HTTP status code.
    pub fn from_http(code: u16) -> Self {
        match code {
            200..=299 => FetchStatus::Ok,
            404 => FetchStatus::NotFound,
            _ => FetchStatus::ServerError,
        }
    }
}

/// `body` is present iff `status` is `Ok`.
#[derive(Debug, Clone, PartialEq)]
pub struct FetchResult {
    pub url: NormalizedUrl,
    pub status: FetchStatus,
    pub body: Option<Vec<u8>>,
    pub fetched_at: Timestamp,
}

impl FetchResult {
    pub fn ok(url: NormalizedUrl, body: Vec<u8>, fetched_at: Timestamp) -> Self {
        Self {
            url,
            status: FetchStatus::Ok,
            body: Some(body),
            fetched_at,
        }
    }

    pub fn failed(url: NormalizedUrl, status: FetchStatus, fetched_at: Timestamp) -> Self {
        debug_assert!(status != FetchStatus::Ok);
        Self {
            url,
            status,
            body: None,
            fetched_at,
        }
    }
}

/// Anything that can produce page content for a URL at a point in time.
///
/// Implementations must accept concurrent calls; per-host pacing is the
/// caller's job via [`PolitenessGate`]. Failures are reported in the
/// returned status, never by panicking.
pub trait PageSource: Send + Sync {
    fn fetch(&self, url: &NormalizedUrl, at: Timestamp) -> FetchResult;
}

impl<S: PageSource + ?Sized> PageSource for &S {
    fn fetch(&self, url: &NormalizedUrl, at: Timestamp) -> FetchResult {
        (**self).fetch(url, at)
    }
}

#[derive(Debug, Clone, Copy)]
struct HostSlot {
    delay: f64,
    last_grant: Option<Timestamp>,
}

/// Hands out fetch times so that grants for one host are at least that
/// host's delay apart. Hosts are independent of each other.
#[derive(Debug)]
pub struct PolitenessGate {
    default_delay: f64,
    hosts: Mutex<HashMap<String, HostSlot>>,
}

impl Default for PolitenessGate {
    fn default() -> Self {
        Self::new(DEFAULT_DELAY_SECS)
    }
}

impl PolitenessGate {
    pub fn new(default_delay: f64) -> Self {
        Self {
            default_delay: default_delay.max(0.0),
            hosts: Mutex::new(HashMap::new()),
        }
    }

    pub fn set_delay(&self, host: &str, delay: f64) {
        let delay = if delay.is_finite() { delay.max(0.0) } else { self.default_delay };
        self.hosts
            .lock()
            .entry(host.to_string())
            .and_modify(|s| s.delay = delay)
            .or_insert(HostSlot {
                delay,
                last_grant: None,
            });
    }

    pub fn delay_for(&self, host: &str) -> f64 {
        self.hosts.lock().get(host).map_or(self.default_delay, |s| s.delay)
    }

    /// Reserve the next fetch slot for `host`. The caller must not fetch
    /// before the returned time.
    pub fn reserve_slot(&self, host: &str, now: Timestamp) -> Timestamp {
        let mut hosts = self.hosts.lock();
        let slot = hosts.entry(host.to_string()).or_insert(HostSlot {
            delay: self.default_delay,
            last_grant: None,
        });
        let grant = match slot.last_grant {
            Some(last) => {
                // the sum can round to just under `last + delay`
                let mut earliest = last + slot.delay;
                while earliest - last < slot.delay {
                    earliest = earliest.next_up();
                }
                now.max(earliest)
            }
            None => now,
        };
        slot.last_grant = Some(grant);
        grant
    }
}

#[cfg(feature = "live")]
pub use live::LiveSource;

#[cfg(feature = "live")]
mod live {
    use std::io::Read;
    use std::time::Duration;

    use super::{FetchResult, FetchStatus, PageSource};
    use crate::clock::Timestamp;
    use crate::url::NormalizedUrl;

    const MAX_REDIRECTS: u32 = 5;
    const MAX_BODY_BYTES: u64 = 8 * 1024 * 1024;

    /// Blocking HTTP adapter. Sends `User-Agent: <agent>`, no cookies.
    pub struct LiveSource {
        agent: ureq::Agent,
        user_agent: String,
    }

    impl LiveSource {
        pub fn new(user_agent: &str) -> Self {
            let config = ureq::Agent::config_builder()
                .max_redirects(MAX_REDIRECTS)
                .http_status_as_error(false)
                .timeout_global(Some(Duration::from_secs(30)))
                .build();
            Self {
                agent: config.into(),
                user_agent: user_agent.to_string(),
            }
        }
    }

    impl PageSource for LiveSource {
        fn fetch(&self, url: &NormalizedUrl, at: Timestamp) -> FetchResult {
            let response = self
                .agent
                .get(url.as_str())
                .header("User-Agent", &self.user_agent)
                .call();
            let mut response = match response {
                Ok(r) => r,
                Err(_) => return FetchResult::failed(url.clone(), FetchStatus::NetworkError, at),
            };
            let status = FetchStatus::from_http(response.status().as_u16());
            if status != FetchStatus::Ok {
                return FetchResult::failed(url.clone(), status, at);
            }
            let mut body = Vec::new();
            let read = response
                .body_mut()
                .as_reader()
                .take(MAX_BODY_BYTES)
                .read_to_end(&mut body);
            match read {
                Ok(_) => FetchResult::ok(url.clone(), body, at),
                Err(_) => FetchResult::failed(url.clone(), FetchStatus::NetworkError, at),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserve_slot_arithmetic() {
        let gate = PolitenessGate::default();
        gate.set_delay("h", 2.0);
        assert_eq!(gate.reserve_slot("h", 10.0), 10.0);
        assert_eq!(gate.reserve_slot("h", 10.0), 12.0);
        assert_eq!(gate.reserve_slot("h", 15.0), 15.0);
    }

    #[test]
    fn first_request_is_immediate() {
        let gate = PolitenessGate::default();
        assert_eq!(gate.reserve_slot("fresh", 7.0), 7.0);
        assert_eq!(gate.reserve_slot("fresh", 7.0), 8.0);
    }

    #[test]
    fn hosts_are_independent() {
        let gate = PolitenessGate::default();
        gate.set_delay("slow", 100.0);
        gate.set_delay("fast", 0.5);
        gate.reserve_slot("slow", 0.0);
        assert_eq!(gate.reserve_slot("slow", 0.0), 100.0);
        assert_eq!(gate.reserve_slot("fast", 0.0), 0.0);
        assert_eq!(gate.reserve_slot("fast", 0.0), 0.5);
    }

    #[test]
    fn status_mapping() {
        assert_eq!(FetchStatus::from_http(200), FetchStatus::Ok);
        assert_eq!(FetchStatus::from_http(204), FetchStatus::Ok);
        assert_eq!(FetchStatus::from_http(404), FetchStatus::NotFound);
        assert_eq!(FetchStatus::from_http(403), FetchStatus::ServerError);
        assert_eq!(FetchStatus::from_http(503), FetchStatus::ServerError);
    }

    #[cfg(feature = "live")]
    #[test]
    fn live_unroutable_host_is_network_error() {
        // nothing listens on port 1
        let src = LiveSource::new("TestBot");
        let url = NormalizedUrl::parse("http://127.0.0.1:1/").unwrap();
        let r = src.fetch(&url, 0.0);
        assert_eq!(r.status, FetchStatus::NetworkError);
        assert!(r.body.is_none());
    }
}
