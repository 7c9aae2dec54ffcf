//! A polite, breadth-first web crawler with Robot Exclusion Protocol
//! handling, a keyword index, and a revisit-policy simulator.
//!
//! Every crawl runs against a [`fetch::PageSource`]. The [`simweb`] module
//! provides a fully deterministic simulated site so the whole crawl loop,
//! the politeness gate, and the freshness metrics can be tested without a
//! network; the `live` feature adds a blocking HTTP adapter.

pub mod clock;
pub mod engine;
pub mod fetch;
pub mod hash;
pub mod index;
pub mod revisit;
pub mod robots;
pub mod simweb;
pub mod url;

pub use crate::clock::{Clock, SystemClock, Timestamp, VirtualClock};

pub use crate::engine::{crawl_cycle, CrawlConfig, CrawlError, CrawlOutcome, CrawlReport};
pub use crate::fetch::{FetchResult, FetchStatus, PageSource, PolitenessGate};
pub use crate::hash::{fnv1a64, SplitMix64};
pub use crate::index::{PageSnapshot, WordId, WordIndex};

pub use crate::robots::{AccessDecision, RobotsPolicy, RuleGroup};

pub use crate::revisit::{FreshnessSample, PageState, RevisitPlan};
pub use crate::simweb::{SimSite, SimSource, SiteSpec};
pub use crate::url::{DocId, Frontier, NormalizedUrl};
