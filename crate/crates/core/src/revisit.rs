//! Freshness and age of crawled copies, change-rate estimation, and the
//! uniform and proportional revisit planners.
//!
//! A copy is fresh at `t` when it matches the live page. Age is zero for a
//! fresh copy and otherwise the time since the earliest live modification
//! the copy has missed. A modification at the same instant as a crawl, or as
//! the query time, counts as synchronized, which keeps `F = 1 <=> A = 0`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::hash::fnv1a64;
use crate::simweb::SimSite;
use crate::url::DocId;

/// Ticks per planning period in [`simulate_policy`].
pub const PERIOD_TICKS: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RevisitError {
    #[error("no pages to evaluate")]
    EmptyCollection,
    #[error("no revisit history")]
    NoHistory,
    #[error("no pages to plan for")]
    NoPages,
    #[error("every change rate is zero")]
    AllRatesZero,
    #[error("change rate for {0} is negative or not finite")]
    InvalidRate(DocId),
    #[error("simulation needs at least one tick")]
    NoTicks,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageState {
    pub doc_id: DocId,
    pub last_crawled_at: Timestamp,
    pub crawled_hash: u64,
    /// Most recent live modification.
    pub live_modified_at: Timestamp,
    pub live_hash: u64,
    /// Earliest live modification after `last_crawled_at`, when known
    /// exactly (the simulator knows it; a live crawl only sees
    /// `live_modified_at`).
    pub first_unsynced_at: Option<Timestamp>,
}

impl PageState {
    fn missed_since(&self) -> Timestamp {
        self.first_unsynced_at.unwrap_or(self.live_modified_at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreshnessSample {
    pub t: Timestamp,
    pub freshness: u8,
    pub age: f64,
}

pub fn freshness_at(state: &PageState, t: Timestamp) -> u8 {
    if state.crawled_hash == state.live_hash || state.missed_since() >= t {
        1
    } else {
        0
    }
}

pub fn age_at(state: &PageState, t: Timestamp) -> f64 {
    if freshness_at(state, t) == 1 {
        0.0
    } else {
        t - state.missed_since()
    }
}

pub fn sample(state: &PageState, t: Timestamp) -> FreshnessSample {
    FreshnessSample {
        t,
        freshness: freshness_at(state, t),
        age: age_at(state, t),
    }
}

/// Mean freshness and mean age over a collection at time `t`.
pub fn collection_freshness(states: &[PageState], t: Timestamp) -> Result<(f64, f64), RevisitError> {
    if states.is_empty() {
        return Err(RevisitError::EmptyCollection);
    }
    let (f, a) = states.iter().fold((0u64, 0.0), |(f, a), s| {
        (f + u64::from(freshness_at(s, t)), a + age_at(s, t))
    });
    let n = states.len() as f64;
    Ok((f as f64 / n, a / n))
}

/// Fraction of revisits that found changed content.
pub fn estimate_change_rate(history: &[(Timestamp, bool)]) -> Result<f64, RevisitError> {
    if history.is_empty() {
        return Err(RevisitError::NoHistory);
    }
    let changed = history.iter().filter(|(_, c)| *c).count();
    Ok(changed as f64 / history.len() as f64)
}

/// Visits per page for one period; counts sum to `period_budget`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisitPlan {
    pub counts: BTreeMap<DocId, u64>,
    pub period_budget: u64,
}

impl RevisitPlan {
    pub fn count(&self, doc: DocId) -> u64 {
        self.counts.get(&doc).copied().unwrap_or(0)
    }
}

/// Equal counts as far as integers allow; the lowest doc ids absorb the
/// remainder.
pub fn plan_uniform(pages: &[DocId], budget: u64) -> Result<RevisitPlan, RevisitError> {
    let mut ids = pages.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(RevisitError::NoPages);
    }
    let n = ids.len() as u64;
    let (base, extra) = (budget / n, budget % n);
    let counts = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, base + u64::from((i as u64) < extra)))
        .collect();
    Ok(RevisitPlan {
        counts,
        period_budget: budget,
    })
}

// Quotas are quantized to this grid before splitting into whole and
// fractional parts, so that scaling every rate by a constant cannot reorder
// remainders through floating-point noise.
const QUOTA_UNITS: u128 = 1_000_000_000;

/// Counts proportional to `rates`, integerized by largest remainder with
/// ties going to the lower doc id. The caller decides what to do on
/// [`RevisitError::AllRatesZero`].
pub fn plan_proportional(rates: &BTreeMap<DocId, f64>, budget: u64) -> Result<RevisitPlan, RevisitError> {
    if rates.is_empty() {
        return Err(RevisitError::NoPages);
    }
    if let Some((&id, _)) = rates.iter().find(|(_, r)| !(r.is_finite() && **r >= 0.0)) {
        return Err(RevisitError::InvalidRate(id));
    }
    let total: f64 = rates.values().sum();
    if total <= 0.0 {
        return Err(RevisitError::AllRatesZero);
    }

    let quotas: Vec<(DocId, u128)> = rates
        .iter()
        .map(|(&id, &r)| {
            let q = budget as f64 * (r / total);
            (id, (q * QUOTA_UNITS as f64).round() as u128)
        })
        .collect();
    let mut counts: BTreeMap<DocId, u64> = quotas
        .iter()
        .map(|&(id, q)| (id, (q / QUOTA_UNITS) as u64))
        .collect();
    let assigned: u64 = counts.values().sum();
    let mut remaining = budget.saturating_sub(assigned) as usize;

    let mut by_remainder: Vec<(DocId, u128)> = quotas.iter().map(|&(id, q)| (id, q % QUOTA_UNITS)).collect();
    by_remainder.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    // Quantization can only leave a shortfall of at most one per page, but
    // loop in case the budget is so large the grid lost precision.
    while remaining > 0 {
        for (id, _) in by_remainder.iter().take(remaining) {
            *counts.get_mut(id).expect("same keys") += 1;
        }
        remaining = remaining.saturating_sub(by_remainder.len());
    }
    Ok(RevisitPlan {
        counts,
        period_budget: budget,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Uniform,
    Proportional,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Uniform => "uniform",
            Policy::Proportional => "proportional",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Policy::Uniform),
            "proportional" => Ok(Policy::Proportional),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

/// One row of the policy-evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub policy: String,
    pub period: u64,
    #[serde(rename = "mean_F")]
    pub mean_f: f64,
    #[serde(rename = "mean_A")]
    pub mean_a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub rows: Vec<PolicyRow>,
    /// Tick at which each row was evaluated.
    pub eval_ticks: Vec<u64>,
    /// Every crawl tick per path, in order.
    pub crawl_times: BTreeMap<String, Vec<u64>>,
}

struct CopyState {
    doc_id: DocId,
    last_crawl: u64,
    hash: u64,
    history: Vec<(Timestamp, bool)>,
}

fn page_state(site: &SimSite, path: &str, copy: &CopyState, t: u64) -> PageState {
    let page = site.page(path).expect("path from the same site");
    let live = site.body_at(path, t).expect("page exists");
    let visible = &page.modified_times[..page.modified_times.partition_point(|&m| m <= t)];
    PageState {
        doc_id: copy.doc_id,
        last_crawled_at: copy.last_crawl as Timestamp,
        crawled_hash: copy.hash,
        live_modified_at: visible.last().map_or(0.0, |&m| m as Timestamp),
        live_hash: fnv1a64(&live),
        first_unsynced_at: visible
            .iter()
            .find(|&&m| m > copy.last_crawl)
            .map(|&m| m as Timestamp),
    }
}

/// Run a revisit policy over `ticks` ticks of simulated time.
///
/// Every page is crawled once at tick 0. Time is split into periods of
/// [`PERIOD_TICKS`]; at the start of each period the policy assigns the
/// budget across pages and each page's visits are spread evenly over the
/// period. After the visits of a period's last tick the collection is
/// evaluated. The proportional policy plans its first period uniformly and
/// afterwards uses each page's observed change fraction (pages never
/// revisited count as rate 1); if every rate is zero it falls back to
/// uniform.
pub fn simulate_policy(
    site: &mut SimSite,
    policy: Policy,
    budget: u64,
    ticks: u64,
) -> Result<SimulationTrace, RevisitError> {
    if ticks == 0 {
        return Err(RevisitError::NoTicks);
    }
    let start = site.current_tick();
    let paths: Vec<String> = site.pages().iter().map(|p| p.path.clone()).collect();
    let mut by_doc: BTreeMap<DocId, usize> = BTreeMap::new();
    let mut copies: Vec<CopyState> = Vec::with_capacity(paths.len());
    for (i, path) in paths.iter().enumerate() {
        let doc_id = site.url_of(path).expect("generated paths are valid").doc_id();
        by_doc.insert(doc_id, i);
        copies.push(CopyState {
            doc_id,
            last_crawl: start,
            hash: fnv1a64(&site.body_at(path, start).expect("page exists")),
            history: Vec::new(),
        });
    }
    let ids: Vec<DocId> = by_doc.keys().copied().collect();
    let mut crawl_times: BTreeMap<String, Vec<u64>> = paths.iter().map(|p| (p.clone(), vec![start])).collect();

    let mut rows = Vec::new();
    let mut eval_ticks = Vec::new();
    let mut period = 0u64;
    let mut period_start = start;
    let end = start + ticks;
    while period_start < end {
        let len = PERIOD_TICKS.min(end - period_start);
        let plan = match policy {
            Policy::Uniform => plan_uniform(&ids, budget)?,
            Policy::Proportional if period == 0 => plan_uniform(&ids, budget)?,
            Policy::Proportional => {
                let rates: BTreeMap<DocId, f64> = copies
                    .iter()
                    .map(|c| (c.doc_id, estimate_change_rate(&c.history).unwrap_or(1.0)))
                    .collect();
                match plan_proportional(&rates, budget) {
                    Err(RevisitError::AllRatesZero) => plan_uniform(&ids, budget)?,
                    other => other?,
                }
            }
        };

        let mut schedule: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (doc, &count) in &plan.counts {
            let page = by_doc[doc];
            for j in 0..count {
                schedule.entry(period_start + j * len / count).or_default().push(page);
            }
        }

        for t in period_start..period_start + len {
            site.advance_to(t).expect("time moves forward");
            for &i in schedule.get(&t).map(Vec::as_slice).unwrap_or(&[]) {
                let hash = fnv1a64(&site.body_at(&paths[i], t).expect("page exists"));
                let copy = &mut copies[i];
                if t > copy.last_crawl {
                    copy.history.push((t as Timestamp, hash != copy.hash));
                }
                copy.hash = hash;
                copy.last_crawl = t;
                crawl_times.get_mut(&paths[i]).expect("known path").push(t);
            }
        }

        let eval = period_start + len - 1;
        let states: Vec<PageState> = copies
            .iter()
            .zip(&paths)
            .map(|(c, p)| page_state(site, p, c, eval))
            .collect();
        let (mean_f, mean_a) = collection_freshness(&states, eval as Timestamp)?;
        rows.push(PolicyRow {
            policy: policy.name().to_string(),
            period,
            mean_f,
            mean_a,
        });
        eval_ticks.push(eval);
        period += 1;
        period_start += len;
    }
    Ok(SimulationTrace {
        rows,
        eval_ticks,
        crawl_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(crawled: f64, crawled_hash: u64, modified: f64, live_hash: u64) -> PageState {
        PageState {
            doc_id: DocId(1),
            last_crawled_at: crawled,
            crawled_hash,
            live_modified_at: modified,
            live_hash,
            first_unsynced_at: None,
        }
    }

    #[test]
    fn freshness_examples() {
        assert_eq!(freshness_at(&state(3.0, 7, 3.0, 7), 9.0), 1);
        assert_eq!(freshness_at(&state(3.0, 7, 5.0, 8), 9.0), 0);
        assert_eq!(freshness_at(&state(3.0, 7, 0.0, 7), 100.0), 1);
    }

    #[test]
    fn age_examples() {
        assert_eq!(age_at(&state(3.0, 7, 3.0, 7), 9.0), 0.0);
        assert_eq!(age_at(&state(3.0, 7, 5.0, 8), 9.0), 4.0);
        // modification at the query instant counts as synchronized
        let s = state(3.0, 7, 9.0, 8);
        assert_eq!((freshness_at(&s, 9.0), age_at(&s, 9.0)), (1, 0.0));
    }

    #[test]
    fn age_uses_earliest_missed_change() {
        let mut s = state(3.0, 7, 8.0, 9);
        s.first_unsynced_at = Some(5.0);
        assert_eq!(age_at(&s, 9.0), 4.0);
        assert_eq!(sample(&s, 9.0), FreshnessSample { t: 9.0, freshness: 0, age: 4.0 });
    }

    #[test]
    fn collection_means() {
        let fresh = state(3.0, 7, 3.0, 7);
        let stale = state(3.0, 7, 5.0, 8);
        assert_eq!(collection_freshness(&[fresh, fresh], 9.0), Ok((1.0, 0.0)));
        assert_eq!(collection_freshness(&[fresh, stale], 9.0), Ok((0.5, 2.0)));
        assert_eq!(collection_freshness(&[stale], 9.0), Ok((0.0, 4.0)));
        assert_eq!(collection_freshness(&[], 9.0), Err(RevisitError::EmptyCollection));
    }

    #[test]
    fn change_rate() {
        let h: Vec<_> = (0..10).map(|i| (i as f64, i < 4)).collect();
        assert_eq!(estimate_change_rate(&h), Ok(0.4));
        assert_eq!(estimate_change_rate(&[(1.0, false), (2.0, false)]), Ok(0.0));
        assert_eq!(estimate_change_rate(&[(1.0, true)]), Ok(1.0));
        assert_eq!(estimate_change_rate(&[]), Err(RevisitError::NoHistory));
    }

    fn counts(plan: &RevisitPlan) -> Vec<u64> {
        plan.counts.values().copied().collect()
    }

    #[test]
    fn uniform_examples() {
        let ids = [DocId(30), DocId(10), DocId(20)];
        assert_eq!(counts(&plan_uniform(&ids, 12).unwrap()), vec![4, 4, 4]);
        assert_eq!(counts(&plan_uniform(&ids, 11).unwrap()), vec![4, 4, 3]);
        assert_eq!(counts(&plan_uniform(&ids, 0).unwrap()), vec![0, 0, 0]);
        assert_eq!(plan_uniform(&[], 5), Err(RevisitError::NoPages));
    }

    #[test]
    fn proportional_examples() {
        let rates = BTreeMap::from([(DocId(1), 0.1), (DocId(2), 0.2), (DocId(3), 0.3)]);
        assert_eq!(counts(&plan_proportional(&rates, 12).unwrap()), vec![2, 4, 6]);
        let rates = BTreeMap::from([(DocId(1), 0.5), (DocId(2), 0.5)]);
        assert_eq!(counts(&plan_proportional(&rates, 5).unwrap()), vec![3, 2]);
        let rates = BTreeMap::from([(DocId(1), 0.0), (DocId(2), 0.0)]);
        assert_eq!(plan_proportional(&rates, 5), Err(RevisitError::AllRatesZero));
        let rates = BTreeMap::from([(DocId(1), -0.1)]);
        assert_eq!(plan_proportional(&rates, 5), Err(RevisitError::InvalidRate(DocId(1))));
        assert_eq!(plan_proportional(&BTreeMap::new(), 5), Err(RevisitError::NoPages));
    }

    #[test]
    fn zero_rate_pages_get_nothing() {
        let rates = BTreeMap::from([(DocId(1), 0.0), (DocId(2), 1.0)]);
        assert_eq!(counts(&plan_proportional(&rates, 7).unwrap()), vec![0, 7]);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("uniform".parse::<Policy>(), Ok(Policy::Uniform));
        assert_eq!("proportional".parse::<Policy>(), Ok(Policy::Proportional));
        assert!("random".parse::<Policy>().is_err());
    }
}
