//! robots.txt parsing and access decisions.
//!
//! The grammar is one `field: value` pair per line with `#` comments.
//! Recognised fields (case-insensitive) are `User-agent`, `Allow`,
//! `Disallow` and `Crawl-delay` (also spelled `Crawler-delay`). Everything
//! else is ignored, so parsing never fails.

use std::fmt;

use thiserror::Error;

/// Upper bound applied to any crawl-delay read from a file, in seconds.
pub const MAX_CRAWL_DELAY: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RobotsError {
    #[error("path {0:?} does not start with '/'")]
    InvalidPath(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Directive {
    Allow,
    Disallow,
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Directive::Allow => f.write_str("Allow"),
            Directive::Disallow => f.write_str("Disallow"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub directive: Directive,
    /// Stored verbatim apart from surrounding whitespace. Empty matches nothing.
    pub path_prefix: String,
}

impl Rule {
    fn matches(&self, path: &str) -> bool {
        !self.path_prefix.is_empty() && path.starts_with(&self.path_prefix)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.directive, self.path_prefix)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleGroup {
    pub agents: Vec<String>,
    pub rules: Vec<Rule>,
    /// Seconds, finite and within `[0, MAX_CRAWL_DELAY]`.
    pub crawl_delay: Option<f64>,
}

impl RuleGroup {
    fn matches_agent(&self, agent: &str) -> bool {
        self.agents.iter().any(|a| a.eq_ignore_ascii_case(agent))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RobotsPolicy {
    pub groups: Vec<RuleGroup>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Allowed,
    Disallowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicySource {
    PolicyPresent,
    PolicyAbsent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessDecision {
    pub verdict: Verdict,
    pub matched_rule: Option<Rule>,
    pub source: PolicySource,
}

impl AccessDecision {
    pub fn is_allowed(&self) -> bool {
        self.verdict == Verdict::Allowed
    }
}

impl fmt::Display for AccessDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match self.verdict {
            Verdict::Allowed => "Allowed",
            Verdict::Disallowed => "Disallowed",
        };
        match &self.matched_rule {
            Some(rule) => write!(f, "{verdict} ({rule})"),
            None => f.write_str(verdict),
        }
    }
}

fn parse_delay(value: &str) -> Option<f64> {
    let secs: f64 = value.parse().ok()?;
    (secs.is_finite() && secs >= 0.0).then(|| secs.min(MAX_CRAWL_DELAY))
}

/// Parse robots.txt content. Invalid UTF-8 is replaced, malformed lines are
/// skipped; a file with no groups allows everything.
pub fn parse_robots(text: &[u8]) -> RobotsPolicy {
    let text = String::from_utf8_lossy(text);
    let mut groups: Vec<RuleGroup> = Vec::new();
    // true while the last group is still collecting User-agent lines
    let mut collecting_agents = false;

    for line in text.split('\n') {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        let Some((field, value)) = line.split_once(':') else {
            continue;
        };
        let field = field.trim().to_ascii_lowercase();
        let value = value.trim();

        match field.as_str() {
            "user-agent" => {
                if value.is_empty() {
                    continue;
                }
                if collecting_agents {
                    if let Some(group) = groups.last_mut() {
                        group.agents.push(value.to_string());
                    }
                } else {
                    groups.push(RuleGroup {
                        agents: vec![value.to_string()],
                        rules: Vec::new(),
                        crawl_delay: None,
                    });
                    collecting_agents = true;
                }
            }
            "allow" | "disallow" => {
                collecting_agents = false;
                let Some(group) = groups.last_mut() else {
                    continue;
                };
                let directive = if field == "allow" {
                    Directive::Allow
                } else {
                    Directive::Disallow
                };
                group.rules.push(Rule {
                    directive,
                    path_prefix: value.to_string(),
                });
            }
            "crawl-delay" | "crawler-delay" => {
                collecting_agents = false;
                if let Some(group) = groups.last_mut() {
                    if group.crawl_delay.is_none() {
                        group.crawl_delay = parse_delay(value);
                    }
                }
            }
            _ => {}
        }
    }

    RobotsPolicy { groups }
}

impl RobotsPolicy {
    /// The group governing `agent`: an exact (case-insensitive) token match,
    /// else the `*` group.
    pub fn group_for(&self, agent: &str) -> Option<&RuleGroup> {
        self.groups
            .iter()
            .find(|g| g.matches_agent(agent))
            .or_else(|| self.groups.iter().find(|g| g.matches_agent("*")))
    }
}

/// Serializes in canonical field order: agents, crawl-delay, rules.
impl fmt::Display for RobotsPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for group in &self.groups {
            for agent in &group.agents {
                writeln!(f, "User-agent: {agent}")?;
            }
            if let Some(delay) = group.crawl_delay {
                writeln!(f, "Crawl-delay: {delay}")?;
            }
            for rule in &group.rules {
                writeln!(f, "{}: {}", rule.directive, rule.path_prefix)?;
            }
        }
        Ok(())
    }
}

/// Decide whether `agent` may fetch `path` (path plus query, starting with
/// `/`). The longest matching prefix wins and `Allow` wins ties.
pub fn decide_access(
    policy: Option<&RobotsPolicy>,
    agent: &str,
    path: &str,
) -> Result<AccessDecision, RobotsError> {
    if !path.starts_with('/') {
        return Err(RobotsError::InvalidPath(path.to_string()));
    }
    let Some(policy) = policy else {
        return Ok(AccessDecision {
            verdict: Verdict::Allowed,
            matched_rule: None,
            source: PolicySource::PolicyAbsent,
        });
    };

    let best = policy.group_for(agent).and_then(|group| {
        group
            .rules
            .iter()
            .filter(|r| r.matches(path))
            .max_by_key(|r| (r.path_prefix.len(), r.directive == Directive::Allow))
    });

    let verdict = match best {
        Some(rule) if rule.directive == Directive::Disallow => Verdict::Disallowed,
        _ => Verdict::Allowed,
    };
    Ok(AccessDecision {
        verdict,
        matched_rule: best.cloned(),
        source: PolicySource::PolicyPresent,
    })
}

pub fn crawl_delay_for(policy: Option<&RobotsPolicy>, agent: &str) -> Option<f64> {
    policy?.group_for(agent)?.crawl_delay
}
