//! Fixtures shared by the criterion benchmarks.

use politecrawl::simweb::{SimSite, SiteSpec};

/// A generated site of `n_pages` pages with a disallowed `/private/` subtree.
pub fn bench_site(n_pages: usize) -> SimSite {
    SiteSpec {
        domain: "bench.test".into(),
        n_pages,
        seed: 42,
        link_density: 3.0,
        change_profile: vec![0.1, 0.5],
        robots: Some("User-agent: *\nDisallow: /private/\n".into()),
    }
    .generate()
    .expect("valid bench parameters")
}
