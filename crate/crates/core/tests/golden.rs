//! Simulated-site fixtures produced by `golden/oracle.py`, a standalone
//! splitmix64 implementation of the generator.

use politecrawl::simweb::{SimSite, SiteSpec};

fn site(n_pages: usize, link_density: f64, change_profile: Vec<f64>) -> SimSite {
    SiteSpec {
        domain: "sim.test".into(),
        n_pages,
        seed: 42,
        link_density,
        change_profile,
        robots: None,
    }
    .generate()
    .unwrap()
}

#[test]
fn small_site_adjacency_matches_oracle() {
    assert_eq!(
        site(5, 2.0, vec![]).adjacency_list(),
        include_str!("golden/site_seed42_n5_d2.adj")
    );
}

#[test]
fn acceptance_site_adjacency_matches_oracle() {
    assert_eq!(
        site(200, 3.0, vec![]).adjacency_list(),
        include_str!("golden/site_seed42_n200_d3.adj")
    );
}

#[test]
fn change_trace_matches_oracle() {
    let mut s = site(5, 2.0, vec![0.5]);
    s.advance_to(100).unwrap();
    let mut trace = String::new();
    for page in s.pages() {
        let ticks: Vec<String> = page.modified_times.iter().map(u64::to_string).collect();
        trace.push_str(&format!("{} {}\n", page.path, ticks.join(" ")));
        assert_eq!(page.version as usize, page.modified_times.len());
    }
    assert_eq!(trace, include_str!("golden/changes_seed42_n5_p05_t100.txt"));
}
