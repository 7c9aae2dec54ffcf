use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use politecrawl::index::tokenize;
use politecrawl::revisit::plan_proportional;
use politecrawl::robots::{decide_access, parse_robots};
use politecrawl::url::normalize_url;
use politecrawl::{crawl_cycle, CrawlConfig, DocId, NormalizedUrl, SimSource, VirtualClock};
use politecrawl_bench::bench_site;

const ROBOTS: &str = "User-agent: Googlebot\nDisallow: /search\nAllow: /search/about\n\n\
User-agent: *\nCrawl-delay: 2\nDisallow: /private/\nDisallow: /tmp/\nAllow: /private/public/\n";

fn robots(c: &mut Criterion) {
    c.bench_function("robots/parse", |b| b.iter(|| parse_robots(black_box(ROBOTS.as_bytes()))));
    let policy = parse_robots(ROBOTS.as_bytes());
    c.bench_function("robots/decide", |b| {
        b.iter(|| decide_access(Some(&policy), black_box("AnyBot"), black_box("/private/public/x.html")))
    });
}

fn urls(c: &mut Criterion) {
    let base = NormalizedUrl::parse("http://example.com/docs/index.html").unwrap();
    c.bench_function("url/normalize", |b| {
        b.iter(|| normalize_url(Some(&base), black_box("../a/./b/%7e.html?x=1#frag")))
    });
}

fn text(c: &mut Criterion) {
    let site = bench_site(50);
    let body = site.body_at("/", 0).unwrap();
    c.bench_function("index/tokenize", |b| b.iter(|| tokenize(black_box(&body))));
}

fn planning(c: &mut Criterion) {
    let rates: BTreeMap<DocId, f64> = (0..1000u64).map(|i| (DocId(i), 0.01 + (i % 37) as f64 / 37.0)).collect();
    c.bench_function("revisit/plan_proportional_1000", |b| {
        b.iter(|| plan_proportional(black_box(&rates), 5000))
    });
}

fn crawl(c: &mut Criterion) {
    let mut group = c.benchmark_group("crawl_cycle");
    group.sample_size(10);
    for workers in [1, 4] {
        group.bench_function(format!("sim200_w{workers}"), |b| {
            b.iter_batched(
                || bench_site(200),
                |site| {
                    let mut config = CrawlConfig::new(site.root_url(), "BenchBot");
                    config.workers = workers;
                    let source = SimSource::new(site);
                    crawl_cycle(&config, &source, &VirtualClock::new(0.0)).unwrap()
                },
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, robots, urls, text, planning, crawl);
criterion_main!(benches);
