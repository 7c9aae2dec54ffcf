use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use politecrawl::engine::{read_report, ReportLine};
use politecrawl::index::WordIndex;
use politecrawl::simweb::{oracle_reachable, SiteSpec};
use politecrawl::url::DocId;
use politecrawl_cli::{index_dump_path, run, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE};

fn exec(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("politecrawl").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_site(dir: &Path, robots: Option<&str>) -> (SiteSpec, String) {
    let spec = SiteSpec {
        domain: "sim.test".into(),
        n_pages: 60,
        seed: 7,
        link_density: 2.0,
        change_profile: vec![0.1, 0.4],
        robots: robots.map(str::to_string),
    };
    let path = dir.join("site.json");
    fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    (spec, path.to_str().unwrap().to_string())
}

#[test]
fn robots_check_prints_decision() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("robots.txt");
    fs::write(&file, "User-agent: *\nDisallow: /images/\n").unwrap();
    let f = file.to_str().unwrap();
    let (code, out, _) = exec(&["robots-check", "--file", f, "--agent", "AnyBot", "--path", "/images/x"]);
    assert_eq!((code, out.as_str()), (EXIT_OK, "Disallowed (Disallow /images/)\n"));
    let (code, out, _) = exec(&["robots-check", "--file", f, "--agent", "AnyBot", "--path", "/docs/"]);
    assert_eq!((code, out.as_str()), (EXIT_OK, "Allowed\n"));
    let (code, out, err) = exec(&["robots-check", "--file", f, "--agent", "AnyBot", "--path", "docs"]);
    assert_eq!(code, EXIT_DOMAIN);
    assert!(out.is_empty());
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn unreadable_file_is_domain_error() {
    let (code, out, err) = exec(&["robots-check", "--file", "/no/such/file", "--agent", "a", "--path", "/"]);
    assert_eq!(code, EXIT_DOMAIN);
    assert!(out.is_empty());
    assert!(err.starts_with("error: cannot read"));
}

#[test]
fn usage_errors() {
    assert_eq!(exec(&["crawl", "--bogus"]).0, EXIT_USAGE);
    assert_eq!(exec(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(exec(&[]).0, EXIT_USAGE);
    // live crawls must be bounded
    let (code, _, err) = exec(&["crawl", "--seed", "http://e.com/", "--agent", "a", "--out", "/tmp/never"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("--max-pages"));
    assert!(!Path::new("/tmp/never").exists());
    let (code, _, _) = exec(&["crawl", "--seed", "http://e.com/", "--agent", "a", "--source", "sim", "--out", "/tmp/never"]);
    assert_eq!(code, EXIT_USAGE);
    let (code, _, _) = exec(&[
        "crawl", "--seed", "http://e.com/", "--agent", "a", "--workers", "0", "--source", "sim", "--site", "x", "--out", "o",
    ]);
    assert_eq!(code, EXIT_USAGE);
    assert_eq!(exec(&["sim", "--site", "x", "--policy", "greedy", "--budget", "1", "--ticks", "1"]).0, EXIT_USAGE);
    let (code, out, _) = exec(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("robots-check"));
}

#[test]
fn sim_crawl_matches_oracle_and_query_reads_dump() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, site) = write_site(dir.path(), Some("User-agent: *\nDisallow: /blog/\n"));
    let out = dir.path().join("report.jsonl");
    let (code, stdout, err) = exec(&[
        "crawl", "--seed", "http://sim.test/", "--agent", "Bot", "--source", "sim", "--site", &site, "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(stdout.starts_with("visited "));

    let lines = read_report(fs::File::open(&out).map(std::io::BufReader::new).unwrap()).unwrap();
    let visited: BTreeSet<u64> = lines
        .iter()
        .filter_map(|l| match l {
            ReportLine::Page(r) if r.status == "Ok" => Some(r.doc_id),
            _ => None,
        })
        .collect();
    let sim = spec.generate().unwrap();
    let expected: BTreeSet<u64> = oracle_reachable(&sim, sim.robots_policy().as_ref(), "Bot")
        .iter()
        .map(|p| sim.url_of(p).unwrap().doc_id().0)
        .collect();
    assert_eq!(visited, expected);
    assert!(matches!(lines.last(), Some(ReportLine::Summary(s)) if s.frontier_drained));

    let dump = index_dump_path(&out);
    assert_eq!(dump, dir.path().join("report.index.jsonl"));
    let index = WordIndex::read_dump(std::io::BufReader::new(fs::File::open(&dump).unwrap())).unwrap();
    let (code, stdout, _) = exec(&["query", "--index", dump.to_str().unwrap(), "web"]);
    assert_eq!(code, EXIT_OK);
    let expected: String = index
        .lookup(&["web"])
        .unwrap()
        .iter()
        .map(|(d, s)| format!("{d}\t{s}\n"))
        .collect();
    assert_eq!(stdout, expected);
}

#[test]
fn query_two_document_example() {
    let dir = tempfile::tempdir().unwrap();
    let mut index = WordIndex::new();
    index.index_document(DocId(1), &["web", "crawler", "web"]).unwrap();
    index.index_document(DocId(2), &["web"]).unwrap();
    let dump = dir.path().join("dump.jsonl");
    let mut buf = Vec::new();
    index.write_dump(&mut buf).unwrap();
    fs::write(&dump, buf).unwrap();
    let d = dump.to_str().unwrap();

    assert_eq!(exec(&["query", "--index", d, "web", "crawler"]), (EXIT_OK, "1\t3\n".into(), String::new()));
    assert_eq!(exec(&["query", "--index", d, "web"]).1, "1\t2\n2\t1\n");
    assert_eq!(exec(&["query", "--index", d, "absent"]), (EXIT_OK, String::new(), String::new()));
    let (code, _, err) = exec(&["query", "--index", d]);
    assert_eq!(code, EXIT_DOMAIN);
    assert_eq!(err, "error: query has no searchable terms\n");
    assert_eq!(exec(&["query", "--index", "/no/dump", "web"]).0, EXIT_DOMAIN);
}

#[test]
fn seed_disallowed_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (_, site) = write_site(dir.path(), Some("User-agent: *\nDisallow: /\n"));
    let out = dir.path().join("r.jsonl");
    let (code, stdout, err) = exec(&[
        "crawl", "--seed", "http://sim.test/", "--agent", "Bot", "--source", "sim", "--site", &site, "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_DOMAIN);
    assert!(stdout.is_empty());
    assert!(err.contains("disallows the seed"));
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn sim_prints_policy_table() {
    let dir = tempfile::tempdir().unwrap();
    let (_, site) = write_site(dir.path(), None);
    let (code, out, _) = exec(&["sim", "--site", &site, "--policy", "proportional", "--budget", "30", "--ticks", "25"]);
    assert_eq!(code, EXIT_OK);
    let rows: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row["policy"], "proportional");
        assert_eq!(row["period"], i as u64);
        let f = row["mean_F"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f));
        assert!(row["mean_A"].as_f64().unwrap() >= 0.0);
    }
    assert_eq!(exec(&["sim", "--site", &site, "--policy", "uniform", "--budget", "3", "--ticks", "0"]).0, EXIT_DOMAIN);
}

#[test]
fn bad_site_spec_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"domain":"x.test","n_pages":0,"seed":1,"link_density":1}"#).unwrap();
    let p = path.to_str().unwrap();
    assert_eq!(exec(&["sim", "--site", p, "--policy", "uniform", "--budget", "3", "--ticks", "5"]).0, EXIT_DOMAIN);
    fs::write(&path, "not json").unwrap();
    assert_eq!(exec(&["sim", "--site", p, "--policy", "uniform", "--budget", "3", "--ticks", "5"]).0, EXIT_DOMAIN);
}
