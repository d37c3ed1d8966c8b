//! End-to-end gate for the whole toolkit. Each check prints exactly one
//! PASS/FAIL line; any failure makes the process exit nonzero. Budgets and
//! tolerances are pinned as constants next to the checks that use them.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use xmlfrag::addressing::{
    annotate, match_pattern, record_count, relationship, Address, AddressPattern,
};
use xmlfrag::cluster::{
    allocate, decode_fillers, encode_fillers, reassemble, route_query, skew_metric, Allocation,
    Filler, FragmentStore, RoutingResult, Strategy,
};
use xmlfrag::fragmentation::{
    evaluate_predicate, fragment_by_size, horizontal_fragment, horizontal_range_fragment,
    hybrid_fragment, parse_predicate, simplex_fragment, vertical_fragment, CompareOp, Fragment,
    FragmentMeta, Manifest, PathSelector, SimplePredicate, SizeConstraints,
};
use xmlfrag::generate::generate_books;
use xmlfrag::workload::{affinity_grouping, build_eam, build_eum, parse_workload, ElementAffinityMatrix};
use xmlfrag::xml_model::{
    parse_document, strip_attribute, structural_equal, subtree_byte_size, ElementNode,
};
use xmlfrag::Error;

const ATTR: &str = "address";

const FIXTURE_BUDGET: Duration = Duration::from_secs(1);
const MEDIUM_BUDGET: Duration = Duration::from_secs(5);
const LARGE_BUDGET: Duration = Duration::from_secs(60);
const SKEW_TOLERANCE: f64 = 1e-12;
const ROUND_TRIP_DOCS: usize = 1_000;
const PATTERN_SAMPLES: usize = 12_000;
const FILLER_PAIRS: usize = 200;
const FILLER_PERMUTATIONS: usize = 20;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/books.xml");

fn label_of<'a>(node: &'a ElementNode) -> &'a str {
    node.attr(ATTR).expect("element is labeled")
}

fn sorted_record_matches(root: &ElementNode, p: &SimplePredicate) -> Vec<Address> {
    let mut out: Vec<Address> = root
        .children
        .iter()
        .filter(|c| evaluate_predicate(c, p))
        .map(|c| label_of(c).parse().expect("label parses"))
        .collect();
    out.sort();
    out
}

fn check_catalog_labels() {
    let start = Instant::now();
    let bytes = std::fs::read(FIXTURE).expect("fixture readable");
    let doc = parse_document(&bytes).expect("fixture parses");
    let labeled = annotate(&doc, ATTR).expect("fixture annotates");

    let expected_tags = [
        "books", "book", "title", "ISBN", "authors", "author", "publisher", "year", "category",
        "price", "TableOfContent", "Chapter", "Number", "Topic",
    ];
    assert_eq!(
        labeled.schema.tags(),
        &expected_tags.map(String::from),
        "tag types must number the names in first-encounter order"
    );

    let root = &labeled.tree.root;
    assert_eq!(label_of(root), "/0");
    let book1 = &root.children[0];
    assert_eq!(label_of(book1), "1/1");
    assert_eq!(label_of(&book1.children[0]), "1.1/2"); // title
    assert_eq!(label_of(&book1.children[1]), "1.2/3"); // ISBN
    assert_eq!(label_of(&book1.children[2]), "1.3/4"); // authors
    assert_eq!(label_of(&book1.children[2].children[0]), "1.3.1/5");
    assert_eq!(label_of(&book1.children[3]), "1.4/6"); // publisher
    assert_eq!(label_of(&book1.children[4]), "1.5/7"); // year
    assert_eq!(label_of(&book1.children[5]), "1.6/8"); // category
    assert_eq!(label_of(&book1.children[6]), "1.7/9"); // price
    let toc = &book1.children[7];
    assert_eq!(label_of(toc), "1.8/10");
    assert_eq!(label_of(&toc.children[0]), "1.8.1/11");
    assert_eq!(label_of(&toc.children[0].children[0]), "1.8.1.1/12");
    assert_eq!(label_of(&toc.children[0].children[1]), "1.8.1.2/13");
    assert_eq!(label_of(&root.children[1]), "2/1");
    assert_eq!(label_of(&root.children[2]), "3/1");

    let elapsed = start.elapsed();
    assert!(
        elapsed < FIXTURE_BUDGET,
        "fixture labeling took {elapsed:?}, budget {FIXTURE_BUDGET:?}"
    );
}

fn check_record_count_and_even_split() {
    let start = Instant::now();
    let doc = generate_books(5_000, 11);
    let labeled = annotate(&doc, ATTR).expect("annotates");

    assert_eq!(
        record_count(&labeled, 1, 1).expect("count readable"),
        5_000,
        "record count read straight off the labels"
    );
    let last: Address = "5000/1".parse().expect("address parses");
    assert_eq!(
        labeled.element_at(&last).expect("last record found").tag,
        "book"
    );

    let (fragments, manifest) =
        horizontal_range_fragment(&labeled, 2).expect("two-way split succeeds");
    assert_eq!(fragments.len(), 2);
    for f in &fragments {
        assert_eq!(
            f.content.root.children.len(),
            2_500,
            "each half holds exactly half the records"
        );
    }
    assert_eq!(manifest.fragments[0].range, Some((1, 2_500)));
    assert_eq!(manifest.fragments[1].range, Some((2_501, 5_000)));
    assert_eq!(label_of(&fragments[1].content.root.children[0]), "2501/1");

    let elapsed = start.elapsed();
    assert!(
        elapsed < MEDIUM_BUDGET,
        "5000-record split took {elapsed:?}, budget {MEDIUM_BUDGET:?}"
    );
}

fn check_point_query_routing_at_scale() {
    let start = Instant::now();
    let doc = generate_books(100_000, 42);
    let labeled = annotate(&doc, ATTR).expect("annotates");

    let chain: Vec<SimplePredicate> = (1..=5)
        .map(|k| {
            parse_predicate(&format!("/books/book/price <= {}", 100 * k))
                .expect("predicate parses")
        })
        .collect();
    let (fragments, manifest, _overlaps) =
        horizontal_fragment(&labeled, &chain).expect("price bands fragment");
    assert_eq!(
        fragments.len(),
        5,
        "every record lands in a band, so no remainder fragment"
    );

    let alloc = allocate(&manifest, 5, Strategy::Range).expect("range placement");
    let store = FragmentStore::from_fragments(&fragments);
    drop(fragments);

    let q = parse_predicate("/books/book/price = 98").expect("query parses");
    let routed = route_query(&q, &manifest, &alloc, &store).expect("query routes");

    let expected = sorted_record_matches(&labeled.tree.root, &q);
    assert_eq!(expected.len(), 200, "price 98 appears exactly 200 times");
    assert_eq!(routed.matches, expected, "routing finds what a full scan finds");
    assert_eq!(
        routed.nodes.len(),
        1,
        "a point query inside one band touches one node, got {:?}",
        routed.nodes
    );
    let home = alloc.node_of("f1").expect("band f1 is placed");
    assert!(routed.nodes.contains(&home), "touched node holds band f1");
    assert_eq!(
        routed.scanned, 20_000,
        "only the 20000 records of one band are scanned"
    );

    let elapsed = start.elapsed();
    assert!(
        elapsed < LARGE_BUDGET,
        "100000-record pipeline took {elapsed:?}, budget {LARGE_BUDGET:?}"
    );
}

fn random_predicates(
    rng: &mut ChaCha8Rng,
    paths: &[Vec<String>],
    values: &[String],
    how_many: usize,
) -> Vec<SimplePredicate> {
    const OPS: [CompareOp; 6] = [
        CompareOp::Eq,
        CompareOp::Ne,
        CompareOp::Lt,
        CompareOp::Le,
        CompareOp::Gt,
        CompareOp::Ge,
    ];
    (0..how_many)
        .map(|_| {
            let path = paths[rng.random_range(0..paths.len())].clone();
            let value = if !values.is_empty() && rng.random_range(0..2u8) == 0 {
                values[rng.random_range(0..values.len())].clone()
            } else {
                rng.random_range(0..500u32).to_string()
            };
            SimplePredicate {
                path,
                op: OPS[rng.random_range(0..OPS.len())],
                value,
            }
        })
        .collect()
}

fn fragment_randomly(
    rng: &mut ChaCha8Rng,
    labeled: &xmlfrag::addressing::AnnotatedTree,
    model: usize,
) -> (Vec<Fragment>, Manifest) {
    let paths = common::tag_paths(&labeled.tree);
    let values = common::leaf_values(&labeled.tree);
    let fallback_parts = rng.random_range(1..=4u64);
    match model {
        0 if !paths.is_empty() => {
            let how_many = rng.random_range(1..=3);
            let preds = random_predicates(rng, &paths, &values, how_many);
            let (f, m, _) = horizontal_fragment(labeled, &preds).expect("horizontal");
            (f, m)
        }
        2 if !paths.is_empty() => {
            let path = &paths[rng.random_range(0..paths.len())];
            let sel = PathSelector::parse(&format!("/{}", path.join("/"))).expect("selector");
            let (rest, proj, m) = vertical_fragment(labeled, &sel, "ref").expect("vertical");
            (vec![rest, proj], m)
        }
        3 if !paths.is_empty() => {
            let how_many = rng.random_range(1..=2);
            let preds = random_predicates(rng, &paths, &values, how_many);
            let path = &paths[rng.random_range(0..paths.len())];
            let sel = PathSelector::parse(&format!("/{}", path.join("/"))).expect("selector");
            let (f, m, _) = hybrid_fragment(labeled, &preds, &sel, "ref").expect("hybrid");
            (f, m)
        }
        4 if !labeled.tree.root.children.is_empty() => {
            let total = subtree_byte_size(&labeled.tree.root);
            let threshold = rng.random_range(20..=total + 50);
            fragment_by_size(labeled, threshold).expect("size buckets")
        }
        5 => {
            let constraints = SizeConstraints {
                max_size: rng.random_range(40..=2_500),
                max_width: rng.random_range(1..=6),
                max_depth: rng.random_range(1..=7),
            };
            simplex_fragment(labeled, &constraints).expect("constraint cuts")
        }
        _ => horizontal_range_fragment(labeled, fallback_parts).expect("range split"),
    }
}

fn check_round_trip_over_random_documents() {
    for i in 0..ROUND_TRIP_DOCS {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA400_0000 + i as u64);
        let doc = common::random_document(&mut rng, 200, 6);
        let labeled = annotate(&doc, ATTR).expect("random doc annotates");
        let model = i % 6;
        let (fragments, manifest) = fragment_randomly(&mut rng, &labeled, model);
        let store = FragmentStore::from_fragments(&fragments);
        let back = reassemble(&manifest, &store)
            .unwrap_or_else(|e| panic!("doc {i} model {model}: reassembly failed: {e}"));
        assert!(
            structural_equal(&back, &labeled.tree, &[]),
            "doc {i} model {model}: labeled round trip differs"
        );
        assert_eq!(back.doc_id, doc.doc_id, "doc {i} model {model}: id survives");
        let stripped = strip_attribute(&back, ATTR);
        assert!(
            structural_equal(&stripped, &doc, &[]),
            "doc {i} model {model}: stripped round trip differs from the original"
        );
    }
}

fn check_against_independent_oracles() {
    // Patterns under test, each paired with its compiled regular expression.
    let mut patterns = Vec::new();
    for depth in 0..=6usize {
        for tag_type in 0..=14u32 {
            let source = if depth == 0 {
                format!("/{tag_type}")
            } else {
                format!("{}/{}", vec!["d"; depth].join("."), tag_type)
            };
            let p = AddressPattern::parse(&source).expect("pattern parses");
            let re = Regex::new(&p.regex()).expect("pattern regex compiles");
            patterns.push((p, re));
        }
    }
    let mut sample_rng = ChaCha8Rng::seed_from_u64(0xA500_1000);
    let mut samples = 0usize;
    let check = |addr: &Address, rng: &mut ChaCha8Rng| {
        for _ in 0..3 {
            let (p, re) = &patterns[rng.random_range(0..patterns.len())];
            let rendered = addr.to_string();
            assert_eq!(
                match_pattern(addr, p),
                re.is_match(&rendered),
                "pattern {} vs address {rendered}",
                p.source()
            );
        }
    };

    // The same corpus the round-trip check walks: every ordered pair of
    // elements judged twice, once from the labels and once from raw tree
    // positions; every tenth document also feeds the pattern oracle.
    let mut pair_count = 0usize;
    for i in 0..ROUND_TRIP_DOCS as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA400_0000 + i);
        let doc = common::random_document(&mut rng, 200, 6);
        let labeled = annotate(&doc, ATTR).expect("annotates");
        let entries = common::position_paths(&labeled);
        for (a, pa) in &entries {
            for (b, pb) in &entries {
                let got = relationship(a, b);
                let want = common::oracle_relationship(pa, pb);
                assert_eq!(
                    got, want,
                    "doc {i}: relationship({a}, {b}) disagrees with tree positions"
                );
                pair_count += 1;
            }
        }
        if i % 10 == 0 {
            for (addr, _) in &entries {
                check(addr, &mut sample_rng);
                samples += 3;
            }
        }
    }
    assert!(pair_count > 100_000, "enough pairs exercised: {pair_count}");

    // Synthetic addresses cover shapes the corpus may have missed.
    while samples < PATTERN_SAMPLES {
        let depth = sample_rng.random_range(0..=6usize);
        let ordinals: Vec<u32> = (0..depth).map(|_| sample_rng.random_range(1..=15)).collect();
        let addr = Address::new(ordinals, sample_rng.random_range(0..=15));
        check(&addr, &mut sample_rng);
        samples += 3;
    }
    assert!(samples >= PATTERN_SAMPLES);
}

fn check_fillers_decode_in_any_order() {
    for p in 0..FILLER_PAIRS as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA600_0000 + p);
        let doc = loop {
            let d = common::random_document(&mut rng, 80, 5);
            if !d.root.children.is_empty() {
                break d;
            }
        };
        let labeled = annotate(&doc, ATTR).expect("annotates");
        let candidates: Vec<Address> = common::position_paths(&labeled)
            .into_iter()
            .skip(1) // never cut the root
            .map(|(a, _)| a)
            .collect();
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.shuffle(&mut rng);
        let n_cuts = rng.random_range(1..=candidates.len().min(5));
        let cuts: Vec<Address> = order[..n_cuts]
            .iter()
            .map(|&k| candidates[k].clone())
            .collect();

        let fillers = encode_fillers(&labeled, &cuts, "hole").expect("encodes");
        assert_eq!(fillers.len(), n_cuts + 1, "one filler per cut plus the residue");

        for _ in 0..FILLER_PERMUTATIONS {
            let mut shuffled = fillers.clone();
            shuffled.shuffle(&mut rng);
            let decoded = decode_fillers(&shuffled, "hole").expect("decodes");
            assert!(
                structural_equal(&decoded.tree, &labeled.tree, &[]),
                "pair {p}: decoded tree differs"
            );
            assert_eq!(decoded.tree.doc_id, labeled.tree.doc_id);
            assert!(decoded.orphans.is_empty(), "pair {p}: nothing is orphaned");
        }

        let withheld = fillers[rng.random_range(1..fillers.len())].filler_id.clone();
        let mut partial: Vec<Filler> = fillers
            .into_iter()
            .filter(|f| f.filler_id != withheld)
            .collect();
        partial.shuffle(&mut rng);
        match decode_fillers(&partial, "hole") {
            Err(Error::IncompleteStream(ids)) => assert!(
                ids.contains(&withheld),
                "pair {p}: error must name the withheld filler {withheld}, got {ids:?}"
            ),
            other => panic!("pair {p}: expected an incomplete-stream error, got {other:?}"),
        }
    }
}

fn enumerate_partitions(items: &[u32], k: usize) -> Vec<Vec<Vec<u32>>> {
    fn go(rest: &[u32], groups: &mut Vec<Vec<u32>>, k: usize, out: &mut Vec<Vec<Vec<u32>>>) {
        match rest.split_first() {
            None => {
                if groups.len() == k {
                    let mut snapshot: Vec<Vec<u32>> = groups
                        .iter()
                        .map(|g| {
                            let mut g = g.clone();
                            g.sort_unstable();
                            g
                        })
                        .collect();
                    snapshot.sort_by_key(|g| g[0]);
                    out.push(snapshot);
                }
            }
            Some((&head, tail)) => {
                for i in 0..groups.len() {
                    groups[i].push(head);
                    go(tail, groups, k, out);
                    groups[i].pop();
                }
                if groups.len() < k {
                    groups.push(vec![head]);
                    go(tail, groups, k, out);
                    groups.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    go(items, &mut Vec::new(), k, &mut out);
    out
}

fn partition_score(groups: &[Vec<u32>], aff: &ElementAffinityMatrix) -> f64 {
    groups
        .iter()
        .map(|g| {
            let mut s = 0.0;
            for i in 0..g.len() {
                for j in i + 1..g.len() {
                    s += aff.at(g[i], g[j]);
                }
            }
            s
        })
        .sum()
}

fn check_affinity_grouping_against_exhaustive_search() {
    let schema = annotate(&generate_books(3, 1), ATTR).expect("annotates").schema;
    let workload_json = r#"[
        {"id": "q1", "elements": ["title", "price"], "freq": 10},
        {"id": "q2", "elements": ["price", "year"], "freq": 5}
    ]"#;
    let workload = parse_workload(workload_json, &schema).expect("workload parses");
    let eam = build_eam(&build_eum(&workload, &schema).expect("usage matrix"));

    let title = schema.tag_type("title").expect("title known");
    let price = schema.tag_type("price").expect("price known");
    let year = schema.tag_type("year").expect("year known");
    assert_eq!(eam.at(title, price), 10.0);
    assert_eq!(eam.at(price, year), 5.0);
    assert_eq!(eam.at(title, year), 0.0);
    assert_eq!(eam.at(price, title), 10.0, "affinity is symmetric");

    let children = [title, price, year];
    let grouped = affinity_grouping(&eam, &children, 2).expect("grouping succeeds");
    assert_eq!(
        grouped,
        vec![vec![title, price], vec![year]],
        "title and price stay together, year stands alone"
    );

    let all = enumerate_partitions(&children, 2);
    assert_eq!(all.len(), 3, "three ways to split three elements into two groups");
    let best = all
        .iter()
        .max_by(|a, b| {
            partition_score(a, &eam)
                .partial_cmp(&partition_score(b, &eam))
                .expect("scores are finite")
        })
        .expect("at least one partition");
    let runner_up = all
        .iter()
        .filter(|p| *p != best)
        .map(|p| partition_score(p, &eam))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        partition_score(best, &eam) > runner_up,
        "the best partition is unique, so the comparison is meaningful"
    );
    assert_eq!(&grouped, best, "greedy grouping matches exhaustive search");
}

fn check_bounds_and_skew() {
    // Size buckets: recompute every bucket total from scratch and hold it
    // against the threshold; flagged buckets are single oversize records.
    let doc = generate_books(300, 7);
    let labeled = annotate(&doc, ATTR).expect("annotates");
    let mut saw_flagged = false;
    let mut saw_unflagged = false;
    for threshold in [600usize, 900, 1_500, 3_000] {
        let (fragments, _) = fragment_by_size(&labeled, threshold).expect("buckets");
        let mut restored = 0usize;
        for f in &fragments {
            let total: usize = f
                .content
                .root
                .children
                .iter()
                .map(common::independent_byte_size)
                .sum();
            restored += f.content.root.children.len();
            match f.meta {
                FragmentMeta::SizeBucket { oversize: false, .. } => {
                    saw_unflagged = true;
                    assert!(
                        total <= threshold,
                        "bucket {} holds {total} bytes over threshold {threshold}",
                        f.fragment_id
                    );
                }
                FragmentMeta::SizeBucket { oversize: true, .. } => {
                    saw_flagged = true;
                    assert_eq!(
                        f.content.root.children.len(),
                        1,
                        "an oversize bucket isolates one record"
                    );
                    assert!(
                        total > threshold,
                        "bucket {} flagged but only {total} bytes under {threshold}",
                        f.fragment_id
                    );
                }
                _ => panic!("unexpected bucket descriptor"),
            }
        }
        assert_eq!(restored, 300, "buckets cover every record exactly once");
    }
    assert!(saw_flagged && saw_unflagged, "both bucket kinds exercised");

    // Constraint cuts: recompute size, fanout, and height independently.
    let doc = generate_books(40, 8);
    let labeled = annotate(&doc, ATTR).expect("annotates");
    let mut saw_flagged = false;
    let mut saw_unflagged = false;
    for constraints in [
        SizeConstraints { max_size: 3_000, max_width: 5, max_depth: 3 },
        SizeConstraints { max_size: 60, max_width: 5, max_depth: 3 },
    ] {
        let (fragments, _) = simplex_fragment(&labeled, &constraints).expect("cuts");
        for f in &fragments {
            let FragmentMeta::Constraints { flagged } = f.meta else {
                continue; // the skeleton carries no bound of its own
            };
            let size = common::independent_byte_size(&f.content.root);
            let width = common::independent_fanout(&f.content.root);
            let depth = common::independent_height(&f.content.root);
            if flagged {
                saw_flagged = true;
                assert!(
                    size > constraints.max_size
                        || width > constraints.max_width
                        || depth > constraints.max_depth,
                    "cut {} flagged yet inside every ceiling",
                    f.fragment_id
                );
            } else {
                saw_unflagged = true;
                assert!(
                    size <= constraints.max_size
                        && width <= constraints.max_width
                        && depth <= constraints.max_depth,
                    "cut {} breaks a ceiling: {size} bytes, width {width}, depth {depth}",
                    f.fragment_id
                );
            }
        }
    }
    assert!(saw_flagged && saw_unflagged, "both cut kinds exercised");

    // Load skew: perfectly even loads score 0; loads 100 and 300 score 1/2.
    let alloc = Allocation {
        node_count: 2,
        placement: BTreeMap::new(),
    };
    let load = |a: u64, b: u64| RoutingResult {
        nodes: [0, 1].into_iter().collect(),
        matches: Vec::new(),
        scanned: a + b,
        per_node_scanned: [(0, a), (1, b)].into_iter().collect(),
    };
    let even = skew_metric(&[load(250, 250)], &alloc);
    assert_eq!(even, 0.0, "equal loads have zero skew");
    let skew = skew_metric(&[load(100, 300)], &alloc);
    assert!(
        (skew - 0.5).abs() < SKEW_TOLERANCE,
        "skew over loads [100, 300] must be 0.5, got {skew}"
    );
}

fn main() {
    let checks: &[(&str, fn())] = &[
        (
            "catalog fixture labels and tag numbering",
            check_catalog_labels,
        ),
        (
            "record count and even two-way split at 5000 records",
            check_record_count_and_even_split,
        ),
        (
            "point query routed to a single node at 100000 records",
            check_point_query_routing_at_scale,
        ),
        (
            "fragment/reassemble round trip over 1000 random documents",
            check_round_trip_over_random_documents,
        ),
        (
            "relationships and patterns agree with independent oracles",
            check_against_independent_oracles,
        ),
        (
            "filler streams decode in any arrival order",
            check_fillers_decode_in_any_order,
        ),
        (
            "affinity grouping matches exhaustive search",
            check_affinity_grouping_against_exhaustive_search,
        ),
        (
            "size and constraint bounds hold and load skew is exact",
            check_bounds_and_skew,
        ),
    ];

    let mut failures = 0usize;
    for (name, check) in checks {
        let start = Instant::now();
        match catch_unwind(AssertUnwindSafe(check)) {
            Ok(()) => println!("PASS {name} ({:.2?})", start.elapsed()),
            Err(payload) => {
                failures += 1;
                let msg = payload
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| payload.downcast_ref::<&str>().copied())
                    .unwrap_or("panic without message");
                println!("FAIL {name}: {msg}");
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} check(s) failed");
        std::process::exit(1);
    }
}
