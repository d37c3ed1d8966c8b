//! Deterministic synthetic book catalogues for desk-scale experiments: a
//! fixed record shape, pool-drawn strings, and a price column that covers
//! `1..=500` uniformly (an exact multiset, shuffled), so value-range queries
//! hit predictable record counts.

use crate::xml_model::{ElementNode, XmlTree};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lowest generated price.
pub const PRICE_MIN: u32 = 1;
/// Number of distinct prices; values cover `PRICE_MIN..PRICE_MIN + PRICE_SPAN`.
pub const PRICE_SPAN: u32 = 500;

const TITLES: &[&str] = &[
    "Computing essentials",
    "Android programming in practice",
    "Core language fundamentals",
    "Distributed systems field guide",
    "Relational databases revisited",
    "Streams and pipelines",
    "The query optimizer handbook",
    "Storage engines from scratch",
    "Markup languages at scale",
    "Network programming notes",
    "Concurrency without fear",
    "Information retrieval basics",
];

const PUBLISHERS: &[&str] = &[
    "McGraw Hill",
    "Prentice Hall",
    "Mita Murach and Associates",
    "North Lake Press",
    "Harbor Technical",
    "Sycamore Books",
];

const CATEGORIES: &[&str] = &["Computing", "Programming", "Databases", "Networks", "Theory"];

const SURNAMES: &[&str] = &[
    "O'Leary", "Murach", "Wrightson", "Horstmann", "Cornell", "Tanaka", "Okafor", "Silva",
    "Novak", "Haugen", "Demir", "Fournier",
];

const GIVEN: &[&str] = &[
    "Timothy", "Linda", "Joel", "Tyler", "Cay", "Gary", "Mei", "Amara", "Pavel", "Ingrid",
    "Deniz", "Claire",
];

const TOPICS: &[&str] = &[
    "Getting started",
    "Tooling and environment",
    "Data structures in depth",
    "Error handling",
    "Persistence",
    "Distribution and replication",
    "Query processing",
    "Performance measurement",
    "Security considerations",
    "Case studies",
];

fn leaf(tag: &str, text: impl Into<String>) -> ElementNode {
    let mut e = ElementNode::new(tag);
    e.text = text.into();
    e
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.random_range(0..pool.len())]
}

fn record(rng: &mut ChaCha8Rng, price: u32) -> ElementNode {
    let mut book = ElementNode::new("book");
    book.children.push(leaf("title", pick(rng, TITLES)));
    book.children.push(leaf(
        "ISBN",
        format!(
            "978-{}-{:02}-{:06}-{}",
            rng.random_range(0..10u32),
            rng.random_range(0..100u32),
            rng.random_range(0..1_000_000u32),
            rng.random_range(0..10u32)
        ),
    ));
    let mut authors = ElementNode::new("authors");
    for _ in 0..rng.random_range(1..=3u32) {
        authors.children.push(leaf(
            "author",
            format!("{}, {}", pick(rng, SURNAMES), pick(rng, GIVEN)),
        ));
    }
    book.children.push(authors);
    book.children.push(leaf("publisher", pick(rng, PUBLISHERS)));
    book.children
        .push(leaf("year", rng.random_range(1990..=2024u32).to_string()));
    book.children.push(leaf("category", pick(rng, CATEGORIES)));
    book.children.push(leaf("price", price.to_string()));
    let mut toc = ElementNode::new("TableOfContent");
    for number in 1..=rng.random_range(1..=3u32) {
        let mut chapter = ElementNode::new("Chapter");
        chapter.children.push(leaf("Number", number.to_string()));
        chapter.children.push(leaf("Topic", pick(rng, TOPICS)));
        toc.children.push(chapter);
    }
    book.children.push(toc);
    book
}

/// Builds a catalogue of `records` book elements, fully determined by `seed`.
/// Prices are the exact multiset `{PRICE_MIN + i mod PRICE_SPAN}` shuffled,
/// so every equal-width price band holds the same number of records (exactly,
/// whenever `records` is a multiple of `PRICE_SPAN`).
pub fn generate_books(records: usize, seed: u64) -> XmlTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prices: Vec<u32> = (0..records)
        .map(|i| PRICE_MIN + (i as u32 % PRICE_SPAN))
        .collect();
    prices.shuffle(&mut rng);
    let mut root = ElementNode::new("books");
    root.children = prices.into_iter().map(|p| record(&mut rng, p)).collect();
    XmlTree {
        root,
        doc_id: "books".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::annotate;
    use crate::xml_model::{parse_document, serialize_document, structural_equal};

    #[test]
    fn deterministic_under_seed() {
        let a = serialize_document(&generate_books(50, 7));
        let b = serialize_document(&generate_books(50, 7));
        assert_eq!(a, b);
        let c = serialize_document(&generate_books(50, 8));
        assert_ne!(a, c);
    }

    #[test]
    fn record_shape_matches_catalogue_layout() {
        let t = generate_books(10, 1);
        assert_eq!(t.root.tag, "books");
        assert_eq!(t.root.children.len(), 10);
        for book in &t.root.children {
            let tags: Vec<&str> = book.children.iter().map(|c| c.tag.as_str()).collect();
            assert_eq!(
                tags,
                [
                    "title",
                    "ISBN",
                    "authors",
                    "publisher",
                    "year",
                    "category",
                    "price",
                    "TableOfContent"
                ]
            );
        }
    }

    #[test]
    fn schema_order_is_stable() {
        let t = generate_books(5, 3);
        let labeled = annotate(&t, "address").unwrap();
        assert_eq!(
            labeled.schema.tags(),
            [
                "books",
                "book",
                "title",
                "ISBN",
                "authors",
                "author",
                "publisher",
                "year",
                "category",
                "price",
                "TableOfContent",
                "Chapter",
                "Number",
                "Topic"
            ]
        );
    }

    #[test]
    fn prices_form_exact_uniform_multiset() {
        let t = generate_books(1000, 9);
        let mut prices: Vec<u32> = t
            .root
            .children
            .iter()
            .map(|b| {
                b.children
                    .iter()
                    .find(|c| c.tag == "price")
                    .unwrap()
                    .text
                    .parse()
                    .unwrap()
            })
            .collect();
        prices.sort_unstable();
        let expected: Vec<u32> = {
            let mut v: Vec<u32> = (0..1000).map(|i| 1 + (i % 500) as u32).collect();
            v.sort_unstable();
            v
        };
        assert_eq!(prices, expected);
        // every 100-wide band holds exactly 200 of the 1000 records
        for band in 0..5u32 {
            let lo = 1 + band * 100;
            let hi = lo + 99;
            let n = prices.iter().filter(|&&p| p >= lo && p <= hi).count();
            assert_eq!(n, 200);
        }
    }

    #[test]
    fn output_reparses_identically() {
        let t = generate_books(25, 4);
        let bytes = serialize_document(&t);
        let back = parse_document(&bytes).unwrap();
        assert!(structural_equal(&t, &back, &[]));
    }
}
