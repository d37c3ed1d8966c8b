//! Shared generators and independent oracles for the integration suites.
//! Everything here recomputes results from first principles (tree positions,
//! plain recursion, the `regex` crate) so the library is checked against
//! implementations it does not share code with.

#![allow(dead_code)] // each test target uses its own subset

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use xmlfrag::addressing::{Address, AnnotatedTree, Relationship};
use xmlfrag::xml_model::{ElementNode, XmlTree};

/// Tag pool for random documents. Deliberately avoids `address`, `ref`,
/// `hole`, and `id` so generated trees never collide with label attributes,
/// reference attributes, or hole markers used by the operators under test.
pub const TAG_POOL: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa",
];

const WORD_POOL: &[&str] = &[
    "amber", "basalt", "cobalt", "dune", "ember", "fjord", "garnet", "harbor", "indigo", "jasper",
];

const ATTR_POOL: &[&str] = &["kind", "lang", "unit"];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..4u8) {
        0 => String::new(),
        1 => WORD_POOL[rng.random_range(0..WORD_POOL.len())].to_string(),
        2 => rng.random_range(0..1000u32).to_string(),
        _ => format!(
            "{} {}",
            WORD_POOL[rng.random_range(0..WORD_POOL.len())],
            rng.random_range(0..100u32)
        ),
    }
}

fn grow(
    rng: &mut ChaCha8Rng,
    node: &mut ElementNode,
    budget: &mut usize,
    depth: usize,
    max_depth: usize,
) {
    if depth >= max_depth || *budget == 0 {
        node.text = random_text(rng);
        return;
    }
    let want = rng.random_range(0..=4usize).min(*budget);
    if want == 0 {
        node.text = random_text(rng);
        return;
    }
    if rng.random_range(0..3u8) == 0 {
        node.text = random_text(rng);
    }
    for _ in 0..want {
        if *budget == 0 {
            break;
        }
        *budget -= 1;
        let mut child = ElementNode::new(TAG_POOL[rng.random_range(0..TAG_POOL.len())]);
        if rng.random_range(0..4u8) == 0 {
            child.set_attr(
                ATTR_POOL[rng.random_range(0..ATTR_POOL.len())],
                WORD_POOL[rng.random_range(0..WORD_POOL.len())],
            );
        }
        grow(rng, &mut child, budget, depth + 1, max_depth);
        node.children.push(child);
    }
}

/// A random element tree with at most `max_elements` elements and at most
/// `max_depth` levels below the root (the root itself sits at depth 0).
pub fn random_document(rng: &mut ChaCha8Rng, max_elements: usize, max_depth: usize) -> XmlTree {
    let mut root = ElementNode::new(TAG_POOL[rng.random_range(0..TAG_POOL.len())]);
    let mut budget = rng.random_range(0..max_elements.max(1));
    grow(rng, &mut root, &mut budget, 0, max_depth);
    XmlTree {
        root,
        doc_id: WORD_POOL[rng.random_range(0..WORD_POOL.len())].to_string(),
    }
}

/// Every labeled element paired with its child-index path from the root.
/// Paths come from tree positions alone, never from parsing the labels.
pub fn position_paths(t: &AnnotatedTree) -> Vec<(Address, Vec<usize>)> {
    fn walk(
        node: &ElementNode,
        attr: &str,
        path: &mut Vec<usize>,
        out: &mut Vec<(Address, Vec<usize>)>,
    ) {
        let addr: Address = node
            .attr(attr)
            .expect("annotated element carries a label")
            .parse()
            .expect("label parses back");
        out.push((addr, path.clone()));
        for (i, child) in node.children.iter().enumerate() {
            path.push(i);
            walk(child, attr, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    walk(&t.tree.root, &t.attr_name, &mut Vec::new(), &mut out);
    out
}

/// Relationship of two elements decided purely from their positions in the
/// tree: prefix tests on child-index paths, nothing read from the labels.
pub fn oracle_relationship(a: &[usize], b: &[usize]) -> Relationship {
    if a == b {
        return Relationship::SameNode;
    }
    if b.len() > a.len() && b[..a.len()] == *a {
        return if b.len() == a.len() + 1 {
            Relationship::ParentChild
        } else {
            Relationship::AncestorDescendant
        };
    }
    if a.len() > b.len() && a[..b.len()] == *b {
        return if a.len() == b.len() + 1 {
            Relationship::ChildParent
        } else {
            Relationship::DescendantAncestor
        };
    }
    if a.len() == b.len() && !a.is_empty() && a[..a.len() - 1] == b[..b.len() - 1] {
        return if a[a.len() - 1] < b[b.len() - 1] {
            Relationship::PrecedingSibling
        } else {
            Relationship::FollowingSibling
        };
    }
    Relationship::Unrelated
}

fn escaped_len(s: &str, quote: bool) -> usize {
    s.chars()
        .map(|c| match c {
            '&' => 5,
            '<' | '>' => 4,
            '"' if quote => 6,
            _ => c.len_utf8(),
        })
        .sum()
}

/// Serialized byte length recomputed without building the string: open tag,
/// attributes in stored order, escaped text, children, close tag; childless
/// textless elements collapse to `<tag/>`.
pub fn independent_byte_size(node: &ElementNode) -> usize {
    let mut n = 1 + node.tag.len();
    for (name, value) in &node.attributes {
        n += 1 + name.len() + 2 + escaped_len(value, true) + 1;
    }
    if node.children.is_empty() && node.text.is_empty() {
        return n + 2;
    }
    n += 1 + escaped_len(&node.text, false);
    for child in &node.children {
        n += independent_byte_size(child);
    }
    n + 2 + node.tag.len() + 1
}

/// Element levels in the subtree, recomputed with a plain fold.
pub fn independent_height(node: &ElementNode) -> usize {
    1 + node
        .children
        .iter()
        .map(independent_height)
        .max()
        .unwrap_or(0)
}

/// Widest child list in the subtree, recomputed with a plain fold.
pub fn independent_fanout(node: &ElementNode) -> usize {
    node.children
        .iter()
        .map(independent_fanout)
        .fold(node.children.len(), usize::max)
}

/// All tag-name paths (root tag first) of length at least two, one per
/// element below the root. Used to aim selectors and predicates at paths
/// that actually exist in a random document.
pub fn tag_paths(t: &XmlTree) -> Vec<Vec<String>> {
    fn walk(node: &ElementNode, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        prefix.push(node.tag.clone());
        if prefix.len() >= 2 {
            out.push(prefix.clone());
        }
        for child in &node.children {
            walk(child, prefix, out);
        }
        prefix.pop();
    }
    let mut out = Vec::new();
    walk(&t.root, &mut Vec::new(), &mut out);
    out
}

/// Leaf text values found under the root, for predicate values that hit.
pub fn leaf_values(t: &XmlTree) -> Vec<String> {
    fn walk(node: &ElementNode, out: &mut Vec<String>) {
        if node.children.is_empty() && !node.text.is_empty() {
            out.push(node.text.clone());
        }
        for child in &node.children {
            walk(child, out);
        }
    }
    let mut out = Vec::new();
    walk(&t.root, &mut out);
    out
}
