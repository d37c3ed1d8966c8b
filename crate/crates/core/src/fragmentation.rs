//! Fragment operators over labeled trees: horizontal selection, ordinal-range
//! splits, vertical projection with reference links, hybrid composition,
//! size-bucket grouping, and constraint-driven top-down cuts — each emitting
//! the manifest bookkeeping that routing and reassembly consume.

use crate::addressing::{address_of, AnnotatedTree, TagSchema};
use crate::error::{Error, Result};
use crate::xml_model::{subtree_byte_size, ElementNode, XmlTree};
use crate::addressing::Address;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Comparison operator of a simple selection predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "=" => CompareOp::Eq,
            "!=" => CompareOp::Ne,
            "<" => CompareOp::Lt,
            "<=" => CompareOp::Le,
            ">" => CompareOp::Gt,
            ">=" => CompareOp::Ge,
            _ => return None,
        })
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompareOp::Eq => ord == Equal,
            CompareOp::Ne => ord != Equal,
            CompareOp::Lt => ord == Less,
            CompareOp::Le => ord != Greater,
            CompareOp::Gt => ord == Greater,
            CompareOp::Ge => ord != Less,
        }
    }
}

/// `path θ v`: an absolute element-name path, a comparison operator, and a
/// value. Serialized as `path op value`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimplePredicate {
    pub path: Vec<String>,
    pub op: CompareOp,
    pub value: String,
}

impl fmt::Display for SimplePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/{} {} {}", self.path.join("/"), self.op.symbol(), self.value)
    }
}

impl FromStr for SimplePredicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |message: &str| Error::PredicateSyntax {
            input: s.to_string(),
            message: message.to_string(),
        };
        let s = s.trim();
        let (path_part, rest) = s.split_once(char::is_whitespace).ok_or_else(|| bad("expected `path op value`"))?;
        let rest = rest.trim_start();
        let (op_part, value_part) = rest
            .split_once(char::is_whitespace)
            .ok_or_else(|| bad("expected a value after the operator"))?;
        let op = CompareOp::parse(op_part).ok_or_else(|| bad("operator must be one of = != < <= > >="))?;
        let path = parse_abs_path(path_part).map_err(|m| bad(&m))?;
        if path.len() < 2 {
            return Err(bad("path needs at least a root and a record component"));
        }
        let mut value = value_part.trim_start().to_string();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = value[1..value.len() - 1].to_string();
        }
        if value.is_empty() {
            return Err(bad("empty value"));
        }
        Ok(SimplePredicate { path, op, value })
    }
}

/// Parses the serialized `path op value` form.
pub fn parse_predicate(s: &str) -> Result<SimplePredicate> {
    s.parse()
}

fn parse_abs_path(s: &str) -> std::result::Result<Vec<String>, String> {
    let body = s.strip_prefix('/').ok_or("path must start with `/`")?;
    if body.is_empty() {
        return Err("path must name at least one element".into());
    }
    let mut out = Vec::new();
    for comp in body.split('/') {
        if comp.is_empty() {
            return Err("empty path component".into());
        }
        out.push(comp.to_string());
    }
    Ok(out)
}

/// Orders two leaf values: numerically when both parse as decimals and the
/// comparison is defined, lexicographically otherwise.
pub fn compare_values(text: &str, value: &str) -> std::cmp::Ordering {
    if let (Ok(a), Ok(b)) = (text.trim().parse::<f64>(), value.trim().parse::<f64>()) {
        if let Some(ord) = a.partial_cmp(&b) {
            return ord;
        }
    }
    text.cmp(value)
}

/// Evaluates a predicate against one record subtree: walks the path below the
/// record, and is true iff ANY reached leaf satisfies the comparison. Absent
/// path components make it false, never an error.
pub fn evaluate_predicate(record: &ElementNode, p: &SimplePredicate) -> bool {
    if p.path.len() < 2 || record.tag != p.path[1] {
        return false;
    }
    let mut nodes: Vec<&ElementNode> = vec![record];
    for comp in &p.path[2..] {
        nodes = nodes
            .iter()
            .flat_map(|n| n.children.iter().filter(|c| c.tag == *comp))
            .collect();
        if nodes.is_empty() {
            return false;
        }
    }
    nodes
        .iter()
        .any(|leaf| p.op.holds(compare_values(&leaf.text, &p.value)))
}

/// Absolute path selecting the subtree roots a vertical cut removes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSelector {
    pub path: Vec<String>,
}

impl PathSelector {
    pub fn parse(s: &str) -> Result<Self> {
        let path = parse_abs_path(s).map_err(Error::InvalidSelector)?;
        if path.len() < 2 {
            return Err(Error::InvalidSelector(
                "selector cannot name the document root".into(),
            ));
        }
        Ok(PathSelector { path })
    }

    pub fn last(&self) -> &str {
        self.path.last().expect("selector is never empty")
    }
}

impl fmt::Display for PathSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/{}", self.path.join("/"))
    }
}

impl FromStr for PathSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PathSelector::parse(s)
    }
}

/// Which operator produced a fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FragmentKind {
    Horizontal,
    VerticalProjected,
    VerticalRemainder,
    Size,
    Hybrid,
    Simplex,
    Skeleton,
}

/// What produced a fragment, in operator terms.
#[derive(Debug, Clone)]
pub enum FragmentMeta {
    /// Records selected by this predicate.
    Predicate(SimplePredicate),
    /// Records no predicate selected.
    Remainder,
    /// Contiguous leading-ordinal range (first, last), 1-based inclusive.
    OrdinalRange { first: u64, last: u64 },
    /// Subtrees projected out by this selector.
    Selector(PathSelector),
    /// Tree left behind by this selector's cut.
    SelectorRemainder(PathSelector),
    /// Greedy size bucket; `bytes` is the accumulated subtree total.
    SizeBucket { bytes: usize, oversize: bool },
    /// Subtree satisfying (or, when flagged, a leaf violating) constraints.
    Constraints { flagged: bool },
    /// Ancestors of constraint cuts.
    Skeleton,
}

/// One cut piece: a well-formed tree whose elements keep their labels.
#[derive(Debug, Clone)]
pub struct Fragment {
    pub fragment_id: String,
    pub model: FragmentKind,
    pub content: XmlTree,
    pub origin: String,
    pub meta: FragmentMeta,
}

/// Byte ceiling, fanout ceiling, and height ceiling for constraint cuts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeConstraints {
    pub max_size: usize,
    pub max_width: usize,
    pub max_depth: usize,
}

impl SizeConstraints {
    /// True iff the subtree satisfies all three ceilings.
    pub fn admits(&self, node: &ElementNode) -> bool {
        subtree_byte_size(node) <= self.max_size
            && node.max_fanout() <= self.max_width
            && node.height() <= self.max_depth
    }
}

/// Operator parameters recorded in a manifest.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Parameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parts: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_attr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_size: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_width: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<u64>,
}

/// Manifest row for one fragment file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FragmentEntry {
    pub fragment_id: String,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(u64, u64)>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
    pub tag_types: Vec<u32>,
}

/// A vertical or constraint cut point: the remainder element that lost a
/// subtree, the removed subtree's address, and the fragment now holding it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Link {
    pub remainder: String,
    pub ref_value: String,
    pub fragment_id: String,
}

/// Everything routing and reassembly need to know about one fragmentation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub origin: String,
    pub attr_name: String,
    pub schema: Vec<String>,
    pub model: String,
    pub parameters: Parameters,
    pub fragments: Vec<FragmentEntry>,
    pub links: Vec<Link>,
}

impl Manifest {
    /// The tag schema recorded at fragmentation time.
    pub fn tag_schema(&self) -> Result<TagSchema> {
        TagSchema::from_tags(self.schema.clone())
    }

    pub fn entry(&self, fragment_id: &str) -> Option<&FragmentEntry> {
        self.fragments.iter().find(|f| f.fragment_id == fragment_id)
    }

    /// Structural sanity: unique ids, resolvable links, disjoint ranges.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for f in &self.fragments {
            if !ids.insert(f.fragment_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "duplicate fragment id `{}`",
                    f.fragment_id
                )));
            }
        }
        for l in &self.links {
            if !ids.contains(l.fragment_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "link target `{}` is not a fragment",
                    l.fragment_id
                )));
            }
        }
        let mut ranges: Vec<(u64, u64)> = self.fragments.iter().filter_map(|f| f.range).collect();
        ranges.sort();
        for w in ranges.windows(2) {
            if w[0].1 >= w[1].0 {
                return Err(Error::Manifest(format!(
                    "ordinal ranges {:?} and {:?} overlap",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Manifest::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Conventional file name for one fragment of one document.
pub fn fragment_file_name(origin: &str, fragment_id: &str) -> String {
    format!("{origin}.{fragment_id}.xml")
}

/// Writes each fragment to `<origin>.<fragment_id>.xml` under `dir`.
pub fn write_fragments(dir: &Path, fragments: &[Fragment]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in fragments {
        let file = dir.join(fragment_file_name(&f.origin, &f.fragment_id));
        std::fs::write(file, crate::xml_model::serialize_document(&f.content))?;
    }
    Ok(())
}

fn shell_of(root: &ElementNode) -> ElementNode {
    ElementNode {
        tag: root.tag.clone(),
        attributes: root.attributes.clone(),
        children: Vec::new(),
        text: root.text.clone(),
    }
}

fn tree_with(shell: ElementNode, children: Vec<ElementNode>, origin: &str) -> XmlTree {
    let mut root = shell;
    root.children = children;
    XmlTree {
        root,
        doc_id: origin.to_string(),
    }
}

/// Sorted tag types occurring in a subtree, read from the labels; unlabeled
/// elements (synthesized packaging roots) are skipped.
fn collect_tag_types(node: &ElementNode, attr_name: &str, out: &mut BTreeSet<u32>) {
    if let Some(raw) = node.attr(attr_name) {
        if let Ok(addr) = crate::addressing::parse_address(raw) {
            out.insert(addr.tag_type);
        }
    }
    for c in &node.children {
        collect_tag_types(c, attr_name, out);
    }
}

fn entry_tag_types(content: &XmlTree, attr_name: &str) -> Vec<u32> {
    let mut set = BTreeSet::new();
    collect_tag_types(&content.root, attr_name, &mut set);
    set.into_iter().collect()
}

fn base_manifest(t: &AnnotatedTree, model: &str, parameters: Parameters) -> Manifest {
    Manifest {
        origin: t.tree.doc_id.clone(),
        attr_name: t.attr_name.clone(),
        schema: t.schema.tags().to_vec(),
        model: model.to_string(),
        parameters,
        fragments: Vec::new(),
        links: Vec::new(),
    }
}

fn push_entry(m: &mut Manifest, f: &Fragment) {
    let (predicate, selector, range, flagged) = match &f.meta {
        FragmentMeta::Predicate(p) => (Some(p.to_string()), None, None, false),
        FragmentMeta::Remainder => (None, None, None, false),
        FragmentMeta::OrdinalRange { first, last } => (None, None, Some((*first, *last)), false),
        FragmentMeta::Selector(s) => (None, Some(s.to_string()), None, false),
        FragmentMeta::SelectorRemainder(s) => (None, Some(s.to_string()), None, false),
        FragmentMeta::SizeBucket { oversize, .. } => (None, None, None, *oversize),
        FragmentMeta::Constraints { flagged } => (None, None, None, *flagged),
        FragmentMeta::Skeleton => (None, None, None, false),
    };
    m.fragments.push(FragmentEntry {
        fragment_id: f.fragment_id.clone(),
        file: fragment_file_name(&f.origin, &f.fragment_id),
        predicate,
        selector,
        range,
        flagged,
        tag_types: entry_tag_types(&f.content, &m.attr_name),
    });
}

/// Assigns every record (root child) to the first predicate it satisfies.
/// Returns per-predicate record indices, unmatched indices, and the addresses
/// of records that satisfied more than one predicate.
fn partition_records(
    t: &AnnotatedTree,
    predicates: &[SimplePredicate],
) -> Result<(Vec<Vec<usize>>, Vec<usize>, Vec<Address>)> {
    let records = &t.tree.root.children;
    let mut per_pred: Vec<Vec<usize>> = vec![Vec::new(); predicates.len()];
    let mut rest: Vec<usize> = Vec::new();
    let mut overlaps: Vec<Address> = Vec::new();
    for (i, record) in records.iter().enumerate() {
        let mut hits = predicates.iter().enumerate().filter_map(|(k, p)| {
            if evaluate_predicate(record, p) {
                Some(k)
            } else {
                None
            }
        });
        match hits.next() {
            Some(first) => {
                per_pred[first].push(i);
                if hits.next().is_some() {
                    overlaps.push(address_of(record, &t.attr_name)?);
                }
            }
            None => rest.push(i),
        }
    }
    Ok((per_pred, rest, overlaps))
}

/// Horizontal fragmentation: one fragment per predicate holding exactly the
/// records that satisfy it (first match wins), plus a remainder fragment for
/// unmatched records when there are any. The third result lists records that
/// satisfied several predicates — a completeness violation worth reporting,
/// not an error.
pub fn horizontal_fragment(
    t: &AnnotatedTree,
    predicates: &[SimplePredicate],
) -> Result<(Vec<Fragment>, Manifest, Vec<Address>)> {
    let (per_pred, rest, overlaps) = partition_records(t, predicates)?;
    let records = &t.tree.root.children;
    let origin = &t.tree.doc_id;
    let mut fragments = Vec::new();
    let mut manifest = base_manifest(
        t,
        "horizontal",
        Parameters {
            predicates: Some(predicates.iter().map(|p| p.to_string()).collect()),
            ..Parameters::default()
        },
    );
    for (i, (p, idxs)) in predicates.iter().zip(&per_pred).enumerate() {
        let children = idxs.iter().map(|&k| records[k].clone()).collect();
        fragments.push(Fragment {
            fragment_id: format!("f{}", i + 1),
            model: FragmentKind::Horizontal,
            content: tree_with(shell_of(&t.tree.root), children, origin),
            origin: origin.clone(),
            meta: FragmentMeta::Predicate(p.clone()),
        });
    }
    if !rest.is_empty() {
        let children = rest.iter().map(|&k| records[k].clone()).collect();
        fragments.push(Fragment {
            fragment_id: "rest".into(),
            model: FragmentKind::Horizontal,
            content: tree_with(shell_of(&t.tree.root), children, origin),
            origin: origin.clone(),
            meta: FragmentMeta::Remainder,
        });
    }
    for f in &fragments {
        push_entry(&mut manifest, f);
    }
    manifest.validate()?;
    Ok((fragments, manifest, overlaps))
}

/// Splits records into `n_parts` contiguous leading-ordinal ranges whose
/// sizes differ by at most one; extra parts beyond the record count come out
/// empty.
pub fn horizontal_range_fragment(
    t: &AnnotatedTree,
    n_parts: u64,
) -> Result<(Vec<Fragment>, Manifest)> {
    if n_parts == 0 {
        return Err(Error::Manifest("a range split needs at least one part".into()));
    }
    let records = &t.tree.root.children;
    let origin = &t.tree.doc_id;
    let n = records.len() as u64;
    let base = n / n_parts;
    let extra = n % n_parts;
    let mut fragments = Vec::new();
    let mut manifest = base_manifest(
        t,
        "range",
        Parameters {
            parts: Some(n_parts),
            ..Parameters::default()
        },
    );
    let mut start = 1u64; // leading ordinals are 1-based
    for i in 0..n_parts {
        let len = base + u64::from(i < extra);
        let (meta, children) = if len == 0 {
            (FragmentMeta::Remainder, Vec::new())
        } else {
            let lo = start;
            let hi = start + len - 1;
            start = hi + 1;
            (
                FragmentMeta::OrdinalRange { first: lo, last: hi },
                records[(lo - 1) as usize..=(hi - 1) as usize].to_vec(),
            )
        };
        fragments.push(Fragment {
            fragment_id: format!("f{}", i + 1),
            model: FragmentKind::Horizontal,
            content: tree_with(shell_of(&t.tree.root), children, origin),
            origin: origin.clone(),
            meta,
        });
    }
    for f in &fragments {
        push_entry(&mut manifest, f);
    }
    manifest.validate()?;
    Ok((fragments, manifest))
}

/// Addresses (in document order) of the subtrees a selector names; matching
/// walks tag names level by level from the root.
fn selector_matches<'a>(
    root: &'a ElementNode,
    selector: &PathSelector,
) -> Vec<&'a ElementNode> {
    if root.tag != selector.path[0] {
        return Vec::new();
    }
    let mut level: Vec<&ElementNode> = vec![root];
    for comp in &selector.path[1..] {
        level = level
            .iter()
            .flat_map(|n| n.children.iter().filter(|c| c.tag == *comp))
            .collect();
    }
    level
}

/// Removes every selector match from a clone of `root`, tagging each losing
/// parent with `ref_attr` = the removed subtrees' addresses (space-joined).
/// Returns the remainder plus (parent address, removed subtree) pairs in
/// document order.
fn cut_selector(
    root: &ElementNode,
    selector: &PathSelector,
    ref_attr: &str,
    attr_name: &str,
) -> Result<(ElementNode, Vec<(Address, ElementNode)>)> {
    fn walk(
        node: &ElementNode,
        depth: usize,
        selector: &PathSelector,
        ref_attr: &str,
        attr_name: &str,
        removed: &mut Vec<(Address, ElementNode)>,
    ) -> Result<ElementNode> {
        let mut copy = shell_of(node);
        let on_path = depth + 1 < selector.path.len() && node.tag == selector.path[depth];
        let cut_here = depth + 1 == selector.path.len() - 1 && on_path;
        let mut taken: Vec<String> = Vec::new();
        for child in &node.children {
            if cut_here && child.tag == *selector.path.last().unwrap() {
                let child_addr = address_of(child, attr_name)?;
                taken.push(child_addr.to_string());
                removed.push((child_addr, child.clone()));
            } else if on_path {
                copy.children.push(walk(child, depth + 1, selector, ref_attr, attr_name, removed)?);
            } else {
                copy.children.push(child.clone());
            }
        }
        if !taken.is_empty() {
            if copy.attr(ref_attr).is_some() {
                return Err(Error::LabelingConflict {
                    path: format!("<{}>", copy.tag),
                    attr: ref_attr.to_string(),
                });
            }
            copy.set_attr(ref_attr, taken.join(" "));
        }
        Ok(copy)
    }
    let mut removed = Vec::new();
    let remainder = walk(root, 0, selector, ref_attr, attr_name, &mut removed)?;
    Ok((remainder, removed))
}

/// Vertical fragmentation: every subtree the selector names moves (document
/// order) under a synthesized root named after the selector's last component;
/// each losing parent keeps a reference attribute holding the removed
/// subtree's address, mirrored in the manifest links.
pub fn vertical_fragment(
    t: &AnnotatedTree,
    selector: &PathSelector,
    ref_attr: &str,
) -> Result<(Fragment, Fragment, Manifest)> {
    let matches = selector_matches(&t.tree.root, selector);
    if matches.is_empty() {
        return Err(Error::EmptyProjection(selector.to_string()));
    }
    let origin = &t.tree.doc_id;
    let (remainder_root, removed) = cut_selector(&t.tree.root, selector, ref_attr, &t.attr_name)?;
    let mut manifest = base_manifest(
        t,
        "vertical",
        Parameters {
            path: Some(selector.to_string()),
            ref_attr: Some(ref_attr.to_string()),
            ..Parameters::default()
        },
    );
    let remainder = Fragment {
        fragment_id: "remainder".into(),
        model: FragmentKind::VerticalRemainder,
        content: XmlTree {
            root: remainder_root,
            doc_id: origin.clone(),
        },
        origin: origin.clone(),
        meta: FragmentMeta::SelectorRemainder(selector.clone()),
    };
    let mut packaging = ElementNode::new(selector.last());
    packaging.children = removed.iter().map(|(_, n)| n.clone()).collect();
    let projected = Fragment {
        fragment_id: "projected".into(),
        model: FragmentKind::VerticalProjected,
        content: XmlTree {
            root: packaging,
            doc_id: origin.clone(),
        },
        origin: origin.clone(),
        meta: FragmentMeta::Selector(selector.clone()),
    };
    push_entry(&mut manifest, &remainder);
    push_entry(&mut manifest, &projected);
    for (addr, _) in &removed {
        let parent = Address::new(addr.ordinals[..addr.ordinals.len() - 1].to_vec(), 0);
        // the parent's own tag type is not part of the link key; store the
        // remainder element's full label as recorded in the tree
        let parent_label = find_label(&remainder.content.root, &parent.ordinals, &t.attr_name)
            .ok_or_else(|| Error::LinkResolution(format!("no parent for {addr}")))?;
        manifest.links.push(Link {
            remainder: parent_label,
            ref_value: addr.to_string(),
            fragment_id: "projected".into(),
        });
    }
    manifest.validate()?;
    Ok((remainder, projected, manifest))
}

/// Label of the element at an ordinal path, if present.
fn find_label(root: &ElementNode, ordinals: &[u32], attr_name: &str) -> Option<String> {
    let mut cur = root;
    for &o in ordinals {
        cur = cur.children.iter().find(|c| {
            c.attr(attr_name)
                .and_then(|raw| crate::addressing::parse_address(raw).ok())
                .is_some_and(|a| a.ordinals.last() == Some(&o))
        })?;
    }
    cur.attr(attr_name).map(str::to_string)
}

/// Horizontal then vertical: records split by predicate first, then each
/// horizontal fragment loses its selector matches to a projected twin. A
/// fragment without matches keeps only its horizontal part. Overlap report as
/// in [`horizontal_fragment`]. An empty predicate list degenerates to pure
/// vertical fragmentation.
pub fn hybrid_fragment(
    t: &AnnotatedTree,
    predicates: &[SimplePredicate],
    selector: &PathSelector,
    ref_attr: &str,
) -> Result<(Vec<Fragment>, Manifest, Vec<Address>)> {
    if predicates.is_empty() {
        let (remainder, projected, manifest) = vertical_fragment(t, selector, ref_attr)?;
        return Ok((vec![remainder, projected], manifest, Vec::new()));
    }
    let (per_pred, rest, overlaps) = partition_records(t, predicates)?;
    let records = &t.tree.root.children;
    let origin = &t.tree.doc_id;
    let mut manifest = base_manifest(
        t,
        "hybrid",
        Parameters {
            predicates: Some(predicates.iter().map(|p| p.to_string()).collect()),
            path: Some(selector.to_string()),
            ref_attr: Some(ref_attr.to_string()),
            ..Parameters::default()
        },
    );
    let mut fragments = Vec::new();

    let mut groups: Vec<(String, Option<&SimplePredicate>, Vec<usize>)> = predicates
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("f{}", i + 1), Some(p), per_pred[i].clone()))
        .collect();
    if !rest.is_empty() {
        groups.push(("rest".into(), None, rest));
    }

    for (stem, predicate, idxs) in groups {
        let children: Vec<ElementNode> = idxs.iter().map(|&k| records[k].clone()).collect();
        let horizontal = tree_with(shell_of(&t.tree.root), children, origin);
        let matches = selector_matches(&horizontal.root, selector);
        let meta = match predicate {
            Some(p) => FragmentMeta::Predicate(p.clone()),
            None => FragmentMeta::Remainder,
        };
        if matches.is_empty() {
            fragments.push(Fragment {
                fragment_id: format!("{stem}.remainder"),
                model: FragmentKind::Hybrid,
                content: horizontal,
                origin: origin.clone(),
                meta,
            });
            continue;
        }
        let (remainder_root, removed) =
            cut_selector(&horizontal.root, selector, ref_attr, &t.attr_name)?;
        let remainder_id = format!("{stem}.remainder");
        let projected_id = format!("{stem}.projected");
        fragments.push(Fragment {
            fragment_id: remainder_id.clone(),
            model: FragmentKind::Hybrid,
            content: XmlTree {
                root: remainder_root,
                doc_id: origin.clone(),
            },
            origin: origin.clone(),
            meta: meta.clone(),
        });
        let mut packaging = ElementNode::new(selector.last());
        packaging.children = removed.iter().map(|(_, n)| n.clone()).collect();
        fragments.push(Fragment {
            fragment_id: projected_id.clone(),
            model: FragmentKind::Hybrid,
            content: XmlTree {
                root: packaging,
                doc_id: origin.clone(),
            },
            origin: origin.clone(),
            meta: FragmentMeta::Selector(selector.clone()),
        });
        let remainder_tree = &fragments[fragments.len() - 2].content.root;
        for (addr, _) in &removed {
            let parent_label =
                find_label(remainder_tree, &addr.ordinals[..addr.ordinals.len() - 1], &t.attr_name)
                    .ok_or_else(|| Error::LinkResolution(format!("no parent for {addr}")))?;
            manifest.links.push(Link {
                remainder: parent_label,
                ref_value: addr.to_string(),
                fragment_id: projected_id.clone(),
            });
        }
    }

    // entries need the predicate recorded on both halves of each pair
    for f in &fragments {
        push_entry(&mut manifest, f);
    }
    for (f, entry) in fragments.iter().zip(manifest.fragments.iter_mut()) {
        if let FragmentMeta::Selector(_) = f.meta {
            if let Some(stem) = f.fragment_id.strip_suffix(".projected") {
                if let Some(i) = stem.strip_prefix('f').and_then(|n| n.parse::<usize>().ok()) {
                    entry.predicate = predicates.get(i - 1).map(|p| p.to_string());
                }
            }
        }
    }
    manifest.validate()?;
    Ok((fragments, manifest, overlaps))
}

/// Greedy document-order scan: consecutive root children accumulate into a
/// bucket while the byte total stays within the threshold; a lone child
/// exceeding it becomes its own fragment, flagged oversize.
pub fn fragment_by_size(t: &AnnotatedTree, threshold: usize) -> Result<(Vec<Fragment>, Manifest)> {
    let records = &t.tree.root.children;
    let origin = &t.tree.doc_id;
    let mut manifest = base_manifest(
        t,
        "size",
        Parameters {
            threshold: Some(threshold as u64),
            ..Parameters::default()
        },
    );
    let mut fragments = Vec::new();
    let mut bucket: Vec<usize> = Vec::new();
    let mut bucket_bytes = 0usize;

    let flush = |bucket: &mut Vec<usize>,
                     bucket_bytes: &mut usize,
                     oversize: bool,
                     fragments: &mut Vec<Fragment>| {
        if bucket.is_empty() {
            return;
        }
        let children: Vec<ElementNode> = bucket.iter().map(|&k| records[k].clone()).collect();
        fragments.push(Fragment {
            fragment_id: format!("s{}", fragments.len() + 1),
            model: FragmentKind::Size,
            content: tree_with(shell_of(&t.tree.root), children, origin),
            origin: origin.clone(),
            meta: FragmentMeta::SizeBucket {
                bytes: *bucket_bytes,
                oversize,
            },
        });
        bucket.clear();
        *bucket_bytes = 0;
    };

    for (i, child) in records.iter().enumerate() {
        let sz = subtree_byte_size(child);
        if sz > threshold {
            flush(&mut bucket, &mut bucket_bytes, false, &mut fragments);
            bucket.push(i);
            bucket_bytes = sz;
            flush(&mut bucket, &mut bucket_bytes, true, &mut fragments);
        } else if bucket_bytes + sz <= threshold {
            bucket.push(i);
            bucket_bytes += sz;
        } else {
            flush(&mut bucket, &mut bucket_bytes, false, &mut fragments);
            bucket.push(i);
            bucket_bytes = sz;
        }
    }
    flush(&mut bucket, &mut bucket_bytes, false, &mut fragments);

    for f in &fragments {
        push_entry(&mut manifest, f);
    }
    // record the contiguous ordinal span of each bucket
    for (f, entry) in fragments.iter().zip(manifest.fragments.iter_mut()) {
        let kids = &f.content.root.children;
        if !kids.is_empty() {
            let first = address_of(&kids[0], &t.attr_name)?.ordinals[0] as u64;
            let last = address_of(kids.last().unwrap(), &t.attr_name)?.ordinals[0] as u64;
            entry.range = Some((first, last));
        }
    }
    manifest.validate()?;
    Ok((fragments, manifest))
}

/// Top-down constraint cuts: descend from the root, emitting any subtree that
/// satisfies all constraints; leaves that still violate them become flagged
/// fragments; ancestors of cuts form a skeleton fragment linked to the cuts.
pub fn simplex_fragment(
    t: &AnnotatedTree,
    constraints: &SizeConstraints,
) -> Result<(Vec<Fragment>, Manifest)> {
    let origin = &t.tree.doc_id;
    let mut manifest = base_manifest(
        t,
        "simplex",
        Parameters {
            max_size: Some(constraints.max_size as u64),
            max_width: Some(constraints.max_width as u64),
            max_depth: Some(constraints.max_depth as u64),
            ..Parameters::default()
        },
    );

    struct Cut {
        addr: Address,
        parent_label: Option<String>,
        node: ElementNode,
        flagged: bool,
    }

    fn walk(
        node: &ElementNode,
        parent_label: Option<&str>,
        constraints: &SizeConstraints,
        attr_name: &str,
        cuts: &mut Vec<Cut>,
    ) -> Result<Option<ElementNode>> {
        let fits = constraints.admits(node);
        if fits || node.children.is_empty() {
            cuts.push(Cut {
                addr: address_of(node, attr_name)?,
                parent_label: parent_label.map(str::to_string),
                node: node.clone(),
                flagged: !fits,
            });
            return Ok(None); // consumed by a cut; not part of the skeleton
        }
        let mut copy = shell_of(node);
        let own_label = node.attr(attr_name).map(str::to_string);
        for child in &node.children {
            if let Some(kept) = walk(child, own_label.as_deref(), constraints, attr_name, cuts)? {
                copy.children.push(kept);
            }
        }
        Ok(Some(copy))
    }

    let mut cuts = Vec::new();
    let skeleton_root = walk(&t.tree.root, None, constraints, &t.attr_name, &mut cuts)?;

    let mut fragments = Vec::new();
    if let Some(root) = skeleton_root {
        fragments.push(Fragment {
            fragment_id: "skeleton".into(),
            model: FragmentKind::Skeleton,
            content: XmlTree {
                root,
                doc_id: origin.clone(),
            },
            origin: origin.clone(),
            meta: FragmentMeta::Skeleton,
        });
    }
    for (i, cut) in cuts.iter().enumerate() {
        fragments.push(Fragment {
            fragment_id: format!("x{}", i + 1),
            model: FragmentKind::Simplex,
            content: XmlTree {
                root: cut.node.clone(),
                doc_id: origin.clone(),
            },
            origin: origin.clone(),
            meta: FragmentMeta::Constraints { flagged: cut.flagged },
        });
    }
    for f in &fragments {
        push_entry(&mut manifest, f);
    }
    for (i, cut) in cuts.iter().enumerate() {
        if let Some(parent) = &cut.parent_label {
            manifest.links.push(Link {
                remainder: parent.clone(),
                ref_value: cut.addr.to_string(),
                fragment_id: format!("x{}", i + 1),
            });
        }
    }
    manifest.validate()?;
    Ok((fragments, manifest))
}

/// Per-fragment measurements plus byte-size distribution facts.
#[derive(Debug, Clone, Serialize)]
pub struct StructureHistogram {
    pub fragments: Vec<FragmentMeasure>,
    pub buckets: Vec<SizeBucketCount>,
    pub min_bytes: usize,
    pub max_bytes: usize,
    pub mean_bytes: f64,
    pub cv_bytes: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FragmentMeasure {
    pub fragment_id: String,
    pub bytes: usize,
    pub elements: usize,
    pub height: usize,
    pub max_fanout: usize,
}

/// Count of fragments whose byte size falls in `[lo, hi)`; buckets span
/// powers of two.
#[derive(Debug, Clone, Serialize)]
pub struct SizeBucketCount {
    pub lo: u64,
    pub hi: u64,
    pub count: usize,
}

/// Population coefficient of variation; 0 for a constant or empty series.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Measures a fragment set: per-fragment bytes/elements/height/fanout, a
/// power-of-two byte histogram, and min/max/mean/CV of bytes.
pub fn fragment_stats(fragments: &[Fragment]) -> Result<StructureHistogram> {
    measure_fragments(
        fragments
            .iter()
            .map(|f| (f.fragment_id.as_str(), &f.content)),
    )
}

/// Same measurements over (fragment id, content) pairs, for fragment sets
/// loaded from disk.
pub fn measure_fragments<'a>(
    parts: impl IntoIterator<Item = (&'a str, &'a XmlTree)>,
) -> Result<StructureHistogram> {
    let measures: Vec<FragmentMeasure> = parts
        .into_iter()
        .map(|(id, content)| FragmentMeasure {
            fragment_id: id.to_string(),
            bytes: subtree_byte_size(&content.root),
            elements: content.root.element_count(),
            height: content.root.height(),
            max_fanout: content.root.max_fanout(),
        })
        .collect();
    if measures.is_empty() {
        return Err(Error::EmptyInput);
    }
    let bytes: Vec<f64> = measures.iter().map(|m| m.bytes as f64).collect();
    let min = measures.iter().map(|m| m.bytes).min().unwrap();
    let max = measures.iter().map(|m| m.bytes).max().unwrap();
    let lo_exp = (min.max(1) as f64).log2().floor() as u32;
    let hi_exp = (max.max(1) as f64).log2().floor() as u32;
    let buckets = (lo_exp..=hi_exp)
        .map(|k| {
            let lo = 1u64 << k;
            let hi = 1u64 << (k + 1);
            SizeBucketCount {
                lo,
                hi,
                count: measures
                    .iter()
                    .filter(|m| (m.bytes as u64) >= lo && (m.bytes as u64) < hi)
                    .count(),
            }
        })
        .collect();
    Ok(StructureHistogram {
        buckets,
        min_bytes: min,
        max_bytes: max,
        mean_bytes: bytes.iter().sum::<f64>() / bytes.len() as f64,
        cv_bytes: coefficient_of_variation(&bytes),
        fragments: measures,
    })
}
