//! Simulated distribution: fragment-to-node allocation, predicate routing
//! with sound pruning, load-skew measurement, address-driven reassembly, and
//! the holes-and-fillers stream codec.

use crate::addressing::{parse_address, Address, AnnotatedTree, TagSchema};
use crate::error::{Error, Result};
use crate::fragmentation::{
    coefficient_of_variation, CompareOp, Fragment, Manifest, SimplePredicate,
};
use crate::xml_model::{parse_document, serialize_document, ElementNode, XmlTree};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Placement of every fragment onto a 0-based node index.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Allocation {
    pub node_count: usize,
    pub placement: BTreeMap<String, usize>,
}

impl Allocation {
    pub fn node_of(&self, fragment_id: &str) -> Result<usize> {
        self.placement
            .get(fragment_id)
            .copied()
            .ok_or_else(|| Error::AllocationIncomplete(fragment_id.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("allocation serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Allocation::from_json(&std::fs::read_to_string(path)?)
    }
}

/// How fragments spread over nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    RoundRobin,
    Range,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round-robin" => Ok(Strategy::RoundRobin),
            "range" => Ok(Strategy::Range),
            other => Err(Error::StrategyMismatch(format!(
                "unknown strategy `{other}` (expected round-robin or range)"
            ))),
        }
    }
}

/// True when the manifest orders its fragments along one axis — ordinal
/// ranges, or one numeric predicate chain over a single path — so placing
/// fragment j on node j keeps neighbouring values together.
fn range_capable(m: &Manifest) -> bool {
    if m.model == "range" {
        return true;
    }
    if !m.fragments.is_empty() && m.fragments.iter().all(|f| f.range.is_some()) {
        return true;
    }
    if let Some(preds) = &m.parameters.predicates {
        if let Ok(parsed) = preds
            .iter()
            .map(|s| s.parse::<SimplePredicate>())
            .collect::<Result<Vec<_>>>()
        {
            return !parsed.is_empty()
                && parsed.windows(2).all(|w| w[0].path == w[1].path)
                && parsed.iter().all(|p| p.value.trim().parse::<f64>().is_ok());
        }
    }
    false
}

/// Maps fragment i (manifest order) to node `i mod node_count`. Round-robin
/// accepts any manifest; range additionally demands an ordered fragmentation
/// (see [`range_capable`]) so that the placement follows the data order.
pub fn allocate(m: &Manifest, node_count: usize, strategy: Strategy) -> Result<Allocation> {
    if node_count == 0 {
        return Err(Error::Cluster("node count must be at least 1".into()));
    }
    if strategy == Strategy::Range && !range_capable(m) {
        return Err(Error::StrategyMismatch(
            "range allocation needs ordinal ranges or one numeric predicate chain".into(),
        ));
    }
    let placement = m
        .fragments
        .iter()
        .enumerate()
        .map(|(i, f)| (f.fragment_id.clone(), i % node_count))
        .collect();
    Ok(Allocation {
        node_count,
        placement,
    })
}

/// Parsed fragment contents indexed by fragment id.
#[derive(Debug, Clone, Default)]
pub struct FragmentStore {
    trees: BTreeMap<String, XmlTree>,
}

impl FragmentStore {
    pub fn from_fragments(fragments: &[Fragment]) -> Self {
        FragmentStore {
            trees: fragments
                .iter()
                .map(|f| (f.fragment_id.clone(), f.content.clone()))
                .collect(),
        }
    }

    /// Loads every manifest fragment from one directory.
    pub fn from_dir(dir: &Path, m: &Manifest) -> Result<Self> {
        let mut trees = BTreeMap::new();
        let mut missing = Vec::new();
        for entry in &m.fragments {
            let path = dir.join(&entry.file);
            if !path.is_file() {
                missing.push(entry.fragment_id.clone());
                continue;
            }
            trees.insert(
                entry.fragment_id.clone(),
                parse_document(&std::fs::read(path)?)?,
            );
        }
        if !missing.is_empty() {
            return Err(Error::IncompleteSet(missing));
        }
        Ok(FragmentStore { trees })
    }

    /// Loads fragments from the `nodes/node-<k>/` layout of an allocation.
    pub fn from_nodes(base: &Path, m: &Manifest, a: &Allocation) -> Result<Self> {
        let mut trees = BTreeMap::new();
        let mut missing = Vec::new();
        for entry in &m.fragments {
            let node = a.node_of(&entry.fragment_id)?;
            let path = base.join(format!("node-{node}")).join(&entry.file);
            if !path.is_file() {
                missing.push(entry.fragment_id.clone());
                continue;
            }
            trees.insert(
                entry.fragment_id.clone(),
                parse_document(&std::fs::read(path)?)?,
            );
        }
        if !missing.is_empty() {
            return Err(Error::IncompleteSet(missing));
        }
        Ok(FragmentStore { trees })
    }

    pub fn get(&self, fragment_id: &str) -> Option<&XmlTree> {
        self.trees.get(fragment_id)
    }

    pub fn insert(&mut self, fragment_id: String, tree: XmlTree) {
        self.trees.insert(fragment_id, tree);
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.trees.keys().map(String::as_str)
    }
}

/// Writes each fragment into `base/node-<k>/` per the allocation.
pub fn write_nodes(
    base: &Path,
    m: &Manifest,
    a: &Allocation,
    store: &FragmentStore,
) -> Result<()> {
    for entry in &m.fragments {
        let node = a.node_of(&entry.fragment_id)?;
        let tree = store
            .get(&entry.fragment_id)
            .ok_or_else(|| Error::IncompleteSet(vec![entry.fragment_id.clone()]))?;
        let dir = base.join(format!("node-{node}"));
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(&entry.file), serialize_document(tree))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// numeric interval sets for predicate pruning

/// One interval over f64 with optional open/closed endpoints; `None` means
/// unbounded on that side.
#[derive(Debug, Clone, Copy)]
struct Iv {
    lo: Option<(f64, bool)>, // (value, closed)
    hi: Option<(f64, bool)>,
}

impl Iv {
    fn full() -> Self {
        Iv { lo: None, hi: None }
    }

    fn is_empty(&self) -> bool {
        match (self.lo, self.hi) {
            (Some((a, ac)), Some((b, bc))) => a > b || (a == b && !(ac && bc)),
            _ => false,
        }
    }

    fn intersect(&self, other: &Iv) -> Iv {
        let lo = match (self.lo, other.lo) {
            (None, x) | (x, None) => x,
            (Some((a, ac)), Some((b, bc))) => {
                if a > b {
                    Some((a, ac))
                } else if b > a {
                    Some((b, bc))
                } else {
                    Some((a, ac && bc))
                }
            }
        };
        let hi = match (self.hi, other.hi) {
            (None, x) | (x, None) => x,
            (Some((a, ac)), Some((b, bc))) => {
                if a < b {
                    Some((a, ac))
                } else if b < a {
                    Some((b, bc))
                } else {
                    Some((a, ac && bc))
                }
            }
        };
        Iv { lo, hi }
    }

    fn complement(&self) -> Vec<Iv> {
        let mut out = Vec::new();
        if let Some((v, closed)) = self.lo {
            out.push(Iv {
                lo: None,
                hi: Some((v, !closed)),
            });
        }
        if let Some((v, closed)) = self.hi {
            out.push(Iv {
                lo: Some((v, !closed)),
                hi: None,
            });
        }
        out
    }
}

fn set_intersect(a: &[Iv], b: &[Iv]) -> Vec<Iv> {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            let i = x.intersect(y);
            if !i.is_empty() {
                out.push(i);
            }
        }
    }
    out
}

fn set_complement(s: &[Iv]) -> Vec<Iv> {
    let mut acc = vec![Iv::full()];
    for iv in s {
        acc = set_intersect(&acc, &iv.complement());
    }
    acc
}

fn set_subtract(a: &[Iv], b: &[Iv]) -> Vec<Iv> {
    set_intersect(a, &set_complement(b))
}

fn op_region(op: CompareOp, v: f64) -> Vec<Iv> {
    match op {
        CompareOp::Eq => vec![Iv {
            lo: Some((v, true)),
            hi: Some((v, true)),
        }],
        CompareOp::Ne => vec![
            Iv {
                lo: None,
                hi: Some((v, false)),
            },
            Iv {
                lo: Some((v, false)),
                hi: None,
            },
        ],
        CompareOp::Lt => vec![Iv {
            lo: None,
            hi: Some((v, false)),
        }],
        CompareOp::Le => vec![Iv {
            lo: None,
            hi: Some((v, true)),
        }],
        CompareOp::Gt => vec![Iv {
            lo: Some((v, false)),
            hi: None,
        }],
        CompareOp::Ge => vec![Iv {
            lo: Some((v, true)),
            hi: None,
        }],
    }
}

fn numeric_region(p: &SimplePredicate) -> Option<Vec<Iv>> {
    p.value.trim().parse::<f64>().ok().map(|v| op_region(p.op, v))
}

/// Provably no value satisfies both predicates (same path assumed checked by
/// the caller for the numeric branch; point evaluation covers the rest).
fn pairwise_unsat(p: &SimplePredicate, q: &SimplePredicate) -> bool {
    if p.path != q.path {
        return false;
    }
    if let (Some(rp), Some(rq)) = (numeric_region(p), numeric_region(q)) {
        return set_intersect(&rp, &rq).is_empty();
    }
    match (p.op, q.op) {
        (CompareOp::Eq, _) => !q
            .op
            .holds(crate::fragmentation::compare_values(&p.value, &q.value)),
        (_, CompareOp::Eq) => !p
            .op
            .holds(crate::fragmentation::compare_values(&q.value, &p.value)),
        _ => false,
    }
}

/// Every value satisfying `p` also satisfies `q` (conservative: false when
/// undecided).
fn implies(p: &SimplePredicate, q: &SimplePredicate) -> bool {
    if p.path != q.path {
        return false;
    }
    if let (Some(rp), Some(rq)) = (numeric_region(p), numeric_region(q)) {
        return set_subtract(&rp, &rq).is_empty();
    }
    if p.op == CompareOp::Eq {
        return q
            .op
            .holds(crate::fragmentation::compare_values(&p.value, &q.value));
    }
    false
}

/// Effective value regions of a first-match-wins predicate chain: fragment i
/// holds values in region(p_i) minus all earlier regions, the remainder holds
/// the complement of the union. Only built when the whole chain is numeric
/// over one path.
struct RegionTable {
    path: Vec<String>,
    by_pred: BTreeMap<String, Vec<Iv>>,
    remainder: Vec<Iv>,
}

fn build_region_table(m: &Manifest) -> Option<RegionTable> {
    let preds = m.parameters.predicates.as_ref()?;
    let parsed: Vec<SimplePredicate> = preds
        .iter()
        .map(|s| s.parse().ok())
        .collect::<Option<Vec<_>>>()?;
    if parsed.is_empty() || !parsed.windows(2).all(|w| w[0].path == w[1].path) {
        return None;
    }
    let mut by_pred = BTreeMap::new();
    let mut union: Vec<Iv> = Vec::new();
    for p in &parsed {
        let region = numeric_region(p)?;
        by_pred.insert(p.to_string(), set_subtract(&region, &union));
        union.extend(region);
    }
    Some(RegionTable {
        path: parsed[0].path.clone(),
        remainder: set_complement(&union),
        by_pred,
    })
}

/// Outcome of routing one predicate query across the cluster.
#[derive(Debug, Clone)]
pub struct RoutingResult {
    pub nodes: BTreeSet<usize>,
    pub matches: Vec<Address>,
    pub scanned: u64,
    pub per_node_scanned: BTreeMap<usize, u64>,
}

impl RoutingResult {
    pub fn to_json(&self) -> String {
        let value = serde_json::json!({
            "nodes": self.nodes.iter().collect::<Vec<_>>(),
            "matches": self.matches.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            "scanned": self.scanned,
        });
        serde_json::to_string_pretty(&value).expect("routing result serializes")
    }
}

fn element_address(node: &ElementNode, attr: &str) -> Option<Address> {
    node.attr(attr).and_then(|raw| parse_address(raw).ok())
}

/// Depth-1 labeled elements reachable at the top of a fragment: the children
/// of a root-labeled or synthesized packaging root, or the fragment root
/// itself when it sits at depth 1.
fn record_views<'a>(root: &'a ElementNode, attr: &str) -> Vec<&'a ElementNode> {
    match element_address(root, attr) {
        Some(a) if a.ordinals.is_empty() => root
            .children
            .iter()
            .filter(|c| element_address(c, attr).is_some_and(|x| x.ordinals.len() == 1))
            .collect(),
        Some(a) if a.ordinals.len() == 1 => vec![root],
        Some(_) => Vec::new(),
        None => root
            .children
            .iter()
            .filter(|c| element_address(c, attr).is_some_and(|x| x.ordinals.len() == 1))
            .collect(),
    }
}

fn find_by_label<'a>(node: &'a ElementNode, attr: &str, label: &str) -> Option<&'a ElementNode> {
    if node.attr(attr) == Some(label) {
        return Some(node);
    }
    node.children
        .iter()
        .find_map(|c| find_by_label(c, attr, label))
}

/// Evaluates a predicate on one record, following manifest links whenever the
/// walk needs a subtree that was cut away into another fragment. Fragments
/// consulted through links are added to `used`.
fn eval_with_links(
    record: &ElementNode,
    p: &SimplePredicate,
    m: &Manifest,
    schema: &TagSchema,
    store: &FragmentStore,
    used: &mut BTreeSet<String>,
) -> Result<bool> {
    if record.tag != p.path[1] {
        return Ok(false);
    }
    let mut frontier: Vec<&ElementNode> = vec![record];
    for comp in &p.path[2..] {
        let comp_type = schema
            .tag_type(comp)
            .ok_or_else(|| Error::UnknownPath(comp.clone()))?;
        let mut next: Vec<&ElementNode> = Vec::new();
        for el in &frontier {
            next.extend(el.children.iter().filter(|c| c.tag == *comp));
            if m.links.is_empty() {
                continue;
            }
            let Some(label) = el.attr(&m.attr_name) else {
                continue;
            };
            for link in m.links.iter().filter(|l| l.remainder == label) {
                let target = parse_address(&link.ref_value).map_err(|_| {
                    Error::LinkResolution(format!("bad link target `{}`", link.ref_value))
                })?;
                if target.tag_type != comp_type {
                    continue;
                }
                let tree = store.get(&link.fragment_id).ok_or_else(|| {
                    Error::IncompleteSet(vec![link.fragment_id.clone()])
                })?;
                let sub = find_by_label(&tree.root, &m.attr_name, &link.ref_value)
                    .ok_or_else(|| {
                        Error::LinkResolution(format!(
                            "`{}` not found in fragment `{}`",
                            link.ref_value, link.fragment_id
                        ))
                    })?;
                used.insert(link.fragment_id.clone());
                next.push(sub);
            }
        }
        if next.is_empty() {
            return Ok(false);
        }
        frontier = next;
    }
    Ok(frontier
        .iter()
        .any(|leaf| p.op.holds(crate::fragmentation::compare_values(&leaf.text, &p.value))))
}

/// Routes a predicate query: prunes fragments whose recorded predicate
/// metadata or tag inventory rules out any match, scans the survivors'
/// records (following links across cuts), and reports touched nodes, matched
/// record addresses, and how many records were scanned. Pruning is sound —
/// anything it cannot decide is scanned.
pub fn route_query(
    p: &SimplePredicate,
    m: &Manifest,
    a: &Allocation,
    store: &FragmentStore,
) -> Result<RoutingResult> {
    let schema = m.tag_schema()?;
    for comp in &p.path {
        if schema.tag_type(comp).is_none() {
            return Err(Error::UnknownPath(format!("/{}", p.path.join("/"))));
        }
    }
    let leaf_type = schema
        .tag_type(p.path.last().expect("predicate path is never empty"))
        .expect("checked above");
    let table = build_region_table(m).filter(|t| t.path == p.path);
    let query_region = numeric_region(p);
    let chain: Vec<SimplePredicate> = m
        .parameters
        .predicates
        .as_deref()
        .unwrap_or(&[])
        .iter()
        .filter_map(|s| s.parse().ok())
        .collect();

    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut matches: Vec<Address> = Vec::new();
    let mut scanned = 0u64;
    let mut per_node_scanned: BTreeMap<usize, u64> = BTreeMap::new();

    for entry in &m.fragments {
        // value-based pruning
        let value_pruned = match (&table, &query_region) {
            (Some(t), Some(qr)) => {
                let region = match &entry.predicate {
                    Some(s) => t.by_pred.get(s),
                    None => Some(&t.remainder),
                };
                match region {
                    Some(r) => set_intersect(r, qr).is_empty(),
                    None => false,
                }
            }
            _ => match &entry.predicate {
                Some(s) => s
                    .parse::<SimplePredicate>()
                    .map(|q| pairwise_unsat(p, &q))
                    .unwrap_or(false),
                None => !chain.is_empty() && chain.iter().any(|q| implies(p, q)),
            },
        };
        if value_pruned {
            continue;
        }
        // tag-inventory pruning is only sound when nothing was cut away
        if m.links.is_empty() && !entry.tag_types.contains(&leaf_type) {
            continue;
        }
        let tree = store
            .get(&entry.fragment_id)
            .ok_or_else(|| Error::IncompleteSet(vec![entry.fragment_id.clone()]))?;
        let views = record_views(&tree.root, &m.attr_name);
        if views.is_empty() {
            continue;
        }
        used.insert(entry.fragment_id.clone());
        let node = a.node_of(&entry.fragment_id)?;
        scanned += views.len() as u64;
        *per_node_scanned.entry(node).or_insert(0) += views.len() as u64;
        for record in views {
            if eval_with_links(record, p, m, &schema, store, &mut used)? {
                matches.push(
                    element_address(record, &m.attr_name).ok_or_else(|| {
                        Error::Label {
                            path: format!("<{}>", record.tag),
                            message: "record without label".into(),
                        }
                    })?,
                );
            }
        }
    }
    matches.sort();
    let mut nodes = BTreeSet::new();
    for id in &used {
        nodes.insert(a.node_of(id)?);
    }
    Ok(RoutingResult {
        nodes,
        matches,
        scanned,
        per_node_scanned,
    })
}

/// Coefficient of variation of per-node scan loads over ALL nodes of the
/// allocation (idle nodes count as zero); 0 when the total load is 0.
pub fn skew_metric(results: &[RoutingResult], a: &Allocation) -> f64 {
    let mut loads = vec![0f64; a.node_count];
    for r in results {
        for (&node, &count) in &r.per_node_scanned {
            if node < loads.len() {
                loads[node] += count as f64;
            }
        }
    }
    coefficient_of_variation(&loads)
}

/// Rebuilds the annotated document from any model's fragments: every labeled
/// top-level subtree is re-inserted at the position its address encodes,
/// links are verified, and reference attributes are dropped.
pub fn reassemble(m: &Manifest, store: &FragmentStore) -> Result<XmlTree> {
    let missing: Vec<String> = m
        .fragments
        .iter()
        .filter(|e| store.get(&e.fragment_id).is_none())
        .map(|e| e.fragment_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteSet(missing));
    }

    let mut shell: Option<ElementNode> = None;
    let mut pieces: Vec<(Address, ElementNode)> = Vec::new();
    for entry in &m.fragments {
        let root = &store.get(&entry.fragment_id).expect("checked above").root;
        match element_address(root, &m.attr_name) {
            Some(addr) if addr.ordinals.is_empty() => {
                if shell.is_none() {
                    let mut s = root.clone();
                    s.children = Vec::new();
                    shell = Some(s);
                }
                for child in &root.children {
                    let a = element_address(child, &m.attr_name).ok_or_else(|| Error::Label {
                        path: format!("<{}>", child.tag),
                        message: "fragment element without label".into(),
                    })?;
                    pieces.push((a, child.clone()));
                }
            }
            Some(addr) => pieces.push((addr, root.clone())),
            None => {
                for child in &root.children {
                    let a = element_address(child, &m.attr_name).ok_or_else(|| Error::Label {
                        path: format!("<{}>", child.tag),
                        message: "fragment element without label".into(),
                    })?;
                    pieces.push((a, child.clone()));
                }
            }
        }
    }
    let mut root = shell.ok_or_else(|| {
        Error::Manifest("no fragment carries the document root".into())
    })?;

    pieces.sort_by(|(a, _), (b, _)| {
        (a.ordinals.len(), &a.ordinals).cmp(&(b.ordinals.len(), &b.ordinals))
    });
    for w in pieces.windows(2) {
        if w[0].0.ordinals == w[1].0.ordinals {
            return Err(Error::Manifest(format!(
                "element {} appears in several fragments",
                w[0].0
            )));
        }
    }

    let mut present: BTreeSet<String> = BTreeSet::new();
    for (addr, node) in pieces {
        present.insert(addr.to_string());
        let mut parent = &mut root;
        for &o in &addr.ordinals[..addr.ordinals.len() - 1] {
            let idx = parent
                .children
                .iter()
                .position(|c| {
                    element_address(c, &m.attr_name)
                        .is_some_and(|x| x.ordinals.last() == Some(&o))
                })
                .ok_or_else(|| {
                    Error::LinkResolution(format!("missing ancestor of {addr}"))
                })?;
            parent = &mut parent.children[idx];
        }
        let last = *addr.ordinals.last().expect("piece is never the root");
        let at = parent
            .children
            .iter()
            .position(|c| {
                element_address(c, &m.attr_name)
                    .and_then(|x| x.ordinals.last().copied())
                    .is_some_and(|o| o > last)
            })
            .unwrap_or(parent.children.len());
        parent.children.insert(at, node);
    }

    for link in &m.links {
        if !present.contains(&link.ref_value) {
            return Err(Error::LinkResolution(format!(
                "link target {} was never restored",
                link.ref_value
            )));
        }
    }

    let mut tree = XmlTree {
        root,
        doc_id: m.origin.clone(),
    };
    if let Some(ref_attr) = &m.parameters.ref_attr {
        tree = crate::xml_model::strip_attribute(&tree, ref_attr);
    }
    Ok(tree)
}

// ---------------------------------------------------------------------------
// holes-and-fillers codec

/// One streamable piece: a subtree in which removed descendants appear as
/// hole elements naming the filler that carries them. `F0` is the residual
/// document.
#[derive(Debug, Clone)]
pub struct Filler {
    pub filler_id: String,
    pub content: XmlTree,
}

/// Decode output: the reconstructed tree plus fillers that nothing
/// referenced.
#[derive(Debug, Clone)]
pub struct DecodedDocument {
    pub tree: XmlTree,
    pub orphans: Vec<String>,
}

fn contains_tag(node: &ElementNode, tag: &str) -> bool {
    node.tag == tag || node.children.iter().any(|c| contains_tag(c, tag))
}

/// Splits the document at the given addresses: each cut subtree becomes
/// filler F1..Fn (document order) and is replaced in its enclosing filler by
/// `<hole_tag id="Fi"/>`; the residue is F0. Nested cuts put holes inside
/// fillers.
pub fn encode_fillers(
    t: &AnnotatedTree,
    cut_addresses: &[Address],
    hole_tag: &str,
) -> Result<Vec<Filler>> {
    if contains_tag(&t.tree.root, hole_tag) {
        return Err(Error::HoleTagTaken(hole_tag.to_string()));
    }
    let mut sorted = cut_addresses.to_vec();
    sorted.sort();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(Error::DuplicateCut(w[0].to_string()));
        }
    }
    let mut ids: BTreeMap<String, String> = BTreeMap::new();
    for (i, addr) in sorted.iter().enumerate() {
        if addr.ordinals.is_empty() {
            return Err(Error::InvalidCut("the document root cannot be cut".into()));
        }
        if t.element_at(addr).is_err() {
            return Err(Error::InvalidCut(format!("no element at {addr}")));
        }
        ids.insert(addr.to_string(), format!("F{}", i + 1));
    }

    fn transform(
        node: &ElementNode,
        attr: &str,
        hole_tag: &str,
        ids: &BTreeMap<String, String>,
        fillers: &mut Vec<Filler>,
    ) -> ElementNode {
        let mut copy = node.clone();
        copy.children = Vec::new();
        for child in &node.children {
            let transformed = transform(child, attr, hole_tag, ids, fillers);
            let cut_id = child.attr(attr).and_then(|label| ids.get(label));
            match cut_id {
                Some(id) => {
                    fillers.push(Filler {
                        filler_id: id.clone(),
                        content: XmlTree {
                            root: transformed,
                            doc_id: id.clone(),
                        },
                    });
                    let mut hole = ElementNode::new(hole_tag);
                    hole.set_attr("id", id.clone());
                    copy.children.push(hole);
                }
                None => copy.children.push(transformed),
            }
        }
        copy
    }

    let mut fillers = Vec::new();
    let residue = transform(&t.tree.root, &t.attr_name, hole_tag, &ids, &mut fillers);
    fillers.push(Filler {
        filler_id: "F0".into(),
        content: XmlTree {
            root: residue,
            doc_id: t.tree.doc_id.clone(),
        },
    });
    fillers.sort_by_key(|f| {
        f.filler_id[1..]
            .parse::<u64>()
            .expect("filler ids are F<number>")
    });
    Ok(fillers)
}

/// Rebuilds the document from fillers in any order by substituting every hole
/// with its target filler, transitively. Missing targets, duplicate ids, and
/// reference cycles are errors; present-but-unreferenced fillers are reported
/// as orphans.
pub fn decode_fillers(fillers: &[Filler], hole_tag: &str) -> Result<DecodedDocument> {
    let mut by_id: BTreeMap<&str, &Filler> = BTreeMap::new();
    for f in fillers {
        if by_id.insert(f.filler_id.as_str(), f).is_some() {
            return Err(Error::DuplicateFiller(f.filler_id.clone()));
        }
    }
    if !by_id.contains_key("F0") {
        return Err(Error::IncompleteStream(vec!["F0".into()]));
    }

    fn hole_id<'a>(node: &'a ElementNode, hole_tag: &str) -> Result<Option<&'a str>> {
        if node.tag != hole_tag {
            return Ok(None);
        }
        node.attr("id").map(Some).ok_or_else(|| {
            Error::Manifest(format!("hole element <{hole_tag}> without an id"))
        })
    }

    // every referenced id must be present before any substitution starts
    let mut referenced: BTreeSet<String> = BTreeSet::new();
    fn collect_refs(
        node: &ElementNode,
        hole_tag: &str,
        refs: &mut BTreeSet<String>,
    ) -> Result<()> {
        if let Some(id) = hole_id(node, hole_tag)? {
            refs.insert(id.to_string());
        }
        for c in &node.children {
            collect_refs(c, hole_tag, refs)?;
        }
        Ok(())
    }
    for f in fillers {
        collect_refs(&f.content.root, hole_tag, &mut referenced)?;
    }
    let missing: Vec<String> = referenced
        .iter()
        .filter(|id| !by_id.contains_key(id.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteStream(missing));
    }

    fn expand(
        node: &ElementNode,
        hole_tag: &str,
        by_id: &BTreeMap<&str, &Filler>,
        stack: &mut Vec<String>,
    ) -> Result<ElementNode> {
        if let Some(id) = hole_id(node, hole_tag)? {
            if stack.iter().any(|s| s == id) {
                let mut cycle = stack.clone();
                cycle.push(id.to_string());
                return Err(Error::FillerCycle(cycle));
            }
            let filler = by_id.get(id).expect("missing ids rejected earlier");
            stack.push(id.to_string());
            let out = expand(&filler.content.root, hole_tag, by_id, stack)?;
            stack.pop();
            return Ok(out);
        }
        let mut copy = node.clone();
        copy.children = Vec::new();
        for c in &node.children {
            copy.children.push(expand(c, hole_tag, by_id, stack)?);
        }
        Ok(copy)
    }

    let f0 = by_id["F0"];
    let mut stack = vec!["F0".to_string()];
    let root = expand(&f0.content.root, hole_tag, &by_id, &mut stack)?;
    let orphans = by_id
        .keys()
        .filter(|id| **id != "F0" && !referenced.contains(**id))
        .map(|id| id.to_string())
        .collect();
    Ok(DecodedDocument {
        tree: XmlTree {
            root,
            doc_id: f0.content.doc_id.clone(),
        },
        orphans,
    })
}

/// Writes fillers as `F<k>.xml` files under `dir`.
pub fn write_fillers(dir: &Path, fillers: &[Filler]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in fillers {
        std::fs::write(
            dir.join(format!("{}.xml", f.filler_id)),
            serialize_document(&f.content),
        )?;
    }
    Ok(())
}

/// Reads every `F<k>.xml` under `dir`, ordered by filler number.
pub fn read_fillers(dir: &Path) -> Result<Vec<Filler>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_suffix(".xml") else {
            continue;
        };
        if stem.len() < 2 || !stem.starts_with('F') || !stem[1..].chars().all(|c| c.is_ascii_digit())
        {
            continue;
        }
        out.push(Filler {
            filler_id: stem.to_string(),
            content: parse_document(&std::fs::read(&path)?)?,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    out.sort_by_key(|f| f.filler_id[1..].parse::<u64>().unwrap_or(u64::MAX));
    Ok(out)
}
