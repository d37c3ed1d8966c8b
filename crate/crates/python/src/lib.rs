//! Python bindings: thin functions over XML and JSON strings, mirroring the
//! CLI surface. Fragment sets travel as `[(fragment_id, xml), ...]` lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use xmlfrag::addressing::{self, Address, AnnotatedTree, Relationship};
use xmlfrag::cluster::{self, Allocation, Filler, FragmentStore, Strategy};
use xmlfrag::fragmentation::{
    self, measure_fragments, parse_predicate, Fragment, Manifest, PathSelector, SimplePredicate,
    SizeConstraints,
};
use xmlfrag::xml_model::{parse_document, serialize_document, strip_attribute, XmlTree};

fn err(e: xmlfrag::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_tree(xml: &str) -> PyResult<XmlTree> {
    parse_document(xml.as_bytes()).map_err(err)
}

fn to_xml(t: &XmlTree) -> String {
    String::from_utf8(serialize_document(t)).expect("serialized XML is UTF-8")
}

/// Accepts either a labeled or an unlabeled document.
fn labeled_from(xml: &str, attr: &str) -> PyResult<AnnotatedTree> {
    let tree = parse_tree(xml)?;
    if tree.root.attr(attr).is_some() {
        AnnotatedTree::from_labeled(tree, attr).map_err(err)
    } else {
        addressing::annotate(&tree, attr).map_err(err)
    }
}

fn parse_addr(label: &str) -> PyResult<Address> {
    label.parse().map_err(err)
}

fn predicates_from(raw: &[String]) -> PyResult<Vec<SimplePredicate>> {
    raw.iter()
        .map(|s| parse_predicate(s).map_err(err))
        .collect()
}

fn store_from(fragments: &[(String, String)]) -> PyResult<FragmentStore> {
    let mut store = FragmentStore::default();
    for (id, xml) in fragments {
        store.insert(id.clone(), parse_tree(xml)?);
    }
    Ok(store)
}

fn fragments_out(fragments: &[Fragment]) -> Vec<(String, String)> {
    fragments
        .iter()
        .map(|f| (f.fragment_id.clone(), to_xml(&f.content)))
        .collect()
}

fn bundle(fragments: &[Fragment], manifest: &Manifest) -> (String, Vec<(String, String)>) {
    (manifest.to_json(), fragments_out(fragments))
}

/// Label every element; returns `(labeled_xml, schema_json)`.
#[pyfunction]
#[pyo3(signature = (xml, attr = "address"))]
fn annotate(xml: &str, attr: &str) -> PyResult<(String, String)> {
    let labeled = addressing::annotate(&parse_tree(xml)?, attr).map_err(err)?;
    let schema = addressing::schema_to_json(&labeled.schema, attr);
    Ok((to_xml(&labeled.tree), schema))
}

/// Remove the label attribute everywhere.
#[pyfunction]
#[pyo3(signature = (xml, attr = "address"))]
fn strip_labels(xml: &str, attr: &str) -> PyResult<String> {
    Ok(to_xml(&strip_attribute(&parse_tree(xml)?, attr)))
}

/// Split a label into `(ordinals, tag_type)`.
#[pyfunction]
fn parse_address(label: &str) -> PyResult<(Vec<u32>, u32)> {
    let a = parse_addr(label)?;
    Ok((a.ordinals.clone(), a.tag_type))
}

/// Render `(ordinals, tag_type)` as a label.
#[pyfunction]
fn format_address(ordinals: Vec<u32>, tag_type: u32) -> String {
    Address::new(ordinals, tag_type).to_string()
}

/// Relation of two labels, e.g. `parent-child` or `preceding-sibling`.
#[pyfunction]
fn relationship(a: &str, b: &str) -> PyResult<String> {
    let name = match addressing::relationship(&parse_addr(a)?, &parse_addr(b)?) {
        Relationship::SameNode => "same-node",
        Relationship::ParentChild => "parent-child",
        Relationship::ChildParent => "child-parent",
        Relationship::AncestorDescendant => "ancestor-descendant",
        Relationship::DescendantAncestor => "descendant-ancestor",
        Relationship::PrecedingSibling => "preceding-sibling",
        Relationship::FollowingSibling => "following-sibling",
        Relationship::Unrelated => "unrelated",
    };
    Ok(name.to_string())
}

/// True iff the label matches a pattern such as `d.d/5`.
#[pyfunction]
fn match_pattern(label: &str, pattern: &str) -> PyResult<bool> {
    let p = addressing::AddressPattern::parse(pattern).map_err(err)?;
    Ok(addressing::match_pattern(&parse_addr(label)?, &p))
}

/// Highest leading ordinal at `depth` with `tag_type`, read off the labels.
#[pyfunction]
#[pyo3(signature = (labeled_xml, depth, tag_type, attr = "address"))]
fn record_count(labeled_xml: &str, depth: usize, tag_type: u32, attr: &str) -> PyResult<u32> {
    let labeled = labeled_from(labeled_xml, attr)?;
    addressing::record_count(&labeled, depth, tag_type).map_err(err)
}

/// Predicate-driven record split; returns `(manifest_json, fragments)`.
#[pyfunction]
#[pyo3(signature = (xml, predicates, attr = "address"))]
fn fragment_horizontal(
    xml: &str,
    predicates: Vec<String>,
    attr: &str,
) -> PyResult<(String, Vec<(String, String)>)> {
    let labeled = labeled_from(xml, attr)?;
    let preds = predicates_from(&predicates)?;
    let (fragments, manifest, _) =
        fragmentation::horizontal_fragment(&labeled, &preds).map_err(err)?;
    Ok(bundle(&fragments, &manifest))
}

/// Even ordinal-range record split into `parts` pieces.
#[pyfunction]
#[pyo3(signature = (xml, parts, attr = "address"))]
fn fragment_range(xml: &str, parts: u64, attr: &str) -> PyResult<(String, Vec<(String, String)>)> {
    let labeled = labeled_from(xml, attr)?;
    let (fragments, manifest) =
        fragmentation::horizontal_range_fragment(&labeled, parts).map_err(err)?;
    Ok(bundle(&fragments, &manifest))
}

/// Projects subtrees matching `path` out into their own fragment.
#[pyfunction]
#[pyo3(signature = (xml, path, ref_attr = "ref", attr = "address"))]
fn fragment_vertical(
    xml: &str,
    path: &str,
    ref_attr: &str,
    attr: &str,
) -> PyResult<(String, Vec<(String, String)>)> {
    let labeled = labeled_from(xml, attr)?;
    let selector = PathSelector::parse(path).map_err(err)?;
    let (remainder, projected, manifest) =
        fragmentation::vertical_fragment(&labeled, &selector, ref_attr).map_err(err)?;
    Ok(bundle(&[remainder, projected], &manifest))
}

/// Predicate split followed by a projection inside every piece.
#[pyfunction]
#[pyo3(signature = (xml, predicates, path, ref_attr = "ref", attr = "address"))]
fn fragment_hybrid(
    xml: &str,
    predicates: Vec<String>,
    path: &str,
    ref_attr: &str,
    attr: &str,
) -> PyResult<(String, Vec<(String, String)>)> {
    let labeled = labeled_from(xml, attr)?;
    let preds = predicates_from(&predicates)?;
    let selector = PathSelector::parse(path).map_err(err)?;
    let (fragments, manifest, _) =
        fragmentation::hybrid_fragment(&labeled, &preds, &selector, ref_attr).map_err(err)?;
    Ok(bundle(&fragments, &manifest))
}

/// Greedy record buckets of at most `threshold` serialized bytes.
#[pyfunction]
#[pyo3(signature = (xml, threshold, attr = "address"))]
fn fragment_by_size(
    xml: &str,
    threshold: usize,
    attr: &str,
) -> PyResult<(String, Vec<(String, String)>)> {
    let labeled = labeled_from(xml, attr)?;
    let (fragments, manifest) = fragmentation::fragment_by_size(&labeled, threshold).map_err(err)?;
    Ok(bundle(&fragments, &manifest))
}

/// Constraint cuts under byte, fanout, and height ceilings.
#[pyfunction]
#[pyo3(signature = (xml, max_size, max_width, max_depth, attr = "address"))]
fn fragment_simplex(
    xml: &str,
    max_size: usize,
    max_width: usize,
    max_depth: usize,
    attr: &str,
) -> PyResult<(String, Vec<(String, String)>)> {
    let labeled = labeled_from(xml, attr)?;
    let constraints = SizeConstraints {
        max_size,
        max_width,
        max_depth,
    };
    let (fragments, manifest) =
        fragmentation::simplex_fragment(&labeled, &constraints).map_err(err)?;
    Ok(bundle(&fragments, &manifest))
}

/// Rebuild the labeled document from any model's fragments.
#[pyfunction]
fn reassemble(manifest_json: &str, fragments: Vec<(String, String)>) -> PyResult<String> {
    let manifest = Manifest::from_json(manifest_json).map_err(err)?;
    let store = store_from(&fragments)?;
    Ok(to_xml(&cluster::reassemble(&manifest, &store).map_err(err)?))
}

/// Place fragments on `nodes` simulated nodes; returns allocation JSON.
#[pyfunction]
fn allocate(manifest_json: &str, nodes: usize, strategy: &str) -> PyResult<String> {
    let manifest = Manifest::from_json(manifest_json).map_err(err)?;
    let strategy: Strategy = strategy.parse().map_err(err)?;
    Ok(cluster::allocate(&manifest, nodes, strategy).map_err(err)?.to_json())
}

/// Route a predicate query; returns `{"nodes", "matches", "scanned"}` JSON.
#[pyfunction]
fn route_query(
    predicate: &str,
    manifest_json: &str,
    allocation_json: &str,
    fragments: Vec<(String, String)>,
) -> PyResult<String> {
    let p = parse_predicate(predicate).map_err(err)?;
    let manifest = Manifest::from_json(manifest_json).map_err(err)?;
    let allocation = Allocation::from_json(allocation_json).map_err(err)?;
    let store = store_from(&fragments)?;
    let result = cluster::route_query(&p, &manifest, &allocation, &store).map_err(err)?;
    Ok(result.to_json())
}

/// Cut the document at the given labels; returns `[(filler_id, xml), ...]`
/// with `F0` as the residue.
#[pyfunction]
#[pyo3(signature = (labeled_xml, cuts, hole_tag = "hole", attr = "address"))]
fn encode_fillers(
    labeled_xml: &str,
    cuts: Vec<String>,
    hole_tag: &str,
    attr: &str,
) -> PyResult<Vec<(String, String)>> {
    let labeled = labeled_from(labeled_xml, attr)?;
    let cuts: Vec<Address> = cuts
        .iter()
        .map(|s| parse_addr(s))
        .collect::<PyResult<_>>()?;
    let fillers = cluster::encode_fillers(&labeled, &cuts, hole_tag).map_err(err)?;
    Ok(fillers
        .iter()
        .map(|f| (f.filler_id.clone(), to_xml(&f.content)))
        .collect())
}

/// Rebuild a document from fillers in any order; returns `(xml, orphans)`.
#[pyfunction]
#[pyo3(signature = (fillers, hole_tag = "hole"))]
fn decode_fillers(
    fillers: Vec<(String, String)>,
    hole_tag: &str,
) -> PyResult<(String, Vec<String>)> {
    let fillers: Vec<Filler> = fillers
        .iter()
        .map(|(id, xml)| {
            Ok(Filler {
                filler_id: id.clone(),
                content: parse_tree(xml)?,
            })
        })
        .collect::<PyResult<_>>()?;
    let decoded = cluster::decode_fillers(&fillers, hole_tag).map_err(err)?;
    Ok((to_xml(&decoded.tree), decoded.orphans))
}

/// Size and shape measurements of a fragment set as JSON.
#[pyfunction]
fn stats(fragments: Vec<(String, String)>) -> PyResult<String> {
    let trees: Vec<(String, XmlTree)> = fragments
        .iter()
        .map(|(id, xml)| Ok((id.clone(), parse_tree(xml)?)))
        .collect::<PyResult<_>>()?;
    let histogram =
        measure_fragments(trees.iter().map(|(id, t)| (id.as_str(), t))).map_err(err)?;
    serde_json::to_string_pretty(&histogram).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Deterministic synthetic book catalogue.
#[pyfunction]
#[pyo3(signature = (records, seed = 0))]
fn generate_books(records: usize, seed: u64) -> String {
    to_xml(&xmlfrag::generate::generate_books(records, seed))
}

#[pymodule]
fn xmlfrag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(annotate, m)?)?;
    m.add_function(wrap_pyfunction!(strip_labels, m)?)?;
    m.add_function(wrap_pyfunction!(parse_address, m)?)?;
    m.add_function(wrap_pyfunction!(format_address, m)?)?;
    m.add_function(wrap_pyfunction!(relationship, m)?)?;
    m.add_function(wrap_pyfunction!(match_pattern, m)?)?;
    m.add_function(wrap_pyfunction!(record_count, m)?)?;
    m.add_function(wrap_pyfunction!(fragment_horizontal, m)?)?;
    m.add_function(wrap_pyfunction!(fragment_range, m)?)?;
    m.add_function(wrap_pyfunction!(fragment_vertical, m)?)?;
    m.add_function(wrap_pyfunction!(fragment_hybrid, m)?)?;
    m.add_function(wrap_pyfunction!(fragment_by_size, m)?)?;
    m.add_function(wrap_pyfunction!(fragment_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(reassemble, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(route_query, m)?)?;
    m.add_function(wrap_pyfunction!(encode_fillers, m)?)?;
    m.add_function(wrap_pyfunction!(decode_fillers, m)?)?;
    m.add_function(wrap_pyfunction!(stats, m)?)?;
    m.add_function(wrap_pyfunction!(generate_books, m)?)?;
    Ok(())
}
