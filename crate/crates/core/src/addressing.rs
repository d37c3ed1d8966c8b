//! Prefix address labels: every element gets an `address` attribute holding
//! its sibling-ordinal path and tag type (`1.4/6`, root `/0`), plus the label
//! algebra — parsing, relationship tests, pattern matching, record counting.

use crate::error::{Error, Result};
use crate::xml_model::{ElementNode, XmlTree};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

/// Attribute name used for labels unless the caller picks another.
pub const DEFAULT_ATTR: &str = "address";

/// A label: 1-based position of each ancestor-or-self among *all* element
/// siblings (root excluded), plus the element's tag type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address {
    pub ordinals: Vec<u32>,
    pub tag_type: u32,
}

impl Address {
    pub fn new(ordinals: Vec<u32>, tag_type: u32) -> Self {
        Address { ordinals, tag_type }
    }

    /// The root label `/0`.
    pub fn root() -> Self {
        Address::new(Vec::new(), 0)
    }

    /// Nesting depth: 0 for the root, 1 for its children, and so on.
    pub fn depth(&self) -> usize {
        self.ordinals.len()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for o in &self.ordinals {
            if !first {
                f.write_str(".")?;
            }
            write!(f, "{o}")?;
            first = false;
        }
        write!(f, "/{}", self.tag_type)
    }
}

impl FromStr for Address {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |message: &str| Error::AddressSyntax {
            input: s.to_string(),
            message: message.to_string(),
        };
        let (left, right) = s.split_once('/').ok_or_else(|| bad("missing `/`"))?;
        if right.contains('/') {
            return Err(bad("more than one `/`"));
        }
        if right.is_empty() || !right.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad("tag type is not an integer"));
        }
        let tag_type: u32 = right.parse().map_err(|_| bad("tag type out of range"))?;
        let mut ordinals = Vec::new();
        if !left.is_empty() {
            for part in left.split('.') {
                if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(bad("ordinal is not an integer"));
                }
                let o: u32 = part.parse().map_err(|_| bad("ordinal out of range"))?;
                if o == 0 {
                    return Err(bad("ordinals start at 1"));
                }
                ordinals.push(o);
            }
        }
        Ok(Address { ordinals, tag_type })
    }
}

/// Parses the rendered form `o1.o2.….on/t` (root: `/0`).
pub fn parse_address(s: &str) -> Result<Address> {
    s.parse()
}

/// Renders an address; inverse of [`parse_address`].
pub fn format_address(a: &Address) -> String {
    a.to_string()
}

/// Structural relation between two addressed elements of one document,
/// read as "the first argument is the … of the second".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relationship {
    SameNode,
    ParentChild,
    ChildParent,
    AncestorDescendant,
    DescendantAncestor,
    PrecedingSibling,
    FollowingSibling,
    Unrelated,
}

/// Decides the relation purely from the ordinal sequences.
pub fn relationship(a: &Address, b: &Address) -> Relationship {
    let x = &a.ordinals;
    let y = &b.ordinals;
    if x == y {
        return Relationship::SameNode;
    }
    if y.len() > x.len() && y[..x.len()] == x[..] {
        return if y.len() == x.len() + 1 {
            Relationship::ParentChild
        } else {
            Relationship::AncestorDescendant
        };
    }
    if x.len() > y.len() && x[..y.len()] == y[..] {
        return if x.len() == y.len() + 1 {
            Relationship::ChildParent
        } else {
            Relationship::DescendantAncestor
        };
    }
    if x.len() == y.len() && x[..x.len() - 1] == y[..y.len() - 1] {
        return if x[x.len() - 1] < y[y.len() - 1] {
            Relationship::PrecedingSibling
        } else {
            Relationship::FollowingSibling
        };
    }
    Relationship::Unrelated
}

/// First-encounter mapping from tag names to integer tag types (root = 0).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagSchema {
    entries: Vec<String>,
}

impl TagSchema {
    /// Builds a schema from an ordered tag list; index = tag type.
    pub fn from_tags(tags: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &tags {
            if !seen.insert(t.as_str()) {
                return Err(Error::Manifest(format!("duplicate tag `{t}` in schema")));
            }
        }
        Ok(TagSchema { entries: tags })
    }

    pub fn tag_type(&self, name: &str) -> Option<u32> {
        self.entries.iter().position(|t| t == name).map(|i| i as u32)
    }

    pub fn name(&self, tag_type: u32) -> Option<&str> {
        self.entries.get(tag_type as usize).map(|s| s.as_str())
    }

    pub fn tags(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// On-disk schema shape: `{ "attr_name": ..., "tags": [...] }`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SchemaFile {
    pub attr_name: String,
    pub tags: Vec<String>,
}

/// Serializes a schema with its label attribute name.
pub fn schema_to_json(schema: &TagSchema, attr_name: &str) -> String {
    let file = SchemaFile {
        attr_name: attr_name.to_string(),
        tags: schema.tags().to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("schema serializes")
}

/// Reads a schema file, returning the schema and the label attribute name.
pub fn schema_from_json(s: &str) -> Result<(TagSchema, String)> {
    let file: SchemaFile = serde_json::from_str(s)?;
    Ok((TagSchema::from_tags(file.tags)?, file.attr_name))
}

/// A labeled document: the tree (every element carries the label attribute),
/// the tag schema built during labeling, and the attribute name used.
#[derive(Debug, Clone)]
pub struct AnnotatedTree {
    pub tree: XmlTree,
    pub schema: TagSchema,
    pub attr_name: String,
}

impl AnnotatedTree {
    /// Reconstructs the annotation state from an already-labeled tree,
    /// verifying label syntax, positional consistency, uniqueness, and the
    /// tag-name/tag-type bijection.
    pub fn from_labeled(tree: XmlTree, attr_name: &str) -> Result<Self> {
        let mut types: HashMap<String, u32> = HashMap::new();
        let mut seen: HashSet<Address> = HashSet::new();

        fn walk(
            node: &ElementNode,
            expected: &[u32],
            attr_name: &str,
            types: &mut HashMap<String, u32>,
            seen: &mut HashSet<Address>,
            path: &str,
        ) -> Result<()> {
            let raw = node.attr(attr_name).ok_or_else(|| Error::Label {
                path: path.to_string(),
                message: format!("missing `{attr_name}` attribute"),
            })?;
            let addr = parse_address(raw)?;
            if addr.ordinals != expected {
                return Err(Error::Label {
                    path: path.to_string(),
                    message: format!("label `{raw}` does not match the element position"),
                });
            }
            match types.get(&node.tag) {
                Some(&t) if t != addr.tag_type => {
                    return Err(Error::Label {
                        path: path.to_string(),
                        message: format!(
                            "tag `{}` labeled with types {t} and {}",
                            node.tag, addr.tag_type
                        ),
                    })
                }
                Some(_) => {}
                None => {
                    types.insert(node.tag.clone(), addr.tag_type);
                }
            }
            if !seen.insert(addr.clone()) {
                return Err(Error::Label {
                    path: path.to_string(),
                    message: format!("duplicate label `{raw}`"),
                });
            }
            let mut child_path = expected.to_vec();
            for (i, child) in node.children.iter().enumerate() {
                child_path.push(i as u32 + 1);
                let p = format!("{path}/{}[{}]", child.tag, i + 1);
                walk(child, &child_path, attr_name, types, seen, &p)?;
                child_path.pop();
            }
            Ok(())
        }

        let root_path = format!("/{}", tree.root.tag);
        walk(&tree.root, &[], attr_name, &mut types, &mut seen, &root_path)?;

        let mut tags = vec![String::new(); types.len()];
        for (tag, t) in &types {
            let slot = tags.get_mut(*t as usize).ok_or_else(|| Error::Label {
                path: root_path.clone(),
                message: format!("tag types are not contiguous (tag `{tag}` has type {t})"),
            })?;
            if !slot.is_empty() {
                return Err(Error::Label {
                    path: root_path.clone(),
                    message: format!("tags `{slot}` and `{tag}` share type {t}"),
                });
            }
            *slot = tag.clone();
        }
        Ok(AnnotatedTree {
            tree,
            schema: TagSchema::from_tags(tags)?,
            attr_name: attr_name.to_string(),
        })
    }

    /// The parsed label of one element of this tree.
    pub fn address_of(&self, node: &ElementNode) -> Result<Address> {
        address_of(node, &self.attr_name)
    }

    /// Resolves an address back to its element by walking the ordinals and
    /// checking the final label, including the tag type.
    pub fn element_at(&self, addr: &Address) -> Result<&ElementNode> {
        let mut cur = &self.tree.root;
        for &o in &addr.ordinals {
            cur = cur
                .children
                .iter()
                .find(|c| {
                    address_of(c, &self.attr_name)
                        .ok()
                        .is_some_and(|a| a.ordinals.last() == Some(&o))
                })
                .ok_or_else(|| Error::UnknownPath(addr.to_string()))?;
        }
        if address_of(cur, &self.attr_name)? != *addr {
            return Err(Error::UnknownPath(addr.to_string()));
        }
        Ok(cur)
    }
}

/// Reads and parses the label attribute of a single element.
pub fn address_of(node: &ElementNode, attr_name: &str) -> Result<Address> {
    let raw = node.attr(attr_name).ok_or_else(|| Error::Label {
        path: format!("<{}>", node.tag),
        message: format!("missing `{attr_name}` attribute"),
    })?;
    parse_address(raw)
}

/// Full-traversal labeling: depth-first document order, sibling ordinals,
/// first-encounter tag types with root = 0. Fails if any element already
/// carries the label attribute.
pub fn annotate(tree: &XmlTree, attr_name: &str) -> Result<AnnotatedTree> {
    let mut tree = tree.clone();
    let mut types: HashMap<String, u32> = HashMap::new();
    let mut entries: Vec<String> = Vec::new();

    fn walk(
        node: &mut ElementNode,
        ordinals: &mut Vec<u32>,
        attr_name: &str,
        types: &mut HashMap<String, u32>,
        entries: &mut Vec<String>,
        path: &str,
    ) -> Result<()> {
        if node.attr(attr_name).is_some() {
            return Err(Error::LabelingConflict {
                path: path.to_string(),
                attr: attr_name.to_string(),
            });
        }
        let tag_type = match types.get(&node.tag) {
            Some(&t) => t,
            None => {
                let t = entries.len() as u32;
                types.insert(node.tag.clone(), t);
                entries.push(node.tag.clone());
                t
            }
        };
        let label = Address::new(ordinals.clone(), tag_type).to_string();
        node.attributes.push((attr_name.to_string(), label));
        for (i, child) in node.children.iter_mut().enumerate() {
            ordinals.push(i as u32 + 1);
            let p = format!("{path}/{}[{}]", child.tag, i + 1);
            walk(child, ordinals, attr_name, types, entries, &p)?;
            ordinals.pop();
        }
        Ok(())
    }

    let root_path = format!("/{}", tree.root.tag);
    walk(
        &mut tree.root,
        &mut Vec::new(),
        attr_name,
        &mut types,
        &mut entries,
        &root_path,
    )?;
    Ok(AnnotatedTree {
        tree,
        schema: TagSchema::from_tags(entries)?,
        attr_name: attr_name.to_string(),
    })
}

/// A label pattern: `d` stands for one-or-more digits, `.` for a literal dot,
/// `/t` for a literal slash plus tag type. `d.d/5` matches depth-2 addresses
/// of tag type 5.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressPattern {
    source: String,
    depth: usize,
    tag_type: u32,
}

impl AddressPattern {
    pub fn parse(source: &str) -> Result<Self> {
        let bad = |message: &str| Error::PatternSyntax {
            input: source.to_string(),
            message: message.to_string(),
        };
        let (left, right) = source.split_once('/').ok_or_else(|| bad("missing `/`"))?;
        if right.contains('/') {
            return Err(bad("more than one `/`"));
        }
        if right.is_empty() || !right.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad("tag type is not an integer"));
        }
        let tag_type: u32 = right.parse().map_err(|_| bad("tag type out of range"))?;
        let depth = if left.is_empty() {
            0
        } else {
            let mut n = 0;
            for token in left.split('.') {
                if token != "d" {
                    return Err(bad("ordinal tokens must be `d`"));
                }
                n += 1;
            }
            n
        };
        Ok(AddressPattern {
            source: source.to_string(),
            depth,
            tag_type,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tag_type(&self) -> u32 {
        self.tag_type
    }

    /// The equivalent anchored regular expression, e.g. `^\d+\.\d+/5$`.
    pub fn regex(&self) -> String {
        let mut out = String::from("^");
        for i in 0..self.depth {
            if i > 0 {
                out.push_str("\\.");
            }
            out.push_str("\\d+");
        }
        out.push('/');
        out.push_str(&self.tag_type.to_string());
        out.push('$');
        out
    }
}

/// True iff the rendered address matches the pattern (same depth, same tag
/// type; each `d` covers one ordinal).
pub fn match_pattern(a: &Address, p: &AddressPattern) -> bool {
    a.ordinals.len() == p.depth && a.tag_type == p.tag_type
}

/// Maximum leading ordinal among labels at the given depth with the given
/// tag type — the record count readable straight off the labels.
pub fn record_count(t: &AnnotatedTree, depth: usize, tag_type: u32) -> Result<u32> {
    fn walk(
        node: &ElementNode,
        attr_name: &str,
        depth: usize,
        tag_type: u32,
        best: &mut u32,
    ) -> Result<()> {
        let addr = address_of(node, attr_name)?;
        if addr.depth() == depth && addr.tag_type == tag_type {
            *best = (*best).max(addr.ordinals[0]);
        }
        if addr.depth() < depth {
            for child in &node.children {
                walk(child, attr_name, depth, tag_type, best)?;
            }
        }
        Ok(())
    }
    let mut best = 0;
    walk(&t.tree.root, &t.attr_name, depth, tag_type, &mut best)?;
    Ok(best)
}
