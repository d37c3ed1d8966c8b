//! Ordered XML element trees: parsing, canonical serialization, structural
//! comparison, and byte measurement. Everything downstream operates on these.

use crate::error::{Error, Result};
use quick_xml::events::Event;
use quick_xml::Reader;

/// One parsed document: a single root element plus an opaque identifier
/// (defaults to the root tag; callers may override, e.g. with a file stem).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XmlTree {
    pub root: ElementNode,
    pub doc_id: String,
}

/// An element: tag, ordered attributes, ordered element children, and the
/// concatenated character content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementNode {
    pub tag: String,
    pub attributes: Vec<(String, String)>,
    pub children: Vec<ElementNode>,
    pub text: String,
}

impl ElementNode {
    pub fn new(tag: impl Into<String>) -> Self {
        ElementNode {
            tag: tag.into(),
            attributes: Vec::new(),
            children: Vec::new(),
            text: String::new(),
        }
    }

    /// Value of the named attribute, if present.
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    /// Sets (replacing) or appends the named attribute.
    pub fn set_attr(&mut self, name: &str, value: impl Into<String>) {
        let value = value.into();
        match self.attributes.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.attributes.push((name.to_string(), value)),
        }
    }

    /// Removes the named attribute, returning its value if it was present.
    pub fn remove_attr(&mut self, name: &str) -> Option<String> {
        let idx = self.attributes.iter().position(|(n, _)| n == name)?;
        Some(self.attributes.remove(idx).1)
    }

    /// Number of elements in this subtree, the root included.
    pub fn element_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.element_count()).sum::<usize>()
    }

    /// Height of this subtree in element levels (a lone element has height 1).
    pub fn height(&self) -> usize {
        1 + self.children.iter().map(|c| c.height()).max().unwrap_or(0)
    }

    /// Largest child-list length anywhere in this subtree.
    pub fn max_fanout(&self) -> usize {
        let own = self.children.len();
        self.children
            .iter()
            .map(|c| c.max_fanout())
            .max()
            .map_or(own, |deep| own.max(deep))
    }
}

fn is_xml_ws(s: &str) -> bool {
    s.bytes().all(|b| matches!(b, b' ' | b'\t' | b'\r' | b'\n'))
}

fn check_name(name: &str, what: &str, offset: u64) -> Result<()> {
    if name.is_empty() {
        return Err(Error::Parse {
            offset,
            message: format!("empty {what} name"),
        });
    }
    if name.contains(':') {
        return Err(Error::Unsupported {
            construct: format!("namespace prefix in {what} name `{name}`"),
            offset,
        });
    }
    Ok(())
}

/// Parses a UTF-8 XML document within the supported subset (elements,
/// attributes, character content, comments, XML declaration). Namespaces,
/// CDATA, processing instructions, and DOCTYPE are rejected.
pub fn parse_document(bytes: &[u8]) -> Result<XmlTree> {
    let input = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        offset: e.valid_up_to() as u64,
        message: "input is not valid UTF-8".into(),
    })?;
    let mut reader = Reader::from_str(input);
    let mut stack: Vec<ElementNode> = Vec::new();
    let mut root: Option<ElementNode> = None;

    loop {
        let offset = reader.buffer_position();
        let event = reader.read_event().map_err(|e| Error::Parse {
            offset: reader.error_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Decl(d) => {
                if let Some(Ok(enc)) = d.encoding() {
                    let enc = String::from_utf8_lossy(&enc).to_string();
                    if !enc.eq_ignore_ascii_case("utf-8") {
                        return Err(Error::Unsupported {
                            construct: format!("encoding `{enc}`"),
                            offset,
                        });
                    }
                }
            }
            Event::Start(start) => {
                if root.is_some() && stack.is_empty() {
                    return Err(Error::Parse {
                        offset,
                        message: "multiple root elements".into(),
                    });
                }
                let node = open_element(&start, offset)?;
                stack.push(node);
            }
            Event::Empty(start) => {
                if root.is_some() && stack.is_empty() {
                    return Err(Error::Parse {
                        offset,
                        message: "multiple root elements".into(),
                    });
                }
                let node = open_element(&start, offset)?;
                attach(node, &mut stack, &mut root);
            }
            Event::End(_) => {
                let mut node = stack.pop().ok_or_else(|| Error::Parse {
                    offset,
                    message: "closing tag without opener".into(),
                })?;
                if !node.children.is_empty() && is_xml_ws(&node.text) {
                    node.text.clear();
                }
                attach(node, &mut stack, &mut root);
            }
            Event::Text(t) => {
                let text = t.unescape().map_err(|e| Error::Parse {
                    offset,
                    message: e.to_string(),
                })?;
                match stack.last_mut() {
                    Some(top) => top.text.push_str(&text),
                    None => {
                        if !is_xml_ws(&text) {
                            return Err(Error::Parse {
                                offset,
                                message: "character content outside the root element".into(),
                            });
                        }
                    }
                }
            }
            Event::Comment(_) => {}
            Event::CData(_) => {
                return Err(Error::Unsupported {
                    construct: "CDATA section".into(),
                    offset,
                })
            }
            Event::PI(_) => {
                return Err(Error::Unsupported {
                    construct: "processing instruction".into(),
                    offset,
                })
            }
            Event::DocType(_) => {
                return Err(Error::Unsupported {
                    construct: "DOCTYPE declaration".into(),
                    offset,
                })
            }
            Event::Eof => {
                if let Some(open) = stack.last() {
                    return Err(Error::Parse {
                        offset,
                        message: format!("unexpected end of input inside `{}`", open.tag),
                    });
                }
                break;
            }
        }
    }

    let root = root.ok_or(Error::Parse {
        offset: reader.buffer_position(),
        message: "document has no root element".into(),
    })?;
    let doc_id = root.tag.clone();
    Ok(XmlTree { root, doc_id })
}

fn open_element(start: &quick_xml::events::BytesStart, offset: u64) -> Result<ElementNode> {
    let tag = String::from_utf8_lossy(start.name().as_ref()).to_string();
    check_name(&tag, "element", offset)?;
    let mut node = ElementNode::new(tag);
    for attr in start.attributes() {
        let attr = attr.map_err(|e| Error::Parse {
            offset,
            message: e.to_string(),
        })?;
        let name = String::from_utf8_lossy(attr.key.as_ref()).to_string();
        if name == "xmlns" {
            return Err(Error::Unsupported {
                construct: "namespace declaration (xmlns)".into(),
                offset,
            });
        }
        check_name(&name, "attribute", offset)?;
        let value = attr
            .unescape_value()
            .map_err(|e| Error::Parse {
                offset,
                message: e.to_string(),
            })?
            .into_owned();
        node.attributes.push((name, value));
    }
    Ok(node)
}

fn attach(node: ElementNode, stack: &mut Vec<ElementNode>, root: &mut Option<ElementNode>) {
    match stack.last_mut() {
        Some(parent) => parent.children.push(node),
        None => *root = Some(node),
    }
}

fn escape_into(s: &str, quote: bool, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if quote => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
}

fn write_element(node: &ElementNode, out: &mut String) {
    out.push('<');
    out.push_str(&node.tag);
    for (name, value) in &node.attributes {
        out.push(' ');
        out.push_str(name);
        out.push_str("=\"");
        escape_into(value, true, out);
        out.push('"');
    }
    if node.children.is_empty() && node.text.is_empty() {
        out.push_str("/>");
        return;
    }
    out.push('>');
    escape_into(&node.text, false, out);
    for child in &node.children {
        write_element(child, out);
    }
    out.push_str("</");
    out.push_str(&node.tag);
    out.push('>');
}

/// Canonical serialization of one subtree: UTF-8, attributes in stored order,
/// `& < > "` escaped, no indentation, text before children.
pub fn serialize_element(node: &ElementNode) -> String {
    let mut out = String::new();
    write_element(node, &mut out);
    out
}

/// Canonical serialization of a whole document, declaration regenerated.
pub fn serialize_document(tree: &XmlTree) -> Vec<u8> {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    write_element(&tree.root, &mut out);
    out.push('\n');
    out.into_bytes()
}

/// Byte length of the canonical serialization of this subtree.
pub fn subtree_byte_size(node: &ElementNode) -> usize {
    serialize_element(node).len()
}

fn elements_equal(a: &ElementNode, b: &ElementNode, ignore: &[&str]) -> bool {
    if a.tag != b.tag || a.text != b.text || a.children.len() != b.children.len() {
        return false;
    }
    let keep = |attrs: &[(String, String)]| -> Vec<(String, String)> {
        let mut kept: Vec<_> = attrs
            .iter()
            .filter(|(n, _)| !ignore.contains(&n.as_str()))
            .cloned()
            .collect();
        kept.sort();
        kept
    };
    if keep(&a.attributes) != keep(&b.attributes) {
        return false;
    }
    a.children
        .iter()
        .zip(&b.children)
        .all(|(x, y)| elements_equal(x, y, ignore))
}

/// True iff the trees agree on tags, text, child order, and attribute sets
/// once the `ignore_attrs` names are dropped.
pub fn structural_equal(a: &XmlTree, b: &XmlTree, ignore_attrs: &[&str]) -> bool {
    elements_equal(&a.root, &b.root, ignore_attrs)
}

/// Copy of the tree with every occurrence of the named attribute removed.
pub fn strip_attribute(tree: &XmlTree, name: &str) -> XmlTree {
    fn strip(node: &ElementNode, name: &str) -> ElementNode {
        ElementNode {
            tag: node.tag.clone(),
            attributes: node
                .attributes
                .iter()
                .filter(|(n, _)| n != name)
                .cloned()
                .collect(),
            children: node.children.iter().map(|c| strip(c, name)).collect(),
            text: node.text.clone(),
        }
    }
    XmlTree {
        root: strip(&tree.root, name),
        doc_id: tree.doc_id.clone(),
    }
}
