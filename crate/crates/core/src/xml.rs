// SPDX-License-Identifier: Apache-2.0

//! Minimal element tree over `quick-xml`, plus the writer used for canonical
//! and pretty output. No namespace processing: `ds:Signature` is a literal
//! element name.

use quick_xml::Reader;
use quick_xml::events::{BytesStart, Event};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Node {
    Element(Element),
    Text(String),
    Comment,
    ProcessingInstruction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Node>,
}

impl Element {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|n| match n {
            Node::Element(e) => Some(e),
            _ => None,
        })
    }

    /// Concatenated text children, or `None` when the element also has
    /// element children.
    pub fn text(&self) -> Option<String> {
        let mut out = String::new();
        for child in &self.children {
            match child {
                Node::Text(t) => out.push_str(t),
                Node::Element(_) => return None,
                Node::Comment | Node::ProcessingInstruction => {}
            }
        }
        Some(out)
    }

    /// True when text children are nothing but whitespace.
    pub fn has_only_blank_text(&self) -> bool {
        self.children.iter().all(|n| match n {
            Node::Text(t) => t.chars().all(|c| matches!(c, ' ' | '\t' | '\n' | '\r')),
            _ => true,
        })
    }

    pub fn has_markup_noise(&self) -> bool {
        self.children.iter().any(|n| match n {
            Node::Comment | Node::ProcessingInstruction => true,
            Node::Element(e) => e.has_markup_noise(),
            Node::Text(_) => false,
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub(crate) struct MalformedXml(pub String);

fn start_element(start: &BytesStart<'_>) -> Result<Element, MalformedXml> {
    let name = std::str::from_utf8(start.name().as_ref()).map_err(|e| MalformedXml(e.to_string()))?.to_owned();
    let mut attrs = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| MalformedXml(e.to_string()))?;
        let key = std::str::from_utf8(attr.key.as_ref()).map_err(|e| MalformedXml(e.to_string()))?.to_owned();
        let value = attr.unescape_value().map_err(|e| MalformedXml(e.to_string()))?;
        attrs.push((key, value.into_owned()));
    }
    Ok(Element { name, attrs, children: Vec::new() })
}

/// Parses a complete document into its root element.
pub(crate) fn parse_document(bytes: &[u8]) -> Result<Element, MalformedXml> {
    let text = std::str::from_utf8(bytes).map_err(|e| MalformedXml(format!("not UTF-8: {e}")))?;
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(false);

    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;

    let attach = |stack: &mut Vec<Element>, root: &mut Option<Element>, node: Node| -> Result<(), MalformedXml> {
        match stack.last_mut() {
            Some(parent) => {
                parent.children.push(node);
                Ok(())
            }
            None => match node {
                Node::Element(e) if root.is_none() => {
                    *root = Some(e);
                    Ok(())
                }
                Node::Element(_) => Err(MalformedXml("more than one root element".into())),
                Node::Text(t) if t.trim().is_empty() => Ok(()),
                Node::Text(_) => Err(MalformedXml("text outside the root element".into())),
                Node::Comment | Node::ProcessingInstruction => Ok(()),
            },
        }
    };

    loop {
        let event =
            reader.read_event().map_err(|e| MalformedXml(format!("at byte {}: {e}", reader.buffer_position())))?;
        match event {
            Event::Start(start) => {
                let element = start_element(&start)?;
                if stack.is_empty() && root.is_some() {
                    return Err(MalformedXml("more than one root element".into()));
                }
                stack.push(element);
            }
            Event::Empty(start) => {
                let element = start_element(&start)?;
                attach(&mut stack, &mut root, Node::Element(element))?;
            }
            Event::End(_) => {
                let element = stack.pop().ok_or_else(|| MalformedXml("unbalanced end tag".into()))?;
                attach(&mut stack, &mut root, Node::Element(element))?;
            }
            Event::Text(t) => {
                let text = t.unescape().map_err(|e| MalformedXml(e.to_string()))?;
                attach(&mut stack, &mut root, Node::Text(text.into_owned()))?;
            }
            Event::CData(c) => {
                let text = std::str::from_utf8(&c).map_err(|e| MalformedXml(e.to_string()))?;
                attach(&mut stack, &mut root, Node::Text(text.to_owned()))?;
            }
            Event::Comment(_) => attach(&mut stack, &mut root, Node::Comment)?,
            Event::PI(_) => attach(&mut stack, &mut root, Node::ProcessingInstruction)?,
            Event::Decl(_) => {}
            Event::DocType(_) => return Err(MalformedXml("document type declarations are not accepted".into())),
            Event::Eof => break,
        }
    }
    if !stack.is_empty() {
        return Err(MalformedXml("unexpected end of document".into()));
    }
    root.ok_or_else(|| MalformedXml("no root element".into()))
}

fn escape_into(out: &mut String, text: &str, attribute: bool) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attribute => out.push_str("&quot;"),
            '\r' => out.push_str("&#13;"),
            '\n' if attribute => out.push_str("&#10;"),
            '\t' if attribute => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
}

/// Streaming writer. Canonical mode emits no whitespace between elements;
/// pretty mode indents by two spaces and keeps leaf text inline.
pub(crate) struct XmlWriter {
    out: String,
    pretty: bool,
    depth: usize,
}

impl XmlWriter {
    pub fn canonical() -> Self {
        Self { out: String::new(), pretty: false, depth: 0 }
    }

    pub fn pretty() -> Self {
        Self { out: String::new(), pretty: true, depth: 0 }
    }

    fn indent(&mut self) {
        if self.pretty {
            if !self.out.is_empty() {
                self.out.push('\n');
            }
            for _ in 0..self.depth {
                self.out.push_str("  ");
            }
        }
    }

    fn start_tag(&mut self, name: &str, attrs: &[(&str, &str)]) {
        self.out.push('<');
        self.out.push_str(name);
        for (k, v) in attrs {
            self.out.push(' ');
            self.out.push_str(k);
            self.out.push_str("=\"");
            escape_into(&mut self.out, v, true);
            self.out.push('"');
        }
        self.out.push('>');
    }

    pub fn open(&mut self, name: &str, attrs: &[(&str, &str)]) {
        self.indent();
        self.start_tag(name, attrs);
        self.depth += 1;
    }

    pub fn close(&mut self, name: &str) {
        self.depth -= 1;
        self.indent();
        self.out.push_str("</");
        self.out.push_str(name);
        self.out.push('>');
    }

    pub fn leaf(&mut self, name: &str, attrs: &[(&str, &str)], text: &str) {
        self.indent();
        self.start_tag(name, attrs);
        escape_into(&mut self.out, text, false);
        self.out.push_str("</");
        self.out.push_str(name);
        self.out.push('>');
    }

    pub fn finish(mut self) -> String {
        if self.pretty {
            self.out.push('\n');
        }
        self.out
    }
}
