//! Subtree-at-a-time XML reading: the stream is scanned with quick-xml and
//! only the elements of interest (one article, one citation) are materialized.

use std::io::BufRead;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::CorpusError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Child {
    Elem(Element),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Child>,
}

impl Element {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|c| match c {
            Child::Elem(e) => Some(e),
            Child::Text(_) => None,
        })
    }

    pub fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.elements().filter(move |e| e.name == name)
    }

    pub fn child(&self, name: &str) -> Option<&Element> {
        self.elements().find(|e| e.name == name)
    }

    /// Follows a chain of child names.
    pub fn path(&self, names: &[&str]) -> Option<&Element> {
        names.iter().try_fold(self, |e, n| e.child(n))
    }

    /// Concatenated text of all descendants, in document order.
    pub fn text(&self) -> String {
        let mut out = String::new();
        self.collect_text(&mut out);
        out
    }

    fn collect_text(&self, out: &mut String) {
        for c in &self.children {
            match c {
                Child::Text(t) => out.push_str(t),
                Child::Elem(e) => e.collect_text(out),
            }
        }
    }
}

pub(crate) struct XmlStream<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    depth: usize,
}

fn xml_error(reader_pos: u64, e: impl std::fmt::Display) -> CorpusError {
    CorpusError::Xml {
        offset: reader_pos,
        message: e.to_string(),
    }
}

fn start_element(reader_pos: u64, e: &BytesStart<'_>) -> Result<Element, CorpusError> {
    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
    let mut attrs = Vec::new();
    for a in e.attributes() {
        let a = a.map_err(|err| xml_error(reader_pos, err))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = match a.unescape_value() {
            Ok(v) => v.into_owned(),
            Err(_) => String::from_utf8_lossy(&a.value).into_owned(),
        };
        attrs.push((key, value));
    }
    Ok(Element {
        name,
        attrs,
        children: Vec::new(),
    })
}

impl<R: BufRead> XmlStream<R> {
    pub fn new(input: R) -> Self {
        let mut reader = Reader::from_reader(input);
        reader.config_mut().trim_text(false);
        XmlStream {
            reader,
            buf: Vec::new(),
            depth: 0,
        }
    }

    /// Returns the next element named in `targets`, skipping the subtrees of
    /// elements named in `skip`. `None` at a clean end of input.
    pub fn next_element(&mut self, targets: &[&str], skip: &[&str]) -> Result<Option<Element>, CorpusError> {
        loop {
            self.buf.clear();
            let pos = self.reader.buffer_position();
            let event = self
                .reader
                .read_event_into(&mut self.buf)
                .map_err(|e| xml_error(pos, e))?;
            match event {
                Event::Start(e) => {
                    let name = e.name();
                    let name = name.as_ref();
                    if targets.iter().any(|t| t.as_bytes() == name) {
                        let root = start_element(pos, &e)?;
                        return self.read_subtree(root).map(Some);
                    }
                    if skip.iter().any(|t| t.as_bytes() == name) {
                        let end = e.to_end().into_owned();
                        let mut scratch = Vec::new();
                        self.reader
                            .read_to_end_into(end.name(), &mut scratch)
                            .map_err(|err| xml_error(self.reader.buffer_position(), err))?;
                        continue;
                    }
                    self.depth += 1;
                }
                Event::Empty(e) => {
                    if targets.iter().any(|t| t.as_bytes() == e.name().as_ref()) {
                        return start_element(pos, &e).map(Some);
                    }
                }
                Event::End(_) => self.depth = self.depth.saturating_sub(1),
                Event::Eof => {
                    if self.depth > 0 {
                        return Err(xml_error(
                            self.reader.buffer_position(),
                            "unexpected end of input inside an open element",
                        ));
                    }
                    return Ok(None);
                }
                _ => {}
            }
        }
    }

    fn read_subtree(&mut self, root: Element) -> Result<Element, CorpusError> {
        let mut stack = vec![root];
        loop {
            self.buf.clear();
            let pos = self.reader.buffer_position();
            let event = self
                .reader
                .read_event_into(&mut self.buf)
                .map_err(|e| xml_error(pos, e))?;
            match event {
                Event::Start(e) => stack.push(start_element(pos, &e)?),
                Event::Empty(e) => {
                    let el = start_element(pos, &e)?;
                    stack.last_mut().expect("non-empty stack").children.push(Child::Elem(el));
                }
                Event::End(_) => {
                    let done = stack.pop().expect("non-empty stack");
                    match stack.last_mut() {
                        Some(parent) => parent.children.push(Child::Elem(done)),
                        None => return Ok(done),
                    }
                }
                Event::Text(t) => {
                    let text = match t.unescape() {
                        Ok(s) => s.into_owned(),
                        Err(_) => String::from_utf8_lossy(&t).into_owned(),
                    };
                    stack.last_mut().expect("non-empty stack").children.push(Child::Text(text));
                }
                Event::CData(c) => {
                    let text = String::from_utf8_lossy(&c).into_owned();
                    stack.last_mut().expect("non-empty stack").children.push(Child::Text(text));
                }
                Event::Eof => {
                    return Err(xml_error(
                        self.reader.buffer_position(),
                        format!("unexpected end of input inside <{}>", stack[0].name),
                    ))
                }
                _ => {}
            }
        }
    }
}
