use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use super::MeshError;

/// One MeSH main heading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshDescriptor {
    pub ui: String,
    pub name: String,
    /// Dotted tree positions such as `G07.265.500`. Empty for rootless entries.
    pub tree_numbers: Vec<String>,
}

/// Ordered descriptor list with a bijective `ui → ordinal` index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeshVocabulary {
    descriptors: Vec<MeshDescriptor>,
    index: HashMap<String, usize>,
}

impl MeshVocabulary {
    /// Builds a vocabulary, assigning ordinals in input order.
    pub fn from_descriptors(descriptors: Vec<MeshDescriptor>) -> Result<Self, MeshError> {
        let mut vocab = MeshVocabulary::default();
        for (i, d) in descriptors.into_iter().enumerate() {
            vocab.push(d, i + 1)?;
        }
        Ok(vocab)
    }

    fn push(&mut self, d: MeshDescriptor, line: usize) -> Result<(), MeshError> {
        if self.index.contains_key(&d.ui) {
            return Err(MeshError::DuplicateDescriptor { line, ui: d.ui });
        }
        self.index.insert(d.ui.clone(), self.descriptors.len());
        self.descriptors.push(d);
        Ok(())
    }

    /// Loads `ui \t name \t tree;numbers` rows. Blank lines and `#` comments are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, MeshError> {
        let mut vocab = MeshVocabulary::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(MeshError::Malformed {
                    line: lineno,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let ui = fields[0].trim();
            let name = fields[1].trim();
            if ui.is_empty() {
                return Err(MeshError::Malformed {
                    line: lineno,
                    message: "empty descriptor identifier".into(),
                });
            }
            if name.is_empty() {
                return Err(MeshError::Malformed {
                    line: lineno,
                    message: format!("descriptor {ui} has an empty name"),
                });
            }
            let tree_numbers: Vec<String> = fields[2]
                .split(';')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(String::from)
                .collect();
            if let Some(bad) = tree_numbers
                .iter()
                .find(|t| t.split('.').any(|part| part.is_empty()))
            {
                return Err(MeshError::Malformed {
                    line: lineno,
                    message: format!("bad tree number {bad:?}"),
                });
            }
            vocab.push(
                MeshDescriptor {
                    ui: ui.to_string(),
                    name: name.to_string(),
                    tree_numbers,
                },
                lineno,
            )?;
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn descriptors(&self) -> &[MeshDescriptor] {
        &self.descriptors
    }

    pub fn get(&self, ordinal: usize) -> Option<&MeshDescriptor> {
        self.descriptors.get(ordinal)
    }

    pub fn ordinal(&self, ui: &str) -> Option<usize> {
        self.index.get(ui).copied()
    }

    pub fn uis(&self) -> impl Iterator<Item = &str> {
        self.descriptors.iter().map(|d| d.ui.as_str())
    }
}
