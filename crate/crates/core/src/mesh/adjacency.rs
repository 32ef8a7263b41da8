use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use super::MeshVocabulary;
use crate::tensor::SparseMatrix;

/// Counts kept for auditing the label graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AdjacencyStats {
    pub nodes: usize,
    /// Undirected parent/child pairs (self edges excluded).
    pub edges: usize,
    /// Descriptors listed under more than one tree position.
    pub multi_position_descriptors: usize,
    /// Edges with at least one endpoint that has several tree positions.
    pub edges_touching_multi_position: usize,
}

/// Self + parent + child edges over the label set, stored sparse.
#[derive(Debug, Clone)]
pub struct AdjacencyMatrix {
    matrix: Arc<SparseMatrix>,
    stats: AdjacencyStats,
}

impl AdjacencyMatrix {
    /// `A[i][i] = 1`, and `A[i][j] = A[j][i] = 1` whenever a tree number of `j`
    /// is a tree number of `i` with one trailing component removed. Edges between
    /// sub-hierarchies reached through secondary tree positions are kept.
    pub fn build(vocab: &MeshVocabulary) -> Self {
        let mut owners: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, d) in vocab.descriptors().iter().enumerate() {
            for t in &d.tree_numbers {
                owners.entry(t.as_str()).or_default().push(i);
            }
        }
        let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (i, d) in vocab.descriptors().iter().enumerate() {
            for t in &d.tree_numbers {
                let Some((parent, _)) = t.rsplit_once('.') else {
                    continue;
                };
                for &j in owners.get(parent).into_iter().flatten() {
                    if j != i {
                        pairs.insert((i.min(j), i.max(j)));
                    }
                }
            }
        }
        let n = vocab.len();
        let mut triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
        for &(i, j) in &pairs {
            triplets.push((i, j, 1.0));
            triplets.push((j, i, 1.0));
        }
        let multi: Vec<bool> = vocab
            .descriptors()
            .iter()
            .map(|d| d.tree_numbers.len() > 1)
            .collect();
        let stats = AdjacencyStats {
            nodes: n,
            edges: pairs.len(),
            multi_position_descriptors: multi.iter().filter(|&&m| m).count(),
            edges_touching_multi_position: pairs.iter().filter(|(i, j)| multi[*i] || multi[*j]).count(),
        };
        AdjacencyMatrix {
            matrix: Arc::new(SparseMatrix::from_triplets(n, n, &triplets)),
            stats,
        }
    }

    /// Wraps an arbitrary square matrix (used by tests and custom graphs).
    pub fn from_sparse(matrix: SparseMatrix) -> Self {
        let n = matrix.rows();
        let edges = matrix.triplets().iter().filter(|(i, j, _)| i < j).count();
        AdjacencyMatrix {
            matrix: Arc::new(matrix),
            stats: AdjacencyStats {
                nodes: n,
                edges,
                multi_position_descriptors: 0,
                edges_touching_multi_position: 0,
            },
        }
    }

    /// `D^{-1/2} A D^{-1/2}` with `D` the row-degree matrix.
    pub fn normalized(&self) -> Self {
        let deg: Vec<f64> = (0..self.matrix.rows())
            .map(|r| self.matrix.row_entries(r).map(|(_, v)| v).sum())
            .collect();
        let triplets: Vec<_> = self
            .matrix
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (i, j, v / (deg[i] * deg[j]).sqrt()))
            .collect();
        AdjacencyMatrix {
            matrix: Arc::new(SparseMatrix::from_triplets(
                self.matrix.rows(),
                self.matrix.cols(),
                &triplets,
            )),
            stats: self.stats,
        }
    }

    pub fn matrix(&self) -> &Arc<SparseMatrix> {
        &self.matrix
    }

    pub fn stats(&self) -> AdjacencyStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    /// Writes `row \t col \t weight` lines in row-major order.
    pub fn write_coo<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, j, v) in self.matrix.triplets() {
            writeln!(out, "{i}\t{j}\t{v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshDescriptor;

    fn vocab(rows: &[(&str, &[&str])]) -> MeshVocabulary {
        MeshVocabulary::from_descriptors(
            rows.iter()
                .map(|(ui, trees)| MeshDescriptor {
                    ui: ui.to_string(),
                    name: format!("name {ui}"),
                    tree_numbers: trees.iter().map(|s| s.to_string()).collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_descriptor_is_identity() {
        let a = AdjacencyMatrix::build(&vocab(&[("D1", &["A01"])]));
        assert_eq!(a.matrix().to_dense().data(), &[1.0]);
    }

    #[test]
    fn chain_has_seven_nonzeros() {
        let a = AdjacencyMatrix::build(&vocab(&[
            ("root", &["A01"]),
            ("mid", &["A01.111"]),
            ("leaf", &["A01.111.222"]),
        ]));
        assert_eq!(a.nnz(), 7);
        assert_eq!(a.get(0, 2), 0.0);
        assert_eq!(a.get(1, 2), 1.0);
        assert!(a.matrix().is_symmetric());
    }

    #[test]
    fn root_with_two_children() {
        let a = AdjacencyMatrix::build(&vocab(&[
            ("root", &["C10"]),
            ("left", &["C10.1"]),
            ("right", &["C10.2"]),
        ]));
        assert_eq!(a.nnz(), 7);
        assert_eq!(a.get(1, 2), 0.0);
        assert_eq!(a.stats().edges, 2);
    }

    #[test]
    fn normalized_rows_scale_by_degree() {
        let a = AdjacencyMatrix::build(&vocab(&[("r", &["A"]), ("c", &["A.1"])]));
        let n = a.normalized();
        // degrees are 2 and 2
        assert!((n.get(0, 1) - 0.5).abs() < 1e-15);
        assert!((n.get(0, 0) - 0.5).abs() < 1e-15);
        assert!(n.matrix().is_symmetric());
    }

    #[test]
    fn coo_export() {
        let a = AdjacencyMatrix::build(&vocab(&[("r", &["A"]), ("c", &["A.1"])]));
        let mut out = Vec::new();
        a.write_coo(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0\t0\t1\n0\t1\t1\n1\t0\t1\n1\t1\t1\n");
    }
}
