//! Directed binary networks.
//!
//! Adjacency is stored as one bit row per sender so that `has_edge` is O(1)
//! and shared-partner counts reduce to popcounts. Sorted out- and in-neighbour
//! lists give O(degree) iteration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered pair of distinct nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dyad {
    pub sender: usize,
    pub receiver: usize,
}

impl Dyad {
    pub fn new(sender: usize, receiver: usize) -> Self {
        debug_assert_ne!(sender, receiver);
        Dyad { sender, receiver }
    }

    /// Position of this dyad in [`DirectedNetwork::dyads`] order.
    #[inline]
    pub fn index(&self, n_nodes: usize) -> usize {
        dyad_index(n_nodes, self.sender, self.receiver)
    }
}

#[inline]
pub(crate) fn dyad_index(n_nodes: usize, i: usize, j: usize) -> usize {
    i * (n_nodes - 1) + if j > i { j - 1 } else { j }
}

/// Node id convention of an edge-list file. Ids are always dense 0-based
/// internally; a 1-based file is shifted down by one on load and back up on
/// save.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IdBase {
    #[default]
    Zero,
    One,
}

impl IdBase {
    fn offset(self) -> i64 {
        match self {
            IdBase::Zero => 0,
            IdBase::One => 1,
        }
    }
}

#[inline]
pub(crate) fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedNetwork {
    n: usize,
    words: usize,
    bits: Vec<u64>,
    out: Vec<Vec<u32>>,
    inn: Vec<Vec<u32>>,
    n_edges: usize,
}

impl DirectedNetwork {
    pub fn empty(n_nodes: usize) -> Result<Self> {
        Self::from_edges(n_nodes, std::iter::empty())
    }

    /// Builds a network from `(sender, receiver)` pairs. Duplicates collapse
    /// to one edge; self-loops and out-of-range ids are rejected with the
    /// 1-based position of the offending pair.
    pub fn from_edges<I>(n_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n_nodes < 2 {
            return Err(Error::Invalid(format!(
                "a network needs at least 2 nodes, got {n_nodes}"
            )));
        }
        let words = words_for(n_nodes);
        let mut bits = vec![0u64; n_nodes * words];
        for (row, (i, j)) in edges.into_iter().enumerate() {
            for id in [i, j] {
                if id >= n_nodes {
                    return Err(Error::NodeOutOfRange {
                        row: row + 1,
                        id: id as i64,
                        n_nodes,
                    });
                }
            }
            if i == j {
                return Err(Error::SelfLoop { row: row + 1, node: i });
            }
            bits[i * words + j / 64] |= 1u64 << (j % 64);
        }
        Ok(Self::from_bits(n_nodes, bits))
    }

    pub(crate) fn from_bits(n: usize, bits: Vec<u64>) -> Self {
        let words = words_for(n);
        let mut out = vec![Vec::new(); n];
        let mut inn = vec![Vec::new(); n];
        let mut n_edges = 0;
        for (i, out_i) in out.iter_mut().enumerate() {
            for w in 0..words {
                let mut word = bits[i * words + w];
                while word != 0 {
                    let j = w * 64 + word.trailing_zeros() as usize;
                    word &= word - 1;
                    out_i.push(j as u32);
                    inn[j].push(i as u32);
                    n_edges += 1;
                }
            }
        }
        DirectedNetwork {
            n,
            words,
            bits,
            out,
            inn,
            n_edges,
        }
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    #[inline]
    pub fn n_dyads(&self) -> usize {
        self.n * (self.n - 1)
    }

    pub fn density(&self) -> f64 {
        self.n_edges as f64 / self.n_dyads() as f64
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    /// Out-neighbours of `i`, ascending.
    #[inline]
    pub fn out_neighbors(&self, i: usize) -> &[u32] {
        &self.out[i]
    }

    /// In-neighbours of `j`, ascending.
    #[inline]
    pub fn in_neighbors(&self, j: usize) -> &[u32] {
        &self.inn[j]
    }

    #[inline]
    pub fn out_degree(&self, i: usize) -> usize {
        self.out[i].len()
    }

    #[inline]
    pub fn in_degree(&self, j: usize) -> usize {
        self.inn[j].len()
    }

    pub(crate) fn bits(&self) -> &[u64] {
        &self.bits
    }

    /// Edges in sender-major, receiver-ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, js)| js.iter().map(move |&j| (i, j as usize)))
    }

    /// All `N(N-1)` ordered dyads: sender-major, receiver ascending, skipping
    /// the diagonal.
    pub fn dyads(&self) -> impl ExactSizeIterator<Item = Dyad> + Clone {
        dyads(self.n)
    }

    /// Copy with one cell set; used by the differencing oracle.
    pub fn with_edge(&self, i: usize, j: usize, present: bool) -> Self {
        let mut bits = self.bits.clone();
        let mask = 1u64 << (j % 64);
        if present {
            bits[i * self.words + j / 64] |= mask;
        } else {
            bits[i * self.words + j / 64] &= !mask;
        }
        Self::from_bits(self.n, bits)
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Invalid("permutation length mismatch".into()));
        }
        Self::from_edges(self.n, self.edges().map(|(i, j)| (perm[i], perm[j])))
    }

    pub fn load_edge_list(path: impl AsRef<Path>, n_nodes: usize, base: IdBase) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_edge_list(file, n_nodes, base)
    }

    /// Parses a `from,to` CSV. A missing header is tolerated for files whose
    /// first row is numeric.
    pub fn read_edge_list<R: std::io::Read>(reader: R, n_nodes: usize, base: IdBase) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(reader);
        let mut pairs = Vec::new();
        let mut data_row = 0usize;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Invalid(format!(
                    "edge list line {}: expected 2 fields, found {}",
                    line + 1,
                    rec.len()
                )));
            }
            let parsed = (rec[0].parse::<i64>(), rec[1].parse::<i64>());
            let (a, b) = match parsed {
                (Ok(a), Ok(b)) => (a, b),
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::Invalid(format!(
                        "edge list line {}: non-integer node id",
                        line + 1
                    )))
                }
            };
            data_row += 1;
            let (a, b) = (a - base.offset(), b - base.offset());
            for (raw, id) in [(a, a), (b, b)] {
                if id < 0 || id as usize >= n_nodes {
                    return Err(Error::NodeOutOfRange {
                        row: data_row,
                        id: raw + base.offset(),
                        n_nodes,
                    });
                }
            }
            if a == b {
                return Err(Error::SelfLoop {
                    row: data_row,
                    node: (a + base.offset()) as usize,
                });
            }
            pairs.push((a as usize, b as usize));
        }
        Self::from_edges(n_nodes, pairs)
    }

    pub fn save_edge_list(&self, path: impl AsRef<Path>, base: IdBase) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_edge_list(&mut w, base)
            .map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_edge_list<W: Write>(&self, w: &mut W, base: IdBase) -> std::io::Result<()> {
        writeln!(w, "from,to")?;
        let off = base.offset() as usize;
        for (i, j) in self.edges() {
            writeln!(w, "{},{}", i + off, j + off)?;
        }
        Ok(())
    }
}

/// See [`DirectedNetwork::dyads`].
pub fn dyads(n_nodes: usize) -> impl ExactSizeIterator<Item = Dyad> + Clone {
    DyadIter {
        n: n_nodes,
        pos: 0,
        len: n_nodes * n_nodes.saturating_sub(1),
    }
}

#[derive(Clone)]
struct DyadIter {
    n: usize,
    pos: usize,
    len: usize,
}

impl Iterator for DyadIter {
    type Item = Dyad;

    fn next(&mut self) -> Option<Dyad> {
        if self.pos >= self.len {
            return None;
        }
        let i = self.pos / (self.n - 1);
        let r = self.pos % (self.n - 1);
        let j = if r >= i { r + 1 } else { r };
        self.pos += 1;
        Some(Dyad::new(i, j))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rem = self.len - self.pos;
        (rem, Some(rem))
    }
}

impl ExactSizeIterator for DyadIter {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_simple_edge_list() {
        let net = DirectedNetwork::read_edge_list("from,to\n0,1\n1,0\n".as_bytes(), 3, IdBase::Zero)
            .unwrap();
        assert!(net.has_edge(0, 1));
        assert!(net.has_edge(1, 0));
        let zero = net
            .dyads()
            .filter(|d| !net.has_edge(d.sender, d.receiver))
            .count();
        assert_eq!(zero, 4);
    }

    #[test]
    fn empty_file_gives_empty_network() {
        let net = DirectedNetwork::read_edge_list("".as_bytes(), 2, IdBase::Zero).unwrap();
        assert_eq!(net.n_edges(), 0);
        let net = DirectedNetwork::read_edge_list("from,to\n".as_bytes(), 2, IdBase::Zero).unwrap();
        assert_eq!(net.n_edges(), 0);
    }

    #[test]
    fn self_loop_names_row() {
        let err = DirectedNetwork::read_edge_list("from,to\n2,2\n".as_bytes(), 3, IdBase::Zero)
            .unwrap_err();
        match err {
            Error::SelfLoop { row, node } => {
                assert_eq!(row, 1);
                assert_eq!(node, 2);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let err = DirectedNetwork::read_edge_list("from,to\n0,3\n".as_bytes(), 3, IdBase::Zero)
            .unwrap_err();
        assert!(matches!(err, Error::NodeOutOfRange { row: 1, id: 3, .. }));
        let err = DirectedNetwork::read_edge_list("from,to\n0,1\n".as_bytes(), 3, IdBase::One)
            .unwrap_err();
        assert!(matches!(err, Error::NodeOutOfRange { row: 1, id: 0, .. }));
    }

    #[test]
    fn one_based_ids_shift() {
        let net = DirectedNetwork::read_edge_list("from,to\n1,3\n".as_bytes(), 3, IdBase::One)
            .unwrap();
        assert!(net.has_edge(0, 2));
        assert_eq!(net.n_edges(), 1);
    }

    #[test]
    fn duplicates_collapse_reversed_distinct() {
        let net = DirectedNetwork::from_edges(3, [(0, 1), (0, 1), (1, 0)]).unwrap();
        assert_eq!(net.n_edges(), 2);
    }

    #[test]
    fn dyad_order() {
        let d: Vec<_> = dyads(3).map(|d| (d.sender, d.receiver)).collect();
        assert_eq!(d, vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
        let d: Vec<_> = dyads(2).map(|d| (d.sender, d.receiver)).collect();
        assert_eq!(d, vec![(0, 1), (1, 0)]);
        assert_eq!(dyads(151).len(), 151 * 150);
        assert_eq!(dyads(151).count(), 22650);
        for (k, d) in dyads(7).enumerate() {
            assert_eq!(d.index(7), k);
        }
    }

    #[test]
    fn requires_two_nodes() {
        assert!(DirectedNetwork::empty(1).is_err());
    }

    #[test]
    fn neighbour_lists_match_bits() {
        let net = DirectedNetwork::from_edges(70, [(0, 65), (65, 0), (3, 69), (69, 3), (3, 0)]).unwrap();
        assert_eq!(net.out_neighbors(3), &[0, 69]);
        assert_eq!(net.in_neighbors(0), &[3, 65]);
        assert!(net.has_edge(3, 69));
        assert!(!net.has_edge(69, 0));
    }
}
