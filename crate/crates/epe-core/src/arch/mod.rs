//! The cell search space and its string codec.
//!
//! A cell is a 4-node directed acyclic graph. Node 0 is the cell input and
//! every later node is the elementwise sum of one operation applied per
//! predecessor, giving 6 edges in a fixed order. Each edge carries one of 5
//! operations, so the space holds exactly 5^6 = 15625 cells.

mod network;

pub use network::{build_network, Network, NetworkConfig, BN_EPS};

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Edges in canonical order as `(target, source)` pairs.
pub const EDGES: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

/// Number of distinct operations per edge.
pub const NUM_OPS: usize = 5;

/// Total number of cells in the space.
pub const SPACE_SIZE: usize = 15_625;

/// One edge operation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum CellOp {
    /// Drops the edge: emits zeros shaped like the input.
    Zeroize,
    /// Passes the input through unchanged.
    SkipConnect,
    /// ReLU, then 1x1 convolution, then batch norm.
    Conv1x1,
    /// ReLU, then 3x3 convolution, then batch norm.
    Conv3x3,
    /// 3x3 average pooling, stride 1, padding 1.
    AvgPool3x3,
}

impl CellOp {
    pub const ALL: [CellOp; NUM_OPS] = [
        CellOp::Zeroize,
        CellOp::SkipConnect,
        CellOp::Conv1x1,
        CellOp::Conv3x3,
        CellOp::AvgPool3x3,
    ];

    pub fn index(self) -> u8 {
        match self {
            CellOp::Zeroize => 0,
            CellOp::SkipConnect => 1,
            CellOp::Conv1x1 => 2,
            CellOp::Conv3x3 => 3,
            CellOp::AvgPool3x3 => 4,
        }
    }

    pub fn from_index(index: u8) -> Option<Self> {
        CellOp::ALL.get(index as usize).copied()
    }

    /// The token used in architecture strings.
    pub fn token(self) -> &'static str {
        match self {
            CellOp::Zeroize => "none",
            CellOp::SkipConnect => "skip_connect",
            CellOp::Conv1x1 => "nor_conv_1x1",
            CellOp::Conv3x3 => "nor_conv_3x3",
            CellOp::AvgPool3x3 => "avg_pool_3x3",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        CellOp::ALL.into_iter().find(|op| op.token() == token)
    }
}

/// A point in the search space: one operation index per edge, in canonical
/// edge order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct CellSpec {
    genes: [u8; 6],
}

impl CellSpec {
    /// Validates that every gene is a known operation index.
    pub fn new(genes: [u8; 6]) -> Result<Self> {
        for (edge, &g) in genes.iter().enumerate() {
            if g as usize >= NUM_OPS {
                return Err(Error::Contract(format!(
                    "gene {g} at edge {edge} is out of range 0..{NUM_OPS}"
                )));
            }
        }
        Ok(Self { genes })
    }

    pub fn genes(&self) -> [u8; 6] {
        self.genes
    }

    pub fn op(&self, edge: usize) -> CellOp {
        CellOp::from_index(self.genes[edge]).expect("genes are validated at construction")
    }

    /// Renders the canonical architecture string, grouping edges by target
    /// node: `|op~0|+|op~0|op~1|+|op~0|op~1|op~2|`.
    pub fn encode(&self) -> String {
        let mut out = String::new();
        let mut edge = 0;
        for target in 1..4 {
            if target > 1 {
                out.push('+');
            }
            out.push('|');
            for source in 0..target {
                debug_assert_eq!(EDGES[edge], (target, source));
                out.push_str(self.op(edge).token());
                out.push('~');
                out.push_str(&source.to_string());
                out.push('|');
                edge += 1;
            }
        }
        out
    }

    /// Parses an architecture string, enforcing the exact token grammar.
    /// Errors name the first offending edge.
    pub fn decode(text: &str) -> Result<Self> {
        let blocks: Vec<&str> = text.split('+').collect();
        if blocks.len() != 3 {
            return Err(Error::ArchParse {
                edge: 0,
                detail: format!("expected 3 node blocks separated by '+', got {}", blocks.len()),
            });
        }
        let mut genes = [0u8; 6];
        let mut edge = 0;
        for (block_idx, block) in blocks.iter().enumerate() {
            let target = block_idx + 1;
            let inner = block
                .strip_prefix('|')
                .and_then(|b| b.strip_suffix('|'))
                .ok_or_else(|| Error::ArchParse {
                    edge,
                    detail: format!("node {target} block must be delimited by '|', got {block:?}"),
                })?;
            let entries: Vec<&str> = inner.split('|').collect();
            if entries.len() != target {
                return Err(Error::ArchParse {
                    edge,
                    detail: format!(
                        "node {target} block lists {} edges, expected {target}",
                        entries.len()
                    ),
                });
            }
            for (source, entry) in entries.iter().enumerate() {
                let (token, src_text) = entry.split_once('~').ok_or_else(|| Error::ArchParse {
                    edge,
                    detail: format!("edge entry {entry:?} is missing the '~' separator"),
                })?;
                let op = CellOp::from_token(token).ok_or_else(|| Error::ArchParse {
                    edge,
                    detail: format!("unknown operation token {token:?}"),
                })?;
                if src_text != source.to_string() {
                    return Err(Error::ArchParse {
                        edge,
                        detail: format!(
                            "edge into node {target} names source {src_text:?}, expected {source}"
                        ),
                    });
                }
                genes[edge] = op.index();
                edge += 1;
            }
        }
        Ok(Self { genes })
    }
}

impl fmt::Display for CellSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

impl Serialize for CellSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.genes.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CellSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let genes = <[u8; 6]>::deserialize(deserializer)?;
        CellSpec::new(genes).map_err(D::Error::custom)
    }
}

/// All 15625 cells in lexicographic gene order, starting from all zeros with
/// the last gene varying fastest.
pub fn enumerate_all() -> impl Iterator<Item = CellSpec> {
    (0..SPACE_SIZE).map(|mut rank| {
        let mut genes = [0u8; 6];
        for g in genes.iter_mut().rev() {
            *g = (rank % NUM_OPS) as u8;
            rank /= NUM_OPS;
        }
        CellSpec { genes }
    })
}

/// Draws `count` cells uniformly and independently (with replacement).
/// The same seed always yields the same sequence.
pub fn random_sample(count: usize, seed: u64) -> Vec<CellSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut genes = [0u8; 6];
            for g in &mut genes {
                *g = rng.random_range(0..NUM_OPS as u8);
            }
            CellSpec { genes }
        })
        .collect()
}
