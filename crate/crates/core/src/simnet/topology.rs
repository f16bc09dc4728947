//! Unit-disk topologies: line, grid, and random geometric graph.
//!
//! Node 0 is always the initiator; hop distances are breadth-first from it.
//! RGG placement pins node 0 at the region origin so multi-hop depth grows
//! with the region side, and regenerates (bounded) until connected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Error;

const RGG_RETRIES: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologySpec {
    /// `nodes` on a line with unit spacing and unit radius: only adjacent
    /// nodes hear each other.
    Line { nodes: usize },
    /// `rows x cols` grid with unit spacing and the given radius.
    Grid { rows: usize, cols: usize, radius: f64 },
    /// `nodes` uniform in a `side x side` square, connected within
    /// `radius`.
    Rgg { nodes: usize, radius: f64, side: f64 },
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub positions: Vec<(f64, f64)>,
    pub radius: f64,
    /// Sorted neighbor lists.
    pub adjacency: Vec<Vec<usize>>,
    /// BFS hops from node 0.
    pub hop_distance: Vec<u32>,
    pub n: usize,
}

impl Topology {
    pub fn max_hops(&self) -> u32 {
        self.hop_distance.iter().copied().max().unwrap_or(0)
    }
}

pub fn build_topology(spec: &TopologySpec, seed: u64) -> Result<Topology, Error> {
    match *spec {
        TopologySpec::Line { nodes } => {
            if nodes == 0 {
                return Err(Error::InvalidParams("line needs at least one node".into()));
            }
            let positions = (0..nodes).map(|i| (i as f64, 0.0)).collect();
            from_positions(positions, 1.0, 0)
        }
        TopologySpec::Grid { rows, cols, radius } => {
            if rows == 0 || cols == 0 || radius <= 0.0 {
                return Err(Error::InvalidParams("grid needs positive dimensions".into()));
            }
            let mut positions = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for c in 0..cols {
                    positions.push((c as f64, r as f64));
                }
            }
            from_positions(positions, radius, 0)
        }
        TopologySpec::Rgg { nodes, radius, side } => {
            if nodes == 0 || radius <= 0.0 || side <= 0.0 {
                return Err(Error::InvalidParams("rgg needs positive parameters".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..RGG_RETRIES {
                let mut positions = Vec::with_capacity(nodes);
                positions.push((0.0, 0.0));
                for _ in 1..nodes {
                    positions.push((rng.random::<f64>() * side, rng.random::<f64>() * side));
                }
                match from_positions(positions, radius, 0) {
                    Ok(t) => return Ok(t),
                    Err(Error::Disconnected { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Disconnected {
                retries: RGG_RETRIES,
            })
        }
    }
}

fn from_positions(positions: Vec<(f64, f64)>, radius: f64, root: usize) -> Result<Topology, Error> {
    let n = positions.len();
    let r2 = radius * radius;
    let mut adjacency = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = positions[i].0 - positions[j].0;
            let dy = positions[i].1 - positions[j].1;
            if dx * dx + dy * dy <= r2 {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
    }
    // BFS from the initiator; unreachable nodes leave the graph disconnected.
    let mut hop_distance = vec![u32::MAX; n];
    hop_distance[root] = 0;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if hop_distance[v] == u32::MAX {
                hop_distance[v] = hop_distance[u] + 1;
                queue.push_back(v);
            }
        }
    }
    if hop_distance.iter().any(|&h| h == u32::MAX) {
        return Err(Error::Disconnected { retries: 0 });
    }
    Ok(Topology {
        positions,
        radius,
        adjacency,
        hop_distance,
        n,
    })
}
