//! Element placement on the 5x5 scene grid.
//!
//! Elements are sorted canonically (actors, then objects, then concepts;
//! by id within a kind). The first is seeded at the center cell. Each later
//! element goes to the free cell touching the most already-placed adjacency
//! partners (ties row-major); an element with no placed partner, or whose
//! partners are boxed in, takes the free cell nearest the center by Manhattan
//! distance (ties row-major).
//!
//! When the greedy layout leaves pairs unsatisfied and at most
//! [`EXACT_LIMIT`] elements take part in any pair, a bounded branch-and-bound
//! search looks for a layout that satisfies more pairs. It replaces the greedy
//! layout only on a strict improvement, so layouts stay stable whenever greedy
//! is already optimal.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{Cell, SceneElement, GRID_SIZE};

/// Largest number of constrained elements the exact search handles.
pub const EXACT_LIMIT: usize = 6;
/// Node budget for the exact search; keeps worst cases bounded and deterministic.
const SEARCH_BUDGET: u64 = 4_000_000;
const CELLS: usize = (GRID_SIZE as usize) * (GRID_SIZE as usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub cells: BTreeMap<String, Cell>,
    /// Pairs that did not end up on 4-neighboring cells.
    pub unsatisfied: Vec<(String, String)>,
}

impl Placement {
    pub fn satisfied_count(&self, adjacencies: &[(String, String)]) -> usize {
        normalized_pairs(adjacencies)
            .iter()
            .filter(|(a, b)| match (self.cells.get(*a), self.cells.get(*b)) {
                (Some(x), Some(y)) => x.manhattan(*y) == 1,
                _ => false,
            })
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlacementError {
    #[error("{0} elements do not fit on a 5x5 grid")]
    TooManyElements(usize),
    #[error("adjacency references unknown element `{0}`")]
    UnknownElement(String),
}

fn normalized_pairs(adjacencies: &[(String, String)]) -> BTreeSet<(&str, &str)> {
    adjacencies
        .iter()
        .filter(|(a, b)| a != b)
        .map(|(a, b)| if a <= b { (a.as_str(), b.as_str()) } else { (b.as_str(), a.as_str()) })
        .collect()
}

fn cell_at(index: usize) -> Cell {
    Cell::new((index / GRID_SIZE as usize) as u8, (index % GRID_SIZE as usize) as u8)
}

fn index_of(cell: Cell) -> usize {
    cell.row as usize * GRID_SIZE as usize + cell.col as usize
}

fn neighbors(index: usize) -> impl Iterator<Item = usize> {
    let c = cell_at(index);
    let n = GRID_SIZE as i8;
    [(-1i8, 0i8), (0, -1), (0, 1), (1, 0)]
        .into_iter()
        .filter_map(move |(dr, dc)| {
            let r = c.row as i8 + dr;
            let col = c.col as i8 + dc;
            (r >= 0 && r < n && col >= 0 && col < n).then(|| index_of(Cell::new(r as u8, col as u8)))
        })
}

/// Upper bound on edges among `k` cells of a square grid: floor(2k - 2*sqrt(k)).
fn grid_edge_cap(k: usize) -> usize {
    if k < 2 {
        return 0;
    }
    let mut best = 0;
    // Exact integer form: largest m with (2k - m)^2 >= 4k.
    for m in 0..=2 * k {
        let lhs = (2 * k - m) * (2 * k - m);
        if lhs >= 4 * k {
            best = m;
        } else {
            break;
        }
    }
    best
}

/// Places `elements` on the grid, trying to put every adjacency pair on
/// 4-neighboring cells. Pure and deterministic.
pub fn place_elements(
    elements: &[SceneElement],
    adjacencies: &[(String, String)],
) -> Result<Placement, PlacementError> {
    if elements.len() > CELLS {
        return Err(PlacementError::TooManyElements(elements.len()));
    }
    let mut order: Vec<&SceneElement> = elements.iter().collect();
    order.sort_by(|a, b| (a.kind, &a.id).cmp(&(b.kind, &b.id)));
    order.dedup_by(|a, b| a.id == b.id);
    let position: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();

    let pairs = normalized_pairs(adjacencies);
    let mut edges = Vec::with_capacity(pairs.len());
    for (a, b) in &pairs {
        let ia = *position.get(a).ok_or_else(|| PlacementError::UnknownElement(a.to_string()))?;
        let ib = *position.get(b).ok_or_else(|| PlacementError::UnknownElement(b.to_string()))?;
        edges.push((ia.min(ib), ia.max(ib)));
    }
    let graph = Graph::new(order.len(), edges);

    let mut layout = greedy(&graph);
    let score = graph.score(&layout);
    let involved: Vec<usize> = (0..graph.n).filter(|&v| !graph.adj[v].is_empty()).collect();
    let cap = graph.edges.len().min(grid_edge_cap(involved.len()));
    if score < cap && involved.len() <= EXACT_LIMIT {
        if let Some(better) = exact(&graph, &involved, score, cap) {
            layout = better;
        }
    }

    let cells: BTreeMap<String, Cell> = order
        .iter()
        .zip(&layout)
        .map(|(e, &idx)| (e.id.clone(), cell_at(idx)))
        .collect();
    let unsatisfied = graph
        .edges
        .iter()
        .filter(|&&(a, b)| cell_at(layout[a]).manhattan(cell_at(layout[b])) != 1)
        .map(|&(a, b)| (order[a].id.clone(), order[b].id.clone()))
        .collect();
    Ok(Placement { cells, unsatisfied })
}

struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    fn new(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        Self { n, edges, adj }
    }

    fn score(&self, layout: &[usize]) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| cell_at(layout[a]).manhattan(cell_at(layout[b])) == 1)
            .count()
    }
}

fn nearest_free_to_center(occupied: &[bool; CELLS]) -> usize {
    (0..CELLS)
        .filter(|&i| !occupied[i])
        .min_by_key(|&i| (cell_at(i).manhattan(Cell::CENTER), i))
        .expect("at most 25 elements")
}

fn greedy(graph: &Graph) -> Vec<usize> {
    let mut layout = vec![usize::MAX; graph.n];
    let mut occupied = [false; CELLS];
    for v in 0..graph.n {
        let placed_partners: Vec<usize> = graph.adj[v]
            .iter()
            .filter(|&&p| layout[p] != usize::MAX)
            .map(|&p| layout[p])
            .collect();
        let best = (0..CELLS)
            .filter(|&i| !occupied[i])
            .map(|i| (neighbors(i).filter(|n| placed_partners.contains(n)).count(), i))
            .filter(|&(touching, _)| touching > 0)
            .max_by_key(|&(touching, i)| (touching, std::cmp::Reverse(i)))
            .map(|(_, i)| i);
        let cell = best.unwrap_or_else(|| nearest_free_to_center(&occupied));
        layout[v] = cell;
        occupied[cell] = true;
    }
    layout
}

/// Cells representing each orbit of the grid's 8 symmetries.
const SYMMETRY_SEEDS: [usize; 6] = [0, 1, 2, 6, 7, 12];

struct Search<'a> {
    graph: &'a Graph,
    order: Vec<usize>,
    /// For each position in `order`, the partners placed earlier.
    back: Vec<Vec<usize>>,
    /// Sum over positions >= i of min(4, back edge count).
    tail_bound: Vec<usize>,
    cap: usize,
    best_score: usize,
    best: Option<Vec<usize>>,
    current: Vec<usize>,
    occupied: [bool; CELLS],
    nodes: u64,
}

impl Search<'_> {
    fn run(&mut self, depth: usize, score: usize) {
        if self.best_score >= self.cap || self.nodes >= SEARCH_BUDGET {
            return;
        }
        if depth == self.order.len() {
            if score > self.best_score {
                self.best_score = score;
                self.best = Some(self.current.clone());
            }
            return;
        }
        if score + self.tail_bound[depth] <= self.best_score {
            return;
        }
        let v = self.order[depth];
        let candidates: Vec<(usize, usize)> = if depth == 0 {
            SYMMETRY_SEEDS.iter().map(|&c| (0, c)).collect()
        } else {
            let mut c: Vec<(usize, usize)> = (0..CELLS)
                .filter(|&i| !self.occupied[i])
                .map(|i| {
                    let gain = self.back[depth]
                        .iter()
                        .filter(|&&p| cell_at(self.current[p]).manhattan(cell_at(i)) == 1)
                        .count();
                    (gain, i)
                })
                .collect();
            c.sort_by_key(|&(gain, i)| (std::cmp::Reverse(gain), i));
            c
        };
        for (gain, cell) in candidates {
            if score + gain + self.tail_bound[depth + 1] <= self.best_score {
                // Candidates are sorted by gain, so nothing later can do better.
                break;
            }
            self.nodes += 1;
            self.current[v] = cell;
            self.occupied[cell] = true;
            self.run(depth + 1, score + gain);
            self.occupied[cell] = false;
            self.current[v] = usize::MAX;
            if self.best_score >= self.cap || self.nodes >= SEARCH_BUDGET {
                return;
            }
        }
    }
}

/// Branch and bound over the constrained elements. Returns a full layout
/// only when it strictly beats `floor`.
fn exact(graph: &Graph, involved: &[usize], floor: usize, cap: usize) -> Option<Vec<usize>> {
    // Order: highest degree first, then whichever has most edges into the prefix.
    let mut order: Vec<usize> = Vec::with_capacity(involved.len());
    let mut remaining: Vec<usize> = involved.to_vec();
    while !remaining.is_empty() {
        let pick = remaining
            .iter()
            .copied()
            .max_by_key(|&v| {
                let into_prefix = graph.adj[v].iter().filter(|p| order.contains(p)).count();
                (into_prefix, graph.adj[v].len(), std::cmp::Reverse(v))
            })
            .expect("non-empty");
        order.push(pick);
        remaining.retain(|&v| v != pick);
    }
    let back: Vec<Vec<usize>> = order
        .iter()
        .enumerate()
        .map(|(i, &v)| graph.adj[v].iter().copied().filter(|p| order[..i].contains(p)).collect())
        .collect();
    let mut tail_bound = vec![0; order.len() + 1];
    for i in (0..order.len()).rev() {
        tail_bound[i] = tail_bound[i + 1] + back[i].len().min(4);
    }
    let mut search = Search {
        graph,
        order,
        back,
        tail_bound,
        cap,
        best_score: floor,
        best: None,
        current: vec![usize::MAX; graph.n],
        occupied: [false; CELLS],
        nodes: 0,
    };
    search.run(0, 0);
    let mut layout = search.best?;
    let mut occupied = [false; CELLS];
    for &v in &search.order {
        occupied[layout[v]] = true;
    }
    for slot in layout.iter_mut().take(search.graph.n) {
        if *slot == usize::MAX {
            let cell = nearest_free_to_center(&occupied);
            *slot = cell;
            occupied[cell] = true;
        }
    }
    Some(layout)
}
