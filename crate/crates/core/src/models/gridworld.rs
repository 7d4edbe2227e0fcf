//! Intruder gridworld: a target moving on a grid is either a hostile human
//! (model 0) or an animal (model 1).
//!
//! The target moves to a 4-neighbour cell each step; a cell with a single
//! valid neighbour also admits staying put. The animal picks uniformly among
//! its moves regardless of the action. The hostile target mixes
//!
//! ```text
//! P(m) = β · 1[m ∈ R] / |R| + (1 - β) / |M|
//! ```
//!
//! where `M` are the valid moves and `R ⊆ M` the moves that shorten the
//! shortest-path distance to its target region: the sensitive cells while
//! observed (`a1`), the hiding cell when the alarm sounds (`a2`). With no
//! shortening move the hostile target moves uniformly, and `β = 0` makes the
//! two models identical.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BudgetSpec, DecisionSpec, Labels, ModelFamily, Problem};

/// `(row, column)`, row 0 at the top.
pub type Cell = (usize, usize);

pub const DEFAULT_LAYOUT: &str = include_str!("../../data/default_grid.txt");
pub const DEFAULT_BIAS: f64 = 0.7;
pub const OBSERVE_COST: i64 = 1;
pub const ALARM_COST: i64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub obstacles: BTreeSet<Cell>,
    pub sensitive: BTreeSet<Cell>,
    pub hiding: BTreeSet<Cell>,
    pub start: Cell,
    #[serde(default = "default_bias")]
    pub bias: f64,
}

fn default_bias() -> f64 {
    DEFAULT_BIAS
}

impl Default for GridLayout {
    fn default() -> Self {
        GridLayout::from_ascii(DEFAULT_LAYOUT).expect("default layout parses")
    }
}

impl GridLayout {
    /// Parses the compact grid form: `#` obstacle, `G` sensitive, `Y` hiding,
    /// `S` start, `.` free. An optional `bias: <β>` line sets the hostile bias;
    /// blank lines are skipped.
    pub fn from_ascii(text: &str) -> Result<Self> {
        let mut bias = DEFAULT_BIAS;
        let mut rows = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(v) = line.strip_prefix("bias:") {
                bias = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Layout(format!("malformed bias `{}`", v.trim())))?;
                continue;
            }
            rows.push(line);
        }
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut layout = GridLayout {
            width,
            height,
            obstacles: BTreeSet::new(),
            sensitive: BTreeSet::new(),
            hiding: BTreeSet::new(),
            start: (usize::MAX, usize::MAX),
            bias,
        };
        let mut starts = 0;
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Layout(format!("row {r} has a different width")));
            }
            for (c, ch) in row.chars().enumerate() {
                match ch {
                    '.' => {}
                    '#' => {
                        layout.obstacles.insert((r, c));
                    }
                    'G' => {
                        layout.sensitive.insert((r, c));
                    }
                    'Y' => {
                        layout.hiding.insert((r, c));
                    }
                    'S' => {
                        layout.start = (r, c);
                        starts += 1;
                    }
                    other => {
                        return Err(Error::Layout(format!(
                            "unknown cell character `{other}` at ({r}, {c})"
                        )))
                    }
                }
            }
        }
        if starts != 1 {
            return Err(Error::Layout(format!(
                "expected one start cell, found {starts}"
            )));
        }
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Layout("grid is empty".into()));
        }
        let in_grid = |&(r, c): &Cell| r < self.height && c < self.width;
        for (name, set) in [
            ("obstacle", &self.obstacles),
            ("sensitive", &self.sensitive),
            ("hiding", &self.hiding),
        ] {
            if let Some(cell) = set.iter().find(|c| !in_grid(c)) {
                return Err(Error::Layout(format!(
                    "{name} cell {cell:?} is outside the grid"
                )));
            }
        }
        if !in_grid(&self.start) {
            return Err(Error::Layout(format!(
                "start {:?} is outside the grid",
                self.start
            )));
        }
        if !self.obstacles.is_disjoint(&self.sensitive)
            || !self.obstacles.is_disjoint(&self.hiding)
            || !self.sensitive.is_disjoint(&self.hiding)
        {
            return Err(Error::Layout("cell sets overlap".into()));
        }
        if self.obstacles.contains(&self.start) {
            return Err(Error::Layout("start cell is an obstacle".into()));
        }
        if self.sensitive.is_empty() || self.hiding.is_empty() {
            return Err(Error::Layout(
                "need at least one sensitive and one hiding cell".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.bias) {
            return Err(Error::Layout(format!("bias {} outside [0, 1]", self.bias)));
        }
        Ok(())
    }

    fn is_free(&self, (r, c): Cell) -> bool {
        r < self.height && c < self.width && !self.obstacles.contains(&(r, c))
    }

    /// Free cells in row-major order; state `i` is the `i`-th free cell.
    pub fn cells(&self) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&cell| self.is_free(cell))
            .collect()
    }

    fn neighbours(&self, (r, c): Cell) -> Vec<Cell> {
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push((r - 1, c));
        }
        out.push((r + 1, c));
        if c > 0 {
            out.push((r, c - 1));
        }
        out.push((r, c + 1));
        out.retain(|&n| self.is_free(n));
        out
    }

    /// Valid moves from `cell`: free neighbours, plus staying put when there
    /// is only one neighbour.
    pub fn moves(&self, cell: Cell) -> Vec<Cell> {
        let mut m = self.neighbours(cell);
        if m.len() == 1 {
            m.push(cell);
        }
        m
    }

    /// Shortest-path distance (in moves) from every free cell to `targets`.
    fn distances(&self, targets: &BTreeSet<Cell>) -> Vec<Vec<Option<usize>>> {
        let mut dist = vec![vec![None; self.width]; self.height];
        let mut queue = VecDeque::new();
        for &t in targets {
            dist[t.0][t.1] = Some(0);
            queue.push_back(t);
        }
        while let Some(cell) = queue.pop_front() {
            let d = dist[cell.0][cell.1].expect("queued cells have a distance");
            for n in self.neighbours(cell) {
                if dist[n.0][n.1].is_none() {
                    dist[n.0][n.1] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }
}

fn hostile_row(
    moves: &[Cell],
    from: Cell,
    dist: &[Vec<Option<usize>>],
    bias: f64,
) -> Vec<(Cell, f64)> {
    let here = dist[from.0][from.1];
    let closer: Vec<bool> = moves
        .iter()
        .map(|&(r, c)| match (dist[r][c], here) {
            (Some(d), Some(h)) => d < h,
            _ => false,
        })
        .collect();
    let num_closer = closer.iter().filter(|&&x| x).count();
    let uniform = 1.0 / moves.len() as f64;
    moves
        .iter()
        .zip(closer)
        .map(|(&m, is_closer)| {
            let p = if num_closer == 0 {
                uniform
            } else {
                (1.0 - bias) * uniform
                    + if is_closer {
                        bias / num_closer as f64
                    } else {
                        0.0
                    }
            };
            (m, p)
        })
        .collect()
}

/// Gridworld problem: prior (0.5, 0.5) at the start cell, thresholds
/// (0.7, 0.7), safe region = non-sensitive cells, `H = 6`, `D = 8`.
pub fn builtin_gridworld(layout: &GridLayout) -> Result<Problem> {
    layout.validate()?;
    let cells = layout.cells();
    let index_of = |cell: Cell| {
        cells
            .binary_search(&cell)
            .expect("moves stay on free cells")
    };
    let to_sensitive = layout.distances(&layout.sensitive);
    let to_hiding = layout.distances(&layout.hiding);

    let n = cells.len();
    let mut hostile = vec![vec![vec![0.0; n]; 2]; n];
    let mut animal = vec![vec![vec![0.0; n]; 2]; n];
    for (s, &cell) in cells.iter().enumerate() {
        let moves = layout.moves(cell);
        if moves.is_empty() {
            return Err(Error::Layout(format!("cell {cell:?} has no valid move")));
        }
        for (a, dist) in [&to_sensitive, &to_hiding].into_iter().enumerate() {
            for &m in &moves {
                animal[s][a][index_of(m)] += 1.0 / moves.len() as f64;
            }
            for (m, p) in hostile_row(&moves, cell, dist, layout.bias) {
                hostile[s][a][index_of(m)] += p;
            }
        }
    }
    let costs = vec![vec![OBSERVE_COST, ALARM_COST]; n];
    let family = ModelFamily::from_nested(
        index_of(layout.start),
        &[hostile, animal],
        &costs,
        vec![0.5, 0.5],
    )?
    .with_labels(Labels {
        states: cells.iter().map(|&(r, c)| format!("r{r}c{c}")).collect(),
        actions: vec!["observe".into(), "alarm".into()],
        models: vec!["hostile".into(), "animal".into()],
    });
    let safe: Vec<usize> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| !layout.sensitive.contains(c))
        .map(|(i, _)| i)
        .collect();
    Ok(Problem::new(
        family,
        DecisionSpec::new(vec![0.7, 0.7]).with_safe_states(safe),
        BudgetSpec::new(6, 8),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BeliefNode;

    #[test]
    fn default_layout_is_valid() {
        let layout = GridLayout::default();
        assert_eq!((layout.width, layout.height), (8, 8));
        assert_eq!(layout.bias, 0.7);
        let p = builtin_gridworld(&layout).unwrap();
        assert!(p.validate().is_empty());
        assert_eq!(p.family.num_states(), 64 - layout.obstacles.len());
        assert_eq!(p.budget, BudgetSpec::new(6, 8));
    }

    #[test]
    fn animal_is_uniform_under_alarm() {
        let layout = GridLayout::default();
        let p = builtin_gridworld(&layout).unwrap();
        let cells = layout.cells();
        let s = cells.binary_search(&(3, 3)).unwrap();
        let row = p.family.row(1, s, 1);
        let nonzero: Vec<f64> = row.iter().copied().filter(|&x| x > 0.0).collect();
        assert_eq!(nonzero, vec![0.25; 4]);
    }

    #[test]
    fn action_costs() {
        let p = builtin_gridworld(&GridLayout::default()).unwrap();
        for s in 0..p.family.num_states() {
            assert_eq!(p.family.step_cost(s, 0).unwrap(), 1);
            assert_eq!(p.family.step_cost(s, 1).unwrap(), 3);
        }
    }

    #[test]
    fn hostile_leans_toward_target() {
        let layout = GridLayout::default();
        let p = builtin_gridworld(&layout).unwrap();
        let cells = layout.cells();
        let from = cells.binary_search(&(4, 3)).unwrap();
        let up = cells.binary_search(&(3, 3)).unwrap();
        let left = cells.binary_search(&(4, 2)).unwrap();
        // Observed: sensitive region is up and to the right.
        assert!(p.family.transition(0, from, 0, up) > p.family.transition(1, from, 0, up));
        // Alarmed: hiding cell is down and to the left.
        assert!(p.family.transition(0, from, 1, left) > p.family.transition(1, from, 1, left));
    }

    #[test]
    fn zero_bias_gives_no_information() {
        let layout = GridLayout {
            bias: 0.0,
            ..GridLayout::default()
        };
        let p = builtin_gridworld(&layout).unwrap();
        let root = BeliefNode::root(&p.family);
        for a in 0..2 {
            for s in p.family.successors(&root, a) {
                assert_eq!(s.node.belief, vec![0.5, 0.5]);
            }
        }
    }

    #[test]
    fn dead_end_gets_stay_move() {
        let layout = GridLayout::from_ascii("S#G\n.#.\nY..").unwrap();
        assert_eq!(layout.moves((0, 0)), vec![(1, 0), (0, 0)]);
        let p = builtin_gridworld(&layout).unwrap();
        assert!(p.validate().is_empty());
    }

    #[test]
    fn isolated_cell_rejected() {
        let layout = GridLayout::from_ascii("S#G\n##.\nY..").unwrap();
        assert!(matches!(builtin_gridworld(&layout), Err(Error::Layout(_))));
    }

    #[test]
    fn bad_layouts() {
        assert!(GridLayout::from_ascii("..\n..").is_err());
        assert!(GridLayout::from_ascii("S.\n.X").is_err());
        let l = GridLayout {
            bias: 1.5,
            ..GridLayout::default()
        };
        assert!(builtin_gridworld(&l).is_err());
    }
}
