//! Single-vehicle tour heuristics over a distance matrix.
//!
//! Only symmetry is assumed of the matrix, so the heuristics remain valid
//! when the triangle inequality fails.

use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

/// A closed tour visiting every point once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
    pub length: f64,
}

impl Tour {
    pub fn new(m: &DistanceMatrix, order: Vec<usize>) -> Self {
        let length = cycle_length(m, &order);
        Self { order, length }
    }
}

/// Sum of the matrix entries along the closed cycle `order`.
pub fn cycle_length(m: &DistanceMatrix, order: &[usize]) -> f64 {
    if order.len() < 2 {
        return 0.0;
    }
    let n = order.len();
    (0..n).map(|k| m.get(order[k], order[(k + 1) % n])).sum()
}

/// Nearest-neighbour tour from `start`, ties going to the lowest index.
pub fn nn_tour(m: &DistanceMatrix, start: usize) -> Result<Tour> {
    let n = m.len();
    if n < 2 {
        return Err(Error::InvalidInput("a tour needs at least two points".into()));
    }
    if start >= n {
        return Err(Error::InvalidInput(format!("start index {start} out of range for {n} points")));
    }
    if let Some((i, j)) = m.missing() {
        return Err(Error::IncompleteMatrix(i, j));
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    order.push(cur);
    for _ in 1..n {
        let mut next = None;
        for j in (0..n).filter(|&j| !visited[j]) {
            match next {
                Some(b) if m.get(cur, j) >= m.get(cur, b) => {}
                _ => next = Some(j),
            }
        }
        cur = next.expect("an unvisited point remains");
        visited[cur] = true;
        order.push(cur);
    }
    Ok(Tour::new(m, order))
}

/// Applies improving 2-opt moves (segment reversals) until none is left.
pub fn two_opt(m: &DistanceMatrix, tour: &Tour) -> Tour {
    let n = tour.order.len();
    let mut order = tour.order.clone();
    if n < 4 {
        return Tour::new(m, order);
    }
    loop {
        let mut improved = false;
        for a in 0..n - 1 {
            for b in (a + 2)..n {
                if a == 0 && b == n - 1 {
                    continue;
                }
                let (p, q) = (order[a], order[a + 1]);
                let (r, s) = (order[b], order[(b + 1) % n]);
                let delta = m.get(p, r) + m.get(q, s) - m.get(p, q) - m.get(r, s);
                if delta < -1e-12 * (1.0 + m.get(p, q) + m.get(r, s)) {
                    order[a + 1..=b].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Tour::new(m, order)
}
