//! Reference computations written without the library: T-maze enumeration,
//! chain value iteration and the scalar Gaussian posterior.

use std::collections::BTreeMap;

use qbelief_core::envs::tmaze::{Layout, Symbol, TMaze, TMazeObs, TMazeState};
use qbelief_core::pomdp::{DiscretePomdp, HistoryBuf};

type Cell = (i32, i32);

fn maze_move(l: i32, (x, y): Cell, action: usize) -> Cell {
    if y != 0 {
        return (x, y);
    }
    let next = match action {
        0 => (x + 1, 0),
        1 => (x, 1),
        2 => (x - 1, 0),
        _ => (x, -1),
    };
    let inside = match next {
        (nx, 0) => (0..=l).contains(&nx),
        (nx, _) => nx == l,
    };
    if inside {
        next
    } else {
        (x, y)
    }
}

fn maze_transitions(l: i32, lambda: f64, cell: Cell, action: usize) -> Vec<(Cell, f64)> {
    if cell.1 != 0 {
        return vec![(cell, 1.0)];
    }
    let mut out: Vec<(Cell, f64)> = Vec::new();
    let mut add = |c: Cell, p: f64| match out.iter_mut().find(|(d, _)| *d == c) {
        Some(e) => e.1 += p,
        None => out.push((c, p)),
    };
    add(maze_move(l, cell, action), 1.0 - lambda);
    for a in 0..4 {
        add(maze_move(l, cell, a), lambda / 4.0);
    }
    out.retain(|(_, p)| *p > 0.0);
    out
}

fn maze_observation(l: i32, layout: Layout, (x, y): Cell) -> (Symbol, bool) {
    let symbol = match (x, layout) {
        (0, Layout::Up) => Symbol::Up,
        (0, Layout::Down) => Symbol::Down,
        (x, _) if x < l => Symbol::Corridor,
        _ => Symbol::Junction,
    };
    (symbol, y != 0)
}

pub type HistoryKey = (Vec<usize>, Vec<(Symbol, bool)>);

/// Unnormalised `p(s_t, history)` over the model's state indices for every
/// history of at most `depth` actions.
pub fn enumerate_maze(m: &TMaze, depth: usize) -> BTreeMap<HistoryKey, Vec<f64>> {
    let l = m.length();
    let lambda = m.params().stochasticity;
    let mut table: BTreeMap<HistoryKey, Vec<f64>> = BTreeMap::new();
    type Frame = (Layout, Cell, f64, Vec<usize>, Vec<(Symbol, bool)>);
    let mut stack: Vec<Frame> = [Layout::Up, Layout::Down]
        .into_iter()
        .map(|g| (g, (0, 0), 0.5, vec![], vec![maze_observation(l, g, (0, 0))]))
        .collect();
    while let Some((layout, cell, p, actions, obs)) = stack.pop() {
        let idx = m.state_index(&TMazeState {
            layout,
            x: cell.0,
            y: cell.1,
        });
        table
            .entry((actions.clone(), obs.clone()))
            .or_insert_with(|| vec![0.0; m.num_states()])[idx] += p;
        if actions.len() == depth || obs.last().unwrap().1 {
            continue;
        }
        for a in 0..4 {
            for (next, q) in maze_transitions(l, lambda, cell, a) {
                let mut actions = actions.clone();
                actions.push(a);
                let mut obs = obs.clone();
                obs.push(maze_observation(l, layout, next));
                stack.push((layout, next, p * q, actions, obs));
            }
        }
    }
    table
}

pub fn history_of((actions, obs): &HistoryKey) -> HistoryBuf<TMazeObs> {
    let o = |&(symbol, terminal): &(Symbol, bool)| TMazeObs { symbol, terminal };
    let mut h = HistoryBuf::new(o(&obs[0]));
    for (a, ob) in actions.iter().zip(&obs[1..]) {
        h.push(*a, o(ob));
    }
    h
}

/// Optimal action values of the chain where action 0 steps left, action 1
/// steps right, both bounce at the ends, and entering the last state pays 1.
pub fn chain_values(states: usize, gamma: f64) -> Vec<[f64; 2]> {
    let step = |s: usize, a: usize| {
        if a == 0 {
            s.saturating_sub(1)
        } else {
            (s + 1).min(states - 1)
        }
    };
    let mut v = vec![0.0; states];
    for _ in 0..10_000 {
        v = (0..states)
            .map(|s| {
                (0..2)
                    .map(|a| {
                        let n = step(s, a);
                        f64::from(n == states - 1) + gamma * v[n]
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    (0..states)
        .map(|s| {
            let q = |a| {
                let n = step(s, a);
                f64::from(n == states - 1) + gamma * v[n]
            };
            [q(0), q(1)]
        })
        .collect()
}

/// Posterior of a scalar unit random walk with unit observation noise and a
/// standard normal prior.
pub fn walk_posterior(observations: &[f64]) -> (f64, f64) {
    let (mut mean, mut var) = (0.0, 1.0);
    for (k, &o) in observations.iter().enumerate() {
        if k > 0 {
            var += 1.0;
        }
        let gain = var / (var + 1.0);
        mean += gain * (o - mean);
        var *= 1.0 - gain;
    }
    (mean, var)
}
