use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::{conformal_inner, lift};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnakeLabel {
    Connected,
    Broken,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnakeSample {
    pub grid: usize,
    /// `[row, col]` pixels in walk order.
    pub path: Vec<[i32; 2]>,
    pub label: SnakeLabel,
    /// `path[gap_index] → path[gap_index + 1]` is the jump over the gap.
    pub gap_index: Option<usize>,
}

const NEIGHBOURS: [[i32; 2]; 8] = [
    [-1, -1],
    [-1, 0],
    [-1, 1],
    [0, -1],
    [0, 1],
    [1, -1],
    [1, 0],
    [1, 1],
];
const MAX_RETRIES: usize = 10_000;

fn random_walk(grid: usize, len: usize, rng: &mut ChaCha8Rng) -> Option<Vec<[i32; 2]>> {
    let g = grid as i32;
    let mut visited = vec![false; grid * grid];
    let start = [rng.gen_range(0..g), rng.gen_range(0..g)];
    visited[(start[0] * g + start[1]) as usize] = true;
    let mut path = vec![start];
    let mut dirs = NEIGHBOURS;
    while path.len() < len {
        let p = *path.last().expect("non-empty");
        dirs.shuffle(rng);
        let next = dirs.iter().map(|d| [p[0] + d[0], p[1] + d[1]]).find(|q| {
            (0..g).contains(&q[0]) && (0..g).contains(&q[1]) && !visited[(q[0] * g + q[1]) as usize]
        })?;
        visited[(next[0] * g + next[1]) as usize] = true;
        path.push(next);
    }
    Some(path)
}

fn max_norm(a: [i32; 2], b: [i32; 2]) -> i32 {
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

/// Self-avoiding 8-connected walk of length at least `grid`; a broken sample
/// has one interior pixel removed.
pub fn gen_snake(grid: usize, broken: bool, seed: u64) -> Result<SnakeSample> {
    if grid < 8 {
        return Err(Error::InvalidArgument(format!(
            "grid {grid} is smaller than 8"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RETRIES {
        let len = grid + rng.gen_range(0..grid) + usize::from(broken);
        let Some(mut path) = random_walk(grid, len, &mut rng) else {
            continue;
        };
        if !broken {
            return Ok(SnakeSample {
                grid,
                path,
                label: SnakeLabel::Connected,
                gap_index: None,
            });
        }
        let candidates: Vec<usize> = (1..path.len() - 1)
            .filter(|&k| max_norm(path[k - 1], path[k + 1]) == 2)
            .collect();
        let Some(&k) = candidates.choose(&mut rng) else {
            continue;
        };
        path.remove(k);
        return Ok(SnakeSample {
            grid,
            path,
            label: SnakeLabel::Broken,
            gap_index: Some(k - 1),
        });
    }
    Err(Error::Generation(format!(
        "no snake on a {grid}x{grid} grid after {MAX_RETRIES} walks"
    )))
}

/// `n` samples alternating connected and broken, seeds derived from `seed`.
pub fn gen_snake_dataset(grid: usize, n: usize, seed: u64) -> Result<Vec<SnakeSample>> {
    (0..n)
        .map(|i| {
            gen_snake(
                grid,
                i % 2 == 1,
                seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(i as u64),
            )
        })
        .collect()
}

/// Lifts each pixel to the null cone and flags a break when any consecutive
/// pair has `−2 X_i·X_{i+1} = ‖Δ‖² > 3`, i.e. is not 8-adjacent.
pub fn snake_connectivity_algebraic(sample: &SnakeSample) -> Result<SnakeLabel> {
    if sample.path.is_empty() {
        return Err(Error::InvalidArgument("empty snake path".into()));
    }
    let points = sample
        .path
        .iter()
        .map(|p| lift(&[f64::from(p[0]), f64::from(p[1])]))
        .collect::<Result<Vec<_>>>()?;
    let broken = points
        .windows(2)
        .any(|w| -2.0 * conformal_inner(&w[0], &w[1]) > 3.0);
    Ok(if broken {
        SnakeLabel::Broken
    } else {
        SnakeLabel::Connected
    })
}
