//! Dynamic time warping on planar point sequences with Euclidean local cost.
//!
//! Steps are `(1,0)`, `(0,1)` and `(1,1)`; both endpoints are matched and
//! the returned value is the unnormalized cumulative cost.

use crate::error::{Error, Result};

pub type Point2 = (f64, f64);

#[inline]
fn dist(a: Point2, b: Point2) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn check(a: &[Point2], b: &[Point2]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid_input("DTW needs non-empty sequences"));
    }
    Ok(())
}

/// Exact DTW distance.
pub fn dtw_distance(a: &[Point2], b: &[Point2]) -> Result<f64> {
    check(a, b)?;
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for (i, &pa) in a.iter().enumerate() {
        for j in 0..m {
            let cost = dist(pa, b[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { prev[j] } else { f64::INFINITY };
                let left = if j > 0 { cur[j - 1] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 { prev[j - 1] } else { f64::INFINITY };
                up.min(left).min(diag)
            };
            cur[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// DTW of every equal-length prefix pair: entry `k` is the distance between
/// `a[..=k]` and `b[..=k]`. Requires equal lengths.
pub fn prefix_dtw(a: &[Point2], b: &[Point2]) -> Result<Vec<f64>> {
    check(a, b)?;
    if a.len() != b.len() {
        return Err(Error::invalid_input("prefix DTW needs equal lengths"));
    }
    let n = a.len();
    let mut acc = vec![f64::INFINITY; n * n];
    for i in 0..n {
        for j in 0..n {
            let cost = dist(a[i], b[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { acc[(i - 1) * n + j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i * n + j - 1] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 {
                    acc[(i - 1) * n + j - 1]
                } else {
                    f64::INFINITY
                };
                up.min(left).min(diag)
            };
            acc[i * n + j] = cost + best;
        }
    }
    // the top-left k x k block of the cumulative matrix only depends on the
    // first k points of each sequence
    Ok((0..n).map(|k| acc[k * n + k]).collect())
}

/// Per-row inclusive column bounds of the cells a DTW pass may visit.
#[derive(Clone, Debug)]
struct Window {
    bounds: Vec<(usize, usize)>,
}

impl Window {
    fn full(n: usize, m: usize) -> Self {
        Self {
            bounds: vec![(0, m - 1); n],
        }
    }
}

/// DTW restricted to a window, returning the cost and the optimal path.
fn windowed_dtw(a: &[Point2], b: &[Point2], window: &Window) -> (f64, Vec<(usize, usize)>) {
    let n = a.len();
    let m = b.len();
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        let (lo, hi) = window.bounds[i];
        for j in lo..=hi.min(m - 1) {
            let cost = dist(a[i], b[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 {
                    acc[(i - 1) * m + j - 1]
                } else {
                    f64::INFINITY
                };
                up.min(left).min(diag)
            };
            acc[i * m + j] = cost + best;
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while i > 0 || j > 0 {
        let (ni, nj) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[(i - 1) * m + j - 1];
            let up = acc[(i - 1) * m + j];
            let left = acc[i * m + j - 1];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        i = ni;
        j = nj;
        path.push((i, j));
    }
    path.reverse();
    (acc[n * m - 1], path)
}

fn halve(s: &[Point2]) -> Vec<Point2> {
    s.chunks_exact(2)
        .map(|c| ((c[0].0 + c[1].0) / 2.0, (c[0].1 + c[1].1) / 2.0))
        .collect()
}

/// Projects a low-resolution path onto the next resolution, widened by
/// `radius` cells in every direction.
fn expand_window(path: &[(usize, usize)], n: usize, m: usize, radius: usize) -> Window {
    let mut bounds = vec![(usize::MAX, 0usize); n];
    let r = radius as isize;
    let (cn, cm) = (n.div_ceil(2) as isize, m.div_ceil(2) as isize);
    for &(pi, pj) in path {
        for di in -r..=r {
            let ci = pi as isize + di;
            if ci < 0 || ci >= cn {
                continue;
            }
            let lo_c = (pj as isize - r).max(0);
            let hi_c = (pj as isize + r).min(cm - 1);
            if lo_c > hi_c {
                continue;
            }
            for hi_row in [2 * ci, 2 * ci + 1] {
                if hi_row as usize >= n {
                    continue;
                }
                let b = &mut bounds[hi_row as usize];
                b.0 = b.0.min((2 * lo_c) as usize);
                b.1 = b.1.max(((2 * hi_c + 1) as usize).min(m - 1));
            }
        }
    }
    // rows the projection missed (odd-length tail) inherit the row above
    for i in 0..n {
        if bounds[i].0 == usize::MAX {
            bounds[i] = if i > 0 { (bounds[i - 1].0, m - 1) } else { (0, m - 1) };
        }
    }
    // endpoints must be reachable
    bounds[0].0 = 0;
    bounds[n - 1].1 = m - 1;
    // keep the band monotone so a connected path always exists
    for i in 1..n {
        bounds[i].0 = bounds[i].0.min(bounds[i - 1].1);
        if bounds[i].1 < bounds[i - 1].1 {
            bounds[i].1 = bounds[i - 1].1;
        }
    }
    Window { bounds }
}

fn fast_dtw_rec(a: &[Point2], b: &[Point2], radius: usize) -> (f64, Vec<(usize, usize)>) {
    let min_size = radius + 2;
    if a.len() < min_size || b.len() < min_size {
        return windowed_dtw(a, b, &Window::full(a.len(), b.len()));
    }
    let (_, coarse_path) = fast_dtw_rec(&halve(a), &halve(b), radius);
    let window = expand_window(&coarse_path, a.len(), b.len(), radius);
    windowed_dtw(a, b, &window)
}

/// FastDTW approximation: solve at half resolution, project the warp path
/// back and refine inside a band of `radius` cells. Never below the exact
/// distance; exact when `radius + 2 > min(len)`.
pub fn fast_dtw_distance(a: &[Point2], b: &[Point2], radius: usize) -> Result<f64> {
    check(a, b)?;
    if radius < 1 {
        return Err(Error::invalid_input("FastDTW radius must be at least 1"));
    }
    Ok(fast_dtw_rec(a, b, radius).0)
}

/// Which DTW routine computes the `dtwValues` feature.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DtwEngine {
    Exact,
    Fast { radius: usize },
    /// Exact up to [`DtwEngine::AUTO_EXACT_MAX_LEN`] points, FastDTW with
    /// radius 1 beyond.
    #[default]
    Auto,
}

impl DtwEngine {
    pub const AUTO_EXACT_MAX_LEN: usize = 500;

    pub fn distance(self, a: &[Point2], b: &[Point2]) -> Result<f64> {
        match self {
            DtwEngine::Exact => dtw_distance(a, b),
            DtwEngine::Fast { radius } => fast_dtw_distance(a, b, radius),
            DtwEngine::Auto if a.len().max(b.len()) <= Self::AUTO_EXACT_MAX_LEN => dtw_distance(a, b),
            DtwEngine::Auto => fast_dtw_distance(a, b, 1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Minimum over every monotone alignment path, by exhaustive recursion.
    fn brute_force(a: &[Point2], b: &[Point2]) -> f64 {
        fn go(a: &[Point2], b: &[Point2], i: usize, j: usize) -> f64 {
            let here = dist(a[i], b[j]);
            if i == a.len() - 1 && j == b.len() - 1 {
                return here;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.len() {
                best = best.min(go(a, b, i + 1, j));
            }
            if j + 1 < b.len() {
                best = best.min(go(a, b, i, j + 1));
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                best = best.min(go(a, b, i + 1, j + 1));
            }
            here + best
        }
        go(a, b, 0, 0)
    }

    #[test]
    fn examples() {
        let s = [(0.0, 0.0), (1.0, 2.0), (3.0, 1.0)];
        assert_eq!(dtw_distance(&s, &s).unwrap(), 0.0);
        assert_eq!(dtw_distance(&[(0.0, 0.0)], &[(3.0, 4.0)]).unwrap(), 5.0);
        let a = [(0.0, 0.0), (1.0, 0.0)];
        let b = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)];
        assert_eq!(brute_force(&a, &b), 1.0);
        assert_eq!(dtw_distance(&a, &b).unwrap(), 1.0);
        assert!(dtw_distance(&[], &b).is_err());
    }

    #[test]
    fn prefix_values_match_direct_computation() {
        let a: Vec<Point2> = (0..9).map(|i| (i as f64, (i * i % 5) as f64)).collect();
        let b: Vec<Point2> = (0..9).map(|i| ((i * 2 % 7) as f64, i as f64 * 0.5)).collect();
        let prefix = prefix_dtw(&a, &b).unwrap();
        for k in 0..a.len() {
            assert!((prefix[k] - dtw_distance(&a[..=k], &b[..=k]).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn fast_dtw_small_inputs_are_exact() {
        let a = [(0.0, 0.0), (4.0, 1.0)];
        let b = [(1.0, 1.0)];
        assert_eq!(fast_dtw_distance(&a, &b, 1).unwrap(), dtw_distance(&a, &b).unwrap());
        assert!(fast_dtw_distance(&a, &b, 0).is_err());
    }

    fn walk() -> impl Strategy<Value = Vec<Point2>> {
        proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..60).prop_map(|steps| {
            let mut p = (0.0, 0.0);
            steps
                .into_iter()
                .map(|(dx, dy)| {
                    p = (p.0 + dx, p.1 + dy);
                    p
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn dtw_is_symmetric_and_non_negative(a in walk(), b in walk()) {
            let ab = dtw_distance(&a, &b).unwrap();
            let ba = dtw_distance(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
            prop_assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn fast_dtw_upper_bounds_exact(a in walk(), b in walk(), radius in 1usize..4) {
            let exact = dtw_distance(&a, &b).unwrap();
            let fast = fast_dtw_distance(&a, &b, radius).unwrap();
            prop_assert!(fast >= 0.0);
            prop_assert!(fast + 1e-9 >= exact);
            prop_assert_eq!(fast_dtw_distance(&a, &a, radius).unwrap(), 0.0);
        }

        #[test]
        fn fast_dtw_full_radius_is_exact(a in walk(), b in walk()) {
            let r = a.len().max(b.len());
            let exact = dtw_distance(&a, &b).unwrap();
            prop_assert!((fast_dtw_distance(&a, &b, r).unwrap() - exact).abs() <= 1e-9);
        }
    }
}
