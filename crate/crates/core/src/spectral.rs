//! Perron–Frobenius eigendata for sparse nonnegative matrices.
//!
//! Power iteration is run on the shifted matrix `M + cI`, which has the same
//! Perron vector as `M` and is aperiodic whenever `M` is irreducible, so
//! periodic towers converge as well. The Collatz–Wielandt quotients
//! `min_i (Mx)_i / x_i <= rho <= max_i (Mx)_i / x_i` give a two-sided bracket
//! on the eigenvalue and serve as the stopping rule.

use petgraph::algo::kosaraju_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    pub fn from_rows<I, R>(n: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = (usize, f64)>,
    {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (j, v) in row {
                debug_assert!(j < n);
                cols.push(j);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        assert_eq!(row_ptr.len(), n + 1, "row count mismatch");
        Csr { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    /// `y = M x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `y = x^T M`
    pub fn vec_mul(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += xi * v;
                }
            }
        }
    }

    /// Principal submatrix on `states` (in the given order).
    pub fn restrict(&self, states: &[usize]) -> Csr {
        let mut local = vec![usize::MAX; self.n];
        for (k, &s) in states.iter().enumerate() {
            local[s] = k;
        }
        Csr::from_rows(
            states.len(),
            states.iter().map(|&s| {
                self.row(s)
                    .filter(|&(j, _)| local[j] != usize::MAX)
                    .map(|(j, v)| (local[j], v))
                    .collect::<Vec<_>>()
            }),
        )
    }

    pub fn transpose(&self) -> Csr {
        let mut rows = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                rows[j].push((i, v));
            }
        }
        Csr::from_rows(self.n, rows)
    }

    /// Strongly connected components of the support graph restricted to
    /// `alive` states that carry at least one cycle.
    pub fn cyclic_components(&self, alive: &[bool]) -> Vec<Vec<usize>> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.n, self.nnz());
        for _ in 0..self.n {
            g.add_node(());
        }
        let mut self_loop = vec![false; self.n];
        for i in (0..self.n).filter(|&i| alive[i]) {
            for (j, v) in self.row(i) {
                if v > 0.0 && alive[j] {
                    g.add_edge(NodeIndex::new(i), NodeIndex::new(j), ());
                    if i == j {
                        self_loop[i] = true;
                    }
                }
            }
        }
        // Kosaraju rather than Tarjan: petgraph's Tarjan recurses once per node,
        // which overflows worker stacks on tall towers.
        let mut comps: Vec<Vec<usize>> = kosaraju_scc(&g)
            .into_iter()
            .map(|c| {
                let mut c: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
                c.sort_unstable();
                c
            })
            .filter(|c| alive[c[0]] && (c.len() > 1 || self_loop[c[0]]))
            .collect();
        comps.sort_unstable_by_key(|c| c[0]);
        comps
    }

    /// Period of an irreducible support graph (gcd of cycle lengths).
    pub fn period(&self) -> Result<usize> {
        let alive = vec![true; self.n];
        let comps = self.cyclic_components(&alive);
        if comps.len() != 1 || comps[0].len() != self.n {
            return Err(Error::NotIrreducible);
        }
        let mut dist = vec![usize::MAX; self.n];
        let mut queue = std::collections::VecDeque::new();
        dist[0] = 0;
        queue.push_back(0);
        let mut g = 0usize;
        while let Some(u) = queue.pop_front() {
            for (v, w) in self.row(u) {
                if w <= 0.0 {
                    continue;
                }
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                } else {
                    let diff = (dist[u] + 1).abs_diff(dist[v]);
                    g = gcd(g, diff);
                }
            }
        }
        Ok(g.max(1))
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PerronOptions {
    /// Relative width of the Collatz–Wielandt bracket at which to stop.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PerronOptions {
    fn default() -> Self {
        PerronOptions {
            tol: 1e-13,
            max_iter: 100_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PerronPair {
    pub value: f64,
    /// Positive eigenvector, scaled to max entry 1.
    pub vector: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Side {
    /// `M r = lambda r`
    Right,
    /// `l M = lambda l`
    Left,
}

/// Leading eigenvalue and eigenvector of an irreducible nonnegative matrix.
pub fn perron(m: &Csr, side: Side, opts: PerronOptions) -> Result<PerronPair> {
    let n = m.dim();
    assert!(n > 0, "empty matrix");
    let apply = |x: &[f64], y: &mut [f64]| match side {
        Side::Right => m.mul_vec(x, y),
        Side::Left => m.vec_mul(x, y),
    };
    let mut x = vec![1.0; n];
    let mut y = vec![0.0; n];
    apply(&x, &mut y);
    let (lo, hi) = bracket(&x, &y, 0.0)?;
    let shift = 0.5 * (lo + hi);
    if hi == 0.0 {
        return Err(Error::NotIrreducible);
    }
    let mut lower = lo;
    let mut upper = hi;
    for it in 1..=opts.max_iter {
        apply(&x, &mut y);
        let (lo, hi) = bracket(&x, &y, shift)?;
        lower = lo - shift;
        upper = hi - shift;
        let top = y.iter().zip(&x).map(|(yi, xi)| yi + shift * xi).fold(0.0, f64::max);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = (yi + shift * *xi) / top;
        }
        if hi - lo <= opts.tol * upper.max(f64::MIN_POSITIVE) {
            return Ok(PerronPair {
                value: 0.5 * (lower + upper),
                vector: normalized_max(x),
                lower,
                upper,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        bracket: (upper - lower) / upper.abs().max(f64::MIN_POSITIVE),
    })
}

fn normalized_max(mut x: Vec<f64>) -> Vec<f64> {
    let top = x.iter().copied().fold(0.0, f64::max);
    x.iter_mut().for_each(|v| *v /= top);
    x
}

/// Collatz–Wielandt bracket for `M + shift I`.
fn bracket(x: &[f64], y: &[f64], shift: f64) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (xi, yi) in x.iter().zip(y) {
        if *xi <= 0.0 {
            return Err(Error::NotIrreducible);
        }
        let r = yi / xi + shift;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

/// Escape data of a stochastic chain restricted to its surviving states.
#[derive(Clone, Debug)]
pub struct OpenSpectrum {
    /// Leading eigenvalue of the surviving block, `1 - leak`.
    pub eigenvalue: f64,
    /// Mass lost per step from the quasi-stationary distribution.
    pub leak: f64,
    /// `-log(eigenvalue)`.
    pub rate: f64,
    pub iterations: usize,
}

/// Leading eigenvalue of a row-stochastic matrix restricted to `alive`.
///
/// Reducible restrictions are split into strongly connected components and
/// the largest component eigenvalue is returned. Each component eigenvalue is
/// evaluated as `1 - leak`, where the leak is the mass the quasi-stationary
/// left vector sends outside the component in one step; this avoids the
/// cancellation in `1 - lambda` when holes are small.
pub fn open_spectrum(q: &Csr, alive: &[bool], opts: PerronOptions) -> Result<OpenSpectrum> {
    let comps = q.cyclic_components(alive);
    if comps.is_empty() {
        return Err(Error::FullEscape);
    }
    let mut best: Option<OpenSpectrum> = None;
    for comp in comps {
        let mut inside = vec![false; q.dim()];
        comp.iter().for_each(|&s| inside[s] = true);
        let sub = q.restrict(&comp);
        let pair = perron(&sub, Side::Left, opts)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (k, &s) in comp.iter().enumerate() {
            let out: f64 = q.row(s).filter(|&(j, _)| !inside[j]).map(|(_, v)| v).sum();
            num += pair.vector[k] * out;
            den += pair.vector[k];
        }
        let leak = num / den;
        let cand = OpenSpectrum {
            eigenvalue: 1.0 - leak,
            leak,
            rate: -(-leak).ln_1p(),
            iterations: pair.iterations,
        };
        if best.as_ref().is_none_or(|b| cand.leak < b.leak) {
            best = Some(cand);
        }
    }
    Ok(best.expect("at least one component"))
}
