//! Pressure, equilibrium states and the `gamma` function for locally
//! constant potentials.
//!
//! For a potential of depth `m` the transfer operator restricted to functions
//! of `m` coordinates is the matrix `M[u][v] = exp(phi(u))` on the `m`-block
//! presentation. Its Perron root is `exp(P(phi))`, and the equilibrium state
//! is the Markov measure
//!
//! ```text
//! Q(u -> v) = M[u][v] r_v / (lambda r_u),      pi_u = l_u r_u / sum_w l_w r_w,
//! ```
//!
//! with `r`, `l` the right and left Perron vectors.

use crate::error::{Error, Result};
use crate::sft::{word_string, BlockSpace, LocallyConstantFunction, Point, Symbol, TransitionMatrix};
use crate::spectral::{perron, Csr, PerronOptions, Side};

/// Residual bound for the Perron pair, relative to the eigenvalue.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct WeightedTransferMatrix {
    space: BlockSpace,
    matrix: Csr,
    eigenvalue: f64,
    right: Vec<f64>,
    left: Vec<f64>,
}

impl WeightedTransferMatrix {
    pub fn space(&self) -> &BlockSpace {
        &self.space
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    /// `lambda = exp(P(phi))`
    pub fn eigenvalue(&self) -> f64 {
        self.eigenvalue
    }

    /// Right Perron vector, max entry 1.
    pub fn right(&self) -> &[f64] {
        &self.right
    }

    /// Left Perron vector, scaled so that `l . r = 1`.
    pub fn left(&self) -> &[f64] {
        &self.left
    }

    /// `(|Mr - lambda r|_inf, |lM - lambda l|_inf) / lambda`
    pub fn residuals(&self) -> (f64, f64) {
        let n = self.space.len();
        let mut y = vec![0.0; n];
        self.matrix.mul_vec(&self.right, &mut y);
        let r = max_residual(&y, &self.right, self.eigenvalue);
        self.matrix.vec_mul(&self.left, &mut y);
        let l = max_residual(&y, &self.left, self.eigenvalue);
        (r / self.eigenvalue, l / self.eigenvalue)
    }
}

fn max_residual(y: &[f64], x: &[f64], lambda: f64) -> f64 {
    y.iter().zip(x).map(|(a, b)| (a - lambda * b).abs()).fold(0.0, f64::max)
}

/// Transfer matrix of `phi` on the `depth(phi)`-block recode of `a`, with its
/// Perron data.
pub fn build_transfer(a: &TransitionMatrix, phi: &LocallyConstantFunction) -> Result<WeightedTransferMatrix> {
    let space = BlockSpace::new(a, phi.depth())?;
    let matrix = Csr::from_rows(
        space.len(),
        (0..space.len()).map(|u| {
            let w = phi.eval(space.word(u)).exp();
            space.successors(u).iter().map(|&v| (v, w)).collect::<Vec<_>>()
        }),
    );
    let opts = PerronOptions::default();
    let right = perron(&matrix, Side::Right, opts)?;
    let left = perron(&matrix, Side::Left, opts)?;
    let eigenvalue = 0.5 * (right.value + left.value);
    let dot: f64 = left.vector.iter().zip(&right.vector).map(|(l, r)| l * r).sum();
    let t = WeightedTransferMatrix {
        space,
        matrix,
        eigenvalue,
        right: right.vector,
        left: left.vector.iter().map(|l| l / dot).collect(),
    };
    let (rr, lr) = t.residuals();
    if rr > EIGEN_RESIDUAL_TOL || lr > EIGEN_RESIDUAL_TOL {
        return Err(Error::NoConvergence {
            iterations: right.iterations.max(left.iterations),
            bracket: rr.max(lr),
        });
    }
    Ok(t)
}

/// Topological pressure `P(phi) = log lambda`.
pub fn pressure(a: &TransitionMatrix, phi: &LocallyConstantFunction) -> Result<f64> {
    Ok(build_transfer(a, phi)?.eigenvalue().ln())
}

/// The equilibrium state of a locally constant potential, as a Markov
/// measure on block words.
#[derive(Clone, Debug)]
pub struct MarkovGibbsMeasure {
    base: TransitionMatrix,
    space: BlockSpace,
    pressure: f64,
    stationary: Vec<f64>,
    transitions: Csr,
    potential: LocallyConstantFunction,
}

pub fn equilibrium_state(a: &TransitionMatrix, phi: &LocallyConstantFunction) -> Result<MarkovGibbsMeasure> {
    let t = build_transfer(a, phi)?;
    let lambda = t.eigenvalue;
    let r = &t.right;
    // Rows are renormalized so that the chain is stochastic to rounding; the
    // raw quotients carry the eigenvector residual.
    let transitions = Csr::from_rows(
        t.space.len(),
        (0..t.space.len()).map(|u| {
            let row: Vec<(usize, f64)> = t.matrix.row(u).map(|(v, w)| (v, w * r[v] / (lambda * r[u]))).collect();
            let total: f64 = row.iter().map(|e| e.1).sum();
            row.into_iter().map(|(v, p)| (v, p / total)).collect::<Vec<_>>()
        }),
    );
    let raw: Vec<f64> = t.left.iter().zip(r).map(|(l, r)| l * r).collect();
    let total: f64 = raw.iter().sum();
    Ok(MarkovGibbsMeasure {
        base: a.clone(),
        space: t.space,
        pressure: lambda.ln(),
        stationary: raw.iter().map(|p| p / total).collect(),
        transitions,
        potential: phi.clone(),
    })
}

impl MarkovGibbsMeasure {
    pub fn base(&self) -> &TransitionMatrix {
        &self.base
    }

    pub fn space(&self) -> &BlockSpace {
        &self.space
    }

    /// Block depth of the Markov presentation.
    pub fn depth(&self) -> usize {
        self.space.depth()
    }

    pub fn pressure(&self) -> f64 {
        self.pressure
    }

    pub fn potential(&self) -> &LocallyConstantFunction {
        &self.potential
    }

    /// `pi`, indexed like [`Self::space`].
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Row-stochastic transition matrix on block words.
    pub fn transitions(&self) -> &Csr {
        &self.transitions
    }

    fn q(&self, u: usize, v: usize) -> f64 {
        self.transitions.row(u).find(|&(j, _)| j == v).map_or(0.0, |(_, p)| p)
    }

    /// `mu([w])`, zero for inadmissible words.
    pub fn cylinder_measure(&self, w: &[Symbol]) -> f64 {
        let m = self.depth();
        if w.len() < m {
            return self.stationary[self.space.with_prefix(w)].iter().sum();
        }
        let Some(mut prev) = self.space.index_of(&w[..m]) else {
            return 0.0;
        };
        let mut p = self.stationary[prev];
        for i in 1..=w.len() - m {
            let Some(next) = self.space.index_of(&w[i..i + m]) else {
                return 0.0;
            };
            p *= self.q(prev, next);
            prev = next;
        }
        p
    }

    /// `int f dmu`
    pub fn integrate(&self, f: &LocallyConstantFunction) -> f64 {
        f.space()
            .words()
            .zip(f.values())
            .map(|(w, v)| v * self.cylinder_measure(w))
            .sum()
    }

    /// The same measure presented on blocks of length `depth >= self.depth()`.
    pub fn lift(&self, depth: usize) -> Result<MarkovGibbsMeasure> {
        let m = self.depth();
        assert!(depth >= m, "cannot lift to a smaller depth");
        if depth == m {
            return Ok(self.clone());
        }
        let space = BlockSpace::new(&self.base, depth)?;
        let tail = |w: &[Symbol]| self.space.index_of(&w[depth - m..]).expect("admissible");
        let stationary = space.words().map(|w| self.cylinder_measure(w)).collect();
        let transitions = Csr::from_rows(
            space.len(),
            (0..space.len()).map(|u| {
                let from = tail(space.word(u));
                space
                    .successors(u)
                    .iter()
                    .map(|&v| (v, self.q(from, tail(space.word(v)))))
                    .collect::<Vec<_>>()
            }),
        );
        Ok(MarkovGibbsMeasure {
            base: self.base.clone(),
            space,
            pressure: self.pressure,
            stationary,
            transitions,
            potential: self.potential.clone(),
        })
    }
}

/// Observed Gibbs constants over all cylinders of length `<= n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsCertificate {
    pub n_max: usize,
    pub c1_observed: f64,
    pub c2_observed: f64,
    /// `(n, min ratio, max ratio)` per cylinder length.
    pub per_length: Vec<(usize, f64, f64)>,
}

/// Scans `mu([x]_n) exp(Pn - S_n phi(x))` over every admissible `x`,
/// `n <= n_max`, and reports the extremes.
pub fn certify_gibbs(mu: &MarkovGibbsMeasure, n_max: usize) -> Result<GibbsCertificate> {
    assert!(n_max >= 1);
    let phi = &mu.potential;
    let m = phi.depth();
    let mut per_length = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let space = BlockSpace::new(&mu.base, n + m - 1)?;
        let (lo, hi) = space
            .words()
            .map(|x| mu.cylinder_measure(&x[..n]) * (mu.pressure * n as f64 - phi.birkhoff_sum(x, n)).exp())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
        per_length.push((n, lo, hi));
    }
    Ok(GibbsCertificate {
        n_max,
        c1_observed: per_length.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        c2_observed: per_length.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max),
        per_length,
    })
}

/// Tolerance for `gamma` landing inside `[0, 1]`.
pub const GAMMA_RANGE_TOL: f64 = 1e-12;

/// The limit `gamma(z)`: 1 for points that are not periodic, and
/// `1 - exp(S_p phi(z) - p P)` for a point of prime period `p`.
pub fn gamma(z: &Point, phi: &LocallyConstantFunction, pressure: f64) -> Result<f64> {
    let Some(z) = z.as_periodic() else {
        return Ok(1.0);
    };
    let p = z.prime_period();
    let orbit = z.prefix(p + phi.depth() - 1);
    let mut sum = 0.0;
    for k in 0..p {
        sum += phi
            .try_eval(&orbit[k..])
            .ok_or_else(|| Error::InvalidPeriodicPoint(format!("{} is not admissible", word_string(&orbit))))?;
    }
    let g = 1.0 - (sum - p as f64 * pressure).exp();
    if !(-GAMMA_RANGE_TOL..=1.0 + GAMMA_RANGE_TOL).contains(&g) {
        return Err(Error::InvalidPeriodicPoint(format!(
            "gamma = {g} outside [0,1]; pressure does not match the potential"
        )));
    }
    Ok(g.clamp(0.0, 1.0))
}

/// `phi(x) = log p_{x_0}`: the potential whose equilibrium state is the
/// Bernoulli measure with weights `p` on the full shift.
pub fn bernoulli_potential(p: &[f64]) -> Result<(TransitionMatrix, LocallyConstantFunction)> {
    let a = TransitionMatrix::full_shift(p.len())?;
    let phi = LocallyConstantFunction::from_fn(&a, 1, crate::sft::DEFAULT_THETA, |x| p[x[0] as usize].ln())?;
    Ok((a, phi))
}
