//! Escape rates of the semi-flow through a cross-section hole `I x {0}`.
//!
//! One step of a discretized suspension is `delta` units of flow time, so the
//! rates of the two step-roof towers, divided by `delta`, bracket the flow
//! rate: the taller roof `fbar` escapes no faster than `f`, the shorter roof
//! `f_` no slower.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::{gamma, MarkovGibbsMeasure};
use crate::open_system::{masked_survivor, Hole, NestedHoleSequence};
use crate::sft::{LocallyConstantFunction, Point};
use crate::spectral::{open_spectrum, OpenSpectrum, PerronOptions};
use crate::suspension::{
    build_suspension_sft, mu_tilde, roof_lower, roof_upper, DiscretizationParams, FlowSampler, RoofFunction,
    SuspensionCylinders, SuspensionMeasure, SuspensionSFT,
};

/// Tolerance for treating `t / delta` as an integer.
pub const STEP_SNAP: f64 = 1e-9;

/// Independent generator streams used by the Monte Carlo estimator.
pub const MC_SHARDS: u64 = 64;

/// Level-0 suspension states whose block starts with a hole word.
#[derive(Clone, Debug)]
pub struct FlowHole {
    states: Vec<usize>,
    alive: Vec<bool>,
}

impl FlowHole {
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// `true` for states outside the hole.
    pub fn alive(&self) -> &[bool] {
        &self.alive
    }
}

pub fn flow_hole(h: &Hole, s: &SuspensionSFT) -> Result<FlowHole> {
    if h.depth() > s.depth() {
        return Err(Error::DepthMismatch {
            hole: h.depth(),
            block: s.depth(),
        });
    }
    let states: Vec<usize> = (0..s.space().len())
        .filter(|&b| h.contains(s.space().word(b)))
        .map(|b| s.state_index(b, 0))
        .collect();
    let mut alive = vec![true; s.len()];
    states.iter().for_each(|&i| alive[i] = false);
    Ok(FlowHole { states, alive })
}

/// Which way to round flow time to steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `floor(t / delta)`
    Upper,
    /// `ceil(t / delta)`
    Lower,
}

/// Steps covering flow time `t`; ratios within `STEP_SNAP` of an integer
/// are snapped to it.
pub fn step_count(t: f64, delta: f64, side: Side) -> usize {
    let x = t / delta;
    let r = x.round();
    if (x - r).abs() <= STEP_SNAP {
        return r as usize;
    }
    match side {
        Side::Upper => x.floor() as usize,
        Side::Lower => x.ceil() as usize,
    }
}

/// Survivor log-measures `K(1..=k_max)` of the tower with the hole removed.
pub fn tower_survivor_curve(nu: &SuspensionMeasure, hole: &FlowHole, k_max: usize) -> Vec<f64> {
    masked_survivor(&nu.state_measures(), nu.chain(), hole.alive(), k_max)
}

/// `K_Discrete` on the tower at the step count matching flow time `t`.
pub fn k_flow_discretized(nu: &SuspensionMeasure, hole: &FlowHole, t: f64, side: Side) -> Result<(usize, f64)> {
    let delta = nu.sft().delta();
    if !(t > delta) {
        return Err(Error::Config(format!("flow time {t} must exceed delta = {delta}")));
    }
    let k = step_count(t, delta, side);
    Ok((k, tower_survivor_curve(nu, hole, k)[k - 1]))
}

/// Survivor probability of the flow under the step roof itself, as a
/// function of `t`: linear between consecutive multiples of `delta`, where
/// it equals the tower survivor. Heights are uniform inside each
/// `delta`-cell, so a point in cell `(w, j)` has its `i`-th level crossing
/// at time `i delta - u` with `u` uniform on `[0, delta)`.
pub fn step_roof_flow_survivor(nu: &SuspensionMeasure, hole: &FlowHole, t: f64) -> f64 {
    assert!(t >= 0.0);
    let delta = nu.sft().delta();
    let k = step_count(t, delta, Side::Upper);
    let r = (t - k as f64 * delta).max(0.0);
    let curve = tower_survivor_curve(nu, hole, k + 1);
    let s = |j: usize| if j == 0 { 1.0 } else { curve[j - 1].exp() };
    let (hi, lo) = (s(k), s(k + 1));
    (lo + (hi - lo) * (1.0 - r / delta)).clamp(lo, hi)
}

/// Escape rate per tower step.
pub fn tower_escape_rate(nu: &SuspensionMeasure, hole: &FlowHole) -> Result<OpenSpectrum> {
    open_spectrum(nu.chain(), hole.alive(), PerronOptions::default())
}

/// The pair of towers for `fbar` and `f_`.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub params: DiscretizationParams,
    pub upper: SuspensionMeasure,
    pub lower: SuspensionMeasure,
}

/// Both step-roof towers, on blocks of length
/// `max(m, hole_depth, depth(phi), depth(f))`.
pub fn discretize(
    mu: &MarkovGibbsMeasure,
    f: &RoofFunction,
    params: DiscretizationParams,
    hole_depth: usize,
) -> Result<Discretization> {
    let a = mu.base();
    let depth = params.m.max(hole_depth).max(mu.depth()).max(f.depth());
    let build = |roof| -> Result<SuspensionMeasure> {
        let sft = build_suspension_sft(a, &roof, depth)?;
        mu_tilde(mu, &sft)
    };
    Ok(Discretization {
        params,
        upper: build(roof_upper(a, f, params.m, params.delta)?)?,
        lower: build(roof_lower(a, f, params.m, params.delta)?)?,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowEscapeResult {
    pub n: usize,
    pub params: DiscretizationParams,
    /// Flow rate of the `fbar` tower.
    pub r_lower: f64,
    /// Flow rate of the `f_` tower.
    pub r_upper: f64,
    /// `mu(I)`
    pub hole_measure: f64,
    /// `nu(I x [0, 1]) = mu(I) / int f dmu`
    pub nu_slab_measure: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    pub gamma: f64,
    /// `gamma int f / int fbar` and `gamma int f / int f_`, the limits the
    /// ratio interval approaches as the hole shrinks.
    pub envelope: (f64, f64),
    pub roof_integral: f64,
    pub upper_integral: f64,
    pub lower_integral: f64,
}

pub fn escape_rate_flow(
    mu: &MarkovGibbsMeasure,
    f: &RoofFunction,
    hole: &Hole,
    target: &Point,
    params: DiscretizationParams,
) -> Result<FlowEscapeResult> {
    let d = discretize(mu, f, params, hole.depth())?;
    escape_rate_flow_on(mu, f, hole, target, &d)
}

/// As [`escape_rate_flow`], reusing towers built by [`discretize`].
pub fn escape_rate_flow_on(
    mu: &MarkovGibbsMeasure,
    f: &RoofFunction,
    hole: &Hole,
    target: &Point,
    d: &Discretization,
) -> Result<FlowEscapeResult> {
    let delta = d.params.delta;
    let rate = |nu: &SuspensionMeasure| -> Result<f64> {
        let h = flow_hole(hole, nu.sft())?;
        Ok(tower_escape_rate(nu, &h)?.rate / delta)
    };
    let r_lower = rate(&d.upper)?;
    let r_upper = rate(&d.lower)?;
    let g = gamma(target, mu.potential(), mu.pressure())?;
    let roof_integral = mu.integrate(f.function());
    let upper_integral = d.upper.roof_integral();
    let lower_integral = d.lower.roof_integral();
    let hole_measure = hole.measure(mu);
    let nu_slab_measure = hole_measure / roof_integral;
    Ok(FlowEscapeResult {
        n: hole.depth(),
        params: d.params,
        r_lower,
        r_upper,
        hole_measure,
        nu_slab_measure,
        ratio_lo: r_lower / nu_slab_measure,
        ratio_hi: r_upper / nu_slab_measure,
        gamma: g,
        envelope: (g * roof_integral / upper_integral, g * roof_integral / lower_integral),
        roof_integral,
        upper_integral,
        lower_integral,
    })
}

/// Flow ratio intervals for every hole of a nested sequence.
pub fn theorem_a_curve(
    mu: &MarkovGibbsMeasure,
    f: &RoofFunction,
    seq: &NestedHoleSequence,
    params: DiscretizationParams,
) -> Result<Vec<FlowEscapeResult>> {
    seq.n_range()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|n| escape_rate_flow(mu, f, seq.hole(n), &seq.target, params))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
    pub survivors: u64,
}

/// Fraction of `nu`-random points whose flow orbit avoids `hole x {0}` on
/// `[0, t]`, with its binomial standard error.
///
/// Samples are split over [`MC_SHARDS`] generator streams of a ChaCha8
/// generator seeded by `seed`, so the result does not depend on the number of
/// worker threads.
pub fn monte_carlo_survival(
    mu: &MarkovGibbsMeasure,
    f: &LocallyConstantFunction,
    hole: &Hole,
    t: f64,
    samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    assert!(samples > 0 && t >= 0.0);
    let window = hole.depth().max(f.depth());
    let horizon = t.ceil() as usize + 2 + window;
    let counts = (0..MC_SHARDS)
        .into_par_iter()
        .map(|shard| -> Result<u64> {
            let quota = samples / MC_SHARDS + u64::from(shard < samples % MC_SHARDS);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            let mut sampler = FlowSampler::new(mu, f, horizon, rng);
            let mut alive = 0;
            for _ in 0..quota {
                let p = sampler.sample();
                let x = p.base.prefix(sampler.horizon())?;
                let mut hit = f.eval(&x) - p.height;
                let mut j = 1;
                let mut survived = true;
                while hit <= t {
                    if j + window > x.len() {
                        return Err(Error::PrefixExhausted(x.len()));
                    }
                    if hole.contains(&x[j..]) {
                        survived = false;
                        break;
                    }
                    hit += f.eval(&x[j..]);
                    j += 1;
                }
                alive += u64::from(survived);
            }
            Ok(alive)
        })
        .collect::<Result<Vec<u64>>>()?;
    let survivors: u64 = counts.iter().sum();
    let p = survivors as f64 / samples as f64;
    Ok(McEstimate {
        estimate: p,
        stderr: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
        survivors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{bernoulli_potential, equilibrium_state};
    use crate::open_system::escape_rate_discrete;
    use crate::sft::{PeriodicPoint, Word};
    use crate::spectral::{perron, Csr, Side as Eig};
    use crate::suspension::StepRoof;

    fn fair() -> MarkovGibbsMeasure {
        let (a, phi) = bernoulli_potential(&[0.5, 0.5]).unwrap();
        equilibrium_state(&a, &phi).unwrap()
    }

    fn tower(mu: &MarkovGibbsMeasure, levels: Vec<usize>, delta: f64, depth: usize) -> SuspensionMeasure {
        let roof = StepRoof::new(mu.base(), 1, delta, levels).unwrap();
        mu_tilde(mu, &build_suspension_sft(mu.base(), &roof, depth).unwrap()).unwrap()
    }

    fn hole(mu: &MarkovGibbsMeasure, w: &str) -> Hole {
        Hole::cylinder(mu.base(), &Word::parse(w).unwrap().0).unwrap()
    }

    /// Per-step survival factor of an open tower from the return-time
    /// equation: `lambda` solves `rho(B(lambda)) = 1` with
    /// `B(lambda)[u][v] = Q(u, v) lambda^{-h(u)}` over blocks `v` outside the
    /// hole.
    fn renewal_eigenvalue(mu: &MarkovGibbsMeasure, heights: &[usize], h: &Hole) -> f64 {
        let q = mu.transitions();
        let alive: Vec<bool> = mu.space().words().map(|w| !h.contains(w)).collect();
        let rho = |lambda: f64| {
            let b = Csr::from_rows(
                q.dim(),
                (0..q.dim()).map(|u| {
                    q.row(u)
                        .filter(|&(v, _)| alive[v] && alive[u])
                        .map(|(v, p)| (v, p * lambda.powi(-(heights[u] as i32))))
                        .collect::<Vec<_>>()
                }),
            );
            b.cyclic_components(&alive)
                .iter()
                .map(|c| {
                    perron(&b.restrict(c), Eig::Right, PerronOptions::default())
                        .unwrap()
                        .value
                })
                .fold(0.0, f64::max)
        };
        let (mut lo, mut hi) = (0.5, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rho(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn steps() {
        assert_eq!(step_count(2.0, 0.5, Side::Upper), 4);
        assert_eq!(step_count(2.2, 0.5, Side::Lower), 5);
        assert_eq!(step_count(2.2, 0.5, Side::Upper), 4);
        assert_eq!(step_count(0.3, 0.1, Side::Lower), 3);
    }

    #[test]
    fn holes_on_towers() {
        let mu = fair();
        let nu = tower(&mu, vec![3, 3], 0.1, 1);
        let h = flow_hole(&hole(&mu, "1"), nu.sft()).unwrap();
        assert_eq!(h.states(), [0]);
        assert!(matches!(
            flow_hole(&hole(&mu, "11"), nu.sft()),
            Err(Error::DepthMismatch { hole: 2, block: 1 })
        ));
        let nu2 = tower(&mu, vec![3, 3], 0.1, 2);
        let h = flow_hole(&hole(&mu, "11"), nu2.sft()).unwrap();
        assert_eq!(h.states(), [0]);
        let two = Hole::new(mu.base(), [Word::parse("11").unwrap(), Word::parse("21").unwrap()]).unwrap();
        assert_eq!(flow_hole(&two, nu2.sft()).unwrap().states(), [0, 6]);
    }

    #[test]
    fn one_return() {
        let mu = fair();
        let nu = tower(&mu, vec![3, 3], 0.1, 1);
        let h = flow_hole(&hole(&mu, "1"), nu.sft()).unwrap();
        let k3 = tower_survivor_curve(&nu, &h, 3)[2];
        assert!((k3 - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn tower_rates_match_renewal_equation() {
        let (a, phi) = bernoulli_potential(&[0.3, 0.7]).unwrap();
        let mu = equilibrium_state(&a, &phi).unwrap().lift(2).unwrap();
        for (levels, w) in [(vec![5, 7], "12"), (vec![4, 4], "11"), (vec![3, 8], "21")] {
            let nu = tower(&mu, levels.clone(), 0.2, 2);
            let h = hole(&mu, w);
            let fh = flow_hole(&h, nu.sft()).unwrap();
            let got = tower_escape_rate(&nu, &fh).unwrap();
            let heights: Vec<usize> = mu.space().words().map(|w| levels[w[0] as usize]).collect();
            let want = renewal_eigenvalue(&mu, &heights, &h);
            assert!(
                (got.eigenvalue - want).abs() < 1e-11,
                "{levels:?} {} {want}",
                got.eigenvalue
            );
        }
    }

    #[test]
    fn constant_roof_reduces_to_base() {
        let mu = fair();
        let f = RoofFunction::new(LocallyConstantFunction::constant(mu.base(), 2.0).unwrap()).unwrap();
        let z = Point::periodic(&PeriodicPoint::new(mu.base(), &Word::parse("1").unwrap()).unwrap());
        let h = hole(&mu, "111111");
        let base = escape_rate_discrete(&mu, &h).unwrap().rate;
        let params = DiscretizationParams::new(&f, &mu, 1, 0.1).unwrap();
        let r = escape_rate_flow(&mu, &f, &h, &z, params).unwrap();
        assert!((r.r_lower - base / 2.2).abs() < 1e-10);
        assert!((r.r_upper - base / 1.8).abs() < 1e-10);
        assert!(r.r_lower <= base / 2.0 && base / 2.0 <= r.r_upper);
        assert!((r.gamma - 0.5).abs() < 1e-15);
        assert!((r.nu_slab_measure - 1.0 / 128.0).abs() < 1e-15);
    }

    #[test]
    fn step_survivor_brackets() {
        let mu = fair();
        let nu = tower(&mu, vec![4, 6], 0.25, 2);
        let h = flow_hole(&hole(&mu, "12"), nu.sft()).unwrap();
        let curve = tower_survivor_curve(&nu, &h, 60);
        for i in 1..200 {
            let t = 0.07 * i as f64;
            let s = step_roof_flow_survivor(&nu, &h, t).ln();
            let lo = step_count(t, 0.25, Side::Lower);
            let up = step_count(t, 0.25, Side::Upper);
            if t > 0.25 {
                assert!(curve[lo - 1] <= s + 1e-15 && s <= curve[up - 1] + 1e-15);
            }
        }
        assert_eq!(step_roof_flow_survivor(&nu, &h, 0.0), 1.0);
    }

    #[test]
    fn monte_carlo_matches_exact_survivor() {
        // Constant roof 2: the orbit crosses the section at 2 - s, 4 - s, ...,
        // so survival to t = 6 means avoiding the hole at shifts 1, 2, 3.
        let mu = fair();
        let f = LocallyConstantFunction::constant(mu.base(), 2.0).unwrap();
        let h = hole(&mu, "11");
        // Words x1 x2 x3 x4 without "11": 8 of 16.
        let want = 0.5;
        let est = monte_carlo_survival(&mu, &f, &h, 6.0, 40_000, 3).unwrap();
        assert!((est.estimate - want).abs() < 4.0 * est.stderr, "{est:?}");
        let again = monte_carlo_survival(&mu, &f, &h, 6.0, 40_000, 3).unwrap();
        assert_eq!(est, again);
        let all = monte_carlo_survival(&mu, &f, &h, 0.0, 1000, 1).unwrap();
        assert_eq!(all.estimate, 1.0);
    }
}
