//! Escape through holes in the discrete system.
//!
//! A hole is a finite union of `n`-cylinders. Survivor measures
//!
//! ```text
//! K(k) = log mu { x : sigma^i x not in H, 0 <= i < k }
//! ```
//!
//! are evaluated by a masked forward recursion of the equilibrium chain on
//! blocks of length `max(depth(phi), n)`; the escape rate is read off the
//! leading eigenvalue of the same chain restricted to the surviving blocks.

use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::{gamma, MarkovGibbsMeasure};
use crate::sft::{word_string, Point, Symbol, TransitionMatrix, Word};
use crate::spectral::{open_spectrum, Csr, PerronOptions};

/// Number of survivor steps kept in an [`EscapeResult`] by default.
pub const DEFAULT_DIAGNOSTIC_STEPS: usize = 400;

/// Slack added to the fitted decay ratio of a nested sequence.
pub const RHO_SLACK: f64 = 1e-9;

/// A union of cylinders of a common length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hole {
    depth: usize,
    words: Vec<Vec<Symbol>>,
}

impl Hole {
    pub fn new(a: &TransitionMatrix, words: impl IntoIterator<Item = Word>) -> Result<Hole> {
        let mut words: Vec<Vec<Symbol>> = words.into_iter().map(|w| w.0).collect();
        let Some(depth) = words.first().map(Vec::len) else {
            return Err(Error::InvalidHole("no words".into()));
        };
        if depth == 0 {
            return Err(Error::InvalidHole("empty word".into()));
        }
        for w in &words {
            if w.len() != depth {
                return Err(Error::InvalidHole(format!(
                    "{} has length {}, expected {depth}",
                    word_string(w),
                    w.len()
                )));
            }
            if w.iter().any(|&s| s as usize >= a.size()) || !a.is_admissible(w) {
                return Err(Error::Inadmissible(word_string(w)));
            }
        }
        words.sort_unstable();
        words.dedup();
        if words.len() as u128 >= a.count_words(depth) {
            return Err(Error::InvalidHole(format!("covers every word of length {depth}")));
        }
        Ok(Hole { depth, words })
    }

    /// The single cylinder `[w]`.
    pub fn cylinder(a: &TransitionMatrix, w: &[Symbol]) -> Result<Hole> {
        Hole::new(a, [Word(w.to_vec())])
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Sorted, without duplicates.
    pub fn words(&self) -> &[Vec<Symbol>] {
        &self.words
    }

    pub fn word_strings(&self) -> Vec<String> {
        self.words.iter().map(|w| word_string(w)).collect()
    }

    /// Whether points starting with `x` lie in the hole (`x` needs at least
    /// `depth` symbols).
    pub fn contains(&self, x: &[Symbol]) -> bool {
        x.len() >= self.depth && self.words.binary_search_by(|w| w[..].cmp(&x[..self.depth])).is_ok()
    }

    pub fn measure(&self, mu: &MarkovGibbsMeasure) -> f64 {
        self.words.iter().map(|w| mu.cylinder_measure(w)).sum()
    }
}

/// Survivor log-measures `K(1), ..., K(k_max)`; `-inf` once nothing
/// survives.
pub fn survivor_curve(mu: &MarkovGibbsMeasure, hole: &Hole, k_max: usize) -> Result<Vec<f64>> {
    let (mu, alive) = open_chain(mu, hole)?;
    Ok(masked_survivor(mu.stationary(), mu.transitions(), &alive, k_max))
}

/// `log P(X_0, ..., X_{k-1} all alive)` for `k = 1..=k_max`, for the chain
/// `q` started from `init`.
pub(crate) fn masked_survivor(init: &[f64], q: &Csr, alive: &[bool], k_max: usize) -> Vec<f64> {
    let mut v: Vec<f64> = init.iter().zip(alive).map(|(&p, &a)| if a { p } else { 0.0 }).collect();
    let mut log_mass = f64::NEG_INFINITY;
    let mut out = Vec::with_capacity(k_max);
    let mut next = vec![0.0; v.len()];
    for k in 1..=k_max {
        if k == 1 {
            let total: f64 = v.iter().sum();
            if total > 0.0 {
                log_mass = total.ln();
                v.iter_mut().for_each(|x| *x /= total);
            }
        } else if log_mass > f64::NEG_INFINITY {
            // Mass that falls into the hole at this step, computed directly so
            // that the curve is monotone and small leaks are not cancelled.
            q.vec_mul(&v, &mut next);
            let mut dead = 0.0;
            for (x, &a) in next.iter_mut().zip(alive) {
                if !a {
                    dead += *x;
                    *x = 0.0;
                }
            }
            let total: f64 = next.iter().sum();
            if total <= 0.0 || dead >= 1.0 {
                log_mass = f64::NEG_INFINITY;
            } else {
                log_mass += (-dead).ln_1p();
                next.iter_mut().for_each(|x| *x /= total);
                std::mem::swap(&mut v, &mut next);
            }
        }
        out.push(log_mass);
    }
    out
}

/// `K(k)` for a single step count.
pub fn survivor_log_measure(mu: &MarkovGibbsMeasure, hole: &Hole, k: usize) -> Result<f64> {
    assert!(k >= 1, "k must be positive");
    Ok(*survivor_curve(mu, hole, k)?.last().expect("k >= 1"))
}

/// The equilibrium chain lifted to blocks that resolve the hole, and the mask
/// of blocks outside it.
fn open_chain(mu: &MarkovGibbsMeasure, hole: &Hole) -> Result<(MarkovGibbsMeasure, Vec<bool>)> {
    if mu.base().size() == 0 || hole.words.iter().any(|w| !mu.base().is_admissible(w)) {
        return Err(Error::InvalidHole("hole does not belong to this shift".into()));
    }
    let lifted = mu.lift(mu.depth().max(hole.depth))?;
    let alive = lifted.space().words().map(|w| !hole.contains(w)).collect();
    Ok((lifted, alive))
}

#[derive(Clone, Debug)]
pub struct EscapeResult {
    /// `K(1), K(2), ...`
    pub survivor_log_measures: Vec<f64>,
    /// `R = P - log lambda_open`.
    pub rate: f64,
    /// Leading eigenvalue of the transfer matrix with the hole rows removed.
    pub open_eigenvalue: f64,
    /// Probability lost per step by the quasi-stationary distribution.
    pub leak: f64,
}

pub fn escape_rate_discrete(mu: &MarkovGibbsMeasure, hole: &Hole) -> Result<EscapeResult> {
    escape_rate_discrete_with(mu, hole, DEFAULT_DIAGNOSTIC_STEPS)
}

/// As [`escape_rate_discrete`], keeping `steps` points of the survivor curve.
pub fn escape_rate_discrete_with(mu: &MarkovGibbsMeasure, hole: &Hole, steps: usize) -> Result<EscapeResult> {
    let (lifted, alive) = open_chain(mu, hole)?;
    let spec = open_spectrum(lifted.transitions(), &alive, PerronOptions::default())?;
    let survivor_log_measures = if steps == 0 {
        Vec::new()
    } else {
        survivor_curve(mu, hole, steps)?
    };
    Ok(EscapeResult {
        survivor_log_measures,
        rate: spec.rate,
        open_eigenvalue: mu.pressure().exp() * spec.eigenvalue,
        leak: spec.leak,
    })
}

/// Holes `I_n` shrinking to a target point, with the constants of the nested
/// condition.
#[derive(Clone, Debug)]
pub struct NestedHoleSequence {
    pub target: Point,
    pub n_min: usize,
    /// `holes[i]` is `I_{n_min + i}`.
    pub holes: Vec<Hole>,
    /// `l_n`, indexed like `holes`.
    pub l: Vec<usize>,
    pub c: f64,
    pub rho: f64,
    pub kappa: f64,
}

impl NestedHoleSequence {
    pub fn n_range(&self) -> RangeInclusive<usize> {
        self.n_min..=self.n_min + self.holes.len() - 1
    }

    pub fn hole(&self, n: usize) -> &Hole {
        &self.holes[n - self.n_min]
    }
}

/// `I_n = [z]_n` for every `n` in the range, with `l_n = n`, `kappa = 1/2`,
/// `rho = max mu(I_n)^(1/n)` and the smallest `c` that goes with it.
pub fn make_nested_cylinders(
    z: &Point,
    n_range: RangeInclusive<usize>,
    mu: &MarkovGibbsMeasure,
) -> Result<NestedHoleSequence> {
    let (n_min, n_max) = (*n_range.start(), *n_range.end());
    assert!(n_min >= 1 && n_min <= n_max, "bad hole range");
    let a = mu.base();
    let prefix = z.prefix(n_max)?;
    let holes = n_range
        .clone()
        .map(|n| Hole::cylinder(a, &prefix[..n]))
        .collect::<Result<Vec<_>>>()?;
    let measures: Vec<f64> = holes.iter().map(|h| h.measure(mu)).collect();
    // Fitted against the whole cylinder rather than step to step: consecutive
    // ratios can equal 1 when a symbol has a forced successor.
    let rho = n_range
        .clone()
        .zip(&measures)
        .map(|(n, m)| m.powf(1.0 / n as f64))
        .fold(0.0, f64::max)
        + RHO_SLACK;
    let c = n_range
        .clone()
        .zip(&measures)
        .map(|(n, m)| m / rho.powi(n as i32))
        .fold(0.0, f64::max)
        * (1.0 + RHO_SLACK);
    Ok(NestedHoleSequence {
        target: z.clone(),
        n_min,
        l: n_range.collect(),
        holes,
        c,
        rho,
        kappa: 0.5,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum ItemStatus {
    Pass,
    /// First (or, for item 5, last) index at which the item fails.
    Fail {
        n: usize,
        detail: String,
    },
    NotApplicable,
}

impl ItemStatus {
    pub fn passed(&self) -> bool {
        !matches!(self, ItemStatus::Fail { .. })
    }
}

/// Outcome of the five nested-condition checks, `items[i]` for item `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NestedReport {
    pub items: [ItemStatus; 5],
}

impl NestedReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(ItemStatus::passed)
    }

    /// Item numbers (1-based) that fail.
    pub fn failing(&self) -> Vec<usize> {
        (1..=5).filter(|&i| !self.items[i - 1].passed()).collect()
    }
}

fn fail(n: usize, detail: String) -> ItemStatus {
    ItemStatus::Fail { n, detail }
}

/// Checks the five nested conditions on the stored range.
///
/// Set inclusions are decided on words: a union of `(n+1)`-cylinders lies in
/// a union of `n`-cylinders iff every longer word has its `n`-prefix in the
/// shorter set. Item 5 is eventual: it passes when it holds from some `n_0`
/// through the end of the range.
pub fn validate_nested(seq: &NestedHoleSequence, mu: &MarkovGibbsMeasure) -> Result<NestedReport> {
    let a = mu.base();
    let n_max = *seq.n_range().end();
    let z = seq.target.prefix(n_max.max(seq.l.iter().copied().max().unwrap_or(0)))?;

    let item1 = seq
        .n_range()
        .find(|&n| seq.hole(n).depth() != n)
        .map_or(ItemStatus::Pass, |n| {
            fail(n, format!("I_{n} has depth {}", seq.hole(n).depth()))
        });

    let mut item2 = ItemStatus::Pass;
    for n in seq.n_range() {
        let h = seq.hole(n);
        if h.depth() != n || !h.contains(&z[..n]) {
            item2 = fail(n, format!("target not in I_{n}"));
            break;
        }
        if n > seq.n_min {
            let prev = seq.hole(n - 1);
            if let Some(w) = h.words().iter().find(|w| !prev.contains(w)) {
                item2 = fail(n, format!("{} in I_{n} but not in I_{}", word_string(w), n - 1));
                break;
            }
        }
    }

    let item3 = if !(seq.rho > 0.0 && seq.rho < 1.0) {
        fail(seq.n_min, format!("rho = {} not in (0,1)", seq.rho))
    } else {
        seq.n_range()
            .find(|&n| seq.hole(n).measure(mu) > seq.c * seq.rho.powi(n as i32))
            .map_or(ItemStatus::Pass, |n| {
                fail(
                    n,
                    format!(
                        "mu(I_{n}) = {:e} > c rho^n = {:e}",
                        seq.hole(n).measure(mu),
                        seq.c * seq.rho.powi(n as i32)
                    ),
                )
            })
    };

    let mut item4 = ItemStatus::Pass;
    for n in seq.n_range() {
        let l = seq.l[n - seq.n_min];
        let ratio = l as f64 / n as f64;
        if !(seq.kappa < ratio && ratio <= 1.0) {
            item4 = fail(n, format!("l_n / n = {ratio} outside (kappa, 1]"));
            break;
        }
        if let Some(w) = seq.hole(n).words().iter().find(|w| w[..l] != z[..l]) {
            item4 = fail(n, format!("{} not in [z]_{l}", word_string(w)));
            break;
        }
    }

    let item5 = match seq.target.as_periodic() {
        None => ItemStatus::NotApplicable,
        Some(zp) => {
            let p = zp.prime_period();
            let head = zp.prefix(p);
            let last_fail = seq.n_range().rev().find(|&n| {
                let h = seq.hole(n);
                h.words().iter().any(|u| {
                    let mut x = head.clone();
                    x.extend_from_slice(u);
                    a.is_admissible(&x) && !h.contains(&x)
                })
            });
            match last_fail {
                Some(n) if n == n_max => fail(n, format!("sigma^-{p}(I_{n}) & [z]_{p} not in I_{n}")),
                _ => ItemStatus::Pass,
            }
        }
    };

    Ok(NestedReport {
        items: [item1, item2, item3, item4, item5],
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioPoint {
    pub n: usize,
    pub hole_measure: f64,
    pub rate: f64,
    /// `R_n / mu(I_n)`
    pub ratio: f64,
    pub gamma: f64,
}

/// `R(I_n) / mu(I_n)` for every hole of the sequence, next to `gamma(z)`.
pub fn discrete_ratio_curve(mu: &MarkovGibbsMeasure, seq: &NestedHoleSequence) -> Result<Vec<RatioPoint>> {
    let g = gamma(&seq.target, mu.potential(), mu.pressure())?;
    seq.n_range()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|n| {
            let hole = seq.hole(n);
            let hole_measure = hole.measure(mu);
            let rate = escape_rate_discrete_with(mu, hole, 0)?.rate;
            Ok(RatioPoint {
                n,
                hole_measure,
                rate,
                ratio: rate / hole_measure,
                gamma: g,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{bernoulli_potential, build_transfer, equilibrium_state};
    use crate::sft::{enumerate_words, LocallyConstantFunction, PeriodicPoint};
    use crate::spectral::{perron, Side};

    fn fair() -> MarkovGibbsMeasure {
        let (a, phi) = bernoulli_potential(&[0.5, 0.5]).unwrap();
        equilibrium_state(&a, &phi).unwrap()
    }

    fn hole(mu: &MarkovGibbsMeasure, words: &[&str]) -> Hole {
        Hole::new(mu.base(), words.iter().map(|w| Word::parse(w).unwrap())).unwrap()
    }

    /// Survivor mass by summing over every surviving `(k + n - 1)`-word.
    fn brute(mu: &MarkovGibbsMeasure, h: &Hole, k: usize) -> f64 {
        let len = k + h.depth() - 1;
        enumerate_words(mu.base(), len)
            .unwrap()
            .iter()
            .filter(|w| (0..k).all(|i| !h.contains(&w.0[i..])))
            .map(|w| mu.cylinder_measure(&w.0))
            .sum::<f64>()
            .ln()
    }

    #[test]
    fn hole_validation() {
        let mu = fair();
        let a = mu.base();
        assert!(Hole::new(a, []).is_err());
        assert!(Hole::new(a, [Word::parse("1").unwrap(), Word::parse("2").unwrap()]).is_err());
        assert!(Hole::new(a, [Word::parse("1").unwrap(), Word::parse("12").unwrap()]).is_err());
        let gm = TransitionMatrix::golden_mean();
        assert!(matches!(
            Hole::new(&gm, [Word::parse("22").unwrap()]),
            Err(Error::Inadmissible(_))
        ));
        let h = hole(&mu, &["21", "12", "21"]);
        assert_eq!(h.word_strings(), ["12", "21"]);
        assert!(h.contains(&[1, 0, 0]) && !h.contains(&[0, 0, 1]));
    }

    #[test]
    fn survivor_examples() {
        let mu = fair();
        let k5 = survivor_log_measure(&mu, &hole(&mu, &["2"]), 5).unwrap();
        assert!((k5 - (0.5f64).powi(5).ln()).abs() < 1e-12);
        let k4 = survivor_log_measure(&mu, &hole(&mu, &["11"]), 4).unwrap();
        assert!((k4 - (13.0 / 32.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_enumeration() {
        let gm = TransitionMatrix::golden_mean();
        let phi = LocallyConstantFunction::from_fn(&gm, 2, 0.5, |x| 0.3 * x[0] as f64 - 0.2 * x[1] as f64).unwrap();
        let mu = equilibrium_state(&gm, &phi).unwrap();
        for words in [&["1"][..], &["11"], &["12", "21"], &["121"], &["111", "211"]] {
            let h = hole(&mu, words);
            let curve = survivor_curve(&mu, &h, 9).unwrap();
            for (k, got) in curve.iter().enumerate() {
                let want = brute(&mu, &h, k + 1);
                let same = (got == &want) || (got - want).abs() < 1e-10;
                assert!(same, "{words:?} k={} {got} {want}", k + 1);
            }
        }
    }

    #[test]
    fn rates() {
        let mu = fair();
        let r = escape_rate_discrete(&mu, &hole(&mu, &["2"])).unwrap();
        assert!((r.rate - 2f64.ln()).abs() < 1e-12);
        let r = escape_rate_discrete(&mu, &hole(&mu, &["11"])).unwrap();
        let want = 2f64.ln() - (0.5 * (1.0 + 5f64.sqrt())).ln();
        assert!((r.rate - want).abs() < 1e-12, "{}", r.rate);
        let k = &r.survivor_log_measures;
        assert!(k.windows(2).all(|w| w[1] <= w[0]));
        let slope = (k[199] - k[399]) / 200.0;
        assert!((slope - want).abs() < 0.05 * want);
    }

    #[test]
    fn open_eigenvalue_of_weighted_matrix() {
        // Second route: mask the hole rows of the weighted transfer matrix
        // directly and take its Perron root.
        let gm = TransitionMatrix::golden_mean();
        let phi = LocallyConstantFunction::from_fn(&gm, 1, 0.5, |x| [0.4, -0.7][x[0] as usize]).unwrap();
        let mu = equilibrium_state(&gm, &phi).unwrap().lift(3).unwrap();
        let h = hole(&mu, &["121"]);
        let t = build_transfer(mu.base(), &phi.lift(mu.base(), 3).unwrap()).unwrap();
        let space = t.space();
        let alive: Vec<bool> = space.words().map(|w| !h.contains(w)).collect();
        let lambda = t
            .matrix()
            .cyclic_components(&alive)
            .iter()
            .map(|c| {
                let sub: Csr = t.matrix().restrict(c);
                perron(&sub, Side::Right, PerronOptions::default()).unwrap().value
            })
            .fold(0.0, f64::max);
        let r = escape_rate_discrete(&mu, &h).unwrap();
        assert!((r.open_eigenvalue - lambda).abs() < 1e-10);
        assert!((r.rate - (mu.pressure() - lambda.ln())).abs() < 1e-10);
    }

    #[test]
    fn full_escape() {
        let mu = fair();
        let h = hole(&mu, &["11", "22", "12"]);
        assert!(matches!(escape_rate_discrete(&mu, &h), Err(Error::FullEscape)));
        assert_eq!(survivor_log_measure(&mu, &h, 3).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn nested_generation_passes() {
        let mu = fair();
        let z = Point::periodic(&PeriodicPoint::new(mu.base(), &Word::parse("1").unwrap()).unwrap());
        let seq = make_nested_cylinders(&z, 1..=12, &mu).unwrap();
        assert_eq!(seq.hole(4).word_strings(), ["1111"]);
        assert!((seq.rho - 0.5).abs() < 1e-8);
        let report = validate_nested(&seq, &mu).unwrap();
        assert!(report.all_pass(), "{report:?}");
        let aperiodic = Point::aperiodic(vec![0, 1, 1, 0, 1, 0, 0, 0, 1]);
        let seq = make_nested_cylinders(&aperiodic, 2..=9, &mu).unwrap();
        let report = validate_nested(&seq, &mu).unwrap();
        assert_eq!(report.items[4], ItemStatus::NotApplicable);
        assert!(report.all_pass());
        // After a 2 the golden-mean shift must read 1, so mu([z]_n) stalls
        // every other step along (12)^inf.
        let gm = TransitionMatrix::golden_mean();
        let mu = equilibrium_state(&gm, &LocallyConstantFunction::constant(&gm, 0.0).unwrap()).unwrap();
        let z = Point::periodic(&PeriodicPoint::new(&gm, &Word::parse("12").unwrap()).unwrap());
        let seq = make_nested_cylinders(&z, 2..=10, &mu).unwrap();
        assert!(seq.rho < 1.0);
        assert!(validate_nested(&seq, &mu).unwrap().all_pass());
    }

    #[test]
    fn ratio_curve_approaches_gamma() {
        let mu = fair();
        let z = Point::periodic(&PeriodicPoint::new(mu.base(), &Word::parse("12").unwrap()).unwrap());
        let seq = make_nested_cylinders(&z, 6..=10, &mu).unwrap();
        let curve = discrete_ratio_curve(&mu, &seq).unwrap();
        assert_eq!(curve.len(), 5);
        assert!((curve[0].gamma - 0.75).abs() < 1e-12);
        assert!((curve[4].ratio - 0.75).abs() < 0.05);
    }
}
