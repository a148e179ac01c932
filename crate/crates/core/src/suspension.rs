//! Special semi-flows and their discretization.
//!
//! The flow under a roof `f > 1` moves points `(x, s)` upward at unit speed
//! and sends `(x, f(x))` to `(sigma x, 0)`. Replacing `f` by a step roof that
//! is constant on `m`-cylinders and a multiple of `delta` turns the time-`delta`
//! map into a subshift of finite type on pairs `(block, level)`:
//!
//! - `(w, k) -> (w, k + 1)` while `k + 1 < f*(w) / delta`;
//! - `(w, top) -> (w', 0)` for every block `w'` that continues `w` by one
//!   shift.
//!
//! Each state carries mass `delta mu([w]) / int f* dmu`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::MarkovGibbsMeasure;
use crate::sft::{word_string, BlockSpace, LocallyConstantFunction, Point, Symbol, TransitionMatrix};
use crate::spectral::Csr;

/// Margin below `min f` used for `epsilon`.
pub const EPSILON_MARGIN: f64 = 1e-9;
/// Slack kept from the strict inequalities when choosing `delta`.
pub const DELTA_SLACK: f64 = 1e-9;
/// Smallest `delta` the chooser will return.
pub const MIN_DELTA: f64 = 1e-6;
/// Largest block depth the chooser will try.
pub const MAX_AUTO_DEPTH: usize = 24;
/// Guard added before taking floors of `value / delta`.
pub const FLOOR_GUARD: f64 = 1e-9;

/// A roof function, bounded below by 1.
#[derive(Clone, Debug)]
pub struct RoofFunction {
    f: LocallyConstantFunction,
}

impl RoofFunction {
    pub fn new(f: LocallyConstantFunction) -> Result<Self> {
        if f.min_value() <= 1.0 {
            return Err(Error::InvalidFunction(format!(
                "roof minimum {} is not above 1",
                f.min_value()
            )));
        }
        Ok(RoofFunction { f })
    }

    pub fn function(&self) -> &LocallyConstantFunction {
        &self.f
    }

    pub fn depth(&self) -> usize {
        self.f.depth()
    }

    pub fn min_value(&self) -> f64 {
        self.f.min_value()
    }

    pub fn max_value(&self) -> f64 {
        self.f.max_value()
    }

    /// `epsilon = min f - EPSILON_MARGIN`; `delta` must stay below `epsilon / 3`.
    pub fn epsilon(&self) -> f64 {
        self.f.min_value() - EPSILON_MARGIN
    }

    pub fn eval(&self, x: &[Symbol]) -> f64 {
        self.f.eval(x)
    }
}

/// `eta(m) = |f|_theta theta^m`, a bound on the oscillation of `f` inside
/// `m`-cylinders.
pub fn eta(f: &LocallyConstantFunction, m: usize) -> f64 {
    f.lipschitz_seminorm() * f.theta().powi(m as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiscretizationParams {
    pub m: usize,
    pub delta: f64,
    pub eta_m: f64,
}

impl DiscretizationParams {
    /// Checks `2 delta + eta(m) < int f / 2` and `delta < epsilon / 3`.
    pub fn new(f: &RoofFunction, mu: &MarkovGibbsMeasure, m: usize, delta: f64) -> Result<Self> {
        if m < f.depth() {
            return Err(Error::Infeasible(format!(
                "m = {m} is below the roof depth {}",
                f.depth()
            )));
        }
        if !(delta > 0.0) {
            return Err(Error::Infeasible(format!("delta = {delta} is not positive")));
        }
        let eta_m = eta(f.function(), m);
        let half = 0.5 * mu.integrate(f.function());
        if 2.0 * delta + eta_m >= half {
            return Err(Error::Infeasible(format!(
                "2 delta + eta(m) = {} is not below half the roof integral {half}",
                2.0 * delta + eta_m
            )));
        }
        if delta >= f.epsilon() / 3.0 {
            return Err(Error::Infeasible(format!(
                "delta = {delta} is not below epsilon / 3 = {}",
                f.epsilon() / 3.0
            )));
        }
        Ok(DiscretizationParams { m, delta, eta_m })
    }
}

/// The largest admissible `delta <= delta_request` and the smallest `m`
/// that go with it.
pub fn choose_discretization(
    f: &RoofFunction,
    mu: &MarkovGibbsMeasure,
    delta_request: f64,
) -> Result<DiscretizationParams> {
    assert!(delta_request > 0.0, "delta request must be positive");
    let half = 0.5 * mu.integrate(f.function());
    let delta = delta_request.min(f.epsilon() / 3.0 - DELTA_SLACK);
    let depths = f.depth()..=f.depth().max(MAX_AUTO_DEPTH);
    let ok = |m: usize, d: f64| 2.0 * d + eta(f.function(), m) < half;
    if let Some(m) = depths.clone().find(|&m| ok(m, delta)) {
        return Ok(DiscretizationParams {
            m,
            delta,
            eta_m: eta(f.function(), m),
        });
    }
    let m = *depths.end();
    let shrunk = (half - eta(f.function(), m)) / 2.0 - DELTA_SLACK;
    if shrunk < MIN_DELTA {
        return Err(Error::Infeasible(format!(
            "half the roof integral {half} leaves no room for delta >= {MIN_DELTA} (eta = {})",
            eta(f.function(), m)
        )));
    }
    let m = depths
        .clone()
        .find(|&m| ok(m, shrunk))
        .expect("feasible at the largest depth");
    Ok(DiscretizationParams {
        m,
        delta: shrunk,
        eta_m: eta(f.function(), m),
    })
}

/// A roof that is constant on `m`-cylinders and takes values in `delta N`.
#[derive(Clone, Debug)]
pub struct StepRoof {
    space: BlockSpace,
    levels: Vec<usize>,
    delta: f64,
}

impl StepRoof {
    /// `levels[i]` is the number of `delta`-steps above the `i`-th `m`-word.
    pub fn new(a: &TransitionMatrix, m: usize, delta: f64, levels: Vec<usize>) -> Result<Self> {
        let space = BlockSpace::new(a, m)?;
        if levels.len() != space.len() {
            return Err(Error::InvalidFunction(format!(
                "{} levels for {} words",
                levels.len(),
                space.len()
            )));
        }
        if let Some(i) = levels.iter().position(|&l| l == 0) {
            return Err(Error::NonPositiveLower(word_string(space.word(i))));
        }
        Ok(StepRoof { space, levels, delta })
    }

    /// Reads a function whose values are multiples of `delta` (up to `1e-9`
    /// in units of `delta`).
    pub fn from_function(f: &LocallyConstantFunction, delta: f64) -> Result<Self> {
        let levels = f
            .values()
            .iter()
            .zip(f.space().words())
            .map(|(&v, w)| {
                let x = v / delta;
                let l = x.round();
                if (x - l).abs() > 1e-9 || l < 1.0 {
                    Err(Error::InvalidFunction(format!(
                        "value {v} on {} is not a positive multiple of {delta}",
                        word_string(w)
                    )))
                } else {
                    Ok(l as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StepRoof {
            space: f.space().clone(),
            levels,
            delta,
        })
    }

    pub fn depth(&self) -> usize {
        self.space.depth()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn space(&self) -> &BlockSpace {
        &self.space
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    /// Number of levels above any point starting with `x`.
    pub fn level_count(&self, x: &[Symbol]) -> usize {
        let i = self
            .space
            .index_of(&x[..self.depth()])
            .unwrap_or_else(|| panic!("{} is not admissible", word_string(x)));
        self.levels[i]
    }

    pub fn value(&self, x: &[Symbol]) -> f64 {
        self.level_count(x) as f64 * self.delta
    }

    pub fn to_function(&self, theta: f64) -> LocallyConstantFunction {
        LocallyConstantFunction::from_parts(
            self.space.clone(),
            self.levels.iter().map(|&l| l as f64 * self.delta).collect(),
            theta,
        )
    }
}

/// `(inf, sup)` of `f` over each `m`-cylinder.
fn cylinder_extremes(
    a: &TransitionMatrix,
    f: &LocallyConstantFunction,
    m: usize,
) -> Result<(BlockSpace, Vec<(f64, f64)>)> {
    let space = BlockSpace::new(a, m)?;
    let d = f.depth();
    let ext = space
        .words()
        .map(|w| {
            if m >= d {
                let v = f.eval(w);
                (v, v)
            } else {
                f.values()[f.space().with_prefix(w)]
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    })
            }
        })
        .collect();
    Ok((space, ext))
}

/// `fbar(w) = (floor(sup_[w] f / delta) + 2) delta` on `m`-cylinders.
pub fn roof_upper(a: &TransitionMatrix, f: &RoofFunction, m: usize, delta: f64) -> Result<StepRoof> {
    let (space, ext) = cylinder_extremes(a, f.function(), m)?;
    let levels = ext
        .iter()
        .map(|&(_, hi)| (hi / delta + FLOOR_GUARD).floor() as usize + 2)
        .collect();
    Ok(StepRoof { space, levels, delta })
}

/// `f_(w) = (floor(inf_[w] f / delta) - 2) delta` on `m`-cylinders.
pub fn roof_lower(a: &TransitionMatrix, f: &RoofFunction, m: usize, delta: f64) -> Result<StepRoof> {
    let (space, ext) = cylinder_extremes(a, f.function(), m)?;
    let levels = ext
        .iter()
        .zip(space.words())
        .map(|(&(lo, _), w)| {
            let l = (lo / delta + FLOOR_GUARD).floor() as i64 - 2;
            if l <= 0 {
                Err(Error::NonPositiveLower(word_string(w)))
            } else {
                Ok(l as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StepRoof { space, levels, delta })
}

/// The discretized suspension: states `(block, level)` on blocks of a fixed
/// depth `D >= depth(roof)`.
#[derive(Clone, Debug)]
pub struct SuspensionSFT {
    space: BlockSpace,
    heights: Vec<usize>,
    offsets: Vec<usize>,
    owner: Vec<usize>,
    delta: f64,
    period: usize,
}

/// Builds the tower over `D`-blocks, `D = block_depth.max(depth(roof))`.
///
/// The result is always irreducible; its period is recorded rather than
/// rejected, because constant or commensurate roofs produce periodic towers.
pub fn build_suspension_sft(a: &TransitionMatrix, roof: &StepRoof, block_depth: usize) -> Result<SuspensionSFT> {
    let depth = block_depth.max(roof.depth());
    let space = BlockSpace::new(a, depth)?;
    let heights: Vec<usize> = space.words().map(|w| roof.level_count(w)).collect();
    let mut offsets = Vec::with_capacity(heights.len() + 1);
    let mut owner = Vec::new();
    offsets.push(0);
    for (i, &h) in heights.iter().enumerate() {
        offsets.push(offsets[i] + h);
        owner.extend(std::iter::repeat_n(i, h));
    }
    let mut s = SuspensionSFT {
        space,
        heights,
        offsets,
        owner,
        delta: roof.delta(),
        period: 0,
    };
    s.period = s.support().period()?;
    Ok(s)
}

impl SuspensionSFT {
    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    /// Block depth `D` of the base words.
    pub fn depth(&self) -> usize {
        self.space.depth()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Period of the transition graph (1 when primitive).
    pub fn period(&self) -> usize {
        self.period
    }

    pub fn space(&self) -> &BlockSpace {
        &self.space
    }

    /// Levels above the `i`-th block.
    pub fn heights(&self) -> &[usize] {
        &self.heights
    }

    pub fn state_index(&self, block: usize, level: usize) -> usize {
        assert!(level < self.heights[block]);
        self.offsets[block] + level
    }

    /// `(block index, level)` of a state.
    pub fn state(&self, s: usize) -> (usize, usize) {
        let b = self.owner[s];
        (b, s - self.offsets[b])
    }

    pub fn block_word(&self, s: usize) -> &[Symbol] {
        self.space.word(self.owner[s])
    }

    pub fn level(&self, s: usize) -> usize {
        s - self.offsets[self.owner[s]]
    }

    pub fn successors(&self, s: usize) -> Vec<usize> {
        let (b, k) = self.state(s);
        if k + 1 < self.heights[b] {
            vec![s + 1]
        } else {
            self.space.successors(b).iter().map(|&c| self.offsets[c]).collect()
        }
    }

    pub fn is_edge(&self, s: usize, t: usize) -> bool {
        self.successors(s).contains(&t)
    }

    /// 0/1 support as a sparse matrix.
    pub fn support(&self) -> Csr {
        Csr::from_rows(
            self.len(),
            (0..self.len()).map(|s| self.successors(s).into_iter().map(|t| (t, 1.0))),
        )
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .flat_map(|s| self.successors(s).into_iter().map(move |t| (s, t)))
            .collect()
    }

    /// Base word read off a suspension word, and the number `#w` of base
    /// symbols it determines: the block of the first state, then the last
    /// symbol of every later state at level 0.
    pub fn pi_tilde(&self, word: &[usize]) -> Result<(Vec<Symbol>, usize)> {
        let Some(&first) = word.first() else {
            return Err(Error::Inadmissible("empty suspension word".into()));
        };
        if let Some(w) = word
            .windows(2)
            .find(|w| w[1] >= self.len() || !self.is_edge(w[0], w[1]))
        {
            return Err(Error::Inadmissible(format!("suspension edge {} -> {}", w[0], w[1])));
        }
        if first >= self.len() {
            return Err(Error::Inadmissible(format!("state {first}")));
        }
        let mut base = self.block_word(first).to_vec();
        let mut count = 1;
        for &s in &word[1..] {
            if self.level(s) == 0 {
                base.push(*self.block_word(s).last().expect("nonempty block"));
                count += 1;
            }
        }
        Ok((base, count))
    }

    /// All admissible suspension words of length `len`, lexicographic in
    /// state indices.
    pub fn words(&self, len: usize) -> Vec<Vec<usize>> {
        assert!(len >= 1);
        let mut out = Vec::new();
        let mut stack: Vec<usize> = Vec::with_capacity(len);
        fn rec(s: &SuspensionSFT, len: usize, stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if stack.len() == len {
                out.push(stack.clone());
                return;
            }
            for t in s.successors(*stack.last().expect("nonempty")) {
                stack.push(t);
                rec(s, len, stack, out);
                stack.pop();
            }
        }
        for s in 0..self.len() {
            stack.push(s);
            rec(self, len, &mut stack, &mut out);
            stack.pop();
        }
        out
    }
}

/// Cylinder measures on a discretized suspension.
pub trait SuspensionCylinders {
    fn sft(&self) -> &SuspensionSFT;
    fn state_measure(&self, s: usize) -> f64;
    fn cylinder_measure(&self, word: &[usize]) -> f64;
}

/// The invariant measure `delta mu([w]) / int f* dmu` and its extension to
/// suspension cylinders.
#[derive(Clone, Debug)]
pub struct SuspensionMeasure {
    sft: SuspensionSFT,
    mu: MarkovGibbsMeasure,
    lifted: MarkovGibbsMeasure,
    /// `sum_w h(w) mu([w]) = int f* dmu / delta`
    normalizer: f64,
    chain: Csr,
}

pub fn mu_tilde(mu: &MarkovGibbsMeasure, sft: &SuspensionSFT) -> Result<SuspensionMeasure> {
    let lifted = mu.lift(sft.depth().max(mu.depth()))?;
    if lifted.depth() != sft.depth() {
        return Err(Error::DepthMismatch {
            hole: mu.depth(),
            block: sft.depth(),
        });
    }
    let normalizer: f64 = sft
        .heights
        .iter()
        .zip(lifted.stationary())
        .map(|(&h, &p)| h as f64 * p)
        .sum();
    let q = lifted.transitions();
    let chain = Csr::from_rows(
        sft.len(),
        (0..sft.len()).map(|s| {
            let (b, k) = sft.state(s);
            if k + 1 < sft.heights[b] {
                vec![(s + 1, 1.0)]
            } else {
                q.row(b).map(|(c, p)| (sft.offsets[c], p)).collect()
            }
        }),
    );
    Ok(SuspensionMeasure {
        sft: sft.clone(),
        mu: mu.clone(),
        lifted,
        normalizer,
        chain,
    })
}

impl SuspensionMeasure {
    /// `int f* dmu`
    pub fn roof_integral(&self) -> f64 {
        self.normalizer * self.sft.delta
    }

    pub fn base(&self) -> &MarkovGibbsMeasure {
        &self.mu
    }

    /// Row-stochastic chain on suspension states whose stationary law is
    /// this measure.
    pub fn chain(&self) -> &Csr {
        &self.chain
    }

    pub fn state_measures(&self) -> Vec<f64> {
        (0..self.sft.len()).map(|s| self.state_measure(s)).collect()
    }

    /// Cylinder measure computed along the chain; agrees with
    /// [`SuspensionCylinders::cylinder_measure`], which goes through the base
    /// word instead.
    pub fn cylinder_measure_markov(&self, word: &[usize]) -> f64 {
        let mut p = self.state_measure(word[0]);
        for w in word.windows(2) {
            p *= self.chain.row(w[0]).find(|&(j, _)| j == w[1]).map_or(0.0, |e| e.1);
        }
        p
    }

    /// JSON-ready description of states, edges and state masses.
    pub fn export(&self) -> SuspensionExport {
        SuspensionExport {
            states: (0..self.sft.len())
                .map(|s| (word_string(self.sft.block_word(s)), self.sft.level(s)))
                .collect(),
            edges: self.sft.edges(),
            state_measure: self.state_measures(),
        }
    }
}

impl SuspensionCylinders for SuspensionMeasure {
    fn sft(&self) -> &SuspensionSFT {
        &self.sft
    }

    fn state_measure(&self, s: usize) -> f64 {
        self.lifted.stationary()[self.sft.owner[s]] / self.normalizer
    }

    fn cylinder_measure(&self, word: &[usize]) -> f64 {
        match self.sft.pi_tilde(word) {
            Ok((base, _)) => self.mu.cylinder_measure(&base) / self.normalizer,
            Err(_) => 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuspensionExport {
    pub states: Vec<(String, usize)>,
    pub edges: Vec<(usize, usize)>,
    pub state_measure: Vec<f64>,
}

/// Worst deviations in the three consistency conditions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub max_len: usize,
    /// `|sum_s nu(s) - 1|`
    pub total_mass_error: f64,
    /// `max |nu(w) - sum_s nu(w s)|`
    pub right_extension_error: f64,
    /// `max |nu(w) - sum_s nu(s w)|`
    pub left_extension_error: f64,
    pub tolerance: f64,
    pub cylinders_checked: usize,
}

impl InvarianceReport {
    pub fn total_mass_ok(&self) -> bool {
        self.total_mass_error <= self.tolerance
    }

    pub fn right_ok(&self) -> bool {
        self.right_extension_error <= self.tolerance
    }

    pub fn left_ok(&self) -> bool {
        self.left_extension_error <= self.tolerance
    }

    pub fn passed(&self) -> bool {
        self.total_mass_ok() && self.right_ok() && self.left_ok()
    }
}

pub const INVARIANCE_TOL: f64 = 1e-12;

/// Checks total mass 1 and that every cylinder of length `< max_len` is the
/// sum of its one-state extensions on the right and on the left.
pub fn verify_invariance<M: SuspensionCylinders + ?Sized>(nu: &M, max_len: usize) -> InvarianceReport {
    let sft = nu.sft();
    let n = sft.len();
    let total: f64 = (0..n).map(|s| nu.state_measure(s)).sum();
    let mut preds = vec![Vec::new(); n];
    for (s, t) in sft.edges() {
        preds[t].push(s);
    }
    let mut right = 0.0f64;
    let mut left = 0.0f64;
    let mut checked = 0;
    for len in 1..max_len {
        for w in sft.words(len) {
            let m = nu.cylinder_measure(&w);
            let mut ext = w.clone();
            ext.push(0);
            let r: f64 = sft
                .successors(*w.last().expect("nonempty"))
                .into_iter()
                .map(|t| {
                    *ext.last_mut().expect("nonempty") = t;
                    nu.cylinder_measure(&ext)
                })
                .sum();
            let mut ext = Vec::with_capacity(len + 1);
            let l: f64 = preds[w[0]]
                .iter()
                .map(|&s| {
                    ext.clear();
                    ext.push(s);
                    ext.extend_from_slice(&w);
                    nu.cylinder_measure(&ext)
                })
                .sum();
            right = right.max((m - r).abs());
            left = left.max((m - l).abs());
            checked += 1;
        }
    }
    InvarianceReport {
        max_len,
        total_mass_error: (total - 1.0).abs(),
        right_extension_error: right,
        left_extension_error: left,
        tolerance: INVARIANCE_TOL,
        cylinders_checked: checked,
    }
}

/// The potential `phi - P` on level-0 states and `0` above them; its pressure
/// on the suspension is zero and its equilibrium state is `mu_tilde`.
#[derive(Clone, Debug)]
pub struct InducedPotential {
    pub values: Vec<f64>,
}

impl InducedPotential {
    /// `V_n`: largest oscillation over suspension `n`-cylinders. The
    /// potential is read off the first state, so `V_n = 0` for `n >= 1`.
    pub fn variation(&self, sft: &SuspensionSFT, n: usize) -> f64 {
        if n == 0 {
            let (lo, hi) = self
                .values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            return hi - lo;
        }
        sft.words(n)
            .iter()
            .map(|w| {
                let v = self.values[w[0]];
                (v, v)
            })
            .fold(0.0, |acc: f64, (lo, hi)| acc.max(hi - lo))
    }

    pub fn birkhoff_sum(&self, word: &[usize]) -> f64 {
        word.iter().map(|&s| self.values[s]).sum()
    }
}

pub fn induced_potential(nu: &SuspensionMeasure) -> InducedPotential {
    let phi = nu.mu.potential();
    let p = nu.mu.pressure();
    let sft = &nu.sft;
    InducedPotential {
        values: (0..sft.len())
            .map(|s| {
                if sft.level(s) == 0 {
                    phi.eval(sft.block_word(s)) - p
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuspensionGibbsReport {
    pub max_len: usize,
    /// `min nu([w]) exp(-S_n phi~(w))` over the scan.
    pub c1_observed: f64,
    pub c2_observed: f64,
    /// `V_0, V_1, ..., V_max_len` of the induced potential.
    pub variations: Vec<f64>,
}

/// Observed Gibbs constants of `nu` for the induced potential (pressure 0) on
/// suspension cylinders up to length `max_len`.
pub fn certify_suspension_gibbs(nu: &SuspensionMeasure, max_len: usize) -> SuspensionGibbsReport {
    let phi = induced_potential(nu);
    let (mut c1, mut c2) = (f64::INFINITY, f64::NEG_INFINITY);
    for len in 1..=max_len {
        for w in nu.sft.words(len) {
            let r = nu.cylinder_measure(&w) * (-phi.birkhoff_sum(&w)).exp();
            c1 = c1.min(r);
            c2 = c2.max(r);
        }
    }
    SuspensionGibbsReport {
        max_len,
        c1_observed: c1,
        c2_observed: c2,
        variations: (0..=max_len).map(|n| phi.variation(&nu.sft, n)).collect(),
    }
}

/// A point `(x, s)` under the roof, `0 <= s < f(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowPoint {
    pub base: Point,
    pub height: f64,
}

/// `Phi^t (x, s)`, and the number of shifts applied on the way.
pub fn flow_map(f: &LocallyConstantFunction, p: &FlowPoint, t: f64) -> Result<(FlowPoint, usize)> {
    assert!(t >= 0.0, "flow time must be nonnegative");
    let d = f.depth();
    let mut s = p.height + t;
    let mut j = 0;
    let mut window = Vec::with_capacity(d);
    loop {
        window.clear();
        for i in j..j + d {
            window.push(p.base.symbol(i).ok_or(Error::PrefixExhausted(i))?);
        }
        let h = f.eval(&window);
        if s < h {
            break;
        }
        s -= h;
        j += 1;
    }
    Ok((
        FlowPoint {
            base: p.base.shifted(j)?,
            height: s,
        },
        j,
    ))
}

/// Draws points from `nu = mu x Leb / int f dmu`: the base from the
/// equilibrium chain, the height uniformly under the roof by rejection.
pub struct FlowSampler<'a> {
    mu: &'a MarkovGibbsMeasure,
    roof: &'a LocallyConstantFunction,
    horizon: usize,
    init_cdf: Vec<f64>,
    rng: ChaCha8Rng,
}

impl<'a> FlowSampler<'a> {
    /// `horizon` base symbols are drawn per point (at least enough to
    /// evaluate the roof).
    pub fn new(mu: &'a MarkovGibbsMeasure, roof: &'a LocallyConstantFunction, horizon: usize, rng: ChaCha8Rng) -> Self {
        let mut acc = 0.0;
        let init_cdf = mu
            .stationary()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        FlowSampler {
            mu,
            roof,
            horizon: horizon.max(roof.depth()).max(mu.depth()),
            init_cdf,
            rng,
        }
    }

    pub fn seeded(mu: &'a MarkovGibbsMeasure, roof: &'a LocallyConstantFunction, horizon: usize, seed: u64) -> Self {
        Self::new(mu, roof, horizon, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn base_word(&mut self) -> Vec<Symbol> {
        let space = self.mu.space();
        let total = *self.init_cdf.last().expect("nonempty");
        let u = self.rng.random::<f64>() * total;
        let mut b = self.init_cdf.partition_point(|&c| c <= u).min(space.len() - 1);
        let mut x = space.word(b).to_vec();
        let q = self.mu.transitions();
        while x.len() < self.horizon {
            let u = self.rng.random::<f64>();
            let mut acc = 0.0;
            let mut next = None;
            for (c, p) in q.row(b) {
                acc += p;
                next = Some(c);
                if u < acc {
                    break;
                }
            }
            b = next.expect("stochastic row");
            x.push(*space.word(b).last().expect("nonempty"));
        }
        x
    }

    /// Next sample; the base point carries `horizon` known symbols.
    pub fn sample(&mut self) -> FlowPoint {
        let top = self.roof.max_value();
        loop {
            let x = self.base_word();
            let s = self.rng.random::<f64>() * top;
            if s < self.roof.eval(&x) {
                return FlowPoint {
                    base: Point::aperiodic(x),
                    height: s,
                };
            }
        }
    }
}

/// One point from `nu`, drawn with a generator seeded by `seed`.
pub fn sample_flow_point(mu: &MarkovGibbsMeasure, f: &LocallyConstantFunction, seed: u64, horizon: usize) -> FlowPoint {
    FlowSampler::seeded(mu, f, horizon, seed).sample()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{bernoulli_potential, equilibrium_state};

    fn fair() -> MarkovGibbsMeasure {
        let (a, phi) = bernoulli_potential(&[0.5, 0.5]).unwrap();
        equilibrium_state(&a, &phi).unwrap()
    }

    fn roof(a: &TransitionMatrix, vals: &[f64]) -> RoofFunction {
        let v = vals.to_vec();
        RoofFunction::new(LocallyConstantFunction::from_fn(a, 1, 0.5, move |x| v[x[0] as usize]).unwrap()).unwrap()
    }

    #[test]
    fn roof_must_exceed_one() {
        let a = TransitionMatrix::full_shift(2).unwrap();
        assert!(RoofFunction::new(LocallyConstantFunction::constant(&a, 1.0).unwrap()).is_err());
    }

    #[test]
    fn eta_values() {
        let a = TransitionMatrix::full_shift(2).unwrap();
        // Depends on the second symbol, so it oscillates by 0.5 inside each
        // 1-cylinder.
        let f = LocallyConstantFunction::from_fn(&a, 2, 0.5, |x| [1.5, 2.0][x[1] as usize]).unwrap();
        assert!((f.lipschitz_seminorm() - 1.0).abs() < 1e-15);
        assert!((eta(&f, 4) - 0.0625).abs() < 1e-15);
        assert!(f.variation(1) <= eta(&f, 1));
        let c = LocallyConstantFunction::constant(&a, 2.0).unwrap();
        assert_eq!(eta(&c, 3), 0.0);
    }

    #[test]
    fn choose() {
        let mu = fair();
        let a = mu.base().clone();
        let two = roof(&a, &[2.0, 2.0]);
        let p = choose_discretization(&two, &mu, 0.25).unwrap();
        assert_eq!((p.m, p.delta), (1, 0.25));
        let p = choose_discretization(&two, &mu, 0.6).unwrap();
        assert!(p.delta < 0.5 && p.delta > 0.5 - 1e-8);
        assert!(2.0 * p.delta + p.eta_m < 1.0);
        // Integral 1.2 and a declared seminorm keeping eta(m) >= 0.7 up to
        // the largest depth tried.
        let bound = 0.7 / 0.5f64.powi(MAX_AUTO_DEPTH as i32);
        let f = LocallyConstantFunction::constant(&a, 1.2)
            .unwrap()
            .with_lipschitz_seminorm(bound)
            .unwrap();
        let f = RoofFunction::new(f).unwrap();
        assert!(matches!(choose_discretization(&f, &mu, 0.1), Err(Error::Infeasible(_))));
    }

    #[test]
    fn step_roofs() {
        let a = TransitionMatrix::full_shift(2).unwrap();
        let r = roof(&a, &[2.0, 2.0]);
        let up = roof_upper(&a, &r, 1, 0.1).unwrap();
        let lo = roof_lower(&a, &r, 1, 0.1).unwrap();
        assert_eq!(up.levels(), [22, 22]);
        assert_eq!(lo.levels(), [18, 18]);
        let r = roof(&a, &[2.05, 2.05]);
        assert_eq!(roof_upper(&a, &r, 1, 0.1).unwrap().levels(), [22, 22]);
        assert_eq!(roof_lower(&a, &r, 1, 0.1).unwrap().levels(), [18, 18]);
        let r = roof(&a, &[1.5, 2.0]);
        let up = roof_upper(&a, &r, 1, 0.25).unwrap();
        let lo = roof_lower(&a, &r, 1, 0.25).unwrap();
        assert_eq!(up.levels(), [8, 10]);
        assert_eq!(lo.levels(), [4, 6]);
        assert!(matches!(roof_lower(&a, &r, 1, 0.75), Err(Error::NonPositiveLower(_))));
    }

    #[test]
    fn towers() {
        let a = TransitionMatrix::full_shift(2).unwrap();
        let three = StepRoof::new(&a, 1, 0.1, vec![3, 3]).unwrap();
        let s = build_suspension_sft(&a, &three, 1).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(s.period(), 3);
        assert_eq!(s.successors(0), [1]);
        assert_eq!(s.successors(2), [0, 3]);

        let gm = TransitionMatrix::golden_mean();
        let two = StepRoof::new(&gm, 1, 0.1, vec![2, 2]).unwrap();
        let s = build_suspension_sft(&gm, &two, 1).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.successors(s.state_index(1, 1)), [s.state_index(0, 0)]);

        let mixed = StepRoof::new(&a, 1, 0.1, vec![2, 3]).unwrap();
        let s = build_suspension_sft(&a, &mixed, 1).unwrap();
        assert_eq!(s.len(), 5);
        let degrees: Vec<usize> = (0..5).map(|i| s.successors(i).len()).collect();
        assert_eq!(degrees, [1, 2, 1, 1, 2]);
        assert_eq!(s.period(), 1);
    }

    #[test]
    fn measures() {
        let mu = fair();
        let a = mu.base().clone();
        let s = build_suspension_sft(&a, &StepRoof::new(&a, 1, 0.1, vec![3, 3]).unwrap(), 1).unwrap();
        let nu = mu_tilde(&mu, &s).unwrap();
        for st in 0..6 {
            assert!((nu.state_measure(st) - 1.0 / 6.0).abs() < 1e-15);
        }
        let s = build_suspension_sft(&a, &StepRoof::new(&a, 1, 0.1, vec![2, 3]).unwrap(), 1).unwrap();
        let nu = mu_tilde(&mu, &s).unwrap();
        assert!((nu.roof_integral() - 0.25).abs() < 1e-15);
        assert!((nu.state_measure(0) - 0.2).abs() < 1e-15);
        for w in s.words(4) {
            assert!((nu.cylinder_measure(&w) - nu.cylinder_measure_markov(&w)).abs() < 1e-15);
        }
    }

    #[test]
    fn projection() {
        let a = TransitionMatrix::full_shift(2).unwrap();
        let s = build_suspension_sft(&a, &StepRoof::new(&a, 1, 0.1, vec![2, 3]).unwrap(), 1).unwrap();
        // states: (1,0)=0 (1,1)=1 (2,0)=2 (2,1)=3 (2,2)=4
        assert_eq!(s.pi_tilde(&[0, 1, 2]).unwrap(), (vec![0, 1], 2));
        assert_eq!(s.pi_tilde(&[4]).unwrap(), (vec![1], 1));
        assert_eq!(s.pi_tilde(&[0, 1, 0, 1]).unwrap(), (vec![0, 0], 2));
        assert!(matches!(s.pi_tilde(&[0, 2]), Err(Error::Inadmissible(_))));
    }

    struct Corrupted<'a>(&'a SuspensionMeasure);

    impl SuspensionCylinders for Corrupted<'_> {
        fn sft(&self) -> &SuspensionSFT {
            self.0.sft()
        }
        fn state_measure(&self, s: usize) -> f64 {
            self.0.state_measure(s) + if s == 0 { 1e-3 } else { 0.0 }
        }
        fn cylinder_measure(&self, w: &[usize]) -> f64 {
            if w.len() == 1 {
                self.state_measure(w[0])
            } else {
                self.0.cylinder_measure(w)
            }
        }
    }

    #[test]
    fn invariance() {
        let (a, phi) = bernoulli_potential(&[0.3, 0.7]).unwrap();
        let mu = equilibrium_state(&a, &phi).unwrap();
        for levels in [vec![3, 3], vec![2, 3]] {
            let s = build_suspension_sft(&a, &StepRoof::new(&a, 1, 0.1, levels).unwrap(), 2).unwrap();
            let nu = mu_tilde(&mu, &s).unwrap();
            let report = verify_invariance(&nu, 6);
            assert!(report.passed(), "{report:?}");
            let bad = verify_invariance(&Corrupted(&nu), 6);
            assert!(!bad.total_mass_ok());
        }
    }

    #[test]
    fn suspension_gibbs_constants() {
        let (a, phi) = bernoulli_potential(&[0.3, 0.7]).unwrap();
        let mu = equilibrium_state(&a, &phi).unwrap();
        let delta = 0.25;
        let s = build_suspension_sft(&a, &StepRoof::new(&a, 1, delta, vec![8, 8]).unwrap(), 1).unwrap();
        let nu = mu_tilde(&mu, &s).unwrap();
        let r = certify_suspension_gibbs(&nu, 6);
        let scale = delta / nu.roof_integral();
        assert!((r.c2_observed - scale).abs() < 1e-12);
        assert!((r.c1_observed - 0.3 * scale).abs() < 1e-12);
        assert!(r.variations.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn flow_examples() {
        let a = TransitionMatrix::full_shift(2).unwrap();
        let two = LocallyConstantFunction::constant(&a, 2.0).unwrap();
        let x = Point::aperiodic(vec![0, 1, 1, 0, 1]);
        let p = FlowPoint {
            base: x.clone(),
            height: 1.0,
        };
        let (q, shifts) = flow_map(&two, &p, 3.0).unwrap();
        assert_eq!(shifts, 2);
        assert_eq!(q.height, 0.0);
        assert_eq!(q.base.prefix(3).unwrap(), vec![1, 0, 1]);
        assert_eq!(flow_map(&two, &p, 0.0).unwrap(), (p.clone(), 0));
        let f = LocallyConstantFunction::from_fn(&a, 1, 0.5, |x| [1.5, 2.0][x[0] as usize]).unwrap();
        let p = FlowPoint {
            base: Point::aperiodic(vec![0, 1, 0]),
            height: 1.0,
        };
        let (q, shifts) = flow_map(&f, &p, 1.0).unwrap();
        assert_eq!(shifts, 1);
        assert!((q.height - 0.5).abs() < 1e-15);
        assert!(matches!(flow_map(&f, &p, 10.0), Err(Error::PrefixExhausted(_))));
    }

    #[test]
    fn sampler_is_deterministic_and_unbiased() {
        let mu = fair();
        let two = LocallyConstantFunction::constant(mu.base(), 2.0).unwrap();
        let a: Vec<FlowPoint> = {
            let mut s = FlowSampler::seeded(&mu, &two, 5, 7);
            (0..20).map(|_| s.sample()).collect()
        };
        let b: Vec<FlowPoint> = {
            let mut s = FlowSampler::seeded(&mu, &two, 5, 7);
            (0..20).map(|_| s.sample()).collect()
        };
        assert_eq!(a, b);
        let n = 100_000;
        let mut s = FlowSampler::seeded(&mu, &two, 1, 11);
        let (mut h, mut ones) = (0.0, 0.0);
        for _ in 0..n {
            let p = s.sample();
            h += p.height;
            if p.base.symbol(0) == Some(0) {
                ones += 1.0;
            }
        }
        let n = n as f64;
        // Uniform on [0, 2): mean 1, sd 1/sqrt(3).
        assert!((h / n - 1.0).abs() < 3.0 / (3f64.sqrt() * n.sqrt()));
        assert!((ones / n - 0.5).abs() < 3.0 * 0.5 / n.sqrt());
    }
}
