//! Subshifts of finite type: transition matrices, admissible words, periodic
//! points, the `d_theta` metric, higher block presentations and locally
//! constant functions.
//!
//! Symbols are stored zero-based (`0..a`) and rendered one-based (`1..=a`),
//! so the word `"12"` is the symbol sequence `[0, 1]`.

use std::fmt;

use crate::error::{Error, Result};

/// A symbol of the alphabet, zero-based.
pub type Symbol = u8;

/// Default cap on the number of words any enumeration may produce.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Default metric parameter for the `d_theta` metric.
pub const DEFAULT_THETA: f64 = 0.5;

/// A 0/1 transition matrix defining a one-sided subshift of finite type.
///
/// Stored as sorted successor lists. Matrices built by
/// [`validate_transition_matrix`] always carry their minimal primitivity
/// exponent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionMatrix {
    succ: Vec<Vec<usize>>,
    primitivity_exponent: Option<usize>,
}

impl TransitionMatrix {
    /// The full shift on `a` symbols.
    pub fn full_shift(a: usize) -> Result<Self> {
        validate_transition_matrix(&vec![vec![1u8; a]; a])
    }

    /// The golden-mean shift `[[1,1],[1,0]]` (the word `22` is forbidden).
    pub fn golden_mean() -> Self {
        validate_transition_matrix(&[vec![1, 1], vec![1, 0]]).expect("golden mean is primitive")
    }

    pub fn size(&self) -> usize {
        self.succ.len()
    }

    pub fn primitivity_exponent(&self) -> Option<usize> {
        self.primitivity_exponent
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.succ[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> bool {
        self.succ[i].binary_search(&j).is_ok()
    }

    /// Dense 0/1 rows.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        let a = self.size();
        (0..a)
            .map(|i| (0..a).map(|j| self.entry(i, j) as u8).collect())
            .collect()
    }

    pub fn is_admissible(&self, symbols: &[Symbol]) -> bool {
        symbols.iter().all(|&s| (s as usize) < self.size())
            && symbols.windows(2).all(|p| self.entry(p[0] as usize, p[1] as usize))
    }

    /// Admissible, and the wrap-around transition last -> first is allowed.
    pub fn is_cyclically_admissible(&self, symbols: &[Symbol]) -> bool {
        match (symbols.first(), symbols.last()) {
            (Some(&f), Some(&l)) => self.is_admissible(symbols) && self.entry(l as usize, f as usize),
            _ => false,
        }
    }

    /// Number of admissible words of length `n` (sum of the entries of `A^{n-1}`).
    pub fn count_words(&self, n: usize) -> u128 {
        if n == 0 {
            return 1;
        }
        let mut ends = vec![1u128; self.size()];
        for _ in 1..n {
            let mut next = vec![0u128; self.size()];
            for (i, &c) in ends.iter().enumerate() {
                for &j in &self.succ[i] {
                    next[j] = next[j].saturating_add(c);
                }
            }
            ends = next;
        }
        ends.iter().fold(0u128, |acc, &c| acc.saturating_add(c))
    }

    pub(crate) fn from_successors(succ: Vec<Vec<usize>>, exponent: Option<usize>) -> Self {
        TransitionMatrix {
            succ,
            primitivity_exponent: exponent,
        }
    }
}

/// Checks a square 0/1 matrix and computes its minimal primitivity exponent.
///
/// The search stops at Wielandt's bound `(a-1)^2 + 1`.
pub fn validate_transition_matrix<R: AsRef<[u8]>>(entries: &[R]) -> Result<TransitionMatrix> {
    let a = entries.len();
    for row in entries {
        if row.as_ref().len() != a || a < 2 {
            return Err(Error::BadShape {
                rows: a,
                cols: row.as_ref().len(),
            });
        }
    }
    if a < 2 {
        return Err(Error::BadShape { rows: a, cols: a });
    }
    let mut succ = vec![Vec::new(); a];
    let mut col_hit = vec![false; a];
    for (i, row) in entries.iter().enumerate() {
        for (j, &e) in row.as_ref().iter().enumerate() {
            match e {
                0 => {}
                1 => {
                    succ[i].push(j);
                    col_hit[j] = true;
                }
                _ => return Err(Error::NotBinary { row: i, col: j }),
            }
        }
    }
    for s in 0..a {
        if succ[s].is_empty() || !col_hit[s] {
            return Err(Error::EmptyRowOrColumn { symbol: s + 1 });
        }
    }
    let bound = (a - 1) * (a - 1) + 1;
    let exponent = minimal_positive_power(&succ, bound).ok_or(Error::NotPrimitive { bound })?;
    Ok(TransitionMatrix {
        succ,
        primitivity_exponent: Some(exponent),
    })
}

/// Smallest `d <= bound` with `A^d > 0`, using bitset rows.
fn minimal_positive_power(succ: &[Vec<usize>], bound: usize) -> Option<usize> {
    let a = succ.len();
    let words = a.div_ceil(64);
    let mut base = vec![vec![0u64; words]; a];
    for (i, row) in succ.iter().enumerate() {
        for &j in row {
            base[i][j / 64] |= 1 << (j % 64);
        }
    }
    let full = |rows: &[Vec<u64>]| rows.iter().all(|r| (0..a).all(|j| r[j / 64] >> (j % 64) & 1 == 1));
    let mut power = base.clone();
    for d in 1..=bound {
        if full(&power) {
            return Some(d);
        }
        // power <- power * A: row i of the product is the union of A's rows
        // over the columns set in row i of power.
        let mut next = vec![vec![0u64; words]; a];
        for i in 0..a {
            for k in 0..a {
                if power[i][k / 64] >> (k % 64) & 1 == 1 {
                    for w in 0..words {
                        next[i][w] |= base[k][w];
                    }
                }
            }
        }
        power = next;
    }
    None
}

/// A finite sequence of symbols.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(pub Vec<Symbol>);

impl Word {
    /// Parses a digit string with one-based symbols, e.g. `"121"`.
    pub fn parse(s: &str) -> Result<Word> {
        s.chars()
            .map(|c| match c.to_digit(10) {
                Some(d) if d >= 1 => Ok((d - 1) as Symbol),
                _ => Err(Error::Config(format!("bad symbol {c:?} in word {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }

    /// A word that must be admissible in `a`.
    pub fn checked(a: &TransitionMatrix, symbols: Vec<Symbol>) -> Result<Word> {
        let w = Word(symbols);
        if w.is_empty() || !a.is_admissible(&w.0) {
            return Err(Error::Inadmissible(w.to_string()));
        }
        Ok(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        render_symbols(&self.0, f)
    }
}

fn render_symbols(symbols: &[Symbol], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for &s in symbols {
        if s < 9 {
            write!(f, "{}", s + 1)?;
        } else {
            write!(f, "<{}>", s as usize + 1)?;
        }
    }
    Ok(())
}

/// Renders symbols one-based without separators.
pub fn word_string(symbols: &[Symbol]) -> String {
    Word(symbols.to_vec()).to_string()
}

/// All admissible words of length `n`, in lexicographic order.
pub fn enumerate_words(a: &TransitionMatrix, n: usize) -> Result<Vec<Word>> {
    enumerate_words_capped(a, n, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_words_capped(a: &TransitionMatrix, n: usize, cap: u128) -> Result<Vec<Word>> {
    Ok(enumerate_flat(a, n, cap)?
        .chunks(n.max(1))
        .map(|c| Word(c.to_vec()))
        .collect())
}

/// Admissible `n`-words concatenated into one buffer, lexicographic order.
pub(crate) fn enumerate_flat(a: &TransitionMatrix, n: usize, cap: u128) -> Result<Vec<Symbol>> {
    assert!(n >= 1, "word length must be positive");
    let count = a.count_words(n);
    if count > cap {
        return Err(Error::LengthOverflow { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize * n);
    let mut stack: Vec<Symbol> = Vec::with_capacity(n);
    fn extend(a: &TransitionMatrix, n: usize, stack: &mut Vec<Symbol>, out: &mut Vec<Symbol>) {
        if stack.len() == n {
            out.extend_from_slice(stack);
            return;
        }
        let next: Vec<usize> = match stack.last() {
            None => (0..a.size()).collect(),
            Some(&s) => a.successors(s as usize).to_vec(),
        };
        for t in next {
            stack.push(t as Symbol);
            extend(a, n, stack, out);
            stack.pop();
        }
    }
    extend(a, n, &mut stack, &mut out);
    Ok(out)
}

/// Smallest rotation period of a cyclically admissible word.
pub fn prime_period(a: &TransitionMatrix, w: &Word) -> Result<usize> {
    if !a.is_cyclically_admissible(&w.0) {
        return Err(Error::NotCyclicallyAdmissible(w.to_string()));
    }
    Ok(rotation_period(&w.0))
}

fn rotation_period(s: &[Symbol]) -> usize {
    let n = s.len();
    (1..=n)
        .filter(|&p| n.is_multiple_of(p))
        .find(|&p| (0..n).all(|i| s[i] == s[(i + p) % n]))
        .unwrap_or(n)
}

/// A periodic point `z = (w w w ...)` stored by its primitive repeating block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicPoint {
    word: Word,
}

impl PeriodicPoint {
    pub fn new(a: &TransitionMatrix, repeating: &Word) -> Result<Self> {
        let p = prime_period(a, repeating).map_err(|e| match e {
            Error::NotCyclicallyAdmissible(w) => {
                Error::InvalidPeriodicPoint(format!("{w} is not cyclically admissible"))
            }
            other => other,
        })?;
        Ok(PeriodicPoint {
            word: Word(repeating.0[..p].to_vec()),
        })
    }

    pub fn prime_period(&self) -> usize {
        self.word.len()
    }

    /// The primitive repeating block.
    pub fn word(&self) -> &Word {
        &self.word
    }

    /// First `n` coordinates of `z`.
    pub fn prefix(&self, n: usize) -> Vec<Symbol> {
        (0..n).map(|i| self.word.0[i % self.word.len()]).collect()
    }

    pub fn symbol(&self, i: usize) -> Symbol {
        self.word.0[i % self.word.len()]
    }

    pub fn rotated(&self, k: usize) -> PeriodicPoint {
        let p = self.word.len();
        PeriodicPoint {
            word: Word((0..p).map(|i| self.word.0[(i + k) % p]).collect()),
        }
    }
}

/// A point of the shift space: a finite prefix followed either by a periodic
/// tail, or by an undescribed tail declared not periodic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Point {
    prefix: Vec<Symbol>,
    cycle: Option<Vec<Symbol>>,
}

impl Point {
    /// `prefix` followed by `cycle` repeated forever. The description is
    /// normalized: the prefix is absorbed into the tail where possible and the
    /// cycle is reduced to its primitive root.
    pub fn eventually_periodic(prefix: Vec<Symbol>, cycle: Vec<Symbol>) -> Self {
        assert!(!cycle.is_empty(), "cycle must be nonempty");
        let mut prefix = prefix;
        let mut cycle = cycle;
        let p = rotation_period(&cycle);
        cycle.truncate(p);
        while let Some(&last) = prefix.last() {
            if last != *cycle.last().unwrap() {
                break;
            }
            prefix.pop();
            cycle.rotate_right(1);
        }
        Point {
            prefix,
            cycle: Some(cycle),
        }
    }

    pub fn periodic(z: &PeriodicPoint) -> Self {
        Point {
            prefix: Vec::new(),
            cycle: Some(z.word.0.clone()),
        }
    }

    /// A point known only through `prefix`, declared not periodic.
    pub fn aperiodic(prefix: Vec<Symbol>) -> Self {
        Point { prefix, cycle: None }
    }

    pub fn symbol(&self, i: usize) -> Option<Symbol> {
        if i < self.prefix.len() {
            return Some(self.prefix[i]);
        }
        let c = self.cycle.as_ref()?;
        Some(c[(i - self.prefix.len()) % c.len()])
    }

    pub fn prefix(&self, n: usize) -> Result<Vec<Symbol>> {
        (0..n)
            .map(|i| self.symbol(i).ok_or(Error::PrefixExhausted(i)))
            .collect()
    }

    /// Number of known coordinates (`None` = infinitely many).
    pub fn known_len(&self) -> Option<usize> {
        match self.cycle {
            Some(_) => None,
            None => Some(self.prefix.len()),
        }
    }

    /// `sigma^k` of this point.
    pub fn shifted(&self, k: usize) -> Result<Point> {
        if k <= self.prefix.len() {
            return Ok(Point {
                prefix: self.prefix[k..].to_vec(),
                cycle: self.cycle.clone(),
            });
        }
        match &self.cycle {
            None => Err(Error::PrefixExhausted(self.prefix.len())),
            Some(c) => {
                let r = (k - self.prefix.len()) % c.len();
                let mut c = c.clone();
                c.rotate_left(r);
                Ok(Point {
                    prefix: Vec::new(),
                    cycle: Some(c),
                })
            }
        }
    }

    /// `Some(z)` iff the point is periodic, i.e. `sigma^p x = x` for some p.
    pub fn as_periodic(&self) -> Option<PeriodicPoint> {
        match (&self.cycle, self.prefix.is_empty()) {
            (Some(c), true) => Some(PeriodicPoint { word: Word(c.clone()) }),
            _ => None,
        }
    }

    pub fn is_admissible(&self, a: &TransitionMatrix) -> bool {
        match &self.cycle {
            None => a.is_admissible(&self.prefix),
            Some(c) => {
                let mut s = self.prefix.clone();
                s.extend_from_slice(c);
                s.push(c[0]);
                a.is_admissible(&s)
            }
        }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        render_symbols(&self.prefix, f)?;
        match &self.cycle {
            Some(c) => {
                write!(f, "(")?;
                render_symbols(c, f)?;
                write!(f, ")^inf")
            }
            None => write!(f, "..."),
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The metric `d_theta(x, y) = theta^m` with `m` the first index where the
/// points differ.
///
/// For eventually periodic points the comparison is exact. If either point is
/// only known through a prefix and the known coordinates agree, the distance
/// cannot be decided and `PrefixExhausted` is returned.
pub fn d_theta_distance(x: &Point, y: &Point, theta: f64) -> Result<f64> {
    let horizon = match (&x.cycle, &y.cycle) {
        (Some(cx), Some(cy)) => {
            let l = cx.len() / gcd(cx.len(), cy.len()) * cy.len();
            x.prefix.len().max(y.prefix.len()) + l
        }
        _ => {
            let kx = x.known_len().unwrap_or(usize::MAX);
            let ky = y.known_len().unwrap_or(usize::MAX);
            kx.min(ky)
        }
    };
    for i in 0..horizon {
        if x.symbol(i) != y.symbol(i) {
            return Ok(theta.powi(i as i32));
        }
    }
    if x.cycle.is_some() && y.cycle.is_some() {
        Ok(0.0)
    } else {
        Err(Error::PrefixExhausted(horizon))
    }
}

/// The admissible words of a fixed length together with the overlap graph
/// between them: the higher block presentation of the shift.
#[derive(Clone, Debug)]
pub struct BlockSpace {
    alphabet: usize,
    depth: usize,
    symbols: Vec<Symbol>,
    codes: Vec<u64>,
    succ: Vec<Vec<usize>>,
    base_exponent: Option<usize>,
}

impl BlockSpace {
    pub fn new(a: &TransitionMatrix, depth: usize) -> Result<Self> {
        Self::with_cap(a, depth, DEFAULT_ENUMERATION_CAP)
    }

    pub fn with_cap(a: &TransitionMatrix, depth: usize, cap: u128) -> Result<Self> {
        assert!(depth >= 1, "block depth must be positive");
        let alphabet = a.size();
        if (alphabet as f64).powi(depth as i32) >= 2f64.powi(63) {
            return Err(Error::LengthOverflow {
                count: a.count_words(depth),
                cap,
            });
        }
        let symbols = enumerate_flat(a, depth, cap)?;
        let codes: Vec<u64> = symbols.chunks(depth).map(|w| encode(alphabet, w)).collect();
        let modulus = (alphabet as u64).pow(depth as u32 - 1);
        let succ = codes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let last = symbols[i * depth + depth - 1] as usize;
                let stem = (c % modulus) * alphabet as u64;
                a.successors(last)
                    .iter()
                    .map(|&t| {
                        codes
                            .binary_search(&(stem + t as u64))
                            .expect("overlap of admissible words is admissible")
                    })
                    .collect()
            })
            .collect();
        Ok(BlockSpace {
            alphabet,
            depth,
            symbols,
            codes,
            succ,
            base_exponent: a.primitivity_exponent(),
        })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn word(&self, i: usize) -> &[Symbol] {
        &self.symbols[i * self.depth..(i + 1) * self.depth]
    }

    pub fn words(&self) -> impl Iterator<Item = &[Symbol]> {
        self.symbols.chunks(self.depth)
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.succ[i]
    }

    /// Index of a `depth`-word, or `None` if inadmissible.
    pub fn index_of(&self, w: &[Symbol]) -> Option<usize> {
        if w.len() != self.depth || w.iter().any(|&s| s as usize >= self.alphabet) {
            return None;
        }
        self.codes.binary_search(&encode(self.alphabet, w)).ok()
    }

    /// Indices of all block words whose first `prefix.len()` symbols equal `prefix`.
    pub fn with_prefix(&self, prefix: &[Symbol]) -> std::ops::Range<usize> {
        assert!(prefix.len() <= self.depth);
        let pad = (self.alphabet as u64).pow((self.depth - prefix.len()) as u32);
        let lo = encode(self.alphabet, prefix) * pad;
        let hi = lo + pad;
        let start = self.codes.partition_point(|&c| c < lo);
        let end = self.codes.partition_point(|&c| c < hi);
        start..end
    }

    /// The recoded transition matrix over block words.
    ///
    /// Its primitivity exponent is `d + depth - 1` when the base exponent is
    /// `d`: two blocks are joined by a path of length `k >= depth` iff the base
    /// has a path of length `k - depth + 1` between the last and first symbols,
    /// and shorter paths force overlaps.
    pub fn transition_matrix(&self) -> TransitionMatrix {
        TransitionMatrix::from_successors(self.succ.clone(), self.base_exponent.map(|d| d + self.depth - 1))
    }
}

pub(crate) fn encode(alphabet: usize, w: &[Symbol]) -> u64 {
    w.iter().fold(0u64, |acc, &s| acc * alphabet as u64 + s as u64)
}

/// The higher block recode of `a` at block length `m`.
pub fn higher_block_recode(a: &TransitionMatrix, m: usize) -> Result<BlockSpace> {
    BlockSpace::new(a, m)
}

/// A real function on the shift space that depends only on the first `depth`
/// coordinates.
#[derive(Clone, Debug)]
pub struct LocallyConstantFunction {
    space: BlockSpace,
    values: Vec<f64>,
    theta: f64,
    lipschitz_seminorm: f64,
}

impl LocallyConstantFunction {
    /// Builds a function from `(word, value)` pairs, which must cover exactly
    /// the admissible words of length `depth`.
    pub fn new(
        a: &TransitionMatrix,
        depth: usize,
        theta: f64,
        values: impl IntoIterator<Item = (Word, f64)>,
    ) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidFunction(format!("theta {theta} not in (0,1)")));
        }
        if depth == 0 {
            return Err(Error::InvalidFunction("depth must be positive".into()));
        }
        let space = BlockSpace::new(a, depth)?;
        let mut slots: Vec<Option<f64>> = vec![None; space.len()];
        for (w, v) in values {
            if !v.is_finite() {
                return Err(Error::InvalidFunction(format!("value for {w} is not finite")));
            }
            let i = space
                .index_of(w.symbols())
                .ok_or_else(|| Error::InvalidFunction(format!("{w} is not an admissible word of length {depth}")))?;
            if slots[i].replace(v).is_some() {
                return Err(Error::InvalidFunction(format!("duplicate value for {w}")));
            }
        }
        let values = slots
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| Error::InvalidFunction(format!("missing value for {}", word_string(space.word(i)))))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_parts(space, values, theta))
    }

    pub fn from_fn(a: &TransitionMatrix, depth: usize, theta: f64, f: impl Fn(&[Symbol]) -> f64) -> Result<Self> {
        let space = BlockSpace::new(a, depth)?;
        let values = space.words().map(f).collect();
        Ok(Self::from_parts(space, values, theta))
    }

    pub fn constant(a: &TransitionMatrix, c: f64) -> Result<Self> {
        Self::from_fn(a, 1, DEFAULT_THETA, |_| c)
    }

    pub(crate) fn from_parts(space: BlockSpace, values: Vec<f64>, theta: f64) -> Self {
        let mut f = LocallyConstantFunction {
            space,
            values,
            theta,
            lipschitz_seminorm: 0.0,
        };
        f.lipschitz_seminorm = (1..f.depth())
            .map(|n| f.variation(n) / theta.powi(n as i32))
            .fold(0.0, f64::max);
        f
    }

    pub fn depth(&self) -> usize {
        self.space.depth()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn space(&self) -> &BlockSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `|f|_theta = sup_n V_n(f) / theta^n`.
    pub fn lipschitz_seminorm(&self) -> f64 {
        self.lipschitz_seminorm
    }

    /// Replaces the seminorm by a declared upper bound, e.g. one inherited
    /// from the Hölder function this function approximates.
    pub fn with_lipschitz_seminorm(mut self, bound: f64) -> Result<Self> {
        if !(bound >= self.lipschitz_seminorm) || !bound.is_finite() {
            return Err(Error::InvalidFunction(format!(
                "declared seminorm {bound} is below the observed {}",
                self.lipschitz_seminorm
            )));
        }
        self.lipschitz_seminorm = bound;
        Ok(self)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn lipschitz_norm(&self) -> f64 {
        self.lipschitz_seminorm + self.sup_norm()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value at any point whose first `depth` coordinates are `x[..depth]`.
    ///
    /// Panics if `x` is shorter than the depth or inadmissible.
    pub fn eval(&self, x: &[Symbol]) -> f64 {
        self.try_eval(x)
            .unwrap_or_else(|| panic!("cannot evaluate depth-{} function on {}", self.depth(), word_string(x)))
    }

    pub fn try_eval(&self, x: &[Symbol]) -> Option<f64> {
        let d = self.depth();
        if x.len() < d {
            return None;
        }
        self.space.index_of(&x[..d]).map(|i| self.values[i])
    }

    /// `V_n(f)`: the largest oscillation of `f` inside an `n`-cylinder.
    pub fn variation(&self, n: usize) -> f64 {
        if n >= self.depth() {
            return 0.0;
        }
        let mut worst = 0.0f64;
        let mut start = 0;
        while start < self.space.len() {
            let prefix = &self.space.word(start)[..n];
            let range = self.space.with_prefix(prefix);
            let (lo, hi) = self.values[range.clone()]
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            worst = worst.max(hi - lo);
            start = range.end;
        }
        worst
    }

    /// Birkhoff sum `S_n f(x) = sum_{k<n} f(sigma^k x)`; `x` needs
    /// `n + depth - 1` coordinates.
    pub fn birkhoff_sum(&self, x: &[Symbol], n: usize) -> f64 {
        (0..n).map(|k| self.eval(&x[k..])).sum()
    }

    /// Pointwise `f + c`.
    pub fn add_constant(&self, c: f64) -> Self {
        Self::from_parts(
            self.space.clone(),
            self.values.iter().map(|v| v + c).collect(),
            self.theta,
        )
    }

    /// The same function viewed at a larger depth.
    pub fn lift(&self, a: &TransitionMatrix, depth: usize) -> Result<Self> {
        assert!(depth >= self.depth());
        if depth == self.depth() {
            return Ok(self.clone());
        }
        Self::from_fn(a, depth, self.theta, |w| self.eval(w))
    }
}
