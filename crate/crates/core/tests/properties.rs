use proptest::prelude::*;

use symflow::escape_flow::{flow_hole, tower_survivor_curve};
use symflow::gibbs::{equilibrium_state, gamma, pressure, MarkovGibbsMeasure};
use symflow::open_system::{escape_rate_discrete, survivor_curve, Hole};
use symflow::sft::{
    enumerate_words, higher_block_recode, prime_period, validate_transition_matrix, LocallyConstantFunction,
    PeriodicPoint, Point, Symbol, TransitionMatrix, Word,
};
use symflow::suspension::{
    build_suspension_sft, eta, flow_map, mu_tilde, roof_lower, roof_upper, DiscretizationParams, FlowPoint,
    RoofFunction, SuspensionCylinders,
};
use symflow::Error;

/// Primitive 0/1 matrices on two or three symbols.
fn matrix() -> impl Strategy<Value = TransitionMatrix> {
    (2usize..=3)
        .prop_flat_map(|a| {
            proptest::collection::vec(proptest::bool::weighted(0.7), a * a).prop_map(move |bits| (a, bits))
        })
        .prop_filter_map("not primitive", |(a, bits)| {
            let rows: Vec<Vec<u8>> = bits
                .chunks(a)
                .map(|r| r.iter().map(|&b| u8::from(b)).collect())
                .collect();
            validate_transition_matrix(&rows).ok()
        })
}

/// A primitive matrix with a depth-2 potential.
fn system() -> impl Strategy<Value = (TransitionMatrix, LocallyConstantFunction)> {
    (matrix(), proptest::collection::vec(-2.0f64..2.0, 9)).prop_map(|(a, v)| {
        let n = a.size();
        let phi = LocallyConstantFunction::from_fn(&a, 2, 0.5, |x| v[x[0] as usize * n + x[1] as usize]).unwrap();
        (a, phi)
    })
}

fn matrix_power_total(a: &TransitionMatrix, k: usize) -> u128 {
    let n = a.size();
    let mut v = vec![1u128; n];
    for _ in 0..k {
        v = (0..n).map(|i| a.successors(i).iter().map(|&j| v[j]).sum()).collect();
    }
    v.iter().sum()
}

fn measure(a: &TransitionMatrix, phi: &LocallyConstantFunction) -> MarkovGibbsMeasure {
    equilibrium_state(a, phi).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn word_counts_match_matrix_powers(a in matrix(), n in 1usize..9) {
        let count = a.count_words(n);
        prop_assert_eq!(count, matrix_power_total(&a, n - 1));
        prop_assert_eq!(enumerate_words(&a, n).unwrap().len() as u128, count);
    }

    #[test]
    fn higher_block_recode_is_a_conjugacy(a in matrix(), m in 1usize..5) {
        let blocks = higher_block_recode(&a, m).unwrap();
        prop_assert_eq!(blocks.len() as u128, a.count_words(m));
        for i in 0..blocks.len() {
            prop_assert_eq!(blocks.index_of(blocks.word(i)), Some(i));
            let succ = blocks.successors(i);
            let w = blocks.word(i);
            // Edges are exactly the overlapping admissible extensions.
            let mut want: Vec<usize> = a.successors(w[m - 1] as usize)
                .iter()
                .map(|&s| {
                    let mut next = w[1..].to_vec();
                    next.push(s as Symbol);
                    blocks.index_of(&next).unwrap()
                })
                .collect();
            want.sort_unstable();
            let mut got = succ.to_vec();
            got.sort_unstable();
            prop_assert_eq!(got, want);
        }
        // Two-block words of the recoded shift are the (m+1)-words of the original.
        prop_assert_eq!(blocks.transition_matrix().count_words(2), a.count_words(m + 1));
    }

    #[test]
    fn prime_period_of_repetitions(w in proptest::collection::vec(0u8..2, 1..6), k in 1usize..4) {
        let a = TransitionMatrix::full_shift(2).unwrap();
        let p = prime_period(&a, &Word(w.clone())).unwrap();
        prop_assert!(w.len() % p == 0);
        prop_assert!(w.iter().enumerate().all(|(i, &s)| s == w[i % p]));
        let repeated: Vec<Symbol> = w.iter().copied().cycle().take(w.len() * k).collect();
        prop_assert_eq!(prime_period(&a, &Word(repeated)).unwrap(), p);
    }

    #[test]
    fn pressure_shifts_with_constants((a, phi) in system(), c in -3.0f64..3.0) {
        let p = pressure(&a, &phi).unwrap();
        let q = pressure(&a, &phi.add_constant(c)).unwrap();
        prop_assert!((q - p - c).abs() < 1e-10);
    }

    #[test]
    fn zero_potential_pressure_is_growth_rate(a in matrix()) {
        let p = pressure(&a, &LocallyConstantFunction::constant(&a, 0.0).unwrap()).unwrap();
        // Normalized path counts: log of the growth factor over a long run.
        let n = a.size();
        let mut v = vec![1.0f64; n];
        let mut log_growth = 0.0;
        for step in 0..400 {
            let next: Vec<f64> = (0..n).map(|i| a.successors(i).iter().map(|&j| v[j]).sum()).collect();
            let norm: f64 = next.iter().sum::<f64>() / v.iter().sum::<f64>();
            if step == 399 {
                log_growth = norm.ln();
            }
            let total: f64 = next.iter().sum();
            v = next.iter().map(|x| x / total).collect();
        }
        prop_assert!((p - log_growth).abs() < 1e-9, "{} {}", p, log_growth);
    }

    #[test]
    fn gamma_is_rotation_invariant((a, phi) in system(), w in proptest::collection::vec(0u8..3, 1..5)) {
        let w: Vec<Symbol> = w.into_iter().map(|s| s % a.size() as Symbol).collect();
        prop_assume!(a.is_cyclically_admissible(&w));
        let z = PeriodicPoint::new(&a, &Word(w)).unwrap();
        let p = pressure(&a, &phi).unwrap();
        let g = gamma(&Point::periodic(&z), &phi, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
        for k in 1..z.prime_period() {
            let h = gamma(&Point::periodic(&z.rotated(k)), &phi, p).unwrap();
            prop_assert!((g - h).abs() < 1e-12);
        }
    }

    #[test]
    fn cylinder_measures_are_consistent((a, phi) in system(), len in 1usize..6) {
        let mu = measure(&a, &phi);
        let words = enumerate_words(&a, len).unwrap();
        let total: f64 = words.iter().map(|w| mu.cylinder_measure(w.symbols())).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for w in &words {
            let m = mu.cylinder_measure(w.symbols());
            let (mut right, mut left) = (0.0, 0.0);
            for s in 0..a.size() as Symbol {
                let mut r = w.0.clone();
                r.push(s);
                let mut l = vec![s];
                l.extend_from_slice(w.symbols());
                right += mu.cylinder_measure(&r);
                left += mu.cylinder_measure(&l);
            }
            prop_assert!((right - m).abs() < 1e-12);
            prop_assert!((left - m).abs() < 1e-12);
        }
    }

    #[test]
    fn bigger_holes_escape_faster((a, phi) in system(), picks in proptest::collection::vec(any::<bool>(), 9)) {
        let mu = measure(&a, &phi);
        let words = enumerate_words(&a, 2).unwrap();
        let small: Vec<Word> = words.iter().zip(&picks).filter(|(_, &p)| p).map(|(w, _)| w.clone()).take(1).collect();
        prop_assume!(!small.is_empty());
        let large: Vec<Word> = words.iter().zip(&picks).filter(|(_, &p)| p).map(|(w, _)| w.clone()).collect();
        prop_assume!(large.len() < words.len());
        let (hs, hl) = (Hole::new(&a, small).unwrap(), Hole::new(&a, large).unwrap());
        let (ks, kl) = (survivor_curve(&mu, &hs, 20).unwrap(), survivor_curve(&mu, &hl, 20).unwrap());
        prop_assert!(ks.iter().zip(&kl).all(|(s, l)| s >= l));
        prop_assert!(ks.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(hs.measure(&mu) <= hl.measure(&mu) + 1e-15);
        // A hole that leaves no cycle alive empties everything: infinite rate.
        let rate = |h: &Hole| match escape_rate_discrete(&mu, h) {
            Ok(r) => r.rate,
            Err(Error::FullEscape) => f64::INFINITY,
            Err(e) => panic!("{e}"),
        };
        let (rs, rl) = (rate(&hs), rate(&hl));
        prop_assert!(rs <= rl + 1e-10, "{} {}", rs, rl);
    }
}

/// A depth-1 or depth-2 roof on the full 2-shift with values in `[1.2, 3)`,
/// and a feasible `(m, delta)`.
fn roof_setup() -> impl Strategy<Value = (RoofFunction, usize, f64)> {
    (
        1usize..=2,
        proptest::collection::vec(1.2f64..3.0, 4),
        1usize..5,
        0.01f64..0.3,
    )
        .prop_filter_map("infeasible discretization", |(depth, v, extra, delta)| {
            let a = TransitionMatrix::full_shift(2).unwrap();
            let f = LocallyConstantFunction::from_fn(&a, depth, 0.5, |x| {
                v[x.iter().take(depth).fold(0, |acc, &s| 2 * acc + s as usize)]
            })
            .unwrap();
            let f = RoofFunction::new(f).unwrap();
            let m = depth + extra - 1;
            DiscretizationParams::new(&f, &fair(), m, delta).ok()?;
            Some((f, m, delta))
        })
}

fn fair() -> MarkovGibbsMeasure {
    let a = TransitionMatrix::full_shift(2).unwrap();
    measure(&a, &LocallyConstantFunction::constant(&a, 0.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_roofs_sandwich_the_roof((f, m, delta) in roof_setup()) {
        let mu = fair();
        let a = mu.base().clone();
        let up = roof_upper(&a, &f, m, delta).unwrap();
        let down = roof_lower(&a, &f, m, delta).unwrap();
        for w in enumerate_words(&a, m).unwrap() {
            let x = w.symbols();
            prop_assert!(down.value(x) <= f.eval(x) && f.eval(x) <= up.value(x));
            prop_assert!(up.value(x) - down.value(x) <= eta(f.function(), m) + 4.0 * delta + 1e-12);
        }
        let int_up = mu.integrate(&up.to_function(0.5));
        prop_assert!(int_up <= 2.0 * mu.integrate(f.function()));
    }

    #[test]
    fn suspension_cylinders_agree((f, m, delta) in roof_setup(), len in 1usize..6) {
        let mu = fair();
        let a = mu.base().clone();
        let nu = mu_tilde(&mu, &build_suspension_sft(&a, &roof_upper(&a, &f, m, delta).unwrap(), m).unwrap()).unwrap();
        let mut total = 0.0;
        for w in nu.sft().words(len) {
            let direct = nu.cylinder_measure(&w);
            total += direct;
            prop_assert!((direct - nu.cylinder_measure_markov(&w)).abs() < 1e-14);
        }
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hole_slab_has_the_right_mass((f, m, delta) in roof_setup(), n in 1usize..4) {
        let mu = fair();
        let a = mu.base().clone();
        let hole = Hole::cylinder(&a, &vec![0; n]).unwrap();
        let depth = m.max(n);
        let nu = mu_tilde(&mu, &build_suspension_sft(&a, &roof_lower(&a, &f, m, delta).unwrap(), depth).unwrap()).unwrap();
        let h = flow_hole(&hole, nu.sft()).unwrap();
        let slab: f64 = h.states().iter().map(|&s| nu.state_measure(s)).sum();
        prop_assert!((slab / delta - hole.measure(&mu) / nu.roof_integral()).abs() < 1e-12);
        let curve = tower_survivor_curve(&nu, &h, 50);
        prop_assert!(curve.windows(2).all(|w| w[1] <= w[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn flow_is_a_semigroup(
        x in proptest::collection::vec(0u8..2, 40),
        v in proptest::collection::vec(1.2f64..3.0, 4),
        u in 0.0f64..1.0,
        s in 0.0f64..8.0,
        t in 0.0f64..8.0,
    ) {
        let a = TransitionMatrix::full_shift(2).unwrap();
        let f = LocallyConstantFunction::from_fn(&a, 2, 0.5, |w| v[2 * w[0] as usize + w[1] as usize]).unwrap();
        let start = FlowPoint { height: u * f.eval(&x), base: Point::aperiodic(x) };
        let (direct, j) = flow_map(&f, &start, s + t).unwrap();
        let (mid, j1) = flow_map(&f, &start, s).unwrap();
        let (two_step, j2) = flow_map(&f, &mid, t).unwrap();
        prop_assert_eq!(j, j1 + j2);
        prop_assert!((direct.height - two_step.height).abs() < 1e-9);
        prop_assert_eq!(direct.base.prefix(20).unwrap(), two_step.base.prefix(20).unwrap());
        prop_assert!(direct.height >= 0.0 && direct.height < f.eval(&direct.base.prefix(2).unwrap()));
    }
}
