//! Signed-digit recoding and constant-multiplier scheduling.
//!
//! A schedule is a short list of addition steps whose terms are shifted
//! (and possibly negated) copies of the multiplicand or of earlier step
//! results. A negated term is realized as a bitwise complement plus an
//! injected `+1` row, so it occupies two operand slots.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Digit {
    P,
    Zero,
    N,
}

impl Digit {
    pub fn value(self) -> i8 {
        match self {
            Digit::P => 1,
            Digit::Zero => 0,
            Digit::N => -1,
        }
    }
}

/// Digits over {P, 0, N}, most significant first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedDigitString {
    pub digits: Vec<Digit>,
}

impl SignedDigitString {
    pub fn value(&self) -> i128 {
        self.digits.iter().fold(0i128, |acc, d| acc * 2 + i128::from(d.value()))
    }

    /// Nonzero digits as `(position, negative)`, least significant first.
    pub fn nonzero(&self) -> Vec<(u32, bool)> {
        let n = self.digits.len();
        (0..n)
            .filter_map(|pos| match self.digits[n - 1 - pos] {
                Digit::Zero => None,
                d => Some((pos as u32, d == Digit::N)),
            })
            .collect()
    }

    pub fn is_canonical(&self) -> bool {
        self.digits.windows(2).all(|w| w[0] == Digit::Zero || w[1] == Digit::Zero)
    }
}

impl fmt::Display for SignedDigitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.digits.is_empty() {
            return f.write_str("0");
        }
        for d in &self.digits {
            f.write_str(match d {
                Digit::P => "P",
                Digit::Zero => "0",
                Digit::N => "N",
            })?;
        }
        Ok(())
    }
}

/// Canonical signed-digit (non-adjacent) form. Zero gives an empty string.
pub fn recode_csd(constant: u64) -> SignedDigitString {
    let mut n = i128::from(constant);
    let mut lsb_first = Vec::new();
    while n != 0 {
        let d = if n & 1 == 1 {
            let z = 2 - (n & 3);
            n -= z;
            if z == 1 {
                Digit::P
            } else {
                Digit::N
            }
        } else {
            Digit::Zero
        };
        lsb_first.push(d);
        n >>= 1;
    }
    lsb_first.reverse();
    SignedDigitString { digits: lsb_first }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    /// The multiplicand.
    A,
    /// Result of an earlier step.
    Step(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Term {
    pub source: Source,
    pub shift: u32,
    pub negate: bool,
}

impl Term {
    pub fn a(shift: u32) -> Self {
        Term { source: Source::A, shift, negate: false }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let src = match self.source {
            Source::A => "A".to_string(),
            Source::Step(i) => format!("T{i}"),
        };
        let base = if self.shift == 0 { src } else { format!("{src}<<{}", self.shift) };
        if self.negate {
            write!(f, "~({base})+1")
        } else {
            f.write_str(&base)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddStep {
    pub terms: Vec<Term>,
}

impl AddStep {
    /// Operand rows the step needs, counting one `+1` row per negation.
    pub fn slots(&self) -> usize {
        self.terms.len() + self.terms.iter().filter(|t| t.negate).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulSchedule {
    pub constant: u64,
    pub steps: Vec<AddStep>,
    /// Term holding the product; `None` means the product is zero.
    pub output: Option<Term>,
}

impl MulSchedule {
    pub fn total_slots(&self) -> usize {
        self.steps.iter().map(AddStep::slots).sum()
    }

    pub fn max_slots(&self) -> usize {
        self.steps.iter().map(AddStep::slots).max().unwrap_or(0)
    }

    /// Runs the schedule over the integers.
    pub fn evaluate(&self, a: i128) -> i128 {
        let mut results: Vec<i128> = Vec::with_capacity(self.steps.len());
        let term_value = |t: &Term, results: &[i128]| {
            let v = match t.source {
                Source::A => a,
                Source::Step(i) => results[i],
            } << t.shift;
            if t.negate {
                -v
            } else {
                v
            }
        };
        for step in &self.steps {
            let v = step.terms.iter().map(|t| term_value(t, &results)).sum();
            results.push(v);
        }
        self.output.map_or(0, |t| term_value(&t, &results))
    }

    fn rank(&self) -> (usize, usize) {
        (self.steps.len(), self.total_slots())
    }
}

impl fmt::Display for MulSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.steps.iter().enumerate() {
            let terms: Vec<String> = s.terms.iter().map(Term::to_string).collect();
            writeln!(f, "T{i} = {}", terms.join(" + "))?;
        }
        match self.output {
            Some(t) => write!(f, "{} * A = {t}", self.constant),
            None => write!(f, "{} * A = 0", self.constant),
        }
    }
}

/// Shifted-A digits of one representation, `(position, negative)`.
type Digits = Vec<(u32, bool)>;

fn binary_digits(c: u64) -> Digits {
    (0..64).filter(|b| c >> b & 1 == 1).map(|b| (b, false)).collect()
}

fn slots_of(d: &Digits) -> usize {
    d.len() + d.iter().filter(|x| x.1).count()
}

/// Cheapest of the binary and signed-digit forms of `c` (binary on ties).
fn best_digits(c: u64) -> Digits {
    let bin = binary_digits(c);
    let csd = recode_csd(c).nonzero();
    if slots_of(&csd) < slots_of(&bin) {
        csd
    } else {
        bin
    }
}

/// Digits representing `-c`.
fn negated(d: Digits) -> Digits {
    d.into_iter().map(|(p, n)| (p, !n)).collect()
}

fn terms_of(d: &Digits, source: Source, extra_shift: u32) -> Vec<Term> {
    // most significant first
    let mut t: Vec<Term> = d.iter().map(|&(p, n)| Term { source, shift: p + extra_shift, negate: n }).collect();
    t.sort_by_key(|x| std::cmp::Reverse(x.shift));
    t
}

fn trivial(c: u64) -> Option<MulSchedule> {
    match c {
        0 => Some(MulSchedule { constant: 0, steps: vec![], output: None }),
        c if c.is_power_of_two() => {
            Some(MulSchedule { constant: c, steps: vec![], output: Some(Term::a(c.trailing_zeros())) })
        }
        _ => None,
    }
}

fn single_step(c: u64, terms: Vec<Term>) -> MulSchedule {
    MulSchedule {
        constant: c,
        steps: vec![AddStep { terms }],
        output: Some(Term { source: Source::Step(0), shift: 0, negate: false }),
    }
}

/// Groups digits (least significant first) into consecutive steps, each
/// step after the first carrying the running total as one operand.
fn chain(c: u64, digits: &Digits, budget: usize) -> Option<MulSchedule> {
    if budget < 2 || (budget < 3 && digits.iter().any(|d| d.1)) {
        return None;
    }
    let mut steps: Vec<AddStep> = Vec::new();
    let mut current: Vec<Term> = Vec::new();
    let mut used = 0;
    for &(p, n) in digits {
        let cost = 1 + usize::from(n);
        if used + cost > budget {
            steps.push(AddStep { terms: std::mem::take(&mut current) });
            current.push(Term { source: Source::Step(steps.len() - 1), shift: 0, negate: false });
            used = 1;
        }
        current.push(Term { source: Source::A, shift: p, negate: n });
        used += cost;
    }
    steps.push(AddStep { terms: current });
    let last = steps.len() - 1;
    Some(MulSchedule { constant: c, steps, output: Some(Term { source: Source::Step(last), shift: 0, negate: false }) })
}

/// Partial products `A<<i` for each set bit of `b`, summed in groups of at
/// most `budget` operands with the running total carried forward.
pub fn plan_arbitrary(b: u64, budget: usize) -> Option<MulSchedule> {
    trivial(b).or_else(|| chain(b, &binary_digits(b), budget))
}

/// Two-step pattern reuse: `c = P * (2^s ± 1) * 2^t + R`, with `P` built
/// once from A and then combined with a few shifted copies of A.
fn pattern(c: u64, budget: usize) -> Option<MulSchedule> {
    let mut best: Option<MulSchedule> = None;
    let mut remainders: Vec<i128> = vec![0];
    for m in 0..=64u32 {
        remainders.push(1i128 << m);
        remainders.push(-(1i128 << m));
    }
    let c = i128::from(c);
    for s in 1..64u32 {
        for minus in [true, false] {
            let m = if minus { (1i128 << s) - 1 } else { (1i128 << s) + 1 };
            if m <= 1 {
                continue;
            }
            for &r in &remainders {
                let q = c - r;
                if q <= 0 {
                    continue;
                }
                let t = q.trailing_zeros();
                let q = q >> t;
                if q % m != 0 {
                    continue;
                }
                let p = q / m;
                if p <= 1 || p > i128::from(u64::MAX) {
                    continue;
                }
                let p_digits = best_digits(p as u64);
                if slots_of(&p_digits) > budget {
                    continue;
                }
                let r_digits = match r {
                    0 => vec![],
                    r if r > 0 => best_digits(r as u64),
                    r => negated(best_digits((-r) as u64)),
                };
                let step = Source::Step(0);
                let mut terms = vec![
                    Term { source: step, shift: t + s, negate: false },
                    Term { source: step, shift: t, negate: minus },
                ];
                terms.extend(terms_of(&r_digits, Source::A, 0));
                let second = AddStep { terms };
                if second.slots() > budget {
                    continue;
                }
                let cand = MulSchedule {
                    constant: c as u64,
                    steps: vec![AddStep { terms: terms_of(&p_digits, Source::A, 0) }, second],
                    output: Some(Term { source: Source::Step(1), shift: 0, negate: false }),
                };
                if best.as_ref().is_none_or(|b| cand.rank() < b.rank()) {
                    best = Some(cand);
                }
            }
        }
    }
    best
}

/// Plans `constant * A` under an operand budget per addition step,
/// minimizing the step count, then the total operand slots.
pub fn plan_const_mul(constant: u64, budget: usize) -> Option<MulSchedule> {
    if let Some(s) = trivial(constant) {
        return Some(s);
    }
    let bin = binary_digits(constant);
    let csd = recode_csd(constant).nonzero();
    let mut cands: Vec<MulSchedule> = Vec::new();
    for d in [&bin, &csd] {
        if slots_of(d) <= budget {
            cands.push(single_step(constant, terms_of(d, Source::A, 0)));
        }
    }
    if cands.is_empty() {
        cands.extend(pattern(constant, budget));
        cands.extend(chain(constant, &bin, budget));
        cands.extend(chain(constant, &csd, budget));
    }
    cands.into_iter().min_by_key(MulSchedule::rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recode_examples() {
        let s = recode_csd(20061);
        assert_eq!(s.to_string(), "P0P00N0P0N00N0P");
        assert_eq!(s.value(), 20061);
        assert!(recode_csd(0).digits.is_empty());
        assert_eq!(recode_csd(0).value(), 0);
        for k in 0..20 {
            let s = recode_csd(1 << k);
            assert_eq!(s.nonzero(), vec![(k, false)]);
        }
    }

    #[test]
    fn recode_is_canonical_and_exact() {
        for c in 0..5000u64 {
            let s = recode_csd(c);
            assert_eq!(s.value(), i128::from(c));
            assert!(s.is_canonical(), "{c} -> {s}");
        }
        assert_eq!(recode_csd(u64::MAX).value(), i128::from(u64::MAX));
    }

    #[test]
    fn plan_20061_reuses_515() {
        let p = plan_const_mul(20061, 5).unwrap();
        assert_eq!(p.steps.len(), 2);
        let first: Vec<Term> = vec![Term::a(9), Term::a(1), Term::a(0)];
        assert_eq!(p.steps[0].terms, first);
        let t0 = Source::Step(0);
        assert_eq!(
            p.steps[1].terms,
            vec![
                Term { source: t0, shift: 5, negate: false },
                Term { source: t0, shift: 0, negate: true },
                Term::a(12),
            ]
        );
        assert_eq!(p.steps[1].slots(), 4);
        assert_eq!(p.evaluate(1), 20061);
        assert_eq!(p.evaluate(3), 60183);
    }

    #[test]
    fn plan_trivial_constants() {
        let p = plan_const_mul(1, 5).unwrap();
        assert!(p.steps.is_empty());
        assert_eq!(p.evaluate(7), 7);
        let p = plan_const_mul(8, 5).unwrap();
        assert!(p.steps.is_empty());
        assert_eq!(p.output, Some(Term::a(3)));
        let p = plan_const_mul(0, 5).unwrap();
        assert_eq!(p.evaluate(9), 0);
        let p = plan_const_mul(5, 5).unwrap();
        assert_eq!(p.steps.len(), 1);
        assert_eq!(p.steps[0].terms, vec![Term::a(2), Term::a(0)]);
    }

    #[test]
    fn arbitrary_groups() {
        let p = plan_arbitrary(20061, 5).unwrap();
        assert_eq!(p.steps.len(), 2);
        let g1: Vec<u32> = p.steps[0].terms.iter().map(|t| t.shift).collect();
        assert_eq!(g1, vec![0, 2, 3, 4, 6]);
        assert_eq!(p.steps[1].terms[0].source, Source::Step(0));
        let g2: Vec<u32> = p.steps[1].terms[1..].iter().map(|t| t.shift).collect();
        assert_eq!(g2, vec![9, 10, 11, 14]);
        assert_eq!(p.evaluate(1), 20061);
    }

    #[test]
    fn plans_respect_budget_and_value() {
        for c in 0..3000u64 {
            for budget in [3, 5] {
                let p = plan_const_mul(c, budget).unwrap();
                assert!(p.max_slots() <= budget, "{c}: {p}");
                assert_eq!(p.evaluate(1), i128::from(c), "{c}: {p}");
                assert_eq!(p.evaluate(-13), -13 * i128::from(c));
            }
        }
    }
}
