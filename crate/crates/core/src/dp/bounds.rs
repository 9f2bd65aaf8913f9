//! Closed-form probability bounds for repeated random operator application.
//!
//! `p` is always the probability of drawing `B_E`; a "head" (a `B_I` draw)
//! therefore has probability `1 − p`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{FactoredQ, TeamMdp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub delta1: f64,
    pub delta2: f64,
    pub p: f64,
    pub gamma: f64,
    pub q_u: f64,
    /// min_s max_ā q†(s, ā)
    pub min_max_qdag: f64,
    /// max_s |max_{a^k} q^k − max_ā q†|
    pub max_gap: f64,
    pub xi1: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let fields = [
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("p", self.p),
            ("gamma", self.gamma),
            ("q_u", self.q_u),
            ("min_max_qdag", self.min_max_qdag),
            ("max_gap", self.max_gap),
            ("xi1", self.xi1),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                problems.push(format!("{name} must be finite"));
            }
        }
        if !(self.delta1 > 0.0) {
            problems.push("delta1 must be > 0".to_string());
        }
        if !(self.delta2 > 0.0) {
            problems.push("delta2 must be > 0".to_string());
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            problems.push("p must lie in (0, 1]".to_string());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            problems.push("gamma must lie in (0, 1)".to_string());
        }
        if !(self.q_u > self.min_max_qdag) {
            problems.push("q_u must exceed min_max_qdag".to_string());
        }
        if !(self.max_gap > 0.0) {
            problems.push("max_gap must be > 0".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(problems.join("; ")))
        }
    }
}

/// q_U = max{r_max / (1 − γ), max_{k,s,a} q^k(s, a)}
pub fn q_upper(mdp: &TeamMdp, fq: &FactoredQ) -> f64 {
    let rmax = mdp.max_expected_reward();
    let mut qmax = f64::NEG_INFINITY;
    for t in &fq.tables {
        for s in mdp.nonterminal_states() {
            for &v in &t[s] {
                qmax = qmax.max(v);
            }
        }
    }
    (rmax / (1.0 - mdp.discount())).max(qmax)
}

/// log_γ(x), snapped to the nearest integer when within rounding noise so
/// that exact powers of γ do not flip a floor or ceiling.
fn log_base(x: f64, gamma: f64) -> f64 {
    let raw = x.ln() / gamma.ln();
    let nearest = raw.round();
    if (raw - nearest).abs() <= 1e-10 * nearest.abs().max(1.0) {
        nearest
    } else {
        raw
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")))
    }
}

/// Number of `B_E` applications that shrinks the worst overestimate below δ₁:
/// ⌊log_γ(δ₁ / (q_U − min_s max_ā q†))⌋, or 0 when the ratio is at least 1.
pub fn bound_n_o(delta1: f64, gamma: f64, q_u: f64, min_max_qdag: f64) -> Result<u64> {
    check_gamma(gamma)?;
    if !(delta1 > 0.0) {
        return Err(Error::Domain(format!("delta1 must be > 0, got {delta1}")));
    }
    let spread = q_u - min_max_qdag;
    if !(spread > 0.0) {
        return Err(Error::Domain(format!("q_U ({q_u}) must exceed min max q† ({min_max_qdag})")));
    }
    if delta1 >= spread {
        return Ok(0);
    }
    Ok(log_base(delta1 / spread, gamma).floor() as u64)
}

/// Required run length of consecutive `B_I` draws: ⌈log_γ(δ₂ / max_gap)⌉, or 0
/// when δ₂ ≥ max_gap.
pub fn bound_l(delta2: f64, gamma: f64, max_gap: f64) -> Result<u64> {
    check_gamma(gamma)?;
    if !(delta2 > 0.0) {
        return Err(Error::Domain(format!("delta2 must be > 0, got {delta2}")));
    }
    if !(max_gap > 0.0) {
        return Err(Error::Domain(format!("max_gap must be > 0, got {max_gap}")));
    }
    if delta2 >= max_gap {
        return Ok(0);
    }
    Ok(log_base(delta2 / max_gap, gamma).ceil() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Tail {
    /// P(more than n_o of the N draws are `B_E`)
    pub exact: f64,
    /// Hoeffding lower bound; only defined when N > n_o / p.
    pub hoeffding: Option<f64>,
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

pub fn lemma1_tail(n: u64, p: f64, n_o: u64) -> Result<Lemma1Tail> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p must lie in [0, 1], got {p}")));
    }
    if n_o > n {
        return Err(Error::Domain(format!("n_o ({n_o}) exceeds N ({n})")));
    }
    let exact = if p == 1.0 {
        if n_o < n {
            1.0
        } else {
            0.0
        }
    } else if p == 0.0 {
        0.0
    } else {
        let (lp, lq) = (p.ln(), (1.0 - p).ln());
        let tail: f64 = (n_o + 1..=n).map(|k| (ln_binomial(n, k) + k as f64 * lp + (n - k) as f64 * lq).exp()).sum();
        tail.min(1.0)
    };
    let hoeffding = (p > 0.0 && (n as f64) > n_o as f64 / p).then(|| {
        let gap = p - n_o as f64 / n as f64;
        1.0 - (-2.0 * n as f64 * gap * gap).exp()
    });
    Ok(Lemma1Tail { exact, hoeffding })
}

fn big_binomial(n: u64, k: u64) -> BigInt {
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

fn beta_rational(n: u64, l: u64, x: &BigRational) -> BigRational {
    let mut total = BigRational::zero();
    let mut power = BigRational::one();
    for j in 0..=n / (l + 1) {
        let term = BigRational::from_integer(big_binomial(n - j * l, j)) * &power;
        if j % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
        power *= x;
    }
    total
}

/// β_{N,L} = Σ_{j=0}^{⌊N/(L+1)⌋} (−1)^j C(N − jL, j) (p(1−p)^L)^j.
///
/// The alternating sum cancels badly once its terms grow large, so in that
/// regime it is evaluated exactly over the rationals.
pub fn beta_polynomial(n: u64, l: u64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p must lie in [0, 1], got {p}")));
    }
    let x = p * (1.0 - p).powi(l as i32);
    let jmax = n / (l + 1);
    let ln_x = x.ln();
    let largest = (0..=jmax)
        .map(|j| ln_binomial(n - j * l, j) + if j == 0 { 0.0 } else { j as f64 * ln_x })
        .fold(f64::NEG_INFINITY, f64::max);
    if largest < 1e4f64.ln() || x == 0.0 {
        let mut total = 0.0;
        let mut power = 1.0;
        for j in 0..=jmax {
            let term = ln_binomial(n - j * l, j).exp() * power;
            total += if j % 2 == 0 { term } else { -term };
            power *= x;
        }
        return Ok(total);
    }
    let pr = BigRational::from_float(p).expect("finite p");
    let qr = BigRational::one() - &pr;
    let xr = pr * num_traits::pow(qr, l as usize);
    Ok(beta_rational(n, l, &xr).to_f64().unwrap_or(f64::NAN))
}

/// Probability of at least L consecutive `B_I` draws among N:
/// 1 − β_{N,L} + (1−p)^L β_{N−L,L}.
pub fn run_probability(n: u64, l: u64, p: f64) -> Result<f64> {
    if l == 0 || l > n {
        return Err(Error::Domain(format!("need N ≥ L ≥ 1, got N = {n}, L = {l}")));
    }
    let b_n = beta_polynomial(n, l, p)?;
    let b_n_l = beta_polynomial(n - l, l, p)?;
    Ok(1.0 - b_n + (1.0 - p).powi(l as i32) * b_n_l)
}

pub const ENUMERATION_LIMIT: u32 = 24;

/// Weighted enumeration of all 2^N coin sequences; the reference the closed
/// form is checked against in `dp-verify`.
pub fn run_probability_enumerated(n: u32, l: u32, p: f64) -> Result<f64> {
    if n > ENUMERATION_LIMIT {
        return Err(Error::Domain(format!("enumeration limited to N ≤ {ENUMERATION_LIMIT}, got {n}")));
    }
    if l == 0 || l > n {
        return Err(Error::Domain(format!("need N ≥ L ≥ 1, got N = {n}, L = {l}")));
    }
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        // bit set = B_I draw
        let heads = mask.count_ones();
        let mut run = 0;
        let mut hit = false;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                run += 1;
                if run >= l {
                    hit = true;
                    break;
                }
            } else {
                run = 0;
            }
        }
        if hit {
            total += (1.0 - p).powi(heads as i32) * p.powi((n - heads) as i32);
        }
    }
    Ok(total)
}

/// Lower bound on the run probability valid for p > ½ and 1 < ξ₁ < 1 + 1/L.
pub fn run_probability_lower_bound(n: u64, l: u64, p: f64, xi1: f64) -> Result<f64> {
    if !(p > 0.5 && p <= 1.0) {
        return Err(Error::Domain(format!("p must lie in (0.5, 1], got {p}")));
    }
    if l == 0 {
        return Err(Error::Domain("L must be at least 1".into()));
    }
    let lf = l as f64;
    if !(xi1 > 1.0 && xi1 < 1.0 + 1.0 / lf) {
        return Err(Error::Domain(format!("xi1 must lie in (1, {}), got {xi1}", 1.0 + 1.0 / lf)));
    }
    Ok(uspensky_closed_form(n, l, p, xi1))
}

fn uspensky_closed_form(n: u64, l: u64, p: f64, xi1: f64) -> f64 {
    let lf = l as f64;
    let q = 1.0 - p;
    let lead = (1.0 - q * xi1) / (p * xi1 * (1.0 + lf - lf * xi1));
    1.0 - lead * xi1.powf(-(n as f64)) - lf / p * q.powi(n as i32 + 2)
}

/// Root of 1 − x + p(1−p)^L x^{L+1} inside (1, 1 + 1/L).
///
/// The lower bound above is only guaranteed at this characteristic root;
/// other values in the interval can overshoot the exact probability.
pub fn uspensky_root(l: u64, p: f64) -> Result<f64> {
    if !(p > 0.5 && p < 1.0) || l == 0 {
        return Err(Error::Domain(format!("root needs p in (0.5, 1) and L ≥ 1, got p = {p}, L = {l}")));
    }
    let c = p * (1.0 - p).powi(l as i32);
    let f = |x: f64| 1.0 - x + c * x.powi(l as i32 + 1);
    let (mut lo, mut hi) = (1.0, 1.0 + 1.0 / l as f64);
    if f(hi) >= 0.0 {
        return Err(Error::Domain(format!("no root in (1, 1 + 1/L) for p = {p}, L = {l}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Lower bound evaluated at the characteristic root. For p = 1 every draw is
/// `B_E` and no run can occur.
pub fn run_probability_lower_bound_at_root(n: u64, l: u64, p: f64) -> Result<f64> {
    if p == 1.0 {
        return Ok(0.0);
    }
    // For p near 1 the root can round to exactly 1, which the public
    // function rejects; the closed form is still well defined there.
    Ok(uspensky_closed_form(n, l, p, uspensky_root(l, p)?))
}

/// Combined guarantee for `B_E (B_p)^N`: the best split N = N₁ + N₂ with
/// N₁ > n_o / p and N₂ ≥ L of Hoeffding(N₁) · lower bound(N₂), the latter
/// taken at the characteristic root.
/// `None` when p ≤ ½ or no split exists.
pub fn theorem_product_bound(n: u64, p: f64, n_o: u64, l: u64) -> Option<f64> {
    if !(p > 0.5) {
        return None;
    }
    let mut best: Option<f64> = None;
    for n1 in 1..=n {
        let n2 = n - n1;
        if (n1 as f64) <= n_o as f64 / p || n2 < l.max(1) {
            continue;
        }
        let first = lemma1_tail(n1, p, n_o.min(n1)).ok()?.hoeffding?;
        let second = if l == 0 { 1.0 } else { run_probability_lower_bound_at_root(n2, l, p).ok()? };
        let value = first * second.max(0.0);
        best = Some(best.map_or(value, |b: f64| b.max(value)));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_o_examples() {
        assert_eq!(bound_n_o(2.0, 0.9, 5.0, 3.0).unwrap(), 0);
        assert_eq!(bound_n_o(0.1, 0.5, 1.0, 0.0).unwrap(), 3);
        assert_eq!(bound_n_o(0.01, 0.9, 1.0, 0.0).unwrap(), 43);
        // exact power: log_0.5(0.25) = 2
        assert_eq!(bound_n_o(0.25, 0.5, 1.0, 0.0).unwrap(), 2);
        assert!(bound_n_o(0.1, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn l_examples() {
        assert_eq!(bound_l(1.5, 0.9, 1.5).unwrap(), 0);
        assert_eq!(bound_l(0.1, 0.5, 1.0).unwrap(), 4);
        assert_eq!(bound_l(0.25, 0.5, 1.0).unwrap(), 2);
        let ls: Vec<u64> = [1e-4, 1e-3, 1e-2, 0.1, 0.5].iter().map(|&d| bound_l(d, 0.8, 1.0).unwrap()).collect();
        assert!(ls.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn tail_examples() {
        let t = lemma1_tail(1, 0.37, 0).unwrap();
        assert!((t.exact - 0.37).abs() < 1e-15);
        let t = lemma1_tail(10, 0.5, 2).unwrap();
        assert!((t.exact - (1.0 - 56.0 / 1024.0)).abs() < 1e-14);
        assert!(t.hoeffding.unwrap() <= t.exact);
        assert!(lemma1_tail(10, 0.1, 2).unwrap().hoeffding.is_none());
        assert!(lemma1_tail(3, 0.5, 4).is_err());
    }

    #[test]
    fn run_probability_examples() {
        assert!((run_probability(2, 1, 0.5).unwrap() - 0.75).abs() < 1e-15);
        for &p in &[0.2, 0.6, 0.9] {
            for l in 1..6u64 {
                let v = run_probability(l, l, p).unwrap();
                assert!((v - (1.0 - p).powi(l as i32)).abs() < 1e-13, "p={p} l={l}");
            }
        }
        assert!(run_probability(3, 0, 0.5).is_err());
    }

    #[test]
    fn large_n_uses_stable_evaluation() {
        let v = run_probability(500, 1, 0.6).unwrap();
        // 500 draws with P(B_I) = 0.4 almost surely contain a B_I.
        assert!((v - (1.0 - 0.6f64.powi(500))).abs() < 1e-12);
        let v = run_probability(400, 3, 0.6).unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn lower_bound_domain_and_limit() {
        assert!(run_probability_lower_bound(10, 2, 0.5, 1.1).is_err());
        assert!(run_probability_lower_bound(10, 2, 0.7, 1.6).is_err());
        let far = run_probability_lower_bound(5000, 3, 0.6, 1.1).unwrap();
        assert!((far - 1.0).abs() < 1e-12);
        let v = run_probability_lower_bound(200, 3, 0.6, 1.1).unwrap();
        assert!((0.0..1.0).contains(&v));
    }

    #[test]
    fn root_lies_in_interval_and_solves_characteristic_equation() {
        for &p in &[0.51, 0.6, 0.75, 0.99] {
            for l in 1..10u64 {
                let x = uspensky_root(l, p).unwrap();
                assert!(x >= 1.0 && x < 1.0 + 1.0 / l as f64);
                let c = p * (1.0 - p).powi(l as i32);
                assert!((1.0 - x + c * x.powi(l as i32 + 1)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn arbitrary_xi_can_overshoot() {
        // Away from the root the closed form is not a bound.
        let exact = run_probability(5, 2, 0.51).unwrap();
        assert!(run_probability_lower_bound(5, 2, 0.51, 1.3).unwrap() > exact);
        let at_root = run_probability_lower_bound_at_root(5, 2, 0.51).unwrap();
        assert!(at_root <= exact + 1e-12);
    }

    #[test]
    fn inputs_validation_names_parameters() {
        let bad = BoundInputs {
            delta1: -1.0,
            delta2: 0.1,
            p: 1.5,
            gamma: 0.9,
            q_u: 1.0,
            min_max_qdag: 0.0,
            max_gap: 1.0,
            xi1: 1.1,
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("delta1") && msg.contains("p must"));
    }
}
