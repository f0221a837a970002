//! Slot-level dynamics of the backlog/estimator chain.
//!
//! Each slot: draw the protocol coin, compute the transmission probability,
//! sample how many backlogged messages transmit, map that count to channel
//! feedback, update the estimator, then add the slot's arrivals. The backlog
//! obeys `N' = N - J + xi` exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Geometric, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::ProtocolSpec;

/// Identifies an independent, reproducible random stream.
///
/// Streams with the same `(seed, stream)` pair produce identical draws; pairs
/// differing in either component are independent ChaCha8 keystreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Stream for replication `rep` of sweep cell `cell`. Depends only on the
    /// indices, never on execution order.
    pub fn for_cell(seed: u64, cell: usize, rep: usize) -> Self {
        Self::new(seed, ((cell as u64) << 32) | rep as u64)
    }

    pub fn rng(&self) -> SimRng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(self.stream);
        SimRng(inner)
    }
}

/// Generator owned by exactly one chain.
#[derive(Debug, Clone)]
pub struct SimRng(ChaCha8Rng);

impl rand::RngCore for SimRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Distribution of the number of messages arriving in one slot. Draws are
/// i.i.d. across slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalProcess {
    Poisson { rate: f64 },
    /// A batch of `size` messages arrives with probability `prob`.
    BernoulliBatch { size: u64, prob: f64 },
    Deterministic { count: u64 },
    /// With probability `prob` a batch arrives whose size is Yule-Simon with
    /// tail index `shape > 1` (infinite variance when `shape <= 2`).
    YuleSimonBatch { prob: f64, shape: f64 },
}

impl Default for ArrivalProcess {
    fn default() -> Self {
        ArrivalProcess::Poisson { rate: 0.3 }
    }
}

impl ArrivalProcess {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ArrivalProcess::Poisson { rate } => {
                if !(rate.is_finite() && rate >= 0.0) {
                    return Err(Error::invalid("rate", format!("{rate} is not a finite rate >= 0")));
                }
            }
            ArrivalProcess::BernoulliBatch { prob, .. } => check_prob("prob", prob)?,
            ArrivalProcess::Deterministic { .. } => {}
            ArrivalProcess::YuleSimonBatch { prob, shape } => {
                check_prob("prob", prob)?;
                if !(shape.is_finite() && shape > 1.0) {
                    return Err(Error::invalid("shape", "Yule-Simon tail index must exceed 1 for a finite mean"));
                }
            }
        }
        Ok(())
    }

    /// Mean number of arrivals per slot.
    pub fn mean(&self) -> f64 {
        match *self {
            ArrivalProcess::Poisson { rate } => rate,
            ArrivalProcess::BernoulliBatch { size, prob } => size as f64 * prob,
            ArrivalProcess::Deterministic { count } => count as f64,
            ArrivalProcess::YuleSimonBatch { prob, shape } => prob * shape / (shape - 1.0),
        }
    }

    /// Same family with its mean rescaled to `rate`.
    pub fn with_mean(&self, rate: f64) -> Result<Self> {
        let out = match *self {
            ArrivalProcess::Poisson { .. } => ArrivalProcess::Poisson { rate },
            ArrivalProcess::BernoulliBatch { size, .. } if size > 0 => ArrivalProcess::BernoulliBatch {
                size,
                prob: rate / size as f64,
            },
            ArrivalProcess::YuleSimonBatch { shape, .. } => ArrivalProcess::YuleSimonBatch {
                prob: rate * (shape - 1.0) / shape,
                shape,
            },
            _ => {
                return Err(Error::invalid(
                    "arrivals",
                    "arrival rate cannot be swept for this arrival process",
                ))
            }
        };
        out.validate()?;
        Ok(out)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            ArrivalProcess::Poisson { rate } => {
                if rate <= 0.0 {
                    0
                } else {
                    Poisson::new(rate).expect("validated rate").sample(rng) as u64
                }
            }
            ArrivalProcess::BernoulliBatch { size, prob } => {
                if rng.random_bool(prob) {
                    size
                } else {
                    0
                }
            }
            ArrivalProcess::Deterministic { count } => count,
            ArrivalProcess::YuleSimonBatch { prob, shape } => {
                if !rng.random_bool(prob) {
                    return 0;
                }
                // Geometric on {1, 2, ...} with success probability exp(-W), W ~ Exp(shape).
                let w: f64 = Exp::new(shape).expect("validated shape").sample(rng);
                let success = (-w).exp().max(f64::MIN_POSITIVE);
                1 + Geometric::new(success).expect("probability in (0, 1]").sample(rng)
            }
        }
    }
}

fn check_prob(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{p} outside [0, 1]")))
    }
}

/// One draw of the slot's arrival count.
pub fn sample_arrivals<R: Rng + ?Sized>(proc: &ArrivalProcess, rng: &mut R) -> u64 {
    proc.sample(rng)
}

/// Number of backlogged messages that transmit: `Binomial(backlog, p)`.
///
/// Small backlogs use a Bernoulli loop, small means use pmf inversion and the
/// rest go through BTPE.
pub fn transmit<R: Rng + ?Sized>(backlog: u64, p: f64, rng: &mut R) -> Result<u64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    if backlog == 0 || p == 0.0 {
        return Ok(0);
    }
    if p == 1.0 {
        return Ok(backlog);
    }
    if backlog <= 64 {
        return Ok((0..backlog).filter(|_| rng.random::<f64>() < p).count() as u64);
    }
    let n = backlog as f64;
    if n * p < 10.0 {
        return Ok(binomial_inversion(backlog, p, rng));
    }
    Ok(Binomial::new(backlog, p).expect("validated binomial").sample(rng))
}

fn binomial_inversion<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    let q = 1.0 - p;
    let ratio = p / q;
    let mut pmf = (n as f64 * q.ln()).exp();
    let mut cdf = pmf;
    let u: f64 = rng.random();
    let mut k = 0u64;
    while u > cdf && k < n {
        pmf *= ratio * (n - k) as f64 / (k + 1) as f64;
        k += 1;
        cdf += pmf;
        if pmf < f64::EPSILON * 1e-3 && cdf >= 1.0 - f64::EPSILON {
            break;
        }
    }
    k
}

/// Channel output for one slot as three symbols. Binary-feedback protocols
/// only ever see [`ChannelFeedback::binary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelFeedback {
    Empty,
    Success,
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryFeedback {
    Success,
    Failure,
}

impl BinaryFeedback {
    /// Numeric feedback `J`.
    #[inline]
    pub fn value(self) -> u8 {
        match self {
            BinaryFeedback::Success => 1,
            BinaryFeedback::Failure => 0,
        }
    }
}

impl ChannelFeedback {
    #[inline]
    pub fn binary(self) -> BinaryFeedback {
        match self {
            ChannelFeedback::Success => BinaryFeedback::Success,
            ChannelFeedback::Empty | ChannelFeedback::Collision => BinaryFeedback::Failure,
        }
    }
}

/// Maps the number of transmitting messages to the channel output.
#[inline]
pub fn feedback(transmitted: u64) -> ChannelFeedback {
    match transmitted {
        0 => ChannelFeedback::Empty,
        1 => ChannelFeedback::Success,
        _ => ChannelFeedback::Collision,
    }
}

/// Outcome of the protocol's fair coin `I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coin {
    /// `I = 0`: the scaled-down probability branch.
    Zero,
    /// `I = 1`: the full `1/S` branch.
    One,
}

impl Coin {
    #[inline]
    pub fn value(self) -> u8 {
        match self {
            Coin::Zero => 0,
            Coin::One => 1,
        }
    }
}

/// Fair coin, `P(I = 1) = 1/2`.
#[inline]
pub fn draw_coin<R: Rng + ?Sized>(rng: &mut R) -> Coin {
    if rng.random::<bool>() {
        Coin::One
    } else {
        Coin::Zero
    }
}

/// Point of the Markov chain at the start of slot `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub slot: u64,
    pub backlog: u64,
    /// Protocol estimator `S >= 1`. Ternary baselines store `1/p` here.
    pub estimator: f64,
    pub last_feedback: BinaryFeedback,
    pub last_coin: Coin,
}

impl SystemState {
    pub fn new(backlog: u64, estimator: f64) -> Result<Self> {
        if !(estimator >= 1.0 && estimator.is_finite()) {
            return Err(Error::EstimatorBelowOne(estimator));
        }
        Ok(Self {
            slot: 0,
            backlog,
            estimator,
            last_feedback: BinaryFeedback::Failure,
            last_coin: Coin::Zero,
        })
    }
}

/// Everything drawn during one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub coin: Coin,
    pub prob: f64,
    pub transmitted: u64,
    pub feedback: ChannelFeedback,
    pub arrivals: u64,
}

impl SlotOutcome {
    #[inline]
    pub fn success(&self) -> bool {
        self.feedback == ChannelFeedback::Success
    }
}

/// Advances the chain by one slot.
pub fn step<R: Rng + ?Sized>(
    state: &SystemState,
    spec: &ProtocolSpec,
    proc: &ArrivalProcess,
    rng: &mut R,
) -> Result<(SystemState, SlotOutcome)> {
    let coin = draw_coin(rng);
    let prob = spec.probability(state.estimator, coin)?;
    let transmitted = transmit(state.backlog, prob, rng)?;
    let fb = feedback(transmitted);
    let estimator = spec.update(state.estimator, fb, coin);
    // Arrivals during slot n join the backlog at n + 1.
    let arrivals = sample_arrivals(proc, rng);
    let served = u64::from(fb.binary().value());
    let next = SystemState {
        slot: state.slot + 1,
        backlog: state.backlog - served + arrivals,
        estimator,
        last_feedback: fb.binary(),
        last_coin: coin,
    };
    Ok((
        next,
        SlotOutcome {
            coin,
            prob,
            transmitted,
            feedback: fb,
            arrivals,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::A1Params;

    fn rng(stream: u64) -> SimRng {
        RngStream::new(2024, stream).rng()
    }

    fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
        let mut c = 1.0;
        for i in 0..k {
            c *= (n - i) as f64 / (i + 1) as f64;
        }
        c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    }

    #[test]
    fn deterministic_arrivals_are_constant() {
        let mut r = rng(0);
        let proc = ArrivalProcess::Deterministic { count: 2 };
        assert!((0..1000).all(|_| sample_arrivals(&proc, &mut r) == 2));
    }

    #[test]
    fn zero_probability_batch_never_arrives() {
        let mut r = rng(1);
        let proc = ArrivalProcess::BernoulliBatch { size: 1, prob: 0.0 };
        assert!((0..1000).all(|_| sample_arrivals(&proc, &mut r) == 0));
    }

    #[test]
    fn poisson_sample_mean() {
        let mut r = rng(2);
        let proc = ArrivalProcess::Poisson { rate: 0.3 };
        let n = 1_000_000;
        let total: u64 = (0..n).map(|_| sample_arrivals(&proc, &mut r)).sum();
        let mean = total as f64 / n as f64;
        let band = 3.0 * (0.3f64 / n as f64).sqrt();
        assert!((mean - 0.3).abs() < band.max(0.002), "mean {mean}");
    }

    #[test]
    fn yule_simon_mean_matches_formula() {
        let proc = ArrivalProcess::YuleSimonBatch { prob: 0.1, shape: 3.0 };
        assert!((proc.mean() - 0.15).abs() < 1e-15);
        let mut r = rng(3);
        let n = 400_000;
        let total: u64 = (0..n).map(|_| sample_arrivals(&proc, &mut r)).sum();
        let mean = total as f64 / n as f64;
        // Batch variance is 3 for shape 3.
        let sd = ((0.1 * (3.0 + 1.5f64.powi(2)) - 0.15f64.powi(2)) / n as f64).sqrt();
        assert!((mean - 0.15).abs() < 4.0 * sd, "mean {mean}");
    }

    #[test]
    fn with_mean_rescales_family() {
        let p = ArrivalProcess::BernoulliBatch { size: 4, prob: 0.01 };
        assert!((p.with_mean(0.2).unwrap().mean() - 0.2).abs() < 1e-15);
        assert!(ArrivalProcess::Deterministic { count: 1 }.with_mean(0.2).is_err());
    }

    #[test]
    fn transmit_edges() {
        let mut r = rng(4);
        assert_eq!(transmit(0, 0.5, &mut r).unwrap(), 0);
        assert_eq!(transmit(1, 1.0, &mut r).unwrap(), 1);
        assert_eq!(transmit(10, 0.0, &mut r).unwrap(), 0);
        assert_eq!(transmit(3, 1.5, &mut r), Err(Error::ProbabilityOutOfRange(1.5)));
        assert!(transmit(3, -0.1, &mut r).is_err());
    }

    fn check_pmf(n: u64, p: f64, draws: usize, stream: u64) {
        let mut r = rng(stream);
        let mut counts = vec![0usize; n as usize + 1];
        for _ in 0..draws {
            counts[transmit(n, p, &mut r).unwrap() as usize] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let pk = binomial_pmf(n, k as u64, p);
            let expected = pk * draws as f64;
            let sd = (draws as f64 * pk * (1.0 - pk)).sqrt();
            if expected < 1.0 {
                continue;
            }
            assert!(
                (c as f64 - expected).abs() <= 3.0 * sd + 1.0,
                "n={n} p={p} k={k}: {c} vs {expected}"
            );
        }
    }

    #[test]
    fn transmit_matches_binomial_pmf_small() {
        check_pmf(3, 0.5, 1_000_000, 5);
    }

    #[test]
    fn transmit_matches_binomial_pmf_inversion_branch() {
        check_pmf(500, 0.01, 400_000, 6);
    }

    #[test]
    fn transmit_matches_binomial_pmf_btpe_branch() {
        check_pmf(200, 0.2, 400_000, 7);
    }

    #[test]
    fn feedback_mapping() {
        assert_eq!(feedback(1), ChannelFeedback::Success);
        assert_eq!(feedback(1).binary(), BinaryFeedback::Success);
        assert_eq!(feedback(0), ChannelFeedback::Empty);
        assert_eq!(feedback(0).binary(), BinaryFeedback::Failure);
        assert_eq!(feedback(5), ChannelFeedback::Collision);
        assert_eq!(feedback(5).binary(), BinaryFeedback::Failure);
    }

    #[test]
    fn coin_is_fair_and_reproducible() {
        let a: Vec<Coin> = {
            let mut r = rng(8);
            (0..64).map(|_| draw_coin(&mut r)).collect()
        };
        let b: Vec<Coin> = {
            let mut r = rng(8);
            (0..64).map(|_| draw_coin(&mut r)).collect()
        };
        assert_eq!(a, b);

        let n = 1_000_000;
        let mut r1 = rng(9);
        let mut r2 = rng(10);
        let (mut s1, mut s2, mut s12) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..n {
            let x = f64::from(draw_coin(&mut r1).value());
            let y = f64::from(draw_coin(&mut r2).value());
            s1 += x;
            s2 += y;
            s12 += x * y;
        }
        let nf = n as f64;
        let mean = s1 / nf;
        assert!((0.4985..=0.5015).contains(&mean), "mean {mean}");
        let cov = s12 / nf - (s1 / nf) * (s2 / nf);
        let rho = cov / (0.25f64);
        assert!(rho.abs() < 0.005, "rho {rho}");
    }

    #[test]
    fn empty_system_stays_empty() {
        let spec = ProtocolSpec::A1(A1Params::new(3.0, 5.0, 0.9, 1.0).unwrap());
        let proc = ArrivalProcess::Deterministic { count: 0 };
        let mut r = rng(11);
        let s0 = SystemState::new(0, 7.0).unwrap();
        let (s1, out) = step(&s0, &spec, &proc, &mut r).unwrap();
        assert_eq!(s1.backlog, 0);
        assert_eq!(out.feedback.binary(), BinaryFeedback::Failure);
        assert_eq!(s1.slot, 1);
    }

    #[test]
    fn certain_transmission_drains_single_message() {
        // S = 1 and coin I = 1 gives p = 1; repeat until that coin shows up.
        let spec = ProtocolSpec::A1(A1Params::new(3.0, 5.0, 0.9, 1.0).unwrap());
        let proc = ArrivalProcess::Deterministic { count: 0 };
        let mut r = rng(12);
        for _ in 0..100 {
            let s0 = SystemState::new(1, 1.0).unwrap();
            let (s1, out) = step(&s0, &spec, &proc, &mut r).unwrap();
            if out.coin == Coin::One {
                assert_eq!(out.prob, 1.0);
                assert!(out.success());
                assert_eq!(s1.backlog, 0);
                return;
            }
        }
        panic!("coin never showed 1");
    }

    #[test]
    fn state_rejects_estimator_below_one() {
        assert!(SystemState::new(3, 0.5).is_err());
    }
}
