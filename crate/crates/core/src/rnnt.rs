//! Transducer negative log-likelihood over the `(T, U+1, V)` output lattice.
//!
//! Lattice topology: blank is token 0; emitting blank at `(t, u)` advances
//! to `(t+1, u)`, emitting the next target label advances to `(t, u+1)`. An
//! alignment starts at `(0, 0)` and ends by emitting blank at `(T-1, U)`, so
//! there are `C(T-1+U, U)` alignments.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Error, Result};
use crate::math::{self, log_add_exp};
use crate::numkit::{Graph, Tensor, Var};

pub const BLANK: usize = 0;

/// Largest `T + U` that [`brute_force_loss`] agrees to enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Log-probabilities of a single utterance plus its target labels.
#[derive(Debug, Clone)]
pub struct EmissionLattice {
    log_probs: Tensor,
    target: Vec<usize>,
}

impl EmissionLattice {
    /// Validates shape `[T, U+1, V]`, label range and row normalization.
    pub fn new(log_probs: Tensor, target: Vec<usize>) -> Result<Self> {
        let &[t, u1, v] = log_probs.shape() else {
            return Err(Error::Shape {
                op: "EmissionLattice",
                left: log_probs.shape().to_vec(),
                right: vec![target.len() + 1],
            });
        };
        if u1 != target.len() + 1 {
            return Err(Error::Shape {
                op: "EmissionLattice",
                left: log_probs.shape().to_vec(),
                right: vec![target.len() + 1],
            });
        }
        if t == 0 {
            return Err(contract("lattice has no frames"));
        }
        if let Some(&bad) = target.iter().find(|&&y| y == BLANK || y >= v) {
            return Err(contract(alloc::format!("target label {bad} outside 1..{v}")));
        }
        if !log_probs.all_finite() {
            return Err(contract("lattice contains non-finite entries"));
        }
        for row in log_probs.data().chunks(v) {
            let z: f64 = row.iter().map(|&x| math::exp(x)).sum();
            if (z - 1.0).abs() > 1e-10 {
                return Err(contract("lattice row is not normalized"));
            }
        }
        Ok(Self { log_probs, target })
    }

    /// Builds a lattice by log-softmaxing raw logits of shape `[T, U+1, V]`.
    pub fn from_logits(logits: &Tensor, target: Vec<usize>) -> Result<Self> {
        Self::new(logits.log_softmax()?, target)
    }

    pub fn frames(&self) -> usize {
        self.log_probs.shape()[0]
    }

    pub fn vocab(&self) -> usize {
        self.log_probs.shape()[2]
    }

    pub fn target(&self) -> &[usize] {
        &self.target
    }

    pub fn log_probs(&self) -> &Tensor {
        &self.log_probs
    }

    fn at(&self, t: usize, u: usize, k: usize) -> f64 {
        let u1 = self.target.len() + 1;
        let v = self.vocab();
        self.log_probs.data()[(t * u1 + u) * v + k]
    }
}

struct Dp {
    nll: f64,
    grad: Vec<f64>,
}

/// α/β recursions in log space; returns the NLL and `d NLL / d log_probs`.
fn forward_backward(lp: &[f64], frames: usize, vocab: usize, target: &[usize]) -> Result<Dp> {
    let u1 = target.len() + 1;
    if frames == 0 {
        return Err(contract("transducer loss needs at least one frame"));
    }
    if lp.len() != frames * u1 * vocab {
        return Err(Error::Shape {
            op: "transducer_loss",
            left: vec![lp.len()],
            right: vec![frames, u1, vocab],
        });
    }
    if let Some(&bad) = target.iter().find(|&&y| y == BLANK || y >= vocab) {
        return Err(contract(alloc::format!("target label {bad} outside 1..{vocab}")));
    }
    if lp.iter().any(|x| !x.is_finite()) {
        return Err(contract("lattice contains non-finite entries"));
    }
    let at = |t: usize, u: usize, k: usize| lp[(t * u1 + u) * vocab + k];
    let idx = |t: usize, u: usize| t * u1 + u;

    let mut alpha = vec![f64::NEG_INFINITY; frames * u1];
    alpha[0] = 0.0;
    for t in 0..frames {
        for u in 0..u1 {
            if t == 0 && u == 0 {
                continue;
            }
            let mut a = f64::NEG_INFINITY;
            if t > 0 {
                a = alpha[idx(t - 1, u)] + at(t - 1, u, BLANK);
            }
            if u > 0 {
                a = log_add_exp(a, alpha[idx(t, u - 1)] + at(t, u - 1, target[u - 1]));
            }
            alpha[idx(t, u)] = a;
        }
    }
    let last = frames - 1;
    let u_max = u1 - 1;
    let log_z = alpha[idx(last, u_max)] + at(last, u_max, BLANK);

    let mut beta = vec![f64::NEG_INFINITY; frames * u1];
    for t in (0..frames).rev() {
        for u in (0..u1).rev() {
            let b = if t == last && u == u_max {
                at(t, u, BLANK)
            } else {
                let mut b = f64::NEG_INFINITY;
                if t < last {
                    b = beta[idx(t + 1, u)] + at(t, u, BLANK);
                }
                if u < u_max {
                    b = log_add_exp(b, beta[idx(t, u + 1)] + at(t, u, target[u]));
                }
                b
            };
            beta[idx(t, u)] = b;
        }
    }

    let mut grad = vec![0.0; lp.len()];
    for t in 0..frames {
        for u in 0..u1 {
            let a = alpha[idx(t, u)];
            let next_blank = if t == last && u == u_max {
                0.0
            } else if t < last {
                beta[idx(t + 1, u)]
            } else {
                f64::NEG_INFINITY
            };
            grad[idx(t, u) * vocab + BLANK] = -math::exp(a + at(t, u, BLANK) + next_blank - log_z);
            if u < u_max {
                let y = target[u];
                grad[idx(t, u) * vocab + y] =
                    -math::exp(a + at(t, u, y) + beta[idx(t, u + 1)] - log_z);
            }
        }
    }
    Ok(Dp { nll: -log_z, grad })
}

/// Negative log-likelihood of the lattice's target.
pub fn loss(lattice: &EmissionLattice) -> Result<f64> {
    let (t, v) = (lattice.frames(), lattice.vocab());
    Ok(forward_backward(lattice.log_probs.data(), t, v, &lattice.target)?.nll)
}

/// Differentiable transducer loss on a recorded graph.
///
/// `log_probs` holds log-softmaxed joiner outputs laid out as
/// `[frames·(U+1), V]` (or `[frames, U+1, V]`).
pub fn transducer_loss<'g>(
    graph: &'g Graph,
    log_probs: Var<'g>,
    frames: usize,
    target: &[usize],
) -> Result<Var<'g>> {
    let value = log_probs.value();
    let vocab = *value.shape().last().unwrap_or(&0);
    let dp = forward_backward(value.data(), frames, vocab, target)?;
    graph.custom_scalar(log_probs, dp.nll, dp.grad)
}

/// Loss of a flat `[frames·(U+1), V]` log-probability matrix, without
/// normalization checks.
pub fn flat_loss(log_probs: &Tensor, frames: usize, target: &[usize]) -> Result<f64> {
    let vocab = *log_probs.shape().last().unwrap_or(&0);
    Ok(forward_backward(log_probs.data(), frames, vocab, target)?.nll)
}

/// Number of distinct alignments for `frames` frames and `labels` labels.
pub fn alignment_count(frames: usize, labels: usize) -> u64 {
    if frames == 0 {
        return 0;
    }
    let n = (frames - 1 + labels) as u64;
    let k = labels as u64;
    let mut c: u64 = 1;
    for i in 0..k.min(n - k) {
        c = c * (n - i) / (i + 1);
    }
    c
}

/// Exhaustive enumeration of every alignment; an oracle for [`loss`].
pub fn brute_force_loss(lattice: &EmissionLattice) -> Result<f64> {
    let t = lattice.frames();
    let u = lattice.target.len();
    if t + u > BRUTE_FORCE_LIMIT {
        return Err(contract(alloc::format!(
            "brute force refuses T+U = {} > {BRUTE_FORCE_LIMIT}",
            t + u
        )));
    }
    let mut paths = Vec::new();
    enumerate(lattice, 0, 0, 0.0, &mut paths);
    let total = paths.iter().fold(f64::NEG_INFINITY, |acc, &p| log_add_exp(acc, p));
    Ok(-total)
}

/// Log-probabilities of all complete alignments, in enumeration order.
pub fn enumerate_alignments(lattice: &EmissionLattice) -> Vec<f64> {
    let mut paths = Vec::new();
    enumerate(lattice, 0, 0, 0.0, &mut paths);
    paths
}

fn enumerate(l: &EmissionLattice, t: usize, u: usize, score: f64, out: &mut Vec<f64>) {
    let frames = l.frames();
    let u_max = l.target.len();
    if t == frames - 1 && u == u_max {
        out.push(score + l.at(t, u, BLANK));
        return;
    }
    if t < frames - 1 {
        enumerate(l, t + 1, u, score + l.at(t, u, BLANK), out);
    }
    if u < u_max {
        enumerate(l, t, u + 1, score + l.at(t, u, l.target[u]), out);
    }
}
