//! Pointer-network decoder step.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::gru::GruCell;
use super::params::ParamStore;
use super::tape::{softmax, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct Decoder {
    pub cell: GruCell,
}

/// Result of one decoding step over span `(i, j)` (1-based, inclusive).
#[derive(Debug, Clone)]
pub struct PointerStep {
    pub hidden: Var,
    /// Scores `h_t · e_u` for `u = i..j−1`.
    pub scores: Var,
    pub probs: Vec<f64>,
    /// Argmax split position, `i <= k < j`.
    pub split_at: usize,
}

impl Decoder {
    pub fn register(store: &mut ParamStore, d_hidden: usize, init: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let cell = GruCell::register(store, "decoder", d_hidden, d_hidden, init, rng)?;
        Ok(Decoder { cell })
    }

    pub fn bind(store: &ParamStore, d_hidden: usize) -> Result<Self> {
        Ok(Decoder {
            cell: GruCell::bind(store, "decoder", d_hidden, d_hidden)?,
        })
    }

    /// Advances the decoder on `span_repr` and points at a split of `span`.
    pub fn step(
        &self,
        tape: &mut Tape,
        h_prev: Var,
        span_repr: Var,
        edus: &[Var],
        span: (usize, usize),
    ) -> Result<PointerStep> {
        let hidden = self.cell.step(tape, span_repr, h_prev);
        let (scores, probs, split_at) = pointer_scores(tape, hidden, edus, span)?;
        Ok(PointerStep {
            hidden,
            scores,
            probs,
            split_at,
        })
    }
}

/// Dot-product attention of `h` over the split candidates of `span`.
pub fn pointer_scores(
    tape: &mut Tape,
    h: Var,
    edus: &[Var],
    span: (usize, usize),
) -> Result<(Var, Vec<f64>, usize)> {
    let (i, j) = span;
    if !(i >= 1 && i < j && j <= edus.len()) {
        return Err(Error::Contract(format!(
            "pointer step needs 1 <= i < j <= {}, got ({i}, {j})",
            edus.len()
        )));
    }
    let parts: Vec<Var> = (i..j).map(|u| tape.dot(h, edus[u - 1])).collect();
    let scores = tape.concat(&parts);
    let probs = softmax(tape.value(scores));
    let split_at = i + super::tape::argmax(&probs);
    Ok((scores, probs, split_at))
}

/// Mean of `e_i..e_j` (1-based, inclusive).
pub fn span_mean(tape: &mut Tape, edus: &[Var], span: (usize, usize)) -> Var {
    tape.mean(&edus[span.0 - 1..span.1])
}
