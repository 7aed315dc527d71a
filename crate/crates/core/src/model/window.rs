//! Sliding-window token encoding.

use super::backbone::EmbeddingBackbone;
use super::tape::{Tape, Var};

/// Start offsets of the windows covering `n` tokens. A single window
/// starting at 0 when `n <= window`.
pub fn window_starts(n: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut starts = vec![0];
    let mut s = 0;
    while s + window < n {
        s += stride;
        starts.push(s);
    }
    starts
}

/// Per-token vectors for the whole sequence. Long inputs are embedded in
/// overlapping windows and positions seen by several windows get the mean.
pub fn encode_tokens(
    tape: &mut Tape,
    backbone: &dyn EmbeddingBackbone,
    tokens: &[String],
    window: usize,
    stride: usize,
) -> Vec<Var> {
    if tokens.len() <= window {
        return backbone.embed(tape, tokens);
    }
    let mut covering: Vec<Vec<Var>> = vec![Vec::new(); tokens.len()];
    for start in window_starts(tokens.len(), window, stride) {
        let end = (start + window).min(tokens.len());
        let out = backbone.embed(tape, &tokens[start..end]);
        for (pos, v) in (start..end).zip(out) {
            covering[pos].push(v);
        }
    }
    covering
        .into_iter()
        .map(|vs| if vs.len() == 1 { vs[0] } else { tape.mean(&vs) })
        .collect()
}
