//! Hierarchical EDU encoder.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::treebank::Document;

use super::gru::GruCell;
use super::params::{Init, ParamId, ParamStore};
use super::tape::{Tape, Var};

/// Tape handles for one encoded document.
#[derive(Debug, Clone)]
pub struct EncodedDocument {
    /// Backbone token vectors.
    pub tokens: Vec<Var>,
    /// Mean token vector per EDU.
    pub edu_means: Vec<Var>,
    /// Context-aware EDU vectors from the bidirectional layer.
    pub context: Vec<Var>,
    /// Final EDU representations `e_1..e_m`.
    pub edus: Vec<Var>,
    /// `[forward final; backward final]`, the decoder's initial state.
    pub final_state: Var,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    d_emb: usize,
    d_hidden: usize,
    layers: Vec<(GruCell, GruCell)>,
    w_e: ParamId,
    b_e: ParamId,
}

impl Encoder {
    pub fn register(
        store: &mut ParamStore,
        d_emb: usize,
        d_hidden: usize,
        n_layers: usize,
        init: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let half = d_hidden / 2;
        for l in 0..n_layers {
            let input = if l == 0 { d_emb } else { d_hidden };
            GruCell::register(store, &format!("encoder.{l}.fwd"), input, half, init, rng)?;
            GruCell::register(store, &format!("encoder.{l}.bwd"), input, half, init, rng)?;
        }
        store.register("encoder.w_e", &[d_hidden, d_hidden + 2 * d_emb], Init::Uniform(init), rng)?;
        store.register("encoder.b_e", &[d_hidden], Init::Zeros, rng)?;
        Self::bind(store, d_emb, d_hidden, n_layers)
    }

    pub fn bind(store: &ParamStore, d_emb: usize, d_hidden: usize, n_layers: usize) -> Result<Self> {
        let half = d_hidden / 2;
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let input = if l == 0 { d_emb } else { d_hidden };
            layers.push((
                GruCell::bind(store, &format!("encoder.{l}.fwd"), input, half)?,
                GruCell::bind(store, &format!("encoder.{l}.bwd"), input, half)?,
            ));
        }
        let w_e = store.id("encoder.w_e")?;
        let b_e = store.id("encoder.b_e")?;
        store.expect_shape(w_e, &[d_hidden, d_hidden + 2 * d_emb])?;
        store.expect_shape(b_e, &[d_hidden])?;
        Ok(Encoder {
            d_emb,
            d_hidden,
            layers,
            w_e,
            b_e,
        })
    }

    /// Builds `E` from token vectors aligned with `doc.tokens`.
    pub fn encode(&self, tape: &mut Tape, doc: &Document, tokens: Vec<Var>) -> Result<EncodedDocument> {
        if tokens.len() != doc.tokens.len() {
            return Err(Error::Shape(format!(
                "{} token vectors for {} tokens",
                tokens.len(),
                doc.tokens.len()
            )));
        }
        if let Some(bad) = tokens.iter().find(|v| tape.dim(**v) != self.d_emb) {
            return Err(Error::Shape(format!(
                "token vector of length {}, expected {}",
                tape.dim(*bad),
                self.d_emb
            )));
        }
        let mut edu_means = Vec::with_capacity(doc.edus.len());
        for edu in &doc.edus {
            if edu.token_span.is_empty() || edu.token_span.end > tokens.len() {
                return Err(Error::Shape(format!("EDU {} has a bad token span", edu.index)));
            }
            edu_means.push(tape.mean(&tokens[edu.token_span.clone()]));
        }

        let half = self.d_hidden / 2;
        let zero = tape.input(vec![0.0; half]);
        let mut xs = edu_means.clone();
        let mut finals = (zero, zero);
        for (fwd, bwd) in &self.layers {
            let f = fwd.run(tape, &xs, zero, false);
            let b = bwd.run(tape, &xs, zero, true);
            finals = (*f.last().unwrap(), b[0]);
            xs = f.iter().zip(&b).map(|(f, b)| tape.concat(&[*f, *b])).collect();
        }
        let context = xs;
        let final_state = tape.concat(&[finals.0, finals.1]);

        let edus = doc
            .edus
            .iter()
            .zip(&context)
            .map(|(edu, v)| {
                let first = tokens[edu.token_span.start];
                let last = tokens[edu.token_span.end - 1];
                let x = tape.concat(&[*v, first, last]);
                tape.linear(self.w_e, self.b_e, x)
            })
            .collect();
        Ok(EncodedDocument {
            tokens,
            edu_means,
            context,
            edus,
            final_state,
        })
    }
}
