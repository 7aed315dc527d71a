//! Bi-affine joint-label classifier.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::params::{Init, ParamId, ParamStore};
use super::tape::{softmax, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct Classifier {
    pub d_in: usize,
    pub d_label: usize,
    pub labels: usize,
    u1: ParamId,
    u2: ParamId,
    w_l: ParamId,
    w_r: ParamId,
    w_lr: ParamId,
    b: ParamId,
}

impl Classifier {
    pub fn register(
        store: &mut ParamStore,
        d_in: usize,
        d_label: usize,
        labels: usize,
        init: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        store.register("classifier.u1", &[d_label, d_in], Init::Uniform(init), rng)?;
        store.register("classifier.u2", &[d_label, d_in], Init::Uniform(init), rng)?;
        store.register("classifier.w_l", &[labels, d_label], Init::Uniform(init), rng)?;
        store.register("classifier.w_r", &[labels, d_label], Init::Uniform(init), rng)?;
        store.register("classifier.w_lr", &[d_label, d_label, labels], Init::Uniform(init), rng)?;
        store.register("classifier.b", &[labels], Init::Zeros, rng)?;
        Self::bind(store, d_in, d_label, labels)
    }

    pub fn bind(store: &ParamStore, d_in: usize, d_label: usize, labels: usize) -> Result<Self> {
        let c = Classifier {
            d_in,
            d_label,
            labels,
            u1: store.id("classifier.u1")?,
            u2: store.id("classifier.u2")?,
            w_l: store.id("classifier.w_l")?,
            w_r: store.id("classifier.w_r")?,
            w_lr: store.id("classifier.w_lr")?,
            b: store.id("classifier.b")?,
        };
        store.expect_shape(c.u1, &[d_label, d_in])?;
        store.expect_shape(c.u2, &[d_label, d_in])?;
        store.expect_shape(c.w_l, &[labels, d_label])?;
        store.expect_shape(c.w_r, &[labels, d_label])?;
        store.expect_shape(c.w_lr, &[d_label, d_label, labels])?;
        store.expect_shape(c.b, &[labels])?;
        Ok(c)
    }

    /// Label logits for a split with left span vector `left` and right
    /// span vector `right`.
    pub fn logits(&self, tape: &mut Tape, left: Var, right: Var) -> Result<Var> {
        for v in [left, right] {
            if tape.dim(v) != self.d_in {
                return Err(Error::Shape(format!(
                    "classifier input of length {}, expected {}",
                    tape.dim(v),
                    self.d_in
                )));
            }
        }
        let l = tape.matvec(self.u1, left);
        let l = tape.elu(l);
        let r = tape.matvec(self.u2, right);
        let r = tape.elu(r);
        let a = tape.matvec(self.w_l, l);
        let bi = tape.bilinear(self.w_lr, l, r);
        let c = tape.matvec(self.w_r, r);
        let s = tape.sum(&[a, bi, c]);
        Ok(tape.add_bias(s, self.b))
    }

    /// Probability vector over joint labels.
    pub fn classify(&self, tape: &mut Tape, left: Var, right: Var) -> Result<Vec<f64>> {
        let logits = self.logits(tape, left, right)?;
        Ok(softmax(tape.value(logits)))
    }
}
